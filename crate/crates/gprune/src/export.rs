//! Deployment forms of a pruned layer: per-group weight blocks glued
//! together by channel permutations, and a compressed sparse row form over
//! the retained kernels. Both reassemble to the masked dense weights by
//! pure copying, so reconstruction is bit-exact.

use crate::conv::{dense_forward, FeatureMap};
use crate::error::{Error, Result};
use crate::model::{GroupCount, Permutation, PermutationPair, WeightTensor};
use crate::pruner::MaskPattern;

/// A layer restructured into `g` independent weight blocks.
///
/// Both stored permutations gather: grouped input channel `c` reads original
/// input channel `in_perm[c]`, and original output channel `f` reads grouped
/// output channel `out_perm[f]`. That orientation matches how a deployment
/// stack indexes into its activations, so the block weights can be used
/// without further shuffling.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedLayerExport {
    groups: usize,
    block_c_out: usize,
    block_c_in: usize,
    k_h: usize,
    k_w: usize,
    in_perm: Permutation,
    out_perm: Permutation,
    blocks: Vec<WeightTensor>,
}

impl GroupedLayerExport {
    pub fn from_parts(
        in_perm: Permutation,
        out_perm: Permutation,
        blocks: Vec<WeightTensor>,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Shape("a grouped export needs at least one block".into()));
        }
        let (bf, bc, kh, kw) = (
            blocks[0].c_out(),
            blocks[0].c_in(),
            blocks[0].k_h(),
            blocks[0].k_w(),
        );
        for (i, b) in blocks.iter().enumerate() {
            if (b.c_out(), b.c_in(), b.k_h(), b.k_w()) != (bf, bc, kh, kw) {
                return Err(Error::Shape(format!(
                    "block {i} has shape ({}, {}, {}, {}), expected ({bf}, {bc}, {kh}, {kw})",
                    b.c_out(),
                    b.c_in(),
                    b.k_h(),
                    b.k_w()
                )));
            }
        }
        let g = blocks.len();
        if out_perm.len() != g * bf || in_perm.len() != g * bc {
            return Err(Error::Shape(format!(
                "permutations of lengths ({}, {}) do not match {g} blocks of ({bf}, {bc}) channels",
                out_perm.len(),
                in_perm.len()
            )));
        }
        Ok(GroupedLayerExport {
            groups: g,
            block_c_out: bf,
            block_c_in: bc,
            k_h: kh,
            k_w: kw,
            in_perm,
            out_perm,
            blocks,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn block_c_out(&self) -> usize {
        self.block_c_out
    }

    pub fn block_c_in(&self) -> usize {
        self.block_c_in
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    pub fn in_perm(&self) -> &Permutation {
        &self.in_perm
    }

    pub fn out_perm(&self) -> &Permutation {
        &self.out_perm
    }

    pub fn blocks(&self) -> &[WeightTensor] {
        &self.blocks
    }

    /// Rebuilds the masked dense weights the export came from.
    ///
    /// Every value is copied, never recomputed, so the result is bit-exact:
    /// block entries land at their original coordinates and everything else
    /// is zero.
    pub fn reassemble(&self) -> WeightTensor {
        let c_out = self.groups * self.block_c_out;
        let c_in = self.groups * self.block_c_in;
        let ksize = self.k_h * self.k_w;
        let mut data = vec![0.0; c_out * c_in * ksize];
        // Stored out_perm maps original position -> grouped position, so the
        // grouped row `f` lives at original row `inverse(out_perm)[f]`.
        let solver_out = self.out_perm.inverse();
        for (k, block) in self.blocks.iter().enumerate() {
            for bf in 0..self.block_c_out {
                let f = k * self.block_c_out + bf;
                let orig_f = solver_out.at(f);
                for bc in 0..self.block_c_in {
                    let c = k * self.block_c_in + bc;
                    let orig_c = self.in_perm.at(c);
                    let dst = (orig_f * c_in + orig_c) * ksize;
                    data[dst..dst + ksize].copy_from_slice(block.kernel(bf, bc));
                }
            }
        }
        WeightTensor::new(c_out, c_in, self.k_h, self.k_w, data)
            .expect("copied values from a valid tensor stay valid")
    }
}

/// Slices the permuted weights into diagonal blocks.
///
/// `perms` is the solver's pair: permuted position `(f, c)` holds original
/// kernel `(out_perm[f], in_perm[c])`. The export stores the input gather
/// unchanged and the inverse of the output side, which is the direction a
/// forward pass needs.
pub fn export_grouped(
    w: &WeightTensor,
    perms: &PermutationPair,
    groups: GroupCount,
) -> Result<GroupedLayerExport> {
    groups.check_divides(w.c_out(), "output")?;
    groups.check_divides(w.c_in(), "input")?;
    let p = w.permuted(perms)?;
    let g = groups.get();
    let bf = w.c_out() / g;
    let bc = w.c_in() / g;
    let ksize = w.k_h() * w.k_w();
    let mut blocks = Vec::with_capacity(g);
    for k in 0..g {
        let mut data = Vec::with_capacity(bf * bc * ksize);
        for f in k * bf..(k + 1) * bf {
            for c in k * bc..(k + 1) * bc {
                data.extend_from_slice(p.kernel(f, c));
            }
        }
        blocks.push(WeightTensor::new(bf, bc, w.k_h(), w.k_w(), data)?);
    }
    GroupedLayerExport::from_parts(perms.in_perm.clone(), perms.out_perm.inverse(), blocks)
}

/// Runs a grouped export: gather input channels, convolve each group with
/// its block, concatenate, and gather the outputs back into original order.
pub fn grouped_forward(
    x: &FeatureMap,
    e: &GroupedLayerExport,
    padding: usize,
) -> Result<FeatureMap> {
    if x.channels() != e.groups * e.block_c_in {
        return Err(Error::Shape(format!(
            "input has {} channels but the export expects {}",
            x.channels(),
            e.groups * e.block_c_in
        )));
    }
    let gathered = x.gather_channels(e.in_perm.as_slice())?;
    let mut grouped_out: Vec<FeatureMap> = Vec::with_capacity(e.groups);
    for (k, block) in e.blocks.iter().enumerate() {
        let channels: Vec<usize> = (k * e.block_c_in..(k + 1) * e.block_c_in).collect();
        let sub = gathered.gather_channels(&channels)?;
        grouped_out.push(dense_forward(&sub, block, padding)?);
    }
    let height = grouped_out[0].height();
    let width = grouped_out[0].width();
    let plane = height * width;
    let mut stacked = Vec::with_capacity(e.groups * e.block_c_out * plane);
    for y in &grouped_out {
        stacked.extend_from_slice(y.values());
    }
    let concat = FeatureMap::new(e.groups * e.block_c_out, height, width, stacked)?;
    concat.gather_channels(e.out_perm.as_slice())
}

// ---------------------------------------------------------------------------
// Sparse form
// ---------------------------------------------------------------------------

/// Retained kernels in compressed sparse row form over the original
/// `(c_out, c_in)` kernel grid. Row `f` spans
/// `col_indices[row_offsets[f]..row_offsets[f + 1]]` with strictly
/// increasing column indices, and each retained kernel keeps its
/// `k_h * k_w` values contiguously in `kernels`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayerExport {
    rows: usize,
    cols: usize,
    k_h: usize,
    k_w: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    kernels: Vec<f64>,
}

impl SparseLayerExport {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn kernel_values(&self) -> &[f64] {
        &self.kernels
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Rebuilds the masked dense weights by pure copying; dropped kernels
    /// come back as zeros.
    pub fn reassemble(&self) -> WeightTensor {
        let ksize = self.k_h * self.k_w;
        let mut data = vec![0.0; self.rows * self.cols * ksize];
        for f in 0..self.rows {
            for i in self.row_offsets[f]..self.row_offsets[f + 1] {
                let c = self.col_indices[i];
                let dst = (f * self.cols + c) * ksize;
                data[dst..dst + ksize].copy_from_slice(&self.kernels[i * ksize..(i + 1) * ksize]);
            }
        }
        WeightTensor::new(self.rows, self.cols, self.k_h, self.k_w, data)
            .expect("copied values from a valid tensor stay valid")
    }

    pub fn from_parts(
        rows: usize,
        cols: usize,
        k_h: usize,
        k_w: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        kernels: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(Error::Shape(
                "row offsets must have rows + 1 entries starting at 0".into(),
            ));
        }
        if *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::Shape(
                "final row offset must equal the number of stored kernels".into(),
            ));
        }
        for f in 0..rows {
            if row_offsets[f] > row_offsets[f + 1] {
                return Err(Error::Shape(format!("row offsets decrease at row {f}")));
            }
            let span = &col_indices[row_offsets[f]..row_offsets[f + 1]];
            for pair in span.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(Error::Shape(format!(
                        "column indices must strictly increase within row {f}"
                    )));
                }
            }
            if let Some(&last) = span.last() {
                if last >= cols {
                    return Err(Error::Shape(format!(
                        "column index {last} out of range in row {f}"
                    )));
                }
            }
        }
        if kernels.len() != col_indices.len() * k_h * k_w {
            return Err(Error::Shape(format!(
                "{} kernels of {}x{} values need {} numbers, got {}",
                col_indices.len(),
                k_h,
                k_w,
                col_indices.len() * k_h * k_w,
                kernels.len()
            )));
        }
        Ok(SparseLayerExport {
            rows,
            cols,
            k_h,
            k_w,
            row_offsets,
            col_indices,
            kernels,
        })
    }
}

/// Collects the kernels a mask retains into sparse row form.
///
/// With `strict` set, masks that do not describe an even block split (the
/// same number of kernels in every row and every column) are rejected.
pub fn export_sparse(w: &WeightTensor, mask: &MaskPattern, strict: bool) -> Result<SparseLayerExport> {
    if mask.rows() != w.c_out() || mask.cols() != w.c_in() {
        return Err(Error::Shape(format!(
            "mask is {}x{} but the weights have {} output and {} input channels",
            mask.rows(),
            mask.cols(),
            w.c_out(),
            w.c_in()
        )));
    }
    if strict && mask.regular_groups().is_none() {
        return Err(Error::InvalidArgument(
            "mask is not an even block split; rerun without strict mode to export it anyway".into(),
        ));
    }
    let mut row_offsets = Vec::with_capacity(w.c_out() + 1);
    let mut col_indices = Vec::new();
    let mut kernels = Vec::new();
    row_offsets.push(0);
    for f in 0..w.c_out() {
        for c in 0..w.c_in() {
            if mask.at(f, c) {
                col_indices.push(c);
                kernels.extend_from_slice(w.kernel(f, c));
            }
        }
        row_offsets.push(col_indices.len());
    }
    SparseLayerExport::from_parts(
        w.c_out(),
        w.c_in(),
        w.k_h(),
        w.k_w(),
        row_offsets,
        col_indices,
        kernels,
    )
}

/// Sparse execution for layers with 1x1 kernels: every output pixel is a
/// sparse matrix-vector product over the channels.
pub fn sparse_matvec(e: &SparseLayerExport, x: &FeatureMap) -> Result<FeatureMap> {
    if e.k_h != 1 || e.k_w != 1 {
        return Err(Error::InvalidArgument(format!(
            "sparse execution covers 1x1 kernels only, this export is {}x{}",
            e.k_h, e.k_w
        )));
    }
    if x.channels() != e.cols {
        return Err(Error::Shape(format!(
            "input has {} channels but the export expects {}",
            x.channels(),
            e.cols
        )));
    }
    let plane = x.height() * x.width();
    let mut data = vec![0.0; e.rows * plane];
    for f in 0..e.rows {
        for i in e.row_offsets[f]..e.row_offsets[f + 1] {
            let c = e.col_indices[i];
            let v = e.kernels[i];
            for p in 0..plane {
                data[f * plane + p] += v * x.values()[c * plane + p];
            }
        }
    }
    FeatureMap::new(e.rows, x.height(), x.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::masked_forward;
    use crate::model::GroupCount;
    use crate::pruner::{greedy_permutation, prune_mask, GreedyParams};

    fn pseudo(seq: &mut f64) -> f64 {
        *seq = (*seq * 167.29 + 0.437).rem_euclid(2.0) - 1.0;
        *seq
    }

    fn random_tensor(c_out: usize, c_in: usize, k: usize, seq: &mut f64) -> WeightTensor {
        let data = (0..c_out * c_in * k * k).map(|_| pseudo(seq)).collect();
        WeightTensor::new(c_out, c_in, k, k, data).unwrap()
    }

    fn random_map(c: usize, h: usize, w: usize, seq: &mut f64) -> FeatureMap {
        FeatureMap::new(c, h, w, (0..c * h * w).map(|_| pseudo(seq)).collect()).unwrap()
    }

    fn rel_err(a: &FeatureMap, b: &FeatureMap) -> f64 {
        let scale = b.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
            / scale
    }

    #[test]
    fn fully_split_export_of_a_diagonal_layer_scales_each_channel() {
        let mut data = vec![0.0; 9];
        for i in 0..3 {
            data[i * 3 + i] = (i + 1) as f64;
        }
        let w = WeightTensor::new(3, 3, 1, 1, data).unwrap();
        let g = GroupCount::new(3).unwrap();
        let e = export_grouped(&w, &PermutationPair::identity(3, 3), g).unwrap();
        let mut seq = 0.21;
        let x = random_map(3, 2, 2, &mut seq);
        let y = grouped_forward(&x, &e, 0).unwrap();
        for c in 0..3 {
            for p in 0..4 {
                let (py, px) = (p / 2, p % 2);
                assert_eq!(y.at(c, py, px), (c + 1) as f64 * x.at(c, py, px));
            }
        }
    }

    #[test]
    fn grouped_forward_matches_the_masked_pass() {
        let mut seq = 0.05;
        for (c_out, c_in, k, g) in [(8, 8, 3, 2), (8, 8, 1, 4), (6, 9, 3, 3), (4, 8, 1, 2)] {
            let w = random_tensor(c_out, c_in, k, &mut seq);
            let groups = GroupCount::new(g).unwrap();
            let perms =
                greedy_permutation(&w.norm_matrix(), groups, &GreedyParams::default()).unwrap();
            let mask = prune_mask(c_out, c_in, groups, &perms).unwrap();
            let e = export_grouped(&w, &perms, groups).unwrap();
            let x = random_map(c_in, 5, 5, &mut seq);
            let pad = k / 2;
            let masked = masked_forward(&x, &w, &mask, pad).unwrap();
            let grouped = grouped_forward(&x, &e, pad).unwrap();
            assert!(
                rel_err(&grouped, &masked) <= 1e-5,
                "({c_out}, {c_in}, {k}, {g}): rel err {}",
                rel_err(&grouped, &masked)
            );
        }
    }

    #[test]
    fn grouped_export_reassembles_bit_exactly() {
        let mut seq = 0.55;
        let w = random_tensor(8, 8, 3, &mut seq);
        let groups = GroupCount::new(4).unwrap();
        let perms =
            greedy_permutation(&w.norm_matrix(), groups, &GreedyParams::default()).unwrap();
        let mask = prune_mask(8, 8, groups, &perms).unwrap();
        let e = export_grouped(&w, &perms, groups).unwrap();
        let back = e.reassemble();
        for f in 0..8 {
            for c in 0..8 {
                for u in 0..3 {
                    for v in 0..3 {
                        let expect = if mask.at(f, c) { w.at(f, c, u, v) } else { 0.0 };
                        assert!(
                            back.at(f, c, u, v).to_bits() == expect.to_bits(),
                            "({f},{c},{u},{v})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_export_reassembles_bit_exactly_and_spans_evenly() {
        let mut seq = 0.77;
        let w = random_tensor(6, 6, 3, &mut seq);
        let groups = GroupCount::new(3).unwrap();
        let perms =
            greedy_permutation(&w.norm_matrix(), groups, &GreedyParams::default()).unwrap();
        let mask = prune_mask(6, 6, groups, &perms).unwrap();
        let e = export_sparse(&w, &mask, true).unwrap();
        assert_eq!(e.nnz(), 6 * 6 / 3);
        for f in 0..6 {
            assert_eq!(e.row_offsets()[f + 1] - e.row_offsets()[f], 2);
            let span = &e.col_indices()[e.row_offsets()[f]..e.row_offsets()[f + 1]];
            assert!(span.windows(2).all(|p| p[0] < p[1]));
        }
        let back = e.reassemble();
        for f in 0..6 {
            for c in 0..6 {
                for u in 0..3 {
                    for v in 0..3 {
                        let expect = if mask.at(f, c) { w.at(f, c, u, v) } else { 0.0 };
                        assert_eq!(back.at(f, c, u, v).to_bits(), expect.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_matvec_matches_the_masked_pass_on_pointwise_layers() {
        let mut seq = 0.33;
        let w = random_tensor(8, 8, 1, &mut seq);
        let groups = GroupCount::new(2).unwrap();
        let perms =
            greedy_permutation(&w.norm_matrix(), groups, &GreedyParams::default()).unwrap();
        let mask = prune_mask(8, 8, groups, &perms).unwrap();
        let e = export_sparse(&w, &mask, true).unwrap();
        let x = random_map(8, 4, 4, &mut seq);
        let sparse = sparse_matvec(&e, &x).unwrap();
        let masked = masked_forward(&x, &w, &mask, 0).unwrap();
        assert!(rel_err(&sparse, &masked) <= 1e-10);
    }

    #[test]
    fn sparse_execution_refuses_wide_kernels() {
        let mut seq = 0.61;
        let w = random_tensor(4, 4, 3, &mut seq);
        let mask = prune_mask(
            4,
            4,
            GroupCount::new(2).unwrap(),
            &PermutationPair::identity(4, 4),
        )
        .unwrap();
        let e = export_sparse(&w, &mask, true).unwrap();
        let x = random_map(4, 4, 4, &mut seq);
        assert!(matches!(
            sparse_matvec(&e, &x),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn strict_sparse_export_rejects_uneven_masks() {
        let mut seq = 0.91;
        let w = random_tensor(4, 4, 1, &mut seq);
        let mut bits = vec![false; 16];
        bits[0] = true;
        bits[5] = true;
        bits[6] = true;
        bits[10] = true;
        bits[15] = true;
        let mask = MaskPattern::from_bits(4, 4, bits).unwrap();
        assert!(export_sparse(&w, &mask, true).is_err());
        let loose = export_sparse(&w, &mask, false).unwrap();
        assert_eq!(loose.nnz(), 5);
    }

    #[test]
    fn round_tripping_the_output_permutation_is_lossless() {
        // The export stores the inverse of the solver's output gather; the
        // masked and grouped passes must agree on which original channel
        // carries which result. A fixed non-trivial permutation checks the
        // direction explicitly.
        let w = WeightTensor::new(
            4,
            4,
            1,
            1,
            (0..16).map(|i| if i % 5 == 0 { (i + 1) as f64 } else { 0.1 }).collect(),
        )
        .unwrap();
        let perms = PermutationPair::new(
            Permutation::new(vec![2, 0, 3, 1]).unwrap(),
            Permutation::new(vec![1, 3, 0, 2]).unwrap(),
        );
        let groups = GroupCount::new(2).unwrap();
        let mask = prune_mask(4, 4, groups, &perms).unwrap();
        let e = export_grouped(&w, &perms, groups).unwrap();
        let mut seq = 0.13;
        let x = random_map(4, 3, 3, &mut seq);
        let masked = masked_forward(&x, &w, &mask, 0).unwrap();
        let grouped = grouped_forward(&x, &e, 0).unwrap();
        assert!(rel_err(&grouped, &masked) <= 1e-10);
    }
}
