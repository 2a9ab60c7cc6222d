//! Single-layer pruning: a block-wise sorting heuristic that picks channel
//! permutations, the score of what they retain, and the mask they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupCount, NormMatrix, Permutation, PermutationPair};

/// Knobs for the sorting heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyParams {
    /// Sorting rounds spent on each block. Zero skips sorting entirely and
    /// keeps both permutations at identity, the unsorted baseline.
    pub sort_rounds: usize,
}

impl Default for GreedyParams {
    fn default() -> Self {
        GreedyParams { sort_rounds: 10 }
    }
}

/// Permutations for one layer plus the scores they achieve at a given
/// group count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSolution {
    pub groups: GroupCount,
    pub perms: PermutationPair,
    /// Kernel magnitude captured inside the diagonal blocks.
    pub objective: f64,
    /// Magnitude the mask discards: total minus objective, floored at zero.
    pub cost: f64,
    /// Objective over total magnitude, clamped to `[0, 1]`; an all-zero
    /// matrix counts as fully recovered.
    pub recovery_ratio: f64,
}

/// Retention mask over original coordinates: bit `(f, c)` keeps the kernel
/// connecting input channel `c` to output channel `f`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPattern {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl MaskPattern {
    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || bits.len() != rows * cols {
            return Err(Error::Shape(format!(
                "mask {rows}x{cols} needs {} bits, got {}",
                rows * cols,
                bits.len()
            )));
        }
        Ok(MaskPattern { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, f: usize, c: usize) -> bool {
        self.bits[f * self.cols + c]
    }

    /// Number of retained kernels.
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// The group count this mask is regular for, when one exists: every row
    /// keeps the same number of kernels, every column does too, and the two
    /// rates describe the same block split.
    pub fn regular_groups(&self) -> Option<GroupCount> {
        let per_row = (0..self.cols).filter(|&c| self.at(0, c)).count();
        if per_row == 0 || self.cols % per_row != 0 {
            return None;
        }
        let g = self.cols / per_row;
        if self.rows % g != 0 {
            return None;
        }
        let per_col = self.rows / g;
        for f in 0..self.rows {
            if (0..self.cols).filter(|&c| self.at(f, c)).count() != per_row {
                return None;
            }
        }
        for c in 0..self.cols {
            if (0..self.rows).filter(|&f| self.at(f, c)).count() != per_col {
                return None;
            }
        }
        Some(GroupCount::new(g).expect("g >= 1 by construction"))
    }
}

// ---------------------------------------------------------------------------
// The sorting heuristic
// ---------------------------------------------------------------------------

/// Chooses channel permutations that concentrate kernel magnitude into the
/// `g` diagonal blocks of the permuted norm matrix.
///
/// Blocks are settled from the last one back to the first. While block `k`
/// is being worked on, positions belonging to later blocks are frozen and
/// every earlier position is still in play. Each round first stable-sorts
/// the unfrozen input channels ascending by the mass they would contribute
/// to the block's rows, pushing the heaviest columns into the block, then
/// recomputes keys and does the same for the unfrozen output channels
/// against the block's columns. With `sort_rounds == 0` both permutations
/// stay at identity.
pub fn greedy_permutation(
    m: &NormMatrix,
    groups: GroupCount,
    params: &GreedyParams,
) -> Result<PermutationPair> {
    groups.check_divides(m.rows(), "output")?;
    groups.check_divides(m.cols(), "input")?;
    let g = groups.get();
    let block_rows = m.rows() / g;
    let block_cols = m.cols() / g;
    let mut out_perm: Vec<usize> = (0..m.rows()).collect();
    let mut in_perm: Vec<usize> = (0..m.cols()).collect();

    for block in (0..g).rev() {
        let row_range = block * block_rows..(block + 1) * block_rows;
        let col_range = block * block_cols..(block + 1) * block_cols;
        for _ in 0..params.sort_rounds {
            let col_keys: Vec<f64> = in_perm[..col_range.end]
                .iter()
                .map(|&c| row_range.clone().map(|f| m.at(out_perm[f], c)).sum())
                .collect();
            stable_sort_prefix(&mut in_perm, &col_keys);
            let row_keys: Vec<f64> = out_perm[..row_range.end]
                .iter()
                .map(|&f| col_range.clone().map(|c| m.at(f, in_perm[c])).sum())
                .collect();
            stable_sort_prefix(&mut out_perm, &row_keys);
        }
    }

    Ok(PermutationPair::new(
        Permutation::new(out_perm).expect("reordered identity stays a bijection"),
        Permutation::new(in_perm).expect("reordered identity stays a bijection"),
    ))
}

/// Stable-sorts `perm[..keys.len()]` ascending by the given per-position keys.
fn stable_sort_prefix(perm: &mut [usize], keys: &[f64]) {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).expect("keys are finite"));
    let prefix: Vec<usize> = order.iter().map(|&i| perm[i]).collect();
    perm[..keys.len()].copy_from_slice(&prefix);
}

/// Sums the retained entries for the block partition the permutations induce.
///
/// The order of addition is canonical: blocks are visited by ascending
/// smallest input channel, and within a block entries are taken in ascending
/// original-coordinate order. Two permutation pairs describing the same
/// grouping therefore produce bit-identical sums, however they label the
/// blocks or order channels inside them. This is the evaluation behind every
/// reported objective.
pub(crate) fn partition_block_sum(
    m: &NormMatrix,
    perms: &PermutationPair,
    groups: GroupCount,
) -> Result<f64> {
    perms.check_dims(m.rows(), m.cols())?;
    groups.check_divides(m.rows(), "output")?;
    groups.check_divides(m.cols(), "input")?;
    let g = groups.get();
    let block_rows = m.rows() / g;
    let block_cols = m.cols() / g;
    let mut blocks: Vec<(Vec<usize>, Vec<usize>)> = (0..g)
        .map(|k| {
            let mut rows: Vec<usize> =
                perms.out_perm.as_slice()[k * block_rows..(k + 1) * block_rows].to_vec();
            let mut cols: Vec<usize> =
                perms.in_perm.as_slice()[k * block_cols..(k + 1) * block_cols].to_vec();
            rows.sort_unstable();
            cols.sort_unstable();
            (rows, cols)
        })
        .collect();
    blocks.sort_unstable_by_key(|(_, cols)| cols[0]);
    let mut sum = 0.0;
    for (rows, cols) in &blocks {
        for &f in rows {
            for &c in cols {
                sum += m.at(f, c);
            }
        }
    }
    Ok(sum)
}

/// Scores an already-chosen permutation pair.
pub(crate) fn score_solution(
    m: &NormMatrix,
    groups: GroupCount,
    perms: PermutationPair,
) -> Result<PruneSolution> {
    let objective = partition_block_sum(m, &perms, groups)?;
    let total = m.total_sum();
    let cost = (total - objective).max(0.0);
    let recovery_ratio = if total > 0.0 {
        (objective / total).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PruneSolution {
        groups,
        perms,
        objective,
        cost,
        recovery_ratio,
    })
}

/// Runs the sorting heuristic and scores the result.
pub fn solve_layer(
    m: &NormMatrix,
    groups: GroupCount,
    params: &GreedyParams,
) -> Result<PruneSolution> {
    let perms = greedy_permutation(m, groups, params)?;
    score_solution(m, groups, perms)
}

/// Fraction of total magnitude a permutation pair keeps inside the diagonal
/// blocks, clamped to `[0, 1]`. An all-zero matrix counts as 1.
pub fn recovery_ratio(m: &NormMatrix, perms: &PermutationPair, groups: GroupCount) -> Result<f64> {
    Ok(score_solution(m, groups, perms.clone())?.recovery_ratio)
}

/// Marks the kernels the diagonal blocks retain, expressed in original
/// coordinates: position `(f, c)` of the permuted layout maps back to
/// `(out_perm[f], in_perm[c])`.
pub fn prune_mask(
    c_out: usize,
    c_in: usize,
    groups: GroupCount,
    perms: &PermutationPair,
) -> Result<MaskPattern> {
    perms.check_dims(c_out, c_in)?;
    groups.check_divides(c_out, "output")?;
    groups.check_divides(c_in, "input")?;
    let g = groups.get();
    let block_rows = c_out / g;
    let block_cols = c_in / g;
    let mut bits = vec![false; c_out * c_in];
    for k in 0..g {
        for f in k * block_rows..(k + 1) * block_rows {
            for c in k * block_cols..(k + 1) * block_cols {
                bits[perms.out_perm.at(f) * c_in + perms.in_perm.at(c)] = true;
            }
        }
    }
    Ok(MaskPattern {
        rows: c_out,
        cols: c_in,
        bits,
    })
}
