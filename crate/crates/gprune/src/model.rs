//! Core data model: weight tensors, kernel norm matrices, channel
//! permutations, and the block-diagonal objective they are scored by.
//!
//! All channel indices are 0-based. A permutation pair acts by gathering:
//! entry `(f, c)` of a permuted matrix is entry `(out_perm[f], in_perm[c])`
//! of the original.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of groups a layer's channels are split into.
///
/// A value of 1 leaves the layer dense; a value equal to the channel count
/// makes every group a single channel. It must divide both the input and
/// output channel counts of any layer it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "usize", try_from = "usize")]
pub struct GroupCount(usize);

impl From<GroupCount> for usize {
    fn from(g: GroupCount) -> usize {
        g.0
    }
}

impl TryFrom<usize> for GroupCount {
    type Error = Error;

    fn try_from(groups: usize) -> Result<Self> {
        GroupCount::new(groups)
    }
}

impl GroupCount {
    pub fn new(groups: usize) -> Result<Self> {
        if groups == 0 {
            return Err(Error::InvalidArgument(
                "group count must be at least 1".into(),
            ));
        }
        Ok(GroupCount(groups))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Checks that this group count divides a channel count on the named axis.
    pub fn check_divides(self, channels: usize, axis: &'static str) -> Result<()> {
        if channels % self.0 != 0 {
            return Err(Error::GroupMismatch {
                groups: self.0,
                channels,
                axis,
            });
        }
        Ok(())
    }
}

impl fmt::Display for GroupCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

// ---------------------------------------------------------------------------
// Permutations
// ---------------------------------------------------------------------------

/// A bijection on `0..n`, stored as the image sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.0
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(image: Vec<usize>) -> Result<Self> {
        Permutation::new(image)
    }
}

impl Permutation {
    /// Validates that `image` hits every index in `0..image.len()` exactly once.
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for (pos, &target) in image.iter().enumerate() {
            if target >= n {
                return Err(Error::Permutation(format!(
                    "entry {target} at position {pos} is out of range for length {n}"
                )));
            }
            if seen[target] {
                return Err(Error::Permutation(format!(
                    "entry {target} at position {pos} repeats an earlier entry"
                )));
            }
            seen[target] = true;
        }
        Ok(Permutation(image))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Image of position `i`.
    pub fn at(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// The permutation `q` with `q[self[i]] = i` for every `i`.
    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (pos, &target) in self.0.iter().enumerate() {
            inv[target] = pos;
        }
        Permutation(inv)
    }
}

/// The output-side and input-side permutations applied to a layer together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPair {
    pub out_perm: Permutation,
    pub in_perm: Permutation,
}

impl PermutationPair {
    pub fn new(out_perm: Permutation, in_perm: Permutation) -> Self {
        PermutationPair { out_perm, in_perm }
    }

    pub fn identity(c_out: usize, c_in: usize) -> Self {
        PermutationPair {
            out_perm: Permutation::identity(c_out),
            in_perm: Permutation::identity(c_in),
        }
    }

    /// Inverts both axes; applying a pair and then its inverse is a no-op.
    pub fn inverse(&self) -> PermutationPair {
        PermutationPair {
            out_perm: self.out_perm.inverse(),
            in_perm: self.in_perm.inverse(),
        }
    }

    pub(crate) fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if self.out_perm.len() != rows || self.in_perm.len() != cols {
            return Err(Error::Shape(format!(
                "permutation pair of lengths ({}, {}) applied to a {rows}x{cols} matrix",
                self.out_perm.len(),
                self.in_perm.len()
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Weight tensors
// ---------------------------------------------------------------------------

/// Dense convolution weights with shape `(c_out, c_in, k_h, k_w)`, row-major.
///
/// Values are held as `f64` in memory regardless of on-disk width, and are
/// validated to be finite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    c_out: usize,
    c_in: usize,
    k_h: usize,
    k_w: usize,
    data: Vec<f64>,
}

impl WeightTensor {
    pub fn new(c_out: usize, c_in: usize, k_h: usize, k_w: usize, data: Vec<f64>) -> Result<Self> {
        if c_out == 0 || c_in == 0 || k_h == 0 || k_w == 0 {
            return Err(Error::Shape(format!(
                "weight tensor dimensions must all be at least 1, got ({c_out}, {c_in}, {k_h}, {k_w})"
            )));
        }
        let expected = c_out
            .checked_mul(c_in)
            .and_then(|n| n.checked_mul(k_h))
            .and_then(|n| n.checked_mul(k_w))
            .ok_or_else(|| Error::Shape("weight tensor element count overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "weight tensor ({c_out}, {c_in}, {k_h}, {k_w}) needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: "weight tensor".into(),
            });
        }
        Ok(WeightTensor {
            c_out,
            c_in,
            k_h,
            k_w,
            data,
        })
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, f: usize, c: usize, u: usize, v: usize) -> f64 {
        self.data[((f * self.c_in + c) * self.k_h + u) * self.k_w + v]
    }

    /// The `k_h * k_w` kernel connecting input channel `c` to output channel `f`.
    pub fn kernel(&self, f: usize, c: usize) -> &[f64] {
        let start = (f * self.c_in + c) * self.k_h * self.k_w;
        &self.data[start..start + self.k_h * self.k_w]
    }

    /// Per-kernel L2 norms: entry `(f, c)` is the norm of `kernel(f, c)`.
    pub fn norm_matrix(&self) -> NormMatrix {
        let mut values = Vec::with_capacity(self.c_out * self.c_in);
        for f in 0..self.c_out {
            for c in 0..self.c_in {
                let sq: f64 = self.kernel(f, c).iter().map(|v| v * v).sum();
                values.push(sq.sqrt());
            }
        }
        NormMatrix {
            rows: self.c_out,
            cols: self.c_in,
            values,
        }
    }

    /// Gathers whole kernels: `out.kernel(f, c) = self.kernel(out_perm[f], in_perm[c])`.
    pub fn permuted(&self, perms: &PermutationPair) -> Result<WeightTensor> {
        perms.check_dims(self.c_out, self.c_in)?;
        let ksize = self.k_h * self.k_w;
        let mut data = Vec::with_capacity(self.data.len());
        for f in 0..self.c_out {
            for c in 0..self.c_in {
                data.extend_from_slice(self.kernel(perms.out_perm.at(f), perms.in_perm.at(c)));
            }
        }
        debug_assert_eq!(data.len(), self.c_out * self.c_in * ksize);
        Ok(WeightTensor {
            c_out: self.c_out,
            c_in: self.c_in,
            k_h: self.k_h,
            k_w: self.k_w,
            data,
        })
    }
}

// ---------------------------------------------------------------------------
// Norm matrices
// ---------------------------------------------------------------------------

/// A `rows x cols` matrix of kernel magnitudes, row-major.
///
/// Entries are finite and nonnegative. Rows index output channels and
/// columns index input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl NormMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "norm matrix dimensions must be at least 1, got {rows}x{cols}"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Shape("norm matrix element count overflows".into()))?;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "norm matrix {rows}x{cols} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite {
                index,
                context: "norm matrix (entries must be finite and nonnegative)".into(),
            });
        }
        Ok(NormMatrix { rows, cols, values })
    }

    /// Builds a matrix from explicit rows; handy in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("norm matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
        }
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        NormMatrix::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, f: usize, c: usize) -> f64 {
        self.values[f * self.cols + c]
    }

    /// Gathers entries: `out.at(f, c) = self.at(out_perm[f], in_perm[c])`.
    pub fn permuted(&self, perms: &PermutationPair) -> Result<NormMatrix> {
        perms.check_dims(self.rows, self.cols)?;
        let mut values = Vec::with_capacity(self.values.len());
        for f in 0..self.rows {
            for c in 0..self.cols {
                values.push(self.at(perms.out_perm.at(f), perms.in_perm.at(c)));
            }
        }
        Ok(NormMatrix {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }

    /// Sum of the entries lying in the `g` diagonal blocks.
    ///
    /// Row `f` belongs to block `f / (rows / g)` and column `c` to block
    /// `c / (cols / g)`; an entry counts when the two agree. Blocks are
    /// accumulated in order, row-major within each block.
    pub fn diagonal_block_sum(&self, groups: GroupCount) -> Result<f64> {
        groups.check_divides(self.rows, "output")?;
        groups.check_divides(self.cols, "input")?;
        let g = groups.get();
        let block_rows = self.rows / g;
        let block_cols = self.cols / g;
        let mut sum = 0.0;
        for k in 0..g {
            for f in k * block_rows..(k + 1) * block_rows {
                for c in k * block_cols..(k + 1) * block_cols {
                    sum += self.at(f, c);
                }
            }
        }
        Ok(sum)
    }

    /// Sum of every entry, accumulated row-major.
    pub fn total_sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Layer descriptions
// ---------------------------------------------------------------------------

/// Shape of one convolution layer, including the output spatial extent used
/// for operation counting. Stride is 1 and bias terms are not modeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl LayerSpec {
    pub fn new(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        k_h: usize,
        k_w: usize,
        h_out: usize,
        w_out: usize,
    ) -> Result<Self> {
        let name = name.into();
        if c_in == 0 || c_out == 0 || k_h == 0 || k_w == 0 || h_out == 0 || w_out == 0 {
            return Err(Error::Shape(format!(
                "layer {name:?} has a zero dimension: \
                 c_in={c_in} c_out={c_out} k_h={k_h} k_w={k_w} h_out={h_out} w_out={w_out}"
            )));
        }
        Ok(LayerSpec {
            name,
            c_in,
            c_out,
            k_h,
            k_w,
            h_out,
            w_out,
        })
    }
}
