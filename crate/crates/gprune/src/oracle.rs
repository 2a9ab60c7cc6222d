//! Exhaustive reference solver for single-layer grouping.
//!
//! It enumerates every way of splitting the input channels and the output
//! channels into `g` equally sized groups and keeps the partition retaining
//! the most magnitude. Relabeling the groups of both axes together never
//! changes the objective, so input partitions are enumerated once per
//! equivalence class: channel 0 is pinned to input group 0 and the smallest
//! member of each later input group increases. Output assignments stay fully
//! labeled because which output group pairs with which input group matters.

use crate::error::{Error, Result};
use crate::model::{GroupCount, NormMatrix, Permutation, PermutationPair};
use crate::pruner::{score_solution, PruneSolution};

/// Default ceiling on objective evaluations for [`brute_force_oracle`].
pub const DEFAULT_ORACLE_CAP: u64 = 100_000_000;

/// Number of objective evaluations [`brute_force_oracle`] would perform,
/// or an error when it cannot be represented.
pub fn oracle_evaluations(m: &NormMatrix, groups: GroupCount) -> Result<u128> {
    groups.check_divides(m.rows(), "output")?;
    groups.check_divides(m.cols(), "input")?;
    let g = groups.get() as u128;
    let in_partitions = canonical_partition_count(m.cols() as u128, g)?;
    let out_assignments = labeled_assignment_count(m.rows() as u128, g)?;
    in_partitions
        .checked_mul(out_assignments)
        .ok_or(Error::EnumerationCap {
            required: u128::MAX,
            cap: 0,
        })
}

/// Finds the best grouping by exhaustive enumeration.
///
/// Candidates are visited in a fixed lexicographic order and the first one
/// achieving the maximum wins, so the result is deterministic. Instances
/// whose enumeration would exceed `cap` objective evaluations are refused.
pub fn brute_force_oracle(
    m: &NormMatrix,
    groups: GroupCount,
    cap: u64,
) -> Result<PruneSolution> {
    let required = oracle_evaluations(m, groups).map_err(|e| match e {
        Error::EnumerationCap { required, .. } => Error::EnumerationCap {
            required,
            cap: cap as u128,
        },
        other => other,
    })?;
    if required > cap as u128 {
        return Err(Error::EnumerationCap {
            required,
            cap: cap as u128,
        });
    }

    let g = groups.get();
    let in_size = m.cols() / g;
    let out_size = m.rows() / g;

    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut in_groups: Vec<Vec<usize>> = Vec::with_capacity(g);
    let in_pool: Vec<usize> = (0..m.cols()).collect();
    visit_canonical_partitions(&in_pool, in_size, &mut in_groups, &mut |in_groups| {
        let mut out_groups: Vec<Vec<usize>> = Vec::with_capacity(g);
        let out_pool: Vec<usize> = (0..m.rows()).collect();
        visit_labeled_assignments(&out_pool, out_size, &mut out_groups, &mut |out_groups| {
            let mut objective = 0.0;
            for (rows, cols) in out_groups.iter().zip(in_groups) {
                for &f in rows {
                    for &c in cols {
                        objective += m.at(f, c);
                    }
                }
            }
            let better = match &best {
                None => true,
                Some((b, _, _)) => objective > *b,
            };
            if better {
                best = Some((
                    objective,
                    out_groups.iter().flatten().copied().collect(),
                    in_groups.iter().flatten().copied().collect(),
                ));
            }
        });
    });

    let (_, out_perm, in_perm) = best.expect("at least one partition exists");
    let perms = PermutationPair::new(
        Permutation::new(out_perm).expect("group members form a bijection"),
        Permutation::new(in_perm).expect("group members form a bijection"),
    );
    score_solution(m, groups, perms)
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// Visits all partitions of `pool` into equal groups where the first group
/// holds `pool[0]` and later groups are anchored by their smallest member,
/// in lexicographic order. Groups come out with ascending members.
fn visit_canonical_partitions(
    pool: &[usize],
    size: usize,
    acc: &mut Vec<Vec<usize>>,
    visit: &mut impl FnMut(&[Vec<usize>]),
) {
    if pool.is_empty() {
        visit(acc);
        return;
    }
    let anchor = pool[0];
    let rest: Vec<usize> = pool[1..].to_vec();
    visit_combinations(&rest, size - 1, &mut Vec::new(), &mut |combo| {
        let mut group = Vec::with_capacity(size);
        group.push(anchor);
        group.extend_from_slice(combo);
        let remaining: Vec<usize> = rest
            .iter()
            .copied()
            .filter(|v| !combo.contains(v))
            .collect();
        acc.push(group);
        visit_canonical_partitions(&remaining, size, acc, visit);
        acc.pop();
    });
}

/// Visits all ordered splits of `pool` into equal labeled groups, in
/// lexicographic order. Groups come out with ascending members.
fn visit_labeled_assignments(
    pool: &[usize],
    size: usize,
    acc: &mut Vec<Vec<usize>>,
    visit: &mut impl FnMut(&[Vec<usize>]),
) {
    if pool.is_empty() {
        visit(acc);
        return;
    }
    visit_combinations(pool, size, &mut Vec::new(), &mut |combo| {
        let remaining: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|v| !combo.contains(v))
            .collect();
        acc.push(combo.to_vec());
        visit_labeled_assignments(&remaining, size, acc, visit);
        acc.pop();
    });
}

/// Visits the size-`k` subsets of `pool` in lexicographic order.
fn visit_combinations(
    pool: &[usize],
    k: usize,
    acc: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if k == 0 {
        visit(acc);
        return;
    }
    for i in 0..=pool.len().saturating_sub(k) {
        acc.push(pool[i]);
        visit_combinations(&pool[i + 1..], k - 1, acc, visit);
        acc.pop();
    }
}

fn binomial(n: u128, k: u128) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul(n - i)
            .ok_or(Error::EnumerationCap {
                required: u128::MAX,
                cap: 0,
            })?
            / (i + 1);
    }
    Ok(acc)
}

/// Partitions of `n` items into `g` equal groups, up to group relabeling,
/// counted the same way the enumeration walks them.
fn canonical_partition_count(n: u128, g: u128) -> Result<u128> {
    let size = n / g;
    let mut remaining = n;
    let mut acc: u128 = 1;
    while remaining > 0 {
        acc = acc
            .checked_mul(binomial(remaining - 1, size - 1)?)
            .ok_or(Error::EnumerationCap {
                required: u128::MAX,
                cap: 0,
            })?;
        remaining -= size;
    }
    Ok(acc)
}

/// Ordered splits of `n` items into `g` equal labeled groups.
fn labeled_assignment_count(n: u128, g: u128) -> Result<u128> {
    let size = n / g;
    let mut remaining = n;
    let mut acc: u128 = 1;
    while remaining > 0 {
        acc = acc
            .checked_mul(binomial(remaining, size)?)
            .ok_or(Error::EnumerationCap {
                required: u128::MAX,
                cap: 0,
            })?;
        remaining -= size;
    }
    Ok(acc)
}
