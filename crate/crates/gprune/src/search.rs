//! Whole-model configuration search: pick a group count per layer so the
//! model fits a parameter and operation budget while discarding as little
//! kernel magnitude as possible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupCount, LayerSpec, NormMatrix};
use crate::pruner::{solve_layer, GreedyParams};

/// Default ceiling on combinations for [`exhaustive_config_oracle`].
pub const DEFAULT_CONFIG_CAP: u64 = 1_000_000;

/// Group counts a layer can take: the common divisors of its channel
/// counts, strictly decreasing, from the gcd down to 1.
pub fn group_candidates(c_in: usize, c_out: usize) -> Result<Vec<GroupCount>> {
    if c_in == 0 || c_out == 0 {
        return Err(Error::Shape(
            "channel counts must be at least 1 to enumerate group candidates".into(),
        ));
    }
    let g = gcd(c_in, c_out);
    let mut out = Vec::new();
    for d in (1..=g).rev() {
        if g % d == 0 {
            out.push(GroupCount::new(d).expect("divisors are positive"));
        }
    }
    Ok(out)
}

fn gcd(a: usize, b: usize) -> usize {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Parameters of one layer at a group count: dense count divided by `g`.
pub fn num_params(spec: &LayerSpec, groups: GroupCount) -> Result<u64> {
    groups.check_divides(spec.c_in, "input")?;
    groups.check_divides(spec.c_out, "output")?;
    checked_product(&[
        spec.c_out as u64,
        (spec.c_in / groups.get()) as u64,
        spec.k_h as u64,
        spec.k_w as u64,
    ])
}

/// Operations of one layer at a group count, counting each multiply-add as
/// two, over the full output extent.
pub fn num_ops(spec: &LayerSpec, groups: GroupCount) -> Result<u64> {
    checked_product(&[
        2,
        spec.h_out as u64,
        spec.w_out as u64,
        num_params(spec, groups)?,
    ])
}

fn checked_product(factors: &[u64]) -> Result<u64> {
    factors
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f))
        .ok_or_else(|| Error::InvalidArgument("budget total overflows a 64-bit count".into()))
}

/// Upper bounds a configuration must respect; `None` leaves an axis open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BudgetConstraint {
    pub max_params: Option<u64>,
    pub max_ops: Option<u64>,
}

impl BudgetConstraint {
    pub fn unbounded() -> Self {
        BudgetConstraint::default()
    }

    pub fn satisfied_by(&self, params: u64, ops: u64) -> bool {
        self.max_params.is_none_or(|cap| params <= cap)
            && self.max_ops.is_none_or(|cap| ops <= cap)
    }
}

/// Which end of the candidate lists a search starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDirection {
    /// Start with every layer at its most grouped candidate and walk toward
    /// dense, stopping before the budget would be exceeded.
    Densify,
    /// Start dense and walk toward grouped until the budget is satisfied.
    Sparsify,
}

/// Whether move selection compares raw discarded magnitude or magnitude
/// relative to each layer's total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScale {
    Raw,
    Normalized,
}

/// Options shared by [`local_search`] and [`exhaustive_config_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub direction: SearchDirection,
    pub cost_scale: CostScale,
    pub greedy: GreedyParams,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            direction: SearchDirection::Densify,
            cost_scale: CostScale::Raw,
            greedy: GreedyParams::default(),
        }
    }
}

/// Discarded magnitude per candidate group count of one layer, solved once
/// per candidate and memoized for lookup.
#[derive(Debug, Clone)]
pub struct CostTable {
    candidates: Vec<GroupCount>,
    costs: Vec<f64>,
}

impl CostTable {
    /// Solves the layer at every candidate. With [`CostScale::Normalized`]
    /// each cost is divided by the layer's total magnitude (zero stays zero).
    pub fn build(
        m: &NormMatrix,
        candidates: &[GroupCount],
        params: &GreedyParams,
        scale: CostScale,
    ) -> Result<CostTable> {
        let total = m.total_sum();
        let mut costs = Vec::with_capacity(candidates.len());
        for &g in candidates {
            let raw = solve_layer(m, g, params)?.cost;
            costs.push(match scale {
                CostScale::Raw => raw,
                CostScale::Normalized => {
                    if total > 0.0 {
                        raw / total
                    } else {
                        0.0
                    }
                }
            });
        }
        Ok(CostTable {
            candidates: candidates.to_vec(),
            costs,
        })
    }

    pub fn candidates(&self) -> &[GroupCount] {
        &self.candidates
    }

    /// Cost at candidate index `i`.
    pub fn cost(&self, i: usize) -> f64 {
        self.costs[i]
    }

    /// Cost for a specific group count, when it is one of the candidates.
    pub fn cost_for(&self, groups: GroupCount) -> Option<f64> {
        self.candidates
            .iter()
            .position(|&g| g == groups)
            .map(|i| self.costs[i])
    }
}

/// Where a budgeted search currently stands: one candidate index per layer
/// plus the exact totals that choice implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchState {
    pub indices: Vec<usize>,
    pub total_params: u64,
    pub total_ops: u64,
}

/// A chosen group count per layer with its exact totals and the magnitude
/// it discards (in the cost scale the search ran under).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub groups: Vec<GroupCount>,
    pub total_params: u64,
    pub total_ops: u64,
    pub total_cost: f64,
}

struct LayerPlan {
    candidates: Vec<GroupCount>,
    costs: Vec<f64>,
    params: Vec<u64>,
    ops: Vec<u64>,
}

fn build_plans(
    layers: &[(&LayerSpec, &NormMatrix)],
    options: &SearchOptions,
) -> Result<Vec<LayerPlan>> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument(
            "configuration search needs at least one layer".into(),
        ));
    }
    for (spec, norms) in layers {
        if norms.rows() != spec.c_out || norms.cols() != spec.c_in {
            return Err(Error::Shape(format!(
                "layer {:?}: norm matrix is {}x{} but the layer has {} output and {} input channels",
                spec.name,
                norms.rows(),
                norms.cols(),
                spec.c_out,
                spec.c_in
            )));
        }
    }
    layers
        .par_iter()
        .map(|(spec, norms)| {
            let candidates = group_candidates(spec.c_in, spec.c_out)?;
            let table = CostTable::build(norms, &candidates, &options.greedy, options.cost_scale)?;
            let params = candidates
                .iter()
                .map(|&g| num_params(spec, g))
                .collect::<Result<Vec<_>>>()?;
            let ops = candidates
                .iter()
                .map(|&g| num_ops(spec, g))
                .collect::<Result<Vec<_>>>()?;
            Ok(LayerPlan {
                costs: (0..candidates.len()).map(|i| table.cost(i)).collect(),
                candidates,
                params,
                ops,
            })
        })
        .collect()
}

fn state_of(plans: &[LayerPlan], indices: Vec<usize>) -> Result<SearchState> {
    let mut total_params: u64 = 0;
    let mut total_ops: u64 = 0;
    for (plan, &i) in plans.iter().zip(&indices) {
        total_params = total_params
            .checked_add(plan.params[i])
            .ok_or_else(|| Error::InvalidArgument("budget total overflows a 64-bit count".into()))?;
        total_ops = total_ops
            .checked_add(plan.ops[i])
            .ok_or_else(|| Error::InvalidArgument("budget total overflows a 64-bit count".into()))?;
    }
    Ok(SearchState {
        indices,
        total_params,
        total_ops,
    })
}

fn config_of(plans: &[LayerPlan], state: &SearchState) -> GroupConfig {
    GroupConfig {
        groups: plans
            .iter()
            .zip(&state.indices)
            .map(|(p, &i)| p.candidates[i])
            .collect(),
        total_params: state.total_params,
        total_ops: state.total_ops,
        total_cost: plans
            .iter()
            .zip(&state.indices)
            .map(|(p, &i)| p.costs[i])
            .sum(),
    }
}

/// Greedy budgeted search over per-layer group counts.
///
/// Densifying starts with every layer at its most grouped candidate (which
/// must already satisfy the budget) and repeatedly moves the layer whose
/// next candidate has the smallest cost, ties going to the lowest layer
/// index; a move that would break the budget is undone and ends the search.
/// Sparsifying starts dense and repeatedly moves the layer whose step to
/// the next more-grouped candidate raises its cost the least, returning at
/// the first state that fits the budget.
pub fn local_search(
    layers: &[(&LayerSpec, &NormMatrix)],
    budget: &BudgetConstraint,
    options: &SearchOptions,
) -> Result<GroupConfig> {
    let plans = build_plans(layers, options)?;
    match options.direction {
        SearchDirection::Densify => densify(&plans, budget),
        SearchDirection::Sparsify => sparsify(&plans, budget),
    }
}

fn densify(plans: &[LayerPlan], budget: &BudgetConstraint) -> Result<GroupConfig> {
    let mut state = state_of(plans, vec![0; plans.len()])?;
    if !budget.satisfied_by(state.total_params, state.total_ops) {
        return Err(Error::InfeasibleBudget(format!(
            "the most grouped configuration already needs {} parameters and {} operations",
            state.total_params, state.total_ops
        )));
    }
    loop {
        let mut chosen: Option<(usize, f64)> = None;
        for (l, plan) in plans.iter().enumerate() {
            let i = state.indices[l];
            if i + 1 >= plan.candidates.len() {
                continue;
            }
            let cost = plan.costs[i + 1];
            if chosen.is_none_or(|(_, best)| cost < best) {
                chosen = Some((l, cost));
            }
        }
        let Some((l, _)) = chosen else {
            break;
        };
        let mut indices = state.indices.clone();
        indices[l] += 1;
        let moved = state_of(plans, indices)?;
        if !budget.satisfied_by(moved.total_params, moved.total_ops) {
            break;
        }
        state = moved;
    }
    Ok(config_of(plans, &state))
}

fn sparsify(plans: &[LayerPlan], budget: &BudgetConstraint) -> Result<GroupConfig> {
    let mut state = state_of(plans, plans.iter().map(|p| p.candidates.len() - 1).collect())?;
    loop {
        if budget.satisfied_by(state.total_params, state.total_ops) {
            return Ok(config_of(plans, &state));
        }
        let mut chosen: Option<(usize, f64)> = None;
        for (l, plan) in plans.iter().enumerate() {
            let i = state.indices[l];
            if i == 0 {
                continue;
            }
            let increase = plan.costs[i - 1] - plan.costs[i];
            if chosen.is_none_or(|(_, best)| increase < best) {
                chosen = Some((l, increase));
            }
        }
        let Some((l, _)) = chosen else {
            return Err(Error::InfeasibleBudget(format!(
                "even the most grouped configuration needs {} parameters and {} operations",
                state.total_params, state.total_ops
            )));
        };
        let mut indices = state.indices.clone();
        indices[l] -= 1;
        state = state_of(plans, indices)?;
    }
}

/// Exact reference for [`local_search`]: tries every combination of
/// candidates, keeps the feasible one with the least total cost, and breaks
/// ties toward the lexicographically smallest group-count vector. Instances
/// with more than `cap` combinations are refused.
pub fn exhaustive_config_oracle(
    layers: &[(&LayerSpec, &NormMatrix)],
    budget: &BudgetConstraint,
    options: &SearchOptions,
    cap: u64,
) -> Result<GroupConfig> {
    let plans = build_plans(layers, options)?;
    let combinations = plans
        .iter()
        .try_fold(1u128, |acc, p| acc.checked_mul(p.candidates.len() as u128))
        .ok_or(Error::EnumerationCap {
            required: u128::MAX,
            cap: cap as u128,
        })?;
    if combinations > cap as u128 {
        return Err(Error::EnumerationCap {
            required: combinations,
            cap: cap as u128,
        });
    }

    let mut best: Option<GroupConfig> = None;
    let mut indices = vec![0usize; plans.len()];
    loop {
        let state = state_of(&plans, indices.clone())?;
        if budget.satisfied_by(state.total_params, state.total_ops) {
            let config = config_of(&plans, &state);
            let replace = match &best {
                None => true,
                Some(b) => {
                    config.total_cost < b.total_cost
                        || (config.total_cost == b.total_cost
                            && group_vec(&config) < group_vec(b))
                }
            };
            if replace {
                best = Some(config);
            }
        }
        // Advance the mixed-radix counter.
        let mut pos = plans.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < plans[pos].candidates.len() {
                break;
            }
            indices[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX {
            break;
        }
    }

    best.ok_or_else(|| {
        Error::InfeasibleBudget("no candidate combination satisfies the budget".into())
    })
}

fn group_vec(config: &GroupConfig) -> Vec<usize> {
    config.groups.iter().map(|g| g.get()).collect()
}
