//! Seeded randomized evaluations: planted instances with a known best
//! answer, recovery sweeps across group counts and sorting effort,
//! improvement-over-baseline tables, and a search for inputs the greedy
//! heuristic handles badly. Everything here is reproducible bit-for-bit
//! from its parameters and seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupCount, NormMatrix, Permutation, PermutationPair};
use crate::oracle::{brute_force_oracle, oracle_evaluations, DEFAULT_ORACLE_CAP};
use crate::pruner::{solve_layer, GreedyParams, PruneSolution};

/// Identifier of the random generator behind every seeded run, embedded in
/// reports so they are self-describing.
pub const GENERATOR_ID: &str = "chacha8";

/// Ratios at least `1 - FULL_RECOVERY_TOL` count as full recovery,
/// absorbing summation noise on genuinely complete solutions.
pub const FULL_RECOVERY_TOL: f64 = 1e-12;

/// Number of equal-width recovery-ratio bins in sweep histograms.
pub const HISTOGRAM_BINS: usize = 20;

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds context words into a base seed. Samples keyed by their own derived
/// seed stay identical no matter which other samples run or in what order.
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &w in words {
        s = splitmix64(s ^ w);
    }
    s
}

// ---------------------------------------------------------------------------
// Planted instances
// ---------------------------------------------------------------------------

/// Uniform distribution on `[low, high)` for in-block values.
///
/// The lower bound stays strictly positive so planted blocks never contain
/// zeros and the planted assignment is the unique best one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawDist", try_from = "RawDist")]
pub struct ValueDist {
    low: f64,
    high: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDist {
    low: f64,
    high: f64,
}

impl From<ValueDist> for RawDist {
    fn from(d: ValueDist) -> RawDist {
        RawDist {
            low: d.low,
            high: d.high,
        }
    }
}

impl TryFrom<RawDist> for ValueDist {
    type Error = Error;

    fn try_from(raw: RawDist) -> Result<Self> {
        ValueDist::uniform(raw.low, raw.high)
    }
}

impl ValueDist {
    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !low.is_finite() || !high.is_finite() || low <= 0.0 || low >= high {
            return Err(Error::InvalidArgument(format!(
                "value distribution needs 0 < low < high, got [{low}, {high})"
            )));
        }
        Ok(ValueDist { low, high })
    }

    pub fn low(self) -> f64 {
        self.low
    }

    pub fn high(self) -> f64 {
        self.high
    }

    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        rng.random_range(self.low..self.high)
    }
}

impl Default for ValueDist {
    fn default() -> Self {
        ValueDist {
            low: 0.5,
            high: 1.5,
        }
    }
}

/// A block-diagonal matrix hidden behind known random channel shuffles.
///
/// Applying `truth` to `matrix` restores the block-diagonal layout exactly,
/// so the best possible recovery ratio is always 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub matrix: NormMatrix,
    pub groups: GroupCount,
    pub truth: PermutationPair,
    pub dist: ValueDist,
    pub seed: u64,
}

/// Draws the in-block values of a block-diagonal matrix, block by block and
/// row-major within each block.
fn block_diagonal_values<R: Rng>(
    channels: usize,
    g: usize,
    dist: ValueDist,
    rng: &mut R,
) -> Vec<f64> {
    let b = channels / g;
    let mut values = vec![0.0; channels * channels];
    for k in 0..g {
        for f in k * b..(k + 1) * b {
            for c in k * b..(k + 1) * b {
                values[f * channels + c] = dist.sample(rng);
            }
        }
    }
    values
}

/// Scatters block-diagonal values through a pair of gather permutations:
/// block row `f` lands on matrix row `rows[f]`, likewise for columns.
fn scatter(channels: usize, values: &[f64], rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; channels * channels];
    for f in 0..channels {
        for c in 0..channels {
            out[rows[f] * channels + cols[c]] = values[f * channels + c];
        }
    }
    out
}

/// Builds a planted instance: in-block values drawn i.i.d. from `dist`,
/// everything off-block exactly zero, then rows and columns shuffled
/// independently. Deterministic given its arguments.
pub fn generate_planted_instance(
    channels: usize,
    groups: GroupCount,
    dist: ValueDist,
    seed: u64,
) -> Result<PlantedInstance> {
    groups.check_divides(channels, "planted")?;
    let g = groups.get();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block_values = block_diagonal_values(channels, g, dist, &mut rng);
    let mut rows: Vec<usize> = (0..channels).collect();
    rows.shuffle(&mut rng);
    let mut cols: Vec<usize> = (0..channels).collect();
    cols.shuffle(&mut rng);
    let values = scatter(channels, &block_values, &rows, &cols);
    Ok(PlantedInstance {
        matrix: NormMatrix::new(channels, channels, values)?,
        groups,
        truth: PermutationPair::new(Permutation::new(rows)?, Permutation::new(cols)?),
        dist,
        seed,
    })
}

/// Places two oversized values in different blocks and shuffles their rows
/// to the bottom of the matrix. The bottom-block column keys then rank
/// those two columns highest even though they belong to different groups,
/// which is exactly the trap the plain sorting keys fall into.
///
/// Needs at least two groups and two channels per group to stage; the
/// caller falls back to a plain planted instance otherwise.
fn spiked_instance(
    channels: usize,
    groups: GroupCount,
    dist: ValueDist,
    seed: u64,
) -> Result<PlantedInstance> {
    groups.check_divides(channels, "planted")?;
    let g = groups.get();
    let b = channels / g;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block_values = block_diagonal_values(channels, g, dist, &mut rng);
    let spike = 2.0 * b as f64 * dist.high / dist.low;
    block_values[0] *= spike;
    block_values[b * channels + b] *= spike;

    // Rows carrying the spikes go to the last two positions; the rest are
    // shuffled over the remaining ones. Columns shuffle freely.
    let mut pool: Vec<usize> = (0..channels - 2).collect();
    pool.shuffle(&mut rng);
    let mut rows = vec![0usize; channels];
    rows[0] = channels - 2;
    rows[b] = channels - 1;
    let mut pool = pool.into_iter();
    for f in (1..channels).filter(|&f| f != b) {
        rows[f] = pool.next().expect("pool covers the remaining rows");
    }
    let mut cols: Vec<usize> = (0..channels).collect();
    cols.shuffle(&mut rng);

    let values = scatter(channels, &block_values, &rows, &cols);
    Ok(PlantedInstance {
        matrix: NormMatrix::new(channels, channels, values)?,
        groups,
        truth: PermutationPair::new(Permutation::new(rows)?, Permutation::new(cols)?),
        dist,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Recovery sweeps
// ---------------------------------------------------------------------------

/// Aggregate recovery statistics for one (size, groups, sort rounds) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub size: usize,
    pub groups: GroupCount,
    pub sort_rounds: usize,
    pub samples: usize,
    /// Samples with recovery ratio at least `1 - FULL_RECOVERY_TOL`.
    pub fully_recovered: usize,
    pub mean_ratio: f64,
    /// `HISTOGRAM_BINS` equal-width bins over `[0, 1]`; a ratio of exactly 1
    /// counts in the last bin.
    pub histogram: Vec<u64>,
}

impl SweepCell {
    pub fn full_fraction(&self) -> f64 {
        self.fully_recovered as f64 / self.samples as f64
    }
}

/// A full sweep: every cell shares the sample count, the in-block value
/// distribution, and the base seed recorded here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub generator: String,
    pub base_seed: u64,
    pub dist: ValueDist,
    pub samples_per_cell: usize,
    pub cells: Vec<SweepCell>,
}

fn histogram_bin(ratio: f64) -> usize {
    ((ratio * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Runs the greedy pruner over planted instances for every combination of
/// size, group count, and sorting effort.
///
/// The instances of a (size, groups) pair are shared across all
/// `sort_rounds` values, and each sample's seed depends only on the base
/// seed, the pair, and the sample index, so statistics for the same cell
/// never move when other cells are added or the work is parallelized.
pub fn recovery_sweep(
    samples: usize,
    sizes: &[usize],
    g_values: &[GroupCount],
    sort_rounds_values: &[usize],
    base_seed: u64,
) -> Result<SweepReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "a sweep needs at least one sample per cell".into(),
        ));
    }
    if sizes.is_empty() || g_values.is_empty() || sort_rounds_values.is_empty() {
        return Err(Error::InvalidArgument(
            "a sweep needs at least one size, group count, and sort-round value".into(),
        ));
    }
    for &size in sizes {
        for &g in g_values {
            g.check_divides(size, "planted")?;
        }
    }

    let dist = ValueDist::default();
    let mut cells = Vec::new();
    for &size in sizes {
        for &g in g_values {
            let per_sample: Vec<Vec<f64>> = (0..samples)
                .into_par_iter()
                .map(|i| -> Result<Vec<f64>> {
                    let seed =
                        derive_seed(base_seed, &[size as u64, g.get() as u64, i as u64]);
                    let inst = generate_planted_instance(size, g, dist, seed)?;
                    sort_rounds_values
                        .iter()
                        .map(|&sort_rounds| {
                            let sol = solve_layer(&inst.matrix, g, &GreedyParams { sort_rounds })?;
                            Ok(sol.recovery_ratio)
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (j, &sort_rounds) in sort_rounds_values.iter().enumerate() {
                let mut histogram = vec![0u64; HISTOGRAM_BINS];
                let mut sum = 0.0;
                let mut fully_recovered = 0;
                for ratios in &per_sample {
                    let r = ratios[j];
                    sum += r;
                    if r >= 1.0 - FULL_RECOVERY_TOL {
                        fully_recovered += 1;
                    }
                    histogram[histogram_bin(r)] += 1;
                }
                cells.push(SweepCell {
                    size,
                    groups: g,
                    sort_rounds,
                    samples,
                    fully_recovered,
                    mean_ratio: sum / samples as f64,
                    histogram,
                });
            }
        }
    }
    Ok(SweepReport {
        generator: GENERATOR_ID.into(),
        base_seed,
        dist,
        samples_per_cell: samples,
        cells,
    })
}

// ---------------------------------------------------------------------------
// Improvement over the unsorted baseline
// ---------------------------------------------------------------------------

/// Recovery with and without sorting at one group count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub groups: GroupCount,
    /// Ratio with sorting disabled, pruning straight off the diagonal.
    pub plain_ratio: f64,
    pub sorted_ratio: f64,
    /// `sorted_ratio - plain_ratio`.
    pub improvement: f64,
}

/// Compares sorted recovery against the unsorted baseline for each group
/// count on one magnitude matrix.
pub fn improvement_report(
    m: &NormMatrix,
    g_values: &[GroupCount],
    sort_rounds: usize,
) -> Result<Vec<ImprovementRow>> {
    g_values
        .iter()
        .map(|&g| {
            let sorted = solve_layer(m, g, &GreedyParams { sort_rounds })?;
            let plain = solve_layer(m, g, &GreedyParams { sort_rounds: 0 })?;
            Ok(ImprovementRow {
                groups: g,
                plain_ratio: plain.recovery_ratio,
                sorted_ratio: sorted.recovery_ratio,
                improvement: sorted.recovery_ratio - plain.recovery_ratio,
            })
        })
        .collect()
}

/// Whole-model variant: layers are aggregated with each layer weighted by
/// its total magnitude, i.e. retained magnitude over total magnitude across
/// the model. Layers with no magnitude carry no weight; a model with no
/// magnitude at all counts as fully recovered either way.
pub fn weighted_improvement_report(
    layers: &[NormMatrix],
    g_values: &[GroupCount],
    sort_rounds: usize,
) -> Result<Vec<ImprovementRow>> {
    g_values
        .iter()
        .map(|&g| {
            let mut sorted_objective = 0.0;
            let mut plain_objective = 0.0;
            let mut total = 0.0;
            for m in layers {
                sorted_objective += solve_layer(m, g, &GreedyParams { sort_rounds })?.objective;
                plain_objective += solve_layer(m, g, &GreedyParams { sort_rounds: 0 })?.objective;
                total += m.total_sum();
            }
            let ratio = |objective: f64| {
                if total == 0.0 {
                    1.0
                } else {
                    (objective / total).clamp(0.0, 1.0)
                }
            };
            let plain_ratio = ratio(plain_objective);
            let sorted_ratio = ratio(sorted_objective);
            Ok(ImprovementRow {
                groups: g,
                plain_ratio,
                sorted_ratio,
                improvement: sorted_ratio - plain_ratio,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Adversarial search
// ---------------------------------------------------------------------------

/// A planted instance the greedy heuristic provably mishandles, with both
/// the greedy and the exhaustive solution attached.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialFinding {
    pub instance: PlantedInstance,
    pub trial: usize,
    pub greedy: PruneSolution,
    pub oracle: PruneSolution,
}

/// Outcome of an adversarial search. Exhausting the trial budget without a
/// hit is a result, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversarialSearch {
    Found(Box<AdversarialFinding>),
    NotFound { trials: usize },
}

/// Looks for a planted instance where the greedy pruner at ten sort rounds
/// falls short of the exhaustive optimum.
///
/// Odd trials use the staged two-spike construction, even trials a plain
/// random instance; the first hit in trial order is returned. Instances
/// must be small enough to check exhaustively.
pub fn find_adversarial_instance(
    channels: usize,
    groups: GroupCount,
    trials: usize,
    seed: u64,
) -> Result<AdversarialSearch> {
    let probe = NormMatrix::new(channels, channels, vec![0.0; channels * channels])?;
    let required = oracle_evaluations(&probe, groups)?;
    if required > DEFAULT_ORACLE_CAP as u128 {
        return Err(Error::EnumerationCap {
            required,
            cap: DEFAULT_ORACLE_CAP as u128,
        });
    }

    let dist = ValueDist::default();
    let can_spike = groups.get() >= 2 && channels / groups.get() >= 2;
    for trial in 0..trials {
        let trial_seed =
            derive_seed(seed, &[channels as u64, groups.get() as u64, trial as u64]);
        let instance = if trial % 2 == 1 && can_spike {
            spiked_instance(channels, groups, dist, trial_seed)?
        } else {
            generate_planted_instance(channels, groups, dist, trial_seed)?
        };
        let greedy = solve_layer(&instance.matrix, groups, &GreedyParams::default())?;
        if greedy.recovery_ratio >= 1.0 - FULL_RECOVERY_TOL {
            continue;
        }
        let oracle = brute_force_oracle(&instance.matrix, groups, DEFAULT_ORACLE_CAP)?;
        if greedy.objective < oracle.objective {
            return Ok(AdversarialSearch::Found(Box::new(AdversarialFinding {
                instance,
                trial,
                greedy,
                oracle,
            })));
        }
    }
    Ok(AdversarialSearch::NotFound { trials })
}
