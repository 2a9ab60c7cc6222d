//! Command-line surface: argument parsing, subcommand dispatch, and exit
//! codes. Results go to `--out` files or standard output; progress humans
//! read goes to standard error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{
    derive_seed, find_adversarial_instance, recovery_sweep, AdversarialSearch,
};
use crate::conv::{masked_forward, FeatureMap};
use crate::error::{Error, Result};
use crate::export::{
    export_grouped, export_sparse, grouped_forward, sparse_matvec, GroupedLayerExport,
    SparseLayerExport,
};
use crate::io::exports::{write_grouped_export, write_sparse_export};
use crate::io::manifest::{load_manifest, LoadedLayer, LoadedModel};
use crate::io::report::{
    report_to_string, write_report, write_sweep_csv, AdversarialReport, ConfigTotals, LayerResult,
    RunReport, VerifyReport,
};
use crate::model::{GroupCount, WeightTensor};
use crate::oracle::{brute_force_oracle, DEFAULT_ORACLE_CAP};
use crate::pruner::{prune_mask, solve_layer, GreedyParams, MaskPattern, PruneSolution};
use crate::search::{
    exhaustive_config_oracle, local_search, num_ops, num_params, BudgetConstraint, CostScale,
    GroupConfig, SearchDirection, SearchOptions, DEFAULT_CONFIG_CAP,
};

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "gprune",
    version,
    about = "Restructures dense convolutions into grouped form by optimizing channel permutations"
)]
struct Cli {
    /// Cap on worker threads (overrides GPRUNE_THREADS; default: machine
    /// parallelism). Results never depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one layer's channel permutations at a fixed group count.
    PruneLayer(PruneLayerArgs),
    /// Choose per-layer group counts under parameter/operation budgets.
    Search(SearchArgs),
    /// Exact brute-force reference for one layer or a whole configuration.
    Oracle(OracleArgs),
    /// Randomized studies of the solver.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Write a solved layer as grouped weight blocks or sparse rows.
    Export(ExportArgs),
    /// Check that every execution path of a pruned layer agrees.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct PruneLayerArgs {
    /// Model manifest to read.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Name of the layer within the manifest.
    #[arg(long, value_name = "NAME")]
    layer: String,
    /// Number of groups; must divide both channel counts.
    #[arg(long, value_name = "G")]
    groups: usize,
    /// Sorting rounds per block (0 keeps identity permutations).
    #[arg(long, value_name = "N", default_value_t = 10)]
    ns: usize,
    /// Report file (default: standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    /// Model manifest to read.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Largest allowed total parameter count.
    #[arg(long, value_name = "P")]
    max_params: Option<u64>,
    /// Largest allowed total operation count (one FMA counts as two).
    #[arg(long, value_name = "O")]
    max_ops: Option<u64>,
    /// Sorting rounds per block when costing each candidate.
    #[arg(long, value_name = "N", default_value_t = 10)]
    ns: usize,
    /// Which end of the candidate lists to start from.
    #[arg(long, value_enum, value_name = "DIR", default_value_t = DirectionArg::Densify)]
    direction: DirectionArg,
    /// Compare moves by raw discarded magnitude or relative to each
    /// layer's total.
    #[arg(long, value_enum, value_name = "SCALE", default_value_t = ScaleArg::Raw)]
    cost_scale: ScaleArg,
    /// Report file (default: standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Model manifest to read.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Name of the layer to solve exactly.
    #[arg(long, value_name = "NAME", required_unless_present = "config", conflicts_with = "config")]
    layer: Option<String>,
    /// Number of groups for the single-layer mode.
    #[arg(long, value_name = "G", required_unless_present = "config", conflicts_with = "config")]
    groups: Option<usize>,
    /// Enumerate whole group configurations instead of one layer's
    /// permutations.
    #[arg(long)]
    config: bool,
    /// Refuse instances needing more evaluations than this
    /// (default: 100000000 per layer, 1000000 configurations).
    #[arg(long, value_name = "N")]
    cap: Option<u64>,
    /// Configuration mode: largest allowed total parameter count.
    #[arg(long, value_name = "P", requires = "config")]
    max_params: Option<u64>,
    /// Configuration mode: largest allowed total operation count.
    #[arg(long, value_name = "O", requires = "config")]
    max_ops: Option<u64>,
    /// Configuration mode: sorting rounds used to cost each candidate.
    #[arg(long, value_name = "N", requires = "config")]
    ns: Option<usize>,
    /// Configuration mode: cost scale for the per-layer tables.
    #[arg(long, value_enum, value_name = "SCALE", requires = "config")]
    cost_scale: Option<ScaleArg>,
    /// Report file (default: standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Recovery-ratio statistics over freshly planted instances.
    Sweep(SweepArgs),
    /// Hunt for a planted instance the greedy solver fails on.
    Adversarial(AdversarialArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Planted instances per (size, groups, rounds) cell.
    #[arg(long, value_name = "N", default_value_t = 10000)]
    samples: usize,
    /// Channel counts to test, comma separated.
    #[arg(long, value_name = "C", value_delimiter = ',', default_value = "16")]
    size: Vec<usize>,
    /// Group counts to test, comma separated; each must divide every size.
    #[arg(long, value_name = "G", value_delimiter = ',', default_value = "4")]
    groups: Vec<usize>,
    /// Sorting-round settings to compare, comma separated.
    #[arg(long, value_name = "N", value_delimiter = ',', default_value = "0,1,2,5,10")]
    ns: Vec<usize>,
    /// Base seed; every statistic is reproducible from it.
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    /// Histogram CSV file (omitted when not given).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// JSON report file (default: standard output).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AdversarialArgs {
    /// Channel count of the planted instances.
    #[arg(long, value_name = "C", default_value_t = 4)]
    size: usize,
    /// Group count of the planted instances.
    #[arg(long, value_name = "G", default_value_t = 2)]
    groups: usize,
    /// Instances to try before giving up.
    #[arg(long, value_name = "N", default_value_t = 10000)]
    trials: usize,
    /// Base seed for the instance stream.
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    /// Report file (default: standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Model manifest to read; the chosen layer needs weight data.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Name of the layer to export.
    #[arg(long, value_name = "NAME")]
    layer: String,
    /// Number of groups.
    #[arg(long, value_name = "G")]
    groups: usize,
    /// Sorting rounds per block.
    #[arg(long, value_name = "N", default_value_t = 10)]
    ns: usize,
    /// grouped: per-group dense blocks; sparse: compressed rows of the
    /// retained kernels.
    #[arg(long, value_enum, value_name = "FORM")]
    format: FormatArg,
    /// Directory to write into (created if missing).
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Model manifest to read; the chosen layer needs weight data.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Name of the layer to check.
    #[arg(long, value_name = "NAME")]
    layer: String,
    /// Number of groups.
    #[arg(long, value_name = "G")]
    groups: usize,
    /// Sorting rounds per block.
    #[arg(long, value_name = "N", default_value_t = 10)]
    ns: usize,
    /// Random inputs to push through every execution path.
    #[arg(long, value_name = "N", default_value_t = 100)]
    cases: usize,
    /// Largest accepted relative error between any two paths.
    #[arg(long, value_name = "T", default_value_t = 1e-5)]
    tol: f64,
    /// Seed for the random inputs.
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    /// Report file (default: standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Densify,
    Sparsify,
}

impl From<DirectionArg> for SearchDirection {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Densify => SearchDirection::Densify,
            DirectionArg::Sparsify => SearchDirection::Sparsify,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Raw,
    Normalized,
}

impl From<ScaleArg> for CostScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Raw => CostScale::Raw,
            ScaleArg::Normalized => CostScale::Normalized,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Grouped,
    Sparse,
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parses `argv` and runs the requested subcommand, returning the process
/// exit code: 0 on success, 1 on validation or usage errors, 2 when a
/// budget is infeasible or an enumeration cap is exceeded.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(argv.iter().cloned()) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to standard output and count
            // as success; everything else is a usage error.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return code;
        }
    };
    configure_threads(cli.threads);
    match run(cli.command, command_echo(&argv)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gprune: {e}");
            e.exit_code()
        }
    }
}

/// The invocation echoed into reports, with the binary path canonicalized
/// to its plain name. `--threads` is dropped from the echo: it never
/// affects results, and keeping it out makes reports byte-identical across
/// thread counts.
fn command_echo(argv: &[OsString]) -> String {
    let mut parts: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    if !parts.is_empty() {
        parts[0] = "gprune".into();
    }
    let mut echoed = Vec::with_capacity(parts.len());
    let mut skip_value = false;
    for part in parts {
        if skip_value {
            skip_value = false;
            continue;
        }
        if part == "--threads" {
            skip_value = true;
            continue;
        }
        if part.starts_with("--threads=") {
            continue;
        }
        echoed.push(part);
    }
    echoed.join(" ")
}

/// Applies `--threads`, or `GPRUNE_THREADS` when the flag is absent. A pool
/// that is already running stays as it is: thread count never changes
/// results, so that is only worth a warning.
fn configure_threads(flag: Option<usize>) {
    let requested = flag.or_else(|| {
        std::env::var("GPRUNE_THREADS")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .filter(|&n| n > 0)
    });
    if let Some(n) = requested {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("gprune: thread pool already configured, ignoring --threads ({e})");
        }
    }
}

fn run(command: Command, echo: String) -> Result<()> {
    match command {
        Command::PruneLayer(a) => run_prune_layer(a, echo),
        Command::Search(a) => run_search(a, echo),
        Command::Oracle(a) => run_oracle(a, echo),
        Command::Bench(BenchCommand::Sweep(a)) => run_sweep(a, echo),
        Command::Bench(BenchCommand::Adversarial(a)) => run_adversarial(a, echo),
        Command::Export(a) => run_export(a),
        Command::Verify(a) => run_verify(a, echo),
    }
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

fn emit_report(out: Option<&Path>, report: &RunReport) -> Result<()> {
    match out {
        Some(path) => {
            write_report(path, report)?;
            eprintln!("report written to {}", path.display());
            Ok(())
        }
        None => {
            print!("{}", report_to_string(report)?);
            Ok(())
        }
    }
}

fn layer_result(
    layer: &LoadedLayer,
    groups: GroupCount,
    sol: &PruneSolution,
    cost: f64,
) -> Result<LayerResult> {
    Ok(LayerResult {
        layer: layer.spec.name.clone(),
        groups,
        objective: sol.objective,
        cost,
        recovery_ratio: sol.recovery_ratio,
        params: Some(num_params(&layer.spec, groups)?),
        ops: Some(num_ops(&layer.spec, groups)?),
        out_perm: Some(sol.perms.out_perm.clone()),
        in_perm: Some(sol.perms.in_perm.clone()),
    })
}

/// Rebuilds per-layer rows for a chosen configuration. Costs are recomputed
/// exactly as the search costed them, so the totals re-derive bit-for-bit.
fn config_report(
    echo: String,
    model: &LoadedModel,
    config: &GroupConfig,
    options: &SearchOptions,
) -> Result<RunReport> {
    let mut report = RunReport::new(echo);
    for (layer, &groups) in model.layers.iter().zip(&config.groups) {
        let sol = solve_layer(&layer.norms, groups, &options.greedy)?;
        let cost = match options.cost_scale {
            CostScale::Raw => sol.cost,
            CostScale::Normalized => {
                let total = layer.norms.total_sum();
                if total > 0.0 {
                    sol.cost / total
                } else {
                    0.0
                }
            }
        };
        report.layers.push(layer_result(layer, groups, &sol, cost)?);
    }
    report.totals = Some(ConfigTotals {
        params: config.total_params,
        ops: config.total_ops,
        cost: config.total_cost,
    });
    Ok(report)
}

fn weights_of<'l>(layer: &'l LoadedLayer, name: &str) -> Result<&'l WeightTensor> {
    layer.weights.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "layer {name:?} lists no data_file; this command needs the weights"
        ))
    })
}

fn group_summary(config: &GroupConfig) -> String {
    config
        .groups
        .iter()
        .map(|g| g.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run_prune_layer(a: PruneLayerArgs, echo: String) -> Result<()> {
    let model = load_manifest(&a.manifest)?;
    let layer = model.layer(&a.layer)?;
    let groups = GroupCount::new(a.groups)?;
    let sol = solve_layer(&layer.norms, groups, &GreedyParams { sort_rounds: a.ns })?;
    eprintln!(
        "layer {:?} at G={groups}: objective {}, recovery ratio {:.6}",
        a.layer, sol.objective, sol.recovery_ratio
    );
    let mut report = RunReport::new(echo);
    report.layers.push(layer_result(layer, groups, &sol, sol.cost)?);
    emit_report(a.out.as_deref(), &report)
}

fn run_search(a: SearchArgs, echo: String) -> Result<()> {
    let model = load_manifest(&a.manifest)?;
    let budget = BudgetConstraint {
        max_params: a.max_params,
        max_ops: a.max_ops,
    };
    let options = SearchOptions {
        direction: a.direction.into(),
        cost_scale: a.cost_scale.into(),
        greedy: GreedyParams { sort_rounds: a.ns },
    };
    let config = local_search(&model.search_input(), &budget, &options)?;
    eprintln!(
        "chose G=[{}]: {} parameters, {} operations, cost {}",
        group_summary(&config),
        config.total_params,
        config.total_ops,
        config.total_cost
    );
    let report = config_report(echo, &model, &config, &options)?;
    emit_report(a.out.as_deref(), &report)
}

fn run_oracle(a: OracleArgs, echo: String) -> Result<()> {
    let model = load_manifest(&a.manifest)?;
    if a.config {
        let budget = BudgetConstraint {
            max_params: a.max_params,
            max_ops: a.max_ops,
        };
        let options = SearchOptions {
            direction: SearchDirection::Densify,
            cost_scale: a.cost_scale.unwrap_or(ScaleArg::Raw).into(),
            greedy: GreedyParams {
                sort_rounds: a.ns.unwrap_or(10),
            },
        };
        let cap = a.cap.unwrap_or(DEFAULT_CONFIG_CAP);
        let config = exhaustive_config_oracle(&model.search_input(), &budget, &options, cap)?;
        eprintln!(
            "optimum G=[{}]: {} parameters, {} operations, cost {}",
            group_summary(&config),
            config.total_params,
            config.total_ops,
            config.total_cost
        );
        let report = config_report(echo, &model, &config, &options)?;
        return emit_report(a.out.as_deref(), &report);
    }

    let name = a.layer.as_deref().expect("clap enforces --layer without --config");
    let layer = model.layer(name)?;
    let groups = GroupCount::new(a.groups.expect("clap enforces --groups without --config"))?;
    let cap = a.cap.unwrap_or(DEFAULT_ORACLE_CAP);
    let sol = brute_force_oracle(&layer.norms, groups, cap)?;
    eprintln!(
        "layer {name:?} at G={groups}: exact objective {}, recovery ratio {:.6}",
        sol.objective, sol.recovery_ratio
    );
    let mut report = RunReport::new(echo);
    report.layers.push(layer_result(layer, groups, &sol, sol.cost)?);
    emit_report(a.out.as_deref(), &report)
}

fn run_sweep(a: SweepArgs, echo: String) -> Result<()> {
    let groups = a
        .groups
        .iter()
        .map(|&g| GroupCount::new(g))
        .collect::<Result<Vec<_>>>()?;
    let sweep = recovery_sweep(a.samples, &a.size, &groups, &a.ns, a.seed)?;
    for cell in &sweep.cells {
        eprintln!(
            "c={} G={} n_s={}: {:.1}% fully recovered, mean ratio {:.4}",
            cell.size,
            cell.groups,
            cell.sort_rounds,
            cell.full_fraction() * 100.0,
            cell.mean_ratio
        );
    }
    if let Some(csv) = &a.out {
        write_sweep_csv(csv, &sweep)?;
        eprintln!("histograms written to {}", csv.display());
    }
    let mut report = RunReport::new(echo);
    report.seed = Some(a.seed);
    report.sweep = Some(sweep);
    emit_report(a.report.as_deref(), &report)
}

fn run_adversarial(a: AdversarialArgs, echo: String) -> Result<()> {
    let groups = GroupCount::new(a.groups)?;
    let search = find_adversarial_instance(a.size, groups, a.trials, a.seed)?;
    match &search {
        AdversarialSearch::Found(f) => eprintln!(
            "trial {} failed the solver: greedy ratio {:.6} vs exact {:.6}",
            f.trial, f.greedy.recovery_ratio, f.oracle.recovery_ratio
        ),
        AdversarialSearch::NotFound { trials } => {
            eprintln!("no adversarial instance among {trials} trials")
        }
    }
    let mut report = RunReport::new(echo);
    report.seed = Some(a.seed);
    report.adversarial = Some(AdversarialReport::from_search(
        a.size, groups, a.trials, &search,
    ));
    emit_report(a.out.as_deref(), &report)
}

fn run_export(a: ExportArgs) -> Result<()> {
    let model = load_manifest(&a.manifest)?;
    let layer = model.layer(&a.layer)?;
    let w = weights_of(layer, &a.layer)?;
    let groups = GroupCount::new(a.groups)?;
    let sol = solve_layer(&layer.norms, groups, &GreedyParams { sort_rounds: a.ns })?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    match a.format {
        FormatArg::Grouped => {
            let e = export_grouped(w, &sol.perms, groups)?;
            write_grouped_export(&a.out_dir, &e)?;
            eprintln!(
                "wrote {} blocks of ({}, {}, {}, {}) to {}",
                e.groups(),
                e.block_c_out(),
                e.block_c_in(),
                e.k_h(),
                e.k_w(),
                a.out_dir.display()
            );
        }
        FormatArg::Sparse => {
            let mask = prune_mask(w.c_out(), w.c_in(), groups, &sol.perms)?;
            let e = export_sparse(w, &mask, true)?;
            write_sparse_export(&a.out_dir, &e)?;
            eprintln!(
                "wrote {} kernels in compressed rows to {}",
                e.nnz(),
                a.out_dir.display()
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// Zeroes out every kernel the mask drops, by pure copying.
fn apply_mask(w: &WeightTensor, mask: &MaskPattern) -> WeightTensor {
    let ksize = w.k_h() * w.k_w();
    let mut data = vec![0.0; w.c_out() * w.c_in() * ksize];
    for f in 0..w.c_out() {
        for c in 0..w.c_in() {
            if mask.at(f, c) {
                let dst = (f * w.c_in() + c) * ksize;
                data[dst..dst + ksize].copy_from_slice(w.kernel(f, c));
            }
        }
    }
    WeightTensor::new(w.c_out(), w.c_in(), w.k_h(), w.k_w(), data)
        .expect("masking preserves shape and finiteness")
}

fn bits_equal(a: &WeightTensor, b: &WeightTensor) -> bool {
    a.values().len() == b.values().len()
        && a.values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Largest elementwise relative difference, with agreement on exact zeros
/// counting as zero error.
fn max_rel_err(a: &FeatureMap, b: &FeatureMap) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| {
            let denom = x.abs().max(y.abs());
            if denom == 0.0 {
                0.0
            } else {
                (x - y).abs() / denom
            }
        })
        .fold(0.0, f64::max)
}

fn random_input(channels: usize, height: usize, width: usize, rng: &mut ChaCha8Rng) -> FeatureMap {
    let data = (0..channels * height * width)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    FeatureMap::new(channels, height, width, data).expect("dimensions checked by the caller")
}

struct VerifyOutcome {
    max_rel_err: f64,
    sparse_cases: usize,
}

/// Pushes `cases` random inputs through the masked dense path, the grouped
/// path, and (for 1x1 kernels) the sparse path, tracking the worst
/// disagreement.
fn equivalence_cases(
    w: &WeightTensor,
    mask: &MaskPattern,
    grouped: &GroupedLayerExport,
    sparse: Option<&SparseLayerExport>,
    spec_h: usize,
    spec_w: usize,
    cases: usize,
    seed: u64,
) -> Result<VerifyOutcome> {
    let square = w.k_h() == w.k_w();
    let padding = if square { w.k_h() / 2 } else { 0 };
    let height = if square { spec_h.max(1) } else { spec_h.max(w.k_h()) };
    let width = if square { spec_w.max(1) } else { spec_w.max(w.k_w()) };
    let mut worst = 0.0f64;
    let mut sparse_cases = 0;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[case as u64]));
        let x = random_input(w.c_in(), height, width, &mut rng);
        let y_masked = masked_forward(&x, w, mask, padding)?;
        let y_grouped = grouped_forward(&x, grouped, padding)?;
        worst = worst.max(max_rel_err(&y_masked, &y_grouped));
        if let Some(e) = sparse {
            let y_sparse = sparse_matvec(e, &x)?;
            worst = worst.max(max_rel_err(&y_masked, &y_sparse));
            sparse_cases += 1;
        }
    }
    Ok(VerifyOutcome {
        max_rel_err: worst,
        sparse_cases,
    })
}

fn run_verify(a: VerifyArgs, echo: String) -> Result<()> {
    let model = load_manifest(&a.manifest)?;
    let layer = model.layer(&a.layer)?;
    let w = weights_of(layer, &a.layer)?;
    let groups = GroupCount::new(a.groups)?;
    let sol = solve_layer(&layer.norms, groups, &GreedyParams { sort_rounds: a.ns })?;
    let mask = prune_mask(w.c_out(), w.c_in(), groups, &sol.perms)?;
    let grouped = export_grouped(w, &sol.perms, groups)?;
    let sparse = if w.k_h() == 1 && w.k_w() == 1 {
        Some(export_sparse(w, &mask, true)?)
    } else {
        None
    };

    let reassembly_exact = bits_equal(&grouped.reassemble(), &apply_mask(w, &mask));
    let outcome = equivalence_cases(
        w,
        &mask,
        &grouped,
        sparse.as_ref(),
        layer.spec.h_out,
        layer.spec.w_out,
        a.cases,
        a.seed,
    )?;
    let passed = reassembly_exact && outcome.max_rel_err <= a.tol;
    eprintln!(
        "layer {:?} at G={groups}: {} cases, max relative error {:e}, reassembly {}",
        a.layer,
        a.cases,
        outcome.max_rel_err,
        if reassembly_exact { "bit-exact" } else { "MISMATCHED" }
    );

    let verify = VerifyReport {
        layer: a.layer.clone(),
        groups,
        cases: a.cases,
        tolerance: a.tol,
        max_rel_err: outcome.max_rel_err,
        sparse_cases: outcome.sparse_cases,
        reassembly_exact,
        passed,
    };
    let mut report = RunReport::new(echo);
    report.seed = Some(a.seed);
    report.verify = Some(verify);
    emit_report(a.out.as_deref(), &report)?;

    if !passed {
        return Err(Error::InvalidArgument(format!(
            "equivalence check failed: max relative error {:e} against tolerance {:e}",
            outcome.max_rel_err, a.tol
        )));
    }
    Ok(())
}
