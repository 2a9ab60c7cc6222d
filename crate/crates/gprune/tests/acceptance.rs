//! The acceptance suite: ten end-to-end checks, one per numbered criterion.
//! Each prints a single `criterion N: PASS/FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture` to see every line.
//!
//! Thresholds marked "frozen" were measured in one calibration run of this
//! suite and pinned; the generators are fully seeded, so reruns reproduce
//! the measurements bit-for-bit.

mod common;

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dir_contents, gprune, gprune_in, stderr_of, write_model};
use gprune::bench::{
    derive_seed, generate_planted_instance, recovery_sweep, SweepReport, ValueDist,
    FULL_RECOVERY_TOL,
};
use gprune::conv::{masked_forward, FeatureMap};
use gprune::export::{export_grouped, export_sparse, grouped_forward, sparse_matvec};
use gprune::oracle::{brute_force_oracle, DEFAULT_ORACLE_CAP};
use gprune::search::{
    exhaustive_config_oracle, group_candidates, local_search, num_ops, num_params,
    BudgetConstraint, SearchOptions, DEFAULT_CONFIG_CAP,
};
use gprune::{
    prune_mask, solve_layer, GreedyParams, GroupCount, LayerSpec, NormMatrix, Permutation,
    PermutationPair, WeightTensor,
};

fn g(n: usize) -> GroupCount {
    GroupCount::new(n).unwrap()
}

fn conclude(n: usize, what: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("criterion {n}: PASS - {what}");
    } else {
        println!("criterion {n}: FAIL - {what}");
        panic!(
            "criterion {n} failed ({} problem{}):\n{}",
            failures.len(),
            if failures.len() == 1 { "" } else { "s" },
            failures.join("\n")
        );
    }
}

macro_rules! check {
    ($failures:expr, $cond:expr, $($msg:tt)*) => {
        if !$cond {
            $failures.push(format!($($msg)*));
        }
    };
}

// ---------------------------------------------------------------------------
// 1. Exact permutation semantics
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_permutation_pair_reproduces_the_indexed_example() {
    let mut failures = Vec::new();

    // Position-encoded entries: original (r, c) holds 10(r+1) + (c+1), so
    // every value names its own coordinates and the expectation can be
    // written out symbol for symbol.
    let m = NormMatrix::from_rows(&[&[11., 12., 13.], &[21., 22., 23.], &[31., 32., 33.]]).unwrap();
    let perms = PermutationPair::new(
        Permutation::new(vec![2, 0, 1]).unwrap(),
        Permutation::new(vec![1, 2, 0]).unwrap(),
    );
    let p = m.permuted(&perms).unwrap();
    let expected = [[32., 33., 31.], [12., 13., 11.], [22., 23., 21.]];
    for (f, row) in expected.iter().enumerate() {
        for (c, &want) in row.iter().enumerate() {
            check!(failures, p.at(f, c) == want, "norm ({f},{c}): {} != {want}", p.at(f, c));
        }
    }

    // The same gather on a weight tensor, kernel by kernel.
    let data: Vec<f64> = (0..3).flat_map(|f| (0..3).map(move |c| (10 * (f + 1) + c + 1) as f64)).collect();
    let w = WeightTensor::new(3, 3, 1, 1, data).unwrap();
    let pw = w.permuted(&perms).unwrap();
    for (f, row) in expected.iter().enumerate() {
        for (c, &want) in row.iter().enumerate() {
            check!(failures, pw.at(f, c, 0, 0) == want, "weight ({f},{c}) mismatch");
        }
    }

    conclude(1, "a permutation pair gathers rows and columns exactly as indexed", failures);
}

// ---------------------------------------------------------------------------
// 2 and 3 share one seeded sweep: 10,000 planted 16-channel instances at
// G=4, solved at every sort-round setting.
// ---------------------------------------------------------------------------

static SWEEP: OnceLock<SweepReport> = OnceLock::new();

fn shared_sweep() -> &'static SweepReport {
    SWEEP.get_or_init(|| recovery_sweep(10_000, &[16], &[g(4)], &[0, 1, 2, 5, 10], 2).unwrap())
}

#[test]
fn criterion_02_planted_instances_mostly_recover_in_full() {
    let mut failures = Vec::new();
    let sweep = shared_sweep();
    let plain = &sweep.cells[0];
    let sorted = &sweep.cells[4];
    assert_eq!((plain.sort_rounds, sorted.sort_rounds), (0, 10));

    // Calibration measured 8324/10000 fully recovered, the same count at
    // ratio >= 0.9, and means 0.2508 (plain) vs 0.9608 (sorted); frozen
    // floors leave a little room under the measurements.
    let at_least_09: u64 = sorted.histogram[18..].iter().sum();
    check!(
        failures,
        sorted.fully_recovered >= 5_000,
        "only {}/10000 samples fully recovered",
        sorted.fully_recovered
    );
    check!(
        failures,
        at_least_09 >= 8_300,
        "only {at_least_09}/10000 samples reached a 0.9 ratio"
    );
    check!(
        failures,
        sorted.mean_ratio - plain.mean_ratio >= 0.05,
        "sorting lifted the mean by only {}",
        sorted.mean_ratio - plain.mean_ratio
    );

    conclude(
        2,
        "10,000 planted 16-channel instances: most recover fully, sorting lifts the mean",
        failures,
    );
}

#[test]
fn criterion_03_mean_recovery_never_drops_as_sorting_rounds_grow() {
    let mut failures = Vec::new();
    let sweep = shared_sweep();
    for pair in sweep.cells.windows(2) {
        check!(
            failures,
            pair[1].mean_ratio >= pair[0].mean_ratio - 1e-9,
            "mean fell from {} (ns={}) to {} (ns={})",
            pair[0].mean_ratio,
            pair[0].sort_rounds,
            pair[1].mean_ratio,
            pair[1].sort_rounds
        );
    }
    conclude(
        3,
        "mean recovery over the shared sample set is non-decreasing in sort rounds",
        failures,
    );
}

// ---------------------------------------------------------------------------
// 4. The exhaustive oracle dominates the greedy solver
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_the_oracle_never_loses_and_planted_instances_usually_tie() {
    let mut failures = Vec::new();
    let params = GreedyParams { sort_rounds: 10 };

    for i in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(4, &[1, i]));
        let values: Vec<f64> = (0..36).map(|_| rng.random_range(0.05..2.0)).collect();
        let m = NormMatrix::new(6, 6, values).unwrap();
        let greedy = solve_layer(&m, g(2), &params).unwrap();
        let oracle = brute_force_oracle(&m, g(2), DEFAULT_ORACLE_CAP).unwrap();
        check!(
            failures,
            greedy.objective <= oracle.objective,
            "random instance {i}: greedy {} beat the oracle {}",
            greedy.objective,
            oracle.objective
        );
    }

    let mut equal = 0usize;
    for i in 0..200u64 {
        let inst =
            generate_planted_instance(6, g(2), ValueDist::default(), derive_seed(4, &[2, i]))
                .unwrap();
        let greedy = solve_layer(&inst.matrix, g(2), &params).unwrap();
        let oracle = brute_force_oracle(&inst.matrix, g(2), DEFAULT_ORACLE_CAP).unwrap();
        check!(
            failures,
            greedy.objective <= oracle.objective,
            "planted instance {i}: greedy {} beat the oracle {}",
            greedy.objective,
            oracle.objective
        );
        if greedy.objective == oracle.objective {
            equal += 1;
        }
    }
    // Frozen: calibration measured 199 of 200 exact ties.
    check!(failures, equal >= 199, "greedy tied the oracle on only {equal}/200 planted instances");

    conclude(
        4,
        "greedy never exceeds the brute-force objective; planted 6x6 instances tie 199/200",
        failures,
    );
}

// ---------------------------------------------------------------------------
// 5. An adversarial instance exists, and its fixture replays exactly
// ---------------------------------------------------------------------------

/// Frozen from `bench adversarial --size 4 --groups 2 --seed 0`, which hits
/// this spiked instance at trial 1.
const ADVERSARIAL_MATRIX: [f64; 16] = [
    0.0,
    0.6914257240816641,
    1.1960822886932216,
    0.0,
    1.1525649084492673,
    0.0,
    0.0,
    0.812594792946544,
    0.0,
    17.326548964384425,
    0.7176141398765594,
    0.0,
    1.2585793740638986,
    0.0,
    0.0,
    9.4446747389248,
];
const ADVERSARIAL_GREEDY_OBJECTIVE: f64 = 29.119870900451712;
const ADVERSARIAL_ORACLE_OBJECTIVE: f64 = 32.60008493142038;

#[test]
fn criterion_05_an_adversarial_instance_exists_and_replays() {
    let mut failures = Vec::new();

    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("adv.json");
    let out = gprune(&[
        "bench",
        "adversarial",
        "--size",
        "4",
        "--groups",
        "2",
        "--trials",
        "10000",
        "--seed",
        "0",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    check!(failures, out.status.success(), "the search exited with {:?}", out.status.code());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    let adv = &report["adversarial"];
    check!(failures, adv["found"] == true, "no instance found in 10000 trials");
    check!(failures, adv["trial"] == 1, "found at trial {}, fixture frozen from trial 1", adv["trial"]);
    let greedy_ratio = adv["greedy"]["recovery_ratio"].as_f64().unwrap_or(f64::NAN);
    let oracle_ratio = adv["oracle"]["recovery_ratio"].as_f64().unwrap_or(f64::NAN);
    check!(failures, greedy_ratio < 1.0 - FULL_RECOVERY_TOL, "greedy ratio {greedy_ratio} is not a failure");
    check!(failures, oracle_ratio >= 1.0 - FULL_RECOVERY_TOL, "oracle ratio {oracle_ratio} should be full");

    // Replaying the frozen fixture must reproduce both objectives exactly.
    let m = NormMatrix::new(4, 4, ADVERSARIAL_MATRIX.to_vec()).unwrap();
    let greedy = solve_layer(&m, g(2), &GreedyParams { sort_rounds: 10 }).unwrap();
    let oracle = brute_force_oracle(&m, g(2), DEFAULT_ORACLE_CAP).unwrap();
    check!(
        failures,
        greedy.objective == ADVERSARIAL_GREEDY_OBJECTIVE,
        "greedy objective drifted: {:?}",
        greedy.objective
    );
    check!(
        failures,
        oracle.objective == ADVERSARIAL_ORACLE_OBJECTIVE,
        "oracle objective drifted: {:?}",
        oracle.objective
    );
    check!(failures, greedy.objective < oracle.objective, "the fixture is no longer adversarial");

    conclude(
        5,
        "a 4-channel instance beats the greedy solver and its frozen fixture replays bit-for-bit",
        failures,
    );
}

// ---------------------------------------------------------------------------
// 6. All execution paths of a pruned layer agree
// ---------------------------------------------------------------------------

fn masked_copy(w: &WeightTensor, mask: &gprune::MaskPattern) -> WeightTensor {
    let mut data = Vec::with_capacity(w.values().len());
    for f in 0..w.c_out() {
        for c in 0..w.c_in() {
            if mask.at(f, c) {
                data.extend_from_slice(w.kernel(f, c));
            } else {
                data.extend(std::iter::repeat_n(0.0, w.k_h() * w.k_w()));
            }
        }
    }
    WeightTensor::new(w.c_out(), w.c_in(), w.k_h(), w.k_w(), data).unwrap()
}

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

#[test]
fn criterion_06_the_equivalence_triangle_holds_on_100_random_layers() {
    let mut failures = Vec::new();
    let channel_choices = [4usize, 8, 16, 24, 32];

    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(6, &[i]));
        let groups = if rng.random_bool(0.5) { g(2) } else { g(4) };
        let c_in = channel_choices[rng.random_range(0..channel_choices.len())];
        let c_out = channel_choices[rng.random_range(0..channel_choices.len())];
        let k = if i % 2 == 0 { 1 } else { 3 };
        let data: Vec<f64> = (0..c_out * c_in * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = WeightTensor::new(c_out, c_in, k, k, data).unwrap();

        let sol = solve_layer(&w.norm_matrix(), groups, &GreedyParams::default()).unwrap();
        let mask = prune_mask(c_out, c_in, groups, &sol.perms).unwrap();
        let e = export_grouped(&w, &sol.perms, groups).unwrap();

        if e.reassemble().values() != masked_copy(&w, &mask).values() {
            failures.push(format!("layer {i}: reassembly is not bit-exact"));
            continue;
        }

        let x_data: Vec<f64> = (0..c_in * 36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = FeatureMap::new(c_in, 6, 6, x_data).unwrap();
        let masked = masked_forward(&x, &w, &mask, k / 2).unwrap();
        let grouped = grouped_forward(&x, &e, k / 2).unwrap();
        let err = max_rel_err(&masked, &grouped);
        check!(failures, err <= 1e-5, "layer {i}: grouped path off by {err}");

        if k == 1 {
            let sparse = export_sparse(&w, &mask, true).unwrap();
            let via_rows = sparse_matvec(&sparse, &x).unwrap();
            let err = max_rel_err(&masked, &via_rows);
            check!(failures, err <= 1e-5, "layer {i}: sparse path off by {err}");
        }
    }

    conclude(
        6,
        "masked, grouped, and sparse execution agree on 100 random layers; reassembly is exact",
        failures,
    );
}

// ---------------------------------------------------------------------------
// 7. Masks are always regular
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_masks_keep_the_exact_block_budget_everywhere() {
    let mut failures = Vec::new();

    for i in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(7, &[i]));
        let groups = if rng.random_bool(0.5) { g(2) } else { g(4) };
        let c_out = groups.get() * rng.random_range(1..=8usize);
        let c_in = groups.get() * rng.random_range(1..=8usize);
        let mut out_perm: Vec<usize> = (0..c_out).collect();
        out_perm.shuffle(&mut rng);
        let mut in_perm: Vec<usize> = (0..c_in).collect();
        in_perm.shuffle(&mut rng);
        let perms = PermutationPair::new(
            Permutation::new(out_perm).unwrap(),
            Permutation::new(in_perm).unwrap(),
        );

        let mask = prune_mask(c_out, c_in, groups, &perms).unwrap();
        for f in 0..c_out {
            let kept = (0..c_in).filter(|&c| mask.at(f, c)).count();
            check!(
                failures,
                kept == c_in / groups.get(),
                "combo {i}: row {f} keeps {kept}, not {}",
                c_in / groups.get()
            );
        }
        for c in 0..c_in {
            let kept = (0..c_out).filter(|&f| mask.at(f, c)).count();
            check!(
                failures,
                kept == c_out / groups.get(),
                "combo {i}: column {c} keeps {kept}, not {}",
                c_out / groups.get()
            );
        }
    }

    conclude(
        7,
        "1,000 random masks keep exactly c_in/G kernels per row and c_out/G per column",
        failures,
    );
}

// ---------------------------------------------------------------------------
// 8. Parameter and operation counts match naive loop counting
// ---------------------------------------------------------------------------

fn params_by_loop(spec: &LayerSpec, groups: usize) -> u64 {
    let mut n = 0u64;
    for _f in 0..spec.c_out {
        for _c in 0..spec.c_in / groups {
            for _t in 0..spec.k_h * spec.k_w {
                n += 1;
            }
        }
    }
    n
}

fn ops_by_loop(spec: &LayerSpec, groups: usize) -> u64 {
    let mut n = 0u64;
    for _p in 0..spec.h_out * spec.w_out {
        for _f in 0..spec.c_out {
            for _c in 0..spec.c_in / groups {
                for _t in 0..spec.k_h * spec.k_w {
                    n += 2; // one multiply and one add per tap
                }
            }
        }
    }
    n
}

#[test]
fn criterion_08_budget_arithmetic_matches_loop_oracles_on_ten_layers() {
    let mut failures = Vec::new();
    let fixture = [
        ("a", 3usize, 6usize, 1usize, 1usize, 8usize, 8usize),
        ("b", 4, 4, 3, 3, 7, 7),
        ("c", 8, 16, 3, 3, 14, 14),
        ("d", 16, 8, 1, 1, 28, 28),
        ("e", 12, 18, 3, 1, 9, 11),
        ("f", 5, 7, 1, 3, 6, 6),
        ("g", 16, 16, 5, 5, 4, 4),
        ("h", 24, 32, 3, 3, 7, 7),
        ("i", 9, 27, 1, 1, 3, 3),
        ("j", 32, 32, 1, 1, 56, 56),
    ];

    for (name, c_in, c_out, k_h, k_w, h_out, w_out) in fixture {
        let spec = LayerSpec::new(name, c_in, c_out, k_h, k_w, h_out, w_out).unwrap();
        for groups in group_candidates(c_in, c_out).unwrap() {
            let params = num_params(&spec, groups).unwrap();
            let ops = num_ops(&spec, groups).unwrap();
            check!(
                failures,
                params == params_by_loop(&spec, groups.get()),
                "layer {name} at G={groups}: {params} params vs loop {}",
                params_by_loop(&spec, groups.get())
            );
            check!(
                failures,
                ops == ops_by_loop(&spec, groups.get()),
                "layer {name} at G={groups}: {ops} ops vs loop {}",
                ops_by_loop(&spec, groups.get())
            );
        }
    }

    conclude(
        8,
        "num_params and num_ops match element-counting loops at every candidate group count",
        failures,
    );
}

// ---------------------------------------------------------------------------
// 9. The budgeted search is sound against its exhaustive reference
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_densify_is_feasible_and_never_beats_the_config_oracle() {
    let mut failures = Vec::new();
    let mut equal = 0usize;

    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(9, &[i]));
        let channel_choices = [4usize, 8, 12, 16];
        let mut specs = Vec::new();
        let mut norms = Vec::new();
        for l in 0..3 {
            let c_in = channel_choices[rng.random_range(0..channel_choices.len())];
            let c_out = channel_choices[rng.random_range(0..channel_choices.len())];
            let k = if rng.random_bool(0.5) { 1 } else { 3 };
            let h = rng.random_range(4..9usize);
            let w = rng.random_range(4..9usize);
            specs.push(LayerSpec::new(format!("l{l}"), c_in, c_out, k, k, h, w).unwrap());
            let values: Vec<f64> =
                (0..c_out * c_in).map(|_| rng.random_range(0.05..2.0)).collect();
            norms.push(NormMatrix::new(c_out, c_in, values).unwrap());
        }

        // Budgets drawn between the most grouped and the dense extremes, so
        // the grouped floor is always feasible.
        let mut min_params = 0u64;
        let mut max_params = 0u64;
        let mut min_ops = 0u64;
        let mut max_ops = 0u64;
        for spec in &specs {
            let candidates = group_candidates(spec.c_in, spec.c_out).unwrap();
            min_params += num_params(spec, candidates[0]).unwrap();
            max_params += num_params(spec, *candidates.last().unwrap()).unwrap();
            min_ops += num_ops(spec, candidates[0]).unwrap();
            max_ops += num_ops(spec, *candidates.last().unwrap()).unwrap();
        }
        let budget = BudgetConstraint {
            max_params: Some(rng.random_range(min_params..=max_params)),
            max_ops: if i % 3 == 0 {
                None
            } else {
                Some(rng.random_range(min_ops..=max_ops))
            },
        };

        let layers: Vec<(&LayerSpec, &NormMatrix)> = specs.iter().zip(norms.iter()).collect();
        let options = SearchOptions::default();
        let found = local_search(&layers, &budget, &options).unwrap();
        let best = exhaustive_config_oracle(&layers, &budget, &options, DEFAULT_CONFIG_CAP).unwrap();

        check!(
            failures,
            budget.satisfied_by(found.total_params, found.total_ops),
            "fixture {i}: densify broke its budget ({} params, {} ops)",
            found.total_params,
            found.total_ops
        );
        check!(
            failures,
            found.total_cost >= best.total_cost,
            "fixture {i}: densify cost {} undercuts the oracle's {}",
            found.total_cost,
            best.total_cost
        );
        if found.total_cost == best.total_cost {
            equal += 1;
        }
    }

    // Frozen: calibration measured exactly 12 of 50 fixtures where the
    // local search lands on the optimum.
    check!(failures, equal == 12, "densify matched the oracle on {equal}/50 fixtures, frozen at 12");

    conclude(
        9,
        "densify stays within budget, never undercuts the exhaustive optimum, and ties on 12/50",
        failures,
    );
}

// ---------------------------------------------------------------------------
// 10. Byte-level determinism of the command-line tool
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_every_command_is_byte_reproducible_across_thread_counts() {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_model(dir.path());
    let m = manifest.to_str().unwrap().to_string();

    // Output paths are relative and identical across runs; only the working
    // directory differs, so the echoed command lines match byte for byte.
    let commands: Vec<Vec<&str>> = vec![
        vec!["prune-layer", "--manifest", m.as_str(), "--layer", "conv3", "--groups", "4", "--out", "prune.json"],
        vec!["search", "--manifest", m.as_str(), "--max-params", "300", "--out", "search.json"],
        vec!["oracle", "--manifest", m.as_str(), "--layer", "conv1", "--groups", "2", "--out", "oracle.json"],
        vec!["oracle", "--manifest", m.as_str(), "--config", "--max-params", "300", "--out", "oracle_config.json"],
        vec!["bench", "sweep", "--samples", "60", "--size", "8", "--groups", "2", "--ns", "0,2", "--seed", "3", "--out", "sweep.csv", "--report", "sweep.json"],
        vec!["bench", "adversarial", "--size", "4", "--groups", "2", "--trials", "300", "--seed", "1", "--out", "adv.json"],
        vec!["export", "--manifest", m.as_str(), "--layer", "conv3", "--groups", "2", "--format", "grouped", "--out-dir", "grouped"],
        vec!["export", "--manifest", m.as_str(), "--layer", "conv1", "--groups", "2", "--format", "sparse", "--out-dir", "sparse"],
        vec!["verify", "--manifest", m.as_str(), "--layer", "conv3", "--groups", "2", "--cases", "10", "--seed", "5", "--out", "verify.json"],
    ];

    let run_all = |out_dir: &std::path::Path, threads: &str| {
        std::fs::create_dir_all(out_dir).unwrap();
        for argv in &commands {
            let mut full: Vec<&str> = vec!["--threads", threads];
            full.extend(argv);
            let out = gprune_in(out_dir, &full);
            assert!(
                out.status.success(),
                "{argv:?} with --threads {threads}: {}",
                stderr_of(&out)
            );
        }
    };

    let dir_a = dir.path().join("a");
    let dir_b = dir.path().join("b");
    run_all(&dir_a, "1");
    run_all(&dir_b, "3");

    let a = dir_contents(&dir_a);
    let b = dir_contents(&dir_b);
    check!(
        failures,
        a.iter().map(|(p, _)| p).eq(b.iter().map(|(p, _)| p)),
        "the two runs produced different file sets"
    );
    for ((path, bytes_a), (_, bytes_b)) in a.iter().zip(&b) {
        check!(failures, bytes_a == bytes_b, "{path} differs between thread counts");
    }
    check!(failures, !a.is_empty(), "no output files were produced");

    // Reports on standard output are covered too.
    let stdout_args = ["prune-layer", "--manifest", m.as_str(), "--layer", "conv1", "--groups", "2"];
    let first = gprune(&stdout_args);
    let second = gprune(&stdout_args);
    check!(failures, first.stdout == second.stdout, "stdout reports differ between reruns");

    conclude(
        10,
        "rerunning every subcommand under different thread caps reproduces identical bytes",
        failures,
    );
}
