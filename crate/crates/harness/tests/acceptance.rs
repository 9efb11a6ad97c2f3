//! Acceptance criteria on the simulated 5-DOF arm. Prints one line per
//! criterion. Criteria listed in `KNOWN_UNMET` are expected to fail; the
//! target fails if the set of failing criteria differs from that list.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reach_core::codec::{self, Architecture, Autoencoder, NormStats};
use reach_core::metrics::{self, MetricReport};
use reach_core::neural_map::{NeuralMap, ResolutionVector};
use reach_core::planner::{self, PlannerConfig, PlannerState};
use reach_harness::config::ExperimentConfig;
use reach_harness::pipeline;
use reach_harness::sweep::{self, SweepContext, SweepKind, SweepResult};

/// Criteria that do not hold on this arm; see the README.
const KNOWN_UNMET: [u8; 5] = [3, 4, 5, 6, 7];

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn numeric_gradient(model: &Autoencoder<f64>, batch: &[Vec<f64>], h: f64) -> Vec<f64> {
    let base = model.flat_parameters();
    let mut probe = model.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_flat_parameters(&p).unwrap();
            let up = codec::loss_and_gradients(&probe, batch).unwrap().0;
            p[i] = base[i] - h;
            probe.set_flat_parameters(&p).unwrap();
            let down = codec::loss_and_gradients(&probe, batch).unwrap().0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_map(seed: u64) -> NeuralMap<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..12i64);
    let mut map = NeuralMap::from_cells((0..n).map(|i| vec![i]), ResolutionVector(vec![0.1]), 1.0, 1.0).unwrap();
    for _ in 0..rng.gen_range(0..3 * n) {
        let a = rng.gen_range(0..n as usize);
        let b = rng.gen_range(0..n as usize);
        if a != b {
            map.set_forward_edge(a, b, rng.gen_range(0.05..1.0)).unwrap();
        }
    }
    map
}

fn property_suite(ctx: &mut SweepContext) -> Verdict {
    let t0 = Instant::now();
    let mut failures = Vec::new();

    let mut worst_grad = 0.0f64;
    for seed in [1u64, 2, 3] {
        let stats = NormStats {
            min: vec![0.0; 6],
            max: vec![1.0; 6],
        };
        let model = Autoencoder::new(stats, 3, &Architecture::default(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let batch: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
        let analytic = codec::loss_and_gradients(&model, &batch).unwrap().1.flatten();
        for (a, n) in analytic.iter().zip(numeric_gradient(&model, &batch, 1e-5)) {
            worst_grad = worst_grad.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
        }
    }
    if worst_grad >= 1e-4 {
        failures.push(format!("gradient rel err {worst_grad:.2e}"));
    }

    let base = ctx.base();
    let map = ctx.bundled(&base).unwrap();
    let worst_norm = map
        .neurons()
        .iter()
        .map(|n| (n.center.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    if worst_norm > 1e-9 {
        failures.push(format!("center norm off by {worst_norm:.2e}"));
    }
    if *map.forward() != map.backward().transpose() {
        failures.push("F != B^T".into());
    }

    let model = ctx.model(base.bottleneck, base.train_size).unwrap().model.clone();
    let pcfg = ctx.cfg.planner_config();
    let mut bad_walks = 0;
    for tg in ctx.test_goals().iter().take(100) {
        let r = planner::plan(&map, &tg.start, tg.goal, &pcfg, &model, &ctx.arm).unwrap();
        let mut ids = r.neuron_path.clone();
        ids.sort_unstable();
        ids.dedup();
        if !planner::is_valid_walk(&map, &r.neuron_path) || ids.len() != r.neuron_path.len() {
            bad_walks += 1;
        }
    }
    if bad_walks > 0 {
        failures.push(format!("{bad_walks} invalid walks"));
    }

    let line: NeuralMap<f64> = NeuralMap::from_cells([vec![0], vec![1]], ResolutionVector(vec![0.1]), 1.0, 1.0).unwrap();
    let defaults = PlannerConfig::default();
    let mut st = PlannerState::new(&line, 0, 1).unwrap();
    for _ in 0..20_000 {
        planner::spread_step(&mut st, &line, &defaults);
    }
    let fixed_err = (st.beta[1] - 100.0 / 101.0).abs();
    if fixed_err > 1e-6 {
        failures.push(format!("beta fixed point off by {fixed_err:.2e}"));
    }

    let mut unsound = 0;
    for seed in 0..100 {
        let m = random_map(seed);
        let goal = m.len() - 1;
        let p = planner::plan_neurons(&m, 0, goal, &PlannerConfig { warmup_steps: 20, ..defaults.clone() }).unwrap();
        if p.success() && planner::oracle_path(&m, 0, goal).is_none() {
            unsound += 1;
        }
    }
    if unsound > 0 {
        failures.push(format!("{unsound} plans without an oracle path"));
    }

    let secs = t0.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "property suite",
        pass: failures.is_empty() && secs < 300.0,
        detail: if failures.is_empty() {
            format!("grad {worst_grad:.1e}, norm {worst_norm:.1e}, beta {fixed_err:.1e}, {secs:.0}s")
        } else {
            failures.join("; ")
        },
    }
}

fn table_one(ctx: &mut SweepContext) -> (Verdict, SweepResult) {
    let t0 = Instant::now();
    let result = sweep::run_sweep(ctx, SweepKind::TrainSize).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let rmse = |n: usize| result.table_one.iter().find(|r| r.train_size == n).map(|r| r.test_rmse);
    let small = rmse(100).unwrap();
    let large: Vec<(usize, f64)> = result
        .table_one
        .iter()
        .filter(|r| r.train_size >= 300)
        .map(|r| (r.train_size, r.test_rmse))
        .collect();
    let pass = !large.is_empty() && large.iter().all(|&(_, e)| e <= 0.05 && e < small) && secs <= 1800.0;
    let sizes: Vec<String> = result
        .table_one
        .iter()
        .map(|r| format!("{}:{:.4}", r.train_size, r.test_rmse))
        .collect();
    (
        Verdict {
            id: 2,
            name: "autoencoder accuracy by training size",
            pass,
            detail: format!("test RMSE {}, {secs:.0}s", sizes.join(" ")),
        },
        result,
    )
}

struct Medians {
    jerk: f64,
    error: f64,
    mean_jerk: f64,
    n: usize,
    success: f64,
}

fn medians(result: &SweepResult, value: &str) -> Medians {
    let reports: Vec<MetricReport<f64>> = sweep::reports_for(result, value);
    let s = metrics::summarize(&reports).unwrap_or_else(|| panic!("no executed trials for {value}"));
    Medians {
        jerk: s.norm_jerk.median,
        error: s.end_effector_error.median,
        mean_jerk: s.norm_jerk.mean,
        n: reports.len(),
        success: result.rows_for(value).filter(|r| r.success).count() as f64 / result.rows_for(value).count() as f64,
    }
}

fn run(ctx: &mut SweepContext, kind: SweepKind) -> (SweepResult, f64) {
    let t0 = Instant::now();
    let r = sweep::run_sweep(ctx, kind).unwrap();
    (r, t0.elapsed().as_secs_f64())
}

fn dimension_trend(ctx: &mut SweepContext) -> Verdict {
    let (r, secs) = run(ctx, SweepKind::Dim);
    let (a, b) = (medians(&r, "3"), medians(&r, "5"));
    Verdict {
        id: 3,
        name: "dimension sweep",
        pass: b.jerk < a.jerk && b.error < a.error && a.n.min(b.n) >= 100 && secs <= 3600.0,
        detail: format!(
            "jerk {:.4} -> {:.4}, error {:.4} -> {:.4}, success {:.2} -> {:.2} (|A'| 3 -> 5), {secs:.0}s",
            a.jerk, b.jerk, a.error, b.error, a.success, b.success
        ),
    }
}

fn bundle_width_trend(ctx: &mut SweepContext) -> Verdict {
    let (r, secs) = run(ctx, SweepKind::Phi);
    let (a, b) = (medians(&r, "1"), medians(&r, "6"));
    Verdict {
        id: 4,
        name: "bundle-width sweep",
        pass: b.error <= a.error && b.jerk >= a.jerk && secs <= 3600.0,
        detail: format!(
            "error {:.4} -> {:.4}, jerk {:.5} -> {:.5}, success {:.2} -> {:.2} (phi 1 -> 6), {secs:.0}s",
            a.error, b.error, a.jerk, b.jerk, a.success, b.success
        ),
    }
}

fn resolution_trend(ctx: &mut SweepContext) -> Verdict {
    let (r, _) = run(ctx, SweepKind::Resolution);
    let m: Vec<Medians> = r.values.iter().map(|v| medians(&r, v)).collect();
    let jerk_up = m.windows(2).all(|w| w[1].jerk > w[0].jerk);
    let errors: Vec<f64> = m.iter().map(|x| x.error).collect();
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let fmt = |xs: Vec<f64>| xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    Verdict {
        id: 5,
        name: "resolution sweep",
        pass: jerk_up && spread <= 0.25,
        detail: format!(
            "jerk {} (monotone: {jerk_up}), error {} (spread {:.0}%, limit 25%)",
            fmt(m.iter().map(|x| x.jerk).collect()),
            fmt(errors.clone()),
            100.0 * spread
        ),
    }
}

fn variant_trend(ctx: &mut SweepContext) -> Verdict {
    let (r, _) = run(ctx, SweepKind::BundleVariant);
    let (lnr, par, fix) = (medians(&r, "lnrConnections"), medians(&r, "parConnections"), medians(&r, "fixConnections"));
    Verdict {
        id: 6,
        name: "bundle-variant sweep",
        pass: lnr.mean_jerk <= par.mean_jerk && par.mean_jerk <= fix.mean_jerk && lnr.n.min(par.n).min(fix.n) >= 100,
        detail: format!(
            "mean jerk lnr {:.5}, par {:.5}, fix {:.5}",
            lnr.mean_jerk, par.mean_jerk, fix.mean_jerk
        ),
    }
}

fn end_to_end(ctx: &mut SweepContext) -> Verdict {
    let mut s = ctx.base();
    s.bundles.phi = 3;
    let map = ctx.bundled(&s).unwrap();
    let model = ctx.model(s.bottleneck, s.train_size).unwrap().model.clone();
    let pcfg = ctx.cfg.planner_config();
    let goals = ctx.test_goals().to_vec();
    let mut errors = Vec::new();
    let mut spacings = Vec::new();
    for tg in &goals {
        let Ok(r) = planner::plan(&map, &tg.start, tg.goal, &pcfg, &model, &ctx.arm) else {
            continue;
        };
        if r.success {
            errors.push(metrics::end_effector_error(tg.goal, r.joint_trajectory.last(), &ctx.arm).unwrap());
            if let Some(d) = pipeline::cell_spacing(&map, &model, &ctx.arm, r.goal_neuron).unwrap() {
                spacings.push(d);
            }
        }
    }
    let rate = errors.len() as f64 / goals.len() as f64;
    let median_error = metrics::stats(&errors).map(|s| s.median).unwrap_or(f64::INFINITY);
    let spacing = metrics::stats(&spacings).map(|s| s.median).unwrap_or(0.0);
    Verdict {
        id: 7,
        name: "end-to-end reaching",
        pass: rate >= 0.9 && median_error < 2.0 * spacing,
        detail: format!(
            "success {:.1}% (warmup {}), median error {median_error:.5} vs 2x spacing {:.5}",
            100.0 * rate,
            pcfg.warmup_steps,
            2.0 * spacing
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let mut cfg = ExperimentConfig::humanoid_single();
    cfg.sweep.phi.values = vec![1, 3, 6];
    let mut ctx = SweepContext::new(cfg).unwrap();

    let mut verdicts = vec![property_suite(&mut ctx)];
    verdicts.push(table_one(&mut ctx).0);
    verdicts.push(dimension_trend(&mut ctx));
    verdicts.push(bundle_width_trend(&mut ctx));
    verdicts.push(resolution_trend(&mut ctx));
    verdicts.push(variant_trend(&mut ctx));
    verdicts.push(end_to_end(&mut ctx));

    for v in &verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let known = if !v.pass && KNOWN_UNMET.contains(&v.id) { " (known)" } else { "" };
        println!("criterion {} {tag}{known}: {}: {}", v.id, v.name, v.detail);
    }
    let failing: Vec<u8> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert_eq!(failing, KNOWN_UNMET, "failing criteria differ from the documented set");
}
