//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test --test acceptance` (add `--release` for speed).

mod common;

use std::fs;
use std::time::{Duration, Instant};

use csde::cli::{parse_simulation_plan, run, Cli, PlanOverrides, SimulationPlan};
use csde::dictionary::{inner_product, Dictionary};
use csde::metrics::{tv_error_with_grid, TV_GRID_POINTS};
use csde::simgen::{gaussian_config, Channel, EstimatorSummary, RunOptions, Tuning};
use csde::solver::{empirical_moments, kkt_residuals};
use csde::theory::{diagnose, DiagnoseParams};
use csde::weights::csde_weights;
use csde::{
    fit, fit_orthogonal, l1_error, run_replications, tv_error, EstimatorSpec, FitOptions, GramMatrix,
    Problem, ReplicationReport, Sample, Variant, VariantParams, WeightSpec,
};
use clap::Parser;
use rand::Rng;

const SEED: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let pass = out.pass && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
    println!(
        "{} criterion {id:>2} {name}: {} [{:.1}s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64()
    );
    pass
}

fn plan(text: &str) -> SimulationPlan {
    parse_simulation_plan(text, &PlanOverrides::default()).expect("acceptance plan")
}

fn run_plan(p: &SimulationPlan) -> Vec<ReplicationReport> {
    p.experiments
        .iter()
        .map(|(cfg, specs)| run_replications(cfg, specs, &p.options).expect("replications"))
        .collect()
}

fn row<'a>(r: &'a ReplicationReport, label: &str) -> &'a EstimatorSummary {
    r.estimators.iter().find(|e| e.label == label).expect("estimator row")
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn kkt_property() -> Outcome {
    let mut rng = common::rng(SEED);
    let (mut converged, mut worst) = (0, 0.0f64);
    for _ in 0..200 {
        let w = rng.random_range(1..=50);
        let g = common::random_psd(&mut rng, w);
        let bt: Vec<f64> = (0..w).map(|_| rng.random_range(-0.2..1.0)).collect();
        let sup: Vec<f64> = (0..w).map(|_| rng.random_range(0.1..2.0)).collect();
        let lam = rng.random_range(0.0..0.3);
        let c = rng.random_range(0.0..0.2);
        let spec = if rng.random_bool(0.5) {
            WeightSpec::flat(w, lam, c).unwrap()
        } else {
            WeightSpec::adaptive(&sup, lam, c, 1.0, true).unwrap()
        };
        let p = Problem::new(bt, &g, spec).unwrap();
        let r = fit(&p, &FitOptions::default()).unwrap();
        if r.converged {
            converged += 1;
            let res = kkt_residuals(&p, &r.beta_hat).into_iter().fold(0.0, f64::max);
            worst = worst.max(res);
        }
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("{converged}/200 converged, max KKT residual {worst:.2e} (<= 1e-6)"),
    }
}

fn orthonormal_equivalence() -> Outcome {
    let mut rng = common::rng(SEED + 1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = rng.random_range(1..=60);
        let g = GramMatrix::identity(w);
        let bt: Vec<f64> = (0..w).map(|_| rng.random_range(-0.5..1.0)).collect();
        let omega: Vec<f64> = (0..w).map(|_| rng.random_range(0.0..0.4)).collect();
        let c = rng.random_range(0.0..1.0);
        let spec = WeightSpec {
            omega: omega.clone(),
            omega_tilde: omega.clone(),
            c,
            b: 1.0,
            shift: 0.0,
            concentration: None,
        };
        let cd = fit(&Problem::new(bt.clone(), &g, spec).unwrap(), &FitOptions::default()).unwrap();
        let cf = fit_orthogonal(&bt, &omega, c).unwrap();
        for (a, b) in cd.beta_hat.iter().zip(&cf.beta_hat) {
            worst = worst.max((a - b).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("max |fit - closed form| {worst:.2e} (<= 1e-8)"),
    }
}

// 10 well-separated unit Gaussians; the true mixture puts mass on every atom
fn orthogonal_fixture() -> (Dictionary, Dictionary, Vec<f64>) {
    let raw = common::orthogonal_gaussians(10);
    let (norm, _) = raw.normalize().unwrap();
    let beta = vec![0.25, 0.2, 0.15, 0.1, 0.1, 0.05, 0.05, 0.04, 0.03, 0.03];
    (raw, norm, beta)
}

fn weight_event_coverage() -> Outcome {
    let (raw, norm, beta) = orthogonal_fixture();
    let (n, delta, reps) = (200, 0.1, 500);
    let expected: Vec<f64> = norm
        .atoms()
        .iter()
        .map(|a| {
            raw.atoms()
                .iter()
                .zip(&beta)
                .map(|(h, b)| b * inner_product(a, h).unwrap())
                .sum()
        })
        .collect();
    let omega = csde_weights(&norm, n, delta, 0.0, 1.0).unwrap().omega_tilde;
    let mut rng = common::rng(SEED + 2);
    let hits = (0..reps)
        .filter(|_| {
            let x = Sample::Continuous(common::draw_mixture(&raw, &beta, n, &mut rng));
            let bt = empirical_moments(&norm, &x).unwrap();
            (0..10).all(|k| (bt[k] - expected[k]).abs() <= omega[k])
        })
        .count();
    let rate = hits as f64 / reps as f64;
    Outcome {
        pass: rate >= 0.9,
        detail: format!("event coverage {rate:.3} over {reps} replications (>= 0.90)"),
    }
}

fn table1() -> Outcome {
    let r = &run_plan(&plan(&format!(
        "family = gaussian-4.2\nW = 321\nseed = {SEED}\nestimators = lasso, csde\ntuning = fixed\n\
         lambda1.csde = 0.061\nlambda2.csde = 0.027\n"
    )))[0];
    let (cs, la) = (row(r, "csde"), row(r, "lasso"));
    let l1_ok = within(cs.l1_mean, 1.2, 2.1);
    let tv_ok = within(cs.tv_mean, 0.4, 1.0);
    let order_ok = cs.l1_mean <= la.l1_mean;
    Outcome {
        pass: l1_ok && tv_ok && order_ok && cs.failures == 0,
        detail: format!(
            "csde l1 {:.3} (sd {:.3}) in [1.2, 2.1]: {l1_ok}; tv {:.3} in [0.4, 1.0]: {tv_ok}; \
             csde <= lasso l1 {:.3}: {order_ok}; failures {}",
            cs.l1_mean, cs.l1_std, cs.tv_mean, la.l1_mean, cs.failures
        ),
    }
}

fn table2() -> Outcome {
    let r = &run_plan(&plan(&format!(
        "family = poisson-4.3\nW = 321\nseed = {SEED}\nchannel = neg-binomial:6\nestimators = csde\n\
         tuning = fixed\nlambda1.csde = 0.158\nlambda2.csde = 0.203\n"
    )))[0];
    let cs = row(r, "csde");
    let l1_ok = within(cs.l1_mean, 1.6, 2.1);
    let tv_ok = cs.tv_mean <= 0.05;
    Outcome {
        pass: l1_ok && tv_ok && cs.failures == 0,
        detail: format!(
            "csde l1 {:.3} (sd {:.3}) in [1.6, 2.1]: {l1_ok}; tv {:.3} <= 0.05: {tv_ok}; failures {}",
            cs.l1_mean, cs.l1_std, cs.tv_mean, cs.failures
        ),
    }
}

fn table3() -> Outcome {
    let reports = run_plan(&plan(&format!("family = lowdim-4.4\nseed = {SEED}\n")));
    let (s1, s2) = (&reports[0], &reports[1]);
    let (em1, cs1) = (row(s1, "em").l1_mean, row(s1, "csde").l1_mean);
    let (em2, cs2) = (row(s2, "em").l1_mean, row(s2, "csde").l1_mean);
    let checks = [
        within(em1, 0.15, 0.40),
        within(cs1, 0.10, 0.35),
        within(em2, 0.05, 0.20),
        within(cs2, 0.05, 0.20),
    ];
    Outcome {
        pass: checks.iter().all(|c| *c),
        detail: format!(
            "s1 em {em1:.4} in [0.15, 0.40]: {}; s1 csde {cs1:.4} in [0.10, 0.35]: {}; \
             s2 em {em2:.4} in [0.05, 0.20]: {}; s2 csde {cs2:.4} in [0.05, 0.20]: {}; \
             cv lambdas s1 ({:.4}, {:.4}) s2 ({:.4}, {:.4})",
            checks[0],
            checks[1],
            checks[2],
            checks[3],
            row(s1, "csde").lambda1_used,
            row(s1, "csde").lambda2_used,
            row(s2, "csde").lambda1_used,
            row(s2, "csde").lambda2_used,
        ),
    }
}

fn oracle_coverage() -> Outcome {
    let (raw, norm, beta_raw) = orthogonal_fixture();
    let (_, rec) = raw.normalize().unwrap();
    let beta = rec.to_normalized(&beta_raw);
    let gram = norm.gram().unwrap();
    let (n, delta, gamma, reps) = (200, 0.1, 0.5, 500);
    let params = DiagnoseParams {
        n,
        delta,
        gamma,
        ..DiagnoseParams::default()
    };
    let diag = diagnose(&norm, &gram, &beta, &params).unwrap();
    let bound = diag.bound_t1.unwrap();
    let weights = csde_weights(&norm, n, delta, 0.0, 1.0).unwrap();
    let omega_tilde = weights.omega_tilde.clone();
    let mut rng = common::rng(SEED + 3);
    let mut hits = 0;
    for _ in 0..reps {
        let x = Sample::Continuous(common::draw_mixture(&raw, &beta_raw, n, &mut rng));
        let p = Problem::new(empirical_moments(&norm, &x).unwrap(), &gram, weights.clone()).unwrap();
        let b = fit(&p, &FitOptions::default()).unwrap().beta_hat;
        let d: Vec<f64> = b.iter().zip(&beta).map(|(a, t)| a - t).collect();
        // α = 2: ‖h_β̂ − h‖² + 2(1−γ) Σ ω̃|Δ| + 2c Σ Δ², with c = 0
        let lhs = gram.quad_form(&d)
            + 2.0 * (1.0 - gamma) * d.iter().zip(&omega_tilde).map(|(x, w)| w * x.abs()).sum::<f64>();
        if lhs <= bound {
            hits += 1;
        }
    }
    let rate = hits as f64 / reps as f64;
    let alphas_ok = diag.alpha_opt1 == Some(2.0) && diag.alpha_opt2 == Some(2.0);
    Outcome {
        pass: rate >= 1.0 - delta && alphas_ok,
        detail: format!(
            "coverage {rate:.3} (>= 0.90); alpha_opt1 {:?}, alpha_opt2 {:?} (both 2): {alphas_ok}",
            diag.alpha_opt1.unwrap_or(f64::NAN),
            diag.alpha_opt2.unwrap_or(f64::NAN)
        ),
    }
}

fn support_recovery() -> Outcome {
    let mut cfg = gaussian_config(81).unwrap();
    cfg.n = 2000;
    cfg.channel = Channel::Clean;
    cfg.base_seed = SEED;
    let w = cfg.w;
    let delta = 0.1;
    // concentration weights at level δ/W use v(δ/2W), the support-recovery scale
    let spec = EstimatorSpec::Penalized {
        variant: Variant::Csde,
        tuning: Tuning::Concentration {
            delta: delta / w as f64,
            c: 0.0,
            b: 1.0,
        },
    };
    let r = run_replications(&cfg, &[spec], &RunOptions::default()).unwrap();
    let cs = &r.estimators[0];
    let dict = cfg.dictionary().unwrap();
    let gram = dict.gram().unwrap();
    let diag = diagnose(
        &dict,
        &gram,
        &cfg.beta_star,
        &DiagnoseParams {
            n: cfg.n,
            delta,
            max_eps: Some(0.0),
            ..DiagnoseParams::default()
        },
    )
    .unwrap();
    Outcome {
        pass: cs.support_exact_rate >= 0.9,
        detail: format!(
            "exact support rate {:.2} (>= 0.90); mean l1 {:.3}; condition_b {}; support bound {:.3}, vacuous {}",
            cs.support_exact_rate,
            cs.l1_mean,
            diag.condition_b,
            diag.theorem3_probability.unwrap_or(f64::NAN),
            diag.theorem3_vacuous
        ),
    }
}

fn metric_sanity() -> Outcome {
    let cfg = gaussian_config(81).unwrap();
    let dict = cfg.dictionary().unwrap();
    let gram = dict.gram().unwrap();
    let x = cfg.sample(0).unwrap();
    let fitted = csde::fit_variant(
        Variant::Csde,
        &x,
        &dict,
        &gram,
        VariantParams::new(0.053, 0.027),
        &FitOptions::default(),
    )
    .unwrap()
    .beta_hat;
    let tv = tv_error_with_grid(&dict, &fitted, &cfg.beta_star, TV_GRID_POINTS).unwrap();
    let tv2 = tv_error_with_grid(&dict, &fitted, &cfg.beta_star, 2 * TV_GRID_POINTS - 1).unwrap();
    let grid_ok = (tv - tv2).abs() < 1e-6;
    let sym_ok = tv_error(&dict, &fitted, &cfg.beta_star).unwrap() == tv_error(&dict, &cfg.beta_star, &fitted).unwrap();
    let l1_ok = l1_error(&fitted, &fitted).unwrap() == 0.0;
    Outcome {
        pass: grid_ok && sym_ok && l1_ok,
        detail: format!(
            "tv {tv:.9} vs doubled grid {tv2:.9} (diff {:.1e} < 1e-6): {grid_ok}; tv symmetric: {sym_ok}; l1(a, a) = 0: {l1_ok}",
            (tv - tv2).abs()
        ),
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let cfg = tmp.path().join("sim.txt");
    fs::write(
        &cfg,
        "family = gaussian-4.2\nW = 81\nreps = 8\nseed = 20\nestimators = lasso, csde, em\ntuning = cv\n",
    )
    .unwrap();
    let go = |dir: &str| {
        let out = tmp.path().join(dir);
        let cli = Cli::parse_from(["csde", "simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        run(&cli).unwrap();
        ["report.csv", "replications.csv"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let (a, b) = (go("a"), go("b"));
    let same = a == b;
    Outcome {
        pass: same,
        detail: format!(
            "report.csv + replications.csv ({} + {} bytes) identical across reruns: {same}",
            a[0].len(),
            a[1].len()
        ),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        check(1, "KKT optimality", Some(secs(30)), kkt_property),
        check(2, "orthonormal closed form", Some(secs(5)), orthonormal_equivalence),
        check(3, "weight-event coverage", Some(secs(60)), weight_event_coverage),
        check(4, "Gaussian W=321 table", Some(secs(600)), table1),
        check(5, "Poisson/NB W=321 table", Some(secs(600)), table2),
        check(6, "low-dimensional EM comparison", Some(secs(300)), table3),
        check(7, "oracle-bound coverage", None, oracle_coverage),
        check(8, "support recovery at n=2000", None, support_recovery),
        check(9, "metric sanity", None, metric_sanity),
        check(10, "simulate determinism", None, determinism),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
