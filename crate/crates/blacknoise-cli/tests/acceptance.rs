//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Quantitative Gaussian-side targets are checked against analytic values
//! and independent quadrature oracles; the posterior-side criteria are
//! property-based (trend and ordering) with bootstrap standard errors.

use std::time::Instant;

use statrs::distribution::{ContinuousCDF, Normal};

use blacknoise::blackstat::gamma_diagnostic;
use blacknoise::baseline::{run_white_baseline, WhiteCascadeParams};
use blacknoise::cascade::{
    b_functional, phi, plan_domains, s_map_at, xi_step, CascadeParams,
};
use blacknoise::gridfn::{GridFunction, GridSpec, Interval};
use blacknoise::inference::{run_pcn_chain, ChainConfig, ForwardMap, LikelihoodSpec};
use blacknoise::measures::{sample_gamma, sample_prior, RngSeed};
use blacknoise_cli::config::{RunConfig, RunMode};
use blacknoise_cli::csvio::read_h1;
use blacknoise_cli::manifest::RunManifest;
use blacknoise_cli::runner;

struct Criterion {
    n: u32,
    label: &'static str,
    start: Instant,
    failures: Vec<String>,
}

impl Criterion {
    fn new(n: u32, label: &'static str) -> Self {
        Criterion {
            n,
            label,
            start: Instant::now(),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if !ok {
            self.failures.push(detail);
        }
    }

    fn finish(self, budget_secs: f64) {
        let elapsed = self.start.elapsed().as_secs_f64();
        if elapsed > budget_secs {
            println!(
                "[acceptance] criterion {} ({}): FAIL (over budget: {elapsed:.1}s > {budget_secs}s)",
                self.n, self.label
            );
            panic!("criterion {} exceeded its runtime budget", self.n);
        }
        if self.failures.is_empty() {
            println!(
                "[acceptance] criterion {} ({}): PASS in {elapsed:.1}s",
                self.n, self.label
            );
        } else {
            println!(
                "[acceptance] criterion {} ({}): FAIL in {elapsed:.1}s",
                self.n, self.label
            );
            panic!(
                "criterion {} failed:\n  - {}",
                self.n,
                self.failures.join("\n  - ")
            );
        }
    }
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

#[test]
fn criterion_01_cascade_identities() {
    let mut c = Criterion::new(1, "cascade identities");
    for m in [2.0, 4.0, 5.0, 6.0] {
        let params = CascadeParams::new(m, 2).unwrap();
        let span = 4.0 * (m - 1.0) + 2.0;
        let spec = GridSpec::with_step(Interval::new(-span, span).unwrap(), 0.05).unwrap();
        for sign in [1.0, -1.0] {
            let xi = GridFunction::constant(&spec, sign).unwrap();
            let out = xi_step(&xi, &params).unwrap();
            let want = sign * (m - 1.0).sqrt();
            let worst = out
                .values()
                .iter()
                .map(|v| (v - want).abs())
                .fold(0.0f64, f64::max);
            c.check(
                worst < 1e-9,
                format!("M={m}, sign {sign}: worst deviation {worst:.2e}"),
            );
        }
    }
    // Clipping nonlinearity: antisymmetry, 1-Lipschitz, saturation.
    let probe: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.05).collect();
    for &u in &probe {
        c.check(phi(-u) == -phi(u), format!("antisymmetry at {u}"));
        if u >= 1.0 {
            c.check(phi(u) == 1.0, format!("saturation at {u}"));
        }
        for &v in &[0.0, 0.4, -1.3, 2.0] {
            c.check(
                (phi(u) - phi(v)).abs() <= (u - v).abs() + 1e-15,
                format!("Lipschitz at ({u}, {v})"),
            );
        }
    }
    c.finish(1.0);
}

#[test]
fn criterion_02_domain_planner() {
    let mut c = Criterion::new(2, "domain planner");
    let params = CascadeParams::new(5.0, 4).unwrap();
    let plan = plan_domains(&params);
    c.check(
        plan.level(4).lo() == -624.0 && plan.level(4).hi() == 2499.0,
        format!("level-4 interval [{}]", plan.level(4)),
    );
    c.check(plan.prior_points == 15620, format!("d = {}", plan.prior_points));
    c.check(
        (plan.s_image.lo() + 0.8).abs() < 1e-12 && (plan.s_image.hi() - 3.8).abs() < 1e-12,
        format!("image interval [{}]", plan.s_image),
    );
    c.finish(1.0);
}

#[test]
fn criterion_03_gamma_covariance() {
    let mut c = Criterion::new(3, "stationary covariance oracle");
    let grid = GridSpec::with_step(Interval::new(0.0, 4.0).unwrap(), 0.05).unwrap();
    let samples: Vec<GridFunction> = (0..10_000u64)
        .map(|i| sample_gamma(&grid, RngSeed::new(3101, i)))
        .collect();
    let refs: Vec<&GridFunction> = samples.iter().collect();
    let lags = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
    for row in gamma_diagnostic(&refs, &lags).unwrap() {
        c.check(
            (row.empirical - row.target).abs() < 0.03,
            format!(
                "lag {}: empirical {:.5}, target {:.5}",
                row.abscissa, row.empirical, row.target
            ),
        );
    }
    c.finish(60.0);
}

#[test]
fn criterion_04_integrated_correlation() {
    let mut c = Criterion::new(4, "integrated correlation oracle");
    // Independent oracle first: Simpson quadrature of the arcsine form
    // (2/pi) asin(max(0, 1 - x/2)) over [0, 2].
    let target = 2.0 - 4.0 / std::f64::consts::PI;
    let n = 200_000usize;
    let h = 2.0 / n as f64;
    let f = |x: f64| (2.0 / std::f64::consts::PI) * (1.0 - x / 2.0).max(0.0).asin();
    let mut quad = f(0.0) + f(2.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        quad += w * f(i as f64 * h);
    }
    quad *= h / 3.0;
    c.check(
        (quad - target).abs() < 1e-5,
        format!("quadrature oracle {quad:.8} vs closed form {target:.8}"),
    );

    let grid = GridSpec::with_step(Interval::new(0.0, 2.0).unwrap(), 0.01).unwrap();
    let samples: Vec<GridFunction> = (0..10_000u64)
        .map(|i| sample_gamma(&grid, RngSeed::new(3201, i)))
        .collect();
    let refs: Vec<&GridFunction> = samples.iter().collect();
    let b = b_functional(&refs, 100.0).unwrap();
    c.check(
        (b - quad).abs() < 0.03,
        format!("B estimate {b:.5} vs oracle {quad:.5}"),
    );
    c.finish(120.0);
}

#[test]
fn criterion_05_pushforward_variance() {
    let mut c = Criterion::new(5, "pushforward variance");
    let m = 20.0;
    let params = CascadeParams::new(m, 1).unwrap();
    let grid = GridSpec::with_step(Interval::new(0.0, m).unwrap(), 0.01).unwrap();
    let mut increments = Vec::with_capacity(2000);
    for i in 0..2000u64 {
        let xi = sample_gamma(&grid, RngSeed::new(3301, i));
        let vals = s_map_at(&xi, &params, &[0.0, 1.0]).unwrap();
        increments.push(vals[1] - vals[0]);
    }
    let var = variance(&increments);
    let target = 4.0 * (std::f64::consts::PI - 2.0) / std::f64::consts::PI;
    c.check(
        (var - target).abs() < 0.15 * target,
        format!("Var(S(1) - S(0)) = {var:.4}, target {target:.4} (15% tolerance)"),
    );
    c.finish(300.0);
}

#[test]
fn criterion_06_pcn_correctness() {
    let mut c = Criterion::new(6, "posterior chain correctness");
    let params = CascadeParams::new(4.0, 3).unwrap();

    // Flat likelihood: kept draws must reproduce the standard normal prior
    // (Kolmogorov-Smirnov below the 1% critical value on five coordinates).
    let flat_spec = LikelihoodSpec::with_spacing(&params, 0.1, f64::INFINITY).unwrap();
    let cfg = ChainConfig {
        beta: 0.5,
        n_burn: 500,
        n_keep: 10_000,
        thin: 1,
        adapt_target: 0.25,
    };
    let w = blacknoise::inference::observation_path(&params, RngSeed::new(3410, 7)).unwrap();
    let out = run_pcn_chain(&w, &flat_spec, &cfg, &params, RngSeed::new(3410, 1), 0).unwrap();
    let d = out.draws[0].len();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let ks_critical = 1.6276236307187293 / (out.draws.len() as f64).sqrt();
    let mut pick_rng = RngSeed::new(3410, 2).rng();
    for _ in 0..5 {
        use rand::Rng;
        let coord = pick_rng.random_range(0..d);
        let mut xs: Vec<f64> = out.draws.iter().map(|v| v[coord]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let mut dmax = 0.0f64;
        for (i, x) in xs.iter().enumerate() {
            let cdf = normal.cdf(*x);
            dmax = dmax.max((cdf - i as f64 / n).abs());
            dmax = dmax.max((cdf - (i + 1) as f64 / n).abs());
        }
        c.check(
            dmax < ks_critical,
            format!("coordinate {coord}: KS {dmax:.5} vs critical {ks_critical:.5}"),
        );
    }

    // Tight likelihood against a reachable observation: the posterior-mean
    // forward image must track it.
    let spec = LikelihoodSpec::default_for(&params).unwrap();
    let forward = ForwardMap::new(params).unwrap();
    let truth = sample_prior(forward.plan().prior_points, RngSeed::new(3410, 99)).unwrap();
    let w_obs = forward.image_at(&truth, &spec.obs_grid).unwrap();
    let w_grid = GridFunction::new(
        Interval::new(spec.obs_grid[0], *spec.obs_grid.last().unwrap()).unwrap(),
        w_obs.clone(),
    )
    .unwrap();
    let cfg = ChainConfig {
        n_keep: 100,
        ..ChainConfig::default()
    };
    let post = run_pcn_chain(&w_grid, &spec, &cfg, &params, RngSeed::new(3410, 3), 1).unwrap();
    let mut mean_image = vec![0.0f64; spec.obs_grid.len()];
    for draw in &post.draws {
        let image = forward.image_at(draw, &spec.obs_grid).unwrap();
        for (acc, v) in mean_image.iter_mut().zip(&image) {
            *acc += v;
        }
    }
    for v in mean_image.iter_mut() {
        *v /= post.draws.len() as f64;
    }
    let rms = (mean_image
        .iter()
        .zip(&w_obs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / w_obs.len() as f64)
        .sqrt();
    c.check(
        rms <= 0.1,
        format!("posterior-mean forward-image RMS residual {rms:.4} > 0.1"),
    );
    c.finish(600.0);
}

#[test]
fn criterion_07_white_control() {
    let mut c = Criterion::new(7, "white-noise control");
    let params = WhiteCascadeParams::new(5.0, 6).unwrap();
    let result = run_white_baseline(&params, 500, RngSeed::new(3500, 0), 0).unwrap();
    for k in [4usize, 5, 6] {
        let est = result.reports[k - 1].estimate;
        c.check(
            (0.8..=1.2).contains(&est),
            format!("H1(f_{k}) = {est:.4} outside [0.8, 1.2]"),
        );
    }
    let e1 = result.reports[0].estimate;
    let e6 = result.reports[5].estimate;
    c.check(
        (e6 - 1.0).abs() < (e1 - 1.0).abs(),
        format!("|H1(f_6) - 1| = {:.4} not below |H1(f_1) - 1| = {:.4}", (e6 - 1.0).abs(), (e1 - 1.0).abs()),
    );
    c.finish(600.0);
}

fn black_run(m: f64, n: u32, out: &std::path::Path) -> Vec<blacknoise_cli::csvio::H1Row> {
    let mut config = RunConfig::default_for(RunMode::Black);
    config.cascade.m = m;
    config.cascade.n = n;
    config.seed = 42;
    let output = runner::execute(&config, out).unwrap();
    assert_eq!(output.failed_chains(), 0, "chains failed in black run");
    read_h1(&output.dir.join("h1.csv")).unwrap()
}

#[test]
fn criterion_08_black_noise_trend() {
    let mut c = Criterion::new(8, "posterior level trend");
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let rows = black_run(4.0, 3, dir.path());
    let wall = start.elapsed().as_secs_f64();
    c.check(rows.len() == 3, format!("expected 3 levels, got {}", rows.len()));
    c.check(
        rows[0].n_samples >= 200,
        format!("pooled samples {} < 200", rows[0].n_samples),
    );
    for pair in rows.windows(2) {
        let slack = (pair[0].std_error.powi(2) + pair[1].std_error.powi(2)).sqrt();
        c.check(
            pair[1].estimate <= pair[0].estimate + slack,
            format!(
                "H1(f_{}) = {:.5} rises above H1(f_{}) = {:.5} beyond one std error {:.5}",
                pair[1].k, pair[1].estimate, pair[0].k, pair[0].estimate, slack
            ),
        );
    }
    c.check(
        rows[2].estimate < 0.5 * rows[0].estimate,
        format!(
            "H1(f_3) = {:.5} not below half of H1(f_1) = {:.5}",
            rows[2].estimate, rows[0].estimate
        ),
    );
    // Performance goal: far below the reference tool's ~5m55s per sample,
    // i.e. ~20 hours for 200 samples.
    let per_sample = wall / 200.0;
    println!(
        "[acceptance]   criterion 8 wall {wall:.1}s for 200 samples ({per_sample:.3}s/sample vs 355s/sample reference)"
    );
    c.check(
        wall < 1800.0,
        format!("run took {wall:.0}s, budget 1800s"),
    );
    c.finish(1800.0);
}

#[test]
fn criterion_09_m_monotonicity() {
    let mut c = Criterion::new(9, "scale-ratio monotonicity");
    let dir = tempfile::tempdir().unwrap();
    let rows4 = black_run(4.0, 3, dir.path());
    let rows6 = black_run(6.0, 3, dir.path());
    let (a, b) = (&rows6[2], &rows4[2]);
    let slack = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    c.check(
        a.estimate <= b.estimate + slack,
        format!(
            "H1(f_3) at M=6 ({:.5}) above M=4 ({:.5}) beyond one std error {:.5}",
            a.estimate, b.estimate, slack
        ),
    );
    c.finish(2700.0);
}

#[test]
fn criterion_10_reproducibility() {
    let mut c = Criterion::new(10, "reproducibility");
    let root_a = tempfile::tempdir().unwrap();
    let root_b = tempfile::tempdir().unwrap();

    let mut config = RunConfig::default_for(RunMode::Black);
    config.cascade.m = 4.0;
    config.cascade.n = 2;
    config.seed = 77;
    config.mixture.n_w = 6;
    config.mixture.draws_per_w = 6;
    config.chain.n_burn = 500;
    config.chain.thin = 3;
    config.n_threads = 1;
    let run_a = runner::execute(&config, root_a.path()).unwrap();

    // Rerun from the manifest with a different pool size.
    let manifest = RunManifest::load(&run_a.dir.join("manifest.json")).unwrap();
    let mut config_b = manifest.config.clone();
    config_b.n_threads = 8;
    let run_b = runner::execute(&config_b, root_b.path()).unwrap();

    for name in ["h1.csv", "diagnostics.csv", "chains.csv"] {
        let a = std::fs::read(run_a.dir.join(name)).unwrap();
        let b = std::fs::read(run_b.dir.join(name)).unwrap();
        c.check(a == b, format!("{name} differs between 1-thread and 8-thread reruns"));
    }

    // Same property for the control cascade.
    let mut white = RunConfig::default_for(RunMode::White);
    white.white.m_values = vec![3.0];
    white.white.n = 3;
    white.white.n_samples = 60;
    white.seed = 78;
    white.n_threads = 1;
    let white_a = runner::execute(&white, root_a.path()).unwrap();
    let manifest = RunManifest::load(&white_a.dir.join("manifest.json")).unwrap();
    let mut white_b_cfg = manifest.config.clone();
    white_b_cfg.n_threads = 8;
    let white_b = runner::execute(&white_b_cfg, root_b.path()).unwrap();
    for name in ["h1.csv", "diagnostics.csv"] {
        let a = std::fs::read(white_a.dir.join(name)).unwrap();
        let b = std::fs::read(white_b.dir.join(name)).unwrap();
        c.check(a == b, format!("white {name} differs across pool sizes"));
    }
    c.finish(600.0);
}
