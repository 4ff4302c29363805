//! Run orchestration: executes a configuration, lays out the run directory
//! and records the manifest.
//!
//! Layout: `runs/<run_id>/{manifest.json, h1.csv, diagnostics.csv,
//! chains.csv, samples/*.csv, plots/*.svg}`. Chains are parallel over
//! observation ids with independent RNG streams; pooled statistics are
//! computed from the ordered pool, so the thread count never changes any
//! number.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use blacknoise::blackstat::{
    cell_integrals, gamma_diagnostic, h1_from_cells, pushforward_diagnostic, DiagnosticRow,
    H1Report, Partition,
};
use blacknoise::baseline::run_white_baseline;
use blacknoise::cascade::{b_functional, plan_domains, s_map, CascadeParams};
use blacknoise::gridfn::{GridFunction, GridSpec, Interval};
use blacknoise::inference::{sample_mixture, LikelihoodSpec};
use blacknoise::measures::{
    gamma_variance, sample_gamma, sample_prior, sample_scaled_wiener, sample_white_grid, streams,
    RngSeed, WienerScale,
};

use crate::config::{RunConfig, RunMode};
use crate::csvio;
use crate::manifest::{ChainManifest, FailureManifest, RunManifest};

pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutput {
    pub fn failed_chains(&self) -> usize {
        self.manifest.failures.len()
    }
}

/// Executes a validated configuration under `out_root`.
pub fn execute(config: &RunConfig, out_root: &Path) -> Result<RunOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.n_threads)
        .build()
        .context("building worker pool")?;
    pool.install(|| match config.mode {
        RunMode::Black => simulate_black(config, out_root),
        RunMode::White => simulate_white(config, out_root),
        RunMode::Diagnostics => run_diagnostics(config, out_root),
    })
}

struct Phases {
    clock: Instant,
    map: BTreeMap<String, f64>,
}

impl Phases {
    fn new() -> Self {
        Phases {
            clock: Instant::now(),
            map: BTreeMap::new(),
        }
    }

    fn mark(&mut self, name: &str) {
        let elapsed = self.clock.elapsed().as_secs_f64();
        *self.map.entry(name.to_string()).or_insert(0.0) += elapsed;
        self.clock = Instant::now();
    }

    fn record(&mut self, name: &str, secs: f64) {
        *self.map.entry(name.to_string()).or_insert(0.0) += secs;
    }
}

fn create_run_dir(out_root: &Path, base_id: &str) -> Result<(PathBuf, String)> {
    std::fs::create_dir_all(out_root)
        .with_context(|| format!("creating output root {}", out_root.display()))?;
    let mut run_id = base_id.to_string();
    let mut suffix = 1usize;
    loop {
        let dir = out_root.join(&run_id);
        match std::fs::create_dir(&dir) {
            Ok(()) => {
                std::fs::create_dir_all(dir.join("samples"))?;
                return Ok((dir, run_id));
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                suffix += 1;
                run_id = format!("{base_id}-{suffix}");
            }
            Err(e) => {
                return Err(e).with_context(|| format!("creating run dir {}", dir.display()))
            }
        }
    }
}

fn check_outputs(dir: &Path, names: &[&str]) -> Result<()> {
    for name in names {
        let path = dir.join(name);
        if !path.exists() {
            bail!("expected output missing: {}", path.display());
        }
    }
    Ok(())
}

/// The full posterior pipeline: prior, backward cascade, likelihood,
/// posterior chain per observation, mixture pooling, statistics, artifacts.
pub fn simulate_black(config: &RunConfig, out_root: &Path) -> Result<RunOutput> {
    let params = config.cascade.resolve()?;
    let spec = LikelihoodSpec::with_spacing(
        &params,
        config.likelihood.obs_spacing,
        config.likelihood.noise_sd,
    )?;
    let chain_cfg = config.chain.resolve();
    let seed = RngSeed::new(config.seed, 0);
    let base_id = format!(
        "black-m{}-n{}-s{}",
        config.cascade.m, config.cascade.n, config.seed
    );
    let (dir, run_id) = create_run_dir(out_root, &base_id)?;
    let mut phases = Phases::new();

    // A prior draw of the top-level field, kept for the figure set.
    let plan = plan_domains(&params);
    let prior_values = sample_prior(plan.prior_points, seed.with_stream(streams::diagnostics(0)))?;
    let prior_xi = GridFunction::new(plan.top(), prior_values)?;
    prior_xi.write_csv(&dir.join("samples/prior_xi.csv"))?;
    phases.mark("prior");

    let mixture = sample_mixture(
        config.mixture.n_w,
        config.mixture.draws_per_w,
        &spec,
        &chain_cfg,
        &params,
        seed,
    )?;
    phases.mark("mixture_wall");
    phases.record("chain", mixture.chain_secs);
    phases.record("cascade", mixture.tower_secs);

    // Pooled H1 estimates per level.
    let mut reports: Vec<H1Report> = Vec::with_capacity(params.n_levels as usize);
    if mixture.samples.len() >= blacknoise::blackstat::MIN_SAMPLES {
        for k in 1..=params.n_levels {
            let s_k = params.s_k(k);
            let partition = Partition::uniform_for_margin(s_k);
            let rows: Vec<Vec<f64>> = mixture
                .samples
                .iter()
                .map(|s| cell_integrals(s.omega(k), s_k, &partition))
                .collect::<blacknoise::Result<_>>()?;
            reports.push(h1_from_cells(
                &rows,
                k,
                partition,
                seed.with_stream(streams::bootstrap(k as u64)),
            )?);
        }
    }

    // Distributional diagnostics over the pooled bottom fields and images.
    let mut diag: Vec<DiagnosticRow> = Vec::new();
    if !mixture.samples.is_empty() {
        let xi1: Vec<&GridFunction> = mixture.samples.iter().map(|s| s.xi(1)).collect();
        let xi1_hi = xi1[0].domain().hi();
        let lags: Vec<f64> = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0]
            .into_iter()
            .filter(|lag| *lag < xi1_hi.min(4.0))
            .collect();
        diag.extend(gamma_diagnostic(&xi1, &lags)?);
        let images: Vec<&GridFunction> = mixture.samples.iter().map(|s| s.s_image()).collect();
        let image_hi = plan.s_image.hi();
        let xs: Vec<f64> = [0.5, 1.0, 2.0]
            .into_iter()
            .filter(|x| *x <= image_hi)
            .collect();
        diag.extend(pushforward_diagnostic(&images, &xs)?);
        diag.push(DiagnosticRow {
            kind: "b_l".to_string(),
            abscissa: params.l,
            empirical: b_functional(&xi1, params.l)?,
            target: 2.0 * gamma_variance() / 2.0,
        });
    }
    phases.mark("stats");

    // Artifacts: observation paths, a few full towers, chain traces.
    for (w_id, w) in mixture.w_paths.iter().enumerate() {
        w.write_csv(&dir.join(format!("samples/w{w_id}.csv")))?;
    }
    for sample in mixture.samples.iter().take(config.save_towers) {
        let tower_dir = dir.join(format!("samples/w{}_d{}", sample.w_id, sample.draw_idx));
        std::fs::create_dir_all(&tower_dir)?;
        for k in 1..=params.n_levels {
            sample.xi(k).write_csv(&tower_dir.join(format!("xi_{k}.csv")))?;
            sample
                .omega(k)
                .write_csv(&tower_dir.join(format!("omega_{k}.csv")))?;
        }
        sample.s_image().write_csv(&tower_dir.join("s_image.csv"))?;
    }
    csvio::write_chains(&dir.join("chains.csv"), &mixture.chains)?;
    csvio::write_h1(&dir.join("h1.csv"), &reports)?;
    csvio::write_diagnostics(&dir.join("diagnostics.csv"), &diag)?;
    phases.mark("io");

    let mut manifest = RunManifest::new(run_id, config.clone());
    manifest.m_blocks = vec![params.m];
    manifest.chains = mixture
        .chains
        .iter()
        .map(|c| ChainManifest {
            w_id: c.w_id,
            stream_id: streams::chain(c.w_id),
            acceptance_rate: c.acceptance_rate,
            final_beta: c.final_beta,
            n_draws: config.mixture.draws_per_w,
        })
        .collect();
    manifest.failures = mixture
        .failures
        .iter()
        .map(|f| FailureManifest {
            w_id: f.w_id,
            message: f.message.clone(),
        })
        .collect();
    manifest.phase_runtimes_secs = phases.map.clone();
    manifest.write(&dir)?;
    check_outputs(&dir, &["h1.csv", "diagnostics.csv", "chains.csv", "manifest.json"])?;
    Ok(RunOutput {
        dir,
        manifest,
    })
}

/// The control experiment: white towers smoothed down the linear cascade,
/// H1 per level, one block of rows per scale ratio.
pub fn simulate_white(config: &RunConfig, out_root: &Path) -> Result<RunOutput> {
    let base_id = format!(
        "white-n{}-s{}",
        config.white.n, config.seed
    );
    let (dir, run_id) = create_run_dir(out_root, &base_id)?;
    let mut phases = Phases::new();
    let mut all_reports: Vec<H1Report> = Vec::new();
    let mut diag: Vec<DiagnosticRow> = Vec::new();

    for (block, &m) in config.white.m_values.iter().enumerate() {
        let params = config.white.resolve(m)?;
        // Each block gets its own base seed, derived from the run seed.
        let block_seed = RngSeed::new(config.seed.wrapping_add(block as u64), 0);
        let result = run_white_baseline(
            &params,
            config.white.n_samples,
            block_seed,
            config.save_towers,
        )?;
        for (k, var) in result.f_var.iter().enumerate() {
            diag.push(DiagnosticRow {
                kind: format!("white_f_var_m{m}"),
                abscissa: (k + 1) as f64,
                empirical: *var,
                target: 1.0,
            });
        }
        for (t, tower) in result.towers.iter().enumerate() {
            let tower_dir = dir.join(format!("samples/m{m}_t{t}"));
            std::fs::create_dir_all(&tower_dir)?;
            for (idx, omega) in tower.iter().enumerate() {
                omega.write_csv(&tower_dir.join(format!("omega_{}.csv", idx + 1)))?;
            }
        }
        all_reports.extend(result.reports);
        phases.mark(&format!("block_m{m}"));
    }
    csvio::write_h1(&dir.join("h1.csv"), &all_reports)?;
    csvio::write_diagnostics(&dir.join("diagnostics.csv"), &diag)?;
    phases.mark("io");

    let mut manifest = RunManifest::new(run_id, config.clone());
    manifest.baseline = true;
    manifest.m_blocks = config.white.m_values.clone();
    manifest.phase_runtimes_secs = phases.map.clone();
    manifest.write(&dir)?;
    check_outputs(&dir, &["h1.csv", "diagnostics.csv", "manifest.json"])?;
    Ok(RunOutput {
        dir,
        manifest,
    })
}

/// Sampler-level diagnostics against analytic targets: covariance kernel,
/// integrated sign correlation, pushforward variance, Brownian scaling and
/// the grid-noise isometry.
pub fn run_diagnostics(config: &RunConfig, out_root: &Path) -> Result<RunOutput> {
    let d = &config.diagnostics;
    let seed = RngSeed::new(config.seed, 0);
    let base_id = format!("diagnostics-s{}", config.seed);
    let (dir, run_id) = create_run_dir(out_root, &base_id)?;
    let mut phases = Phases::new();
    let mut rows: Vec<DiagnosticRow> = Vec::new();

    // Stationary covariance at the requested lags.
    let max_lag = d.lags.iter().cloned().fold(0.0f64, f64::max);
    let cov_grid = GridSpec::with_step(Interval::new(0.0, (max_lag + 1.0).max(2.0))?, 0.05)?;
    let cov_samples: Vec<GridFunction> = (0..d.n_samples as u64)
        .map(|i| sample_gamma(&cov_grid, seed.with_stream(streams::diagnostics(i))))
        .collect();
    let cov_refs: Vec<&GridFunction> = cov_samples.iter().collect();
    rows.extend(gamma_diagnostic(&cov_refs, &d.lags)?);
    drop(cov_samples);
    phases.mark("gamma_cov");

    // Integrated two-point correlation of the clipped field at gain b_l.
    let b_grid = GridSpec::with_step(Interval::new(0.0, 2.0)?, 0.01)?;
    let b_samples: Vec<GridFunction> = (0..d.n_samples as u64)
        .map(|i| sample_gamma(&b_grid, seed.with_stream(streams::diagnostics(1_000_000 + i))))
        .collect();
    let b_refs: Vec<&GridFunction> = b_samples.iter().collect();
    rows.push(DiagnosticRow {
        kind: "b_l".to_string(),
        abscissa: d.b_l,
        empirical: b_functional(&b_refs, d.b_l)?,
        target: 2.0 - 4.0 / std::f64::consts::PI,
    });
    drop(b_samples);
    phases.mark("b_l");

    // Pushforward of the stationary field through the scaling map.
    let m = d.pushforward_m;
    let push_params = CascadeParams::new(m, 1)?;
    let push_grid = GridSpec::with_step(Interval::new(0.0, m)?, 0.01)?;
    let target_x = Interval::new(0.0, 1.0)?;
    let images: Vec<GridFunction> = (0..d.pushforward_samples as u64)
        .map(|i| -> Result<GridFunction> {
            let xi = sample_gamma(&push_grid, seed.with_stream(streams::diagnostics(2_000_000 + i)));
            Ok(s_map(&xi, &push_params, target_x)?)
        })
        .collect::<Result<_>>()?;
    let image_refs: Vec<&GridFunction> = images.iter().collect();
    rows.extend(pushforward_diagnostic(&image_refs, &[0.5, 1.0])?);
    drop(images);
    phases.mark("pushforward");

    // Brownian scaling of the observation law.
    let scale = WienerScale::canonical();
    let w_grid = GridSpec::with_step(Interval::new(0.0, 1.0)?, 0.01)?;
    let n_w = (d.n_samples / 2).max(100) as u64;
    let mut w1 = Vec::with_capacity(n_w as usize);
    for i in 0..n_w {
        let w = sample_scaled_wiener(
            scale,
            &w_grid,
            seed.with_stream(streams::diagnostics(3_000_000 + i)),
        )?;
        w1.push(w.evaluate(1.0)?);
    }
    rows.push(DiagnosticRow {
        kind: "wiener_var".to_string(),
        abscissa: 1.0,
        empirical: sample_variance(&w1),
        target: scale.variance(),
    });
    phases.mark("wiener");

    // Grid-noise isometry: unit-window integrals have unit variance.
    let white_grid = GridSpec::with_step(Interval::new(-0.125, 1.125)?, 1.0 / 64.0)?;
    let n_white = (d.n_samples / 2).max(100) as u64;
    let mut ints = Vec::with_capacity(n_white as usize);
    for i in 0..n_white {
        let omega = sample_white_grid(
            &white_grid,
            seed.with_stream(streams::diagnostics(4_000_000 + i)),
        );
        ints.push(omega.integrate(0.0, 1.0)?);
    }
    rows.push(DiagnosticRow {
        kind: "white_iso".to_string(),
        abscissa: white_grid.step(),
        empirical: sample_variance(&ints),
        target: 1.0,
    });
    phases.mark("white_iso");

    csvio::write_h1(&dir.join("h1.csv"), &[])?;
    csvio::write_diagnostics(&dir.join("diagnostics.csv"), &rows)?;
    phases.mark("io");

    let mut manifest = RunManifest::new(run_id, config.clone());
    manifest.phase_runtimes_secs = phases.map.clone();
    manifest.write(&dir)?;
    check_outputs(&dir, &["h1.csv", "diagnostics.csv", "manifest.json"])?;
    Ok(RunOutput {
        dir,
        manifest,
    })
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}
