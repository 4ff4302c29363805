//! Bayesian posterior machinery over the discretized top-level field.
//!
//! The prior is i.i.d. standard normal on the planner's top-level grid. The
//! likelihood is a Gaussian kernel comparing the forward image (the scaled
//! map of the bottom field) with an observed Brownian path at a set of
//! observation abscissae. Because the prior is Gaussian and the dimension is
//! large (15620 at N=4, M=5), the sampler is a preconditioned
//! Crank-Nicolson Metropolis chain: the proposal
//! `xi' = sqrt(1 - beta^2) xi + beta zeta` preserves the prior exactly, so
//! the acceptance probability uses only the likelihood ratio and stays
//! usable independent of the grid dimension.

use rand::Rng;
use rayon::prelude::*;

use crate::cascade::{
    build_tower, plan_domains, s_map_at, xi_step, CascadeParams, DomainPlan, NoiseSample,
};
use crate::error::{Error, Result};
use crate::gridfn::GridFunction;
use crate::measures::{sample_scaled_wiener, streams, RngSeed, WienerScale};
use rand_distr::StandardNormal;

/// Observation grid and kernel width of the Gaussian likelihood.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LikelihoodSpec {
    /// Ordered abscissae inside the scaled-image interval.
    pub obs_grid: Vec<f64>,
    /// Per-point standard deviation of the Gaussian kernel.
    pub noise_sd: f64,
}

impl LikelihoodSpec {
    /// Observation points every 0.1 abscissa units across the scaled-image
    /// interval, with the default kernel width 0.05.
    pub fn default_for(params: &CascadeParams) -> Result<Self> {
        LikelihoodSpec::with_spacing(params, 0.1, 0.05)
    }

    pub fn with_spacing(params: &CascadeParams, spacing: f64, noise_sd: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid(format!("obs spacing must be > 0, got {spacing}")));
        }
        let image = plan_domains(params).s_image;
        let cells = (image.length() / spacing).round().max(1.0) as usize;
        let step = image.length() / cells as f64;
        let obs_grid = (0..=cells).map(|j| image.lo() + j as f64 * step).collect();
        let spec = LikelihoodSpec { obs_grid, noise_sd };
        spec.validate(params)?;
        Ok(spec)
    }

    pub fn validate(&self, params: &CascadeParams) -> Result<()> {
        if self.obs_grid.len() < 2 {
            return Err(Error::invalid(format!(
                "likelihood needs >= 2 observation points, got {}",
                self.obs_grid.len()
            )));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::invalid(format!(
                "noise_sd must be > 0, got {}",
                self.noise_sd
            )));
        }
        for w in self.obs_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(
                    "observation grid must be strictly increasing",
                ));
            }
        }
        let image = plan_domains(params).s_image;
        let lo = self.obs_grid[0];
        let hi = *self.obs_grid.last().expect("nonempty");
        if !image.contains(lo) || !image.contains(hi) {
            return Err(Error::invalid(format!(
                "observation grid [{lo}, {hi}] exceeds the scaled-image interval [{image}]"
            )));
        }
        Ok(())
    }
}

/// Metropolis chain configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChainConfig {
    /// Proposal mixing in [0, 1); 0 degenerates to a frozen chain.
    pub beta: f64,
    pub n_burn: usize,
    pub n_keep: usize,
    pub thin: usize,
    /// Acceptance rate targeted by the burn-in adaptation.
    pub adapt_target: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            beta: 0.5,
            n_burn: 5000,
            n_keep: 200,
            thin: 10,
            adapt_target: 0.25,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        if self.n_keep < 1 {
            return Err(Error::invalid("n_keep must be >= 1"));
        }
        if self.thin < 1 {
            return Err(Error::invalid("thin must be >= 1"));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(Error::invalid(format!(
                "adapt_target must lie in (0, 1), got {}",
                self.adapt_target
            )));
        }
        Ok(())
    }
}

/// Iterations per adaptation batch during burn-in.
const ADAPT_BATCH: usize = 50;
const BETA_MIN: f64 = 1e-6;
const BETA_MAX: f64 = 0.999;

/// One chain iteration in the diagnostics trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub log_lhd: f64,
    pub accepted: bool,
    pub beta: f64,
}

/// Output of one Metropolis chain.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// Kept top-level fields, one vector per draw.
    pub draws: Vec<Vec<f64>>,
    /// Acceptance fraction over the post-burn-in iterations.
    pub acceptance_rate: f64,
    /// Per-iteration log-likelihood / acceptance / beta record.
    pub trace: Vec<TraceRow>,
    pub w_id: u64,
    /// Mixing parameter after adaptation froze.
    pub final_beta: f64,
}

/// The deterministic part of the pipeline: top-level field to bottom field
/// to scaled image at the observation points. The same instance backs the
/// likelihood, so there is exactly one implementation of the forward pass.
pub struct ForwardMap {
    params: CascadeParams,
    plan: DomainPlan,
}

impl ForwardMap {
    pub fn new(params: CascadeParams) -> Result<Self> {
        params.validate()?;
        Ok(ForwardMap {
            plan: plan_domains(&params),
            params,
        })
    }

    pub fn plan(&self) -> &DomainPlan {
        &self.plan
    }

    pub fn params(&self) -> &CascadeParams {
        &self.params
    }

    /// Wraps raw prior coordinates as the top-level grid function.
    pub fn top_field(&self, values: &[f64]) -> Result<GridFunction> {
        if values.len() != self.plan.prior_points {
            return Err(Error::invalid(format!(
                "top-level field needs {} coordinates, got {}",
                self.plan.prior_points,
                values.len()
            )));
        }
        GridFunction::new(self.plan.top(), values.to_vec())
    }

    /// Applies the level recursion down to the bottom field.
    pub fn bottom_field(&self, top: &GridFunction) -> Result<GridFunction> {
        let mut xi = top.clone();
        for _ in 1..self.params.n_levels {
            xi = xi_step(&xi, &self.params)?;
        }
        Ok(xi)
    }

    /// Scaled image of the bottom field at the given abscissae.
    pub fn image_at(&self, top_values: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        let top = self.top_field(top_values)?;
        let bottom = self.bottom_field(&top)?;
        s_map_at(&bottom, &self.params, points)
    }
}

fn gaussian_log_kernel(image: &[f64], w_obs: &[f64], noise_sd: f64) -> f64 {
    let inv = 1.0 / (2.0 * noise_sd * noise_sd);
    -image
        .iter()
        .zip(w_obs)
        .map(|(s, w)| {
            let r = s - w;
            r * r
        })
        .sum::<f64>()
        * inv
}

/// Log-likelihood of a top-level field against an observed path: the
/// Gaussian kernel `-sum_j (S(x_j) - w(x_j))^2 / (2 noise_sd^2)` with
/// additive constants dropped.
pub fn log_likelihood(
    xi_top: &[f64],
    w: &GridFunction,
    spec: &LikelihoodSpec,
    params: &CascadeParams,
) -> Result<f64> {
    spec.validate(params)?;
    let forward = ForwardMap::new(*params)?;
    let w_obs: Vec<f64> = spec
        .obs_grid
        .iter()
        .map(|&x| w.evaluate(x))
        .collect::<Result<_>>()?;
    let image = forward.image_at(xi_top, &spec.obs_grid)?;
    Ok(gaussian_log_kernel(&image, &w_obs, spec.noise_sd))
}

/// Runs one preconditioned Crank-Nicolson chain against the observation `w`.
///
/// The proposal preserves the prior, so acceptance is
/// `min(1, exp(l(xi') - l(xi)))`. During burn-in, `beta` is adapted
/// multiplicatively toward the target acceptance rate and then frozen.
pub fn run_pcn_chain(
    w: &GridFunction,
    spec: &LikelihoodSpec,
    cfg: &ChainConfig,
    params: &CascadeParams,
    seed: RngSeed,
    w_id: u64,
) -> Result<PosteriorDraws> {
    spec.validate(params)?;
    cfg.validate()?;
    let forward = ForwardMap::new(*params)?;
    let d = forward.plan().prior_points;
    let w_obs: Vec<f64> = spec
        .obs_grid
        .iter()
        .map(|&x| w.evaluate(x))
        .collect::<Result<_>>()?;
    let ell_of = |state: &[f64]| -> Result<f64> {
        let image = forward.image_at(state, &spec.obs_grid)?;
        Ok(gaussian_log_kernel(&image, &w_obs, spec.noise_sd))
    };

    let mut rng = seed.rng();
    let mut state: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut ell = ell_of(&state)?;
    let mut beta = cfg.beta;
    let abort = |iter: usize, log_lhd: f64, beta: f64, state: &[f64]| Error::ChainAbort {
        w_id,
        iter,
        log_lhd,
        beta,
        state_norm: state.iter().map(|v| v * v).sum::<f64>().sqrt(),
    };
    if !ell.is_finite() {
        return Err(abort(0, ell, beta, &state));
    }

    let total = cfg.n_burn + cfg.n_keep * cfg.thin;
    let mut trace = Vec::with_capacity(total);
    let mut draws = Vec::with_capacity(cfg.n_keep);
    let mut proposal = vec![0.0f64; d];
    let mut batch_accepts = 0usize;
    let mut post_accepts = 0usize;

    for iter in 0..total {
        let a = (1.0 - beta * beta).sqrt();
        for (p, s) in proposal.iter_mut().zip(&state) {
            let zeta: f64 = rng.sample(StandardNormal);
            *p = a * s + beta * zeta;
        }
        let ell_prop = ell_of(&proposal)?;
        if !ell_prop.is_finite() {
            return Err(abort(iter, ell_prop, beta, &proposal));
        }
        let log_alpha = ell_prop - ell;
        let u: f64 = rng.random();
        let accepted = u.ln() < log_alpha;
        if accepted {
            std::mem::swap(&mut state, &mut proposal);
            ell = ell_prop;
        }
        trace.push(TraceRow {
            iter,
            log_lhd: ell,
            accepted,
            beta,
        });

        if iter < cfg.n_burn {
            if accepted {
                batch_accepts += 1;
            }
            if (iter + 1) % ADAPT_BATCH == 0 {
                let rate = batch_accepts as f64 / ADAPT_BATCH as f64;
                beta = (beta * (rate - cfg.adapt_target).exp()).clamp(BETA_MIN, BETA_MAX);
                batch_accepts = 0;
            }
        } else {
            if accepted {
                post_accepts += 1;
            }
            if (iter - cfg.n_burn) % cfg.thin == cfg.thin - 1 {
                draws.push(state.clone());
            }
        }
    }
    debug_assert_eq!(draws.len(), cfg.n_keep);
    Ok(PosteriorDraws {
        draws,
        acceptance_rate: post_accepts as f64 / (cfg.n_keep * cfg.thin) as f64,
        trace,
        w_id,
        final_beta: beta,
    })
}

/// Builds the observation path for one mixture component: a canonical-scale
/// Wiener path sampled on `[0, M - 2/M]`, translated so its origin sits at
/// the left end of the scaled-image interval, and anchored by subtracting
/// its value at abscissa 0 (matching the scaled image, which vanishes there
/// by construction).
pub fn observation_path(params: &CascadeParams, seed: RngSeed) -> Result<GridFunction> {
    let m = params.m;
    let span = m - 2.0 / m;
    // Step 1/(M * divisions) puts abscissa 0 on the grid for integer M.
    let divisions = (100.0 / m).round().max(1.0);
    let step = 1.0 / (m * divisions);
    let grid = crate::gridfn::GridSpec::with_step(crate::gridfn::Interval::new(0.0, span)?, step)?;
    let raw = sample_scaled_wiener(WienerScale::canonical(), &grid, seed)?;
    let lo = -1.0 + 1.0 / m;
    let domain = crate::gridfn::Interval::new(lo, lo + span)?;
    let anchor_idx = ((0.0 - lo) / raw.step()).round() as usize;
    let anchor = raw.values()[anchor_idx.min(raw.n() - 1)];
    GridFunction::new(domain, raw.values().iter().map(|v| v - anchor).collect())
}

/// Summary of one chain inside a mixture run.
#[derive(Debug, Clone)]
pub struct ChainRecord {
    pub w_id: u64,
    pub acceptance_rate: f64,
    pub final_beta: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct ChainFailure {
    pub w_id: u64,
    pub message: String,
}

/// Pooled posterior samples over independent Brownian observations.
#[derive(Debug)]
pub struct MixtureOutput {
    /// Towers ordered by (w_id, draw index).
    pub samples: Vec<NoiseSample>,
    pub chains: Vec<ChainRecord>,
    /// Observation paths, one per chain, ordered by w_id.
    pub w_paths: Vec<GridFunction>,
    /// Chains that aborted; the others' samples are still returned.
    pub failures: Vec<ChainFailure>,
    /// CPU seconds spent in the Metropolis chains, summed over workers.
    pub chain_secs: f64,
    /// CPU seconds spent materializing towers, summed over workers.
    pub tower_secs: f64,
}

/// Draws `n_w` observation paths, runs an independent chain per path, and
/// materializes the full tower for every kept draw. Chains run in parallel
/// on the ambient thread pool; results are keyed by (w_id, draw index), so
/// the pool size never changes the output.
pub fn sample_mixture(
    n_w: usize,
    draws_per_w: usize,
    spec: &LikelihoodSpec,
    cfg: &ChainConfig,
    params: &CascadeParams,
    seed: RngSeed,
) -> Result<MixtureOutput> {
    if n_w < 1 || draws_per_w < 1 {
        return Err(Error::invalid(format!(
            "mixture needs n_w >= 1 and draws_per_w >= 1, got {n_w} and {draws_per_w}"
        )));
    }
    spec.validate(params)?;
    cfg.validate()?;
    let chain_cfg = ChainConfig {
        n_keep: draws_per_w,
        ..*cfg
    };

    struct PerChain {
        w_id: u64,
        w: GridFunction,
        outcome: Result<(Vec<NoiseSample>, ChainRecord)>,
        chain_secs: f64,
        tower_secs: f64,
    }

    let per_chain: Vec<Result<PerChain>> = (0..n_w as u64)
        .into_par_iter()
        .map(|w_id| {
            let w = observation_path(params, seed.with_stream(streams::wiener_path(w_id)))?;
            let chain_start = std::time::Instant::now();
            let posterior = run_pcn_chain(
                &w,
                spec,
                &chain_cfg,
                params,
                seed.with_stream(streams::chain(w_id)),
                w_id,
            );
            let chain_secs = chain_start.elapsed().as_secs_f64();
            let tower_start = std::time::Instant::now();
            let outcome = posterior.and_then(|posterior| {
                let mut samples = Vec::with_capacity(posterior.draws.len());
                for (draw_idx, draw) in posterior.draws.iter().enumerate() {
                    let top = GridFunction::new(plan_domains(params).top(), draw.clone())?;
                    samples.push(build_tower(top, params, seed.seed, w_id, draw_idx as u64)?);
                }
                Ok((
                    samples,
                    ChainRecord {
                        w_id,
                        acceptance_rate: posterior.acceptance_rate,
                        final_beta: posterior.final_beta,
                        trace: posterior.trace,
                    },
                ))
            });
            Ok(PerChain {
                w_id,
                w,
                outcome,
                chain_secs,
                tower_secs: tower_start.elapsed().as_secs_f64(),
            })
        })
        .collect();

    let mut output = MixtureOutput {
        samples: Vec::with_capacity(n_w * draws_per_w),
        chains: Vec::with_capacity(n_w),
        w_paths: Vec::with_capacity(n_w),
        failures: Vec::new(),
        chain_secs: 0.0,
        tower_secs: 0.0,
    };
    for entry in per_chain {
        let entry = entry?;
        output.w_paths.push(entry.w);
        output.chain_secs += entry.chain_secs;
        output.tower_secs += entry.tower_secs;
        match entry.outcome {
            Ok((samples, record)) => {
                output.samples.extend(samples);
                output.chains.push(record);
            }
            Err(e) => output.failures.push(ChainFailure {
                w_id: entry.w_id,
                message: e.to_string(),
            }),
        }
    }
    Ok(output)
}
