//! The cascade maps between levels of the projective tower.
//!
//! Everything here works at the `xi` level, where the recursion between
//! successive levels is the same map `R` for every level:
//!
//! ```text
//! (R xi_next)(x) = 1/(2 sqrt(M-1)) * integral over [Mx-M+1, Mx+M-1]
//!                  of phi(L * xi_next(y)) dy
//! ```
//!
//! `omega` levels are recovered from `xi` levels by `omega_k(x) =
//! phi(L * xi_k(x / s_k))`, and the cumulative scaling map `S` turns the
//! bottom field into a Brownian-like path. The domain planner works out, for
//! a given number of levels, where the top-level field must be known so the
//! bottom-level outputs cover their target intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridfn::{GridFunction, GridSpec, Interval, PrefixIntegral};

/// Parameters of the projective system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    /// Scale ratio between successive levels, > 1.
    pub m: f64,
    /// Gain applied inside the clipping nonlinearity, > 0.
    pub l: f64,
    /// Number of levels in the finite tower, >= 1.
    pub n_levels: u32,
    /// Base radius; 1 by convention, only enters through `s_k` when placing
    /// omega levels on [0, 1].
    pub r1: f64,
    /// Grid step on the top-level interval; defaults to the planner-matched
    /// value (interval length)/(d - 1).
    pub grid_step: f64,
}

impl CascadeParams {
    /// Parameters with the experiment convention `L = sqrt(M-1)`, `r1 = 1`
    /// and the planner-matched top-level grid step.
    pub fn new(m: f64, n_levels: u32) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::invalid(format!("cascade requires M > 1, got {m}")));
        }
        let params = CascadeParams {
            m,
            l: (m - 1.0).sqrt(),
            n_levels,
            r1: 1.0,
            grid_step: default_grid_step(m, n_levels),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_l(mut self, l: f64) -> Result<Self> {
        self.l = l;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) {
            return Err(Error::invalid(format!("M must be > 1, got {}", self.m)));
        }
        if !(self.l > 0.0) {
            return Err(Error::invalid(format!("L must be > 0, got {}", self.l)));
        }
        if self.n_levels < 1 {
            return Err(Error::invalid("N must be >= 1"));
        }
        if !(self.r1 > 0.0) {
            return Err(Error::invalid(format!("r1 must be > 0, got {}", self.r1)));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::invalid(format!(
                "grid_step must be > 0, got {}",
                self.grid_step
            )));
        }
        Ok(())
    }

    /// Window radius at level `k`: `r1 * M^(1-k)`, strictly decreasing.
    pub fn r_k(&self, k: u32) -> f64 {
        debug_assert!(k >= 1);
        self.r1 * self.m.powi(1 - k as i32)
    }

    /// Remote-past influence radius at level `k`: `r_k / (M - 1)`.
    pub fn s_k(&self, k: u32) -> f64 {
        self.r_k(k) / (self.m - 1.0)
    }
}

/// Planner-matched grid step for the top-level interval.
pub fn default_grid_step(m: f64, n_levels: u32) -> f64 {
    let length = m.powi(n_levels as i32 + 1) - 2.0;
    let d = prior_dimension(m, n_levels);
    length / (d - 1) as f64
}

/// Prior dimension `d = M (M^(N+1) - 1)`.
pub fn prior_dimension(m: f64, n_levels: u32) -> usize {
    (m * (m.powi(n_levels as i32 + 1) - 1.0)).round() as usize
}

/// The clipping nonlinearity: identity on (-1, 1), saturated at +-1 outside.
/// Odd, 1-Lipschitz, and equal to 1 for arguments >= 1.
pub fn phi(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// One step of the level recursion: from `xi` at level k+1 to `xi` at
/// level k. The output lives on `[(A+M-1)/M, (B-M+1)/M]` when the input
/// lives on `[A, B]`, with the step scaled down by `M` so every window spans
/// the same number of grid cells at every level.
pub fn xi_step(xi_next: &GridFunction, params: &CascadeParams) -> Result<GridFunction> {
    let m = params.m;
    let half_width = m - 1.0;
    let dom = xi_next.domain();
    let u_lo = dom.lo() + half_width;
    let u_hi = dom.hi() - half_width;
    if u_hi - u_lo <= 0.0 {
        return Err(Error::domain(
            "xi_step: input shorter than one window",
            Interval::new(dom.lo(), dom.lo() + 2.0 * half_width + xi_next.step())
                .expect("window interval"),
            dom,
        ));
    }
    let clipped = xi_next.map(|v| phi(params.l * v));
    let u_spec = GridSpec::with_step(Interval::new(u_lo, u_hi)?, xi_next.step())?;
    let mean = clipped.sliding_mean(half_width, &u_spec)?;
    // 1/(2 sqrt(M-1)) * integral = sqrt(M-1) * mean, and abscissae contract
    // by M.
    let gain = (m - 1.0).sqrt();
    let values: Vec<f64> = mean.values().iter().map(|&v| gain * v).collect();
    GridFunction::new(Interval::new(u_lo / m, u_hi / m)?, values)
}

/// Reconstructs the level-k field on `target` from its `xi` representation:
/// `omega_k(x) = phi(L * xi_k(x / s_k))`. Values always lie in [-1, 1].
pub fn reconstruct_omega(
    xi_k: &GridFunction,
    k: u32,
    params: &CascadeParams,
    target: Interval,
) -> Result<GridFunction> {
    let s_k = params.s_k(k);
    let needed = target.scale(1.0 / s_k);
    if !xi_k.domain().contains_interval(&needed) {
        return Err(Error::domain(
            format!("reconstruct_omega level {k}"),
            needed,
            xi_k.domain(),
        ));
    }
    let out = GridSpec::with_step(target, s_k * xi_k.step())?;
    let mut values = Vec::with_capacity(out.n());
    for x in out.abscissae() {
        values.push(phi(params.l * xi_k.evaluate(x / s_k)?));
    }
    GridFunction::new(target, values)
}

/// The cumulative scaling map on `target`:
/// `(S xi)(x) = 1/sqrt(M) * integral of phi(L xi) over [0, Mx]`.
///
/// The output grid is anchored at integer multiples of its step so that 0 is
/// a grid point whenever the target contains it, making the value at `x = 0`
/// exactly 0. The grid may end up narrower than `target` by less than one
/// step on either side.
pub fn s_map(xi: &GridFunction, params: &CascadeParams, target: Interval) -> Result<GridFunction> {
    let step = xi.step() / params.m;
    let j_min = (target.lo() / step - 1e-9).ceil() as i64;
    let j_max = (target.hi() / step + 1e-9).floor() as i64;
    if j_max - j_min < 1 {
        // Target shorter than one output cell: use its endpoints directly.
        let values = s_eval(xi, params, target, [target.lo(), target.hi()].into_iter())?;
        return GridFunction::new(target, values);
    }
    let xs = (j_min..=j_max).map(|j| j as f64 * step);
    let values = s_eval(xi, params, target, xs)?;
    GridFunction::new(
        Interval::new(j_min as f64 * step, j_max as f64 * step)?,
        values,
    )
}

/// The scaling map evaluated at explicit abscissae; shares the integration
/// path with [`s_map`]. The likelihood uses this to read the forward image
/// exactly at observation points.
pub fn s_map_at(xi: &GridFunction, params: &CascadeParams, points: &[f64]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("s_map_at needs at least one point"));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    s_eval(xi, params, Interval::new(lo, hi)?, points.iter().copied())
}

/// Shared evaluation core of the scaling map: checks coverage of `span`,
/// clips the input once, then reads `1/sqrt(M) * (P(Mx) - P(0))` off the
/// prefix integral for every requested abscissa.
fn s_eval(
    xi: &GridFunction,
    params: &CascadeParams,
    span: Interval,
    xs: impl Iterator<Item = f64>,
) -> Result<Vec<f64>> {
    let m = params.m;
    let needed = Interval::new((m * span.lo()).min(0.0), (m * span.hi()).max(0.0))?;
    if !xi.domain().contains_interval(&needed) {
        return Err(Error::domain("s_map", needed, xi.domain()));
    }
    let clipped = xi.map(|v| phi(params.l * v));
    let prefix = PrefixIntegral::new(&clipped);
    let origin = prefix.eval(0.0)?;
    let inv_sqrt_m = 1.0 / m.sqrt();
    xs.map(|x| Ok((prefix.eval(m * x)? - origin) * inv_sqrt_m))
        .collect()
}

/// Monte-Carlo estimate of the integrated two-point correlation of the
/// clipped field: the average over samples of
/// `integral over [0, 2] of phi(L xi(0)) phi(L xi(x)) dx`.
pub fn b_functional(samples: &[&GridFunction], l: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("b_functional needs a nonempty collection"));
    }
    let window = Interval::new(0.0, 2.0)?;
    let mut total = 0.0;
    for xi in samples.iter().copied() {
        if !xi.domain().contains_interval(&window) {
            return Err(Error::domain("b_functional", window, xi.domain()));
        }
        let v0 = phi(l * xi.evaluate(0.0)?);
        let spec = GridSpec::with_step(window, xi.step())?;
        let prod = GridFunction::from_fn(&spec, |x| {
            v0 * phi(l * xi.evaluate(x).expect("inside checked window"))
        })?;
        total += prod.integrate(0.0, 2.0)?;
    }
    Ok(total / samples.len() as f64)
}

/// Where each level of the tower must be known, plus the prior dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPlan {
    /// Required interval per level, index k-1 for k = 1..=N.
    pub intervals: Vec<Interval>,
    /// Number of grid points of the top-level prior.
    pub prior_points: usize,
    /// Interval on which the scaled image of the bottom field is produced.
    pub s_image: Interval,
}

impl DomainPlan {
    pub fn level(&self, k: u32) -> Interval {
        self.intervals[k as usize - 1]
    }

    pub fn top(&self) -> Interval {
        *self.intervals.last().expect("plan has >= 1 level")
    }

    /// Grid skeleton of the top-level prior: `prior_points` points on the
    /// top interval.
    pub fn prior_grid(&self) -> GridSpec {
        GridSpec::new(self.top(), self.prior_points).expect("prior grid")
    }
}

/// Unrolls the domain requirements: the bottom field is needed on
/// `[-(M-1), M^2-M-1]` (covering the scaled image on
/// `[-1+1/M, (M-1)-1/M]` and the unit interval of the bottom level), and
/// each step upward widens the requirement to `[M lo - (M-1), M hi + (M-1)]`.
pub fn plan_domains(params: &CascadeParams) -> DomainPlan {
    let m = params.m;
    let mut intervals = Vec::with_capacity(params.n_levels as usize);
    let mut lo = -(m - 1.0);
    let mut hi = m * m - m - 1.0;
    intervals.push(Interval::new(lo, hi).expect("level interval"));
    for _ in 1..params.n_levels {
        lo = m * lo - (m - 1.0);
        hi = m * hi + (m - 1.0);
        intervals.push(Interval::new(lo, hi).expect("level interval"));
    }
    DomainPlan {
        intervals,
        prior_points: prior_dimension(m, params.n_levels),
        s_image: Interval::new(-1.0 + 1.0 / m, (m - 1.0) - 1.0 / m).expect("s image"),
    }
}

/// One realized tower: `xi` and `omega` at every level plus the scaled image
/// of the bottom field, tagged with the randomness that produced it.
#[derive(Debug, Clone)]
pub struct NoiseSample {
    xi: Vec<GridFunction>,
    omega: Vec<GridFunction>,
    s_image: GridFunction,
    pub seed: u64,
    pub w_id: u64,
    pub draw_idx: u64,
}

impl NoiseSample {
    pub fn n_levels(&self) -> u32 {
        self.xi.len() as u32
    }

    pub fn xi(&self, k: u32) -> &GridFunction {
        &self.xi[k as usize - 1]
    }

    pub fn omega(&self, k: u32) -> &GridFunction {
        &self.omega[k as usize - 1]
    }

    pub fn s_image(&self) -> &GridFunction {
        &self.s_image
    }
}

/// Margin by which omega grids extend past [0, 1] at level `k`, so the
/// decomposition windows near the boundary stay computable.
pub fn omega_margin(params: &CascadeParams, k: u32) -> f64 {
    2.0 * params.s_k(k)
}

/// Materializes the full tower below a realized top-level field: `xi` levels
/// by repeated recursion, `omega` levels on `[-2 s_k, 1 + 2 s_k]`, and the
/// scaled image of the bottom field.
pub fn build_tower(
    xi_top: GridFunction,
    params: &CascadeParams,
    seed: u64,
    w_id: u64,
    draw_idx: u64,
) -> Result<NoiseSample> {
    let plan = plan_domains(params);
    let n = params.n_levels;
    let mut xi_rev = Vec::with_capacity(n as usize);
    xi_rev.push(xi_top);
    for _ in 1..n {
        let next = xi_step(xi_rev.last().expect("nonempty"), params)?;
        xi_rev.push(next);
    }
    xi_rev.reverse(); // now index k-1 holds level k
    let mut omega = Vec::with_capacity(n as usize);
    for k in 1..=n {
        let margin = omega_margin(params, k);
        let target = Interval::new(-margin, 1.0 + margin)?;
        omega.push(reconstruct_omega(&xi_rev[k as usize - 1], k, params, target)?);
    }
    let s_image = s_map(&xi_rev[0], params, plan.s_image)?;
    Ok(NoiseSample {
        xi: xi_rev,
        omega,
        s_image,
        seed,
        w_id,
        draw_idx,
    })
}
