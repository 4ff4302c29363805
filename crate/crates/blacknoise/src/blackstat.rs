//! The H1 blackness statistic and distributional diagnostics.
//!
//! For a functional `f` of the noise, H1 is the limit over refining interval
//! partitions of the summed variances of the interval-conditional
//! expectations; it vanishes for every functional exactly when the noise is
//! black. Here `f` is the unit-interval integral of a fixed level field, and
//! the conditional expectation given the interval `(t_prev, t]` is estimated
//! by the field integral over the interval shrunk by the level's influence
//! radius.

use rand::Rng;

use crate::cascade::NoiseSample;
use crate::error::{Error, Result};
use crate::gridfn::{GridFunction, PrefixIntegral};
use crate::measures::{gamma_covariance, RngSeed, WienerScale};

/// Number of bootstrap resamples behind every reported standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Minimum number of samples the H1 estimator accepts.
pub const MIN_SAMPLES: usize = 30;

/// Interior partition points `t_1 < ... < t_n` inside (0, 1), with the
/// convention `t_0 = -inf`, `t_{n+1} = +inf`.
///
/// The trivial partition (no interior points, one unrestricted cell) is the
/// coarsest element of the refinement net; it arises at levels whose
/// influence radius is too large to admit any interior point, where the
/// single-cell estimate is simply the variance of the functional itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    points: Vec<f64>,
}

impl Partition {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid(
                "partition needs at least one point; use Partition::trivial() for the \
                 single-cell case",
            ));
        }
        for w in points.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "partition points must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if points[0] <= 0.0 || *points.last().expect("nonempty") >= 1.0 {
            return Err(Error::invalid(format!(
                "partition points must lie strictly inside (0, 1), got [{}, {}]",
                points[0],
                points.last().expect("nonempty")
            )));
        }
        Ok(Partition { points })
    }

    /// The coarsest partition: no interior points, one cell spanning the
    /// whole line.
    pub fn trivial() -> Partition {
        Partition { points: Vec::new() }
    }

    /// Uniform partition for a level with influence radius `margin`: cells
    /// of mesh as close as possible to `max(4 * margin, 0.1)`. Levels whose
    /// radius admits no interior point get the trivial partition.
    pub fn uniform_for_margin(margin: f64) -> Partition {
        let mesh = (4.0 * margin).max(0.1);
        let cells = (1.0 / mesh).round().max(1.0) as usize;
        let points = (1..cells).map(|l| l as f64 / cells as f64).collect();
        Partition { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of interior points.
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Number of cells, one more than the interior point count.
    pub fn n_cells(&self) -> usize {
        self.points.len() + 1
    }

    /// Smallest gap between consecutive finite points; infinite for a single
    /// point.
    pub fn min_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Cells as `(t_prev, t)` pairs including the two infinite ends.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let mut cells = Vec::with_capacity(self.n_cells());
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.points {
            cells.push((prev, t));
            prev = t;
        }
        cells.push((prev, f64::INFINITY));
        cells
    }
}

/// Per-level H1 estimate with its Monte-Carlo uncertainty.
#[derive(Debug, Clone)]
pub struct H1Report {
    pub level: u32,
    pub partition: Partition,
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Variance contribution of each cell; the estimate is their sum.
    pub per_interval: Vec<f64>,
}

/// Unit-interval integral of a level field.
pub fn unit_integral(omega_k: &GridFunction) -> Result<f64> {
    omega_k.integrate(0.0, 1.0)
}

/// `f_k`: the unit-interval integral of level `k` of a sample tower.
pub fn f_k(sample: &NoiseSample, k: u32) -> Result<f64> {
    if k < 1 || k > sample.n_levels() {
        return Err(Error::invalid(format!(
            "level {k} outside tower with {} levels",
            sample.n_levels()
        )));
    }
    unit_integral(sample.omega(k))
}

/// Resolves the integration bounds for the conditional-expectation estimate
/// on the cell `(t_prev, t]`: the cell intersected with [0, 1] and shrunk by
/// `margin` at each finite end. Returns `None` when the shrunk interval is
/// empty.
fn shrunk_bounds(margin: f64, t_prev: f64, t: f64) -> Option<(f64, f64)> {
    let a = if t_prev == f64::NEG_INFINITY {
        0.0
    } else {
        (t_prev + margin).max(0.0)
    };
    let b = if t == f64::INFINITY {
        1.0
    } else {
        (t - margin).min(1.0)
    };
    (a < b).then_some((a, b))
}

/// Estimate of the conditional expectation of the unit-interval integral
/// given the interval `(t_prev, t]`: the field integral over the shrunk
/// cell, or 0 when the shrunk cell is empty. `t_prev`/`t` may be infinite.
pub fn cond_exp_estimate(omega_k: &GridFunction, margin: f64, t_prev: f64, t: f64) -> Result<f64> {
    if t_prev >= t {
        return Err(Error::invalid(format!(
            "cond_exp_estimate requires t_prev < t, got {t_prev} >= {t}"
        )));
    }
    match shrunk_bounds(margin, t_prev, t) {
        Some((a, b)) => omega_k.integrate(a, b),
        None => Ok(0.0),
    }
}

/// All cell integrals of one sample in one prefix pass; agrees with
/// [`cond_exp_estimate`] cell by cell.
pub fn cell_integrals(
    omega_k: &GridFunction,
    margin: f64,
    partition: &Partition,
) -> Result<Vec<f64>> {
    let prefix = PrefixIntegral::new(omega_k);
    partition
        .cells()
        .into_iter()
        .map(|(t_prev, t)| match shrunk_bounds(margin, t_prev, t) {
            Some((a, b)) => prefix.between(a, b),
            None => Ok(0.0),
        })
        .collect()
}

/// H1 estimate from precomputed per-sample cell integrals (one row per
/// sample, one column per cell): the sum over cells of the unbiased sample
/// variance, with a nonparametric bootstrap standard error.
pub fn h1_from_cells(
    rows: &[Vec<f64>],
    level: u32,
    partition: Partition,
    seed: RngSeed,
) -> Result<H1Report> {
    let n = rows.len();
    if n < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "h1 estimate needs >= {MIN_SAMPLES} samples, got {n}"
        )));
    }
    let n_cells = partition.n_cells();
    for row in rows {
        if row.len() != n_cells {
            return Err(Error::invalid(format!(
                "cell row length {} does not match partition with {n_cells} cells",
                row.len()
            )));
        }
    }
    let per_interval: Vec<f64> = (0..n_cells).map(|l| column_variance(rows, l)).collect();
    let estimate: f64 = per_interval.iter().sum();

    let mut rng = seed.rng();
    let mut resample: Vec<usize> = vec![0; n];
    let mut boot = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        let total: f64 = (0..n_cells)
            .map(|l| resampled_column_variance(rows, &resample, l))
            .sum();
        boot.push(total);
    }
    let boot_mean = boot.iter().sum::<f64>() / boot.len() as f64;
    let std_error = (boot
        .iter()
        .map(|b| (b - boot_mean) * (b - boot_mean))
        .sum::<f64>()
        / (boot.len() - 1) as f64)
        .sqrt();

    Ok(H1Report {
        level,
        partition,
        estimate,
        std_error,
        n_samples: n,
        per_interval,
    })
}

fn column_variance(rows: &[Vec<f64>], col: usize) -> f64 {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[col]).sum::<f64>() / n;
    rows.iter()
        .map(|r| {
            let d = r[col] - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0)
}

fn resampled_column_variance(rows: &[Vec<f64>], idx: &[usize], col: usize) -> f64 {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| rows[i][col]).sum::<f64>() / n;
    idx.iter()
        .map(|&i| {
            let d = rows[i][col] - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0)
}

/// H1 estimate for a collection of level fields. `margin` is the level's
/// influence radius; consecutive partition points must be more than twice
/// that apart.
pub fn h1_estimate<'a>(
    omegas: impl IntoIterator<Item = &'a GridFunction>,
    margin: f64,
    level: u32,
    partition: &Partition,
    seed: RngSeed,
) -> Result<H1Report> {
    if partition.min_gap() <= 2.0 * margin {
        return Err(Error::invalid(format!(
            "partition gap {} must exceed twice the margin {margin}",
            partition.min_gap()
        )));
    }
    let rows: Vec<Vec<f64>> = omegas
        .into_iter()
        .map(|omega| cell_integrals(omega, margin, partition))
        .collect::<Result<_>>()?;
    h1_from_cells(&rows, level, partition.clone(), seed)
}

/// One row of a diagnostics table: an empirical quantity against its
/// analytic target.
#[derive(Debug, Clone)]
pub struct DiagnosticRow {
    pub kind: String,
    pub abscissa: f64,
    pub empirical: f64,
    pub target: f64,
}

/// Empirical stationary covariance of field samples at the requested lags
/// against the triangular kernel. Lags are snapped to the nearest grid
/// multiple; products are averaged over all admissible positions and
/// samples.
pub fn gamma_diagnostic(samples: &[&GridFunction], lags: &[f64]) -> Result<Vec<DiagnosticRow>> {
    if samples.is_empty() {
        return Err(Error::invalid("gamma_diagnostic needs samples"));
    }
    let mut rows = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for xi in samples.iter().copied() {
            let step = xi.step();
            let offset = (lag / step).round() as usize;
            if (offset as f64 * step - lag).abs() > step * 0.5 + xi.domain().tol() {
                return Err(Error::invalid(format!(
                    "lag {lag} is not resolvable on a grid with step {step}"
                )));
            }
            let v = xi.values();
            if offset >= v.len() {
                return Err(Error::domain(
                    format!("gamma_diagnostic lag {lag}"),
                    xi.domain().translate(lag),
                    xi.domain(),
                ));
            }
            for i in 0..v.len() - offset {
                acc += v[i] * v[i + offset];
                count += 1;
            }
        }
        rows.push(DiagnosticRow {
            kind: "gamma_cov".to_string(),
            abscissa: lag,
            empirical: acc / count as f64,
            target: gamma_covariance(lag),
        });
    }
    Ok(rows)
}

/// Empirical variance of scaled-image increments `S(x) - S(0)` against the
/// Brownian target `sigma^2 x` at the canonical scale.
pub fn pushforward_diagnostic(samples: &[&GridFunction], xs: &[f64]) -> Result<Vec<DiagnosticRow>> {
    if samples.is_empty() {
        return Err(Error::invalid("pushforward_diagnostic needs samples"));
    }
    let sigma2 = WienerScale::canonical().variance();
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let mut increments = Vec::with_capacity(samples.len());
        for s in samples {
            increments.push(s.evaluate(x)? - s.evaluate(0.0)?);
        }
        let n = increments.len() as f64;
        let mean = increments.iter().sum::<f64>() / n;
        let var = if increments.len() > 1 {
            increments
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        rows.push(DiagnosticRow {
            kind: "s_var".to_string(),
            abscissa: x,
            empirical: var,
            target: sigma2 * x,
        });
    }
    Ok(rows)
}
