//! Seeded samplers for the probability laws the pipeline consumes.
//!
//! Every sampler is a pure function of its parameters and an [`RngSeed`];
//! identical seeds reproduce identical samples bit for bit, and distinct
//! stream ids give independent streams, which is what makes parallel chains
//! and byte-identical reruns possible.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridfn::{GridFunction, GridSpec};

/// Reproducible RNG handle: a base seed plus a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngSeed { seed, stream_id }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        RngSeed {
            seed: self.seed,
            stream_id,
        }
    }

    /// Counter-based generator positioned on this seed's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Stream-id allocation for the pipeline. Chains, observation paths and the
/// bootstrap each get a disjoint block so no two purposes ever share a
/// stream.
pub mod streams {
    const BLOCK: u64 = 1 << 32;

    pub fn wiener_path(w_id: u64) -> u64 {
        BLOCK + w_id
    }

    pub fn chain(w_id: u64) -> u64 {
        2 * BLOCK + w_id
    }

    pub fn bootstrap(level: u64) -> u64 {
        3 * BLOCK + level
    }

    pub fn white_sample(index: u64) -> u64 {
        4 * BLOCK + index
    }

    pub fn diagnostics(index: u64) -> u64 {
        5 * BLOCK + index
    }
}

/// Scale of a centered Wiener law: covariance `sigma^2 * min(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerScale {
    sigma: f64,
}

impl WienerScale {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("wiener scale must be > 0, got {sigma}")));
        }
        Ok(WienerScale { sigma })
    }

    /// The pipeline's canonical observation scale `2 sqrt((pi-2)/pi)`.
    pub fn canonical() -> Self {
        WienerScale {
            sigma: 2.0 * ((PI - 2.0) / PI).sqrt(),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Variance of the stationary Gaussian field at lag zero, `2(pi-2)/pi`.
pub fn gamma_variance() -> f64 {
    2.0 * (PI - 2.0) / PI
}

/// Covariance kernel of the stationary Gaussian field:
/// `2 (pi-2)/pi * max(0, 1 - |lag|/2)`.
pub fn gamma_covariance(lag: f64) -> f64 {
    gamma_variance() * (1.0 - 0.5 * lag.abs()).max(0.0)
}

/// Samples the stationary Gaussian field with the triangular covariance
/// kernel, exactly, via its moving-average representation
/// `xi(x) = sqrt((pi-2)/pi) * (W(x+1) - W(x-1))` driven by one auxiliary
/// Wiener path.
pub fn sample_gamma(grid: &GridSpec, seed: RngSeed) -> GridFunction {
    let n = grid.n();
    let step = grid.step();
    // The two combs {x_i - 1} and {x_i + 1} are each sorted; merge them,
    // sharing Wiener points that coincide (they do whenever 2 is an integer
    // number of steps).
    let eq_tol = step * 1e-9;
    let mut points: Vec<f64> = Vec::with_capacity(2 * n);
    let mut idx_minus = vec![0usize; n];
    let mut idx_plus = vec![0usize; n];
    let (mut i, mut j) = (0usize, 0usize);
    while i < n || j < n {
        let a = if i < n {
            grid.abscissa(i) - 1.0
        } else {
            f64::INFINITY
        };
        let b = if j < n {
            grid.abscissa(j) + 1.0
        } else {
            f64::INFINITY
        };
        if (a - b).abs() <= eq_tol {
            points.push(a);
            idx_minus[i] = points.len() - 1;
            idx_plus[j] = points.len() - 1;
            i += 1;
            j += 1;
        } else if a < b {
            points.push(a);
            idx_minus[i] = points.len() - 1;
            i += 1;
        } else {
            points.push(b);
            idx_plus[j] = points.len() - 1;
            j += 1;
        }
    }
    let mut rng = seed.rng();
    let mut w = Vec::with_capacity(points.len());
    w.push(0.0f64);
    for k in 1..points.len() {
        let gap = points[k] - points[k - 1];
        let z: f64 = rng.sample(StandardNormal);
        w.push(w[k - 1] + gap.sqrt() * z);
    }
    let c = ((PI - 2.0) / PI).sqrt();
    let values: Vec<f64> = (0..n).map(|k| c * (w[idx_plus[k]] - w[idx_minus[k]])).collect();
    GridFunction::new(grid.domain(), values).expect("gamma sample construction")
}

/// Scaled Wiener path on a grid starting at 0: `w(0) = 0` and independent
/// Gaussian increments of variance `sigma^2 * step`.
pub fn sample_scaled_wiener(
    scale: WienerScale,
    grid: &GridSpec,
    seed: RngSeed,
) -> Result<GridFunction> {
    if grid.domain().lo().abs() > grid.domain().tol() {
        return Err(Error::invalid(format!(
            "wiener grid must start at 0, got [{}]",
            grid.domain()
        )));
    }
    let sd = scale.sigma() * grid.step().sqrt();
    let mut rng = seed.rng();
    let mut values = Vec::with_capacity(grid.n());
    values.push(0.0f64);
    for k in 1..grid.n() {
        let z: f64 = rng.sample(StandardNormal);
        values.push(values[k - 1] + sd * z);
    }
    GridFunction::new(grid.domain(), values)
}

/// `d` independent standard normal coordinates: the prior on the discretized
/// top-level field.
pub fn sample_prior(d: usize, seed: RngSeed) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("prior dimension must be >= 1"));
    }
    let mut rng = seed.rng();
    Ok((0..d).map(|_| rng.sample(StandardNormal)).collect())
}

/// White-noise grid: independent values of variance `1/step` per grid point,
/// so window integrals reproduce Wiener integrals in the fine-grid limit.
pub fn sample_white_grid(grid: &GridSpec, seed: RngSeed) -> GridFunction {
    let sd = (1.0 / grid.step()).sqrt();
    let mut rng = seed.rng();
    let values: Vec<f64> = (0..grid.n())
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect();
    GridFunction::new(grid.domain(), values).expect("white grid construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfn::Interval;

    fn spec(lo: f64, hi: f64, n: usize) -> GridSpec {
        GridSpec::new(Interval::new(lo, hi).unwrap(), n).unwrap()
    }

    #[test]
    fn samplers_are_deterministic() {
        let g = spec(0.0, 2.0, 41);
        let seed = RngSeed::new(7, 3);
        assert_eq!(sample_gamma(&g, seed), sample_gamma(&g, seed));
        assert_eq!(
            sample_white_grid(&g, seed).values(),
            sample_white_grid(&g, seed).values()
        );
        assert_eq!(sample_prior(64, seed).unwrap(), sample_prior(64, seed).unwrap());
        let w = spec(0.0, 1.0, 101);
        assert_eq!(
            sample_scaled_wiener(WienerScale::canonical(), &w, seed).unwrap(),
            sample_scaled_wiener(WienerScale::canonical(), &w, seed).unwrap()
        );
    }

    #[test]
    fn distinct_streams_differ() {
        let g = spec(0.0, 2.0, 21);
        let a = sample_gamma(&g, RngSeed::new(7, 1));
        let b = sample_gamma(&g, RngSeed::new(7, 2));
        assert_ne!(a, b);
    }

    #[test]
    fn wiener_starts_at_zero() {
        let w = spec(0.0, 3.0, 61);
        let path = sample_scaled_wiener(WienerScale::canonical(), &w, RngSeed::new(1, 0)).unwrap();
        assert_eq!(path.values()[0], 0.0);
    }

    #[test]
    fn wiener_rejects_shifted_grid() {
        let w = spec(1.0, 3.0, 11);
        assert!(sample_scaled_wiener(WienerScale::canonical(), &w, RngSeed::new(1, 0)).is_err());
    }

    #[test]
    fn prior_rejects_zero_dim() {
        assert!(sample_prior(0, RngSeed::new(1, 0)).is_err());
    }

    #[test]
    fn gamma_moving_average_overlap() {
        // Cov(W(x+1)-W(x-1), W(y+1)-W(y-1)) is the overlap of the two unit
        // windows; at 5e3 samples the empirical covariance of a two-point
        // grid must land near (pi-2)/pi * max(0, 2-|x-y|).
        let g = spec(0.0, 1.0, 2);
        let n = 5000;
        let (mut s00, mut s01) = (0.0, 0.0);
        for k in 0..n {
            let xi = sample_gamma(&g, RngSeed::new(42, k));
            s00 += xi.values()[0] * xi.values()[0];
            s01 += xi.values()[0] * xi.values()[1];
        }
        let var = s00 / n as f64;
        let cov = s01 / n as f64;
        assert!((var - gamma_covariance(0.0)).abs() < 0.05, "var {var}");
        assert!((cov - gamma_covariance(1.0)).abs() < 0.05, "cov {cov}");
    }

    #[test]
    fn canonical_scale_value() {
        let s = WienerScale::canonical();
        assert!((s.sigma() - 1.2056205499781738).abs() < 1e-12);
        assert!((s.variance() - 1.4535209105296745).abs() < 1e-12);
    }
}
