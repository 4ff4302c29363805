//! Uniformly sampled real functions on intervals.
//!
//! `GridFunction` is the discrete stand-in for continuous functions: a
//! uniform grid of abscissae with one value per point, linear interpolation
//! between points, and trapezoid quadrature. Window maps are served by
//! [`PrefixIntegral`], which makes any number of window integrals O(1) each
//! after an O(n) pass.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of a grid step below which an interpolation query snaps to the
/// nearest grid point, keeping evaluation exact on grid abscissae.
const SNAP_FRAC: f64 = 1e-9;

/// A closed interval `[lo, hi]` with `lo <= hi`.
///
/// Empty intervals are never encoded as `lo > hi`; APIs that can produce an
/// empty result return `Option<Interval>` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "interval endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(Error::invalid(format!(
                "interval requires lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Absolute tolerance used for containment checks, scaled to the
    /// magnitude of the endpoints so that windows which touch the boundary
    /// up to rounding still count as inside.
    pub fn tol(&self) -> f64 {
        1e-9 * self.lo.abs().max(self.hi.abs()).max(1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo - self.tol() && x <= self.hi + self.tol()
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.contains(other.lo) && self.contains(other.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Interval scaled about the origin by `factor > 0`.
    pub fn scale(&self, factor: f64) -> Interval {
        debug_assert!(factor > 0.0);
        Interval {
            lo: self.lo * factor,
            hi: self.hi * factor,
        }
    }

    pub fn translate(&self, offset: f64) -> Interval {
        Interval {
            lo: self.lo + offset,
            hi: self.hi + offset,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}", self.lo, self.hi)
    }
}

/// Grid skeleton: a domain plus a point count, without values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    domain: Interval,
    n: usize,
}

impl GridSpec {
    pub fn new(domain: Interval, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid needs >= 2 points, got {n}")));
        }
        if domain.length() <= 0.0 {
            return Err(Error::invalid(format!(
                "grid domain must have positive length, got [{domain}]"
            )));
        }
        Ok(GridSpec { domain, n })
    }

    /// Skeleton with approximately the requested step; the step is adjusted
    /// so that an integer number of cells spans the domain exactly.
    pub fn with_step(domain: Interval, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::invalid(format!("grid step must be > 0, got {step}")));
        }
        let cells = (domain.length() / step).round().max(1.0) as usize;
        GridSpec::new(domain, cells + 1)
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.domain.length() / (self.n - 1) as f64
    }

    pub fn abscissa(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        self.domain.lo + i as f64 * self.step()
    }

    pub fn abscissae(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.abscissa(i))
    }
}

/// A function sampled on a uniform grid, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    domain: Interval,
    step: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: Interval, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "grid function needs >= 2 values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite grid value {v}")));
        }
        let step = domain.length() / (values.len() - 1) as f64;
        if !(step > 0.0) {
            return Err(Error::invalid(format!(
                "degenerate grid: domain [{domain}] with {} values",
                values.len()
            )));
        }
        Ok(GridFunction {
            domain,
            step,
            values,
        })
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = spec.abscissae().map(f).collect();
        GridFunction::new(spec.domain(), values)
    }

    pub fn constant(spec: &GridSpec, c: f64) -> Result<Self> {
        GridFunction::new(spec.domain(), vec![c; spec.n()])
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            domain: self.domain,
            n: self.values.len(),
        }
    }

    pub fn abscissa(&self, i: usize) -> f64 {
        self.domain.lo + i as f64 * self.step
    }

    /// Pointwise map of the values, keeping the grid. The result must stay
    /// finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            domain: self.domain,
            step: self.step,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Locate `x` in the grid: cell index `i` and fraction within the cell.
    /// Fractions within `SNAP_FRAC` of a grid point are snapped so that
    /// evaluation at grid abscissae is exact.
    fn locate(&self, x: f64, context: &str) -> Result<(usize, f64)> {
        if !self.domain.contains(x) {
            return Err(Error::domain(
                context.to_string(),
                Interval { lo: x, hi: x },
                self.domain,
            ));
        }
        let clamped = x.clamp(self.domain.lo, self.domain.hi);
        let t = (clamped - self.domain.lo) / self.step;
        let mut i = t.floor() as usize;
        let last_cell = self.values.len() - 2;
        if i > last_cell {
            i = last_cell;
        }
        let mut frac = t - i as f64;
        if frac < SNAP_FRAC {
            frac = 0.0;
        } else if frac > 1.0 - SNAP_FRAC {
            i += 1;
            frac = 0.0;
            if i > last_cell {
                return Ok((last_cell, 1.0));
            }
        }
        Ok((i, frac))
    }

    /// Linear interpolation between neighboring grid values; exact at grid
    /// points.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let (i, frac) = self.locate(x, "evaluate")?;
        if frac == 0.0 {
            Ok(self.values[i])
        } else if frac == 1.0 {
            Ok(self.values[i + 1])
        } else {
            Ok(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
        }
    }

    /// Signed trapezoid integral from `a` to `b`, with interpolated partial
    /// trapezoids where the endpoints fall between grid points. This is the
    /// direct, cell-by-cell route; window maps use [`PrefixIntegral`] and are
    /// cross-checked against this implementation.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Ok(-self.integrate(b, a)?);
        }
        let (ia, fa) = self.locate(a, "integrate")?;
        let (ib, fb) = self.locate(b, "integrate")?;
        let va = self.value_in_cell(ia, fa);
        let vb = self.value_in_cell(ib, fb);
        if ia == ib {
            return Ok((fb - fa) * self.step * 0.5 * (va + vb));
        }
        // Partial trapezoid up to the end of cell ia.
        let mut total = (1.0 - fa) * self.step * 0.5 * (va + self.values[ia + 1]);
        for j in (ia + 1)..ib {
            total += self.step * 0.5 * (self.values[j] + self.values[j + 1]);
        }
        total += fb * self.step * 0.5 * (self.values[ib] + vb);
        Ok(total)
    }

    fn value_in_cell(&self, i: usize, frac: f64) -> f64 {
        if frac == 0.0 {
            self.values[i]
        } else if frac == 1.0 {
            self.values[i + 1]
        } else {
            self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
        }
    }

    /// Centered moving average `g(x) = 1/(2w) * integral of f over
    /// [x-w, x+w]` evaluated on `out`. Prefix sums make the total cost linear
    /// in input plus output size.
    pub fn sliding_mean(&self, half_width: f64, out: &GridSpec) -> Result<GridFunction> {
        if !(half_width > 0.0) {
            return Err(Error::invalid(format!(
                "sliding_mean half_width must be > 0, got {half_width}"
            )));
        }
        let needed = Interval {
            lo: out.domain().lo - half_width,
            hi: out.domain().hi + half_width,
        };
        if !self.domain.contains_interval(&needed) {
            return Err(Error::domain("sliding_mean", needed, self.domain));
        }
        let prefix = PrefixIntegral::new(self);
        let inv = 1.0 / (2.0 * half_width);
        let values: Vec<f64> = out
            .abscissae()
            .map(|x| Ok(prefix.between(x - half_width, x + half_width)? * inv))
            .collect::<Result<_>>()?;
        GridFunction::new(out.domain(), values)
    }

    /// Writes `x,value` CSV plus a JSON sidecar describing the grid. The
    /// sidecar lands next to the CSV with extension `.json`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.values.len() * 24 + 16);
        out.push_str("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            use fmt::Write as _;
            let _ = writeln!(out, "{},{}", self.abscissa(i), v);
        }
        let mut file = fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        let sidecar = Sidecar {
            domain_lo: self.domain.lo,
            domain_hi: self.domain.hi,
            step: self.step,
            n: self.values.len(),
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::invalid(format!("sidecar serialization: {e}")))?;
        fs::write(sidecar_path(path), json)?;
        Ok(())
    }

    /// Reads a grid function written by [`GridFunction::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let sidecar_file = sidecar_path(path);
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(&sidecar_file)?)
            .map_err(|e| Error::Parse {
                path: sidecar_file.display().to_string(),
                message: e.to_string(),
            })?;
        let text = fs::read_to_string(path)?;
        let mut values = Vec::with_capacity(sidecar.n);
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                continue;
            }
            let value = line
                .split(',')
                .nth(1)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("bad row {}: {line:?}", lineno + 1),
                })?;
            values.push(value);
        }
        if values.len() != sidecar.n {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("expected {} rows, found {}", sidecar.n, values.len()),
            });
        }
        GridFunction::new(Interval::new(sidecar.domain_lo, sidecar.domain_hi)?, values)
    }
}

fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    domain_lo: f64,
    domain_hi: f64,
    step: f64,
    n: usize,
}

/// Compensated prefix sums of the trapezoid integral of a grid function.
///
/// `prefix[i]` holds the integral from the first abscissa to the `i`-th one;
/// arbitrary windows are then two lookups plus interpolated partial
/// trapezoids. Neumaier compensation keeps the prefix error at a few ulps of
/// the running integral, independent of grid length.
pub struct PrefixIntegral<'a> {
    f: &'a GridFunction,
    prefix: Vec<f64>,
}

impl<'a> PrefixIntegral<'a> {
    pub fn new(f: &'a GridFunction) -> Self {
        let v = f.values();
        let mut prefix = Vec::with_capacity(v.len());
        prefix.push(0.0);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        let half_step = 0.5 * f.step();
        for j in 0..v.len() - 1 {
            let term = half_step * (v[j] + v[j + 1]);
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
            prefix.push(sum + comp);
        }
        PrefixIntegral { f, prefix }
    }

    /// Integral from the grid origin to `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (i, frac) = self.f.locate(t, "prefix integral")?;
        if frac == 0.0 {
            return Ok(self.prefix[i]);
        }
        if frac == 1.0 {
            return Ok(self.prefix[i + 1]);
        }
        let vt = self.f.value_in_cell(i, frac);
        Ok(self.prefix[i] + frac * self.f.step() * 0.5 * (self.f.values()[i] + vt))
    }

    /// Signed integral from `a` to `b`.
    pub fn between(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.eval(b)? - self.eval(a)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, n: usize) -> GridSpec {
        GridSpec::new(Interval::new(lo, hi).unwrap(), n).unwrap()
    }

    #[test]
    fn integrate_constant() {
        let f = GridFunction::constant(&grid(0.0, 10.0, 11), 1.0).unwrap();
        assert!((f.integrate(0.0, 3.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_linear_exact() {
        let f = GridFunction::from_fn(&grid(0.0, 1.0, 3), |x| x).unwrap();
        assert!((f.integrate(0.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn integrate_orientation() {
        let f = GridFunction::constant(&grid(0.0, 10.0, 11), 1.0).unwrap();
        assert!((f.integrate(3.0, 0.0).unwrap() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_rejects_out_of_domain() {
        let f = GridFunction::constant(&grid(0.0, 1.0, 5), 1.0).unwrap();
        assert!(matches!(
            f.integrate(0.0, 2.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn evaluate_interpolates() {
        let f = GridFunction::new(Interval::new(0.0, 1.0).unwrap(), vec![0.0, 2.0]).unwrap();
        assert_eq!(f.evaluate(0.5).unwrap(), 1.0);
        assert_eq!(f.evaluate(0.0).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_linear_exactness() {
        let f = GridFunction::from_fn(&grid(0.0, 1.0, 5), |x| x).unwrap();
        assert!((f.evaluate(0.25).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sliding_mean_constant() {
        let f = GridFunction::constant(&grid(-2.0, 2.0, 41), 3.5).unwrap();
        let out = grid(-1.0, 1.0, 21);
        let g = f.sliding_mean(1.0, &out).unwrap();
        for &v in g.values() {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sliding_mean_odd_integrand() {
        let f = GridFunction::from_fn(&grid(-2.0, 2.0, 41), |x| x).unwrap();
        let out = grid(-0.5, 0.5, 11);
        let g = f.sliding_mean(1.0, &out).unwrap();
        assert!(g.evaluate(0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sliding_mean_quadratic() {
        // mean of x^2 over [-1, 1] is 1/3; trapezoid bias is O(step^2).
        let f = GridFunction::from_fn(&grid(-2.0, 2.0, 33), |x| x * x).unwrap();
        let out = grid(-0.5, 0.5, 9);
        let g = f.sliding_mean(1.0, &out).unwrap();
        let step = f.step();
        assert!((g.evaluate(0.0).unwrap() - 1.0 / 3.0).abs() < step * step);
    }

    #[test]
    fn sliding_mean_insufficient_domain() {
        let f = GridFunction::constant(&grid(0.0, 1.0, 11), 1.0).unwrap();
        let out = grid(0.0, 1.0, 11);
        assert!(matches!(
            f.sliding_mean(0.5, &out),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let f = GridFunction::from_fn(&grid(-1.5, 2.5, 17), |x| (x * 3.1).sin()).unwrap();
        f.write_csv(&path).unwrap();
        let g = GridFunction::read_csv(&path).unwrap();
        assert_eq!(f, g);
    }

    proptest! {
        #[test]
        fn integrate_additive(
            vals in prop::collection::vec(-10.0f64..10.0, 8..40),
            splits in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let n = vals.len();
            let f = GridFunction::new(Interval::new(0.0, n as f64 - 1.0).unwrap(), vals).unwrap();
            let span = f.domain().length();
            let mut pts: Vec<f64> = splits.iter().map(|s| s * span).collect();
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (a, b, c) = (pts[0], pts[1], pts[2]);
            let lhs = f.integrate(a, b).unwrap() + f.integrate(b, c).unwrap();
            let rhs = f.integrate(a, c).unwrap();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn prefix_matches_naive(
            vals in prop::collection::vec(-5.0f64..5.0, 16..64),
            w in 0.3f64..2.0,
        ) {
            let n = vals.len();
            let f = GridFunction::new(Interval::new(0.0, (n - 1) as f64 * 0.25).unwrap(), vals)
                .unwrap();
            let lo = f.domain().lo() + w;
            let hi = f.domain().hi() - w;
            prop_assume!(hi - lo > 0.5);
            let out = GridSpec::new(Interval::new(lo, hi).unwrap(), 13).unwrap();
            let g = f.sliding_mean(w, &out).unwrap();
            for (i, x) in out.abscissae().enumerate() {
                let direct = f.integrate(x - w, x + w).unwrap() / (2.0 * w);
                prop_assert!((g.values()[i] - direct).abs() < 1e-10);
            }
        }

        #[test]
        fn evaluate_exact_on_grid(vals in prop::collection::vec(-5.0f64..5.0, 4..32)) {
            let f = GridFunction::new(
                Interval::new(-3.0, vals.len() as f64).unwrap(),
                vals.clone(),
            ).unwrap();
            for i in 0..vals.len() {
                prop_assert_eq!(f.evaluate(f.abscissa(i)).unwrap(), vals[i]);
            }
        }
    }
}
