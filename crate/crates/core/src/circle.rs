//! Degree-one monotone circle-map lifts, rotation numbers with rational
//! snapping, invariant measures and semiconjugacies to rigid rotations.

use crate::error::{Error, Result};

/// Default number of samples of a [`MonotoneCircleLift`].
pub const DEFAULT_LIFT_GRID: usize = 4096;

/// Largest denominator tried when snapping a rotation number.
pub const MAX_DENOMINATOR: i64 = 1000;

/// Anything that evaluates a lift `F: R -> R` with `F(x + 1) = F(x) + 1`.
pub trait CircleLift {
    fn lift(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> CircleLift for F {
    fn lift(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Sampled monotone lift with monotone cubic Hermite interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneCircleLift {
    /// `F(i / G)` for `i = 0..=G`, with the last entry equal to `F(0) + 1`.
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl CircleLift for MonotoneCircleLift {
    fn lift(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

impl MonotoneCircleLift {
    /// Samples `f` on `grid` points of `[0, 1)` and extends by `F(x+1) = F(x)+1`.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: usize, f: F) -> Result<Self> {
        if grid < 8 {
            return Err(Error::domain("lift grid must have at least 8 points"));
        }
        let mut values: Vec<f64> = (0..grid).map(|i| f(i as f64 / grid as f64)).collect();
        values.push(values[0] + 1.0);
        for i in 0..grid {
            if !(values[i + 1] > values[i]) {
                return Err(Error::Validation {
                    point: format!("x = {}", i as f64 / grid as f64),
                    reason: format!(
                        "lift not strictly increasing ({} then {})",
                        values[i],
                        values[i + 1]
                    ),
                });
            }
        }
        let slopes = monotone_slopes(&values);
        Ok(MonotoneCircleLift { values, slopes })
    }

    pub fn identity(grid: usize) -> Self {
        Self::from_fn(grid, |x| x).expect("identity is monotone")
    }

    pub fn rotation(grid: usize, rho: f64) -> Self {
        Self::from_fn(grid, |x| x + rho).expect("rotation is monotone")
    }

    pub fn grid(&self) -> usize {
        self.values.len() - 1
    }

    /// Sampled values `F(i/G)`, `i = 0..G`.
    pub fn samples(&self) -> &[f64] {
        &self.values[..self.grid()]
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let g = self.grid();
        let k = x.floor();
        let t = (x - k) * g as f64;
        let i = (t as usize).min(g - 1);
        let u = t - i as f64;
        let h = 1.0 / g as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1 + k
    }

    /// Derivative of the interpolant.
    pub fn derivative(&self, x: f64) -> f64 {
        let g = self.grid();
        let k = x.floor();
        let t = (x - k) * g as f64;
        let i = (t as usize).min(g - 1);
        let u = t - i as f64;
        let h = 1.0 / g as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let u2 = u * u;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1
    }

    /// Solves `F(x) = y`.
    pub fn inverse_eval(&self, y: f64) -> f64 {
        invert_lift(self, y)
    }

    pub fn compose(&self, inner: &MonotoneCircleLift) -> Result<MonotoneCircleLift> {
        Self::from_fn(self.grid(), |x| self.eval(inner.eval(x)))
    }

    pub fn inverse(&self) -> MonotoneCircleLift {
        Self::from_fn(self.grid(), |y| self.inverse_eval(y))
            .expect("inverse of an increasing lift is increasing")
    }

    /// `sup |F(x) - x|` over the sample grid.
    pub fn max_displacement(&self) -> f64 {
        let g = self.grid();
        (0..g)
            .map(|i| (self.values[i] - i as f64 / g as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Fritsch-Carlson limited slopes from fourth-order centered differences.
fn monotone_slopes(values: &[f64]) -> Vec<f64> {
    let g = values.len() - 1;
    let gf = g as f64;
    let val = |i: isize| -> f64 {
        let n = i.rem_euclid(g as isize) as usize;
        let shift = i.div_euclid(g as isize) as f64;
        values[n] + shift
    };
    let secant: Vec<f64> = (0..g).map(|i| (values[i + 1] - values[i]) * gf).collect();
    let mut m: Vec<f64> = (0..g as isize)
        .map(|i| (-val(i + 2) + 8.0 * val(i + 1) - 8.0 * val(i - 1) + val(i - 2)) * gf / 12.0)
        .collect();
    for i in 0..g {
        let d = secant[i];
        let j = (i + 1) % g;
        let a = m[i] / d;
        let b = m[j] / d;
        if a < 0.0 {
            m[i] = 0.0;
        }
        if b < 0.0 {
            m[j] = 0.0;
        }
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * d;
            m[j] = tau * b * d;
        }
    }
    m.push(m[0]);
    m
}

/// Solves `F(x) = y` for an increasing lift by bracketing and bisection.
pub fn invert_lift<L: CircleLift + ?Sized>(f: &L, y: f64) -> f64 {
    let mut guess = y - (f.lift(y) - y);
    if !guess.is_finite() {
        guess = y;
    }
    let mut lo = guess;
    while f.lift(lo) > y {
        lo -= 1.0;
    }
    let mut hi = lo + 1.0;
    while f.lift(hi) < y {
        hi += 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.lift(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Confirmed rational rotation number `p/q` with a periodic point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RationalRotation {
    pub p: i64,
    pub q: i64,
    /// A point with `F^q(x) = x + p`.
    pub periodic_point: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationNumber {
    /// Snapped `p/q` when rational, otherwise the orbit average.
    pub value: f64,
    /// Orbit-average estimate before snapping.
    pub estimate: f64,
    pub error_bound: f64,
    pub rational: Option<RationalRotation>,
}

impl RotationNumber {
    pub fn is_rational(&self) -> bool {
        self.rational.is_some()
    }
}

/// Continued-fraction convergents `p/q` of `x` with `q <= max_q`.
pub fn convergents(x: f64, max_q: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i64;
        let p2 = a * p1 + p0;
        let q2 = a * q1 + q0;
        if q2 > max_q {
            break;
        }
        out.push((p2, q2));
        let frac = r - a as f64;
        if frac < 1e-15 {
            break;
        }
        r = 1.0 / frac;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    out
}

/// `F^q(x) - x - p`.
fn periodic_defect<L: CircleLift + ?Sized>(f: &L, x: f64, p: i64, q: i64) -> f64 {
    let mut y = x;
    let mut shift = 0.0;
    for _ in 0..q {
        y = f.lift(y);
        let k = y.floor();
        shift += k;
        y -= k;
    }
    (y + shift) - x - p as f64
}

/// Finds a point with `F^q(x) = x + p` by a grid scan and bisection.
pub fn find_periodic_point<L: CircleLift + ?Sized>(f: &L, p: i64, q: i64) -> Option<f64> {
    const SCAN: usize = 512;
    let d: Vec<f64> = (0..=SCAN)
        .map(|i| periodic_defect(f, i as f64 / SCAN as f64, p, q))
        .collect();
    for i in 0..SCAN {
        if d[i].abs() <= 1e-12 {
            return Some(i as f64 / SCAN as f64);
        }
        if (d[i] < 0.0) != (d[i + 1] < 0.0) {
            let (mut lo, mut hi) = (i as f64 / SCAN as f64, (i + 1) as f64 / SCAN as f64);
            let neg_lo = d[i] < 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (periodic_defect(f, mid, p, q) < 0.0) == neg_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
    }
    None
}

/// Orbit average `(F^n(0) - 0)/n` with error bound `1/n`, snapped to a
/// convergent `p/q` (`q <= 1000`) when a `q`-periodic point confirms it.
pub fn rotation_number<L: CircleLift + ?Sized>(f: &L, n_iter: usize) -> RotationNumber {
    let n = n_iter.max(1000);
    let mut x = 0.0f64;
    let mut acc = 0.0f64;
    for _ in 0..n {
        let y = f.lift(x);
        let k = y.floor();
        acc += k;
        x = y - k;
    }
    let estimate = (acc + x) / n as f64;
    let error_bound = 1.0 / n as f64;
    let mut rational = None;
    for (p, q) in convergents(estimate, MAX_DENOMINATOR) {
        let gap = (estimate - p as f64 / q as f64).abs();
        if gap <= error_bound && gap < 1.0 / (q * q) as f64 {
            if let Some(x0) = find_periodic_point(f, p, q) {
                rational = Some(RationalRotation {
                    p,
                    q,
                    periodic_point: x0,
                });
                break;
            }
        }
    }
    RotationNumber {
        value: rational.map_or(estimate, |r| r.p as f64 / r.q as f64),
        estimate,
        error_bound,
        rational,
    }
}

/// Measure on the circle: a sampled continuous part plus atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleMeasure {
    /// Cumulative mass of the continuous part at `j / bins`, `j = 0..=bins`.
    pub cdf_samples: Vec<f64>,
    /// Atoms `(position in [0,1), mass)`.
    pub atoms: Vec<(f64, f64)>,
}

impl CircleMeasure {
    pub fn lebesgue(bins: usize) -> Self {
        CircleMeasure {
            cdf_samples: (0..=bins).map(|j| j as f64 / bins as f64).collect(),
            atoms: Vec::new(),
        }
    }

    fn bins(&self) -> usize {
        self.cdf_samples.len() - 1
    }

    /// `mu[0, x)` for `x` in `[0, 1]`.
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let b = self.bins();
        let t = x * b as f64;
        let i = (t as usize).min(b - 1);
        let u = t - i as f64;
        let cont = self.cdf_samples[i] + u * (self.cdf_samples[i + 1] - self.cdf_samples[i]);
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|(pos, _)| *pos < x)
            .map(|(_, m)| m)
            .sum();
        cont + atoms
    }

    /// Mass of the lifted arc `[a, b)` with `a <= b`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let (fa, fb) = (a.floor(), b.floor());
        (fb - fa) + self.cdf(b - fb) - self.cdf(a - fa)
    }

    /// `sup_x |mu(F^{-1}[s, s + x)) - mu[s, s + x)|` over `grid` arcs from a
    /// base point `s` just off the grid.
    pub fn invariance_residual<L: CircleLift + ?Sized>(&self, f: &L, grid: usize) -> f64 {
        let s = 0.5 * (5f64.sqrt() - 1.0) / grid as f64;
        let base = invert_lift(f, s);
        (1..grid)
            .map(|i| {
                let x = s + i as f64 / grid as f64;
                let pre = invert_lift(f, x);
                (self.mass_between(base, pre) - self.mass_between(s, x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Invariant measure from `n_samples` orbit points binned on `bins` cells,
/// or atoms on a periodic orbit when the rotation number is rational.
pub fn invariant_measure_with<L: CircleLift + ?Sized>(
    f: &L,
    n_samples: usize,
    bins: usize,
) -> CircleMeasure {
    let rot = rotation_number(f, n_samples);
    if let Some(r) = rot.rational {
        let mass = 1.0 / r.q as f64;
        let mut atoms = Vec::with_capacity(r.q as usize);
        let mut x = r.periodic_point;
        for _ in 0..r.q {
            let w = x - x.floor();
            atoms.push((if w >= 1.0 { 0.0 } else { w }, mass));
            x = f.lift(x);
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        return CircleMeasure {
            cdf_samples: vec![0.0; bins + 1],
            atoms,
        };
    }
    let mut counts = vec![0u64; bins];
    let mut x = 0.0f64;
    for _ in 0..1000 {
        x = f.lift(x);
        x -= x.floor();
    }
    for _ in 0..n_samples {
        let j = ((x * bins as f64) as usize).min(bins - 1);
        counts[j] += 1;
        x = f.lift(x);
        x -= x.floor();
    }
    let mut cdf_samples = Vec::with_capacity(bins + 1);
    let mut acc = 0u64;
    cdf_samples.push(0.0);
    for c in counts {
        acc += c;
        cdf_samples.push(acc as f64 / n_samples as f64);
    }
    CircleMeasure {
        cdf_samples,
        atoms: Vec::new(),
    }
}

/// [`invariant_measure_with`] at `10^6` samples and the default grid.
pub fn invariant_measure<L: CircleLift + ?Sized>(f: &L) -> CircleMeasure {
    invariant_measure_with(f, 1_000_000, DEFAULT_LIFT_GRID)
}

/// Semiconjugacy `P` with `P o F = P + rho`, sampled as a lifted cdf.
#[derive(Clone, Debug, PartialEq)]
pub struct Semiconjugacy {
    pub measure: CircleMeasure,
    pub rho: f64,
    /// `sup |P(F(x)) - P(x) - rho|` over the check grid.
    pub defect: f64,
}

impl Semiconjugacy {
    /// Lifted `P(x) = floor(x) + mu[0, frac(x))`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = x.floor();
        k + self.measure.cdf(x - k)
    }
}

/// Largest accepted semiconjugacy defect.
pub const SEMICONJUGACY_TOL: f64 = 1e-3;

/// Semiconjugacy to the rigid rotation for an irrational rotation number.
pub fn semiconjugacy_to_rotation<L: CircleLift + ?Sized>(f: &L) -> Result<Semiconjugacy> {
    let rot = rotation_number(f, 1_000_000);
    if let Some(r) = rot.rational {
        return Err(Error::domain(format!(
            "rotation number is rational ({}/{}); use the periodic-orbit analysis instead",
            r.p, r.q
        )));
    }
    let measure = invariant_measure_with(f, 1_000_000, DEFAULT_LIFT_GRID);
    let mut semi = Semiconjugacy {
        measure,
        rho: rot.value,
        defect: 0.0,
    };
    let grid = DEFAULT_LIFT_GRID;
    semi.defect = (0..grid)
        .map(|i| {
            let x = i as f64 / grid as f64;
            (semi.eval(f.lift(x)) - semi.eval(x) - semi.rho).abs()
        })
        .fold(0.0, f64::max);
    if semi.defect >= SEMICONJUGACY_TOL {
        return Err(Error::Validation {
            point: "semiconjugacy grid".into(),
            reason: format!("defect {} exceeds {SEMICONJUGACY_TOL}", semi.defect),
        });
    }
    Ok(semi)
}
