//! A skew product on the 3-torus whose `us`-foliation has a single compact
//! leaf, built from the planar map `g(x, y) = (psi(x), lambda y + F(x))`
//! with `psi(x) = x + (2/3) sin x`.
//!
//! The unstable graph `u` through the expanding fixed point on `x = 0` and
//! the stable graph `c` through the saddle on `x = pi` satisfy
//! `G(psi(x)) = lambda G(x) + F(x)`. Both are computed by summing the
//! conjugated cocycle after subtracting the fixed value:
//!
//! * `u(x) - u(0) = sum_{k>=1} lambda^{k-1} (F(psi^-k x) - F(0))`. Backward
//!   orbits contract toward 0 at rate `1/psi'(0) = 3/5` and `F - F(0)` is
//!   quadratic at 0, so terms decay like `(9 lambda / 25)^k`.
//! * `c(x) - c(pi) = -sum_{k>=0} lambda^{-k-1} (F(psi^k x) - F(pi))`. Forward
//!   orbits contract toward `pi` at rate `psi'(pi) = 1/3`.

use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Largest accepted truncation bound of a graph series.
pub const SERIES_TAIL_TOL: f64 = 1e-10;
pub const GRAPH_RESIDUAL_TOL: f64 = 1e-9;
pub const DEFAULT_DEPTH: usize = 200;
/// Relative margin required between the growth rates in the cone check.
pub const CONE_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Forcing {
    /// `F(x) = cos x`.
    Cos,
    /// `F(x) = sin x - x`.
    SinMinusX,
}

impl Forcing {
    pub fn name(self) -> &'static str {
        match self {
            Forcing::Cos => "cos",
            Forcing::SinMinusX => "sin-minus-x",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(Forcing::Cos),
            "sin-minus-x" | "sin" | "odd" => Ok(Forcing::SinMinusX),
            other => Err(Error::domain(format!("unknown forcing variant `{other}`"))),
        }
    }

    pub fn value(self, x: f64) -> f64 {
        match self {
            Forcing::Cos => x.cos(),
            Forcing::SinMinusX => x.sin() - x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Forcing::Cos => -x.sin(),
            Forcing::SinMinusX => -2.0 * (0.5 * x).sin().powi(2),
        }
    }

    /// `F(x) - F(0)` without cancellation near 0.
    fn offset_from_origin(self, x: f64) -> f64 {
        match self {
            Forcing::Cos => -2.0 * (0.5 * x).sin().powi(2),
            Forcing::SinMinusX => {
                if x.abs() < 1e-2 {
                    let x2 = x * x;
                    -x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
                } else {
                    x.sin() - x
                }
            }
        }
    }

    fn derivative_bound(self) -> f64 {
        match self {
            Forcing::Cos => 1.0,
            Forcing::SinMinusX => 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HhuParameters {
    pub lambda: f64,
    pub forcing: Forcing,
}

impl HhuParameters {
    pub fn new(forcing: Forcing) -> Self {
        HhuParameters {
            lambda: 0.5 * (1.0 + 5f64.sqrt()),
            forcing,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        HhuParameters { lambda, ..self }
    }

    /// Fixed height `y = F(x) / (1 - lambda)` over a fixed point `x` of `psi`.
    pub fn fixed_height(&self, x: f64) -> Result<f64> {
        if (self.lambda - 1.0).abs() < 1e-14 {
            return Err(Error::domain("lambda = 1 has no fixed heights"));
        }
        Ok(self.forcing.value(x) / (1.0 - self.lambda))
    }
}

pub fn psi(x: f64) -> f64 {
    x + 2.0 / 3.0 * x.sin()
}

pub fn psi_derivative(x: f64) -> f64 {
    1.0 + 2.0 / 3.0 * x.cos()
}

/// `psi^-1(y)` by safeguarded Newton iteration.
pub fn psi_inverse(y: f64) -> f64 {
    let (mut lo, mut hi) = (y - 1.0, y + 1.0);
    let mut x = y - 2.0 / 3.0 * y.sin() / psi_derivative(y).max(1.0 / 3.0);
    x = x.clamp(lo, hi);
    for _ in 0..100 {
        let r = psi(x) - y;
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - r / psi_derivative(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-17 * x.abs().max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    /// `u` on `(-pi, pi)`.
    Unstable,
    /// `c` on `(0, pi]`.
    Stable,
}

/// Value offset from the fixed height, slope and truncation bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub offset: f64,
    pub slope: f64,
    pub tail: f64,
}

/// Backward-cocycle sum for the unstable graph.
pub fn unstable_series(p: &HhuParameters, x: f64, depth: usize) -> Result<SeriesValue> {
    if !(x.abs() < PI) {
        return Err(Error::domain(format!("unstable graph is defined on (-pi, pi), got {x}")));
    }
    let (mut xk, mut dx, mut pow) = (x, 1.0f64, 1.0f64);
    let (mut offset, mut slope) = (0.0, 0.0);
    for _ in 0..depth {
        if xk.abs() < 1e-150 {
            break;
        }
        xk = psi_inverse(xk);
        dx /= psi_derivative(xk);
        offset += pow * p.forcing.offset_from_origin(xk);
        slope += pow * p.forcing.derivative(xk) * dx;
        pow *= p.lambda;
    }
    let delta = xk.abs();
    if delta >= PI / 2.0 {
        return Err(Error::Convergence(format!(
            "backward orbit of {x} has not reached the contraction zone after {depth} steps"
        )));
    }
    let r = 1.0 / (1.0 + 2.0 / 3.0 * delta.cos());
    let q = p.lambda * r * r;
    if q >= 1.0 {
        return Err(Error::Convergence(format!(
            "unstable series does not contract (ratio {q})"
        )));
    }
    let tail = pow * delta * r * r / (1.0 - q) * (0.5 * delta + dx.abs());
    if !(tail < SERIES_TAIL_TOL) {
        return Err(Error::Convergence(format!(
            "unstable series tail {tail:e} at depth {depth}"
        )));
    }
    Ok(SeriesValue {
        offset,
        slope,
        tail,
    })
}

/// Forward-cocycle sum for the stable graph (odd extension for `x < 0`).
pub fn stable_series(p: &HhuParameters, x: f64, depth: usize) -> Result<SeriesValue> {
    if x == 0.0 || x.abs() > PI {
        return Err(Error::domain(format!("stable graph is defined on [-pi, 0) and (0, pi], got {x}")));
    }
    let target = PI.copysign(x);
    let ft = p.forcing.value(target);
    let (mut xk, mut dx, mut pow) = (x, 1.0f64, 1.0 / p.lambda);
    let (mut offset, mut slope) = (0.0, 0.0);
    for _ in 0..depth {
        if (xk - target).abs() < 1e-300 && (pow * dx).abs() < 1e-300 {
            break;
        }
        offset -= pow * (p.forcing.value(xk) - ft);
        slope -= pow * p.forcing.derivative(xk) * dx;
        dx *= psi_derivative(xk);
        xk = psi(xk);
        pow /= p.lambda;
    }
    let delta = (xk - target).abs();
    let q = (1.0 - 2.0 / 3.0 * delta.min(PI / 2.0).cos()) / p.lambda;
    if q >= 1.0 {
        return Err(Error::Convergence(format!(
            "stable series does not contract (ratio {q})"
        )));
    }
    let lf = p.forcing.derivative_bound();
    let tail = pow * lf * (delta + dx.abs()) / (1.0 - q);
    if !(tail < SERIES_TAIL_TOL) {
        return Err(Error::Convergence(format!(
            "stable series tail {tail:e} at depth {depth}"
        )));
    }
    Ok(SeriesValue {
        offset,
        slope,
        tail,
    })
}

/// Graph value and slope.
pub fn graph_value(p: &HhuParameters, kind: GraphKind, x: f64, depth: usize) -> Result<(f64, f64)> {
    match kind {
        GraphKind::Unstable => {
            let s = unstable_series(p, x, depth)?;
            Ok((p.fixed_height(0.0)? + s.offset, s.slope))
        }
        GraphKind::Stable => {
            let s = stable_series(p, x, depth)?;
            Ok((p.fixed_height(PI.copysign(x))? + s.offset, s.slope))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantGraph {
    pub kind: GraphKind,
    pub params: HhuParameters,
    pub depth: usize,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    pub tail_bound: f64,
    /// `max |G(psi x) - lambda G(x) - F(x)|` over the grid.
    pub residual: f64,
}

impl InvariantGraph {
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(graph_value(&self.params, self.kind, x, self.depth)?.0)
    }

    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            GraphKind::Unstable => (-PI, PI),
            GraphKind::Stable => (0.0, PI),
        }
    }

    /// Whether the slope has the sign `sign` at every grid point of `(lo, hi)`.
    pub fn slope_sign_holds(&self, lo: f64, hi: f64, sign: f64) -> bool {
        self.xs
            .iter()
            .zip(&self.slopes)
            .filter(|(x, _)| **x > lo && **x < hi)
            .all(|(_, s)| s * sign > 0.0)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

fn build_graph(p: &HhuParameters, kind: GraphKind, grid: usize, depth: usize) -> Result<InvariantGraph> {
    if grid == 0 {
        return Err(Error::domain("graph grid must be positive"));
    }
    let xs: Vec<f64> = match kind {
        GraphKind::Unstable => (0..grid)
            .map(|i| -PI + 2.0 * PI * (i + 1) as f64 / (grid + 1) as f64)
            .collect(),
        GraphKind::Stable => (0..grid).map(|i| PI * (i + 1) as f64 / grid as f64).collect(),
    };
    let rows: Vec<(f64, f64, f64, f64)> = xs
        .par_iter()
        .map(|&x| {
            let (value, slope) = graph_value(p, kind, x, depth)?;
            let tail = match kind {
                GraphKind::Unstable => unstable_series(p, x, depth)?.tail,
                GraphKind::Stable => stable_series(p, x, depth)?.tail,
            };
            let (image, _) = graph_value(p, kind, psi(x), depth)?;
            let residual = (image - p.lambda * value - p.forcing.value(x)).abs();
            Ok((value, slope, tail, residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let residual = rows.iter().fold(0.0f64, |a, r| a.max(r.3));
    if residual >= GRAPH_RESIDUAL_TOL {
        return Err(Error::Validation {
            point: format!("{kind:?} graph grid"),
            reason: format!("invariance residual {residual:e}"),
        });
    }
    Ok(InvariantGraph {
        kind,
        params: *p,
        depth,
        values: rows.iter().map(|r| r.0).collect(),
        slopes: rows.iter().map(|r| r.1).collect(),
        tail_bound: rows.iter().fold(0.0f64, |a, r| a.max(r.2)),
        residual,
        xs,
    })
}

pub fn build_unstable_graph(p: &HhuParameters, grid: usize, depth: usize) -> Result<InvariantGraph> {
    build_graph(p, GraphKind::Unstable, grid, depth)
}

pub fn build_stable_graph(p: &HhuParameters, grid: usize, depth: usize) -> Result<InvariantGraph> {
    build_graph(p, GraphKind::Stable, grid, depth)
}

/// Centered finite-difference slopes at the grid spacing and half of it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeCheck {
    pub x: f64,
    /// Signed threshold: the slope must exceed it in the direction of its sign.
    pub threshold: f64,
    pub coarse: f64,
    pub fine: f64,
    pub analytic: f64,
    pub passed: bool,
}

pub fn slope_threshold_check(
    p: &HhuParameters,
    kind: GraphKind,
    x: f64,
    threshold: f64,
    grid: usize,
    depth: usize,
) -> Result<SlopeCheck> {
    let (lo, hi) = match kind {
        GraphKind::Unstable => (-PI, PI),
        GraphKind::Stable => (0.0, PI),
    };
    let room = (x - lo).min(hi - x);
    let h = (PI / grid as f64).min(0.5 * room);
    let fd = |h: f64| -> Result<f64> {
        let a = graph_value(p, kind, x - h, depth)?.0;
        let b = graph_value(p, kind, x + h, depth)?.0;
        Ok((b - a) / (2.0 * h))
    };
    let coarse = fd(h)?;
    let fine = fd(0.5 * h)?;
    let analytic = graph_value(p, kind, x, depth)?.1;
    let exceeds = |s: f64| s * threshold.signum() > threshold.abs();
    Ok(SlopeCheck {
        x,
        threshold,
        coarse,
        fine,
        analytic,
        passed: exceeds(coarse) && exceeds(fine),
    })
}

/// `max |c(-x) + c(x)|` over the stable graph grid.
pub fn oddness_defect(graph: &InvariantGraph) -> Result<f64> {
    let mut worst = 0.0f64;
    for (&x, &v) in graph.xs.iter().zip(&graph.values) {
        worst = worst.max((graph.eval(-x)? + v).abs());
    }
    Ok(worst)
}

/// Smallest checked `C` such that `g^-1` maps `[-C, C] x [0, pi]` (as
/// `y`-range times `x`-range) into itself, and whether `sup |c| <= C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundednessCheck {
    pub bound: f64,
    pub sup_c: f64,
    pub invariant: bool,
    pub passed: bool,
}

pub fn boundedness_check(p: &HhuParameters, stable: &InvariantGraph) -> BoundednessCheck {
    let n = 400;
    let sup_f = (0..=n)
        .map(|i| p.forcing.value(PI * i as f64 / n as f64).abs())
        .fold(0.0, f64::max);
    let sup_c = stable.sup_abs();
    let bound = (sup_f / (p.lambda - 1.0)).max(sup_c).max(1.0) * (1.0 + 1e-9);
    let mut invariant = p.lambda > 1.0;
    for i in 0..=n {
        let x = PI * i as f64 / n as f64;
        for j in 0..=n {
            let y = -bound + 2.0 * bound * j as f64 / n as f64;
            let xp = psi_inverse(x);
            let yp = (y - p.forcing.value(xp)) / p.lambda;
            if !(-1e-12..=PI + 1e-12).contains(&xp) || yp.abs() > bound {
                invariant = false;
            }
        }
    }
    BoundednessCheck {
        bound,
        sup_c,
        invariant,
        passed: invariant && sup_c <= bound,
    }
}

/// `f(x, y, z) = (psi(x), lambda y + F(x), -z / lambda)` with its lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Hhu3d {
    pub params: HhuParameters,
    /// Generators of the quotient lattice.
    pub lattice: Vec<[f64; 3]>,
    /// Image of each generator under the linear part of `f`.
    pub lattice_images: Vec<[f64; 3]>,
    /// Largest `|f(p + l) - f(p) - L(l)|` over sampled points and generators.
    pub equivariance_residual: f64,
    /// Largest distance of a generator image from the lattice, in lattice coordinates.
    pub lattice_residual: f64,
}

/// `Lambda = P^-1 Z^2` with `P = [[lambda, 1 - lambda], [1, 1]]` in `(y, z)`.
fn yz_lattice(lambda: f64) -> ([f64; 2], [f64; 2], [[f64; 2]; 2]) {
    let p = [[lambda, 1.0 - lambda], [1.0, 1.0]];
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    let inv = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
    ([inv[0][0], inv[1][0]], [inv[0][1], inv[1][1]], p)
}

pub fn build_3d_system(p: &HhuParameters) -> Hhu3d {
    let lambda = p.lambda;
    let (e1, e2, pm) = yz_lattice(lambda);
    let mut lattice = vec![[0.0, e1[0], e1[1]], [0.0, e2[0], e2[1]]];
    let mut images: Vec<[f64; 3]> = lattice
        .iter()
        .map(|l| [0.0, lambda * l[1], -l[2] / lambda])
        .collect();
    let horizontal = match p.forcing {
        Forcing::Cos => [2.0 * PI, 0.0, 0.0],
        Forcing::SinMinusX => [2.0 * PI, 2.0 * PI / (lambda - 1.0), 0.0],
    };
    lattice.push(horizontal);
    images.push(horizontal);
    let mut sys = Hhu3d {
        params: *p,
        lattice,
        lattice_images: images,
        equivariance_residual: 0.0,
        lattice_residual: 0.0,
    };
    let mut worst = 0.0f64;
    for i in 0..64 {
        let t = i as f64 / 64.0;
        let q = [-PI + 2.0 * PI * t, 3.0 * (t * 7.0).sin(), 2.0 * (t * 5.0).cos()];
        let fq = sys.eval(&q);
        for (l, img) in sys.lattice.iter().zip(&sys.lattice_images) {
            let shifted = sys.eval(&[q[0] + l[0], q[1] + l[1], q[2] + l[2]]);
            for k in 0..3 {
                worst = worst.max((shifted[k] - fq[k] - img[k]).abs());
            }
        }
    }
    // express images in the lattice basis (y, z part via P, x part via 2 pi)
    let mut lat = 0.0f64;
    for img in &sys.lattice_images {
        let nx = img[0] / (2.0 * PI);
        let (y, z) = match p.forcing {
            Forcing::Cos => (img[1], img[2]),
            Forcing::SinMinusX => (img[1] - nx * 2.0 * PI / (lambda - 1.0), img[2]),
        };
        let a = pm[0][0] * y + pm[0][1] * z;
        let b = pm[1][0] * y + pm[1][1] * z;
        for v in [nx, a, b] {
            lat = lat.max((v - v.round()).abs());
        }
    }
    sys.equivariance_residual = worst;
    sys.lattice_residual = lat;
    sys
}

impl Hhu3d {
    pub fn eval(&self, q: &[f64; 3]) -> [f64; 3] {
        let p = &self.params;
        [
            psi(q[0]),
            p.lambda * q[1] + p.forcing.value(q[0]),
            -q[2] / p.lambda,
        ]
    }

    pub fn jacobian(&self, q: &[f64; 3]) -> [[f64; 3]; 3] {
        let p = &self.params;
        [
            [psi_derivative(q[0]), 0.0, 0.0],
            [p.forcing.derivative(q[0]), p.lambda, 0.0],
            [0.0, 0.0, -1.0 / p.lambda],
        ]
    }

    /// Fixed point of the planar factor over the `psi`-fixed point `x`.
    pub fn planar_fixed_point(&self, x: f64) -> Result<[f64; 2]> {
        if (psi(x) - x).abs() > 1e-12 {
            return Err(Error::domain(format!("{x} is not fixed by psi")));
        }
        Ok([x, self.params.fixed_height(x)?])
    }
}

fn apply(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

fn norm3(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Growth of the three candidate directions at one sample point.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSample {
    pub x: f64,
    pub y: f64,
    /// `(|Tf^k v^s|, |Tf^k v^c|, |Tf^k v^u|)` for `k = 1..=k_max`.
    pub growth: Vec<(f64, f64, f64)>,
}

impl ConeSample {
    pub fn dominated_at(&self, k: usize) -> bool {
        let (s, c, u) = self.growth[k - 1];
        s * (1.0 + CONE_MARGIN) < c && c * (1.0 + CONE_MARGIN) < u
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeCheck {
    pub passed: bool,
    /// Smallest `k` at which every sample is dominated.
    pub k: Option<usize>,
    pub samples: Vec<ConeSample>,
}

/// Offsets from an invariant torus at which graph slopes are sampled.
pub const TORUS_OFFSETS: [f64; 3] = [1e-3, 1e-6, 1e-9];

/// Limit of the graph slope at the torus `x = torus_x`: infinite when the
/// sampled slopes grow in magnitude at every offset, otherwise the slope at
/// the closest offset.
pub fn limit_slope(p: &HhuParameters, kind: GraphKind, torus_x: f64, depth: usize) -> Result<f64> {
    let inward = if torus_x < 1.0 { 1.0 } else { -1.0 };
    let slopes = TORUS_OFFSETS
        .iter()
        .map(|e| {
            let x = torus_x + inward * e;
            match kind {
                GraphKind::Unstable => unstable_series(p, x, depth),
                GraphKind::Stable => stable_series(p, x, depth),
            }
            .map(|s| s.slope)
        })
        .collect::<Result<Vec<_>>>()?;
    let diverging = slopes.windows(2).all(|w| w[1].abs() > 1.1 * w[0].abs());
    let last = slopes[slopes.len() - 1];
    Ok(if diverging {
        f64::INFINITY.copysign(last)
    } else {
        last
    })
}

fn direction(slope: f64) -> [f64; 3] {
    if slope.is_infinite() {
        [0.0, slope.signum(), 0.0]
    } else {
        [1.0, slope, 0.0]
    }
}

/// Checks `|Tf^k v^s| < |Tf^k v^c| < |Tf^k v^u|` on the invariant tori
/// `x = 0` and `x = pi`, with `E^u` and `E^c` the limit tangent lines of the
/// graph translates and `E^s` the `z`-axis.
pub fn cone_check(sys: &Hhu3d, k_max: usize, depth: usize) -> Result<ConeCheck> {
    let p = &sys.params;
    let mut samples = Vec::new();
    for x in [0.0, PI] {
        let vu0 = direction(limit_slope(p, GraphKind::Unstable, x, depth)?);
        let vc0 = direction(limit_slope(p, GraphKind::Stable, x, depth)?);
        for y in [-1.0, 0.0, 2.5] {
            let mut q = [x, y, 0.0];
            let mut vs = [0.0, 0.0, 1.0];
            let (mut vc, mut vu) = (vc0, vu0);
            let (ns, nc, nu) = (norm3(&vs), norm3(&vc), norm3(&vu));
            let mut growth = Vec::with_capacity(k_max);
            for _ in 0..k_max {
                let j = sys.jacobian(&q);
                vs = apply(&j, &vs);
                vc = apply(&j, &vc);
                vu = apply(&j, &vu);
                q = sys.eval(&q);
                growth.push((norm3(&vs) / ns, norm3(&vc) / nc, norm3(&vu) / nu));
            }
            samples.push(ConeSample { x, y, growth });
        }
    }
    let k = (1..=k_max).find(|&k| samples.iter().all(|s| s.dominated_at(k)));
    Ok(ConeCheck {
        passed: k.is_some(),
        k,
        samples,
    })
}

/// The `us`-leaves are `{x = pi}` and the translates `graph(u + b) x R`;
/// `g` maps the translate `b` to `lambda b`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactLeafCheck {
    /// `x`-coordinate of the invariant vertical torus.
    pub torus_x: f64,
    pub torus_invariant: bool,
    /// Slope of `u` next to the torus (vertical tangency).
    pub edge_slope: f64,
    pub sampled: usize,
    pub escaped: usize,
    pub passed: bool,
}

pub fn compact_leaf_check(sys: &Hhu3d, depth: usize) -> Result<CompactLeafCheck> {
    let p = &sys.params;
    let torus_x = PI;
    let torus_invariant = (psi(torus_x) - torus_x).abs() < 1e-15;
    let edge_slope = limit_slope(p, GraphKind::Unstable, torus_x, depth)?;
    // a fundamental domain of the translate parameter is bounded by the
    // largest y-extent of the lattice generators
    let reach = sys
        .lattice
        .iter()
        .map(|l| l[1].abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let n = 64;
    let mut escaped = 0;
    for i in 0..n {
        let b = -reach + 2.0 * reach * (i as f64 + 0.5) / n as f64;
        let mut t = b;
        for _ in 0..200 {
            t *= p.lambda;
            if t.abs() > 10.0 * reach {
                escaped += 1;
                break;
            }
        }
    }
    let passed = torus_invariant && edge_slope < -1.0 && escaped == n;
    Ok(CompactLeafCheck {
        torus_x,
        torus_invariant,
        edge_slope,
        sampled: n,
        escaped,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> f64 {
        0.5 * (1.0 + 5f64.sqrt())
    }

    #[test]
    fn golden_ratio_identity() {
        let p = HhuParameters::new(Forcing::Cos);
        assert!((p.lambda * p.lambda - p.lambda - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psi_inverse_round_trip() {
        for i in -50..=50 {
            let x = i as f64 * 0.1;
            assert!((psi_inverse(psi(x)) - x).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_values() {
        let p = HhuParameters::new(Forcing::Cos);
        let u0 = graph_value(&p, GraphKind::Unstable, 0.0, DEFAULT_DEPTH).unwrap().0;
        assert!((u0 + golden()).abs() < 1e-12);
        let c = graph_value(&p, GraphKind::Stable, PI, DEFAULT_DEPTH).unwrap().0;
        assert!((c - golden()).abs() < 1e-12);
        let v = HhuParameters::new(Forcing::SinMinusX);
        let c = graph_value(&v, GraphKind::Stable, PI, DEFAULT_DEPTH).unwrap().0;
        assert!((c - PI * golden()).abs() < 1e-12);
        let cm = graph_value(&v, GraphKind::Stable, -PI, DEFAULT_DEPTH).unwrap().0;
        assert!((cm + PI * golden()).abs() < 1e-12);
    }

    #[test]
    fn graphs_are_invariant() {
        for forcing in [Forcing::Cos, Forcing::SinMinusX] {
            let p = HhuParameters::new(forcing);
            let u = build_unstable_graph(&p, 500, DEFAULT_DEPTH).unwrap();
            let c = build_stable_graph(&p, 500, DEFAULT_DEPTH).unwrap();
            assert!(u.residual < GRAPH_RESIDUAL_TOL && c.residual < GRAPH_RESIDUAL_TOL);
            assert!(u.slope_sign_holds(0.01, PI - 0.01, -1.0));
            assert!(c.slope_sign_holds(0.01, PI - 0.01, 1.0));
        }
    }

    #[test]
    fn series_slopes_match_finite_differences() {
        let p = HhuParameters::new(Forcing::Cos);
        for kind in [GraphKind::Unstable, GraphKind::Stable] {
            for x in [0.3, 1.2, 2.5] {
                let (_, s) = graph_value(&p, kind, x, DEFAULT_DEPTH).unwrap();
                let h = 1e-6;
                let fd = (graph_value(&p, kind, x + h, DEFAULT_DEPTH).unwrap().0
                    - graph_value(&p, kind, x - h, DEFAULT_DEPTH).unwrap().0)
                    / (2.0 * h);
                assert!((fd - s).abs() < 1e-6 * s.abs().max(1.0), "{kind:?} {x}: {fd} vs {s}");
            }
        }
    }

    #[test]
    fn odd_variant_is_odd() {
        let p = HhuParameters::new(Forcing::SinMinusX);
        let c = build_stable_graph(&p, 400, DEFAULT_DEPTH).unwrap();
        assert!(oddness_defect(&c).unwrap() < 1e-9);
    }

    #[test]
    fn jacobian_and_fixed_points() {
        let sys = build_3d_system(&HhuParameters::new(Forcing::Cos));
        let j = sys.jacobian(&[0.7, 1.0, 2.0]);
        assert!((j[1][0] + 0.7f64.sin()).abs() < 1e-15);
        let fp = sys.planar_fixed_point(0.0).unwrap();
        assert!((fp[1] + golden()).abs() < 1e-12);
        let fq = sys.planar_fixed_point(PI).unwrap();
        let img = sys.eval(&[fq[0], fq[1], 0.0]);
        assert!((img[1] - fq[1]).abs() < 1e-12 && (fq[1] - golden()).abs() < 1e-12);
        assert!(sys.planar_fixed_point(1.0).is_err());
    }

    #[test]
    fn lattices_are_equivariant() {
        for forcing in [Forcing::Cos, Forcing::SinMinusX] {
            let sys = build_3d_system(&HhuParameters::new(forcing));
            assert!(sys.equivariance_residual < 1e-12, "{forcing:?}: {}", sys.equivariance_residual);
            assert!(sys.lattice_residual < 1e-12);
        }
    }

    #[test]
    fn cone_rates_at_expanding_torus() {
        // oracle: at x = 0 the Jacobian is diag(5/3, lambda, -1/lambda)
        let sys = build_3d_system(&HhuParameters::new(Forcing::Cos));
        let check = cone_check(&sys, 20, DEFAULT_DEPTH).unwrap();
        let s = &check.samples[0];
        let (gs, gc, gu) = s.growth[4];
        assert!((gs - golden().powi(-5)).abs() < 1e-12);
        assert!((gc - golden().powi(5)).abs() < 1e-9);
        assert!((gu - (5.0f64 / 3.0).powi(5)).abs() < 1e-9);
        assert!(s.dominated_at(1));
        // at x = pi the stable-graph direction contracts at psi'(pi) = 1/3
        let t = check.samples.iter().find(|s| s.x == PI).unwrap();
        assert!((t.growth[4].1 - 3f64.powi(-5)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_lambda_fails_cone_check() {
        let sys = build_3d_system(&HhuParameters::new(Forcing::Cos).with_lambda(1.0));
        assert!(!cone_check(&sys, 20, DEFAULT_DEPTH).unwrap().passed);
    }

    #[test]
    fn boundedness_of_stable_graph() {
        for forcing in [Forcing::Cos, Forcing::SinMinusX] {
            let p = HhuParameters::new(forcing);
            let c = build_stable_graph(&p, 300, DEFAULT_DEPTH).unwrap();
            let b = boundedness_check(&p, &c);
            assert!(b.passed, "{forcing:?}: {b:?}");
        }
    }

    #[test]
    fn one_compact_leaf() {
        let sys = build_3d_system(&HhuParameters::new(Forcing::SinMinusX));
        let check = compact_leaf_check(&sys, DEFAULT_DEPTH).unwrap();
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn domain_errors() {
        let p = HhuParameters::new(Forcing::Cos);
        assert!(matches!(unstable_series(&p, PI, 50), Err(Error::Domain(_))));
        assert!(matches!(stable_series(&p, 0.0, 50), Err(Error::Domain(_))));
        assert!(matches!(unstable_series(&p, 3.1, 2), Err(Error::Convergence(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn unstable_functional_equation(x in -3.0f64..3.0) {
                let p = HhuParameters::new(Forcing::Cos);
                let (u, _) = graph_value(&p, GraphKind::Unstable, x, DEFAULT_DEPTH).unwrap();
                let (up, _) = graph_value(&p, GraphKind::Unstable, psi(x), DEFAULT_DEPTH).unwrap();
                prop_assert!((up - p.lambda * u - p.forcing.value(x)).abs() < 1e-9);
            }

            #[test]
            fn stable_functional_equation(x in 0.001f64..PI) {
                let p = HhuParameters::new(Forcing::SinMinusX);
                let (c, _) = graph_value(&p, GraphKind::Stable, x, DEFAULT_DEPTH).unwrap();
                let (cp, _) = graph_value(&p, GraphKind::Stable, psi(x), DEFAULT_DEPTH).unwrap();
                prop_assert!((cp - p.lambda * c - p.forcing.value(x)).abs() < 1e-9);
            }
        }
    }
}
