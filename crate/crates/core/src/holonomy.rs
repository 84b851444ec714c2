//! Stable and unstable holonomies between center fibers, su-loop maps on the
//! invariant fiber over the origin, holonomy derivatives and detection of
//! heights fixed by the accessibility group.
//!
//! A stable holonomy from `u` to `w` is the limit of
//! `(Phi^n_w)^{-1} o Phi^n_u` where `Phi^n_u` is the forward fiber cocycle
//! along the base orbit of `u`; unstable holonomies use backward cocycles.
//! Base orbits are computed exactly on the discrete torus and the target
//! orbit is the source orbit shifted by the eigen-offset `sum c_j lambda_j^k e_j`,
//! so both orbits stay paired at every depth.

use rayon::prelude::*;

use crate::circle::{CircleLift, MonotoneCircleLift};
use crate::error::{Error, Result};
use crate::skew::{FiberMapFamily, SkewProductSystem};
use crate::torus::{axpy, from_fixed, norm, to_fixed, TorusPoint, Vec3};

/// Default truncation depth of holonomy limits.
pub const DEFAULT_DEPTH: usize = 80;

/// Default displacement tolerance for fixed heights.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Largest accepted certified truncation error.
pub const MAX_TAIL_BOUND: f64 = 1e-9;

/// Distance off the leaf tolerated when checking that two points share a leaf.
pub const LEAF_RESIDUAL_TOL: f64 = 1e-10;

/// Rounding allowance per cocycle step added to every tail bound.
const ROUNDING_PER_STEP: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LeafKind {
    Stable,
    Unstable,
}

impl LeafKind {
    pub fn name(self) -> &'static str {
        match self {
            LeafKind::Stable => "stable",
            LeafKind::Unstable => "unstable",
        }
    }
}

/// `anchor + offset * e`, with `e` the `direction`-th basis vector of the
/// stable or unstable bundle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseLeafPoint {
    pub anchor: TorusPoint,
    pub kind: LeafKind,
    pub direction: usize,
    pub offset: f64,
}

impl BaseLeafPoint {
    pub fn new(anchor: TorusPoint, kind: LeafKind, direction: usize, offset: f64) -> Self {
        BaseLeafPoint {
            anchor,
            kind,
            direction,
            offset,
        }
    }

    /// The anchor itself.
    pub fn at(anchor: TorusPoint) -> Self {
        Self::new(anchor, LeafKind::Stable, 0, 0.0)
    }

    /// Lifted coordinates of the represented point.
    pub fn lift(&self, sys: &SkewProductSystem) -> Result<Vec3> {
        if self.offset == 0.0 {
            return Ok(self.anchor.coords);
        }
        let dirs = match self.kind {
            LeafKind::Stable => sys.base().stable(),
            LeafKind::Unstable => sys.base().unstable(),
        };
        let e = dirs.get(self.direction).ok_or_else(|| {
            Error::domain(format!(
                "{} direction {} does not exist",
                self.kind.name(),
                self.direction
            ))
        })?;
        Ok(axpy(self.offset, &e.vector, &self.anchor.coords))
    }
}

/// Paired base orbits of one holonomy piece.
#[derive(Clone, Debug)]
struct Piece {
    kind: LeafKind,
    /// `(v_k, A v_k)` along the source orbit, forward for stable pieces and
    /// `k = -1, -2, ...` for unstable ones.
    source: Vec<(Vec3, Vec3)>,
    target: Vec<(Vec3, Vec3)>,
}

impl Piece {
    fn build(sys: &SkewProductSystem, kind: LeafKind, start: &Vec3, coeffs: &[(f64, Vec3, f64)], depth: usize) -> Self {
        let aut = sys.base();
        let d = sys.dim();
        let shifted = |k: i64, p: &Vec3| -> Vec3 {
            let mut out = *p;
            for (c, e, lambda) in coeffs {
                out = axpy(c * lambda.powi(k as i32), e, &out);
            }
            for x in out.iter_mut().skip(d) {
                *x = 0.0;
            }
            out
        };
        let mut source = Vec::with_capacity(depth);
        let mut target = Vec::with_capacity(depth);
        let mut v = to_fixed(start);
        match kind {
            LeafKind::Stable => {
                for k in 0..depth as i64 {
                    let av = aut.matrix().apply_fixed(&v);
                    let (vf, avf) = (from_fixed(&v), from_fixed(&av));
                    target.push((shifted(k, &vf), shifted(k + 1, &avf)));
                    source.push((vf, avf));
                    v = av;
                }
            }
            LeafKind::Unstable => {
                for k in 1..=depth as i64 {
                    let u = aut.inverse().apply_fixed(&v);
                    let (uf, vf) = (from_fixed(&u), from_fixed(&v));
                    target.push((shifted(-k, &uf), shifted(1 - k, &vf)));
                    source.push((uf, vf));
                    v = u;
                }
            }
        }
        Piece {
            kind,
            source,
            target,
        }
    }

    fn eval(&self, fiber: &FiberMapFamily, z: f64) -> f64 {
        let mut y = z;
        match self.kind {
            LeafKind::Stable => {
                for (v, av) in &self.source {
                    y = fiber.eval(v, av, y);
                }
                for (v, av) in self.target.iter().rev() {
                    y = fiber.inverse(v, av, y);
                }
            }
            LeafKind::Unstable => {
                for (v, av) in &self.source {
                    y = fiber.inverse(v, av, y);
                }
                for (v, av) in self.target.iter().rev() {
                    y = fiber.eval(v, av, y);
                }
            }
        }
        y
    }

    /// Derivative of the truncated transport as a product of fiber derivatives.
    fn derivative(&self, fiber: &FiberMapFamily, z: f64) -> f64 {
        let n = self.source.len();
        let mut xs = Vec::with_capacity(n + 1);
        xs.push(z);
        match self.kind {
            LeafKind::Stable => {
                for (v, av) in &self.source {
                    let x = *xs.last().expect("non-empty");
                    xs.push(fiber.eval(v, av, x));
                }
                let mut y = xs[n];
                let mut jac = 1.0;
                for k in (0..n).rev() {
                    let (v, av) = &self.target[k];
                    y = fiber.inverse(v, av, y);
                    let (sv, sav) = &self.source[k];
                    jac *= fiber.dz(sv, sav, xs[k]) / fiber.dz(v, av, y);
                }
                jac
            }
            LeafKind::Unstable => {
                for (v, av) in &self.source {
                    let x = *xs.last().expect("non-empty");
                    xs.push(fiber.inverse(v, av, x));
                }
                let mut y = xs[n];
                let mut jac = 1.0;
                for k in (0..n).rev() {
                    let (v, av) = &self.target[k];
                    let (sv, sav) = &self.source[k];
                    jac *= fiber.dz(v, av, y) / fiber.dz(sv, sav, xs[k + 1]);
                    y = fiber.eval(v, av, y);
                }
                jac
            }
        }
    }
}

/// Fiber transport along a stable or unstable base leaf, truncated at a
/// finite depth with a certified tail bound.
#[derive(Clone, Debug)]
pub struct HolonomyMap {
    pub kind: LeafKind,
    pub from: Vec3,
    pub to: Vec3,
    pub truncation_depth: usize,
    pub tail_bound: f64,
    fiber: FiberMapFamily,
    pieces: Vec<Piece>,
}

impl CircleLift for HolonomyMap {
    fn lift(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

impl HolonomyMap {
    /// Direct evaluation of the truncated limit.
    pub fn eval(&self, z: f64) -> f64 {
        self.pieces
            .iter()
            .fold(z, |y, piece| piece.eval(&self.fiber, y))
    }

    /// Derivative of the truncated transport at `z`.
    pub fn derivative(&self, z: f64) -> f64 {
        let mut y = z;
        let mut jac = 1.0;
        for piece in &self.pieces {
            jac *= piece.derivative(&self.fiber, y);
            y = piece.eval(&self.fiber, y);
        }
        jac
    }

    /// The transport sampled as a monotone lift.
    pub fn transport(&self, grid: usize) -> Result<MonotoneCircleLift> {
        sample_parallel(grid, |z| self.eval(z))
    }
}

fn sample_parallel<F: Fn(f64) -> f64 + Sync>(grid: usize, f: F) -> Result<MonotoneCircleLift> {
    let values: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|i| f(i as f64 / grid as f64))
        .collect();
    MonotoneCircleLift::from_fn(grid, |x| values[(x * grid as f64).round() as usize % grid])
}

/// Lipschitz constant of the fiber maps in the base point.
fn base_lipschitz(sys: &SkewProductSystem) -> f64 {
    let fiber = sys.fiber();
    if fiber.conjugators.is_empty() {
        return fiber.base_lipschitz();
    }
    let d = sys.dim();
    let per = 24usize;
    let h = 1e-6;
    let mut best = 0.0f64;
    for idx in 0..per.pow(d as u32 + 1) {
        let mut rem = idx;
        let mut v = [0.0; 3];
        for slot in v.iter_mut().take(d) {
            *slot = (rem % per) as f64 / per as f64;
            rem /= per;
        }
        let z = rem as f64 / per as f64;
        let mut grad2 = 0.0;
        for i in 0..d {
            let mut vp = v;
            let mut vm = v;
            vp[i] += h;
            vm[i] -= h;
            let g = (fiber.eval(&vp, &sys.base().matrix().apply(&vp), z)
                - fiber.eval(&vm, &sys.base().matrix().apply(&vm), z))
                / (2.0 * h);
            grad2 += g * g;
        }
        best = best.max(grad2.sqrt());
    }
    1.25 * best
}

fn tail_bound(sys: &SkewProductSystem, kind: LeafKind, length: f64, depth: usize) -> Result<f64> {
    let (m, big_m) = sys.fiber().dz_bounds();
    let lip = base_lipschitz(sys);
    let aut = sys.base();
    let ratio = match kind {
        LeafKind::Stable => {
            let sigma = aut.stable_rates().into_iter().fold(0.0, f64::max);
            sigma / m
        }
        LeafKind::Unstable => {
            let lambda = aut.unstable_rates().into_iter().fold(f64::INFINITY, f64::min);
            big_m / lambda
        }
    };
    if !(ratio < 1.0) || m <= 0.0 {
        return Err(Error::Convergence(format!(
            "{} holonomy: base rate does not dominate the fiber (ratio {ratio})",
            kind.name()
        )));
    }
    let analytic = if lip == 0.0 {
        0.0
    } else {
        (lip / m) * length * ratio.powi(depth as i32) / (1.0 - ratio)
    };
    Ok(analytic + depth as f64 * ROUNDING_PER_STEP)
}

/// Transport along the leaf of the given kind from lifted `p` by the lifted
/// displacement `disp`, which must lie in the corresponding bundle.
pub fn holonomy_between(
    sys: &SkewProductSystem,
    kind: LeafKind,
    p: &Vec3,
    q: &Vec3,
    depth: usize,
) -> Result<HolonomyMap> {
    if depth == 0 {
        return Err(Error::domain("holonomy depth must be at least 1"));
    }
    let aut = sys.base();
    let d = sys.dim();
    let mut disp = [0.0; 3];
    for i in 0..d {
        disp[i] = q[i] - p[i];
    }
    let coords = aut.eigen_coordinates(&disp);
    let n_unstable = aut.unstable().len();
    let mut on_leaf = Vec::new();
    let mut off_leaf = [0.0; 3];
    for (j, (c, dir)) in coords.iter().zip(aut.directions()).enumerate() {
        let in_kind = match kind {
            LeafKind::Unstable => j < n_unstable,
            LeafKind::Stable => j >= n_unstable,
        };
        if in_kind {
            on_leaf.push((*c, dir.vector, dir.eigenvalue));
        } else {
            off_leaf = axpy(*c, &dir.vector, &off_leaf);
        }
    }
    let residual = norm(&off_leaf);
    if residual > LEAF_RESIDUAL_TOL {
        return Err(Error::domain(format!(
            "points are not on a common {} leaf (off-leaf distance {residual:e})",
            kind.name()
        )));
    }
    let length = norm(&disp);
    let n_pieces = length.ceil().max(1.0) as usize;
    let mut pieces = Vec::with_capacity(n_pieces);
    let step: Vec<(f64, Vec3, f64)> = on_leaf
        .iter()
        .map(|(c, e, l)| (c / n_pieces as f64, *e, *l))
        .collect();
    let mut tail = 0.0;
    for i in 0..n_pieces {
        let start = axpy(i as f64 / n_pieces as f64, &disp, p);
        pieces.push(Piece::build(sys, kind, &start, &step, depth));
        tail += tail_bound(sys, kind, length / n_pieces as f64, depth)?;
    }
    if tail >= MAX_TAIL_BOUND {
        return Err(Error::Convergence(format!(
            "tail bound {tail:e} at depth {depth} exceeds {MAX_TAIL_BOUND:e}"
        )));
    }
    Ok(HolonomyMap {
        kind,
        from: *p,
        to: *q,
        truncation_depth: depth,
        tail_bound: tail,
        fiber: sys.fiber().clone(),
        pieces,
    })
}

/// Stable holonomy from the fiber over `from` to the fiber over `to`.
pub fn stable_holonomy(
    sys: &SkewProductSystem,
    from: &BaseLeafPoint,
    to: &BaseLeafPoint,
    depth: usize,
) -> Result<HolonomyMap> {
    holonomy_between(sys, LeafKind::Stable, &from.lift(sys)?, &to.lift(sys)?, depth)
}

/// Unstable holonomy from the fiber over `from` to the fiber over `to`.
pub fn unstable_holonomy(
    sys: &SkewProductSystem,
    from: &BaseLeafPoint,
    to: &BaseLeafPoint,
    depth: usize,
) -> Result<HolonomyMap> {
    holonomy_between(sys, LeafKind::Unstable, &from.lift(sys)?, &to.lift(sys)?, depth)
}

/// Derivative of the holonomy of the given kind at height `z`, as the
/// truncated product of ratios of fiber derivatives along the paired orbits.
pub fn holonomy_derivative(
    sys: &SkewProductSystem,
    kind: LeafKind,
    from: &BaseLeafPoint,
    to: &BaseLeafPoint,
    z: f64,
    depth: usize,
) -> Result<f64> {
    Ok(holonomy_between(sys, kind, &from.lift(sys)?, &to.lift(sys)?, depth)?.derivative(z))
}

/// Concatenation of stable and unstable legs starting at the base origin.
#[derive(Clone, Debug, PartialEq)]
pub struct SuLoop {
    pub legs: Vec<(LeafKind, Vec3)>,
}

impl SuLoop {
    /// The integer vector reached by the loop, if it closes on the torus.
    pub fn closure(&self, dim: usize) -> Result<[i64; 3]> {
        let mut total = [0.0; 3];
        for (_, disp) in &self.legs {
            total = axpy(1.0, disp, &total);
        }
        let mut alpha = [0i64; 3];
        for i in 0..dim {
            let r = total[i].round();
            if (total[i] - r).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "su-loop does not close: total displacement {:?}",
                    &total[..dim]
                )));
            }
            alpha[i] = r as i64;
        }
        Ok(alpha)
    }
}

/// Holonomy of an su-loop acting on the fiber over the origin.
#[derive(Clone, Debug)]
pub struct SuLoopMap {
    pub alpha: [i64; 3],
    pub legs: Vec<HolonomyMap>,
    pub tail_bound: f64,
}

impl CircleLift for SuLoopMap {
    fn lift(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

impl SuLoopMap {
    pub fn eval(&self, z: f64) -> f64 {
        self.legs.iter().fold(z, |y, leg| leg.eval(y))
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let mut y = z;
        let mut jac = 1.0;
        for leg in &self.legs {
            jac *= leg.derivative(y);
            y = leg.eval(y);
        }
        jac
    }

    pub fn to_lift(&self, grid: usize) -> Result<MonotoneCircleLift> {
        sample_parallel(grid, |z| self.eval(z))
    }

    /// `sup |g(z) - z|` over `grid` heights.
    pub fn max_displacement(&self, grid: usize) -> f64 {
        (0..grid)
            .into_par_iter()
            .map(|i| {
                let z = i as f64 / grid as f64;
                (self.eval(z) - z).abs()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn su_loop_map(sys: &SkewProductSystem, lp: &SuLoop, depth: usize) -> Result<SuLoopMap> {
    let alpha = lp.closure(sys.dim())?;
    let mut p = [0.0; 3];
    let mut legs = Vec::with_capacity(lp.legs.len());
    for (kind, disp) in &lp.legs {
        let q = axpy(1.0, disp, &p);
        legs.push(holonomy_between(sys, *kind, &p, &q, depth)?);
        p = q;
    }
    let tail_bound = legs.iter().map(|l| l.tail_bound).sum();
    Ok(SuLoopMap {
        alpha,
        legs,
        tail_bound,
    })
}

/// For each lattice generator `e_i`, the loop following the unstable part of
/// `e_i` and then its stable part.
pub fn generator_loops(sys: &SkewProductSystem) -> Vec<SuLoop> {
    let aut = sys.base();
    let d = sys.dim();
    let n_unstable = aut.unstable().len();
    (0..d)
        .map(|i| {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            let coords = aut.eigen_coordinates(&e);
            let mut unstable = [0.0; 3];
            let mut stable = [0.0; 3];
            for (j, (c, dir)) in coords.iter().zip(aut.directions()).enumerate() {
                if j < n_unstable {
                    unstable = axpy(*c, &dir.vector, &unstable);
                } else {
                    stable = axpy(*c, &dir.vector, &stable);
                }
            }
            // make the stable leg land exactly on the lattice point
            for k in 0..d {
                stable[k] = e[k] - unstable[k];
            }
            SuLoop {
                legs: vec![(LeafKind::Unstable, unstable), (LeafKind::Stable, stable)],
            }
        })
        .collect()
}

/// The generator loop maps together with the circle restriction of `f`.
#[derive(Clone, Debug)]
pub struct AccessibilityGroup {
    pub generators: Vec<SuLoopMap>,
    pub restriction: MonotoneCircleLift,
}

pub fn accessibility_group(
    sys: &SkewProductSystem,
    generators: &[SuLoop],
    depth: usize,
) -> Result<AccessibilityGroup> {
    let maps = generators
        .iter()
        .map(|g| su_loop_map(sys, g, depth))
        .collect::<Result<Vec<_>>>()?;
    Ok(AccessibilityGroup {
        generators: maps,
        restriction: sys.restrict_to_invariant_circle(),
    })
}

/// Closed subset of the circle of heights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeightSet {
    Point(f64),
    /// `[start, end]` with `start` in `[0,1)` and `end >= start` (possibly past 1).
    Interval { start: f64, end: f64 },
}

impl HeightSet {
    pub fn contains(&self, z: f64, slack: f64) -> bool {
        let w = z.rem_euclid(1.0);
        match *self {
            HeightSet::Point(p) => circle_distance(w, p) <= slack,
            HeightSet::Interval { start, end } => {
                if end - start >= 1.0 {
                    return true;
                }
                let rel = (w - start).rem_euclid(1.0);
                rel <= end - start + slack || circle_distance(w, start) <= slack
            }
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            HeightSet::Point(_) => 0.0,
            HeightSet::Interval { start, end } => (end - start).min(1.0),
        }
    }

    /// A representative height in `[0,1)`.
    pub fn center(&self) -> f64 {
        match *self {
            HeightSet::Point(p) => p,
            HeightSet::Interval { start, end } => (0.5 * (start + end)).rem_euclid(1.0),
        }
    }
}

pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Heights fixed by every generator, with indeterminate bands.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactClasses {
    pub components: Vec<HeightSet>,
    /// Heights whose displacement lies in `[tol, 10 tol)`.
    pub bands: Vec<(f64, f64)>,
    pub band_fraction: f64,
    pub min_displacement: f64,
    pub max_displacement: f64,
    pub grid: usize,
    pub tol: f64,
}

impl CompactClasses {
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.components.iter().any(|c| c.length() >= 1.0)
    }

    pub fn contains(&self, z: f64, slack: f64) -> bool {
        self.components.iter().any(|c| c.contains(z, slack))
    }
}

/// `max_g |g(z) - z|`.
pub fn displacement<L: CircleLift>(maps: &[L], z: f64) -> f64 {
    maps.iter()
        .map(|g| (g.lift(z) - z).abs())
        .fold(0.0, f64::max)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Boundary between a fixed grid height `inside` and a non-fixed one.
fn refine_edge<F: Fn(f64) -> f64>(f: F, mut inside: f64, mut outside: f64, tol: f64) -> f64 {
    for _ in 0..50 {
        let mid = 0.5 * (inside + outside);
        if f(mid) < tol {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Fixed,
    Band,
    Moving,
}

/// Heights `z` with `max_g |g(z) - z| < tol`, from a grid scan refined by
/// golden-section search at local minima and bisection at run boundaries.
pub fn detect_compact_classes<L: CircleLift + Sync>(
    generators: &[L],
    grid: usize,
    tol: f64,
) -> CompactClasses {
    let h = 1.0 / grid as f64;
    let disp = |z: f64| displacement(generators, z);
    let values: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|i| disp(i as f64 * h))
        .collect();
    let status: Vec<Status> = values
        .iter()
        .map(|&d| {
            if d < tol {
                Status::Fixed
            } else if d < 10.0 * tol {
                Status::Band
            } else {
                Status::Moving
            }
        })
        .collect();
    let min_displacement = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_displacement = values.iter().copied().fold(0.0, f64::max);
    let mut components = Vec::new();
    let mut bands = Vec::new();
    let band_count = status.iter().filter(|s| **s == Status::Band).count();

    if status.iter().all(|s| *s == Status::Fixed) {
        components.push(HeightSet::Interval {
            start: 0.0,
            end: 1.0,
        });
    } else {
        // runs are enumerated starting right after a non-fixed point so that
        // runs wrapping through 0 stay whole
        let first_break = status.iter().position(|s| *s != Status::Fixed).unwrap_or(0);
        let idx = |k: usize| (first_break + k) % grid;
        let mut k = 0;
        while k < grid {
            let i = idx(k);
            if status[i] == Status::Fixed {
                let mut len = 1;
                while len < grid && status[idx(k + len)] == Status::Fixed {
                    len += 1;
                }
                let a = (first_break + k) as f64 * h;
                let b = (first_break + k + len - 1) as f64 * h;
                if len == 1 {
                    let (zmin, dmin) = golden_min(disp, a - h, a + h);
                    let z = if dmin < values[i] { zmin } else { a };
                    components.push(HeightSet::Point(z.rem_euclid(1.0)));
                } else {
                    let start = refine_edge(disp, a, a - h, tol);
                    let end = refine_edge(disp, b, b + h, tol);
                    let shift = start.floor();
                    components.push(HeightSet::Interval {
                        start: start - shift,
                        end: end - shift,
                    });
                }
                k += len;
            } else {
                if status[i] == Status::Band {
                    let mut len = 1;
                    while k + len < grid && status[idx(k + len)] == Status::Band {
                        len += 1;
                    }
                    let a = (first_break + k) as f64 * h - 0.5 * h;
                    let b = (first_break + k + len - 1) as f64 * h + 0.5 * h;
                    bands.push((a.rem_euclid(1.0), a.rem_euclid(1.0) + (b - a)));
                }
                // isolated minima between grid points
                let prev = values[(i + grid - 1) % grid];
                let next = values[(i + 1) % grid];
                if values[i] <= prev && values[i] <= next {
                    let z = i as f64 * h;
                    let (zmin, dmin) = golden_min(disp, z - h, z + h);
                    if dmin < tol {
                        components.push(HeightSet::Point(zmin.rem_euclid(1.0)));
                    }
                }
                k += 1;
            }
        }
        components.sort_by(|a, b| a.center().total_cmp(&b.center()));
    }
    CompactClasses {
        components,
        bands,
        band_fraction: band_count as f64 / grid as f64,
        min_displacement,
        max_displacement,
        grid,
        tol,
    }
}

/// Rows `(z, max_g |g(z) - z|)` on a grid.
pub fn displacement_profile<L: CircleLift + Sync>(generators: &[L], grid: usize) -> Vec<(f64, f64)> {
    (0..grid)
        .into_par_iter()
        .map(|i| {
            let z = i as f64 / grid as f64;
            (z, displacement(generators, z))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::{make_prototype, Perturbation, TrigTerm};
    use crate::torus::{compute_splitting, IntegerMatrix};

    fn prototype() -> SkewProductSystem {
        let cat = compute_splitting(&IntegerMatrix::parse("2,1;1,1").unwrap()).unwrap();
        make_prototype(&cat, &IntegerMatrix::identity(2)).unwrap()
    }

    fn accessible() -> SkewProductSystem {
        prototype()
            .perturb(&Perturbation::FiberShear(vec![TrigTerm::sin(0.05, &[1, 0, 0])]))
            .unwrap()
    }

    fn localized() -> SkewProductSystem {
        prototype()
            .perturb(&Perturbation::Localized {
                terms: vec![TrigTerm::sin(0.05, &[1, 0, 0])],
                window: vec![TrigTerm::sin(1.0, &[0, 0, 1])],
            })
            .unwrap()
    }

    fn stable_point(offset: f64) -> BaseLeafPoint {
        BaseLeafPoint::new(TorusPoint::new(&[0.0, 0.0]), LeafKind::Stable, 0, offset)
    }

    fn unstable_point(offset: f64) -> BaseLeafPoint {
        BaseLeafPoint::new(TorusPoint::new(&[0.0, 0.0]), LeafKind::Unstable, 0, offset)
    }

    fn sup_diff<A: CircleLift, B: CircleLift>(a: &A, b: &B, grid: usize) -> f64 {
        (0..grid)
            .map(|i| {
                let z = i as f64 / grid as f64;
                (a.lift(z) - b.lift(z)).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn prototype_and_rotation_holonomies_are_identity() {
        for sys in [
            prototype(),
            prototype().perturb(&Perturbation::Rotation(0.3)).unwrap(),
        ] {
            let hs = stable_holonomy(&sys, &stable_point(0.0), &stable_point(0.7), 40)
                .unwrap();
            let hu = unstable_holonomy(&sys, &unstable_point(0.0), &unstable_point(-0.4), 40)
                .unwrap();
            for z in [0.0, 0.25, 0.9] {
                assert!((hs.eval(z) - z).abs() < 1e-13);
                assert!((hu.eval(z) - z).abs() < 1e-13);
            }
            for g in generator_loops(&sys) {
                let map = su_loop_map(&sys, &g, 40).unwrap();
                assert!(map.max_displacement(64) < 1e-12);
            }
        }
    }

    #[test]
    fn translation_fibers_match_series() {
        let sys = accessible();
        let to = stable_point(1.0);
        let h = stable_holonomy(&sys, &stable_point(0.0), &to, 60).unwrap();
        // oracle: for fiber translations the holonomy is z + sum_k (a(u_k) - a(w_k))
        let a = |v: &Vec3| 0.05 * (std::f64::consts::TAU * v[0]).sin();
        let e = sys.base().stable()[0].vector;
        let lam = sys.base().stable()[0].eigenvalue;
        let mut shift = 0.0;
        for k in 0..60 {
            let w = axpy(lam.powi(k), &e, &[0.0; 3]);
            shift += a(&[0.0; 3]) - a(&w);
        }
        assert!((h.eval(0.3) - 0.3 - shift).abs() < 1e-13);
        assert!(shift.abs() > 1e-3);
    }

    #[test]
    fn stable_depth_truncation_is_certified() {
        let sys = accessible();
        let from = stable_point(0.0);
        let to = stable_point(1.0);
        let h60 = stable_holonomy(&sys, &from, &to, 60).unwrap();
        let h80 = stable_holonomy(&sys, &from, &to, 80).unwrap();
        assert!(h80.tail_bound < MAX_TAIL_BOUND);
        assert!(sup_diff(&h60, &h80, 128) < 1e-9);
        let h90 = stable_holonomy(&sys, &from, &to, 90).unwrap();
        assert!(sup_diff(&h80, &h90, 128) < h80.tail_bound);
    }

    #[test]
    fn unstable_depth_truncation_is_certified() {
        let sys = localized();
        let from = unstable_point(0.0);
        let to = unstable_point(0.8);
        let h40 = unstable_holonomy(&sys, &from, &to, 40).unwrap();
        let h80 = unstable_holonomy(&sys, &from, &to, 80).unwrap();
        assert!(sup_diff(&h40, &h80, 128) < h40.tail_bound);
        assert!(sup_diff(&h80, &|z: f64| z, 128) > 1e-4);
    }

    #[test]
    fn off_leaf_points_rejected() {
        let sys = accessible();
        let err = stable_holonomy(&sys, &stable_point(0.0), &unstable_point(0.5), 20)
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn localized_generators_fix_window_zeros() {
        let sys = localized();
        let maps: Vec<SuLoopMap> = generator_loops(&sys)
            .iter()
            .map(|g| su_loop_map(&sys, g, 80).unwrap())
            .collect();
        for m in &maps {
            assert!((m.eval(0.0)).abs() < 1e-9);
            assert!((m.eval(0.5) - 0.5).abs() < 1e-9);
        }
        assert!(displacement(&maps, 0.25) > 1e-5);
        let k = detect_compact_classes(&maps, 256, DEFAULT_TOL);
        assert!(k.contains(0.0, 1e-9) && k.contains(0.5, 1e-9));
        assert!(!k.contains(0.25, 1e-3));
    }

    #[test]
    fn four_leg_loop_fixes_window_zeros() {
        let sys = localized();
        let g = &generator_loops(&sys)[0];
        let (u, s) = (g.legs[0].1, g.legs[1].1);
        let half = |v: Vec3| v.map(|x| 0.5 * x);
        let four = SuLoop {
            legs: vec![
                (LeafKind::Unstable, half(u)),
                (LeafKind::Stable, half(s)),
                (LeafKind::Unstable, half(u)),
                (LeafKind::Stable, half(s)),
            ],
        };
        let map = su_loop_map(&sys, &four, 80).unwrap();
        assert_eq!(map.alpha, [1, 0, 0]);
        assert!(map.eval(0.0).abs() < 1e-9);
        assert!((map.eval(0.5) - 0.5).abs() < 1e-9);
        let deeper = su_loop_map(&sys, &four, 120).unwrap();
        assert!(sup_diff(&map, &deeper, 64) < 1e-9);
    }

    #[test]
    fn accessible_generators_move_everything() {
        let sys = accessible();
        let group = accessibility_group(&sys, &generator_loops(&sys), 80).unwrap();
        let max = group
            .generators
            .iter()
            .map(|g| g.max_displacement(64))
            .fold(0.0, f64::max);
        assert!(max > 1e-4);
        let k = detect_compact_classes(&group.generators, 256, DEFAULT_TOL);
        assert!(k.is_empty());
        assert!(k.min_displacement > 10.0 * DEFAULT_TOL);
    }

    #[test]
    fn prototype_compact_set_is_full() {
        let sys = prototype();
        let maps: Vec<SuLoopMap> = generator_loops(&sys)
            .iter()
            .map(|g| su_loop_map(&sys, g, 80).unwrap())
            .collect();
        let k = detect_compact_classes(&maps, 128, DEFAULT_TOL);
        assert!(k.is_full());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sys = localized();
        let from = unstable_point(0.0);
        let to = unstable_point(0.6);
        let h = unstable_holonomy(&sys, &from, &to, 80).unwrap();
        let hs = stable_holonomy(&sys, &stable_point(0.1), &stable_point(0.9), 80)
            .unwrap();
        for z in [0.1, 0.3, 0.77] {
            let eps = 1e-5;
            let fd = (h.eval(z + eps) - h.eval(z - eps)) / (2.0 * eps);
            let j = holonomy_derivative(&sys, LeafKind::Unstable, &from, &to, z, 80).unwrap();
            assert!((fd - j).abs() < 1e-5, "z = {z}: fd {fd} vs {j}");
            let fds = (hs.eval(z + eps) - hs.eval(z - eps)) / (2.0 * eps);
            assert!((fds - hs.derivative(z)).abs() < 1e-5);
        }
        let proto = prototype();
        assert_eq!(
            holonomy_derivative(&proto, LeafKind::Unstable, &from, &to, 0.3, 40).unwrap(),
            1.0
        );
    }

    #[test]
    fn equivariance_of_stable_holonomy() {
        let sys = localized();
        let e = sys.base().stable()[0].vector;
        let lam = sys.base().stable()[0].eigenvalue;
        let u = [0.2, 0.7, 0.0];
        let w = axpy(0.5, &e, &u);
        let au = sys.base().matrix().apply(&u);
        let aw = axpy(0.5 * lam, &e, &au);
        let h = holonomy_between(&sys, LeafKind::Stable, &u, &w, 80).unwrap();
        let ha = holonomy_between(&sys, LeafKind::Stable, &au, &aw, 80).unwrap();
        let fib = sys.fiber();
        let a = sys.base().matrix();
        for z in [0.1, 0.45, 0.8] {
            let lhs = ha.eval(fib.eval(&u, &a.apply(&u), z));
            let rhs = fib.eval(&w, &a.apply(&w), h.eval(z));
            assert!((lhs - rhs).abs() < 3.0 * (h.tail_bound + ha.tail_bound));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn stable_cocycle_and_inverse_laws(
                x in 0.0f64..1.0, y in 0.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0, z in 0.0f64..1.0
            ) {
                let sys = localized();
                let e = sys.base().stable()[0].vector;
                let u = [x, y, 0.0];
                let v = axpy(a, &e, &u);
                let w = axpy(b, &e, &u);
                let huv = holonomy_between(&sys, LeafKind::Stable, &u, &v, 80).unwrap();
                let hvw = holonomy_between(&sys, LeafKind::Stable, &v, &w, 80).unwrap();
                let huw = holonomy_between(&sys, LeafKind::Stable, &u, &w, 80).unwrap();
                let hvu = holonomy_between(&sys, LeafKind::Stable, &v, &u, 80).unwrap();
                let bound = 3.0 * huv.tail_bound.max(hvw.tail_bound).max(huw.tail_bound);
                prop_assert!((hvw.eval(huv.eval(z)) - huw.eval(z)).abs() < bound);
                prop_assert!((hvu.eval(huv.eval(z)) - z).abs() < bound);
                prop_assert!(huv.eval(z + 0.01) > huv.eval(z));
            }

            #[test]
            fn unstable_inverse_law(x in 0.0f64..1.0, y in 0.0f64..1.0, a in -1.0f64..1.0, z in 0.0f64..1.0) {
                let sys = localized();
                let e = sys.base().unstable()[0].vector;
                let u = [x, y, 0.0];
                let v = axpy(a, &e, &u);
                let huv = holonomy_between(&sys, LeafKind::Unstable, &u, &v, 80).unwrap();
                let hvu = holonomy_between(&sys, LeafKind::Unstable, &v, &u, 80).unwrap();
                prop_assert!((hvu.eval(huv.eval(z)) - z).abs() < 3.0 * huv.tail_bound.max(hvu.tail_bound));
            }
        }
    }
}
