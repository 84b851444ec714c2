//! Skew products `(v, z) -> (Av, phi(v, z))` over a hyperbolic toral
//! automorphism, with circle fibers and an optional mapping-torus gluing
//! `(v, t) ~ (Bv, t - 1)`.
//!
//! Fiber maps are finite trigonometric polynomials, optionally conjugated by
//! near-identity fiber diffeomorphisms `h_v`, so that every derivative is
//! available in closed form.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circle::MonotoneCircleLift;
use crate::error::{Error, Result};
use crate::torus::{
    check_commuting, from_fixed, norm, to_fixed, wrap_unit, FixedPoint, IntegerMatrix,
    MappingTorusPoint, ToralAutomorphism, TorusPoint, Vec3,
};

/// Tolerance of the Newton solve used for fiber inverses.
pub const FIBER_INVERSE_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    pub fn name(self) -> &'static str {
        match self {
            Trig::Sin => "sin",
            Trig::Cos => "cos",
        }
    }
}

/// One term `coefficient * trig(2 pi (k . v + l z))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigTerm {
    pub coefficient: f64,
    pub trig: Trig,
    /// Frequencies along the base coordinates; unused slots are zero.
    pub base: [i32; 3],
    /// Frequency along the fiber coordinate.
    pub fiber: i32,
}

impl TrigTerm {
    /// `frequency` lists the base frequencies followed by the fiber frequency.
    pub fn new(coefficient: f64, trig: Trig, frequency: &[i32]) -> Self {
        assert!(
            (3..=4).contains(&frequency.len()),
            "frequency vector must have length d + 1 with d in {{2, 3}}"
        );
        let mut base = [0; 3];
        let (b, l) = frequency.split_at(frequency.len() - 1);
        base[..b.len()].copy_from_slice(b);
        TrigTerm {
            coefficient,
            trig,
            base,
            fiber: l[0],
        }
    }

    pub fn sin(coefficient: f64, frequency: &[i32]) -> Self {
        Self::new(coefficient, Trig::Sin, frequency)
    }

    pub fn cos(coefficient: f64, frequency: &[i32]) -> Self {
        Self::new(coefficient, Trig::Cos, frequency)
    }

    pub fn is_constant(&self) -> bool {
        self.base == [0; 3] && self.fiber == 0
    }

    #[inline]
    fn phase(&self, v: &Vec3, z: f64) -> f64 {
        TAU * (self.base[0] as f64 * v[0]
            + self.base[1] as f64 * v[1]
            + self.base[2] as f64 * v[2]
            + self.fiber as f64 * z)
    }

    #[inline]
    pub fn value(&self, v: &Vec3, z: f64) -> f64 {
        let p = self.phase(v, z);
        match self.trig {
            Trig::Sin => self.coefficient * p.sin(),
            Trig::Cos => self.coefficient * p.cos(),
        }
    }

    /// Partial derivative in the fiber coordinate.
    #[inline]
    pub fn dz(&self, v: &Vec3, z: f64) -> f64 {
        if self.fiber == 0 {
            return 0.0;
        }
        let p = self.phase(v, z);
        let s = TAU * self.fiber as f64 * self.coefficient;
        match self.trig {
            Trig::Sin => s * p.cos(),
            Trig::Cos => -s * p.sin(),
        }
    }

    /// Bound on `|dz|` over the whole phase space.
    fn dz_bound(&self) -> f64 {
        self.coefficient.abs() * TAU * (self.fiber.abs() as f64)
    }

    /// Lipschitz constant in the base variable (Euclidean metric).
    fn base_lipschitz(&self) -> f64 {
        let k = self.base.map(|x| x as f64);
        self.coefficient.abs() * TAU * norm(&k)
    }

    /// Rewrites the term so that the leading nonzero frequency is positive.
    fn normalized(mut self) -> Self {
        let lead = self
            .base
            .iter()
            .copied()
            .chain(std::iter::once(self.fiber))
            .find(|&k| k != 0)
            .unwrap_or(0);
        if lead < 0 {
            self.base = self.base.map(|k| -k);
            self.fiber = -self.fiber;
            if self.trig == Trig::Sin {
                self.coefficient = -self.coefficient;
            }
        }
        if self.is_constant() && self.trig == Trig::Sin {
            self.coefficient = 0.0;
        }
        self
    }

    fn shifted(&self, sign: i32, other: &TrigTerm) -> ([i32; 3], i32) {
        let mut base = self.base;
        for (b, o) in base.iter_mut().zip(other.base) {
            *b += sign * o;
        }
        (base, self.fiber + sign * other.fiber)
    }
}

/// Product of two trigonometric polynomials, expanded into a sum of terms.
pub fn multiply_terms(left: &[TrigTerm], right: &[TrigTerm]) -> Vec<TrigTerm> {
    let mut out = Vec::with_capacity(2 * left.len() * right.len());
    for a in left {
        for b in right {
            let c = 0.5 * a.coefficient * b.coefficient;
            let (plus_b, plus_l) = a.shifted(1, b);
            let (minus_b, minus_l) = a.shifted(-1, b);
            let mk = |coefficient, trig, base, fiber| TrigTerm {
                coefficient,
                trig,
                base,
                fiber,
            };
            let pair = match (a.trig, b.trig) {
                (Trig::Sin, Trig::Sin) => [
                    mk(c, Trig::Cos, minus_b, minus_l),
                    mk(-c, Trig::Cos, plus_b, plus_l),
                ],
                (Trig::Sin, Trig::Cos) => [
                    mk(c, Trig::Sin, plus_b, plus_l),
                    mk(c, Trig::Sin, minus_b, minus_l),
                ],
                (Trig::Cos, Trig::Sin) => [
                    mk(c, Trig::Sin, plus_b, plus_l),
                    mk(-c, Trig::Sin, minus_b, minus_l),
                ],
                (Trig::Cos, Trig::Cos) => [
                    mk(c, Trig::Cos, minus_b, minus_l),
                    mk(c, Trig::Cos, plus_b, plus_l),
                ],
            };
            out.extend(pair);
        }
    }
    simplify_terms(out)
}

/// Normalizes signs, merges equal frequencies and drops zero terms.
pub fn simplify_terms(terms: Vec<TrigTerm>) -> Vec<TrigTerm> {
    let mut out: Vec<TrigTerm> = Vec::with_capacity(terms.len());
    for t in terms.into_iter().map(TrigTerm::normalized) {
        match out
            .iter_mut()
            .find(|o| o.trig == t.trig && o.base == t.base && o.fiber == t.fiber)
        {
            Some(o) => o.coefficient += t.coefficient,
            None => out.push(t),
        }
    }
    out.retain(|t| t.coefficient != 0.0);
    out
}

/// Zeros on `[0,1)` of a window depending on the fiber coordinate only.
pub fn window_zero_set(window: &[TrigTerm], grid: usize) -> Vec<f64> {
    let origin = [0.0; 3];
    let w = |z: f64| window.iter().map(|t| t.value(&origin, z)).sum::<f64>();
    let mut zeros = Vec::new();
    for i in 0..grid {
        let (a, b) = (i as f64 / grid as f64, (i + 1) as f64 / grid as f64);
        let (wa, wb) = (w(a), w(b));
        if wa.abs() < 1e-14 {
            zeros.push(a);
        } else if wb.abs() >= 1e-14 && (wa < 0.0) != (wb < 0.0) {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if (w(mid) < 0.0) == (wa < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeros.push(0.5 * (lo + hi));
        }
    }
    zeros
}

fn sum_value(terms: &[TrigTerm], v: &Vec3, z: f64) -> f64 {
    terms.iter().map(|t| t.value(v, z)).sum()
}

fn sum_dz(terms: &[TrigTerm], v: &Vec3, z: f64) -> f64 {
    terms.iter().map(|t| t.dz(v, z)).sum()
}

/// Solves `g(w) = y` for an increasing degree-one lift `g` with `g' >= floor > 0`.
fn solve_monotone<G, D>(g: G, dg: D, y: f64, guess: f64) -> f64
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut w = guess;
    let mut r = g(w) - y;
    if r == 0.0 {
        return w;
    }
    // bracket using g(w + 1) = g(w) + 1
    let (mut lo, mut hi) = if r < 0.0 {
        let mut hi = w + 0.5;
        while g(hi) - y < 0.0 {
            hi += 1.0;
        }
        (w, hi)
    } else {
        let mut lo = w - 0.5;
        while g(lo) - y > 0.0 {
            lo -= 1.0;
        }
        (lo, w)
    };
    for _ in 0..100 {
        let d = dg(w);
        let mut next = w - r / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - w).abs();
        w = next;
        r = g(w) - y;
        if r == 0.0 {
            break;
        }
        if r < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        if step < FIBER_INVERSE_TOL * 1e-2 || hi - lo < FIBER_INVERSE_TOL * 1e-2 {
            break;
        }
    }
    w
}

/// The family `v -> phi(v, .)` of fiber circle maps.
///
/// The core map is `z + rotation + sum(terms)`; each conjugator layer `h`
/// replaces `phi` by `h_{Av} o phi o h_v^{-1}` with `h_v(z) = z + sum(layer)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberMapFamily {
    pub rotation: f64,
    pub terms: Vec<TrigTerm>,
    pub conjugators: Vec<Vec<TrigTerm>>,
}

impl FiberMapFamily {
    pub fn identity() -> Self {
        FiberMapFamily {
            rotation: 0.0,
            terms: Vec::new(),
            conjugators: Vec::new(),
        }
    }

    /// True when no term depends on the fiber coordinate.
    pub fn is_fiber_translation(&self) -> bool {
        self.conjugators.is_empty() && self.terms.iter().all(|t| t.fiber == 0)
    }

    /// True when no term depends on the base point.
    pub fn is_base_independent(&self) -> bool {
        self.terms.iter().all(|t| t.base == [0; 3])
            && self
                .conjugators
                .iter()
                .all(|layer| layer.iter().all(|t| t.base == [0; 3]))
    }

    #[inline]
    fn core(&self, v: &Vec3, z: f64) -> f64 {
        z + self.rotation + sum_value(&self.terms, v, z)
    }

    #[inline]
    fn core_dz(&self, v: &Vec3, z: f64) -> f64 {
        1.0 + sum_dz(&self.terms, v, z)
    }

    fn layer_inverse(layer: &[TrigTerm], v: &Vec3, y: f64) -> f64 {
        solve_monotone(
            |w| w + sum_value(layer, v, w),
            |w| 1.0 + sum_dz(layer, v, w),
            y,
            y - sum_value(layer, v, y),
        )
    }

    /// `phi(v, z)`; `av` must be the image `A v` (any lift).
    #[inline]
    pub fn eval(&self, v: &Vec3, av: &Vec3, z: f64) -> f64 {
        if self.conjugators.is_empty() {
            return self.core(v, z);
        }
        let mut w = z;
        for layer in self.conjugators.iter().rev() {
            w = Self::layer_inverse(layer, v, w);
        }
        let mut y = self.core(v, w);
        for layer in &self.conjugators {
            y += sum_value(layer, av, y);
        }
        y
    }

    /// `d phi / dz (v, z)`.
    pub fn dz(&self, v: &Vec3, av: &Vec3, z: f64) -> f64 {
        if self.conjugators.is_empty() {
            return self.core_dz(v, z);
        }
        let mut w = z;
        let mut deriv = 1.0;
        for layer in self.conjugators.iter().rev() {
            w = Self::layer_inverse(layer, v, w);
            deriv /= 1.0 + sum_dz(layer, v, w);
        }
        deriv *= self.core_dz(v, w);
        let mut y = self.core(v, w);
        for layer in &self.conjugators {
            deriv *= 1.0 + sum_dz(layer, av, y);
            y += sum_value(layer, av, y);
        }
        deriv
    }

    /// Solves `phi(v, w) = y` for `w`.
    pub fn inverse(&self, v: &Vec3, av: &Vec3, y: f64) -> f64 {
        if self.is_fiber_translation() {
            return y - self.rotation - sum_value(&self.terms, v, 0.0);
        }
        let guess = y - self.rotation;
        solve_monotone(
            |w| self.eval(v, av, w),
            |w| self.dz(v, av, w),
            y,
            guess,
        )
    }

    /// Analytic lower and upper bounds on `d phi / dz`.
    pub fn dz_bounds(&self) -> (f64, f64) {
        let core: f64 = self.terms.iter().map(TrigTerm::dz_bound).sum();
        let mut lo = 1.0 - core;
        let mut hi = 1.0 + core;
        for layer in &self.conjugators {
            let s: f64 = layer.iter().map(TrigTerm::dz_bound).sum();
            lo *= (1.0 - s) / (1.0 + s);
            hi *= (1.0 + s) / (1.0 - s).max(f64::MIN_POSITIVE);
        }
        (lo, hi)
    }

    /// Lipschitz constant of `phi` in the base variable (core terms only).
    pub fn base_lipschitz(&self) -> f64 {
        self.terms.iter().map(TrigTerm::base_lipschitz).sum()
    }
}

/// Phase space on which a skew product acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseSpace {
    TorusProduct,
    MappingTorus,
}

/// Numerical configuration carried by every system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemConfig {
    /// Validation grid per coordinate.
    pub grid: usize,
    /// Required lower bound on `d phi / dz`.
    pub margin: f64,
    /// Largest accepted `|n|` in [`SkewProductSystem::step`].
    pub max_steps: u64,
    /// Sample count for sampled circle lifts.
    pub lift_grid: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            grid: 256,
            margin: 0.05,
            max_steps: 100_000_000,
            lift_grid: 4096,
        }
    }
}

/// A perturbation method applied by [`SkewProductSystem::perturb`].
#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation {
    /// Adds a constant rotation along the fiber.
    Rotation(f64),
    /// Adds trigonometric terms to the fiber map.
    FiberShear(Vec<TrigTerm>),
    /// Adds `window(z) * terms(v, z)`, which vanishes on the zero set of the window.
    Localized {
        terms: Vec<TrigTerm>,
        window: Vec<TrigTerm>,
    },
    /// Conjugates by the fiber diffeomorphism `h_v(z) = z + sum(terms)`.
    Conjugate(Vec<TrigTerm>),
}

/// A skew product over a hyperbolic toral automorphism.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewProductSystem {
    base: ToralAutomorphism,
    gluing: IntegerMatrix,
    gluing_inverse: IntegerMatrix,
    fiber: FiberMapFamily,
    phase_space: PhaseSpace,
    config: SystemConfig,
}

/// The AB-prototype `(v, t) -> (Av, t)` on the mapping torus of `b`.
pub fn make_prototype(a: &ToralAutomorphism, b: &IntegerMatrix) -> Result<SkewProductSystem> {
    SkewProductSystem::new(
        a.clone(),
        *b,
        FiberMapFamily::identity(),
        PhaseSpace::MappingTorus,
        SystemConfig::default(),
    )
}

impl SkewProductSystem {
    pub fn new(
        base: ToralAutomorphism,
        gluing: IntegerMatrix,
        fiber: FiberMapFamily,
        phase_space: PhaseSpace,
        config: SystemConfig,
    ) -> Result<Self> {
        if !check_commuting(base.matrix(), &gluing)? {
            return Err(Error::domain(format!(
                "base {} and gluing {} do not commute",
                base.matrix(),
                gluing
            )));
        }
        if phase_space == PhaseSpace::TorusProduct && !gluing.is_identity() {
            return Err(Error::domain("a torus product requires identity gluing"));
        }
        let sys = SkewProductSystem {
            gluing_inverse: gluing.inverse()?,
            base,
            gluing,
            fiber,
            phase_space,
            config,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Builds the prototype from raw matrices.
    pub fn prototype(a: &IntegerMatrix, b: &IntegerMatrix) -> Result<Self> {
        make_prototype(&crate::torus::compute_splitting(a)?, b)
    }

    pub fn base(&self) -> &ToralAutomorphism {
        &self.base
    }

    pub fn gluing(&self) -> &IntegerMatrix {
        &self.gluing
    }

    pub fn fiber(&self) -> &FiberMapFamily {
        &self.fiber
    }

    pub fn phase_space(&self) -> PhaseSpace {
        self.phase_space
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn with_config(&self, config: SystemConfig) -> Result<Self> {
        let mut out = self.clone();
        out.config = config;
        out.validate()?;
        Ok(out)
    }

    /// Returns a new system with the perturbation applied.
    pub fn perturb(&self, method: &Perturbation) -> Result<Self> {
        let mut fiber = self.fiber.clone();
        match method {
            Perturbation::Rotation(theta) => {
                fiber.rotation = wrap_unit(fiber.rotation + theta);
            }
            Perturbation::FiberShear(terms) => {
                let mut all = fiber.terms.clone();
                all.extend_from_slice(terms);
                fiber.terms = simplify_terms(all);
            }
            Perturbation::Localized { terms, window } => {
                let mut all = fiber.terms.clone();
                all.extend(multiply_terms(terms, window));
                fiber.terms = simplify_terms(all);
            }
            Perturbation::Conjugate(terms) => {
                fiber.conjugators.push(simplify_terms(terms.clone()));
            }
        }
        if fiber == self.fiber {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        out.fiber = fiber;
        out.validate()?;
        Ok(out)
    }

    fn grid_points(&self, per_coord: usize) -> usize {
        per_coord.pow(self.dim() as u32 + 1)
    }

    /// Checks the circle-diffeomorphism margin and mapping-torus equivariance.
    pub fn validate(&self) -> Result<()> {
        let margin = self.config.margin;
        for (i, layer) in self.fiber.conjugators.iter().enumerate() {
            let s: f64 = layer.iter().map(TrigTerm::dz_bound).sum();
            if 1.0 - s <= margin {
                self.grid_check(|v, _av, z| 1.0 + sum_dz(layer, v, z), &format!("conjugator {i}"))?;
            }
        }
        if self.fiber.dz_bounds().0 <= margin {
            let fiber = &self.fiber;
            self.grid_check(|v, av, z| fiber.dz(v, av, z), "fiber map")?;
        }
        if !self.gluing.is_identity() {
            self.check_gluing_equivariance()?;
        }
        Ok(())
    }

    fn grid_check<D>(&self, deriv: D, what: &str) -> Result<()>
    where
        D: Fn(&Vec3, &Vec3, f64) -> f64,
    {
        let d = self.dim();
        let mut per = self.config.grid;
        if d == 3 {
            per = per.min(48);
        }
        if !self.fiber.conjugators.is_empty() {
            per = per.min(64);
        }
        let total = self.grid_points(per);
        let h = 1.0 / per as f64;
        for idx in 0..total {
            let mut rem = idx;
            let mut v = [0.0; 3];
            for slot in v.iter_mut().take(d) {
                *slot = (rem % per) as f64 * h;
                rem /= per;
            }
            let z = rem as f64 * h;
            let av = self.base.matrix().apply(&v);
            let dz = deriv(&v, &av, z);
            if !(dz > self.config.margin) {
                return Err(Error::Validation {
                    point: format!("v = {:?}, z = {z}", &v[..d]),
                    reason: format!(
                        "{what}: d/dz = {dz} not above margin {}",
                        self.config.margin
                    ),
                });
            }
        }
        Ok(())
    }

    fn check_gluing_equivariance(&self) -> Result<()> {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x9_1u64);
        for _ in 0..64 {
            let mut v = [0.0; 3];
            for slot in v.iter_mut().take(d) {
                *slot = rng.gen::<f64>();
            }
            let t: f64 = rng.gen::<f64>() * 2.0 - 0.5;
            let bv = self.gluing.apply(&v);
            let lhs = self.fiber.eval(&bv, &self.base.matrix().apply(&bv), t - 1.0);
            let rhs = self.fiber.eval(&v, &self.base.matrix().apply(&v), t) - 1.0;
            if (lhs - rhs).abs() >= 1e-12 {
                return Err(Error::Validation {
                    point: format!("v = {:?}, t = {t}", &v[..d]),
                    reason: format!(
                        "fiber family not equivariant under the gluing (defect {:e})",
                        (lhs - rhs).abs()
                    ),
                });
            }
        }
        Ok(())
    }

    fn glue(&self, v: FixedPoint, z: f64) -> (FixedPoint, f64) {
        let shift = z.floor();
        let mut height = z - shift;
        if height >= 1.0 {
            height = 0.0;
        }
        if self.gluing.is_identity() || shift == 0.0 {
            return (v, height);
        }
        let (m, times) = if shift > 0.0 {
            (&self.gluing, shift as u64)
        } else {
            (&self.gluing_inverse, (-shift) as u64)
        };
        let mut w = v;
        for _ in 0..times {
            w = m.apply_fixed(&w);
        }
        (w, height)
    }

    /// One forward step on canonical coordinates.
    #[inline]
    pub fn forward(&self, v: &FixedPoint, z: f64) -> (FixedPoint, f64) {
        let av = self.base.matrix().apply_fixed(v);
        let z1 = self.fiber.eval(&from_fixed(v), &from_fixed(&av), z);
        self.glue(av, z1)
    }

    /// One backward step on canonical coordinates.
    #[inline]
    pub fn backward(&self, v: &FixedPoint, z: f64) -> (FixedPoint, f64) {
        let u = self.base.inverse().apply_fixed(v);
        let z1 = self.fiber.inverse(&from_fixed(&u), &from_fixed(v), z);
        self.glue(u, z1)
    }

    /// `n`-fold composition of `f` (or of `f^{-1}` for negative `n`).
    ///
    /// Base coordinates are rounded to the discrete torus `(2^-52 Z / Z)^d`,
    /// where the base automorphism acts exactly.
    pub fn step(&self, p: &MappingTorusPoint, n: i64) -> Result<MappingTorusPoint> {
        if n.unsigned_abs() > self.config.max_steps {
            return Err(Error::domain(format!(
                "|n| = {} exceeds the configured maximum {}",
                n.unsigned_abs(),
                self.config.max_steps
            )));
        }
        if p.base.dim != self.dim() {
            return Err(Error::domain("point dimension does not match the system"));
        }
        let start = p.canonical(&self.gluing, &self.gluing_inverse);
        let (mut v, mut z) = (to_fixed(&start.base.coords), start.height);
        for _ in 0..n.unsigned_abs() {
            (v, z) = if n > 0 {
                self.forward(&v, z)
            } else {
                self.backward(&v, z)
            };
            if !z.is_finite() {
                return Err(Error::Convergence("fiber coordinate overflowed".into()));
            }
        }
        let mut coords = from_fixed(&v);
        for c in coords.iter_mut().skip(self.dim()) {
            *c = 0.0;
        }
        Ok(MappingTorusPoint {
            base: TorusPoint {
                coords,
                dim: self.dim(),
            },
            height: z,
        })
    }

    /// Lift of `f` restricted to the invariant fiber over the origin.
    pub fn restrict_to_invariant_circle(&self) -> MonotoneCircleLift {
        let origin = [0.0; 3];
        MonotoneCircleLift::from_fn(self.config.lift_grid, |z| {
            self.fiber.eval(&origin, &origin, z)
        })
        .expect("fiber maps are validated circle diffeomorphisms")
    }
}

/// Convenience: the identity gluing of the system's dimension.
pub fn identity_gluing(dim: usize) -> IntegerMatrix {
    IntegerMatrix::identity(dim)
}
