//! Order-preserving abelian actions on closed subsets of the line: invariant
//! measures, translation numbers, the conjugation scaling factor and the
//! semiconjugacy to a translation action.
//!
//! Supported instances are translation groups written in a chart `h`:
//! generators `h o (x + b) o h^-1` and conjugator `h o (c x + d) o h^-1`,
//! acting on all of the line or on the `h`-image of an arithmetic progression.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::torus::IntegerMatrix;

pub const LAW_TOL: f64 = 1e-10;
pub const SEMICONJUGACY_TOL: f64 = 1e-8;
/// Largest coefficient searched when expressing `F(g)` in the generators.
pub const MAX_RELATION_COEFFICIENT: i64 = 10;
const MEASURE_SEED: u64 = 0x5eed_0001;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gamma {
    Line,
    /// Image under the chart of `origin + spacing * Z`.
    Lattice { origin: f64, spacing: f64 },
}

/// Order-preserving homeomorphism of the line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Chart {
    Identity,
    Cube,
    /// `x + amplitude * sin(x) * b(x / radius)` with the smooth bump
    /// `b(s) = exp(1 - 1/(1 - s^2))` supported on `|s| < 1`.
    SineBump { amplitude: f64, radius: f64 },
}

impl Chart {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Chart::Identity => x,
            Chart::Cube => x * x * x,
            Chart::SineBump { amplitude, radius } => x + amplitude * x.sin() * bump(x / radius),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Chart::Identity => 1.0,
            Chart::Cube => 3.0 * x * x,
            Chart::SineBump { amplitude, radius } => {
                let s = x / radius;
                1.0 + amplitude * (x.cos() * bump(s) + x.sin() * bump_derivative(s) / radius)
            }
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        match *self {
            Chart::Identity => y,
            Chart::Cube => y.cbrt(),
            Chart::SineBump { amplitude, .. } => {
                let (mut lo, mut hi) = (y - amplitude.abs() - 1.0, y + amplitude.abs() + 1.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.apply(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Chart::SineBump { radius, .. } = *self {
            if !(radius > 0.0) {
                return Err(Error::domain("bump radius must be positive"));
            }
            let n = 20_000;
            for i in 0..=n {
                let x = -radius + 2.0 * radius * i as f64 / n as f64;
                if self.derivative(x) <= 0.0 {
                    return Err(Error::Validation {
                        point: format!("x = {x}"),
                        reason: "chart is not increasing".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Chart::Identity => "identity",
            Chart::Cube => "cube",
            Chart::SineBump { .. } => "sinebump",
        }
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_derivative(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - s * s;
        -2.0 * s / (w * w) * bump(s)
    }
}

/// `x -> scale * x + shift` in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub scale: f64,
    pub shift: f64,
}

/// A letter of a group word: generator index and exponent sign.
pub type Letter = (usize, i32);

#[derive(Clone, Debug, PartialEq)]
pub struct LineAction {
    pub gamma: Gamma,
    pub chart: Chart,
    /// Translation amounts of the generators in chart coordinates.
    pub translations: Vec<f64>,
    pub conjugator: Affine,
    /// Row `i` expresses `F(g_i)` in the generators.
    pub conjugation_matrix: Vec<Vec<i64>>,
}

impl LineAction {
    pub fn new(gamma: Gamma, chart: Chart, translations: Vec<f64>, conjugator: Affine) -> Result<Self> {
        if translations.is_empty() || translations.len() > 3 {
            return Err(Error::Unsupported(format!(
                "{} generators; between 1 and 3 are supported",
                translations.len()
            )));
        }
        if !(conjugator.scale > 0.0) {
            return Err(Error::domain("conjugator must be order-preserving"));
        }
        chart.validate()?;
        if let Gamma::Lattice { spacing, .. } = gamma {
            if !(spacing > 0.0) {
                return Err(Error::domain("lattice spacing must be positive"));
            }
            for b in &translations {
                let k = b / spacing;
                if (k - k.round()).abs() > 1e-9 {
                    return Err(Error::Unsupported(format!(
                        "translation {b} does not preserve the lattice"
                    )));
                }
            }
        }
        let conjugation_matrix = translations
            .iter()
            .map(|b| {
                integer_relation(&translations, conjugator.scale * b).ok_or_else(|| {
                    Error::Validation {
                        point: format!("generator x + {b}"),
                        reason: "conjugate is not in the group generated by the action".into(),
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LineAction {
            gamma,
            chart,
            translations,
            conjugator,
            conjugation_matrix,
        })
    }

    pub fn n_generators(&self) -> usize {
        self.translations.len()
    }

    pub fn generator(&self, i: usize, x: f64) -> f64 {
        self.chart.apply(self.chart.invert(x) + self.translations[i])
    }

    pub fn generator_inverse(&self, i: usize, x: f64) -> f64 {
        self.chart.apply(self.chart.invert(x) - self.translations[i])
    }

    pub fn conjugator(&self, x: f64) -> f64 {
        let c = self.conjugator;
        self.chart.apply(c.scale * self.chart.invert(x) + c.shift)
    }

    pub fn conjugator_inverse(&self, x: f64) -> f64 {
        let c = self.conjugator;
        self.chart.apply((self.chart.invert(x) - c.shift) / c.scale)
    }

    /// `F(g_i) = f o g_i o f^-1`.
    pub fn conjugated_generator(&self, i: usize, x: f64) -> f64 {
        self.conjugator(self.generator(i, self.conjugator_inverse(x)))
    }

    /// Applies a word; the last letter acts first.
    pub fn apply_word(&self, word: &[Letter], x: f64) -> f64 {
        word.iter().rev().fold(x, |y, &(i, e)| {
            let mut y = y;
            for _ in 0..e.unsigned_abs() {
                y = if e > 0 {
                    self.generator(i, y)
                } else {
                    self.generator_inverse(i, y)
                };
            }
            y
        })
    }

    /// Whether `F` maps the generators onto a basis of the group.
    pub fn conjugation_is_automorphism(&self) -> bool {
        let n = self.n_generators();
        let mut rows = vec![vec![0i64; n]; n];
        for (i, row) in self.conjugation_matrix.iter().enumerate() {
            rows[i].copy_from_slice(row);
        }
        match IntegerMatrix::from_rows(&pad_rows(rows)) {
            Ok(m) => m.det().abs() == 1,
            Err(_) => false,
        }
    }

    /// Points of `gamma` used as base points and sample points.
    fn sample_points(&self, n: usize, half_width: f64) -> Vec<f64> {
        match self.gamma {
            Gamma::Line => (0..n)
                .map(|k| self.chart.apply(-half_width + 2.0 * half_width * (k as f64 + 0.5) / n as f64))
                .collect(),
            Gamma::Lattice { origin, spacing } => {
                let start = -(n as i64 / 2);
                (0..n as i64)
                    .map(|k| self.chart.apply(origin + (start + k) as f64 * spacing))
                    .collect()
            }
        }
    }
}

fn pad_rows(rows: Vec<Vec<i64>>) -> Vec<Vec<i64>> {
    // 1x1 relations are padded to 2x2 with an identity block
    if rows.len() == 1 {
        vec![vec![rows[0][0], 0], vec![0, 1]]
    } else {
        rows
    }
}

/// Integer vector `m` with `sum m_j t_j = target`, searched by brute force.
fn integer_relation(t: &[f64], target: f64) -> Option<Vec<i64>> {
    let n = t.len();
    let span = 2 * MAX_RELATION_COEFFICIENT + 1;
    let scale = t.iter().fold(target.abs(), |a, b| a.max(b.abs())).max(1.0);
    let mut best: Option<(f64, Vec<i64>)> = None;
    for idx in 0..span.pow(n as u32) {
        let mut rem = idx;
        let mut m = vec![0i64; n];
        for slot in m.iter_mut() {
            *slot = rem % span - MAX_RELATION_COEFFICIENT;
            rem /= span;
        }
        let val: f64 = m.iter().zip(t).map(|(a, b)| *a as f64 * b).sum();
        let err = (val - target).abs();
        if err <= 1e-9 * scale && best.as_ref().is_none_or(|(e, bm)| {
            err < *e || (err == *e && l1(&m) < l1(bm))
        }) {
            best = Some((err, m));
        }
    }
    best.map(|(_, m)| m)
}

fn l1(m: &[i64]) -> i64 {
    m.iter().map(|x| x.abs()).sum()
}

/// An invariant measure: Lebesgue in chart coordinates on the line, counting
/// measure on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LineMeasure {
    pub gamma: Gamma,
    pub chart: Chart,
    /// Largest `|mu(g I) - mu(I)|` over the sampled interval family.
    pub invariance_residual: f64,
}

impl LineMeasure {
    /// Signed mass of `[a, b)`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.mass(b, a);
        }
        let (ca, cb) = (self.chart.invert(a), self.chart.invert(b));
        match self.gamma {
            Gamma::Line => cb - ca,
            Gamma::Lattice { origin, spacing } => {
                let idx = |c: f64| {
                    let t = (c - origin) / spacing;
                    let r = t.round();
                    if (t - r).abs() < 1e-9 {
                        r
                    } else {
                        t.ceil()
                    }
                };
                idx(cb) - idx(ca)
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.gamma {
            Gamma::Line => "lebesgue-pullback",
            Gamma::Lattice { .. } => "counting",
        }
    }
}

pub fn invariant_measure(action: &LineAction) -> Result<LineMeasure> {
    let mut mu = LineMeasure {
        gamma: action.gamma,
        chart: action.chart,
        invariance_residual: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(MEASURE_SEED);
    let mut residual = 0.0f64;
    for _ in 0..100 {
        let a = action.chart.apply(rng.gen_range(-5.0..5.0));
        let b = action.chart.apply(action.chart.invert(a) + rng.gen_range(0.0..3.0));
        let base = mu.mass(a, b);
        for i in 0..action.n_generators() {
            let moved = mu.mass(action.generator(i, a), action.generator(i, b));
            residual = residual.max((moved - base).abs());
        }
    }
    if residual >= LAW_TOL {
        return Err(Error::Validation {
            point: "interval test family".into(),
            reason: format!("measure invariance residual {residual:e}"),
        });
    }
    mu.invariance_residual = residual;
    Ok(mu)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslationNumbers {
    pub tau: Vec<f64>,
    /// Spread of the computed values over the base points.
    pub base_point_spread: f64,
}

/// `tau(g) = mu[x, g(x))` (negative when `g(x) < x`).
pub fn translation_number(action: &LineAction, mu: &LineMeasure) -> Result<TranslationNumbers> {
    for x in action.sample_points(201, 50.0) {
        let fixed = (0..action.n_generators())
            .all(|i| (action.generator(i, x) - x).abs() <= 1e-12 * x.abs().max(1.0));
        if fixed {
            return Err(Error::domain(format!(
                "common fixed point near {x}: the group action has a global fixed point, so no \
                 nonzero translation homomorphism exists"
            )));
        }
    }
    let points = action.sample_points(10, 4.5);
    let mut tau = Vec::with_capacity(action.n_generators());
    let mut spread = 0.0f64;
    for i in 0..action.n_generators() {
        let values: Vec<f64> = points
            .iter()
            .map(|&x| mu.mass(x, action.generator(i, x)))
            .collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
        tau.push(values[0]);
    }
    if spread >= LAW_TOL {
        return Err(Error::Validation {
            point: "translation base points".into(),
            reason: format!("translation numbers depend on the base point (spread {spread:e})"),
        });
    }
    Ok(TranslationNumbers {
        tau,
        base_point_spread: spread,
    })
}

/// Translation number of a word measured from `x`.
pub fn word_translation(action: &LineAction, mu: &LineMeasure, word: &[Letter], x: f64) -> f64 {
    mu.mass(x, action.apply_word(word, x))
}

/// `lambda` with `tau(F(g)) = lambda tau(g)` on every generator.
pub fn conjugation_scaling(action: &LineAction, mu: &LineMeasure, tau: &TranslationNumbers) -> Result<f64> {
    let x = action.sample_points(1, 0.0)[0];
    let mut ratios = Vec::new();
    for (i, t) in tau.tau.iter().enumerate() {
        if t.abs() < LAW_TOL {
            continue;
        }
        ratios.push(mu.mass(x, action.conjugated_generator(i, x)) / t);
    }
    let first = *ratios
        .first()
        .ok_or_else(|| Error::domain("translation homomorphism vanishes on all generators"))?;
    for r in &ratios {
        if (r - first).abs() > LAW_TOL * first.abs().max(1.0) {
            return Err(Error::Validation {
                point: "conjugated generators".into(),
                reason: format!("inconsistent scaling ratios {first} and {r}"),
            });
        }
    }
    Ok(first)
}

/// Full translation data of an action.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationData {
    pub mu: LineMeasure,
    pub tau: TranslationNumbers,
    pub lambda: f64,
}

pub fn translation_data(action: &LineAction) -> Result<TranslationData> {
    let mu = invariant_measure(action)?;
    let tau = translation_number(action, &mu)?;
    let lambda = conjugation_scaling(action, &mu, &tau)?;
    Ok(TranslationData { mu, tau, lambda })
}

/// `P(x) = mu[x0, x)` with `P g = P + tau(g)` and `P f = lambda P`.
#[derive(Clone, Debug, PartialEq)]
pub struct MasterSemiconjugacy {
    pub data: TranslationData,
    pub fixed_point: f64,
    /// `(x, P(x))` over sample points of the closed set.
    pub samples: Vec<(f64, f64)>,
    pub generator_residual: f64,
    pub conjugator_residual: f64,
}

impl MasterSemiconjugacy {
    pub fn eval(&self, x: f64) -> f64 {
        self.data.mu.mass(self.fixed_point, x)
    }

    /// The set `P^-1(0)` as a closed interval.
    pub fn zero_set(&self) -> (f64, f64) {
        let x0 = self.fixed_point;
        let edge = |dir: f64| {
            let mut step = 1.0;
            let mut inside = x0;
            while step > 1e-15 * x0.abs().max(1.0) {
                let trial = inside + dir * step;
                if self.eval(trial) == 0.0 {
                    inside = trial;
                } else {
                    step *= 0.5;
                }
            }
            inside
        };
        (edge(-1.0), edge(1.0))
    }
}

fn fixed_point_of(f: impl Fn(f64) -> f64) -> Result<f64> {
    let g = |x: f64| f(x) - x;
    let mut r = 1.0;
    let (mut lo, mut hi) = loop {
        if g(-r).signum() != g(r).signum() || g(-r) == 0.0 || g(r) == 0.0 {
            break (-r, r);
        }
        r *= 2.0;
        if r > 1e12 {
            return Err(Error::Convergence("no fixed point of the conjugator found".into()));
        }
    };
    if g(lo) == 0.0 {
        return Ok(lo);
    }
    let lo_sign = g(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if g(lo).abs() <= g(hi).abs() { lo } else { hi })
}

pub fn master_semiconjugacy(action: &LineAction) -> Result<MasterSemiconjugacy> {
    let data = translation_data(action)?;
    if (data.lambda - 1.0).abs() < 1e-9 {
        return Err(Error::domain(format!(
            "scaling factor lambda = {} is 1; the semiconjugacy needs lambda != 1",
            data.lambda
        )));
    }
    let fixed_point = fixed_point_of(|x| action.conjugator(x))?;
    let gap = (action.conjugator(fixed_point) - fixed_point).abs();
    if gap >= LAW_TOL {
        return Err(Error::Convergence(format!(
            "conjugator fixed point residual {gap:e}"
        )));
    }
    let mu = &data.mu;
    let points = action.sample_points(1000, 5.0);
    let samples: Vec<(f64, f64)> = points
        .iter()
        .map(|&x| (x, mu.mass(fixed_point, x)))
        .collect();
    let mut generator_residual = 0.0f64;
    let mut conjugator_residual = 0.0f64;
    for &(x, p) in &samples {
        for (i, t) in data.tau.tau.iter().enumerate() {
            let pg = mu.mass(fixed_point, action.generator(i, x));
            generator_residual = generator_residual.max((pg - p - t).abs());
        }
        let pf = mu.mass(fixed_point, action.conjugator(x));
        conjugator_residual = conjugator_residual.max((pf - data.lambda * p).abs());
    }
    for w in samples.windows(2) {
        if w[1].1 < w[0].1 {
            return Err(Error::Validation {
                point: format!("x = {}", w[1].0),
                reason: "semiconjugacy is not monotone".into(),
            });
        }
    }
    if generator_residual >= SEMICONJUGACY_TOL || conjugator_residual >= SEMICONJUGACY_TOL {
        return Err(Error::Validation {
            point: "sample grid".into(),
            reason: format!(
                "functional equation residuals {generator_residual:e} and {conjugator_residual:e}"
            ),
        });
    }
    Ok(MasterSemiconjugacy {
        data,
        fixed_point,
        samples,
        generator_residual,
        conjugator_residual,
    })
}

/// A fixed point of `h` (assumed to commute with `f`) inside `P^-1(0)`.
pub fn commuting_fixed_point(semi: &MasterSemiconjugacy, h: impl Fn(f64) -> f64) -> Result<f64> {
    let (lo, hi) = semi.zero_set();
    let g = |x: f64| h(x) - x;
    for x in [semi.fixed_point, lo, hi] {
        if g(x).abs() < 1e-9 * x.abs().max(1.0) {
            return Ok(x);
        }
    }
    if hi > lo && g(lo).signum() != g(hi).signum() {
        return fixed_point_of_bracketed(&g, lo, hi);
    }
    Err(Error::Validation {
        point: format!("[{lo}, {hi}]"),
        reason: "no fixed point of the commuting map in the zero set".into(),
    })
}

fn fixed_point_of_bracketed(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let lo_sign = g(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid).signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Integer check of `g -> M g - g` on `Z^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CosetCheck {
    pub det: i64,
    pub injective: bool,
    pub bijective: bool,
}

pub fn coset_check(m: &IntegerMatrix) -> CosetCheck {
    let det = m
        .sub(&IntegerMatrix::identity(m.dim()))
        .expect("same dimension")
        .det();
    CosetCheck {
        det,
        injective: det != 0,
        bijective: det.abs() == 1,
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    let t = token.trim();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t),
    };
    if let Some(inner) = body.strip_prefix("sqrt(").and_then(|s| s.strip_suffix(')')) {
        let v: f64 = inner
            .parse()
            .map_err(|_| Error::parse(line, format!("bad number `{token}`")))?;
        return Ok(sign * v.sqrt());
    }
    body.parse::<f64>()
        .map(|v| sign * v)
        .map_err(|_| Error::parse(line, format!("bad number `{token}`")))
}

/// Parses the `.act` instance format.
pub fn parse_action(text: &str) -> Result<LineAction> {
    let mut gamma = Gamma::Line;
    let mut chart = Chart::Identity;
    let mut translations = Vec::new();
    let mut conjugator = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let nums = |n: usize| -> Result<Vec<f64>> {
            if tokens.len() != n + 1 {
                return Err(Error::parse(line, format!("`{}` takes {n} values", tokens[0])));
            }
            tokens[1..].iter().map(|t| parse_number(t, line)).collect()
        };
        match tokens[0] {
            "gamma" => {
                gamma = match tokens.get(1).copied() {
                    Some("line") if tokens.len() == 2 => Gamma::Line,
                    Some("lattice") if tokens.len() == 4 => Gamma::Lattice {
                        origin: parse_number(tokens[2], line)?,
                        spacing: parse_number(tokens[3], line)?,
                    },
                    _ => return Err(Error::parse(line, "expected `gamma line` or `gamma lattice ORIGIN SPACING`")),
                }
            }
            "chart" => {
                chart = match tokens.get(1).copied() {
                    Some("identity") if tokens.len() == 2 => Chart::Identity,
                    Some("cube") if tokens.len() == 2 => Chart::Cube,
                    Some("sinebump") if tokens.len() == 4 => Chart::SineBump {
                        amplitude: parse_number(tokens[2], line)?,
                        radius: parse_number(tokens[3], line)?,
                    },
                    _ => return Err(Error::parse(line, "unknown chart")),
                }
            }
            "generator" => {
                let v = nums(2)?;
                if v[0] != 1.0 {
                    return Err(Error::Unsupported(format!(
                        "generator on line {line} has slope {}; only translations are supported",
                        v[0]
                    )));
                }
                translations.push(v[1]);
            }
            "conjugator" => {
                let v = nums(2)?;
                conjugator = Some(Affine {
                    scale: v[0],
                    shift: v[1],
                });
            }
            other => return Err(Error::parse(line, format!("unknown keyword `{other}`"))),
        }
    }
    let conjugator = conjugator.ok_or_else(|| Error::parse(0, "missing `conjugator` line"))?;
    LineAction::new(gamma, chart, translations, conjugator)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn translations(chart: Chart, scale: f64, shift: f64) -> LineAction {
        LineAction::new(
            Gamma::Line,
            chart,
            vec![1.0, 2f64.sqrt()],
            Affine { scale, shift },
        )
        .unwrap()
    }

    fn bump_chart() -> Chart {
        Chart::SineBump {
            amplitude: 0.3,
            radius: 4.0,
        }
    }

    #[test]
    fn lebesgue_for_translations() {
        let a = translations(Chart::Identity, 2.0, 0.0);
        let mu = invariant_measure(&a).unwrap();
        assert_eq!(mu.kind(), "lebesgue-pullback");
        assert!((mu.mass(0.2, 1.7) - 1.5).abs() < 1e-15);
        let tau = translation_number(&a, &mu).unwrap();
        assert!((tau.tau[0] - 1.0).abs() < 1e-12);
        assert!((tau.tau[1] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn counting_measure_on_lattice() {
        let a = LineAction::new(
            Gamma::Lattice {
                origin: 0.0,
                spacing: 1.0,
            },
            Chart::Identity,
            vec![1.0],
            Affine {
                scale: 2.0,
                shift: 0.0,
            },
        )
        .unwrap();
        let mu = invariant_measure(&a).unwrap();
        assert_eq!(mu.mass(-0.5, 3.0), 3.0);
        assert_eq!(mu.mass(0.0, 3.0), 3.0);
        let data = translation_data(&a).unwrap();
        assert_eq!(data.tau.tau, vec![1.0]);
        assert!((data.lambda - 2.0).abs() < 1e-12);
        let semi = master_semiconjugacy(&a).unwrap();
        assert_eq!(semi.fixed_point, 0.0);
        assert_eq!(semi.eval(5.0), 5.0);
    }

    #[test]
    fn single_translation_by_two() {
        let a = LineAction::new(Gamma::Line, Chart::Identity, vec![2.0], Affine { scale: 3.0, shift: 0.0 }).unwrap();
        let data = translation_data(&a).unwrap();
        assert!((data.tau.tau[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cube_chart_pulls_back_lebesgue() {
        let a = translations(Chart::Cube, 2.0, 0.0);
        let mu = invariant_measure(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (x, y) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let (a0, b0) = (f64::min(x, y), f64::max(x, y));
            // oracle: push the interval forward and compare lengths in h^-1 coordinates
            for i in 0..2 {
                let (ga, gb) = (a.generator(i, a0), a.generator(i, b0));
                assert!((mu.mass(ga, gb) - (b0.cbrt() - a0.cbrt())).abs() < 1e-12);
            }
        }
        let tau = translation_number(&a, &mu).unwrap();
        assert!((tau.tau[1] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scaling_examples() {
        for (scale, shift) in [(2.0, 0.0), (3.0, 0.0), (1.0, 0.7)] {
            let a = translations(Chart::Identity, scale, shift);
            let d = translation_data(&a).unwrap();
            assert!((d.lambda - scale).abs() < 1e-12);
        }
        assert!(!translations(Chart::Identity, 2.0, 0.0).conjugation_is_automorphism());
        assert!(translations(Chart::Identity, 1.0, 0.3).conjugation_is_automorphism());
    }

    #[test]
    fn non_normalizing_conjugator_rejected() {
        let err = LineAction::new(
            Gamma::Line,
            Chart::Identity,
            vec![1.0, 2f64.sqrt()],
            Affine {
                scale: 1.5,
                shift: 0.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn common_fixed_point_is_error() {
        let a = LineAction::new(Gamma::Line, Chart::Identity, vec![0.0], Affine { scale: 2.0, shift: 0.0 }).unwrap();
        let mu = invariant_measure(&a).unwrap();
        assert!(matches!(translation_number(&a, &mu), Err(Error::Domain(_))));
    }

    #[test]
    fn master_semiconjugacy_identity_case() {
        let a = translations(Chart::Identity, 2.0, 0.0);
        let semi = master_semiconjugacy(&a).unwrap();
        assert_eq!(semi.fixed_point, 0.0);
        for x in [-2.0, 0.3, 4.0] {
            assert!((semi.eval(x) - x).abs() < 1e-15);
        }
        assert!(semi.generator_residual < 1e-12 && semi.conjugator_residual < 1e-12);
    }

    #[test]
    fn master_semiconjugacy_recovers_chart() {
        let chart = bump_chart();
        let a = translations(chart, 2.0, 0.0);
        let semi = master_semiconjugacy(&a).unwrap();
        assert!(semi.fixed_point.abs() < 1e-12);
        assert!(semi.generator_residual < SEMICONJUGACY_TOL);
        assert!(semi.conjugator_residual < SEMICONJUGACY_TOL);
        for &(x, p) in semi.samples.iter().step_by(37) {
            assert!((p - chart.invert(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_one_is_error() {
        let a = translations(Chart::Identity, 1.0, 1.0);
        assert!(matches!(master_semiconjugacy(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn commuting_maps_fix_zero_set() {
        let a = translations(bump_chart(), 2.0, 0.0);
        let semi = master_semiconjugacy(&a).unwrap();
        let chart = bump_chart();
        let h = |x: f64| chart.apply(5.0 * chart.invert(x));
        let x = commuting_fixed_point(&semi, h).unwrap();
        assert!(semi.eval(x).abs() < 1e-12);
        assert!(commuting_fixed_point(&semi, |x| x + 1.0).is_err());
    }

    #[test]
    fn coset_check_uses_determinant() {
        let cat = IntegerMatrix::parse("2,1;1,1").unwrap();
        let c = coset_check(&cat);
        assert_eq!(c.det, -1);
        assert!(c.bijective);
        let big = IntegerMatrix::parse("3,1;2,1").unwrap();
        let c = coset_check(&big);
        assert!(c.injective && !c.bijective);
        assert!(!coset_check(&IntegerMatrix::identity(2)).injective);
    }

    #[test]
    fn parse_action_file() {
        let text = "# affine doubling\ngamma line\nchart identity\ngenerator 1 1\ngenerator 1 sqrt(2)\nconjugator 2 0\n";
        let a = parse_action(text).unwrap();
        assert_eq!(a.translations, vec![1.0, 2f64.sqrt()]);
        assert!(matches!(
            parse_action("generator 2 1\nconjugator 2 0\n"),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(parse_action("gamma plane\n"), Err(Error::Parse { line: 1, .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn tau_is_a_homomorphism(
                i in 0usize..2, j in 0usize..2, ei in prop::sample::select(vec![-1, 1]),
                ej in prop::sample::select(vec![-1, 1]), x in -3.0f64..3.0
            ) {
                let a = translations(bump_chart(), 2.0, 0.0);
                let d = translation_data(&a).unwrap();
                let word = [(i, ei), (j, ej)];
                let lhs = word_translation(&a, &d.mu, &word, x);
                let rhs = ei as f64 * d.tau.tau[i] + ej as f64 * d.tau.tau[j];
                prop_assert!((lhs - rhs).abs() < LAW_TOL);
            }

            #[test]
            fn semiconjugacy_is_monotone(x in -4.0f64..4.0, dx in 0.0f64..1.0) {
                static SEMI: std::sync::OnceLock<MasterSemiconjugacy> = std::sync::OnceLock::new();
                let semi = SEMI.get_or_init(|| {
                    master_semiconjugacy(&translations(bump_chart(), 2.0, 0.0)).unwrap()
                });
                prop_assert!(semi.eval(x + dx) >= semi.eval(x));
            }
        }
    }
}
