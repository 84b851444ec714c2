//! Classification of skew products into the accessible, jointly integrable
//! and laminated regimes, and the numerical ergodic decomposition that
//! follows from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circle::{rotation_number, MonotoneCircleLift};
use crate::error::{Error, Result};
use crate::holonomy::{
    detect_compact_classes, generator_loops, su_loop_map, CompactClasses, HeightSet, SuLoopMap,
    DEFAULT_DEPTH, DEFAULT_TOL,
};
use crate::skew::{SkewProductSystem, Trig, TrigTerm};
use crate::torus::{from_fixed, to_fixed, FixedPoint, MappingTorusPoint, Vec3};

/// Largest fraction of the circle that indeterminate bands may cover.
pub const MAX_BAND_FRACTION: f64 = 0.1;
/// Number of batches in the batch-means error estimate.
pub const BATCHES: usize = 32;
const ROTATION_ITERS: usize = 100_000;
const ESCAPE_ITERS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifyOptions {
    pub depth: usize,
    pub tol: f64,
    pub grid: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            depth: DEFAULT_DEPTH,
            tol: DEFAULT_TOL,
            grid: 256,
        }
    }
}

/// Dynamics of `f^n` on a complementary interval of the compact leaves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    /// No compact leaves inside the interval.
    Accessible,
    /// Interior heights drift monotonically to an endpoint.
    AttractorRepeller,
    /// Compact leaves inside that `f^n` moves; `lambda` is the endpoint multiplier.
    Scaling { lambda: f64 },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Accessible => "accessible",
            Regime::AttractorRepeller => "attractor-repeller",
            Regime::Scaling { .. } => "scaling",
        }
    }
}

/// Open interval `(start, end)` of heights; `end` may exceed 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpenInterval {
    pub start: f64,
    pub end: f64,
    pub regime: Regime,
}

impl OpenInterval {
    pub fn contains(&self, z: f64) -> bool {
        let rel = (z - self.start).rem_euclid(1.0);
        rel > 0.0 && rel < self.end - self.start
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Case {
    Accessible,
    JointlyIntegrable {
        theta: f64,
        rational: Option<(i64, i64)>,
    },
    Laminated {
        period: u64,
        compact: Vec<HeightSet>,
        open: Vec<OpenInterval>,
    },
    /// Proper compact set with irrational rotation on the central circle.
    Irrational {
        rho: f64,
        compact: Vec<HeightSet>,
        open: Vec<OpenInterval>,
    },
}

impl Case {
    pub fn tag(&self) -> &'static str {
        match self {
            Case::Accessible => "accessible",
            Case::JointlyIntegrable { .. } => "jointly-integrable",
            Case::Laminated { .. } => "laminated",
            Case::Irrational { .. } => "irrational",
        }
    }

    /// The period used for the decomposition.
    pub fn period(&self) -> u64 {
        match self {
            Case::JointlyIntegrable {
                rational: Some((_, q)),
                ..
            } => *q as u64,
            Case::Laminated { period, .. } => *period,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witnesses {
    pub min_displacement: f64,
    pub max_displacement: f64,
    pub rotation_estimate: f64,
    pub rotation_error: f64,
    pub tail_bound: f64,
    pub generators: usize,
    /// Distance from `f(K)` to `K` over point components.
    pub invariance_defect: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub case: Case,
    pub witnesses: Witnesses,
    pub indeterminate_bands: Vec<(f64, f64)>,
    pub band_fraction: f64,
    pub options: ClassifyOptions,
}

pub fn classify(sys: &SkewProductSystem, depth: usize, tol: f64) -> Result<ClassificationReport> {
    classify_with(
        sys,
        ClassifyOptions {
            depth,
            tol,
            ..ClassifyOptions::default()
        },
    )
}

pub fn generator_maps(sys: &SkewProductSystem, depth: usize) -> Result<Vec<SuLoopMap>> {
    generator_loops(sys)
        .iter()
        .map(|g| su_loop_map(sys, g, depth))
        .collect()
}

pub fn classify_with(sys: &SkewProductSystem, options: ClassifyOptions) -> Result<ClassificationReport> {
    let maps = generator_maps(sys, options.depth)?;
    let classes = detect_compact_classes(&maps, options.grid, options.tol);
    if classes.band_fraction > MAX_BAND_FRACTION {
        return Err(Error::Inconclusive(format!(
            "indeterminate bands cover {:.1}% of the circle (displacement in [{:e}, {:e})); bands: {:?}",
            100.0 * classes.band_fraction,
            options.tol,
            10.0 * options.tol,
            classes.bands
        )));
    }
    let restriction = sys.restrict_to_invariant_circle();
    let rho = rotation_number(&restriction, ROTATION_ITERS);
    let rational = rho.rational.as_ref().map(|r| (r.p, r.q));
    let mut witnesses = Witnesses {
        min_displacement: classes.min_displacement,
        max_displacement: classes.max_displacement,
        rotation_estimate: rho.estimate,
        rotation_error: rho.error_bound,
        tail_bound: maps.iter().map(|m| m.tail_bound).fold(0.0, f64::max),
        generators: maps.len(),
        invariance_defect: invariance_defect(&restriction, &classes),
    };
    let case = if classes.is_full() {
        Case::JointlyIntegrable {
            theta: rho.value,
            rational,
        }
    } else if classes.is_empty() {
        if classes.min_displacement < 10.0 * options.tol {
            return Err(Error::Inconclusive(format!(
                "no fixed heights but minimal displacement {:e} is within the margin {:e}",
                classes.min_displacement,
                10.0 * options.tol
            )));
        }
        Case::Accessible
    } else {
        match rational {
            Some((p, q)) => {
                let periodic = periodic_components(&restriction, &classes, p, q as usize, options.tol);
                let open = complement(&restriction, &classes, &periodic, p, q as usize, options.tol);
                Case::Laminated {
                    period: q as u64,
                    compact: classes.components.clone(),
                    open,
                }
            }
            None => {
                let open = complement(&restriction, &classes, &classes.components, 0, 1, f64::INFINITY);
                Case::Irrational {
                    rho: rho.value,
                    compact: classes.components.clone(),
                    open,
                }
            }
        }
    };
    if !matches!(case, Case::Laminated { .. } | Case::Irrational { .. }) {
        witnesses.invariance_defect = 0.0;
    }
    Ok(ClassificationReport {
        case,
        witnesses,
        indeterminate_bands: classes.bands.clone(),
        band_fraction: classes.band_fraction,
        options,
    })
}

fn invariance_defect(f: &MonotoneCircleLift, classes: &CompactClasses) -> f64 {
    if classes.is_full() || classes.is_empty() {
        return 0.0;
    }
    classes
        .components
        .iter()
        .filter_map(|c| match c {
            HeightSet::Point(z) => Some(f.eval(*z).rem_euclid(1.0)),
            HeightSet::Interval { .. } => None,
        })
        .map(|image| {
            classes
                .components
                .iter()
                .map(|c| match *c {
                    HeightSet::Point(w) => crate::holonomy::circle_distance(image, w),
                    HeightSet::Interval { .. } => {
                        if c.contains(image, 0.0) {
                            0.0
                        } else {
                            1.0
                        }
                    }
                })
                .fold(1.0, f64::min)
        })
        .fold(0.0, f64::max)
}

fn iterate(f: &MonotoneCircleLift, n: usize, x: f64) -> f64 {
    (0..n).fold(x, |y, _| f.eval(y))
}

/// Components of `K` fixed by `f^q` up to the shift `p`.
fn periodic_components(
    f: &MonotoneCircleLift,
    classes: &CompactClasses,
    p: i64,
    q: usize,
    tol: f64,
) -> Vec<HeightSet> {
    let fixed = |z: f64| (iterate(f, q, z) - z - p as f64).abs() < tol;
    let kn: Vec<HeightSet> = classes
        .components
        .iter()
        .copied()
        .filter(|c| match *c {
            HeightSet::Point(z) => fixed(z),
            HeightSet::Interval { start, end } => {
                fixed(start) && fixed(end) && fixed(0.5 * (start + end))
            }
        })
        .collect();
    if kn.is_empty() {
        classes.components.clone()
    } else {
        kn
    }
}

fn complement(
    f: &MonotoneCircleLift,
    classes: &CompactClasses,
    kn: &[HeightSet],
    p: i64,
    q: usize,
    tol: f64,
) -> Vec<OpenInterval> {
    let mut spans: Vec<(f64, f64)> = kn
        .iter()
        .map(|c| match *c {
            HeightSet::Point(z) => (z, z),
            HeightSet::Interval { start, end } => (start, end),
        })
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for (i, span) in spans.iter().enumerate() {
        let next = spans[(i + 1) % spans.len()];
        let start = span.1;
        let mut end = next.0;
        while end <= start {
            end += 1.0;
        }
        if end - start <= 1e-12 {
            continue;
        }
        let regime = interval_regime(f, classes, start, end, p, q, tol);
        let shift = start.floor();
        out.push(OpenInterval {
            start: start - shift,
            end: end - shift,
            regime,
        });
    }
    out
}

fn interval_regime(
    f: &MonotoneCircleLift,
    classes: &CompactClasses,
    a: f64,
    b: f64,
    p: i64,
    q: usize,
    tol: f64,
) -> Regime {
    let probe = OpenInterval {
        start: a,
        end: b,
        regime: Regime::Accessible,
    };
    let inside = classes
        .components
        .iter()
        .any(|c| probe.contains(c.center()));
    if !inside {
        return Regime::Accessible;
    }
    let g = |x: f64| iterate(f, q, x) - p as f64;
    let mut x = 0.5 * (a + b);
    let mut monotone = true;
    let mut last_step = 0.0f64;
    for _ in 0..ESCAPE_ITERS {
        let y = g(x);
        let step = y - x;
        if last_step != 0.0 && step.signum() != last_step.signum() && step.abs() > tol {
            monotone = false;
            break;
        }
        if step.abs() > tol {
            last_step = step;
        }
        x = y;
    }
    let near_edge = (x - a).abs() < 1e-3 || (b - x).abs() < 1e-3;
    if monotone && near_edge {
        return Regime::AttractorRepeller;
    }
    let mut lambda = 1.0;
    let mut y = a;
    for _ in 0..q {
        lambda *= f.derivative(y);
        y = f.eval(y);
    }
    Regime::Scaling { lambda }
}

/// Trigonometric monomials `cos/sin(2 pi (j.v + l z))` with `|j|, |l| <= 3`.
pub fn default_test_functions(dim: usize) -> Vec<TrigTerm> {
    let f = |trig, base: [i32; 3], fiber: i32| {
        let mut freq: Vec<i32> = base[..dim].to_vec();
        freq.push(fiber);
        TrigTerm::new(1.0, trig, &freq)
    };
    vec![
        f(Trig::Cos, [1, 0, 0], 0),
        f(Trig::Cos, [0, 1, 0], 0),
        f(Trig::Cos, [0, 0, 0], 1),
        f(Trig::Sin, [0, 0, 0], 2),
        f(Trig::Cos, [1, 0, 0], 1),
        f(Trig::Sin, [1, -1, 0], 3),
    ]
}

pub fn test_function_name(t: &TrigTerm, dim: usize) -> String {
    let mut parts = Vec::new();
    for (i, name) in ["x", "y", "w"].iter().enumerate().take(dim) {
        if t.base[i] != 0 {
            parts.push(format!("{}{}", t.base[i], name));
        }
    }
    if t.fiber != 0 {
        parts.push(format!("{}z", t.fiber));
    }
    let arg = if parts.is_empty() {
        "0".to_string()
    } else {
        parts.join("+").replace("+-", "-")
    };
    format!("{}(2pi({arg}))", t.trig.name())
}

const MAX_FAST_FREQ: i32 = 3;

/// Evaluates a family of trigonometric monomials from shared powers of
/// `exp(2 pi i x_k)`.
struct TestFamily {
    terms: Vec<TrigTerm>,
    dim: usize,
    fast: bool,
}

impl TestFamily {
    fn new(terms: &[TrigTerm], dim: usize) -> Self {
        let fast = terms.iter().all(|t| {
            t.fiber.abs() <= MAX_FAST_FREQ && t.base.iter().all(|b| b.abs() <= MAX_FAST_FREQ)
        });
        TestFamily {
            terms: terms.to_vec(),
            dim,
            fast,
        }
    }

    #[inline]
    fn eval_into(&self, v: &Vec3, z: f64, out: &mut [f64]) {
        if !self.fast {
            for (o, t) in out.iter_mut().zip(&self.terms) {
                *o = t.value(v, z);
            }
            return;
        }
        const W: usize = (2 * MAX_FAST_FREQ + 1) as usize;
        let mut powers = [[(0.0f64, 0.0f64); W]; 4];
        let coords = [v[0], v[1], v[2], z];
        for (k, table) in powers.iter_mut().enumerate() {
            if k < self.dim || k == 3 {
                let (s, c) = (std::f64::consts::TAU * coords[k]).sin_cos();
                let m = MAX_FAST_FREQ as usize;
                table[m] = (1.0, 0.0);
                for j in 1..=m {
                    let (pr, pi) = table[m + j - 1];
                    table[m + j] = (pr * c - pi * s, pr * s + pi * c);
                    table[m - j] = (table[m + j].0, -table[m + j].1);
                }
            }
        }
        for (o, t) in out.iter_mut().zip(&self.terms) {
            let mut acc = (1.0, 0.0);
            let freqs = [t.base[0], t.base[1], t.base[2], t.fiber];
            for (k, &j) in freqs.iter().enumerate() {
                if j != 0 {
                    let (pr, pi) = powers[k][(j + MAX_FAST_FREQ) as usize];
                    acc = (acc.0 * pr - acc.1 * pi, acc.0 * pi + acc.1 * pr);
                }
            }
            *o = t.coefficient
                * match t.trig {
                    Trig::Cos => acc.0,
                    Trig::Sin => acc.1,
                };
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// `(1/n) sum_{k<n} phi(f^{+-k}(start))`.
pub fn birkhoff_average<F: Fn(&Vec3, f64) -> f64>(
    sys: &SkewProductSystem,
    phi: F,
    start: &MappingTorusPoint,
    n: usize,
    direction: Direction,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("Birkhoff average needs n >= 1"));
    }
    let p = start.base.canonical();
    let mut v = to_fixed(&p.coords);
    let mut z = start.height;
    (v, z) = normalize(sys, v, z);
    let mut sum = 0.0;
    for _ in 0..n {
        sum += phi(&from_fixed(&v), z);
        (v, z) = match direction {
            Direction::Forward => sys.forward(&v, z),
            Direction::Backward => sys.backward(&v, z),
        };
    }
    Ok(sum / n as f64)
}

fn normalize(sys: &SkewProductSystem, v: FixedPoint, z: f64) -> (FixedPoint, f64) {
    let p = MappingTorusPoint {
        base: crate::torus::TorusPoint {
            coords: from_fixed(&v),
            dim: sys.dim(),
        },
        height: z,
    };
    let c = p.canonical(sys.gluing(), &sys.gluing().inverse().expect("unimodular gluing"));
    (to_fixed(&c.base.coords), c.height)
}

/// Per-function means and batch-means standard errors of one orbit of `f^n`.
fn orbit_statistics(
    sys: &SkewProductSystem,
    family: &TestFamily,
    start: (FixedPoint, f64),
    n_iters: usize,
    stride: usize,
    direction: Direction,
) -> (Vec<f64>, Vec<f64>) {
    let m = family.terms.len();
    let batch_len = (n_iters / BATCHES).max(1);
    let n_batches = n_iters.div_ceil(batch_len);
    let mut batch_sums = vec![vec![0.0; m]; n_batches];
    let mut vals = vec![0.0; m];
    let (mut v, mut z) = start;
    for k in 0..n_iters {
        family.eval_into(&from_fixed(&v), z, &mut vals);
        let b = &mut batch_sums[k / batch_len];
        for (s, x) in b.iter_mut().zip(&vals) {
            *s += x;
        }
        for _ in 0..stride {
            (v, z) = match direction {
                Direction::Forward => sys.forward(&v, z),
                Direction::Backward => sys.backward(&v, z),
            };
        }
    }
    let mut means = vec![0.0; m];
    let mut errors = vec![0.0; m];
    for j in 0..m {
        let total: f64 = batch_sums.iter().map(|b| b[j]).sum();
        means[j] = total / n_iters as f64;
        if n_batches > 1 {
            let full = n_iters / batch_len;
            let bm: Vec<f64> = batch_sums[..full]
                .iter()
                .map(|b| b[j] / batch_len as f64)
                .collect();
            let mu = bm.iter().sum::<f64>() / full as f64;
            let var = bm.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (full as f64 - 1.0).max(1.0);
            errors[j] = (var / full as f64).sqrt();
        }
    }
    (means, errors)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    Interval { start: f64, end: f64 },
    Leaf { height: f64 },
}

impl Support {
    fn sample_height(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Support::Leaf { height } => height,
            Support::Interval { start, end } => {
                let t: f64 = rng.gen_range(0.0..1.0);
                (start + t * (end - start)).rem_euclid(1.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BirkhoffRow {
    pub function: String,
    pub forward_mean: f64,
    pub backward_mean: f64,
    /// Standard deviation of forward means across starts.
    pub dispersion: f64,
    pub clt_band: f64,
    /// Largest `|forward - backward|` over the starts.
    pub max_gap: f64,
    /// Integral over the support with horizontal leaves and Lebesgue base.
    pub reference: f64,
    pub ergodic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub support: Support,
    pub rows: Vec<BirkhoffRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionReport {
    pub period: u64,
    pub components: Vec<Component>,
    pub n_orbits: usize,
    pub n_iters: usize,
    pub seed: u64,
}

fn reference_integral(t: &TrigTerm, support: &Support) -> f64 {
    if t.base != [0; 3] {
        return 0.0;
    }
    let w = std::f64::consts::TAU * t.fiber as f64;
    let value = match *support {
        Support::Leaf { height } => match t.trig {
            Trig::Cos => (w * height).cos(),
            Trig::Sin => (w * height).sin(),
        },
        Support::Interval { start, end } => {
            if t.fiber == 0 {
                match t.trig {
                    Trig::Cos => 1.0,
                    Trig::Sin => 0.0,
                }
            } else {
                let len = end - start;
                match t.trig {
                    Trig::Cos => ((w * end).sin() - (w * start).sin()) / (w * len),
                    Trig::Sin => ((w * start).cos() - (w * end).cos()) / (w * len),
                }
            }
        }
    };
    t.coefficient * value
}

/// Supports of the ergodic components implied by a classification.
pub fn component_supports(report: &ClassificationReport) -> Vec<Support> {
    let leaves = |n: usize| -> Vec<Support> {
        (0..n)
            .map(|i| Support::Leaf {
                height: (i as f64 + 0.5) / n as f64,
            })
            .collect()
    };
    let split = |compact: &[HeightSet], open: &[OpenInterval]| -> Vec<Support> {
        let mut out: Vec<Support> = open
            .iter()
            .map(|i| Support::Interval {
                start: i.start,
                end: i.end,
            })
            .collect();
        for c in compact {
            match *c {
                HeightSet::Point(z) => out.push(Support::Leaf { height: z }),
                HeightSet::Interval { start, end } => {
                    for k in 0..4 {
                        out.push(Support::Leaf {
                            height: (start + (k as f64 + 0.5) / 4.0 * (end - start)).rem_euclid(1.0),
                        })
                    }
                }
            }
        }
        out
    };
    match &report.case {
        Case::Accessible => vec![Support::Interval {
            start: 0.0,
            end: 1.0,
        }],
        Case::JointlyIntegrable { .. } => leaves(4 * report.case.period() as usize),
        Case::Laminated { compact, open, .. } | Case::Irrational { compact, open, .. } => {
            split(compact, open)
        }
    }
}

pub fn decompose(
    sys: &SkewProductSystem,
    report: &ClassificationReport,
    n_orbits: usize,
    n_iters: usize,
    tests: &[TrigTerm],
    seed: u64,
) -> Result<DecompositionReport> {
    if n_orbits == 0 || n_iters == 0 {
        return Err(Error::domain("decomposition needs at least one orbit and one iterate"));
    }
    let period = report.case.period();
    let supports = component_supports(report);
    let family = TestFamily::new(tests, sys.dim());
    let dim = sys.dim();
    let jobs: Vec<(usize, usize)> = (0..supports.len())
        .flat_map(|c| (0..n_orbits).map(move |o| (c, o)))
        .collect();
    let results: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(c, o)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((c * n_orbits + o) as u64);
            let mut v = [0.0; 3];
            for slot in v.iter_mut().take(dim) {
                *slot = rng.gen_range(0.0..1.0);
            }
            let z = supports[c].sample_height(&mut rng);
            let start = normalize(sys, to_fixed(&v), z);
            let (fwd, err) = orbit_statistics(sys, &family, start, n_iters, period as usize, Direction::Forward);
            let (bwd, _) = orbit_statistics(sys, &family, start, n_iters, period as usize, Direction::Backward);
            (fwd, bwd, err)
        })
        .collect();
    let mut components = Vec::with_capacity(supports.len());
    for (c, support) in supports.iter().enumerate() {
        let runs = &results[c * n_orbits..(c + 1) * n_orbits];
        let rows = tests
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let fwd: Vec<f64> = runs.iter().map(|r| r.0[j]).collect();
                let bwd: Vec<f64> = runs.iter().map(|r| r.1[j]).collect();
                let forward_mean = fwd.iter().sum::<f64>() / n_orbits as f64;
                let backward_mean = bwd.iter().sum::<f64>() / n_orbits as f64;
                let dispersion = if n_orbits > 1 {
                    (fwd.iter().map(|x| (x - forward_mean).powi(2)).sum::<f64>()
                        / (n_orbits as f64 - 1.0))
                        .sqrt()
                } else {
                    0.0
                };
                let clt_band =
                    (runs.iter().map(|r| r.2[j] * r.2[j]).sum::<f64>() / n_orbits as f64).sqrt();
                let max_gap = fwd
                    .iter()
                    .zip(&bwd)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                BirkhoffRow {
                    function: test_function_name(t, dim),
                    forward_mean,
                    backward_mean,
                    dispersion,
                    clt_band,
                    max_gap,
                    reference: reference_integral(t, support),
                    ergodic: dispersion <= 3.0 * clt_band + 1e-12,
                }
            })
            .collect();
        components.push(Component {
            support: *support,
            rows,
        });
    }
    Ok(DecompositionReport {
        period,
        components,
        n_orbits,
        n_iters,
        seed,
    })
}

/// Fiber marginal used to normalize the projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Marginal {
    Lebesgue,
    Sampled { n_orbits: usize, n_iters: usize, seed: u64 },
}

/// Monotone reparametrization `p` of the circle of heights that collapses
/// compact interval components and pushes the marginal to Lebesgue.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `p` sampled at `k / grid`, `k = 0..=grid`, with `p(0) = 0`, `p(1) = 1`.
    pub samples: Vec<f64>,
    pub cdf_error: f64,
}

impl Projection {
    pub fn eval(&self, z: f64) -> f64 {
        let n = self.samples.len() - 1;
        let w = z.rem_euclid(1.0) * n as f64;
        let i = (w.floor() as usize).min(n - 1);
        let t = w - i as f64;
        self.samples[i] + t * (self.samples[i + 1] - self.samples[i])
    }
}

pub fn build_projection(
    sys: &SkewProductSystem,
    report: &ClassificationReport,
    marginal: Marginal,
) -> Result<Projection> {
    let grid = 4096usize;
    let collapsed: Vec<(f64, f64)> = match &report.case {
        Case::Accessible => {
            return Err(Error::domain("the accessible case has no projection"));
        }
        Case::Laminated { compact, .. } | Case::Irrational { compact, .. } => compact
            .iter()
            .filter_map(|c| match *c {
                HeightSet::Interval { start, end } => Some((start, end)),
                HeightSet::Point(_) => None,
            })
            .collect(),
        Case::JointlyIntegrable { .. } => Vec::new(),
    };
    let density: Vec<f64> = match marginal {
        Marginal::Lebesgue => vec![1.0; grid],
        Marginal::Sampled {
            n_orbits,
            n_iters,
            seed,
        } => sampled_marginal(sys, grid, n_orbits, n_iters, seed),
    };
    let h = 1.0 / grid as f64;
    let weight: Vec<f64> = (0..grid)
        .map(|i| {
            let mid = (i as f64 + 0.5) * h;
            let inside = collapsed.iter().any(|&(a, b)| {
                let rel = (mid - a).rem_euclid(1.0);
                rel < b - a
            });
            if inside {
                0.0
            } else {
                density[i]
            }
        })
        .collect();
    let total: f64 = weight.iter().sum();
    if total <= 0.0 {
        return Err(Error::domain("marginal vanishes outside the collapsed set"));
    }
    let mut samples = Vec::with_capacity(grid + 1);
    let mut acc = 0.0;
    samples.push(0.0);
    for w in &weight {
        acc += w / total;
        samples.push(acc);
    }
    samples[grid] = 1.0;
    let proj = Projection {
        samples,
        cdf_error: 0.0,
    };
    // push-forward check: mass of p^-1[0, s) against s
    let mut err = 0.0f64;
    for k in 1..64 {
        let s = k as f64 / 64.0;
        let idx = proj.samples.partition_point(|&p| p < s);
        let mass: f64 = weight[..idx.saturating_sub(1)].iter().sum::<f64>() / total;
        let partial = if idx >= 1 && idx <= grid {
            let lo = proj.samples[idx - 1];
            let hi = proj.samples[idx];
            if hi > lo {
                (s - lo) / (hi - lo) * weight[idx - 1] / total
            } else {
                0.0
            }
        } else {
            0.0
        };
        err = err.max((mass + partial - s).abs());
    }
    Ok(Projection {
        cdf_error: err,
        ..proj
    })
}

fn sampled_marginal(sys: &SkewProductSystem, bins: usize, n_orbits: usize, n_iters: usize, seed: u64) -> Vec<f64> {
    let dim = sys.dim();
    let hists: Vec<Vec<f64>> = (0..n_orbits)
        .into_par_iter()
        .map(|o| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(o as u64);
            let mut v = [0.0; 3];
            for slot in v.iter_mut().take(dim) {
                *slot = rng.gen_range(0.0..1.0);
            }
            let (mut fv, mut z) = normalize(sys, to_fixed(&v), rng.gen_range(0.0..1.0));
            let mut hist = vec![0.0; bins];
            for _ in 0..n_iters {
                (fv, z) = sys.forward(&fv, z);
                hist[((z * bins as f64) as usize).min(bins - 1)] += 1.0;
            }
            hist
        })
        .collect();
    let mut out = vec![0.0; bins];
    for h in hists {
        for (o, x) in out.iter_mut().zip(h) {
            *o += x;
        }
    }
    out
}
