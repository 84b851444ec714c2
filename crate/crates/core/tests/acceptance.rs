//! Acceptance criteria 1-9. Each test prints one `criterion N: PASS|FAIL` line.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewlab::circle::{rotation_number, semiconjugacy_to_rotation, MonotoneCircleLift};
use skewlab::classify::{classify, decompose, default_test_functions, generator_maps, Case};
use skewlab::hhu::{
    build_3d_system, build_stable_graph, build_unstable_graph, cone_check, graph_value, oddness_defect,
    psi, slope_threshold_check, Forcing, GraphKind, HhuParameters,
};
use skewlab::holonomy::{
    displacement, holonomy_between, holonomy_derivative, BaseLeafPoint, HeightSet, LeafKind,
};
use skewlab::plante::{
    commuting_fixed_point, master_semiconjugacy, translation_data, word_translation, Affine, Chart,
    Gamma, LineAction,
};
use skewlab::report::{classification_table, decomposition_table, parse_system, Provenance, Report};
use skewlab::skew::{Perturbation, SkewProductSystem, TrigTerm};
use skewlab::torus::{IntegerMatrix, TorusPoint};

const DEPTH: usize = 80;
const TOL: f64 = 1e-6;

struct Verdict {
    criterion: usize,
    start: Instant,
    budget: Option<Duration>,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Verdict {
    fn new(criterion: usize, budget_secs: Option<u64>) -> Self {
        Verdict {
            criterion,
            start: Instant::now(),
            budget: budget_secs.map(Duration::from_secs),
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        if let Some(b) = self.budget {
            self.check(elapsed < b, format!("runtime {:.2}s < {}s", elapsed.as_secs_f64(), b.as_secs()));
        }
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {status} ({:.2}s){}",
            self.criterion,
            elapsed.as_secs_f64(),
            if self.failures.is_empty() {
                String::new()
            } else {
                format!(" failed: {}", self.failures.join("; "))
            }
        );
        for n in &self.notes {
            println!("    ok: {n}");
        }
        assert!(self.failures.is_empty(), "criterion {} failed: {:?}", self.criterion, self.failures);
    }
}

fn cat_prototype() -> SkewProductSystem {
    let cat = IntegerMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
    SkewProductSystem::prototype(&cat, &IntegerMatrix::identity(2)).unwrap()
}

fn localized() -> SkewProductSystem {
    // 0.05 sin(2 pi z) sin(2 pi x) = 0.025 cos(2 pi (x - z)) - 0.025 cos(2 pi (x + z))
    cat_prototype()
        .perturb(&Perturbation::FiberShear(vec![
            TrigTerm::cos(0.025, &[1, 0, -1]),
            TrigTerm::cos(-0.025, &[1, 0, 1]),
        ]))
        .unwrap()
}

fn accessible() -> SkewProductSystem {
    cat_prototype()
        .perturb(&Perturbation::FiberShear(vec![TrigTerm::sin(0.05, &[1, 0, 0])]))
        .unwrap()
}

#[test]
fn criterion_1_prototype() {
    let mut v = Verdict::new(1, Some(10));
    let sys = cat_prototype();
    let r = classify(&sys, DEPTH, TOL).unwrap();
    v.check(
        matches!(r.case, Case::JointlyIntegrable { theta, .. } if theta == 0.0),
        format!("case {} with theta = 0", r.case.tag()),
    );
    let worst = generator_maps(&sys, DEPTH)
        .unwrap()
        .iter()
        .map(|g| g.max_displacement(256))
        .fold(0.0, f64::max);
    v.check(worst < 1e-6, format!("max generator displacement {worst:e} < 1e-6"));
    v.finish();
}

#[test]
fn criterion_2_rational_rotation() {
    let mut v = Verdict::new(2, Some(60));
    let sys = cat_prototype().perturb(&Perturbation::Rotation(0.25)).unwrap();
    let r = classify(&sys, DEPTH, TOL).unwrap();
    let snapped = matches!(r.case, Case::JointlyIntegrable { theta, rational: Some((1, 4)) } if theta == 0.25);
    v.check(snapped, format!("case {} with theta = 1/4 exactly", r.case.tag()));
    v.check(r.case.period() == 4, format!("decomposition period {}", r.case.period()));
    let cos_z = TrigTerm::cos(1.0, &[0, 0, 1]);
    let d = decompose(&sys, &r, 8, 20_000, &[cos_z], 2024).unwrap();
    let mut worst = 0.0f64;
    for c in &d.components {
        // direct integral of cos(2 pi z) over the component
        let direct = match c.support {
            skewlab::classify::Support::Leaf { height } => (TAU * height).cos(),
            skewlab::classify::Support::Interval { start, end } => {
                ((TAU * end).sin() - (TAU * start).sin()) / (TAU * (end - start))
            }
        };
        worst = worst.max((c.rows[0].forward_mean - direct).abs());
    }
    v.check(!d.components.is_empty(), format!("{} components", d.components.len()));
    v.check(worst < 0.02, format!("Birkhoff vs direct integral gap {worst:e} < 0.02"));
    v.finish();
}

#[test]
fn criterion_3_lamination() {
    let mut v = Verdict::new(3, Some(60));
    let sys = localized();
    let r = classify(&sys, DEPTH, TOL).unwrap();
    let compact = match &r.case {
        Case::Laminated { compact, .. } => compact.clone(),
        _ => Vec::new(),
    };
    v.check(matches!(r.case, Case::Laminated { .. }), format!("case {}", r.case.tag()));
    let in_k = |z: f64| compact.iter().any(|h: &HeightSet| h.contains(z, 1e-9));
    v.check(in_k(0.0) && in_k(0.5), "K contains 0 and 1/2");
    v.check(!in_k(0.25), "K excludes 1/4");
    let g80 = generator_maps(&sys, 80).unwrap();
    let g120 = generator_maps(&sys, 120).unwrap();
    for z in [0.0, 0.5] {
        let d = displacement(&g80, z);
        v.check(d < 1e-9, format!("displacement at {z} is {d:e} < 1e-9"));
    }
    let (d80, d120) = (displacement(&g80, 0.25), displacement(&g120, 0.25));
    v.check(d80 > 1e-5 && d120 > 1e-5, format!("displacement at 1/4: {d80:e} (depth 80), {d120:e} (depth 120) > 1e-5"));
    v.finish();
}

#[test]
fn criterion_4_accessible() {
    let mut v = Verdict::new(4, Some(120));
    let sys = accessible();
    let r = classify(&sys, DEPTH, TOL).unwrap();
    v.check(matches!(r.case, Case::Accessible), format!("case {}", r.case.tag()));
    let min_max = r.witnesses.min_displacement;
    v.check(min_max > 1e-5, format!("min-max displacement {min_max:e} > 1e-5"));
    let tests = default_test_functions(2);
    let d = decompose(&sys, &r, 10, 2_000_000, &tests, 4).unwrap();
    for row in &d.components[0].rows {
        let gap = (row.forward_mean - row.backward_mean).abs();
        v.check(gap < 0.01, format!("{}: forward/backward gap {gap:.2e} < 0.01", row.function));
        v.check(
            row.dispersion <= 3.0 * row.clt_band,
            format!("{}: dispersion {:.2e} within 3 CLT bands {:.2e}", row.function, row.dispersion, 3.0 * row.clt_band),
        );
    }
    v.finish();
}

#[test]
fn criterion_5_holonomy_laws() {
    let mut v = Verdict::new(5, None);
    let sys = accessible();
    let e = sys.base().stable()[0].vector;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ratio = 0.0f64;
    let mut worst_tail = 0.0f64;
    for _ in 0..20 {
        let u = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.0];
        let (a, b): (f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let at = |t: f64| [u[0] + t * e[0], u[1] + t * e[1], 0.0];
        let (p, q) = (at(a), at(b));
        let huv = holonomy_between(&sys, LeafKind::Stable, &u, &p, DEPTH).unwrap();
        let hvw = holonomy_between(&sys, LeafKind::Stable, &p, &q, DEPTH).unwrap();
        let huw = holonomy_between(&sys, LeafKind::Stable, &u, &q, DEPTH).unwrap();
        let tail = huv.tail_bound.max(hvw.tail_bound).max(huw.tail_bound);
        worst_tail = worst_tail.max(tail);
        for k in 0..16 {
            let z = k as f64 / 16.0 + rng.gen_range(0.0..0.0625);
            let residual = (hvw.eval(huv.eval(z)) - huw.eval(z)).abs();
            worst_ratio = worst_ratio.max(residual / (3.0 * tail));
        }
    }
    v.check(worst_tail < 1e-9, format!("tail bound {worst_tail:e} < 1e-9 at depth 80"));
    v.check(worst_ratio < 1.0, format!("cocycle residual / (3 tail bound) = {worst_ratio:.3} < 1"));
    let from = BaseLeafPoint::at(TorusPoint::new(&[0.2, 0.7]));
    let to = BaseLeafPoint::new(TorusPoint::new(&[0.2, 0.7]), LeafKind::Unstable, 0, 0.8);
    let h = holonomy_between(&sys, LeafKind::Unstable, &from.lift(&sys).unwrap(), &to.lift(&sys).unwrap(), DEPTH)
        .unwrap();
    let mut worst_fd = 0.0f64;
    for z in [0.05, 0.3, 0.61, 0.9] {
        let j = holonomy_derivative(&sys, LeafKind::Unstable, &from, &to, z, DEPTH).unwrap();
        let step = 1e-5;
        let fd = (h.eval(z + step) - h.eval(z - step)) / (2.0 * step);
        worst_fd = worst_fd.max((j - fd).abs());
    }
    v.check(worst_fd < 1e-5, format!("derivative vs finite difference {worst_fd:e} < 1e-5"));
    v.finish();
}

#[test]
fn criterion_6_plante() {
    let mut v = Verdict::new(6, Some(5));
    let doubling = Affine { scale: 2.0, shift: 0.0 };
    let actions = [
        LineAction::new(Gamma::Line, Chart::Identity, vec![1.0, 2f64.sqrt()], doubling).unwrap(),
        LineAction::new(Gamma::Lattice { origin: 0.0, spacing: 1.0 }, Chart::Identity, vec![1.0], doubling).unwrap(),
        LineAction::new(Gamma::Line, Chart::Cube, vec![1.0, 3f64.sqrt()], doubling).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (i, action) in actions.iter().enumerate() {
        let data = translation_data(action).unwrap();
        let lerr = (data.lambda - 2.0).abs();
        v.check(lerr < 1e-12, format!("action {i}: |lambda - 2| = {lerr:e} < 1e-12"));
        let mut worst = 0.0f64;
        let n = action.n_generators();
        for _ in 0..100 {
            let len = rng.gen_range(1..8);
            let word: Vec<(usize, i32)> = (0..len)
                .map(|_| (rng.gen_range(0..n), if rng.gen_bool(0.5) { 1 } else { -1 }))
                .collect();
            let x = match action.gamma {
                Gamma::Line => rng.gen_range(-3.0..3.0),
                Gamma::Lattice { .. } => rng.gen_range(-3i32..3) as f64,
            };
            let expected: f64 = word.iter().map(|&(g, s)| s as f64 * data.tau.tau[g]).sum();
            worst = worst.max((word_translation(action, &data.mu, &word, x) - expected).abs());
        }
        v.check(worst < 1e-10, format!("action {i}: tau homomorphism residual {worst:e} < 1e-10"));
        let semi = master_semiconjugacy(action).unwrap();
        let res = semi.generator_residual.max(semi.conjugator_residual);
        v.check(res < 1e-8, format!("action {i}: semiconjugacy residual {res:e} < 1e-8"));
        // x -> 2x commutes with the conjugator
        let fixed = commuting_fixed_point(&semi, |x| 2.0 * x).unwrap();
        let (lo, hi) = semi.zero_set();
        v.check(
            (2.0 * fixed - fixed).abs() < 1e-12 && fixed >= lo - 1e-12 && fixed <= hi + 1e-12,
            format!("action {i}: commuting fixed point {fixed} lies in P^-1(0) = [{lo}, {hi}]"),
        );
    }
    v.finish();
}

fn newton_inverse(h: impl Fn(f64) -> f64, dh: impl Fn(f64) -> f64, y: f64) -> f64 {
    let mut x = y;
    for _ in 0..60 {
        x -= (h(x) - y) / dh(x);
    }
    x
}

#[test]
fn criterion_7_circle_maps() {
    let mut v = Verdict::new(7, Some(30));
    for (theta, q) in [(0.25, Some(4)), (2.0 / 7.0, Some(7)), (0.1, Some(10)), (2f64.sqrt() - 1.0, None), (0.5 * (5f64.sqrt() - 1.0), None)] {
        let r = rotation_number(&move |x: f64| x + theta, 1_000_000);
        let err = (r.value - theta).abs();
        v.check(err < 1e-9, format!("rigid {theta:.6}: error {err:e} < 1e-9"));
        v.check(r.rational.map(|x| x.q) == q, format!("rigid {theta:.6}: snapped denominator {:?}", r.rational.map(|x| x.q)));
    }
    let rho = 2f64.sqrt() - 1.0;
    let h = |x: f64| x + 0.08 * (TAU * x).sin() / TAU;
    let dh = |x: f64| 1.0 + 0.08 * (TAU * x).cos();
    let f = move |x: f64| newton_inverse(h, dh, h(x) + rho);
    let semi = semiconjugacy_to_rotation(&f).unwrap();
    let sup = (0..1000)
        .map(|i| {
            let x = i as f64 / 1000.0;
            (semi.eval(x) - h(x)).abs()
        })
        .fold(0.0, f64::max);
    v.check(sup < 5e-3, format!("semiconjugacy sup error {sup:e} < 5e-3"));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = move |x: f64| x + 0.3 + 0.05 * (TAU * x).sin() / TAU;
    let r0 = rotation_number(&base, 100_000);
    for i in 0..10 {
        let a: f64 = rng.gen_range(-0.12..0.12);
        let k = rng.gen_range(1..4) as f64;
        let c = move |x: f64| x + a * (TAU * k * x).sin() / (TAU * k);
        let cl = MonotoneCircleLift::from_fn(2048, c).unwrap();
        let conj = move |x: f64| cl.inverse_eval(base(c(x)));
        let r1 = rotation_number(&conj, 100_000);
        let gap = (r0.value - r1.value).abs();
        v.check(
            gap <= r0.error_bound + r1.error_bound,
            format!("conjugator {i}: |rho gap| {gap:e} <= {:e}", r0.error_bound + r1.error_bound),
        );
    }
    v.finish();
}

#[test]
fn criterion_8_hhu() {
    let mut v = Verdict::new(8, Some(30));
    let depth = skewlab::hhu::DEFAULT_DEPTH;
    let p = HhuParameters::new(Forcing::Cos);
    let lambda = 0.5 * (1.0 + 5f64.sqrt());
    let u0 = graph_value(&p, GraphKind::Unstable, 0.0, depth).unwrap().0;
    v.check((u0 + lambda).abs() < 1e-9, format!("u(0) + lambda = {:e}", u0 + lambda));
    let u = build_unstable_graph(&p, 2000, depth).unwrap();
    let c = build_stable_graph(&p, 2000, depth).unwrap();
    for g in [&u, &c] {
        // g(psi x) = lambda g(x) + cos x, evaluated independently of the stored residual
        let worst = g
            .xs
            .iter()
            .zip(&g.values)
            .filter(|(x, _)| psi(**x).abs() < PI)
            .map(|(&x, &y)| (g.eval(psi(x)).unwrap() - lambda * y - x.cos()).abs())
            .fold(0.0, f64::max);
        v.check(
            g.xs.len() >= 2000 && worst < 1e-9,
            format!("{:?} graph invariance {worst:e} < 1e-9 on {} points", g.kind, g.xs.len()),
        );
    }
    v.check(u.slope_sign_holds(0.01, PI - 0.01, -1.0), "u' < 0 on (0.01, pi - 0.01)");
    v.check(c.slope_sign_holds(0.01, PI - 0.01, 1.0), "c' > 0 on (0.01, pi - 0.01)");
    let su = slope_threshold_check(&p, GraphKind::Unstable, PI - 1e-3, -50.0, 2000, depth).unwrap();
    v.check(su.passed, format!("|u'(pi - 1e-3)|: {:.2} and {:.2} > 50", su.coarse.abs(), su.fine.abs()));
    let sc = slope_threshold_check(&p, GraphKind::Stable, 1e-3, 50.0, 2000, depth).unwrap();
    v.check(sc.passed, format!("c'(1e-3): {:.3} and {:.3} > 50", sc.coarse, sc.fine));
    let cone = cone_check(&build_3d_system(&p), 20, depth).unwrap();
    let detail: Vec<String> = cone
        .samples
        .iter()
        .filter(|s| s.y == 0.0)
        .map(|s| {
            let (gs, gc, gu) = s.growth[19];
            format!("x = {:.4}: |s|,|c|,|u| at k = 20 = {gs:.2e}, {gc:.2e}, {gu:.2e}", s.x)
        })
        .collect();
    v.check(cone.passed, format!("cone domination for some k <= 20 ({})", detail.join(", ")));
    let odd = build_stable_graph(&HhuParameters::new(Forcing::SinMinusX), 2000, depth).unwrap();
    let defect = oddness_defect(&odd).unwrap();
    v.check(defect < 1e-9, format!("odd-variant c(-x) + c(x) = {defect:e} < 1e-9"));
    v.finish();
}

fn reports(seed: u64) -> (String, String) {
    let sys = parse_system(
        "[base]\n2,1\n1,1\n[fiber]\n0.025 cos 1 0 -1\n-0.025 cos 1 0 1\n",
    )
    .unwrap();
    let prov = Provenance {
        command: "decompose".into(),
        input: None,
        depth: DEPTH,
        tol: TOL,
        seed,
        grid: 256,
        iters: 3000,
    };
    let r = classify(&sys, DEPTH, TOL).unwrap();
    let d = decompose(&sys, &r, 4, 3000, &default_test_functions(2), seed).unwrap();
    let mut report = Report::new(&prov);
    report.insert("classification", classification_table(&r));
    report.insert("decomposition", decomposition_table(&d));
    let rows: Vec<String> = d
        .components
        .iter()
        .flat_map(|c| c.rows.iter().map(|r| format!("{:.16e},{:.16e}", r.forward_mean, r.backward_mean)))
        .collect();
    (report.render(), rows.join("\n"))
}

#[test]
fn criterion_9_determinism() {
    let mut v = Verdict::new(9, None);
    let (a, ta) = reports(99);
    let (b, tb) = reports(99);
    let (_, tc) = reports(100);
    v.check(a == b && ta == tb, "identical seeds give byte-identical reports");
    v.check(ta != tc, "a different seed changes the Birkhoff table");
    v.finish();
}
