use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewlab::circle::{rotation_number, semiconjugacy_to_rotation, CircleLift};
use skewlab::classify::{
    build_projection, classify_with, decompose as decompose_components, default_test_functions, generator_maps, Case,
    ClassifyOptions, Marginal, Support,
};
use skewlab::hhu::{
    boundedness_check, build_3d_system, build_stable_graph, build_unstable_graph, compact_leaf_check,
    cone_check, graph_value, oddness_defect, slope_threshold_check, Forcing, GraphKind, HhuParameters,
};
use skewlab::holonomy::{detect_compact_classes, displacement_profile};
use skewlab::plante::{master_semiconjugacy, parse_action, translation_data};
use skewlab::report::{
    classification_table, compact_classes_table, decomposition_table, holonomy_table, parse_circle_map,
    read_system, read_text, rotation_table, sci, write_csv, write_xy_csv, Provenance, Report,
};
use skewlab::torus::{from_fixed, to_fixed};
use skewlab::{Error, Result};
use toml::{Table, Value};

use crate::RunConfig;

pub enum Outcome {
    Conclusive,
    Inconclusive,
}

struct Defaults {
    depth: usize,
    grid: usize,
    iters: usize,
}

struct Run {
    provenance: Provenance,
    out: PathBuf,
    depth: usize,
    grid: usize,
    iters: usize,
}

impl Run {
    fn new(command: &str, config: &RunConfig, defaults: Defaults) -> Result<Run> {
        fs::create_dir_all(&config.out)?;
        let depth = config.depth.unwrap_or(defaults.depth);
        let grid = config.grid.unwrap_or(defaults.grid);
        let iters = config.iters.unwrap_or(defaults.iters);
        if config.depth == Some(0) || config.grid == Some(0) {
            return Err(Error::Domain("depth and grid must be positive".into()));
        }
        if config.tol.is_nan() || config.tol <= 0.0 {
            return Err(Error::Domain("tol must be positive".into()));
        }
        let mut command = command.to_owned();
        if command == "hhu" {
            command = format!("hhu --variant {}", config.variant);
        }
        Ok(Run {
            provenance: Provenance {
                command,
                input: config.input.as_ref().map(|p| p.display().to_string()),
                depth,
                tol: config.tol,
                seed: config.seed,
                grid,
                iters,
            },
            out: config.out.clone(),
            depth,
            grid,
            iters,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn report(&self) -> Report {
        Report::new(&self.provenance)
    }
}

fn input(config: &RunConfig) -> Result<&Path> {
    config
        .input
        .as_deref()
        .ok_or_else(|| Error::Domain("--input is required".into()))
}

fn sample_grid(grid: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    (0..=grid)
        .map(|i| {
            let x = i as f64 / grid as f64;
            (x, f(x))
        })
        .collect()
}

fn options(run: &Run, config: &RunConfig) -> ClassifyOptions {
    ClassifyOptions {
        depth: run.depth,
        tol: config.tol,
        grid: run.grid,
    }
}

fn inconclusive_table(message: &str) -> Table {
    let mut t = Table::new();
    t.insert("case".into(), Value::from("inconclusive"));
    t.insert("message".into(), Value::from(message));
    t
}

pub fn classify(config: &RunConfig) -> Result<Outcome> {
    let run = Run::new("classify", config, Defaults { depth: 80, grid: 256, iters: 0 })?;
    let sys = read_system(input(config)?)?;
    let mut report = run.report();
    let outcome = match classify_with(&sys, options(&run, config)) {
        Ok(r) => {
            println!("case: {}", r.case.tag());
            report.insert("classification", classification_table(&r));
            Outcome::Conclusive
        }
        Err(Error::Inconclusive(msg)) => {
            println!("case: inconclusive ({msg})");
            report.insert("classification", inconclusive_table(&msg));
            Outcome::Inconclusive
        }
        Err(e) => return Err(e),
    };
    let maps = generator_maps(&sys, run.depth)?;
    write_xy_csv(&run.path("displacement.csv"), &displacement_profile(&maps, run.grid))?;
    report.write(&run.path("classify.toml"))?;
    Ok(outcome)
}

pub fn decompose(config: &RunConfig) -> Result<Outcome> {
    let run = Run::new("decompose", config, Defaults { depth: 80, grid: 256, iters: 100_000 })?;
    let sys = read_system(input(config)?)?;
    let mut report = run.report();
    let class = match classify_with(&sys, options(&run, config)) {
        Ok(r) => r,
        Err(Error::Inconclusive(msg)) => {
            println!("case: inconclusive ({msg})");
            report.insert("classification", inconclusive_table(&msg));
            report.write(&run.path("decompose.toml"))?;
            return Ok(Outcome::Inconclusive);
        }
        Err(e) => return Err(e),
    };
    let tests = default_test_functions(sys.dim());
    let dec = decompose_components(&sys, &class, 10, run.iters, &tests, config.seed)?;
    let mut rows = Vec::new();
    for (i, c) in dec.components.iter().enumerate() {
        let support = match c.support {
            Support::Interval { start, end } => format!("[{start:.6}, {end:.6}]"),
            Support::Leaf { height } => format!("leaf {height:.6}"),
        };
        for r in &c.rows {
            rows.push(vec![
                i.to_string(),
                support.clone(),
                r.function.clone(),
                sci(r.forward_mean),
                sci(r.backward_mean),
                sci(r.dispersion),
                sci(r.clt_band),
                sci(r.max_gap),
                sci(r.reference),
                r.ergodic.to_string(),
            ]);
        }
    }
    write_csv(
        &run.path("birkhoff.csv"),
        &[
            "component",
            "support",
            "function",
            "forward_mean",
            "backward_mean",
            "dispersion",
            "clt_band",
            "max_gap",
            "reference",
            "ergodic",
        ],
        &rows,
    )?;
    if !matches!(class.case, Case::Accessible) {
        let p = build_projection(&sys, &class, Marginal::Lebesgue)?;
        write_xy_csv(&run.path("projection.csv"), &sample_grid(run.grid, |z| p.eval(z)))?;
    }
    println!("case: {}, components: {}", class.case.tag(), dec.components.len());
    report.insert("classification", classification_table(&class));
    report.insert("decomposition", decomposition_table(&dec));
    report.write(&run.path("decompose.toml"))?;
    Ok(Outcome::Conclusive)
}

pub fn rotnum(config: &RunConfig) -> Result<Outcome> {
    let run = Run::new("rotnum", config, Defaults { depth: 0, grid: 1024, iters: 100_000 })?;
    let map = parse_circle_map(&read_text(input(config)?)?)?;
    let r = rotation_number(&map, run.iters);
    match r.rational {
        Some(q) => println!("rho = {}/{}", q.p, q.q),
        None => println!("rho = {} +- {:e}", r.value, r.error_bound),
    }
    let mut report = run.report();
    let mut table = rotation_table(&r);
    write_xy_csv(&run.path("lift.csv"), &sample_grid(run.grid, |x| map.lift(x)))?;
    if r.rational.is_none() {
        let semi = semiconjugacy_to_rotation(&map)?;
        table.insert("semiconjugacy_defect".into(), Value::from(semi.defect));
        write_xy_csv(&run.path("semiconjugacy.csv"), &sample_grid(run.grid, |x| semi.eval(x)))?;
    }
    report.insert("rotation", table);
    report.write(&run.path("rotation.toml"))?;
    Ok(Outcome::Conclusive)
}

pub fn holonomy(config: &RunConfig) -> Result<Outcome> {
    let run = Run::new("holonomy", config, Defaults { depth: 80, grid: 256, iters: 0 })?;
    let sys = read_system(input(config)?)?;
    let maps = generator_maps(&sys, run.depth)?;
    let k = detect_compact_classes(&maps, run.grid, config.tol);
    let mut report = run.report();
    let mut gens = Vec::new();
    for (i, m) in maps.iter().enumerate() {
        let mut t = Table::new();
        t.insert(
            "alpha".into(),
            Value::Array(m.alpha[..sys.dim()].iter().map(|&a| Value::from(a)).collect()),
        );
        t.insert("tail_bound".into(), Value::from(m.tail_bound));
        t.insert("max_displacement".into(), Value::from(m.max_displacement(run.grid)));
        t.insert(
            "legs".into(),
            Value::Array(m.legs.iter().map(|l| Value::Table(holonomy_table(l))).collect()),
        );
        gens.push(Value::Table(t));
        write_xy_csv(&run.path(&format!("generator_{i}.csv")), &sample_grid(run.grid, |z| m.eval(z)))?;
    }
    let mut t = compact_classes_table(&k);
    t.insert("generators".into(), Value::Array(gens));
    report.insert("holonomy", t);
    write_xy_csv(&run.path("displacement.csv"), &displacement_profile(&maps, run.grid))?;
    report.write(&run.path("holonomy.toml"))?;
    println!("compact components: {}, bands: {}", k.components.len(), k.bands.len());
    Ok(Outcome::Conclusive)
}

pub fn plante(config: &RunConfig) -> Result<Outcome> {
    let run = Run::new("plante", config, Defaults { depth: 0, grid: 200, iters: 0 })?;
    let action = parse_action(&read_text(input(config)?)?)?;
    let data = translation_data(&action)?;
    println!("lambda = {}", data.lambda);
    let mut t = Table::new();
    t.insert("chart".into(), Value::from(action.chart.name()));
    t.insert("measure".into(), Value::from(data.mu.kind()));
    t.insert("invariance_residual".into(), Value::from(data.mu.invariance_residual));
    t.insert("tau".into(), Value::Array(data.tau.tau.iter().map(|&x| Value::from(x)).collect()));
    t.insert("base_point_spread".into(), Value::from(data.tau.base_point_spread));
    t.insert("lambda".into(), Value::from(data.lambda));
    t.insert("automorphism".into(), Value::from(action.conjugation_is_automorphism()));
    if (data.lambda - 1.0).abs() > 1e-9 {
        let semi = master_semiconjugacy(&action)?;
        let (lo, hi) = semi.zero_set();
        t.insert("fixed_point".into(), Value::from(semi.fixed_point));
        t.insert("zero_set".into(), Value::Array(vec![Value::from(lo), Value::from(hi)]));
        t.insert("generator_residual".into(), Value::from(semi.generator_residual));
        t.insert("conjugator_residual".into(), Value::from(semi.conjugator_residual));
        write_xy_csv(&run.path("semiconjugacy.csv"), &semi.samples)?;
    }
    let mut report = run.report();
    report.insert("plante", t);
    report.write(&run.path("plante.toml"))?;
    Ok(Outcome::Conclusive)
}

fn check_table(passed: bool) -> Table {
    let mut t = Table::new();
    t.insert("passed".into(), Value::from(passed));
    t
}

pub fn hhu(config: &RunConfig) -> Result<Outcome> {
    let run = Run::new("hhu", config, Defaults { depth: 200, grid: 2000, iters: 0 })?;
    let p = HhuParameters::new(Forcing::parse(&config.variant)?);
    let (depth, grid) = (run.depth, run.grid);
    let u = build_unstable_graph(&p, grid, depth)?;
    let c = build_stable_graph(&p, grid, depth)?;
    write_xy_csv(&run.path("unstable.csv"), &u.xs.iter().copied().zip(u.values.iter().copied()).collect::<Vec<_>>())?;
    write_xy_csv(&run.path("stable.csv"), &c.xs.iter().copied().zip(c.values.iter().copied()).collect::<Vec<_>>())?;
    let mut leaves = Vec::new();
    for b in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        for (x, v) in u.xs.iter().zip(&u.values) {
            leaves.push(vec![sci(b), sci(*x), sci(v + b)]);
        }
    }
    write_csv(&run.path("leaves.csv"), &["offset", "x", "value"], &leaves)?;

    let mut checks = Table::new();
    let mut record = |name: &str, t: Table| {
        let passed = t["passed"].as_bool().unwrap_or(false);
        println!("{name}: {}", if passed { "PASS" } else { "FAIL" });
        checks.insert(name.into(), Value::Table(t));
    };

    let u0 = graph_value(&p, GraphKind::Unstable, 0.0, depth)?.0;
    let expected = p.fixed_height(0.0)?;
    let mut t = check_table((u0 - expected).abs() < 1e-9);
    t.insert("value".into(), Value::from(u0));
    t.insert("expected".into(), Value::from(expected));
    record("unstable_at_origin", t);

    for (name, g) in [("unstable_invariance", &u), ("stable_invariance", &c)] {
        let mut t = check_table(g.residual < 1e-9);
        t.insert("residual".into(), Value::from(g.residual));
        t.insert("tail_bound".into(), Value::from(g.tail_bound));
        record(name, t);
    }
    record("unstable_decreasing", check_table(u.slope_sign_holds(0.01, PI - 0.01, -1.0)));
    record("stable_increasing", check_table(c.slope_sign_holds(0.01, PI - 0.01, 1.0)));

    for (name, kind, x, threshold) in [
        ("unstable_slope_near_pi", GraphKind::Unstable, PI - 1e-3, -50.0),
        ("stable_slope_near_zero", GraphKind::Stable, 1e-3, 50.0),
    ] {
        let s = slope_threshold_check(&p, kind, x, threshold, grid, depth)?;
        let mut t = check_table(s.passed);
        t.insert("x".into(), Value::from(s.x));
        t.insert("threshold".into(), Value::from(s.threshold));
        t.insert("coarse".into(), Value::from(s.coarse));
        t.insert("fine".into(), Value::from(s.fine));
        t.insert("analytic".into(), Value::from(s.analytic));
        record(name, t);
    }

    let b = boundedness_check(&p, &c);
    let mut t = check_table(b.passed);
    t.insert("bound".into(), Value::from(b.bound));
    t.insert("sup_c".into(), Value::from(b.sup_c));
    record("stable_bounded", t);

    if p.forcing == Forcing::SinMinusX {
        let d = oddness_defect(&c)?;
        let mut t = check_table(d < 1e-9);
        t.insert("defect".into(), Value::from(d));
        record("stable_odd", t);
    }

    let sys = build_3d_system(&p);
    let mut t = check_table(sys.equivariance_residual < 1e-9 && sys.lattice_residual < 1e-9);
    t.insert("equivariance_residual".into(), Value::from(sys.equivariance_residual));
    t.insert("lattice_residual".into(), Value::from(sys.lattice_residual));
    record("lattice", t);

    let cone = cone_check(&sys, 20, depth)?;
    let mut t = check_table(cone.passed);
    if let Some(k) = cone.k {
        t.insert("k".into(), Value::from(k as i64));
    }
    let samples = cone
        .samples
        .iter()
        .map(|s| {
            let mut st = Table::new();
            let (gs, gc, gu) = s.growth[s.growth.len() - 1];
            st.insert("x".into(), Value::from(s.x));
            st.insert("y".into(), Value::from(s.y));
            st.insert("growth".into(), Value::Array(vec![gs.into(), gc.into(), gu.into()]));
            Value::Table(st)
        })
        .collect();
    t.insert("samples".into(), Value::Array(samples));
    record("cone", t);

    let leaf = compact_leaf_check(&sys, depth)?;
    let mut t = check_table(leaf.passed);
    t.insert("torus_x".into(), Value::from(leaf.torus_x));
    t.insert("edge_slope".into(), Value::from(leaf.edge_slope));
    t.insert("escaped".into(), Value::from(leaf.escaped as i64));
    t.insert("sampled".into(), Value::from(leaf.sampled as i64));
    record("compact_leaf", t);

    let mut params = Table::new();
    params.insert("lambda".into(), Value::from(p.lambda));
    params.insert("forcing".into(), Value::from(p.forcing.name()));
    let mut report = run.report();
    report.insert("parameters", params);
    report.insert("checks", checks);
    report.write(&run.path("hhu.toml"))?;
    Ok(Outcome::Conclusive)
}

pub fn orbit(config: &RunConfig) -> Result<Outcome> {
    let run = Run::new("orbit", config, Defaults { depth: 0, grid: 0, iters: 10_000 })?;
    let sys = read_system(input(config)?)?;
    let dim = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut v = [0.0; 3];
    for x in v.iter_mut().take(dim) {
        *x = rng.gen_range(0.0..1.0);
    }
    let mut w = to_fixed(&v);
    let mut z: f64 = rng.gen_range(0.0..1.0);
    let mut header = vec!["n".to_owned()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.push("z".into());
    let mut rows = Vec::with_capacity(run.iters + 1);
    for n in 0..=run.iters {
        let c = from_fixed(&w);
        let mut row = vec![n.to_string()];
        row.extend(c[..dim].iter().map(|&x| sci(x)));
        row.push(sci(z));
        rows.push(row);
        (w, z) = sys.forward(&w, z);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&run.path("orbit.csv"), &header, &rows)?;
    let mut report = run.report();
    let mut t = Table::new();
    t.insert("points".into(), Value::from(rows.len() as i64));
    report.insert("orbit", t);
    report.write(&run.path("orbit.toml"))?;
    Ok(Outcome::Conclusive)
}
