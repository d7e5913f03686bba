//! Acceptance suite: one line per criterion, failing if any criterion fails.
//!
//! Run with `cargo test -p holestokes-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use holestokes::bogovskii::{bogovskii_constant, bogovskii_perforated, bogovskii_residual, zero_extend, BogovskiiSetup, MeanZeroField};
use holestokes::fem::{barycentric_gradients, interpolate_p2, map_point, p1_value_at, p2_gradient_at, p2_value_at};
use holestokes::meshgen::mesh_rectangle;
use holestokes::norms::norm_report;
use holestokes::perforated::{build_perforated, DEFAULT_B1};
use holestokes::quadrature::rule;
use holestokes::restriction::{
    divergence_free_sample, divergence_preservation, extension_identity, measure_restriction_constant, zero_trace_sample,
    PerforatedMesh,
};
use holestokes::{
    Dirichlet, DivData, Expr, HoleShape, LebesgueExponent, ScalarField, Source, StokesSolver, TensorField, TriMesh,
    VectorField,
};

struct Line {
    id: &'static str,
    pass: bool,
    text: String,
}

fn line(id: &'static str, pass: bool, text: String) -> Line {
    println!("criterion {id:<6} {}  {text}", if pass { "PASS" } else { "FAIL" });
    Line { id, pass, text }
}

fn max_over_min(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

fn tail(v: &[f64]) -> &[f64] {
    &v[v.len().saturating_sub(4)..]
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

// least squares slope of log value against log(1/eps)
fn slope(eps: &[f64], v: &[f64]) -> f64 {
    let x: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let y: Vec<f64> = v.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

// ---- manufactured solution ----

const A: &str = "x^2*(1-x)^2";
const DA: &str = "2*x*(1-x)*(1-2*x)";
const DDA: &str = "2*(1-6*x+6*x^2)";

fn a(x: f64) -> f64 {
    x * x * (1.0 - x) * (1.0 - x)
}
fn da(x: f64) -> f64 {
    2.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
}
fn dda(x: f64) -> f64 {
    2.0 * (1.0 - 6.0 * x + 6.0 * x * x)
}

fn manufactured_source() -> TensorField {
    let (ay, day, dday) = (A.replace('x', "y"), DA.replace('x', "y"), DDA.replace('x', "y"));
    TensorField::parse([
        &format!("-({DA})*({day}) + x - 0.5"),
        &format!("-({A})*({dday})"),
        &format!("({DDA})*({ay})"),
        &format!("({DA})*({day}) + x - 0.5"),
    ])
    .unwrap()
}

fn manufactured_errors(mesh: &TriMesh, velocity: &[f64], pressure: &[f64]) -> (f64, f64) {
    let r = rule(8);
    let (mut h1, mut l2) = (0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        let pts = mesh.triangle_points(t);
        let (gl, area) = barycentric_gradients(&pts);
        for (l, w) in r.bary.iter().zip(&r.weights) {
            let [x, y] = map_point(&pts, *l);
            let u = [a(x) * da(y), -da(x) * a(y)];
            let gu = [[da(x) * da(y), a(x) * dda(y)], [-dda(x) * a(y), -da(x) * da(y)]];
            let v = p2_value_at(mesh, velocity, t, *l);
            let g = p2_gradient_at(mesh, velocity, t, *l, &gl);
            let mut e = 0.0;
            for i in 0..2 {
                e += (v[i] - u[i]).powi(2);
                for j in 0..2 {
                    e += (g[i][j] - gu[i][j]).powi(2);
                }
            }
            h1 += w * area * e;
            l2 += w * area * (p1_value_at(mesh, pressure, t, *l) - (x - 0.5)).powi(2);
        }
    }
    (h1.sqrt(), l2.sqrt())
}

// returns the criterion line and the energy slack of every solve
fn criterion_1() -> (Line, Vec<f64>) {
    let start = Instant::now();
    let g = manufactured_source();
    let two = LebesgueExponent::new(2.0).unwrap();
    let mut errs = Vec::new();
    let mut slack = Vec::new();
    for n in [4, 8, 16, 32] {
        let mesh = Arc::new(mesh_rectangle([0.0, 0.0], [1.0, 1.0], n, n).unwrap());
        let sol = StokesSolver::new(mesh.clone())
            .unwrap()
            .solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero)
            .unwrap();
        let r = norm_report(&sol, &g, two).unwrap();
        slack.push(r.source_lp + 1e-9 - r.grad_velocity_lp);
        errs.push(manufactured_errors(&mesh, &sol.velocity, &sol.pressure));
    }
    let secs = start.elapsed().as_secs_f64();
    let rates: Vec<(f64, f64)> = errs.windows(2).map(|w| ((w[0].0 / w[1].0).log2(), (w[0].1 / w[1].1).log2())).collect();
    let min_v = rates.iter().map(|r| r.0).fold(f64::MAX, f64::min);
    let min_p = rates.iter().map(|r| r.1).fold(f64::MAX, f64::min);
    let pass = min_v >= 1.8 && min_p >= 1.8 && secs < 30.0;
    (
        line("1", pass, format!("min H1 rate {min_v:.3}, min pressure rate {min_p:.3} (>= 1.8), {secs:.1} s (< 30 s)")),
        slack,
    )
}

// ---- lab runs ----

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

struct Run {
    ok: bool,
    stderr: String,
    seconds: f64,
    files: BTreeMap<String, Vec<u8>>,
}

fn lab(dir: &Path, name: &str, threads: &str) -> Run {
    let cfg = configs();
    let mut args: Vec<String> = Vec::new();
    let sub = match name {
        "mesh" | "solve" | "restrict" | "bogovskii" => name,
        _ => "sweep",
    };
    args.push(sub.into());
    args.push("--config".into());
    args.push(cfg.join(format!("{name}.toml")).to_string_lossy().into_owned());
    match name {
        "restrict" => {
            args.extend(["--field".into(), cfg.join("velocity.toml").to_string_lossy().into_owned()]);
            args.extend(["--verify".into(), "norm".into()]);
        }
        "bogovskii" => {
            args.extend(["--rhs".into(), cfg.join("rhs.toml").to_string_lossy().into_owned()]);
            args.push("--verify".into());
        }
        _ => {}
    }
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_lab"))
        .current_dir(dir)
        .args(&args)
        .env("LAB_THREADS", threads)
        .output()
        .expect("lab runs");
    let seconds = start.elapsed().as_secs_f64();
    let mut files = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(dir.join("out")) {
        for e in entries.flatten() {
            let n = e.file_name().to_string_lossy().into_owned();
            if n.starts_with(name) {
                files.insert(n, fs::read(e.path()).unwrap());
            }
        }
    }
    Run {
        ok: o.status.code() == Some(0),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        seconds,
        files,
    }
}

fn csv_column(run: &Run, file: &str, column: &str) -> Vec<f64> {
    let text = String::from_utf8_lossy(&run.files[file]).into_owned();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == column).unwrap_or_else(|| panic!("{column} in {file}"));
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn json(run: &Run, file: &str) -> serde_json::Value {
    serde_json::from_slice(&run.files[file]).unwrap()
}

fn failed_run(id: &'static str, name: &str, run: &Run) -> Option<Line> {
    (!run.ok).then(|| line(id, false, format!("lab {name} did not exit 0: {}", run.stderr.trim())))
}

fn energy_slack(run: &Run) -> Vec<f64> {
    if !run.ok {
        return Vec::new();
    }
    let grad = csv_column(run, "uniform.csv", "grad_lp");
    let source = csv_column(run, "uniform.csv", "source_lp");
    grad.iter().zip(&source).map(|(g, s)| s + 1e-9 - g).collect()
}

fn criterion_3(run: &Run) -> Line {
    if let Some(l) = failed_run("3", "uniform", run) {
        return l;
    }
    let ratio = csv_column(run, "uniform.csv", "ratio");
    let b = max_over_min(tail(&ratio));
    let pass = ratio.len() == 6 && b <= 1.2 && run.seconds < 120.0;
    line("3", pass, format!("band {b:.4} over last 4 ratios {:.4?} (<= 1.2), {:.1} s (< 120 s)", tail(&ratio), run.seconds))
}

fn criterion_4(run: &Run) -> Line {
    if let Some(l) = failed_run("4", "blowup", run) {
        return l;
    }
    let eps = csv_column(run, "blowup.csv", "epsilon");
    let ratio = csv_column(run, "blowup.csv", "ratio");
    let j = json(run, "blowup.json");
    let m = &j["verdicts"][0]["measured"];
    let (c, bar) = (m["center_velocity"].as_f64().unwrap(), m["center_error_bar"].as_f64().unwrap());
    let s = slope(tail(&eps), tail(&ratio));
    let pass = c > 10.0 * bar && strictly_increasing(tail(&ratio)) && s > 0.05;
    line(
        "4",
        pass,
        format!("|v(0)| {c:.4e} vs error bar {bar:.2e}; last 4 ratios {:.4?}, slope {s:.3} (> 0.05)", tail(&ratio)),
    )
}

fn criterion_5(run: &Run) -> Line {
    if let Some(l) = failed_run("5", "dual-blowup", run) {
        return l;
    }
    let grad = csv_column(run, "dual-blowup.csv", "grad_lp");
    let j = json(run, "dual-blowup.json");
    let m = &j["verdicts"][0]["measured"];
    let (ne, pe) = (m["normalization_error"].as_f64().unwrap(), m["pairing_error"].as_f64().unwrap());
    let pass = ne <= 1e-6 && pe <= 1e-6 && strictly_increasing(tail(&grad));
    line(
        "5",
        pass,
        format!("normalization error {ne:.2e}, duality error {pe:.2e} (<= 1e-6); last 4 dual gradients {:.4?}", tail(&grad)),
    )
}

fn criterion_6(run: &Run) -> Line {
    if let Some(l) = failed_run("6", "rescaling", run) {
        return l;
    }
    let d = csv_column(run, "rescaling.csv", "discrepancy");
    let nd = csv_column(run, "rescaling.csv", "norm_discrepancy");
    let worst = d.iter().chain(&nd).cloned().fold(0.0, f64::max);
    line("6", d.len() == 4 && worst <= 1e-8, format!("max discrepancy {worst:.2e} over 4 (eps, p) pairs (<= 1e-8)"))
}

fn criterion_7(run: &Run) -> Line {
    if let Some(l) = failed_run("7", "enlarging", run) {
        return l;
    }
    let ratio = csv_column(run, "enlarging.csv", "ratio");
    let b = max_over_min(tail(&ratio));
    line("7", ratio.len() == 5 && b <= 1.2, format!("band {b:.4} over last 4 ratios {:.4?} (<= 1.2)", tail(&ratio)))
}

// ---- perforated operators ----

const EPS: [f64; 3] = [0.25, 0.125, 0.0625];

fn perforated(eps: f64, alpha: f64) -> PerforatedMesh {
    let n = (1.0 / eps).round() as usize;
    let pd = build_perforated(1.0, n, alpha, HoleShape::disk(0.25), DEFAULT_B1, None).unwrap();
    PerforatedMesh::new(pd, 16, 1.0).unwrap()
}

fn criterion_8() -> Vec<Line> {
    let field = VectorField::parse(["sin(pi*x)^2*sin(pi*y)^2", "x*(1-x)*y*(1-y)*(1+x)"]).unwrap();
    let two = LebesgueExponent::new(2.0).unwrap();
    let (mut ext, mut div) = (0.0f64, 0.0f64);
    let mut bands = Vec::new();
    for alpha in [1.0, 2.0] {
        let mut consts = Vec::new();
        for e in EPS {
            let pm = perforated(e, alpha);
            ext = ext.max(extension_identity(&pm, &zero_trace_sample(&pm, &field).unwrap()).unwrap());
            let solver = StokesSolver::new(pm.full.clone()).unwrap();
            div = div.max(divergence_preservation(&pm, &divergence_free_sample(&solver, &field).unwrap()).unwrap());
            let u = interpolate_p2(&pm.full, &field).unwrap();
            consts.push(measure_restriction_constant(&pm, &u, two).unwrap().expect("admissible field").constant);
        }
        bands.push((alpha, max_over_min(&consts), consts));
    }
    let mut out = vec![
        line("8(a)", ext <= 1e-8, format!("max relative H1 gap {ext:.2e} over alpha 1, 2 and 3 eps (<= 1e-8)")),
        line("8(b)", div <= 1e-8, format!("max divergence residual {div:.2e} (<= 1e-8)")),
    ];
    for (alpha, b, c) in bands {
        out.push(line("8(c)", b <= 1.5, format!("alpha {alpha}: constants {c:.3?}, band {b:.3} (<= 1.5)")));
    }
    out
}

fn criterion_9() -> Vec<Line> {
    let f = ScalarField::Expr(Expr::parse("cos(2*pi*x)*cos(pi*y) + x").unwrap());
    let two = LebesgueExponent::new(2.0).unwrap();
    let (mut res, mut gap) = (0.0f64, 0.0f64);
    let mut count = 0;
    let mut bands = Vec::new();
    for alpha in [1.0, 2.0] {
        let mut consts = Vec::new();
        for e in EPS {
            let setup = BogovskiiSetup::new(perforated(e, alpha)).unwrap();
            for seed in 0..3 {
                let r = MeanZeroField::random(setup.mesh.fluid.clone(), 100 + seed).unwrap();
                let b = bogovskii_perforated(&setup, &r).unwrap();
                res = res.max(bogovskii_residual(&setup.mesh, &b.velocity, &r));
                let z = zero_extend(&setup.mesh, &r).unwrap();
                for p in [1.5, 2.0, 4.0] {
                    let p = LebesgueExponent::new(p).unwrap();
                    gap = gap.max((z.lp_norm(p).unwrap() - r.lp_norm(p).unwrap()).abs());
                }
                count += 1;
            }
            let fm = MeanZeroField::from_field(setup.mesh.fluid.clone(), &f).unwrap();
            let b = bogovskii_perforated(&setup, &fm).unwrap();
            consts.push(bogovskii_constant(&setup.mesh, &b.velocity, &fm, two).unwrap());
        }
        bands.push((alpha, max_over_min(&consts), consts));
    }
    let mut out = vec![
        line("9", res <= 1e-8, format!("max divergence residual {res:.2e} over {count} random mean-zero f (<= 1e-8)")),
        line("9", gap == 0.0, format!("zero-extension norm gap {gap:e} (exact)")),
    ];
    for (alpha, b, c) in bands {
        out.push(line("9", b <= 1.5, format!("alpha {alpha}: constants {c:.3?}, band {b:.3} (<= 1.5)")));
    }
    out
}

const CONFIGS: [&str; 9] = ["mesh", "solve", "uniform", "blowup", "dual-blowup", "rescaling", "enlarging", "restrict", "bogovskii"];

#[test]
fn acceptance() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let runs: BTreeMap<&str, Run> = CONFIGS.iter().map(|n| (*n, lab(first.path(), n, "1"))).collect();

    println!();
    let mut lines = Vec::new();
    let (l1, mut slack) = criterion_1();
    lines.push(l1);
    slack.extend(energy_slack(&runs["uniform"]));
    let worst = slack.iter().cloned().fold(f64::MAX, f64::min);
    lines.push(line(
        "2",
        !slack.is_empty() && worst >= 0.0,
        format!("min of ||G||_2 + 1e-9 - ||grad v||_2 is {worst:.3e} over {} zero-trace div-form solves", slack.len()),
    ));
    lines.push(criterion_3(&runs["uniform"]));
    lines.push(criterion_4(&runs["blowup"]));
    lines.push(criterion_5(&runs["dual-blowup"]));
    lines.push(criterion_6(&runs["rescaling"]));
    lines.push(criterion_7(&runs["enlarging"]));
    lines.extend(criterion_8());
    lines.extend(criterion_9());

    let mut differing = Vec::new();
    for n in CONFIGS {
        let again = lab(second.path(), n, "4");
        let a = &runs[n];
        let ok = a.ok && again.ok && !a.files.is_empty() && a.files == again.files;
        if !ok {
            differing.push(n);
        }
    }
    lines.push(line(
        "10",
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} configs rerun to byte-identical outputs with LAB_THREADS 1 and 4", CONFIGS.len())
        } else {
            format!("outputs differ or runs failed for {differing:?}")
        },
    ));

    let failed: Vec<String> = lines.iter().filter(|l| !l.pass).map(|l| format!("{}: {}", l.id, l.text)).collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}
