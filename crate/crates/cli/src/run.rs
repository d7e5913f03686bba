//! Runs a validated configuration and writes its artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{Map, Value};

use holestokes::bogovskii::{
    bogovskii_constant, bogovskii_perforated, bogovskii_residual, zero_extend, BogovskiiSetup, MeanZeroField,
};
use holestokes::experiments::{
    bump_force, rescaling_consistency, run_blowup_sweep, run_dual_blowup_sweep, run_enlarging_domain_sweep,
    run_uniform_sweep, Sweep,
};
use holestokes::fem::interpolate_p2;
use holestokes::meshgen::mesh_single_hole;
use holestokes::norms::{lp_norm, norm_report, NormField};
use holestokes::perforated::{build_perforated_with, PerforatedParams};
use holestokes::restriction::{
    band, divergence_free_sample, divergence_preservation, extension_identity, measure_restriction_constant, restrict,
    zero_trace_sample, PerforatedMesh,
};
use holestokes::{
    Dirichlet, DivData, LabError, LebesgueExponent, Result, ScalarField, Source, StokesSolver, TriMesh, VectorField,
};

use crate::config::{Config, Kind, SweepKind, SCHEMA_VERSION};
use crate::report::{loglog_svg, num, nums, sweep_csv, table_csv, Outputs, Report, Series, Status, Verdict};

/// Which `--verify` check to run for `restrict`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictCheck {
    Extension,
    DivFree,
    Norm,
}

/// Paths given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub field: Option<PathBuf>,
    pub rhs: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub restrict_check: Option<RestrictCheck>,
    pub verify: bool,
    pub timings: bool,
}

pub struct Outcome {
    pub report: Report,
    pub written: Vec<PathBuf>,
    /// Errors that did not stop the run but must fail it.
    pub execution_errors: Vec<String>,
}

pub fn run(config: &Config, inputs: &Inputs) -> Result<Outcome> {
    let mut out = Outputs::new(Path::new(&config.output.dir), &config.name())?;
    let timings = config.output.timings || inputs.timings;
    let mut errors = Vec::new();
    let (verdicts, details) = match config.experiment.kind {
        Kind::Mesh => run_mesh(config, &mut out)?,
        Kind::Solve => run_solve(config, &mut out, timings)?,
        Kind::Sweep => run_sweep(config, &mut out, timings, &mut errors)?,
        Kind::Restrict => run_restrict(config, inputs, &mut out)?,
        Kind::Bogovskii => run_bogovskii(config, inputs, &mut out)?,
    };
    let report = Report {
        schema: SCHEMA_VERSION,
        experiment: config.name(),
        verdicts,
        failures: errors.clone(),
        details,
    };
    out.report(&report)?;
    Ok(Outcome {
        report,
        written: out.written,
        execution_errors: errors,
    })
}

type Produced = (Vec<Verdict>, Map<String, Value>);

fn run_mesh(config: &Config, out: &mut Outputs) -> Result<Produced> {
    let spec = config.domain_spec(config.domain.epsilon.expect("validated"));
    let mesh = mesh_single_hole(&spec, config.mesh.h_far, config.mesh.n_hole)?;
    out.write(".mesh", &mesh.to_text())?;
    let area = mesh.total_area();
    let expected = spec.fluid_area(config.mesh.n_hole);
    let min_angle = mesh.min_angle_deg();
    let mut details = Map::new();
    details.insert("vertices".into(), mesh.n_vertices().into());
    details.insert("triangles".into(), mesh.n_triangles().into());
    details.insert("checksum".into(), mesh.checksum().into());
    let tol = config.thresholds.as_ref().and_then(|t| t.tolerance);
    let mut v = Verdict::new("mesh resolves the domain with bounded angles", "Eq. (1.1)")
        .measure("area", num(area))
        .measure("expected_area", num(expected))
        .measure("min_angle_deg", num(min_angle))
        .threshold("min_angle_deg", 20.0);
    let rel = (area - expected).abs() / expected;
    v = v.measure("relative_area_error", num(rel));
    if let Some(t) = tol {
        v = v.threshold("tolerance", t);
    }
    let v = v.decide(tol.map(|t| rel <= t && min_angle >= 20.0));
    Ok((vec![v], details))
}

fn exponents(config: &Config) -> Result<Vec<LebesgueExponent>> {
    config.sweep.exponents.iter().map(|p| LebesgueExponent::new(*p)).collect()
}

fn run_solve(config: &Config, out: &mut Outputs, timings: bool) -> Result<Produced> {
    let eps = config.domain.epsilon.expect("validated");
    let spec = config.domain_spec(eps);
    let g = config.source()?;
    let start = std::time::Instant::now();
    let mesh = Arc::new(mesh_single_hole(&spec, config.mesh.h_far, config.mesh.n_hole)?);
    let solver = StokesSolver::new(mesh.clone())?;
    let solution = solver.solve(&Source::div_form(g.clone()), &DivData::Zero, &Dirichlet::Zero)?;
    let seconds = start.elapsed().as_secs_f64();
    out.write(".solution", &solution.to_text())?;
    let mut records = Vec::new();
    for p in exponents(config)? {
        let report = norm_report(&solution, &g, p)?;
        let ratio = if report.source_lp > 0.0 { report.ratio()? } else { 0.0 };
        records.push(holestokes::experiments::SweepRecord {
            epsilon: eps,
            p: p.value(),
            report,
            ratio,
            dofs: solver.n_unknowns(),
            seconds,
            dual: None,
        });
    }
    out.write(".csv", &sweep_csv(&records, timings)?)?;
    let two = LebesgueExponent::new(2.0)?;
    let grad = lp_norm(NormField::VelocityGradient(&solution.velocity), &mesh, two, 6)?.value;
    let gn = lp_norm(NormField::Tensor(&g), &mesh, two, 6)?.value;
    let v = Verdict::new("energy estimate with constant one", "Remark 1.2(i)")
        .measure("grad_l2", num(grad))
        .measure("source_l2", num(gn))
        .threshold("slack", 1e-9)
        .decide(config.thresholds.as_ref().map(|_| grad <= gn + 1e-9));
    let mut details = Map::new();
    details.insert("epsilon".into(), num(eps));
    details.insert("dofs".into(), solver.n_unknowns().into());
    details.insert("mesh_checksum".into(), mesh.checksum().into());
    Ok((vec![v], details))
}

fn sweep_series(sweep: &Sweep, p: f64, value: impl Fn(&holestokes::experiments::SweepRecord) -> f64) -> Series {
    Series {
        label: format!("p = {p}"),
        points: sweep.records.iter().map(|r| (1.0 / r.epsilon, value(r))).collect(),
        slope: sweep.fit.map(|f| f.slope),
    }
}

fn fit_measures(mut v: Verdict, sweep: &Sweep, values: &[f64]) -> Verdict {
    let eps: Vec<f64> = sweep.records.iter().map(|r| r.epsilon).collect();
    v = v.measure("epsilons", nums(&eps)).measure("values", nums(values));
    if let Some(f) = sweep.fit {
        v = v
            .measure("band", num(f.band))
            .measure("slope", num(f.slope))
            .measure("fit_residual", num(f.residual))
            .measure("strictly_increasing", f.strictly_increasing)
            .measure("trend", f.verdict.as_str());
    }
    v
}

fn record_failures(sweep: &Sweep, p: f64, errors: &mut Vec<String>) {
    for (eps, e) in &sweep.failures {
        errors.push(format!("p = {p}, epsilon = {eps}: {e}"));
    }
}

fn run_sweep(config: &Config, out: &mut Outputs, timings: bool, errors: &mut Vec<String>) -> Result<Produced> {
    let kind = config.experiment.sweep.expect("validated");
    if kind == SweepKind::Rescaling {
        return run_rescaling(config, out);
    }
    let eps = &config.sweep.epsilons;
    let thresholds = config.thresholds.clone().unwrap_or_default();
    let mesh = config.mesh_params();
    let spec = config.domain_spec(eps[0]);
    let g = config.source()?;
    let mut records = Vec::new();
    let mut series = Vec::new();
    let mut verdicts = Vec::new();
    let mut details = Map::new();
    for p in exponents(config)? {
        let pv = p.value();
        let (sweep, v) = match kind {
            SweepKind::Uniform => {
                let sweep = run_uniform_sweep(&spec, &g, p, eps, &mesh)?;
                let values: Vec<f64> = sweep.records.iter().map(|r| r.ratio).collect();
                let mut v = fit_measures(Verdict::new("uniform estimate", "Theorem 1.3"), &sweep, &values);
                if pv == 2.0 {
                    let worst = sweep
                        .records
                        .iter()
                        .map(|r| r.report.grad_velocity_lp / r.report.source_lp)
                        .fold(0.0, f64::max);
                    v = v.measure("max_velocity_ratio", num(worst));
                    if let Some(b) = thresholds.band {
                        v = v.threshold("band", b);
                    }
                    let band_ok = sweep.fit.map(|f| f.band);
                    v = v.decide(thresholds.band.map(|b| band_ok.is_some_and(|x| x <= b)));
                } else {
                    v = v
                        .note("exploratory: the two-dimensional statement covers p = 2 only")
                        .with_status(Status::Inconclusive);
                }
                (sweep, v)
            }
            SweepKind::Blowup => {
                let sweep = run_blowup_sweep(&spec, &g, p, eps, &mesh, &config.center_params())?;
                let values: Vec<f64> = sweep.records.iter().map(|r| r.ratio).collect();
                let mut v = fit_measures(Verdict::new("blow-up for p > d", "Theorem 1.5"), &sweep, &values);
                if let Some(c) = sweep.center {
                    v = v.measure("center_velocity", num(c.value)).measure("center_error_bar", num(c.error_bar));
                }
                if let Some(s) = thresholds.slope {
                    v = v.threshold("slope", s);
                }
                let ok = thresholds
                    .slope
                    .map(|s| sweep.fit.is_some_and(|f| f.strictly_increasing && f.slope > s));
                (sweep.clone(), v.decide(ok))
            }
            SweepKind::DualBlowup => {
                let sweep = run_dual_blowup_sweep(&spec, &g, p, eps, &mesh, &config.center_params())?;
                let values: Vec<f64> = sweep.records.iter().map(|r| r.report.grad_velocity_lp).collect();
                let mut v = fit_measures(Verdict::new("dual blow-up for p < d'", "Theorem 1.5, second bullet"), &sweep, &values);
                let duals: Vec<_> = sweep.records.iter().filter_map(|r| r.dual).collect();
                let norm_err = duals.iter().map(|d| (d.h_norm - 1.0).abs()).fold(0.0, f64::max);
                let pair_err = duals
                    .iter()
                    .map(|d| (d.pairing - d.base_grad).abs() / d.base_grad)
                    .fold(0.0, f64::max);
                v = v.measure("normalization_error", num(norm_err)).measure("pairing_error", num(pair_err));
                if let Some(c) = sweep.center {
                    v = v.measure("center_velocity", num(c.value)).measure("center_error_bar", num(c.error_bar));
                }
                if let Some(s) = thresholds.slope {
                    v = v.threshold("slope", s);
                }
                if let Some(t) = thresholds.tolerance {
                    v = v.threshold("tolerance", t);
                }
                let ok = match (thresholds.slope, thresholds.tolerance) {
                    (None, None) => None,
                    (s, t) => Some(
                        s.map_or(true, |s| sweep.fit.is_some_and(|f| f.strictly_increasing && f.slope > s))
                            && t.map_or(true, |t| norm_err <= t && pair_err <= t),
                    ),
                };
                (sweep.clone(), v.decide(ok))
            }
            SweepKind::Enlarging => {
                let r = config.source.bump_radius.unwrap_or(1.0);
                let sweep = run_enlarging_domain_sweep(&config.outer(), &bump_force(r), r, p, eps, &config.enlarging_params())?;
                let values: Vec<f64> = sweep.records.iter().map(|r| r.ratio).collect();
                let mut v = fit_measures(Verdict::new("enlarging-domain uniformity", "Lemma 3.2"), &sweep, &values)
                    .note("two-dimensional run justified by the energy method");
                if let Some(b) = thresholds.band {
                    v = v.threshold("band", b);
                }
                let ok = thresholds.band.map(|b| sweep.fit.is_some_and(|f| f.band <= b));
                (sweep, v.decide(ok))
            }
            SweepKind::Rescaling => unreachable!(),
        };
        record_failures(&sweep, pv, errors);
        let plotted = if kind == SweepKind::DualBlowup {
            sweep_series(&sweep, pv, |r| r.report.grad_velocity_lp)
        } else {
            sweep_series(&sweep, pv, |r| r.ratio)
        };
        series.push(plotted);
        if let Some(c) = sweep.center {
            details.insert("center_velocity".into(), nums(&c.velocity));
        }
        records.extend(sweep.records);
        verdicts.push(v);
    }
    out.write(".csv", &sweep_csv(&records, timings)?)?;
    let y = if kind == SweepKind::DualBlowup { "gradient norm of the dual solve" } else { "estimate ratio" };
    out.write(".svg", &loglog_svg(&format!("{} sweep", kind.as_str()), y, &series))?;
    Ok((verdicts, details))
}

fn run_rescaling(config: &Config, out: &mut Outputs) -> Result<Produced> {
    let g = config.source()?;
    let mesh = config.mesh_params();
    let spec = config.domain_spec(config.sweep.epsilons[0]);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for p in exponents(config)? {
        for &e in &config.sweep.epsilons {
            let c = rescaling_consistency(&spec, &g, p, e, &mesh)?;
            worst = worst.max(c.discrepancy).max(c.norm_discrepancy);
            rows.push(vec![
                c.epsilon.to_string(),
                c.p.to_string(),
                c.ratio.to_string(),
                c.ratio_rescaled.to_string(),
                c.discrepancy.to_string(),
                c.norm_discrepancy.to_string(),
            ]);
        }
    }
    out.write(
        ".csv",
        &table_csv(&["epsilon", "p", "ratio", "ratio_rescaled", "discrepancy", "norm_discrepancy"], &rows)?,
    )?;
    let tol = config.thresholds.as_ref().and_then(|t| t.tolerance);
    let mut v = Verdict::new("rescaled problem is equivalent", "Section 3.1").measure("max_discrepancy", num(worst));
    if let Some(t) = tol {
        v = v.threshold("tolerance", t);
    }
    Ok((vec![v.decide(tol.map(|t| worst <= t))], Map::new()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFile {
    velocity: [String; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RhsFile {
    expression: Option<String>,
    random_seed: Option<u64>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read(path)?;
    toml::from_str(&text).map_err(|e| LabError::Parse {
        line: e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0),
        message: format!("{}: {}", path.display(), e.message()),
    })
}

fn velocity_field(path: Option<&PathBuf>) -> Result<VectorField> {
    let path = path.ok_or_else(|| LabError::Config("--field is required".into()))?;
    let f: FieldFile = parse_toml(path)?;
    VectorField::parse([&f.velocity[0], &f.velocity[1]])
}

enum Rhs {
    Expression(ScalarField),
    Random(u64),
}

fn rhs_field(path: Option<&PathBuf>) -> Result<Rhs> {
    let path = path.ok_or_else(|| LabError::Config("--rhs is required".into()))?;
    let f: RhsFile = parse_toml(path)?;
    match (f.expression, f.random_seed) {
        (Some(e), None) => Ok(Rhs::Expression(ScalarField::Expr(holestokes::Expr::parse(&e)?))),
        (None, Some(s)) => Ok(Rhs::Random(s)),
        _ => Err(LabError::Config(format!(
            "{}: give exactly one of `expression` and `random_seed`",
            path.display()
        ))),
    }
}

impl Rhs {
    fn on(&self, mesh: Arc<TriMesh>) -> Result<MeanZeroField> {
        match self {
            Rhs::Expression(f) => MeanZeroField::from_field(mesh, f),
            Rhs::Random(s) => MeanZeroField::random(mesh, *s),
        }
    }
}

/// Text dump of P2 velocity coefficients tied to a mesh checksum.
pub fn velocity_text(mesh: &TriMesh, velocity: &[f64]) -> String {
    let mut s = format!("velocity v1 {}\n", velocity.len() / 2);
    for pair in velocity.chunks(2) {
        let _ = writeln!(s, "{} {}", pair[0], pair[1]);
    }
    let _ = writeln!(s, "mesh {}", mesh.checksum());
    s
}

fn perforated_mesh(config: &Config, eps: f64) -> Result<PerforatedMesh> {
    let pf = &config.perforated;
    let pd = build_perforated_with(PerforatedParams {
        origin: [0.0, 0.0],
        side: 1.0,
        n: (1.0 / eps).round() as usize,
        alpha: pf.alpha,
        hole: config.perforated_hole(),
        b1: pf.b1,
        delta: pf.delta,
        rotation_seed: pf.rotation_seed,
    })?;
    PerforatedMesh::new(pd, pf.n_hole, pf.h_far)
}

fn write_out(inputs: &Inputs, out: &mut Outputs, text: &str) -> Result<()> {
    if let Some(path) = &inputs.out {
        std::fs::write(path, text).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        out.written.push(path.clone());
    }
    Ok(())
}

fn perforated_details(config: &Config) -> Map<String, Value> {
    let mut d = Map::new();
    d.insert("alpha".into(), num(config.perforated.alpha));
    d.insert("epsilons".into(), nums(&config.perforated.epsilons));
    d.insert("b1".into(), num(config.perforated.b1));
    d
}

fn run_restrict(config: &Config, inputs: &Inputs, out: &mut Outputs) -> Result<Produced> {
    let field = velocity_field(inputs.field.as_ref())?;
    let tol = config.thresholds.as_ref().and_then(|t| t.tolerance);
    let band_limit = config.thresholds.as_ref().and_then(|t| t.band);
    let epsilons = &config.perforated.epsilons;
    let mut details = perforated_details(config);
    let mut verdicts = Vec::new();
    let first = perforated_mesh(config, epsilons[0])?;
    let u = interpolate_p2(&first.full, &field)?;
    let restricted = restrict(&first, &u)?;
    write_out(inputs, out, &velocity_text(&first.fluid, &restricted.velocity))?;
    details.insert("compatibility".into(), num(restricted.compatibility));
    match inputs.restrict_check {
        None => {}
        Some(RestrictCheck::Extension) | Some(RestrictCheck::DivFree) => {
            let check = inputs.restrict_check.unwrap();
            let mut values = Vec::new();
            for &e in epsilons {
                let pm = if e == epsilons[0] { first.clone() } else { perforated_mesh(config, e)? };
                values.push(match check {
                    RestrictCheck::Extension => extension_identity(&pm, &zero_trace_sample(&pm, &field)?)?,
                    _ => {
                        let solver = StokesSolver::new(pm.full.clone())?;
                        divergence_preservation(&pm, &divergence_free_sample(&solver, &field)?)?
                    }
                });
            }
            let worst = values.iter().cloned().fold(0.0, f64::max);
            let (claim, anchor) = match check {
                RestrictCheck::Extension => ("restriction is the identity on fields vanishing on the holes", "Theorem 2.1, Eq. (2.2)"),
                _ => ("restriction preserves divergence-free fields", "Theorem 2.1, Eq. (2.2)"),
            };
            let mut v = Verdict::new(claim, anchor).measure("epsilons", nums(epsilons)).measure("residuals", nums(&values));
            if let Some(t) = tol {
                v = v.threshold("tolerance", t);
            }
            verdicts.push(v.decide(tol.map(|t| worst <= t)));
        }
        Some(RestrictCheck::Norm) => {
            let p = LebesgueExponent::new(config.perforated.exponent)?;
            let mut consts = Vec::new();
            let mut used = Vec::new();
            for &e in epsilons {
                let pm = if e == epsilons[0] { first.clone() } else { perforated_mesh(config, e)? };
                let u = interpolate_p2(&pm.full, &field)?;
                if let Some(c) = measure_restriction_constant(&pm, &u, p)? {
                    consts.push(c.constant);
                    used.push(e);
                }
            }
            verdicts.push(norm_verdict(
                Verdict::new("restriction bound with the extrapolated exponent", "Theorem 2.1, Eq. (2.2)"),
                &used,
                &consts,
                band_limit,
            ));
        }
    }
    Ok((verdicts, details))
}

/// Band verdict for measured operator constants; reported, never gating.
fn norm_verdict(v: Verdict, eps: &[f64], consts: &[f64], limit: Option<f64>) -> Verdict {
    let b = if consts.is_empty() { f64::NAN } else { band(consts) };
    let mut v = v
        .measure("epsilons", nums(eps))
        .measure("constants", nums(consts))
        .measure("band", num(b))
        .note("exponent extrapolated to d = 2; measured, not certified");
    if let Some(l) = limit {
        v = v.threshold("band", l).measure("within_band", b <= l);
    }
    v.with_status(Status::Extrapolated)
}

fn run_bogovskii(config: &Config, inputs: &Inputs, out: &mut Outputs) -> Result<Produced> {
    let rhs = rhs_field(inputs.rhs.as_ref())?;
    let tol = config.thresholds.as_ref().and_then(|t| t.tolerance);
    let band_limit = config.thresholds.as_ref().and_then(|t| t.band);
    let epsilons = &config.perforated.epsilons;
    let p = LebesgueExponent::new(config.perforated.exponent)?;
    let mut verdicts = Vec::new();
    let mut residuals = Vec::new();
    let mut ext_gap: f64 = 0.0;
    let mut consts = Vec::new();
    for (i, &e) in epsilons.iter().enumerate() {
        if i > 0 && !inputs.verify {
            break;
        }
        let setup = BogovskiiSetup::new(perforated_mesh(config, e)?)?;
        let f = rhs.on(setup.mesh.fluid.clone())?;
        let b = bogovskii_perforated(&setup, &f)?;
        if i == 0 {
            write_out(inputs, out, &velocity_text(&setup.mesh.fluid, &b.velocity))?;
        }
        if !inputs.verify {
            break;
        }
        residuals.push(bogovskii_residual(&setup.mesh, &b.velocity, &f));
        for k in 0..3 {
            let r = MeanZeroField::random(setup.mesh.fluid.clone(), config.seed + k)?;
            let br = bogovskii_perforated(&setup, &r)?;
            residuals.push(bogovskii_residual(&setup.mesh, &br.velocity, &r));
            let z = zero_extend(&setup.mesh, &r)?;
            for q in [p, LebesgueExponent::new(2.0)?] {
                ext_gap = ext_gap.max((z.lp_norm(q)? - r.lp_norm(q)?).abs());
            }
        }
        consts.push(bogovskii_constant(&setup.mesh, &b.velocity, &f, p)?);
    }
    if inputs.verify {
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        let mut v = Verdict::new("divergence of the perforated Bogovskii field reproduces f", "Corollary 2.3")
            .measure("max_residual", num(worst))
            .measure("residuals", nums(&residuals));
        if let Some(t) = tol {
            v = v.threshold("tolerance", t);
        }
        verdicts.push(v.decide(tol.map(|t| worst <= t)));
        verdicts.push(
            Verdict::new("zero extension preserves Lebesgue norms", "Section 5.2")
                .measure("max_norm_gap", num(ext_gap))
                .threshold("norm_gap", 0.0)
                .decide(config.thresholds.as_ref().map(|_| ext_gap == 0.0)),
        );
        verdicts.push(norm_verdict(
            Verdict::new("perforated Bogovskii bound with the extrapolated exponent", "Corollary 2.3, Eq. (2.5)"),
            epsilons,
            &consts,
            band_limit,
        ));
    }
    Ok((verdicts, perforated_details(config)))
}
