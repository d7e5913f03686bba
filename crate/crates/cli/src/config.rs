//! Experiment configuration files (TOML).

use serde::Deserialize;

use holestokes::experiments::{default_source, CenterParams, EnlargingParams, MeshParams};
use holestokes::perforated::{DEFAULT_B1, DEFAULT_DELTA};
use holestokes::{DomainSpec, Expr, HoleShape, LabError, LebesgueExponent, OuterShape, Result, TensorField};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Mesh,
    Solve,
    Sweep,
    Restrict,
    Bogovskii,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Uniform,
    Blowup,
    DualBlowup,
    Rescaling,
    Enlarging,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Uniform => "uniform",
            SweepKind::Blowup => "blowup",
            SweepKind::DualBlowup => "dual-blowup",
            SweepKind::Rescaling => "rescaling",
            SweepKind::Enlarging => "enlarging",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub kind: Kind,
    pub sweep: Option<SweepKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Domain {
    /// `square` or `disk`.
    pub outer: String,
    /// Half-side or radius of the outer shape.
    pub size: f64,
    /// `disk` or `square`.
    pub hole: String,
    pub hole_size: f64,
    pub hole_angle: f64,
    /// Hole scale for `mesh` and `solve`.
    pub epsilon: Option<f64>,
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            outer: "square".into(),
            size: 2.0,
            hole: "disk".into(),
            hole_size: 0.25,
            hole_angle: 0.0,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mesh {
    pub n_hole: usize,
    pub h_far: f64,
    /// Reference mesh of the domain without hole (blow-up certification).
    pub center_n_core: usize,
    pub center_r_core: f64,
    pub center_h_far: f64,
    /// Enlarging-domain meshes.
    pub enlarging_n_core: usize,
    pub enlarging_h_far_relative: f64,
}

impl Default for Mesh {
    fn default() -> Self {
        let m = MeshParams::default();
        let c = CenterParams::default();
        let e = EnlargingParams::default();
        Mesh {
            n_hole: m.n_hole,
            h_far: m.h_far,
            center_n_core: c.n_core,
            center_r_core: c.r_core,
            center_h_far: c.h_far,
            enlarging_n_core: e.n_core,
            enlarging_h_far_relative: e.h_far_relative,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    /// Row-major `G11, G12, G21, G22` in `x` and `y`.
    pub tensor: Option<[String; 4]>,
    /// Support radius of the enlarging-domain bump force.
    pub bump_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub epsilons: Vec<f64>,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perforated {
    /// Cell widths; each must be `1/n`.
    pub epsilons: Vec<f64>,
    pub alpha: f64,
    pub hole: String,
    pub hole_size: f64,
    pub b1: f64,
    pub delta: f64,
    pub rotation_seed: Option<u64>,
    pub n_hole: usize,
    pub h_far: f64,
    pub exponent: f64,
}

impl Default for Perforated {
    fn default() -> Self {
        Perforated {
            epsilons: vec![0.25],
            alpha: 1.0,
            hole: "disk".into(),
            hole_size: 0.25,
            b1: DEFAULT_B1,
            delta: DEFAULT_DELTA,
            rotation_seed: None,
            n_hole: 16,
            h_far: 1.0,
            exponent: 2.0,
        }
    }
}

/// Limits that turn measurements into pass/fail verdicts.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Largest max/min ratio accepted as bounded.
    pub band: Option<f64>,
    /// Smallest fitted log-log slope accepted as growth.
    pub slope: Option<f64>,
    /// Largest accepted residual or discrepancy.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: String,
    /// File stem; defaults to the experiment name.
    pub name: Option<String>,
    /// Fill the `seconds` column (breaks byte-identical reruns).
    pub timings: bool,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dir: "out".into(),
            name: None,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub experiment: Experiment,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub mesh: Mesh,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub perforated: Perforated,
    pub thresholds: Option<Thresholds>,
    #[serde(default)]
    pub output: Output,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration; every semantic problem is reported at once.
pub fn parse_config(text: &str) -> Result<Config> {
    let config: Config = toml::from_str(text).map_err(|e| LabError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(LabError::Config(problems.join("; ")));
    }
    Ok(config)
}

fn hole_shape(kind: &str, size: f64) -> Option<HoleShape> {
    match kind {
        "disk" => Some(HoleShape::disk(size)),
        "square" => Some(HoleShape::square(size)),
        _ => None,
    }
}

fn check_decreasing(name: &str, list: &[f64], out: &mut Vec<String>) {
    if list.is_empty() {
        out.push(format!("{name} is empty"));
    }
    for e in list {
        if !(e.is_finite() && *e > 0.0 && *e <= 1.0) {
            out.push(format!("{name}: {e} outside (0, 1]"));
        }
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        out.push(format!("{name} must be strictly decreasing"));
    }
}

impl Config {
    pub fn name(&self) -> String {
        if let Some(n) = &self.output.name {
            return n.clone();
        }
        match (self.experiment.kind, self.experiment.sweep) {
            (Kind::Sweep, Some(s)) => s.as_str().to_string(),
            (Kind::Mesh, _) => "mesh".into(),
            (Kind::Solve, _) => "solve".into(),
            (Kind::Restrict, _) => "restrict".into(),
            (Kind::Bogovskii, _) => "bogovskii".into(),
            (Kind::Sweep, None) => "sweep".into(),
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema != SCHEMA_VERSION {
            out.push(format!("schema {} is not supported (expected {SCHEMA_VERSION})", self.schema));
        }
        let kind = self.experiment.kind;
        match (kind, self.experiment.sweep) {
            (Kind::Sweep, None) => out.push("experiment.sweep is required for kind = \"sweep\"".into()),
            (Kind::Sweep, _) | (_, None) => {}
            (_, Some(_)) => out.push("experiment.sweep is only allowed for kind = \"sweep\"".into()),
        }

        let d = &self.domain;
        if d.outer != "square" && d.outer != "disk" {
            out.push(format!("domain.outer must be \"square\" or \"disk\", got {:?}", d.outer));
        }
        if !(d.size.is_finite() && d.size >= 1.0) {
            out.push(format!("domain.size {} must be at least 1 (the unit ball lies inside)", d.size));
        }
        if hole_shape(&d.hole, d.hole_size).is_none() {
            out.push(format!("domain.hole must be \"disk\" or \"square\", got {:?}", d.hole));
        } else if let Err(e) = hole_shape(&d.hole, d.hole_size).unwrap().validate() {
            out.push(format!("domain hole: {e}"));
        }
        if matches!(kind, Kind::Mesh | Kind::Solve) {
            match d.epsilon {
                None => out.push("domain.epsilon is required for mesh and solve".into()),
                Some(e) if !(e > 0.0 && e < 1.0) => out.push(format!("domain.epsilon {e} outside (0, 1)")),
                _ => {}
            }
        }

        let m = &self.mesh;
        if m.n_hole < 16 {
            out.push(format!("mesh.n_hole {} below 16", m.n_hole));
        }
        if !(m.h_far > 0.0) {
            out.push(format!("mesh.h_far {} must be positive", m.h_far));
        }

        if let Some(t) = &self.source.tensor {
            for (i, c) in t.iter().enumerate() {
                if let Err(e) = Expr::parse(c) {
                    out.push(format!("source.tensor[{i}]: {e}"));
                }
            }
        }

        let uses_sweep = kind == Kind::Sweep;
        if uses_sweep || kind == Kind::Solve {
            if self.sweep.exponents.is_empty() {
                out.push("sweep.exponents is empty".into());
            }
            for p in &self.sweep.exponents {
                if LebesgueExponent::new(*p).is_err() {
                    out.push(format!("exponent {p} must satisfy 1 < p < inf"));
                }
            }
        }
        if uses_sweep {
            check_decreasing("sweep.epsilons", &self.sweep.epsilons, &mut out);
        }
        match self.experiment.sweep {
            Some(SweepKind::Blowup) => {
                for p in self.sweep.exponents.iter().filter(|p| **p <= 2.0) {
                    out.push(format!("blowup sweep needs p > 2, got {p}"));
                }
            }
            Some(SweepKind::DualBlowup) => {
                for p in self.sweep.exponents.iter().filter(|p| **p >= 2.0) {
                    out.push(format!("dual-blowup sweep needs p < 2, got {p}"));
                }
            }
            Some(SweepKind::Enlarging) => match self.source.bump_radius {
                Some(r) if !(r > 0.0 && r <= 1.0) => out.push(format!("source.bump_radius {r} must lie in (0, 1]")),
                _ => {}
            },
            _ => {}
        }

        if matches!(kind, Kind::Restrict | Kind::Bogovskii) {
            let pf = &self.perforated;
            check_decreasing("perforated.epsilons", &pf.epsilons, &mut out);
            for e in &pf.epsilons {
                let n = (1.0 / e).round();
                if *e > 0.0 && (n * e - 1.0).abs() > 1e-12 {
                    out.push(format!("perforated.epsilons: {e} is not 1/n"));
                }
            }
            if !(pf.alpha >= 1.0 && pf.alpha.is_finite()) {
                out.push(format!("perforated.alpha {} must be at least 1", pf.alpha));
            }
            if hole_shape(&pf.hole, pf.hole_size).is_none() {
                out.push(format!("perforated.hole must be \"disk\" or \"square\", got {:?}", pf.hole));
            }
            if !(pf.b1 > 0.0 && pf.b1 < 0.5) {
                out.push(format!("perforated.b1 {} outside (0, 1/2)", pf.b1));
            }
            if !(pf.delta >= 0.0 && pf.delta < 0.5) {
                out.push(format!("perforated.delta {} outside [0, 1/2)", pf.delta));
            }
            if pf.n_hole < 8 {
                out.push(format!("perforated.n_hole {} below 8", pf.n_hole));
            }
            if !(pf.h_far > 0.0) {
                out.push(format!("perforated.h_far {} must be positive", pf.h_far));
            }
            if !(pf.exponent > 1.0 && pf.exponent <= 2.0) {
                out.push(format!("perforated.exponent {} outside (1, 2]", pf.exponent));
            }
        }

        if let Some(t) = &self.thresholds {
            for (name, v) in [("band", t.band), ("slope", t.slope), ("tolerance", t.tolerance)] {
                if let Some(v) = v {
                    if !(v.is_finite() && v >= 0.0) {
                        out.push(format!("thresholds.{name} {v} must be finite and nonnegative"));
                    }
                }
            }
        }
        if self.output.dir.is_empty() {
            out.push("output.dir is empty".into());
        }
        out
    }

    pub fn outer(&self) -> OuterShape {
        if self.domain.outer == "disk" {
            OuterShape::Disk { radius: self.domain.size }
        } else {
            OuterShape::Square {
                half_side: self.domain.size,
            }
        }
    }

    pub fn domain_spec(&self, epsilon: f64) -> DomainSpec {
        let hole = hole_shape(&self.domain.hole, self.domain.hole_size)
            .expect("validated")
            .rotated(self.domain.hole_angle);
        DomainSpec::new(self.outer(), hole, epsilon)
    }

    pub fn perforated_hole(&self) -> HoleShape {
        hole_shape(&self.perforated.hole, self.perforated.hole_size).expect("validated")
    }

    pub fn source(&self) -> Result<TensorField> {
        match &self.source.tensor {
            Some(t) => TensorField::parse([&t[0], &t[1], &t[2], &t[3]]),
            None => Ok(default_source()),
        }
    }

    pub fn mesh_params(&self) -> MeshParams {
        MeshParams {
            n_hole: self.mesh.n_hole,
            h_far: self.mesh.h_far,
        }
    }

    pub fn center_params(&self) -> CenterParams {
        CenterParams {
            h_far: self.mesh.center_h_far,
            n_core: self.mesh.center_n_core,
            r_core: self.mesh.center_r_core,
        }
    }

    pub fn enlarging_params(&self) -> EnlargingParams {
        EnlargingParams {
            n_core: self.mesh.enlarging_n_core,
            h_far_relative: self.mesh.enlarging_h_far_relative,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = 1
[experiment]
kind = "sweep"
sweep = "uniform"
[sweep]
epsilons = [0.5, 0.25]
exponents = [2.0]
"#;

    #[test]
    fn minimal_uniform_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.experiment.sweep, Some(SweepKind::Uniform));
        assert_eq!(c.name(), "uniform");
        assert!(c.thresholds.is_none());
    }

    #[test]
    fn increasing_epsilons_rejected() {
        let text = MINIMAL.replace("[0.5, 0.25]", "[0.25, 0.5]");
        match parse_config(&text) {
            Err(LabError::Config(m)) => assert!(m.contains("strictly decreasing")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exponent_one_rejected() {
        let text = MINIMAL.replace("[2.0]", "[1.0]");
        assert!(matches!(parse_config(&text), Err(LabError::Config(m)) if m.contains("1 < p")));
    }

    #[test]
    fn problems_are_listed_together() {
        let text = MINIMAL.replace("[2.0]", "[1.0]").replace("[0.5, 0.25]", "[0.25, 0.5]");
        let Err(LabError::Config(m)) = parse_config(&text) else { panic!() };
        assert!(m.contains("1 < p") && m.contains("decreasing"));
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = format!("{MINIMAL}colour = 3\n");
        match parse_config(&text) {
            Err(LabError::Parse { line, message }) => {
                let expected = text.lines().position(|l| l.starts_with("colour")).unwrap() + 1;
                assert_eq!(line, expected);
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_expression_rejected() {
        let text = format!("{MINIMAL}[source]\ntensor = [\"0\", \"y +\", \"0\", \"0\"]\n");
        assert!(matches!(parse_config(&text), Err(LabError::Config(m)) if m.contains("tensor[1]")));
    }
}
