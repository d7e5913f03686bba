use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(dir: &Path, args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lab"));
    c.current_dir(dir).args(args);
    match threads {
        Some(t) => c.env("LAB_THREADS", t),
        None => c.env_remove("LAB_THREADS"),
    };
    c.output().expect("lab runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const UNIFORM: &str = r#"
schema = 1
[experiment]
kind = "sweep"
sweep = "uniform"
[mesh]
n_hole = 16
h_far = 0.5
[sweep]
epsilons = [0.5, 0.25, 0.125]
exponents = [2.0, 4.0]
[thresholds]
band = 1.2
[output]
dir = "OUT"
"#;

fn uniform(dir: &Path, out: &str) -> String {
    write(dir, &format!("{out}.toml"), &UNIFORM.replace("OUT", out))
}

#[test]
fn version_prints_schema() {
    let t = tempfile::tempdir().unwrap();
    let o = lab(t.path(), &["--version"], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("config schema 1"));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let t = tempfile::tempdir().unwrap();
    let a = uniform(t.path(), "a");
    let b = uniform(t.path(), "b");
    assert_eq!(lab(t.path(), &["sweep", "--config", &a], Some("1")).status.code(), Some(0));
    assert_eq!(lab(t.path(), &["sweep", "--config", &b], Some("3")).status.code(), Some(0));
    for f in ["uniform.csv", "uniform.json", "uniform.svg"] {
        let x = fs::read(t.path().join("a").join(f)).unwrap();
        let y = fs::read(t.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let first = fs::read(t.path().join("a/uniform.csv")).unwrap();
    assert_eq!(lab(t.path(), &["sweep", "--config", &a], None).status.code(), Some(0));
    assert_eq!(fs::read(t.path().join("a/uniform.csv")).unwrap(), first);
}

#[test]
fn csv_schema_and_timings() {
    let t = tempfile::tempdir().unwrap();
    let a = uniform(t.path(), "plain");
    lab(t.path(), &["sweep", "--config", &a], None);
    let csv = fs::read_to_string(t.path().join("plain/uniform.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "epsilon,p,grad_lp,pressure_lp,source_lp,ratio,dofs,seconds");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.ends_with(',')));

    let b = uniform(t.path(), "timed");
    lab(t.path(), &["sweep", "--config", &b, "--timings"], None);
    let csv = fs::read_to_string(t.path().join("timed/uniform.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|r| !r.ends_with(',')));
}

#[test]
fn verdict_json_carries_anchor_and_thresholds() {
    let t = tempfile::tempdir().unwrap();
    let a = uniform(t.path(), "v");
    lab(t.path(), &["sweep", "--config", &a], None);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("v/uniform.json")).unwrap()).unwrap();
    let verdicts = json["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 2);
    assert_eq!(verdicts[0]["anchor"], "Theorem 1.3");
    assert_eq!(verdicts[0]["status"], "pass");
    assert_eq!(verdicts[0]["thresholds"]["band"], 1.2);
    // p = 4 is exploratory in two dimensions
    assert_eq!(verdicts[1]["status"], "inconclusive");
}

#[test]
fn failed_verdict_exits_one() {
    let t = tempfile::tempdir().unwrap();
    let text = UNIFORM.replace("OUT", "f").replace("band = 1.2", "band = 1.0");
    let a = write(t.path(), "f.toml", &text);
    let o = lab(t.path(), &["sweep", "--config", &a], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("fail"));
}

#[test]
fn configuration_errors_exit_two() {
    let t = tempfile::tempdir().unwrap();
    let bad = UNIFORM.replace("OUT", "x").replace("[0.5, 0.25, 0.125]", "[0.125, 0.25]").replace("[2.0, 4.0]", "[1.0]");
    let a = write(t.path(), "bad.toml", &bad);
    let o = lab(t.path(), &["sweep", "--config", &a], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("strictly decreasing") && err.contains("1 < p"), "{err}");

    let text = format!("{}\nspeed = 3\n", UNIFORM.replace("OUT", "x"));
    let line = text.lines().position(|l| l.starts_with("speed")).unwrap() + 1;
    let unknown = write(t.path(), "unknown.toml", &text);
    let o = lab(t.path(), &["sweep", "--config", &unknown], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("line {line}")) && err.contains("speed"), "{err}");

    let a = uniform(t.path(), "k");
    assert_eq!(lab(t.path(), &["mesh", "--config", &a], None).status.code(), Some(2));
    assert_eq!(lab(t.path(), &["sweep", "--config", &a], Some("0")).status.code(), Some(2));
    assert_eq!(lab(t.path(), &["sweep", "--config", "missing.toml"], None).status.code(), Some(2));
}

const PERFORATED: &str = r#"
schema = 1
[experiment]
kind = "KIND"
[perforated]
epsilons = [0.5, 0.25]
alpha = 2.0
n_hole = 16
[thresholds]
tolerance = 1e-8
band = 1.5
[output]
dir = "p"
"#;

#[test]
fn restrict_verifies_and_writes_field() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "r.toml", &PERFORATED.replace("KIND", "restrict"));
    let field = write(t.path(), "u.toml", "velocity = [\"sin(pi*x)*sin(pi*y)\", \"x*(1-x)*y*(1-y)\"]\n");
    for check in ["extension", "divfree", "norm"] {
        let o = lab(t.path(), &["restrict", "--config", &cfg, "--field", &field, "--out", "r.txt", "--verify", check], None);
        assert_eq!(o.status.code(), Some(0), "{check}: {}", String::from_utf8_lossy(&o.stderr));
        let json = fs::read_to_string(t.path().join("p/restrict.json")).unwrap();
        let expect = if check == "norm" { "\"extrapolated\"" } else { "\"pass\"" };
        assert!(json.contains(expect), "{json}");
    }
    let dump = fs::read_to_string(t.path().join("r.txt")).unwrap();
    assert!(dump.starts_with("velocity v1 ") && dump.contains("\nmesh "));
}

#[test]
fn bogovskii_verifies() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "b.toml", &PERFORATED.replace("KIND", "bogovskii"));
    let rhs = write(t.path(), "f.toml", "random_seed = 5\n");
    let o = lab(t.path(), &["bogovskii", "--config", &cfg, "--rhs", &rhs, "--verify"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("p/bogovskii.json")).unwrap()).unwrap();
    assert_eq!(json["verdicts"][0]["status"], "pass");
    assert_eq!(json["verdicts"][1]["status"], "pass");
    assert_eq!(json["verdicts"][2]["status"], "extrapolated");

    let both = write(t.path(), "g.toml", "random_seed = 5\nexpression = \"x\"\n");
    assert_eq!(lab(t.path(), &["bogovskii", "--config", &cfg, "--rhs", &both], None).status.code(), Some(2));
}
