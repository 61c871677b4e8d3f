use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::process::Command;

use riccomp_cli::config::parse_config;
use riccomp_cli::presets;
use riccomp_cli::run::{exit_code, run_all, RunReport, Status};

fn run_shipped(name: &str, jobs: usize) -> (tempfile::TempDir, Vec<RunReport>) {
    let dir = tempfile::tempdir().unwrap();
    let s = parse_config(presets::shipped(name).unwrap()).unwrap();
    let reports = run_all(&s, dir.path(), jobs).unwrap();
    (dir, reports)
}

fn read_dir(p: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(p).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())).collect()
}

fn assert_all_pass(reports: &[RunReport]) {
    for r in reports {
        assert_eq!(r.status, Status::Pass, "{}: {:?}", r.id, r.cause);
    }
}

#[test]
fn table_rows_all_pass() {
    let (dir, reports) = run_shipped("table1_all", 3);
    assert_eq!(reports.len(), 6);
    assert_all_pass(&reports);
    let ids: Vec<&str> = reports.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["table1/row1", "table1/row2", "table1/row3", "table1/row4", "table1/row5", "table1/row6"]);
    let csv = fs::read_to_string(dir.path().join("table1__row3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,s11,s12,s21,s22"));
    // 17 significant digits in every field.
    for field in lines.next().unwrap().split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18, "{field}");
    }
}

#[test]
fn calabi_step_reports_beta_and_slope() {
    let (dir, reports) = run_shipped("calabi_step", 1);
    assert_all_pass(&reports);
    let r = &reports[0];
    assert!((r.metric("beta").unwrap() - (0.8 + FRAC_PI_2)).abs() < 1e-6);
    assert!((r.metric("dy_beta").unwrap() + 1.0).abs() < 1e-6);
    let metrics = fs::read_to_string(dir.path().join("calabi_step.metrics.csv")).unwrap();
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"beta") && header.contains(&"dy_beta"), "{header:?}");
    for plot in ["y", "dy", "energy"] {
        let text = fs::read_to_string(dir.path().join(format!("calabi_step.{plot}.dat"))).unwrap();
        assert!(text.lines().skip(1).all(|l| l.split_whitespace().count() == 2));
    }
}

#[test]
fn counterexample_configs_behave() {
    let (_d, r) = run_shipped("paper_counterexample_1", 1);
    assert_all_pass(&r);
    assert!((r[0].metric("t_star").unwrap() - FRAC_PI_2).abs() < 1e-6);
    for name in ["paper_counterexample_flat", "paper_counterexample_mirror", "paper_counterexample_det"] {
        let (_d, r) = run_shipped(name, 2);
        assert_all_pass(&r);
    }
}

#[test]
fn flaherty_check_reports_both_bounds() {
    let (_d, r) = run_shipped("flaherty_check", 2);
    assert_all_pass(&r);
    let normal = r.iter().find(|r| r.id == "flaherty_normal").unwrap();
    // F = P + t P-perp on a normal vector: exactly r^2 <X, X>.
    assert!((normal.metric("lhs").unwrap() - normal.metric("rhs_r2").unwrap()).abs() < 1e-8);
    assert!(normal.metric("rhs_inv_r2").is_some());
}

#[test]
fn remaining_shipped_configs_pass() {
    for name in ["gauss_bonnet_bumps", "curvature_bounds"] {
        let (_d, r) = run_shipped(name, 4);
        assert_all_pass(&r);
    }
}

const MIXED: &str = "
[scenario z_compare]
kind = compare
n = 3
index = 1
profile = steps(0.5; zero; diag(-1, 0, 0))
profile_upper = diag(-1, 1, 1)
initial = zero
initial_upper = diag(0, 0.5, 0.5)
t_end = 1
plot = min_gap

[scenario a_gb]
kind = gauss_bonnet
signature = (-,+)
seed = 9
count = 2
levels = 32, 64, 128
tolerance = 0.01

[scenario m_bound]
kind = curvature_bound
model = halfspace
bound = 1
direction = at_least
seed = 3
samples = 500

[scenario b_jacobi]
kind = jacobi
n = 2
index = 1
profile = preset:unit_step
t_end = 2
plot = det
";

#[test]
fn output_is_byte_identical_across_runs_and_job_counts() {
    let s = parse_config(MIXED).unwrap();
    let runs: Vec<_> = [1, 4, 4].iter().map(|&j| {
        let dir = tempfile::tempdir().unwrap();
        let reports = run_all(&s, dir.path(), j).unwrap();
        (dir, reports)
    }).collect();
    assert_all_pass(&runs[0].1);
    let base = read_dir(runs[0].0.path());
    assert!(base.contains_key("summary.csv") && base.contains_key("report.json"));
    assert!(base.contains_key("z_compare.lower.csv") && base.contains_key("z_compare.upper.csv"));
    for (dir, reports) in &runs[1..] {
        assert_eq!(reports, &runs[0].1);
        assert_eq!(read_dir(dir.path()), base);
    }
    let ids: Vec<&str> = runs[0].1.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a_gb", "b_jacobi", "m_bound", "z_compare"]);
    let header = String::from_utf8(base["z_compare.lower.csv"].clone()).unwrap();
    assert!(header.starts_with("t,s11,s12,s13,s21,"));
    assert!(header.lines().next().unwrap().ends_with(",min_gap"));
}

#[test]
fn failed_and_inconclusive_reports_carry_causes() {
    let text = "
[scenario unordered]
kind = compare
n = 2
profile = identity
profile_upper = zero
initial = zero
initial_upper = zero
t_end = 1

[scenario wrong_blowup]
kind = riccati
n = 1
profile = identity
initial = zero
t_end = 3
expect = blowup
t_star = 1
";
    let s = parse_config(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let r = run_all(&s, dir.path(), 2).unwrap();
    assert_eq!(r[0].status, Status::Inconclusive);
    assert_eq!(r[1].status, Status::Fail);
    assert!(r.iter().all(|r| r.cause.as_deref().is_some_and(|c| !c.is_empty())));
    assert_eq!(exit_code(&r), 1);
    assert_eq!(exit_code(&r[..1]), 0);
}

#[test]
fn io_failure_only_fails_its_scenario() {
    let s = parse_config("[scenario a]\nkind = table1\nrow = 1\n[scenario b]\nkind = table1\nrow = 4\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    // A directory where the CSV should go makes the write fail.
    fs::create_dir(dir.path().join("a.csv")).unwrap();
    let r = run_all(&s, dir.path(), 2).unwrap();
    assert_eq!(r[0].status, Status::Fail);
    assert!(r[0].cause.as_deref().unwrap().contains("writing"));
    assert_eq!(r[1].status, Status::Pass);
}

fn riccomp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riccomp"))
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let pass = riccomp().args(["run", "paper_counterexample_1", "--out"]).arg(&out).status().unwrap();
    assert_eq!(pass.code(), Some(0));

    let failing = dir.path().join("fail.cfg");
    fs::write(&failing, "[scenario f]\nkind = riccati\nn = 1\nprofile = zero\ninitial = zero\nt_end = 1\nexpect = blowup\n").unwrap();
    let st = riccomp().arg("run").arg(&failing).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[scenario f]\nkind = riccati\ncolour = blue\n").unwrap();
    let o = riccomp().arg("check").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert_eq!(riccomp().arg("run").arg(&bad).status().unwrap().code(), Some(2));
    assert_eq!(riccomp().args(["check", "no_such_config"]).status().unwrap().code(), Some(2));

    let o = riccomp().arg("list").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("flaherty_check"));
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let st = riccomp().args(["run", "calabi_step"]).env("RICCOMP_OUT", dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(dir.path().join("calabi_step.csv").exists());
    assert!(dir.path().join("summary.csv").exists());
}
