//! Scenario execution and artifact output.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use riccomp::func::ScalarFn;
use riccomp::linalg::{order_leq, psd_check, InnerSpace, Operator};
use riccomp::ode::Controls;
use riccomp::riccati::{
    compare_trajectories, integrate_jacobi, integrate_riccati, profiles_ordered, tube_expansion_check, tube_jacobi,
    CurvatureProfile, JacobiTrajectory, RiccatiTrajectory,
};
use riccomp::suites::{self, SuiteReport};
use riccomp::surface::{calabi_ode_with, calabi_rigidity_scan, frame_extension, gauss_bonnet_study, random_bumps, random_perturbation, Rect, SurfaceMetric};
use riccomp::warped::{curvature_bound_check, model_by_id, table1_model, BoundDirection, BoundSampler, CurvatureSource, RegistryModel};
use serde_json::json;

use crate::config::{Kind, OpSpec, ProfileSpec, ScalarSpec, Scenario};
use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub id: String,
    pub kind: Kind,
    pub status: Status,
    /// Always set unless the status is `Pass`.
    pub cause: Option<String>,
    pub metrics: Vec<(String, f64)>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// A numeric table destined for one CSV file.
#[derive(Debug, Clone, Default)]
struct Table {
    suffix: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Default)]
struct Outcome {
    status: Option<Status>,
    cause: Option<String>,
    metrics: Vec<(String, f64)>,
    tables: Vec<Table>,
    plots: Vec<(String, Vec<(f64, f64)>)>,
}

impl Outcome {
    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.push((name.to_string(), v));
    }

    fn verdict(&mut self, ok: bool, cause: impl FnOnce() -> String) {
        if !ok && self.status != Some(Status::Fail) {
            self.status = Some(Status::Fail);
            self.cause = Some(cause());
        }
    }

    fn inconclusive(mut self, cause: String) -> Self {
        self.status = Some(Status::Inconclusive);
        self.cause = Some(cause);
        self
    }
}

fn failed(cause: impl fmt::Display) -> Outcome {
    Outcome { status: Some(Status::Fail), cause: Some(cause.to_string()), ..Outcome::default() }
}

/// Output file stem of a scenario id; `/` is not allowed in file names.
pub fn file_stem(id: &str) -> String {
    id.replace('/', "__")
}

/// Runs every scenario on a pool of `jobs` workers and writes artifacts
/// under `out`. Reports come back sorted by id.
pub fn run_all(scenarios: &[Scenario], out: &Path, jobs: usize) -> std::io::Result<Vec<RunReport>> {
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(std::io::Error::other)?;
    let mut reports: Vec<RunReport> = pool.install(|| scenarios.par_iter().map(|sc| run_one(sc, out)).collect());
    reports.sort_by(|a, b| a.id.cmp(&b.id));
    write_summary(&reports, out)?;
    Ok(reports)
}

/// Runs one scenario and writes its files. I/O errors fail this scenario only.
pub fn run_one(sc: &Scenario, out: &Path) -> RunReport {
    let outcome = execute(sc);
    let mut report = RunReport {
        id: sc.id.clone(),
        kind: sc.kind,
        status: outcome.status.unwrap_or(Status::Pass),
        cause: outcome.cause.clone(),
        metrics: outcome.metrics.clone(),
        artifacts: Vec::new(),
    };
    if let Err(e) = write_artifacts(sc, &outcome, out, &mut report.artifacts) {
        report.status = Status::Fail;
        report.cause = Some(format!("writing artifacts: {e}"));
    }
    report
}

/// Computes a scenario without touching the file system.
fn execute(sc: &Scenario) -> Outcome {
    let r = match sc.kind {
        Kind::Riccati => riccati(sc),
        Kind::Jacobi => jacobi(sc),
        Kind::Compare => compare(sc),
        Kind::Table1 => table1(sc),
        Kind::Calabi => calabi(sc),
        Kind::GaussBonnet => gauss_bonnet(sc),
        Kind::Tube => tube(sc),
        Kind::CurvatureBound => curvature_bound(sc),
        Kind::Suite => Ok(suite(sc)),
    };
    r.unwrap_or_else(failed)
}

// ---------------------------------------------------------------------------
// Inputs

pub(crate) fn build_space(sc: &Scenario) -> Result<Arc<InnerSpace<f64>>, String> {
    let n = sc.dim().ok_or("dimension unknown")?;
    let space = match sc.op("gram") {
        Some(g) => InnerSpace::from_gram(op_matrix(g, n)),
        None => InnerSpace::standard(n, sc.int("index").unwrap_or(0) as usize),
    };
    space.map(Arc::new).map_err(|e| format!("gram: {e}"))
}

fn op_matrix(op: &OpSpec, n: usize) -> DMatrix<f64> {
    match op {
        OpSpec::Zero => DMatrix::zeros(n, n),
        OpSpec::Identity => DMatrix::identity(n, n),
        OpSpec::Diag(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        OpSpec::Dense(rows) => DMatrix::from_fn(n, n, |i, j| rows[i][j]),
    }
}

fn operator(space: &Arc<InnerSpace<f64>>, op: &OpSpec, what: &str) -> Result<Operator<f64>, String> {
    Operator::new(space.clone(), op_matrix(op, space.dim())).map_err(|e| format!("{what}: {e}"))
}

fn profile(space: &Arc<InnerSpace<f64>>, spec: &ProfileSpec, what: &str) -> Result<CurvatureProfile<f64>, String> {
    let r = match spec {
        ProfileSpec::Constant(op) => CurvatureProfile::constant(operator(space, op, what)?),
        ProfileSpec::Steps { breaks, pieces } => {
            let ops = pieces.iter().map(|p| operator(space, p, what)).collect::<Result<Vec<_>, _>>()?;
            CurvatureProfile::piecewise(breaks.clone(), ops)
        }
        ProfileSpec::Preset(name) => return presets::profile_preset(name, space).ok_or_else(|| format!("{what}: unknown preset `{name}`")),
    };
    r.map_err(|e| format!("{what}: {e}"))
}

fn scalar_fn(k: &ScalarSpec) -> ScalarFn<f64> {
    match k {
        ScalarSpec::Const(c) => ScalarFn::Const(*c),
        ScalarSpec::Step(t1) if *t1 <= 0.0 => ScalarFn::Const(1.0),
        ScalarSpec::Step(t1) => ScalarFn::step(0.0, 1.0, *t1),
        ScalarSpec::Steps { breaks, values } => ScalarFn::piecewise(breaks.clone(), values.clone()),
    }
}

fn controls(sc: &Scenario) -> Controls {
    let mut c = Controls::default();
    if let Some(a) = sc.real("atol") {
        c.atol = a;
    }
    if let Some(r) = sc.real("rtol") {
        c.rtol = r;
    }
    c
}

/// Builds every operator and profile of a spaced scenario, so that
/// non-self-adjoint literals or degenerate Gram matrices surface as config
/// errors instead of run failures.
pub(crate) fn preflight(sc: &Scenario) -> Result<(), String> {
    match sc.kind {
        Kind::Riccati | Kind::Jacobi | Kind::Compare | Kind::Tube => {
            let space = build_space(sc)?;
            for (key, v) in &sc.entries {
                match v {
                    crate::config::Value::Op(op) if key != "gram" => {
                        operator(&space, op, key)?;
                    }
                    crate::config::Value::Profile(p) => {
                        profile(&space, p, key)?;
                    }
                    _ => {}
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn grid(end: f64, samples: usize) -> Vec<f64> {
    let k = samples.max(2) - 1;
    (0..=k).map(|i| if i == k { end } else { end * i as f64 / k as f64 }).collect()
}

fn entry_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 0..n {
        for j in 0..n {
            h.push(format!("{prefix}{}{}", i + 1, j + 1));
        }
    }
    h
}

fn row_major(t: f64, m: &DMatrix<f64>) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + m.len());
    row.push(t);
    for i in 0..m.nrows() {
        row.extend(m.row(i).iter());
    }
    row
}

fn riccati_table(tr: &RiccatiTrajectory<f64>, samples: usize, suffix: &'static str) -> Table {
    let rows = grid(tr.domain_end(), samples).into_iter().filter_map(|t| tr.at(t).map(|s| row_major(t, s.matrix()))).collect();
    Table { suffix, header: entry_header("s", tr.space().dim()), rows }
}

fn jacobi_table(j: &JacobiTrajectory<f64>, samples: usize, suffix: &'static str) -> Table {
    let rows = grid(j.domain_end(), samples).into_iter().filter_map(|t| j.at(t).map(|(f, _)| row_major(t, &f))).collect();
    Table { suffix, header: entry_header("f", j.space().dim()), rows }
}

fn samples(sc: &Scenario, default: usize) -> usize {
    sc.int("samples").map_or(default, |s| s as usize)
}

// ---------------------------------------------------------------------------
// Kinds

fn riccati(sc: &Scenario) -> Result<Outcome, String> {
    let space = build_space(sc)?;
    let r = profile(&space, sc.profile("profile").ok_or("no profile")?, "profile")?;
    let s0 = operator(&space, sc.op("initial").ok_or("no initial")?, "initial")?;
    let t_end = sc.real("t_end").ok_or("no t_end")?;
    let tr = integrate_riccati(&r, &s0, t_end, &controls(sc)).map_err(|e| e.to_string())?;
    let mut o = Outcome::default();
    let table = riccati_table(&tr, samples(sc, 201), "");

    let max_norm = table.rows.iter().map(|row| row[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
    let mut residual = 0.0f64;
    for &t in grid(tr.domain_end(), 101).iter().skip(1) {
        if r.breakpoints().iter().any(|b| (b - t).abs() < 1e-9) {
            continue;
        }
        if let (Some(res), Some(s)) = (tr.residual_at(t), tr.at(t)) {
            residual = residual.max(res / (1.0 + s.norm() * s.norm()));
        }
    }
    o.metric("domain_end", tr.domain_end());
    o.metric("max_abs_entry", max_norm);
    o.metric("max_relative_residual", residual);
    let bu = tr.blow_up();
    if let Some(b) = bu {
        o.metric("t_star", b.t_star);
        o.metric("bracket_width", b.bracket_width);
    }

    let tol = sc.real("tolerance");
    match sc.text("expect") {
        Some("blowup") => match bu {
            None => o.verdict(false, || format!("expected a blow-up, integration reached t = {}", tr.domain_end())),
            Some(b) => {
                if let Some(ts) = sc.real("t_star") {
                    let err = (b.t_star - ts).abs();
                    o.metric("t_star_error", err);
                    let tol = tol.unwrap_or(1e-6);
                    o.verdict(err <= tol, || format!("blow-up at {} differs from {ts} by {err:e} > {tol:e}", b.t_star));
                }
            }
        },
        Some("complete") => o.verdict(tr.reaches(t_end), || format!("stopped at {} before t_end = {t_end}", tr.domain_end())),
        Some("zero") => {
            let tol = tol.unwrap_or(1e-9);
            o.verdict(tr.reaches(t_end) && max_norm <= tol, || format!("max |S| = {max_norm:e} exceeds {tol:e} or integration stopped early"));
        }
        _ => {}
    }

    for name in sc.texts("plot") {
        let series = table.rows.iter().map(|row| {
            let t = row[0];
            let s = tr.at(t).expect("sampled inside the domain");
            (t, if name == "trace" { s.trace() } else { s.norm() })
        });
        o.plots.push((name.clone(), series.collect()));
    }
    o.tables.push(table);
    Ok(o)
}

fn jacobi(sc: &Scenario) -> Result<Outcome, String> {
    let space = build_space(sc)?;
    let id = OpSpec::Identity;
    let f0 = operator(&space, sc.op("f0").unwrap_or(&id), "f0")?;
    let df0 = operator(&space, sc.op("f0_prime").unwrap_or(&OpSpec::Zero), "f0_prime")?;
    let t_end = sc.real("t_end").ok_or("no t_end")?;
    let c = controls(sc);
    let run = |key: &str| -> Result<JacobiTrajectory<f64>, String> {
        let r = profile(&space, sc.profile(key).expect("checked"), key)?;
        integrate_jacobi(&r, &f0, &df0, t_end, &c).map_err(|e| e.to_string())
    };
    let lower = run("profile")?;
    let n_samples = samples(sc, 201);
    let mut o = Outcome::default();
    o.metric("wronskian_drift", lower.wronskian_drift());
    let ts = grid(lower.domain_end(), n_samples);
    let det = |j: &JacobiTrajectory<f64>, t: f64| j.det_at(t).unwrap_or(f64::NAN);
    let mut det_series: Vec<(f64, f64)> = ts.iter().map(|&t| (t, det(&lower, t))).collect();
    o.tables.push(jacobi_table(&lower, n_samples, ""));

    if sc.get("profile_upper").is_some() {
        let upper = run("profile_upper")?;
        o.metric("wronskian_drift_upper", upper.wronskian_drift());
        for p in det_series.iter_mut() {
            p.1 -= det(&upper, p.0);
        }
        // Both sides start from the same F(0); skip the first percent.
        let inner: Vec<f64> = det_series.iter().filter(|(t, _)| *t >= 0.01 * t_end).map(|p| p.1).collect();
        let (lo, hi) = inner.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        o.metric("min_det_difference", lo);
        o.metric("max_det_difference", hi);
        match sc.text("expect") {
            Some("det_positive") => o.verdict(lo > 0.0, || format!("det F_lower - det F_upper reaches {lo:e}")),
            Some("det_negative") => o.verdict(hi < 0.0, || format!("det F_lower - det F_upper reaches {hi:e}")),
            _ => {}
        }
        o.tables.push(jacobi_table(&upper, n_samples, "upper"));
    }
    if sc.texts("plot").iter().any(|p| p == "det") {
        o.plots.push(("det".into(), det_series));
    }
    Ok(o)
}

fn compare(sc: &Scenario) -> Result<Outcome, String> {
    let space = build_space(sc)?;
    let r1 = profile(&space, sc.profile("profile").ok_or("no profile")?, "profile")?;
    let r2 = profile(&space, sc.profile("profile_upper").ok_or("no profile_upper")?, "profile_upper")?;
    let s1 = operator(&space, sc.op("initial").ok_or("no initial")?, "initial")?;
    let s2 = operator(&space, sc.op("initial_upper").ok_or("no initial_upper")?, "initial_upper")?;
    let t_end = sc.real("t_end").ok_or("no t_end")?;
    let c = controls(sc);
    let tr1 = integrate_riccati(&r1, &s1, t_end, &c).map_err(|e| e.to_string())?;
    let tr2 = integrate_riccati(&r2, &s2, t_end, &c).map_err(|e| e.to_string())?;
    let cmp = compare_trajectories(&tr1, &tr2).map_err(|e| e.to_string())?;

    let mut o = Outcome::default();
    o.metric("t_common", cmp.t_common);
    o.metric("worst_min_gap", cmp.worst.1);
    o.metric("worst_min_gap_t", cmp.worst.0);
    let n = space.dim();
    let mut lower = Table { suffix: "lower", header: entry_header("s", n), rows: Vec::new() };
    let mut upper = Table { suffix: "upper", header: entry_header("s", n), rows: Vec::new() };
    lower.header.push("min_gap".into());
    upper.header.push("min_gap".into());
    let mut gap_series = Vec::new();
    for t in grid(cmp.t_common, samples(sc, 201)) {
        let (Some(a), Some(b)) = (tr1.at(t), tr2.at(t)) else { continue };
        let gap = psd_check(&(&b - &a).self_adjoint_part()).map_err(|e| e.to_string())?.min_quadratic_eigenvalue;
        let mut ra = row_major(t, a.matrix());
        let mut rb = row_major(t, b.matrix());
        ra.push(gap);
        rb.push(gap);
        lower.rows.push(ra);
        upper.rows.push(rb);
        gap_series.push((t, gap));
    }
    o.tables.push(lower);
    o.tables.push(upper);
    if sc.texts("plot").iter().any(|p| p == "min_gap") {
        o.plots.push(("min_gap".into(), gap_series));
    }

    // The conclusion only means something under the hypotheses.
    let ordered_profiles = profiles_ordered(&r1, &r2, t_end).map_err(|e| e.to_string())?;
    let ordered_initial = order_leq(&s1, &s2).map_err(|e| e.to_string())?;
    if !(ordered_profiles && ordered_initial) {
        let which = if ordered_profiles { "initial values" } else { "curvature profiles" };
        return Ok(o.inconclusive(format!("{which} are not ordered, the comparison hypotheses fail")));
    }
    o.verdict(cmp.holds, || format!("S_lower <= S_upper fails at t = {}: least gap eigenvalue {:e}", cmp.worst.0, cmp.worst.1));
    Ok(o)
}

fn table1(sc: &Scenario) -> Result<Outcome, String> {
    let row = sc.int("row").ok_or("no row")? as u8;
    let k0 = sc.real("k0").unwrap_or_else(|| riccomp::warped::table1_default_k0(row));
    let fd = sc.int("fiber_dim").unwrap_or(2) as usize;
    let (model, closed) = table1_model::<f64>(row, k0, fd).map_err(|e| e.to_string())?;
    let space = Arc::new(InnerSpace::euclidean(fd).map_err(|e| e.to_string())?);
    let eye = Operator::identity(space.clone());
    let s0 = eye.scaled(closed.weingarten(0.0));
    let r = CurvatureProfile::constant(eye.scaled(closed.riccati_curvature())).map_err(|e| e.to_string())?;
    // Rows 3 and 6 escape at pi/2 - alpha.
    let default_end = match closed.alpha {
        Some(a) if matches!(row, 3 | 6) => 0.9 * (FRAC_PI_2 - a),
        _ => 3.0,
    };
    let t_end = sc.real("t_end").unwrap_or(default_end);
    let tr = integrate_riccati(&r, &s0, t_end, &controls(sc)).map_err(|e| e.to_string())?;

    let mut o = Outcome::default();
    let table = riccati_table(&tr, samples(sc, 201), "");
    let mut err = 0.0f64;
    for row in &table.rows {
        let w = closed.weingarten(row[0]);
        let dev = (0..fd).flat_map(|i| (0..fd).map(move |j| (i, j))).map(|(i, j)| (row[1 + i * fd + j] - if i == j { w } else { 0.0 }).abs()).fold(0.0, f64::max);
        err = err.max(dev / (1.0 + w.abs()));
    }
    let amb = model.ambient_sectional(0.0).unwrap_or(f64::NAN);
    o.metric("t_end", t_end);
    o.metric("max_relative_error", err);
    o.metric("ambient_curvature", closed.ambient_curvature);
    o.metric("ambient_sectional_at_0", amb);
    o.metric("riccati_curvature", closed.riccati_curvature());
    if let Some(a) = closed.alpha {
        o.metric("alpha", a);
    }
    let tol = sc.real("tolerance").unwrap_or(1e-7);
    o.verdict(tr.reaches(t_end), || format!("integration stopped at {} before {t_end}", tr.domain_end()));
    o.verdict(err <= tol, || format!("integration differs from the closed form by {err:e} > {tol:e}"));
    o.verdict((amb - closed.ambient_curvature).abs() <= 1e-10, || format!("ambient curvature {amb} vs {}", closed.ambient_curvature));
    o.tables.push(table);
    Ok(o)
}

fn calabi(sc: &Scenario) -> Result<Outcome, String> {
    let k = scalar_fn(sc.scalar("k").ok_or("no k")?);
    let t_max = sc.real("t_max").unwrap_or(20.0);
    let sol = calabi_ode_with(k, t_max, &controls(sc)).map_err(|e| e.to_string())?;
    let inv = sol.invariants();
    let mut o = Outcome::default();
    let tol = sc.real("tolerance").unwrap_or(1e-9);
    match sol.beta() {
        Some(beta) => {
            let (_, dy) = sol.at(beta).expect("beta inside");
            o.metric("beta", beta);
            o.metric("dy_beta", dy);
            match calabi_rigidity_scan(&sol) {
                Ok(scan) => {
                    o.metric("min_dy", scan.min_dy);
                    o.metric("rigid", f64::from(u8::from(scan.rigid)));
                    if let Some(t1) = scan.switch_point {
                        o.metric("switch_point", t1);
                    }
                    if let Some(l1) = scan.l1_to_step {
                        o.metric("l1_to_step", l1);
                    }
                    o.verdict(scan.step_verified != Some(false), || "y' reaches -1 but k is not the step profile".into());
                }
                Err(e) => o.verdict(false, || e.to_string()),
            }
        }
        None => o.metric("beta", f64::INFINITY),
    }
    o.metric("max_energy", inv.max_energy);
    o.metric("max_energy_increase", inv.max_energy_increase);
    o.verdict(inv.holds(tol), || format!("invariants violated: {inv:?}"));

    let pts = sol.samples();
    let mut table = Table { suffix: "", header: vec!["t".into(), "y".into(), "dy".into()], rows: Vec::new() };
    let step = (pts.len() / samples(sc, 2001)).max(1);
    for (i, &(t, y, dy)) in pts.iter().enumerate() {
        if i % step == 0 || i + 1 == pts.len() {
            table.rows.push(vec![t, y, dy]);
        }
    }
    for name in sc.texts("plot") {
        let series = table.rows.iter().map(|r| {
            (r[0], match name.as_str() {
                "y" => r[1],
                "dy" => r[2],
                _ => r[1] * r[1] + r[2] * r[2],
            })
        });
        o.plots.push((name.clone(), series.collect()));
    }
    o.tables.push(table);
    Ok(o)
}

fn gauss_bonnet(sc: &Scenario) -> Result<Outcome, String> {
    let sig = sc.signature("signature").ok_or("no signature")?;
    let seed = sc.int("seed").ok_or("no seed")?;
    let count = sc.int("count").unwrap_or(5) as usize;
    let levels: Vec<usize> = sc.ints("levels").map_or_else(|| suites::GB_LEVELS.to_vec(), |l| l.iter().map(|v| *v as usize).collect());
    let perturbed = sc.text("form") == Some("perturbed");
    let tol = sc.real("tolerance").unwrap_or(1e-4);

    let mut o = Outcome::default();
    let mut table = Table {
        suffix: "levels",
        header: ["instance", "n", "interior", "boundary", "defect"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    let (mut worst_defect, mut worst_interior, mut min_order) = (0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..count {
        let mut rng = suites::instance_rng(seed, i);
        let (m, d) = if perturbed {
            (SurfaceMetric::perturbed(sig, random_perturbation::<f64, _>(&mut rng)), Rect::new(-4.0, 4.0, -2.0, 6.0))
        } else {
            let (bumps, d) = random_bumps::<f64, _>(&mut rng);
            (SurfaceMetric::conformal(sig, bumps), d)
        };
        let frame = if sig.index() == 1 { Some(frame_extension(&m).map_err(|e| format!("instance {i}: {e}"))?) } else { None };
        let study = gauss_bonnet_study(&m, &d, &levels, frame.as_ref()).map_err(|e| format!("instance {i}: {e}"))?;
        for r in &study.runs {
            table.rows.push(vec![i as f64, r.n as f64, r.interior, r.boundary, r.defect]);
        }
        let fin = study.finest();
        worst_defect = worst_defect.max(fin.defect.abs());
        worst_interior = worst_interior.max(fin.interior.abs());
        if let Some(p) = study.order {
            min_order = min_order.min(p);
        }
        o.verdict(fin.defect.abs() <= tol, || format!("instance {i}: defect {:e} at {}^2 exceeds {tol:e}", fin.defect, fin.n));
    }
    o.metric("worst_defect", worst_defect);
    o.metric("worst_interior", worst_interior);
    o.metric("min_observed_order", min_order);
    o.tables.push(table);
    Ok(o)
}

fn tube(sc: &Scenario) -> Result<Outcome, String> {
    let space = build_space(sc)?;
    let r = profile(&space, sc.profile("profile").unwrap_or(&ProfileSpec::Preset("zero".into())), "profile")?;
    let p = operator(&space, sc.op("projection").ok_or("no projection")?, "projection")?;
    let p_perp = Operator::identity(space.clone()).checked_sub(&p).map_err(|e| e.to_string())?;
    let a = operator(&space, sc.op("tangent").unwrap_or(&OpSpec::Zero), "tangent")?;
    let x = DVector::from_column_slice(sc.reals("probe").ok_or("no probe")?);
    let radius = sc.real("radius").ok_or("no radius")?;
    let t_end = sc.real("t_end").ok_or("no t_end")?;
    let j = tube_jacobi(&p, &p_perp, &a, &r, t_end, &controls(sc)).map_err(|e| e.to_string())?;
    let rep = tube_expansion_check(&j, radius, &x).map_err(|e| e.to_string())?;
    let mut o = Outcome::default();
    o.metric("lhs", rep.lhs);
    o.metric("rhs_r2", rep.rhs_r2);
    o.metric("rhs_inv_r2", rep.rhs_inv_r2);
    o.metric("derivative_residual", rep.derivative_residual);
    o.metric("grid_points", rep.grid_points as f64);
    let tol = sc.real("tolerance").unwrap_or(1e-6);
    o.verdict(rep.derivative_residual <= tol, || format!("d/dt <FX, FX> = -2 <SFX, FX> fails by {:e}", rep.derivative_residual));
    o.tables.push(jacobi_table(&j, samples(sc, 201), ""));
    Ok(o)
}

fn curvature_bound(sc: &Scenario) -> Result<Outcome, String> {
    let id = sc.text("model").ok_or("no model")?;
    let source = match model_by_id::<f64>(id).map_err(|e| e.to_string())? {
        RegistryModel::Warped { model, .. } => CurvatureSource::Warped(model),
        RegistryModel::Product(p) => CurvatureSource::Product(p),
        RegistryModel::HyperbolicWarp(h) => CurvatureSource::HyperbolicWarp(h),
    };
    let direction = if sc.text("direction") == Some("at_most") { BoundDirection::AtMost } else { BoundDirection::AtLeast };
    let sampler = BoundSampler {
        pairs: samples(sc, 10_000),
        seed: sc.int("seed").ok_or("no seed")?,
        tol: sc.real("tolerance").unwrap_or(1e-9),
    };
    let rep = curvature_bound_check(&source, sc.real("bound").ok_or("no bound")?, direction, &sampler).map_err(|e| e.to_string())?;
    let mut o = Outcome::default();
    o.metric("holds", f64::from(u8::from(rep.holds)));
    o.metric("worst", rep.worst);
    o.metric("worst_point", rep.worst_point);
    o.metric("evaluated", rep.evaluated as f64);
    for (name, v) in ["spacelike_pairs", "timelike_pairs", "mixed_pairs"].iter().zip(rep.strata) {
        o.metric(name, v as f64);
    }
    match sc.text("expect").unwrap_or("holds") {
        "violated" => o.verdict(!rep.holds, || "expected a violation, the bound held on every sample".into()),
        _ => o.verdict(rep.holds, || format!("bound violated by {:e} at base point {}", rep.worst, rep.worst_point)),
    }
    Ok(o)
}

fn suite(sc: &Scenario) -> Outcome {
    let seed = sc.int("seed").unwrap_or(0);
    let count = |d: u64| sc.int("count").unwrap_or(d) as usize;
    let rep: SuiteReport = match sc.text("suite").unwrap_or_default() {
        "counterexample" => suites::counterexample(),
        "determinant" => suites::determinant_noncomparison(),
        "table1" => suites::table1_rows(),
        "comparison" => suites::comparison_suite(seed, count(500)),
        "jacobi" => suites::jacobi_consistency_suite(seed, count(100)),
        "sandwich" => suites::sandwich_suite(seed, count(50)),
        "wedge" => suites::wedge_suite(seed, count(200)),
        "calabi" => suites::calabi_suite(seed, count(200)),
        "gauss_bonnet" => suites::gauss_bonnet_suite(seed, count(20)),
        "length" => suites::length_suite(),
        "gauss_trace" => suites::gauss_trace_suite(seed, count(100)),
        other => return failed(format!("unknown suite `{other}`")),
    };
    let mut o = Outcome { metrics: rep.metrics.clone(), ..Outcome::default() };
    o.metric("checks", rep.checks as f64);
    o.metric("violations", rep.violations as f64);
    o.verdict(rep.passed, || {
        let mut c = format!("{} of {} checks failed", rep.violations, rep.checks);
        if !rep.failures.is_empty() {
            c.push_str(": ");
            c.push_str(&rep.failures.join("; "));
        }
        c
    });
    o
}

// ---------------------------------------------------------------------------
// Output

/// Full double precision: 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_table(path: &Path, table: &Table) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| num(*v)))?;
    }
    w.flush()
}

fn write_artifacts(sc: &Scenario, o: &Outcome, out: &Path, names: &mut Vec<String>) -> std::io::Result<()> {
    let stem = file_stem(&sc.id);
    for table in &o.tables {
        let name = if table.suffix.is_empty() { format!("{stem}.csv") } else { format!("{stem}.{}.csv", table.suffix) };
        write_table(&out.join(&name), table)?;
        names.push(name);
    }
    if !o.metrics.is_empty() {
        let name = format!("{stem}.metrics.csv");
        let table = Table {
            suffix: "metrics",
            header: o.metrics.iter().map(|(k, _)| k.clone()).collect(),
            rows: vec![o.metrics.iter().map(|(_, v)| *v).collect()],
        };
        write_table(&out.join(&name), &table)?;
        names.push(name);
    }
    for (metric, series) in &o.plots {
        let name = format!("{stem}.{metric}.dat");
        let mut text = format!("# t {metric}\n");
        for (t, v) in series {
            text.push_str(&format!("{} {}\n", num(*t), num(*v)));
        }
        fs::write(out.join(&name), text)?;
        names.push(name);
    }
    Ok(())
}

fn write_summary(reports: &[RunReport], out: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(["id", "kind", "status", "cause"])?;
    for r in reports {
        w.write_record([r.id.as_str(), r.kind.name(), &r.status.to_string(), r.cause.as_deref().unwrap_or("")])?;
    }
    w.flush()?;
    let json: Vec<_> = reports
        .iter()
        .map(|r| {
            let metrics: serde_json::Map<String, serde_json::Value> = r.metrics.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            json!({
                "id": r.id,
                "kind": r.kind.name(),
                "status": r.status.to_string(),
                "cause": r.cause,
                "metrics": metrics,
                "artifacts": r.artifacts,
            })
        })
        .collect();
    let text = serde_json::to_string_pretty(&json).map_err(std::io::Error::other)?;
    fs::write(out.join("report.json"), text + "\n")
}

/// Exit code contract: 0 when nothing failed, 1 otherwise.
pub fn exit_code(reports: &[RunReport]) -> i32 {
    i32::from(reports.iter().any(|r| r.status == Status::Fail))
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os("RICCOMP_OUT").map_or_else(|| PathBuf::from("riccomp-out"), PathBuf::from)
}
