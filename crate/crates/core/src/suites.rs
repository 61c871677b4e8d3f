//! Seeded verification suites. Each runner returns a [`SuiteReport`] with a
//! pass flag, the number of checks and violations, named metrics, and the
//! first few failure causes. All suites run in `f64`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::func::ScalarFn;
use crate::linalg::{
    monotone_pair_with, psd_check, rank_one_decompose, wedge_leq, InnerSpace, Operator,
    WedgeSampler,
};
use crate::ode::Controls;
use crate::riccati::{
    compare_trajectories, domain_bracket_check, integrate_jacobi, integrate_riccati, random_profile_pair,
    random_psd_shift, random_sandwich, trace_channel, CurvatureProfile, RiccatiTrajectory, ScalarRiccati,
};
use crate::surface::{
    calabi_ode, calabi_rigidity_scan, capped_cylinder_fermi, frame_extension, gauss_bonnet_study,
    geodesic_length_bound, random_bumps, random_calabi_case, random_perturbation, round_sphere_fermi,
    subcritical_fermi, FrameField, Rect, Signature, SurfaceMetric,
};
use crate::warped::table1_model;

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    pub metrics: Vec<(String, f64)>,
    /// Up to ten failure descriptions.
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// One line: name, verdict, counts and metrics.
    pub fn summary(&self) -> String {
        let m: Vec<String> = self.metrics.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
        format!(
            "{} {}: {} checks, {} violations; {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.checks,
            self.violations,
            m.join(" ")
        )
    }
}

/// Accumulates checks for a report.
struct Tally {
    name: String,
    checks: usize,
    violations: usize,
    metrics: Vec<(String, f64)>,
    failures: Vec<String>,
}

impl Tally {
    fn new(name: &str) -> Self {
        Self { name: name.into(), checks: 0, violations: 0, metrics: Vec::new(), failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, why: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.failures.len() < 10 {
                self.failures.push(why());
            }
        }
    }

    fn error(&mut self, what: impl std::fmt::Display) {
        self.check(false, || what.to_string());
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.push((name.into(), v));
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            passed: self.violations == 0 && self.checks > 0,
            name: self.name,
            checks: self.checks,
            violations: self.violations,
            metrics: self.metrics,
            failures: self.failures,
        }
    }
}

fn lorentz_plane() -> Arc<InnerSpace<f64>> {
    Arc::new(InnerSpace::from_gram(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))).expect("nondegenerate"))
}

fn diag(space: &Arc<InnerSpace<f64>>, d: &[f64]) -> Operator<f64> {
    Operator::diagonal(space.clone(), d).expect("diagonal gram")
}

/// Generator for instance `i` of a seeded run: one ChaCha stream per instance.
pub fn instance_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Dimension and index for instance `i`: `n` cycles through `{2, 3, 4}` and
/// the index through `0..=n`, so every signature recurs.
fn instance_space(i: usize) -> Arc<InnerSpace<f64>> {
    let n = 2 + i % 3;
    let k = (i / 3) % (n + 1);
    Arc::new(InnerSpace::standard(n, k).expect("standard space"))
}

fn max_abs_entry(op: &Operator<f64>) -> f64 {
    op.matrix().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

// ---------------------------------------------------------------------------

/// Blow-up of the indefinite counterexample and of its mirror image.
pub fn counterexample() -> SuiteReport {
    let mut t = Tally::new("counterexample");
    let g = lorentz_plane();
    let c = Controls::default();
    let zero = Operator::zero(g.clone());
    let run = |r: &[f64]| integrate_riccati(&CurvatureProfile::constant(diag(&g, r)).expect("self-adjoint"), &zero, 10.0, &c);
    let cases = [("R2=diag(1,0)", [1.0, 0.0], [0.0, 0.0]), ("mirrored R1=diag(0,1)", [0.0, 1.0], [0.0, 0.0])];
    for (label, blowing, flat) in cases {
        match (run(&blowing), run(&flat)) {
            (Ok(b), Ok(f)) => {
                match b.blow_up() {
                    Some(bu) => {
                        let err = (bu.t_star - FRAC_PI_2).abs();
                        t.metric(&format!("{label}: |t_star - pi/2|"), err);
                        t.check(err < 1e-6, || format!("{label}: t_star = {} off by {err:e}", bu.t_star));
                        t.check(bu.bracket_width <= 1e-6, || format!("{label}: bracket {}", bu.bracket_width));
                    }
                    None => t.error(format!("{label}: no blow-up detected")),
                }
                let dev = f.samples().iter().map(|(_, s)| max_abs_entry(s)).fold(0.0, f64::max);
                t.metric(&format!("{label}: max |S| of zero-curvature side"), dev);
                t.check(f.reaches(10.0) && dev <= 1e-10, || format!("{label}: flat side deviates by {dev:e}"));
            }
            (Err(e), _) | (_, Err(e)) => t.error(format!("{label}: {e}")),
        }
    }
    t.finish()
}

/// `det F₁ − det F₂ = ±(1 − cos t)` for the two counterexample pairs.
pub fn determinant_noncomparison() -> SuiteReport {
    let mut t = Tally::new("determinant non-comparison");
    let g = lorentz_plane();
    let c = Controls::default();
    let eye = Operator::identity(g.clone());
    let zero = Operator::zero(g.clone());
    let jac = |r: &[f64]| {
        let p = CurvatureProfile::constant(diag(&g, r)).expect("self-adjoint");
        integrate_jacobi(&p, &eye, &zero, FRAC_PI_2, &c)
    };
    // (R₁, R₂, expected sign of det F₁ − det F₂); R₁ ≤ R₂ in both pairs.
    let pairs = [([0.0, 0.0], [1.0, 0.0], 1.0), ([0.0, 1.0], [0.0, 0.0], -1.0)];
    for (k, (r1, r2, sign)) in pairs.into_iter().enumerate() {
        let (j1, j2) = match (jac(&r1), jac(&r2)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                t.error(e);
                continue;
            }
        };
        let mut worst = 0.0f64;
        for i in 0..200 {
            let s = 0.01 + (FRAC_PI_2 - 0.01) * (i as f64 + 0.5) / 200.0;
            let d = j1.det_at(s).unwrap_or(f64::NAN) - j2.det_at(s).unwrap_or(f64::NAN);
            let expect = sign * (1.0 - s.cos());
            let err = (d - expect).abs();
            worst = worst.max(err);
            t.check(err <= 1e-8 && d * sign > 0.0, || format!("pair {}: t = {s}, difference {d} vs {expect}", k + 1));
        }
        t.metric(&format!("pair {}: max error", k + 1), worst);
    }
    t.finish()
}

/// Riccati residuals, integration against closed forms, and constancy of the
/// ambient curvature for all six table rows.
pub fn table1_rows() -> SuiteReport {
    let mut t = Tally::new("table1 rows");
    let c = Controls::default();
    for row in 1..=6u8 {
        let k0 = crate::warped::table1_default_k0(row);
        let (model, closed) = match table1_model::<f64>(row, k0, 2) {
            Ok(v) => v,
            Err(e) => {
                t.error(format!("row {row}: {e}"));
                continue;
            }
        };
        let kb = closed.riccati_curvature();
        let (lo, hi) = model.warp.sample_window();
        let mut worst_res = 0.0f64;
        let mut worst_amb = 0.0f64;
        for i in 0..100 {
            let s = lo + (hi - lo) * (i as f64 + 0.5) / 100.0;
            let w = closed.weingarten(s);
            worst_res = worst_res.max((closed.weingarten_derivative(s) - w * w - kb).abs());
            match model.ambient_sectional(s) {
                Ok(k) => worst_amb = worst_amb.max((k - closed.ambient_curvature).abs()),
                Err(e) => t.error(format!("row {row}: {e}")),
            }
        }
        t.check(worst_res < 1e-10, || format!("row {row}: Riccati residual {worst_res:e}"));
        t.check(worst_amb < 1e-10, || format!("row {row}: ambient curvature varies by {worst_amb:e}"));
        t.metric(&format!("row{row} residual"), worst_res);

        let (_, s0, profile, t_end) = table1_problem(row, &closed);
        match integrate_riccati(&profile, &s0, t_end, &c) {
            Ok(tr) => {
                t.check(tr.reaches(t_end), || format!("row {row}: integration stopped early"));
                let mut err = 0.0f64;
                for i in 0..=100 {
                    let s = t_end * i as f64 / 100.0;
                    if let Some(op) = tr.at(s) {
                        let w = closed.weingarten(s);
                        let dev = (op.matrix() - DMatrix::identity(2, 2) * w).amax() / (1.0 + w.abs());
                        err = err.max(dev);
                    }
                }
                t.metric(&format!("row{row} closed-form error"), err);
                t.check(err < 1e-7, || format!("row {row}: integration differs from closed form by {err:e}"));
            }
            Err(e) => t.error(format!("row {row}: {e}")),
        }
    }
    t.finish()
}

/// Slice Riccati problem of a table row on a 2D Riemannian fibre.
fn table1_problem(
    row: u8,
    closed: &crate::warped::Table1Row<f64>,
) -> (Arc<InnerSpace<f64>>, Operator<f64>, CurvatureProfile<f64>, f64) {
    let space = Arc::new(InnerSpace::euclidean(2).expect("euclidean"));
    let s0 = Operator::identity(space.clone()).scaled(closed.weingarten(0.0));
    let r = Operator::identity(space.clone()).scaled(closed.riccati_curvature());
    let t_end = if matches!(row, 3 | 6) { 1.2 } else { 3.0 };
    (space.clone(), s0, CurvatureProfile::constant(r).expect("self-adjoint"), t_end)
}

/// Comparison theorem on seeded ordered data. Instances where a side blows
/// up before `b` are still compared on the common domain, then resampled.
pub fn comparison_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut t = Tally::new("comparison");
    let c = Controls::default();
    let b = 1.0;
    let (mut resampled, mut drawn, mut worst) = (0usize, 0usize, f64::INFINITY);
    for i in 0..instances {
        let space = instance_space(i);
        let mut rng = instance_rng(seed, i);
        let mut done = false;
        for _attempt in 0..50 {
            drawn += 1;
            let (r1, r2) = random_profile_pair(&space, b, 4, 0.3, 0.3, &mut rng);
            let (a1, a2) = monotone_pair_with(&space, 0.3, 0.3, &mut rng);
            let (t1, t2) = match (integrate_riccati(&r1, &a1, b, &c), integrate_riccati(&r2, &a2, b, &c)) {
                (Ok(x), Ok(y)) => (x, y),
                (Err(e), _) | (_, Err(e)) => {
                    t.error(format!("instance {i}: {e}"));
                    break;
                }
            };
            match compare_trajectories(&t1, &t2) {
                Ok(cmp) => {
                    worst = worst.min(cmp.worst.1);
                    t.check(cmp.holds, || {
                        format!("instance {i} (n={}, k={}): gap {:e} at t = {}", space.dim(), space.index(), cmp.worst.1, cmp.worst.0)
                    });
                }
                Err(e) => t.error(format!("instance {i}: {e}")),
            }
            if t1.reaches(b) && t2.reaches(b) {
                done = true;
                break;
            }
            resampled += 1;
        }
        t.check(done, || format!("instance {i}: no draw reached b = {b}"));
    }
    t.metric("instances", instances as f64);
    t.metric("resampled", resampled as f64);
    t.metric("resample_rate", resampled as f64 / drawn.max(1) as f64);
    t.metric("worst_min_gap_eigenvalue", worst);
    t.finish()
}

/// `shape_from_jacobi` against `integrate_riccati` on seeded data.
pub fn jacobi_consistency_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut t = Tally::new("jacobi/riccati consistency");
    let c = Controls::default();
    let b = 1.0;
    let mut worst = 0.0f64;
    let mut worst_wronskian = 0.0f64;
    for i in 0..instances {
        let space = instance_space(i);
        let mut rng = instance_rng(seed, i);
        let (r, _) = random_profile_pair(&space, b, 4, 1.0, 0.0, &mut rng);
        let a = crate::linalg::random_self_adjoint(&space, 0.5, &mut rng);
        let f0 = Operator::identity(space.clone());
        let df0 = a.scaled(-1.0);
        let (tr, jt) = match (integrate_riccati(&r, &a, b, &c), integrate_jacobi(&r, &f0, &df0, b, &c)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(e), _) | (_, Err(e)) => {
                t.error(format!("instance {i}: {e}"));
                continue;
            }
        };
        worst_wronskian = worst_wronskian.max(jt.wronskian_drift());
        t.check(jt.wronskian_drift() <= 1e-9, || format!("instance {i}: Wronskian drift {:e}", jt.wronskian_drift()));
        let end = tr.domain_end().min(jt.domain_end());
        for k in 1..=32 {
            let s = end * k as f64 / 33.0;
            let (Some(sr), Ok(sj)) = (tr.at(s), crate::riccati::shape_from_jacobi(&jt, s)) else { continue };
            let dev = (sr.matrix() - sj.matrix()).amax() / (1.0 + max_abs_entry(&sr));
            worst = worst.max(dev);
            t.check(dev <= 1e-6, || format!("instance {i}: t = {s}, deviation {dev:e}"));
        }
    }
    t.metric("worst_relative_deviation", worst);
    t.metric("worst_wronskian_drift", worst_wronskian);
    t.finish()
}

/// Two-sided domain statement on seeded sandwiched triples.
pub fn sandwich_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut t = Tally::new("sandwich");
    let c = Controls::default();
    let b = 1.0;
    let mut outer_reached = 0usize;
    for i in 0..instances {
        let space = instance_space(i);
        let mut rng = instance_rng(seed, i);
        let (rs, ss) = random_sandwich(&space, b, &mut rng);
        match domain_bracket_check([&rs[0], &rs[1], &rs[2]], [&ss[0], &ss[1], &ss[2]], b, &c) {
            Ok(rep) => {
                if rep.reached[0] && rep.reached[2] {
                    outer_reached += 1;
                }
                t.check(rep.holds, || format!("instance {i}: reached {:?}", rep.reached));
            }
            Err(e) => t.error(format!("instance {i}: {e}")),
        }
    }
    t.metric("instances", instances as f64);
    t.metric("outer_reached", outer_reached as f64);
    t.finish()
}

fn sample_times(tr: &RiccatiTrajectory<f64>, count: usize) -> Vec<f64> {
    let end = if tr.blow_up().is_some() { 0.9 * tr.domain_end() } else { tr.domain_end() };
    (1..=count).map(|k| end * k as f64 / count as f64).collect()
}

/// Piecewise-constant PSD profile of size `scale`, negated when `scale < 0`.
fn psd_profile(space: &Arc<InnerSpace<f64>>, b: f64, scale: f64, rng: &mut ChaCha8Rng) -> CurvatureProfile<f64> {
    let shift = random_psd_shift(&CurvatureProfile::zero(space.clone()), b, 4, scale.abs(), rng);
    if scale > 0.0 {
        return shift;
    }
    let mut breaks = shift.breakpoints();
    breaks.retain(|x| *x > 0.0 && *x < b);
    let times: Vec<f64> = std::iter::once(0.0).chain(breaks.iter().copied()).collect();
    let pieces = times.iter().map(|&s| shift.eval_side(s, crate::ode::Side::Right).scaled(-1.0)).collect();
    CurvatureProfile::piecewise(breaks, pieces).expect("self-adjoint pieces")
}

/// Wedge-square comparison suite: `Λ²(S) ⪰ 0` for `R ⪰ 0`, `S(0) = 0`;
/// rank-one structure for `R = r(t)·P`; and both scalar-model bounds.
///
/// The scalar-model statements use the profile `rA + u²(A − A²)`, for which
/// `S = uA` exactly; it reduces to `rA` when `A² = A`. Perturbing it by a
/// PSD profile in either direction gives the two comparison branches.
pub fn wedge_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut t = Tally::new("wedge comparison");
    let c = Controls::default();
    let sampler = WedgeSampler { tol: 1e-7, ..WedgeSampler::default() };
    let mut worst = [f64::INFINITY; 3];
    let mut resampled_leq = 0usize;
    let mut literal = 0usize;
    for i in 0..instances {
        let space = instance_space(i);
        let mut rng = instance_rng(seed, i);

        // Positivity.
        let b = 1.0;
        let r = psd_profile(&space, b, 1.0, &mut rng);
        match integrate_riccati(&r, &Operator::zero(space.clone()), b, &c) {
            Ok(tr) => {
                for s in sample_times(&tr, 6) {
                    let st = tr.at(s).expect("inside domain");
                    match wedge_leq(&Operator::zero(space.clone()), &st, &sampler) {
                        Ok(rep) => {
                            worst[0] = worst[0].min(rep.worst_gap);
                            t.check(rep.holds, || format!("positivity {i}: t = {s}, gap {:e}", rep.worst_gap));
                        }
                        Err(e) => t.error(format!("positivity {i}: {e}")),
                    }
                }
            }
            Err(e) => t.error(format!("positivity {i}: {e}")),
        }

        // Rank-one profile.
        let e = DVector::from_fn(space.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let ge = space.gram() * &e;
        let p = Operator::new(space.clone(), &e * ge.transpose() * sigma).expect("dimensions");
        let rr = rng.random_range(0.2..1.0);
        let prof = CurvatureProfile::scalar_multiple(ScalarFn::Const(rr), p).expect("self-adjoint");
        match integrate_riccati(&prof, &Operator::zero(space.clone()), b, &c) {
            Ok(tr) => {
                for s in sample_times(&tr, 6) {
                    let st = tr.at(s).expect("inside domain");
                    t.check(rank_one_decompose(&st).is_ok(), || format!("rank-one {i}: t = {s} not rank one"));
                }
            }
            Err(e) => t.error(format!("rank-one {i}: {e}")),
        }

        // Scalar-model bounds.
        for branch in 0..2 {
            let mut done = false;
            for _ in 0..40 {
                match scalar_model_instance(&space, branch == 1, &mut rng, &sampler, &c) {
                    ScalarOutcome::Checked { gap, holds, literal: lit_case } => {
                        literal += lit_case as usize;
                        worst[1 + branch] = worst[1 + branch].min(gap);
                        t.check(holds, || format!("scalar-model branch {branch} instance {i}: gap {gap:e}"));
                        done = true;
                        break;
                    }
                    ScalarOutcome::Resample => {
                        if branch == 1 {
                            resampled_leq += 1;
                        }
                    }
                    ScalarOutcome::Error(e) => {
                        t.error(format!("scalar-model branch {branch} instance {i}: {e}"));
                        done = true;
                        break;
                    }
                }
            }
            t.check(done, || format!("scalar-model branch {branch} instance {i}: no admissible draw"));
        }
    }
    t.metric("positivity_worst_gap", worst[0]);
    t.metric("scalar_geq_worst_gap", worst[1]);
    t.metric("scalar_leq_worst_gap", worst[2]);
    t.metric("scalar_leq_resampled", resampled_leq as f64);
    t.metric("literal_instances", literal as f64);
    t.finish()
}

enum ScalarOutcome {
    Checked { gap: f64, holds: bool, literal: bool },
    Resample,
    Error(String),
}

/// One scalar-model instance. `upper = false`: `R ⪰ R_model`, `u(b) > 0`, or
/// `R ⪯ R_model`, `u(b) < 0`, and the claim `Λ²(S(b)) ⪰ Λ²(u(b)A)`.
/// `upper = true`: `a > 0`, `R ⪯ R_model`, `S > 0`, and the reverse claim.
fn scalar_model_instance(
    space: &Arc<InnerSpace<f64>>,
    upper: bool,
    rng: &mut ChaCha8Rng,
    sampler: &WedgeSampler,
    c: &Controls,
) -> ScalarOutcome {
    let n = space.dim();
    let literal = space.index() == 0 && rng.random_bool(0.5);
    let a_op = if literal {
        Operator::identity(space.clone())
    } else {
        // Positive definite: G⁻¹(Q + 0.2 I).
        let q = crate::linalg::random_psd::<f64, _>(n, n, 1.0, rng) + DMatrix::identity(n, n) * 0.2;
        Operator::from_quadratic(space.clone(), &q).expect("dimensions")
    };
    let r = if upper { rng.random_range(0.0..1.0) } else { rng.random_range(-1.0..1.0) };
    let a = if upper { rng.random_range(0.1..1.0) } else { rng.random_range(-1.0..1.0) };
    let model = ScalarRiccati::<f64>::new(r, a);
    let b = match model.escape_time() {
        Some(te) => (0.8 * te).min(1.0),
        None => 1.0,
    };
    let below = if upper { true } else { rng.random_bool(0.5) };
    let ub = model.u(b);
    if !upper && ((below && ub >= -1e-3) || (!below && ub <= 1e-3)) {
        return ScalarOutcome::Resample;
    }
    let a2 = Operator::new(space.clone(), a_op.matrix() * a_op.matrix()).expect("dimensions");
    let defect = a_op.checked_sub(&a2).expect("same space");
    let u = move |s: f64| model.u(s);
    let base = CurvatureProfile::sum(vec![
        CurvatureProfile::scalar_multiple(ScalarFn::Const(r), a_op.clone()).expect("self-adjoint"),
        CurvatureProfile::scalar_multiple(ScalarFn::smooth(move |s| u(s) * u(s)), defect).expect("self-adjoint"),
    ])
    .expect("same space");
    let shift = psd_profile(space, b, if upper { -0.1 } else if below { -0.5 } else { 0.5 }, rng);
    let prof = CurvatureProfile::sum(vec![base, shift]).expect("same space");
    let s0 = a_op.scaled(a);
    let tr = match integrate_riccati(&prof, &s0, b, c) {
        Ok(tr) => tr,
        Err(e) => return ScalarOutcome::Error(e.to_string()),
    };
    if !tr.reaches(b) {
        return ScalarOutcome::Resample;
    }
    if upper {
        // S > 0 on the samples.
        for s in (0..=16).map(|k| b * k as f64 / 16.0) {
            let ok = psd_check(&tr.at(s).expect("reached")).map(|p| p.min_quadratic_eigenvalue > 1e-9).unwrap_or(false);
            if !ok {
                return ScalarOutcome::Resample;
            }
        }
    }
    let sb = tr.at(b).expect("reached");
    let ua = a_op.scaled(ub);
    let rep = if upper { wedge_leq(&sb, &ua, sampler) } else { wedge_leq(&ua, &sb, sampler) };
    match rep {
        Ok(rep) => ScalarOutcome::Checked { gap: rep.worst_gap, holds: rep.holds, literal },
        Err(e) => ScalarOutcome::Error(e.to_string()),
    }
}

/// Calabi invariants and rigidity on seeded profiles.
pub fn calabi_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut t = Tally::new("calabi");
    let (mut steps, mut closest) = (0usize, f64::INFINITY);
    let mut worst_step = 0.0f64;
    for i in 0..instances {
        let mut rng = instance_rng(seed, i);
        let case = random_calabi_case::<f64, _>(&mut rng);
        let sol = match calabi_ode(case.k.clone(), 40.0) {
            Ok(s) => s,
            Err(e) => {
                t.error(format!("profile {i}: {e}"));
                continue;
            }
        };
        let inv = sol.invariants();
        t.check(inv.holds(1e-9), || format!("profile {i} ({}): invariants {inv:?}", case.label));
        let scan = match calabi_rigidity_scan(&sol) {
            Ok(s) => s,
            Err(e) => {
                t.error(format!("profile {i} ({}): {e}", case.label));
                continue;
            }
        };
        if case.is_step {
            steps += 1;
            let t1 = case.k.breakpoints()[0];
            let dy_err = (scan.min_dy + 1.0).abs();
            let beta_err = (scan.beta - t1 - FRAC_PI_2).abs();
            worst_step = worst_step.max(dy_err).max(beta_err);
            t.check(dy_err <= 1e-6 && beta_err <= 1e-6, || {
                format!("step {i}: y'(beta) + 1 = {dy_err:e}, beta error {beta_err:e}")
            });
            t.check(scan.rigid && scan.step_verified == Some(true), || format!("step {i}: rigidity not confirmed {scan:?}"));
        } else {
            closest = closest.min(scan.min_dy + 1.0);
            t.check(scan.min_dy > -1.0 + 1e-3, || format!("profile {i} ({}): min y' = {}", case.label, scan.min_dy));
        }
    }
    t.metric("step_profiles", steps as f64);
    t.metric("worst_step_error", worst_step);
    t.metric("closest_non_step_margin", closest);
    t.finish()
}

/// Grid refinement levels used by the Gauss–Bonnet suite.
pub const GB_LEVELS: [usize; 7] = [8, 16, 32, 64, 128, 256, 512];

/// Gauss–Bonnet flux for seeded bump metrics in every signature, plus
/// non-conformal perturbations in index 1 with the extended frame.
pub fn gauss_bonnet_suite(seed: u64, per_signature: usize) -> SuiteReport {
    let mut t = Tally::new("gauss-bonnet");
    let (mut worst_defect, mut min_order, mut worst_frame, mut worst_omega) = (0.0f64, f64::INFINITY, 0.0f64, 0.0f64);
    let mut run = |t: &mut Tally, label: String, m: SurfaceMetric<f64>, d: Rect<f64>| {
        let frame = if m.signature().index() == 1 { Some(frame_extension(&m)) } else { None };
        let frame: Option<FrameField<f64>> = match frame.transpose() {
            Ok(f) => f,
            Err(e) => {
                t.error(format!("{label}: {e}"));
                return;
            }
        };
        if let Some(f) = &frame {
            let (fd, od) = frame_checks(f, &d);
            worst_frame = worst_frame.max(fd);
            worst_omega = worst_omega.max(od);
            t.check(fd <= 1e-10, || format!("{label}: frame orthonormality defect {fd:e}"));
            t.check(od <= 1e-12, || format!("{label}: connection form outside the box {od:e}"));
        }
        match gauss_bonnet_study(&m, &d, &GB_LEVELS, frame.as_ref()) {
            Ok(study) => {
                let fin = study.finest();
                worst_defect = worst_defect.max(fin.defect.abs());
                t.check(fin.defect.abs() < 1e-4 && fin.interior.abs() < 1e-4, || format!("{label}: {fin:?}"));
                match study.order {
                    Some(p) => {
                        min_order = min_order.min(p);
                        t.check(p >= 1.8, || format!("{label}: observed order {p}"));
                    }
                    None => t.error(format!("{label}: convergence order not measurable above the roundoff floor")),
                }
            }
            Err(e) => t.error(format!("{label}: {e}")),
        }
    };
    for (si, sig) in Signature::ALL.into_iter().enumerate() {
        for i in 0..per_signature {
            let mut rng = instance_rng(seed, si * 1000 + i);
            let (bumps, d) = random_bumps::<f64, _>(&mut rng);
            run(&mut t, format!("{sig} conformal {i}"), SurfaceMetric::conformal(sig, bumps), d);
        }
        if sig.index() == 1 {
            for i in 0..per_signature {
                let mut rng = instance_rng(seed, 10_000 + si * 1000 + i);
                let terms = random_perturbation::<f64, _>(&mut rng);
                let d = Rect::new(-4.0, 4.0, -2.0, 6.0);
                run(&mut t, format!("{sig} perturbed {i}"), SurfaceMetric::perturbed(sig, terms), d);
            }
        }
    }
    t.metric("worst_defect_512", worst_defect);
    t.metric("min_observed_order", min_order);
    t.metric("worst_frame_defect", worst_frame);
    t.metric("worst_omega_outside", worst_omega);
    t.finish()
}

/// Orthonormality defect on a 128² grid over `d`, and `|ω¹₂|` at points of
/// `d` outside the enlarged box.
pub fn frame_checks(f: &FrameField<f64>, d: &Rect<f64>) -> (f64, f64) {
    let n = 128;
    let (mut fd, mut od) = (0.0f64, 0.0f64);
    let bx = f.enlarged_box();
    for j in 0..n {
        let y = d.y0 + (d.y1 - d.y0) * (j as f64 + 0.5) / n as f64;
        for i in 0..n {
            let x = d.x0 + (d.x1 - d.x0) * (i as f64 + 0.5) / n as f64;
            fd = fd.max(f.orthonormality_defect(x, y).unwrap_or(f64::INFINITY));
            if bx.is_none_or(|b| !b.contains(x, y)) && (i + j) % 4 == 0 {
                let w = f.connection_form(x, y).unwrap_or([f64::INFINITY; 2]);
                od = od.max(w[0].abs()).max(w[1].abs());
            }
        }
    }
    (fd, od)
}

/// Boundary-normal flux of the three Fermi profiles.
pub fn length_suite() -> SuiteReport {
    let mut t = Tally::new("geodesic length");
    let (sphere, bs) = round_sphere_fermi::<f64>();
    let capped = capped_cylinder_fermi::<f64>(2.0).expect("β ≥ π/2");
    let (sub, bsub) = subcritical_fermi::<f64>();
    let cases = [("sphere", sphere, bs, true), ("capped cylinder", capped.0, capped.1, true), ("subcritical", sub, bsub, false)];
    for (label, m, b, equality) in cases {
        match geodesic_length_bound(&m, &|_| b, 4096) {
            Ok(r) => {
                t.metric(&format!("{label}: total"), r.total_curvature);
                t.metric(&format!("{label}: L"), r.length);
                t.check((r.total_curvature - TAU).abs() <= 1e-6, || format!("{label}: total {}", r.total_curvature));
                t.check(r.bound_holds, || format!("{label}: total exceeds L"));
                if equality {
                    t.check((r.length - r.total_curvature).abs() <= 1e-6, || format!("{label}: not an equality case"));
                } else {
                    t.check(r.length - r.total_curvature > 1e-3, || format!("{label}: inequality not strict"));
                }
            }
            Err(e) => t.error(format!("{label}: {e}")),
        }
    }
    t.finish()
}

/// Gauss-equation residuals for the table rows on random slice pairs, and the
/// trace identity and Cauchy–Schwarz equality along definite trajectories.
pub fn gauss_trace_suite(seed: u64, pairs: usize) -> SuiteReport {
    let mut t = Tally::new("gauss equation and trace");
    let c = Controls::default();
    let mut rng = instance_rng(seed, 0);
    let (mut worst_gauss, mut worst_trace) = (0.0f64, 0.0f64);
    for row in 1..=6u8 {
        let k0 = crate::warped::table1_default_k0(row);
        let Ok((model, closed)) = table1_model::<f64>(row, k0, 3) else {
            t.error(format!("row {row}: model"));
            continue;
        };
        let (lo, hi) = model.warp.sample_window();
        for _ in 0..pairs {
            let s = rng.random_range(lo..hi);
            let x = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            match model.gauss_equation_residual(s, &x, &y) {
                Ok(r) => {
                    worst_gauss = worst_gauss.max(r);
                    t.check(r < 1e-10, || format!("row {row}: Gauss residual {r:e} at t = {s}"));
                }
                Err(e) => t.error(format!("row {row}: {e}")),
            }
        }
        let (_, s0, prof, t_end) = table1_problem(row, &closed);
        match integrate_riccati(&prof, &s0, t_end, &c).map_err(|e| e.to_string()).and_then(|tr| trace_channel(&tr).map_err(|e| e.to_string())) {
            Ok(rep) => {
                worst_trace = worst_trace.max(rep.max_relative_residual);
                t.check(rep.max_relative_residual < 1e-8, || format!("row {row}: trace residual {:e}", rep.max_relative_residual));
                t.check(rep.cs_equality_times.len() == rep.samples.len() && !rep.samples.is_empty(), || {
                    format!("row {row}: umbilic row misses Cauchy–Schwarz equality")
                });
                t.check(rep.equality_matches_umbilic, || format!("row {row}: equality away from umbilic samples"));
            }
            Err(e) => t.error(format!("row {row}: {e}")),
        }
    }
    // Non-umbilic and random definite trajectories.
    let e2 = Arc::new(InnerSpace::euclidean(2).expect("euclidean"));
    let mut runs = vec![(
        "diag(1,2), R = 0".to_string(),
        CurvatureProfile::zero(e2.clone()),
        diag(&e2, &[1.0, 2.0]),
        true,
    )];
    for i in 0..20 {
        let space = Arc::new(InnerSpace::euclidean(2 + i % 3).expect("euclidean"));
        let mut r = instance_rng(seed, 100 + i);
        let (prof, _) = random_profile_pair(&space, 1.0, 4, 1.0, 0.0, &mut r);
        let a = crate::linalg::random_self_adjoint(&space, 0.5, &mut r);
        runs.push((format!("random {i}"), prof, a, false));
    }
    for (label, prof, a, strict) in runs {
        match integrate_riccati(&prof, &a, 1.0, &c).map_err(|e| e.to_string()).and_then(|tr| trace_channel(&tr).map_err(|e| e.to_string())) {
            Ok(rep) => {
                worst_trace = worst_trace.max(rep.max_relative_residual);
                t.check(rep.max_relative_residual < 1e-8, || format!("{label}: trace residual {:e}", rep.max_relative_residual));
                t.check(rep.cs_holds, || format!("{label}: Cauchy–Schwarz fails"));
                t.check(rep.equality_matches_umbilic, || format!("{label}: equality away from umbilic samples"));
                if strict {
                    t.check(rep.cs_equality_times.is_empty(), || format!("{label}: unexpected equality"));
                }
            }
            Err(e) => t.error(format!("{label}: {e}")),
        }
    }
    t.metric("worst_gauss_residual", worst_gauss);
    t.metric("worst_trace_residual", worst_trace);
    t.finish()
}
