//! Named profiles, suites and shipped scenario files.

use std::sync::Arc;

use riccomp::linalg::{InnerSpace, Operator};
use riccomp::riccati::CurvatureProfile;

/// Profile presets: name and description. All are defined in any dimension.
pub const PROFILE_PRESETS: &[(&str, &str)] = &[
    ("zero", "R = 0"),
    ("identity", "R = I"),
    ("minus_identity", "R = -I"),
    ("unit_step", "R = 0 on [0, 1), I from t = 1"),
    ("first_axis", "R = diag(1, 0, ..., 0)"),
    ("last_axis", "R = diag(0, ..., 0, 1)"),
];

pub fn profile_preset_exists(name: &str) -> bool {
    PROFILE_PRESETS.iter().any(|(n, _)| *n == name)
}

pub fn profile_preset(name: &str, space: &Arc<InnerSpace<f64>>) -> Option<CurvatureProfile<f64>> {
    let n = space.dim();
    let axis = |i: usize| {
        let mut d = vec![0.0; n];
        d[i] = 1.0;
        Operator::diagonal(space.clone(), &d).expect("diagonal operator")
    };
    let id = Operator::identity(space.clone());
    let p = match name {
        "zero" => CurvatureProfile::zero(space.clone()),
        "identity" => CurvatureProfile::constant(id).ok()?,
        "minus_identity" => CurvatureProfile::constant(id.scaled(-1.0)).ok()?,
        "unit_step" => CurvatureProfile::step(Operator::zero(space.clone()), id, 1.0).ok()?,
        "first_axis" => CurvatureProfile::constant(axis(0)).ok()?,
        "last_axis" => CurvatureProfile::constant(axis(n - 1)).ok()?,
        _ => return None,
    };
    Some(p)
}

/// Suites runnable through `kind = suite`.
pub const SUITES: &[&str] = &[
    "counterexample",
    "determinant",
    "table1",
    "comparison",
    "jacobi",
    "sandwich",
    "wedge",
    "calabi",
    "gauss_bonnet",
    "length",
    "gauss_trace",
];

/// Shipped scenario files: name, provenance line, contents.
pub const SHIPPED: &[(&str, &str, &str)] = &[
    (
        "paper_counterexample_1",
        "Lorentzian plane, R = diag(1, 0) blows up at pi/2 from S(0) = 0 (comparison counterexample)",
        include_str!("../configs/paper_counterexample_1.cfg"),
    ),
    (
        "paper_counterexample_flat",
        "same plane with R = 0: S stays zero for all time",
        include_str!("../configs/paper_counterexample_flat.cfg"),
    ),
    (
        "paper_counterexample_mirror",
        "mirrored pair R = diag(0, 1) on the same plane",
        include_str!("../configs/paper_counterexample_mirror.cfg"),
    ),
    (
        "paper_counterexample_det",
        "Jacobi determinants of the counterexample pair are not ordered",
        include_str!("../configs/paper_counterexample_det.cfg"),
    ),
    ("table1_all", "all six warped model rows against their closed-form Weingarten maps", include_str!("../configs/table1_all.cfg")),
    ("calabi_step", "Calabi profile k = step at 0.8: beta = 0.8 + pi/2, y'(beta) = -1", include_str!("../configs/calabi_step.cfg")),
    (
        "flaherty_check",
        "tube growth <FX, FX> against r^2 and 1/r^2 in flat space (Flaherty's estimate)",
        include_str!("../configs/flaherty_check.cfg"),
    ),
    ("gauss_bonnet_bumps", "flux identity for compactly supported bumps in all four signatures", include_str!("../configs/gauss_bonnet_bumps.cfg")),
    ("curvature_bounds", "curvature-bound predicate on the registry examples", include_str!("../configs/curvature_bounds.cfg")),
    ("acceptance_suites", "the ten randomized and closed-form acceptance suites", include_str!("../configs/acceptance_suites.cfg")),
];

pub fn shipped(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _, _)| *n == name).map(|(_, _, text)| *text)
}

/// Catalog text for `list`.
pub fn catalog() -> String {
    let mut out = String::from("models:\n");
    for (id, desc) in riccomp::warped::registry_ids() {
        out.push_str(&format!("  {id:<28} {desc}\n"));
    }
    out.push_str("profile presets:\n");
    for (id, desc) in PROFILE_PRESETS {
        out.push_str(&format!("  {id:<28} {desc}\n"));
    }
    out.push_str("suites:\n");
    for id in SUITES {
        out.push_str(&format!("  {id}\n"));
    }
    out.push_str("named scenarios:\n");
    for (id, desc, _) in SHIPPED {
        out.push_str(&format!("  {id:<28} {desc}\n"));
    }
    out
}
