//! Scenario configuration: a small sectioned key/value grammar.
//!
//! ```text
//! # comment
//! [scenario lorentz_blowup]
//! kind = riccati
//! gram = diag(1, -1)
//! profile = diag(1, 0)
//! initial = zero
//! t_end = 10
//! ```
//!
//! Every key has a fixed value type and a set of kinds it applies to.
//! Unknown keys, keys that do not apply to the scenario's kind, duplicate
//! keys and malformed values are errors anchored at their line.

use std::collections::BTreeSet;
use std::fmt;

use riccomp::surface::Signature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Riccati,
    Jacobi,
    Compare,
    Table1,
    Calabi,
    GaussBonnet,
    Tube,
    CurvatureBound,
    Suite,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Riccati,
        Kind::Jacobi,
        Kind::Compare,
        Kind::Table1,
        Kind::Calabi,
        Kind::GaussBonnet,
        Kind::Tube,
        Kind::CurvatureBound,
        Kind::Suite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Riccati => "riccati",
            Kind::Jacobi => "jacobi",
            Kind::Compare => "compare",
            Kind::Table1 => "table1",
            Kind::Calabi => "calabi",
            Kind::GaussBonnet => "gauss_bonnet",
            Kind::Tube => "tube",
            Kind::CurvatureBound => "curvature_bound",
            Kind::Suite => "suite",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operator literal. `Dense` rows are the operator's matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum OpSpec {
    Zero,
    Identity,
    Diag(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

impl OpSpec {
    /// Dimension implied by the literal, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            OpSpec::Zero | OpSpec::Identity => None,
            OpSpec::Diag(d) => Some(d.len()),
            OpSpec::Dense(rows) => Some(rows.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    Constant(OpSpec),
    /// `pieces.len() == breaks.len() + 1`.
    Steps { breaks: Vec<f64>, pieces: Vec<OpSpec> },
    Preset(String),
}

/// Scalar function of `t` for the Calabi profile.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarSpec {
    Const(f64),
    /// `0` before `t1`, `1` from `t1` on.
    Step(f64),
    Steps { breaks: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(u64),
    Real(f64),
    Text(String),
    TextList(Vec<String>),
    IntList(Vec<u64>),
    Reals(Vec<f64>),
    Op(OpSpec),
    Profile(ProfileSpec),
    Scalar(ScalarSpec),
    Sig(Signature),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Int,
    Real,
    PositiveReal,
    Text,
    TextList,
    IntList,
    Reals,
    Op,
    Profile,
    Scalar,
    Sig,
}

use Kind::*;

const INTEGRATING: &[Kind] = &[Riccati, Jacobi, Compare, Tube, Table1, Calabi];
const SPACED: &[Kind] = &[Riccati, Jacobi, Compare, Tube];

struct KeySpec {
    name: &'static str,
    ty: Ty,
    kinds: &'static [Kind],
}

const KEYS: &[KeySpec] = &[
    KeySpec { name: "n", ty: Ty::Int, kinds: SPACED },
    KeySpec { name: "index", ty: Ty::Int, kinds: SPACED },
    KeySpec { name: "gram", ty: Ty::Op, kinds: SPACED },
    KeySpec { name: "profile", ty: Ty::Profile, kinds: SPACED },
    KeySpec { name: "profile_upper", ty: Ty::Profile, kinds: &[Compare, Jacobi] },
    KeySpec { name: "initial", ty: Ty::Op, kinds: &[Riccati, Compare] },
    KeySpec { name: "initial_upper", ty: Ty::Op, kinds: &[Compare] },
    KeySpec { name: "f0", ty: Ty::Op, kinds: &[Jacobi] },
    KeySpec { name: "f0_prime", ty: Ty::Op, kinds: &[Jacobi] },
    KeySpec { name: "projection", ty: Ty::Op, kinds: &[Tube] },
    KeySpec { name: "tangent", ty: Ty::Op, kinds: &[Tube] },
    KeySpec { name: "probe", ty: Ty::Reals, kinds: &[Tube] },
    KeySpec { name: "radius", ty: Ty::PositiveReal, kinds: &[Tube] },
    KeySpec { name: "t_end", ty: Ty::PositiveReal, kinds: &[Riccati, Jacobi, Compare, Tube, Table1] },
    KeySpec { name: "atol", ty: Ty::PositiveReal, kinds: INTEGRATING },
    KeySpec { name: "rtol", ty: Ty::PositiveReal, kinds: INTEGRATING },
    KeySpec { name: "samples", ty: Ty::Int, kinds: &[Riccati, Jacobi, Compare, Tube, Table1, Calabi, CurvatureBound] },
    KeySpec { name: "expect", ty: Ty::Text, kinds: &[Riccati, Jacobi, CurvatureBound] },
    KeySpec { name: "t_star", ty: Ty::PositiveReal, kinds: &[Riccati] },
    KeySpec { name: "tolerance", ty: Ty::PositiveReal, kinds: &[Riccati, Table1, Calabi, GaussBonnet, Tube, CurvatureBound] },
    KeySpec { name: "row", ty: Ty::Int, kinds: &[Table1] },
    KeySpec { name: "k0", ty: Ty::Real, kinds: &[Table1] },
    KeySpec { name: "fiber_dim", ty: Ty::Int, kinds: &[Table1] },
    KeySpec { name: "k", ty: Ty::Scalar, kinds: &[Calabi] },
    KeySpec { name: "t_max", ty: Ty::PositiveReal, kinds: &[Calabi] },
    KeySpec { name: "signature", ty: Ty::Sig, kinds: &[GaussBonnet] },
    KeySpec { name: "form", ty: Ty::Text, kinds: &[GaussBonnet] },
    KeySpec { name: "levels", ty: Ty::IntList, kinds: &[GaussBonnet] },
    KeySpec { name: "seed", ty: Ty::Int, kinds: &[GaussBonnet, CurvatureBound, Suite] },
    KeySpec { name: "count", ty: Ty::Int, kinds: &[GaussBonnet, Suite] },
    KeySpec { name: "model", ty: Ty::Text, kinds: &[CurvatureBound] },
    KeySpec { name: "bound", ty: Ty::Real, kinds: &[CurvatureBound] },
    KeySpec { name: "direction", ty: Ty::Text, kinds: &[CurvatureBound] },
    KeySpec { name: "plot", ty: Ty::TextList, kinds: &[Riccati, Jacobi, Compare, Calabi] },
    KeySpec { name: "suite", ty: Ty::Text, kinds: &[Suite] },
];

fn key_spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

/// Allowed words for text-valued keys, per kind where it matters.
fn allowed_words(key: &str, kind: Kind) -> Option<&'static [&'static str]> {
    Some(match (key, kind) {
        ("expect", Riccati) => &["blowup", "complete", "zero"],
        ("expect", Jacobi) => &["det_positive", "det_negative"],
        ("expect", CurvatureBound) => &["holds", "violated"],
        ("form", _) => &["conformal", "perturbed"],
        ("direction", _) => &["at_least", "at_most"],
        ("suite", _) => crate::presets::SUITES,
        ("plot", Riccati) => &["trace", "norm"],
        ("plot", Jacobi) => &["det"],
        ("plot", Compare) => &["min_gap"],
        ("plot", Calabi) => &["y", "dy", "energy"],
        _ => return None,
    })
}

/// Seeded suites; the deterministic ones ignore the seed.
const SEEDED_SUITES: &[&str] = &["comparison", "sandwich", "wedge", "calabi", "gauss_bonnet", "gauss_trace", "jacobi"];

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub kind: Kind,
    /// Entries other than `kind`, in file order.
    pub entries: Vec<(String, Value)>,
}

impl Scenario {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn int(&self, key: &str) -> Option<u64> {
        match self.get(key) {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn real(&self, key: &str) -> Option<f64> {
        match self.get(key) {
            Some(Value::Real(v)) => Some(*v),
            Some(Value::Int(v)) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(Value::Text(v)) => Some(v),
            _ => None,
        }
    }

    pub fn texts(&self, key: &str) -> &[String] {
        match self.get(key) {
            Some(Value::TextList(v)) => v,
            _ => &[],
        }
    }

    pub fn ints(&self, key: &str) -> Option<&[u64]> {
        match self.get(key) {
            Some(Value::IntList(v)) => Some(v),
            _ => None,
        }
    }

    pub fn reals(&self, key: &str) -> Option<&[f64]> {
        match self.get(key) {
            Some(Value::Reals(v)) => Some(v),
            _ => None,
        }
    }

    pub fn op(&self, key: &str) -> Option<&OpSpec> {
        match self.get(key) {
            Some(Value::Op(v)) => Some(v),
            _ => None,
        }
    }

    pub fn profile(&self, key: &str) -> Option<&ProfileSpec> {
        match self.get(key) {
            Some(Value::Profile(v)) => Some(v),
            _ => None,
        }
    }

    pub fn scalar(&self, key: &str) -> Option<&ScalarSpec> {
        match self.get(key) {
            Some(Value::Scalar(v)) => Some(v),
            _ => None,
        }
    }

    pub fn signature(&self, key: &str) -> Option<Signature> {
        match self.get(key) {
            Some(Value::Sig(v)) => Some(*v),
            _ => None,
        }
    }

    /// Dimension from `n` or from the first operator literal that fixes one.
    pub fn dim(&self) -> Option<usize> {
        if let Some(n) = self.int("n") {
            return Some(n as usize);
        }
        self.entries.iter().find_map(|(_, v)| match v {
            Value::Op(op) => op.dim(),
            Value::Profile(ProfileSpec::Constant(op)) => op.dim(),
            Value::Profile(ProfileSpec::Steps { pieces, .. }) => pieces.iter().find_map(OpSpec::dim),
            _ => None,
        })
    }
}

/// A parse or validation error at a 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parses and validates a configuration. All diagnostics are collected.
pub fn parse_config(text: &str) -> Result<Vec<Scenario>, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut out: Vec<(usize, Scenario, Vec<usize>)> = Vec::new();
    let mut kind_seen: Vec<bool> = Vec::new();
    let mut ids = BTreeSet::new();
    let mut stems = BTreeSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut err = |m: String| diags.push(Diagnostic { line, message: m });
        if let Some(head) = l.strip_prefix('[') {
            let Some(inner) = head.strip_suffix(']') else {
                err(format!("unterminated section header `{l}`"));
                continue;
            };
            let mut parts = inner.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some("scenario"), Some(id), None) if valid_id(id) => {
                    if !ids.insert(id.to_string()) {
                        err(format!("duplicate scenario id `{id}`"));
                    } else if !stems.insert(crate::run::file_stem(id)) {
                        err(format!("scenario id `{id}` maps to the same output files as an earlier id"));
                    }
                    out.push((line, Scenario { id: id.into(), kind: Kind::Riccati, entries: Vec::new() }, Vec::new()));
                    kind_seen.push(false);
                }
                _ => err(format!("expected `[scenario <id>]` with id of letters, digits, `_`, `-`, `.`, `/`; got `{l}`")),
            }
            continue;
        }
        let Some((key, value)) = l.split_once('=') else {
            err(format!("expected `key = value`, got `{l}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some((_, sc, lines)) = out.last_mut() else {
            err(format!("`{key}` appears before any `[scenario ...]` section"));
            continue;
        };
        let seen = kind_seen.last_mut().expect("pushed with scenario");
        if key == "kind" {
            if *seen {
                err("duplicate key `kind`".into());
            } else if !sc.entries.is_empty() {
                err("`kind` must come first in a scenario".into());
            } else {
                match Kind::parse(value) {
                    Some(k) => sc.kind = k,
                    None => {
                        let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
                        err(format!("unknown kind `{value}` (expected one of {})", names.join(", ")));
                    }
                }
                *seen = true;
            }
            continue;
        }
        if !*seen {
            err(format!("`kind` must come first in a scenario, found `{key}`"));
            continue;
        }
        let Some(spec) = key_spec(key) else {
            err(format!("unknown key `{key}`"));
            continue;
        };
        if !spec.kinds.contains(&sc.kind) {
            err(format!("key `{key}` does not apply to kind `{}`", sc.kind));
            continue;
        }
        if sc.get(key).is_some() {
            err(format!("duplicate key `{key}`"));
            continue;
        }
        match parse_value(spec.ty, value).and_then(|v| check_words(key, sc.kind, v)) {
            Ok(v) => {
                sc.entries.push((key.to_string(), v));
                lines.push(line);
            }
            Err(m) => err(format!("`{key}`: {m}")),
        }
    }

    for ((line, sc, lines), seen) in out.iter().zip(&kind_seen) {
        if !seen {
            diags.push(Diagnostic { line: *line, message: format!("scenario `{}` has no `kind`", sc.id) });
            continue;
        }
        let before = diags.len();
        validate(sc, *line, lines, &mut diags);
        if diags.len() == before {
            if let Err(m) = crate::run::preflight(sc) {
                diags.push(Diagnostic { line: *line, message: format!("scenario `{}`: {m}", sc.id) });
            }
        }
    }
    if diags.is_empty() {
        Ok(out.into_iter().map(|(_, s, _)| s).collect())
    } else {
        diags.sort_by_key(|d| d.line);
        Err(diags)
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "_-./".contains(c))
}

fn check_words(key: &str, kind: Kind, v: Value) -> Result<Value, String> {
    let Some(words) = allowed_words(key, kind) else { return Ok(v) };
    let bad = match &v {
        Value::Text(t) => (!words.contains(&t.as_str())).then(|| t.clone()),
        Value::TextList(ts) => ts.iter().find(|t| !words.contains(&t.as_str())).cloned(),
        _ => None,
    };
    match bad {
        Some(b) => Err(format!("`{b}` is not one of {}", words.join(", "))),
        None => Ok(v),
    }
}

/// Cross-key checks: required keys, dimensions, presets, ranges.
fn validate(sc: &Scenario, header: usize, lines: &[usize], diags: &mut Vec<Diagnostic>) {
    let line_of = |key: &str| sc.entries.iter().position(|(k, _)| k == key).map_or(header, |i| lines[i]);
    let mut err = |line: usize, m: String| diags.push(Diagnostic { line, message: format!("scenario `{}`: {m}", sc.id) });

    let required: &[&str] = match sc.kind {
        Riccati => &["profile", "initial", "t_end"],
        Jacobi => &["profile", "t_end"],
        Compare => &["profile", "profile_upper", "initial", "initial_upper", "t_end"],
        Table1 => &["row"],
        Calabi => &["k"],
        GaussBonnet => &["signature", "seed"],
        Tube => &["projection", "probe", "radius", "t_end"],
        CurvatureBound => &["model", "bound", "direction", "seed"],
        Suite => &["suite"],
    };
    for key in required {
        if sc.get(key).is_none() {
            err(header, format!("missing required key `{key}`"));
        }
    }

    if SPACED.contains(&sc.kind) {
        match sc.dim() {
            None => err(header, "dimension unknown: give `n` or a sized operator".into()),
            Some(0) => err(line_of("n"), "dimension must be positive".into()),
            Some(n) => {
                if let Some(k) = sc.int("index") {
                    if k as usize > n {
                        err(line_of("index"), format!("index {k} exceeds dimension {n}"));
                    }
                    if sc.get("gram").is_some() {
                        err(line_of("index"), "give either `gram` or `index`, not both".into());
                    }
                }
                for (i, (key, v)) in sc.entries.iter().enumerate() {
                    check_dims(key, v, n, &mut |m| err(lines[i], m));
                }
                if let Some(p) = sc.reals("probe") {
                    if p.len() != n {
                        err(line_of("probe"), format!("probe has {} entries, dimension is {n}", p.len()));
                    }
                }
            }
        }
    }

    if let Some(row) = sc.int("row") {
        if !(1..=6).contains(&row) {
            err(line_of("row"), format!("row {row} outside 1..=6"));
        }
    }
    if let Some(fd) = sc.int("fiber_dim") {
        if fd == 0 {
            err(line_of("fiber_dim"), "fiber_dim must be positive".into());
        }
    }
    for key in ["samples", "count"] {
        if sc.int(key) == Some(0) {
            err(line_of(key), format!("`{key}` must be positive"));
        }
    }
    if let Some(levels) = sc.ints("levels") {
        if levels.is_empty() || levels[0] == 0 || levels.windows(2).any(|w| w[1] <= w[0]) {
            err(line_of("levels"), "levels must be positive and strictly increasing".into());
        }
    }
    if sc.kind == Suite {
        if let Some(name) = sc.text("suite") {
            if SEEDED_SUITES.contains(&name) && sc.get("seed").is_none() {
                err(header, format!("suite `{name}` is randomized and needs a `seed`"));
            }
        }
    }
    if sc.get("t_star").is_some() && sc.text("expect") != Some("blowup") {
        err(line_of("t_star"), "`t_star` needs `expect = blowup`".into());
    }
    if sc.kind == Jacobi && sc.get("expect").is_some() && sc.get("profile_upper").is_none() {
        err(line_of("expect"), "determinant expectations compare two profiles; add `profile_upper`".into());
    }
    if sc.kind == CurvatureBound {
        if let Some(m) = sc.text("model") {
            if riccomp::warped::model_by_id::<f64>(m).is_err() {
                err(line_of("model"), format!("unknown model `{m}`"));
            }
        }
    }
    for key in ["profile", "profile_upper"] {
        if let Some(ProfileSpec::Preset(name)) = sc.profile(key) {
            if !crate::presets::profile_preset_exists(name) {
                err(line_of(key), format!("unknown profile preset `{name}`"));
            }
        }
    }
    if let Some(ScalarSpec::Steps { breaks, values }) = sc.scalar("k") {
        if values.len() != breaks.len() + 1 {
            err(line_of("k"), "steps need one more value than breaks".into());
        }
    }
}

fn check_dims(key: &str, v: &Value, n: usize, err: &mut dyn FnMut(String)) {
    let mut check = |op: &OpSpec| {
        if let Some(d) = op.dim() {
            if d != n {
                err(format!("`{key}` is {d}-dimensional, scenario is {n}-dimensional"));
            }
        }
    };
    match v {
        Value::Op(op) | Value::Profile(ProfileSpec::Constant(op)) => check(op),
        Value::Profile(ProfileSpec::Steps { pieces, .. }) => pieces.iter().for_each(check),
        _ => {}
    }
}

// ---------------------------------------------------------------------------
// Values

fn parse_value(ty: Ty, s: &str) -> Result<Value, String> {
    if s.is_empty() {
        return Err("empty value".into());
    }
    Ok(match ty {
        Ty::Int => Value::Int(parse_int(s)?),
        Ty::Real => Value::Real(parse_real(s)?),
        Ty::PositiveReal => {
            let v = parse_real(s)?;
            if v <= 0.0 {
                return Err(format!("must be positive, got {v}"));
            }
            Value::Real(v)
        }
        Ty::Text => {
            if !valid_word(s) {
                return Err(format!("`{s}` is not a single word"));
            }
            Value::Text(s.into())
        }
        Ty::TextList => Value::TextList(
            split_top(s, ',').into_iter().map(|w| if valid_word(w) { Ok(w.to_string()) } else { Err(format!("`{w}` is not a word")) }).collect::<Result<_, _>>()?,
        ),
        Ty::IntList => Value::IntList(split_top(s, ',').into_iter().map(parse_int).collect::<Result<_, _>>()?),
        Ty::Reals => Value::Reals(parse_reals(s)?),
        Ty::Op => Value::Op(parse_op(s)?),
        Ty::Profile => Value::Profile(parse_profile(s)?),
        Ty::Scalar => Value::Scalar(parse_scalar(s)?),
        Ty::Sig => Value::Sig(parse_signature(s)?),
    })
}

fn valid_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "_-./?=&+".contains(c))
}

fn parse_int(s: &str) -> Result<u64, String> {
    s.trim().parse().map_err(|_| format!("`{}` is not a non-negative integer", s.trim()))
}

fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v: f64 = match s {
        "pi" => std::f64::consts::PI,
        "pi/2" => std::f64::consts::FRAC_PI_2,
        _ => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    split_top(s, ',').into_iter().map(parse_real).collect()
}

/// Splits at `sep` outside brackets and parentheses.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(s[start..i].trim());
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn call<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?.trim_start().strip_prefix('(')?.strip_suffix(')')
}

fn parse_op(s: &str) -> Result<OpSpec, String> {
    let s = s.trim();
    match s {
        "zero" => return Ok(OpSpec::Zero),
        "identity" => return Ok(OpSpec::Identity),
        _ => {}
    }
    if let Some(inner) = call(s, "diag") {
        let d = parse_reals(inner)?;
        if d.is_empty() {
            return Err("diag() needs at least one entry".into());
        }
        return Ok(OpSpec::Diag(d));
    }
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let rows = split_top(inner, ',')
            .into_iter()
            .map(|r| r.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(|| format!("bad matrix row `{r}`")).and_then(parse_reals))
            .collect::<Result<Vec<_>, _>>()?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err("matrix must be square and non-empty".into());
        }
        return Ok(OpSpec::Dense(rows));
    }
    Err(format!("`{s}` is not an operator (zero, identity, diag(...), [[...], ...])"))
}

fn parse_profile(s: &str) -> Result<ProfileSpec, String> {
    let s = s.trim();
    if let Some(name) = s.strip_prefix("preset:") {
        if !valid_word(name) {
            return Err(format!("bad preset name `{name}`"));
        }
        return Ok(ProfileSpec::Preset(name.into()));
    }
    if let Some(inner) = call(s, "steps") {
        let parts = split_top(inner, ';');
        let breaks = parse_reals(parts[0])?;
        let pieces = parts[1..].iter().map(|p| parse_op(p)).collect::<Result<Vec<_>, _>>()?;
        if pieces.len() != breaks.len() + 1 {
            return Err(format!("{} breaks need {} pieces, got {}", breaks.len(), breaks.len() + 1, pieces.len()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) || breaks.iter().any(|b| *b <= 0.0) {
            return Err("breaks must be positive and increasing".into());
        }
        return Ok(ProfileSpec::Steps { breaks, pieces });
    }
    parse_op(s).map(ProfileSpec::Constant)
}

fn parse_scalar(s: &str) -> Result<ScalarSpec, String> {
    let s = s.trim();
    if let Some(inner) = call(s, "const") {
        return Ok(ScalarSpec::Const(parse_real(inner)?));
    }
    if let Some(inner) = call(s, "step") {
        let t = parse_real(inner)?;
        if t < 0.0 {
            return Err("step time must be non-negative".into());
        }
        return Ok(ScalarSpec::Step(t));
    }
    if let Some(inner) = call(s, "steps") {
        let parts = split_top(inner, ';');
        let breaks = parse_reals(parts[0])?;
        let values = parts[1..].iter().map(|p| parse_real(p)).collect::<Result<Vec<_>, _>>()?;
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err("breaks must be increasing".into());
        }
        return Ok(ScalarSpec::Steps { breaks, values });
    }
    Err(format!("`{s}` is not a scalar profile (const(v), step(t1), steps(b1, ...; v0; v1; ...))"))
}

fn parse_signature(s: &str) -> Result<Signature, String> {
    let inner = s.trim().strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(|| format!("`{s}` is not a signature like (+,-)"))?;
    let signs = split_top(inner, ',')
        .into_iter()
        .map(|p| match p {
            "+" => Ok(1i8),
            "-" => Ok(-1i8),
            _ => Err(format!("bad sign `{p}`")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    match signs[..] {
        [a, b] => Signature::new(a, b).map_err(|e| e.to_string()),
        _ => Err("a surface signature has two signs".into()),
    }
}

// ---------------------------------------------------------------------------
// Printing

fn real(v: f64) -> String {
    format!("{v:?}")
}

fn reals(v: &[f64]) -> String {
    v.iter().map(|x| real(*x)).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for OpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpSpec::Zero => f.write_str("zero"),
            OpSpec::Identity => f.write_str("identity"),
            OpSpec::Diag(d) => write!(f, "diag({})", reals(d)),
            OpSpec::Dense(rows) => {
                let r: Vec<String> = rows.iter().map(|r| format!("[{}]", reals(r))).collect();
                write!(f, "[{}]", r.join(", "))
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => f.write_str(&real(*v)),
            Value::Text(t) => f.write_str(t),
            Value::TextList(ts) => f.write_str(&ts.join(", ")),
            Value::IntList(v) => f.write_str(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")),
            Value::Reals(v) => f.write_str(&reals(v)),
            Value::Op(op) => write!(f, "{op}"),
            Value::Profile(ProfileSpec::Constant(op)) => write!(f, "{op}"),
            Value::Profile(ProfileSpec::Preset(p)) => write!(f, "preset:{p}"),
            Value::Profile(ProfileSpec::Steps { breaks, pieces }) => {
                let p: Vec<String> = pieces.iter().map(|o| o.to_string()).collect();
                write!(f, "steps({}; {})", reals(breaks), p.join("; "))
            }
            Value::Scalar(ScalarSpec::Const(v)) => write!(f, "const({})", real(*v)),
            Value::Scalar(ScalarSpec::Step(t)) => write!(f, "step({})", real(*t)),
            Value::Scalar(ScalarSpec::Steps { breaks, values }) => {
                let v: Vec<String> = values.iter().map(|x| real(*x)).collect();
                write!(f, "steps({}; {})", reals(breaks), v.join("; "))
            }
            Value::Sig(s) => write!(f, "{s}"),
        }
    }
}

/// Canonical text form; `parse_config(&print_config(s)) == Ok(s)`.
pub fn print_config(scenarios: &[Scenario]) -> String {
    let mut out = String::new();
    for (i, sc) in scenarios.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("[scenario {}]\nkind = {}\n", sc.id, sc.kind));
        for (k, v) in &sc.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}
