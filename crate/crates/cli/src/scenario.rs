//! Scenario files.
//!
//! A run file is TOML with one `[[scenario]]` table per experiment. Every
//! real number is a string (see [`crate::expr`]); integers stay integers.
//! Unknown keys are rejected.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `id` | required | unique name, `[A-Za-z0-9._-]+`, also the output subdirectory |
//! | `family` | required | `direction`, `rectified`, `current`, `oned` or `generic` |
//! | `starts` | required | lifted start points, one list of strings each |
//! | `t_end` | `"1e4"` | horizon |
//! | `rtol`, `atol` | `"1e-10"`, `"1e-12"` | integrator tolerances |
//! | `n` | `64` | histogram bins per axis |
//! | `bound` | `64` | direction search bound |
//! | `panel_seed`, `panel_size` | `0`, `10` | test-function panel |
//! | `rel_tol`, `abs_tol` | `"1e-2"`, `"1e-3"` | comparison passes when every component error is ≤ `abs_tol + rel_tol·|predicted|` |
//! | `measures` | `true` | write histograms and residual panels |
//! | `period_tau_max` | `"10"` | period search horizon, `"0"` to skip |
//!
//! Family keys: `a` and `xi` (direction); `a`, `xi` and `phi` (rectified);
//! `potential` and `conductivity` (current); `b` (oned); `components`
//! (generic). A scalar field is `{ mode, constant, offset, terms }` with
//! `mode` `"raw"` (default) or `"squared"` and terms `{ k, cos, sin }`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;
use torus_drift::field::{Diffeomorphism, FieldSpec, MatrixField, Mode, ScalarField, Term};

use crate::expr::parse_real;
use crate::CliError;

type Num = Spanned<String>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    #[serde(default)]
    scenario: Vec<RawScenario>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Direction,
    Rectified,
    Current,
    OneD,
    Generic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: Spanned<String>,
    family: Family,
    starts: Vec<Vec<Num>>,
    t_end: Option<Num>,
    rtol: Option<Num>,
    atol: Option<Num>,
    n: Option<usize>,
    bound: Option<i64>,
    panel_seed: Option<u64>,
    panel_size: Option<usize>,
    rel_tol: Option<Num>,
    abs_tol: Option<Num>,
    measures: Option<bool>,
    period_tau_max: Option<Num>,
    a: Option<RawScalar>,
    xi: Option<Vec<Num>>,
    phi: Option<RawDiffeo>,
    b: Option<RawScalar>,
    potential: Option<RawScalar>,
    conductivity: Option<RawConductivity>,
    components: Option<Vec<RawScalar>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScalar {
    #[serde(default)]
    mode: RawMode,
    constant: Option<Num>,
    offset: Option<Num>,
    #[serde(default)]
    terms: Vec<RawTerm>,
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawMode {
    #[default]
    Raw,
    Squared,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    k: Vec<Num>,
    cos: Option<Num>,
    sin: Option<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiffeo {
    lattice: Vec<Vec<i64>>,
    #[serde(default)]
    periodic: Vec<RawScalar>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConductivity {
    ridge: Option<Num>,
    #[serde(default)]
    factor: Vec<Vec<RawScalar>>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub spec: FieldSpec,
    pub starts: Vec<Vec<f64>>,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub n: usize,
    pub bound: i64,
    pub panel_seed: u64,
    pub panel_size: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub measures: bool,
    pub period_tau_max: f64,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.starts[0].len()
    }
}

struct Ctx<'a> {
    src: &'a str,
    origin: &'a str,
}

impl Ctx<'_> {
    fn line(&self, span: std::ops::Range<usize>) -> usize {
        self.src[..span.start.min(self.src.len())].matches('\n').count() + 1
    }

    fn fail(&self, span: std::ops::Range<usize>, field: &str, msg: impl std::fmt::Display) -> CliError {
        CliError::Scenario(format!("{}:{}: {field}: {msg}", self.origin, self.line(span)))
    }

    fn real(&self, n: &Num, field: &str) -> Result<f64, CliError> {
        parse_real(n.get_ref()).map_err(|e| self.fail(n.span(), field, e))
    }

    fn opt_real(&self, n: &Option<Num>, field: &str, default: f64) -> Result<f64, CliError> {
        n.as_ref().map_or(Ok(default), |n| self.real(n, field))
    }

    fn scalar(&self, s: &RawScalar, dim: usize, at: std::ops::Range<usize>, field: &str) -> Result<ScalarField, CliError> {
        let constant = self.opt_real(&s.constant, &format!("{field}.constant"), 0.0)?;
        let mut terms = Vec::with_capacity(s.terms.len());
        for (i, t) in s.terms.iter().enumerate() {
            let name = format!("{field}.terms[{i}]");
            if t.k.len() != dim {
                let span = t.k.first().map_or(at.clone(), |k| k.span());
                return Err(self.fail(span, &name, format!("frequency has {} components, expected {dim}", t.k.len())));
            }
            let k = t
                .k
                .iter()
                .map(|v| self.real(v, &format!("{name}.k")))
                .collect::<Result<Vec<_>, _>>()?;
            let c = self.opt_real(&t.cos, &format!("{name}.cos"), 0.0)?;
            let s = self.opt_real(&t.sin, &format!("{name}.sin"), 0.0)?;
            terms.push(Term::new(k, c, s));
        }
        let mode = match s.mode {
            RawMode::Raw => {
                if let Some(o) = &s.offset {
                    return Err(self.fail(o.span(), &format!("{field}.offset"), "offset needs mode = \"squared\""));
                }
                Mode::Raw
            }
            RawMode::Squared => Mode::Squared {
                offset: self.opt_real(&s.offset, &format!("{field}.offset"), 0.0)?,
            },
        };
        ScalarField::new(dim, constant, terms, mode).map_err(|e| self.fail(at, field, e))
    }
}

pub fn parse_scenarios(path: &Path) -> Result<Vec<Scenario>, CliError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_scenarios_str(&src, &path.display().to_string())
}

/// Parses a run file held in memory; `origin` prefixes error messages.
pub fn parse_scenarios_str(src: &str, origin: &str) -> Result<Vec<Scenario>, CliError> {
    let file: RunFile =
        toml::from_str(src).map_err(|e| CliError::Scenario(format!("{origin}: {e}")))?;
    let ctx = Ctx { src, origin };
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(file.scenario.len());
    for raw in &file.scenario {
        let sc = build(&ctx, raw)?;
        if !seen.insert(sc.id.clone()) {
            return Err(ctx.fail(raw.id.span(), "id", format!("duplicate scenario id {:?}", sc.id)));
        }
        out.push(sc);
    }
    if out.is_empty() {
        return Err(CliError::Scenario(format!("{origin}: no [[scenario]] tables")));
    }
    Ok(out)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn build(ctx: &Ctx<'_>, raw: &RawScenario) -> Result<Scenario, CliError> {
    let id = raw.id.get_ref().clone();
    let at = raw.id.span();
    if !valid_id(&id) {
        return Err(ctx.fail(at, "id", format!("{id:?} must match [A-Za-z0-9._-]+")));
    }
    let field = |name: &str| format!("{id}.{name}");

    if raw.starts.is_empty() {
        return Err(ctx.fail(at, &field("starts"), "at least one start point is required"));
    }
    let dim = raw.starts[0].len();
    if dim == 0 {
        return Err(ctx.fail(at, &field("starts"), "start points must be nonempty"));
    }
    let mut starts = Vec::with_capacity(raw.starts.len());
    for (i, s) in raw.starts.iter().enumerate() {
        if s.len() != dim {
            return Err(ctx.fail(at.clone(), &field(&format!("starts[{i}]")), format!("has {} components, expected {dim}", s.len())));
        }
        starts.push(
            s.iter()
                .map(|v| ctx.real(v, &field(&format!("starts[{i}]"))))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }

    let allowed: &[&str] = match raw.family {
        Family::Direction => &["a", "xi"],
        Family::Rectified => &["a", "xi", "phi"],
        Family::Current => &["potential", "conductivity"],
        Family::OneD => &["b"],
        Family::Generic => &["components"],
    };
    let present = [
        ("a", raw.a.is_some()),
        ("xi", raw.xi.is_some()),
        ("phi", raw.phi.is_some()),
        ("b", raw.b.is_some()),
        ("potential", raw.potential.is_some()),
        ("conductivity", raw.conductivity.is_some()),
        ("components", raw.components.is_some()),
    ];
    for (name, is) in present {
        if is && !allowed.contains(&name) {
            return Err(ctx.fail(at.clone(), &field(name), format!("not a key of family {:?}", raw.family)));
        }
    }
    let missing = |name: &str| ctx.fail(at.clone(), &field(name), "required for this family");
    let xi = |ctx: &Ctx<'_>| -> Result<Vec<f64>, CliError> {
        let xi = raw.xi.as_ref().ok_or_else(|| missing("xi"))?;
        if xi.len() != dim {
            return Err(ctx.fail(at.clone(), &field("xi"), format!("has {} components, expected {dim}", xi.len())));
        }
        xi.iter().map(|v| ctx.real(v, &field("xi"))).collect()
    };
    let spec_err = |e: torus_drift::Error| ctx.fail(at.clone(), &field("family"), e);

    let spec = match raw.family {
        Family::Direction => {
            let a = ctx.scalar(raw.a.as_ref().ok_or_else(|| missing("a"))?, dim, at.clone(), &field("a"))?;
            FieldSpec::direction(a, &xi(ctx)?).map_err(spec_err)?
        }
        Family::Rectified => {
            let a = ctx.scalar(raw.a.as_ref().ok_or_else(|| missing("a"))?, dim, at.clone(), &field("a"))?;
            let p = raw.phi.as_ref().ok_or_else(|| missing("phi"))?;
            if p.lattice.len() != dim || p.lattice.iter().any(|r| r.len() != dim) {
                return Err(ctx.fail(at.clone(), &field("phi.lattice"), format!("must be {dim}×{dim}")));
            }
            let periodic = if p.periodic.is_empty() {
                vec![ScalarField::zero(dim); dim]
            } else if p.periodic.len() == dim {
                p.periodic
                    .iter()
                    .enumerate()
                    .map(|(i, s)| ctx.scalar(s, dim, at.clone(), &field(&format!("phi.periodic[{i}]"))))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                return Err(ctx.fail(at.clone(), &field("phi.periodic"), format!("needs {dim} components")));
            };
            let lattice = p.lattice.iter().flatten().copied().collect();
            let phi = Diffeomorphism::new(dim, lattice, periodic).map_err(spec_err)?;
            FieldSpec::rectified(a, &xi(ctx)?, phi).map_err(spec_err)?
        }
        Family::Current => {
            let v = ctx.scalar(raw.potential.as_ref().ok_or_else(|| missing("potential"))?, dim, at.clone(), &field("potential"))?;
            let (ridge, factor) = match &raw.conductivity {
                None => (1.0, Vec::new()),
                Some(c) => (ctx.opt_real(&c.ridge, &field("conductivity.ridge"), 0.0)?, c.factor.iter().collect::<Vec<_>>()),
            };
            let factor = if factor.is_empty() {
                vec![ScalarField::zero(dim); dim * dim]
            } else {
                if factor.len() != dim || factor.iter().any(|r| r.len() != dim) {
                    return Err(ctx.fail(at.clone(), &field("conductivity.factor"), format!("must be {dim}×{dim}")));
                }
                let mut out = Vec::with_capacity(dim * dim);
                for (i, row) in factor.iter().enumerate() {
                    for (j, s) in row.iter().enumerate() {
                        out.push(ctx.scalar(s, dim, at.clone(), &field(&format!("conductivity.factor[{i}][{j}]")))?);
                    }
                }
                out
            };
            let m = MatrixField::new(dim, factor, ridge).map_err(spec_err)?;
            FieldSpec::current(m, v).map_err(spec_err)?
        }
        Family::OneD => {
            if dim != 1 {
                return Err(ctx.fail(at.clone(), &field("starts"), "oned scenarios need 1-component starts"));
            }
            let b = ctx.scalar(raw.b.as_ref().ok_or_else(|| missing("b"))?, 1, at.clone(), &field("b"))?;
            FieldSpec::one_d(b).map_err(spec_err)?
        }
        Family::Generic => {
            let comps = raw.components.as_ref().ok_or_else(|| missing("components"))?;
            if comps.len() != dim {
                return Err(ctx.fail(at.clone(), &field("components"), format!("needs {dim} components")));
            }
            let comps = comps
                .iter()
                .enumerate()
                .map(|(i, s)| ctx.scalar(s, dim, at.clone(), &field(&format!("components[{i}]"))))
                .collect::<Result<Vec<_>, _>>()?;
            FieldSpec::generic(comps).map_err(spec_err)?
        }
    };

    let positive = |v: f64, name: &str| -> Result<f64, CliError> {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(ctx.fail(at.clone(), &field(name), format!("must be positive, got {v}")))
        }
    };
    let nonneg = |v: f64, name: &str| -> Result<f64, CliError> {
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(ctx.fail(at.clone(), &field(name), format!("must be nonnegative, got {v}")))
        }
    };
    let n = raw.n.unwrap_or(64);
    if n < 2 {
        return Err(ctx.fail(at.clone(), &field("n"), "must be at least 2"));
    }
    let bound = raw.bound.unwrap_or(64);
    if bound < 1 {
        return Err(ctx.fail(at.clone(), &field("bound"), "must be at least 1"));
    }
    Ok(Scenario {
        spec,
        starts,
        t_end: positive(ctx.opt_real(&raw.t_end, &field("t_end"), 1e4)?, "t_end")?,
        rtol: positive(ctx.opt_real(&raw.rtol, &field("rtol"), 1e-10)?, "rtol")?,
        atol: positive(ctx.opt_real(&raw.atol, &field("atol"), 1e-12)?, "atol")?,
        n,
        bound,
        panel_seed: raw.panel_seed.unwrap_or(0),
        panel_size: raw.panel_size.unwrap_or(10),
        rel_tol: nonneg(ctx.opt_real(&raw.rel_tol, &field("rel_tol"), 1e-2)?, "rel_tol")?,
        abs_tol: nonneg(ctx.opt_real(&raw.abs_tol, &field("abs_tol"), 1e-3)?, "abs_tol")?,
        measures: raw.measures.unwrap_or(true),
        period_tau_max: nonneg(ctx.opt_real(&raw.period_tau_max, &field("period_tau_max"), 10.0)?, "period_tau_max")?,
        id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[scenario]]
id = "flat"
family = "direction"
starts = [["0", "0"]]
xi = ["3", "4"]
a = { constant = "1.5" }
"#;

    #[test]
    fn defaults_apply() {
        let s = parse_scenarios_str(MINIMAL, "minimal").unwrap();
        assert_eq!(s.len(), 1);
        let s = &s[0];
        assert_eq!((s.t_end, s.rtol, s.atol, s.n, s.bound), (1e4, 1e-10, 1e-12, 64, 64));
        assert_eq!((s.panel_seed, s.panel_size, s.measures), (0, 10, true));
        match &s.spec {
            FieldSpec::Direction { xi, .. } => assert_eq!(xi, &vec![0.6, 0.8]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let src = MINIMAL.replace("starts", "integratr = 1\nstarts");
        let err = parse_scenarios_str(&src, "typo").unwrap_err().to_string();
        assert!(err.contains("integratr"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let src = format!("{MINIMAL}{MINIMAL}");
        let err = parse_scenarios_str(&src, "dup").unwrap_err().to_string();
        assert!(err.contains("duplicate") && err.contains("dup:10"), "{err}");
    }

    #[test]
    fn bad_number_reports_line_and_field() {
        let src = MINIMAL.replace("\"1.5\"", "\"1.5x\"");
        let err = parse_scenarios_str(&src, "num").unwrap_err().to_string();
        assert!(err.contains("num:7") && err.contains("flat.a.constant"), "{err}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let src = MINIMAL.replace("xi = [\"3\", \"4\"]", "xi = [\"3\"]");
        assert!(parse_scenarios_str(&src, "dim").is_err());
        let src = MINIMAL.replace("a = { constant = \"1.5\" }", "a = { constant = \"2\", terms = [{ k = [\"1\"], sin = \"1\" }] }");
        assert!(parse_scenarios_str(&src, "dim").is_err());
    }

    #[test]
    fn foreign_family_keys_rejected() {
        let src = MINIMAL.replace("a = {", "b = { constant = \"1\" }\na = {");
        let err = parse_scenarios_str(&src, "fam").unwrap_err().to_string();
        assert!(err.contains("flat.b"), "{err}");
    }
}
