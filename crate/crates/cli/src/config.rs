//! Experiment configuration files.
//!
//! A configuration is a TOML document. Unknown keys are rejected anywhere in
//! the document.
//!
//! ```toml
//! n_schedule = [1, 2, 4, 8]              # required, strictly ascending, >= 1
//! alphas = [0.25, 0.5, 0.75, 1.0]        # each in (0, 1]
//! checks = ["sweep", "pstar"]            # eval sweep variance chatterji prop2 pstar mc
//! format = "csv"                         # csv | json
//! seed = 0
//! state_cap = 10000000
//! enumeration_max_n = 6                  # horizon limit for chatterji and prop2
//! chatterji_p = [1.0, 1.5, 2.0]          # each in [1, 2]
//! mc_n = 50
//! mc_samples = 100000
//!
//! [[family]]                             # one or more
//! name = "coin"
//! origin = 0.0                           # lattice origin, default 0
//! step = 1.0                             # lattice step, default 1
//! members = [[[-1, 0.5], [1, 0.5]], [[1, 1.0]]]   # [value, weight] pairs per member
//!
//! [[phi]]                                # one or more
//! name = "dev"
//! expr = "abs(x - 0.5)"                  # expression form needs `lipschitz`
//! lipschitz = 1.0
//!
//! [[phi]]
//! name = "std"
//! catalog = "standard"                   # standard linear abs_dev neg_abs_dev clip dist_sq
//! params = []
//! ```
//!
//! Everything except `n_schedule`, `family` and `phi` has the default shown.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sublin_core::ambiguity::{validate_family, AmbiguityFamily, DiscreteDistribution, LatticeSpec};
use sublin_core::engine::DEFAULT_STATE_CAP;
use sublin_core::lln_rates::{catalog_for, LipschitzFunction};
use sublin_core::mean_bounds;
use thiserror::Error;
use toml::Spanned;

use crate::phi::{parse_phi, PhiExpr};

/// Random pairs used to spot-check a declared Lipschitz constant.
pub const LIPSCHITZ_SPOT_PAIRS: usize = 10_000;

pub const DEFAULT_ALPHAS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_CHATTERJI_P: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];
pub const DEFAULT_ENUMERATION_MAX_N: usize = 6;
pub const DEFAULT_MC_N: usize = 50;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Eval,
    Sweep,
    Variance,
    Chatterji,
    Prop2,
    Pstar,
    Mc,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Eval,
        Check::Sweep,
        Check::Variance,
        Check::Chatterji,
        Check::Prop2,
        Check::Pstar,
        Check::Mc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Eval => "eval",
            Check::Sweep => "sweep",
            Check::Variance => "variance",
            Check::Chatterji => "chatterji",
            Check::Prop2 => "prop2",
            Check::Pstar => "pstar",
            Check::Mc => "mc",
        }
    }

    pub fn from_name(name: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn from_name(name: &str) -> Option<Format> {
        match name {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub name: String,
    pub family: AmbiguityFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogKind {
    /// The family-relative set from [`catalog_for`].
    Standard,
    Linear,
    AbsDev,
    NegAbsDev,
    Clip,
    /// Squared distance to the family's mean interval.
    DistSq,
}

impl CatalogKind {
    const ALL: [CatalogKind; 6] = [
        CatalogKind::Standard,
        CatalogKind::Linear,
        CatalogKind::AbsDev,
        CatalogKind::NegAbsDev,
        CatalogKind::Clip,
        CatalogKind::DistSq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CatalogKind::Standard => "standard",
            CatalogKind::Linear => "linear",
            CatalogKind::AbsDev => "abs_dev",
            CatalogKind::NegAbsDev => "neg_abs_dev",
            CatalogKind::Clip => "clip",
            CatalogKind::DistSq => "dist_sq",
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            CatalogKind::Standard | CatalogKind::DistSq => 0,
            CatalogKind::AbsDev | CatalogKind::NegAbsDev => 1,
            CatalogKind::Linear | CatalogKind::Clip => 2,
        }
    }

    fn from_name(name: &str) -> Option<CatalogKind> {
        CatalogKind::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiKind {
    Expr { expr: PhiExpr, lipschitz: f64 },
    Catalog { kind: CatalogKind, params: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiSpec {
    pub name: String,
    pub kind: PhiKind,
}

impl PhiSpec {
    /// Concrete test functions for one family. Catalog `standard` expands
    /// to several; names are then `<phi>/<function>`.
    pub fn instantiate(&self, f: &AmbiguityFamily) -> Vec<LipschitzFunction> {
        match &self.kind {
            PhiKind::Expr { expr, lipschitz } => {
                let e = expr.clone();
                vec![LipschitzFunction::new(self.name.clone(), *lipschitz, move |x| {
                    e.eval(x)
                })]
            }
            PhiKind::Catalog { kind, params } => {
                let p = params;
                let one = match kind {
                    CatalogKind::Standard => {
                        return catalog_for(f)
                            .expect("validated family")
                            .into_iter()
                            .map(|g| {
                                let name = format!("{}/{}", self.name, g.name());
                                rename(g, name)
                            })
                            .collect();
                    }
                    CatalogKind::Linear => LipschitzFunction::linear(p[0], p[1]),
                    CatalogKind::AbsDev => LipschitzFunction::abs_dev(p[0]),
                    CatalogKind::NegAbsDev => LipschitzFunction::neg_abs_dev(p[0]),
                    CatalogKind::Clip => LipschitzFunction::clip(p[0], p[1]),
                    CatalogKind::DistSq => {
                        let (lo, hi) = mean_bounds(f).expect("validated family");
                        let (a, b) = f.atom_range();
                        LipschitzFunction::dist_sq_interval(lo, hi, a, b)
                    }
                };
                vec![rename(one, self.name.clone())]
            }
        }
    }
}

fn rename(g: LipschitzFunction, name: String) -> LipschitzFunction {
    let crit = g.critical_points().to_vec();
    let l = g.lipschitz();
    LipschitzFunction::new(name, l, move |x| g.eval(x)).with_critical_points(&crit)
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub families: Vec<FamilySpec>,
    pub phis: Vec<PhiSpec>,
    pub n_schedule: Vec<usize>,
    pub alphas: Vec<f64>,
    pub checks: Vec<Check>,
    pub format: Format,
    pub seed: u64,
    pub state_cap: usize,
    pub enumeration_max_n: usize,
    pub chatterji_p: Vec<f64>,
    pub mc_n: usize,
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("semantic error at line {line}, column {column}: {message}")]
    Semantic {
        line: usize,
        column: usize,
        message: String,
    },
}

impl ConfigError {
    pub fn line(&self) -> usize {
        match self {
            ConfigError::Syntax { line, .. }
            | ConfigError::Schema { line, .. }
            | ConfigError::Semantic { line, .. } => *line,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_schedule: Spanned<Vec<i64>>,
    alphas: Option<Spanned<Vec<f64>>>,
    checks: Option<Spanned<Vec<Spanned<String>>>>,
    format: Option<Spanned<String>>,
    seed: Option<u64>,
    state_cap: Option<Spanned<i64>>,
    enumeration_max_n: Option<Spanned<i64>>,
    chatterji_p: Option<Spanned<Vec<f64>>>,
    mc_n: Option<Spanned<i64>>,
    mc_samples: Option<Spanned<i64>>,
    family: Spanned<Vec<Spanned<RawFamily>>>,
    phi: Spanned<Vec<Spanned<RawPhi>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    name: Spanned<String>,
    origin: Option<f64>,
    step: Option<f64>,
    members: Vec<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhi {
    name: Spanned<String>,
    expr: Option<Spanned<String>>,
    lipschitz: Option<Spanned<f64>>,
    catalog: Option<Spanned<String>>,
    params: Option<Spanned<Vec<f64>>>,
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn position(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.text.len());
        let before = &self.text.as_bytes()[..offset];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let line_start = before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        let column = self.text[line_start..offset].chars().count() + 1;
        (line, column)
    }

    fn semantic(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let (line, column) = self.position(span.start);
        ConfigError::Semantic {
            line,
            column,
            message: message.into(),
        }
    }

    fn schema(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let (line, column) = self.position(span.start);
        ConfigError::Schema {
            line,
            column,
            message: message.into(),
        }
    }
}

fn positive(loc: &Locator, v: Option<Spanned<i64>>, key: &str, default: usize) -> Result<usize, ConfigError> {
    match v {
        None => Ok(default),
        Some(s) if *s.get_ref() >= 1 => Ok(*s.get_ref() as usize),
        Some(s) => Err(loc.semantic(s.span(), format!("{key} must be at least 1"))),
    }
}

/// Parses and validates a configuration. Reports the first problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let loc = Locator { text };
    if let Err(e) = text.parse::<toml::Table>() {
        let (line, column) = loc.position(e.span().map_or(0, |s| s.start));
        return Err(ConfigError::Syntax {
            line,
            column,
            message: e.message().trim().to_string(),
        });
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = loc.position(e.span().map_or(0, |s| s.start));
        ConfigError::Schema {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;

    let span = raw.n_schedule.span();
    let sched = raw.n_schedule.into_inner();
    if sched.is_empty() {
        return Err(loc.semantic(span, "n_schedule must not be empty"));
    }
    if sched[0] < 1 {
        return Err(loc.semantic(span, "n_schedule entries must be at least 1"));
    }
    if sched.windows(2).any(|w| w[0] >= w[1]) {
        return Err(loc.semantic(span, "n_schedule must be strictly ascending"));
    }
    let n_schedule: Vec<usize> = sched.into_iter().map(|n| n as usize).collect();

    let alphas = match raw.alphas {
        None => DEFAULT_ALPHAS.to_vec(),
        Some(a) => {
            let span = a.span();
            let a = a.into_inner();
            if a.is_empty() {
                return Err(loc.semantic(span, "alphas must not be empty"));
            }
            if let Some(bad) = a.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
                return Err(loc.semantic(span, format!("alpha {bad} is outside (0, 1]")));
            }
            a
        }
    };

    let checks = match raw.checks {
        None => Check::ALL.to_vec(),
        Some(c) => {
            let span = c.span();
            let mut out = Vec::new();
            for name in c.into_inner() {
                let check = Check::from_name(name.get_ref()).ok_or_else(|| {
                    loc.semantic(name.span(), format!("unknown check '{}'", name.get_ref()))
                })?;
                if out.contains(&check) {
                    return Err(loc.semantic(name.span(), format!("check '{}' listed twice", check.name())));
                }
                out.push(check);
            }
            if out.is_empty() {
                return Err(loc.semantic(span, "checks must not be empty"));
            }
            out
        }
    };

    let format = match raw.format {
        None => Format::Csv,
        Some(f) => Format::from_name(f.get_ref())
            .ok_or_else(|| loc.semantic(f.span(), format!("unknown format '{}', expected csv or json", f.get_ref())))?,
    };

    let state_cap = positive(&loc, raw.state_cap, "state_cap", DEFAULT_STATE_CAP)?;
    let enumeration_max_n = positive(&loc, raw.enumeration_max_n, "enumeration_max_n", DEFAULT_ENUMERATION_MAX_N)?;
    let mc_n = positive(&loc, raw.mc_n, "mc_n", DEFAULT_MC_N)?;
    let mc_samples = match raw.mc_samples {
        Some(s) if *s.get_ref() < 2 => {
            return Err(loc.semantic(s.span(), "mc_samples must be at least 2"))
        }
        other => positive(&loc, other, "mc_samples", DEFAULT_MC_SAMPLES)?,
    };

    let chatterji_p = match raw.chatterji_p {
        None => DEFAULT_CHATTERJI_P.to_vec(),
        Some(p) => {
            let span = p.span();
            let p = p.into_inner();
            if p.is_empty() {
                return Err(loc.semantic(span, "chatterji_p must not be empty"));
            }
            if let Some(bad) = p.iter().find(|&&x| !(1.0..=2.0).contains(&x)) {
                return Err(loc.semantic(span, format!("p = {bad} is outside [1, 2]")));
            }
            p
        }
    };

    let fam_span = raw.family.span();
    let mut families = Vec::new();
    let mut names = BTreeSet::new();
    for rf in raw.family.into_inner() {
        let span = rf.span();
        let rf = rf.into_inner();
        if !names.insert(rf.name.get_ref().clone()) {
            return Err(loc.semantic(rf.name.span(), format!("duplicate family name '{}'", rf.name.get_ref())));
        }
        let lattice = LatticeSpec::new(rf.origin.unwrap_or(0.0), rf.step.unwrap_or(1.0));
        let members = rf
            .members
            .iter()
            .map(|m| {
                let pairs: Vec<(f64, f64)> = m.iter().map(|&[v, w]| (v, w)).collect();
                DiscreteDistribution::new(&pairs)
            })
            .collect();
        let family = AmbiguityFamily::new(lattice, members);
        validate_family(&family)
            .map_err(|e| loc.semantic(span.clone(), format!("family '{}': {e}", rf.name.get_ref())))?;
        families.push(FamilySpec {
            name: rf.name.into_inner(),
            family,
        });
    }
    if families.is_empty() {
        return Err(loc.semantic(fam_span, "at least one [[family]] is required"));
    }

    let (lo, hi) = families
        .iter()
        .map(|f| f.family.atom_range())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));

    let phi_span = raw.phi.span();
    let mut phis = Vec::new();
    let mut names = BTreeSet::new();
    for rp in raw.phi.into_inner() {
        let span = rp.span();
        let rp = rp.into_inner();
        let name = rp.name.get_ref().clone();
        if !names.insert(name.clone()) {
            return Err(loc.semantic(rp.name.span(), format!("duplicate phi name '{name}'")));
        }
        let kind = match (rp.expr, rp.catalog) {
            (Some(_), Some(_)) => {
                return Err(loc.schema(span, format!("phi '{name}': give either `expr` or `catalog`, not both")))
            }
            (None, None) => {
                return Err(loc.schema(span, format!("phi '{name}': missing `expr` or `catalog`")))
            }
            (Some(expr), None) => {
                if rp.params.is_some() {
                    return Err(loc.schema(span, format!("phi '{name}': `params` only applies to catalog functions")));
                }
                let l = rp.lipschitz.ok_or_else(|| {
                    loc.schema(span.clone(), format!("phi '{name}': missing field `lipschitz` for expression"))
                })?;
                let lipschitz = *l.get_ref();
                if !(lipschitz > 0.0 && lipschitz.is_finite()) {
                    return Err(loc.semantic(l.span(), format!("phi '{name}': lipschitz must be finite and > 0")));
                }
                let tree = parse_phi(expr.get_ref()).map_err(|e| {
                    // +1 skips the opening quote of a basic string
                    let at = expr.span().start + 1 + e.offset;
                    loc.semantic(at..at, format!("phi '{name}': {e}"))
                })?;
                let kind = PhiKind::Expr {
                    expr: tree,
                    lipschitz,
                };
                let probe = PhiSpec {
                    name: name.clone(),
                    kind,
                };
                let g = &probe.instantiate(&families[0].family)[0];
                if let Some((x, y)) = g.spot_check(lo, hi, LIPSCHITZ_SPOT_PAIRS, raw.seed.unwrap_or(0)) {
                    return Err(loc.semantic(
                        l.span(),
                        format!("phi '{name}': declared lipschitz {lipschitz} is violated by x = {x:?}, y = {y:?}"),
                    ));
                }
                probe.kind
            }
            (None, Some(cat)) => {
                if let Some(l) = rp.lipschitz {
                    return Err(loc.schema(l.span(), format!("phi '{name}': `lipschitz` only applies to expressions")));
                }
                let kind = CatalogKind::from_name(cat.get_ref()).ok_or_else(|| {
                    loc.semantic(cat.span(), format!("phi '{name}': unknown catalog function '{}'", cat.get_ref()))
                })?;
                let (pspan, params) = match rp.params {
                    Some(p) => (p.span(), p.into_inner()),
                    None => (cat.span(), Vec::new()),
                };
                if params.len() != kind.param_count() {
                    return Err(loc.semantic(
                        pspan,
                        format!("phi '{name}': '{}' takes {} parameter(s), got {}", kind.name(), kind.param_count(), params.len()),
                    ));
                }
                if params.iter().any(|p| !p.is_finite()) {
                    return Err(loc.semantic(pspan, format!("phi '{name}': parameters must be finite")));
                }
                if kind == CatalogKind::Clip && params[0] > params[1] {
                    return Err(loc.semantic(pspan, format!("phi '{name}': clip needs lo <= hi")));
                }
                PhiKind::Catalog { kind, params }
            }
        };
        phis.push(PhiSpec { name, kind });
    }
    if phis.is_empty() {
        return Err(loc.semantic(phi_span, "at least one [[phi]] is required"));
    }

    Ok(ExperimentConfig {
        families,
        phis,
        n_schedule,
        alphas,
        checks,
        format,
        seed: raw.seed.unwrap_or(0),
        state_cap,
        enumeration_max_n,
        chatterji_p,
        mc_n,
        mc_samples,
    })
}

#[derive(Serialize)]
struct OutConfig<'a> {
    n_schedule: &'a [usize],
    alphas: &'a [f64],
    checks: Vec<&'static str>,
    format: &'static str,
    seed: u64,
    state_cap: usize,
    enumeration_max_n: usize,
    chatterji_p: &'a [f64],
    mc_n: usize,
    mc_samples: usize,
    family: Vec<OutFamily<'a>>,
    phi: Vec<OutPhi<'a>>,
}

#[derive(Serialize)]
struct OutFamily<'a> {
    name: &'a str,
    origin: f64,
    step: f64,
    members: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct OutPhi<'a> {
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    expr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    catalog: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<&'a [f64]>,
}

impl ExperimentConfig {
    /// Serialises to a configuration that parses back to an equal value.
    pub fn to_toml(&self) -> String {
        let out = OutConfig {
            n_schedule: &self.n_schedule,
            alphas: &self.alphas,
            checks: self.checks.iter().map(|c| c.name()).collect(),
            format: self.format.name(),
            seed: self.seed,
            state_cap: self.state_cap,
            enumeration_max_n: self.enumeration_max_n,
            chatterji_p: &self.chatterji_p,
            mc_n: self.mc_n,
            mc_samples: self.mc_samples,
            family: self
                .families
                .iter()
                .map(|f| OutFamily {
                    name: &f.name,
                    origin: f.family.lattice.origin,
                    step: f.family.lattice.step,
                    members: f
                        .family
                        .members
                        .iter()
                        .map(|m| m.atoms.iter().map(|a| [a.value, a.weight]).collect())
                        .collect(),
                })
                .collect(),
            phi: self
                .phis
                .iter()
                .map(|p| match &p.kind {
                    PhiKind::Expr { expr, lipschitz } => OutPhi {
                        name: &p.name,
                        expr: Some(expr.to_string()),
                        lipschitz: Some(*lipschitz),
                        catalog: None,
                        params: None,
                    },
                    PhiKind::Catalog { kind, params } => OutPhi {
                        name: &p.name,
                        expr: None,
                        lipschitz: None,
                        catalog: Some(kind.name()),
                        params: Some(params),
                    },
                })
                .collect(),
        };
        toml::to_string(&out).expect("configuration serialises")
    }
}
