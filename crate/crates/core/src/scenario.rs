//! JSON scenario files and the command runner behind the `sepkern` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::atoms::{pair, FunctionAtom, Interval, PairingConfig};
use crate::covariance::{
    check_commutativity, check_covariance, check_rank_one, region_residuals, regions, CovarianceReport, DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::families::{self, DETV_CHECK_ID};
use crate::operator::{commutator, compose, kernel_l2_norm_sq, power, KernelSum, Polynomial, SeparableOperator};
use crate::solver::{solve_for_a_given_b, solve_for_b, ParamOperator, DEFAULT_RANK_TOL};

pub const SCENARIO_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;

const DEFAULT_DRAWS: usize = 5;
const DETV_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Pair,
    Compose,
    Power,
    Check,
    SolveB,
    SolveA,
    Commutator,
    Reproduce,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pair => "pair",
            Command::Compose => "compose",
            Command::Power => "power",
            Command::Check => "check",
            Command::SolveB => "solve_b",
            Command::SolveA => "solve_a",
            Command::Commutator => "commutator",
            Command::Reproduce => "reproduce",
        }
    }

    /// Whether the verdict sets the exit code when no expectation is declared.
    fn gates_by_default(self) -> bool {
        matches!(self, Command::Check | Command::SolveB | Command::SolveA | Command::Reproduce)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMethod {
    #[default]
    General,
    RankOne,
    Commutativity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_id: Option<String>,
    /// Random draws per family for `reproduce`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    /// Free parameters for `reproduce`; replaces random draws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, f64>>,
    /// Operator names; default `A` and `B`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    /// Template name for the solvers; defaults to the unknown's name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    /// Atom names and domain for `pair`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<PairingConfig>,
    /// Power for `power`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<CheckMethod>,
    /// Newton seeds for `solve_a`, on top of the generated ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<Vec<f64>>,
    /// Expected verdict; when present the exit code reflects agreement with it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub atoms: BTreeMap<String, FunctionAtom>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub operators: BTreeMap<String, SeparableOperator>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub templates: BTreeMap<String, ParamOperator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<Polynomial>,
    #[serde(default)]
    pub options: Options,
}

impl Scenario {
    /// Parses and validates; errors carry the field path and line/column.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                Error::Input(inner.to_string())
            } else {
                Error::Input(format!("{path}: {inner}"))
            }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Input(format!("{}: {}", path.display(), e.message())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenarios serialize");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Input(format!("version: unsupported scenario version {}", self.version)));
        }
        let o = &self.options;
        for (field, name) in [("options.a", &o.a), ("options.b", &o.b)] {
            if let Some(n) = name {
                if !self.operators.contains_key(n) && !self.templates.contains_key(n) {
                    return Err(Error::Input(format!("{field}: no operator or template named {n:?}")));
                }
            }
        }
        if let Some(t) = &o.template {
            if !self.templates.contains_key(t) {
                return Err(Error::Input(format!("options.template: no template named {t:?}")));
            }
        }
        for (field, name) in [("options.u", &o.u), ("options.v", &o.v)] {
            if let Some(n) = name {
                if !self.atoms.contains_key(n) {
                    return Err(Error::Input(format!("{field}: no atom named {n:?}")));
                }
            }
        }
        if let Some(f) = &o.family_id {
            if f != DETV_CHECK_ID {
                families::find_family(f).map_err(|e| Error::Input(format!("options.family_id: {}", e.message())))?;
            }
        }
        Ok(())
    }

    fn operator(&self, field: &str, name: Option<&String>, default: &str) -> Result<&SeparableOperator> {
        let n = name.map(String::as_str).unwrap_or(default);
        self.operators
            .get(n)
            .ok_or_else(|| Error::Input(format!("{field}: scenario has no operator named {n:?}")))
    }

    fn template(&self, default: &str) -> Result<&ParamOperator> {
        let n = self.options.template.as_deref().unwrap_or(default);
        self.templates
            .get(n)
            .ok_or_else(|| Error::Input(format!("options.template: scenario has no template named {n:?}")))
    }

    fn polynomial(&self) -> Result<&Polynomial> {
        self.polynomial
            .as_ref()
            .ok_or_else(|| Error::Input("polynomial: required for this command".into()))
    }
}

/// Values given on the command line; they take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub family_id: Option<String>,
    pub draws: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: Command,
    /// `None` for commands that only compute.
    pub verdict: Option<bool>,
    pub passed: bool,
    pub json: Value,
    pub text: String,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.json).expect("reports serialize");
        s.push('\n');
        s
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report values serialize")
}

fn report_lines(r: &CovarianceReport) -> String {
    let mut s = format!(
        "residual_on_G = {:.3e}\nresidual_on_GA_minus_G = {:.3e}\nresidual_on_GB_minus_G = {:.3e}\nthreshold = {:.3e}\n",
        r.residual_on_g,
        r.residual_on_ga_minus_g,
        r.residual_on_gb_minus_g,
        r.tolerance_used * (1.0 + r.scale)
    );
    if r.holds {
        s.push_str("holds\n");
    } else {
        let conds: Vec<String> = r.violated.iter().map(u8::to_string).collect();
        let _ = writeln!(s, "FAILED: violated condition {}", conds.join(", "));
    }
    s
}

struct Outcome {
    result: Value,
    verdict: Option<bool>,
    text: String,
}

fn run_pair(sc: &Scenario) -> Result<Outcome> {
    let o = &sc.options;
    let atom = |field: &str, n: &Option<String>| {
        let n = n.as_ref().ok_or_else(|| Error::Input(format!("{field}: required for pair")))?;
        Ok::<_, Error>(&sc.atoms[n])
    };
    let (u, v) = (atom("options.u", &o.u)?, atom("options.v", &o.v)?);
    let g = o.domain.ok_or_else(|| Error::Input("options.domain: required for pair".into()))?;
    let cfg = o.pairing.unwrap_or_default();
    let value = pair(u, v, g, &cfg)?;
    Ok(Outcome { result: json!({ "value": value }), verdict: None, text: format!("Q = {value:.17e}\n") })
}

fn op_norm(op: &SeparableOperator) -> Result<f64> {
    Ok(kernel_l2_norm_sq(&KernelSum::single(op.clone()), op.left_support, op.domain)?.max(0.0).sqrt())
}

fn run_compose(sc: &Scenario) -> Result<Outcome> {
    let a = sc.operator("options.a", sc.options.a.as_ref(), "A")?;
    let b = sc.operator("options.b", sc.options.b.as_ref(), "B")?;
    let c = compose(a, b)?;
    let norm = op_norm(&c)?;
    Ok(Outcome {
        result: json!({ "operator": to_value(&c), "kernel_l2": norm }),
        verdict: None,
        text: format!("rank {}x{}, kernel L2 norm {norm:.6e}\n", c.rank_left(), c.rank_right()),
    })
}

fn run_power(sc: &Scenario) -> Result<Outcome> {
    let a = sc.operator("options.a", sc.options.a.as_ref(), "A")?;
    let m = sc.options.exponent.ok_or_else(|| Error::Input("options.exponent: required for power".into()))?;
    let p = power(a, m)?;
    let norm = op_norm(&p)?;
    Ok(Outcome {
        result: json!({ "operator": to_value(&p), "exponent": m, "kernel_l2": norm }),
        verdict: None,
        text: format!("A^{m}: kernel L2 norm {norm:.6e}\n"),
    })
}

fn run_check(sc: &Scenario, tol: f64) -> Result<Outcome> {
    let a = sc.operator("options.a", sc.options.a.as_ref(), "A")?;
    let b = sc.operator("options.b", sc.options.b.as_ref(), "B")?;
    let r = match sc.options.method.unwrap_or_default() {
        CheckMethod::General => check_covariance(a, b, sc.polynomial()?, tol)?,
        CheckMethod::RankOne => check_rank_one(a, b, sc.polynomial()?, tol)?,
        CheckMethod::Commutativity => check_commutativity(a, b, tol)?,
    };
    Ok(Outcome { text: report_lines(&r), verdict: Some(r.holds), result: to_value(&r) })
}

fn vectors_text(label: &str, vs: &[Vec<f64>]) -> String {
    let mut s = format!("{} {label}\n", vs.len());
    for v in vs {
        let parts: Vec<String> = v.iter().map(|x| format!("{x:.12e}")).collect();
        let _ = writeln!(s, "  [{}]", parts.join(", "));
    }
    s
}

fn run_solve_b(sc: &Scenario, tol: f64) -> Result<Outcome> {
    let a = sc.operator("options.a", sc.options.a.as_ref(), "A")?;
    let t = sc.template("B")?;
    let rank_tol = sc.options.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let res = solve_for_b(a, sc.polynomial()?, t, rank_tol, tol)?;
    Ok(Outcome {
        text: vectors_text("nullspace vectors", &res.vectors),
        verdict: Some(res.nullspace_dim >= 1),
        result: to_value(&res),
    })
}

fn run_solve_a(sc: &Scenario, tol: f64) -> Result<Outcome> {
    let b = sc.operator("options.b", sc.options.b.as_ref(), "B")?;
    let t = sc.template("A")?;
    let res = solve_for_a_given_b(b, sc.polynomial()?, t, &sc.options.seeds, tol)?;
    Ok(Outcome {
        text: vectors_text("solutions", &res.vectors),
        verdict: Some(!res.vectors.is_empty()),
        result: to_value(&res),
    })
}

fn run_commutator(sc: &Scenario, tol: f64) -> Result<Outcome> {
    let a = sc.operator("options.a", sc.options.a.as_ref(), "A")?;
    let b = sc.operator("options.b", sc.options.b.as_ref(), "B")?;
    let k = commutator(a, b)?;
    let (norms, _) = region_residuals(&k, &regions(a, b), k.scale())?;
    let r = check_commutativity(a, b, tol)?;
    let text = format!(
        "||AB - BA|| per region = [{:.3e}, {:.3e}, {:.3e}]\n{}\n",
        norms[0],
        norms[1],
        norms[2],
        if r.holds { "commute" } else { "do not commute" }
    );
    Ok(Outcome { result: json!({ "region_norms": norms, "report": to_value(&r) }), verdict: Some(r.holds), text })
}

fn run_reproduce(sc: &Scenario, ov: &Overrides, tol: f64, seed: u64) -> Result<Outcome> {
    let id = ov
        .family_id
        .clone()
        .or_else(|| sc.options.family_id.clone())
        .ok_or_else(|| Error::Input("options.family_id: required for reproduce".into()))?;
    if id == DETV_CHECK_ID {
        let out = families::detv_factorization_check(DETV_SAMPLES, seed)?;
        let text = format!(
            "{} samples\nmax relative error, LU of explicit V: {:.3e}\nmax relative error, operator-assembled V: {:.3e}\n\
             truncated product (drops -thA2*sigma2 from one factor) does not match: max relative error {:.3e}\n{}\n",
            out.samples.len(),
            out.max_rel_explicit,
            out.max_rel_assembled,
            out.max_rel_truncated,
            if out.holds { "holds" } else { "FAILED" }
        );
        return Ok(Outcome { verdict: Some(out.holds), result: json!({ "family": id, "detv": to_value(&out) }), text });
    }
    let outs = match &sc.options.params {
        Some(p) => vec![families::verify_family(&id, p, tol)?],
        None => families::verify_family_draws(&id, ov.draws.or(sc.options.draws).unwrap_or(DEFAULT_DRAWS), seed, tol)?,
    };
    let mut text = String::new();
    for (i, o) in outs.iter().enumerate() {
        let worst = o.checks.iter().filter(|c| c.check != "commute_iff").map(|c| c.residual).fold(o.report.max_residual(), f64::max);
        let _ = writeln!(
            text,
            "draw {}: {} (max residual {worst:.3e})",
            i + 1,
            if o.holds { "holds" } else { "FAILED" }
        );
        if !o.report.holds {
            text.push_str(&report_lines(&o.report));
        }
        for c in o.checks.iter().filter(|c| !c.holds) {
            let _ = writeln!(text, "  {} ({:?}) failed: residual {:.3e}", c.check, c.route, c.residual);
        }
    }
    let all = outs.iter().all(|o| o.holds);
    let _ = writeln!(text, "{id}: {}", if all { "holds" } else { "FAILED" });
    Ok(Outcome { result: json!({ "family": id, "draws": to_value(&outs) }), verdict: Some(all), text })
}

/// Runs a scenario. `command` is required when the file does not name one and
/// must agree with it when it does.
pub fn run(sc: &Scenario, command: Option<Command>, ov: &Overrides) -> Result<Report> {
    sc.validate()?;
    let cmd = match (command, sc.command) {
        (Some(c), Some(f)) if c != f => {
            return Err(Error::Input(format!("command: file says {}, invoked as {}", f.name(), c.name())))
        }
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => return Err(Error::Input("command: scenario does not name a command".into())),
    };
    let tol = ov.tol.or(sc.options.tol).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tol must be > 0, got {tol}")));
    }
    let seed = ov.seed.or(sc.options.seed).unwrap_or(0);
    let out = match cmd {
        Command::Pair => run_pair(sc)?,
        Command::Compose => run_compose(sc)?,
        Command::Power => run_power(sc)?,
        Command::Check => run_check(sc, tol)?,
        Command::SolveB => run_solve_b(sc, tol)?,
        Command::SolveA => run_solve_a(sc, tol)?,
        Command::Commutator => run_commutator(sc, tol)?,
        Command::Reproduce => run_reproduce(sc, ov, tol, seed)?,
    };
    let expect = sc.options.expect;
    let passed = match (expect, out.verdict) {
        (Some(_), None) => {
            return Err(Error::Input(format!("options.expect: {} has no verdict to compare", cmd.name())))
        }
        (Some(e), Some(v)) => e == v,
        (None, Some(v)) if cmd.gates_by_default() => v,
        (None, _) => true,
    };
    let json = json!({
        "version": REPORT_VERSION,
        "command": cmd.name(),
        "tol": tol,
        "seed": seed,
        "expect": expect,
        "verdict": out.verdict,
        "passed": passed,
        "result": out.result,
    });
    Ok(Report { command: cmd, verdict: out.verdict, passed, json, text: out.text })
}

/// `reproduce <id>` without a file.
pub fn reproduce(id: &str, ov: &Overrides) -> Result<Report> {
    if id != DETV_CHECK_ID {
        families::find_family(id)?;
    }
    let sc = Scenario {
        version: SCENARIO_VERSION,
        description: None,
        command: Some(Command::Reproduce),
        atoms: BTreeMap::new(),
        operators: BTreeMap::new(),
        templates: BTreeMap::new(),
        polynomial: None,
        options: Options { family_id: Some(id.to_string()), ..Options::default() },
    };
    run(&sc, Some(Command::Reproduce), ov)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHECK: &str = r#"{
        "version": 1,
        "command": "check",
        "operators": {
            "A": {"left": [{"kind": "monomial", "exponent": 1}], "coeff": [[1.0]],
                  "right": [{"kind": "constant"}], "domain": {"lo": 0, "hi": 1}, "left_support": {"lo": 0, "hi": 1}},
            "B": {"left": [{"kind": "monomial", "exponent": 1}], "coeff": [[0.0]],
                  "right": [{"kind": "constant"}], "domain": {"lo": 0, "hi": 1}, "left_support": {"lo": 0, "hi": 1}}
        },
        "polynomial": [0, 0, 1]
    }"#;

    #[test]
    fn runs_inline_check() {
        let sc = Scenario::from_json(CHECK).unwrap();
        let r = run(&sc, None, &Overrides::default()).unwrap();
        assert_eq!(r.verdict, Some(true));
        assert_eq!(r.exit_code(), 0);
        assert_eq!(r.json["command"], "check");
    }

    #[test]
    fn rejects_unknown_fields_with_path() {
        let bad = CHECK.replace("\"polynomial\"", "\"polynomail\"");
        let e = Scenario::from_json(&bad).unwrap_err();
        assert!(matches!(e, Error::Input(_)));
        assert!(e.message().contains("polynomail"), "{e}");
        let bad = CHECK.replace("\"coeff\": [[0.0]]", "\"coeff\": [[\"x\"]]");
        let e = Scenario::from_json(&bad).unwrap_err();
        assert!(e.message().contains("operators.B"), "{e}");
        assert!(e.message().contains("line"), "{e}");
    }

    #[test]
    fn rejects_bad_references_and_versions() {
        let v2 = CHECK.replace("\"version\": 1", "\"version\": 2");
        assert!(Scenario::from_json(&v2).is_err());
        let dangling = CHECK.replace("\"command\": \"check\"", "\"command\": \"check\", \"options\": {\"a\": \"Z\"}");
        assert!(Scenario::from_json(&dangling).unwrap_err().message().contains("options.a"));
    }

    #[test]
    fn command_mismatch_is_input_error() {
        let sc = Scenario::from_json(CHECK).unwrap();
        assert!(matches!(run(&sc, Some(Command::Compose), &Overrides::default()), Err(Error::Input(_))));
    }

    #[test]
    fn expectation_flips_exit_code() {
        let sc = Scenario::from_json(&CHECK.replace("\"command\": \"check\"", "\"command\": \"check\", \"options\": {\"expect\": false}")).unwrap();
        assert_eq!(run(&sc, None, &Overrides::default()).unwrap().exit_code(), 1);
    }

    #[test]
    fn round_trips() {
        let sc = Scenario::from_json(CHECK).unwrap();
        assert_eq!(Scenario::from_json(&sc.to_json()).unwrap(), sc);
    }
}
