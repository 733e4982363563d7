//! The `.nhmc.json` chain-spec document format.
//!
//! A document is a JSON object whose leaves are expression strings in the
//! [`expr`] language:
//!
//! ```json
//! {
//!   "states": ["1", "2"],
//!   "initial": ["0.5", "0.5"],
//!   "kernels": { "Q": [["1 - 1 / n", "1 / n"], ["1 / n", "1 - 1 / n"]] },
//!   "schedule": [ { "when": "true", "use": "Q" } ],
//!   "functions": "indicator:1"
//! }
//! ```
//!
//! Instantiating at a length n evaluates every expression with the step
//! variable `i` running 1-based: positions 1..=n for the functions, steps
//! 1..=n-1 for the schedule and kernels (step i moves the chain from
//! position i to i+1). The first matching schedule rule wins, and the last
//! rule must be the literal `true` so no step can fall through. Initial
//! weights may depend on n only.

pub mod expr;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::{ArraySchemeFamily, ChainSpec};
use crate::error::{Error, Result};
use crate::kernel::{Distribution, StochasticKernel};
use crate::tol;

pub use expr::{EvalCtx, Expr, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRule {
    pub when: Expr,
    pub use_kernel: String,
}

/// Per-step functions: either one expression per state, or the preset
/// `indicator:<state>` counting visits to that state.
#[derive(Debug, Clone, PartialEq)]
pub enum Functions {
    Indicator(String),
    PerState(Vec<Expr>),
}

/// A parsed, validated chain-spec document.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDocument {
    states: Vec<String>,
    initial: Vec<Expr>,
    kernel_defs: BTreeMap<String, Vec<Vec<Expr>>>,
    schedule: Vec<ScheduleRule>,
    functions: Functions,
}

// Serialization mirror: expressions stay strings here, so serde handles the
// container while the expression parser owns every leaf.
#[derive(Serialize, Deserialize)]
struct RawDocument {
    states: Vec<String>,
    initial: Vec<String>,
    kernels: BTreeMap<String, Vec<Vec<String>>>,
    schedule: Vec<RawRule>,
    functions: RawFunctions,
}

#[derive(Serialize, Deserialize)]
struct RawRule {
    when: String,
    #[serde(rename = "use")]
    use_kernel: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawFunctions {
    Preset(String),
    PerState(Vec<String>),
}

impl ChainDocument {
    /// Parses and validates a document. Diagnostics name the offending
    /// field; expression errors additionally carry a column.
    pub fn parse(text: &str) -> Result<ChainDocument> {
        let raw: RawDocument = serde_json::from_str(text).map_err(|e| Error::Document {
            detail: e.to_string(),
        })?;
        convert(raw)
    }

    /// Canonical pretty-printed JSON. Expressions are re-printed from their
    /// trees, so `parse(print(d)) == d`.
    pub fn print(&self) -> String {
        let raw = RawDocument {
            states: self.states.clone(),
            initial: self.initial.iter().map(Expr::to_string).collect(),
            kernels: self
                .kernel_defs
                .iter()
                .map(|(name, m)| {
                    let rows = m
                        .iter()
                        .map(|row| row.iter().map(Expr::to_string).collect())
                        .collect();
                    (name.clone(), rows)
                })
                .collect(),
            schedule: self
                .schedule
                .iter()
                .map(|r| RawRule {
                    when: r.when.to_string(),
                    use_kernel: r.use_kernel.clone(),
                })
                .collect(),
            functions: match &self.functions {
                Functions::Indicator(label) => RawFunctions::Preset(format!("indicator:{label}")),
                Functions::PerState(exprs) => {
                    RawFunctions::PerState(exprs.iter().map(Expr::to_string).collect())
                }
            },
        };
        let mut text = serde_json::to_string_pretty(&raw).expect("document serializes");
        text.push('\n');
        text
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn kernel_defs(&self) -> &BTreeMap<String, Vec<Vec<Expr>>> {
        &self.kernel_defs
    }

    pub fn schedule(&self) -> &[ScheduleRule] {
        &self.schedule
    }

    pub fn functions(&self) -> &Functions {
        &self.functions
    }

    /// Evaluates the document at length `n` into a concrete chain.
    pub fn instantiate(&self, n: usize) -> Result<ChainSpec> {
        if n < 2 {
            return Err(Error::BadChain {
                detail: format!("instantiation needs n >= 2, got {n}"),
            });
        }
        let s = self.states.len();
        let n_u64 = n as u64;
        let no_step = EvalCtx {
            i: None,
            n: n_u64,
        };

        let mut weights = Vec::with_capacity(s);
        for (j, e) in self.initial.iter().enumerate() {
            weights.push(e.eval_num(&no_step, &format!("initial[{j}]"))?);
        }
        let initial = Distribution::new(weights)?;

        // Kernels whose entries never mention i are evaluated once and
        // reused across steps.
        let mut cache: BTreeMap<&str, StochasticKernel> = BTreeMap::new();
        for (name, matrix) in &self.kernel_defs {
            if matrix.iter().flatten().all(|e| !e.references_i()) {
                cache.insert(name, self.eval_kernel(name, matrix, &no_step, 0)?);
            }
        }

        let mut kernels = Vec::with_capacity(n - 1);
        for step in 1..n {
            let ctx = EvalCtx {
                i: Some(step as u64),
                n: n_u64,
            };
            let mut chosen = None;
            for (idx, rule) in self.schedule.iter().enumerate() {
                if rule
                    .when
                    .eval_bool(&ctx, &format!("schedule[{idx}].when"))?
                {
                    chosen = Some(&rule.use_kernel);
                    break;
                }
            }
            let name = chosen.ok_or(Error::NonExhaustiveSchedule)?;
            let kernel = match cache.get(name.as_str()) {
                Some(k) => k.clone(),
                None => self.eval_kernel(name, &self.kernel_defs[name], &ctx, step)?,
            };
            kernels.push(kernel);
        }

        let functions = match &self.functions {
            Functions::Indicator(label) => {
                let idx = self.states.iter().position(|st| st == label).expect(
                    "validated at parse time",
                );
                let mut f = vec![0.0; s];
                f[idx] = 1.0;
                vec![f; n]
            }
            Functions::PerState(exprs) => {
                let mut per_position = Vec::with_capacity(n);
                for pos in 1..=n {
                    let ctx = EvalCtx {
                        i: Some(pos as u64),
                        n: n_u64,
                    };
                    let mut f = Vec::with_capacity(s);
                    for (j, e) in exprs.iter().enumerate() {
                        let v = e.eval_num(&ctx, &format!("functions[{j}]"))?;
                        if !v.is_finite() {
                            return Err(Error::BadChain {
                                detail: format!(
                                    "functions[{j}] evaluates to a non-finite value at i = {pos}"
                                ),
                            });
                        }
                        f.push(v);
                    }
                    per_position.push(f);
                }
                per_position
            }
        };

        ChainSpec::new(self.states.clone(), initial, kernels, functions)
    }

    fn eval_kernel(
        &self,
        name: &str,
        matrix: &[Vec<Expr>],
        ctx: &EvalCtx,
        step: usize,
    ) -> Result<StochasticKernel> {
        let s = self.states.len();
        let mut rows = Vec::with_capacity(s);
        for (r, row_exprs) in matrix.iter().enumerate() {
            let mut row = Vec::with_capacity(s);
            let mut sum = 0.0;
            for (c, e) in row_exprs.iter().enumerate() {
                let v = e.eval_num(ctx, &format!("kernel {name}[{r}][{c}]"))?;
                if !v.is_finite() {
                    return Err(bad_row(name, step, r, format!("entry {c} is not finite")));
                }
                if v < 0.0 {
                    return Err(bad_row(
                        name,
                        step,
                        r,
                        format!("entry {c} is negative ({v})"),
                    ));
                }
                sum += v;
                row.push(v);
            }
            if (sum - 1.0).abs() > tol::ROW_SUM {
                return Err(bad_row(name, step, r, format!("row sums to {sum}, not 1")));
            }
            rows.push(row);
        }
        StochasticKernel::new(rows)
    }

    /// Wraps the document as a family indexed by n, for gate sweeps.
    pub fn into_family(self, description: impl Into<String>) -> ArraySchemeFamily {
        ArraySchemeFamily::new(description, move |n| self.instantiate(n))
    }
}

fn bad_row(kernel: &str, step: usize, row: usize, detail: String) -> Error {
    Error::BadRow {
        kernel: kernel.into(),
        step,
        row,
        detail,
    }
}

fn convert(raw: RawDocument) -> Result<ChainDocument> {
    let s = raw.states.len();
    if s == 0 {
        return Err(Error::Document {
            detail: "states list is empty".into(),
        });
    }
    for (j, label) in raw.states.iter().enumerate() {
        if raw.states[..j].contains(label) {
            return Err(Error::Document {
                detail: format!("duplicate state label `{label}`"),
            });
        }
    }

    if raw.initial.len() != s {
        return Err(Error::Document {
            detail: format!(
                "initial has {} entries for {s} states",
                raw.initial.len()
            ),
        });
    }
    let mut initial = Vec::with_capacity(s);
    for (j, text) in raw.initial.iter().enumerate() {
        let field = format!("initial[{j}]");
        let e = Expr::parse_in(text, &field)?;
        if e.references_i() {
            return Err(Error::VariableNotAllowed {
                name: "i".into(),
                field,
            });
        }
        initial.push(e);
    }

    let mut kernel_defs = BTreeMap::new();
    for (name, matrix) in &raw.kernels {
        if matrix.len() != s || matrix.iter().any(|row| row.len() != s) {
            return Err(Error::Document {
                detail: format!("kernel `{name}` is not a {s}x{s} matrix"),
            });
        }
        let mut rows = Vec::with_capacity(s);
        for (r, row) in matrix.iter().enumerate() {
            let mut out = Vec::with_capacity(s);
            for (c, text) in row.iter().enumerate() {
                out.push(Expr::parse_in(text, &format!("kernel {name}[{r}][{c}]"))?);
            }
            rows.push(out);
        }
        kernel_defs.insert(name.clone(), rows);
    }

    if raw.schedule.is_empty() {
        return Err(Error::NonExhaustiveSchedule);
    }
    let mut schedule = Vec::with_capacity(raw.schedule.len());
    for (idx, rule) in raw.schedule.iter().enumerate() {
        if !kernel_defs.contains_key(&rule.use_kernel) {
            return Err(Error::UndefinedKernel {
                name: rule.use_kernel.clone(),
                rule: idx,
            });
        }
        schedule.push(ScheduleRule {
            when: Expr::parse_in(&rule.when, &format!("schedule[{idx}].when"))?,
            use_kernel: rule.use_kernel.clone(),
        });
    }
    if schedule.last().map(|r| &r.when) != Some(&Expr::Bool(true)) {
        return Err(Error::NonExhaustiveSchedule);
    }

    let functions = match &raw.functions {
        RawFunctions::Preset(text) => {
            let label = text.strip_prefix("indicator:").ok_or_else(|| Error::Document {
                detail: format!("unknown functions preset `{text}`; expected `indicator:<state>`"),
            })?;
            if !raw.states.iter().any(|st| st == label) {
                return Err(Error::UnknownState {
                    label: label.into(),
                });
            }
            Functions::Indicator(label.into())
        }
        RawFunctions::PerState(texts) => {
            if texts.len() != s {
                return Err(Error::Document {
                    detail: format!("functions has {} entries for {s} states", texts.len()),
                });
            }
            let mut exprs = Vec::with_capacity(s);
            for (j, text) in texts.iter().enumerate() {
                exprs.push(Expr::parse_in(text, &format!("functions[{j}]"))?);
            }
            Functions::PerState(exprs)
        }
    };

    Ok(ChainDocument {
        states: raw.states,
        initial,
        kernel_defs,
        schedule,
        functions,
    })
}

/// The two-state anomalous document with alpha_n = n^-exponent: slow flips
/// before the first block boundary, a fair coin at each block boundary,
/// fast flips elsewhere. Instantiation reproduces the direct builder
/// bit for bit wherever the builder's alpha <= 1/2 precondition holds.
pub fn dobrushin_document(exponent: f64) -> Result<ChainDocument> {
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::BadExponent { exponent });
    }
    // Shortest round-trip printing makes the embedded literal evaluate to
    // exactly n.powf(-exponent).
    let a = format!("pow(n, -{exponent})");
    let block = format!("floor(1 / {a})");
    let raw = RawDocument {
        states: vec!["1".into(), "2".into()],
        initial: vec!["0.5".into(), "0.5".into()],
        kernels: BTreeMap::from([
            (
                "Qslow".into(),
                vec![
                    vec![format!("1 - {a}"), a.clone()],
                    vec![a.clone(), format!("1 - {a}")],
                ],
            ),
            (
                "Qhalf".into(),
                vec![
                    vec!["0.5".into(), "0.5".into()],
                    vec!["0.5".into(), "0.5".into()],
                ],
            ),
            (
                "Qfast".into(),
                vec![
                    vec![a.clone(), format!("1 - {a}")],
                    vec![format!("1 - {a}"), a.clone()],
                ],
            ),
        ]),
        schedule: vec![
            RawRule {
                when: format!("i < {block}"),
                use_kernel: "Qslow".into(),
            },
            RawRule {
                when: format!("mod(i, {block}) = 0"),
                use_kernel: "Qhalf".into(),
            },
            RawRule {
                when: "true".into(),
                use_kernel: "Qfast".into(),
            },
        ],
        functions: RawFunctions::Preset("indicator:1".into()),
    };
    convert(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ArraySchemeFamily;

    fn minimal(schedule: &str, functions: &str) -> String {
        format!(
            r#"{{
  "states": ["a", "b"],
  "initial": ["0.5", "0.5"],
  "kernels": {{ "Q": [["0.5", "0.5"], ["0.5", "0.5"]] }},
  "schedule": [{schedule}],
  "functions": {functions}
}}"#
        )
    }

    #[test]
    fn round_trip_is_identity() {
        let documents = [
            dobrushin_document(0.25).unwrap(),
            dobrushin_document(1.0 / 3.0).unwrap(),
            ChainDocument::parse(&minimal(
                r#"{"when": "i < 3 and not n = 4", "use": "Q"}, {"when": "true", "use": "Q"}"#,
                r#"["i / n", "-(1 + 2) * 3"]"#,
            ))
            .unwrap(),
        ];
        for d in documents {
            let printed = d.print();
            assert_eq!(ChainDocument::parse(&printed).unwrap(), d);
            // Printing is canonical: a second round trip reproduces the text.
            assert_eq!(ChainDocument::parse(&printed).unwrap().print(), printed);
        }
    }

    #[test]
    fn instantiation_matches_builder_exactly() {
        for (e, ns) in [(0.25, vec![16, 40, 100]), (1.0 / 3.0, vec![10, 64, 100])] {
            let doc = dobrushin_document(e).unwrap();
            let family = ArraySchemeFamily::dobrushin_power(e).unwrap();
            for n in ns {
                let from_doc = doc.instantiate(n).unwrap();
                let direct = family.generate(n).unwrap();
                assert_eq!(from_doc.states(), direct.states());
                assert_eq!(from_doc.initial().weights(), direct.initial().weights());
                assert_eq!(from_doc.functions(), direct.functions());
                assert_eq!(from_doc.kernels().len(), direct.kernels().len());
                for (a, b) in from_doc.kernels().iter().zip(direct.kernels()) {
                    assert_eq!(a.rows(), b.rows());
                }
            }
        }
    }

    #[test]
    fn constant_document_ignores_n() {
        let text = minimal(r#"{"when": "true", "use": "Q"}"#, r#""indicator:a""#);
        let doc = ChainDocument::parse(&text).unwrap();
        let small = doc.instantiate(3).unwrap();
        let large = doc.instantiate(7).unwrap();
        assert_eq!(small.kernel(0).rows(), large.kernel(5).rows());
        assert_eq!(small.function(2), large.function(6));
    }

    #[test]
    fn first_matching_rule_shadows_later_ones() {
        let text = r#"{
  "states": ["a", "b"],
  "initial": ["1", "0"],
  "kernels": {
    "QA": [["1", "0"], ["0", "1"]],
    "QB": [["0", "1"], ["1", "0"]]
  },
  "schedule": [
    {"when": "true", "use": "QA"},
    {"when": "true", "use": "QB"}
  ],
  "functions": "indicator:a"
}"#;
        let doc = ChainDocument::parse(text).unwrap();
        let spec = doc.instantiate(4).unwrap();
        for k in spec.kernels() {
            assert_eq!(k.rows(), [[1.0, 0.0], [0.0, 1.0]]);
        }
    }

    #[test]
    fn schedule_must_end_in_literal_true() {
        let empty = minimal("", r#""indicator:a""#);
        assert_eq!(
            ChainDocument::parse(&empty).unwrap_err(),
            Error::NonExhaustiveSchedule
        );
        let no_catch_all = minimal(r#"{"when": "i < 2", "use": "Q"}"#, r#""indicator:a""#);
        assert_eq!(
            ChainDocument::parse(&no_catch_all).unwrap_err(),
            Error::NonExhaustiveSchedule
        );
    }

    #[test]
    fn undefined_kernel_names_the_rule() {
        let text = minimal(
            r#"{"when": "i < 2", "use": "missing"}, {"when": "true", "use": "Q"}"#,
            r#""indicator:a""#,
        );
        assert_eq!(
            ChainDocument::parse(&text).unwrap_err(),
            Error::UndefinedKernel {
                name: "missing".into(),
                rule: 0
            }
        );
    }

    #[test]
    fn initial_must_not_depend_on_i() {
        let text = r#"{
  "states": ["a", "b"],
  "initial": ["i / n", "1 - i / n"],
  "kernels": { "Q": [["0.5", "0.5"], ["0.5", "0.5"]] },
  "schedule": [{"when": "true", "use": "Q"}],
  "functions": "indicator:a"
}"#;
        assert_eq!(
            ChainDocument::parse(text).unwrap_err(),
            Error::VariableNotAllowed {
                name: "i".into(),
                field: "initial[0]".into()
            }
        );
    }

    #[test]
    fn unknown_indicator_state_is_rejected() {
        let text = minimal(r#"{"when": "true", "use": "Q"}"#, r#""indicator:z""#);
        assert_eq!(
            ChainDocument::parse(&text).unwrap_err(),
            Error::UnknownState { label: "z".into() }
        );
        let bad_preset = minimal(r#"{"when": "true", "use": "Q"}"#, r#""gauge:a""#);
        assert!(matches!(
            ChainDocument::parse(&bad_preset).unwrap_err(),
            Error::Document { .. }
        ));
    }

    #[test]
    fn container_shape_errors_are_document_errors() {
        assert!(matches!(
            ChainDocument::parse("{"),
            Err(Error::Document { .. })
        ));
        let wrong_dims = r#"{
  "states": ["a", "b"],
  "initial": ["1", "0", "0"],
  "kernels": { "Q": [["0.5", "0.5"], ["0.5", "0.5"]] },
  "schedule": [{"when": "true", "use": "Q"}],
  "functions": "indicator:a"
}"#;
        assert!(matches!(
            ChainDocument::parse(wrong_dims),
            Err(Error::Document { .. })
        ));
        let ragged = r#"{
  "states": ["a", "b"],
  "initial": ["1", "0"],
  "kernels": { "Q": [["0.5", "0.5", "0.0"], ["0.5", "0.5"]] },
  "schedule": [{"when": "true", "use": "Q"}],
  "functions": "indicator:a"
}"#;
        assert!(matches!(
            ChainDocument::parse(ragged),
            Err(Error::Document { .. })
        ));
        let duplicate = r#"{
  "states": ["a", "a"],
  "initial": ["1", "0"],
  "kernels": { "Q": [["0.5", "0.5"], ["0.5", "0.5"]] },
  "schedule": [{"when": "true", "use": "Q"}],
  "functions": "indicator:a"
}"#;
        assert!(matches!(
            ChainDocument::parse(duplicate),
            Err(Error::Document { .. })
        ));
    }

    #[test]
    fn expression_errors_carry_the_field() {
        let text = minimal(
            r#"{"when": "i <", "use": "Q"}, {"when": "true", "use": "Q"}"#,
            r#""indicator:a""#,
        );
        match ChainDocument::parse(&text).unwrap_err() {
            Error::Syntax { context, .. } => assert_eq!(context, "schedule[0].when"),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_rows_name_kernel_step_and_row() {
        let text = r#"{
  "states": ["a", "b"],
  "initial": ["0.5", "0.5"],
  "kernels": { "Q": [["2 * i", "1"], ["0.5", "0.5"]] },
  "schedule": [{"when": "true", "use": "Q"}],
  "functions": "indicator:a"
}"#;
        let doc = ChainDocument::parse(text).unwrap();
        match doc.instantiate(4).unwrap_err() {
            Error::BadRow {
                kernel,
                step,
                row,
                detail,
            } => {
                assert_eq!((kernel.as_str(), step, row), ("Q", 1, 0));
                assert!(detail.contains("sums to"));
            }
            other => panic!("expected row diagnostic, got {other:?}"),
        }

        let negative = r#"{
  "states": ["a", "b"],
  "initial": ["0.5", "0.5"],
  "kernels": { "Q": [["1.5", "-0.5"], ["0.5", "0.5"]] },
  "schedule": [{"when": "true", "use": "Q"}],
  "functions": "indicator:a"
}"#;
        let doc = ChainDocument::parse(negative).unwrap();
        assert!(matches!(
            doc.instantiate(3).unwrap_err(),
            Error::BadRow { row: 0, .. }
        ));
    }

    #[test]
    fn evaluation_errors_surface_at_instantiation() {
        let division = minimal(
            r#"{"when": "1 / (i - 2) > 0", "use": "Q"}, {"when": "true", "use": "Q"}"#,
            r#""indicator:a""#,
        );
        let doc = ChainDocument::parse(&division).unwrap();
        assert_eq!(
            doc.instantiate(4).unwrap_err(),
            Error::DivisionByZero {
                context: "schedule[0].when".into(),
                i: Some(2),
                n: 4
            }
        );

        let numeric_when = minimal(
            r#"{"when": "1 + 1", "use": "Q"}, {"when": "true", "use": "Q"}"#,
            r#""indicator:a""#,
        );
        let doc = ChainDocument::parse(&numeric_when).unwrap();
        assert!(matches!(
            doc.instantiate(3).unwrap_err(),
            Error::TypeMismatch {
                expected: "boolean",
                ..
            }
        ));
    }

    #[test]
    fn per_state_functions_see_the_position_index() {
        let text = minimal(r#"{"when": "true", "use": "Q"}"#, r#"["i", "0"]"#);
        let doc = ChainDocument::parse(&text).unwrap();
        let spec = doc.instantiate(3).unwrap();
        assert_eq!(spec.function(0), [1.0, 0.0]);
        assert_eq!(spec.function(1), [2.0, 0.0]);
        assert_eq!(spec.function(2), [3.0, 0.0]);
    }

    #[test]
    fn instantiation_needs_two_positions() {
        let doc = dobrushin_document(0.25).unwrap();
        assert!(matches!(
            doc.instantiate(1).unwrap_err(),
            Error::BadChain { .. }
        ));
    }

    #[test]
    fn family_wrapper_delegates() {
        let family = dobrushin_document(0.25)
            .unwrap()
            .into_family("anomalous two-state document");
        let spec = family.generate(32).unwrap();
        assert_eq!(spec.n(), 32);
        assert!(family.generate(8).is_ok());
    }

    #[test]
    fn exponent_range_is_enforced() {
        assert!(dobrushin_document(0.0).is_err());
        assert!(dobrushin_document(1.0).is_err());
        assert!(dobrushin_document(f64::NAN).is_err());
    }
}
