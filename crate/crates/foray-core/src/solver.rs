//! Solver-facing types and the backend abstraction.
//!
//! The concrete backends (external process, transcript replay) live in the
//! `foray` crate; everything here is pure. [`block_model`] implements model
//! enumeration by excluding a neighborhood of a returned model.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::constraints::{eval_formula, Assignment, Expr, Formula, Label, NamedAtom, Pred};
use crate::num::Rational;
use crate::smtlib::SmtQuery;

/// A model: every declared unknown of the query it answers maps to an exact
/// rational value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Model {
    pub values: BTreeMap<String, Rational>,
}

impl Model {
    pub fn get(&self, name: &str) -> Option<&Rational> {
        self.values.get(name)
    }

    pub fn as_assignment(&self) -> &Assignment {
        &self.values
    }

    /// Stable content hash over the canonical rendering, for provenance.
    pub fn content_hash(&self) -> u64 {
        let mut text = String::new();
        for (k, v) in &self.values {
            text.push_str(k);
            text.push('=');
            text.push_str(&crate::num::render_rational(v));
            text.push(';');
        }
        crate::smtlib::fnv1a(text.as_bytes())
    }
}

/// Named assertions that are jointly unsatisfiable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UnsatCore {
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Sat(Model),
    Unsat(UnsatCore),
    Unknown,
}

impl Verdict {
    pub fn is_sat(&self) -> bool {
        matches!(self, Verdict::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, Verdict::Unsat(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    /// The solver process could not be spawned or spoken to.
    #[error("solver unavailable: {0}")]
    SolverUnavailable(String),
    /// The solver replied with something unparseable; the transcript is
    /// attached for diagnosis.
    #[error("solver protocol error: {message}")]
    ProtocolError { message: String, transcript: String },
    /// Replay mode has no recorded reply for this query.
    #[error("no recorded reply for query {hash:016x}")]
    MissingTranscript { hash: u64 },
}

/// Per-session statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolverStats {
    pub queries: u64,
    pub sat: u64,
    pub unsat: u64,
    pub unknown: u64,
    pub wall_ms: u64,
}

/// A check-sat backend. Implementations must be deterministic given fixed
/// query bytes (and, for live solvers, a fixed binary and seed).
pub trait SmtBackend {
    fn check(&mut self, query: &SmtQuery) -> Result<Verdict, SolverError>;

    /// Checks a constraint set; the default renders to SMT-LIB2 text and
    /// defers to [`SmtBackend::check`]. Structural backends may override.
    fn check_set(
        &mut self,
        cs: &crate::constraints::ConstraintSet,
        timeout_ms: u64,
    ) -> Result<Verdict, SolverError> {
        self.check(&crate::smtlib::render_query(cs, timeout_ms))
    }

    fn stats(&self) -> SolverStats {
        SolverStats::default()
    }
}

impl<T: SmtBackend + ?Sized> SmtBackend for alloc::boxed::Box<T> {
    fn check(&mut self, query: &SmtQuery) -> Result<Verdict, SolverError> {
        (**self).check(query)
    }

    fn check_set(
        &mut self,
        cs: &crate::constraints::ConstraintSet,
        timeout_ms: u64,
    ) -> Result<Verdict, SolverError> {
        (**self).check_set(cs, timeout_ms)
    }

    fn stats(&self) -> SolverStats {
        (**self).stats()
    }
}

/// Builds the blocking atom for a model: at least one unknown must differ
/// from its model value by more than `radius`. With radius zero this is a
/// plain disjunction of disequalities, which strictly excludes the model
/// itself.
pub fn blocking_formula(model: &Model, radius: &Rational) -> Formula {
    use num_traits::Zero;
    let mut parts: Vec<Formula> = Vec::new();
    for (name, value) in &model.values {
        if radius.is_zero() {
            parts.push(Formula::Cmp(
                Pred::Ne,
                Expr::var(name.clone()),
                Expr::Const(value.clone()),
            ));
        } else {
            parts.push(Formula::Cmp(
                Pred::Lt,
                Expr::var(name.clone()),
                Expr::Const(value.clone() - radius.clone()),
            ));
            parts.push(Formula::Cmp(
                Pred::Gt,
                Expr::var(name.clone()),
                Expr::Const(value.clone() + radius.clone()),
            ));
        }
    }
    Formula::Or(parts)
}

/// Appends a blocking atom for `model` to a constraint set copy. The
/// returned atom name is unique within the set.
pub fn block_model(
    cs: &crate::constraints::ConstraintSet,
    model: &Model,
    radius: &Rational,
    seq: usize,
) -> NamedAtom {
    let name = format!("block{}_{:016x}", seq, model.content_hash());
    debug_assert!(cs.atom(&name).is_none(), "blocking atom name collides");
    NamedAtom {
        name,
        label: Label::Knowledge,
        formula: blocking_formula(model, radius),
    }
}

/// True when the model still satisfies the atom — used to verify blocking
/// progress: after blocking with radius zero, this must be false for the
/// blocking atom.
pub fn model_satisfies(atom: &NamedAtom, model: &Model) -> bool {
    eval_formula(&atom.formula, model.as_assignment())
}

/// Parses solver reply values like `5.0`, `(/ 1.0 2.0)`, `(- 3.0)`,
/// `(/ (- 1.0) 2.0)`, `0.5`, or plain integers. Returns `None` for
/// irrational or unrecognized value terms (e.g. algebraic `root-obj`).
pub fn parse_value_sexpr(s: &str) -> Option<Rational> {
    let t = s.trim();
    if let Some(inner) = t.strip_prefix('(').and_then(|x| x.strip_suffix(')')) {
        let inner = inner.trim();
        if let Some(rest) = inner.strip_prefix('-') {
            // Unary minus over one operand.
            return parse_value_sexpr(rest).map(|v| -v);
        }
        if let Some(rest) = inner.strip_prefix('/') {
            let (a, b) = split_two_operands(rest.trim())?;
            let num = parse_value_sexpr(a)?;
            let den = parse_value_sexpr(b)?;
            use num_traits::Zero;
            if den.is_zero() {
                return None;
            }
            return Some(num / den);
        }
        return None;
    }
    parse_decimal(t)
}

/// Splits `a b` where each operand is an atom or a parenthesized group.
fn split_two_operands(s: &str) -> Option<(&str, &str)> {
    let s = s.trim();
    let first_end = if s.starts_with('(') {
        let mut depth = 0usize;
        let mut end = None;
        for (i, c) in s.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i + 1);
                        break;
                    }
                }
                _ => {}
            }
        }
        end?
    } else {
        s.find(char::is_whitespace)?
    };
    let (a, b) = s.split_at(first_end);
    Some((a, b.trim()))
}

/// Parses `123`, `123.0`, `0.25`, `-7.5`.
fn parse_decimal(s: &str) -> Option<Rational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let r = if let Some((int_part, frac_part)) = body.split_once('.') {
        let int_part = if int_part.is_empty() { "0" } else { int_part };
        let digits = format!("{int_part}{frac_part}");
        let numer: num_bigint::BigInt = digits.parse().ok()?;
        let denom = num_bigint::BigInt::from(10u32).pow(frac_part.len() as u32);
        Rational::new(numer, denom)
    } else {
        Rational::from_integer(body.parse().ok()?)
    };
    Some(if neg { -r } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, ratio};

    #[test]
    fn parses_reply_values() {
        assert_eq!(parse_value_sexpr("5.0"), Some(rat(5)));
        assert_eq!(parse_value_sexpr("0.5"), Some(ratio(1, 2)));
        assert_eq!(parse_value_sexpr("(/ 1.0 2.0)"), Some(ratio(1, 2)));
        assert_eq!(parse_value_sexpr("(- 3.0)"), Some(rat(-3)));
        assert_eq!(parse_value_sexpr("(/ (- 1.0) 2.0)"), Some(ratio(-1, 2)));
        assert_eq!(parse_value_sexpr("17"), Some(rat(17)));
        assert_eq!(
            parse_value_sexpr("(root-obj (+ (^ x 2) (- 2)) 1)"),
            None
        );
    }
}
