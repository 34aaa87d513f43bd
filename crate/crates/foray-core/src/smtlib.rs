//! SMT-LIB2 rendering of constraint sets.
//!
//! One `declare-const ... Real` per variable, one named assert per atom,
//! then `check-sat`, `get-value` over every declared variable, and
//! `get-unsat-core`. Queries are plain text so they can be content-hashed
//! and replayed byte-for-byte.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Signed;

use crate::constraints::{ConstraintSet, Expr, Formula, Pred};
use crate::num::Rational;

/// A rendered query plus the variables a model must cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtQuery {
    pub text: String,
    pub vars: Vec<String>,
    pub timeout_ms: u64,
}

impl SmtQuery {
    /// Stable 64-bit content hash of the query bytes (FNV-1a), used as the
    /// replay-transcript key.
    pub fn content_hash(&self) -> u64 {
        fnv1a(self.text.as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Renders a constraint set into a self-contained SMT-LIB2 script.
pub fn render_query(cs: &ConstraintSet, timeout_ms: u64) -> SmtQuery {
    let vars: Vec<String> = cs.variables().into_iter().collect();
    let mut out = String::new();
    out.push_str("(set-option :print-success false)\n");
    out.push_str("(set-option :produce-models true)\n");
    out.push_str("(set-option :produce-unsat-cores true)\n");
    out.push_str("(set-option :smt.random_seed 7)\n");
    if timeout_ms > 0 {
        out.push_str(&format!("(set-option :timeout {timeout_ms})\n"));
    }
    for v in &vars {
        out.push_str(&format!("(declare-const {v} Real)\n"));
    }
    for atom in &cs.atoms {
        out.push_str(&format!(
            "(assert (! {} :named {}))\n",
            render_formula_smt(&atom.formula),
            atom.name
        ));
    }
    out.push_str("(check-sat)\n");
    if !vars.is_empty() {
        out.push_str(&format!("(get-value ({}))\n", vars.join(" ")));
    }
    out.push_str("(get-unsat-core)\n");
    SmtQuery {
        text: out,
        vars,
        timeout_ms,
    }
}

pub fn render_formula_smt(f: &Formula) -> String {
    match f {
        Formula::Cmp(p, l, r) => {
            let op = match p {
                Pred::Eq => "=",
                Pred::Ne => "distinct",
                Pred::Ge => ">=",
                Pred::Le => "<=",
                Pred::Gt => ">",
                Pred::Lt => "<",
            };
            format!("({op} {} {})", render_expr_smt(l), render_expr_smt(r))
        }
        Formula::Not(inner) => format!("(not {})", render_formula_smt(inner)),
        Formula::And(fs) => nary("and", fs),
        Formula::Or(fs) => nary("or", fs),
    }
}

fn nary(op: &str, fs: &[Formula]) -> String {
    match fs.len() {
        0 => (if op == "and" { "true" } else { "false" }).to_string(),
        1 => render_formula_smt(&fs[0]),
        _ => {
            let parts: Vec<String> = fs.iter().map(render_formula_smt).collect();
            format!("({op} {})", parts.join(" "))
        }
    }
}

pub fn render_expr_smt(e: &Expr) -> String {
    match e {
        Expr::Const(r) => render_real_literal(r),
        Expr::Var(v) => v.clone(),
        Expr::Add(l, r) => format!("(+ {} {})", render_expr_smt(l), render_expr_smt(r)),
        Expr::Sub(l, r) => format!("(- {} {})", render_expr_smt(l), render_expr_smt(r)),
        Expr::Mul(l, r) => format!("(* {} {})", render_expr_smt(l), render_expr_smt(r)),
    }
}

/// SMT-LIB Real literal: `k.0`, `(- k.0)`, `(/ p.0 q.0)`.
pub fn render_real_literal(r: &Rational) -> String {
    let mag = r.abs();
    let body = if crate::num::is_integer(&mag) {
        format!("{}.0", mag.numer())
    } else {
        format!("(/ {}.0 {}.0)", mag.numer(), mag.denom())
    };
    if r.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}
