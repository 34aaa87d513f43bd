//! The abstract financial operation language: transfer, mint, burn, swap,
//! borrow, payback over tokens and addresses.
//!
//! Attack sketches are flat operator sequences whose amount fields are
//! symbolic holes; completed attack programs are hole-free. Borrow blocks
//! are represented flat, with loan pairing enforced as an invariant.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Signed;

use crate::ir::{AddrId, TokenId};
use crate::num::{floor, parse_rational, render_rational, Rational};
use crate::tfg::{EdgeId, EdgeOp, FlowAddr, Node, TfgEdge};

/// Map from hole name to concrete value.
pub type Binding = BTreeMap<String, Rational>;

/// An amount field: concrete base-unit value or a named hole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Const(Rational),
    Hole(String),
}

impl Term {
    pub fn hole_name(&self) -> Option<&str> {
        match self {
            Term::Hole(n) => Some(n),
            Term::Const(_) => None,
        }
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            Term::Const(r) => Some(r),
            Term::Hole(_) => None,
        }
    }
}

impl core::fmt::Display for Term {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Term::Const(r) => f.write_str(&render_rational(r)),
            Term::Hole(n) => write!(f, "?{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AflOp {
    Transfer {
        token: TokenId,
        from: AddrId,
        to: AddrId,
        amount: Term,
    },
    Burn {
        token: TokenId,
        from: AddrId,
        amount: Term,
    },
    Mint {
        token: TokenId,
        to: AddrId,
        amount: Term,
    },
    Swap {
        market: AddrId,
        src_token: TokenId,
        dst_token: TokenId,
        amount_in: Term,
        min_out: Term,
        to: AddrId,
    },
    Borrow {
        lender: AddrId,
        token: TokenId,
        amount: Term,
    },
    Payback {
        lender: AddrId,
        token: TokenId,
        amount: Term,
    },
}

impl AflOp {
    pub fn kind(&self) -> EdgeOp {
        match self {
            AflOp::Transfer { .. } => EdgeOp::Transfer,
            AflOp::Burn { .. } => EdgeOp::Burn,
            AflOp::Mint { .. } => EdgeOp::Mint,
            AflOp::Swap { .. } => EdgeOp::Swap,
            AflOp::Borrow { .. } => EdgeOp::Borrow,
            AflOp::Payback { .. } => EdgeOp::Payback,
        }
    }

    pub fn terms(&self) -> Vec<&Term> {
        match self {
            AflOp::Transfer { amount, .. }
            | AflOp::Burn { amount, .. }
            | AflOp::Mint { amount, .. }
            | AflOp::Borrow { amount, .. }
            | AflOp::Payback { amount, .. } => alloc::vec![amount],
            AflOp::Swap {
                amount_in, min_out, ..
            } => alloc::vec![amount_in, min_out],
        }
    }

    pub fn holes(&self) -> impl Iterator<Item = &str> {
        self.terms().into_iter().filter_map(|t| t.hole_name())
    }
}

impl core::fmt::Display for AflOp {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AflOp::Transfer {
                token,
                from,
                to,
                amount,
            } => write!(f, "transfer token={token} from={from} to={to} amount={amount}"),
            AflOp::Burn {
                token,
                from,
                amount,
            } => write!(f, "burn token={token} from={from} amount={amount}"),
            AflOp::Mint { token, to, amount } => {
                write!(f, "mint token={token} to={to} amount={amount}")
            }
            AflOp::Swap {
                market,
                src_token,
                dst_token,
                amount_in,
                min_out,
                to,
            } => write!(
                f,
                "swap market={market} src={src_token} dst={dst_token} in={amount_in} min_out={min_out} to={to}"
            ),
            AflOp::Borrow {
                lender,
                token,
                amount,
            } => write!(f, "borrow lender={lender} token={token} amount={amount}"),
            AflOp::Payback {
                lender,
                token,
                amount,
            } => write!(f, "payback lender={lender} token={token} amount={amount}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSketch {
    pub ops: Vec<AflOp>,
    pub holes: BTreeSet<String>,
    pub source_path: Vec<EdgeId>,
}

impl AttackSketch {
    pub fn render(&self) -> String {
        render_ops(&self.ops)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackProgram {
    pub ops: Vec<AflOp>,
    pub binding: Binding,
}

impl AttackProgram {
    pub fn render(&self) -> String {
        render_ops(&self.ops)
    }
}

/// One op per line; the inverse of [`parse_afl_ops`].
pub fn render_ops(ops: &[AflOp]) -> String {
    let mut out = String::new();
    for op in ops {
        out.push_str(&format!("{op}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SketchError {
    /// The path ends inside an open loan.
    #[error("borrow at op {0} has no matching payback")]
    UnpairedBorrow(usize),
    /// A payback fires with no matching open loan.
    #[error("payback at op {0} matches no open borrow")]
    UnpairedPayback(usize),
    #[error("edge {0} has no resolved counterparty or actor")]
    UnresolvedField(EdgeId),
    #[error("path is empty")]
    EmptyPath,
}

/// Loan pairing by a single left-to-right scan with a stack: a payback
/// closes the most recent open borrow on the same lender and token.
pub fn loan_pairs(ops: &[AflOp]) -> Result<Vec<(usize, usize)>, SketchError> {
    let mut stack: Vec<(usize, &AddrId, &TokenId)> = Vec::new();
    let mut pairs = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        match op {
            AflOp::Borrow { lender, token, .. } => stack.push((i, lender, token)),
            AflOp::Payback { lender, token, .. } => {
                let open = stack
                    .iter()
                    .rposition(|(_, l, t)| *l == lender && *t == token)
                    .ok_or(SketchError::UnpairedPayback(i))?;
                let (bi, _, _) = stack.remove(open);
                pairs.push((bi, i));
            }
            _ => {}
        }
    }
    if let Some((i, _, _)) = stack.first() {
        return Err(SketchError::UnpairedBorrow(*i));
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// True when some loan body is empty (payback immediately follows its
/// borrow). The block grammar requires at least one statement in between.
pub fn has_empty_loan_body(ops: &[AflOp]) -> bool {
    match loan_pairs(ops) {
        Ok(pairs) => pairs.iter().any(|(b, p)| p - b <= 1),
        Err(_) => false,
    }
}

fn role_addr(a: &FlowAddr, edge: EdgeId) -> Result<AddrId, SketchError> {
    match a {
        FlowAddr::Role(id) => Ok(id.clone()),
        _ => Err(SketchError::UnresolvedField(edge)),
    }
}

fn term_for(edge_term: &crate::ir::AmountTerm, hole: String) -> (Term, Option<String>) {
    match edge_term {
        crate::ir::AmountTerm::Const(r) => (Term::Const(r.clone()), None),
        crate::ir::AmountTerm::Sym(_) => (Term::Hole(hole.clone()), Some(hole)),
    }
}

/// Canonical hole name for the input amount of the op at `step` converted
/// from `edge`. Shared with the probe and compilation variable namespaces so
/// learned conflicts transfer between them.
pub fn amount_hole_name(step: usize, edge: EdgeId) -> String {
    format!("x{}_{}", step, edge)
}

/// Canonical hole name for a swap output / minimum-out field.
pub fn out_hole_name(step: usize, edge: EdgeId) -> String {
    format!("y{}_{}", step, edge)
}

/// Converts a TFG path into an attack sketch: one op per edge in path
/// order, symbolic amounts becoming fresh holes, address fields resolved
/// from edge provenance.
pub fn sketch_from_path(path: &[&TfgEdge]) -> Result<AttackSketch, SketchError> {
    if path.is_empty() {
        return Err(SketchError::EmptyPath);
    }
    let mut ops = Vec::with_capacity(path.len());
    let mut holes = BTreeSet::new();
    for (i, edge) in path.iter().enumerate() {
        let actor = role_addr(&edge.provenance.actor, edge.id)?;
        let amount_name = amount_hole_name(i, edge.id);
        let (amount, hole) = term_for(&edge.provenance.amount_in, amount_name);
        holes.extend(hole);
        let op = match edge.op {
            EdgeOp::Borrow => AflOp::Borrow {
                lender: edge
                    .provenance
                    .counterparty
                    .clone()
                    .ok_or(SketchError::UnresolvedField(edge.id))?,
                token: node_token(&edge.dst, edge.id)?,
                amount,
            },
            EdgeOp::Payback => AflOp::Payback {
                lender: edge
                    .provenance
                    .counterparty
                    .clone()
                    .ok_or(SketchError::UnresolvedField(edge.id))?,
                token: node_token(&edge.src, edge.id)?,
                amount,
            },
            EdgeOp::Swap => {
                let min_out = Term::Hole(out_hole_name(i, edge.id));
                holes.insert(out_hole_name(i, edge.id));
                AflOp::Swap {
                    market: edge
                        .provenance
                        .counterparty
                        .clone()
                        .ok_or(SketchError::UnresolvedField(edge.id))?,
                    src_token: node_token(&edge.src, edge.id)?,
                    dst_token: node_token(&edge.dst, edge.id)?,
                    amount_in: amount,
                    min_out,
                    to: actor,
                }
            }
            EdgeOp::Mint => AflOp::Mint {
                token: node_token(&edge.dst, edge.id)?,
                to: actor,
                amount,
            },
            EdgeOp::Burn => AflOp::Burn {
                token: node_token(&edge.src, edge.id)?,
                from: actor,
                amount,
            },
            EdgeOp::Transfer => AflOp::Transfer {
                token: node_token(&edge.src, edge.id)?,
                from: actor,
                to: edge
                    .provenance
                    .counterparty
                    .clone()
                    .ok_or(SketchError::UnresolvedField(edge.id))?,
                amount,
            },
        };
        ops.push(op);
    }
    loan_pairs(&ops)?;
    Ok(AttackSketch {
        ops,
        holes,
        source_path: path.iter().map(|e| e.id).collect(),
    })
}

fn node_token(n: &Node, edge: EdgeId) -> Result<TokenId, SketchError> {
    match n {
        Node::Token(t) => Ok(t.clone()),
        Node::Epsilon => Err(SketchError::UnresolvedField(edge)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompleteError {
    #[error("model binds no value for hole {0}")]
    UnboundHole(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

/// Instantiates a sketch with a model: every hole is rewritten to its bound
/// value, op order and operator tags unchanged.
///
/// Minimum-out fields are floored to whole base units because the simulator
/// floors swap outputs at division points; all other amounts are substituted
/// exactly.
pub fn complete(sketch: &AttackSketch, model: &Binding) -> Result<AttackProgram, CompleteError> {
    let subst = |t: &Term, is_min_out: bool| -> Result<Term, CompleteError> {
        match t {
            Term::Const(r) => Ok(Term::Const(r.clone())),
            Term::Hole(name) => {
                let v = model
                    .get(name)
                    .ok_or_else(|| CompleteError::UnboundHole(name.clone()))?;
                if v.is_negative() {
                    return Err(CompleteError::InvariantViolation(format!(
                        "negative amount {} for hole {}",
                        render_rational(v),
                        name
                    )));
                }
                Ok(Term::Const(if is_min_out { floor(v) } else { v.clone() }))
            }
        }
    };
    let mut ops = Vec::with_capacity(sketch.ops.len());
    for op in &sketch.ops {
        let new = match op {
            AflOp::Transfer {
                token,
                from,
                to,
                amount,
            } => AflOp::Transfer {
                token: token.clone(),
                from: from.clone(),
                to: to.clone(),
                amount: subst(amount, false)?,
            },
            AflOp::Burn {
                token,
                from,
                amount,
            } => AflOp::Burn {
                token: token.clone(),
                from: from.clone(),
                amount: subst(amount, false)?,
            },
            AflOp::Mint { token, to, amount } => AflOp::Mint {
                token: token.clone(),
                to: to.clone(),
                amount: subst(amount, false)?,
            },
            AflOp::Swap {
                market,
                src_token,
                dst_token,
                amount_in,
                min_out,
                to,
            } => {
                if src_token == dst_token {
                    return Err(CompleteError::InvariantViolation(
                        "swap source and target tokens coincide".to_string(),
                    ));
                }
                AflOp::Swap {
                    market: market.clone(),
                    src_token: src_token.clone(),
                    dst_token: dst_token.clone(),
                    amount_in: subst(amount_in, false)?,
                    min_out: subst(min_out, true)?,
                    to: to.clone(),
                }
            }
            AflOp::Borrow {
                lender,
                token,
                amount,
            } => AflOp::Borrow {
                lender: lender.clone(),
                token: token.clone(),
                amount: subst(amount, false)?,
            },
            AflOp::Payback {
                lender,
                token,
                amount,
            } => AflOp::Payback {
                lender: lender.clone(),
                token: token.clone(),
                amount: subst(amount, false)?,
            },
        };
        ops.push(new);
    }
    let binding: Binding = sketch
        .holes
        .iter()
        .map(|h| {
            model
                .get(h)
                .map(|v| (h.clone(), v.clone()))
                .ok_or_else(|| CompleteError::UnboundHole(h.clone()))
        })
        .collect::<Result<_, _>>()?;
    Ok(AttackProgram { ops, binding })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AflParseError {
    #[error("line {line}: {message}")]
    Malformed { line: u32, message: String },
}

/// Parses the canonical one-op-per-line rendering produced by
/// [`render_ops`]. `?name` fields parse as holes.
pub fn parse_afl_ops(text: &str) -> Result<Vec<AflOp>, AflParseError> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let head = words.next().unwrap();
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for w in words {
            let Some((k, v)) = w.split_once('=') else {
                return Err(AflParseError::Malformed {
                    line: line_no,
                    message: format!("expected key=value, got `{w}`"),
                });
            };
            fields.insert(k, v);
        }
        let get = |k: &str| -> Result<&str, AflParseError> {
            fields.get(k).copied().ok_or_else(|| AflParseError::Malformed {
                line: line_no,
                message: format!("missing field `{k}`"),
            })
        };
        let term = |v: &str| -> Result<Term, AflParseError> {
            if let Some(name) = v.strip_prefix('?') {
                Ok(Term::Hole(name.to_string()))
            } else {
                parse_rational(v).map(Term::Const).ok_or_else(|| {
                    AflParseError::Malformed {
                        line: line_no,
                        message: format!("bad amount `{v}`"),
                    }
                })
            }
        };
        let op = match head {
            "transfer" => AflOp::Transfer {
                token: TokenId(get("token")?.to_string()),
                from: AddrId(get("from")?.to_string()),
                to: AddrId(get("to")?.to_string()),
                amount: term(get("amount")?)?,
            },
            "burn" => AflOp::Burn {
                token: TokenId(get("token")?.to_string()),
                from: AddrId(get("from")?.to_string()),
                amount: term(get("amount")?)?,
            },
            "mint" => AflOp::Mint {
                token: TokenId(get("token")?.to_string()),
                to: AddrId(get("to")?.to_string()),
                amount: term(get("amount")?)?,
            },
            "swap" => AflOp::Swap {
                market: AddrId(get("market")?.to_string()),
                src_token: TokenId(get("src")?.to_string()),
                dst_token: TokenId(get("dst")?.to_string()),
                amount_in: term(get("in")?)?,
                min_out: term(get("min_out")?)?,
                to: AddrId(get("to")?.to_string()),
            },
            "borrow" => AflOp::Borrow {
                lender: AddrId(get("lender")?.to_string()),
                token: TokenId(get("token")?.to_string()),
                amount: term(get("amount")?)?,
            },
            "payback" => AflOp::Payback {
                lender: AddrId(get("lender")?.to_string()),
                token: TokenId(get("token")?.to_string()),
                amount: term(get("amount")?)?,
            },
            other => {
                return Err(AflParseError::Malformed {
                    line: line_no,
                    message: format!("unknown op `{other}`"),
                })
            }
        };
        ops.push(op);
    }
    Ok(ops)
}
