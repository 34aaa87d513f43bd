//! Call inlining. Non-public helper calls are resolved by splicing the
//! callee body in place of the `call` statement, substituting arguments for
//! parameters. Inlined copies get fresh statement ids that map back to the
//! originals through [`ProtocolIR::inline_origin`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InlineError {
    /// Expansion chain exceeded the recursion bound.
    #[error("inlining {function} exceeded depth bound {bound}")]
    InlineDepthExceeded { function: String, bound: u32 },
    #[error("call to unknown function {0}")]
    UnknownCallee(String),
    #[error("call to {callee} expects {expected} arguments, got {got}")]
    ArityMismatch {
        callee: String,
        expected: usize,
        got: usize,
    },
    #[error("argument {arg} of call to {callee} does not fit parameter kind")]
    ArgumentKind { callee: String, arg: usize },
}

/// Substitution of caller arguments for callee parameter names.
#[derive(Clone, Default)]
struct Subst {
    amounts: BTreeMap<String, AmountTerm>,
    addrs: BTreeMap<String, AddrTerm>,
    tokens: BTreeMap<String, TokenId>,
}

impl Subst {
    fn amount(&self, t: &AmountTerm) -> AmountTerm {
        match t {
            AmountTerm::Sym(name) => self.amounts.get(name).cloned().unwrap_or_else(|| t.clone()),
            c => c.clone(),
        }
    }

    fn addr(&self, a: &AddrTerm) -> AddrTerm {
        match a {
            AddrTerm::Param(name) => self.addrs.get(name).cloned().unwrap_or_else(|| a.clone()),
            other => other.clone(),
        }
    }

    fn token(&self, t: &TokenId) -> TokenId {
        self.tokens.get(&t.0).cloned().unwrap_or_else(|| t.clone())
    }
}

/// Resolves all `call` statements in public functions and hooks by inlining,
/// bounded by `bound` nested expansions. Idempotent: a protocol without
/// calls comes back structurally identical.
pub fn inline_calls(p: &ProtocolIR, bound: u32) -> Result<ProtocolIR, InlineError> {
    let mut out = p.clone();
    let source = p.clone();

    for ci in 0..out.contracts.len() {
        for fi in 0..out.contracts[ci].functions.len() {
            if !out.contracts[ci].functions[fi].is_public {
                continue;
            }
            let body = out.contracts[ci].functions[fi].body.clone();
            let owner = out.contracts[ci].id.clone();
            let new_body = inline_body(&mut out, &source, &owner, body, &Subst::default(), 0, bound)?;
            out.contracts[ci].functions[fi].body = new_body;
        }
    }
    for hi in 0..out.hooks.len() {
        let body = out.hooks[hi].body.clone();
        let owner = out.hooks[hi].owner.clone();
        let new_body = inline_body(&mut out, &source, &owner, body, &Subst::default(), 0, bound)?;
        out.hooks[hi].body = new_body;
    }
    Ok(out)
}

fn inline_body(
    out: &mut ProtocolIR,
    source: &ProtocolIR,
    owner: &AddrId,
    body: Vec<Statement>,
    subst: &Subst,
    depth: u32,
    bound: u32,
) -> Result<Vec<Statement>, InlineError> {
    let mut result = Vec::with_capacity(body.len());
    for stmt in body {
        match stmt.kind {
            StatementKind::Call { callee, args } => {
                if depth >= bound {
                    return Err(InlineError::InlineDepthExceeded {
                        function: callee,
                        bound,
                    });
                }
                let target = source
                    .contracts
                    .iter()
                    .find(|c| &c.id == owner)
                    .and_then(|c| c.functions.iter().find(|f| f.name == callee))
                    .ok_or_else(|| InlineError::UnknownCallee(callee.clone()))?;
                if target.params.len() != args.len() {
                    return Err(InlineError::ArityMismatch {
                        callee: callee.clone(),
                        expected: target.params.len(),
                        got: args.len(),
                    });
                }
                let inner = bind_args(&callee, target, &args, subst)?;
                let callee_body = target.body.clone();
                let inlined =
                    inline_body(out, source, owner, callee_body, &inner, depth + 1, bound)?;
                // Splice with fresh ids, remembering where each copy came from.
                for s in inlined {
                    result.push(refresh_ids(out, s, depth));
                }
            }
            StatementKind::Branch {
                then_body,
                else_body,
            } => {
                let then_body = inline_body(out, source, owner, then_body, subst, depth, bound)?;
                let else_body = inline_body(out, source, owner, else_body, subst, depth, bound)?;
                result.push(Statement {
                    id: stmt.id,
                    pos: stmt.pos,
                    kind: StatementKind::Branch {
                        then_body,
                        else_body,
                    },
                });
            }
            kind => {
                let kind = apply_subst(kind, subst);
                result.push(Statement {
                    id: stmt.id,
                    pos: stmt.pos,
                    kind,
                });
            }
        }
    }
    Ok(result)
}

fn bind_args(
    callee: &str,
    target: &FunctionDecl,
    args: &[CallArg],
    outer: &Subst,
) -> Result<Subst, InlineError> {
    let mut subst = Subst::default();
    for (i, (param, arg)) in target.params.iter().zip(args.iter()).enumerate() {
        match (param.kind, arg) {
            (ParamKind::Amount, CallArg::Num(r)) => {
                subst
                    .amounts
                    .insert(param.name.clone(), AmountTerm::Const(r.clone()));
            }
            (ParamKind::Amount, CallArg::Ident(name)) => {
                let resolved = outer.amount(&AmountTerm::Sym(name.clone()));
                subst.amounts.insert(param.name.clone(), resolved);
            }
            (ParamKind::Address, CallArg::Ident(name)) => {
                let term = match name.as_str() {
                    "this" => AddrTerm::This,
                    "caller" => AddrTerm::Caller,
                    _ => outer.addr(&AddrTerm::Param(name.clone())),
                };
                subst.addrs.insert(param.name.clone(), term);
            }
            (ParamKind::Token, CallArg::Ident(name)) => {
                let resolved = outer
                    .tokens
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| TokenId(name.clone()));
                subst.tokens.insert(param.name.clone(), resolved);
            }
            _ => {
                return Err(InlineError::ArgumentKind {
                    callee: callee.into(),
                    arg: i,
                })
            }
        }
    }
    Ok(subst)
}

fn apply_subst(kind: StatementKind, subst: &Subst) -> StatementKind {
    match kind {
        StatementKind::Transfer { token, to, amount } => StatementKind::Transfer {
            token: subst.token(&token),
            to: subst.addr(&to),
            amount: subst.amount(&amount),
        },
        StatementKind::TransferFrom {
            token,
            from,
            to,
            amount,
        } => StatementKind::TransferFrom {
            token: subst.token(&token),
            from: subst.addr(&from),
            to: subst.addr(&to),
            amount: subst.amount(&amount),
        },
        StatementKind::Mint { token, to, amount } => StatementKind::Mint {
            token: subst.token(&token),
            to: subst.addr(&to),
            amount: subst.amount(&amount),
        },
        StatementKind::Burn {
            token,
            from,
            amount,
        } => StatementKind::Burn {
            token: subst.token(&token),
            from: subst.addr(&from),
            amount: subst.amount(&amount),
        },
        other => other,
    }
}

/// Assigns a fresh id to an inlined statement (recursively for branch arms)
/// and records provenance back to the original statement.
fn refresh_ids(out: &mut ProtocolIR, s: Statement, _depth: u32) -> Statement {
    let fresh = out.fresh_stmt_id();
    // Map through any existing provenance so nested inlining still points at
    // the ultimate original; drop the intermediate entry.
    let origin = out.inline_origin.remove(&s.id).unwrap_or(s.id);
    out.inline_origin.insert(fresh, origin);
    let kind = match s.kind {
        StatementKind::Branch {
            then_body,
            else_body,
        } => StatementKind::Branch {
            then_body: then_body
                .into_iter()
                .map(|x| refresh_ids(out, x, _depth))
                .collect(),
            else_body: else_body
                .into_iter()
                .map(|x| refresh_ids(out, x, _depth))
                .collect(),
        },
        k => k,
    };
    Statement {
        id: fresh,
        pos: s.pos,
        kind,
    }
}
