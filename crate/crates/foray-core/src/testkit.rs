//! Deterministic test infrastructure: a seeded generator, an exact
//! linear-arithmetic backend, a brute-force path oracle, and random
//! instance builders. Compiled only with the `testkit` feature; never part
//! of the production pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Zero;

use crate::constraints::{ConstraintSet, Expr, Formula, Pred};
use crate::ir::{AddrId, AmountTerm, FnId, StmtId, TokenId};
use crate::num::{rat, Rational};
use crate::sim::ChainState;
use crate::sketch::pairing_valid;
use crate::smtlib::SmtQuery;
use crate::solver::{Model, SmtBackend, SolverError, UnsatCore, Verdict};
use crate::tfg::{
    payer_phi, recipient_phi, swap_phi, EdgeId, EdgeOp, EdgeProvenance, FlowAddr, Node, TfgEdge,
    TokenFlowGraph,
};

// ---------------------------------------------------------------------------
// Seeded generator
// ---------------------------------------------------------------------------

/// xorshift64*: small, fast, reproducible across platforms.
#[derive(Debug, Clone)]
pub struct XorShift64 {
    state: u64,
}

impl XorShift64 {
    pub fn new(seed: u64) -> Self {
        XorShift64 {
            state: seed.max(1),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in `0..n` (n > 0).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// True with probability `percent`/100.
    pub fn chance(&mut self, percent: u64) -> bool {
        self.next_u64() % 100 < percent
    }
}

// ---------------------------------------------------------------------------
// Exact linear-arithmetic backend (Fourier–Motzkin)
// ---------------------------------------------------------------------------

/// Decides conjunctions of linear comparisons over the rationals by
/// Fourier–Motzkin elimination. Suitable for the small probe systems used
/// in enumeration tests; returns an error on nonlinear atoms or
/// disjunctions. Sat verdicts carry an empty model.
#[derive(Debug, Default)]
pub struct LinearBackend {
    pub checks: u64,
}

/// One row: Σ coeffs·x + constant ⋈ 0 where ⋈ is `<= `(strict ⇒ `<`).
#[derive(Debug, Clone)]
struct Row {
    coeffs: BTreeMap<String, Rational>,
    constant: Rational,
    strict: bool,
}

fn linear_expr(e: &Expr) -> Result<(BTreeMap<String, Rational>, Rational), String> {
    match e {
        Expr::Const(r) => Ok((BTreeMap::new(), r.clone())),
        Expr::Var(v) => {
            let mut m = BTreeMap::new();
            m.insert(v.clone(), rat(1));
            Ok((m, rat(0)))
        }
        Expr::Add(l, r) => {
            let (mut cl, kl) = linear_expr(l)?;
            let (cr, kr) = linear_expr(r)?;
            for (v, c) in cr {
                *cl.entry(v).or_insert_with(|| rat(0)) += c;
            }
            Ok((cl, kl + kr))
        }
        Expr::Sub(l, r) => {
            let (mut cl, kl) = linear_expr(l)?;
            let (cr, kr) = linear_expr(r)?;
            for (v, c) in cr {
                *cl.entry(v).or_insert_with(|| rat(0)) -= c;
            }
            Ok((cl, kl - kr))
        }
        Expr::Mul(l, r) => {
            let (cl, kl) = linear_expr(l)?;
            let (cr, kr) = linear_expr(r)?;
            if cl.is_empty() {
                Ok((cr.into_iter().map(|(v, c)| (v, c * kl.clone())).collect(), kl * kr))
            } else if cr.is_empty() {
                Ok((cl.into_iter().map(|(v, c)| (v, c * kr.clone())).collect(), kl * kr))
            } else {
                Err("nonlinear product".to_string())
            }
        }
    }
}

/// An equation Σ coeffs·x + constant = 0, kept apart from inequalities so
/// it can be substituted away instead of fed to the elimination.
#[derive(Debug, Clone)]
struct EqRow {
    coeffs: BTreeMap<String, Rational>,
    constant: Rational,
}

fn rows_of(f: &Formula, ineqs: &mut Vec<Row>, eqs: &mut Vec<EqRow>) -> Result<(), String> {
    match f {
        Formula::Cmp(p, l, r) => {
            let (cl, kl) = linear_expr(l)?;
            let (cr, kr) = linear_expr(r)?;
            // l - r ⋈ 0
            let mut coeffs = cl;
            for (v, c) in cr {
                *coeffs.entry(v).or_insert_with(|| rat(0)) -= c;
            }
            coeffs.retain(|_, c| !c.is_zero());
            let constant = kl - kr;
            let mut push = |sign: i64, strict: bool| {
                ineqs.push(Row {
                    coeffs: coeffs
                        .iter()
                        .map(|(v, c)| (v.clone(), c.clone() * rat(sign)))
                        .collect(),
                    constant: constant.clone() * rat(sign),
                    strict,
                });
            };
            match p {
                Pred::Le => push(1, false),
                Pred::Lt => push(1, true),
                Pred::Ge => push(-1, false),
                Pred::Gt => push(-1, true),
                Pred::Eq => eqs.push(EqRow { coeffs, constant }),
                Pred::Ne => return Err("disequality".to_string()),
            }
            Ok(())
        }
        Formula::And(fs) => {
            for f in fs {
                rows_of(f, ineqs, eqs)?;
            }
            Ok(())
        }
        Formula::Not(_) | Formula::Or(_) => Err("non-conjunctive formula".to_string()),
    }
}

/// Substitutes every equation out of the system. Returns false when the
/// equations alone are inconsistent.
fn substitute_equalities(ineqs: &mut Vec<Row>, mut eqs: Vec<EqRow>) -> bool {
    while let Some(pos) = eqs.iter().position(|e| !e.coeffs.is_empty()) {
        let eq = eqs.remove(pos);
        let (var, coeff) = eq.coeffs.iter().next().map(|(v, c)| (v.clone(), c.clone())).unwrap();
        // var = -(rest + constant)/coeff
        let inv = rat(-1) / coeff;
        let mut rhs: BTreeMap<String, Rational> = eq
            .coeffs
            .iter()
            .filter(|(v, _)| **v != var)
            .map(|(v, c)| (v.clone(), c.clone() * inv.clone()))
            .collect();
        rhs.retain(|_, c| !c.is_zero());
        let rhs_const = eq.constant.clone() * inv;
        let apply = |coeffs: &mut BTreeMap<String, Rational>, constant: &mut Rational| {
            if let Some(c) = coeffs.remove(&var) {
                for (v, rc) in &rhs {
                    *coeffs.entry(v.clone()).or_insert_with(|| rat(0)) += rc.clone() * c.clone();
                }
                *constant += rhs_const.clone() * c;
                coeffs.retain(|_, cc| !cc.is_zero());
            }
        };
        for row in ineqs.iter_mut() {
            apply(&mut row.coeffs, &mut row.constant);
        }
        for e in eqs.iter_mut() {
            apply(&mut e.coeffs, &mut e.constant);
        }
    }
    // Remaining equations are constant: they must hold.
    eqs.iter().all(|e| e.constant.is_zero())
}

fn fm_satisfiable(mut rows: Vec<Row>) -> bool {
    loop {
        let Some(var) = rows
            .iter()
            .flat_map(|r| r.coeffs.keys())
            .next()
            .cloned()
        else {
            // Only constant rows remain: constant ⋈ 0.
            return rows.iter().all(|r| {
                if r.strict {
                    r.constant < rat(0)
                } else {
                    r.constant <= rat(0)
                }
            });
        };
        let mut lowers: Vec<Row> = Vec::new(); // var >= bound form
        let mut uppers: Vec<Row> = Vec::new(); // var <= bound form
        let mut rest: Vec<Row> = Vec::new();
        for mut row in rows {
            match row.coeffs.remove(&var) {
                None => rest.push(row),
                Some(c) => {
                    // c·var + Σ rest + k ⋈ 0  ⇒ var ⋚ -(Σ rest + k)/c
                    let inv = rat(1) / c.clone();
                    let normalized = Row {
                        coeffs: row
                            .coeffs
                            .iter()
                            .map(|(v, cc)| (v.clone(), cc.clone() * inv.clone()))
                            .collect(),
                        constant: row.constant.clone() * inv.clone(),
                        strict: row.strict,
                    };
                    if c > rat(0) {
                        uppers.push(normalized);
                    } else {
                        lowers.push(normalized);
                    }
                }
            }
        }
        // Combine: for each (lower, upper): lower-bound <= upper-bound.
        for lo in &lowers {
            for up in &uppers {
                // var >= -(lo.rest) and var <= -(up.rest):
                // -(lo.rest) <= -(up.rest)  ⇔  up.rest - lo.rest <= 0
                let mut coeffs = up.coeffs.clone();
                for (v, c) in &lo.coeffs {
                    *coeffs.entry(v.clone()).or_insert_with(|| rat(0)) -= c.clone();
                }
                coeffs.retain(|_, c| !c.is_zero());
                rest.push(Row {
                    coeffs,
                    constant: up.constant.clone() - lo.constant.clone(),
                    strict: lo.strict || up.strict,
                });
            }
        }
        rows = rest;
    }
}

impl SmtBackend for LinearBackend {
    fn check(&mut self, _query: &SmtQuery) -> Result<Verdict, SolverError> {
        Err(SolverError::SolverUnavailable(
            "linear test backend answers structural queries only".into(),
        ))
    }

    fn check_set(&mut self, cs: &ConstraintSet, _timeout_ms: u64) -> Result<Verdict, SolverError> {
        self.checks += 1;
        let mut ineqs = Vec::new();
        let mut eqs = Vec::new();
        for atom in &cs.atoms {
            rows_of(&atom.formula, &mut ineqs, &mut eqs).map_err(|message| {
                SolverError::ProtocolError {
                    message: format!("atom {}: {}", atom.name, message),
                    transcript: String::new(),
                }
            })?;
        }
        if !substitute_equalities(&mut ineqs, eqs) {
            return Ok(Verdict::Unsat(UnsatCore::default()));
        }
        if fm_satisfiable(ineqs) {
            Ok(Verdict::Sat(Model::default()))
        } else {
            Ok(Verdict::Unsat(UnsatCore::default()))
        }
    }
}

// ---------------------------------------------------------------------------
// Hand-built graphs and the brute-force oracle
// ---------------------------------------------------------------------------

/// Builds an edge with the Fig-style Φ for its operator, an attacker
/// actor, and symbolic amounts named `in`/`out`.
pub fn make_edge(
    id: u32,
    src: Node,
    dst: Node,
    op: EdgeOp,
    counterparty: &str,
    attacker: &AddrId,
) -> TfgEdge {
    let actor = FlowAddr::Role(attacker.clone());
    let amount_in = AmountTerm::Sym("in".to_string());
    let amount_out = AmountTerm::Sym("out".to_string());
    let constraint = match (&op, &src, &dst) {
        (EdgeOp::Swap, Node::Token(u), Node::Token(v)) => {
            swap_phi(u, v, &actor, &amount_in, &amount_out)
        }
        (EdgeOp::Borrow | EdgeOp::Mint, _, Node::Token(u)) => {
            recipient_phi(u, &actor, &amount_in)
        }
        (_, Node::Token(u), _) => payer_phi(u, &actor, &amount_in),
        _ => Default::default(),
    };
    let amount_out = if op == EdgeOp::Swap {
        Some(amount_out)
    } else {
        None
    };
    TfgEdge {
        id: EdgeId(id),
        src,
        dst,
        op,
        constraint,
        provenance: EdgeProvenance {
            function: FnId {
                owner: AddrId(counterparty.to_string()),
                name: format!("f{id}"),
            },
            function_index: id,
            statements: alloc::vec![StmtId(id)],
            counterparty: Some(AddrId(counterparty.to_string())),
            actor,
            amount_in,
            amount_out,
            reverse: false,
        },
    }
}

pub fn make_graph(tokens: &[&str], edges: Vec<TfgEdge>) -> TokenFlowGraph {
    let mut nodes: BTreeSet<Node> = tokens
        .iter()
        .map(|t| Node::Token(TokenId(t.to_string())))
        .collect();
    nodes.insert(Node::Epsilon);
    TokenFlowGraph { nodes, edges }
}

/// Per-path probe oracle: rebuilds the whole-path constraint system in one
/// shot (initial facts, strict positive amounts, step-indexed edge Φ,
/// attacker-side conservation with loan threading, frames, nonnegativity)
/// and asks the backend once per prefix. Intentionally a from-scratch
/// reimplementation of the incremental store the enumerator maintains.
pub fn path_feasible(
    graph: &TokenFlowGraph,
    s0: &ChainState,
    path: &[EdgeId],
    backend: &mut dyn SmtBackend,
) -> bool {
    for prefix_len in 1..=path.len() {
        let cs = path_constraints(graph, s0, &path[..prefix_len]);
        match backend.check_set(&cs, 1_000) {
            Ok(Verdict::Sat(_)) => {}
            _ => return false,
        }
    }
    true
}

fn path_constraints(graph: &TokenFlowGraph, s0: &ChainState, path: &[EdgeId]) -> ConstraintSet {
    let mut cs = ConstraintSet::default();
    let tokens: Vec<TokenId> = graph
        .nodes
        .iter()
        .filter_map(|n| match n {
            Node::Token(t) => Some(t.clone()),
            Node::Epsilon => None,
        })
        .collect();
    for ((token, addr), v) in &s0.balances {
        cs.push(
            format!("s0_{}_{}", token, addr),
            crate::constraints::Label::Initial,
            Formula::cmp(
                Pred::Eq,
                Expr::var(crate::constraints::balance_var(token, addr, 0)),
                Expr::Const(v.clone()),
            ),
        );
    }
    let attacker = &s0.attacker;
    let abal = |tok: &TokenId, t: usize| {
        Expr::var(crate::constraints::balance_var(tok, attacker, t))
    };
    let mut loans: Vec<(Option<AddrId>, TokenId, String)> = Vec::new();
    for (t, id) in path.iter().enumerate() {
        let e = graph.edge(*id);
        let x = Expr::var(crate::afl::amount_hole_name(t, e.id));
        let y = Expr::var(crate::afl::out_hole_name(t, e.id));
        cs.push(
            format!("q{t}_posx"),
            crate::constraints::Label::Op(t as u32),
            Formula::cmp(Pred::Gt, x.clone(), Expr::Const(rat(0))),
        );
        if e.op == EdgeOp::Swap {
            cs.push(
                format!("q{t}_posy"),
                crate::constraints::Label::Op(t as u32),
                Formula::cmp(Pred::Gt, y.clone(), Expr::Const(rat(0))),
            );
        }
        // Φ re-read directly off the edge.
        for (i, atom) in e.constraint.atoms.iter().enumerate() {
            let balref = |b: &crate::tfg::BalRef| {
                let step = if b.primed { t + 1 } else { t };
                let role = match &b.addr {
                    FlowAddr::Role(a) => a.clone(),
                    FlowAddr::Sym(s) => AddrId(format!("sym_{s}")),
                    FlowAddr::Dead => AddrId("dead".to_string()),
                };
                Expr::var(crate::constraints::balance_var(&b.token, &role, step))
            };
            let lhs = balref(&atom.lhs);
            let rhs = match &atom.rhs {
                crate::tfg::PhiTerm::Bal(b) => balref(b),
                crate::tfg::PhiTerm::Amount(a) => {
                    if Some(a) == e.provenance.amount_out.as_ref() {
                        y.clone()
                    } else {
                        x.clone()
                    }
                }
            };
            let pred = match atom.op {
                crate::tfg::CmpOp::Ge => Pred::Ge,
                crate::tfg::CmpOp::Le => Pred::Le,
            };
            cs.push(
                format!("q{t}_phi{i}"),
                crate::constraints::Label::Op(t as u32),
                Formula::cmp(pred, lhs, rhs),
            );
        }
        // Conservation for the attacker.
        let mut touched: BTreeSet<TokenId> = BTreeSet::new();
        match (&e.op, &e.src, &e.dst) {
            (EdgeOp::Borrow, _, Node::Token(u)) => {
                cs.push(
                    format!("q{t}_upd"),
                    crate::constraints::Label::Op(t as u32),
                    Formula::cmp(Pred::Eq, abal(u, t + 1), abal(u, t).add(x.clone())),
                );
                touched.insert(u.clone());
                if let Expr::Var(v) = &x {
                    loans.push((e.provenance.counterparty.clone(), u.clone(), v.clone()));
                }
            }
            (EdgeOp::Payback, Node::Token(u), _) => {
                cs.push(
                    format!("q{t}_upd"),
                    crate::constraints::Label::Op(t as u32),
                    Formula::cmp(Pred::Eq, abal(u, t + 1), abal(u, t).sub(x.clone())),
                );
                touched.insert(u.clone());
                if let Some(idx) = loans
                    .iter()
                    .rposition(|(l, tok, _)| l == &e.provenance.counterparty && tok == u)
                {
                    let (_, _, borrowed) = loans.remove(idx);
                    cs.push(
                        format!("q{t}_loan"),
                        crate::constraints::Label::Op(t as u32),
                        Formula::cmp(Pred::Ge, x.clone(), Expr::var(borrowed)),
                    );
                }
            }
            (EdgeOp::Swap, Node::Token(u), Node::Token(v)) => {
                cs.push(
                    format!("q{t}_upd_out"),
                    crate::constraints::Label::Op(t as u32),
                    Formula::cmp(Pred::Eq, abal(u, t + 1), abal(u, t).sub(x.clone())),
                );
                cs.push(
                    format!("q{t}_upd_in"),
                    crate::constraints::Label::Op(t as u32),
                    Formula::cmp(Pred::Eq, abal(v, t + 1), abal(v, t).add(y.clone())),
                );
                touched.insert(u.clone());
                touched.insert(v.clone());
            }
            (EdgeOp::Mint, _, Node::Token(u)) => {
                cs.push(
                    format!("q{t}_upd"),
                    crate::constraints::Label::Op(t as u32),
                    Formula::cmp(Pred::Eq, abal(u, t + 1), abal(u, t).add(x.clone())),
                );
                touched.insert(u.clone());
            }
            (EdgeOp::Burn | EdgeOp::Transfer, Node::Token(u), _) => {
                cs.push(
                    format!("q{t}_upd"),
                    crate::constraints::Label::Op(t as u32),
                    Formula::cmp(Pred::Eq, abal(u, t + 1), abal(u, t).sub(x.clone())),
                );
                touched.insert(u.clone());
            }
            _ => {}
        }
        for token in &tokens {
            if !touched.contains(token) {
                cs.push(
                    format!("q{t}_frm_{token}"),
                    crate::constraints::Label::Op(t as u32),
                    Formula::cmp(Pred::Eq, abal(token, t + 1), abal(token, t)),
                );
            }
            cs.push(
                format!("q{t}_nn_{token}"),
                crate::constraints::Label::Op(t as u32),
                Formula::cmp(Pred::Ge, abal(token, t + 1), Expr::Const(rat(0))),
            );
        }
    }
    cs
}

/// Exhaustively enumerates every held-token-reachable path up to
/// `max_depth` and returns those that are feasible at every prefix, cover
/// the targets, and pair their loans — the reference definition the
/// breadth-first enumerator must match.
pub fn brute_force_yields(
    graph: &TokenFlowGraph,
    s0: &ChainState,
    targets: &BTreeSet<TokenId>,
    max_depth: usize,
    backend: &mut dyn SmtBackend,
) -> BTreeSet<Vec<EdgeId>> {
    let root = crate::sketch::init_search(graph, s0);
    let mut out = BTreeSet::new();
    let mut stack: Vec<(Vec<EdgeId>, BTreeSet<Node>)> = alloc::vec![(Vec::new(), root.held)];
    while let Some((path, held)) = stack.pop() {
        if path.len() >= max_depth {
            continue;
        }
        for e in &graph.edges {
            if !held.contains(&e.src) {
                continue;
            }
            let mut next_path = path.clone();
            next_path.push(e.id);
            // Parent prefixes are feasible by DFS invariant; checking the
            // extended conjunction keeps every-prefix feasibility.
            let cs = path_constraints(graph, s0, &next_path);
            if !matches!(backend.check_set(&cs, 1_000), Ok(Verdict::Sat(_))) {
                continue;
            }
            let mut next_held = held.clone();
            next_held.insert(e.dst.clone());
            let covers = targets
                .iter()
                .all(|t| next_held.contains(&Node::Token(t.clone())));
            if covers && pairing_valid(graph, &next_path) {
                out.insert(next_path.clone());
            }
            stack.push((next_path, next_held));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

/// Random graph with at most two tokens plus ε and at most `max_edges`
/// edges, with a matching initial state.
pub fn random_graph(rng: &mut XorShift64, max_edges: usize) -> (TokenFlowGraph, ChainState) {
    let attacker = AddrId("attacker".to_string());
    let token_names = ["A", "B"];
    let n_tokens = 1 + rng.below(2);
    let tokens: Vec<TokenId> = token_names[..n_tokens]
        .iter()
        .map(|t| TokenId(t.to_string()))
        .collect();
    let n_edges = 1 + rng.below(max_edges);
    let mut edges = Vec::new();
    for i in 0..n_edges {
        let pick_token = |rng: &mut XorShift64| tokens[rng.below(tokens.len())].clone();
        let (op, src, dst) = match rng.below(6) {
            0 => {
                let u = pick_token(rng);
                (EdgeOp::Borrow, Node::Epsilon, Node::Token(u))
            }
            1 => {
                let u = pick_token(rng);
                (EdgeOp::Payback, Node::Token(u), Node::Epsilon)
            }
            2 => {
                let u = pick_token(rng);
                (EdgeOp::Mint, Node::Epsilon, Node::Token(u))
            }
            3 => {
                let u = pick_token(rng);
                (EdgeOp::Burn, Node::Token(u), Node::Epsilon)
            }
            4 if tokens.len() == 2 => (
                EdgeOp::Swap,
                Node::Token(tokens[0].clone()),
                Node::Token(tokens[1].clone()),
            ),
            _ => {
                let u = pick_token(rng);
                let dst = if rng.chance(50) {
                    Node::Epsilon
                } else {
                    Node::Token(pick_token(rng))
                };
                (EdgeOp::Transfer, Node::Token(u), dst)
            }
        };
        let counterparty = if op == EdgeOp::Borrow || op == EdgeOp::Payback {
            "lender"
        } else {
            "market"
        };
        edges.push(make_edge(i as u32, src, dst, op, counterparty, &attacker));
    }
    let graph = make_graph(&token_names[..n_tokens], edges);
    let mut state = ChainState {
        attacker: attacker.clone(),
        ..Default::default()
    };
    for t in &tokens {
        let bal = match rng.below(3) {
            0 => rat(0),
            1 => rat(5),
            _ => rat(100),
        };
        state.set_balance(t.clone(), attacker.clone(), bal);
    }
    (graph, state)
}

// ---------------------------------------------------------------------------
// Random protocols and programs
// ---------------------------------------------------------------------------

/// Random valid protocol: a few tokens, contracts with flow statements,
/// sometimes branches, occasionally a flash-loan pattern with its hook.
pub fn random_protocol(rng: &mut XorShift64) -> crate::ir::ProtocolIR {
    use crate::ir::*;
    let token_names = ["T0", "T1", "T2"];
    let n_tokens = 1 + rng.below(3);
    let n_contracts = 1 + rng.below(2);
    let mut src = String::new();
    for t in &token_names[..n_tokens] {
        src.push_str(&format!("token {t} decimals={}", rng.below(18)));
        // Every contract may mint/burn so random bodies stay valid.
        src.push_str(" minters=[c0, c1]");
        if rng.chance(40) {
            src.push_str(" stablecoin");
        }
        src.push('\n');
    }
    src.push_str("attacker atk\n");
    let mut hook_needed = false;
    for c in 0..n_contracts {
        src.push_str(&format!("contract c{c} {{\n"));
        let n_fns = 1 + rng.below(2);
        for f in 0..n_fns {
            src.push_str(&format!("  public fn f{f}(x: amount) {{\n"));
            let n_stmts = 1 + rng.below(3);
            for _ in 0..n_stmts {
                let tok = token_names[rng.below(n_tokens)];
                let stmt = match rng.below(6) {
                    0 => format!("    transfer {tok} to caller amount x\n"),
                    1 => format!("    transferfrom {tok} from caller to this amount x\n"),
                    2 => format!("    mint {tok} to caller amount x\n"),
                    3 => format!("    burn {tok} from caller amount x\n"),
                    4 => format!(
                        "    branch {{\n      transfer {tok} to caller amount x\n    }} else {{\n      burn {tok} from caller amount 2\n    }}\n"
                    ),
                    _ => {
                        hook_needed = true;
                        format!("    transfer {tok} to caller amount x\n    callback h0\n")
                    }
                };
                src.push_str(&stmt);
            }
            src.push_str("  }\n");
        }
        src.push_str("}\n");
    }
    if hook_needed {
        src.push_str("hooks {\n  fn h0(y: amount) {\n");
        // The repaying flow may or may not match a lend flow's token.
        let tok = token_names[rng.below(n_tokens)];
        src.push_str(&format!("    transferfrom {tok} from atk to c0 amount y\n"));
        src.push_str("  }\n}\n");
    }
    let parsed = parse_protocol(&src).expect("generated protocol parses");
    inline_calls(&parsed, DEFAULT_INLINE_DEPTH).expect("generated protocol inlines")
}

/// Random environment: two tokens, a pool, a lender, and a handful of
/// participant balances.
pub fn random_state(rng: &mut XorShift64) -> ChainState {
    let mut src = String::from("attacker atk\n");
    let fee_num = rng.below(30);
    src.push_str(&format!(
        "pool amm tokens=T0/T1 reserves={}/{} fee={}/1000\n",
        100 + rng.below(10_000),
        100 + rng.below(10_000),
        fee_num
    ));
    src.push_str(&format!(
        "lender bank token=T0 liquidity={} fee={}\n",
        100 + rng.below(10_000),
        if rng.chance(50) { "0" } else { "1/100" }
    ));
    for addr in ["atk", "bob"] {
        for tok in ["T0", "T1"] {
            src.push_str(&format!("balance {addr} {tok} {}\n", rng.below(5_000)));
        }
    }
    crate::sim::load_state(&src).expect("generated state loads")
}

/// Random transfer-only program over the standard random-state universe.
pub fn random_transfer_program(rng: &mut XorShift64) -> crate::afl::AttackProgram {
    use crate::afl::{AflOp, AttackProgram, Term};
    let addrs = ["atk", "bob", "amm", "bank"];
    let toks = ["T0", "T1"];
    let n = 1 + rng.below(6);
    let mut ops = Vec::new();
    for _ in 0..n {
        let from = addrs[rng.below(addrs.len())];
        let to = addrs[rng.below(addrs.len())];
        ops.push(AflOp::Transfer {
            token: TokenId(toks[rng.below(toks.len())].to_string()),
            from: AddrId(from.to_string()),
            to: AddrId(to.to_string()),
            amount: Term::Const(rat(rng.below(3_000) as i64)),
        });
    }
    AttackProgram {
        ops,
        binding: Default::default(),
    }
}

/// Random program over all op kinds, amounts chosen so that both passing
/// and reverting runs occur.
pub fn random_program(rng: &mut XorShift64) -> crate::afl::AttackProgram {
    use crate::afl::{AflOp, AttackProgram, Term};
    let n = 1 + rng.below(6);
    let mut ops = Vec::new();
    let tok = |s: &str| TokenId(s.to_string());
    let addr = |s: &str| AddrId(s.to_string());
    for _ in 0..n {
        let amount = Term::Const(rat(rng.below(4_000) as i64));
        let op = match rng.below(6) {
            0 => AflOp::Transfer {
                token: tok(if rng.chance(50) { "T0" } else { "T1" }),
                from: addr(if rng.chance(50) { "atk" } else { "bob" }),
                to: addr("bob"),
                amount,
            },
            1 => AflOp::Burn {
                token: tok("T0"),
                from: addr("atk"),
                amount,
            },
            2 => AflOp::Mint {
                token: tok("T1"),
                to: addr("atk"),
                amount,
            },
            3 => {
                let fwd = rng.chance(50);
                AflOp::Swap {
                    market: addr("amm"),
                    src_token: tok(if fwd { "T0" } else { "T1" }),
                    dst_token: tok(if fwd { "T1" } else { "T0" }),
                    amount_in: amount,
                    min_out: Term::Const(rat(0)),
                    to: addr("atk"),
                }
            }
            4 => AflOp::Borrow {
                lender: addr("bank"),
                token: tok("T0"),
                amount,
            },
            _ => AflOp::Payback {
                lender: addr("bank"),
                token: tok("T0"),
                amount,
            },
        };
        ops.push(op);
    }
    AttackProgram {
        ops,
        binding: Default::default(),
    }
}
