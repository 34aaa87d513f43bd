//! Attack goal language: quantifier-free comparisons and conjunctions over
//! start/end balance references.
//!
//! Balance references carry an explicit epoch tag so that profit goals can
//! compare the attacker's balance before and after the attack. Quantified
//! input is rejected.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Zero;

use crate::ir::{AddrId, ProtocolIR, TokenId};
use crate::num::{parse_rational, rat, render_rational, Rational};
use crate::sim::ChainState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Epoch {
    Start,
    End,
}

impl core::fmt::Display for Epoch {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Epoch::Start => "start",
            Epoch::End => "end",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceRef {
    pub token: TokenId,
    pub addr: AddrId,
    pub epoch: Epoch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalExpr {
    Const(Rational),
    Balance(BalanceRef),
    Add(Box<GoalExpr>, Box<GoalExpr>),
    Sub(Box<GoalExpr>, Box<GoalExpr>),
    Mul(Box<GoalExpr>, Box<GoalExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalCmp {
    Eq,
    Ge,
    Lt,
}

impl core::fmt::Display for GoalCmp {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            GoalCmp::Eq => "=",
            GoalCmp::Ge => ">=",
            GoalCmp::Lt => "<",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalFormula {
    Cmp(GoalCmp, GoalExpr, GoalExpr),
    Not(Box<GoalFormula>),
    And(Box<GoalFormula>, Box<GoalFormula>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    pub ast: GoalFormula,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GoalError {
    #[error("goal syntax error at offset {at}: {message}")]
    Syntax { at: usize, message: String },
    /// Quantifiers are not part of the goal language.
    #[error("quantified goals are rejected")]
    QuantifiedGoalRejected,
    #[error("goal references undeclared token {0}")]
    UndeclaredToken(String),
    #[error("goal references undeclared address {0}")]
    UndeclaredAddress(String),
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Lexer<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
}

fn lex(text: &str) -> Vec<(usize, &str)> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two = text.get(i..i + 2);
        if let Some(op @ (">=" | "<=" | "&&")) = two {
            toks.push((i, op));
            i += 2;
            continue;
        }
        if "()+-*,=<>!.".contains(c) {
            toks.push((i, &text[i..i + 1]));
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_whitespace() || "()+-*,=<>!.".contains(c) {
                break;
            }
            i += 1;
        }
        toks.push((start, &text[start..i]));
    }
    toks
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|t| t.1)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(usize::MAX)
    }

    fn bump(&mut self) -> Option<&'a str> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: &str) -> Result<(), GoalError> {
        match self.bump() {
            Some(t) if t == tok => Ok(()),
            got => Err(GoalError::Syntax {
                at: self.at(),
                message: format!("expected `{tok}`, got {:?}", got),
            }),
        }
    }
}

/// Parses a goal against a protocol's token and address declarations.
/// Token lookup is case-insensitive; comparisons `a > b` and `a <= b`
/// desugar to `b < a` and `b >= a`.
pub fn parse_goal(text: &str, p: &ProtocolIR) -> Result<Goal, GoalError> {
    let toks = lex(text);
    if let Some((_, first)) = toks.first() {
        if *first == "exists" || *first == "forall" {
            return Err(GoalError::QuantifiedGoalRejected);
        }
    }
    let mut lx = Lexer { toks, pos: 0 };
    let ast = parse_formula(&mut lx, p)?;
    if lx.peek().is_some() {
        return Err(GoalError::Syntax {
            at: lx.at(),
            message: format!("unexpected trailing `{}`", lx.peek().unwrap()),
        });
    }
    Ok(Goal { ast })
}

fn parse_formula(lx: &mut Lexer<'_>, p: &ProtocolIR) -> Result<GoalFormula, GoalError> {
    let mut left = parse_unary(lx, p)?;
    while lx.peek() == Some("&&") {
        lx.bump();
        let right = parse_unary(lx, p)?;
        left = GoalFormula::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_unary(lx: &mut Lexer<'_>, p: &ProtocolIR) -> Result<GoalFormula, GoalError> {
    if lx.peek() == Some("!") {
        lx.bump();
        lx.expect("(")?;
        let inner = parse_formula(lx, p)?;
        lx.expect(")")?;
        return Ok(GoalFormula::Not(Box::new(inner)));
    }
    let lhs = parse_expr(lx, p)?;
    let op = match lx.bump() {
        Some("=") => GoalCmp::Eq,
        Some(">=") => GoalCmp::Ge,
        Some("<") => GoalCmp::Lt,
        Some(">") => {
            let rhs = parse_expr(lx, p)?;
            return Ok(GoalFormula::Cmp(GoalCmp::Lt, rhs, lhs));
        }
        Some("<=") => {
            let rhs = parse_expr(lx, p)?;
            return Ok(GoalFormula::Cmp(GoalCmp::Ge, rhs, lhs));
        }
        got => {
            return Err(GoalError::Syntax {
                at: lx.at(),
                message: format!("expected comparison, got {:?}", got),
            })
        }
    };
    let rhs = parse_expr(lx, p)?;
    Ok(GoalFormula::Cmp(op, lhs, rhs))
}

fn parse_expr(lx: &mut Lexer<'_>, p: &ProtocolIR) -> Result<GoalExpr, GoalError> {
    let mut left = parse_term(lx, p)?;
    loop {
        match lx.peek() {
            Some("+") => {
                lx.bump();
                let right = parse_term(lx, p)?;
                left = GoalExpr::Add(Box::new(left), Box::new(right));
            }
            Some("-") => {
                lx.bump();
                let right = parse_term(lx, p)?;
                left = GoalExpr::Sub(Box::new(left), Box::new(right));
            }
            _ => break,
        }
    }
    Ok(left)
}

fn parse_term(lx: &mut Lexer<'_>, p: &ProtocolIR) -> Result<GoalExpr, GoalError> {
    let mut left = parse_factor(lx, p)?;
    while lx.peek() == Some("*") {
        lx.bump();
        let right = parse_factor(lx, p)?;
        left = GoalExpr::Mul(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_factor(lx: &mut Lexer<'_>, p: &ProtocolIR) -> Result<GoalExpr, GoalError> {
    match lx.peek() {
        Some("(") => {
            lx.bump();
            let e = parse_expr(lx, p)?;
            lx.expect(")")?;
            Ok(e)
        }
        Some("-") => {
            lx.bump();
            let e = parse_factor(lx, p)?;
            Ok(GoalExpr::Sub(Box::new(GoalExpr::Const(rat(0))), Box::new(e)))
        }
        Some("balance") => {
            lx.bump();
            lx.expect("(")?;
            let token_raw = lx.bump().unwrap_or("").to_string();
            lx.expect(",")?;
            let addr_raw = lx.bump().unwrap_or("").to_string();
            lx.expect(",")?;
            let epoch = match lx.bump() {
                Some("start") => Epoch::Start,
                Some("end") => Epoch::End,
                got => {
                    return Err(GoalError::Syntax {
                        at: lx.at(),
                        message: format!("expected epoch start|end, got {:?}", got),
                    })
                }
            };
            lx.expect(")")?;
            let token = p
                .tokens
                .iter()
                .find(|t| t.id.0.eq_ignore_ascii_case(&token_raw))
                .map(|t| t.id.clone())
                .ok_or(GoalError::UndeclaredToken(token_raw))?;
            let addr = if addr_raw == "attacker" || addr_raw == p.attacker.0 {
                p.attacker.clone()
            } else if p.contracts.iter().any(|c| c.id.0 == addr_raw) {
                AddrId(addr_raw)
            } else {
                return Err(GoalError::UndeclaredAddress(addr_raw));
            };
            Ok(GoalExpr::Balance(BalanceRef { token, addr, epoch }))
        }
        Some(t) => match parse_rational(t) {
            Some(r) => {
                lx.bump();
                Ok(GoalExpr::Const(r))
            }
            None => Err(GoalError::Syntax {
                at: lx.at(),
                message: format!("unexpected `{t}`"),
            }),
        },
        None => Err(GoalError::Syntax {
            at: usize::MAX,
            message: "unexpected end of input".to_string(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Canonical text form; `parse_goal` of the output reproduces the AST.
pub fn render_goal(g: &Goal) -> String {
    render_formula(&g.ast)
}

fn render_formula(f: &GoalFormula) -> String {
    match f {
        GoalFormula::Cmp(op, l, r) => {
            format!("{} {} {}", render_expr(l, 0), op, render_expr(r, 0))
        }
        GoalFormula::Not(inner) => format!("!({})", render_formula(inner)),
        GoalFormula::And(l, r) => format!("{} && {}", render_formula(l), render_formula(r)),
    }
}

// prec: 0 = additive context, 1 = multiplicative context
fn render_expr(e: &GoalExpr, prec: u8) -> String {
    match e {
        GoalExpr::Const(r) => render_rational(r),
        GoalExpr::Balance(b) => format!("balance({}, {}, {})", b.token, b.addr, b.epoch),
        GoalExpr::Add(l, r) => {
            let s = format!("{} + {}", render_expr(l, 0), render_expr(r, 1));
            if prec > 0 {
                format!("({s})")
            } else {
                s
            }
        }
        GoalExpr::Sub(l, r) => {
            let s = format!("{} - {}", render_expr(l, 0), render_expr(r, 1));
            if prec > 0 {
                format!("({s})")
            } else {
                s
            }
        }
        GoalExpr::Mul(l, r) => format!("{} * {}", render_expr(l, 1), render_expr(r, 1)),
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// One profit goal per stablecoin, in token declaration order: the
/// attacker's end balance strictly exceeds the start balance.
pub fn generate_goals(p: &ProtocolIR) -> Vec<Goal> {
    p.stablecoins()
        .into_iter()
        .map(|token| {
            let bal = |epoch| {
                GoalExpr::Balance(BalanceRef {
                    token: token.clone(),
                    addr: p.attacker.clone(),
                    epoch,
                })
            };
            Goal {
                ast: GoalFormula::Cmp(
                    GoalCmp::Lt,
                    GoalExpr::Const(rat(0)),
                    GoalExpr::Sub(Box::new(bal(Epoch::End)), Box::new(bal(Epoch::Start))),
                ),
            }
        })
        .collect()
}

/// The tokens occurring in balance references of the goal.
pub fn target_tokens(g: &Goal) -> BTreeSet<TokenId> {
    let mut out = BTreeSet::new();
    collect_tokens_formula(&g.ast, &mut out);
    out
}

fn collect_tokens_formula(f: &GoalFormula, out: &mut BTreeSet<TokenId>) {
    match f {
        GoalFormula::Cmp(_, l, r) => {
            collect_tokens_expr(l, out);
            collect_tokens_expr(r, out);
        }
        GoalFormula::Not(inner) => collect_tokens_formula(inner, out),
        GoalFormula::And(l, r) => {
            collect_tokens_formula(l, out);
            collect_tokens_formula(r, out);
        }
    }
}

fn collect_tokens_expr(e: &GoalExpr, out: &mut BTreeSet<TokenId>) {
    match e {
        GoalExpr::Const(_) => {}
        GoalExpr::Balance(b) => {
            out.insert(b.token.clone());
        }
        GoalExpr::Add(l, r) | GoalExpr::Sub(l, r) | GoalExpr::Mul(l, r) => {
            collect_tokens_expr(l, out);
            collect_tokens_expr(r, out);
        }
    }
}

/// Evaluates the goal over two concrete states with exact arithmetic.
/// Missing balance entries read as zero.
pub fn eval_goal(g: &Goal, start: &ChainState, end: &ChainState) -> bool {
    eval_formula(&g.ast, start, end)
}

fn eval_formula(f: &GoalFormula, start: &ChainState, end: &ChainState) -> bool {
    match f {
        GoalFormula::Cmp(op, l, r) => {
            let lv = eval_expr(l, start, end);
            let rv = eval_expr(r, start, end);
            match op {
                GoalCmp::Eq => lv == rv,
                GoalCmp::Ge => lv >= rv,
                GoalCmp::Lt => lv < rv,
            }
        }
        GoalFormula::Not(inner) => !eval_formula(inner, start, end),
        GoalFormula::And(l, r) => eval_formula(l, start, end) && eval_formula(r, start, end),
    }
}

fn eval_expr(e: &GoalExpr, start: &ChainState, end: &ChainState) -> Rational {
    match e {
        GoalExpr::Const(r) => r.clone(),
        GoalExpr::Balance(b) => {
            let state = match b.epoch {
                Epoch::Start => start,
                Epoch::End => end,
            };
            state
                .balance(&b.token, &b.addr)
                .cloned()
                .unwrap_or_else(Rational::zero)
        }
        GoalExpr::Add(l, r) => eval_expr(l, start, end) + eval_expr(r, start, end),
        GoalExpr::Sub(l, r) => eval_expr(l, start, end) - eval_expr(r, start, end),
        GoalExpr::Mul(l, r) => eval_expr(l, start, end) * eval_expr(r, start, end),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_protocol;
    use alloc::vec;

    const MUMUG_IR: &str = include_str!("../../foray/fixtures/mumug.ir");

    fn mumug() -> crate::ir::ProtocolIR {
        parse_protocol(MUMUG_IR).unwrap()
    }

    #[test]
    fn parses_profit_goal() {
        let p = mumug();
        let g = parse_goal(
            "0 < balance(usdce, attacker, end) - balance(usdce, attacker, start)",
            &p,
        )
        .unwrap();
        match &g.ast {
            GoalFormula::Cmp(GoalCmp::Lt, lhs, rhs) => {
                assert_eq!(lhs, &GoalExpr::Const(rat(0)));
                assert!(matches!(rhs, GoalExpr::Sub(_, _)));
            }
            other => panic!("unexpected ast {other:?}"),
        }
        // Token lookup resolved the declared casing.
        assert_eq!(
            target_tokens(&g).into_iter().collect::<Vec<_>>(),
            vec![TokenId("USDCe".into())]
        );
    }

    #[test]
    fn parses_tautology() {
        let p = mumug();
        let g = parse_goal("balance(mu, attacker, end) = balance(mu, attacker, end)", &p).unwrap();
        assert!(matches!(g.ast, GoalFormula::Cmp(GoalCmp::Eq, _, _)));
        assert_eq!(
            target_tokens(&g).into_iter().collect::<Vec<_>>(),
            vec![TokenId("MU".into())]
        );
    }

    #[test]
    fn rejects_quantifiers() {
        let p = mumug();
        assert_eq!(
            parse_goal("exists x. 0 < x", &p).unwrap_err(),
            GoalError::QuantifiedGoalRejected
        );
        assert_eq!(
            parse_goal("forall y. y = y", &p).unwrap_err(),
            GoalError::QuantifiedGoalRejected
        );
    }

    #[test]
    fn desugars_flipped_comparisons() {
        let p = mumug();
        let gt = parse_goal("balance(mu, attacker, end) > 5", &p).unwrap();
        let lt = parse_goal("5 < balance(mu, attacker, end)", &p).unwrap();
        assert_eq!(gt, lt);
        let le = parse_goal("balance(mu, attacker, end) <= 5", &p).unwrap();
        let ge = parse_goal("5 >= balance(mu, attacker, end)", &p).unwrap();
        assert_eq!(le, ge);
    }

    #[test]
    fn render_parse_round_trip() {
        let p = mumug();
        for text in [
            "0 < balance(USDCe, attacker, end) - balance(USDCe, attacker, start)",
            "!(balance(MU, attacker, end) = 0) && 3 >= balance(MU, mubank, start) * 2",
            "0 < 1",
            "balance(MU, attacker, end) - (balance(MU, attacker, start) + 7) >= 0",
        ] {
            let g = parse_goal(text, &p).unwrap();
            let rendered = render_goal(&g);
            let reparsed = parse_goal(&rendered, &p).unwrap();
            assert_eq!(g, reparsed, "through {rendered}");
        }
    }

    #[test]
    fn generates_one_goal_per_stablecoin() {
        let p = mumug();
        let goals = generate_goals(&p);
        assert_eq!(goals.len(), 1);
        assert_eq!(
            render_goal(&goals[0]),
            "0 < balance(USDCe, attacker, end) - balance(USDCe, attacker, start)"
        );
        // No stablecoins, no goals.
        let bare = parse_protocol("token GOLD decimals=2\nattacker atk\n").unwrap();
        assert!(generate_goals(&bare).is_empty());
        // Declaration order is preserved.
        let two = parse_protocol(
            "token USDT decimals=6 stablecoin\ntoken BUSD decimals=6 stablecoin\nattacker atk\n",
        )
        .unwrap();
        let goals = generate_goals(&two);
        assert_eq!(goals.len(), 2);
        assert!(render_goal(&goals[0]).contains("USDT"));
        assert!(render_goal(&goals[1]).contains("BUSD"));
    }

    #[test]
    fn constant_goal_has_no_targets() {
        let p = mumug();
        let g = parse_goal("0 < 1", &p).unwrap();
        assert!(target_tokens(&g).is_empty());
    }

    #[test]
    fn target_tokens_distribute_over_conjunction() {
        let p = mumug();
        let g1 = parse_goal("0 < balance(MU, attacker, end)", &p).unwrap();
        let g2 = parse_goal("0 < balance(USDCe, attacker, end)", &p).unwrap();
        let both = Goal {
            ast: GoalFormula::And(Box::new(g1.ast.clone()), Box::new(g2.ast.clone())),
        };
        let mut expected = target_tokens(&g1);
        expected.extend(target_tokens(&g2));
        assert_eq!(target_tokens(&both), expected);
    }

    #[test]
    fn zero_profit_is_not_profit() {
        let p = mumug();
        let goals = generate_goals(&p);
        let state = ChainState {
            attacker: p.attacker.clone(),
            ..Default::default()
        };
        assert!(!eval_goal(&goals[0], &state, &state));
        let mut end = state.clone();
        end.set_balance(TokenId("USDCe".into()), p.attacker.clone(), rat(1));
        assert!(eval_goal(&goals[0], &state, &end));
    }

    #[test]
    fn missing_balances_read_as_zero() {
        let p = mumug();
        let g = parse_goal("balance(MU, mubank, end) = 0", &p).unwrap();
        let empty = ChainState::default();
        assert!(eval_goal(&g, &empty, &empty));
    }
}
