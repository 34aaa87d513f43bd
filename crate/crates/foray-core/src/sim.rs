//! Concrete DeFi environment: balances, constant-product pools, flash-loan
//! lenders, and quote-rule banks, plus a transactional interpreter for
//! completed attack programs.
//!
//! Division points (pool outputs, bank quotes, loan fees) floor to whole
//! base units; everything else is exact rational arithmetic. A whole
//! program is one transaction: any failing op reverts to the initial state.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::afl::{AflOp, AttackProgram, Term};
use crate::goal::{eval_goal, Goal};
use crate::ir::{AddrId, TokenId};
use crate::num::{floor, parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub token_a: TokenId,
    pub token_b: TokenId,
    /// Input fee fraction in [0, 1).
    pub fee: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lender {
    pub token: TokenId,
    /// Loan fee fraction: repayment must cover amount * (1 + fee).
    pub fee: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuoteRule {
    /// Output priced by the referenced pool's current reserve ratio.
    PoolRatio { pool: AddrId },
    /// Fixed units of output token per unit of input token.
    FixedRate { rate: Rational },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bank {
    pub token_in: TokenId,
    pub token_out: TokenId,
    pub quote: QuoteRule,
}

/// Concrete blockchain state. Pool reserves are the pool address's own
/// balance entries, so the reserve/balance consistency invariant holds by
/// representation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChainState {
    pub attacker: AddrId,
    pub balances: BTreeMap<(TokenId, AddrId), Rational>,
    pub pools: BTreeMap<AddrId, Pool>,
    pub lenders: BTreeMap<AddrId, Lender>,
    pub banks: BTreeMap<AddrId, Bank>,
}

impl ChainState {
    pub fn balance(&self, token: &TokenId, addr: &AddrId) -> Option<&Rational> {
        self.balances.get(&(token.clone(), addr.clone()))
    }

    pub fn balance_or_zero(&self, token: &TokenId, addr: &AddrId) -> Rational {
        self.balance(token, addr).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn set_balance(&mut self, token: TokenId, addr: AddrId, value: Rational) {
        self.balances.insert((token, addr), value);
    }

    fn credit(&mut self, token: &TokenId, addr: &AddrId, amount: &Rational) {
        let entry = self
            .balances
            .entry((token.clone(), addr.clone()))
            .or_insert_with(Rational::zero);
        *entry += amount;
    }

    /// Debits, failing when the balance would go negative.
    fn debit(&mut self, token: &TokenId, addr: &AddrId, amount: &Rational) -> Result<(), ()> {
        let current = self.balance_or_zero(token, addr);
        if &current < amount {
            return Err(());
        }
        self.set_balance(token.clone(), addr.clone(), current - amount);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("line {line}: {message}")]
    Malformed { line: u32, message: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Parses the textual `.state` format (see `docs/formats.md`). Pool,
/// lender, and bank lines materialize the contract's own balance entries;
/// explicit `balance` lines may not collide with them.
pub fn load_state(text: &str) -> Result<ChainState, StateError> {
    let mut state = ChainState::default();
    let mut materialized: Vec<(TokenId, AddrId)> = Vec::new();
    let mut have_attacker = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let head = words.next().unwrap();
        let rest: Vec<&str> = words.collect();
        let err = |message: String| StateError::Malformed {
            line: line_no,
            message,
        };
        let fields = |rest: &[&str]| -> BTreeMap<String, String> {
            rest.iter()
                .filter_map(|w| w.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        };
        match head {
            "attacker" => {
                let id = rest.first().ok_or_else(|| err("missing attacker id".into()))?;
                state.attacker = AddrId(id.to_string());
                have_attacker = true;
            }
            "pool" => {
                let id = AddrId(
                    rest.first()
                        .ok_or_else(|| err("missing pool id".into()))?
                        .to_string(),
                );
                let kv = fields(&rest[1..]);
                let tokens = kv.get("tokens").ok_or_else(|| err("missing tokens=".into()))?;
                let (ta, tb) = tokens
                    .split_once('/')
                    .ok_or_else(|| err("tokens must be A/B".into()))?;
                let reserves = kv
                    .get("reserves")
                    .ok_or_else(|| err("missing reserves=".into()))?;
                let (ra, rb) = reserves
                    .split_once('/')
                    .ok_or_else(|| err("reserves must be a/b".into()))?;
                let ra = parse_rational(ra).ok_or_else(|| err("bad reserve".into()))?;
                let rb = parse_rational(rb).ok_or_else(|| err("bad reserve".into()))?;
                let fee = match kv.get("fee") {
                    Some(f) => parse_rational(f).ok_or_else(|| err("bad fee".into()))?,
                    None => Rational::zero(),
                };
                let token_a = TokenId(ta.to_string());
                let token_b = TokenId(tb.to_string());
                state.set_balance(token_a.clone(), id.clone(), ra);
                state.set_balance(token_b.clone(), id.clone(), rb);
                materialized.push((token_a.clone(), id.clone()));
                materialized.push((token_b.clone(), id.clone()));
                state.pools.insert(
                    id,
                    Pool {
                        token_a,
                        token_b,
                        fee,
                    },
                );
            }
            "lender" => {
                let id = AddrId(
                    rest.first()
                        .ok_or_else(|| err("missing lender id".into()))?
                        .to_string(),
                );
                let kv = fields(&rest[1..]);
                let token = TokenId(
                    kv.get("token")
                        .ok_or_else(|| err("missing token=".into()))?
                        .clone(),
                );
                let liquidity = parse_rational(
                    kv.get("liquidity")
                        .ok_or_else(|| err("missing liquidity=".into()))?,
                )
                .ok_or_else(|| err("bad liquidity".into()))?;
                let fee = match kv.get("fee") {
                    Some(f) => parse_rational(f).ok_or_else(|| err("bad fee".into()))?,
                    None => Rational::zero(),
                };
                state.set_balance(token.clone(), id.clone(), liquidity);
                materialized.push((token.clone(), id.clone()));
                state.lenders.insert(id, Lender { token, fee });
            }
            "bank" => {
                let id = AddrId(
                    rest.first()
                        .ok_or_else(|| err("missing bank id".into()))?
                        .to_string(),
                );
                let kv = fields(&rest[1..]);
                let token_in = TokenId(
                    kv.get("in")
                        .ok_or_else(|| err("missing in=".into()))?
                        .clone(),
                );
                let token_out = TokenId(
                    kv.get("out")
                        .ok_or_else(|| err("missing out=".into()))?
                        .clone(),
                );
                let quote_raw = kv.get("quote").ok_or_else(|| err("missing quote=".into()))?;
                let quote = if let Some(inner) = quote_raw
                    .strip_prefix("pool_ratio(")
                    .and_then(|s| s.strip_suffix(')'))
                {
                    QuoteRule::PoolRatio {
                        pool: AddrId(inner.to_string()),
                    }
                } else if let Some(inner) = quote_raw
                    .strip_prefix("fixed(")
                    .and_then(|s| s.strip_suffix(')'))
                {
                    QuoteRule::FixedRate {
                        rate: parse_rational(inner).ok_or_else(|| err("bad fixed rate".into()))?,
                    }
                } else {
                    return Err(err(format!("unknown quote rule `{quote_raw}`")));
                };
                state.banks.insert(
                    id,
                    Bank {
                        token_in,
                        token_out,
                        quote,
                    },
                );
            }
            "balance" => {
                if rest.len() != 3 {
                    return Err(err("expected: balance <addr> <token> <amount>".into()));
                }
                let addr = AddrId(rest[0].to_string());
                let token = TokenId(rest[1].to_string());
                let amount =
                    parse_rational(rest[2]).ok_or_else(|| err("bad balance amount".into()))?;
                if materialized.contains(&(token.clone(), addr.clone()))
                    || state.balances.contains_key(&(token.clone(), addr.clone()))
                {
                    return Err(StateError::InvalidState(format!(
                        "balance of {token} at {addr} set twice"
                    )));
                }
                state.set_balance(token, addr, amount);
            }
            other => return Err(err(format!("unknown declaration `{other}`"))),
        }
    }

    if !have_attacker && !text.trim().is_empty() {
        // An entirely empty file is a valid empty ledger; anything else
        // must name the attacker.
        return Err(StateError::InvalidState("missing attacker declaration".into()));
    }
    for ((token, addr), v) in &state.balances {
        if v.is_negative() {
            return Err(StateError::InvalidState(format!(
                "negative balance of {token} at {addr}"
            )));
        }
    }
    for (id, pool) in &state.pools {
        if pool.fee.is_negative() || pool.fee >= Rational::one() {
            return Err(StateError::InvalidState(format!(
                "pool {id} fee outside [0, 1)"
            )));
        }
    }
    for (id, lender) in &state.lenders {
        if lender.fee.is_negative() {
            return Err(StateError::InvalidState(format!("lender {id} fee negative")));
        }
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevertReason {
    HoleInProgram(String),
    NegativeAmount,
    InsufficientBalance { token: TokenId, addr: AddrId },
    UnknownMarket(AddrId),
    UnknownLender(AddrId),
    TokenMismatch,
    EmptyPool(AddrId),
    SlippageExceeded { got: Rational, want: Rational },
    NoOpenLoan,
    LoanUnderpaid { required: Rational },
    /// A loan was still open when the program ended.
    OpenLoan,
}

impl core::fmt::Display for RevertReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RevertReason::HoleInProgram(h) => write!(f, "program contains hole ?{h}"),
            RevertReason::NegativeAmount => f.write_str("negative amount"),
            RevertReason::InsufficientBalance { token, addr } => {
                write!(f, "insufficient {token} balance at {addr}")
            }
            RevertReason::UnknownMarket(m) => write!(f, "unknown market {m}"),
            RevertReason::UnknownLender(l) => write!(f, "unknown lender {l}"),
            RevertReason::TokenMismatch => f.write_str("token pair mismatch"),
            RevertReason::EmptyPool(p) => write!(f, "pool {p} has an empty reserve"),
            RevertReason::SlippageExceeded { got, want } => write!(
                f,
                "output {} below min_out {}",
                crate::num::render_rational(got),
                crate::num::render_rational(want)
            ),
            RevertReason::NoOpenLoan => f.write_str("payback with no matching open loan"),
            RevertReason::LoanUnderpaid { required } => write!(
                f,
                "repayment below required {}",
                crate::num::render_rational(required)
            ),
            RevertReason::OpenLoan => f.write_str("open loan at end of program"),
        }
    }
}

/// Signed balance deltas of one executed op.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpDelta {
    pub op_index: usize,
    pub deltas: Vec<(TokenId, AddrId, Rational)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecutionTrace {
    pub ops: Vec<OpDelta>,
    pub revert: Option<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Revert {
    pub reason: RevertReason,
    pub op_index: usize,
    /// Deltas of the ops that executed before the failure.
    pub trace: ExecutionTrace,
}

impl core::fmt::Display for Revert {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "revert at op {}: {}", self.op_index, self.reason)
    }
}

struct OpenLoanEntry {
    lender: AddrId,
    token: TokenId,
    amount: Rational,
}

fn concrete(t: &Term) -> Result<Rational, RevertReason> {
    match t {
        Term::Const(r) => {
            if r.is_negative() {
                Err(RevertReason::NegativeAmount)
            } else {
                Ok(r.clone())
            }
        }
        Term::Hole(h) => Err(RevertReason::HoleInProgram(h.clone())),
    }
}

/// Executes a hole-free attack program transactionally against `s0`.
/// Returns the post-state and trace, or the revert with its partial trace;
/// `s0` itself is never mutated.
pub fn execute(p: &AttackProgram, s0: &ChainState) -> Result<(ChainState, ExecutionTrace), Revert> {
    let mut state = s0.clone();
    let mut trace = ExecutionTrace::default();
    let mut loans: Vec<OpenLoanEntry> = Vec::new();
    let attacker = s0.attacker.clone();

    for (i, op) in p.ops.iter().enumerate() {
        let before = state.balances.clone();
        let result = step(op, &mut state, &attacker, &mut loans);
        if let Err(reason) = result {
            trace.revert = Some((i, reason.to_string()));
            return Err(Revert {
                reason,
                op_index: i,
                trace,
            });
        }
        let mut deltas = Vec::new();
        for (key, after_v) in &state.balances {
            let before_v = before.get(key).cloned().unwrap_or_else(Rational::zero);
            if *after_v != before_v {
                deltas.push((key.0.clone(), key.1.clone(), after_v.clone() - before_v));
            }
        }
        trace.ops.push(OpDelta {
            op_index: i,
            deltas,
        });
    }

    if !loans.is_empty() {
        let i = p.ops.len();
        trace.revert = Some((i, RevertReason::OpenLoan.to_string()));
        return Err(Revert {
            reason: RevertReason::OpenLoan,
            op_index: i,
            trace,
        });
    }
    Ok((state, trace))
}

fn step(
    op: &AflOp,
    state: &mut ChainState,
    attacker: &AddrId,
    loans: &mut Vec<OpenLoanEntry>,
) -> Result<(), RevertReason> {
    match op {
        AflOp::Transfer {
            token,
            from,
            to,
            amount,
        } => {
            let x = concrete(amount)?;
            state
                .debit(token, from, &x)
                .map_err(|_| RevertReason::InsufficientBalance {
                    token: token.clone(),
                    addr: from.clone(),
                })?;
            state.credit(token, to, &x);
            Ok(())
        }
        AflOp::Burn {
            token,
            from,
            amount,
        } => {
            let x = concrete(amount)?;
            state
                .debit(token, from, &x)
                .map_err(|_| RevertReason::InsufficientBalance {
                    token: token.clone(),
                    addr: from.clone(),
                })
        }
        AflOp::Mint { token, to, amount } => {
            let x = concrete(amount)?;
            state.credit(token, to, &x);
            Ok(())
        }
        AflOp::Swap {
            market,
            src_token,
            dst_token,
            amount_in,
            min_out,
            to,
        } => {
            let x = concrete(amount_in)?;
            let want = concrete(min_out)?;
            let out = if let Some(pool) = state.pools.get(market).cloned() {
                let pair_ok = (pool.token_a == *src_token && pool.token_b == *dst_token)
                    || (pool.token_b == *src_token && pool.token_a == *dst_token);
                if !pair_ok {
                    return Err(RevertReason::TokenMismatch);
                }
                let r_src = state.balance_or_zero(src_token, market);
                let r_dst = state.balance_or_zero(dst_token, market);
                if r_src.is_zero() || r_dst.is_zero() {
                    return Err(RevertReason::EmptyPool(market.clone()));
                }
                let x_eff = &x * (Rational::one() - &pool.fee);
                floor(&(&r_dst * &x_eff / (&r_src + &x_eff)))
            } else if let Some(bank) = state.banks.get(market).cloned() {
                if bank.token_in != *src_token || bank.token_out != *dst_token {
                    return Err(RevertReason::TokenMismatch);
                }
                let rate = match &bank.quote {
                    QuoteRule::FixedRate { rate } => rate.clone(),
                    QuoteRule::PoolRatio { pool } => {
                        let r_out = state.balance_or_zero(dst_token, pool);
                        let r_in = state.balance_or_zero(src_token, pool);
                        if r_in.is_zero() {
                            return Err(RevertReason::EmptyPool(pool.clone()));
                        }
                        r_out / r_in
                    }
                };
                floor(&(&x * rate))
            } else {
                return Err(RevertReason::UnknownMarket(market.clone()));
            };
            if out < want {
                return Err(RevertReason::SlippageExceeded {
                    got: out,
                    want,
                });
            }
            state
                .debit(src_token, attacker, &x)
                .map_err(|_| RevertReason::InsufficientBalance {
                    token: src_token.clone(),
                    addr: attacker.clone(),
                })?;
            state.credit(src_token, market, &x);
            state
                .debit(dst_token, market, &out)
                .map_err(|_| RevertReason::InsufficientBalance {
                    token: dst_token.clone(),
                    addr: market.clone(),
                })?;
            state.credit(dst_token, to, &out);
            Ok(())
        }
        AflOp::Borrow {
            lender,
            token,
            amount,
        } => {
            let x = concrete(amount)?;
            let decl = state
                .lenders
                .get(lender)
                .cloned()
                .ok_or_else(|| RevertReason::UnknownLender(lender.clone()))?;
            if decl.token != *token {
                return Err(RevertReason::TokenMismatch);
            }
            state
                .debit(token, lender, &x)
                .map_err(|_| RevertReason::InsufficientBalance {
                    token: token.clone(),
                    addr: lender.clone(),
                })?;
            state.credit(token, attacker, &x);
            loans.push(OpenLoanEntry {
                lender: lender.clone(),
                token: token.clone(),
                amount: x,
            });
            Ok(())
        }
        AflOp::Payback {
            lender,
            token,
            amount,
        } => {
            let y = concrete(amount)?;
            let open = loans
                .iter()
                .rposition(|l| &l.lender == lender && &l.token == token)
                .ok_or(RevertReason::NoOpenLoan)?;
            let fee = state
                .lenders
                .get(lender)
                .map(|l| l.fee.clone())
                .unwrap_or_else(Rational::zero);
            let required = &loans[open].amount * (Rational::one() + fee);
            if y < required {
                return Err(RevertReason::LoanUnderpaid { required });
            }
            state
                .debit(token, attacker, &y)
                .map_err(|_| RevertReason::InsufficientBalance {
                    token: token.clone(),
                    addr: attacker.clone(),
                })?;
            state.credit(token, lender, &y);
            loans.remove(open);
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    pub trace: ExecutionTrace,
    pub failure: Option<String>,
}

/// Pass iff the program executes without reverting and the goal holds on
/// the resulting state.
pub fn validate(p: &AttackProgram, s0: &ChainState, goal: &Goal) -> Verdict {
    match execute(p, s0) {
        Ok((end, trace)) => {
            if eval_goal(goal, s0, &end) {
                Verdict {
                    pass: true,
                    trace,
                    failure: None,
                }
            } else {
                Verdict {
                    pass: false,
                    trace,
                    failure: Some("goal not satisfied".to_string()),
                }
            }
        }
        Err(revert) => {
            let message = format!("{revert}");
            Verdict {
                pass: false,
                trace: revert.trace,
                failure: Some(message),
            }
        }
    }
}
