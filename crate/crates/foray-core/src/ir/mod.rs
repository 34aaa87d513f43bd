//! Protocol intermediate representation.
//!
//! A protocol is a set of token declarations plus contracts exposing public
//! functions whose bodies are token-moving statements. The textual `.ir`
//! format (see `docs/formats.md`) is line oriented so fixtures stay
//! hand-writable. Loops are excluded by construction; fixtures are authored
//! pre-unrolled, so only `branch` remains as control flow.

mod inline;
mod parse;

pub use inline::{inline_calls, InlineError};
pub use parse::{parse_protocol, render_protocol, ParseError};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::num::Rational;

pub const MAX_DECIMALS: u8 = 30;
pub const DEFAULT_INLINE_DEPTH: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub String);

impl core::fmt::Display for TokenId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddrId(pub String);

impl core::fmt::Display for AddrId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Function identity: owning address (contract or the attacker for hooks)
/// plus the function name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FnId {
    pub owner: AddrId,
    pub name: String,
}

impl core::fmt::Display for FnId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}.{}", self.owner, self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId(pub u32);

impl core::fmt::Display for StmtId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourcePos {
    pub line: u32,
    pub col: u32,
}

/// An amount in a statement: a base-unit constant or a symbolic name
/// (a function parameter or an internally computed value).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AmountTerm {
    Const(Rational),
    Sym(String),
}

impl core::fmt::Display for AmountTerm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AmountTerm::Const(r) => f.write_str(&crate::num::render_rational(r)),
            AmountTerm::Sym(s) => f.write_str(s),
        }
    }
}

/// An address in a statement. `This` is the executing contract, `Caller` the
/// transaction sender (the attacker in this analysis).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AddrTerm {
    This,
    Caller,
    Named(AddrId),
    Param(String),
}

impl core::fmt::Display for AddrTerm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AddrTerm::This => f.write_str("this"),
            AddrTerm::Caller => f.write_str("caller"),
            AddrTerm::Named(a) => f.write_str(&a.0),
            AddrTerm::Param(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallArg {
    Ident(String),
    Num(Rational),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatementKind {
    /// `token.transferFrom(from, to, amount)`
    TransferFrom {
        token: TokenId,
        from: AddrTerm,
        to: AddrTerm,
        amount: AmountTerm,
    },
    /// `token.transfer(to, amount)` — sender is the executing contract.
    Transfer {
        token: TokenId,
        to: AddrTerm,
        amount: AmountTerm,
    },
    Mint {
        token: TokenId,
        to: AddrTerm,
        amount: AmountTerm,
    },
    Burn {
        token: TokenId,
        from: AddrTerm,
        amount: AmountTerm,
    },
    Branch {
        then_body: Vec<Statement>,
        else_body: Vec<Statement>,
    },
    /// Registers an attacker-side hook function to be invoked before the
    /// enclosing function returns (the flash-loan pattern).
    Callback { handle: String },
    /// Call to a non-public function of the same contract. Removed by
    /// [`inline_calls`].
    Call { callee: String, args: Vec<CallArg> },
}

#[derive(Debug, Clone, Eq)]
pub struct Statement {
    pub id: StmtId,
    pub pos: SourcePos,
    pub kind: StatementKind,
}

// Source positions are diagnostics metadata, not identity: a rendered and
// re-parsed protocol is the same value even though comment lines vanished.
impl PartialEq for Statement {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.kind == other.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Amount,
    Address,
    Token,
}

impl core::fmt::Display for ParamKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            ParamKind::Amount => "amount",
            ParamKind::Address => "address",
            ParamKind::Token => "token",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub owner: AddrId,
    pub params: Vec<Param>,
    pub body: Vec<Statement>,
    pub is_public: bool,
    /// AMM-style pair functions usable in both directions contribute swap
    /// edges both ways.
    pub bidirectional: bool,
}

impl FunctionDecl {
    pub fn id(&self) -> FnId {
        FnId {
            owner: self.owner.clone(),
            name: self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDecl {
    pub id: TokenId,
    pub decimals: u8,
    pub authorized_minters: BTreeSet<AddrId>,
    pub is_stablecoin: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractDecl {
    pub id: AddrId,
    pub functions: Vec<FunctionDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolIR {
    pub tokens: Vec<TokenDecl>,
    pub contracts: Vec<ContractDecl>,
    /// Attacker-side hook functions referenced by `callback` statements.
    pub hooks: Vec<FunctionDecl>,
    pub attacker: AddrId,
    /// Statement provenance from inlining: fresh id -> original id.
    pub inline_origin: BTreeMap<StmtId, StmtId>,
    pub(crate) next_stmt_id: u32,
}

impl ProtocolIR {
    /// Stablecoin ids in declaration order.
    pub fn stablecoins(&self) -> Vec<TokenId> {
        self.tokens
            .iter()
            .filter(|t| t.is_stablecoin)
            .map(|t| t.id.clone())
            .collect()
    }

    pub fn token(&self, id: &TokenId) -> Option<&TokenDecl> {
        self.tokens.iter().find(|t| &t.id == id)
    }

    /// Public entry functions in declaration order.
    pub fn entry_functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.contracts
            .iter()
            .flat_map(|c| c.functions.iter())
            .filter(|f| f.is_public)
    }

    /// All functions: contract functions in declaration order, then hooks.
    pub fn all_functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        self.contracts
            .iter()
            .flat_map(|c| c.functions.iter())
            .chain(self.hooks.iter())
    }

    pub fn find_function(&self, id: &FnId) -> Option<&FunctionDecl> {
        self.all_functions().find(|f| &f.id() == id)
    }

    pub fn find_hook(&self, name: &str) -> Option<&FunctionDecl> {
        self.hooks.iter().find(|f| f.name == name)
    }

    /// Address universe: the attacker plus every contract, in declaration
    /// order with the attacker first.
    pub fn addresses(&self) -> Vec<AddrId> {
        let mut out = Vec::with_capacity(self.contracts.len() + 1);
        out.push(self.attacker.clone());
        out.extend(self.contracts.iter().map(|c| c.id.clone()));
        out
    }

    pub(crate) fn fresh_stmt_id(&mut self) -> StmtId {
        let id = StmtId(self.next_stmt_id);
        self.next_stmt_id += 1;
        id
    }
}

fn walk_statements<'a>(body: &'a [Statement], out: &mut Vec<&'a Statement>) {
    for s in body {
        out.push(s);
        if let StatementKind::Branch {
            then_body,
            else_body,
        } = &s.kind
        {
            walk_statements(then_body, out);
            walk_statements(else_body, out);
        }
    }
}

/// All statements of a body in pre-order, including branch arms.
pub fn statements_preorder(body: &[Statement]) -> Vec<&Statement> {
    let mut out = Vec::new();
    walk_statements(body, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    UndeclaredToken,
    UnauthorizedMint,
    UnauthorizedBurn,
    DuplicateFunction,
    DuplicateToken,
    DuplicateContract,
    DuplicateStatementId,
    DecimalsTooLarge,
    EmptyTokenId,
    UndeclaredHook,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub stmt: Option<StmtId>,
    pub message: String,
}

/// Checks every structural invariant of the IR. Returns an empty list iff
/// the protocol is well formed. Statement-level findings carry the offending
/// statement id.
pub fn validate_protocol(p: &ProtocolIR) -> Vec<Diagnostic> {
    use alloc::format;
    let mut diags = Vec::new();

    let mut seen_tokens = BTreeSet::new();
    for t in &p.tokens {
        if t.id.0.is_empty() {
            diags.push(Diagnostic {
                kind: DiagnosticKind::EmptyTokenId,
                stmt: None,
                message: "token id must be nonempty".into(),
            });
        }
        if t.decimals > MAX_DECIMALS {
            diags.push(Diagnostic {
                kind: DiagnosticKind::DecimalsTooLarge,
                stmt: None,
                message: format!("token {} has {} decimals (max {})", t.id, t.decimals, MAX_DECIMALS),
            });
        }
        if !seen_tokens.insert(t.id.clone()) {
            diags.push(Diagnostic {
                kind: DiagnosticKind::DuplicateToken,
                stmt: None,
                message: format!("token {} declared twice", t.id),
            });
        }
    }

    let mut seen_contracts = BTreeSet::new();
    for c in &p.contracts {
        if !seen_contracts.insert(c.id.clone()) {
            diags.push(Diagnostic {
                kind: DiagnosticKind::DuplicateContract,
                stmt: None,
                message: format!("contract {} declared twice", c.id),
            });
        }
        let mut seen_fns = BTreeSet::new();
        for f in &c.functions {
            if !seen_fns.insert(f.name.clone()) {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::DuplicateFunction,
                    stmt: first_stmt_id(&f.body),
                    message: format!("function {} declared twice in contract {}", f.name, c.id),
                });
            }
        }
    }

    let mut seen_stmt_ids = BTreeSet::new();
    for f in p.all_functions() {
        for s in statements_preorder(&f.body) {
            if !seen_stmt_ids.insert(s.id) {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::DuplicateStatementId,
                    stmt: Some(s.id),
                    message: format!("statement id {} reused", s.id),
                });
            }
            check_statement(p, f, s, &mut diags);
        }
    }

    diags
}

fn first_stmt_id(body: &[Statement]) -> Option<StmtId> {
    statements_preorder(body).first().map(|s| s.id)
}

fn check_statement(p: &ProtocolIR, f: &FunctionDecl, s: &Statement, diags: &mut Vec<Diagnostic>) {
    use alloc::format;
    let token_of = |k: &StatementKind| -> Option<TokenId> {
        match k {
            StatementKind::TransferFrom { token, .. }
            | StatementKind::Transfer { token, .. }
            | StatementKind::Mint { token, .. }
            | StatementKind::Burn { token, .. } => Some(token.clone()),
            _ => None,
        }
    };
    if let Some(tok) = token_of(&s.kind) {
        let Some(decl) = p.token(&tok) else {
            diags.push(Diagnostic {
                kind: DiagnosticKind::UndeclaredToken,
                stmt: Some(s.id),
                message: format!("token {} is not declared", tok),
            });
            return;
        };
        match &s.kind {
            StatementKind::Mint { .. } if !decl.authorized_minters.contains(&f.owner) => {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::UnauthorizedMint,
                    stmt: Some(s.id),
                    message: format!("{} may not mint {}", f.owner, tok),
                });
            }
            StatementKind::Burn { .. } if !decl.authorized_minters.contains(&f.owner) => {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::UnauthorizedBurn,
                    stmt: Some(s.id),
                    message: format!("{} may not burn {}", f.owner, tok),
                });
            }
            _ => {}
        }
    }
    if let StatementKind::Callback { handle } = &s.kind {
        if p.find_hook(handle).is_none() {
            diags.push(Diagnostic {
                kind: DiagnosticKind::UndeclaredHook,
                stmt: Some(s.id),
                message: format!("callback handle {} names no declared hook", handle),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use alloc::vec;

    pub(crate) const MUMUG_IR: &str = include_str!("../../../foray/fixtures/mumug.ir");

    #[test]
    fn parses_mumug_fixture() {
        let p = parse_protocol(MUMUG_IR).unwrap();
        assert_eq!(p.tokens.len(), 2);
        assert_eq!(p.contracts.len(), 3);
        assert_eq!(p.entry_functions().count(), 3);
        assert_eq!(p.stablecoins(), vec![TokenId("USDCe".into())]);
        assert_eq!(p.attacker.0, "attacker");
        assert_eq!(p.hooks.len(), 1);
    }

    #[test]
    fn parses_token_only_protocol() {
        let p = parse_protocol("token GOLD decimals=8\nattacker atk\n").unwrap();
        assert_eq!(p.tokens.len(), 1);
        assert_eq!(p.all_functions().count(), 0);
    }

    #[test]
    fn rejects_undeclared_token() {
        let src = "token MU decimals=6\nattacker atk\ncontract c {\n  public fn f() {\n    transfer XYZ to caller amount 5\n  }\n}\n";
        let err = parse_protocol(src).unwrap_err();
        assert!(
            matches!(err, ParseError::UndeclaredToken { ref name, .. } if name == "XYZ"),
            "got {err:?}"
        );
    }

    #[test]
    fn rejects_duplicate_token() {
        let err = parse_protocol("token MU decimals=6\ntoken MU decimals=6\nattacker a\n").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateIdentifier { .. }));
    }

    #[test]
    fn render_parse_round_trip_on_fixture() {
        let p = parse_protocol(MUMUG_IR).unwrap();
        let rendered = render_protocol(&p);
        let reparsed = parse_protocol(&rendered).unwrap();
        assert_eq!(p, reparsed);
    }

    #[test]
    fn inlines_bank_quote_helper() {
        let p = parse_protocol(MUMUG_IR).unwrap();
        let inlined = inline_calls(&p, DEFAULT_INLINE_DEPTH).unwrap();
        let mu_bond = inlined
            .entry_functions()
            .find(|f| f.name == "mu_bond")
            .unwrap();
        assert_eq!(mu_bond.body.len(), 2);
        assert!(matches!(mu_bond.body[0].kind, StatementKind::TransferFrom { .. }));
        assert!(matches!(mu_bond.body[1].kind, StatementKind::Transfer { .. }));
        // The inlined copy is a fresh statement mapping back to the helper.
        let copy = &mu_bond.body[1];
        let origin = inlined.inline_origin.get(&copy.id).copied().unwrap();
        let helper_stmt = inlined
            .contracts
            .iter()
            .flat_map(|c| c.functions.iter())
            .find(|f| f.name == "quote_and_send")
            .map(|f| f.body[0].id)
            .unwrap();
        assert_eq!(origin, helper_stmt);
        // Parameter substitution carried the caller's argument through.
        if let StatementKind::Transfer { amount, .. } = &copy.kind {
            assert_eq!(amount, &AmountTerm::Sym("bought".into()));
        }
    }

    #[test]
    fn inline_is_identity_without_calls() {
        let src = "token MU decimals=6\nattacker atk\ncontract c {\n  public fn f() {\n    transfer MU to caller amount 5\n  }\n}\n";
        let p = parse_protocol(src).unwrap();
        let inlined = inline_calls(&p, 3).unwrap();
        assert_eq!(p, inlined);
    }

    #[test]
    fn inline_is_idempotent() {
        let p = parse_protocol(MUMUG_IR).unwrap();
        let once = inline_calls(&p, DEFAULT_INLINE_DEPTH).unwrap();
        let twice = inline_calls(&once, DEFAULT_INLINE_DEPTH).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn mutual_recursion_errors_after_bound_expansions() {
        // a -> b -> a -> b: with bound 3, the fourth expansion fails.
        // Oracle: expansions counted by hand are a(1), b(2), a(3), error.
        let src = "token MU decimals=6\nattacker atk\ncontract c {\n  public fn entry() {\n    call a()\n  }\n  fn a() {\n    call b()\n  }\n  fn b() {\n    call a()\n  }\n}\n";
        let p = parse_protocol(src).unwrap();
        let err = inline_calls(&p, 3).unwrap_err();
        assert!(
            matches!(err, InlineError::InlineDepthExceeded { bound: 3, .. }),
            "got {err:?}"
        );
        // A self-recursive helper behaves the same.
        let src2 = "token MU decimals=6\nattacker atk\ncontract c {\n  public fn entry() {\n    call a()\n  }\n  fn a() {\n    call a()\n  }\n}\n";
        let p2 = parse_protocol(src2).unwrap();
        assert!(inline_calls(&p2, 3).is_err());
    }

    #[test]
    fn validates_mumug_clean() {
        let p = parse_protocol(MUMUG_IR).unwrap();
        let inlined = inline_calls(&p, DEFAULT_INLINE_DEPTH).unwrap();
        assert_eq!(validate_protocol(&inlined), vec![]);
    }

    #[test]
    fn flags_unauthorized_mint() {
        let src = "token MU decimals=6\nattacker atk\ncontract c {\n  public fn f() {\n    mint MU to caller amount 5\n  }\n}\n";
        let p = parse_protocol(src).unwrap();
        let diags = validate_protocol(&p);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::UnauthorizedMint);
        assert!(diags[0].stmt.is_some());
    }

    #[test]
    fn authorized_mint_is_clean() {
        let src = "token MU decimals=6 minters=[c]\nattacker atk\ncontract c {\n  public fn f() {\n    mint MU to caller amount 5\n  }\n}\n";
        let p = parse_protocol(src).unwrap();
        assert_eq!(validate_protocol(&p), vec![]);
    }

    #[test]
    fn flags_duplicate_function() {
        let mut p = parse_protocol(
            "token MU decimals=6\nattacker atk\ncontract c {\n  public fn swap() {\n    transfer MU to caller amount 1\n  }\n}\n",
        )
        .unwrap();
        let dup = p.contracts[0].functions[0].clone();
        p.contracts[0].functions.push(dup);
        let diags = validate_protocol(&p);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::DuplicateFunction));
        // The duplicated body also reuses statement ids.
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::DuplicateStatementId));
    }

    #[test]
    fn diagnostics_reference_existing_statements() {
        let src = "token MU decimals=6\nattacker atk\ncontract c {\n  public fn f() {\n    mint MU to caller amount 5\n    burn MU from caller amount 5\n  }\n}\n";
        let p = parse_protocol(src).unwrap();
        let all_ids: alloc::collections::BTreeSet<StmtId> = p
            .all_functions()
            .flat_map(|f| statements_preorder(&f.body))
            .map(|s| s.id)
            .collect();
        for d in validate_protocol(&p) {
            if let Some(id) = d.stmt {
                assert!(all_ids.contains(&id));
            }
        }
    }

    #[test]
    fn branch_statements_parse_and_render() {
        let src = "token MU decimals=6\nattacker atk\ncontract c {\n  public fn f() {\n    branch {\n      transfer MU to caller amount 1\n    } else {\n      burn MU from caller amount 2\n    }\n  }\n}\n";
        let p = parse_protocol(src).unwrap();
        let f = p.entry_functions().next().unwrap();
        assert!(matches!(f.body[0].kind, StatementKind::Branch { .. }));
        let reparsed = parse_protocol(&render_protocol(&p)).unwrap();
        assert_eq!(p, reparsed);
    }

    #[test]
    fn decimals_above_limit_flagged() {
        let src = "token MU decimals=31\nattacker atk\n";
        let p = parse_protocol(src).unwrap();
        let diags = validate_protocol(&p);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::DecimalsTooLarge));
    }
}
