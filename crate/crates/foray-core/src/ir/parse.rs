//! Parser and canonical renderer for the textual `.ir` protocol format.
//!
//! The format is line oriented: one declaration or statement per line,
//! blocks delimited by braces, `#` starts a comment. The full grammar is
//! documented in `docs/formats.md`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::*;
use crate::num::{parse_rational, render_rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Syntax { line: u32, col: u32, message: String },
    DuplicateIdentifier { line: u32, name: String },
    UndeclaredToken { line: u32, name: String },
    UndeclaredAddress { line: u32, name: String },
    UndeclaredFunction { line: u32, name: String },
    UndeclaredHook { line: u32, name: String },
    MissingAttacker,
}

impl core::fmt::Display for ParseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParseError::Syntax { line, col, message } => {
                write!(f, "{line}:{col}: {message}")
            }
            ParseError::DuplicateIdentifier { line, name } => {
                write!(f, "{line}: duplicate identifier {name}")
            }
            ParseError::UndeclaredToken { line, name } => {
                write!(f, "{line}: undeclared token {name}")
            }
            ParseError::UndeclaredAddress { line, name } => {
                write!(f, "{line}: undeclared address {name}")
            }
            ParseError::UndeclaredFunction { line, name } => {
                write!(f, "{line}: undeclared function {name}")
            }
            ParseError::UndeclaredHook { line, name } => {
                write!(f, "{line}: undeclared hook {name}")
            }
            ParseError::MissingAttacker => f.write_str("missing `attacker` declaration"),
        }
    }
}

impl core::error::Error for ParseError {}

struct Line<'a> {
    no: u32,
    toks: Vec<(u32, &'a str)>,
}

fn tokenize_line(no: u32, text: &str) -> Line<'_> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if "(){}[]:,=".contains(c) {
            toks.push((i as u32 + 1, &text[i..i + 1]));
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_whitespace() || "(){}[]:,=#".contains(c) {
                break;
            }
            i += 1;
        }
        toks.push((start as u32 + 1, &text[start..i]));
    }
    Line { no, toks }
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    idx: usize,
    next_stmt_id: u32,
}

struct Cursor<'a, 'l> {
    line: &'l Line<'a>,
    pos: usize,
}

impl<'a, 'l> Cursor<'a, 'l> {
    fn new(line: &'l Line<'a>) -> Self {
        Cursor { line, pos: 0 }
    }

    fn peek(&self) -> Option<&'a str> {
        self.line.toks.get(self.pos).map(|t| t.1)
    }

    fn col(&self) -> u32 {
        self.line
            .toks
            .get(self.pos)
            .map(|t| t.0)
            .unwrap_or_else(|| self.line.toks.last().map(|t| t.0 + t.1.len() as u32).unwrap_or(1))
    }

    fn next(&mut self) -> Option<&'a str> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            got => Err(self.syntax(format!("expected `{tok}`, got {}", describe(got)))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(t) if is_ident(t) => Ok(t.to_string()),
            got => Err(self.syntax(format!("expected {what}, got {}", describe(got)))),
        }
    }

    fn done(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.syntax(format!("unexpected trailing `{t}`"))),
        }
    }

    fn syntax(&self, message: String) -> ParseError {
        ParseError::Syntax {
            line: self.line.no,
            col: self.col(),
            message,
        }
    }
}

fn describe(t: Option<&str>) -> String {
    match t {
        Some(t) => format!("`{t}`"),
        None => "end of line".to_string(),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().unwrap().is_ascii_alphabetic()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses `.ir` source into a validated [`ProtocolIR`]. Parsing is
/// deterministic: statement ids are assigned in document pre-order.
pub fn parse_protocol(text: &str) -> Result<ProtocolIR, ParseError> {
    let lines: Vec<Line<'_>> = text
        .lines()
        .enumerate()
        .map(|(i, l)| tokenize_line(i as u32 + 1, l))
        .filter(|l| !l.toks.is_empty())
        .collect();
    let mut p = Parser {
        lines,
        idx: 0,
        next_stmt_id: 0,
    };
    let mut ir = ProtocolIR {
        tokens: Vec::new(),
        contracts: Vec::new(),
        hooks: Vec::new(),
        attacker: AddrId(String::new()),
        inline_origin: BTreeMap::new(),
        next_stmt_id: 0,
    };
    let mut have_attacker = false;

    while let Some(line) = p.current() {
        let line_no = line.no;
        let mut c = Cursor::new(line);
        match c.peek() {
            Some("token") => {
                let decl = parse_token_decl(&mut c)?;
                if ir.tokens.iter().any(|t| t.id == decl.id) {
                    return Err(ParseError::DuplicateIdentifier {
                        line: line_no,
                        name: decl.id.0,
                    });
                }
                ir.tokens.push(decl);
                p.idx += 1;
            }
            Some("attacker") => {
                c.next();
                let name = c.ident("attacker address id")?;
                c.done()?;
                if have_attacker {
                    return Err(ParseError::DuplicateIdentifier { line: line.no, name });
                }
                ir.attacker = AddrId(name);
                have_attacker = true;
                p.idx += 1;
            }
            Some("contract") => {
                let contract = p.parse_contract(&ir)?;
                if ir.contracts.iter().any(|x| x.id == contract.id) {
                    return Err(ParseError::DuplicateIdentifier {
                        line: line_no,
                        name: contract.id.0,
                    });
                }
                ir.contracts.push(contract);
            }
            Some("hooks") => {
                let hooks = p.parse_hooks(&ir)?;
                for h in hooks {
                    if ir.hooks.iter().any(|x| x.name == h.name) {
                        return Err(ParseError::DuplicateIdentifier {
                            line: line_no,
                            name: h.name,
                        });
                    }
                    ir.hooks.push(h);
                }
            }
            got => {
                return Err(Cursor::new(line)
                    .syntax(format!("expected a top-level declaration, got {}", describe(got))))
            }
        }
    }

    if !have_attacker {
        return Err(ParseError::MissingAttacker);
    }
    ir.next_stmt_id = p.next_stmt_id;
    resolve_names(&mut ir)?;
    Ok(ir)
}

fn parse_token_decl(c: &mut Cursor<'_, '_>) -> Result<TokenDecl, ParseError> {
    c.expect("token")?;
    let id = c.ident("token id")?;
    let mut decimals = 0u8;
    let mut minters = BTreeSet::new();
    let mut stablecoin = false;
    while let Some(t) = c.next() {
        match t {
            "decimals" => {
                c.expect("=")?;
                let v = c.next().unwrap_or("");
                decimals = v
                    .parse()
                    .map_err(|_| c.syntax(format!("bad decimals value `{v}`")))?;
            }
            "minters" => {
                c.expect("=")?;
                c.expect("[")?;
                loop {
                    match c.peek() {
                        Some("]") => {
                            c.next();
                            break;
                        }
                        _ => {
                            minters.insert(AddrId(c.ident("minter contract id")?));
                            if c.peek() == Some(",") {
                                c.next();
                            }
                        }
                    }
                }
            }
            "stablecoin" => stablecoin = true,
            other => return Err(c.syntax(format!("unexpected `{other}` in token declaration"))),
        }
    }
    Ok(TokenDecl {
        id: TokenId(id),
        decimals,
        authorized_minters: minters,
        is_stablecoin: stablecoin,
    })
}

impl<'a> Parser<'a> {
    fn current(&self) -> Option<&Line<'a>> {
        self.lines.get(self.idx)
    }

    fn fresh_id(&mut self) -> StmtId {
        let id = StmtId(self.next_stmt_id);
        self.next_stmt_id += 1;
        id
    }

    fn parse_contract(&mut self, ir: &ProtocolIR) -> Result<ContractDecl, ParseError> {
        let line = self.current().unwrap();
        let mut c = Cursor::new(line);
        c.expect("contract")?;
        let id = AddrId(c.ident("contract id")?);
        c.expect("{")?;
        c.done()?;
        self.idx += 1;

        let mut functions: Vec<FunctionDecl> = Vec::new();
        loop {
            let Some(line) = self.current() else {
                return Err(ParseError::Syntax {
                    line: 0,
                    col: 0,
                    message: format!("unclosed contract {}", id),
                });
            };
            if line.toks.first().map(|t| t.1) == Some("}") {
                self.idx += 1;
                break;
            }
            let f = self.parse_function(ir, id.clone(), false)?;
            functions.push(f);
        }
        Ok(ContractDecl { id, functions })
    }

    fn parse_hooks(&mut self, ir: &ProtocolIR) -> Result<Vec<FunctionDecl>, ParseError> {
        let line = self.current().unwrap();
        let mut c = Cursor::new(line);
        c.expect("hooks")?;
        c.expect("{")?;
        c.done()?;
        self.idx += 1;

        let attacker = ir.attacker.clone();
        let mut hooks = Vec::new();
        loop {
            let Some(line) = self.current() else {
                return Err(ParseError::Syntax {
                    line: 0,
                    col: 0,
                    message: "unclosed hooks block".to_string(),
                });
            };
            if line.toks.first().map(|t| t.1) == Some("}") {
                self.idx += 1;
                break;
            }
            let f = self.parse_function(ir, attacker.clone(), true)?;
            hooks.push(f);
        }
        Ok(hooks)
    }

    fn parse_function(
        &mut self,
        ir: &ProtocolIR,
        owner: AddrId,
        is_hook: bool,
    ) -> Result<FunctionDecl, ParseError> {
        let line = self.current().unwrap();
        let mut c = Cursor::new(line);
        let mut is_public = false;
        let mut bidirectional = false;
        loop {
            match c.peek() {
                Some("public") => {
                    c.next();
                    is_public = true;
                }
                Some("bidirectional") => {
                    c.next();
                    bidirectional = true;
                }
                _ => break,
            }
        }
        if is_hook && is_public {
            return Err(c.syntax("hook functions cannot be public".to_string()));
        }
        c.expect("fn")?;
        let name = c.ident("function name")?;
        c.expect("(")?;
        let mut params = Vec::new();
        loop {
            match c.peek() {
                Some(")") => {
                    c.next();
                    break;
                }
                _ => {
                    let pname = c.ident("parameter name")?;
                    c.expect(":")?;
                    let kind = match c.next() {
                        Some("amount") => ParamKind::Amount,
                        Some("address") => ParamKind::Address,
                        Some("token") => ParamKind::Token,
                        got => {
                            return Err(c.syntax(format!(
                                "expected parameter kind, got {}",
                                describe(got)
                            )))
                        }
                    };
                    params.push(Param { name: pname, kind });
                    if c.peek() == Some(",") {
                        c.next();
                    }
                }
            }
        }
        c.expect("{")?;
        c.done()?;
        self.idx += 1;

        let body = self.parse_body(ir, &name)?;
        {
            let line = self.current().unwrap();
            let mut c = Cursor::new(line);
            c.expect("}")?;
            c.done()?;
        }
        self.idx += 1;
        Ok(FunctionDecl {
            name,
            owner,
            params,
            body,
            is_public,
            bidirectional,
        })
    }

    /// Parses statements until a line starting with `}`. Consumes the
    /// closing line unless it continues with `else {`.
    fn parse_body(&mut self, ir: &ProtocolIR, fname: &str) -> Result<Vec<Statement>, ParseError> {
        let mut body = Vec::new();
        loop {
            let Some(line) = self.current() else {
                return Err(ParseError::Syntax {
                    line: 0,
                    col: 0,
                    message: format!("unclosed body in {fname}"),
                });
            };
            if line.toks.first().map(|t| t.1) == Some("}") {
                break;
            }
            let stmt = self.parse_statement(ir, fname)?;
            body.push(stmt);
        }
        Ok(body)
    }

    fn parse_statement(&mut self, ir: &ProtocolIR, fname: &str) -> Result<Statement, ParseError> {
        let id = self.fresh_id();
        let line_no = self.current().unwrap().no;
        let col = self.current().unwrap().toks[0].0;
        let pos = SourcePos { line: line_no, col };

        // Borrow the line cursor in a scope so branch recursion can advance.
        let head = self.current().unwrap().toks[0].1;
        let kind = match head {
            "branch" => {
                {
                    let line = self.current().unwrap();
                    let mut c = Cursor::new(line);
                    c.expect("branch")?;
                    c.expect("{")?;
                    c.done()?;
                }
                self.idx += 1;
                let then_body = self.parse_body(ir, fname)?;
                // Current line starts with `}`: either `} else {` or bare `}`.
                let (has_else, line_no) = {
                    let line = self.current().unwrap();
                    (line.toks.get(1).map(|t| t.1) == Some("else"), line.no)
                };
                let else_body = if has_else {
                    {
                        let line = self.current().unwrap();
                        let mut c = Cursor::new(line);
                        c.expect("}")?;
                        c.expect("else")?;
                        c.expect("{")?;
                        c.done()?;
                    }
                    self.idx += 1;
                    let e = self.parse_body(ir, fname)?;
                    let line = self.current().unwrap();
                    let mut c = Cursor::new(line);
                    c.expect("}")?;
                    c.done()?;
                    self.idx += 1;
                    e
                } else {
                    let line = self.current().unwrap();
                    let mut c = Cursor::new(line);
                    c.expect("}")?;
                    c.done()?;
                    self.idx += 1;
                    Vec::new()
                };
                let _ = line_no;
                return Ok(Statement {
                    id,
                    pos,
                    kind: StatementKind::Branch {
                        then_body,
                        else_body,
                    },
                });
            }
            _ => {
                let line = self.current().unwrap();
                let mut c = Cursor::new(line);
                let kind = parse_simple_statement(&mut c, ir)?;
                c.done()?;
                kind
            }
        };
        self.idx += 1;
        Ok(Statement { id, pos, kind })
    }
}

fn parse_simple_statement(
    c: &mut Cursor<'_, '_>,
    ir: &ProtocolIR,
) -> Result<StatementKind, ParseError> {
    let head = c.next().unwrap();
    let token_ref = |c: &mut Cursor<'_, '_>| -> Result<TokenId, ParseError> {
        let name = c.ident("token id")?;
        if ir.tokens.iter().any(|t| t.id.0 == name) {
            Ok(TokenId(name))
        } else {
            Err(ParseError::UndeclaredToken {
                line: c.line.no,
                name,
            })
        }
    };
    let addr_term = |c: &mut Cursor<'_, '_>| -> Result<AddrTerm, ParseError> {
        let name = c.ident("address")?;
        Ok(match name.as_str() {
            "this" => AddrTerm::This,
            "caller" => AddrTerm::Caller,
            // Contract/param discrimination happens in resolve_names once
            // every declaration is known.
            _ => AddrTerm::Param(name),
        })
    };
    let amount_term = |c: &mut Cursor<'_, '_>| -> Result<AmountTerm, ParseError> {
        match c.next() {
            Some(t) if is_ident(t) => Ok(AmountTerm::Sym(t.to_string())),
            Some(t) => match parse_rational(t) {
                Some(r) => Ok(AmountTerm::Const(r)),
                None => Err(c.syntax(format!("bad amount `{t}`"))),
            },
            None => Err(c.syntax("expected amount".to_string())),
        }
    };

    match head {
        "transfer" => {
            let token = token_ref(c)?;
            c.expect("to")?;
            let to = addr_term(c)?;
            c.expect("amount")?;
            let amount = amount_term(c)?;
            Ok(StatementKind::Transfer { token, to, amount })
        }
        "transferfrom" => {
            let token = token_ref(c)?;
            c.expect("from")?;
            let from = addr_term(c)?;
            c.expect("to")?;
            let to = addr_term(c)?;
            c.expect("amount")?;
            let amount = amount_term(c)?;
            Ok(StatementKind::TransferFrom {
                token,
                from,
                to,
                amount,
            })
        }
        "mint" => {
            let token = token_ref(c)?;
            c.expect("to")?;
            let to = addr_term(c)?;
            c.expect("amount")?;
            let amount = amount_term(c)?;
            Ok(StatementKind::Mint { token, to, amount })
        }
        "burn" => {
            let token = token_ref(c)?;
            c.expect("from")?;
            let from = addr_term(c)?;
            c.expect("amount")?;
            let amount = amount_term(c)?;
            Ok(StatementKind::Burn {
                token,
                from,
                amount,
            })
        }
        "callback" => {
            let handle = c.ident("hook name")?;
            Ok(StatementKind::Callback { handle })
        }
        "call" => {
            let callee = c.ident("function name")?;
            c.expect("(")?;
            let mut args = Vec::new();
            loop {
                match c.peek() {
                    Some(")") => {
                        c.next();
                        break;
                    }
                    Some(t) if is_ident(t) => {
                        args.push(CallArg::Ident(t.to_string()));
                        c.next();
                        if c.peek() == Some(",") {
                            c.next();
                        }
                    }
                    Some(t) => match parse_rational(t) {
                        Some(r) => {
                            args.push(CallArg::Num(r));
                            c.next();
                            if c.peek() == Some(",") {
                                c.next();
                            }
                        }
                        None => return Err(c.syntax(format!("bad call argument `{t}`"))),
                    },
                    None => return Err(c.syntax("unclosed call argument list".to_string())),
                }
            }
            Ok(StatementKind::Call { callee, args })
        }
        other => Err(c.syntax(format!("unknown statement `{other}`"))),
    }
}

/// Rewrites placeholder address terms now that all declarations are known,
/// and checks callback handles and call callees.
fn resolve_names(ir: &mut ProtocolIR) -> Result<(), ParseError> {
    let contract_ids: BTreeSet<String> = ir.contracts.iter().map(|c| c.id.0.clone()).collect();
    let hook_names: BTreeSet<String> = ir.hooks.iter().map(|h| h.name.clone()).collect();
    let attacker = ir.attacker.0.clone();
    let fn_names_per_contract: BTreeMap<String, BTreeSet<String>> = ir
        .contracts
        .iter()
        .map(|c| {
            (
                c.id.0.clone(),
                c.functions.iter().map(|f| f.name.clone()).collect(),
            )
        })
        .collect();

    let resolve_addr = |a: &mut AddrTerm, params: &BTreeSet<String>| -> Result<(), ParseError> {
        if let AddrTerm::Param(name) = a {
            if contract_ids.contains(name) || *name == attacker {
                *a = AddrTerm::Named(AddrId(name.clone()));
            } else if !params.contains(name) {
                return Err(ParseError::UndeclaredAddress {
                    line: 0,
                    name: name.clone(),
                });
            }
        }
        Ok(())
    };

    fn walk(
        body: &mut [Statement],
        params: &BTreeSet<String>,
        own_fns: &BTreeSet<String>,
        hook_names: &BTreeSet<String>,
        resolve_addr: &dyn Fn(&mut AddrTerm, &BTreeSet<String>) -> Result<(), ParseError>,
    ) -> Result<(), ParseError> {
        for s in body {
            match &mut s.kind {
                StatementKind::TransferFrom { from, to, .. } => {
                    resolve_addr(from, params)?;
                    resolve_addr(to, params)?;
                }
                StatementKind::Transfer { to, .. } | StatementKind::Mint { to, .. } => {
                    resolve_addr(to, params)?;
                }
                StatementKind::Burn { from, .. } => {
                    resolve_addr(from, params)?;
                }
                StatementKind::Branch {
                    then_body,
                    else_body,
                } => {
                    walk(then_body, params, own_fns, hook_names, resolve_addr)?;
                    walk(else_body, params, own_fns, hook_names, resolve_addr)?;
                }
                StatementKind::Callback { handle } => {
                    if !hook_names.contains(handle) {
                        return Err(ParseError::UndeclaredHook {
                            line: s.pos.line,
                            name: handle.clone(),
                        });
                    }
                }
                StatementKind::Call { callee, .. } => {
                    if !own_fns.contains(callee) {
                        return Err(ParseError::UndeclaredFunction {
                            line: s.pos.line,
                            name: callee.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    for c in &mut ir.contracts {
        let own_fns = fn_names_per_contract.get(&c.id.0).cloned().unwrap_or_default();
        for f in &mut c.functions {
            let params: BTreeSet<String> = f
                .params
                .iter()
                .filter(|p| p.kind == ParamKind::Address)
                .map(|p| p.name.clone())
                .collect();
            walk(&mut f.body, &params, &own_fns, &hook_names, &resolve_addr)?;
        }
    }
    let no_fns = BTreeSet::new();
    for h in &mut ir.hooks {
        let params: BTreeSet<String> = h
            .params
            .iter()
            .filter(|p| p.kind == ParamKind::Address)
            .map(|p| p.name.clone())
            .collect();
        walk(&mut h.body, &params, &no_fns, &hook_names, &resolve_addr)?;
    }
    Ok(())
}

/// Canonical textual rendering, the inverse of [`parse_protocol`]:
/// re-parsing the output reproduces the same IR value.
pub fn render_protocol(ir: &ProtocolIR) -> String {
    let mut out = String::new();
    for t in &ir.tokens {
        out.push_str(&format!("token {} decimals={}", t.id, t.decimals));
        if !t.authorized_minters.is_empty() {
            let list: Vec<&str> = t.authorized_minters.iter().map(|a| a.0.as_str()).collect();
            out.push_str(&format!(" minters=[{}]", list.join(", ")));
        }
        if t.is_stablecoin {
            out.push_str(" stablecoin");
        }
        out.push('\n');
    }
    out.push_str(&format!("\nattacker {}\n", ir.attacker));
    for c in &ir.contracts {
        out.push_str(&format!("\ncontract {} {{\n", c.id));
        for f in &c.functions {
            render_function(&mut out, f, 1);
        }
        out.push_str("}\n");
    }
    if !ir.hooks.is_empty() {
        out.push_str("\nhooks {\n");
        for h in &ir.hooks {
            render_function(&mut out, h, 1);
        }
        out.push_str("}\n");
    }
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn render_function(out: &mut String, f: &FunctionDecl, level: usize) {
    indent(out, level);
    if f.is_public {
        out.push_str("public ");
    }
    if f.bidirectional {
        out.push_str("bidirectional ");
    }
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.kind))
        .collect();
    out.push_str(&format!("fn {}({}) {{\n", f.name, params.join(", ")));
    render_body(out, &f.body, level + 1);
    indent(out, level);
    out.push_str("}\n");
}

fn render_body(out: &mut String, body: &[Statement], level: usize) {
    for s in body {
        indent(out, level);
        match &s.kind {
            StatementKind::Transfer { token, to, amount } => {
                out.push_str(&format!("transfer {token} to {to} amount {amount}\n"));
            }
            StatementKind::TransferFrom {
                token,
                from,
                to,
                amount,
            } => {
                out.push_str(&format!(
                    "transferfrom {token} from {from} to {to} amount {amount}\n"
                ));
            }
            StatementKind::Mint { token, to, amount } => {
                out.push_str(&format!("mint {token} to {to} amount {amount}\n"));
            }
            StatementKind::Burn {
                token,
                from,
                amount,
            } => {
                out.push_str(&format!("burn {token} from {from} amount {amount}\n"));
            }
            StatementKind::Branch {
                then_body,
                else_body,
            } => {
                out.push_str("branch {\n");
                render_body(out, then_body, level + 1);
                indent(out, level);
                out.push_str("} else {\n");
                render_body(out, else_body, level + 1);
                indent(out, level);
                out.push_str("}\n");
            }
            StatementKind::Callback { handle } => {
                out.push_str(&format!("callback {handle}\n"));
            }
            StatementKind::Call { callee, args } => {
                let rendered: Vec<String> = args
                    .iter()
                    .map(|a| match a {
                        CallArg::Ident(s) => s.clone(),
                        CallArg::Num(r) => render_rational(r),
                    })
                    .collect();
                out.push_str(&format!("call {}({})\n", callee, rendered.join(", ")));
            }
        }
    }
}
