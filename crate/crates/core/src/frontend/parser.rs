//! Recursive-descent parser.
//!
//! Precedence, loosest to tightest: `==>` (right-associative), `**`
//! (right-associative), `||`, `&&`, comparisons (non-associative), `+ -`,
//! `*`, postfix (`.field`, `.f(args)`, `[index]`), primary. Unary minus is
//! accepted on integer literals only and folded into the literal.
//!
//! On a statement-level error the parser records a diagnostic and skips to
//! the next `;` or `}`, so one broken statement does not hide the rest of
//! the file.

use crate::ast::*;
use crate::diag::{sort_diagnostics, DiagCode, Diagnostic, Span};
use crate::frontend::lexer::{lex, Tok, Token};
use num_bigint::BigInt;

/// Parse a whole program. Returns the AST only when no error-severity
/// diagnostic was produced; recovered-from errors are all reported.
pub fn parse(src: &str) -> Result<Program, Vec<Diagnostic>> {
    let (tokens, mut diags) = lex(src);
    let mut p = Parser { tokens, pos: 0, diags: Vec::new() };
    let mut program = p.program();
    diags.extend(p.diags);
    sort_diagnostics(&mut diags);
    if diags.iter().any(|d| d.severity == crate::diag::Severity::Error) {
        Err(diags)
    } else {
        resolve_calls(&mut program);
        Ok(program)
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

/// Error type used internally for recovery; the message is already recorded.
struct Recover;

type PResult<T> = Result<T, Recover>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_here<T>(&mut self, msg: impl Into<String>) -> PResult<T> {
        let span = self.span();
        self.diags.push(Diagnostic::error(DiagCode::Parse, span, msg.into()));
        Err(Recover)
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if self.peek() == &tok {
            Ok(self.bump().span)
        } else {
            let found = self.peek().describe();
            self.error_here(format!("expected {}, found {}", tok.describe(), found))
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok((name, span))
            }
            other => self.error_here(format!("expected {what}, found {}", other.describe())),
        }
    }

    /// Skip to the next statement boundary (`;` or `}`), consuming the `;`.
    fn sync_stmt(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Semi if depth == 0 => {
                    self.bump();
                    return;
                }
                Tok::LBrace => {
                    depth += 1;
                    self.bump();
                }
                Tok::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    self.bump();
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    // ----- program and declarations -------------------------------------

    fn program(&mut self) -> Program {
        let mut pragmas = Vec::new();
        let mut decls = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Pragma(text) => {
                    self.bump();
                    pragmas.push(text);
                }
                _ => match self.decl() {
                    Ok(d) => decls.push(d),
                    Err(Recover) => self.sync_decl(),
                },
            }
        }
        Program { pragmas, decls }
    }

    /// Skip to something that can plausibly start a declaration.
    fn sync_decl(&mut self) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::LBrace => {
                    depth += 1;
                    self.bump();
                }
                Tok::RBrace => {
                    self.bump();
                    if depth <= 1 {
                        return;
                    }
                    depth -= 1;
                }
                Tok::KwClass | Tok::KwResource | Tok::KwChoreography if depth == 0 => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn decl(&mut self) -> PResult<Decl> {
        match self.peek() {
            Tok::KwClass => Ok(Decl::Class(self.class_decl()?)),
            Tok::KwResource => Ok(Decl::Predicate(self.predicate_decl()?)),
            Tok::KwPure => {
                let f = self.function_decl(Contract::default())?;
                Ok(Decl::Function(f))
            }
            Tok::KwRequires | Tok::KwEnsures | Tok::KwChoreography => {
                let contract = self.contract()?;
                match self.peek() {
                    Tok::KwChoreography => Ok(Decl::Choreography(self.choreography(contract)?)),
                    Tok::KwPure => Ok(Decl::Function(self.function_decl(contract)?)),
                    other => {
                        let found = other.describe();
                        self.error_here(format!(
                            "expected `choreography` or `pure` after contract, found {found}"
                        ))
                    }
                }
            }
            other => {
                let found = other.describe();
                self.error_here(format!("expected a declaration, found {found}"))
            }
        }
    }

    fn contract(&mut self) -> PResult<Contract> {
        let mut c = Contract::default();
        loop {
            match self.peek() {
                Tok::KwRequires => {
                    self.bump();
                    let e = self.expr()?;
                    self.expect(Tok::Semi)?;
                    c.requires.push(e);
                }
                Tok::KwEnsures => {
                    self.bump();
                    let e = self.expr()?;
                    self.expect(Tok::Semi)?;
                    c.ensures.push(e);
                }
                _ => return Ok(c),
            }
        }
    }

    fn class_decl(&mut self) -> PResult<ClassDecl> {
        let span = self.expect(Tok::KwClass)?;
        let (name, _) = self.expect_ident("class name")?;
        self.expect(Tok::LBrace)?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        let mut ctor = None;
        while !self.eat(&Tok::RBrace) {
            if self.peek() == &Tok::Eof {
                return self.error_here("unexpected end of input inside class body");
            }
            let contract = self.contract()?;
            if self.peek() == &Tok::KwConstructor {
                let cspan = self.bump().span;
                let params = self.params()?;
                let body = self.method_block()?;
                if ctor.is_some() {
                    self.diags.push(Diagnostic::error(
                        DiagCode::DuplicateName,
                        cspan,
                        format!("class `{name}` declares more than one constructor"),
                    ));
                }
                ctor = Some(CtorDecl { contract, params, body, span: cspan });
                continue;
            }
            let ty = self.ty()?;
            let (member_name, mspan) = self.expect_ident("member name")?;
            if self.peek() == &Tok::LParen {
                let params = self.params()?;
                let body = self.method_block()?;
                methods.push(MethodDecl {
                    contract,
                    ret: ty,
                    name: member_name,
                    params,
                    body,
                    span: mspan,
                });
            } else {
                if !contract.is_empty() {
                    self.diags.push(Diagnostic::error(
                        DiagCode::Parse,
                        mspan,
                        "fields cannot carry a contract",
                    ));
                }
                self.expect(Tok::Semi)?;
                fields.push(FieldDecl { ty, name: member_name, span: mspan });
            }
        }
        Ok(ClassDecl { name, fields, ctor, methods, span })
    }

    fn predicate_decl(&mut self) -> PResult<PredicateDecl> {
        let span = self.expect(Tok::KwResource)?;
        let (name, _) = self.expect_ident("predicate name")?;
        let params = self.params()?;
        self.expect(Tok::Eq)?;
        let body = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(PredicateDecl { name, params, body, span })
    }

    fn function_decl(&mut self, contract: Contract) -> PResult<FunctionDecl> {
        let span = self.expect(Tok::KwPure)?;
        let ret = self.ty()?;
        let (name, _) = self.expect_ident("function name")?;
        let params = self.params()?;
        self.expect(Tok::Eq)?;
        let body = self.expr()?;
        self.expect(Tok::Semi)?;
        // `heap` is refined during name resolution; the body's own level is
        // the initial evidence.
        let heap = body.level() >= PurityLevel::Heap;
        Ok(FunctionDecl { contract, ret, name, params, body, heap, span })
    }

    fn choreography(&mut self, contract: Contract) -> PResult<Choreography> {
        let span = self.expect(Tok::KwChoreography)?;
        let (name, _) = self.expect_ident("choreography name")?;
        let params = self.params()?;
        self.expect(Tok::LBrace)?;
        let mut endpoints = Vec::new();
        while self.peek() == &Tok::KwEndpoint {
            match self.endpoint_decl() {
                Ok(e) => endpoints.push(e),
                Err(Recover) => self.sync_stmt(),
            }
        }
        let run_contract = self.contract()?;
        let run_span = self.expect(Tok::KwRun)?;
        self.expect(Tok::LBrace)?;
        let body = self.chor_block_rest()?;
        let run = RunDecl { contract: run_contract, body, span: run_span };
        self.expect(Tok::RBrace)?; // closes `run { ... }`
        self.expect(Tok::RBrace)?; // closes `choreography ... { ... }`
        Ok(Choreography { contract, name, params, endpoints, run, span })
    }

    fn endpoint_decl(&mut self) -> PResult<EndpointDecl> {
        let span = self.expect(Tok::KwEndpoint)?;
        let (name, _) = self.expect_ident("endpoint name")?;
        if self.eat(&Tok::LBracket) {
            let (binder, _) = self.expect_ident("family index binder")?;
            self.expect(Tok::Assign)?;
            // Families are always indexed from zero: `F[v := 0 .. size]`.
            match self.peek().clone() {
                Tok::Int(ref s) if s == "0" => {
                    self.bump();
                }
                other => {
                    let found = other.describe();
                    return self
                        .error_here(format!("family ranges start at `0`, found {found}"));
                }
            }
            self.expect(Tok::DotDot)?;
            let size = self.expr()?;
            self.expect(Tok::RBracket)?;
            self.expect(Tok::Eq)?;
            let (class, _) = self.expect_ident("class name")?;
            let args = self.args()?;
            self.expect(Tok::Semi)?;
            Ok(EndpointDecl::Family { name, binder, size, class, args, span })
        } else {
            self.expect(Tok::Eq)?;
            let (class, _) = self.expect_ident("class name")?;
            let args = self.args()?;
            self.expect(Tok::Semi)?;
            Ok(EndpointDecl::Singular { name, class, args, span })
        }
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            let ty = self.ty()?;
            let (name, _) = self.expect_ident("parameter name")?;
            out.push(Param { ty, name });
            if self.eat(&Tok::RParen) {
                return Ok(out);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat(&Tok::RParen) {
                return Ok(out);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        match self.peek().clone() {
            Tok::KwInt => {
                self.bump();
                Ok(Type::Int)
            }
            Tok::KwBoolean => {
                self.bump();
                Ok(Type::Bool)
            }
            Tok::KwSeq => {
                self.bump();
                self.expect(Tok::Lt)?;
                let elem = self.ty()?;
                self.expect(Tok::Gt)?;
                Ok(Type::Seq { elem: Box::new(elem) })
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Type::Class { name })
            }
            other => {
                let found = other.describe();
                self.error_here(format!("expected a type, found {found}"))
            }
        }
    }

    // ----- statements -----------------------------------------------------

    /// Parse choreographic statements until the closing `}` (not consumed).
    fn chor_block_rest(&mut self) -> PResult<Vec<ChorStmt>> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => return Ok(out),
                Tok::Eof => return self.error_here("unexpected end of input in block"),
                _ => match self.chor_stmt() {
                    Ok(s) => out.push(s),
                    Err(Recover) => self.sync_stmt(),
                },
            }
        }
    }

    fn chor_block(&mut self) -> PResult<Vec<ChorStmt>> {
        self.expect(Tok::LBrace)?;
        let body = self.chor_block_rest()?;
        self.expect(Tok::RBrace)?;
        Ok(body)
    }

    fn chor_stmt(&mut self) -> PResult<ChorStmt> {
        let span = self.span();
        match self.peek().clone() {
            Tok::KwIf => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then_branch = self.chor_block()?;
                let else_branch =
                    if self.eat(&Tok::KwElse) { self.chor_block()? } else { Vec::new() };
                Ok(ChorStmt { kind: ChorStmtKind::If { cond, then_branch, else_branch }, span })
            }
            Tok::KwLoopInvariant | Tok::KwWhile => {
                let mut invariants = Vec::new();
                while self.eat(&Tok::KwLoopInvariant) {
                    invariants.push(self.expr()?);
                    self.expect(Tok::Semi)?;
                }
                self.expect(Tok::KwWhile)?;
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let body = self.chor_block()?;
                Ok(ChorStmt { kind: ChorStmtKind::While { invariants, cond, body }, span })
            }
            Tok::KwAssert => {
                self.bump();
                let expr = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(ChorStmt { kind: ChorStmtKind::Assert { expr }, span })
            }
            Tok::KwEndpoint => {
                self.bump();
                let target = self.target()?;
                self.expect(Tok::Colon)?;
                let action = self.ep_action()?;
                Ok(ChorStmt { kind: ChorStmtKind::Endpoint { target, action }, span })
            }
            Tok::KwChannelInvariant | Tok::KwCommunicate => {
                let invariant = if self.eat(&Tok::KwChannelInvariant) {
                    let e = self.expr()?;
                    self.expect(Tok::Semi)?;
                    Some(e)
                } else {
                    None
                };
                self.expect(Tok::KwCommunicate)?;
                let sender = self.target()?;
                self.expect(Tok::Colon)?;
                let msg = self.expr()?;
                self.expect(Tok::Arrow)?;
                let receiver = self.target()?;
                self.expect(Tok::Colon)?;
                let dest = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(ChorStmt {
                    kind: ChorStmtKind::Communicate { invariant, sender, msg, receiver, dest },
                    span,
                })
            }
            other => {
                let found = other.describe();
                self.error_here(format!("expected a choreographic statement, found {found}"))
            }
        }
    }

    /// The inline statement of an `endpoint α: ...` line.
    fn ep_action(&mut self) -> PResult<EpAction> {
        let first = self.expr()?;
        if self.eat(&Tok::Assign) {
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            return Ok(EpAction::Assign { dest: first, value });
        }
        self.expect(Tok::Semi)?;
        match first.kind {
            ExprKind::FnCall { recv: Some(recv), name, args, .. } => {
                Ok(EpAction::Call { recv: *recv, method: name, args })
            }
            _ => {
                self.diags.push(Diagnostic::error(
                    DiagCode::Parse,
                    first.span,
                    "endpoint statement must be an assignment `loc := e` or a method call `recv.m(args)`",
                ));
                Err(Recover)
            }
        }
    }

    fn target(&mut self) -> PResult<EndpointTarget> {
        let (name, _) = self.expect_ident("endpoint name")?;
        if !self.eat(&Tok::LBracket) {
            return Ok(EndpointTarget::Singular { name });
        }
        // `F[v := lo .. hi]` versus `F[index]`: two-token lookahead.
        if let (Tok::Ident(binder), Tok::Assign) = (self.peek().clone(), self.peek2().clone()) {
            self.bump();
            self.bump();
            let lo = self.expr()?;
            self.expect(Tok::DotDot)?;
            let hi = self.expr()?;
            self.expect(Tok::RBracket)?;
            return Ok(EndpointTarget::FamilyRange {
                family: name,
                binder,
                lo: Box::new(lo),
                hi: Box::new(hi),
            });
        }
        let index = self.expr()?;
        self.expect(Tok::RBracket)?;
        Ok(EndpointTarget::FamilyIndex { family: name, index: Box::new(index) })
    }

    // ----- method bodies ---------------------------------------------------

    fn method_block(&mut self) -> PResult<Vec<MethodStmt>> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(out);
                }
                Tok::Eof => return self.error_here("unexpected end of input in method body"),
                _ => match self.method_stmt() {
                    Ok(s) => out.push(s),
                    Err(Recover) => self.sync_stmt(),
                },
            }
        }
    }

    fn method_stmt(&mut self) -> PResult<MethodStmt> {
        let span = self.span();
        match self.peek().clone() {
            Tok::KwAssert => {
                self.bump();
                let expr = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(MethodStmt { kind: MethodStmtKind::Assert { expr }, span })
            }
            Tok::KwInhale => {
                self.bump();
                let expr = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(MethodStmt { kind: MethodStmtKind::Inhale { expr }, span })
            }
            Tok::KwExhale => {
                self.bump();
                let expr = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(MethodStmt { kind: MethodStmtKind::Exhale { expr }, span })
            }
            Tok::KwIf => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let then_branch = self.method_block()?;
                let else_branch =
                    if self.eat(&Tok::KwElse) { self.method_block()? } else { Vec::new() };
                Ok(MethodStmt { kind: MethodStmtKind::If { cond, then_branch, else_branch }, span })
            }
            Tok::KwLoopInvariant | Tok::KwWhile => {
                let mut invariants = Vec::new();
                while self.eat(&Tok::KwLoopInvariant) {
                    invariants.push(self.expr()?);
                    self.expect(Tok::Semi)?;
                }
                self.expect(Tok::KwWhile)?;
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let body = self.method_block()?;
                Ok(MethodStmt { kind: MethodStmtKind::While { invariants, cond, body }, span })
            }
            Tok::KwRequires | Tok::KwEnsures | Tok::KwPar => {
                let contract = self.contract()?;
                self.expect(Tok::KwPar)?;
                self.expect(Tok::LParen)?;
                let ty = self.ty()?;
                let (binder, _) = self.expect_ident("par binder")?;
                self.expect(Tok::Eq)?;
                let lo = self.expr()?;
                self.expect(Tok::DotDot)?;
                let hi = self.expr()?;
                self.expect(Tok::RParen)?;
                let body = self.method_block()?;
                Ok(MethodStmt {
                    kind: MethodStmtKind::Par { contract, ty, binder, lo, hi, body },
                    span,
                })
            }
            _ => {
                let first = self.expr()?;
                if self.eat(&Tok::Assign) {
                    let value = self.expr()?;
                    self.expect(Tok::Semi)?;
                    return Ok(MethodStmt {
                        kind: MethodStmtKind::Assign { dest: first, value },
                        span,
                    });
                }
                self.expect(Tok::Semi)?;
                match first.kind {
                    ExprKind::FnCall { recv: Some(recv), name, args, .. } => Ok(MethodStmt {
                        kind: MethodStmtKind::Call { recv: *recv, method: name, args },
                        span,
                    }),
                    _ => {
                        self.diags.push(Diagnostic::error(
                            DiagCode::Parse,
                            first.span,
                            "expected an assignment or a method call",
                        ));
                        Err(Recover)
                    }
                }
            }
        }
    }

    // ----- expressions ------------------------------------------------------

    fn expr(&mut self) -> PResult<Expr> {
        self.implies_expr()
    }

    fn implies_expr(&mut self) -> PResult<Expr> {
        let lhs = self.sep_expr()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.implies_expr()?; // right-associative
            let span = lhs.span;
            return Ok(Expr::new(
                ExprKind::BinOp { op: BinOp::Implies, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                span,
            ));
        }
        Ok(lhs)
    }

    fn sep_expr(&mut self) -> PResult<Expr> {
        let lhs = self.or_expr()?;
        if self.eat(&Tok::StarStar) {
            let rhs = self.sep_expr()?; // right-associative
            let span = lhs.span;
            return Ok(Expr::new(
                ExprKind::SepConj { lhs: Box::new(lhs), rhs: Box::new(rhs) },
                span,
            ));
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.and_expr()?;
            let span = lhs.span;
            lhs = Expr::new(
                ExprKind::BinOp { op: BinOp::Or, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                span,
            );
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.cmp_expr()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.cmp_expr()?;
            let span = lhs.span;
            lhs = Expr::new(
                ExprKind::BinOp { op: BinOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                span,
            );
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::EqEq => BinOp::Eq,
            Tok::Neq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        // Comparisons do not associate: `a < b < c` is a parse error.
        if matches!(self.peek(), Tok::EqEq | Tok::Neq | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge) {
            return self.error_here(
                "comparison operators are non-associative; parenthesize one side",
            );
        }
        let span = lhs.span;
        Ok(Expr::new(ExprKind::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul_expr()?;
            let span = lhs.span;
            lhs = Expr::new(ExprKind::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        while self.eat(&Tok::Star) {
            let rhs = self.unary_expr()?;
            let span = lhs.span;
            lhs = Expr::new(
                ExprKind::BinOp { op: BinOp::Mul, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                span,
            );
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.peek() == &Tok::Minus {
            let span = self.bump().span;
            match self.peek().clone() {
                Tok::Int(digits) => {
                    self.bump();
                    let value: BigInt = digits.parse::<BigInt>().unwrap();
                    return Ok(Expr::new(ExprKind::IntLit { value: -value }, span));
                }
                other => {
                    let found = other.describe();
                    return self.error_here(format!(
                        "unary minus applies to integer literals only, found {found}"
                    ));
                }
            }
        }
        self.postfix_expr()
    }

    fn postfix_expr(&mut self) -> PResult<Expr> {
        let mut e = self.primary_expr()?;
        loop {
            if self.eat(&Tok::Dot) {
                let (name, span) = self.expect_ident("field or method name")?;
                if self.peek() == &Tok::LParen {
                    let args = self.args()?;
                    e = Expr::new(
                        ExprKind::FnCall { recv: Some(Box::new(e)), name, args, heap_fn: false },
                        span,
                    );
                } else {
                    let espan = e.span;
                    e = Expr::new(ExprKind::FieldAccess { base: Box::new(e), field: name }, espan);
                }
            } else if self.eat(&Tok::LBracket) {
                let index = self.expr()?;
                self.expect(Tok::RBracket)?;
                let espan = e.span;
                e = Expr::new(
                    ExprKind::SeqIndex { base: Box::new(e), index: Box::new(index) },
                    espan,
                );
            } else {
                return Ok(e);
            }
        }
    }

    fn primary_expr(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(digits) => {
                self.bump();
                let value: BigInt = digits.parse::<BigInt>().unwrap();
                // `num\den` fraction literal.
                if self.peek() == &Tok::Backslash {
                    self.bump();
                    match self.peek().clone() {
                        Tok::Int(den_digits) => {
                            self.bump();
                            let den: BigInt = den_digits.parse::<BigInt>().unwrap();
                            return Ok(Expr::new(ExprKind::FracLit { num: value, den }, span));
                        }
                        other => {
                            let found = other.describe();
                            return self.error_here(format!(
                                "expected denominator after `\\`, found {found}"
                            ));
                        }
                    }
                }
                Ok(Expr::new(ExprKind::IntLit { value }, span))
            }
            Tok::KwTrue => {
                self.bump();
                Ok(Expr::new(ExprKind::BoolLit { value: true }, span))
            }
            Tok::KwFalse => {
                self.bump();
                Ok(Expr::new(ExprKind::BoolLit { value: false }, span))
            }
            Tok::KwThis => {
                self.bump();
                Ok(Expr::new(ExprKind::This, span))
            }
            Tok::BsMsg => {
                self.bump();
                Ok(Expr::new(ExprKind::Msg, span))
            }
            Tok::BsSender => {
                self.bump();
                Ok(Expr::new(ExprKind::Sender, span))
            }
            Tok::BsReceiver => {
                self.bump();
                Ok(Expr::new(ExprKind::Receiver, span))
            }
            Tok::KwPerm => {
                self.bump();
                self.expect(Tok::LParen)?;
                let place = self.expr()?;
                self.expect(Tok::Comma)?;
                let amount = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(Expr::new(
                    ExprKind::Perm { place: Box::new(place), amount: Box::new(amount) },
                    span,
                ))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek() == &Tok::LParen {
                    let args = self.args()?;
                    // Predicate vs function is resolved once declarations
                    // are known; see `resolve_calls`.
                    return Ok(Expr::new(
                        ExprKind::FnCall { recv: None, name, args, heap_fn: false },
                        span,
                    ));
                }
                Ok(Expr::new(ExprKind::Var { name }, span))
            }
            Tok::LParen => {
                self.bump();
                match self.peek().clone() {
                    Tok::BsEndpoint => {
                        self.bump();
                        let target = self.target()?;
                        self.expect(Tok::Semi)?;
                        let body = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(Expr::new(
                            ExprKind::EndpointExpr { target, body: Box::new(body) },
                            span,
                        ))
                    }
                    Tok::BsChor => {
                        self.bump();
                        let body = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(Expr::new(ExprKind::ChorExpr { body: Box::new(body) }, span))
                    }
                    Tok::BsForall => {
                        self.bump();
                        let (binder, _) = self.expect_ident("quantifier binder")?;
                        self.expect(Tok::Assign)?;
                        let lo = self.expr()?;
                        self.expect(Tok::DotDot)?;
                        let hi = self.expr()?;
                        self.expect(Tok::Semi)?;
                        let body = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(Expr::new(
                            ExprKind::Forall {
                                binder,
                                lo: Box::new(lo),
                                hi: Box::new(hi),
                                body: Box::new(body),
                            },
                            span,
                        ))
                    }
                    Tok::BsForallStar => {
                        self.bump();
                        let ty = self.ty()?;
                        let (binder, _) = self.expect_ident("quantifier binder")?;
                        self.expect(Tok::Assign)?;
                        let lo = self.expr()?;
                        self.expect(Tok::DotDot)?;
                        let hi = self.expr()?;
                        self.expect(Tok::Semi)?;
                        let body = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(Expr::new(
                            ExprKind::QuantPerm {
                                binder,
                                ty,
                                lo: Box::new(lo),
                                hi: Box::new(hi),
                                body: Box::new(body),
                            },
                            span,
                        ))
                    }
                    _ => {
                        let inner = self.expr()?;
                        self.expect(Tok::RParen)?;
                        Ok(inner)
                    }
                }
            }
            other => {
                let found = other.describe();
                self.error_here(format!("expected an expression, found {found}"))
            }
        }
    }
}

/// Rewrite bare calls whose name matches a resource predicate into
/// [`ExprKind::PredApply`], and mark calls to heap functions. Runs after a
/// successful parse so declaration order does not matter. Heap-ness is
/// transitive: a function that calls a heap function is itself heap.
fn resolve_calls(program: &mut Program) {
    use std::collections::{BTreeMap, BTreeSet};
    let mut predicates = BTreeSet::new();
    let mut heap_fns = BTreeSet::new();
    let mut callees: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for d in &program.decls {
        match d {
            Decl::Predicate(p) => {
                predicates.insert(p.name.clone());
            }
            Decl::Function(f) => {
                if f.heap {
                    heap_fns.insert(f.name.clone());
                }
                let mut called = BTreeSet::new();
                f.body.walk(&mut |e| {
                    if let ExprKind::FnCall { recv: None, name, .. } = &e.kind {
                        called.insert(name.clone());
                    }
                });
                callees.insert(f.name.clone(), called);
            }
            _ => {}
        }
    }
    // Propagate heap-ness along the call graph to a fixpoint.
    loop {
        let next: Vec<String> = callees
            .iter()
            .filter(|(name, called)| {
                !heap_fns.contains(*name) && called.iter().any(|c| heap_fns.contains(c))
            })
            .map(|(name, _)| name.clone())
            .collect();
        if next.is_empty() {
            break;
        }
        heap_fns.extend(next);
    }
    for d in &mut program.decls {
        if let Decl::Function(f) = d {
            f.heap = heap_fns.contains(&f.name);
        }
    }
    if predicates.is_empty() && heap_fns.is_empty() {
        return;
    }
    let rewrite = |e: &mut Expr| rewrite_calls(e, &predicates, &heap_fns);
    for d in &mut program.decls {
        match d {
            Decl::Class(c) => {
                for m in &mut c.methods {
                    for e in
                        m.contract.requires.iter_mut().chain(m.contract.ensures.iter_mut())
                    {
                        rewrite(e);
                    }
                    rewrite_method_stmts(&mut m.body, &predicates, &heap_fns);
                }
                if let Some(ct) = &mut c.ctor {
                    for e in
                        ct.contract.requires.iter_mut().chain(ct.contract.ensures.iter_mut())
                    {
                        rewrite(e);
                    }
                    rewrite_method_stmts(&mut ct.body, &predicates, &heap_fns);
                }
            }
            Decl::Predicate(p) => rewrite(&mut p.body),
            Decl::Function(f) => rewrite(&mut f.body),
            Decl::Choreography(c) => {
                for e in c.contract.requires.iter_mut().chain(c.contract.ensures.iter_mut()) {
                    rewrite(e);
                }
                for ep in &mut c.endpoints {
                    match ep {
                        EndpointDecl::Singular { args, .. }
                        | EndpointDecl::Family { args, .. } => {
                            for a in args {
                                rewrite(a);
                            }
                        }
                    }
                }
                for e in
                    c.run.contract.requires.iter_mut().chain(c.run.contract.ensures.iter_mut())
                {
                    rewrite(e);
                }
                rewrite_chor_stmts(&mut c.run.body, &predicates, &heap_fns);
            }
        }
    }
}

fn rewrite_chor_stmts(
    stmts: &mut [ChorStmt],
    predicates: &std::collections::BTreeSet<String>,
    heap_fns: &std::collections::BTreeSet<String>,
) {
    for s in stmts {
        match &mut s.kind {
            ChorStmtKind::If { cond, then_branch, else_branch } => {
                rewrite_calls(cond, predicates, heap_fns);
                rewrite_chor_stmts(then_branch, predicates, heap_fns);
                rewrite_chor_stmts(else_branch, predicates, heap_fns);
            }
            ChorStmtKind::While { invariants, cond, body } => {
                for e in invariants {
                    rewrite_calls(e, predicates, heap_fns);
                }
                rewrite_calls(cond, predicates, heap_fns);
                rewrite_chor_stmts(body, predicates, heap_fns);
            }
            ChorStmtKind::Assert { expr } => rewrite_calls(expr, predicates, heap_fns),
            ChorStmtKind::Endpoint { target, action } => {
                rewrite_target(target, predicates, heap_fns);
                match action {
                    EpAction::Assign { dest, value } => {
                        rewrite_calls(dest, predicates, heap_fns);
                        rewrite_calls(value, predicates, heap_fns);
                    }
                    EpAction::Call { recv, args, .. } => {
                        rewrite_calls(recv, predicates, heap_fns);
                        for a in args {
                            rewrite_calls(a, predicates, heap_fns);
                        }
                    }
                }
            }
            ChorStmtKind::Communicate { invariant, sender, msg, receiver, dest } => {
                if let Some(inv) = invariant {
                    rewrite_calls(inv, predicates, heap_fns);
                }
                rewrite_target(sender, predicates, heap_fns);
                rewrite_calls(msg, predicates, heap_fns);
                rewrite_target(receiver, predicates, heap_fns);
                rewrite_calls(dest, predicates, heap_fns);
            }
        }
    }
}

fn rewrite_target(
    target: &mut EndpointTarget,
    predicates: &std::collections::BTreeSet<String>,
    heap_fns: &std::collections::BTreeSet<String>,
) {
    match target {
        EndpointTarget::Singular { .. } => {}
        EndpointTarget::FamilyIndex { index, .. } => rewrite_calls(index, predicates, heap_fns),
        EndpointTarget::FamilyRange { lo, hi, .. } => {
            rewrite_calls(lo, predicates, heap_fns);
            rewrite_calls(hi, predicates, heap_fns);
        }
    }
}

fn rewrite_method_stmts(
    stmts: &mut [MethodStmt],
    predicates: &std::collections::BTreeSet<String>,
    heap_fns: &std::collections::BTreeSet<String>,
) {
    for s in stmts {
        match &mut s.kind {
            MethodStmtKind::Assert { expr }
            | MethodStmtKind::Inhale { expr }
            | MethodStmtKind::Exhale { expr } => rewrite_calls(expr, predicates, heap_fns),
            MethodStmtKind::Assign { dest, value } => {
                rewrite_calls(dest, predicates, heap_fns);
                rewrite_calls(value, predicates, heap_fns);
            }
            MethodStmtKind::Call { recv, args, .. } => {
                rewrite_calls(recv, predicates, heap_fns);
                for a in args {
                    rewrite_calls(a, predicates, heap_fns);
                }
            }
            MethodStmtKind::If { cond, then_branch, else_branch } => {
                rewrite_calls(cond, predicates, heap_fns);
                rewrite_method_stmts(then_branch, predicates, heap_fns);
                rewrite_method_stmts(else_branch, predicates, heap_fns);
            }
            MethodStmtKind::While { invariants, cond, body } => {
                for e in invariants {
                    rewrite_calls(e, predicates, heap_fns);
                }
                rewrite_calls(cond, predicates, heap_fns);
                rewrite_method_stmts(body, predicates, heap_fns);
            }
            MethodStmtKind::Par { contract, lo, hi, body, .. } => {
                for e in contract.requires.iter_mut().chain(contract.ensures.iter_mut()) {
                    rewrite_calls(e, predicates, heap_fns);
                }
                rewrite_calls(lo, predicates, heap_fns);
                rewrite_calls(hi, predicates, heap_fns);
                rewrite_method_stmts(body, predicates, heap_fns);
            }
        }
    }
}

fn rewrite_calls(
    e: &mut Expr,
    predicates: &std::collections::BTreeSet<String>,
    heap_fns: &std::collections::BTreeSet<String>,
) {
    // Rewrite this node if it is a bare call to a known predicate.
    let replace = match &mut e.kind {
        ExprKind::FnCall { recv, name, args, heap_fn } => {
            if recv.is_none() && predicates.contains(name.as_str()) {
                Some(ExprKind::PredApply { name: name.clone(), args: std::mem::take(args) })
            } else {
                if heap_fns.contains(name.as_str()) {
                    *heap_fn = true;
                }
                None
            }
        }
        _ => None,
    };
    if let Some(kind) = replace {
        e.kind = kind;
    }
    // Recurse.
    match &mut e.kind {
        ExprKind::Var { .. }
        | ExprKind::IntLit { .. }
        | ExprKind::BoolLit { .. }
        | ExprKind::FracLit { .. }
        | ExprKind::This
        | ExprKind::Msg
        | ExprKind::Sender
        | ExprKind::Receiver => {}
        ExprKind::FieldAccess { base, .. } => rewrite_calls(base, predicates, heap_fns),
        ExprKind::SeqIndex { base, index } => {
            rewrite_calls(base, predicates, heap_fns);
            rewrite_calls(index, predicates, heap_fns);
        }
        ExprKind::BinOp { lhs, rhs, .. } | ExprKind::SepConj { lhs, rhs } => {
            rewrite_calls(lhs, predicates, heap_fns);
            rewrite_calls(rhs, predicates, heap_fns);
        }
        ExprKind::FnCall { recv, args, .. } => {
            if let Some(r) = recv {
                rewrite_calls(r, predicates, heap_fns);
            }
            for a in args {
                rewrite_calls(a, predicates, heap_fns);
            }
        }
        ExprKind::Perm { place, amount } => {
            rewrite_calls(place, predicates, heap_fns);
            rewrite_calls(amount, predicates, heap_fns);
        }
        ExprKind::PredApply { args, .. } => {
            for a in args {
                rewrite_calls(a, predicates, heap_fns);
            }
        }
        ExprKind::Forall { lo, hi, body, .. } | ExprKind::QuantPerm { lo, hi, body, .. } => {
            rewrite_calls(lo, predicates, heap_fns);
            rewrite_calls(hi, predicates, heap_fns);
            rewrite_calls(body, predicates, heap_fns);
        }
        ExprKind::EndpointExpr { target, body } => {
            rewrite_target(target, predicates, heap_fns);
            rewrite_calls(body, predicates, heap_fns);
        }
        ExprKind::ChorExpr { body } => rewrite_calls(body, predicates, heap_fns),
        ExprKind::Confined { target, body } => {
            if let Some(ix) = &mut target.index {
                rewrite_calls(ix, predicates, heap_fns);
            }
            rewrite_calls(body, predicates, heap_fns);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_expr(src: &str) -> Expr {
        let prog = format!("choreography T(int n) {{ endpoint a = C(); run {{ assert {src}; }} }}");
        let program = parse(&prog).expect("parse failed");
        match &program.decls[0] {
            Decl::Choreography(c) => match &c.run.body[0].kind {
                ChorStmtKind::Assert { expr } => expr.clone(),
                other => panic!("expected assert, got {other:?}"),
            },
            _ => panic!("expected choreography"),
        }
    }

    #[test]
    fn precedence_and_tighter_than_sep_tighter_than_implies() {
        // a && b ** c ==> d  parses as  ((a && b) ** c) ==> d
        let e = parse_expr("a && b ** c ==> d");
        match &e.kind {
            ExprKind::BinOp { op: BinOp::Implies, lhs, .. } => match &lhs.kind {
                ExprKind::SepConj { lhs: sl, .. } => {
                    assert!(matches!(&sl.kind, ExprKind::BinOp { op: BinOp::And, .. }));
                }
                other => panic!("expected **, got {other:?}"),
            },
            other => panic!("expected ==>, got {other:?}"),
        }
    }

    #[test]
    fn implies_is_right_associative() {
        // a ==> b ==> c  parses as  a ==> (b ==> c)
        let e = parse_expr("a ==> b ==> c");
        match &e.kind {
            ExprKind::BinOp { op: BinOp::Implies, rhs, .. } => {
                assert!(matches!(&rhs.kind, ExprKind::BinOp { op: BinOp::Implies, .. }));
            }
            other => panic!("expected ==>, got {other:?}"),
        }
    }

    #[test]
    fn comparisons_do_not_chain() {
        let prog = "choreography T(int n) { endpoint a = C(); run { assert a < b < c; } }";
        let err = parse(prog).unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("non-associative")));
    }

    #[test]
    fn fraction_literal() {
        let e = parse_expr(r"Perm(a.x, 1\2)");
        match &e.kind {
            ExprKind::Perm { amount, .. } => {
                assert!(matches!(&amount.kind, ExprKind::FracLit { .. }));
            }
            other => panic!("expected Perm, got {other:?}"),
        }
    }

    #[test]
    fn endpoint_expression_forms() {
        let e = parse_expr(r"(\endpoint F[i := 2 .. n]; F[i].x > 0)");
        match &e.kind {
            ExprKind::EndpointExpr { target: EndpointTarget::FamilyRange { family, binder, .. }, .. } => {
                assert_eq!(family, "F");
                assert_eq!(binder, "i");
            }
            other => panic!("expected endpoint range expr, got {other:?}"),
        }
    }

    #[test]
    fn negative_literal_folds() {
        let e = parse_expr("i + -3");
        match &e.kind {
            ExprKind::BinOp { op: BinOp::Add, rhs, .. } => match &rhs.kind {
                ExprKind::IntLit { value } => assert_eq!(value, &BigInt::from(-3)),
                other => panic!("expected literal, got {other:?}"),
            },
            other => panic!("expected +, got {other:?}"),
        }
    }

    #[test]
    fn statement_recovery_reports_all_errors() {
        let src = "choreography T(int n) {\n endpoint a = C();\n run {\n assert %%;\n assert ^^;\n }\n }";
        let errs = parse(src).unwrap_err();
        // Two lex errors per bad char pair plus parse errors; at minimum the
        // parser must not stop at the first bad statement.
        let parse_errors: Vec<_> = errs.iter().filter(|d| d.code == DiagCode::Parse).collect();
        assert!(parse_errors.len() >= 2, "expected recovery to surface both: {errs:?}");
    }

    #[test]
    fn predicate_calls_resolve() {
        let src = r"
resource Owned(int k) = k >= 0;
choreography T(int n) {
  endpoint a = C();
  run { assert Owned(3); }
}";
        let program = parse(src).unwrap();
        match &program.decls[1] {
            Decl::Choreography(c) => match &c.run.body[0].kind {
                ChorStmtKind::Assert { expr } => {
                    assert!(matches!(&expr.kind, ExprKind::PredApply { .. }));
                }
                other => panic!("unexpected: {other:?}"),
            },
            _ => panic!("expected choreography"),
        }
    }

    #[test]
    fn family_ranges_start_at_zero() {
        let src = "choreography T(int n) { endpoint F[i := 1 .. n] = C(); run { } }";
        let errs = parse(src).unwrap_err();
        assert!(errs.iter().any(|d| d.message.contains("start at `0`")));
    }
}
