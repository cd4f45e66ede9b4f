//! Recursive-descent parser for the kernel subset.
//!
//! Scope and invariant checks run while parsing so every rejection carries a
//! source position: identifiers must be declared before use, declaration
//! names are unique across the whole kernel, subscripts only apply to
//! pointer parameters or local arrays, and builtin dimension arguments must
//! be integer literals. The accepted grammar is documented in
//! `docs/grammar.md`.

use std::collections::HashSet;

use crate::ast::*;
use crate::error::{Diagnostic, Pos};
use crate::lexer::{lex, Tok, Token};

/// Keywords that are valid OpenCL-C (or C) but outside the subset. Seeing
/// one anywhere is an unsupported-construct error naming it.
const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "struct", "union", "enum", "typedef", "goto", "while", "do", "switch", "case", "default",
    "break", "continue", "return", "sizeof", "double", "char", "short", "long", "half", "bool",
    "unsigned", "signed", "volatile", "static", "inline", "restrict", "size_t", "atomic_add",
    "async_work_group_copy", "mem_fence", "printf",
];

const TYPE_KEYWORDS: &[(&str, ScalarType)] =
    &[("int", ScalarType::Int), ("uint", ScalarType::Uint), ("float", ScalarType::Float)];

const WORK_ITEM_FNS: &[(&str, WorkItemFn)] = &[
    ("get_global_id", WorkItemFn::GlobalId),
    ("get_global_size", WorkItemFn::GlobalSize),
    ("get_local_id", WorkItemFn::LocalId),
    ("get_local_size", WorkItemFn::LocalSize),
    ("get_group_id", WorkItemFn::GroupId),
];

const MATH_FNS: &[(&str, MathFn)] =
    &[("min", MathFn::Min), ("max", MathFn::Max), ("fabs", MathFn::Fabs), ("sqrt", MathFn::Sqrt)];

fn scalar_type_of(name: &str) -> Option<ScalarType> {
    TYPE_KEYWORDS.iter().find(|(kw, _)| *kw == name).map(|(_, t)| *t)
}

fn work_item_fn_of(name: &str) -> Option<WorkItemFn> {
    WORK_ITEM_FNS.iter().find(|(kw, _)| *kw == name).map(|(_, f)| *f)
}

fn math_fn_of(name: &str) -> Option<MathFn> {
    MATH_FNS.iter().find(|(kw, _)| *kw == name).map(|(_, f)| *f)
}

fn addr_space_of(name: &str) -> Option<AddressSpace> {
    match name {
        "__global" | "global" => Some(AddressSpace::Global),
        "__local" | "local" => Some(AddressSpace::Local),
        "__constant" | "constant" => Some(AddressSpace::Constant),
        "__private" | "private" => Some(AddressSpace::Private),
        _ => None,
    }
}

/// Names that may not be declared or referenced as ordinary variables.
fn is_reserved(name: &str) -> bool {
    scalar_type_of(name).is_some()
        || work_item_fn_of(name).is_some()
        || math_fn_of(name).is_some()
        || addr_space_of(name).is_some()
        || UNSUPPORTED_KEYWORDS.contains(&name)
        || matches!(
            name,
            "__kernel" | "kernel" | "void" | "if" | "else" | "for" | "barrier" | "__attribute__"
                | "CLK_LOCAL_MEM_FENCE" | "CLK_GLOBAL_MEM_FENCE"
        )
}

/// Parse one kernel from UTF-8 source text.
pub fn parse_kernel(source: &str) -> Result<KernelAst, Diagnostic> {
    let out = lex(source)?;
    let mut p = Parser {
        tokens: out.tokens,
        at: 0,
        scopes: vec![HashSet::new()],
        declared_anywhere: HashSet::new(),
        pointers: HashSet::new(),
        constants: HashSet::new(),
    };
    let mut kernel = p.kernel()?;
    kernel.header_comments = out.leading_comments;
    Ok(kernel)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    /// Visible declarations, innermost scope last.
    scopes: Vec<HashSet<String>>,
    /// Every name declared anywhere in the kernel; the subset requires
    /// kernel-wide unique declarations so transforms can rename safely.
    declared_anywhere: HashSet<String>,
    /// Names that are subscriptable (pointer params and local arrays).
    pointers: HashSet<String>,
    /// Pointer names in the `__constant` address space (loads only).
    constants: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
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

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), Diagnostic> {
        if self.peek() == &tok {
            self.bump();
            Ok(())
        } else {
            Err(Diagnostic::syntax(
                self.pos(),
                format!("expected {what}, found {}", self.peek().describe()),
            ))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), Diagnostic> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => Err(Diagnostic::syntax(
                self.pos(),
                format!("expected `{kw}`, found {}", other.describe()),
            )),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), Diagnostic> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) => {
                if UNSUPPORTED_KEYWORDS.contains(&s.as_str()) {
                    return Err(Diagnostic::unsupported(pos, format!("`{s}`")));
                }
                if is_reserved(&s) {
                    return Err(Diagnostic::syntax(pos, format!("`{s}` cannot be used as {what}")));
                }
                self.bump();
                Ok((s, pos))
            }
            other => {
                Err(Diagnostic::syntax(pos, format!("expected {what}, found {}", other.describe())))
            }
        }
    }

    /// Reject unsupported keywords early so the diagnostic names the
    /// construct instead of producing a generic syntax error.
    fn check_unsupported(&self) -> Result<(), Diagnostic> {
        if let Tok::Ident(s) = self.peek() {
            if UNSUPPORTED_KEYWORDS.contains(&s.as_str()) {
                return Err(Diagnostic::unsupported(self.pos(), format!("`{s}`")));
            }
        }
        Ok(())
    }

    // ---- declarations & scope -------------------------------------------

    fn declare(&mut self, name: &str, pos: Pos) -> Result<(), Diagnostic> {
        if self.declared_anywhere.contains(name) {
            return Err(Diagnostic::invalid(
                pos,
                format!("redeclaration of `{name}` (the subset requires kernel-wide unique names)"),
            ));
        }
        self.declared_anywhere.insert(name.to_string());
        self.scopes.last_mut().unwrap().insert(name.to_string());
        Ok(())
    }

    fn is_visible(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.contains(name))
    }

    fn check_scalar_use(&self, name: &str, pos: Pos) -> Result<(), Diagnostic> {
        if !self.is_visible(name) {
            return Err(Diagnostic::invalid(pos, format!("use of undeclared identifier `{name}`")));
        }
        if self.pointers.contains(name) {
            return Err(Diagnostic::unsupported(
                pos,
                format!("pointer arithmetic or pointer-value use of `{name}`"),
            ));
        }
        Ok(())
    }

    fn check_pointer_use(&self, name: &str, pos: Pos) -> Result<(), Diagnostic> {
        if !self.is_visible(name) {
            return Err(Diagnostic::invalid(pos, format!("use of undeclared identifier `{name}`")));
        }
        if !self.pointers.contains(name) {
            return Err(Diagnostic::invalid(pos, format!("subscript applied to scalar `{name}`")));
        }
        Ok(())
    }

    // ---- kernel ----------------------------------------------------------

    fn kernel(&mut self) -> Result<KernelAst, Diagnostic> {
        let attrs = self.attributes()?;
        self.check_unsupported()?;
        match self.peek() {
            Tok::Ident(s) if s == "__kernel" || s == "kernel" => {
                self.bump();
            }
            other => {
                return Err(Diagnostic::syntax(
                    self.pos(),
                    format!("expected `__kernel`, found {}", other.describe()),
                ))
            }
        }
        self.expect_keyword("void")?;
        let (name, _) = self.ident("a kernel name")?;
        self.expect(Tok::LParen, "`(`")?;
        let params = self.params()?;
        for p in &params {
            let pos = self.pos();
            self.declare(&p.name, pos)?;
            if p.is_pointer {
                self.pointers.insert(p.name.clone());
                if p.addr_space == AddressSpace::Constant {
                    self.constants.insert(p.name.clone());
                }
            }
        }
        let body = self.block()?;
        if self.peek() != &Tok::Eof {
            if let Tok::Ident(s) = self.peek() {
                if s == "__kernel" || s == "kernel" {
                    return Err(Diagnostic::unsupported(
                        self.pos(),
                        "multiple kernels in one file",
                    ));
                }
            }
            return Err(Diagnostic::syntax(
                self.pos(),
                format!("expected end of input, found {}", self.peek().describe()),
            ));
        }
        Ok(KernelAst { name, params, body, attrs, header_comments: Vec::new() })
    }

    fn attributes(&mut self) -> Result<KernelAttrs, Diagnostic> {
        let mut attrs = KernelAttrs::default();
        loop {
            match self.peek() {
                Tok::Ident(s) if s == "__attribute__" => {
                    let pos = self.pos();
                    self.bump();
                    self.expect(Tok::LParen, "`((`")?;
                    self.expect(Tok::LParen, "`((`")?;
                    let (name, npos) = match self.peek().clone() {
                        Tok::Ident(s) => {
                            let p = self.pos();
                            self.bump();
                            (s, p)
                        }
                        other => {
                            return Err(Diagnostic::syntax(
                                self.pos(),
                                format!("expected attribute name, found {}", other.describe()),
                            ))
                        }
                    };
                    self.expect(Tok::LParen, "`(`")?;
                    let value = match self.peek().clone() {
                        Tok::IntLit(v) if v >= 1 => {
                            self.bump();
                            v as u32
                        }
                        _ => {
                            return Err(Diagnostic::syntax(
                                self.pos(),
                                "attribute value must be a positive integer literal",
                            ))
                        }
                    };
                    self.expect(Tok::RParen, "`)`")?;
                    self.expect(Tok::RParen, "`))`")?;
                    self.expect(Tok::RParen, "`))`")?;
                    let slot = match name.as_str() {
                        "num_simd_work_items" => &mut attrs.simd_lanes,
                        "num_compute_units" => &mut attrs.compute_units,
                        _ => return Err(Diagnostic::unsupported(npos, format!("attribute `{name}`"))),
                    };
                    if slot.is_some() {
                        return Err(Diagnostic::invalid(pos, format!("duplicate attribute `{name}`")));
                    }
                    // Value 1 is the device default; canonical form omits it.
                    *slot = (value != 1).then_some(value);
                }
                _ => return Ok(attrs),
            }
        }
    }

    fn params(&mut self) -> Result<Vec<Param>, Diagnostic> {
        let mut params = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(params);
        }
        loop {
            params.push(self.param()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "`)` after parameters")?;
            break;
        }
        let mut seen = HashSet::new();
        for p in &params {
            if !seen.insert(p.name.clone()) {
                return Err(Diagnostic::invalid(
                    self.pos(),
                    format!("duplicate parameter name `{}`", p.name),
                ));
            }
        }
        Ok(params)
    }

    fn param(&mut self) -> Result<Param, Diagnostic> {
        self.check_unsupported()?;
        let qual_pos = self.pos();
        let mut space = None;
        if let Tok::Ident(s) = self.peek() {
            if let Some(a) = addr_space_of(s) {
                space = Some(a);
                self.bump();
            }
        }
        self.check_unsupported()?;
        let ty = match self.peek().clone() {
            Tok::Ident(s) => match scalar_type_of(&s) {
                Some(t) => {
                    self.bump();
                    t
                }
                None => {
                    return Err(Diagnostic::syntax(
                        self.pos(),
                        format!("expected a parameter type, found identifier `{s}`"),
                    ))
                }
            },
            other => {
                return Err(Diagnostic::syntax(
                    self.pos(),
                    format!("expected a parameter type, found {}", other.describe()),
                ))
            }
        };
        let is_pointer = self.eat(&Tok::Star);
        if self.peek() == &Tok::Star {
            return Err(Diagnostic::unsupported(self.pos(), "multi-level pointer parameter"));
        }
        let (name, npos) = self.ident("a parameter name")?;
        if self.peek() == &Tok::LBracket {
            return Err(Diagnostic::unsupported(self.pos(), "array parameter syntax"));
        }
        let addr_space = if is_pointer {
            match space {
                Some(AddressSpace::Private) => {
                    return Err(Diagnostic::unsupported(qual_pos, "private pointer parameter"))
                }
                Some(a) => a,
                None => {
                    return Err(Diagnostic::invalid(
                        npos,
                        format!("pointer parameter `{name}` requires an address space qualifier"),
                    ))
                }
            }
        } else {
            match space {
                None | Some(AddressSpace::Private) => AddressSpace::Private,
                Some(a) => {
                    return Err(Diagnostic::invalid(
                        qual_pos,
                        format!("scalar parameter `{name}` cannot live in {}", a.qualifier()),
                    ))
                }
            }
        };
        Ok(Param { name, ty, is_pointer, addr_space })
    }

    // ---- statements ------------------------------------------------------

    fn block(&mut self) -> Result<Block, Diagnostic> {
        self.expect(Tok::LBrace, "`{`")?;
        self.scopes.push(HashSet::new());
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.peek() == &Tok::Eof {
                return Err(Diagnostic::syntax(self.pos(), "unexpected end of input, expected `}`"));
            }
            stmts.push(self.stmt()?);
        }
        self.scopes.pop();
        Ok(Block::new(stmts))
    }

    fn stmt(&mut self) -> Result<Stmt, Diagnostic> {
        self.check_unsupported()?;
        match self.peek().clone() {
            Tok::LBrace => Ok(Stmt::Block(self.block()?)),
            Tok::Ident(s) => {
                if let Some(space) = addr_space_of(&s) {
                    return self.local_array(space);
                }
                if let Some(ty) = scalar_type_of(&s) {
                    self.bump();
                    return self.decl(ty);
                }
                match s.as_str() {
                    "if" => self.if_stmt(),
                    "for" => self.for_stmt(),
                    "barrier" => self.barrier_stmt(),
                    "else" => Err(Diagnostic::syntax(self.pos(), "`else` without a preceding `if`")),
                    _ => self.assign_or_store(),
                }
            }
            other => Err(Diagnostic::syntax(
                self.pos(),
                format!("expected a statement, found {}", other.describe()),
            )),
        }
    }

    fn local_array(&mut self, space: AddressSpace) -> Result<Stmt, Diagnostic> {
        let pos = self.pos();
        if space != AddressSpace::Local {
            return Err(Diagnostic::unsupported(
                pos,
                format!("{} declaration inside a kernel body", space.qualifier()),
            ));
        }
        self.bump();
        self.check_unsupported()?;
        let ty = match self.peek().clone() {
            Tok::Ident(s) => scalar_type_of(&s).ok_or_else(|| {
                Diagnostic::syntax(self.pos(), format!("expected element type after `__local`, found `{s}`"))
            })?,
            other => {
                return Err(Diagnostic::syntax(
                    self.pos(),
                    format!("expected element type after `__local`, found {}", other.describe()),
                ))
            }
        };
        self.bump();
        let (name, npos) = self.ident("a local array name")?;
        self.expect(Tok::LBracket, "`[` (local declarations must be arrays)")?;
        let len = match self.peek().clone() {
            Tok::IntLit(v) if v >= 1 => {
                self.bump();
                v as u64
            }
            _ => {
                return Err(Diagnostic::syntax(
                    self.pos(),
                    "local array length must be a positive integer literal",
                ))
            }
        };
        self.expect(Tok::RBracket, "`]`")?;
        self.expect(Tok::Semi, "`;`")?;
        self.declare(&name, npos)?;
        self.pointers.insert(name.clone());
        Ok(Stmt::LocalArray { ty, name, len })
    }

    fn decl(&mut self, ty: ScalarType) -> Result<Stmt, Diagnostic> {
        let (name, npos) = self.ident("a variable name")?;
        if self.peek() == &Tok::LBracket {
            return Err(Diagnostic::unsupported(self.pos(), "private array declaration"));
        }
        self.expect(Tok::Assign, "`=` (declarations require an initializer)")?;
        let init = self.expr()?;
        self.expect(Tok::Semi, "`;`")?;
        self.declare(&name, npos)?;
        Ok(Stmt::Decl { ty, name, init })
    }

    fn assign_or_store(&mut self) -> Result<Stmt, Diagnostic> {
        let (name, npos) = self.ident("a statement")?;
        if self.eat(&Tok::LBracket) {
            self.check_pointer_use(&name, npos)?;
            if self.constants.contains(&name) {
                return Err(Diagnostic::invalid(npos, format!("store to __constant pointer `{name}`")));
            }
            let index = self.expr()?;
            self.expect(Tok::RBracket, "`]`")?;
            self.expect(Tok::Assign, "`=`")?;
            let value = self.expr()?;
            self.expect(Tok::Semi, "`;`")?;
            return Ok(Stmt::Store { array: name, index, value });
        }
        self.check_scalar_use(&name, npos)?;
        let stmt = match self.peek() {
            Tok::Assign => {
                self.bump();
                let value = self.expr()?;
                Stmt::Assign { name, value }
            }
            Tok::PlusAssign => {
                // `v += e` is sugar for `v = v + e`.
                self.bump();
                let amount = self.expr()?;
                Stmt::Assign { name: name.clone(), value: Expr::add(Expr::Var(name), amount) }
            }
            Tok::PlusPlus => {
                self.bump();
                Stmt::Assign { name: name.clone(), value: Expr::add(Expr::Var(name), Expr::int(1)) }
            }
            other => {
                return Err(Diagnostic::syntax(
                    self.pos(),
                    format!("expected `=` or `+=`, found {}", other.describe()),
                ))
            }
        };
        self.expect(Tok::Semi, "`;`")?;
        Ok(stmt)
    }

    fn if_stmt(&mut self) -> Result<Stmt, Diagnostic> {
        self.expect_keyword("if")?;
        self.expect(Tok::LParen, "`(`")?;
        let cond = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        let then_block = self.block()?;
        let else_block = if matches!(self.peek(), Tok::Ident(s) if s == "else") {
            self.bump();
            if matches!(self.peek(), Tok::Ident(s) if s == "if") {
                // `else if` chains become an else-block holding a single if.
                let nested = self.if_stmt()?;
                Some(Block::new(vec![nested]))
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If { cond, then_block, else_block })
    }

    fn for_stmt(&mut self) -> Result<Stmt, Diagnostic> {
        self.expect_keyword("for")?;
        self.expect(Tok::LParen, "`(`")?;
        self.scopes.push(HashSet::new());
        self.check_unsupported()?;
        let init = match self.peek().clone() {
            Tok::Ident(s) if scalar_type_of(&s).is_some() => {
                let ty = scalar_type_of(&s).unwrap();
                self.bump();
                let (name, npos) = self.ident("a loop variable")?;
                self.expect(Tok::Assign, "`=`")?;
                let init = self.expr()?;
                self.declare(&name, npos)?;
                ForInit::Decl { ty, name, init }
            }
            Tok::Ident(_) => {
                let (name, npos) = self.ident("a loop variable")?;
                self.check_scalar_use(&name, npos)?;
                self.expect(Tok::Assign, "`=`")?;
                let value = self.expr()?;
                ForInit::Assign { name, value }
            }
            other => {
                return Err(Diagnostic::syntax(
                    self.pos(),
                    format!("for-loop requires an init clause, found {}", other.describe()),
                ))
            }
        };
        self.expect(Tok::Semi, "`;`")?;
        let cond = self.expr()?;
        self.expect(Tok::Semi, "`;`")?;
        let (name, npos) = self.ident("the loop step variable")?;
        self.check_scalar_use(&name, npos)?;
        let step = match self.peek() {
            Tok::PlusAssign => {
                self.bump();
                ForStep::AddAssign { name, amount: self.expr()? }
            }
            Tok::PlusPlus => {
                self.bump();
                ForStep::Incr { name }
            }
            Tok::Assign => {
                self.bump();
                ForStep::Assign { name, value: self.expr()? }
            }
            other => {
                return Err(Diagnostic::syntax(
                    self.pos(),
                    format!("expected `+=`, `++` or `=`, found {}", other.describe()),
                ))
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        let body = self.block()?;
        self.scopes.pop();
        Ok(Stmt::For { init, cond, step, body })
    }

    fn barrier_stmt(&mut self) -> Result<Stmt, Diagnostic> {
        self.expect_keyword("barrier")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut fence = Fence::default();
        if !self.eat(&Tok::RParen) {
            loop {
                match self.peek().clone() {
                    Tok::Ident(s) if s == "CLK_LOCAL_MEM_FENCE" => {
                        self.bump();
                        fence.local = true;
                    }
                    Tok::Ident(s) if s == "CLK_GLOBAL_MEM_FENCE" => {
                        self.bump();
                        fence.global = true;
                    }
                    other => {
                        return Err(Diagnostic::syntax(
                            self.pos(),
                            format!("expected a memory fence flag, found {}", other.describe()),
                        ))
                    }
                }
                if self.eat(&Tok::Pipe) {
                    continue;
                }
                self.expect(Tok::RParen, "`)`")?;
                break;
            }
        }
        self.expect(Tok::Semi, "`;`")?;
        Ok(Stmt::Barrier { fence })
    }

    // ---- expressions -----------------------------------------------------

    fn expr(&mut self) -> Result<Expr, Diagnostic> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.and_expr()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.eq_expr()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.eq_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn eq_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.rel_expr()?;
        loop {
            let op = match self.peek() {
                Tok::EqEq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.rel_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn rel_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.add_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn add_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary_expr(&mut self) -> Result<Expr, Diagnostic> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let inner = self.unary_expr()?;
                // Fold literal negation so `-1` round-trips as one node.
                Ok(match inner {
                    Expr::IntLit(v) => Expr::IntLit(-v),
                    Expr::FloatLit(FloatLit(v)) => Expr::FloatLit(FloatLit(-v)),
                    e => Expr::Unary { op: UnOp::Neg, expr: Box::new(e) },
                })
            }
            Tok::Bang => {
                self.bump();
                let inner = self.unary_expr()?;
                Ok(Expr::Unary { op: UnOp::Not, expr: Box::new(inner) })
            }
            _ => self.postfix_expr(),
        }
    }

    fn postfix_expr(&mut self) -> Result<Expr, Diagnostic> {
        self.check_unsupported()?;
        let pos = self.pos();
        match self.peek().clone() {
            Tok::IntLit(v) => {
                self.bump();
                Ok(Expr::IntLit(v))
            }
            Tok::UintLit(v) => {
                self.bump();
                Ok(Expr::UintLit(v))
            }
            Tok::FloatLit(v) => {
                self.bump();
                Ok(Expr::FloatLit(FloatLit(v)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                if self.peek() == &Tok::LBracket {
                    return Err(Diagnostic::unsupported(
                        self.pos(),
                        "subscript on a computed pointer (pointer arithmetic)",
                    ));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(func) = work_item_fn_of(&name) {
                    self.bump();
                    return self.work_item_call(func);
                }
                if let Some(func) = math_fn_of(&name) {
                    self.bump();
                    return self.math_call(func);
                }
                if name == "barrier" {
                    return Err(Diagnostic::syntax(pos, "`barrier` is only valid as a statement"));
                }
                self.bump();
                if self.peek() == &Tok::LParen {
                    return Err(Diagnostic::unsupported(pos, format!("call to function `{name}`")));
                }
                if self.eat(&Tok::LBracket) {
                    self.check_pointer_use(&name, pos)?;
                    let index = self.expr()?;
                    self.expect(Tok::RBracket, "`]`")?;
                    if self.peek() == &Tok::LBracket {
                        return Err(Diagnostic::unsupported(self.pos(), "multi-dimensional subscript"));
                    }
                    return Ok(Expr::Load { array: name, index: Box::new(index) });
                }
                self.check_scalar_use(&name, pos)?;
                Ok(Expr::Var(name))
            }
            other => Err(Diagnostic::syntax(
                pos,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    fn work_item_call(&mut self, func: WorkItemFn) -> Result<Expr, Diagnostic> {
        self.expect(Tok::LParen, "`(`")?;
        let dim = match self.peek().clone() {
            Tok::IntLit(v) if (0..=2).contains(&v) => {
                self.bump();
                v as u8
            }
            _ => {
                return Err(Diagnostic::invalid(
                    self.pos(),
                    format!("{} takes a literal dimension in 0..=2", func.name()),
                ))
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(Expr::WorkItem { func, dim })
    }

    fn math_call(&mut self, func: MathFn) -> Result<Expr, Diagnostic> {
        let pos = self.pos();
        self.expect(Tok::LParen, "`(`")?;
        let mut args = vec![self.expr()?];
        while self.eat(&Tok::Comma) {
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        if args.len() != func.arity() {
            return Err(Diagnostic::invalid(
                pos,
                format!("{} expects {} argument(s), got {}", func.name(), func.arity(), args.len()),
            ));
        }
        Ok(Expr::Math { func, args })
    }
}
