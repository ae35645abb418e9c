use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{
    assign_sids, BinOp, Expr, Program, SharedDecl, Statement, StmtId, StmtKind, Thread, UnOp,
    Value, VarRef,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: duplicate {what} `{name}`")]
    Duplicate {
        what: &'static str,
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: statement accesses more than one shared variable ({vars})")]
    MultiGlobal {
        vars: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: shared variable `{name}` may only be accessed by load/store")]
    GlobalOutsideAccess {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: undeclared variable `{name}`")]
    Undeclared {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: type error: {msg}")]
    Type {
        msg: String,
        line: usize,
        col: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", ";", "=", "<", ">", "!", "+", "-", "*",
    ".",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            out.push(Token {
                tok: Tok::Ident(s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            let v = s.parse::<u64>().map_err(|_| ParseError::Syntax {
                line: start_line,
                col: start_col,
                msg: format!("integer literal `{s}` out of range"),
            })?;
            out.push(Token {
                tok: Tok::Int(v),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: start_line,
                    col: start_col,
                });
            }
            None => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "shared", "thread", "load", "store", "fence", "assert", "assume", "if", "else", "while",
    "final", "true", "false",
];

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Ty {
    Int,
    Bool,
}

struct Parser<'g> {
    toks: Vec<Token>,
    pos: usize,
    globals: &'g HashSet<String>,
}

/// A local referenced in a thread before its definition set is known.
struct LocalUse {
    name: String,
    line: usize,
    col: usize,
}

impl<'g> Parser<'g> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.is_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            self.syntax(format!("expected `{p}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.syntax(format!("expected `{kw}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.syntax(format!("expected identifier, found {}", self.describe())),
        }
    }

    // expression grammar, loosest to tightest binding

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.is_punct("||") {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.is_punct("&&") {
            self.pos += 1;
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.is_punct("!") {
            self.pos += 1;
            let e = self.not_expr()?;
            return Ok(Expr::negation(e));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.sum_expr()?;
        let op = match self.peek() {
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.sum_expr()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn sum_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.prod_expr()?;
        loop {
            let op = if self.is_punct("+") {
                BinOp::Add
            } else if self.is_punct("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.prod_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn prod_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr()?;
        while self.is_punct("*") {
            self.pos += 1;
            let rhs = self.unary_expr()?;
            lhs = Expr::binary(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        if self.is_punct("-") {
            self.pos += 1;
            // `-INT` is a literal, everything else is negation.
            if let Tok::Int(v) = *self.peek() {
                if v <= Value::MAX as u64 + 1 {
                    self.pos += 1;
                    return Ok(Expr::Int((-(v as i128)) as Value));
                }
                return self.syntax(format!("integer literal `-{v}` out of range"));
            }
            let e = self.unary_expr()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(e)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                if v > Value::MAX as u64 {
                    return self.syntax(format!("integer literal `{v}` out of range"));
                }
                self.pos += 1;
                Ok(Expr::Int(v as Value))
            }
            Tok::Punct("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.pos += 1;
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.is_punct(".") {
                    self.pos += 1;
                    let local = self.ident()?;
                    Ok(Expr::Var(VarRef::Qualified {
                        thread: name,
                        local,
                    }))
                } else {
                    Ok(Expr::Var(VarRef::Name(name)))
                }
            }
            _ => self.syntax(format!("expected expression, found {}", self.describe())),
        }
    }
}

/// Static type of `e`; errors are reported at `(line, col)`.
fn type_of(e: &Expr, line: usize, col: usize) -> Result<Ty, ParseError> {
    let err = |msg: String| ParseError::Type { msg, line, col };
    match e {
        Expr::Int(_) | Expr::Var(_) => Ok(Ty::Int),
        Expr::Bool(_) => Ok(Ty::Bool),
        Expr::Unary(UnOp::Neg, a) => match type_of(a, line, col)? {
            Ty::Int => Ok(Ty::Int),
            Ty::Bool => Err(err(format!("cannot negate boolean `{a}`"))),
        },
        Expr::Unary(UnOp::Not, a) => match type_of(a, line, col)? {
            Ty::Bool => Ok(Ty::Bool),
            Ty::Int => Err(err(format!("`!` applied to integer `{a}`"))),
        },
        Expr::Binary(op, a, b) => {
            let (ta, tb) = (type_of(a, line, col)?, type_of(b, line, col)?);
            let (want, out) = match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul => (Ty::Int, Ty::Int),
                BinOp::And | BinOp::Or => (Ty::Bool, Ty::Bool),
                _ => (Ty::Int, Ty::Bool),
            };
            if ta != want || tb != want {
                return Err(err(format!(
                    "operands of `{}` must be {want:?}",
                    op.symbol()
                )));
            }
            Ok(out)
        }
    }
}

fn expect_type(e: &Expr, want: Ty, line: usize, col: usize) -> Result<(), ParseError> {
    let got = type_of(e, line, col)?;
    if got != want {
        return Err(ParseError::Type {
            msg: format!("expected {want:?} expression, found `{e}`"),
            line,
            col,
        });
    }
    Ok(())
}

struct ThreadCtx {
    defined: Vec<String>,
    uses: Vec<LocalUse>,
}

impl<'g> Parser<'g> {
    /// Records local uses in a thread-scope expression; shared names are errors.
    fn check_thread_expr(
        &self,
        e: &Expr,
        ctx: &mut ThreadCtx,
        line: usize,
        col: usize,
    ) -> Result<(), ParseError> {
        let mut globals: Vec<&str> = Vec::new();
        for v in e.vars() {
            match v {
                VarRef::Qualified { thread, local } => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        msg: format!(
                        "qualified name `{thread}.{local}` is only allowed in the final assertion"
                    ),
                    })
                }
                VarRef::Name(n) if self.globals.contains(n) => {
                    if !globals.contains(&n.as_str()) {
                        globals.push(n);
                    }
                }
                VarRef::Name(n) => ctx.uses.push(LocalUse {
                    name: n.clone(),
                    line,
                    col,
                }),
            }
        }
        match globals.len() {
            0 => Ok(()),
            1 => Err(ParseError::GlobalOutsideAccess {
                name: globals[0].to_string(),
                line,
                col,
            }),
            _ => Err(ParseError::MultiGlobal {
                vars: globals.join(", "),
                line,
                col,
            }),
        }
    }

    fn define_local(
        &self,
        name: &str,
        ctx: &mut ThreadCtx,
        line: usize,
        col: usize,
    ) -> Result<(), ParseError> {
        if self.globals.contains(name) {
            return Err(ParseError::GlobalOutsideAccess {
                name: name.to_string(),
                line,
                col,
            });
        }
        if !ctx.defined.iter().any(|d| d == name) {
            ctx.defined.push(name.to_string());
        }
        Ok(())
    }

    fn block(&mut self, ctx: &mut ThreadCtx) -> Result<Vec<Statement>, ParseError> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.syntax("unexpected end of input, expected `}`");
            }
            out.push(self.statement(ctx)?);
        }
        self.pos += 1;
        Ok(out)
    }

    fn cond_in_parens(&mut self, ctx: &mut ThreadCtx) -> Result<Expr, ParseError> {
        self.expect_punct("(")?;
        let (line, col) = self.here();
        let c = self.expr()?;
        self.expect_punct(")")?;
        expect_type(&c, Ty::Bool, line, col)?;
        self.check_thread_expr(&c, ctx, line, col)?;
        Ok(c)
    }

    fn statement(&mut self, ctx: &mut ThreadCtx) -> Result<Statement, ParseError> {
        let (line, col) = self.here();
        let placeholder = StmtId { tid: 0, ordinal: 0 };
        let kind = if self.is_kw("load") {
            self.pos += 1;
            let local = self.ident()?;
            self.expect_punct("=")?;
            let (gl, gc) = self.here();
            let global = self.ident()?;
            if !self.globals.contains(&global) {
                return Err(ParseError::Undeclared {
                    name: global,
                    line: gl,
                    col: gc,
                });
            }
            self.expect_punct(";")?;
            self.define_local(&local, ctx, line, col)?;
            StmtKind::Load { local, global }
        } else if self.is_kw("store") {
            self.pos += 1;
            let (gl, gc) = self.here();
            let global = self.ident()?;
            if !self.globals.contains(&global) {
                return Err(ParseError::Undeclared {
                    name: global,
                    line: gl,
                    col: gc,
                });
            }
            self.expect_punct("=")?;
            let (el, ec) = self.here();
            let value = self.expr()?;
            self.expect_punct(";")?;
            expect_type(&value, Ty::Int, el, ec)?;
            if value
                .vars()
                .iter()
                .any(|v| matches!(v, VarRef::Name(n) if self.globals.contains(n)))
            {
                let mut vars = vec![global.clone()];
                for v in value.vars() {
                    if let VarRef::Name(n) = v {
                        if self.globals.contains(n) && !vars.contains(n) {
                            vars.push(n.clone());
                        }
                    }
                }
                return Err(ParseError::MultiGlobal {
                    vars: vars.join(", "),
                    line,
                    col,
                });
            }
            self.check_thread_expr(&value, ctx, el, ec)?;
            StmtKind::Store { global, value }
        } else if self.is_kw("fence") {
            self.pos += 1;
            self.expect_punct(";")?;
            StmtKind::Fence
        } else if self.is_kw("assert") || self.is_kw("assume") {
            let is_assert = self.is_kw("assert");
            self.pos += 1;
            let c = self.cond_in_parens(ctx)?;
            self.expect_punct(";")?;
            if is_assert {
                StmtKind::Assert(c)
            } else {
                StmtKind::Assume(c)
            }
        } else if self.is_kw("if") {
            self.pos += 1;
            let cond = self.cond_in_parens(ctx)?;
            let then_branch = self.block(ctx)?;
            let else_branch = if self.is_kw("else") {
                self.pos += 1;
                self.block(ctx)?
            } else {
                Vec::new()
            };
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            }
        } else if self.is_kw("while") {
            self.pos += 1;
            let cond = self.cond_in_parens(ctx)?;
            let body = self.block(ctx)?;
            StmtKind::While { cond, body }
        } else {
            let name = self.ident()?;
            self.expect_punct("=")?;
            let (el, ec) = self.here();
            let value = self.expr()?;
            self.expect_punct(";")?;
            expect_type(&value, Ty::Int, el, ec)?;
            if self.globals.contains(&name) {
                let mut vars = vec![name.clone()];
                for v in value.vars() {
                    if let VarRef::Name(n) = v {
                        if self.globals.contains(n) && !vars.contains(n) {
                            vars.push(n.clone());
                        }
                    }
                }
                if vars.len() > 1 {
                    return Err(ParseError::MultiGlobal {
                        vars: vars.join(", "),
                        line,
                        col,
                    });
                }
                return Err(ParseError::GlobalOutsideAccess { name, line, col });
            }
            self.check_thread_expr(&value, ctx, el, ec)?;
            self.define_local(&name, ctx, line, col)?;
            StmtKind::Assign { local: name, value }
        };
        Ok(Statement {
            sid: placeholder,
            kind,
        })
    }
}

/// Parse and validate DSL source text.
pub fn parse(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src)?;

    // Shared declarations come first; collect them so thread bodies can
    // classify names while parsing.
    let mut shared = Vec::new();
    let mut globals = HashSet::new();
    let mut pos = 0;
    {
        let empty = HashSet::new();
        let mut p = Parser {
            toks: toks.clone(),
            pos,
            globals: &empty,
        };
        while p.is_kw("shared") {
            p.pos += 1;
            let (line, col) = p.here();
            let name = p.ident()?;
            p.expect_punct("=")?;
            let negative = if p.is_punct("-") {
                p.pos += 1;
                true
            } else {
                false
            };
            let init = match *p.peek() {
                Tok::Int(v) => {
                    let v = if negative { -(v as i128) } else { v as i128 };
                    if v < Value::MIN as i128 || v > Value::MAX as i128 {
                        return p.syntax("integer literal out of range");
                    }
                    p.pos += 1;
                    v as Value
                }
                _ => return p.syntax(format!("expected integer, found {}", p.describe())),
            };
            p.expect_punct(";")?;
            if !globals.insert(name.clone()) {
                return Err(ParseError::Duplicate {
                    what: "shared variable",
                    name,
                    line,
                    col,
                });
            }
            shared.push(SharedDecl { name, init });
        }
        pos = p.pos;
    }

    let mut p = Parser {
        toks,
        pos,
        globals: &globals,
    };
    let mut threads: Vec<Thread> = Vec::new();
    let mut thread_locals: HashMap<String, Vec<String>> = HashMap::new();
    while p.is_kw("thread") {
        p.pos += 1;
        let (line, col) = p.here();
        let name = p.ident()?;
        if threads.iter().any(|t| t.name == name) {
            return Err(ParseError::Duplicate {
                what: "thread",
                name,
                line,
                col,
            });
        }
        let mut ctx = ThreadCtx {
            defined: Vec::new(),
            uses: Vec::new(),
        };
        let mut body = p.block(&mut ctx)?;
        if let Some(u) = ctx.uses.iter().find(|u| !ctx.defined.contains(&u.name)) {
            return Err(ParseError::Undeclared {
                name: u.name.clone(),
                line: u.line,
                col: u.col,
            });
        }
        let tid = threads.len();
        let mut next = 1;
        assign_sids(&mut body, tid, &mut next);
        thread_locals.insert(name.clone(), ctx.defined);
        threads.push(Thread { tid, name, body });
    }

    let final_assert = if p.is_kw("final") {
        p.pos += 1;
        p.expect_punct("{")?;
        p.expect_kw("assert")?;
        p.expect_punct("(")?;
        let (line, col) = p.here();
        let c = p.expr()?;
        p.expect_punct(")")?;
        p.expect_punct(";")?;
        p.expect_punct("}")?;
        expect_type(&c, Ty::Bool, line, col)?;
        for v in c.vars() {
            match v {
                VarRef::Name(n) if globals.contains(n) => {}
                VarRef::Name(n) => {
                    return Err(ParseError::Undeclared {
                        name: n.clone(),
                        line,
                        col,
                    })
                }
                VarRef::Qualified { thread, local } => {
                    let known = thread_locals
                        .get(thread)
                        .is_some_and(|ls| ls.contains(local));
                    if !known {
                        return Err(ParseError::Undeclared {
                            name: format!("{thread}.{local}"),
                            line,
                            col,
                        });
                    }
                }
            }
        }
        Some(c)
    } else {
        None
    };

    if !matches!(p.peek(), Tok::Eof) {
        let what = if p.is_kw("shared") {
            "shared declarations must precede threads".to_string()
        } else {
            format!("unexpected {}", p.describe())
        };
        return p.syntax(what);
    }
    Ok(Program {
        shared,
        threads,
        final_assert,
    })
}
