//! The concurrent-program DSL: syntax tree, parser, renderer and loop unrolling.
//!
//! Every statement touches at most one shared variable. Shared variables are
//! read with `load` and written with `store`; everything else works on
//! thread-local registers.

mod parse;
mod render;
mod unroll;

use std::fmt;

pub use parse::{parse, ParseError};
pub use unroll::{unroll, CExpr, EvalError, Instruction, Op, UnrolledProgram};

/// Program values. Arithmetic is checked; overflow is an error.
pub type Value = i64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedDecl {
    pub name: String,
    pub init: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub shared: Vec<SharedDecl>,
    pub threads: Vec<Thread>,
    /// Checked once every thread has terminated and all store buffers drained.
    pub final_assert: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thread {
    pub tid: usize,
    pub name: String,
    pub body: Vec<Statement>,
}

/// Statement identity: owning thread plus 1-based preorder position within
/// the thread body. Rendered as `<thread-name>.<ordinal>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId {
    pub tid: usize,
    pub ordinal: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub sid: StmtId,
    pub kind: StmtKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Load {
        local: String,
        global: String,
    },
    Store {
        global: String,
        value: Expr,
    },
    Assign {
        local: String,
        value: Expr,
    },
    Fence,
    Assert(Expr),
    Assume(Expr),
    If {
        cond: Expr,
        then_branch: Vec<Statement>,
        else_branch: Vec<Statement>,
    },
    While {
        cond: Expr,
        body: Vec<Statement>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessType {
    Read,
    Write,
}

impl fmt::Display for AccessType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessType::Read => "read",
            AccessType::Write => "write",
        })
    }
}

/// The single shared-memory access a statement performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Access<'a> {
    pub var: &'a str,
    pub kind: AccessType,
}

impl Statement {
    pub fn access(&self) -> Option<Access<'_>> {
        match &self.kind {
            StmtKind::Load { global, .. } => Some(Access {
                var: global,
                kind: AccessType::Read,
            }),
            StmtKind::Store { global, .. } => Some(Access {
                var: global,
                kind: AccessType::Write,
            }),
            _ => None,
        }
    }

    /// Nested statement blocks, in source order.
    pub fn children(&self) -> impl Iterator<Item = &Statement> {
        let (a, b): (&[Statement], &[Statement]) = match &self.kind {
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => (then_branch, else_branch),
            StmtKind::While { body, .. } => (body, &[]),
            _ => (&[], &[]),
        };
        a.iter().chain(b.iter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }

    fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

/// A variable reference as written in the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarRef {
    /// A bare identifier: a thread local, or a shared variable in `final`.
    Name(String),
    /// `thread.local`, only valid in the `final` assertion.
    Qualified { thread: String, local: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(Value),
    Bool(bool),
    Var(VarRef),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn name(n: &str) -> Expr {
        Expr::Var(VarRef::Name(n.to_string()))
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn negation(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    /// Every variable reference, left to right.
    pub fn vars(&self) -> Vec<&VarRef> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a VarRef>) {
            match e {
                Expr::Int(_) | Expr::Bool(_) => {}
                Expr::Var(v) => out.push(v),
                Expr::Unary(_, a) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

impl Program {
    pub fn thread_by_name(&self, name: &str) -> Option<&Thread> {
        self.threads.iter().find(|t| t.name == name)
    }

    pub fn global_index(&self, name: &str) -> Option<usize> {
        self.shared.iter().position(|d| d.name == name)
    }

    /// All statements of all threads in thread order, each body in preorder.
    pub fn statements(&self) -> Vec<&Statement> {
        fn walk<'a>(stmts: impl Iterator<Item = &'a Statement>, out: &mut Vec<&'a Statement>) {
            for s in stmts {
                out.push(s);
                walk(s.children(), out);
            }
        }
        let mut out = Vec::new();
        for t in &self.threads {
            walk(t.body.iter(), &mut out);
        }
        out
    }

    pub fn statement(&self, sid: StmtId) -> Option<&Statement> {
        self.statements().into_iter().find(|s| s.sid == sid)
    }

    /// `t1.3` style name for a statement id.
    pub fn sid_name(&self, sid: StmtId) -> String {
        match self.threads.get(sid.tid) {
            Some(t) => format!("{}.{}", t.name, sid.ordinal),
            None => format!("?{}.{}", sid.tid, sid.ordinal),
        }
    }

    /// Inverse of [`Program::sid_name`]; `None` if no such statement exists.
    pub fn resolve_sid(&self, text: &str) -> Option<StmtId> {
        let (thread, ord) = text.rsplit_once('.')?;
        let t = self.thread_by_name(thread)?;
        let ordinal: usize = ord.parse().ok()?;
        let sid = StmtId {
            tid: t.tid,
            ordinal,
        };
        self.statement(sid).map(|_| sid)
    }

    /// Thread-local names in order of first definition (load target or assignment).
    pub fn locals_of(&self, tid: usize) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in self.statements() {
            if s.sid.tid != tid {
                continue;
            }
            if let StmtKind::Load { local, .. } | StmtKind::Assign { local, .. } = &s.kind {
                if !out.contains(local) {
                    out.push(local.clone());
                }
            }
        }
        out
    }

    /// Recompute every statement id from the current tree shape.
    pub fn renumber(&mut self) {
        for (tid, t) in self.threads.iter_mut().enumerate() {
            t.tid = tid;
            let mut next = 1;
            assign_sids(&mut t.body, tid, &mut next);
        }
    }
}

pub(crate) fn assign_sids(stmts: &mut [Statement], tid: usize, next: &mut usize) {
    for s in stmts {
        s.sid = StmtId {
            tid,
            ordinal: *next,
        };
        *next += 1;
        match &mut s.kind {
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                assign_sids(then_branch, tid, next);
                assign_sids(else_branch, tid, next);
            }
            StmtKind::While { body, .. } => assign_sids(body, tid, next),
            _ => {}
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render::render(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render::render_expr(self))
    }
}
