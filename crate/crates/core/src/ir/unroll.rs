use thiserror::Error;

use super::{AccessType, BinOp, Expr, Program, Statement, StmtId, StmtKind, UnOp, Value, VarRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("arithmetic overflow evaluating `{0}`")]
    Overflow(String),
}

/// An expression with every name resolved to a slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CExpr {
    Const(Value),
    Local(usize),
    Global(usize),
    ThreadLocal { tid: usize, local: usize },
    Unary(UnOp, Box<CExpr>),
    Binary(BinOp, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    /// Evaluates with booleans encoded as 0/1. `thread_local` reads another
    /// thread's register and is only consulted by final assertions.
    pub fn eval(
        &self,
        locals: &[Value],
        memory: &[Value],
        thread_local: &dyn Fn(usize, usize) -> Value,
    ) -> Result<Value, EvalError> {
        let overflow = || EvalError::Overflow(format!("{self:?}"));
        Ok(match self {
            CExpr::Const(v) => *v,
            CExpr::Local(i) => locals[*i],
            CExpr::Global(i) => memory[*i],
            CExpr::ThreadLocal { tid, local } => thread_local(*tid, *local),
            CExpr::Unary(UnOp::Neg, a) => a
                .eval(locals, memory, thread_local)?
                .checked_neg()
                .ok_or_else(overflow)?,
            CExpr::Unary(UnOp::Not, a) => (a.eval(locals, memory, thread_local)? == 0) as Value,
            CExpr::Binary(BinOp::And, a, b) => {
                (a.eval(locals, memory, thread_local)? != 0
                    && b.eval(locals, memory, thread_local)? != 0) as Value
            }
            CExpr::Binary(BinOp::Or, a, b) => {
                (a.eval(locals, memory, thread_local)? != 0
                    || b.eval(locals, memory, thread_local)? != 0) as Value
            }
            CExpr::Binary(op, a, b) => {
                let x = a.eval(locals, memory, thread_local)?;
                let y = b.eval(locals, memory, thread_local)?;
                match op {
                    BinOp::Add => x.checked_add(y).ok_or_else(overflow)?,
                    BinOp::Sub => x.checked_sub(y).ok_or_else(overflow)?,
                    BinOp::Mul => x.checked_mul(y).ok_or_else(overflow)?,
                    BinOp::Eq => (x == y) as Value,
                    BinOp::Ne => (x != y) as Value,
                    BinOp::Lt => (x < y) as Value,
                    BinOp::Le => (x <= y) as Value,
                    BinOp::Gt => (x > y) as Value,
                    BinOp::Ge => (x >= y) as Value,
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        })
    }

    /// Convenience for thread-scope expressions, which never read memory.
    pub fn eval_local(&self, locals: &[Value]) -> Result<Value, EvalError> {
        self.eval(locals, &[], &|_, _| 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Load {
        local: usize,
        var: usize,
    },
    Store {
        var: usize,
        value: CExpr,
    },
    Assign {
        local: usize,
        value: CExpr,
    },
    Fence,
    Assert(CExpr),
    Assume(CExpr),
    /// Continue at the next instruction if `cond` holds, else jump to `target`.
    BranchUnless {
        cond: CExpr,
        target: usize,
    },
    Jump {
        target: usize,
    },
}

/// A dynamic instance of a statement. Jumps only go forward, so within a
/// thread `po_index` order is the execution order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    pub iid: usize,
    pub tid: usize,
    pub sid: StmtId,
    pub po_index: usize,
    pub op: Op,
}

impl Instruction {
    /// The (shared variable, access type) this instruction performs, if any.
    pub fn access(&self) -> Option<(usize, AccessType)> {
        match self.op {
            Op::Load { var, .. } => Some((var, AccessType::Read)),
            Op::Store { var, .. } => Some((var, AccessType::Write)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UnrolledProgram {
    pub program: Program,
    pub unwind: usize,
    /// All instructions; `instructions[iid].iid == iid`.
    pub instructions: Vec<Instruction>,
    /// Per thread, the iids of its instructions in po order.
    pub threads: Vec<Vec<usize>>,
    pub locals: Vec<Vec<String>>,
    pub final_assert: Option<CExpr>,
}

impl UnrolledProgram {
    pub fn instruction(&self, iid: usize) -> Option<&Instruction> {
        self.instructions.get(iid)
    }

    /// The `pc`-th instruction of thread `tid`.
    pub fn at(&self, tid: usize, pc: usize) -> &Instruction {
        &self.instructions[self.threads[tid][pc]]
    }

    pub fn thread_len(&self, tid: usize) -> usize {
        self.threads[tid].len()
    }

    pub fn num_globals(&self) -> usize {
        self.program.shared.len()
    }

    pub fn global_name(&self, var: usize) -> &str {
        &self.program.shared[var].name
    }

    pub fn initial_memory(&self) -> Vec<Value> {
        self.program.shared.iter().map(|d| d.init).collect()
    }
}

struct Lowering<'p> {
    program: &'p Program,
    tid: usize,
    locals: &'p [String],
    unwind: usize,
    ops: Vec<(StmtId, Op)>,
}

impl<'p> Lowering<'p> {
    fn expr(&self, e: &Expr) -> CExpr {
        match e {
            Expr::Int(v) => CExpr::Const(*v),
            Expr::Bool(b) => CExpr::Const(*b as Value),
            Expr::Var(VarRef::Name(n)) => match self.locals.iter().position(|l| l == n) {
                Some(i) => CExpr::Local(i),
                None => CExpr::Global(self.program.global_index(n).expect("validated by parser")),
            },
            Expr::Var(VarRef::Qualified { .. }) => {
                unreachable!("qualified names only appear in final")
            }
            Expr::Unary(op, a) => CExpr::Unary(*op, Box::new(self.expr(a))),
            Expr::Binary(op, a, b) => {
                CExpr::Binary(*op, Box::new(self.expr(a)), Box::new(self.expr(b)))
            }
        }
    }

    fn local(&self, n: &str) -> usize {
        self.locals
            .iter()
            .position(|l| l == n)
            .expect("locals collected from the same tree")
    }

    fn global(&self, n: &str) -> usize {
        self.program.global_index(n).expect("validated by parser")
    }

    fn push(&mut self, sid: StmtId, op: Op) -> usize {
        self.ops.push((sid, op));
        self.ops.len() - 1
    }

    fn patch(&mut self, at: usize) {
        let here = self.ops.len();
        match &mut self.ops[at].1 {
            Op::BranchUnless { target, .. } | Op::Jump { target } => *target = here,
            _ => unreachable!(),
        }
    }

    fn block(&mut self, stmts: &[Statement]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Statement) {
        let sid = s.sid;
        match &s.kind {
            StmtKind::Load { local, global } => {
                let op = Op::Load {
                    local: self.local(local),
                    var: self.global(global),
                };
                self.push(sid, op);
            }
            StmtKind::Store { global, value } => {
                let op = Op::Store {
                    var: self.global(global),
                    value: self.expr(value),
                };
                self.push(sid, op);
            }
            StmtKind::Assign { local, value } => {
                let op = Op::Assign {
                    local: self.local(local),
                    value: self.expr(value),
                };
                self.push(sid, op);
            }
            StmtKind::Fence => {
                self.push(sid, Op::Fence);
            }
            StmtKind::Assert(c) => {
                let op = Op::Assert(self.expr(c));
                self.push(sid, op);
            }
            StmtKind::Assume(c) => {
                let op = Op::Assume(self.expr(c));
                self.push(sid, op);
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let cond = self.expr(cond);
                let branch = self.push(
                    sid,
                    Op::BranchUnless {
                        cond,
                        target: usize::MAX,
                    },
                );
                self.block(then_branch);
                if else_branch.is_empty() {
                    self.patch(branch);
                } else {
                    let skip = self.push(sid, Op::Jump { target: usize::MAX });
                    self.patch(branch);
                    self.block(else_branch);
                    self.patch(skip);
                }
            }
            StmtKind::While { cond, body } => {
                let cond = self.expr(cond);
                let mut exits = Vec::with_capacity(self.unwind);
                for _ in 0..self.unwind {
                    exits.push(self.push(
                        sid,
                        Op::BranchUnless {
                            cond: cond.clone(),
                            target: usize::MAX,
                        },
                    ));
                    self.block(body);
                }
                // Iterations past the unwinding bound are cut.
                self.push(sid, Op::Assume(CExpr::Unary(UnOp::Not, Box::new(cond))));
                for e in exits {
                    self.patch(e);
                }
            }
        }
    }
}

/// Unwind every loop `unwind` times and flatten each thread into a
/// straight-line sequence with forward jumps.
pub fn unroll(p: &Program, unwind: usize) -> UnrolledProgram {
    assert!(unwind >= 1, "unwind bound must be positive");
    let mut instructions = Vec::new();
    let mut threads = Vec::new();
    let mut locals = Vec::new();
    for t in &p.threads {
        let names = p.locals_of(t.tid);
        let mut lw = Lowering {
            program: p,
            tid: t.tid,
            locals: &names,
            unwind,
            ops: Vec::new(),
        };
        lw.block(&t.body);
        let tid = lw.tid;
        let base = instructions.len();
        let mut ids = Vec::with_capacity(lw.ops.len());
        for (po_index, (sid, op)) in lw.ops.into_iter().enumerate() {
            // jump targets are thread-relative pcs
            if let Op::BranchUnless { target, .. } | Op::Jump { target } = &op {
                debug_assert!(*target > po_index);
            }
            let iid = base + po_index;
            ids.push(iid);
            instructions.push(Instruction {
                iid,
                tid,
                sid,
                po_index,
                op,
            });
        }
        threads.push(ids);
        locals.push(names);
    }
    let final_assert = p.final_assert.as_ref().map(|c| lower_final(p, &locals, c));
    UnrolledProgram {
        program: p.clone(),
        unwind,
        instructions,
        threads,
        locals,
        final_assert,
    }
}

fn lower_final(p: &Program, locals: &[Vec<String>], e: &Expr) -> CExpr {
    let rec = |x: &Expr| Box::new(lower_final(p, locals, x));
    match e {
        Expr::Int(v) => CExpr::Const(*v),
        Expr::Bool(b) => CExpr::Const(*b as Value),
        Expr::Var(VarRef::Name(n)) => {
            CExpr::Global(p.global_index(n).expect("validated by parser"))
        }
        Expr::Var(VarRef::Qualified { thread, local }) => {
            let tid = p.thread_by_name(thread).expect("validated by parser").tid;
            let local = locals[tid]
                .iter()
                .position(|l| l == local)
                .expect("validated by parser");
            CExpr::ThreadLocal { tid, local }
        }
        Expr::Unary(op, a) => CExpr::Unary(*op, rec(a)),
        Expr::Binary(op, a, b) => CExpr::Binary(*op, rec(a), rec(b)),
    }
}
