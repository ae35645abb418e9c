use std::fmt::Write;

use super::{Expr, Program, Statement, StmtKind, UnOp, VarRef};

const PREC_NOT: u8 = 3;
const PREC_NEG: u8 = 7;
const PREC_ATOM: u8 = 8;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(UnOp::Not, _) => PREC_NOT,
        Expr::Unary(UnOp::Neg, _) => PREC_NEG,
        _ => PREC_ATOM,
    }
}

fn wrap(e: &Expr, parens: bool) -> String {
    let s = render_expr(e);
    if parens {
        format!("({s})")
    } else {
        s
    }
}

pub(super) fn render_expr(e: &Expr) -> String {
    match e {
        Expr::Int(v) => v.to_string(),
        Expr::Bool(b) => b.to_string(),
        Expr::Var(VarRef::Name(n)) => n.clone(),
        Expr::Var(VarRef::Qualified { thread, local }) => format!("{thread}.{local}"),
        Expr::Unary(UnOp::Not, a) => format!("!{}", wrap(a, matches!(**a, Expr::Binary(..)))),
        // `-5` would re-parse as a literal, so anything but a plain name gets parens.
        Expr::Unary(UnOp::Neg, a) => format!("-{}", wrap(a, !matches!(**a, Expr::Var(_)))),
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            let left = prec(a) < p || (op.is_comparison() && prec(a) == p);
            let right = prec(b) <= p;
            format!("{} {} {}", wrap(a, left), op.symbol(), wrap(b, right))
        }
    }
}

fn render_block(stmts: &[Statement], depth: usize, out: &mut String) {
    for s in stmts {
        render_stmt(s, depth, out);
    }
}

fn render_stmt(s: &Statement, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match &s.kind {
        StmtKind::Load { local, global } => writeln!(out, "{pad}load {local} = {global};"),
        StmtKind::Store { global, value } => {
            writeln!(out, "{pad}store {global} = {};", render_expr(value))
        }
        StmtKind::Assign { local, value } => {
            writeln!(out, "{pad}{local} = {};", render_expr(value))
        }
        StmtKind::Fence => writeln!(out, "{pad}fence;"),
        StmtKind::Assert(c) => writeln!(out, "{pad}assert({});", render_expr(c)),
        StmtKind::Assume(c) => writeln!(out, "{pad}assume({});", render_expr(c)),
        StmtKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            writeln!(out, "{pad}if ({}) {{", render_expr(cond)).unwrap();
            render_block(then_branch, depth + 1, out);
            if else_branch.is_empty() {
                writeln!(out, "{pad}}}")
            } else {
                writeln!(out, "{pad}}} else {{").unwrap();
                render_block(else_branch, depth + 1, out);
                writeln!(out, "{pad}}}")
            }
        }
        StmtKind::While { cond, body } => {
            writeln!(out, "{pad}while ({}) {{", render_expr(cond)).unwrap();
            render_block(body, depth + 1, out);
            writeln!(out, "{pad}}}")
        }
    }
    .unwrap();
}

pub(super) fn render(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.shared {
        writeln!(out, "shared {} = {};", d.name, d.init).unwrap();
    }
    for t in &p.threads {
        if !out.is_empty() {
            out.push('\n');
        }
        writeln!(out, "thread {} {{", t.name).unwrap();
        render_block(&t.body, 1, &mut out);
        out.push_str("}\n");
    }
    if let Some(c) = &p.final_assert {
        writeln!(out, "\nfinal {{ assert({}); }}", render_expr(c)).unwrap();
    }
    out
}
