//! Surface-syntax printer. Output re-parses to the same tree.

use super::{Function, Stmt, StmtKind};
use crate::model::{Expr, Op, Value};

const PREC_TERNARY: u8 = 0;
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ADD: u8 = 5;
const PREC_MUL: u8 = 6;
const PREC_UNARY: u8 = 7;
const PREC_POW: u8 = 8;
const PREC_ATOM: u8 = 9;

fn binary_info(op: Op) -> Option<(&'static str, u8, u8, u8)> {
    // (token, own precedence, lhs minimum, rhs minimum)
    Some(match op {
        Op::Or => (" or ", PREC_OR, PREC_OR, PREC_AND),
        Op::And => (" and ", PREC_AND, PREC_AND, PREC_NOT),
        Op::Eq => ("==", PREC_CMP, PREC_ADD, PREC_ADD),
        Op::Ne => ("!=", PREC_CMP, PREC_ADD, PREC_ADD),
        Op::Lt => (" < ", PREC_CMP, PREC_ADD, PREC_ADD),
        Op::Le => (" <= ", PREC_CMP, PREC_ADD, PREC_ADD),
        Op::Gt => (" > ", PREC_CMP, PREC_ADD, PREC_ADD),
        Op::Ge => (" >= ", PREC_CMP, PREC_ADD, PREC_ADD),
        Op::Add => (" + ", PREC_ADD, PREC_ADD, PREC_MUL),
        Op::Sub => (" - ", PREC_ADD, PREC_ADD, PREC_MUL),
        Op::Mul => (" * ", PREC_MUL, PREC_MUL, PREC_UNARY),
        Op::Div => (" / ", PREC_MUL, PREC_MUL, PREC_UNARY),
        Op::Mod => (" % ", PREC_MUL, PREC_MUL, PREC_UNARY),
        Op::Pow => (" ** ", PREC_POW, PREC_ATOM, PREC_UNARY),
        _ => return None,
    })
}

fn is_negative_number(v: &Value) -> bool {
    match v {
        Value::Int(i) => *i < 0,
        Value::Float(x) => x.is_sign_negative() && !x.is_nan(),
        _ => false,
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(v) if is_negative_number(v) => PREC_UNARY,
        Expr::Var(_) | Expr::Primed(_) | Expr::Const(_) => PREC_ATOM,
        Expr::Op(Op::Ite, _) => PREC_TERNARY,
        Expr::Op(Op::Not, _) => PREC_NOT,
        Expr::Op(Op::Neg, _) => PREC_UNARY,
        Expr::Op(op, _) => binary_info(*op).map_or(PREC_ATOM, |b| b.1),
    }
}

/// Renders an expression in surface syntax; the conditional prints as
/// `(guard) ? then : else` and primed variables as `x′`.
pub fn format_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, PREC_TERNARY);
    out
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    let own = precedence(e);
    let paren = own < min;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Var(v) => out.push_str(v),
        Expr::Primed(v) => {
            out.push_str(v);
            out.push('\u{2032}');
        }
        Expr::Const(v) => out.push_str(&v.to_string()),
        Expr::Op(op, args) => write_op(out, *op, args),
    }
    if paren {
        out.push(')');
    }
}

fn write_args(out: &mut String, args: &[Expr]) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a, PREC_TERNARY);
    }
}

fn write_op(out: &mut String, op: Op, args: &[Expr]) {
    if let Some((tok, _, lmin, rmin)) = binary_info(op) {
        write_expr(out, &args[0], lmin);
        out.push_str(tok);
        write_expr(out, &args[1], rmin);
        return;
    }
    match op {
        Op::Ite => {
            out.push('(');
            write_expr(out, &args[0], PREC_TERNARY);
            out.push_str(") ? ");
            write_expr(out, &args[1], PREC_TERNARY);
            out.push_str(" : ");
            write_expr(out, &args[2], PREC_TERNARY);
        }
        Op::Not => {
            out.push_str("not ");
            write_expr(out, &args[0], PREC_NOT);
        }
        Op::Neg => {
            out.push('-');
            // `-(1)` keeps the negation from folding into a literal on re-parse.
            let folds = matches!(&args[0], Expr::Const(Value::Int(_) | Value::Float(_)))
                && !is_negative_number(match &args[0] {
                    Expr::Const(v) => v,
                    _ => unreachable!(),
                });
            if folds {
                out.push('(');
                write_expr(out, &args[0], PREC_TERNARY);
                out.push(')');
            } else {
                write_expr(out, &args[0], PREC_UNARY);
            }
        }
        Op::Index => {
            write_expr(out, &args[0], PREC_ATOM);
            out.push('[');
            write_expr(out, &args[1], PREC_TERNARY);
            out.push(']');
        }
        Op::Slice => {
            write_expr(out, &args[0], PREC_ATOM);
            out.push('[');
            if !matches!(args[1], Expr::Const(Value::Undef)) {
                write_expr(out, &args[1], PREC_TERNARY);
            }
            out.push(':');
            if !matches!(args[2], Expr::Const(Value::Undef)) {
                write_expr(out, &args[2], PREC_TERNARY);
            }
            out.push(']');
        }
        Op::MakeList => {
            out.push('[');
            write_args(out, args);
            out.push(']');
        }
        _ => {
            out.push_str(op.name());
            out.push('(');
            write_args(out, args);
            out.push(')');
        }
    }
}

/// Renders a function back to source with four-space indentation.
pub fn print_function(f: &Function) -> String {
    let mut out = format!("def {}({}):\n", f.name, f.params.join(", "));
    write_block(&mut out, &f.body, 1);
    out
}

fn write_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    if stmts.is_empty() {
        indent(out, depth);
        out.push_str("pass\n");
    }
    for s in stmts {
        write_stmt(out, s, depth);
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Assign(v, e) => {
            out.push_str(&format!("{v} = {}\n", format_expr(e)));
        }
        StmtKind::Return(e) => {
            out.push_str(&format!("return {}\n", format_expr(e)));
        }
        StmtKind::Pass => out.push_str("pass\n"),
        StmtKind::If(c, then, els) => {
            out.push_str(&format!("if {}:\n", format_expr(c)));
            write_block(out, then, depth + 1);
            if !els.is_empty() {
                indent(out, depth);
                out.push_str("else:\n");
                write_block(out, els, depth + 1);
            }
        }
        StmtKind::While(c, body) => {
            out.push_str(&format!("while {}:\n", format_expr(c)));
            write_block(out, body, depth + 1);
        }
        StmtKind::For(v, a, b, body) => {
            out.push_str(&format!("for {v} in range({}, {}):\n", format_expr(a), format_expr(b)));
            write_block(out, body, depth + 1);
        }
    }
}
