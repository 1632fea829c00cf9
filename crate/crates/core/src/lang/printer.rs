use std::fmt::Write;

use super::ast::{Builtin, Expr, Program, Stmt};
use super::value::{fmt_real, Value};

const TERNARY: u8 = 1;
const OR: u8 = 2;
const AND: u8 = 3;
const NOT: u8 = 4;
const CMP: u8 = 5;
const ADD: u8 = 6;
const MUL: u8 = 7;
const UNARY: u8 = 8;
const POSTFIX: u8 = 9;
const ATOM: u8 = 10;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Const(Value::Int(i)) if *i < 0 => UNARY,
        Expr::Const(Value::Real(r)) if r.is_sign_negative() => UNARY,
        Expr::Const(_) | Expr::Var(_) => ATOM,
        Expr::Call(b, _) => match b {
            Builtin::Ite => TERNARY,
            Builtin::Or => OR,
            Builtin::And => AND,
            Builtin::Not => NOT,
            Builtin::Eq | Builtin::Ne | Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => CMP,
            Builtin::Add | Builtin::Sub => ADD,
            Builtin::Mul | Builtin::Div | Builtin::Mod => MUL,
            Builtin::Neg => UNARY,
            Builtin::Index => POSTFIX,
            _ => ATOM,
        },
    }
}

fn write_at(out: &mut String, e: &Expr, min: u8) {
    if level(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

pub fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Const(v) => write_const(out, v),
        Expr::Var(v) => out.push_str(&v.name),
        Expr::Call(b, args) => {
            if let Some(sym) = b.infix_symbol() {
                let l = level(e);
                let (lmin, rmin) = if l == CMP { (l + 1, l + 1) } else { (l, l + 1) };
                write_at(out, &args[0], lmin);
                let _ = write!(out, " {sym} ");
                write_at(out, &args[1], rmin);
                return;
            }
            match b {
                Builtin::Ite => {
                    write_at(out, &args[0], OR);
                    out.push_str(" ? ");
                    write_at(out, &args[1], TERNARY);
                    out.push_str(" : ");
                    write_at(out, &args[2], TERNARY);
                }
                Builtin::Not => {
                    out.push_str("not ");
                    write_at(out, &args[0], NOT);
                }
                Builtin::Neg => {
                    out.push('-');
                    // Keep `-(1)` from re-reading as a folded constant.
                    let min = if matches!(args[0], Expr::Const(Value::Int(_) | Value::Real(_))) { ATOM + 1 } else { UNARY };
                    write_at(out, &args[0], min);
                }
                Builtin::Index => {
                    write_at(out, &args[0], POSTFIX);
                    out.push('[');
                    write_expr(out, &args[1]);
                    out.push(']');
                }
                Builtin::VecLit => {
                    out.push('[');
                    write_list(out, args);
                    out.push(']');
                }
                _ => {
                    out.push_str(b.call_name().unwrap_or("?"));
                    out.push('(');
                    write_list(out, args);
                    out.push(')');
                }
            }
        }
    }
}

fn write_list(out: &mut String, args: &[Expr]) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
}

fn write_const(out: &mut String, v: &Value) {
    match v {
        Value::Real(r) => out.push_str(&fmt_real(*r)),
        Value::Vector(xs) => {
            out.push('[');
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&fmt_real(*x));
            }
            out.push(']');
        }
        other => {
            let _ = write!(out, "{other}");
        }
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

/// One-line rendering of a simple statement, used for CFG labels.
pub fn stmt_head(s: &Stmt) -> String {
    match s {
        Stmt::Skip => "skip".into(),
        Stmt::Assign { var, expr, .. } => format!("{} = {}", var.name, expr_to_string(expr)),
        Stmt::Sample { var, addr, dist, args, .. } => {
            let mut out = format!("{} = sample({}, {}(", var.name, expr_to_string(addr), dist.name());
            write_list(&mut out, args);
            out.push_str("))");
            out
        }
        Stmt::If { cond, .. } => format!("if {} then", expr_to_string(cond)),
        Stmt::While { cond, .. } => format!("while {} do", expr_to_string(cond)),
        Stmt::Seq(..) => "...".into(),
    }
}

fn write_stmt(out: &mut String, s: &Stmt, indent: usize) {
    let items = s.flatten();
    if items.is_empty() {
        let _ = writeln!(out, "{:indent$}skip", "");
        return;
    }
    for item in items {
        match item {
            Stmt::If { then, els, .. } => {
                let _ = writeln!(out, "{:indent$}{}", "", stmt_head(item));
                write_stmt(out, then, indent + 4);
                if !els.flatten().is_empty() {
                    let _ = writeln!(out, "{:indent$}else", "");
                    write_stmt(out, els, indent + 4);
                }
            }
            Stmt::While { body, .. } => {
                let _ = writeln!(out, "{:indent$}{}", "", stmt_head(item));
                write_stmt(out, body, indent + 4);
            }
            _ => {
                let _ = writeln!(out, "{:indent$}{}", "", stmt_head(item));
            }
        }
    }
}

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    write_stmt(&mut out, &p.body, 0);
    while out.ends_with('\n') {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::{parse, parse_expr};

    #[test]
    fn trivial_programs() {
        assert_eq!(pretty_print(&parse("skip").unwrap()), "skip");
        assert_eq!(pretty_print(&parse("x = 1").unwrap()), "x = 1");
    }

    #[test]
    fn parenthesisation_round_trips() {
        for src in [
            "a - (b - c)",
            "(a - b) - c",
            "-(x + 1)",
            "-(1)",
            "(a ? b : c) ? d : e",
            "not (a and b) or c",
            "(a < b) == c",
            "[1, 2.5, x][i + 1]",
            "\"x_\" + str(n)",
            "\"q\\\"uote\\n\"",
            "-(2)[0]",
        ] {
            let e = parse_expr(src).unwrap();
            let printed = expr_to_string(&e);
            assert_eq!(parse_expr(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
