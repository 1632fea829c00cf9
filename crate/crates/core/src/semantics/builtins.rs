//! Total builtin functions. Every erroneous input yields Null.

use std::sync::Arc;

use crate::lang::value::fmt_real;
use crate::lang::{Builtin, Expr, Value};

const MAX_VEC: i64 = 10_000_000;

fn real(r: f64) -> Value {
    if r.is_finite() {
        Value::Real(r)
    } else {
        Value::Null
    }
}

fn arith(b: Builtin, x: &Value, y: &Value) -> Value {
    match (x, y) {
        (Value::Int(a), Value::Int(c)) => match b {
            Builtin::Add => a.checked_add(*c).map_or(Value::Null, Value::Int),
            Builtin::Sub => a.checked_sub(*c).map_or(Value::Null, Value::Int),
            Builtin::Mul => a.checked_mul(*c).map_or(Value::Null, Value::Int),
            Builtin::Div if *c != 0 => real(*a as f64 / *c as f64),
            Builtin::Mod if *c != 0 => a.checked_rem_euclid(*c).map_or(Value::Null, Value::Int),
            Builtin::Min => Value::Int(*a.min(c)),
            Builtin::Max => Value::Int(*a.max(c)),
            Builtin::Pow if *c >= 0 => u32::try_from(*c)
                .ok()
                .and_then(|e| a.checked_pow(e))
                .map_or(Value::Null, Value::Int),
            Builtin::Pow => real((*a as f64).powf(*c as f64)),
            _ => Value::Null,
        },
        _ => {
            let (Some(a), Some(c)) = (x.as_f64(), y.as_f64()) else {
                return Value::Null;
            };
            match b {
                Builtin::Add => real(a + c),
                Builtin::Sub => real(a - c),
                Builtin::Mul => real(a * c),
                Builtin::Div if c != 0.0 => real(a / c),
                Builtin::Mod if c != 0.0 => real(a.rem_euclid(c)),
                Builtin::Min => real(a.min(c)),
                Builtin::Max => real(a.max(c)),
                Builtin::Pow => real(a.powf(c)),
                _ => Value::Null,
            }
        }
    }
}

fn compare(b: Builtin, x: &Value, y: &Value) -> Value {
    let ord = match (x, y) {
        (Value::Int(a), Value::Int(c)) => a.cmp(c),
        (Value::Str(a), Value::Str(c)) => a.cmp(c),
        _ => match (x.as_f64(), y.as_f64()) {
            (Some(a), Some(c)) => match a.partial_cmp(&c) {
                Some(o) => o,
                None => return Value::Null,
            },
            _ => return Value::Null,
        },
    };
    Value::Bool(match b {
        Builtin::Lt => ord.is_lt(),
        Builtin::Le => ord.is_le(),
        Builtin::Gt => ord.is_gt(),
        Builtin::Ge => ord.is_ge(),
        _ => return Value::Null,
    })
}

fn to_str(v: &Value) -> Option<String> {
    match v {
        Value::Int(i) => Some(i.to_string()),
        Value::Real(r) => Some(fmt_real(*r)),
        Value::Bool(b) => Some(b.to_string()),
        Value::Str(s) => Some(s.to_string()),
        _ => None,
    }
}

fn add(x: &Value, y: &Value) -> Value {
    match (x, y) {
        (Value::Str(a), Value::Str(c)) => Value::Str(Arc::from(format!("{a}{c}"))),
        (Value::Str(a), Value::Int(c)) => Value::Str(Arc::from(format!("{a}{c}"))),
        (Value::Int(a), Value::Str(c)) => Value::Str(Arc::from(format!("{a}{c}"))),
        _ => arith(Builtin::Add, x, y),
    }
}

fn vec_len(n: &Value) -> Option<usize> {
    match n {
        Value::Int(n) if (0..=MAX_VEC).contains(n) => Some(*n as usize),
        _ => None,
    }
}

pub fn apply1(b: Builtin, x: &Value) -> Value {
    if x.is_null() {
        return Value::Null;
    }
    match b {
        Builtin::Neg => match x {
            Value::Int(i) => i.checked_neg().map_or(Value::Null, Value::Int),
            Value::Real(r) => Value::Real(-r),
            _ => Value::Null,
        },
        Builtin::Not => x.truthiness().map_or(Value::Null, |t| Value::Bool(!t)),
        Builtin::Str => to_str(x).map_or(Value::Null, |s| Value::Str(Arc::from(s))),
        Builtin::Abs => match x {
            Value::Int(i) => i.checked_abs().map_or(Value::Null, Value::Int),
            Value::Real(r) => Value::Real(r.abs()),
            _ => Value::Null,
        },
        Builtin::Exp => x.as_f64().map_or(Value::Null, |r| real(r.exp())),
        Builtin::Log => x.as_f64().filter(|r| *r > 0.0).map_or(Value::Null, |r| real(r.ln())),
        Builtin::Sqrt => x.as_f64().filter(|r| *r >= 0.0).map_or(Value::Null, |r| real(r.sqrt())),
        Builtin::Floor => match x {
            Value::Int(i) => Value::Int(*i),
            Value::Real(r) if r.is_finite() && r.abs() < 9.0e15 => Value::Int(r.floor() as i64),
            _ => Value::Null,
        },
        Builtin::Len => match x {
            Value::Vector(v) => Value::Int(v.len() as i64),
            Value::Str(s) => Value::Int(s.chars().count() as i64),
            _ => Value::Null,
        },
        Builtin::Sum => match x {
            Value::Vector(v) => real(v.iter().sum()),
            _ => Value::Null,
        },
        Builtin::Zeros => vec_len(x).map_or(Value::Null, |n| Value::vector(vec![0.0; n])),
        _ => Value::Null,
    }
}

pub fn apply2(b: Builtin, x: &Value, y: &Value) -> Value {
    if x.is_null() || y.is_null() {
        return Value::Null;
    }
    match b {
        Builtin::Add => add(x, y),
        Builtin::Sub | Builtin::Mul | Builtin::Div | Builtin::Mod | Builtin::Min | Builtin::Max | Builtin::Pow => {
            arith(b, x, y)
        }
        Builtin::Eq => Value::Bool(x == y),
        Builtin::Ne => Value::Bool(x != y),
        Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => compare(b, x, y),
        Builtin::And => match (x.truthiness(), y.truthiness()) {
            (Some(a), Some(c)) => Value::Bool(a && c),
            _ => Value::Null,
        },
        Builtin::Or => match (x.truthiness(), y.truthiness()) {
            (Some(a), Some(c)) => Value::Bool(a || c),
            _ => Value::Null,
        },
        Builtin::Index => match (x, y) {
            (Value::Vector(v), Value::Int(i)) if *i >= 0 && (*i as usize) < v.len() => Value::Real(v[*i as usize]),
            _ => Value::Null,
        },
        Builtin::Append => match (x, y.as_f64()) {
            (Value::Vector(v), Some(r)) if (v.len() as i64) < MAX_VEC => {
                let mut w = Vec::with_capacity(v.len() + 1);
                w.extend_from_slice(v);
                w.push(r);
                Value::vector(w)
            }
            _ => Value::Null,
        },
        Builtin::Concat => match (x, y) {
            (Value::Vector(a), Value::Vector(c)) if ((a.len() + c.len()) as i64) <= MAX_VEC => {
                let mut w = Vec::with_capacity(a.len() + c.len());
                w.extend_from_slice(a);
                w.extend_from_slice(c);
                Value::vector(w)
            }
            _ => Value::Null,
        },
        Builtin::Fill => match (vec_len(x), y.as_f64()) {
            (Some(n), Some(r)) => Value::vector(vec![r; n]),
            _ => Value::Null,
        },
        _ => Value::Null,
    }
}

pub fn apply3(b: Builtin, x: &Value, y: &Value, z: &Value) -> Value {
    match b {
        // Only the condition must be defined.
        Builtin::Ite => match x.truthiness() {
            Some(true) => y.clone(),
            Some(false) => z.clone(),
            None => Value::Null,
        },
        Builtin::Slice => match (x, y, z) {
            (Value::Vector(v), Value::Int(s), Value::Int(n)) if *s >= 0 && *n >= 0 => {
                let (s, n) = (*s as usize, *n as usize);
                match s.checked_add(n) {
                    Some(e) if e <= v.len() => Value::vector(v[s..e].to_vec()),
                    _ => Value::Null,
                }
            }
            _ => Value::Null,
        },
        _ => Value::Null,
    }
}

pub fn apply(b: Builtin, args: &[Value]) -> Value {
    match (b, args) {
        (Builtin::VecLit, _) => {
            let mut out = Vec::with_capacity(args.len());
            for a in args {
                match a.as_f64() {
                    Some(r) => out.push(r),
                    None => return Value::Null,
                }
            }
            Value::vector(out)
        }
        (_, [x]) => apply1(b, x),
        (_, [x, y]) => apply2(b, x, y),
        (_, [x, y, z]) => apply3(b, x, y, z),
        _ => Value::Null,
    }
}

/// Evaluates an expression against slot-indexed variable values.
pub fn eval_expr(vals: &[Value], e: &Expr) -> Value {
    match e {
        Expr::Const(v) => v.clone(),
        Expr::Var(v) => vals.get(v.slot as usize).cloned().unwrap_or(Value::Null),
        Expr::Call(b, args) => match args.as_slice() {
            [x] if *b != Builtin::VecLit => apply1(*b, &eval_expr(vals, x)),
            [x, y] if *b != Builtin::VecLit => apply2(*b, &eval_expr(vals, x), &eval_expr(vals, y)),
            [x, y, z] if *b != Builtin::VecLit => {
                apply3(*b, &eval_expr(vals, x), &eval_expr(vals, y), &eval_expr(vals, z))
            }
            _ => {
                let vs: Vec<Value> = args.iter().map(|a| eval_expr(vals, a)).collect();
                apply(*b, &vs)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_expr;

    fn ev(src: &str, vals: &[Value]) -> Value {
        eval_expr(vals, &parse_expr(src).unwrap())
    }

    #[test]
    fn address_expression() {
        // `i` is slot 0 in a standalone expression.
        assert_eq!(ev("\"b_\" + str(i)", &[Value::Int(3)]), Value::str("b_3"));
        assert_eq!(ev("\"b_\" + i", &[Value::Int(3)]), Value::str("b_3"));
    }

    #[test]
    fn errors_are_null() {
        assert!(ev("1 / 0", &[]).is_null());
        assert!(ev("x + 1", &[Value::Null]).is_null());
        assert!(ev("[1.0, 2.0][5]", &[]).is_null());
        assert!(ev("log(0)", &[]).is_null());
        assert!(ev("\"a\" < 1", &[]).is_null());
    }

    #[test]
    fn promotion() {
        assert_eq!(ev("1 + 0.5", &[]), Value::Real(1.5));
        assert_eq!(ev("1 == 1.0", &[]), Value::Bool(true));
        assert_eq!(ev("1 == \"1\"", &[]), Value::Bool(false));
        assert_eq!(ev("7 / 2", &[]), Value::Real(3.5));
        assert_eq!(ev("7 % 2", &[]), Value::Int(1));
    }

    #[test]
    fn vectors_are_functional() {
        assert_eq!(ev("append([1.0], 2)", &[]), Value::vector(vec![1.0, 2.0]));
        assert_eq!(ev("slice(concat([1.0, 2.0], [3.0]), 1, 2)", &[]), Value::vector(vec![2.0, 3.0]));
        assert_eq!(ev("len(fill(3, 0.5))", &[]), Value::Int(3));
        assert_eq!(ev("true ? 1 : x", &[Value::Null]), Value::Int(1));
    }
}
