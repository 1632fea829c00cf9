use std::collections::BTreeSet;
use std::sync::Arc;

use super::value::Value;

/// Name of the reserved density accumulator in `Program::declared_vars`.
pub const DENSITY_VAR: &str = "__density__";

/// Source line of a statement. Positions never take part in equality so
/// that a reparsed program compares equal to the original.
#[derive(Clone, Copy, Debug, Default, Eq)]
pub struct Line(pub u32);

impl PartialEq for Line {
    fn eq(&self, _: &Line) -> bool {
        true
    }
}

impl std::hash::Hash for Line {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Arc<str>,
    /// Index into the program state; assigned by the parser.
    pub slot: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Neg,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Ite,
    Index,
    VecLit,
    Str,
    Abs,
    Exp,
    Log,
    Sqrt,
    Pow,
    Min,
    Max,
    Floor,
    Len,
    Sum,
    Append,
    Concat,
    Slice,
    Zeros,
    Fill,
}

impl Builtin {
    /// Function-call spellings. Operators are handled by the parser.
    pub const NAMED: &'static [(&'static str, Builtin)] = &[
        ("str", Builtin::Str),
        ("string", Builtin::Str),
        ("abs", Builtin::Abs),
        ("exp", Builtin::Exp),
        ("log", Builtin::Log),
        ("sqrt", Builtin::Sqrt),
        ("pow", Builtin::Pow),
        ("min", Builtin::Min),
        ("max", Builtin::Max),
        ("floor", Builtin::Floor),
        ("len", Builtin::Len),
        ("sum", Builtin::Sum),
        ("append", Builtin::Append),
        ("concat", Builtin::Concat),
        ("slice", Builtin::Slice),
        ("zeros", Builtin::Zeros),
        ("fill", Builtin::Fill),
    ];

    pub fn from_name(name: &str) -> Option<Builtin> {
        Builtin::NAMED.iter().find(|(n, _)| *n == name).map(|(_, b)| *b)
    }

    /// Canonical call name for named builtins.
    pub fn call_name(self) -> Option<&'static str> {
        Builtin::NAMED.iter().find(|(_, b)| *b == self).map(|(n, _)| *n)
    }

    /// Expected argument count; `None` means variadic.
    pub fn arity(self) -> Option<usize> {
        use Builtin::*;
        match self {
            Neg | Not | Str | Abs | Exp | Log | Sqrt | Floor | Len | Sum | Zeros => Some(1),
            Ite | Slice => Some(3),
            VecLit => None,
            _ => Some(2),
        }
    }

    pub fn infix_symbol(self) -> Option<&'static str> {
        use Builtin::*;
        Some(match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Eq => "==",
            Ne => "!=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            And => "and",
            Or => "or",
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistKind {
    Normal,
    Uniform,
    Bernoulli,
    Poisson,
    InverseGamma,
    Gamma,
    Beta,
    Exponential,
    Categorical,
    Dirichlet,
    DiscreteUniform,
}

impl DistKind {
    pub const ALL: &'static [DistKind] = &[
        DistKind::Normal,
        DistKind::Uniform,
        DistKind::Bernoulli,
        DistKind::Poisson,
        DistKind::InverseGamma,
        DistKind::Gamma,
        DistKind::Beta,
        DistKind::Exponential,
        DistKind::Categorical,
        DistKind::Dirichlet,
        DistKind::DiscreteUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistKind::Normal => "Normal",
            DistKind::Uniform => "Uniform",
            DistKind::Bernoulli => "Bernoulli",
            DistKind::Poisson => "Poisson",
            DistKind::InverseGamma => "InverseGamma",
            DistKind::Gamma => "Gamma",
            DistKind::Beta => "Beta",
            DistKind::Exponential => "Exponential",
            DistKind::Categorical => "Categorical",
            DistKind::Dirichlet => "Dirichlet",
            DistKind::DiscreteUniform => "DiscreteUniform",
        }
    }

    /// Accepts canonical names and the aliases used in the listings.
    pub fn from_name(name: &str) -> Option<DistKind> {
        let alias = match name {
            "Norm" => Some(DistKind::Normal),
            "Bern" => Some(DistKind::Bernoulli),
            "Cat" => Some(DistKind::Categorical),
            "InvGamma" => Some(DistKind::InverseGamma),
            "Exp" => Some(DistKind::Exponential),
            _ => None,
        };
        alias.or_else(|| DistKind::ALL.iter().copied().find(|d| d.name() == name))
    }

    pub fn arity(self) -> usize {
        match self {
            DistKind::Bernoulli
            | DistKind::Poisson
            | DistKind::Exponential
            | DistKind::Categorical
            | DistKind::Dirichlet => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(Value),
    Var(Var),
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    pub fn free_vars(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        self.visit_vars(&mut |v| {
            out.insert(v.name.clone());
        });
        out
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out: Vec<Var> = Vec::new();
        self.visit_vars(&mut |v| {
            if !out.contains(v) {
                out.push(v.clone());
            }
        });
        out
    }

    pub fn visit_vars(&self, f: &mut impl FnMut(&Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(v),
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_vars(f)),
        }
    }

    pub fn as_const(&self) -> Option<&Value> {
        match self {
            Expr::Const(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Skip,
    Assign {
        var: Var,
        expr: Expr,
        line: Line,
    },
    Seq(Box<Stmt>, Box<Stmt>),
    If {
        cond: Expr,
        then: Box<Stmt>,
        els: Box<Stmt>,
        line: Line,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
        line: Line,
    },
    Sample {
        var: Var,
        addr: Expr,
        dist: DistKind,
        args: Vec<Expr>,
        line: Line,
    },
}

impl Stmt {
    /// Right-nested sequence of the given statements; empty gives Skip.
    pub fn seq(mut stmts: Vec<Stmt>) -> Stmt {
        let Some(mut acc) = stmts.pop() else {
            return Stmt::Skip;
        };
        while let Some(s) = stmts.pop() {
            acc = Stmt::Seq(Box::new(s), Box::new(acc));
        }
        acc
    }

    /// Flattened statement list of a sequence.
    pub fn flatten(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        fn go<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
            match s {
                Stmt::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Stmt::Skip => {}
                _ => out.push(s),
            }
        }
        go(self, &mut out);
        out
    }

    fn collect_assigned(&self, out: &mut BTreeSet<Arc<str>>) {
        match self {
            Stmt::Skip => {}
            Stmt::Assign { var, .. } | Stmt::Sample { var, .. } => {
                out.insert(var.name.clone());
            }
            Stmt::Seq(a, b) => {
                a.collect_assigned(out);
                b.collect_assigned(out);
            }
            Stmt::If { then, els, .. } => {
                then.collect_assigned(out);
                els.collect_assigned(out);
            }
            Stmt::While { body, .. } => body.collect_assigned(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub body: Stmt,
    /// Every variable named in the program, indexed by slot.
    pub vars: Vec<Arc<str>>,
}

impl Program {
    pub fn slot_count(&self) -> usize {
        self.vars.len()
    }

    pub fn slot_of(&self, name: &str) -> Option<u32> {
        self.vars.iter().position(|v| &**v == name).map(|i| i as u32)
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.slot_of(name).map(|slot| Var { name: Arc::from(name), slot })
    }

    /// Value of the first top-level constant assignment to `name`.
    pub fn constant(&self, name: &str) -> Option<&Value> {
        fn go<'a>(s: &'a Stmt, name: &str) -> Option<&'a Value> {
            match s {
                Stmt::Seq(a, b) => go(a, name).or_else(|| go(b, name)),
                Stmt::Assign { var, expr, .. } if &*var.name == name && expr.as_const().is_some() => expr.as_const(),
                _ => None,
            }
        }
        go(&self.body, name)
    }

    /// Copy with the first top-level constant assignment to `name` replaced
    /// by `value`; `None` if there is no such assignment.
    pub fn with_constant(&self, name: &str, value: Value) -> Option<Program> {
        fn go(s: &mut Stmt, name: &str, value: &Value) -> bool {
            match s {
                Stmt::Seq(a, b) => go(a, name, value) || go(b, name, value),
                Stmt::Assign { var, expr, .. } if &*var.name == name && expr.as_const().is_some() => {
                    *expr = Expr::Const(value.clone());
                    true
                }
                _ => false,
            }
        }
        let mut p = self.clone();
        go(&mut p.body, name, &value).then_some(p)
    }

    /// Variables assigned anywhere in the body plus the density accumulator.
    pub fn declared_vars(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        self.body.collect_assigned(&mut out);
        out.insert(Arc::from(DENSITY_VAR));
        out
    }
}
