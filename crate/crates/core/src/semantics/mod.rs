//! Big-step semantics, distributions and the sample-site protocol shared by
//! every executor.

pub mod builtins;
pub mod dist;
pub mod interp;

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::lang::{DistKind, Program, Trace, Value};

pub use builtins::eval_expr;
pub use interp::{density, exec, exec_with, is_minimal, sample_forward, sample_forward_with};

pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

/// Why an execution has no defined density.
#[derive(Clone, Copy, Debug, Error, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Undefined {
    #[error("null distribution parameter")]
    NullParam,
    #[error("trace has no value at an executed address")]
    NullTraceValue,
    #[error("address is not a string")]
    NonStringAddress,
    #[error("step budget exhausted")]
    StepBudgetExhausted,
    #[error("branch condition is neither boolean nor integer")]
    InvalidCondition,
    #[error("distribution parameters admit no sample")]
    InvalidParams,
}

/// Variable values by slot plus the log-density accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramState {
    pub values: Vec<Value>,
    pub log_density: f64,
}

impl ProgramState {
    pub fn initial(program: &Program) -> ProgramState {
        ProgramState { values: vec![Value::Null; program.slot_count()], log_density: 0.0 }
    }

    pub fn get(&self, program: &Program, name: &str) -> Value {
        program.slot_of(name).map(|s| self.values[s as usize].clone()).unwrap_or(Value::Null)
    }

    pub fn identical(&self, other: &ProgramState) -> bool {
        self.log_density.to_bits() == other.log_density.to_bits()
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.identical(b))
    }
}

pub type EvalOutcome = Result<ProgramState, Undefined>;

/// How a sample site inside a slice is treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Ordinary execution of the whole program.
    Plain,
    /// The slice origin.
    Visit,
    /// A dependent factor.
    Score,
    /// Value lookup only; contributes no density.
    Read,
}

/// An evaluated sample statement about to execute.
pub struct Site<'a> {
    /// CFG node id, when executing a graph.
    pub node: Option<usize>,
    pub role: Role,
    pub address: &'a Arc<str>,
    pub dist: DistKind,
    pub args: &'a [Value],
}

/// Supplies the value of each executed sample statement together with the
/// log density it adds to the accumulator.
pub trait SampleHandler {
    fn sample(&mut self, site: &Site<'_>, state: &ProgramState) -> Result<(Value, f64), Undefined>;
}

/// The plain sample rule: read the trace, score under the prior.
pub struct TraceHandler<'a> {
    pub trace: &'a Trace,
}

impl SampleHandler for TraceHandler<'_> {
    fn sample(&mut self, site: &Site<'_>, _: &ProgramState) -> Result<(Value, f64), Undefined> {
        let v = self.trace.get(site.address);
        if v.is_null() {
            return Err(Undefined::NullTraceValue);
        }
        let lp = if site.role == Role::Read { 0.0 } else { site.dist.log_pdf(v, site.args) };
        Ok((v.clone(), lp))
    }
}

/// Evaluates the address and arguments of a sample statement, applying the
/// null and string checks of the sample rule in a fixed order.
pub fn eval_site_parts(
    vals: &[Value],
    addr: &crate::lang::Expr,
    args: &[crate::lang::Expr],
    buf: &mut Vec<Value>,
) -> Result<Arc<str>, Undefined> {
    let address = match eval_expr(vals, addr) {
        Value::Str(s) => s,
        _ => return Err(Undefined::NonStringAddress),
    };
    buf.clear();
    for a in args {
        let v = eval_expr(vals, a);
        if v.is_null() {
            return Err(Undefined::NullParam);
        }
        buf.push(v);
    }
    Ok(address)
}
