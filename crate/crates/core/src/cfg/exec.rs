//! Small-step execution over the graph.

use super::{Cfg, NodeId, NodeKind, Succ};
use crate::lang::{Trace, Value};
use crate::semantics::{eval_expr, eval_site_parts, EvalOutcome, ProgramState, Role, SampleHandler, Site, TraceHandler, Undefined};

impl Cfg {
    /// Executes node `n` and returns its successor, `None` at End.
    pub fn step<H: SampleHandler>(
        &self,
        n: NodeId,
        st: &mut ProgramState,
        handler: &mut H,
        role: Role,
        buf: &mut Vec<Value>,
    ) -> Result<Option<NodeId>, Undefined> {
        match &self.nodes[n].kind {
            NodeKind::Start | NodeKind::Join => {}
            NodeKind::End => return Ok(None),
            NodeKind::Assign { var, expr } => {
                st.values[var.slot as usize] = eval_expr(&st.values, expr);
            }
            NodeKind::Sample { var, addr, dist, args } => {
                let address = eval_site_parts(&st.values, addr, args, buf)?;
                let site = Site { node: Some(n), role, address: &address, dist: *dist, args: buf };
                let (v, lp) = handler.sample(&site, st)?;
                st.log_density += lp;
                st.values[var.slot as usize] = v;
            }
            NodeKind::Branch { cond } => {
                let Succ::Two { then, els } = self.succ[n] else {
                    unreachable!("branch without two successors")
                };
                return match eval_expr(&st.values, cond).truthiness() {
                    Some(true) => Ok(Some(then)),
                    Some(false) => Ok(Some(els)),
                    None => Err(Undefined::InvalidCondition),
                };
            }
        }
        match self.succ[n] {
            Succ::One(m) => Ok(Some(m)),
            _ => Ok(None),
        }
    }
}

/// Runs from Start to End with a custom handler, optionally recording the
/// visited node sequence (Start and End included).
pub fn cfg_exec_with<H: SampleHandler>(
    cfg: &Cfg,
    handler: &mut H,
    initial: ProgramState,
    budget: u64,
    mut seq: Option<&mut Vec<NodeId>>,
) -> EvalOutcome {
    let mut st = initial;
    let mut buf = Vec::new();
    let mut n = cfg.start;
    let mut left = budget;
    loop {
        if let Some(s) = seq.as_deref_mut() {
            s.push(n);
        }
        match cfg.step(n, &mut st, handler, Role::Plain, &mut buf)? {
            Some(m) => n = m,
            None => return Ok(st),
        }
        if left == 0 {
            return Err(Undefined::StepBudgetExhausted);
        }
        left -= 1;
    }
}

pub fn cfg_exec(cfg: &Cfg, trace: &Trace, initial: ProgramState, budget: u64) -> EvalOutcome {
    cfg_exec_with(cfg, &mut TraceHandler { trace }, initial, budget, None)
}

pub fn cfg_exec_recorded(cfg: &Cfg, trace: &Trace, initial: ProgramState, budget: u64) -> (EvalOutcome, Vec<NodeId>) {
    let mut seq = Vec::new();
    let out = cfg_exec_with(cfg, &mut TraceHandler { trace }, initial, budget, Some(&mut seq));
    (out, seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;
    use crate::semantics::DEFAULT_STEP_BUDGET;

    #[test]
    fn empty_program() {
        let p = parse("skip").unwrap();
        let g = Cfg::build(&p);
        let (out, seq) = cfg_exec_recorded(&g, &Trace::new(), ProgramState::initial(&p), 10);
        assert_eq!(out.unwrap().log_density, 0.0);
        assert_eq!(seq, vec![g.start, g.end]);
    }

    #[test]
    fn geometric_exit_visits_branch_twice() {
        let p = parse("b = true; i = 0\nwhile b do\n    i = i + 1\n    b = sample(\"b_\" + str(i), Bernoulli(0.25))\n").unwrap();
        let g = Cfg::build(&p);
        let t: Trace = [("b_1", Value::Int(0))].into_iter().collect();
        let (out, seq) = cfg_exec_recorded(&g, &t, ProgramState::initial(&p), DEFAULT_STEP_BUDGET);
        assert!((out.unwrap().log_density - 0.75f64.ln()).abs() < 1e-15);
        let branch = g.pairs[0].branch;
        assert_eq!(seq.iter().filter(|&&n| n == branch).count(), 2);
    }
}
