//! Recursive big-step interpreter over the AST.

use rand::Rng;

use super::{eval_site_parts, EvalOutcome, ProgramState, Role, SampleHandler, Site, TraceHandler, Undefined};
use crate::lang::{Program, Stmt, Trace, Value};

struct Interp<'h, H> {
    handler: &'h mut H,
    budget: u64,
    buf: Vec<Value>,
}

impl<H: SampleHandler> Interp<'_, H> {
    fn tick(&mut self) -> Result<(), Undefined> {
        if self.budget == 0 {
            return Err(Undefined::StepBudgetExhausted);
        }
        self.budget -= 1;
        Ok(())
    }

    fn run(&mut self, s: &Stmt, st: &mut ProgramState) -> Result<(), Undefined> {
        match s {
            Stmt::Skip => Ok(()),
            Stmt::Assign { var, expr, .. } => {
                self.tick()?;
                st.values[var.slot as usize] = super::eval_expr(&st.values, expr);
                Ok(())
            }
            Stmt::Seq(a, b) => {
                self.run(a, st)?;
                self.run(b, st)
            }
            Stmt::If { cond, then, els, .. } => {
                self.tick()?;
                match super::eval_expr(&st.values, cond).truthiness() {
                    Some(true) => self.run(then, st),
                    Some(false) => self.run(els, st),
                    None => Err(Undefined::InvalidCondition),
                }
            }
            Stmt::While { cond, body, .. } => loop {
                self.tick()?;
                match super::eval_expr(&st.values, cond).truthiness() {
                    Some(true) => self.run(body, st)?,
                    Some(false) => return Ok(()),
                    None => return Err(Undefined::InvalidCondition),
                }
            },
            Stmt::Sample { var, addr, dist, args, .. } => {
                self.tick()?;
                let mut buf = std::mem::take(&mut self.buf);
                let address = eval_site_parts(&st.values, addr, args, &mut buf)?;
                let site = Site { node: None, role: Role::Plain, address: &address, dist: *dist, args: &buf };
                let (v, lp) = self.handler.sample(&site, st)?;
                st.log_density += lp;
                st.values[var.slot as usize] = v;
                self.buf = buf;
                Ok(())
            }
        }
    }
}

/// Executes the program body with a custom sample handler.
pub fn exec_with<H: SampleHandler>(program: &Program, handler: &mut H, initial: ProgramState, budget: u64) -> EvalOutcome {
    let mut st = initial;
    let mut it = Interp { handler, budget, buf: Vec::new() };
    it.run(&program.body, &mut st)?;
    Ok(st)
}

pub fn exec(program: &Program, trace: &Trace, initial: ProgramState, budget: u64) -> EvalOutcome {
    exec_with(program, &mut TraceHandler { trace }, initial, budget)
}

/// Log density of the trace, from the all-Null initial state.
pub fn density(program: &Program, trace: &Trace) -> Result<f64, Undefined> {
    exec(program, trace, ProgramState::initial(program), super::DEFAULT_STEP_BUDGET).map(|s| s.log_density)
}

/// Forward sampler: existing trace entries (e.g. observations) are kept,
/// every other executed address is drawn from its prior and recorded.
struct Forward<'a, R> {
    fixed: &'a Trace,
    out: Trace,
    rng: &'a mut R,
}

impl<R: Rng> super::SampleHandler for Forward<'_, R> {
    fn sample(&mut self, site: &Site<'_>, _: &ProgramState) -> Result<(Value, f64), Undefined> {
        let fixed = self.fixed.get(site.address);
        let v = if !fixed.is_null() {
            fixed.clone()
        } else {
            let existing = self.out.get(site.address);
            if existing.is_null() {
                site.dist.sample(site.args, self.rng).ok_or(Undefined::InvalidParams)?
            } else {
                existing.clone()
            }
        };
        self.out.insert(site.address.clone(), v.clone());
        Ok((v.clone(), site.dist.log_pdf(&v, site.args)))
    }
}

/// Forward-samples with the given addresses held fixed. The returned trace
/// holds every executed address, fixed ones included.
pub fn sample_forward_with<R: Rng>(program: &Program, fixed: &Trace, rng: &mut R, budget: u64) -> Result<(Trace, f64), Undefined> {
    let mut h = Forward { fixed, out: Trace::new(), rng };
    let st = exec_with(program, &mut h, ProgramState::initial(program), budget)?;
    Ok((h.out, st.log_density))
}

pub fn sample_forward<R: Rng>(program: &Program, rng: &mut R) -> Result<(Trace, f64), Undefined> {
    sample_forward_with(program, &Trace::new(), rng, super::DEFAULT_STEP_BUDGET)
}

/// Density is defined and removing any single key makes it undefined.
pub fn is_minimal(program: &Program, trace: &Trace) -> bool {
    if density(program, trace).is_err() {
        return false;
    }
    trace.sorted_keys().into_iter().all(|k| {
        let mut t = trace.clone();
        t.remove(&k);
        density(program, &t).is_err()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LISTING1: &str = "p = sample(\"p\", Uniform(0, 1))\nx = sample(\"x\", Bernoulli(p))\nif x == 1 then\n    y = sample(\"y\", Bernoulli(0.25))\nelse\n    z = sample(\"z\", Bernoulli(0.75))\n";
    const GEOMETRIC: &str = "b = true; i = 0\nwhile b do\n    i = i + 1\n    b = sample(\"b_\" + str(i), Bernoulli(0.25))\n";

    fn tr(items: &[(&str, Value)]) -> Trace {
        items.iter().map(|(k, v)| (*k, v.clone())).collect()
    }

    #[test]
    fn listing1_density() {
        let p = parse(LISTING1).unwrap();
        let t = tr(&[("p", Value::Real(0.5)), ("x", Value::Int(1)), ("y", Value::Int(1))]);
        assert!((density(&p, &t).unwrap().exp() - 0.125).abs() < 1e-15);
        let missing = tr(&[("p", Value::Real(0.5)), ("x", Value::Int(1))]);
        assert_eq!(density(&p, &missing), Err(Undefined::NullTraceValue));
    }

    #[test]
    fn geometric_density() {
        let p = parse(GEOMETRIC).unwrap();
        let t = tr(&[("b_1", Value::Int(1)), ("b_2", Value::Int(1)), ("b_3", Value::Int(0))]);
        assert!((density(&p, &t).unwrap().exp() - 0.046875).abs() < 1e-15);
    }

    #[test]
    fn forward_samples_of_geometric_are_minimal() {
        let p = parse(GEOMETRIC).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (t, lp) = sample_forward(&p, &mut rng).unwrap();
            let n = t.len();
            for i in 1..=n {
                let want = if i == n { 0 } else { 1 };
                assert_eq!(t.get(&format!("b_{i}")), &Value::Int(want));
            }
            assert_eq!(density(&p, &t).unwrap(), lp);
            assert!(is_minimal(&p, &t));
        }
    }

    #[test]
    fn point_mass_and_skip() {
        let p = parse("x = sample(\"x\", Bernoulli(1.0))").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, lp) = sample_forward(&p, &mut rng).unwrap();
        assert_eq!(t.get("x"), &Value::Int(1));
        assert_eq!(lp, 0.0);
        let skip = parse("skip").unwrap();
        assert_eq!(sample_forward(&skip, &mut rng).unwrap().1, 0.0);
        assert_eq!(density(&skip, &Trace::new()), Ok(0.0));
    }

    #[test]
    fn undefined_reasons() {
        let p = parse("a = null; x = sample(\"x\", Normal(a, 1))").unwrap();
        assert_eq!(density(&p, &tr(&[("x", Value::Real(0.0))])), Err(Undefined::NullParam));
        let p = parse("x = sample(3, Normal(0, 1))").unwrap();
        assert_eq!(density(&p, &Trace::new()), Err(Undefined::NonStringAddress));
        let p = parse("while true do skip").unwrap();
        let out = exec(&p, &Trace::new(), ProgramState::initial(&p), 1000);
        assert_eq!(out, Err(Undefined::StepBudgetExhausted));
    }
}
