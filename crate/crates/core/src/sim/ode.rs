//! Fixed-step RK4 integration of ODE systems with evolution domains.

use super::eval::{eval_term, EvalError};
use super::{SimConfig, State};
use crate::ast::{Formula, Name, OdeEq};

/// Result of evolving a system.
#[derive(Clone, Debug, PartialEq)]
pub enum Evolution {
    /// Evolved for the full requested duration.
    Ran(f64),
    /// The domain closed earlier; evolved as long as it held.
    DomainExit(f64),
    /// The domain is false at entry: the system admits no run at all.
    Blocked,
}

/// Integrates `equations` from `state` for up to `duration`, staying
/// inside `domain`. On success `state` holds the final values, with each
/// `x'` set to the right-hand side at the final point.
///
/// The exit time is bracketed to within `config.step * config.exit_refinement`
/// of the true boundary crossing and the state is taken at the inside end
/// of the bracket, so the domain still holds in the reported state.
pub fn integrate(
    equations: &[OdeEq],
    domain: &Formula,
    state: &mut State,
    duration: f64,
    config: &SimConfig,
) -> Result<Evolution, EvalError> {
    if !super::eval_formula(domain, state)? {
        return Ok(Evolution::Blocked);
    }
    if duration <= 0.0 {
        write_primes(equations, state)?;
        return Ok(Evolution::Ran(0.0));
    }

    let mut t = 0.0_f64;
    while t < duration {
        let h = config.step.min(duration - t);
        let candidate = rk4_step(equations, state, h)?;
        if super::eval_formula(domain, &candidate)? {
            *state = candidate;
            t += h;
            continue;
        }
        // The crossing lies in (t, t + h]: bisect the step size.
        let mut lo = 0.0_f64;
        let mut hi = h;
        while hi - lo > config.step * config.exit_refinement {
            let mid = 0.5 * (lo + hi);
            let probe = rk4_step(equations, state, mid)?;
            if super::eval_formula(domain, &probe)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > 0.0 {
            *state = rk4_step(equations, state, lo)?;
        }
        write_primes(equations, state)?;
        return Ok(Evolution::DomainExit(t + lo));
    }
    write_primes(equations, state)?;
    Ok(Evolution::Ran(duration))
}

/// One classical Runge-Kutta step of size `h`.
fn rk4_step(equations: &[OdeEq], state: &State, h: f64) -> Result<State, EvalError> {
    let vars: Vec<&Name> = equations.iter().map(|e| &e.var).collect();

    let derivs = |s: &State| -> Result<Vec<f64>, EvalError> {
        equations.iter().map(|e| eval_term(&e.rhs, s)).collect()
    };
    let shifted = |base: &State, dir: &[f64], scale: f64| -> State {
        let mut s = base.clone();
        for (v, d) in vars.iter().zip(dir) {
            let cur = base.get(v).unwrap_or(0.0);
            s.set((*v).clone(), cur + scale * d);
        }
        s
    };

    let k1 = derivs(state)?;
    let k2 = derivs(&shifted(state, &k1, 0.5 * h))?;
    let k3 = derivs(&shifted(state, &k2, 0.5 * h))?;
    let k4 = derivs(&shifted(state, &k3, h))?;

    let mut out = state.clone();
    for (i, v) in vars.iter().enumerate() {
        let cur = state.get(v).unwrap_or(0.0);
        let slope = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
        out.set((*v).clone(), cur + h * slope);
    }
    Ok(out)
}

fn write_primes(equations: &[OdeEq], state: &mut State) -> Result<(), EvalError> {
    let values: Result<Vec<f64>, EvalError> = equations
        .iter()
        .map(|e| eval_term(&e.rhs, state))
        .collect();
    for (e, v) in equations.iter().zip(values?) {
        state.set(e.var.primed(), v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{HybridProgram, Name};
    use crate::syntax::parser::parse_program_str;

    fn system(src: &str) -> (Vec<OdeEq>, Formula) {
        match parse_program_str(src).unwrap() {
            HybridProgram::Ode { equations, domain } => (equations, domain),
            _ => panic!("not an ODE"),
        }
    }

    fn state(pairs: &[(&str, f64)]) -> State {
        let mut s = State::new();
        for (n, v) in pairs {
            s.set(Name::new(*n), *v);
        }
        s
    }

    #[test]
    fn constant_acceleration_is_integrated_exactly() {
        // Solutions are cubic in t; RK4 reproduces polynomials up to
        // degree four exactly, so the only error is float rounding.
        let (eqs, dom) = system("{p' = v, v' = a}");
        let mut s = state(&[("p", 1.0), ("v", 2.0), ("a", -0.5)]);
        let cfg = SimConfig::default();
        let r = integrate(&eqs, &dom, &mut s, 2.0, &cfg).unwrap();
        assert_eq!(r, Evolution::Ran(2.0));
        let p = 1.0 + 2.0 * 2.0 + 0.5 * (-0.5) * 4.0;
        let v = 2.0 + (-0.5) * 2.0;
        assert!((s.get(&Name::new("p")).unwrap() - p).abs() < 1e-12);
        assert!((s.get(&Name::new("v")).unwrap() - v).abs() < 1e-12);
        // x' variables hold the derivatives at the end point.
        assert_eq!(s.get(&Name::new("p").primed()), s.get(&Name::new("v")));
    }

    #[test]
    fn domain_exit_is_located_by_bisection() {
        let (eqs, dom) = system("{x' = 1 & x <= 2}");
        let mut s = state(&[("x", 0.0)]);
        let cfg = SimConfig::default();
        match integrate(&eqs, &dom, &mut s, 10.0, &cfg).unwrap() {
            Evolution::DomainExit(t) => {
                // Exit at x = 2, i.e. t = 2, within the refinement width.
                assert!((t - 2.0).abs() <= cfg.step * cfg.exit_refinement + 1e-12, "t = {}", t);
            }
            r => panic!("expected a domain exit, got {:?}", r),
        }
        let x = s.get(&Name::new("x")).unwrap();
        assert!(x <= 2.0, "must stop inside the domain, x = {}", x);
        assert!(x > 2.0 - 1e-3, "but right at its edge, x = {}", x);
    }

    #[test]
    fn false_domain_at_entry_blocks() {
        let (eqs, dom) = system("{x' = 1 & x <= 2}");
        let mut s = state(&[("x", 5.0)]);
        let r = integrate(&eqs, &dom, &mut s, 1.0, &SimConfig::default()).unwrap();
        assert_eq!(r, Evolution::Blocked);
        assert_eq!(s.get(&Name::new("x")), Some(5.0));
    }

    #[test]
    fn zero_duration_is_a_run_when_the_domain_holds() {
        let (eqs, dom) = system("{x' = 1 & x <= 2}");
        let mut s = state(&[("x", 1.0)]);
        let r = integrate(&eqs, &dom, &mut s, 0.0, &SimConfig::default()).unwrap();
        assert_eq!(r, Evolution::Ran(0.0));
    }

    #[test]
    fn exponential_decay_converges_at_fourth_order() {
        // v' = -k v has solution v0 * exp(-k t): genuinely nonlinear in t,
        // so halving the step should cut the error by about 2^4.
        let (eqs, dom) = system("{v' = -(1/2) * v}");
        let run = |step: f64| -> f64 {
            let mut s = state(&[("v", 1.0)]);
            let cfg = SimConfig { step, ..SimConfig::default() };
            integrate(&eqs, &dom, &mut s, 1.0, &cfg).unwrap();
            (s.get(&Name::new("v")).unwrap() - (-0.5_f64).exp()).abs()
        };
        let e1 = run(0.1);
        let e2 = run(0.05);
        let order = (e1 / e2).log2();
        assert!(order > 3.7, "observed order {}", order);
    }

    #[test]
    fn coupled_oscillator_conserves_energy_well() {
        let (eqs, dom) = system("{x' = y, y' = -x}");
        let mut s = state(&[("x", 1.0), ("y", 0.0)]);
        let cfg = SimConfig { step: 0.01, ..SimConfig::default() };
        integrate(&eqs, &dom, &mut s, std::f64::consts::TAU, &cfg).unwrap();
        // One full period returns to the start.
        assert!((s.get(&Name::new("x")).unwrap() - 1.0).abs() < 1e-6);
        assert!(s.get(&Name::new("y")).unwrap().abs() < 1e-6);
    }
}
