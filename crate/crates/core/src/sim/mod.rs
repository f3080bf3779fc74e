//! Numeric simulation of hybrid programs.
//!
//! Programs are executed over `f64` states: discrete statements run
//! directly, ODEs are integrated with a fixed-step fourth-order
//! Runge-Kutta scheme, and evolution-domain exits are located by
//! bisecting the last step. Nondeterminism (branch choices, `x := *`
//! draws, evolution durations, loop continuation) is delegated to a
//! [`Resolver`](interp::Resolver), so the same interpreter serves random
//! simulation, scripted tests, and the coupled twin-run checks.
//!
//! Simulation is deliberately first-order: quantifiers, modalities, and
//! unresolved predicate or program references in evaluated positions are
//! reported as errors instead of being approximated.

mod eval;
mod interp;
mod ode;

pub mod compose_check;
pub mod falsify;

pub use eval::{eval_formula, eval_term, EvalError};
pub use interp::{
    run_loop, run_program, RandomResolver, Resolver, ScriptedEvent, ScriptedResolver,
};
pub use ode::{integrate, Evolution};

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::Name;

/// A valuation of program variables.
#[derive(Clone, PartialEq, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct State(pub BTreeMap<Name, f64>);

impl State {
    pub fn new() -> State {
        State(BTreeMap::new())
    }

    pub fn get(&self, n: &Name) -> Option<f64> {
        self.0.get(n).copied()
    }

    pub fn set(&mut self, n: Name, v: f64) {
        self.0.insert(n, v);
    }

    /// Restriction to the given variables (missing ones are dropped).
    pub fn project(&self, vars: &BTreeSet<Name>) -> State {
        State(
            self.0
                .iter()
                .filter(|(k, _)| vars.contains(*k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    }

    /// Mixed absolute/relative agreement on `vars`: each pair must be
    /// within `tol * (1 + |reference|)`, and both states must define every
    /// variable in `vars`.
    pub fn agrees_on(&self, other: &State, vars: &BTreeSet<Name>, tol: f64) -> bool {
        vars.iter().all(|v| match (self.get(v), other.get(v)) {
            (Some(a), Some(b)) => close(a, b, tol),
            _ => false,
        })
    }
}

/// `|a - b| <= tol * (1 + |a|)`, the mixed tolerance used throughout.
/// Exact equality short-circuits so that matching infinities agree (their
/// difference is NaN); NaN never agrees with anything, itself included.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * (1.0 + a.abs())
}

/// Simulation parameters.
#[derive(Clone, Debug)]
pub struct SimConfig {
    /// RK4 step size.
    pub step: f64,
    /// Bisection stops once the domain-exit time is bracketed within
    /// `step * exit_refinement`.
    pub exit_refinement: f64,
    /// Upper bound on loop iterations per run.
    pub max_iterations: usize,
    /// Duration target for evolutions whose domain never closes.
    pub max_ode_duration: f64,
    /// Range from which `x := *` values are drawn.
    pub draw_bounds: (f64, f64),
    /// Per-variable overrides of `draw_bounds`.
    pub var_bounds: BTreeMap<Name, (f64, f64)>,
    /// Mixed tolerance for state comparisons.
    pub tolerance: f64,
}

impl SimConfig {
    pub fn bounds_for(&self, var: &Name) -> (f64, f64) {
        self.var_bounds.get(var).copied().unwrap_or(self.draw_bounds)
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            step: 1.0 / 32.0,
            exit_refinement: 1e-3,
            max_iterations: 32,
            max_ode_duration: 10.0,
            draw_bounds: (-10.0, 10.0),
            var_bounds: BTreeMap::new(),
            tolerance: 1e-6,
        }
    }
}

/// The record of one simulated run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Trace {
    pub initial: State,
    /// States at the boundaries of the outermost loop, including the
    /// state before the first iteration.
    pub boundaries: Vec<State>,
    pub final_state: State,
    pub iterations: usize,
    /// A human-readable note when the run stopped early.
    pub stuck: Option<String>,
}
