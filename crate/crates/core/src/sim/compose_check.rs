//! Numeric spot-check of a composed model's equality obligation.
//!
//! The composed program carries both the original and the attacked twin
//! in one state space, coupled through shared choice variables. This
//! check runs the composed loop from sampled initial states satisfying
//! exactly the obligation's `eq` premise — twin copies of agreement
//! variables equal, everything else independent — and verifies that the
//! agreement variables still coincide at every loop boundary. A violation
//! here is a concrete witness that the equality obligation is false;
//! passing is evidence, not proof.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::interp::{run_loop, RandomResolver};
use super::{close, SimConfig, State};
use crate::ast::*;
use crate::compose::CompositionResult;
use crate::expand::{expand_abbreviations, ExpandError};
use crate::sim::EvalError;
use crate::vars;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("the composed problem must be `eq -> [{{body}}*] eq`, found {0}")]
    Shape(String),
}

#[derive(Clone, Debug)]
pub struct CompositionCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub iterations_per_trial: usize,
    pub sim: SimConfig,
}

impl Default for CompositionCheckConfig {
    fn default() -> Self {
        CompositionCheckConfig {
            trials: 64,
            seed: 0,
            iterations_per_trial: 8,
            sim: SimConfig::default(),
        }
    }
}

/// A loop boundary where the copies disagreed.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EqViolation {
    pub trial: usize,
    pub seed: u64,
    pub iteration: usize,
    pub variable: Name,
    pub original_value: f64,
    pub twin_value: f64,
    pub initial: State,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct CompositionCheck {
    pub trials: usize,
    pub boundaries_checked: usize,
    /// Trials that ended early because the composed program had no run to
    /// continue (for example, diverged twins closed each other's domain).
    pub stuck_trials: usize,
    pub violations: Vec<EqViolation>,
    /// Largest `|x - x_1|` seen over the agreement set at any boundary,
    /// violating or not.
    pub max_eq_residual: f64,
    pub wall_time: f64,
}

impl CompositionCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs the composed loop from coupled random initial states and checks
/// the agreement equality at each boundary.
pub fn check_composition(
    comp: &CompositionResult,
    cfg: &CompositionCheckConfig,
) -> Result<CompositionCheck, CheckError> {
    let expanded = expand_abbreviations(&comp.model)?;
    let body = obligation_body(&expanded)?;

    // Everything the body reads must have an initial value: program
    // variables and free parameters alike.
    let mut init_vars: BTreeSet<Name> = expanded.program_vars.clone();
    init_vars.extend(vars::fv(&body));

    let started = std::time::Instant::now();
    let results: Result<Vec<(usize, usize, Vec<EqViolation>, f64)>, CheckError> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.seed.wrapping_add(trial as u64);
            run_trial(trial, seed, &body, comp, &init_vars, cfg).map_err(CheckError::from)
        })
        .collect();

    let mut boundaries_checked = 0;
    let mut stuck_trials = 0;
    let mut violations = Vec::new();
    let mut max_eq_residual = 0.0f64;
    for (checked, stuck, mut vs, residual) in results? {
        boundaries_checked += checked;
        stuck_trials += stuck;
        violations.append(&mut vs);
        max_eq_residual = max_eq_residual.max(residual);
    }
    violations.sort_by_key(|v| (v.trial, v.iteration));
    Ok(CompositionCheck {
        trials: cfg.trials,
        boundaries_checked,
        stuck_trials,
        violations,
        max_eq_residual,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

fn run_trial(
    trial: usize,
    seed: u64,
    body: &HybridProgram,
    comp: &CompositionResult,
    init_vars: &BTreeSet<Name>,
    cfg: &CompositionCheckConfig,
) -> Result<(usize, usize, Vec<EqViolation>, f64), EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = cfg.sim.draw_bounds;

    // The obligation assumes only its own premise, so the sampler mirrors
    // that exactly: twin copies of eq-set variables start equal, every
    // other twin pair is drawn independently.
    let mut state = State::new();
    for v in init_vars {
        if comp.renaming.values().any(|x1| x1 == v) {
            continue;
        }
        state.set(v.clone(), rng.gen_range(lo..=hi));
    }
    for (v, v1) in &comp.renaming {
        let x = if comp.eq_set.contains(v) {
            state.get(v)
        } else {
            None
        };
        state.set(v1.clone(), x.unwrap_or_else(|| rng.gen_range(lo..=hi)));
    }
    let initial = state.clone();

    let mut resolver = RandomResolver::from_seed(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let mut checked = 0usize;
    let mut violations = Vec::new();
    let mut residual = 0.0f64;
    for iteration in 0..cfg.iterations_per_trial {
        if run_loop(body, &mut state, &mut resolver, &cfg.sim)?.is_some() {
            return Ok((checked, 1, violations, residual));
        }
        checked += 1;
        for v in &comp.eq_set {
            let a = state.get(v);
            let b = state.get(&comp.renaming[v]);
            if let (Some(a), Some(b)) = (a, b) {
                residual = residual.max((a - b).abs());
            }
            let ok = matches!((a, b), (Some(a), Some(b)) if close(a, b, cfg.sim.tolerance));
            if !ok {
                violations.push(EqViolation {
                    trial,
                    seed,
                    iteration,
                    variable: v.clone(),
                    original_value: a.unwrap_or(f64::NAN),
                    twin_value: b.unwrap_or(f64::NAN),
                    initial: initial.clone(),
                });
            }
        }
        if !violations.is_empty() {
            // Disagreement compounds; one witness per trial is enough.
            break;
        }
    }
    Ok((checked, 0, violations, residual))
}

/// Pulls the loop body out of `eq -> [{body}*] eq`.
fn obligation_body(expanded: &Model) -> Result<HybridProgram, CheckError> {
    let mut cur = &expanded.problem;
    while let Formula::Implies(_, b) = cur {
        cur = b;
    }
    match cur {
        Formula::Box(p, _) => match p.as_ref() {
            HybridProgram::Loop(body) => Ok((**body).clone()),
            other => Err(CheckError::Shape(crate::syntax::printer::print_program(other))),
        },
        other => Err(CheckError::Shape(crate::syntax::printer::print_formula(other))),
    }
}
