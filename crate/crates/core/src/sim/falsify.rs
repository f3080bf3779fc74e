//! Randomized search for boundary disagreements between a program and
//! its attacked version.
//!
//! Equivalence on an agreement set means every run of one side has a
//! matching run of the other. Disproving it numerically needs a run of
//! the attacked program that no original run can match — but enumerating
//! all original runs is hopeless, so this search pairs runs instead: both
//! sides start from one shared state and the attacked side replays the
//! original's decisions wherever its structure still aligns, while
//! attacked sensor reads are redrawn adversarially. A boundary where the
//! pair disagrees on the agreement set is reported as a **candidate**
//! counterexample: definitive only if the original program is
//! deterministic, and otherwise a strong hint to inspect, because the
//! original might still match the attacked run with different decisions.

use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;

use super::interp::{run_loop, RandomResolver, Resolver};
use super::{EvalError, SimConfig, State};
use crate::ast::*;

#[derive(Clone, Debug)]
pub struct FalsifyConfig {
    pub trials: usize,
    pub seed: u64,
    pub iterations_per_trial: usize,
    pub sim: SimConfig,
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        FalsifyConfig {
            trials: 128,
            seed: 0,
            iterations_per_trial: 6,
            sim: SimConfig::default(),
        }
    }
}

/// A paired run that disagreed on the agreement set.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CandidateCounterexample {
    pub trial: usize,
    pub seed: u64,
    /// Loop iteration (0-based) after which the boundary disagreed.
    pub iteration: usize,
    pub initial: State,
    pub variable: Name,
    pub original_value: f64,
    pub attacked_value: f64,
    /// No replay misalignment had occurred before the disagreement: the
    /// attacked run made the original's decisions everywhere except at
    /// redrawn sensors.
    pub fully_coupled: bool,
    /// The original body has no choices and no nondeterministic
    /// assignments, so (up to evolution durations, which were replayed)
    /// its run is the only one and the candidate is conclusive.
    pub original_deterministic: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct FalsifyReport {
    pub trials: usize,
    pub boundaries_checked: usize,
    pub original_stuck: usize,
    pub attacked_stuck: usize,
    pub candidates: Vec<CandidateCounterexample>,
}

impl FalsifyReport {
    pub fn found(&self) -> bool {
        !self.candidates.is_empty()
    }
}

/// Searches for boundary disagreements between `original_body` and
/// `attacked_body` (both expanded loop bodies) on the variables in `h`.
/// Values for `redraw` variables are drawn fresh on the attacked side;
/// everything else replays the original's decisions. `init_vars` receives
/// shared random initial values.
pub fn falsify_equiv(
    original_body: &HybridProgram,
    attacked_body: &HybridProgram,
    redraw: &BTreeSet<Name>,
    h: &BTreeSet<Name>,
    init_vars: &BTreeSet<Name>,
    cfg: &FalsifyConfig,
) -> Result<FalsifyReport, EvalError> {
    let deterministic = is_deterministic(original_body);

    let results: Result<Vec<TrialResult>, EvalError> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            run_trial(
                trial,
                cfg.seed.wrapping_add(trial as u64),
                original_body,
                attacked_body,
                redraw,
                h,
                init_vars,
                deterministic,
                cfg,
            )
        })
        .collect();

    let mut report = FalsifyReport {
        trials: cfg.trials,
        boundaries_checked: 0,
        original_stuck: 0,
        attacked_stuck: 0,
        candidates: Vec::new(),
    };
    for r in results? {
        report.boundaries_checked += r.boundaries;
        report.original_stuck += r.original_stuck as usize;
        report.attacked_stuck += r.attacked_stuck as usize;
        report.candidates.extend(r.candidate);
    }
    report.candidates.sort_by_key(|c| (c.trial, c.iteration));
    Ok(report)
}

struct TrialResult {
    boundaries: usize,
    original_stuck: bool,
    attacked_stuck: bool,
    candidate: Option<CandidateCounterexample>,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    trial: usize,
    seed: u64,
    original_body: &HybridProgram,
    attacked_body: &HybridProgram,
    redraw: &BTreeSet<Name>,
    h: &BTreeSet<Name>,
    init_vars: &BTreeSet<Name>,
    deterministic: bool,
    cfg: &FalsifyConfig,
) -> Result<TrialResult, EvalError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = cfg.sim.draw_bounds;

    let mut initial = State::new();
    for v in init_vars {
        initial.set(v.clone(), rng.gen_range(lo..=hi));
    }

    let mut orig_state = initial.clone();
    let mut att_state = initial.clone();
    let mut result = TrialResult {
        boundaries: 0,
        original_stuck: false,
        attacked_stuck: false,
        candidate: None,
    };

    for iteration in 0..cfg.iterations_per_trial {
        // Original round, recording every decision.
        let mut recorder = Recorder {
            inner: RandomResolver::from_seed(seed.wrapping_mul(31).wrapping_add(iteration as u64)),
            events: Vec::new(),
        };
        if run_loop(original_body, &mut orig_state, &mut recorder, &cfg.sim)?.is_some() {
            result.original_stuck = true;
            return Ok(result);
        }

        // Attacked round, replaying those decisions where aligned.
        let mut paired = Paired {
            queue: recorder.events.into(),
            redraw,
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(
                seed.wrapping_mul(0xa5a5).wrapping_add(iteration as u64),
            ),
            bounds: cfg.sim.draw_bounds,
            aligned: true,
        };
        if run_loop(attacked_body, &mut att_state, &mut paired, &cfg.sim)?.is_some() {
            result.attacked_stuck = true;
            return Ok(result);
        }

        result.boundaries += 1;
        for v in h {
            let a = orig_state.get(v);
            let b = att_state.get(v);
            let agree = matches!((a, b), (Some(a), Some(b)) if super::close(a, b, cfg.sim.tolerance));
            if !agree {
                result.candidate = Some(CandidateCounterexample {
                    trial,
                    seed,
                    iteration,
                    initial,
                    variable: v.clone(),
                    original_value: a.unwrap_or(f64::NAN),
                    attacked_value: b.unwrap_or(f64::NAN),
                    fully_coupled: paired.aligned,
                    original_deterministic: deterministic,
                });
                return Ok(result);
            }
        }
    }
    Ok(result)
}

/// No choices, no free assignments: at most one run per duration profile.
fn is_deterministic(p: &HybridProgram) -> bool {
    match p {
        HybridProgram::Assign(..) | HybridProgram::Test(_) | HybridProgram::Ode { .. } => true,
        HybridProgram::AssignAny(_) | HybridProgram::Choice(..) => false,
        HybridProgram::Seq(a, b) => is_deterministic(a) && is_deterministic(b),
        HybridProgram::Loop(a) => is_deterministic(a),
        HybridProgram::Ref(_) => false,
    }
}

/// Decisions of one original round, tagged for replay alignment.
#[derive(Clone, Debug, PartialEq)]
enum Decision {
    Branch(usize),
    Value(Name, f64),
    Duration(f64),
    Continue(bool),
}

struct Recorder {
    inner: RandomResolver,
    events: Vec<Decision>,
}

impl Resolver for Recorder {
    fn choose_branch(&mut self, enabled: &[bool]) -> Option<usize> {
        let r = self.inner.choose_branch(enabled);
        if let Some(i) = r {
            self.events.push(Decision::Branch(i));
        }
        r
    }

    fn draw_value(&mut self, var: &Name, bounds: (f64, f64)) -> f64 {
        let v = self.inner.draw_value(var, bounds);
        self.events.push(Decision::Value(var.clone(), v));
        v
    }

    fn draw_duration(&mut self, max: f64) -> f64 {
        let d = self.inner.draw_duration(max);
        self.events.push(Decision::Duration(d));
        d
    }

    fn continue_loop(&mut self, done: usize) -> bool {
        let c = self.inner.continue_loop(done);
        self.events.push(Decision::Continue(c));
        c
    }
}

/// Replays recorded decisions into the attacked twin. Sensor reads the
/// attack rewrote appear only on the attacked side, so a query whose
/// front-of-queue event does not match is answered freshly without
/// consuming the queue; redrawn variables consume their matching event
/// (keeping alignment) but ignore the recorded value.
struct Paired<'a> {
    queue: VecDeque<Decision>,
    redraw: &'a BTreeSet<Name>,
    rng: rand_chacha::ChaCha8Rng,
    bounds: (f64, f64),
    aligned: bool,
}

impl Resolver for Paired<'_> {
    fn choose_branch(&mut self, enabled: &[bool]) -> Option<usize> {
        if let Some(Decision::Branch(i)) = self.queue.front() {
            let i = *i;
            self.queue.pop_front();
            if i < enabled.len() {
                return Some(i);
            }
        }
        self.aligned = false;
        use rand::Rng;
        let open: Vec<usize> = (0..enabled.len()).filter(|i| enabled[*i]).collect();
        if open.is_empty() {
            None
        } else {
            Some(open[self.rng.gen_range(0..open.len())])
        }
    }

    fn draw_value(&mut self, var: &Name, bounds: (f64, f64)) -> f64 {
        use rand::Rng;
        if let Some(Decision::Value(n, v)) = self.queue.front() {
            if n == var {
                let v = *v;
                self.queue.pop_front();
                return if self.redraw.contains(var) {
                    self.rng.gen_range(self.bounds.0..=self.bounds.1)
                } else {
                    v
                };
            }
        }
        // A site that exists only on the attacked side (a rewritten read),
        // or genuine misalignment after divergence.
        if !self.redraw.contains(var) {
            self.aligned = false;
        }
        self.rng.gen_range(bounds.0..=bounds.1)
    }

    fn draw_duration(&mut self, max: f64) -> f64 {
        if let Some(Decision::Duration(d)) = self.queue.front() {
            let d = (*d).min(max);
            self.queue.pop_front();
            return d;
        }
        self.aligned = false;
        use rand::Rng;
        self.rng.gen_range(0.0..=max)
    }

    fn continue_loop(&mut self, _done: usize) -> bool {
        if let Some(Decision::Continue(c)) = self.queue.front() {
            let c = *c;
            self.queue.pop_front();
            return c;
        }
        self.aligned = false;
        false
    }
}
