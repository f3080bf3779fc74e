//! Program interpretation with pluggable nondeterminism.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eval::{eval_formula, eval_term, EvalError};
use super::ode::{integrate, Evolution};
use super::{SimConfig, State, Trace};
use crate::ast::*;
use crate::syntax::printer::{print_formula, right_choice_branches};

/// Supplies every nondeterministic decision of a run.
pub trait Resolver {
    /// Picks a branch of a choice. `enabled[i]` reports whether branch
    /// `i`'s leading test holds in the current state — advisory only; a
    /// resolver may pick a disabled branch and let the run get stuck.
    /// `None` abandons the choice (no enabled branch).
    fn choose_branch(&mut self, enabled: &[bool]) -> Option<usize>;
    /// Value for `var := *`.
    fn draw_value(&mut self, var: &Name, bounds: (f64, f64)) -> f64;
    /// Target duration for an evolution (the domain may stop it earlier).
    fn draw_duration(&mut self, max: f64) -> f64;
    /// Whether to run another loop iteration after `done` complete ones.
    fn continue_loop(&mut self, done: usize) -> bool;
}

/// Seeded random resolution, the default for simulation.
pub struct RandomResolver {
    rng: ChaCha8Rng,
    /// Probability of taking another loop iteration.
    pub continue_probability: f64,
}

impl RandomResolver {
    pub fn from_seed(seed: u64) -> RandomResolver {
        RandomResolver {
            rng: ChaCha8Rng::seed_from_u64(seed),
            continue_probability: 0.75,
        }
    }
}

impl Resolver for RandomResolver {
    fn choose_branch(&mut self, enabled: &[bool]) -> Option<usize> {
        let open: Vec<usize> = (0..enabled.len()).filter(|i| enabled[*i]).collect();
        if open.is_empty() {
            None
        } else {
            Some(open[self.rng.gen_range(0..open.len())])
        }
    }

    fn draw_value(&mut self, _var: &Name, bounds: (f64, f64)) -> f64 {
        self.rng.gen_range(bounds.0..=bounds.1)
    }

    fn draw_duration(&mut self, max: f64) -> f64 {
        self.rng.gen_range(0.0..=max)
    }

    fn continue_loop(&mut self, _done: usize) -> bool {
        self.rng.gen_bool(self.continue_probability)
    }
}

/// A pre-recorded decision sequence, for tests and paired runs.
#[derive(Clone, Debug, PartialEq)]
pub enum ScriptedEvent {
    Branch(usize),
    Value(f64),
    Duration(f64),
    Continue(bool),
}

/// Replays scripted events in order; when the script runs dry it falls
/// back to the first enabled branch, value `0`, the full duration, and
/// stopping every loop. A kind mismatch is a test bug and panics.
pub struct ScriptedResolver {
    events: VecDeque<ScriptedEvent>,
}

impl ScriptedResolver {
    pub fn new(events: Vec<ScriptedEvent>) -> ScriptedResolver {
        ScriptedResolver { events: events.into() }
    }
}

impl Resolver for ScriptedResolver {
    fn choose_branch(&mut self, enabled: &[bool]) -> Option<usize> {
        match self.events.pop_front() {
            Some(ScriptedEvent::Branch(i)) => Some(i),
            None => enabled.iter().position(|e| *e),
            Some(other) => panic!("script expected a branch, had {:?}", other),
        }
    }

    fn draw_value(&mut self, _var: &Name, _bounds: (f64, f64)) -> f64 {
        match self.events.pop_front() {
            Some(ScriptedEvent::Value(v)) => v,
            None => 0.0,
            Some(other) => panic!("script expected a value, had {:?}", other),
        }
    }

    fn draw_duration(&mut self, max: f64) -> f64 {
        match self.events.pop_front() {
            Some(ScriptedEvent::Duration(d)) => d,
            None => max,
            Some(other) => panic!("script expected a duration, had {:?}", other),
        }
    }

    fn continue_loop(&mut self, _done: usize) -> bool {
        match self.events.pop_front() {
            Some(ScriptedEvent::Continue(c)) => c,
            None => false,
            Some(other) => panic!("script expected a continue flag, had {:?}", other),
        }
    }
}

enum Flow {
    Ok,
    Stuck(String),
}

/// Runs an abbreviation-free program from `initial`, resolving all
/// nondeterminism through `resolver`. States at the outermost loop's
/// boundaries are recorded in the trace, the entry state included.
pub fn run_program<R: Resolver>(
    p: &HybridProgram,
    initial: &State,
    resolver: &mut R,
    config: &SimConfig,
) -> Result<Trace, EvalError> {
    let mut interp = Interp {
        resolver,
        config,
        boundaries: Vec::new(),
        iterations: 0,
        depth: 0,
    };
    let mut state = initial.clone();
    let flow = interp.exec(p, &mut state)?;
    Ok(Trace {
        initial: initial.clone(),
        boundaries: interp.boundaries,
        final_state: state,
        iterations: interp.iterations,
        stuck: match flow {
            Flow::Ok => None,
            Flow::Stuck(w) => Some(w),
        },
    })
}

/// Runs the body of a loop exactly once (one `ctrl; plant` round), the
/// building block for boundary-by-boundary checks.
pub fn run_loop<R: Resolver>(
    body: &HybridProgram,
    state: &mut State,
    resolver: &mut R,
    config: &SimConfig,
) -> Result<Option<String>, EvalError> {
    let mut interp = Interp {
        resolver,
        config,
        boundaries: Vec::new(),
        iterations: 0,
        depth: 1, // suppress boundary recording
    };
    Ok(match interp.exec(body, state)? {
        Flow::Ok => None,
        Flow::Stuck(w) => Some(w),
    })
}

struct Interp<'a, R: Resolver> {
    resolver: &'a mut R,
    config: &'a SimConfig,
    boundaries: Vec<State>,
    iterations: usize,
    depth: usize,
}

impl<R: Resolver> Interp<'_, R> {
    fn exec(&mut self, p: &HybridProgram, st: &mut State) -> Result<Flow, EvalError> {
        match p {
            HybridProgram::Assign(x, e) => {
                let v = eval_term(e, st)?;
                st.set(x.clone(), v);
                Ok(Flow::Ok)
            }
            HybridProgram::AssignAny(x) => {
                let v = self.resolver.draw_value(x, self.config.bounds_for(x));
                st.set(x.clone(), v);
                Ok(Flow::Ok)
            }
            HybridProgram::Test(g) => {
                if eval_formula(g, st)? {
                    Ok(Flow::Ok)
                } else {
                    Ok(Flow::Stuck(format!("test ?{} failed", print_formula(g))))
                }
            }
            HybridProgram::Seq(a, b) => match self.exec(a, st)? {
                Flow::Ok => self.exec(b, st),
                stuck => Ok(stuck),
            },
            HybridProgram::Choice(..) => {
                let branches = right_choice_branches(p);
                let enabled: Result<Vec<bool>, EvalError> = branches
                    .iter()
                    .map(|b| match seq_stmts(b).first() {
                        Some(HybridProgram::Test(g)) => eval_formula(g, st),
                        _ => Ok(true),
                    })
                    .collect();
                match self.resolver.choose_branch(&enabled?) {
                    Some(i) if i < branches.len() => self.exec(branches[i], st),
                    Some(i) => panic!("resolver chose branch {} of {}", i, branches.len()),
                    None => Ok(Flow::Stuck("no branch is enabled".into())),
                }
            }
            HybridProgram::Loop(body) => {
                let record = self.depth == 0;
                if record {
                    self.boundaries.push(st.clone());
                }
                self.depth += 1;
                let mut done = 0usize;
                let flow = loop {
                    if done >= self.config.max_iterations
                        || !self.resolver.continue_loop(done)
                    {
                        break Flow::Ok;
                    }
                    match self.exec(body, st)? {
                        Flow::Ok => {}
                        stuck => break stuck,
                    }
                    done += 1;
                    if record {
                        self.boundaries.push(st.clone());
                    }
                };
                self.depth -= 1;
                if record {
                    self.iterations = done;
                }
                Ok(flow)
            }
            HybridProgram::Ode { equations, domain } => {
                let duration = self.resolver.draw_duration(self.config.max_ode_duration);
                match integrate(equations, domain, st, duration, self.config)? {
                    Evolution::Blocked => Ok(Flow::Stuck(format!(
                        "evolution domain {} is false at entry",
                        print_formula(domain)
                    ))),
                    Evolution::Ran(_) | Evolution::DomainExit(_) => Ok(Flow::Ok),
                }
            }
            HybridProgram::Ref(n) => panic!(
                "simulation needs an expanded program, found the reference `{}` \
                 (run abbreviation expansion first)",
                n
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::parse_program_str;

    fn prog(src: &str) -> HybridProgram {
        parse_program_str(src).unwrap()
    }

    fn init(pairs: &[(&str, f64)]) -> State {
        let mut s = State::new();
        for (n, v) in pairs {
            s.set(Name::new(*n), *v);
        }
        s
    }

    #[test]
    fn straight_line_execution() {
        let p = prog("a := 2; b := a * 3; ?b >= 5");
        let mut r = ScriptedResolver::new(vec![]);
        let t = run_program(&p, &init(&[]), &mut r, &SimConfig::default()).unwrap();
        assert!(t.stuck.is_none());
        assert_eq!(t.final_state.get(&Name::new("b")), Some(6.0));
    }

    #[test]
    fn failed_tests_stop_the_run_with_a_reason() {
        let p = prog("a := 1; ?a > 5; a := 99");
        let mut r = ScriptedResolver::new(vec![]);
        let t = run_program(&p, &init(&[]), &mut r, &SimConfig::default()).unwrap();
        assert_eq!(t.stuck.as_deref(), Some("test ?a > 5 failed"));
        assert_eq!(t.final_state.get(&Name::new("a")), Some(1.0), "stops at the test");
    }

    #[test]
    fn scripted_choices_values_and_durations() {
        let p = prog("{a := 1 ++ a := *}; t := 0; {t' = 1}");
        let mut r = ScriptedResolver::new(vec![
            ScriptedEvent::Branch(1),
            ScriptedEvent::Value(7.5),
            ScriptedEvent::Duration(2.0),
        ]);
        let t = run_program(&p, &init(&[]), &mut r, &SimConfig::default()).unwrap();
        assert!(t.stuck.is_none());
        assert_eq!(t.final_state.get(&Name::new("a")), Some(7.5));
        assert!((t.final_state.get(&Name::new("t")).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn guarded_branches_report_enabledness() {
        // With s = 10 only the second branch is enabled; the script is
        // exhausted, so the resolver falls back to the first enabled one.
        let p = prog("if (s <= 5) then {a := 1} else {a := -1}");
        let mut r = ScriptedResolver::new(vec![]);
        let t = run_program(&p, &init(&[("s", 10.0)]), &mut r, &SimConfig::default()).unwrap();
        assert!(t.stuck.is_none());
        assert_eq!(t.final_state.get(&Name::new("a")), Some(-1.0));
    }

    #[test]
    fn loop_boundaries_are_recorded() {
        let p = prog("{x := x + 1}*");
        let mut r = ScriptedResolver::new(vec![
            ScriptedEvent::Continue(true),
            ScriptedEvent::Continue(true),
            ScriptedEvent::Continue(false),
        ]);
        let t = run_program(&p, &init(&[("x", 0.0)]), &mut r, &SimConfig::default()).unwrap();
        assert_eq!(t.iterations, 2);
        let xs: Vec<f64> = t
            .boundaries
            .iter()
            .map(|s| s.get(&Name::new("x")).unwrap())
            .collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn random_runs_are_reproducible_by_seed() {
        let p = prog("{{a := * ++ a := 0}; t := 0; {t' = 1 & t <= 1}}*");
        let cfg = SimConfig::default();
        let run = |seed| {
            let mut r = RandomResolver::from_seed(seed);
            run_program(&p, &init(&[("a", 0.0), ("t", 0.0)]), &mut r, &cfg).unwrap()
        };
        let (a, b, c) = (run(7), run(7), run(8));
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.iterations, b.iterations);
        // Different seeds should explore different runs (this seed pair does).
        assert!(c.final_state != a.final_state || c.iterations != a.iterations);
    }

    #[test]
    fn blocked_evolution_is_stuck() {
        let p = prog("{v' = 1 & v <= 0}");
        let mut r = ScriptedResolver::new(vec![ScriptedEvent::Duration(1.0)]);
        let t = run_program(&p, &init(&[("v", 5.0)]), &mut r, &SimConfig::default()).unwrap();
        assert!(t.stuck.unwrap().contains("false at entry"));
    }
}
