//! Bounded decision procedure for loop-free program equivalence.
//!
//! Two loop-free, differential-equation-free programs are H-equivalent
//! when, from any shared starting state, each run of one has a run of the
//! other ending in agreement on H. This module checks that definition
//! directly over a finite sample: initial states are drawn at random, the
//! runs of each side are enumerated (choices exhaustively, `x := *` over
//! a finite value pool), and the two end-state sets are matched against
//! each other in both directions on their H-projections.
//!
//! The value menu at a `x := *` site is a handful of seeded draws keyed
//! by the site's position in the control flow (statement index within
//! each sequence, branch index within each choice). Sites at the same
//! position on both sides — untouched by whatever rewrite produced one
//! program from the other — resolve from the same menu, so their moves
//! can be matched exactly. A site that exists on only one side, such as
//! an assignment freed by an attack, draws a menu of its own: nothing
//! forces those fresh values to coincide with anything the other side
//! can produce, which is what makes a feed-through attack visible and
//! keeps a lucky coincidence from masking one.
//!
//! A passing report is evidence, not proof; a counterexample is a real
//! refutation of the sampled instance, up to the matching tolerance.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ast::*;
use crate::sim::{eval_formula, eval_term, EvalError, State};
use crate::vars;

#[derive(Debug, Error)]
pub enum OracleError {
    /// The oracle only handles loop-free, differential-equation-free
    /// programs; everything else belongs to the decomposition rules.
    #[error("the bounded oracle cannot handle {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct OracleConfig {
    /// Shared initial states to sample.
    pub n_states: usize,
    /// Seeded draws in each `x := *` site's menu.
    pub n_values: usize,
    pub seed: u64,
    /// Range for initial states and menu draws.
    pub bounds: (f64, f64),
    /// Mixed tolerance for end-state agreement.
    pub tolerance: f64,
    /// Cap on enumerated runs per side per initial state.
    pub max_paths: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_states: 16,
            n_values: 4,
            seed: 0,
            bounds: (-10.0, 10.0),
            tolerance: 1e-6,
            max_paths: 4096,
        }
    }
}

/// Which side produced the run the other side could not match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum UnmatchedSide {
    Left,
    Right,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct OracleCounterexample {
    pub state_index: usize,
    pub initial: State,
    pub side: UnmatchedSide,
    /// H-projection of the unmatched end state.
    pub end: State,
    /// Distance to the nearest end state of the other side (infinite when
    /// the other side has no runs at all).
    pub best_residual: f64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct OracleReport {
    pub config: OracleConfig,
    pub h: BTreeSet<Name>,
    /// Completed runs enumerated across both sides and all states.
    pub runs: usize,
    /// Runs that ended in a failed test rather than an end state.
    pub failures: usize,
    pub counterexamples: Vec<OracleCounterexample>,
    /// Largest distance between an end state and its chosen match.
    pub max_residual: f64,
    /// Some initial state hit `max_paths` before full enumeration; the
    /// report then cannot count as a pass.
    pub truncated: bool,
    pub wall_time: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty() && !self.truncated
    }
}

/// Checks `left` against `right` for agreement on `h` over sampled
/// initial states, in both directions.
pub fn base_oracle(
    left: &HybridProgram,
    right: &HybridProgram,
    h: &BTreeSet<Name>,
    cfg: &OracleConfig,
) -> Result<OracleReport, OracleError> {
    ensure_supported(left)?;
    ensure_supported(right)?;

    let mut init_vars: BTreeSet<Name> = h.clone();
    for p in [left, right] {
        init_vars.extend(vars::fv(p));
        init_vars.extend(vars::bv(p).into_iter().filter(|v| !v.is_primed()));
    }
    let mut sites = collect_sites(left);
    sites.extend(collect_sites(right));

    let started = std::time::Instant::now();
    let per_state: Result<Vec<StateOutcome>, OracleError> = (0..cfg.n_states)
        .into_par_iter()
        .map(|i| check_state(i, left, right, h, &init_vars, &sites, cfg))
        .collect();

    let mut report = OracleReport {
        config: cfg.clone(),
        h: h.clone(),
        runs: 0,
        failures: 0,
        counterexamples: Vec::new(),
        max_residual: 0.0,
        truncated: false,
        wall_time: 0.0,
    };
    for outcome in per_state? {
        report.runs += outcome.runs;
        report.failures += outcome.failures;
        report.counterexamples.extend(outcome.counterexamples);
        report.max_residual = report.max_residual.max(outcome.max_residual);
        report.truncated |= outcome.truncated;
    }
    report.counterexamples.sort_by_key(|c| c.state_index);
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

struct StateOutcome {
    runs: usize,
    failures: usize,
    counterexamples: Vec<OracleCounterexample>,
    max_residual: f64,
    truncated: bool,
}

fn check_state(
    index: usize,
    left: &HybridProgram,
    right: &HybridProgram,
    h: &BTreeSet<Name>,
    init_vars: &BTreeSet<Name>,
    sites: &[(SitePath, usize)],
    cfg: &OracleConfig,
) -> Result<StateOutcome, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
    let (lo, hi) = cfg.bounds;

    let mut initial = State::new();
    for v in init_vars {
        initial.set(v.clone(), rng.gen_range(lo..=hi));
    }
    // One menu per distinct site position, drawn in path order so the
    // draws do not depend on which side a site came from; then routed to
    // each side's node. Shared positions share a menu.
    let paths: BTreeSet<&SitePath> = sites.iter().map(|(p, _)| p).collect();
    let mut by_path: BTreeMap<&SitePath, Vec<f64>> = BTreeMap::new();
    for path in paths {
        by_path.insert(path, (0..cfg.n_values).map(|_| rng.gen_range(lo..=hi)).collect());
    }
    let mut menus: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (path, node) in sites {
        menus.insert(*node, by_path[path].clone());
    }

    let left_runs = enumerate(left, &initial, &menus, cfg.max_paths)?;
    let right_runs = enumerate(right, &initial, &menus, cfg.max_paths)?;

    let mut outcome = StateOutcome {
        runs: left_runs.ends.len() + right_runs.ends.len(),
        failures: left_runs.failures + right_runs.failures,
        counterexamples: Vec::new(),
        max_residual: 0.0,
        truncated: left_runs.truncated || right_runs.truncated,
    };

    let left_ends: Vec<State> = left_runs.ends.iter().map(|s| s.project(h)).collect();
    let right_ends: Vec<State> = right_runs.ends.iter().map(|s| s.project(h)).collect();
    for (mine, others, side) in [
        (&left_ends, &right_ends, UnmatchedSide::Left),
        (&right_ends, &left_ends, UnmatchedSide::Right),
    ] {
        for end in mine {
            let mut best = f64::INFINITY;
            let mut matched = false;
            for other in others {
                best = best.min(distance(end, other, h));
                if end.agrees_on(other, h, cfg.tolerance) {
                    matched = true;
                }
            }
            if matched {
                outcome.max_residual = outcome.max_residual.max(best);
            } else {
                outcome.counterexamples.push(OracleCounterexample {
                    state_index: index,
                    initial: initial.clone(),
                    side,
                    end: end.clone(),
                    best_residual: best,
                });
            }
        }
    }
    Ok(outcome)
}

fn distance(a: &State, b: &State, h: &BTreeSet<Name>) -> f64 {
    let mut d = 0.0f64;
    for v in h {
        match (a.get(v), b.get(v)) {
            (Some(x), Some(y)) if x == y => {}
            (Some(x), Some(y)) => d = d.max((x - y).abs()),
            (None, None) => {}
            _ => return f64::INFINITY,
        }
    }
    d
}

pub(crate) fn ensure_supported(p: &HybridProgram) -> Result<(), OracleError> {
    match p {
        HybridProgram::Assign(..) | HybridProgram::AssignAny(_) | HybridProgram::Test(_) => Ok(()),
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => {
            ensure_supported(a)?;
            ensure_supported(b)
        }
        HybridProgram::Loop(_) => Err(OracleError::Unsupported("a loop".into())),
        HybridProgram::Ode { .. } => {
            Err(OracleError::Unsupported("a differential equation".into()))
        }
        HybridProgram::Ref(n) => {
            Err(OracleError::Unsupported(format!("the unexpanded reference {n}")))
        }
    }
}

/// Position of a `x := *` site: alternating statement index (within the
/// flattened sequence) and branch index (within the flattened choice),
/// outermost first. Computed on the same flattened view [`exec`] walks,
/// so two parses of one program agree regardless of `;` associativity.
type SitePath = Vec<u32>;

/// Every free-assignment site of `p`, with the node's address for menu
/// lookup during execution. Addresses are stable for the lifetime of the
/// borrow, which spans one oracle call.
fn collect_sites(p: &HybridProgram) -> Vec<(SitePath, usize)> {
    fn walk(p: &HybridProgram, path: &mut SitePath, out: &mut Vec<(SitePath, usize)>) {
        for (i, stmt) in seq_stmts(p).into_iter().enumerate() {
            match stmt {
                HybridProgram::AssignAny(_) => {
                    path.push(i as u32);
                    out.push((path.clone(), stmt as *const HybridProgram as usize));
                    path.pop();
                }
                HybridProgram::Choice(..) => {
                    for (j, branch) in choice_branches(stmt).into_iter().enumerate() {
                        path.push(i as u32);
                        path.push(j as u32);
                        walk(branch, path, out);
                        path.pop();
                        path.pop();
                    }
                }
                _ => {}
            }
        }
    }
    let mut out = Vec::new();
    walk(p, &mut Vec::new(), &mut out);
    out
}

struct Runs {
    ends: Vec<State>,
    failures: usize,
    truncated: bool,
}

impl Runs {
    fn spent(&self) -> usize {
        self.ends.len() + self.failures
    }
}

fn enumerate(
    p: &HybridProgram,
    initial: &State,
    menus: &BTreeMap<usize, Vec<f64>>,
    max_paths: usize,
) -> Result<Runs, EvalError> {
    let mut runs = Runs { ends: Vec::new(), failures: 0, truncated: false };
    exec(&[p], initial.clone(), menus, max_paths, &mut runs)?;
    Ok(runs)
}

fn exec(
    work: &[&HybridProgram],
    mut state: State,
    menus: &BTreeMap<usize, Vec<f64>>,
    max_paths: usize,
    runs: &mut Runs,
) -> Result<(), EvalError> {
    if runs.spent() >= max_paths {
        runs.truncated = true;
        return Ok(());
    }
    let Some((first, rest)) = work.split_first() else {
        runs.ends.push(state);
        return Ok(());
    };
    match first {
        HybridProgram::Assign(x, e) => {
            let v = eval_term(e, &state)?;
            state.set(x.clone(), v);
            exec(rest, state, menus, max_paths, runs)
        }
        HybridProgram::AssignAny(x) => {
            let key = *first as *const HybridProgram as usize;
            let menu = menus.get(&key).expect("every free-assignment site has a menu");
            for &v in menu {
                if runs.truncated {
                    break;
                }
                let mut branch = state.clone();
                branch.set(x.clone(), v);
                exec(rest, branch, menus, max_paths, runs)?;
            }
            Ok(())
        }
        HybridProgram::Test(f) => {
            if eval_formula(f, &state)? {
                exec(rest, state, menus, max_paths, runs)
            } else {
                runs.failures += 1;
                Ok(())
            }
        }
        HybridProgram::Choice(..) => {
            for branch in choice_branches(first) {
                if runs.truncated {
                    break;
                }
                let mut work: Vec<&HybridProgram> = seq_stmts(branch);
                work.extend_from_slice(rest);
                exec(&work, state.clone(), menus, max_paths, runs)?;
            }
            Ok(())
        }
        HybridProgram::Seq(..) => {
            let mut work: Vec<&HybridProgram> = seq_stmts(first);
            work.extend_from_slice(rest);
            exec(&work, state, menus, max_paths, runs)
        }
        HybridProgram::Loop(_) | HybridProgram::Ode { .. } | HybridProgram::Ref(_) => {
            unreachable!("rejected by ensure_supported")
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

    fn names(ns: &[&str]) -> BTreeSet<Name> {
        ns.iter().map(|n| Name::new(*n)).collect()
    }

    #[test]
    fn identical_programs_always_pass() {
        let p = prog("s := v; a := 2 * s");
        let r = base_oracle(&p, &p, &names(&["s", "a", "v"]), &OracleConfig::default()).unwrap();
        assert!(r.passed());
        assert!(r.counterexamples.is_empty());
        assert!(r.max_residual <= 1e-12);
    }

    #[test]
    fn a_freed_copy_is_caught_on_the_copied_variable() {
        let left = prog("s := v");
        let right = prog("s := *");
        let r = base_oracle(&left, &right, &names(&["s"]), &OracleConfig::default()).unwrap();
        assert!(!r.passed());
        // Both directions fail: the freed side's menu does not contain the
        // honest value, and the honest value is not on the menu.
        assert!(r.counterexamples.iter().any(|c| c.side == UnmatchedSide::Left));
        assert!(r.counterexamples.iter().any(|c| c.side == UnmatchedSide::Right));
        for c in r.counterexamples.iter().filter(|c| c.side == UnmatchedSide::Right) {
            assert_ne!(c.end.get(&Name::new("s")), c.initial.get(&Name::new("v")));
        }
    }

    #[test]
    fn matching_sites_share_a_menu_so_identical_nondeterminism_passes() {
        let left = prog("s := *; a := s + 1");
        let right = prog("s := *; a := s + 1");
        let r =
            base_oracle(&left, &right, &names(&["s", "a"]), &OracleConfig::default()).unwrap();
        assert!(r.passed(), "{:?}", r.counterexamples.first());
        assert!(r.runs > 0);
        assert!(r.max_residual <= 1e-12);
    }

    #[test]
    fn dual_redundancy_with_a_crosscheck_masks_either_channel() {
        // Two channels, one honest and one free per branch; the selection
        // is followed by a comparison that zeroes the output on mismatch.
        let fixed = "{sl := p; sr := * ++ sl := *; sr := p}; \
                     {a := sl ++ a := sr}; \
                     {?sl = sr ++ ?sl != sr; a := 0}";
        let left = prog(fixed);
        for sensor in ["sl", "sr"] {
            let right =
                crate::attack::attack_program(&left, &names(&[sensor])).unwrap().0;
            let r =
                base_oracle(&left, &right, &names(&["a", "p"]), &OracleConfig::default())
                    .unwrap();
            assert!(r.passed(), "attack on {sensor}: {:?}", r.counterexamples.first());
        }
    }

    #[test]
    fn dual_redundancy_without_a_crosscheck_is_caught() {
        let unfixed = "{sl := p; sr := * ++ sl := *; sr := p}; \
                       {a := sl ++ a := sr}";
        let left = prog(unfixed);
        let right = crate::attack::attack_program(&left, &names(&["sl"])).unwrap().0;
        let r = base_oracle(&left, &right, &names(&["a", "p"]), &OracleConfig::default())
            .unwrap();
        // The freed first channel reaches outputs drawn from a menu the
        // honest side never sees.
        assert!(!r.passed());
        assert!(r.counterexamples.iter().any(|c| c.side == UnmatchedSide::Right));
    }

    #[test]
    fn a_freed_copy_is_invisible_outside_h() {
        let left = prog("s := v");
        let right = prog("s := *");
        let r = base_oracle(&left, &right, &names(&["v"]), &OracleConfig::default()).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn two_of_three_voting_masks_one_freed_reading() {
        // Duplicate readings with pairwise agreement selection: if the
        // first two copies agree take the first, otherwise trust the third.
        let vote = "s1 := p; s2 := p; s3 := p; \
                    { ?s1 = s2; s := s1 ++ ?s1 != s2; s := s3 }";
        let attacked = "s1 := *; s2 := p; s3 := p; \
                        { ?s1 = s2; s := s1 ++ ?s1 != s2; s := s3 }";
        let r = base_oracle(
            &prog(vote),
            &prog(attacked),
            &names(&["s", "p"]),
            &OracleConfig::default(),
        )
        .unwrap();
        assert!(r.passed(), "{:?}", r.counterexamples.first());
        assert!(r.runs > 0);
    }

    #[test]
    fn a_test_only_on_one_side_is_an_inequivalence() {
        let left = prog("?v > 0; a := 1");
        let right = prog("a := 1");
        let r = base_oracle(&left, &right, &names(&["a"]), &OracleConfig::default()).unwrap();
        // States with v <= 0 give the right side a run the left cannot
        // match at all.
        assert!(!r.passed());
        assert!(r.failures > 0);
        assert!(r
            .counterexamples
            .iter()
            .any(|c| c.side == UnmatchedSide::Right && c.best_residual.is_infinite()));
    }

    #[test]
    fn both_sides_empty_is_vacuously_equivalent() {
        let p = prog("?1 = 0");
        let r = base_oracle(&p, &p, &names(&["x"]), &OracleConfig::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.runs, 0);
        assert_eq!(r.failures, 2 * r.config.n_states);
    }

    #[test]
    fn reports_are_reproducible() {
        let left = prog("s := *; { ?s > 0; a := 1 ++ ?s <= 0; a := 0 }");
        let right = prog("s := *; { ?s > 0; a := 1 ++ ?s <= 0; a := 0 }");
        let h = names(&["a", "s"]);
        let cfg = OracleConfig { seed: 7, ..Default::default() };
        let a = base_oracle(&left, &right, &h, &cfg).unwrap();
        let b = base_oracle(&left, &right, &h, &cfg).unwrap();
        assert_eq!(
            serde_json::to_value(&a.counterexamples).unwrap(),
            serde_json::to_value(&b.counterexamples).unwrap()
        );
        assert_eq!((a.runs, a.failures, a.truncated), (b.runs, b.failures, b.truncated));
    }

    #[test]
    fn path_explosion_is_reported_not_silently_passed() {
        let p = prog("a := *; b := *; c := *");
        let cfg = OracleConfig { max_paths: 16, ..Default::default() };
        let r = base_oracle(&p, &p, &names(&["a", "b", "c"]), &cfg).unwrap();
        assert!(r.truncated);
        assert!(!r.passed());
    }

    #[test]
    fn loops_and_flows_are_refused() {
        let looped = prog("{x := x + 1}*");
        let err = base_oracle(&looped, &looped, &names(&["x"]), &OracleConfig::default());
        assert!(matches!(err, Err(OracleError::Unsupported(_))));
        let flow = prog("{x' = 1 & x <= 1}");
        let err = base_oracle(&flow, &flow, &names(&["x"]), &OracleConfig::default());
        assert!(matches!(err, Err(OracleError::Unsupported(_))));
    }
}
