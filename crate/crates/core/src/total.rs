//! Taint analysis and totality checking for attacked programs.
//!
//! A safety statement about an attacked program is vacuous on states where
//! the program has no runs at all, so a meaningful attack analysis must
//! know that compromised data cannot abort the program. This module
//! over-approximates where attacker-controlled values can flow (taint) and
//! then checks that no tainted value decides whether the program can
//! continue: every tainted test must sit in guard position of an
//! exhaustive branch, and no ODE evolution domain may be tainted.
//!
//! The taint fixpoint only ever grows the tainted set. That is
//! deliberately flow-insensitive across loop iterations: a variable that
//! is clean on iteration one but overwritten from a sensor on iteration
//! two counts as tainted everywhere.
//!
//! Loops never block by themselves — the zero-iteration run always
//! exists — so violations are reported for statements inside bodies, never
//! for the loop node.

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::ast::*;
use crate::expand::{expand_abbreviations, ExpandError};
use crate::syntax::printer::{print_formula, right_choice_branches, ProgPath, Step};
use crate::vars::{fv_formula, fv_term};

/// How attacker influence reached a variable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, serde::Serialize)]
pub enum FlowKind {
    /// Assigned from an expression over tainted variables.
    Data,
    /// Assigned while execution was conditional on a tainted test.
    Control,
    /// Evolved under an ODE whose domain constraint is tainted: the
    /// attacker influences how long the evolution may run.
    Duration,
}

/// One propagation step, pointing at the statement that received taint.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, serde::Serialize)]
pub struct FlowEdge {
    pub from: Name,
    pub to: Name,
    pub kind: FlowKind,
    pub path: ProgPath,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TaintReport {
    pub seeds: BTreeSet<Name>,
    pub tainted: BTreeSet<Name>,
    pub edges: BTreeSet<FlowEdge>,
}

impl TaintReport {
    pub fn is_tainted(&self, n: &Name) -> bool {
        self.tainted.contains(n)
    }
}

/// Why the attacked program may get stuck.
#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize)]
pub enum TotalityViolation {
    /// The evolution domain reads tainted variables, so the attacker can
    /// make it false at entry and forbid any evolution.
    TaintedOdeDomain { path: ProgPath, variables: BTreeSet<Name> },
    /// A tainted test whose alternatives provably do not cover all cases;
    /// `witness` is a sample value none of the guards accept.
    NonExhaustiveTest {
        path: ProgPath,
        guards: Vec<String>,
        witness: Option<String>,
    },
    /// Tainted guards whose disjunction this tool cannot decide.
    UnknownExhaustiveness { path: ProgPath, guards: Vec<String> },
}

impl std::fmt::Display for TotalityViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TotalityViolation::TaintedOdeDomain { variables, .. } => {
                let vs: Vec<&str> = variables.iter().map(Name::as_str).collect();
                write!(f, "evolution domain depends on tainted {}", vs.join(", "))
            }
            TotalityViolation::NonExhaustiveTest { guards, witness, .. } => {
                write!(f, "tainted guards {{{}}} are not exhaustive", guards.join(", "))?;
                if let Some(w) = witness {
                    write!(f, " (uncovered at {})", w)?;
                }
                Ok(())
            }
            TotalityViolation::UnknownExhaustiveness { guards, .. } => write!(
                f,
                "cannot decide whether tainted guards {{{}}} are exhaustive",
                guards.join(", ")
            ),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TotalityReport {
    pub taint: TaintReport,
    pub violations: Vec<TotalityViolation>,
    /// The abbreviation-free model all violation paths refer to.
    pub expanded: Model,
}

impl TotalityReport {
    pub fn is_total(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Taints flowing through one program. The program must be
/// abbreviation-free; paths are rooted at the program itself.
pub fn taint_program(p: &HybridProgram, seeds: &BTreeSet<Name>) -> TaintReport {
    let mut t = Taint {
        tainted: seeds.clone(),
        edges: BTreeSet::new(),
        path: Vec::new(),
    };
    loop {
        let before = t.tainted.len();
        t.program(p, &BTreeSet::new());
        if t.tainted.len() == before {
            break;
        }
    }
    TaintReport {
        seeds: seeds.clone(),
        tainted: t.tainted,
        edges: t.edges,
    }
}

/// Checks that attacker-controlled data cannot make the model's programs
/// stuck. Seeds are the given sensors plus the model's declared
/// low-integrity variables. Violation paths point into the expanded model
/// (`report.expanded`), rooted at the problem formula.
pub fn check_totality(
    m: &Model,
    sensors: &BTreeSet<Name>,
) -> Result<TotalityReport, ExpandError> {
    let expanded = expand_abbreviations(m)?;
    let mut seeds = sensors.clone();
    seeds.extend(expanded.low_integrity_vars.iter().cloned());

    let mut t = Taint {
        tainted: seeds.clone(),
        edges: BTreeSet::new(),
        path: Vec::new(),
    };
    loop {
        let before = t.tainted.len();
        let mut modal = 0usize;
        t.formula(&expanded.problem, &mut modal);
        if t.tainted.len() == before {
            break;
        }
    }
    let taint = TaintReport {
        seeds,
        tainted: t.tainted,
        edges: t.edges,
    };

    let mut checker = Checker {
        tainted: &taint.tainted,
        violations: Vec::new(),
        path: Vec::new(),
    };
    let mut modal = 0usize;
    checker.formula(&expanded.problem, &mut modal);
    let violations = checker.violations;

    Ok(TotalityReport { taint, violations, expanded })
}

// ---------------------------------------------------------------------------
// Taint propagation

struct Taint {
    tainted: BTreeSet<Name>,
    edges: BTreeSet<FlowEdge>,
    path: ProgPath,
}

impl Taint {
    fn formula(&mut self, f: &Formula, modal: &mut usize) {
        match f {
            Formula::Box(p, rest) => {
                let k = *modal;
                *modal += 1;
                self.path.push(Step::Modal(k));
                self.program(p, &BTreeSet::new());
                self.path.pop();
                self.formula(rest, modal);
            }
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => {
                self.formula(a, modal)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                self.formula(a, modal);
                self.formula(b, modal);
            }
            _ => {}
        }
    }

    /// Walks a statement spine; `ctl` is the set of tainted variables the
    /// current control flow is conditional on.
    fn program(&mut self, p: &HybridProgram, ctl: &BTreeSet<Name>) {
        let mut ctl = ctl.clone();
        self.seq_spine(p, 0, &mut ctl);
    }

    fn seq_spine(&mut self, p: &HybridProgram, idx: usize, ctl: &mut BTreeSet<Name>) -> usize {
        match p {
            HybridProgram::Seq(a, b) => {
                let idx = self.seq_spine(a, idx, ctl);
                self.seq_spine(b, idx, ctl)
            }
            stmt => {
                self.path.push(Step::Stmt(idx));
                self.stmt(stmt, ctl);
                self.path.pop();
                idx + 1
            }
        }
    }

    fn stmt(&mut self, s: &HybridProgram, ctl: &mut BTreeSet<Name>) {
        match s {
            HybridProgram::Assign(x, e) => {
                let sources: BTreeSet<Name> =
                    fv_term(e).intersection(&self.tainted).cloned().collect();
                self.flow(&sources, x, FlowKind::Data);
                self.flow(ctl, x, FlowKind::Control);
            }
            HybridProgram::AssignAny(x) => {
                self.flow(ctl, x, FlowKind::Control);
            }
            HybridProgram::Test(g) => {
                for v in fv_formula(g).intersection(&self.tainted) {
                    ctl.insert(v.clone());
                }
            }
            HybridProgram::Ode { equations, domain } => {
                let dom_sources: BTreeSet<Name> = fv_formula(domain)
                    .intersection(&self.tainted)
                    .cloned()
                    .collect();
                for eq in equations {
                    let sources: BTreeSet<Name> = fv_term(&eq.rhs)
                        .intersection(&self.tainted)
                        .cloned()
                        .collect();
                    self.flow(&sources, &eq.var, FlowKind::Data);
                    self.flow(ctl, &eq.var, FlowKind::Control);
                    self.flow(&dom_sources, &eq.var, FlowKind::Duration);
                    if self.tainted.contains(&eq.var) {
                        self.tainted.insert(eq.var.primed());
                    }
                }
            }
            HybridProgram::Choice(..) => {
                let mut idx = 0usize;
                let mut cur = s;
                loop {
                    match cur {
                        HybridProgram::Choice(a, b) => {
                            self.path.push(Step::Branch(idx));
                            self.program(a, ctl);
                            self.path.pop();
                            idx += 1;
                            cur = b;
                        }
                        last => {
                            self.path.push(Step::Branch(idx));
                            self.program(last, ctl);
                            self.path.pop();
                            break;
                        }
                    }
                }
            }
            HybridProgram::Loop(body) => {
                self.path.push(Step::Body);
                // The back edge can carry control taint from the end of one
                // iteration to the start of the next.
                let mut inner = ctl.clone();
                let entry = inner.clone();
                self.seq_spine(body, 0, &mut inner);
                if inner != entry {
                    self.seq_spine(body, 0, &mut inner.clone());
                }
                self.path.pop();
            }
            HybridProgram::Seq(..) => {
                self.seq_spine(s, 0, ctl);
            }
            HybridProgram::Ref(n) => panic!(
                "taint analysis needs an expanded program, found the reference `{}` \
                 (run abbreviation expansion first)",
                n
            ),
        }
    }

    fn flow(&mut self, sources: &BTreeSet<Name>, to: &Name, kind: FlowKind) {
        if sources.is_empty() {
            return;
        }
        self.tainted.insert(to.clone());
        self.tainted.insert(to.primed());
        for from in sources {
            self.edges.insert(FlowEdge {
                from: from.clone(),
                to: to.clone(),
                kind,
                path: self.path.clone(),
            });
        }
    }
}

// ---------------------------------------------------------------------------
// Totality checking

struct Checker<'a> {
    tainted: &'a BTreeSet<Name>,
    violations: Vec<TotalityViolation>,
    path: ProgPath,
}

impl Checker<'_> {
    fn formula(&mut self, f: &Formula, modal: &mut usize) {
        match f {
            Formula::Box(p, rest) => {
                let k = *modal;
                *modal += 1;
                self.path.push(Step::Modal(k));
                self.program(p);
                self.path.pop();
                self.formula(rest, modal);
            }
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => {
                self.formula(a, modal)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                self.formula(a, modal);
                self.formula(b, modal);
            }
            _ => {}
        }
    }

    fn program(&mut self, p: &HybridProgram) {
        for (i, s) in seq_stmts(p).iter().enumerate() {
            self.path.push(Step::Stmt(i));
            self.stmt(s);
            self.path.pop();
        }
    }

    fn is_tainted_formula(&self, f: &Formula) -> bool {
        fv_formula(f).iter().any(|v| self.tainted.contains(v))
    }

    fn stmt(&mut self, s: &HybridProgram) {
        match s {
            HybridProgram::Test(g) => {
                // A test outside guard position is a one-branch choice.
                if self.is_tainted_formula(g) {
                    self.report_coverage(&[Some(g)], self.path.clone());
                }
            }
            HybridProgram::Ode { domain, .. } => {
                let vars: BTreeSet<Name> = fv_formula(domain)
                    .intersection(self.tainted)
                    .cloned()
                    .collect();
                if !vars.is_empty() {
                    self.violations.push(TotalityViolation::TaintedOdeDomain {
                        path: self.path.clone(),
                        variables: vars,
                    });
                }
            }
            HybridProgram::Loop(body) => {
                self.path.push(Step::Body);
                self.program(body);
                self.path.pop();
            }
            HybridProgram::Choice(..) => {
                let branches = right_choice_branches(s);
                let guards: Vec<Option<&Formula>> = branches
                    .iter()
                    .map(|b| match seq_stmts(b).first() {
                        Some(HybridProgram::Test(g)) => Some(g),
                        _ => None,
                    })
                    .collect();
                if guards
                    .iter()
                    .any(|g| g.is_some_and(|g| self.is_tainted_formula(g)))
                {
                    self.report_coverage(&guards, self.path.clone());
                }
                for (i, b) in branches.iter().enumerate() {
                    self.path.push(Step::Branch(i));
                    // The leading test is the branch guard, accounted for
                    // above (or designed-in when untainted); the tail can
                    // still hide violations.
                    for (j, st) in seq_stmts(b).iter().enumerate() {
                        if j == 0 && guards[i].is_some() {
                            continue;
                        }
                        self.path.push(Step::Stmt(j));
                        self.stmt(st);
                        self.path.pop();
                    }
                    self.path.pop();
                }
            }
            HybridProgram::Seq(..) => self.program(s),
            HybridProgram::Assign(..) | HybridProgram::AssignAny(_) => {}
            HybridProgram::Ref(n) => panic!(
                "totality checking needs an expanded program, found the reference `{}` \
                 (run abbreviation expansion first)",
                n
            ),
        }
    }

    fn report_coverage(&mut self, guards: &[Option<&Formula>], path: ProgPath) {
        let printed: Vec<String> = guards
            .iter()
            .map(|g| match g {
                Some(g) => print_formula(g),
                None => "<unguarded>".into(),
            })
            .collect();
        match coverage(guards) {
            Coverage::Exhaustive => {}
            Coverage::Gap(witness) => self.violations.push(TotalityViolation::NonExhaustiveTest {
                path,
                guards: printed,
                witness: Some(witness),
            }),
            Coverage::Unknown => self
                .violations
                .push(TotalityViolation::UnknownExhaustiveness { path, guards: printed }),
        }
    }
}

// ---------------------------------------------------------------------------
// Guard exhaustiveness

enum Coverage {
    Exhaustive,
    Gap(String),
    Unknown,
}

/// Canonical comparison atoms: `>`/`>=` are flipped so only `<`, `<=`,
/// `=`, `!=` remain, with `=`/`!=` operand order normalized.
#[derive(PartialEq, Eq, Clone)]
enum CAtom {
    Lt(Term, Term),
    Le(Term, Term),
    Eq(Term, Term),
    Ne(Term, Term),
}

fn canon(op: CmpOp, l: &Term, r: &Term) -> CAtom {
    let sorted = |a: &Term, b: &Term| {
        if format!("{:?}", a) <= format!("{:?}", b) {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    };
    match op {
        CmpOp::Lt => CAtom::Lt(l.clone(), r.clone()),
        CmpOp::Le => CAtom::Le(l.clone(), r.clone()),
        CmpOp::Gt => CAtom::Lt(r.clone(), l.clone()),
        CmpOp::Ge => CAtom::Le(r.clone(), l.clone()),
        CmpOp::Eq => {
            let (a, b) = sorted(l, r);
            CAtom::Eq(a, b)
        }
        CmpOp::Ne => {
            let (a, b) = sorted(l, r);
            CAtom::Ne(a, b)
        }
    }
}

fn complement(a: &CAtom) -> CAtom {
    match a {
        CAtom::Lt(l, r) => CAtom::Le(r.clone(), l.clone()),
        CAtom::Le(l, r) => CAtom::Lt(r.clone(), l.clone()),
        CAtom::Eq(l, r) => CAtom::Ne(l.clone(), r.clone()),
        CAtom::Ne(l, r) => CAtom::Eq(l.clone(), r.clone()),
    }
}

fn coverage(guards: &[Option<&Formula>]) -> Coverage {
    // An unguarded branch (or a trivially true guard) is always enabled.
    if guards.iter().any(|g| matches!(g, None | Some(Formula::True))) {
        return Coverage::Exhaustive;
    }
    let gs: Vec<&Formula> = guards.iter().map(|g| g.unwrap()).collect();

    // A guard and its syntactic negation cover everything.
    for (i, a) in gs.iter().enumerate() {
        for b in gs.iter().skip(i + 1) {
            if Formula::Not(Box::new((*a).clone())) == **b
                || Formula::Not(Box::new((*b).clone())) == **a
            {
                return Coverage::Exhaustive;
            }
        }
    }

    // Complementary or jointly-total comparison pairs, and the
    // less/equal/greater trichotomy.
    let atoms: Vec<Option<CAtom>> = gs
        .iter()
        .map(|g| match g {
            Formula::Cmp(op, l, r) => Some(canon(*op, l, r)),
            _ => None,
        })
        .collect();
    let have = |c: &CAtom| atoms.iter().any(|a| a.as_ref() == Some(c));
    for a in atoms.iter().flatten() {
        if have(&complement(a)) {
            return Coverage::Exhaustive;
        }
        if let CAtom::Le(l, r) = a {
            if have(&CAtom::Le(r.clone(), l.clone())) {
                return Coverage::Exhaustive;
            }
        }
        if let CAtom::Lt(l, r) = a {
            let eq = match canon(CmpOp::Eq, l, r) {
                e @ CAtom::Eq(..) => e,
                _ => unreachable!(),
            };
            if have(&CAtom::Lt(r.clone(), l.clone())) && have(&eq) {
                return Coverage::Exhaustive;
            }
        }
    }

    single_variable_coverage(&gs)
}

/// Decides coverage exactly when every guard is a Boolean combination of
/// comparisons between one common variable and closed rational constants:
/// truth is then piecewise-constant, so finitely many probes settle it.
fn single_variable_coverage(gs: &[&Formula]) -> Coverage {
    let mut var: Option<Name> = None;
    for g in gs {
        for v in fv_formula(g) {
            match &var {
                None => var = Some(v),
                Some(w) if *w == v => {}
                Some(_) => return Coverage::Unknown,
            }
        }
    }
    let Some(var) = var else { return Coverage::Unknown };

    let mut breakpoints: BTreeSet<Rational> = BTreeSet::new();
    for g in gs {
        if !collect_breakpoints(g, &var, &mut breakpoints) {
            return Coverage::Unknown;
        }
    }

    let cs: Vec<Rational> = breakpoints.into_iter().collect();
    let one = Rational::from(num_bigint::BigInt::from(1));
    let two = Rational::from(num_bigint::BigInt::from(2));
    let mut probes = Vec::new();
    if cs.is_empty() {
        probes.push(Rational::from(num_bigint::BigInt::from(0)));
    } else {
        probes.push(cs[0].clone() - &one);
        for (i, c) in cs.iter().enumerate() {
            probes.push(c.clone());
            if let Some(next) = cs.get(i + 1) {
                probes.push((c.clone() + next) / &two);
            }
        }
        probes.push(cs[cs.len() - 1].clone() + &one);
    }

    for x in &probes {
        let covered = gs.iter().any(|g| {
            eval_single_var(g, &var, x).expect("breakpoint collection vetted the shape")
        });
        if !covered {
            return Coverage::Gap(format!("{} = {}", var, rational_literal(x)));
        }
    }
    Coverage::Exhaustive
}

/// Gathers the constants the variable is compared against; fails (returns
/// false) when the guard is not in the supported shape.
fn collect_breakpoints(g: &Formula, var: &Name, out: &mut BTreeSet<Rational>) -> bool {
    match g {
        Formula::True | Formula::False => true,
        Formula::Cmp(_, l, r) => {
            let (v, c) = match (l, r) {
                (Term::Variable(v), c) if v == var => (v, c),
                (c, Term::Variable(v)) if v == var => (v, c),
                _ => return false,
            };
            let _ = v;
            match const_eval(c) {
                Some(value) => {
                    out.insert(value);
                    true
                }
                None => false,
            }
        }
        Formula::Not(a) => collect_breakpoints(a, var, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            collect_breakpoints(a, var, out) && collect_breakpoints(b, var, out)
        }
        _ => false,
    }
}

fn eval_single_var(g: &Formula, var: &Name, x: &Rational) -> Option<bool> {
    Some(match g {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(op, l, r) => {
            let lv = term_value(l, var, x)?;
            let rv = term_value(r, var, x)?;
            match op {
                CmpOp::Lt => lv < rv,
                CmpOp::Le => lv <= rv,
                CmpOp::Eq => lv == rv,
                CmpOp::Gt => lv > rv,
                CmpOp::Ge => lv >= rv,
                CmpOp::Ne => lv != rv,
            }
        }
        Formula::Not(a) => !eval_single_var(a, var, x)?,
        Formula::And(a, b) => eval_single_var(a, var, x)? && eval_single_var(b, var, x)?,
        Formula::Or(a, b) => eval_single_var(a, var, x)? || eval_single_var(b, var, x)?,
        Formula::Implies(a, b) => !eval_single_var(a, var, x)? || eval_single_var(b, var, x)?,
        _ => return None,
    })
}

fn term_value(t: &Term, var: &Name, x: &Rational) -> Option<Rational> {
    match t {
        Term::Variable(v) if v == var => Some(x.clone()),
        _ => const_eval(t),
    }
}

/// Exact value of a closed term, if it is one.
fn const_eval(t: &Term) -> Option<Rational> {
    match t {
        Term::Constant(c) => Some(c.clone()),
        Term::Neg(a) => Some(-const_eval(a)?),
        Term::Plus(a, b) => Some(const_eval(a)? + const_eval(b)?),
        Term::Minus(a, b) => Some(const_eval(a)? - const_eval(b)?),
        Term::Times(a, b) => Some(const_eval(a)? * const_eval(b)?),
        Term::Divide(a, b) => {
            let d = const_eval(b)?;
            if d.is_zero() {
                None
            } else {
                Some(const_eval(a)? / d)
            }
        }
        Term::Power(a, e) => {
            let base = const_eval(a)?;
            Some(num_traits::pow::pow(base, *e as usize))
        }
        Term::Variable(_) | Term::Apply(..) => None,
    }
}
