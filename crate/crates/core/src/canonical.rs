//! Canonical control-loop form.
//!
//! Composing a program with its attacked twin requires the original's
//! nondeterminism to be resolvable from outside, so both copies can be
//! driven by the same decisions. This module rewrites the loop body
//! `ctrl; plant` so that every high-integrity nondeterministic step in
//! `ctrl` is decided by a fresh choice variable assigned in a prefix:
//!
//! * a leading run of high-integrity `x := *` statements is adopted as the
//!   prefix unchanged — the assigned variables already behave as choice
//!   variables; a definition whose body is nothing but such assignments,
//!   referenced at the head of the loop, is adopted the same way;
//! * any other high-integrity `x := *` becomes `x := c` with `c := *`
//!   hoisted to the prefix;
//! * a branching choice in which every branch starts with a test is left
//!   alone — the state decides it; a choice with an untested branch gets a
//!   fresh `c := *` and becomes `if (c != 0) then {...} else {...}`.
//!
//! Low-integrity `x := *` sites (declared `/*@low*/`, or introduced by the
//! sensor attack) stay free: they are the adversary's moves and must not
//! be coupled between the copies.
//!
//! The rewrite preserves the model's definition structure: a site inside a
//! named definition is rewritten inside that definition, and the hoisted
//! prefix becomes (or extends) a `choices` definition referenced from the
//! control definition's head. A definition that needs rewriting but is
//! referenced more than once cannot be rewritten in place and is rejected;
//! so are nested loops, whose iteration count cannot be coupled.

use std::collections::BTreeSet;
use std::mem;

use thiserror::Error;

use crate::ast::*;
use crate::expand::{expand_abbreviations, expand_formula, ExpandError};
use crate::syntax::printer::{right_choice_branches, ProgPath, Step};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CanonError {
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error("the problem must state safety of one repeated control loop, found none")]
    NoLoop,
    #[error("the problem must contain exactly one modality, found {0}")]
    ModalityCount(usize),
    #[error("the loop body must end with the plant dynamics (an ODE)")]
    NoPlant,
    #[error("ctrl must be discrete; it contains an ODE before the plant")]
    OdeInsideCtrl,
    #[error("nested loops in ctrl are not supported: their iteration count cannot be coupled")]
    NestedLoop,
    #[error("definition `{0}` needs rewriting but is referenced more than once")]
    SharedDefinition(Name),
}

/// Where a choice variable came from.
#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize)]
pub enum OriginKind {
    /// A leading `x := *` adopted unchanged; the choice variable is `x`.
    AdoptedNondetAssign,
    /// `x := *` replaced by `x := c`.
    ReplacedNondetAssign { target: Name },
    /// A branching choice now decided by `c != 0`.
    ResolvedChoice,
}

#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize)]
pub struct ChoiceOrigin {
    pub var: Name,
    pub kind: OriginKind,
    /// Definition the rewritten statement lives in, or `None` when it is
    /// written inline in the problem.
    pub def: Option<Name>,
    /// Site of the rewritten statement in the input, rooted at the named
    /// definition's body or at the problem formula.
    pub path: ProgPath,
}

/// Where the hoisted `c := *` prefix ended up.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ChoicesPlacement {
    /// No choice variables were needed.
    None,
    /// The first `n` statements of the loop body, written inline.
    InlineBody(usize),
    /// The loop body starts with a reference to this definition.
    BodyRef(Name),
    /// The control definition's body starts with a reference to the
    /// choices definition: `ctrl ::= choices; ...`.
    CtrlHead { ctrl: Name, choices: Name },
}

impl ChoicesPlacement {
    /// Name of the definition holding the prefix, when there is one.
    pub fn choices_def(&self) -> Option<&Name> {
        match self {
            ChoicesPlacement::BodyRef(n) => Some(n),
            ChoicesPlacement::CtrlHead { choices, .. } => Some(choices),
            _ => None,
        }
    }
}

/// The model rewritten so its loop runs `choices; ctrl; plant`.
#[derive(Clone, Debug)]
pub struct CanonicalModel {
    /// The whole model in canonical form, definitions preserved.
    pub model: Model,
    /// Premises of the implication chain guarding the safety statement,
    /// as written.
    pub premises: Vec<Formula>,
    pub post: Formula,
    /// The `c := *` statements, in execution order.
    pub choices: Vec<HybridProgram>,
    /// Choice variables in hoist order.
    pub choice_vars: Vec<Name>,
    pub origins: Vec<ChoiceOrigin>,
    pub placement: ChoicesPlacement,
    /// Path prefix of the loop's modality within the problem formula.
    pub box_path: ProgPath,
}

impl CanonicalModel {
    /// The fully expanded canonical loop body `choices; ctrl; plant`.
    pub fn loop_body(&self) -> HybridProgram {
        let expanded = expand_abbreviations(&self.model)
            .expect("a canonical model expands: its references were validated when it was built");
        let mut cur = &expanded.problem;
        while let Formula::Implies(_, b) = cur {
            cur = b;
        }
        match cur {
            Formula::Box(p, _) => match p.as_ref() {
                HybridProgram::Loop(body) => (**body).clone(),
                _ => unreachable!("a canonical problem is built around one loop"),
            },
            _ => unreachable!("a canonical problem is built around one modality"),
        }
    }

    /// The whole canonical program `{choices; ctrl; plant}*`.
    pub fn program(&self) -> HybridProgram {
        HybridProgram::repeat(self.loop_body())
    }

    /// The expanded loop body split into `(choices, ctrl, plant)`; an
    /// empty ctrl comes back as `?true`.
    pub fn parts(&self) -> (Vec<HybridProgram>, HybridProgram, HybridProgram) {
        let body = self.loop_body();
        let stmts = seq_stmts(&body);
        let (last, rest) = stmts.split_last().expect("a canonical body ends with the plant");
        let n = self.choices.len();
        let choices = rest[..n].iter().map(|s| (*s).clone()).collect();
        let ctrl = if rest.len() == n {
            HybridProgram::Test(Formula::True)
        } else {
            seq_all(rest[n..].iter().map(|s| (*s).clone()).collect())
        };
        (choices, ctrl, (*last).clone())
    }
}

/// Rewrites a model's control loop into canonical form.
pub fn canonicalize(m: &Model) -> Result<CanonicalModel, CanonError> {
    // Expansion validates that every reference resolves and lets us count
    // modalities through abbreviations.
    let expanded_problem = expand_formula(&m.problem, m)?;
    let total = count_boxes(&expanded_problem);
    if total != 1 {
        return Err(CanonError::ModalityCount(total));
    }

    let (premises, looped, post, box_path) = split_problem(&m.problem)?;
    let HybridProgram::Loop(body) = looped else {
        return Err(CanonError::NoLoop);
    };

    let stmts = seq_stmts(body);
    let Some((plant_stmt, ctrl_stmts)) = stmts.split_last() else {
        return Err(CanonError::NoPlant);
    };
    if !resolves_to_ode(plant_stmt, m) {
        return Err(CanonError::NoPlant);
    }

    let mut hoist = Hoister {
        defs: m.definitions.clone(),
        ref_counts: ref_counts(m, body),
        low: &m.low_integrity_vars,
        taken: all_names(m),
        next: 0,
        choices: Vec::new(),
        choice_vars: Vec::new(),
        origins: Vec::new(),
        done: BTreeSet::new(),
        site_def: None,
        path: pathcat(&box_path, Step::Body),
    };

    // A leading run of high-integrity nondeterministic assignments already
    // is a choices prefix; adopt it. The run may be written inline or live
    // in its own definition referenced first (directly or at the head of
    // the control definition).
    let mut first_ctrl = 0usize;
    let mut adopted_def: Option<Name> = None;
    match ctrl_stmts.first() {
        Some(HybridProgram::Ref(n)) => {
            // Only a block referenced exactly once can be adopted: a second
            // reference would rerun — and redraw — the same assignments.
            let once = hoist.ref_counts.get(n).copied().unwrap_or(0) == 1;
            if let (Some(run), true) = (assign_run(n, &hoist.defs, hoist.low), once) {
                hoist.adopt_def(n, &run);
                adopted_def = Some(n.clone());
                first_ctrl = 1;
            } else {
                let head = match lookup(&hoist.defs, n) {
                    Some(Definition::Program(db)) => match seq_stmts(db).first() {
                        Some(HybridProgram::Ref(inner)) => Some((*inner).clone()),
                        _ => None,
                    },
                    _ => None,
                };
                if let Some(inner) = head {
                    let once = hoist.ref_counts.get(&inner).copied().unwrap_or(0) == 1;
                    if let (Some(run), true) =
                        (assign_run(&inner, &hoist.defs, hoist.low), once)
                    {
                        hoist.adopt_def(&inner, &run);
                        adopted_def = Some(inner);
                    }
                }
            }
        }
        _ => {
            for (i, s) in ctrl_stmts.iter().enumerate() {
                match s {
                    HybridProgram::AssignAny(x) if !hoist.low.contains(x) => {
                        hoist.choices.push((*s).clone());
                        hoist.choice_vars.push(x.clone());
                        hoist.origins.push(ChoiceOrigin {
                            var: x.clone(),
                            kind: OriginKind::AdoptedNondetAssign,
                            def: None,
                            path: pathcat(&hoist.path, Step::Stmt(i)),
                        });
                        first_ctrl = i + 1;
                    }
                    _ => break,
                }
            }
        }
    }
    let adopted = hoist.choices.len();

    let mut rest = Vec::new();
    for (i, s) in ctrl_stmts.iter().enumerate().skip(first_ctrl) {
        hoist.path.push(Step::Stmt(i));
        let rewritten = hoist.stmt(s)?;
        hoist.path.pop();
        rest.push(rewritten);
    }

    // Put freshly hoisted assignments where the model's shape wants them:
    // appended to an adopted choices definition, into a new `choices`
    // definition when the control part is one named definition, or inline
    // right after the adopted run.
    let new_hoists: Vec<HybridProgram> = hoist.choices[adopted..].to_vec();
    let placement;
    let mut body_stmts: Vec<HybridProgram> = Vec::new();
    if let Some(cd) = &adopted_def {
        if !new_hoists.is_empty() {
            let Some(Definition::Program(db)) = lookup(&hoist.defs, cd) else {
                unreachable!("the adopted definition was just looked up");
            };
            let mut run: Vec<HybridProgram> = seq_stmts(db).into_iter().cloned().collect();
            run.extend(new_hoists);
            set_program(&mut hoist.defs, cd, seq_all(run));
        }
        match ctrl_stmts.first() {
            Some(HybridProgram::Ref(n)) if n == cd => {
                placement = ChoicesPlacement::BodyRef(cd.clone());
                body_stmts.push(HybridProgram::Ref(cd.clone()));
            }
            Some(HybridProgram::Ref(n)) => {
                placement = ChoicesPlacement::CtrlHead { ctrl: n.clone(), choices: cd.clone() };
            }
            _ => unreachable!("a definition is only adopted behind a reference"),
        }
    } else if hoist.choices.is_empty() {
        placement = ChoicesPlacement::None;
    } else if adopted == 0 && rest.len() == 1 && matches!(&rest[0], HybridProgram::Ref(_)) {
        let HybridProgram::Ref(ctrl_name) = rest[0].clone() else { unreachable!() };
        if hoist.ref_counts.get(&ctrl_name).copied().unwrap_or(0) > 1 {
            return Err(CanonError::SharedDefinition(ctrl_name));
        }
        let choices_name = fresh_def_name("choices", &hoist.taken);
        let first_prog = hoist
            .defs
            .iter()
            .position(|(_, d)| matches!(d, Definition::Program(_)))
            .unwrap_or(hoist.defs.len());
        hoist.defs.insert(
            first_prog,
            (choices_name.clone(), Definition::Program(seq_all(new_hoists))),
        );
        let Some(Definition::Program(cb)) = lookup(&hoist.defs, &ctrl_name) else {
            unreachable!("the control reference resolved during expansion");
        };
        let prefixed = HybridProgram::seq(HybridProgram::Ref(choices_name.clone()), cb.clone());
        set_program(&mut hoist.defs, &ctrl_name, prefixed);
        placement = ChoicesPlacement::CtrlHead { ctrl: ctrl_name, choices: choices_name };
    } else {
        // Inline: adopted run stays put, new hoists follow it.
        body_stmts.extend(ctrl_stmts[..first_ctrl].iter().map(|s| (*s).clone()));
        body_stmts.extend(new_hoists);
        placement = ChoicesPlacement::InlineBody(hoist.choices.len());
    }
    body_stmts.extend(rest);
    body_stmts.push((*plant_stmt).clone());

    let mut problem = Formula::boxed(HybridProgram::repeat(seq_all(body_stmts)), post.clone());
    for p in premises.iter().rev() {
        problem = Formula::implies(p.clone(), problem);
    }
    let mut program_vars = m.program_vars.clone();
    program_vars.extend(hoist.choice_vars[adopted..].iter().cloned());

    let model = Model {
        definitions: hoist.defs,
        program_vars,
        problem,
        low_integrity_vars: m.low_integrity_vars.clone(),
    };
    debug_assert!(expand_abbreviations(&model).is_ok());

    Ok(CanonicalModel {
        model,
        premises,
        post,
        choices: hoist.choices,
        choice_vars: hoist.choice_vars,
        origins: hoist.origins,
        placement,
        box_path,
    })
}

/// Splits `p1 -> (p2 -> ... -> [a]post)`; the modality count was already
/// validated on the expanded problem.
fn split_problem(
    problem: &Formula,
) -> Result<(Vec<Formula>, &HybridProgram, Formula, ProgPath), CanonError> {
    let mut premises = Vec::new();
    let mut cur = problem;
    loop {
        match cur {
            Formula::Implies(a, b) => {
                premises.push((**a).clone());
                cur = b;
            }
            Formula::Box(p, post) => {
                return Ok((premises, p, (**post).clone(), vec![Step::Modal(0)]));
            }
            _ => return Err(CanonError::NoLoop),
        }
    }
}

fn count_boxes(f: &Formula) -> usize {
    match f {
        Formula::Box(p, rest) => 1 + count_boxes_prog(p) + count_boxes(rest),
        Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => count_boxes(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            count_boxes(a) + count_boxes(b)
        }
        _ => 0,
    }
}

fn count_boxes_prog(p: &HybridProgram) -> usize {
    match p {
        HybridProgram::Test(f) => count_boxes(f),
        HybridProgram::Ode { domain, .. } => count_boxes(domain),
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => {
            count_boxes_prog(a) + count_boxes_prog(b)
        }
        HybridProgram::Loop(a) => count_boxes_prog(a),
        _ => 0,
    }
}

fn all_names(m: &Model) -> BTreeSet<Name> {
    let mut taken = m.declared_names();
    taken.extend(m.program_vars.iter().cloned());
    taken
}

fn lookup<'a>(defs: &'a [(Name, Definition)], n: &Name) -> Option<&'a Definition> {
    defs.iter().find(|(d, _)| d == n).map(|(_, d)| d)
}

fn set_program(defs: &mut [(Name, Definition)], n: &Name, body: HybridProgram) {
    let slot = defs
        .iter_mut()
        .find(|(d, _)| d == n)
        .expect("only existing definitions are rewritten");
    slot.1 = Definition::Program(body);
}

fn fresh_def_name(base: &str, taken: &BTreeSet<Name>) -> Name {
    let mut cand = Name::new(base);
    let mut bump = 0u64;
    while taken.contains(&cand) {
        bump += 1;
        cand = Name::new(format!("{}_{}", base, bump));
    }
    cand
}

/// How many times each definition is referenced from program positions:
/// other definition bodies and the loop body itself.
fn ref_counts(m: &Model, body: &HybridProgram) -> std::collections::BTreeMap<Name, usize> {
    let mut counts = std::collections::BTreeMap::new();
    for (_, d) in &m.definitions {
        if let Definition::Program(p) = d {
            count_refs(p, &mut counts);
        }
    }
    count_refs(body, &mut counts);
    counts
}

fn count_refs(p: &HybridProgram, counts: &mut std::collections::BTreeMap<Name, usize>) {
    match p {
        HybridProgram::Ref(n) => *counts.entry(n.clone()).or_insert(0) += 1,
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => {
            count_refs(a, counts);
            count_refs(b, counts);
        }
        HybridProgram::Loop(a) => count_refs(a, counts),
        _ => {}
    }
}

/// The definition's body when it is nothing but high-integrity `x := *`
/// statements — an adoptable choices block.
fn assign_run(
    n: &Name,
    defs: &[(Name, Definition)],
    low: &BTreeSet<Name>,
) -> Option<Vec<HybridProgram>> {
    let Some(Definition::Program(body)) = lookup(defs, n) else {
        return None;
    };
    let stmts = seq_stmts(body);
    if !stmts.is_empty()
        && stmts
            .iter()
            .all(|s| matches!(s, HybridProgram::AssignAny(x) if !low.contains(x)))
    {
        Some(stmts.into_iter().cloned().collect())
    } else {
        None
    }
}

fn resolves_to_ode(p: &HybridProgram, m: &Model) -> bool {
    match p {
        HybridProgram::Ode { .. } => true,
        HybridProgram::Ref(n) => match m.lookup(n) {
            Some(Definition::Program(body)) => resolves_to_ode(body, m),
            _ => false,
        },
        _ => false,
    }
}

fn pathcat(path: &ProgPath, step: Step) -> ProgPath {
    let mut p = path.clone();
    p.push(step);
    p
}

struct Hoister<'a> {
    defs: Vec<(Name, Definition)>,
    ref_counts: std::collections::BTreeMap<Name, usize>,
    low: &'a BTreeSet<Name>,
    taken: BTreeSet<Name>,
    next: usize,
    choices: Vec<HybridProgram>,
    choice_vars: Vec<Name>,
    origins: Vec<ChoiceOrigin>,
    /// Definitions already rewritten (or adopted) this run.
    done: BTreeSet<Name>,
    site_def: Option<Name>,
    path: ProgPath,
}

impl Hoister<'_> {
    fn fresh(&mut self) -> Name {
        loop {
            let cand = if self.next == 0 {
                Name::new("c")
            } else {
                Name::new(format!("c{}", self.next))
            };
            self.next += 1;
            if !self.taken.contains(&cand) {
                self.taken.insert(cand.clone());
                return cand;
            }
        }
    }

    fn adopt_def(&mut self, n: &Name, run: &[HybridProgram]) {
        for (i, s) in run.iter().enumerate() {
            let HybridProgram::AssignAny(x) = s else { unreachable!() };
            self.choices.push(s.clone());
            self.choice_vars.push(x.clone());
            self.origins.push(ChoiceOrigin {
                var: x.clone(),
                kind: OriginKind::AdoptedNondetAssign,
                def: Some(n.clone()),
                path: vec![Step::Stmt(i)],
            });
        }
        self.done.insert(n.clone());
    }

    fn hoisted(&mut self, kind: OriginKind) -> Name {
        let c = self.fresh();
        self.choices.push(HybridProgram::assign_any(c.clone()));
        self.choice_vars.push(c.clone());
        self.origins.push(ChoiceOrigin {
            var: c.clone(),
            kind,
            def: self.site_def.clone(),
            path: self.path.clone(),
        });
        c
    }

    fn rewrite_def(&mut self, n: &Name) -> Result<(), CanonError> {
        if !self.done.insert(n.clone()) {
            return Ok(());
        }
        let Some(Definition::Program(body)) = lookup(&self.defs, n) else {
            // Unresolvable or wrongly sorted references were caught by the
            // expansion check before the walk started.
            return Ok(());
        };
        let body = body.clone();
        let saved_def = mem::replace(&mut self.site_def, Some(n.clone()));
        let saved_path = mem::take(&mut self.path);
        let rewritten = self.program(&body);
        self.path = saved_path;
        self.site_def = saved_def;
        let rewritten = rewritten?;
        if rewritten != body {
            if self.ref_counts.get(n).copied().unwrap_or(0) > 1 {
                return Err(CanonError::SharedDefinition(n.clone()));
            }
            set_program(&mut self.defs, n, rewritten);
        }
        Ok(())
    }

    fn program(&mut self, p: &HybridProgram) -> Result<HybridProgram, CanonError> {
        let mut out = Vec::new();
        for (i, s) in seq_stmts(p).iter().enumerate() {
            self.path.push(Step::Stmt(i));
            let r = self.stmt(s);
            self.path.pop();
            out.push(r?);
        }
        Ok(seq_all(out))
    }

    fn stmt(&mut self, s: &HybridProgram) -> Result<HybridProgram, CanonError> {
        match s {
            HybridProgram::AssignAny(x) if !self.low.contains(x) => {
                let c = self.hoisted(OriginKind::ReplacedNondetAssign { target: x.clone() });
                Ok(HybridProgram::assign(x.clone(), Term::var(c)))
            }
            HybridProgram::Assign(..) | HybridProgram::AssignAny(_) | HybridProgram::Test(_) => {
                Ok(s.clone())
            }
            HybridProgram::Choice(..) => {
                let branches = right_choice_branches(s);
                if branches.iter().all(|b| self.starts_with_test(b)) {
                    // State-decided branching: rewrite inside, keep the shape.
                    let mut rewritten = Vec::new();
                    for (i, b) in branches.iter().enumerate() {
                        self.path.push(Step::Branch(i));
                        let r = self.program(b);
                        self.path.pop();
                        rewritten.push(r?);
                    }
                    let mut it = rewritten.into_iter().rev();
                    let last = it.next().expect("a choice has branches");
                    Ok(it.fold(last, |acc, b| HybridProgram::choice(b, acc)))
                } else {
                    self.resolve_choice(&branches, 0)
                }
            }
            HybridProgram::Loop(_) => Err(CanonError::NestedLoop),
            HybridProgram::Ode { .. } => Err(CanonError::OdeInsideCtrl),
            HybridProgram::Seq(..) => self.program(s),
            HybridProgram::Ref(n) => {
                self.rewrite_def(n)?;
                Ok(s.clone())
            }
        }
    }

    /// Whether a branch begins with a test, looking through references.
    fn starts_with_test(&self, b: &HybridProgram) -> bool {
        match seq_stmts(b).first() {
            Some(HybridProgram::Test(_)) => true,
            Some(HybridProgram::Ref(n)) => match lookup(&self.defs, n) {
                Some(Definition::Program(db)) => self.starts_with_test(db),
                _ => false,
            },
            _ => false,
        }
    }

    /// `{A ++ B ++ ...}` with an untested branch: each binary node of the
    /// right spine gets a fresh variable, becoming
    /// `if (c != 0) then {A} else {rest}`. `first` is the input-tree index
    /// of `branches[0]`, kept so origin paths point at the input.
    fn resolve_choice(
        &mut self,
        branches: &[&HybridProgram],
        first: usize,
    ) -> Result<HybridProgram, CanonError> {
        if branches.len() == 1 {
            self.path.push(Step::Branch(first));
            let r = self.program(branches[0]);
            self.path.pop();
            return r;
        }
        let c = self.hoisted(OriginKind::ResolvedChoice);
        let guard = Formula::cmp(CmpOp::Ne, Term::var(c), Term::num(0));

        self.path.push(Step::Branch(first));
        let then_b = self.program(branches[0]);
        self.path.pop();
        let else_b = self.resolve_choice(&branches[1..], first + 1)?;

        Ok(HybridProgram::choice(
            HybridProgram::seq(HybridProgram::test(guard.clone()), then_b?),
            HybridProgram::seq(HybridProgram::test(Formula::not(guard)), else_b),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::parse_model;
    use crate::syntax::printer::{print_model, print_program, Step};

    fn model(src: &str) -> Model {
        parse_model("t.hp", src).unwrap().model
    }

    fn canon(src: &str) -> CanonicalModel {
        canonicalize(&model(src)).unwrap()
    }

    #[test]
    fn leading_nondet_assignments_are_adopted() {
        let c = canon(
            "ProgramVariables. R a, v, t.\n\
             Problem. v <= 5 -> [{a := *; ?a <= 1; {v' = a, t' = 1}}*] v <= 10 End.",
        );
        assert_eq!(c.choices.len(), 1);
        assert_eq!(print_program(&c.choices[0]), "a := *");
        let (_, ctrl, plant) = c.parts();
        assert_eq!(print_program(&ctrl), "?a <= 1");
        assert_eq!(print_program(&plant), "{v' = a, t' = 1}");
        assert_eq!(c.premises.len(), 1);
        assert_eq!(c.choice_vars, vec![Name::new("a")]);
        assert_eq!(c.placement, ChoicesPlacement::InlineBody(1));
        assert_eq!(c.origins[0].kind, OriginKind::AdoptedNondetAssign);
        assert_eq!(c.origins[0].def, None);
        assert_eq!(
            c.origins[0].path,
            vec![Step::Modal(0), Step::Body, Step::Stmt(0)]
        );
    }

    #[test]
    fn interior_nondet_assignment_is_replaced_by_a_choice_variable() {
        let c = canon(
            "ProgramVariables. R a, w, v.\n\
             Problem. [{a := 1; w := *; {v' = a}}*] v = v End.",
        );
        assert_eq!(c.choices.len(), 1);
        assert_eq!(print_program(&c.choices[0]), "c := *");
        let (_, ctrl, _) = c.parts();
        assert_eq!(print_program(&ctrl), "a := 1; w := c");
        assert_eq!(
            c.origins[0].kind,
            OriginKind::ReplacedNondetAssign { target: Name::new("w") }
        );
        assert!(c.model.program_vars.contains(&Name::new("c")));
    }

    #[test]
    fn fully_tested_choices_stay_in_place() {
        let c = canon(
            "ProgramVariables. R s, a, v.\n\
             Problem. [{if (s <= 5) then {a := 1} else {a := -1}; {v' = a}}*] v = v End.",
        );
        assert!(c.choices.is_empty());
        assert_eq!(c.placement, ChoicesPlacement::None);
        let (_, ctrl, _) = c.parts();
        assert_eq!(
            print_program(&ctrl),
            "if (s <= 5) then {a := 1} else {a := -1}"
        );
    }

    #[test]
    fn untested_choice_is_resolved_by_a_fresh_variable() {
        let c = canon(
            "ProgramVariables. R a, v.\n\
             Problem. [{{a := 1 ++ a := -1}; {v' = a}}*] v = v End.",
        );
        assert_eq!(c.choices.len(), 1);
        let (_, ctrl, _) = c.parts();
        assert_eq!(
            print_program(&ctrl),
            "if (c != 0) then {a := 1} else {a := -1}"
        );
        assert_eq!(c.origins[0].kind, OriginKind::ResolvedChoice);
        // The rewritten loop prints as a well-formed model.
        let printed = print_model(&c.model);
        assert!(printed.contains("c := *"), "{}", printed);
    }

    #[test]
    fn three_way_choice_uses_one_variable_per_node() {
        let c = canon(
            "ProgramVariables. R a, v.\n\
             Problem. [{{a := 1 ++ a := 2 ++ a := 3}; {v' = a}}*] v = v End.",
        );
        assert_eq!(c.choices.len(), 2);
        assert_eq!(c.choice_vars, vec![Name::new("c"), Name::new("c1")]);
        let (_, ctrl, _) = c.parts();
        assert_eq!(
            print_program(&ctrl),
            "if (c != 0) then {a := 1} else {if (c1 != 0) then {a := 2} else {a := 3}}"
        );
    }

    #[test]
    fn low_integrity_assignments_stay_free() {
        let c = canon(
            "ProgramVariables. R s, a, v.\n\
             Problem. [{/*@low*/ s := *; a := -s; {v' = a}}*] v = v End.",
        );
        assert!(c.choices.is_empty());
        let (_, ctrl, _) = c.parts();
        assert_eq!(print_program(&ctrl), "s := *; a := -s");
    }

    #[test]
    fn fresh_variables_dodge_existing_names() {
        let c = canon(
            "ProgramVariables. R c, a, v.\n\
             Problem. [{c := 0; {a := 1 ++ a := 2}; {v' = a}}*] v = v End.",
        );
        assert_eq!(print_program(&c.choices[0]), "c1 := *");
    }

    #[test]
    fn sites_inside_definitions_are_rewritten_in_place() {
        let c = canon(
            "Definitions.\n\
             HP accel ::= { ?v <= 8; a := 1 }.\n\
             HP brake ::= { a := -1 }.\n\
             HP ctrl ::= { s := v; { accel ++ brake }; t := 0 }.\n\
             HP plant ::= { {v' = a, t' = 1 & t <= 1} }.\n\
             ProgramVariables. R s, a, v, t.\n\
             Problem. [{ctrl; plant}*] v >= 0 End.",
        );
        assert_eq!(c.choice_vars, vec![Name::new("c")]);
        // The choice is decided inside `ctrl`, keeping the references.
        let printed = print_model(&c.model);
        assert!(
            printed.contains("HP ctrl ::= choices; s := v; if (c != 0) then {accel} else {brake}; t := 0."),
            "{}",
            printed
        );
        assert!(printed.contains("HP choices ::= c := *."), "{}", printed);
        assert_eq!(c.origins[0].def, Some(Name::new("ctrl")));
        assert_eq!(c.origins[0].path, vec![Step::Stmt(1)]);
        // `choices` is declared ahead of the program definitions it feeds.
        let names: Vec<&str> =
            c.model.definitions.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["choices", "accel", "brake", "ctrl", "plant"]);
    }

    #[test]
    fn a_canonical_model_passes_through_unchanged() {
        let src = "Definitions.\n\
             HP choices ::= { c := * }.\n\
             HP ctrl ::= { choices; s := v; if (c != 0) then {a := 1} else {a := -1} }.\n\
             HP plant ::= { {v' = a, t' = 1 & t <= 1} }.\n\
             ProgramVariables. R c, s, a, v, t.\n\
             Problem. [{ctrl; t := 0; plant}*] v >= 0 End.";
        let m = model(src);
        let c = canonicalize(&m).unwrap();
        assert_eq!(c.model, m);
        assert_eq!(c.choice_vars, vec![Name::new("c")]);
        assert_eq!(
            c.placement,
            ChoicesPlacement::CtrlHead { ctrl: Name::new("ctrl"), choices: Name::new("choices") }
        );
        assert_eq!(c.origins[0].kind, OriginKind::AdoptedNondetAssign);
        assert_eq!(c.origins[0].def, Some(Name::new("choices")));
    }

    #[test]
    fn canonicalizing_twice_is_the_same_as_once() {
        let c = canon(
            "Definitions.\n\
             HP accel ::= { ?v <= 8; a := 1 }.\n\
             HP brake ::= { a := -1 }.\n\
             HP ctrl ::= { s := v; { accel ++ brake }; t := 0 }.\n\
             HP plant ::= { {v' = a, t' = 1 & t <= 1} }.\n\
             ProgramVariables. R s, a, v, t.\n\
             Problem. [{ctrl; plant}*] v >= 0 End.",
        );
        let again = canonicalize(&c.model).unwrap();
        assert_eq!(again.model, c.model);
        assert_eq!(again.choice_vars, c.choice_vars);
    }

    #[test]
    fn a_shared_definition_that_needs_rewriting_is_rejected() {
        let m = model(
            "Definitions.\n\
             HP pick ::= { { a := 1 ++ a := 2 } }.\n\
             ProgramVariables. R a, v.\n\
             Problem. [{pick; pick; {v' = a}}*] v = v End.",
        );
        assert_eq!(
            canonicalize(&m).unwrap_err(),
            CanonError::SharedDefinition(Name::new("pick"))
        );
    }

    #[test]
    fn shape_errors_are_reported() {
        let no_loop = model("ProgramVariables. R v.\nProblem. [v := 1] v = 1 End.");
        assert_eq!(canonicalize(&no_loop).unwrap_err(), CanonError::NoLoop);

        let no_plant = model("ProgramVariables. R v.\nProblem. [{v := 1}*] v = 1 End.");
        assert_eq!(canonicalize(&no_plant).unwrap_err(), CanonError::NoPlant);

        let two_boxes = model(
            "ProgramVariables. R v.\nProblem. [{v := 1; {v' = 1}}*] v = 1 & [v := 2] v = 2 End.",
        );
        assert_eq!(canonicalize(&two_boxes).unwrap_err(), CanonError::ModalityCount(2));

        let nested = model(
            "ProgramVariables. R a, v.\n\
             Problem. [{{a := *; ?a <= 1}*; {v' = a}}*] v = v End.",
        );
        assert_eq!(canonicalize(&nested).unwrap_err(), CanonError::NestedLoop);

        let ode_in_ctrl = model(
            "ProgramVariables. R a, v, t.\n\
             Problem. [{{t' = 1}; a := 1; {v' = a}}*] v = v End.",
        );
        assert_eq!(canonicalize(&ode_in_ctrl).unwrap_err(), CanonError::OdeInsideCtrl);
    }

    #[test]
    fn empty_ctrl_becomes_a_trivial_test() {
        let c = canon("ProgramVariables. R v.\nProblem. [{{v' = 1}}*] v = v End.");
        let (choices, ctrl, _) = c.parts();
        assert!(choices.is_empty());
        assert_eq!(ctrl, HybridProgram::Test(Formula::True));
        assert_eq!(print_program(&c.loop_body()), "{v' = 1}");
    }
}
