//! Interleaved self-composition of a canonical model with its attacked twin.
//!
//! To state "the attack cannot steer these variables" as one ordinary
//! safety property, the canonical loop is paired with a renamed copy of
//! itself in which the sensors are overwritten by the attack. Both copies
//! run in a single loop body — original control, twin control, then both
//! plants as one ODE — and the obligation says the agreement variables
//! coincide at every loop boundary:
//!
//! ```text
//! eq -> [{ctrl_comp; plant_comp}*] eq        eq ::= x = x_1 & ...
//! ```
//!
//! The twin mirrors the original's high-integrity decisions by assigning
//! its choice variables from the original's (`c_1 := c`) instead of
//! drawing fresh ones; attacked sensor assignments become free (`s_1 := *`)
//! so the box modality quantifies over every forged value.
//!
//! The construction works at the definition level: every definition the
//! loop uses that touches renamed state gets a `_1` twin, so the composed
//! model reads like the original. Definitions that only the dropped
//! pre/postcondition used — and the original plant, which the merged ODE
//! replaces — are omitted.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ast::*;
use crate::attack::{attack_program, AttackError};
use crate::canonical::{CanonicalModel, ChoicesPlacement};
use crate::expand::{expand_abbreviations, expand_program, ExpandError};
use crate::subst::{rename_formula, rename_program};
use crate::vars;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("`{0}` is both attacked and in the agreement set; agreement on a forged value is vacuous")]
    EqSetOverlapsSensors(Name),
    #[error("`{0}` is never bound by the loop, so the copies trivially agree on it")]
    EqSetNotBound(Name),
    #[error("choice variable `{0}` cannot be a sensor: the twin mirrors it by construction")]
    ChoiceCoupledSensor(Name),
}

/// Names the composition introduced.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ComposedNames {
    /// The agreement predicate, when the model keeps definitions.
    pub eq: Option<Name>,
    /// Combined control: `ctrl_comp ::= choices; ctrl; choices_1; ctrl_1`.
    pub ctrl: Option<Name>,
    /// Merged dynamics of both copies.
    pub plant: Option<Name>,
    /// The twin's choice coupling block (`c_1 := c; ...`).
    pub choices_twin: Option<Name>,
    /// Original definition -> its twin.
    pub def_twins: BTreeMap<Name, Name>,
}

#[derive(Clone, Debug)]
pub struct CompositionResult {
    pub model: Model,
    /// Original variable -> twin variable, over the loop's bound variables.
    pub renaming: BTreeMap<Name, Name>,
    /// Agreement variables, in the order given.
    pub eq_set: Vec<Name>,
    pub names: ComposedNames,
}

/// Builds the interleaved composition of a canonical model and its
/// attacked twin, with the agreement obligation over `eq_set`.
pub fn compose(
    canon: &CanonicalModel,
    sensors: &BTreeSet<Name>,
    eq_set: &[Name],
) -> Result<CompositionResult, ComposeError> {
    let m = &canon.model;
    for s in sensors {
        if !m.program_vars.contains(s) {
            return Err(AttackError::NotASensor(s.clone()).into());
        }
        if canon.choice_vars.contains(s) {
            return Err(ComposeError::ChoiceCoupledSensor(s.clone()));
        }
    }

    // The loop's bound variables are what the twin renames (Definitions
    // keep their own names; constants are shared).
    let expanded = expand_abbreviations(m)?;
    let body = loop_body(&expanded.problem);
    let bound: BTreeSet<Name> =
        vars::bv(&body).into_iter().filter(|n| !n.is_primed()).collect();
    for v in eq_set {
        if sensors.contains(v) {
            return Err(ComposeError::EqSetOverlapsSensors(v.clone()));
        }
        if !bound.contains(v) {
            return Err(ComposeError::EqSetNotBound(v.clone()));
        }
    }
    for eq in plant_equations(&body) {
        if sensors.contains(&eq.var) {
            return Err(AttackError::SensorInPlant(eq.var.clone()).into());
        }
    }

    let mut taken = m.declared_names();
    taken.extend(m.program_vars.iter().cloned());
    let renaming = fresh_names(&bound, &taken, "_1");
    taken.extend(renaming.values().cloned());

    // Split the canonical body as written: choices prefix, control
    // statements, plant.
    let stmts: Vec<HybridProgram> = {
        let b = loop_body(&m.problem);
        seq_stmts(&b).into_iter().cloned().collect()
    };
    let (plant_stmt, rest) = stmts.split_last().expect("a canonical body ends with the plant");
    let (choices_part, ctrl_part): (Vec<HybridProgram>, Vec<HybridProgram>) =
        match &canon.placement {
            ChoicesPlacement::None => (Vec::new(), rest.to_vec()),
            ChoicesPlacement::InlineBody(k) => (rest[..*k].to_vec(), rest[*k..].to_vec()),
            ChoicesPlacement::BodyRef(n) => {
                (vec![HybridProgram::Ref(n.clone())], rest[1..].to_vec())
            }
            // Lifted out of the control definition so the twin's coupling
            // block can run between the copies.
            ChoicesPlacement::CtrlHead { .. } => (Vec::new(), rest.to_vec()),
        };

    let mut definitions = m.definitions.clone();
    let choices_def = canon.placement.choices_def().cloned();
    let mut choices_part = choices_part;
    if let ChoicesPlacement::CtrlHead { ctrl, choices } = &canon.placement {
        let Some(Definition::Program(cb)) = lookup(&definitions, ctrl) else {
            unreachable!("the canonical control definition exists");
        };
        let stripped: Vec<HybridProgram> =
            seq_stmts(cb).into_iter().skip(1).cloned().collect();
        set_program(&mut definitions, ctrl, seq_all(stripped));
        choices_part = vec![HybridProgram::Ref(choices.clone())];
    }

    // Coupling block: the twin replays the original's decisions.
    let coupling: Vec<HybridProgram> = canon
        .choice_vars
        .iter()
        .map(|c| HybridProgram::assign(renaming[c].clone(), Term::var(c.clone())))
        .collect();

    // Which definitions the twin needs its own copy of: those the loop
    // reaches whose bodies touch renamed or attacked state, plus anything
    // referencing such a definition.
    let roots: Vec<HybridProgram> =
        choices_part.iter().chain(ctrl_part.iter()).cloned().collect();
    let reachable = reachable_defs(&definitions, &roots);
    let relevant: BTreeSet<Name> = bound.union(sensors).cloned().collect();
    let mut twinned: Vec<Name> = Vec::new();
    for (name, def) in &definitions {
        if !reachable.contains(name) {
            continue;
        }
        let touched = match def {
            Definition::Program(p) => {
                let ep = expand_program(p, m)?;
                let mut vs = vars::fv(&ep);
                vs.extend(vars::bv(&ep));
                vs.iter().any(|v| relevant.contains(v))
            }
            Definition::BoolDef(Some(f)) => {
                let ef = crate::expand::expand_formula(f, m)?;
                vars::fv_formula(&ef).iter().any(|v| relevant.contains(v))
            }
            _ => false,
        };
        if touched {
            twinned.push(name.clone());
        }
    }

    let mut def_map: BTreeMap<Name, Name> = BTreeMap::new();
    for name in &twinned {
        let twin = fresh_def_name(&format!("{}_1", name), &taken);
        taken.insert(twin.clone());
        def_map.insert(name.clone(), twin);
    }

    let twin_of_program = |p: &HybridProgram| -> Result<HybridProgram, ComposeError> {
        let (attacked, _) = attack_program(p, sensors)?;
        Ok(redirect_program(&rename_program(&attacked, &renaming), &def_map))
    };

    let mut twins: Vec<(Name, Definition)> = Vec::new();
    for (name, def) in &definitions {
        let Some(twin_name) = def_map.get(name) else { continue };
        let twin_def = if Some(name) == choices_def.as_ref() {
            Definition::Program(seq_all(coupling.clone()))
        } else {
            match def {
                Definition::Program(p) => Definition::Program(twin_of_program(p)?),
                Definition::BoolDef(Some(f)) => Definition::BoolDef(Some(redirect_formula(
                    &rename_formula(f, &renaming),
                    &def_map,
                ))),
                _ => unreachable!("only bodied definitions are twinned"),
            }
        };
        twins.push((twin_name.clone(), twin_def));
    }

    // The merged plant: both copies' equations in one ODE, the evolution
    // domains interleaved conjunct by conjunct.
    let plant_ode = expand_program(plant_stmt, m)?;
    let HybridProgram::Ode { equations, domain } = &plant_ode else {
        unreachable!("the canonical plant is an ODE");
    };
    let renamed_plant = rename_program(&plant_ode, &renaming);
    let HybridProgram::Ode { equations: twin_eqs, domain: twin_domain } = renamed_plant else {
        unreachable!("renaming preserves the program shape");
    };
    let mut merged_eqs = equations.clone();
    merged_eqs.extend(twin_eqs);
    let merged_domain = if *domain == Formula::True {
        Formula::True
    } else {
        let interleaved: Vec<Formula> = conjuncts(domain)
            .into_iter()
            .zip(conjuncts(&twin_domain))
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        conjoin(interleaved)
    };
    let merged_plant = HybridProgram::Ode { equations: merged_eqs, domain: merged_domain };

    let eq_formula = conjoin(
        eq_set
            .iter()
            .map(|v| Formula::cmp(CmpOp::Eq, Term::var(v.clone()), Term::var(renaming[v].clone())))
            .collect(),
    );

    let twin_ctrl: Vec<HybridProgram> =
        ctrl_part.iter().map(|s| twin_of_program(s)).collect::<Result<_, _>>()?;

    let mut program_vars = m.program_vars.clone();
    program_vars.extend(renaming.values().cloned());

    let mut names = ComposedNames { def_twins: def_map.clone(), ..Default::default() };
    let model = if definitions.is_empty() {
        // No definitions to preserve: assemble the loop inline.
        let mut body_stmts = choices_part;
        body_stmts.extend(ctrl_part.iter().cloned());
        body_stmts.extend(coupling);
        body_stmts.extend(twin_ctrl);
        body_stmts.push(merged_plant);
        let looped = HybridProgram::repeat(seq_all(body_stmts));
        Model {
            definitions: Vec::new(),
            program_vars,
            problem: Formula::implies(
                eq_formula.clone(),
                Formula::boxed(looped, eq_formula),
            ),
            low_integrity_vars: BTreeSet::new(),
        }
    } else {
        let eq_name = fresh_def_name("eq", &taken);
        taken.insert(eq_name.clone());
        let ctrl_comp = fresh_def_name("ctrl_comp", &taken);
        taken.insert(ctrl_comp.clone());
        let plant_comp = fresh_def_name("plant_comp", &taken);
        taken.insert(plant_comp.clone());

        // The agreement predicate goes where the first abbreviation sat;
        // constants stay ahead of it.
        let first_bodied = definitions
            .iter()
            .position(|(_, d)| {
                matches!(d, Definition::Program(_) | Definition::BoolDef(Some(_)))
            })
            .unwrap_or(definitions.len());
        definitions.insert(
            first_bodied,
            (eq_name.clone(), Definition::BoolDef(Some(eq_formula))),
        );
        definitions.extend(twins);

        let mut comp_body = choices_part;
        comp_body.extend(ctrl_part.iter().cloned());
        if let Some(cd) = &choices_def {
            if let Some(twin) = def_map.get(cd) {
                names.choices_twin = Some(twin.clone());
                comp_body.push(HybridProgram::Ref(twin.clone()));
            }
        } else {
            comp_body.extend(coupling);
        }
        comp_body.extend(twin_ctrl);
        definitions.push((ctrl_comp.clone(), Definition::Program(seq_all(comp_body))));
        definitions.push((plant_comp.clone(), Definition::Program(merged_plant)));

        let problem = Formula::implies(
            Formula::PredRef(eq_name.clone()),
            Formula::boxed(
                HybridProgram::repeat(HybridProgram::seq(
                    HybridProgram::Ref(ctrl_comp.clone()),
                    HybridProgram::Ref(plant_comp.clone()),
                )),
                Formula::PredRef(eq_name.clone()),
            ),
        );
        names.eq = Some(eq_name);
        names.ctrl = Some(ctrl_comp);
        names.plant = Some(plant_comp);

        let mut composed = Model {
            definitions,
            program_vars,
            problem,
            low_integrity_vars: BTreeSet::new(),
        };
        drop_unused(&mut composed);
        composed
    };
    debug_assert!(expand_abbreviations(&model).is_ok());

    Ok(CompositionResult { model, renaming, eq_set: eq_set.to_vec(), names })
}

/// The loop body of `p1 -> ... -> [{body}*] post`; shape guaranteed by
/// canonicalization.
fn loop_body(problem: &Formula) -> HybridProgram {
    let mut cur = problem;
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

fn plant_equations(body: &HybridProgram) -> Vec<OdeEq> {
    match seq_stmts(body).last() {
        Some(HybridProgram::Ode { equations, .. }) => equations.clone(),
        _ => Vec::new(),
    }
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

fn conjoin(fs: Vec<Formula>) -> Formula {
    let mut it = fs.into_iter().rev();
    let Some(last) = it.next() else {
        return Formula::True;
    };
    it.fold(last, |acc, f| Formula::and(f, acc))
}

/// Definitions reachable from the control statements, through references
/// in programs, tests, and domains.
fn reachable_defs(defs: &[(Name, Definition)], roots: &[HybridProgram]) -> BTreeSet<Name> {
    let mut seen = BTreeSet::new();
    let mut queue: Vec<Name> = Vec::new();
    for r in roots {
        collect_prog_refs(r, &mut queue);
    }
    while let Some(n) = queue.pop() {
        if !seen.insert(n.clone()) {
            continue;
        }
        match lookup(defs, &n) {
            Some(Definition::Program(p)) => collect_prog_refs(p, &mut queue),
            Some(Definition::BoolDef(Some(f))) => collect_formula_refs(f, &mut queue),
            _ => {}
        }
    }
    seen
}

fn collect_prog_refs(p: &HybridProgram, out: &mut Vec<Name>) {
    match p {
        HybridProgram::Ref(n) => out.push(n.clone()),
        HybridProgram::Test(f) => collect_formula_refs(f, out),
        HybridProgram::Ode { domain, .. } => collect_formula_refs(domain, out),
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => {
            collect_prog_refs(a, out);
            collect_prog_refs(b, out);
        }
        HybridProgram::Loop(a) => collect_prog_refs(a, out),
        _ => {}
    }
}

fn collect_formula_refs(f: &Formula, out: &mut Vec<Name>) {
    match f {
        Formula::PredRef(n) => out.push(n.clone()),
        Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => {
            collect_formula_refs(a, out)
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            collect_formula_refs(a, out);
            collect_formula_refs(b, out);
        }
        Formula::Box(p, a) => {
            collect_prog_refs(p, out);
            collect_formula_refs(a, out);
        }
        _ => {}
    }
}

/// Rewrites references per `map`, leaving variables alone.
fn redirect_program(p: &HybridProgram, map: &BTreeMap<Name, Name>) -> HybridProgram {
    match p {
        HybridProgram::Ref(n) => {
            HybridProgram::Ref(map.get(n).cloned().unwrap_or_else(|| n.clone()))
        }
        HybridProgram::Test(f) => HybridProgram::test(redirect_formula(f, map)),
        HybridProgram::Ode { equations, domain } => HybridProgram::Ode {
            equations: equations.clone(),
            domain: redirect_formula(domain, map),
        },
        HybridProgram::Seq(a, b) => {
            HybridProgram::seq(redirect_program(a, map), redirect_program(b, map))
        }
        HybridProgram::Choice(a, b) => {
            HybridProgram::choice(redirect_program(a, map), redirect_program(b, map))
        }
        HybridProgram::Loop(a) => HybridProgram::repeat(redirect_program(a, map)),
        HybridProgram::Assign(..) | HybridProgram::AssignAny(_) => p.clone(),
    }
}

fn redirect_formula(f: &Formula, map: &BTreeMap<Name, Name>) -> Formula {
    match f {
        Formula::PredRef(n) => {
            Formula::PredRef(map.get(n).cloned().unwrap_or_else(|| n.clone()))
        }
        Formula::Not(a) => Formula::not(redirect_formula(a, map)),
        Formula::And(a, b) => {
            Formula::and(redirect_formula(a, map), redirect_formula(b, map))
        }
        Formula::Or(a, b) => Formula::or(redirect_formula(a, map), redirect_formula(b, map)),
        Formula::Implies(a, b) => {
            Formula::implies(redirect_formula(a, map), redirect_formula(b, map))
        }
        Formula::Forall(x, a) => Formula::Forall(x.clone(), Box::new(redirect_formula(a, map))),
        Formula::Exists(x, a) => Formula::Exists(x.clone(), Box::new(redirect_formula(a, map))),
        Formula::Box(p, a) => {
            Formula::boxed(redirect_program(p, map), redirect_formula(a, map))
        }
        _ => f.clone(),
    }
}

/// Drops bodied definitions nothing in the composed model mentions: the
/// original pre/postcondition and the replaced plant. Liveness follows
/// every mentioned name — references and variables alike — since a bodied
/// constant is referenced by bare name.
fn drop_unused(m: &mut Model) {
    let mut live: BTreeSet<Name> = BTreeSet::new();
    let mut queue: Vec<Name> = Vec::new();
    mention_formula(&m.problem, &mut queue);
    while let Some(n) = queue.pop() {
        if !live.insert(n.clone()) {
            continue;
        }
        match m.definitions.iter().find(|(d, _)| *d == n).map(|(_, d)| d) {
            Some(Definition::Program(p)) => mention_prog(p, &mut queue),
            Some(Definition::BoolDef(Some(f))) => mention_formula(f, &mut queue),
            Some(Definition::RealConst(Some(t))) => mention_term(t, &mut queue),
            _ => {}
        }
    }
    m.definitions.retain(|(n, d)| {
        matches!(d, Definition::RealConst(None) | Definition::BoolDef(None)) || live.contains(n)
    });
}

fn mention_prog(p: &HybridProgram, out: &mut Vec<Name>) {
    match p {
        HybridProgram::Ref(n) | HybridProgram::AssignAny(n) => out.push(n.clone()),
        HybridProgram::Assign(x, t) => {
            out.push(x.clone());
            mention_term(t, out);
        }
        HybridProgram::Test(f) => mention_formula(f, out),
        HybridProgram::Ode { equations, domain } => {
            for eq in equations {
                out.push(eq.var.clone());
                mention_term(&eq.rhs, out);
            }
            mention_formula(domain, out);
        }
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => {
            mention_prog(a, out);
            mention_prog(b, out);
        }
        HybridProgram::Loop(a) => mention_prog(a, out),
    }
}

fn mention_formula(f: &Formula, out: &mut Vec<Name>) {
    match f {
        Formula::PredRef(n) => out.push(n.clone()),
        Formula::Cmp(_, a, b) => {
            mention_term(a, out);
            mention_term(b, out);
        }
        Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => {
            mention_formula(a, out)
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            mention_formula(a, out);
            mention_formula(b, out);
        }
        Formula::Box(p, a) => {
            mention_prog(p, out);
            mention_formula(a, out);
        }
        Formula::True | Formula::False => {}
    }
}

fn mention_term(t: &Term, out: &mut Vec<Name>) {
    match t {
        Term::Variable(n) => out.push(n.clone()),
        Term::Constant(_) => {}
        Term::Plus(a, b) | Term::Minus(a, b) | Term::Times(a, b) | Term::Divide(a, b) => {
            mention_term(a, out);
            mention_term(b, out);
        }
        Term::Neg(a) | Term::Power(a, _) => mention_term(a, out),
        Term::Apply(_, args) => {
            for a in args {
                mention_term(a, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::canonicalize;
    use crate::syntax::parser::parse_model;
    use crate::syntax::printer::print_model;

    fn composed(src: &str, sensors: &[&str], eq: &[&str]) -> CompositionResult {
        let m = parse_model("t.hp", src).unwrap().model;
        let canon = canonicalize(&m).unwrap();
        compose(
            &canon,
            &sensors.iter().map(|s| Name::new(*s)).collect(),
            &eq.iter().map(|s| Name::new(*s)).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    const DEF_MODEL: &str = "Definitions.\n\
         R A.\n\
         B pre ::= ( v >= 0 ).\n\
         B fast ::= ( s >= A ).\n\
         HP slow ::= { a := A }.\n\
         HP ctrl ::= { s := v; { ?fast; a := 0 ++ slow }; t := 0 }.\n\
         HP plant ::= { {v' = a, t' = 1 & v >= 0 & t <= 1} }.\n\
         ProgramVariables. R s, a, v, t.\n\
         Problem. pre -> [{ctrl; plant}*] v >= 0 End.";

    #[test]
    fn the_composed_model_is_rebuilt_definition_by_definition() {
        let comp = composed(DEF_MODEL, &["s"], &["v"]);
        let printed = print_model(&comp.model);
        let expected = "\
Definitions.
  R A.
  B eq ::= v = v_1.
  B fast ::= s >= A.
  HP choices ::= c := *.
  HP slow ::= a := A.
  HP ctrl ::= s := v; if (c != 0) then {?fast; a := 0} else {slow}; t := 0.
  B fast_1 ::= s_1 >= A.
  HP choices_1 ::= c_1 := c.
  HP slow_1 ::= a_1 := A.
  HP ctrl_1 ::= s_1 := *; if (c_1 != 0) then {?fast_1; a_1 := 0} else {slow_1}; t_1 := 0.
  HP ctrl_comp ::= choices; ctrl; choices_1; ctrl_1.
  HP plant_comp ::= {v' = a, t' = 1, v_1' = a_1, t_1' = 1 & v >= 0 & v_1 >= 0 & t <= 1 & t_1 <= 1}.
ProgramVariables.
  R a, a_1, c, c_1, s, s_1, t, t_1, v, v_1.
Problem.
  eq -> [{ctrl_comp; plant_comp}*]eq
End.
";
        assert_eq!(printed, expected);
        assert_eq!(comp.names.eq, Some(Name::new("eq")));
        assert_eq!(comp.names.choices_twin, Some(Name::new("choices_1")));
        assert_eq!(comp.renaming[&Name::new("v")], Name::new("v_1"));
    }

    #[test]
    fn an_inline_model_composes_without_definitions() {
        let comp = composed(
            "ProgramVariables. R s, a, v, t.\n\
             Problem. [{s := v; {a := 1 ++ a := -1}; t := 0; {v' = a, t' = 1 & t <= 1}}*] v >= 0 End.",
            &["s"],
            &["v"],
        );
        let printed = print_model(&comp.model);
        let expected = "\
ProgramVariables.
  R a, a_1, c, c_1, s, s_1, t, t_1, v, v_1.
Problem.
  v = v_1 -> [{c := *; s := v; if (c != 0) then {a := 1} else {a := -1}; t := 0; c_1 := c; s_1 := *; if (c_1 != 0) then {a_1 := 1} else {a_1 := -1}; t_1 := 0; {v' = a, t' = 1, v_1' = a_1, t_1' = 1 & t <= 1 & t_1 <= 1}}*](v = v_1)
End.
";
        assert_eq!(printed, expected);
        assert!(comp.model.definitions.is_empty());
        assert!(comp.names.eq.is_none());
    }

    #[test]
    fn untouched_definitions_are_shared_not_twinned() {
        let comp = composed(DEF_MODEL, &["s"], &["v"]);
        // `A` is a constant and `pre` is dropped with the old problem; only
        // state-touching definitions get twins.
        assert!(!comp.names.def_twins.contains_key(&Name::new("A")));
        assert!(!comp.names.def_twins.contains_key(&Name::new("pre")));
        assert!(comp.model.lookup(&Name::new("pre")).is_none());
        assert!(comp.model.lookup(&Name::new("plant")).is_none());
        assert!(comp.model.lookup(&Name::new("A")).is_some());
    }

    #[test]
    fn agreement_on_an_attacked_sensor_is_rejected() {
        let m = parse_model("t.hp", DEF_MODEL).unwrap().model;
        let canon = canonicalize(&m).unwrap();
        let err = compose(
            &canon,
            &[Name::new("s")].into_iter().collect(),
            &[Name::new("s")],
        )
        .unwrap_err();
        assert_eq!(err, ComposeError::EqSetOverlapsSensors(Name::new("s")));
    }

    #[test]
    fn agreement_on_an_unbound_variable_is_rejected() {
        let m = parse_model("t.hp", DEF_MODEL).unwrap().model;
        let canon = canonicalize(&m).unwrap();
        let err = compose(
            &canon,
            &[Name::new("s")].into_iter().collect(),
            &[Name::new("A")],
        )
        .unwrap_err();
        assert_eq!(err, ComposeError::EqSetNotBound(Name::new("A")));
    }

    #[test]
    fn a_plant_evolved_sensor_is_rejected() {
        let m = parse_model(
            "t.hp",
            "ProgramVariables. R a, v, t.\n\
             Problem. [{a := 1; t := 0; {v' = a, t' = 1 & t <= 1}}*] v >= 0 End.",
        )
        .unwrap()
        .model;
        let canon = canonicalize(&m).unwrap();
        let err = compose(&canon, &[Name::new("v")].into_iter().collect(), &[Name::new("t")])
            .unwrap_err();
        assert_eq!(err, ComposeError::Attack(AttackError::SensorInPlant(Name::new("v"))));
    }

    #[test]
    fn composing_a_deterministic_loop_needs_no_coupling() {
        let comp = composed(
            "ProgramVariables. R s, a, v, t.\n\
             Problem. [{s := v; a := -s; t := 0; {v' = a, t' = 1 & t <= 1}}*] v >= 0 End.",
            &["s"],
            &["v"],
        );
        let printed = print_model(&comp.model);
        assert!(!printed.contains("c :="), "{}", printed);
        assert!(printed.contains("s_1 := *"), "{}", printed);
    }
}
