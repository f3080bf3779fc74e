//! Substitution of rigid names and total variable renaming.
//!
//! [`substitute_formula`] and [`substitute_program`] inline a term for a
//! *rigid* name — a defined constant that nothing assigns (the parser
//! enforces that). Quantifiers are the only binders that can capture, and
//! capture is reported as an error rather than repaired: models are small
//! and a collision is always a naming accident worth surfacing.
//!
//! [`rename_program`] and friends apply a name map to *every* occurrence
//! (reads, assignment targets, ODE left sides, quantifier binders). With
//! an injective map onto fresh names this is a bijective renaming, which
//! is how the self-composition machinery builds its primed copies.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::*;
use crate::vars::fv_term;

#[derive(Debug, Error, PartialEq, Eq)]
#[error(
    "inlining `{name}` would capture `{captured}` under the quantifier binding `{binder}`"
)]
pub struct CaptureError {
    pub name: Name,
    pub captured: Name,
    pub binder: Name,
}

pub fn substitute_term(t: &Term, name: &Name, repl: &Term) -> Term {
    match t {
        Term::Variable(x) if x == name => repl.clone(),
        Term::Variable(_) | Term::Constant(_) => t.clone(),
        Term::Plus(a, b) => Term::plus(
            substitute_term(a, name, repl),
            substitute_term(b, name, repl),
        ),
        Term::Minus(a, b) => Term::minus(
            substitute_term(a, name, repl),
            substitute_term(b, name, repl),
        ),
        Term::Times(a, b) => Term::times(
            substitute_term(a, name, repl),
            substitute_term(b, name, repl),
        ),
        Term::Divide(a, b) => Term::Divide(
            Box::new(substitute_term(a, name, repl)),
            Box::new(substitute_term(b, name, repl)),
        ),
        Term::Neg(a) => Term::neg(substitute_term(a, name, repl)),
        Term::Power(a, e) => Term::power(substitute_term(a, name, repl), *e),
        Term::Apply(f, args) => Term::Apply(
            f.clone(),
            args.iter().map(|a| substitute_term(a, name, repl)).collect(),
        ),
    }
}

pub fn substitute_formula(
    f: &Formula,
    name: &Name,
    repl: &Term,
) -> Result<Formula, CaptureError> {
    Ok(match f {
        Formula::True | Formula::False | Formula::PredRef(_) => f.clone(),
        Formula::Cmp(op, a, b) => Formula::Cmp(
            *op,
            substitute_term(a, name, repl),
            substitute_term(b, name, repl),
        ),
        Formula::Not(a) => Formula::not(substitute_formula(a, name, repl)?),
        Formula::And(a, b) => Formula::and(
            substitute_formula(a, name, repl)?,
            substitute_formula(b, name, repl)?,
        ),
        Formula::Or(a, b) => Formula::or(
            substitute_formula(a, name, repl)?,
            substitute_formula(b, name, repl)?,
        ),
        Formula::Implies(a, b) => Formula::implies(
            substitute_formula(a, name, repl)?,
            substitute_formula(b, name, repl)?,
        ),
        Formula::Forall(x, a) => {
            Formula::Forall(x.clone(), Box::new(quantified_body(x, a, name, repl)?))
        }
        Formula::Exists(x, a) => {
            Formula::Exists(x.clone(), Box::new(quantified_body(x, a, name, repl)?))
        }
        Formula::Box(p, a) => Formula::boxed(
            substitute_program(p, name, repl)?,
            substitute_formula(a, name, repl)?,
        ),
    })
}

fn quantified_body(
    binder: &Name,
    body: &Formula,
    name: &Name,
    repl: &Term,
) -> Result<Formula, CaptureError> {
    if binder == name {
        // Shadowed: the rigid name is not visible inside.
        return Ok(body.clone());
    }
    if fv_term(repl).contains(binder) {
        return Err(CaptureError {
            name: name.clone(),
            captured: binder.clone(),
            binder: binder.clone(),
        });
    }
    substitute_formula(body, name, repl)
}

/// Inlines `repl` for the rigid name `name` throughout a program.
///
/// Panics if the program assigns `name`: that would make the name
/// non-rigid, and parsed models cannot contain such an assignment.
pub fn substitute_program(
    p: &HybridProgram,
    name: &Name,
    repl: &Term,
) -> Result<HybridProgram, CaptureError> {
    Ok(match p {
        HybridProgram::Assign(x, e) => {
            assert_ne!(x, name, "substitute_program: `{}` is assigned and not rigid", name);
            HybridProgram::Assign(x.clone(), substitute_term(e, name, repl))
        }
        HybridProgram::AssignAny(x) => {
            assert_ne!(x, name, "substitute_program: `{}` is assigned and not rigid", name);
            p.clone()
        }
        HybridProgram::Test(f) => HybridProgram::Test(substitute_formula(f, name, repl)?),
        HybridProgram::Ode { equations, domain } => HybridProgram::Ode {
            equations: equations
                .iter()
                .map(|eq| {
                    assert_ne!(
                        &eq.var, name,
                        "substitute_program: `{}` is evolved and not rigid",
                        name
                    );
                    Ok(OdeEq { var: eq.var.clone(), rhs: substitute_term(&eq.rhs, name, repl) })
                })
                .collect::<Result<_, CaptureError>>()?,
            domain: substitute_formula(domain, name, repl)?,
        },
        HybridProgram::Seq(a, b) => HybridProgram::seq(
            substitute_program(a, name, repl)?,
            substitute_program(b, name, repl)?,
        ),
        HybridProgram::Choice(a, b) => HybridProgram::choice(
            substitute_program(a, name, repl)?,
            substitute_program(b, name, repl)?,
        ),
        HybridProgram::Loop(a) => HybridProgram::repeat(substitute_program(a, name, repl)?),
        HybridProgram::Ref(_) => p.clone(),
    })
}

fn mapped(map: &BTreeMap<Name, Name>, x: &Name) -> Name {
    map.get(x).cloned().unwrap_or_else(|| x.clone())
}

pub fn rename_term(t: &Term, map: &BTreeMap<Name, Name>) -> Term {
    match t {
        Term::Variable(x) => Term::Variable(mapped(map, x)),
        Term::Constant(_) => t.clone(),
        Term::Plus(a, b) => Term::plus(rename_term(a, map), rename_term(b, map)),
        Term::Minus(a, b) => Term::minus(rename_term(a, map), rename_term(b, map)),
        Term::Times(a, b) => Term::times(rename_term(a, map), rename_term(b, map)),
        Term::Divide(a, b) => {
            Term::Divide(Box::new(rename_term(a, map)), Box::new(rename_term(b, map)))
        }
        Term::Neg(a) => Term::neg(rename_term(a, map)),
        Term::Power(a, e) => Term::power(rename_term(a, map), *e),
        Term::Apply(f, args) => {
            Term::Apply(f.clone(), args.iter().map(|a| rename_term(a, map)).collect())
        }
    }
}

pub fn rename_formula(f: &Formula, map: &BTreeMap<Name, Name>) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::PredRef(_) => f.clone(),
        Formula::Cmp(op, a, b) => Formula::Cmp(*op, rename_term(a, map), rename_term(b, map)),
        Formula::Not(a) => Formula::not(rename_formula(a, map)),
        Formula::And(a, b) => Formula::and(rename_formula(a, map), rename_formula(b, map)),
        Formula::Or(a, b) => Formula::or(rename_formula(a, map), rename_formula(b, map)),
        Formula::Implies(a, b) => {
            Formula::implies(rename_formula(a, map), rename_formula(b, map))
        }
        Formula::Forall(x, a) => Formula::Forall(mapped(map, x), Box::new(rename_formula(a, map))),
        Formula::Exists(x, a) => Formula::Exists(mapped(map, x), Box::new(rename_formula(a, map))),
        Formula::Box(p, a) => Formula::boxed(rename_program(p, map), rename_formula(a, map)),
    }
}

pub fn rename_program(p: &HybridProgram, map: &BTreeMap<Name, Name>) -> HybridProgram {
    match p {
        HybridProgram::Assign(x, e) => {
            HybridProgram::Assign(mapped(map, x), rename_term(e, map))
        }
        HybridProgram::AssignAny(x) => HybridProgram::AssignAny(mapped(map, x)),
        HybridProgram::Test(f) => HybridProgram::Test(rename_formula(f, map)),
        HybridProgram::Ode { equations, domain } => HybridProgram::Ode {
            equations: equations
                .iter()
                .map(|eq| OdeEq { var: mapped(map, &eq.var), rhs: rename_term(&eq.rhs, map) })
                .collect(),
            domain: rename_formula(domain, map),
        },
        HybridProgram::Seq(a, b) => {
            HybridProgram::seq(rename_program(a, map), rename_program(b, map))
        }
        HybridProgram::Choice(a, b) => {
            HybridProgram::choice(rename_program(a, map), rename_program(b, map))
        }
        HybridProgram::Loop(a) => HybridProgram::repeat(rename_program(a, map)),
        HybridProgram::Ref(_) => p.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_formula_str, parse_program_str};
    use crate::syntax::printer::{print_formula, print_program};

    fn fml(s: &str) -> Formula {
        parse_formula_str(s).unwrap()
    }

    fn prog(s: &str) -> HybridProgram {
        parse_program_str(s).unwrap()
    }

    #[test]
    fn substitution_replaces_free_occurrences() {
        let f = fml("x >= vmax & vmax >= 0");
        let out = substitute_formula(&f, &Name::new("vmax"), &fml_term("12")).unwrap();
        assert_eq!(print_formula(&out), "x >= 12 & 12 >= 0");
    }

    #[test]
    fn quantifier_shadowing_stops_substitution() {
        let f = fml("forall c. (c >= 0) & c >= 1");
        let out = substitute_formula(&f, &Name::new("c"), &fml_term("5")).unwrap();
        assert_eq!(print_formula(&out), "forall c. (c >= 0) & 5 >= 1");
    }

    #[test]
    fn capture_is_an_error() {
        let f = fml("forall v. (v >= lo)");
        let err = substitute_formula(&f, &Name::new("lo"), &fml_term("v - 1")).unwrap_err();
        assert_eq!(err.captured.as_str(), "v");
    }

    #[test]
    fn program_substitution_reaches_all_term_positions() {
        let p = prog("a := A; ?v <= A; {v' = A & v >= A}");
        let out = substitute_program(&p, &Name::new("A"), &fml_term("2")).unwrap();
        assert_eq!(print_program(&out), "a := 2; ?v <= 2; {v' = 2 & v >= 2}");
    }

    #[test]
    #[should_panic(expected = "not rigid")]
    fn substituting_an_assigned_name_panics() {
        let p = prog("A := 1");
        let _ = substitute_program(&p, &Name::new("A"), &fml_term("2"));
    }

    #[test]
    fn renaming_is_total_over_binders_and_ode_sides() {
        let p = prog("v := *; ?forall v. (v >= 0); {v' = a}");
        let map: BTreeMap<Name, Name> =
            [(Name::new("v"), Name::new("v_1"))].into_iter().collect();
        let out = rename_program(&p, &map);
        assert_eq!(
            print_program(&out),
            "v_1 := *; ?forall v_1. (v_1 >= 0); {v_1' = a}"
        );
    }

    #[test]
    fn renaming_leaves_unmapped_names_alone() {
        let f = fml("x >= y");
        let map: BTreeMap<Name, Name> =
            [(Name::new("z"), Name::new("w"))].into_iter().collect();
        assert_eq!(rename_formula(&f, &map), f);
    }

    fn fml_term(s: &str) -> Term {
        match parse_formula_str(&format!("{} = 0", s)).unwrap() {
            Formula::Cmp(_, t, _) => t,
            _ => unreachable!(),
        }
    }
}
