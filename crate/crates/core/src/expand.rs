//! Abbreviation expansion: inlining defined constants, Boolean
//! definitions, and named programs.
//!
//! Every analysis in this crate runs on expanded models — the variable
//! induction, attack rewriting, and execution all need the statements
//! spelled out. Expansion inlines each definition that has a body and
//! drops it from the definition list; bodyless names (uninterpreted
//! parameters and abstract predicates) survive as themselves.
//!
//! Definitions may be written in any order by hand-built models, so
//! resolution is memoized recursion with an in-progress set for cycle
//! detection. A quantifier binder shadows a defined constant of the same
//! name inside its scope, and an inlined body whose free variables would
//! fall under such a binder is a capture error.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ast::*;
use crate::subst::CaptureError;
use crate::vars::{fv_formula, fv_term};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExpandError {
    #[error("definition cycle through `{0}`")]
    Cycle(Name),
    #[error("reference to undefined program `{0}`")]
    Undefined(Name),
    #[error(transparent)]
    Capture(#[from] CaptureError),
}

/// Expands all defined names in the model.
///
/// The result carries the same program variables, low-integrity marks, and
/// problem, with definition bodies inlined everywhere and only bodyless
/// (abstract) definitions retained.
pub fn expand_abbreviations(m: &Model) -> Result<Model, ExpandError> {
    let mut e = Expander::new(m);
    let mut definitions = Vec::new();
    for (name, def) in &m.definitions {
        match def {
            Definition::RealConst(None) => {
                definitions.push((name.clone(), Definition::RealConst(None)));
            }
            Definition::BoolDef(None) => {
                definitions.push((name.clone(), Definition::BoolDef(None)));
            }
            // Defined bodies are inlined at every use site and dropped.
            _ => {}
        }
    }
    let problem = e.formula(&m.problem)?;
    Ok(Model {
        definitions,
        program_vars: m.program_vars.clone(),
        problem,
        low_integrity_vars: m.low_integrity_vars.clone(),
    })
}

/// Expands one program against a model's definitions.
pub fn expand_program(p: &HybridProgram, m: &Model) -> Result<HybridProgram, ExpandError> {
    Expander::new(m).program(p)
}

/// Expands one formula against a model's definitions.
pub fn expand_formula(f: &Formula, m: &Model) -> Result<Formula, ExpandError> {
    Expander::new(m).formula(f)
}

struct Expander<'a> {
    model: &'a Model,
    memo_real: BTreeMap<Name, Term>,
    memo_bool: BTreeMap<Name, Formula>,
    memo_prog: BTreeMap<Name, HybridProgram>,
    in_progress: BTreeSet<Name>,
    /// Quantifier binders currently in scope (they shadow definitions).
    binders: Vec<Name>,
}

impl<'a> Expander<'a> {
    fn new(model: &'a Model) -> Self {
        Expander {
            model,
            memo_real: BTreeMap::new(),
            memo_bool: BTreeMap::new(),
            memo_prog: BTreeMap::new(),
            in_progress: BTreeSet::new(),
            binders: Vec::new(),
        }
    }

    /// Expanded body of the defined constant `x`, if `x` is one.
    fn resolve_real(&mut self, x: &Name) -> Result<Option<Term>, ExpandError> {
        if let Some(t) = self.memo_real.get(x) {
            return Ok(Some(t.clone()));
        }
        let Some(Definition::RealConst(Some(body))) = self.model.lookup(x) else {
            return Ok(None);
        };
        if !self.in_progress.insert(x.clone()) {
            return Err(ExpandError::Cycle(x.clone()));
        }
        // Definition bodies are closed with respect to outer binders.
        let saved = std::mem::take(&mut self.binders);
        let expanded = self.term(body);
        self.binders = saved;
        self.in_progress.remove(x);
        let expanded = expanded?;
        self.memo_real.insert(x.clone(), expanded.clone());
        Ok(Some(expanded))
    }

    fn resolve_bool(&mut self, x: &Name) -> Result<Option<Formula>, ExpandError> {
        if let Some(f) = self.memo_bool.get(x) {
            return Ok(Some(f.clone()));
        }
        let Some(Definition::BoolDef(Some(body))) = self.model.lookup(x) else {
            return Ok(None);
        };
        if !self.in_progress.insert(x.clone()) {
            return Err(ExpandError::Cycle(x.clone()));
        }
        let saved = std::mem::take(&mut self.binders);
        let expanded = self.formula(body);
        self.binders = saved;
        self.in_progress.remove(x);
        let expanded = expanded?;
        self.memo_bool.insert(x.clone(), expanded.clone());
        Ok(Some(expanded))
    }

    fn resolve_prog(&mut self, x: &Name) -> Result<HybridProgram, ExpandError> {
        if let Some(p) = self.memo_prog.get(x) {
            return Ok(p.clone());
        }
        let Some(Definition::Program(body)) = self.model.lookup(x) else {
            return Err(ExpandError::Undefined(x.clone()));
        };
        if !self.in_progress.insert(x.clone()) {
            return Err(ExpandError::Cycle(x.clone()));
        }
        let saved = std::mem::take(&mut self.binders);
        let expanded = self.program(body);
        self.binders = saved;
        self.in_progress.remove(x);
        let expanded = expanded?;
        self.memo_prog.insert(x.clone(), expanded.clone());
        Ok(expanded)
    }

    /// Inlined bodies must not mention a variable some enclosing
    /// quantifier binds — that would silently change what the body means.
    fn check_capture(&self, name: &Name, free: BTreeSet<Name>) -> Result<(), ExpandError> {
        if let Some(captured) = self.binders.iter().find(|b| free.contains(*b)) {
            return Err(CaptureError {
                name: name.clone(),
                captured: captured.clone(),
                binder: captured.clone(),
            }
            .into());
        }
        Ok(())
    }

    fn term(&mut self, t: &Term) -> Result<Term, ExpandError> {
        Ok(match t {
            Term::Variable(x) => {
                if self.binders.contains(x) {
                    t.clone()
                } else if let Some(body) = self.resolve_real(x)? {
                    self.check_capture(x, fv_term(&body))?;
                    body
                } else {
                    t.clone()
                }
            }
            Term::Constant(_) => t.clone(),
            Term::Plus(a, b) => Term::plus(self.term(a)?, self.term(b)?),
            Term::Minus(a, b) => Term::minus(self.term(a)?, self.term(b)?),
            Term::Times(a, b) => Term::times(self.term(a)?, self.term(b)?),
            Term::Divide(a, b) => {
                Term::Divide(Box::new(self.term(a)?), Box::new(self.term(b)?))
            }
            Term::Neg(a) => Term::neg(self.term(a)?),
            Term::Power(a, e) => Term::power(self.term(a)?, *e),
            Term::Apply(f, args) => Term::Apply(
                f.clone(),
                args.iter().map(|a| self.term(a)).collect::<Result<_, _>>()?,
            ),
        })
    }

    fn formula(&mut self, f: &Formula) -> Result<Formula, ExpandError> {
        Ok(match f {
            Formula::True | Formula::False => f.clone(),
            Formula::PredRef(x) => {
                if let Some(body) = self.resolve_bool(x)? {
                    self.check_capture(x, fv_formula(&body))?;
                    body
                } else {
                    // Abstract predicate (or non-model context): keep.
                    f.clone()
                }
            }
            Formula::Cmp(op, a, b) => Formula::Cmp(*op, self.term(a)?, self.term(b)?),
            Formula::Not(a) => Formula::not(self.formula(a)?),
            Formula::And(a, b) => Formula::and(self.formula(a)?, self.formula(b)?),
            Formula::Or(a, b) => Formula::or(self.formula(a)?, self.formula(b)?),
            Formula::Implies(a, b) => Formula::implies(self.formula(a)?, self.formula(b)?),
            Formula::Forall(x, a) => {
                self.binders.push(x.clone());
                let body = self.formula(a);
                self.binders.pop();
                Formula::Forall(x.clone(), Box::new(body?))
            }
            Formula::Exists(x, a) => {
                self.binders.push(x.clone());
                let body = self.formula(a);
                self.binders.pop();
                Formula::Exists(x.clone(), Box::new(body?))
            }
            Formula::Box(p, a) => Formula::boxed(self.program(p)?, self.formula(a)?),
        })
    }

    fn program(&mut self, p: &HybridProgram) -> Result<HybridProgram, ExpandError> {
        Ok(match p {
            HybridProgram::Ref(x) => self.resolve_prog(x)?,
            HybridProgram::Assign(x, e) => HybridProgram::Assign(x.clone(), self.term(e)?),
            HybridProgram::AssignAny(_) => p.clone(),
            HybridProgram::Test(f) => HybridProgram::Test(self.formula(f)?),
            HybridProgram::Ode { equations, domain } => HybridProgram::Ode {
                equations: equations
                    .iter()
                    .map(|eq| {
                        Ok(OdeEq { var: eq.var.clone(), rhs: self.term(&eq.rhs)? })
                    })
                    .collect::<Result<_, ExpandError>>()?,
                domain: self.formula(domain)?,
            },
            HybridProgram::Seq(a, b) => HybridProgram::seq(self.program(a)?, self.program(b)?),
            HybridProgram::Choice(a, b) => {
                HybridProgram::choice(self.program(a)?, self.program(b)?)
            }
            HybridProgram::Loop(a) => HybridProgram::repeat(self.program(a)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::parse_model;
    use crate::syntax::printer::{print_formula, print_model};

    fn model(src: &str) -> Model {
        parse_model("t.hp", src).expect("parses").model
    }

    #[test]
    fn inlines_through_all_three_sorts() {
        let m = model(
            "Definitions.\n\
             R T ::= 2.\n\
             B inside ::= t <= T.\n\
             HP wait ::= {t' = 1 & inside}.\n\
             HP run ::= t := 0; wait.\n\
             ProgramVariables. R t.\n\
             Problem. [run] t <= T End.",
        );
        let out = expand_abbreviations(&m).expect("expands");
        assert!(out.definitions.is_empty());
        assert_eq!(
            print_formula(&out.problem),
            "[t := 0; {t' = 1 & t <= 2}](t <= 2)"
        );
    }

    #[test]
    fn keeps_abstract_parameters() {
        let m = model(
            "Definitions.\n\
             R A.\n\
             B safe.\n\
             R T ::= A + 1.\n\
             ProgramVariables. R x.\n\
             Problem. safe -> [x := T] x >= A End.",
        );
        let out = expand_abbreviations(&m).expect("expands");
        assert_eq!(out.definitions.len(), 2);
        assert_eq!(
            print_formula(&out.problem),
            "safe -> [x := A + 1](x >= A)"
        );
    }

    #[test]
    fn definitions_may_reference_later_ones() {
        // Built by hand: the surface syntax would insist DOUBLE's
        // dependency BASE is declared first.
        let m = Model {
            definitions: vec![
                (
                    Name::new("DOUBLE"),
                    Definition::RealConst(Some(Term::times(
                        Term::num(2),
                        Term::var("BASE"),
                    ))),
                ),
                (Name::new("BASE"), Definition::RealConst(Some(Term::num(2)))),
            ],
            program_vars: [Name::new("x")].into_iter().collect(),
            problem: Formula::boxed(
                HybridProgram::assign("x", Term::var("DOUBLE")),
                Formula::cmp(CmpOp::Eq, Term::var("x"), Term::num(4)),
            ),
            low_integrity_vars: Default::default(),
        };
        let out = expand_abbreviations(&m).expect("expands");
        assert_eq!(print_formula(&out.problem), "[x := 2 * 2](x = 4)");
    }

    #[test]
    fn cycles_are_detected() {
        let mut m = model("ProgramVariables. R x.\nProblem. [x := 1] x = 1 End.");
        m.definitions.push((
            Name::new("a"),
            Definition::RealConst(Some(Term::var("b"))),
        ));
        m.definitions.push((
            Name::new("b"),
            Definition::RealConst(Some(Term::var("a"))),
        ));
        m.problem = Formula::cmp(CmpOp::Eq, Term::var("a"), Term::num(0));
        let err = expand_abbreviations(&m).unwrap_err();
        assert!(matches!(err, ExpandError::Cycle(_)), "{err}");
    }

    #[test]
    fn undefined_program_reference_is_an_error() {
        let m = model("ProgramVariables. R x.\nProblem. [x := 1] x = 1 End.");
        let err =
            expand_program(&HybridProgram::Ref(Name::new("ghost")), &m).unwrap_err();
        assert_eq!(err, ExpandError::Undefined(Name::new("ghost")));
    }

    #[test]
    fn quantifier_binders_shadow_constants() {
        let m = model(
            "Definitions. R c ::= 3.\n\
             ProgramVariables. R x.\n\
             Problem. forall c. (c >= 0) -> x = c End.",
        );
        let out = expand_abbreviations(&m).expect("expands");
        assert_eq!(
            print_formula(&out.problem),
            "forall c. (c >= 0) -> x = 3"
        );
    }

    #[test]
    fn capture_is_reported() {
        let m = model(
            "Definitions. B low ::= x <= 5.\n\
             ProgramVariables. R x.\n\
             Problem. forall x. (low -> x <= 5) End.",
        );
        let err = expand_abbreviations(&m).unwrap_err();
        assert!(matches!(err, ExpandError::Capture(_)), "{err}");
    }

    #[test]
    fn expanded_models_still_print_and_parse() {
        let m = model(
            "Definitions.\n\
             R A.\n\
             B psi ::= v <= 12.\n\
             HP ctrl ::= {a := A ++ a := -1}.\n\
             ProgramVariables. R a, v.\n\
             Problem. psi -> [{ctrl; {v' = a}}*]psi End.",
        );
        let out = expand_abbreviations(&m).expect("expands");
        let printed = print_model(&out);
        let again = parse_model("t2.hp", &printed).expect("reparses").model;
        assert_eq!(out, again, "via:\n{}", printed);
    }
}
