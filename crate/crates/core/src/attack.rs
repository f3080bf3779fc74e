//! The sensor-attack transformation.
//!
//! An attacker who controls a set of sensors can make each compromised
//! reading take any value. Syntactically: every assignment to an attacked
//! variable — deterministic or not — becomes the nondeterministic
//! `v := *`. Everything else (guards that read the sensor, the plant, the
//! loop structure) stays in place, so the attacked program over-approximates
//! every behavior the attacker can induce while preserving the program's
//! shape and bound variables.
//!
//! Attacked variables are also marked low-integrity in the resulting
//! model: later canonicalization must leave their nondeterminism free
//! (adversarial) rather than hoisting it into coupled choices.
//!
//! A variable evolved by an ODE is physical state, not a reading the
//! attacker can forge, so naming one as a sensor is an error.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ast::*;
use crate::syntax::printer::{ProgPath, ProgramSite, Step};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttackError {
    #[error("`{0}` is not a program variable and cannot be a sensor")]
    NotASensor(Name),
    #[error("sensor `{0}` is evolved by an ODE; physical state cannot be forged directly")]
    SensorInPlant(Name),
}

/// One assignment the attack touched.
#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize)]
pub struct AttackSite {
    pub site: ProgramSite,
    pub path: ProgPath,
    pub variable: Name,
    /// `false` when the assignment was already nondeterministic (the
    /// rewrite left it in place but the attacker still controls it).
    pub rewritten: bool,
}

/// An attacked model plus where the rewrites happened.
#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub model: Model,
    pub sensors: BTreeSet<Name>,
    pub sites: Vec<AttackSite>,
}

/// Rewrites all sensor assignments of a model, definition by definition.
///
/// Working per definition keeps the output model's shape identical to the
/// input except at the attacked sites, so printing an attacked model
/// produces a minimal, reviewable diff.
pub fn attack_model(m: &Model, sensors: &BTreeSet<Name>) -> Result<AttackOutcome, AttackError> {
    for s in sensors {
        if !m.program_vars.contains(s) {
            return Err(AttackError::NotASensor(s.clone()));
        }
    }

    let mut sites = Vec::new();
    let mut definitions = Vec::new();
    for (name, def) in &m.definitions {
        match def {
            Definition::Program(p) => {
                let mut w = Walker {
                    sensors,
                    site: ProgramSite::Definition(name.clone()),
                    path: Vec::new(),
                    sites: &mut sites,
                };
                let rewritten = w.program(p)?;
                definitions.push((name.clone(), Definition::Program(rewritten)));
            }
            other => definitions.push((name.clone(), other.clone())),
        }
    }

    let mut w = Walker {
        sensors,
        site: ProgramSite::Problem,
        path: Vec::new(),
        sites: &mut sites,
    };
    let mut modal = 0usize;
    let problem = w.formula(&m.problem, &mut modal)?;

    let mut low = m.low_integrity_vars.clone();
    low.extend(sensors.iter().cloned());
    Ok(AttackOutcome {
        model: Model {
            definitions,
            program_vars: m.program_vars.clone(),
            problem,
            low_integrity_vars: low,
        },
        sensors: sensors.clone(),
        sites,
    })
}

/// Rewrites one program. Name validation needs a model, so only the
/// plant check applies here; paths are rooted at the program itself.
pub fn attack_program(
    p: &HybridProgram,
    sensors: &BTreeSet<Name>,
) -> Result<(HybridProgram, Vec<AttackSite>), AttackError> {
    let mut sites = Vec::new();
    let mut w = Walker {
        sensors,
        site: ProgramSite::Problem,
        path: Vec::new(),
        sites: &mut sites,
    };
    let rewritten = w.program(p)?;
    Ok((rewritten, sites))
}

/// Does attacking leave the program unchanged (all sensor assignments are
/// already nondeterministic)?
pub fn is_attack_invariant(p: &HybridProgram, sensors: &BTreeSet<Name>) -> bool {
    match p {
        HybridProgram::Assign(x, _) => !sensors.contains(x),
        HybridProgram::AssignAny(_) | HybridProgram::Ref(_) => true,
        HybridProgram::Test(f) => formula_invariant(f, sensors),
        HybridProgram::Ode { .. } => true,
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => {
            is_attack_invariant(a, sensors) && is_attack_invariant(b, sensors)
        }
        HybridProgram::Loop(a) => is_attack_invariant(a, sensors),
    }
}

fn formula_invariant(f: &Formula, sensors: &BTreeSet<Name>) -> bool {
    match f {
        Formula::Box(p, a) => is_attack_invariant(p, sensors) && formula_invariant(a, sensors),
        Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => {
            formula_invariant(a, sensors)
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            formula_invariant(a, sensors) && formula_invariant(b, sensors)
        }
        _ => true,
    }
}

struct Walker<'a> {
    sensors: &'a BTreeSet<Name>,
    site: ProgramSite,
    path: ProgPath,
    sites: &'a mut Vec<AttackSite>,
}

impl Walker<'_> {
    /// A statement spine: statements are numbered along the flattened
    /// sequence but the tree shape is preserved.
    fn program(&mut self, p: &HybridProgram) -> Result<HybridProgram, AttackError> {
        let (rewritten, _) = self.seq_spine(p, 0)?;
        Ok(rewritten)
    }

    fn seq_spine(
        &mut self,
        p: &HybridProgram,
        idx: usize,
    ) -> Result<(HybridProgram, usize), AttackError> {
        match p {
            HybridProgram::Seq(a, b) => {
                let (ra, idx) = self.seq_spine(a, idx)?;
                let (rb, idx) = self.seq_spine(b, idx)?;
                Ok((HybridProgram::seq(ra, rb), idx))
            }
            stmt => {
                self.path.push(Step::Stmt(idx));
                let r = self.stmt(stmt);
                self.path.pop();
                Ok((r?, idx + 1))
            }
        }
    }

    fn stmt(&mut self, s: &HybridProgram) -> Result<HybridProgram, AttackError> {
        match s {
            HybridProgram::Assign(x, _) if self.sensors.contains(x) => {
                self.sites.push(AttackSite {
                    site: self.site.clone(),
                    path: self.path.clone(),
                    variable: x.clone(),
                    rewritten: true,
                });
                Ok(HybridProgram::AssignAny(x.clone()))
            }
            HybridProgram::AssignAny(x) if self.sensors.contains(x) => {
                self.sites.push(AttackSite {
                    site: self.site.clone(),
                    path: self.path.clone(),
                    variable: x.clone(),
                    rewritten: false,
                });
                Ok(s.clone())
            }
            HybridProgram::Assign(..) | HybridProgram::AssignAny(_) | HybridProgram::Ref(_) => {
                Ok(s.clone())
            }
            HybridProgram::Test(f) => {
                let mut modal = 0usize;
                Ok(HybridProgram::Test(self.formula(f, &mut modal)?))
            }
            HybridProgram::Ode { equations, .. } => {
                for eq in equations {
                    if self.sensors.contains(&eq.var) {
                        return Err(AttackError::SensorInPlant(eq.var.clone()));
                    }
                }
                Ok(s.clone())
            }
            HybridProgram::Loop(body) => {
                self.path.push(Step::Body);
                let r = self.program(body);
                self.path.pop();
                Ok(HybridProgram::repeat(r?))
            }
            HybridProgram::Choice(..) => {
                let (r, _) = self.choice_spine(s, 0)?;
                Ok(r)
            }
            HybridProgram::Seq(..) => self.program(s),
        }
    }

    fn choice_spine(
        &mut self,
        p: &HybridProgram,
        idx: usize,
    ) -> Result<(HybridProgram, usize), AttackError> {
        match p {
            HybridProgram::Choice(a, b) => {
                self.path.push(Step::Branch(idx));
                let ra = self.program(a);
                self.path.pop();
                let (rb, idx) = self.choice_spine(b, idx + 1)?;
                Ok((HybridProgram::choice(ra?, rb), idx))
            }
            last => {
                self.path.push(Step::Branch(idx));
                let r = self.program(last);
                self.path.pop();
                Ok((r?, idx + 1))
            }
        }
    }

    fn formula(&mut self, f: &Formula, modal: &mut usize) -> Result<Formula, AttackError> {
        Ok(match f {
            Formula::True
            | Formula::False
            | Formula::Cmp(..)
            | Formula::PredRef(_) => f.clone(),
            Formula::Not(a) => Formula::not(self.formula(a, modal)?),
            Formula::And(a, b) => {
                Formula::and(self.formula(a, modal)?, self.formula(b, modal)?)
            }
            Formula::Or(a, b) => {
                Formula::or(self.formula(a, modal)?, self.formula(b, modal)?)
            }
            Formula::Implies(a, b) => {
                Formula::implies(self.formula(a, modal)?, self.formula(b, modal)?)
            }
            Formula::Forall(x, a) => {
                Formula::Forall(x.clone(), Box::new(self.formula(a, modal)?))
            }
            Formula::Exists(x, a) => {
                Formula::Exists(x.clone(), Box::new(self.formula(a, modal)?))
            }
            Formula::Box(p, a) => {
                let k = *modal;
                *modal += 1;
                self.path.push(Step::Modal(k));
                let rp = self.program(p);
                self.path.pop();
                Formula::boxed(rp?, self.formula(a, modal)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_model, parse_program_str};
    use crate::syntax::printer::{print_model_listing, print_program};

    fn sensors(ns: &[&str]) -> BTreeSet<Name> {
        ns.iter().map(|n| Name::new(*n)).collect()
    }

    fn prog(s: &str) -> HybridProgram {
        parse_program_str(s).unwrap()
    }

    #[test]
    fn deterministic_sensor_reads_become_nondeterministic() {
        let p = prog("v_s := v_p; if (v_s <= 5) then {a := 1} else {a := -1}");
        let (out, sites) = attack_program(&p, &sensors(&["v_s"])).unwrap();
        assert_eq!(
            print_program(&out),
            "v_s := *; if (v_s <= 5) then {a := 1} else {a := -1}"
        );
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].path, vec![Step::Stmt(0)]);
        assert!(sites[0].rewritten);
    }

    #[test]
    fn existing_nondeterminism_is_reported_but_unchanged() {
        let p = prog("w := *; x := w");
        let (out, sites) = attack_program(&p, &sensors(&["w"])).unwrap();
        assert_eq!(out, p);
        assert_eq!(sites.len(), 1);
        assert!(!sites[0].rewritten);
        assert!(is_attack_invariant(&p, &sensors(&["w"])));
    }

    #[test]
    fn attack_is_idempotent() {
        let p = prog("{s := d_p ++ s := *}; a := s; {d_p' = -1}");
        let s = sensors(&["s"]);
        let (once, _) = attack_program(&p, &s).unwrap();
        let (twice, _) = attack_program(&once, &s).unwrap();
        assert_eq!(once, twice);
        assert!(is_attack_invariant(&once, &s));
        assert!(!is_attack_invariant(&p, &s));
    }

    #[test]
    fn attack_preserves_bound_variables_and_other_statements() {
        let p = prog("s := v_p + 1; a := s; {v_p' = a}");
        let (out, _) = attack_program(&p, &sensors(&["s"])).unwrap();
        assert_eq!(crate::vars::bv(&p), crate::vars::bv(&out));
        // Statements that do not assign a sensor are untouched.
        assert_eq!(
            seq_stmts(&out)[1..],
            seq_stmts(&p)[1..],
            "only the sensor read may change"
        );
    }

    #[test]
    fn evolved_variables_cannot_be_sensors() {
        let p = prog("s := v; {v' = a, t' = 1}");
        let err = attack_program(&p, &sensors(&["v"])).unwrap_err();
        assert_eq!(err, AttackError::SensorInPlant(Name::new("v")));
    }

    #[test]
    fn sensors_must_be_program_variables() {
        let m = parse_model(
            "t.hp",
            "Definitions. R A.\nProgramVariables. R x.\nProblem. [x := A] x = A End.",
        )
        .unwrap()
        .model;
        let err = attack_model(&m, &sensors(&["A"])).unwrap_err();
        assert_eq!(err, AttackError::NotASensor(Name::new("A")));
        let err = attack_model(&m, &sensors(&["ghost"])).unwrap_err();
        assert_eq!(err, AttackError::NotASensor(Name::new("ghost")));
    }

    #[test]
    fn model_attack_rewrites_definitions_and_problem() {
        let m = parse_model(
            "t.hp",
            "Definitions.\n\
             HP read ::= v_s := v_p.\n\
             HP ctrl ::= read; a := -v_s.\n\
             ProgramVariables. R a, v_p, v_s.\n\
             Problem. v_p <= 10 -> [{ctrl; {v_p' = a}}*](v_p <= 10) End.",
        )
        .unwrap()
        .model;
        let out = attack_model(&m, &sensors(&["v_s"])).unwrap();
        assert_eq!(out.sites.len(), 1);
        assert_eq!(
            out.sites[0].site,
            ProgramSite::Definition(Name::new("read"))
        );
        assert!(out.model.low_integrity_vars.contains(&Name::new("v_s")));
        // Definition list shape is preserved.
        let names: Vec<&str> =
            out.model.definitions.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["read", "ctrl"]);
        // The site's path resolves to the rewritten statement in the listing.
        let listing = print_model_listing(&out.model, "attacked.hp");
        let span = listing
            .span(&out.sites[0].site, &out.sites[0].path)
            .expect("site has a span");
        let line = listing.text.lines().nth((span.line - 1) as usize).unwrap();
        let shown =
            &line[(span.column - 1) as usize..(span.column - 1 + span.length) as usize];
        assert_eq!(shown, "/*@low*/ v_s := *");
    }

    #[test]
    fn attacking_nothing_changes_nothing() {
        let p = prog("s := 1; {x' = s}");
        let (out, sites) = attack_program(&p, &BTreeSet::new()).unwrap();
        assert_eq!(out, p);
        assert!(sites.is_empty());
    }
}
