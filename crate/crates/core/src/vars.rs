//! Static variable analysis: bound, must-bound, and free variables.
//!
//! The definitions follow the standard coincidence-lemma induction. The
//! interesting cases:
//!
//! * an ODE binds each evolved variable *and* its differential symbol
//!   (`x` and `x'`), and reads each evolved variable (the initial value
//!   enters the solution), so evolved variables are both bound and free;
//! * sequencing masks: `fv(a; b) = fv(a) ∪ (fv(b) \ mbv(a))`, and the
//!   modality case masks the postcondition the same way;
//! * only variables bound on *every* path are must-bound, so choices
//!   intersect and loops (which may run zero times) must-bind nothing.
//!
//! Analysis runs on expanded programs: a leftover [`HybridProgram::Ref`]
//! is a caller bug and panics. Nullary predicate references are rigid and
//! contribute no free variables.

use std::collections::BTreeSet;

use crate::ast::*;

/// The variable sets of one program, as reported by analysis commands.
#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize)]
pub struct VarSets {
    /// `fv ∪ bv`.
    pub all: BTreeSet<Name>,
    pub bv: BTreeSet<Name>,
    pub fv: BTreeSet<Name>,
    pub mbv: BTreeSet<Name>,
}

pub fn var_sets(p: &HybridProgram) -> VarSets {
    let bv = bv(p);
    let fv = fv(p);
    let mbv = mbv(p);
    let all = bv.union(&fv).cloned().collect();
    VarSets { all, bv, fv, mbv }
}

/// Variables written on some run.
pub fn bv(p: &HybridProgram) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    bv_into(p, &mut out);
    out
}

fn bv_into(p: &HybridProgram, out: &mut BTreeSet<Name>) {
    match p {
        HybridProgram::Assign(x, _) | HybridProgram::AssignAny(x) => {
            out.insert(x.clone());
        }
        HybridProgram::Test(_) => {}
        HybridProgram::Ode { equations, .. } => {
            for eq in equations {
                out.insert(eq.var.clone());
                out.insert(eq.var.primed());
            }
        }
        HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => {
            bv_into(a, out);
            bv_into(b, out);
        }
        HybridProgram::Loop(a) => bv_into(a, out),
        HybridProgram::Ref(n) => panic_on_ref(n),
    }
}

/// Variables written on every run.
pub fn mbv(p: &HybridProgram) -> BTreeSet<Name> {
    match p {
        HybridProgram::Assign(x, _) | HybridProgram::AssignAny(x) => {
            [x.clone()].into_iter().collect()
        }
        HybridProgram::Test(_) => BTreeSet::new(),
        // Evolution (even for duration zero) writes every equation's
        // variable and differential symbol.
        HybridProgram::Ode { .. } => bv(p),
        HybridProgram::Seq(a, b) => {
            let mut out = mbv(a);
            out.extend(mbv(b));
            out
        }
        HybridProgram::Choice(a, b) => {
            mbv(a).intersection(&mbv(b)).cloned().collect()
        }
        HybridProgram::Loop(_) => BTreeSet::new(),
        HybridProgram::Ref(n) => panic_on_ref(n),
    }
}

/// Variables whose initial value some run can depend on.
pub fn fv(p: &HybridProgram) -> BTreeSet<Name> {
    match p {
        HybridProgram::Assign(_, e) => fv_term(e),
        HybridProgram::AssignAny(_) => BTreeSet::new(),
        HybridProgram::Test(f) => fv_formula(f),
        HybridProgram::Ode { equations, domain } => {
            let mut out: BTreeSet<Name> = equations.iter().map(|eq| eq.var.clone()).collect();
            for eq in equations {
                out.extend(fv_term(&eq.rhs));
            }
            out.extend(fv_formula(domain));
            out
        }
        HybridProgram::Seq(a, b) => {
            let mut out = fv(a);
            let mask = mbv(a);
            out.extend(fv(b).difference(&mask).cloned());
            out
        }
        HybridProgram::Choice(a, b) => {
            let mut out = fv(a);
            out.extend(fv(b));
            out
        }
        HybridProgram::Loop(a) => fv(a),
        HybridProgram::Ref(n) => panic_on_ref(n),
    }
}

pub fn fv_term(t: &Term) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    fv_term_into(t, &mut out);
    out
}

fn fv_term_into(t: &Term, out: &mut BTreeSet<Name>) {
    match t {
        Term::Variable(x) => {
            out.insert(x.clone());
        }
        Term::Constant(_) => {}
        Term::Plus(a, b) | Term::Minus(a, b) | Term::Times(a, b) | Term::Divide(a, b) => {
            fv_term_into(a, out);
            fv_term_into(b, out);
        }
        Term::Neg(a) | Term::Power(a, _) => fv_term_into(a, out),
        Term::Apply(_, args) => {
            for a in args {
                fv_term_into(a, out);
            }
        }
    }
}

pub fn fv_formula(f: &Formula) -> BTreeSet<Name> {
    match f {
        Formula::True | Formula::False => BTreeSet::new(),
        // Nullary predicate symbols are rigid.
        Formula::PredRef(_) => BTreeSet::new(),
        Formula::Cmp(_, a, b) => {
            let mut out = fv_term(a);
            out.extend(fv_term(b));
            out
        }
        Formula::Not(a) => fv_formula(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            let mut out = fv_formula(a);
            out.extend(fv_formula(b));
            out
        }
        Formula::Forall(x, a) | Formula::Exists(x, a) => {
            let mut out = fv_formula(a);
            out.remove(x);
            out
        }
        Formula::Box(p, a) => {
            let mut out = fv(p);
            let mask = mbv(p);
            out.extend(fv_formula(a).difference(&mask).cloned());
            out
        }
    }
}

fn panic_on_ref(n: &Name) -> ! {
    panic!(
        "variable analysis needs an expanded program, found the reference `{}` \
         (run abbreviation expansion first)",
        n
    )
}
