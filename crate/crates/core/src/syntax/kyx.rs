//! Emission of models as KeYmaera X archive files (`.kyx`).
//!
//! The archive dialect is close to our surface syntax but not identical:
//! block keywords carry no trailing dot (each block closes with `End.`),
//! declarations are semicolon-terminated, sorts are spelled `Real`/`Bool`,
//! defined constants use `=`, Boolean abbreviations use `<->`, and
//! quantifiers are written `\forall x (...)`. Nullary symbols are emitted
//! without parentheses, as accepted by current archive parsers.
//!
//! Function applications have no general counterpart: only unary `exp` can
//! be emitted, and only when [`EmitOptions::interpreted_functions`] is set
//! (it is then declared as an uninterpreted `Real exp(Real x);`, leaving
//! its interpretation to the prover's library). Everything else fails with
//! [`EmitError::UnsupportedConstruct`].

use thiserror::Error;

use crate::ast::*;

#[derive(Clone, Debug)]
pub struct EmitOptions {
    /// Name of the generated `ArchiveEntry`.
    pub entry_name: String,
    /// Permit unary `exp` applications.
    pub interpreted_functions: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions { entry_name: "model".to_string(), interpreted_functions: false }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmitError {
    #[error("cannot emit archive: {0}")]
    UnsupportedConstruct(String),
}

pub fn emit_kyx(m: &Model, options: &EmitOptions) -> Result<String, EmitError> {
    let mut e = Emitter { out: String::new(), opts: options };
    e.model(m)?;
    Ok(e.out)
}

struct Emitter<'a> {
    out: String,
    opts: &'a EmitOptions,
}

type EResult = Result<(), EmitError>;

impl Emitter<'_> {
    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn model(&mut self, m: &Model) -> EResult {
        self.push(&format!("ArchiveEntry \"{}\"\n\n", self.opts.entry_name));

        let declare_exp = self.opts.interpreted_functions && model_uses_exp(m);
        if !m.definitions.is_empty() || declare_exp {
            self.push("Definitions\n");
            if declare_exp {
                self.push("  Real exp(Real x);\n");
            }
            for (name, def) in &m.definitions {
                match def {
                    Definition::RealConst(None) => self.push(&format!("  Real {};\n", name)),
                    Definition::RealConst(Some(t)) => {
                        self.push(&format!("  Real {} = ", name));
                        self.term(t, 0)?;
                        self.push(";\n");
                    }
                    Definition::BoolDef(None) => self.push(&format!("  Bool {};\n", name)),
                    Definition::BoolDef(Some(f)) => {
                        self.push(&format!("  Bool {} <-> (", name));
                        self.formula(f, 0)?;
                        self.push(");\n");
                    }
                    Definition::Program(p) => {
                        self.push(&format!("  HP {} ::= {{ ", name));
                        self.program(p)?;
                        self.push(" };\n");
                    }
                }
            }
            self.push("End.\n\n");
        }

        if !m.program_vars.is_empty() {
            self.push("ProgramVariables\n");
            for v in &m.program_vars {
                self.push(&format!("  Real {};\n", v));
            }
            self.push("End.\n\n");
        }

        self.push("Problem\n  ");
        self.formula(&m.problem, 0)?;
        self.push("\nEnd.\n\nEnd.\n");
        Ok(())
    }

    fn term(&mut self, t: &Term, min: u8) -> EResult {
        use num_traits::Signed;
        let prec = term_prec(t);
        let parens = prec < min;
        if parens {
            self.push("(");
        }
        match t {
            Term::Variable(n) => self.push(n.as_str()),
            Term::Constant(c) => {
                if c.is_negative() {
                    self.push("-");
                    self.push(&rational_literal(&-c.clone()));
                } else {
                    self.push(&rational_literal(c));
                }
            }
            Term::Plus(a, b) => {
                self.term(a, 0)?;
                self.push(" + ");
                self.term(b, 1)?;
            }
            Term::Minus(a, b) => {
                self.term(a, 0)?;
                self.push(" - ");
                self.term(b, 1)?;
            }
            Term::Times(a, b) => {
                self.term(a, 1)?;
                self.push(" * ");
                self.term(b, 2)?;
            }
            Term::Divide(a, b) => {
                self.term(a, 1)?;
                self.push(" / ");
                self.term(b, 2)?;
            }
            Term::Neg(a) => {
                self.push("-");
                self.term(a, 3)?;
            }
            Term::Power(a, e) => {
                self.term(a, 4)?;
                self.push(&format!("^{}", e));
            }
            Term::Apply(f, args) => {
                if f.as_str() != "exp" {
                    return Err(EmitError::UnsupportedConstruct(format!(
                        "function application `{}(...)` (only `exp` can be emitted)",
                        f
                    )));
                }
                if !self.opts.interpreted_functions {
                    return Err(EmitError::UnsupportedConstruct(
                        "`exp` application (enable interpreted functions to emit it)"
                            .to_string(),
                    ));
                }
                if args.len() != 1 {
                    return Err(EmitError::UnsupportedConstruct(format!(
                        "`exp` applied to {} arguments",
                        args.len()
                    )));
                }
                self.push("exp(");
                self.term(&args[0], 0)?;
                self.push(")");
            }
        }
        if parens {
            self.push(")");
        }
        Ok(())
    }

    fn formula(&mut self, f: &Formula, min: u8) -> EResult {
        let parens = formula_prec(f) < min;
        if parens {
            self.push("(");
        }
        match f {
            Formula::True => self.push("true"),
            Formula::False => self.push("false"),
            Formula::PredRef(n) => self.push(n.as_str()),
            Formula::Cmp(op, a, b) => {
                self.term(a, 0)?;
                self.push(&format!(" {} ", op.symbol()));
                self.term(b, 0)?;
            }
            Formula::And(a, b) => {
                self.formula(a, 3)?;
                self.push(" & ");
                self.formula(b, 2)?;
            }
            Formula::Or(a, b) => {
                self.formula(a, 2)?;
                self.push(" | ");
                self.formula(b, 1)?;
            }
            Formula::Implies(a, b) => {
                self.formula(a, 1)?;
                self.push(" -> ");
                self.formula(b, 0)?;
            }
            Formula::Not(a) => {
                self.push("!(");
                self.formula(a, 0)?;
                self.push(")");
            }
            Formula::Forall(x, a) => {
                self.push(&format!("\\forall {} (", x));
                self.formula(a, 0)?;
                self.push(")");
            }
            Formula::Exists(x, a) => {
                self.push(&format!("\\exists {} (", x));
                self.formula(a, 0)?;
                self.push(")");
            }
            Formula::Box(p, a) => {
                self.push("[");
                self.program(p)?;
                self.push("](");
                self.formula(a, 0)?;
                self.push(")");
            }
        }
        if parens {
            self.push(")");
        }
        Ok(())
    }

    fn program(&mut self, p: &HybridProgram) -> EResult {
        let stmts = seq_stmts(p);
        for (i, s) in stmts.iter().enumerate() {
            if i > 0 {
                self.push("; ");
            }
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &HybridProgram) -> EResult {
        match s {
            HybridProgram::Assign(x, t) => {
                self.push(&format!("{} := ", x));
                self.term(t, 0)?;
            }
            HybridProgram::AssignAny(x) => self.push(&format!("{} := *", x)),
            HybridProgram::Test(f) => {
                self.push("?(");
                self.formula(f, 0)?;
                self.push(")");
            }
            HybridProgram::Ref(n) => self.push(n.as_str()),
            HybridProgram::Ode { equations, domain } => {
                self.push("{");
                for (i, eq) in equations.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.push(&format!("{}' = ", eq.var));
                    self.term(&eq.rhs, 0)?;
                }
                if *domain != Formula::True {
                    self.push(" & ");
                    self.formula(domain, 0)?;
                }
                self.push("}");
            }
            HybridProgram::Loop(body) => {
                self.push("{");
                self.program(body)?;
                self.push("}*");
            }
            HybridProgram::Choice(..) => {
                self.push("{");
                for (i, b) in super::printer::right_choice_branches(s).iter().enumerate() {
                    if i > 0 {
                        self.push(" ++ ");
                    }
                    self.branch(b)?;
                }
                self.push("}");
            }
            HybridProgram::Seq(..) => self.program(s)?,
        }
        Ok(())
    }

    /// A choice branch that is itself a choice keeps its own braces.
    fn branch(&mut self, p: &HybridProgram) -> EResult {
        if matches!(p, HybridProgram::Choice(..)) {
            self.stmt(p)
        } else {
            self.program(p)
        }
    }
}

// Same precedence tables as the surface printer.
fn term_prec(t: &Term) -> u8 {
    use num_traits::Signed;
    match t {
        Term::Plus(..) | Term::Minus(..) => 0,
        Term::Times(..) | Term::Divide(..) => 1,
        Term::Neg(_) => 2,
        Term::Constant(c) if c.is_negative() => 2,
        Term::Power(..) => 3,
        Term::Variable(_) | Term::Constant(_) | Term::Apply(..) => 4,
    }
}

fn formula_prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 0,
        Formula::Or(..) => 1,
        Formula::And(..) => 2,
        Formula::Not(_) | Formula::Box(..) | Formula::Forall(..) | Formula::Exists(..) => 3,
        Formula::True | Formula::False | Formula::Cmp(..) | Formula::PredRef(_) => 4,
    }
}

fn model_uses_exp(m: &Model) -> bool {
    fn term(t: &Term) -> bool {
        match t {
            Term::Apply(f, args) => f.as_str() == "exp" || args.iter().any(term),
            Term::Plus(a, b) | Term::Minus(a, b) | Term::Times(a, b) | Term::Divide(a, b) => {
                term(a) || term(b)
            }
            Term::Neg(a) | Term::Power(a, _) => term(a),
            Term::Variable(_) | Term::Constant(_) => false,
        }
    }
    fn formula(f: &Formula) -> bool {
        match f {
            Formula::Cmp(_, a, b) => term(a) || term(b),
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => formula(a),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                formula(a) || formula(b)
            }
            Formula::Box(p, a) => program(p) || formula(a),
            Formula::True | Formula::False | Formula::PredRef(_) => false,
        }
    }
    fn program(p: &HybridProgram) -> bool {
        match p {
            HybridProgram::Assign(_, t) => term(t),
            HybridProgram::Test(f) => formula(f),
            HybridProgram::Ode { equations, domain } => {
                equations.iter().any(|eq| term(&eq.rhs)) || formula(domain)
            }
            HybridProgram::Seq(a, b) | HybridProgram::Choice(a, b) => program(a) || program(b),
            HybridProgram::Loop(a) => program(a),
            HybridProgram::AssignAny(_) | HybridProgram::Ref(_) => false,
        }
    }
    m.definitions.iter().any(|(_, d)| match d {
        Definition::RealConst(Some(t)) => term(t),
        Definition::BoolDef(Some(f)) => formula(f),
        Definition::Program(p) => program(p),
        _ => false,
    }) || formula(&m.problem)
}
