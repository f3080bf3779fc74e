//! First-order evaluation of terms and formulas over an `f64` state.

use thiserror::Error;

use super::State;
use crate::ast::*;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("`{0}` has no value in the current state")]
    UndefinedVariable(Name),
    #[error("division by zero while evaluating `{0}`")]
    DivisionByZero(String),
    #[error("the only interpreted function is exp/1, cannot evaluate `{0}`")]
    UnknownFunction(Name),
    #[error("`{0}` is not first-order arithmetic; expand and flatten the model first")]
    NonArithmetic(String),
}

pub fn eval_term(t: &Term, state: &State) -> Result<f64, EvalError> {
    Ok(match t {
        Term::Variable(n) => state
            .get(n)
            .ok_or_else(|| EvalError::UndefinedVariable(n.clone()))?,
        Term::Constant(c) => rational_to_f64(c),
        Term::Plus(a, b) => eval_term(a, state)? + eval_term(b, state)?,
        Term::Minus(a, b) => eval_term(a, state)? - eval_term(b, state)?,
        Term::Times(a, b) => eval_term(a, state)? * eval_term(b, state)?,
        Term::Divide(a, b) => {
            let d = eval_term(b, state)?;
            if d == 0.0 {
                return Err(EvalError::DivisionByZero(
                    crate::syntax::printer::print_term(t),
                ));
            }
            eval_term(a, state)? / d
        }
        Term::Neg(a) => -eval_term(a, state)?,
        Term::Power(a, e) => eval_term(a, state)?.powi(*e as i32),
        Term::Apply(f, args) => {
            if f.as_str() == "exp" && args.len() == 1 {
                eval_term(&args[0], state)?.exp()
            } else {
                return Err(EvalError::UnknownFunction(f.clone()));
            }
        }
    })
}

pub fn eval_formula(f: &Formula, state: &State) -> Result<bool, EvalError> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(op, l, r) => {
            let a = eval_term(l, state)?;
            let b = eval_term(r, state)?;
            match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Eq => a == b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
                CmpOp::Ne => a != b,
            }
        }
        Formula::Not(a) => !eval_formula(a, state)?,
        Formula::And(a, b) => eval_formula(a, state)? && eval_formula(b, state)?,
        Formula::Or(a, b) => eval_formula(a, state)? || eval_formula(b, state)?,
        Formula::Implies(a, b) => !eval_formula(a, state)? || eval_formula(b, state)?,
        Formula::Forall(..) | Formula::Exists(..) | Formula::Box(..) | Formula::PredRef(_) => {
            return Err(EvalError::NonArithmetic(
                crate::syntax::printer::print_formula(f),
            ))
        }
    })
}

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    // Exact for every constant the parser produces from a decimal literal
    // that fits the double range; falls back to the quotient otherwise.
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_formula_str, parse_program_str};

    fn state(pairs: &[(&str, f64)]) -> State {
        let mut s = State::new();
        for (n, v) in pairs {
            s.set(Name::new(*n), *v);
        }
        s
    }

    fn term(src: &str) -> Term {
        // Ride the program parser: `x := <term>`.
        match parse_program_str(&format!("x0 := {}", src)).unwrap() {
            HybridProgram::Assign(_, t) => t,
            _ => unreachable!(),
        }
    }

    #[test]
    fn arithmetic_follows_ieee_semantics() {
        let s = state(&[("a", 3.0), ("b", -0.5)]);
        assert_eq!(eval_term(&term("a * b + 2"), &s).unwrap(), 0.5);
        assert_eq!(eval_term(&term("a^2 - b^2"), &s).unwrap(), 8.75);
        assert_eq!(eval_term(&term("a / 4"), &s).unwrap(), 0.75);
        assert_eq!(eval_term(&term("exp(0)"), &s).unwrap(), 1.0);
    }

    #[test]
    fn comparisons_and_connectives() {
        let s = state(&[("v", 5.0), ("m", 5.0)]);
        let f = parse_formula_str("v <= m & (v < m -> 1 = 0)").unwrap();
        assert!(eval_formula(&f, &s).unwrap());
        let g = parse_formula_str("v != m | v > m").unwrap();
        assert!(!eval_formula(&g, &s).unwrap());
    }

    #[test]
    fn missing_variables_and_bad_operations_are_errors() {
        let s = state(&[("a", 1.0)]);
        assert_eq!(
            eval_term(&term("ghost + 1"), &s).unwrap_err(),
            EvalError::UndefinedVariable(Name::new("ghost"))
        );
        assert!(matches!(
            eval_term(&term("a / (a - 1)"), &s).unwrap_err(),
            EvalError::DivisionByZero(_)
        ));
        let q = parse_formula_str("forall x. x = x").unwrap();
        assert!(matches!(
            eval_formula(&q, &s).unwrap_err(),
            EvalError::NonArithmetic(_)
        ));
    }

    #[test]
    fn decimal_constants_evaluate_exactly() {
        let s = State::new();
        assert_eq!(eval_term(&term("0.5"), &s).unwrap(), 0.5);
        assert_eq!(eval_term(&term("2.375"), &s).unwrap(), 2.375);
    }
}
