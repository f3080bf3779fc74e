//! Core syntax trees for hybrid programs, formulas and terms.
//!
//! Programs and formulas are plain immutable trees with structural equality;
//! transformations build new trees rather than mutating in place, so two
//! pipelines over the same input always agree bit-for-bit.
//!
//! Numeric constants are exact rationals ([`Rational`]); nothing in the
//! front-end or the transformation passes rounds through floating point.
//! Differential symbols (`x'`) are not independent AST nodes: an ODE binds its
//! left-hand sides implicitly, and primed names only show up in variable-set
//! results (see [`crate::vars`]).

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use thiserror::Error;

/// Exact rational number used for all literal constants.
pub type Rational = num_rational::BigRational;

/// An identifier: `[A-Za-z_][A-Za-z0-9_]*`, optionally carrying one trailing
/// prime mark (`'`). Primed names are only produced by variable-set analyses.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(String);

impl Name {
    pub fn new(s: impl Into<String>) -> Name {
        Name(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The primed counterpart of this name (`v` -> `v'`).
    pub fn primed(&self) -> Name {
        debug_assert!(!self.is_primed(), "double prime: {}", self.0);
        Name(format!("{}'", self.0))
    }

    pub fn is_primed(&self) -> bool {
        self.0.ends_with('\'')
    }

    /// Strips a trailing prime mark, if present.
    pub fn unprimed(&self) -> Name {
        match self.0.strip_suffix('\'') {
            Some(base) => Name(base.to_string()),
            None => self.clone(),
        }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Name {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Name {
        Name(s)
    }
}

impl serde::Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> serde::Deserialize<'de> for Name {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Name, D::Error> {
        Ok(Name(String::deserialize(d)?))
    }
}

/// True when `s` is a lexically valid identifier (one optional trailing prime).
pub fn is_valid_ident(s: &str) -> bool {
    let body = s.strip_suffix('\'').unwrap_or(s);
    let mut chars = body.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Real-valued terms.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Term {
    Variable(Name),
    Constant(Rational),
    Plus(Box<Term>, Box<Term>),
    Minus(Box<Term>, Box<Term>),
    Times(Box<Term>, Box<Term>),
    Divide(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    /// Integer power with a non-negative literal exponent.
    Power(Box<Term>, u32),
    /// Application of an interpreted function (the tool only evaluates `exp`).
    Apply(Name, Vec<Term>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("division by the constant zero")]
    DivisionByLiteralZero,
}

impl Term {
    pub fn var(name: impl Into<Name>) -> Term {
        Term::Variable(name.into())
    }

    pub fn num(n: i64) -> Term {
        if n < 0 {
            // Keep literal constants non-negative so printing round-trips;
            // negation is its own node.
            Term::Neg(Box::new(Term::Constant(Rational::from(BigInt::from(-n)))))
        } else {
            Term::Constant(Rational::from(BigInt::from(n)))
        }
    }

    pub fn plus(a: Term, b: Term) -> Term {
        Term::Plus(Box::new(a), Box::new(b))
    }

    pub fn minus(a: Term, b: Term) -> Term {
        Term::Minus(Box::new(a), Box::new(b))
    }

    pub fn times(a: Term, b: Term) -> Term {
        Term::Times(Box::new(a), Box::new(b))
    }

    /// Division; rejects a literal-zero denominator at construction time.
    pub fn divide(a: Term, b: Term) -> Result<Term, TermError> {
        if matches!(&b, Term::Constant(c) if c.is_zero()) {
            return Err(TermError::DivisionByLiteralZero);
        }
        Ok(Term::Divide(Box::new(a), Box::new(b)))
    }

    pub fn neg(a: Term) -> Term {
        Term::Neg(Box::new(a))
    }

    pub fn power(a: Term, e: u32) -> Term {
        Term::Power(Box::new(a), e)
    }
}

/// Comparison operators.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, serde::Serialize, serde::Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Gt,
    Ge,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Ne => "!=",
        }
    }
}

/// First-order dynamic-logic formulas over real arithmetic.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Formula {
    True,
    False,
    Cmp(CmpOp, Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Name, Box<Formula>),
    Exists(Name, Box<Formula>),
    /// `[p] f` — `f` holds after every run of `p`.
    Box(Box<HybridProgram>, Box<Formula>),
    /// Reference to a named Boolean definition (resolved by expansion;
    /// survives it only for abstract Boolean parameters).
    PredRef(Name),
}

impl Formula {
    pub fn cmp(op: CmpOp, a: Term, b: Term) -> Formula {
        Formula::Cmp(op, a, b)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn boxed(p: HybridProgram, f: Formula) -> Formula {
        Formula::Box(Box::new(p), Box::new(f))
    }
}

/// Right-nested conjunction of `fs`; `True` when empty.
pub fn conjoin(fs: Vec<Formula>) -> Formula {
    let mut it = fs.into_iter().rev();
    match it.next() {
        None => Formula::True,
        Some(last) => it.fold(last, |acc, f| Formula::and(f, acc)),
    }
}

/// Flattens a conjunction tree into its leaves, left to right.
pub fn conjuncts(f: &Formula) -> Vec<&Formula> {
    fn go<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
        match f {
            Formula::And(a, b) => {
                go(a, out);
                go(b, out);
            }
            other => out.push(other),
        }
    }
    let mut out = Vec::new();
    go(f, &mut out);
    out
}

/// One equation of an ODE system: `var' = rhs`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct OdeEq {
    pub var: Name,
    pub rhs: Term,
}

/// Hybrid programs.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum HybridProgram {
    /// `x := e`
    Assign(Name, Term),
    /// `x := *`
    AssignAny(Name),
    /// `?f`
    Test(Formula),
    /// `{x' = e, ... & domain}`
    Ode { equations: Vec<OdeEq>, domain: Formula },
    Seq(Box<HybridProgram>, Box<HybridProgram>),
    Choice(Box<HybridProgram>, Box<HybridProgram>),
    Loop(Box<HybridProgram>),
    /// Reference to a named program definition (resolved by expansion).
    Ref(Name),
}

impl HybridProgram {
    pub fn assign(x: impl Into<Name>, e: Term) -> HybridProgram {
        HybridProgram::Assign(x.into(), e)
    }

    pub fn assign_any(x: impl Into<Name>) -> HybridProgram {
        HybridProgram::AssignAny(x.into())
    }

    pub fn test(f: Formula) -> HybridProgram {
        HybridProgram::Test(f)
    }

    pub fn seq(a: HybridProgram, b: HybridProgram) -> HybridProgram {
        HybridProgram::Seq(Box::new(a), Box::new(b))
    }

    pub fn choice(a: HybridProgram, b: HybridProgram) -> HybridProgram {
        HybridProgram::Choice(Box::new(a), Box::new(b))
    }

    pub fn repeat(a: HybridProgram) -> HybridProgram {
        HybridProgram::Loop(Box::new(a))
    }
}

/// Right-nested sequence of `ps`.
///
/// Panics on an empty slice: an empty program has no syntax.
pub fn seq_all(ps: Vec<HybridProgram>) -> HybridProgram {
    let mut it = ps.into_iter().rev();
    let last = it.next().expect("seq_all: empty statement list");
    it.fold(last, |acc, p| HybridProgram::seq(p, acc))
}

/// Flattens a `Seq` spine into its statements, left to right.
pub fn seq_stmts(p: &HybridProgram) -> Vec<&HybridProgram> {
    fn go<'a>(p: &'a HybridProgram, out: &mut Vec<&'a HybridProgram>) {
        match p {
            HybridProgram::Seq(a, b) => {
                go(a, out);
                go(b, out);
            }
            other => out.push(other),
        }
    }
    let mut out = Vec::new();
    go(p, &mut out);
    out
}

/// Flattens a `Choice` tree into its branches, left to right.
pub fn choice_branches(p: &HybridProgram) -> Vec<&HybridProgram> {
    fn go<'a>(p: &'a HybridProgram, out: &mut Vec<&'a HybridProgram>) {
        match p {
            HybridProgram::Choice(a, b) => {
                go(a, out);
                go(b, out);
            }
            other => out.push(other),
        }
    }
    let mut out = Vec::new();
    go(p, &mut out);
    out
}

/// Recursively right-nests every `Seq` spine.
///
/// Sequential composition is associative; certificate checking compares
/// programs after this normalization so that a proof may split `a; b; c`
/// as `(a; b); c` without being rejected over tree shape.
pub fn normalize_seq(p: &HybridProgram) -> HybridProgram {
    match p {
        HybridProgram::Seq(..) => {
            let stmts = seq_stmts(p).into_iter().map(normalize_seq).collect();
            seq_all(stmts)
        }
        HybridProgram::Choice(a, b) => {
            HybridProgram::choice(normalize_seq(a), normalize_seq(b))
        }
        HybridProgram::Loop(a) => HybridProgram::repeat(normalize_seq(a)),
        HybridProgram::Test(f) => HybridProgram::Test(normalize_seq_formula(f)),
        HybridProgram::Ode { equations, domain } => HybridProgram::Ode {
            equations: equations.clone(),
            domain: normalize_seq_formula(domain),
        },
        leaf => leaf.clone(),
    }
}

fn normalize_seq_formula(f: &Formula) -> Formula {
    match f {
        Formula::Not(a) => Formula::not(normalize_seq_formula(a)),
        Formula::And(a, b) => Formula::and(normalize_seq_formula(a), normalize_seq_formula(b)),
        Formula::Or(a, b) => Formula::or(normalize_seq_formula(a), normalize_seq_formula(b)),
        Formula::Implies(a, b) => {
            Formula::implies(normalize_seq_formula(a), normalize_seq_formula(b))
        }
        Formula::Forall(x, a) => Formula::Forall(x.clone(), Box::new(normalize_seq_formula(a))),
        Formula::Exists(x, a) => Formula::Exists(x.clone(), Box::new(normalize_seq_formula(a))),
        Formula::Box(p, a) => Formula::boxed(normalize_seq(p), normalize_seq_formula(a)),
        leaf => leaf.clone(),
    }
}

/// Sort of a declared name.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub enum Sort {
    Real,
    Bool,
    Program,
}

/// A single entry of the `Definitions.` block.
///
/// `RealConst(None)` and `BoolDef(None)` declare uninterpreted parameters;
/// bodies make the name an abbreviation that expansion inlines.
#[derive(Clone, PartialEq, Debug)]
pub enum Definition {
    RealConst(Option<Term>),
    BoolDef(Option<Formula>),
    Program(HybridProgram),
}

impl Definition {
    pub fn sort(&self) -> Sort {
        match self {
            Definition::RealConst(_) => Sort::Real,
            Definition::BoolDef(_) => Sort::Bool,
            Definition::Program(_) => Sort::Program,
        }
    }
}

/// A parsed model file: ordered definitions, program variables, and the
/// problem formula.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct Model {
    /// Declaration-ordered; names are unique.
    pub definitions: Vec<(Name, Definition)>,
    /// Real-sorted mutable state.
    pub program_vars: BTreeSet<Name>,
    pub problem: Formula,
    /// Variables whose nondeterministic assignments were marked `/*@low*/`:
    /// canonicalization leaves them uncoupled.
    pub low_integrity_vars: BTreeSet<Name>,
}

impl Default for Formula {
    fn default() -> Formula {
        Formula::True
    }
}

impl Model {
    pub fn lookup(&self, name: &Name) -> Option<&Definition> {
        self.definitions.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn is_declared(&self, name: &Name) -> bool {
        self.program_vars.contains(name) || self.lookup(name).is_some()
    }

    /// All declared names (definitions and program variables).
    pub fn declared_names(&self) -> BTreeSet<Name> {
        let mut out: BTreeSet<Name> = self.program_vars.clone();
        out.extend(self.definitions.iter().map(|(n, _)| n.clone()));
        out
    }
}

/// Deterministic fresh-name generation: appends `suffix`, bumping with a
/// numeric tail while the candidate is taken.
///
/// The result maps each base name to a name outside `taken`; produced names
/// are pairwise distinct. Iteration over `base` is sorted, so the outcome is
/// independent of caller ordering.
pub fn fresh_names(
    base: &BTreeSet<Name>,
    taken: &BTreeSet<Name>,
    suffix: &str,
) -> std::collections::BTreeMap<Name, Name> {
    let mut out = std::collections::BTreeMap::new();
    let mut used: BTreeSet<Name> = taken.clone();
    for name in base {
        let first = Name::new(format!("{}{}", name, suffix));
        let mut candidate = first.clone();
        let mut bump = 0u64;
        while used.contains(&candidate) {
            bump += 1;
            candidate = Name::new(format!("{}_{}", first, bump));
        }
        used.insert(candidate.clone());
        out.insert(name.clone(), candidate);
    }
    out
}

/// Formats an exact rational for surface syntax: an integer when integral, a
/// finite decimal when the denominator is `2^a * 5^b`, else `p/q` (which does
/// not re-parse as a literal; the front-end never produces such constants).
pub fn rational_literal(r: &Rational) -> String {
    let num = r.numer();
    let den = r.denom();
    debug_assert!(!den.is_zero());
    if den == &BigInt::from(1) {
        return num.to_string();
    }
    // Finite decimal expansion exists iff den = 2^a * 5^b.
    let mut d = den.clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if d == BigInt::from(1) {
        let digits = twos.max(fives);
        let scale = BigInt::from(10).pow(digits);
        let scaled = (num * &scale) / den;
        let sign = if scaled.is_negative() { "-" } else { "" };
        let mag = scaled.abs().to_string();
        let mag = format!("{:0>width$}", mag, width = (digits + 1) as usize);
        let split = mag.len() - digits as usize;
        format!("{}{}.{}", sign, &mag[..split], &mag[split..])
    } else {
        format!("{}/{}", num, den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_lexical_rules() {
        assert!(is_valid_ident("v_s1"));
        assert!(is_valid_ident("_t"));
        assert!(is_valid_ident("x'"));
        assert!(!is_valid_ident("1x"));
        assert!(!is_valid_ident("x''"));
        assert!(!is_valid_ident(""));
        assert!(!is_valid_ident("a-b"));
    }

    #[test]
    fn divide_rejects_literal_zero_denominator() {
        let err = Term::divide(Term::num(1), Term::num(0));
        assert_eq!(err, Err(TermError::DivisionByLiteralZero));
        assert!(Term::divide(Term::num(1), Term::var("x")).is_ok());
    }

    #[test]
    fn fresh_names_appends_suffix_and_bumps() {
        let base: BTreeSet<Name> = [Name::new("x")].into_iter().collect();
        let taken: BTreeSet<Name> = [Name::new("x"), Name::new("x_1")].into_iter().collect();
        let map = fresh_names(&base, &taken, "_1");
        assert_eq!(map[&Name::new("x")], Name::new("x_1_1"));

        let free: BTreeSet<Name> = [Name::new("x")].into_iter().collect();
        let map = fresh_names(&free, &BTreeSet::new(), "_1");
        assert_eq!(map[&Name::new("x")], Name::new("x_1"));
    }

    #[test]
    fn fresh_names_results_are_pairwise_distinct() {
        let base: BTreeSet<Name> = [Name::new("x"), Name::new("x_1")].into_iter().collect();
        let map = fresh_names(&base, &base, "_1");
        let targets: BTreeSet<&Name> = map.values().collect();
        assert_eq!(targets.len(), map.len());
    }

    #[test]
    fn rational_literals_print_exactly() {
        let half = Rational::new(BigInt::from(1), BigInt::from(2));
        assert_eq!(rational_literal(&half), "0.5");
        let int = Rational::from(BigInt::from(1200));
        assert_eq!(rational_literal(&int), "1200");
        let fifth = Rational::new(BigInt::from(3), BigInt::from(40));
        assert_eq!(rational_literal(&fifth), "0.075");
        let third = Rational::new(BigInt::from(1), BigInt::from(3));
        assert_eq!(rational_literal(&third), "1/3");
    }

    #[test]
    fn seq_flatten_and_rebuild_round_trip() {
        let p = seq_all(vec![
            HybridProgram::assign("x", Term::num(1)),
            HybridProgram::assign("y", Term::num(2)),
            HybridProgram::assign("z", Term::num(3)),
        ]);
        assert_eq!(seq_stmts(&p).len(), 3);
        // Left-nested variant normalizes to the same tree.
        let left = HybridProgram::seq(
            HybridProgram::seq(
                HybridProgram::assign("x", Term::num(1)),
                HybridProgram::assign("y", Term::num(2)),
            ),
            HybridProgram::assign("z", Term::num(3)),
        );
        assert_ne!(left, p);
        assert_eq!(normalize_seq(&left), p);
    }

    #[test]
    fn conjoin_is_right_nested() {
        let f = conjoin(vec![Formula::True, Formula::False, Formula::True]);
        assert_eq!(
            f,
            Formula::and(Formula::True, Formula::and(Formula::False, Formula::True))
        );
        assert_eq!(conjuncts(&f).len(), 3);
    }
}
