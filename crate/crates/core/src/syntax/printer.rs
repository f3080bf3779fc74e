//! Precedence-aware printing of terms, formulas, programs, and models.
//!
//! The printer and parser are inverse on parser output: for every tree the
//! parser produces, `parse(print(t)) == t`. Hand-built trees round-trip up
//! to sequence right-nesting (see [`crate::ast::normalize_seq`]) and the
//! two literal normalizations noted on [`print_term`].
//!
//! [`print_model_listing`] additionally records, for every program
//! statement, a [`SourceSpan`] into the printed text keyed by a stable
//! [`ProgPath`]. Analyses that run on the abstract syntax (which carries no
//! positions) use those paths to report locations in the canonical listing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ast::*;

use super::span::SourceSpan;

/// One navigation step into a program.
///
/// Statement indices count along the flattened `Seq` spine
/// ([`seq_stmts`]); branch indices along the flattened `Choice` right
/// spine. A statement that is not a sequence still sits at `Stmt(0)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, serde::Serialize, serde::Deserialize)]
pub enum Step {
    Stmt(usize),
    Branch(usize),
    /// Loop body.
    Body,
    /// The `k`-th `[...]` modality (pre-order) of the enclosing formula.
    Modal(usize),
}

pub type ProgPath = Vec<Step>;

/// Which top-level program of a model a path is rooted in.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, serde::Serialize, serde::Deserialize)]
pub enum ProgramSite {
    Definition(Name),
    /// Rooted in the problem formula; the path starts with [`Step::Modal`].
    Problem,
}

impl fmt::Display for ProgramSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramSite::Definition(n) => write!(f, "{}", n),
            ProgramSite::Problem => write!(f, "<problem>"),
        }
    }
}

/// A printed model plus statement positions.
#[derive(Debug)]
pub struct Listing {
    pub text: String,
    pub file: String,
    pub spans: BTreeMap<(ProgramSite, ProgPath), SourceSpan>,
}

impl Listing {
    pub fn span(&self, site: &ProgramSite, path: &[Step]) -> Option<&SourceSpan> {
        self.spans.get(&(site.clone(), path.to_vec()))
    }
}

pub fn print_term(t: &Term) -> String {
    let mut p = Pr::new("");
    p.term(t, 0);
    p.out
}

pub fn print_formula(f: &Formula) -> String {
    let mut p = Pr::new("");
    p.in_formula(f);
    p.out
}

pub fn print_program(prog: &HybridProgram) -> String {
    let mut p = Pr::new("");
    p.program(prog);
    p.out
}

/// Prints a program annotating `/*@low*/` sites from `low_vars`.
pub fn print_program_annotated(prog: &HybridProgram, low_vars: &BTreeSet<Name>) -> String {
    let mut p = Pr::new("");
    p.annot = low_vars.clone();
    p.program(prog);
    p.out
}

pub fn print_model(m: &Model) -> String {
    model_printer(m, "").out
}

/// Prints a model and records each statement's position, attributing the
/// text to pseudo-file `file`.
pub fn print_model_listing(m: &Model, file: &str) -> Listing {
    let p = model_printer(m, file);
    Listing { text: p.out, file: file.to_string(), spans: p.spans }
}

/// Resolves a [`ProgPath`] inside a program (path without a leading
/// `Modal` step).
pub fn locate<'a>(p: &'a HybridProgram, path: &[Step]) -> Option<&'a HybridProgram> {
    let Some((step, rest)) = path.split_first() else {
        return Some(p);
    };
    match step {
        Step::Stmt(i) => {
            let stmts = seq_stmts(p);
            let s = stmts.get(*i)?;
            locate(s, rest)
        }
        Step::Branch(i) => {
            let branches = right_choice_branches(p);
            let b = branches.get(*i)?;
            locate(b, rest)
        }
        Step::Body => match p {
            HybridProgram::Loop(b) => locate(b, rest),
            _ => None,
        },
        Step::Modal(k) => match p {
            HybridProgram::Test(f) => locate(formula_boxes(f).get(*k)?, rest),
            _ => None,
        },
    }
}

/// Resolves a path rooted at a model site.
pub fn locate_in_model<'a>(
    m: &'a Model,
    site: &ProgramSite,
    path: &[Step],
) -> Option<&'a HybridProgram> {
    match site {
        ProgramSite::Definition(name) => match m.lookup(name)? {
            Definition::Program(p) => locate(p, path),
            _ => None,
        },
        ProgramSite::Problem => {
            let Some((Step::Modal(k), rest)) = path.split_first() else {
                return None;
            };
            locate(formula_boxes(&m.problem).get(*k)?, rest)
        }
    }
}

/// All `[...]` modality programs of a formula, pre-order.
pub fn formula_boxes(f: &Formula) -> Vec<&HybridProgram> {
    fn go<'a>(f: &'a Formula, out: &mut Vec<&'a HybridProgram>) {
        match f {
            Formula::Box(p, body) => {
                out.push(p);
                go(body, out);
            }
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => go(a, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                go(a, out);
                go(b, out);
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    go(f, &mut out);
    out
}

/// The branches along a `Choice`'s right spine. Unlike
/// [`choice_branches`], a choice in left position stays one branch, so
/// printing it braced preserves the tree shape.
pub fn right_choice_branches(p: &HybridProgram) -> Vec<&HybridProgram> {
    let mut out = Vec::new();
    let mut cur = p;
    while let HybridProgram::Choice(a, b) = cur {
        out.push(a.as_ref());
        cur = b;
    }
    out.push(cur);
    out
}

/// `if (f) then {a} else {b}` view of a guarded binary choice, when the
/// second guard is exactly the negation of the first.
pub fn as_if_sugar(p: &HybridProgram) -> Option<(&Formula, &HybridProgram, &HybridProgram)> {
    let HybridProgram::Choice(l, r) = p else { return None };
    let (HybridProgram::Seq(lt, lb), HybridProgram::Seq(rt, rb)) = (l.as_ref(), r.as_ref())
    else {
        return None;
    };
    let (HybridProgram::Test(guard), HybridProgram::Test(Formula::Not(neg))) =
        (lt.as_ref(), rt.as_ref())
    else {
        return None;
    };
    (guard == neg.as_ref()).then_some((guard, lb.as_ref(), rb.as_ref()))
}

fn model_printer(m: &Model, file: &str) -> Pr {
    let mut p = Pr::new(file);
    p.annot = m.low_integrity_vars.clone();
    if !m.definitions.is_empty() {
        p.push("Definitions.\n");
        for (name, def) in &m.definitions {
            match def {
                Definition::RealConst(None) => {
                    p.push(&format!("  R {}.\n", name));
                }
                Definition::RealConst(Some(t)) => {
                    p.push(&format!("  R {} ::= ", name));
                    p.term(t, 0);
                    p.push(".\n");
                }
                Definition::BoolDef(None) => {
                    p.push(&format!("  B {}.\n", name));
                }
                Definition::BoolDef(Some(f)) => {
                    p.push(&format!("  B {} ::= ", name));
                    p.in_formula(f);
                    p.push(".\n");
                }
                Definition::Program(prog) => {
                    p.push(&format!("  HP {} ::= ", name));
                    p.site = Some(ProgramSite::Definition(name.clone()));
                    p.program(prog);
                    p.site = None;
                    p.push(".\n");
                }
            }
        }
    }
    if !m.program_vars.is_empty() {
        p.push("ProgramVariables.\n  R ");
        let names: Vec<String> = m.program_vars.iter().map(|n| n.to_string()).collect();
        p.push(&names.join(", "));
        p.push(".\n");
    }
    p.push("Problem.\n  ");
    p.site = Some(ProgramSite::Problem);
    p.in_formula(&m.problem);
    p.site = None;
    p.push("\nEnd.\n");
    p
}

/// Printer state: output buffer, cursor position, and span recording.
struct Pr {
    out: String,
    file: String,
    line: u32,
    col: u32,
    /// Variables whose `:= *` sites carry `/*@low*/`.
    annot: BTreeSet<Name>,
    site: Option<ProgramSite>,
    path: ProgPath,
    /// Pre-order modality counter within the formula currently printed.
    modal_depth: Vec<usize>,
    spans: BTreeMap<(ProgramSite, ProgPath), SourceSpan>,
}

// Term precedence: additive 0, multiplicative 1, unary minus 2, power 3, atom 4.
fn term_prec(t: &Term) -> u8 {
    use num_traits::Signed;
    match t {
        Term::Plus(..) | Term::Minus(..) => 0,
        Term::Times(..) | Term::Divide(..) => 1,
        Term::Neg(_) => 2,
        // A negative constant prints as a negation.
        Term::Constant(c) if c.is_negative() => 2,
        Term::Power(..) => 3,
        Term::Variable(_) | Term::Constant(_) | Term::Apply(..) => 4,
    }
}

// Formula precedence: -> 0, | 1, & 2, unary 3, atom 4.
fn formula_prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 0,
        Formula::Or(..) => 1,
        Formula::And(..) => 2,
        Formula::Not(_) | Formula::Box(..) | Formula::Forall(..) | Formula::Exists(..) => 3,
        Formula::True | Formula::False | Formula::Cmp(..) | Formula::PredRef(_) => 4,
    }
}

impl Pr {
    fn new(file: &str) -> Pr {
        Pr {
            out: String::new(),
            file: file.to_string(),
            line: 1,
            col: 1,
            annot: BTreeSet::new(),
            site: None,
            path: Vec::new(),
            modal_depth: Vec::new(),
            spans: BTreeMap::new(),
        }
    }

    fn push(&mut self, s: &str) {
        for c in s.chars() {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        self.out.push_str(s);
    }

    /// Records the span of whatever `body` prints, at the current path.
    fn record<R>(&mut self, body: impl FnOnce(&mut Pr) -> R) -> R {
        let (line, col) = (self.line, self.col);
        let r = body(self);
        if let Some(site) = self.site.clone() {
            debug_assert_eq!(self.line, line, "statements print on one line");
            let span = SourceSpan {
                file: self.file.clone(),
                line,
                column: col,
                length: self.col - col,
            };
            self.spans.insert((site, self.path.clone()), span);
        }
        r
    }

    fn term(&mut self, t: &Term, min: u8) {
        let parens = term_prec(t) < min;
        if parens {
            self.push("(");
        }
        match t {
            Term::Variable(n) => self.push(n.as_str()),
            Term::Constant(c) => {
                use num_traits::Signed;
                if c.is_negative() {
                    self.push("-");
                    self.push(&rational_literal(&-c.clone()));
                } else {
                    self.push(&rational_literal(c));
                }
            }
            Term::Plus(a, b) => {
                self.term(a, 0);
                self.push(" + ");
                self.term(b, 1);
            }
            Term::Minus(a, b) => {
                self.term(a, 0);
                self.push(" - ");
                self.term(b, 1);
            }
            Term::Times(a, b) => {
                self.term(a, 1);
                self.push(" * ");
                self.term(b, 2);
            }
            Term::Divide(a, b) => {
                self.term(a, 1);
                self.push(" / ");
                self.term(b, 2);
            }
            Term::Neg(a) => {
                self.push("-");
                self.term(a, 3);
            }
            Term::Power(a, e) => {
                self.term(a, 4);
                self.push(&format!("^{}", e));
            }
            Term::Apply(f, args) => {
                self.push(f.as_str());
                self.push("(");
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.term(a, 0);
                }
                self.push(")");
            }
        }
        if parens {
            self.push(")");
        }
    }

    fn formula(&mut self, f: &Formula, min: u8) {
        let parens = formula_prec(f) < min;
        if parens {
            self.push("(");
        }
        match f {
            Formula::True => self.push("true"),
            Formula::False => self.push("false"),
            Formula::PredRef(n) => self.push(n.as_str()),
            Formula::Cmp(op, a, b) => {
                self.term(a, 0);
                self.push(&format!(" {} ", op.symbol()));
                self.term(b, 0);
            }
            Formula::And(a, b) => {
                self.formula(a, 3);
                self.push(" & ");
                self.formula(b, 2);
            }
            Formula::Or(a, b) => {
                self.formula(a, 2);
                self.push(" | ");
                self.formula(b, 1);
            }
            Formula::Implies(a, b) => {
                self.formula(a, 1);
                self.push(" -> ");
                self.formula(b, 0);
            }
            Formula::Not(a) => {
                self.push("!");
                self.unary_operand(a);
            }
            Formula::Forall(x, a) => {
                self.push(&format!("forall {}. ", x));
                self.unary_operand(a);
            }
            Formula::Exists(x, a) => {
                self.push(&format!("exists {}. ", x));
                self.unary_operand(a);
            }
            Formula::Box(p, a) => {
                self.push("[");
                let k = self.next_modal();
                self.with_step(Step::Modal(k), |pr| pr.program(p));
                self.push("]");
                self.unary_operand(a);
            }
        }
        if parens {
            self.push(")");
        }
    }

    /// Operand of `!`, a quantifier, or a modality. Comparisons get
    /// parentheses here (they contain loose term syntax and read badly
    /// right after a unary operator), all other atoms print bare.
    fn unary_operand(&mut self, f: &Formula) {
        if matches!(f, Formula::Cmp(..)) {
            self.push("(");
            self.formula(f, 0);
            self.push(")");
        } else {
            self.formula(f, 3);
        }
    }

    fn next_modal(&mut self) -> usize {
        let k = self.modal_depth.last_mut().expect("formula printing opened a modal frame");
        let cur = *k;
        *k += 1;
        cur
    }

    fn with_step<R>(&mut self, step: Step, body: impl FnOnce(&mut Pr) -> R) -> R {
        self.path.push(step);
        let r = body(self);
        self.path.pop();
        r
    }

    fn program(&mut self, p: &HybridProgram) {
        let stmts = seq_stmts(p);
        for (i, s) in stmts.iter().enumerate() {
            if i > 0 {
                self.push("; ");
            }
            self.with_step(Step::Stmt(i), |pr| pr.record(|pr| pr.stmt(s)));
        }
    }

    fn stmt(&mut self, s: &HybridProgram) {
        match s {
            HybridProgram::Assign(x, t) => {
                self.push(&format!("{} := ", x));
                self.term(t, 0);
            }
            HybridProgram::AssignAny(x) => {
                if self.annot.contains(x) {
                    self.push("/*@low*/ ");
                }
                self.push(&format!("{} := *", x));
            }
            HybridProgram::Test(f) => {
                self.push("?");
                self.in_formula(f);
            }
            HybridProgram::Ref(n) => self.push(n.as_str()),
            HybridProgram::Ode { equations, domain } => {
                self.push("{");
                for (i, eq) in equations.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.push(&format!("{}' = ", eq.var));
                    self.term(&eq.rhs, 0);
                }
                if *domain != Formula::True {
                    self.push(" & ");
                    self.in_formula(domain);
                }
                self.push("}");
            }
            HybridProgram::Loop(body) => {
                self.push("{");
                if let HybridProgram::Choice(..) = body.as_ref() {
                    if as_if_sugar(body).is_some() {
                        self.with_step(Step::Body, |pr| pr.program(body));
                    } else {
                        // `{a ++ b}*` needs no second brace pair.
                        self.with_step(Step::Body, |pr| {
                            pr.with_step(Step::Stmt(0), |pr| {
                                pr.record(|pr| pr.choice_body(body))
                            })
                        });
                    }
                } else {
                    self.with_step(Step::Body, |pr| pr.program(body));
                }
                self.push("}*");
            }
            HybridProgram::Choice(..) => {
                if let Some((guard, then_b, else_b)) = as_if_sugar(s) {
                    self.push("if (");
                    // Both guard tests live at statement 0 of their branch;
                    // point them at the printed guard.
                    let (line, col) = (self.line, self.col);
                    self.in_formula(guard);
                    if let Some(site) = self.site.clone() {
                        let span = SourceSpan {
                            file: self.file.clone(),
                            line,
                            column: col,
                            length: self.col - col,
                        };
                        for b in 0..2 {
                            let mut path = self.path.clone();
                            path.push(Step::Branch(b));
                            path.push(Step::Stmt(0));
                            self.spans.insert((site.clone(), path), span.clone());
                        }
                    }
                    self.push(") then {");
                    self.branch_tail(0, then_b);
                    self.push("} else {");
                    self.branch_tail(1, else_b);
                    self.push("}");
                } else {
                    self.push("{");
                    self.choice_branches_inner(s);
                    self.push("}");
                }
            }
            HybridProgram::Seq(..) => {
                // A sequence in statement position only occurs inside
                // `{...}` printed by the callers above.
                self.program(s);
            }
        }
    }

    /// Body of an `if` branch: statements continue the guard's spine at
    /// index 1.
    fn branch_tail(&mut self, branch: usize, body: &HybridProgram) {
        self.with_step(Step::Branch(branch), |pr| {
            let stmts = seq_stmts(body);
            for (i, s) in stmts.iter().enumerate() {
                if i > 0 {
                    pr.push("; ");
                }
                pr.with_step(Step::Stmt(i + 1), |pr| pr.record(|pr| pr.stmt(s)));
            }
        });
    }

    /// `a ++ b ++ c` (no surrounding braces).
    fn choice_branches_inner(&mut self, p: &HybridProgram) {
        let branches = right_choice_branches(p);
        for (i, b) in branches.iter().enumerate() {
            if i > 0 {
                self.push(" ++ ");
            }
            self.with_step(Step::Branch(i), |pr| pr.program(b));
        }
    }

    /// Loop-over-choice body: `{a ++ b}*` shares the loop's braces, so the
    /// choice node records its span around the bare branch row.
    fn choice_body(&mut self, p: &HybridProgram) {
        self.choice_branches_inner(p);
    }

    /// A formula in program position (test bodies, evolution domains):
    /// opens a fresh modality counter frame.
    fn in_formula(&mut self, f: &Formula) {
        self.modal_depth.push(0);
        self.formula(f, 0);
        self.modal_depth.pop();
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_term(self))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_formula(self))
    }
}

impl fmt::Display for HybridProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_model(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_formula_str, parse_model, parse_program_str};

    fn rt_program(src: &str) {
        let p = parse_program_str(src).expect("parses");
        let printed = print_program(&p);
        let again = parse_program_str(&printed)
            .unwrap_or_else(|e| panic!("reparse of `{}` failed: {:?}", printed, e));
        assert_eq!(p, again, "print/parse identity failed via `{}`", printed);
    }

    fn rt_formula(src: &str) {
        let f = parse_formula_str(src).expect("parses");
        let printed = print_formula(&f);
        let again = parse_formula_str(&printed).expect("reparses");
        assert_eq!(f, again, "print/parse identity failed via `{}`", printed);
    }

    #[test]
    fn exact_program_text() {
        let p = parse_program_str("a:=1;{x'=v,v'=a&v>=0};?x>=0").unwrap();
        assert_eq!(
            print_program(&p),
            "a := 1; {x' = v, v' = a & v >= 0}; ?x >= 0"
        );
    }

    #[test]
    fn term_parenthesization_is_minimal() {
        rt_formula("a - b - c = a - (b - c)");
        rt_formula("a / b / c = a * (b + c)");
        rt_formula("-x^2 = (-x)^2 | -(a * b) = -a * b");
        rt_formula("(x^2)^3 = x^2 - -x");
        let f = parse_formula_str("(a - b) - c = 0").unwrap();
        assert_eq!(print_formula(&f), "a - b - c = 0");
    }

    #[test]
    fn formula_parenthesization_is_minimal() {
        rt_formula("(a = 1 -> b = 1) -> c = 1");
        rt_formula("a = 1 & (b = 1 | c = 1) -> !(c = 1)");
        rt_formula("(a = 1 | b = 1) & c = 1");
        rt_formula("forall x. (x >= 0 -> x >= 0)");
        let f = parse_formula_str("x = 1 & (y = 1 & z = 1)").unwrap();
        assert_eq!(print_formula(&f), "x = 1 & y = 1 & z = 1");
        let g = parse_formula_str("(x = 1 & y = 1) & z = 1").unwrap();
        assert_eq!(print_formula(&g), "(x = 1 & y = 1) & z = 1");
    }

    #[test]
    fn if_statements_resugar() {
        let src = "if (v >= 10) then {a := -1} else {a := 1; b := 2}";
        let p = parse_program_str(src).unwrap();
        assert_eq!(
            print_program(&p),
            "if (v >= 10) then {a := -1} else {a := 1; b := 2}"
        );
        rt_program(src);
    }

    #[test]
    fn left_nested_choice_keeps_its_shape() {
        let a = HybridProgram::assign("a", Term::num(1));
        let b = HybridProgram::assign("a", Term::num(2));
        let c = HybridProgram::assign("a", Term::num(3));
        let left = HybridProgram::choice(HybridProgram::choice(a, b), c);
        let printed = print_program(&left);
        assert_eq!(printed, "{{a := 1 ++ a := 2} ++ a := 3}");
        assert_eq!(parse_program_str(&printed).unwrap(), left);
    }

    #[test]
    fn loops_over_choices_print_one_brace_pair() {
        rt_program("{a := 1 ++ a := 2}*");
        let p = parse_program_str("{a := 1 ++ a := 2}*").unwrap();
        assert_eq!(print_program(&p), "{a := 1 ++ a := 2}*");
    }

    #[test]
    fn model_printing_round_trips() {
        let src = "Definitions.\n\
                   R A.\n\
                   R B ::= 2.\n\
                   B psi ::= v <= 12.\n\
                   HP ctrl ::= {a := A ++ a := -B}.\n\
                   HP plant ::= t := 0; {v' = a, t' = 1 & t <= 1}.\n\
                   ProgramVariables.\n\
                   R a, t, v.\n\
                   Problem.\n\
                   psi -> [{ctrl; plant}*]psi\n\
                   End.";
        let m = parse_model("t.hp", src).expect("parses").model;
        let printed = print_model(&m);
        let again = parse_model("t2.hp", &printed).expect("reparses").model;
        assert_eq!(m, again, "via:\n{}", printed);
    }

    #[test]
    fn low_annotations_survive_printing() {
        let src = "ProgramVariables. R x, s.\n\
                   Problem. [{/*@low*/ s := *; x := s}*] x = x End.";
        let m = parse_model("t.hp", src).expect("parses").model;
        let printed = print_model(&m);
        assert!(printed.contains("/*@low*/ s := *"), "{}", printed);
        let again = parse_model("t2.hp", &printed).expect("reparses").model;
        assert_eq!(m, again);
    }

    #[test]
    fn listing_spans_point_at_statements() {
        let src = "Definitions.\n\
                   HP ctrl ::= if (v >= 10) then {a := -1} else {a := 1}.\n\
                   ProgramVariables.\n\
                   R a, v.\n\
                   Problem.\n\
                   v <= 12 -> [{ctrl; {v' = a}}*](v <= 12)\n\
                   End.";
        let m = parse_model("t.hp", src).expect("parses").model;
        let listing = print_model_listing(&m, "listing.hp");
        let lines: Vec<&str> = listing.text.lines().collect();

        // The if-statement in the `ctrl` definition.
        let site = ProgramSite::Definition(Name::new("ctrl"));
        let s = listing.span(&site, &[Step::Stmt(0)]).expect("if span");
        let text = &lines[(s.line - 1) as usize]
            [(s.column - 1) as usize..(s.column - 1 + s.length) as usize];
        assert_eq!(text, "if (v >= 10) then {a := -1} else {a := 1}");

        // Both branch guards point at the printed guard formula.
        let g = listing
            .span(&site, &[Step::Stmt(0), Step::Branch(1), Step::Stmt(0)])
            .expect("guard span");
        let text = &lines[(g.line - 1) as usize]
            [(g.column - 1) as usize..(g.column - 1 + g.length) as usize];
        assert_eq!(text, "v >= 10");

        // The ODE inside the problem formula's loop: the loop is statement 0
        // of the modality's program, the ODE statement 1 of its body.
        let ode = listing
            .span(
                &ProgramSite::Problem,
                &[Step::Modal(0), Step::Stmt(0), Step::Body, Step::Stmt(1)],
            )
            .expect("ode span");
        let text = &lines[(ode.line - 1) as usize]
            [(ode.column - 1) as usize..(ode.column - 1 + ode.length) as usize];
        assert_eq!(text, "{v' = a}");

        // Paths resolve back to the matching subtree.
        let located = locate_in_model(
            &m,
            &ProgramSite::Problem,
            &[Step::Modal(0), Step::Stmt(0), Step::Body, Step::Stmt(1)],
        )
        .expect("locates");
        assert!(matches!(located, HybridProgram::Ode { .. }));
    }

    #[test]
    fn negative_constants_normalize_to_negation() {
        let t = Term::Constant(Rational::from(num_bigint::BigInt::from(-5)));
        assert_eq!(print_term(&t), "-5");
        let reparsed = parse_formula_str(&format!("x = {}", print_term(&t))).unwrap();
        match reparsed {
            Formula::Cmp(_, _, rhs) => assert_eq!(rhs, Term::num(-5)),
            other => panic!("unexpected: {:?}", other),
        }
    }
}
