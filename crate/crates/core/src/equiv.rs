//! Equivalence goals and checkable decomposition certificates.
//!
//! A goal asserts that two programs agree on a set H at the end of every
//! matched pair of runs. A [`Certificate`] is a tree of rule applications
//! decomposing such a goal down to leaves that are either structural
//! (identical programs, assumption) or empirical (a bounded oracle run).
//! [`check_certificate`] replays the whole tree from scratch: every
//! side condition is recomputed from the programs with the variable-set
//! analyses, recorded sets must match the recomputed ones exactly, and
//! oracle leaves are re-executed from their stored configuration. The
//! checker is deliberately independent of how certificates are produced,
//! so a certificate surviving it is evidence on its own.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ast::*;
use crate::oracle::{base_oracle, ensure_supported, OracleReport};
use crate::vars;

/// The claim that `left` and `right` agree on `h` run-for-run.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EquivGoal {
    #[serde(with = "program_text")]
    pub left: HybridProgram,
    #[serde(with = "program_text")]
    pub right: HybridProgram,
    pub h: BTreeSet<Name>,
}

impl EquivGoal {
    pub fn new(left: HybridProgram, right: HybridProgram, h: BTreeSet<Name>) -> EquivGoal {
        EquivGoal { left, right, h }
    }
}

/// Decomposition rules. Each one's obligations are documented on
/// [`check_certificate`], which enforces them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Rule {
    /// Both sides are the same program.
    #[serde(rename = "Self")]
    Identity,
    /// Shrinks the agreement set: the child proves a superset of `h`.
    Subset,
    /// Grows the agreement set by variables neither program mentions.
    Unmodified,
    /// Splits `A;C` against `B;D` into a prefix goal and a suffix goal.
    SeqCompose,
    /// Lifts a body goal to the looped programs.
    LoopLift,
    /// Bounded empirical check of a loop-free, flow-free goal.
    BaseOracle,
    /// Accepted without evidence; poisons deductive status.
    Assumed,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Rule::Identity => "Self",
            Rule::Subset => "Subset",
            Rule::Unmodified => "Unmodified",
            Rule::SeqCompose => "SeqCompose",
            Rule::LoopLift => "LoopLift",
            Rule::BaseOracle => "BaseOracle",
            Rule::Assumed => "Assumed",
        };
        f.write_str(s)
    }
}

/// A named set-level obligation recorded at a certificate node. The
/// checker recomputes each set and rejects certificates whose recorded
/// sets differ from the recomputed ones.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SideCondition {
    pub description: String,
    pub sets: Vec<BTreeSet<Name>>,
}

impl SideCondition {
    pub fn new(description: &str, sets: Vec<BTreeSet<Name>>) -> SideCondition {
        SideCondition { description: description.to_string(), sets }
    }
}

pub const SC_H_WIDENS: &str = "child agreement set contains h";
pub const SC_EXTENSION_UNTOUCHED: &str = "extension disjoint from all program variables";
pub const SC_SUFFIX_READS: &str = "suffix free variables contained in h";
pub const SC_BODY_READS: &str = "body free variables contained in h";

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Certificate {
    pub goal: EquivGoal,
    pub rule: Rule,
    pub side_conditions: Vec<SideCondition>,
    pub children: Vec<Certificate>,
    pub oracle_report: Option<OracleReport>,
}

impl Certificate {
    pub fn leaf(goal: EquivGoal, rule: Rule) -> Certificate {
        Certificate { goal, rule, side_conditions: Vec::new(), children: Vec::new(), oracle_report: None }
    }

    /// True when no node rests on empirical or assumed evidence.
    pub fn is_deductive(&self) -> bool {
        !matches!(self.rule, Rule::BaseOracle | Rule::Assumed)
            && self.children.iter().all(Certificate::is_deductive)
    }
}

#[derive(Debug, Error)]
#[error("certificate rejected at {at}: {reason}")]
pub struct CertError {
    /// Path of child indices from the root, e.g. `root.0.1`.
    pub at: String,
    pub reason: String,
}

/// Replays a certificate from scratch; true iff every node verifies.
pub fn check_certificate(c: &Certificate) -> bool {
    verify_certificate(c).is_ok()
}

/// Like [`check_certificate`] but says what failed and where.
pub fn verify_certificate(c: &Certificate) -> Result<(), CertError> {
    verify_node(c, "root".to_string())
}

fn verify_node(c: &Certificate, at: String) -> Result<(), CertError> {
    let fail = |reason: String| Err(CertError { at: at.clone(), reason });

    match c.rule {
        Rule::Identity => {
            if !c.children.is_empty() {
                return fail("Self takes no subgoals".into());
            }
            if !same_program(&c.goal.left, &c.goal.right) {
                return fail("Self requires identical sides".into());
            }
        }
        Rule::Subset => {
            let [child] = c.children.as_slice() else {
                return fail("Subset takes exactly one subgoal".into());
            };
            if !same_program(&child.goal.left, &c.goal.left)
                || !same_program(&child.goal.right, &c.goal.right)
            {
                return fail("Subset must keep the programs".into());
            }
            let sc = recorded(c, SC_H_WIDENS).ok_or_else(|| CertError {
                at: at.clone(),
                reason: format!("missing side condition: {SC_H_WIDENS}"),
            })?;
            if sc.sets != vec![c.goal.h.clone(), child.goal.h.clone()] {
                return fail("recorded sets disagree with the goals".into());
            }
            if !c.goal.h.is_subset(&child.goal.h) {
                return fail("h is not contained in the child agreement set".into());
            }
        }
        Rule::Unmodified => {
            let [child] = c.children.as_slice() else {
                return fail("Unmodified takes exactly one subgoal".into());
            };
            if !same_program(&child.goal.left, &c.goal.left)
                || !same_program(&child.goal.right, &c.goal.right)
            {
                return fail("Unmodified must keep the programs".into());
            }
            let extension: BTreeSet<Name> =
                c.goal.h.difference(&child.goal.h).cloned().collect();
            let expected_child: BTreeSet<Name> =
                c.goal.h.difference(&extension).cloned().collect();
            if child.goal.h != expected_child {
                return fail("child agreement set must be h minus the extension".into());
            }
            let mut all_vars = vars::bv(&c.goal.left);
            all_vars.extend(vars::fv(&c.goal.left));
            all_vars.extend(vars::bv(&c.goal.right));
            all_vars.extend(vars::fv(&c.goal.right));
            let all_vars: BTreeSet<Name> =
                all_vars.into_iter().map(|v| v.unprimed()).collect();
            let sc = recorded(c, SC_EXTENSION_UNTOUCHED).ok_or_else(|| CertError {
                at: at.clone(),
                reason: format!("missing side condition: {SC_EXTENSION_UNTOUCHED}"),
            })?;
            if sc.sets != vec![extension.clone(), all_vars.clone()] {
                return fail("recorded sets disagree with the recomputed ones".into());
            }
            if extension.intersection(&all_vars).next().is_some() {
                return fail("extension mentions a program variable".into());
            }
        }
        Rule::SeqCompose => {
            let [first, second] = c.children.as_slice() else {
                return fail("SeqCompose takes exactly two subgoals".into());
            };
            if first.goal.h != c.goal.h || second.goal.h != c.goal.h {
                return fail("subgoals must use the same agreement set".into());
            }
            let left = HybridProgram::seq(first.goal.left.clone(), second.goal.left.clone());
            let right = HybridProgram::seq(first.goal.right.clone(), second.goal.right.clone());
            if !same_program(&c.goal.left, &left) || !same_program(&c.goal.right, &right) {
                return fail("goal programs do not split into the subgoal programs".into());
            }
            let mut suffix_reads = vars::fv(&second.goal.left);
            suffix_reads.extend(vars::fv(&second.goal.right));
            let sc = recorded(c, SC_SUFFIX_READS).ok_or_else(|| CertError {
                at: at.clone(),
                reason: format!("missing side condition: {SC_SUFFIX_READS}"),
            })?;
            if sc.sets != vec![suffix_reads.clone()] {
                return fail("recorded sets disagree with the recomputed ones".into());
            }
            if !suffix_reads.is_subset(&c.goal.h) {
                return fail("suffix reads a variable outside h".into());
            }
        }
        Rule::LoopLift => {
            let [child] = c.children.as_slice() else {
                return fail("LoopLift takes exactly one subgoal".into());
            };
            if child.goal.h != c.goal.h {
                return fail("subgoal must use the same agreement set".into());
            }
            let (HybridProgram::Loop(a), HybridProgram::Loop(b)) =
                (&c.goal.left, &c.goal.right)
            else {
                return fail("LoopLift applies to repetitions".into());
            };
            if !same_program(a, &child.goal.left) || !same_program(b, &child.goal.right) {
                return fail("subgoal programs are not the loop bodies".into());
            }
            let mut body_reads = vars::fv(a);
            body_reads.extend(vars::fv(b));
            let sc = recorded(c, SC_BODY_READS).ok_or_else(|| CertError {
                at: at.clone(),
                reason: format!("missing side condition: {SC_BODY_READS}"),
            })?;
            if sc.sets != vec![body_reads.clone()] {
                return fail("recorded sets disagree with the recomputed ones".into());
            }
            if !body_reads.is_subset(&c.goal.h) {
                return fail("loop body reads a variable outside h".into());
            }
        }
        Rule::BaseOracle => {
            if !c.children.is_empty() {
                return fail("BaseOracle takes no subgoals".into());
            }
            if let Err(e) = ensure_supported(&c.goal.left).and_then(|_| ensure_supported(&c.goal.right)) {
                return fail(e.to_string());
            }
            let Some(report) = &c.oracle_report else {
                return fail("missing oracle report".into());
            };
            if report.h != c.goal.h {
                return fail("oracle report covers a different agreement set".into());
            }
            if !report.passed() {
                return fail("recorded oracle report did not pass".into());
            }
            let rerun = base_oracle(&c.goal.left, &c.goal.right, &c.goal.h, &report.config)
                .map_err(|e| CertError { at: at.clone(), reason: e.to_string() })?;
            if !rerun.passed() {
                return fail(format!(
                    "oracle replay found {} counterexample(s)",
                    rerun.counterexamples.len()
                ));
            }
        }
        Rule::Assumed => {
            if !c.children.is_empty() {
                return fail("Assumed takes no subgoals".into());
            }
        }
    }

    for (i, child) in c.children.iter().enumerate() {
        verify_node(child, format!("{at}.{i}"))?;
    }
    Ok(())
}

fn recorded<'a>(c: &'a Certificate, description: &str) -> Option<&'a SideCondition> {
    c.side_conditions.iter().find(|sc| sc.description == description)
}

/// Program equality up to sequence reassociation.
pub fn same_program(a: &HybridProgram, b: &HybridProgram) -> bool {
    normalize_seq(a) == normalize_seq(b)
}

mod program_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::ast::HybridProgram;
    use crate::syntax::parser::parse_program_str;
    use crate::syntax::printer::print_program;

    pub fn serialize<S: Serializer>(p: &HybridProgram, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&print_program(p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HybridProgram, D::Error> {
        let text = String::deserialize(d)?;
        parse_program_str(&text).map_err(|diags| {
            let rendered: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            serde::de::Error::custom(rendered.join("; "))
        })
    }
}
