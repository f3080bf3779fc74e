//! Certificate search for attack-generated equivalence goals, and the
//! robust-safety reduction built on it.
//!
//! The strategy mirrors how these proofs are written by hand. A control
//! loop's body is factored as `A; C`, where the prefix `A` ends after the
//! last statement that binds a sensor or a sensor-dependent variable —
//! everything the attack can reach — and the suffix `C` is untouched by
//! the attack. The prefix pair is discharged by the bounded oracle over
//! the variables the programs actually mention, the agreement set is
//! widened by the untouched remainder, the suffix is discharged by
//! reflexivity, and sequence, loop, and subset steps reassemble the
//! original goal. The result is an ordinary [`Certificate`] that
//! [`check_certificate`] can replay with no knowledge of this search.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ast::*;
use crate::attack::{attack_program, AttackError};
use crate::equiv::{
    same_program, Certificate, EquivGoal, Rule, SideCondition, SC_BODY_READS,
    SC_EXTENSION_UNTOUCHED, SC_H_WIDENS, SC_SUFFIX_READS,
};
use crate::expand::{expand_abbreviations, ExpandError};
use crate::oracle::{base_oracle, OracleConfig, OracleReport};
use crate::total::taint_program;
use crate::vars;

#[derive(Clone, Debug, Default)]
pub struct StrategyConfig {
    /// The attacked sensor set the goal was generated from.
    pub sensors: BTreeSet<Name>,
    pub oracle: OracleConfig,
}

/// Why the strategy gave up. Not a refutation: the converse direction of
/// the robust-safety reduction does not hold, so an unproven goal says
/// nothing about an actual attack.
#[derive(Debug)]
pub struct Unproven {
    pub reason: String,
    /// Present when the bounded oracle ran and did not pass.
    pub oracle_report: Option<OracleReport>,
}

impl std::fmt::Display for Unproven {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.reason)
    }
}

pub enum ProveOutcome {
    Proved(Certificate),
    Unproven(Unproven),
}

impl ProveOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            ProveOutcome::Proved(c) => Some(c),
            ProveOutcome::Unproven(_) => None,
        }
    }

    fn give_up(reason: impl Into<String>) -> ProveOutcome {
        ProveOutcome::Unproven(Unproven { reason: reason.into(), oracle_report: None })
    }
}

/// Searches for a certificate of `goal`, assuming `goal.right` was
/// produced by attacking `goal.left` on `strategy.sensors`.
pub fn prove_equiv(goal: &EquivGoal, strategy: &StrategyConfig) -> ProveOutcome {
    if same_program(&goal.left, &goal.right) {
        return ProveOutcome::Proved(Certificate::leaf(goal.clone(), Rule::Identity));
    }

    let (body_l, body_r, looped) = match (&goal.left, &goal.right) {
        (HybridProgram::Loop(a), HybridProgram::Loop(b)) => ((**a).clone(), (**b).clone(), true),
        _ => (goal.left.clone(), goal.right.clone(), false),
    };

    // Split after the last control statement the attack can influence.
    let spine_l: Vec<HybridProgram> = seq_stmts(&body_l).into_iter().cloned().collect();
    let spine_r: Vec<HybridProgram> = seq_stmts(&body_r).into_iter().cloned().collect();
    if spine_l.len() != spine_r.len() {
        return ProveOutcome::give_up(
            "the two sides have different statement counts; not an attack-generated pair",
        );
    }
    let tainted = {
        let mut seeds = strategy.sensors.clone();
        let report = taint_program(&goal.left, &seeds);
        seeds.extend(report.tainted);
        seeds
    };
    let ctrl_end = match spine_l.last() {
        Some(HybridProgram::Ode { .. }) => spine_l.len() - 1,
        _ => spine_l.len(),
    };
    let split = (0..ctrl_end)
        .rev()
        .find(|&i| vars::bv(&spine_l[i]).iter().any(|v| tainted.contains(&v.unprimed())));
    let Some(split) = split else {
        return ProveOutcome::give_up(
            "no control statement binds an attacked or attack-dependent variable",
        );
    };

    let prefix_l = reassemble(&spine_l[..=split]);
    let prefix_r = reassemble(&spine_r[..=split]);
    let suffix = if split + 1 < spine_l.len() {
        let suffix_l = reassemble(&spine_l[split + 1..]);
        let suffix_r = reassemble(&spine_r[split + 1..]);
        if !same_program(&suffix_l, &suffix_r) {
            return ProveOutcome::give_up("the attack reached past every candidate split point");
        }
        Some(suffix_l)
    } else {
        None
    };

    // The working agreement set: everything either side of either part
    // reads, plus the target.
    let mut h1 = goal.h.clone();
    h1.extend(vars::fv(&prefix_l));
    h1.extend(vars::fv(&prefix_r));
    if let Some(sfx) = &suffix {
        h1.extend(vars::fv(sfx));
    }

    let prefix_cert = if same_program(&prefix_l, &prefix_r) {
        Certificate::leaf(
            EquivGoal::new(prefix_l.clone(), prefix_r.clone(), h1.clone()),
            Rule::Identity,
        )
    } else {
        let mut mentioned = vars::bv(&prefix_l);
        mentioned.extend(vars::fv(&prefix_l));
        mentioned.extend(vars::bv(&prefix_r));
        mentioned.extend(vars::fv(&prefix_r));
        let mentioned: BTreeSet<Name> = mentioned.into_iter().map(|v| v.unprimed()).collect();
        let h0: BTreeSet<Name> = h1.intersection(&mentioned).cloned().collect();
        let extension: BTreeSet<Name> = h1.difference(&mentioned).cloned().collect();

        let report = match base_oracle(&prefix_l, &prefix_r, &h0, &strategy.oracle) {
            Ok(r) => r,
            Err(e) => return ProveOutcome::give_up(format!("the attacked prefix defeats the oracle: {e}")),
        };
        if !report.passed() {
            let reason = if report.truncated {
                "the oracle could not enumerate the attacked prefix within its path budget"
                    .to_string()
            } else {
                format!(
                    "the oracle found {} run(s) of one prefix the other cannot match",
                    report.counterexamples.len()
                )
            };
            return ProveOutcome::Unproven(Unproven { reason, oracle_report: Some(report) });
        }
        let base = Certificate {
            goal: EquivGoal::new(prefix_l.clone(), prefix_r.clone(), h0),
            rule: Rule::BaseOracle,
            side_conditions: vec![],
            children: vec![],
            oracle_report: Some(report),
        };
        if extension.is_empty() {
            base
        } else {
            Certificate {
                goal: EquivGoal::new(prefix_l.clone(), prefix_r.clone(), h1.clone()),
                rule: Rule::Unmodified,
                side_conditions: vec![SideCondition::new(
                    SC_EXTENSION_UNTOUCHED,
                    vec![extension, mentioned],
                )],
                children: vec![base],
                oracle_report: None,
            }
        }
    };

    let body_cert = match suffix {
        Some(sfx) => {
            let suffix_reads = vars::fv(&sfx);
            Certificate {
                goal: EquivGoal::new(body_l.clone(), body_r.clone(), h1.clone()),
                rule: Rule::SeqCompose,
                side_conditions: vec![SideCondition::new(SC_SUFFIX_READS, vec![suffix_reads])],
                children: vec![
                    prefix_cert,
                    Certificate::leaf(
                        EquivGoal::new(sfx.clone(), sfx.clone(), h1.clone()),
                        Rule::Identity,
                    ),
                ],
                oracle_report: None,
            }
        }
        None => prefix_cert,
    };

    let lifted = if looped {
        let mut body_reads = vars::fv(&body_l);
        body_reads.extend(vars::fv(&body_r));
        Certificate {
            goal: EquivGoal::new(goal.left.clone(), goal.right.clone(), h1.clone()),
            rule: Rule::LoopLift,
            side_conditions: vec![SideCondition::new(SC_BODY_READS, vec![body_reads])],
            children: vec![body_cert],
            oracle_report: None,
        }
    } else {
        body_cert
    };

    let root = Certificate {
        goal: goal.clone(),
        rule: Rule::Subset,
        side_conditions: vec![SideCondition::new(SC_H_WIDENS, vec![goal.h.clone(), h1])],
        children: vec![lifted],
        oracle_report: None,
    };

    match crate::equiv::verify_certificate(&root) {
        Ok(()) => ProveOutcome::Proved(root),
        Err(e) => {
            debug_assert!(false, "search built an uncheckable certificate: {e}");
            ProveOutcome::give_up(format!("search built an uncheckable certificate: {e}"))
        }
    }
}

fn reassemble(stmts: &[HybridProgram]) -> HybridProgram {
    let mut it = stmts.iter().rev();
    let last = it.next().expect("nonempty split").clone();
    it.fold(last, |acc, s| HybridProgram::seq(s.clone(), acc))
}

#[derive(Debug, Error)]
pub enum RobustError {
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("the problem is not of the shape `assumptions -> [{{loop}}*] safety`: {0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RobustStatus {
    /// Equivalence certified without empirical leaves.
    #[serde(rename = "RobustlySafe_Deductive")]
    RobustlySafeDeductive,
    /// Equivalence certified, but an oracle or assumption leaf remains.
    #[serde(rename = "RobustlySafe_Empirical")]
    RobustlySafeEmpirical,
    /// No certificate found. Not a refutation.
    Unproven,
}

impl std::fmt::Display for RobustStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RobustStatus::RobustlySafeDeductive => "robustly safe (deductive)",
            RobustStatus::RobustlySafeEmpirical => "robustly safe (empirical)",
            RobustStatus::Unproven => "unproven",
        };
        f.write_str(s)
    }
}

#[derive(Debug, serde::Serialize)]
pub struct RobustSafetyVerdict {
    pub status: RobustStatus,
    pub certificate: Option<Certificate>,
    /// The agreement set the reduction used: the free variables of the
    /// problem's assumptions and safety condition.
    pub h_used: BTreeSet<Name>,
    pub unproven_reason: Option<String>,
}

impl RobustSafetyVerdict {
    /// A caveat worth repeating wherever an unproven verdict is shown.
    pub fn caveat(&self) -> Option<&'static str> {
        match self.status {
            RobustStatus::Unproven => Some(
                "unproven does not mean unsafe: a system can be robustly safe for \
                 reasons this decomposition cannot express",
            ),
            _ => None,
        }
    }
}

/// Reduces robust safety of `model` under attack on `sensors` to an
/// equivalence goal over the free variables of the assumptions and the
/// safety condition, then searches for a certificate.
pub fn check_robust_safety(
    model: &Model,
    sensors: &BTreeSet<Name>,
    strategy: &StrategyConfig,
) -> Result<RobustSafetyVerdict, RobustError> {
    let expanded = expand_abbreviations(model)?;

    let mut premises = Vec::new();
    let mut cur = &expanded.problem;
    while let Formula::Implies(a, b) = cur {
        premises.push((**a).clone());
        cur = b;
    }
    let Formula::Box(program, post) = cur else {
        return Err(RobustError::Shape(crate::syntax::printer::print_formula(cur)));
    };
    if !matches!(program.as_ref(), HybridProgram::Loop(_)) {
        return Err(RobustError::Shape(crate::syntax::printer::print_program(program)));
    }

    let mut h = vars::fv_formula(post);
    for p in &premises {
        h.extend(vars::fv_formula(p));
    }

    let (attacked, _) = attack_program(program, sensors)?;
    let goal = EquivGoal::new((**program).clone(), attacked, h.clone());
    let strategy = StrategyConfig { sensors: sensors.clone(), oracle: strategy.oracle.clone() };

    Ok(match prove_equiv(&goal, &strategy) {
        ProveOutcome::Proved(cert) => RobustSafetyVerdict {
            status: if cert.is_deductive() {
                RobustStatus::RobustlySafeDeductive
            } else {
                RobustStatus::RobustlySafeEmpirical
            },
            certificate: Some(cert),
            h_used: h,
            unproven_reason: None,
        },
        ProveOutcome::Unproven(u) => RobustSafetyVerdict {
            status: RobustStatus::Unproven,
            certificate: None,
            h_used: h,
            unproven_reason: Some(u.reason),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equiv::check_certificate;
    use crate::syntax::parser::{parse_model, parse_program_str};

    fn prog(src: &str) -> HybridProgram {
        parse_program_str(src).unwrap()
    }

    fn names(ns: &[&str]) -> BTreeSet<Name> {
        ns.iter().map(|n| Name::new(*n)).collect()
    }

    fn attacked(p: &HybridProgram, sensors: &[&str]) -> HybridProgram {
        attack_program(p, &names(sensors)).unwrap().0
    }

    #[test]
    fn an_untouched_goal_is_proved_by_reflexivity() {
        let p = prog("{s := *; a := s; {p' = a & p <= 10}}*");
        let goal = EquivGoal::new(p.clone(), attacked(&p, &["s"]), names(&["p"]));
        let outcome = prove_equiv(&goal, &StrategyConfig {
            sensors: names(&["s"]),
            ..Default::default()
        });
        let cert = outcome.certificate().expect("attack-invariant");
        assert_eq!(cert.rule, Rule::Identity);
        assert!(cert.is_deductive());
        assert!(check_certificate(cert));
    }

    #[test]
    fn voting_is_certified_empirically() {
        let body = "s1 := p; s2 := p; s3 := p; \
                    {?s1 = s2; s := s1 ++ ?s1 != s2; s := s3}; \
                    a := s; t := 0; {p' = a, t' = 1 & t <= 1}";
        let p = HybridProgram::repeat(prog(body));
        let goal = EquivGoal::new(p.clone(), attacked(&p, &["s1"]), names(&["p"]));
        let outcome = prove_equiv(&goal, &StrategyConfig {
            sensors: names(&["s1"]),
            ..Default::default()
        });
        let cert = outcome.certificate().expect("the vote masks the attack");
        assert!(check_certificate(cert));
        assert!(!cert.is_deductive());

        // The expected derivation shape, outside in.
        assert_eq!(cert.rule, Rule::Subset);
        let lift = &cert.children[0];
        assert_eq!(lift.rule, Rule::LoopLift);
        let seq = &lift.children[0];
        assert_eq!(seq.rule, Rule::SeqCompose);
        assert_eq!(seq.children[1].rule, Rule::Identity);

        // The prefix absorbs the whole attack-dependent chain — the vote
        // and the actuation that reads it — leaving a flow-only suffix.
        let prefix = &seq.children[0].goal.left;
        assert!(vars::bv(prefix).contains(&Name::new("s")));
        assert!(vars::bv(prefix).contains(&Name::new("a")));
        let suffix = &seq.children[1].goal.left;
        assert!(seq_stmts(suffix)
            .iter()
            .any(|s| matches!(s, HybridProgram::Ode { .. })));
    }

    #[test]
    fn a_feedthrough_attack_is_unproven_with_oracle_evidence() {
        let body = "s := p; a := s; t := 0; {p' = a, t' = 1 & t <= 1}";
        let p = HybridProgram::repeat(prog(body));
        let goal = EquivGoal::new(p.clone(), attacked(&p, &["s"]), names(&["p"]));
        let outcome = prove_equiv(&goal, &StrategyConfig {
            sensors: names(&["s"]),
            ..Default::default()
        });
        let ProveOutcome::Unproven(u) = outcome else {
            panic!("a straight feedthrough cannot be equivalent");
        };
        let report = u.oracle_report.expect("the oracle ran and refuted");
        assert!(!report.counterexamples.is_empty());
    }

    #[test]
    fn robust_safety_runs_end_to_end_on_a_voting_model() {
        let src = "\
ProgramVariables. R p, s1, s2, s3, s, a, t.
Problem.
  p <= 10 -> [{
    s1 := p; s2 := p; s3 := p;
    {?s1 = s2; s := s1 ++ ?s1 != s2; s := s3};
    ?s <= 10; a := 0; t := 0;
    {p' = a, t' = 1 & t <= 1}
  }*](p <= 10)
End.
";
        let model = parse_model("voting.hp", src).unwrap().model;
        let verdict =
            check_robust_safety(&model, &names(&["s1"]), &StrategyConfig::default()).unwrap();
        assert_eq!(verdict.status, RobustStatus::RobustlySafeEmpirical);
        assert_eq!(verdict.h_used, names(&["p"]));
        let cert = verdict.certificate.as_ref().expect("certified");
        assert!(check_certificate(cert));
        assert!(verdict.caveat().is_none());
    }

    #[test]
    fn robust_safety_reports_unproven_for_a_direct_feedthrough() {
        let src = "\
ProgramVariables. R p, s, a, t.
Problem.
  p <= 10 -> [{
    s := p;
    {?s <= 9; a := 1 ++ ?s > 9; a := 0};
    t := 0;
    {p' = a, t' = 1 & t <= 1}
  }*](p <= 10)
End.
";
        let model = parse_model("feedthrough.hp", src).unwrap().model;
        let verdict =
            check_robust_safety(&model, &names(&["s"]), &StrategyConfig::default()).unwrap();
        assert_eq!(verdict.status, RobustStatus::Unproven);
        assert!(verdict.certificate.is_none());
        assert!(verdict.caveat().is_some());
    }

    #[test]
    fn non_loop_problems_are_shape_errors() {
        let src = "ProgramVariables. R x.\nProblem. x = 0 -> [x := 1](x = 1) End.";
        let model = parse_model("straight.hp", src).unwrap().model;
        let err = check_robust_safety(&model, &names(&[]), &StrategyConfig::default());
        assert!(matches!(err, Err(RobustError::Shape(_))));
    }
}
