//! Modeling and analysis of sensor attacks on hybrid-program control loops.
//!
//! The crate's pipeline mirrors how a case study proceeds:
//!
//! 1. [`syntax`] parses a model file into the [`ast`] types and prints or
//!    re-emits them (including KeYmaera X archives).
//! 2. [`vars`] computes bound/must-bound/free variable sets; [`subst`] and
//!    [`expand`] handle substitution and abbreviation expansion.
//! 3. [`attack`] rewrites sensor assignments into adversarial
//!    nondeterminism.
//! 4. [`total`] checks that control code cannot lose totality under attack
//!    (taint propagation plus exhaustiveness patterns).
//! 5. [`canonical`], [`renaming`], and [`compose`] build the self-composed
//!    equivalence obligation for a model and its attacked variant.
//! 6. [`equiv`] checks decomposition certificates for those obligations,
//!    with [`oracle`] as the bounded base-case decision procedure and
//!    [`prove`] as the end-to-end search strategy.
//! 7. [`sim`] executes models numerically: single runs, composed
//!    lock-step checks, and counterexample search.

pub mod ast;
pub mod attack;
pub mod canonical;
pub mod compose;
pub mod equiv;
pub mod expand;
pub mod oracle;
pub mod prove;
pub mod sim;
pub mod subst;
pub mod syntax;
pub mod total;
pub mod vars;

pub use ast::*;
