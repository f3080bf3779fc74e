//! Recursive-descent parser for model files.
//!
//! The surface syntax mirrors the archive layout the prover expects:
//! an optional `Definitions.` block, an optional `ProgramVariables.` block,
//! and a mandatory `Problem. ... End.` — in that order. Declarations must
//! precede use for Boolean and program names, which makes abbreviation
//! cycles unrepresentable in source (programmatically built models are
//! re-checked by expansion).
//!
//! Errors are reported as [`Diagnostic`]s with character-precise spans;
//! the parser recovers at declaration boundaries so several problems can be
//! reported in one pass.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;

use super::lexer::{lex, Tok, Token};
use super::span::{Diagnostic, SourceSpan};

#[derive(Clone, Copy, Default)]
pub struct ParseOptions {
    /// Reject syntax extensions (`/`, `^`, function application, `!=`)
    /// that have no counterpart in the minimal term language.
    pub strict_core: bool,
}

/// A successfully parsed model plus non-fatal notes.
#[derive(Debug)]
pub struct Parsed {
    pub model: Model,
    pub warnings: Vec<Diagnostic>,
}

pub fn parse_model(file: &str, src: &str) -> Result<Parsed, Vec<Diagnostic>> {
    parse_model_with(file, src, ParseOptions::default())
}

pub fn parse_model_with(
    file: &str,
    src: &str,
    options: ParseOptions,
) -> Result<Parsed, Vec<Diagnostic>> {
    let toks = match lex(file, src) {
        Ok(t) => t,
        Err(d) => return Err(vec![d]),
    };
    let mut p = Parser::new(file, toks, options, false);
    let model = p.model();
    p.finish_validation();
    if p.errors.is_empty() {
        Ok(Parsed { model: model.unwrap_or_default(), warnings: p.warnings })
    } else {
        Err(p.errors)
    }
}

/// Parses a standalone program (no declaration checking). Used to reload
/// programs embedded in reports and certificates.
pub fn parse_program_str(src: &str) -> Result<HybridProgram, Vec<Diagnostic>> {
    let toks = lex("<program>", src).map_err(|d| vec![d])?;
    let mut p = Parser::new("<program>", toks, ParseOptions::default(), true);
    let prog = p.program();
    if p.peek() != Tok::Eof {
        p.error_here("trailing input after program");
    }
    match (prog, p.errors.is_empty()) {
        (Ok(prog), true) => Ok(prog),
        _ => Err(p.errors),
    }
}

/// Parses a standalone formula (no declaration checking).
pub fn parse_formula_str(src: &str) -> Result<Formula, Vec<Diagnostic>> {
    let toks = lex("<formula>", src).map_err(|d| vec![d])?;
    let mut p = Parser::new("<formula>", toks, ParseOptions::default(), true);
    let f = p.formula();
    if p.peek() != Tok::Eof {
        p.error_here("trailing input after formula");
    }
    match (f, p.errors.is_empty()) {
        (Ok(f), true) => Ok(f),
        _ => Err(p.errors),
    }
}

struct Parser<'a> {
    file: &'a str,
    toks: Vec<Token>,
    pos: usize,
    options: ParseOptions,
    /// Skip declaration bookkeeping (standalone fragments).
    standalone: bool,
    table: BTreeMap<Name, Sort>,
    /// Identifiers used as real-valued terms before all declarations are seen.
    pending_real: Vec<(Name, SourceSpan)>,
    /// Identifiers used as Boolean atoms.
    pending_bool: Vec<(Name, SourceSpan)>,
    /// Assignment and ODE targets (must end up as program variables).
    pending_assign: Vec<(Name, SourceSpan)>,
    progvars: BTreeSet<Name>,
    /// Quantifier binders currently in scope.
    bound: Vec<Name>,
    low_vars: BTreeSet<Name>,
    errors: Vec<Diagnostic>,
    warnings: Vec<Diagnostic>,
}

type PResult<T> = Result<T, ()>;

impl<'a> Parser<'a> {
    fn new(file: &'a str, toks: Vec<Token>, options: ParseOptions, standalone: bool) -> Self {
        Parser {
            file,
            toks,
            pos: 0,
            options,
            standalone,
            table: BTreeMap::new(),
            pending_real: Vec::new(),
            pending_bool: Vec::new(),
            pending_assign: Vec::new(),
            progvars: BTreeSet::new(),
            bound: Vec::new(),
            low_vars: BTreeSet::new(),
            errors: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn peek(&self) -> Tok {
        self.toks[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> Tok {
        self.toks
            .get(self.pos + ahead)
            .map(|t| t.tok)
            .unwrap_or(Tok::Eof)
    }

    fn peek_text(&self) -> &str {
        &self.toks[self.pos].text
    }

    fn here(&self) -> SourceSpan {
        self.toks[self.pos].span(self.file)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&mut self, msg: impl Into<String>) {
        let span = self.here();
        self.errors.push(Diagnostic::error(span, msg));
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Token> {
        if self.peek() == tok {
            Ok(self.bump())
        } else {
            self.error_here(format!("expected {}, found {}", what, self.describe()));
            Err(())
        }
    }

    fn describe(&self) -> String {
        let t = &self.toks[self.pos];
        if t.tok == Tok::Eof {
            "end of input".to_string()
        } else {
            format!("`{}`", t.text)
        }
    }

    fn at_block_keyword(&self) -> Option<&str> {
        if self.peek() == Tok::Ident && self.peek_at(1) == Tok::Dot {
            match self.peek_text() {
                s @ ("Definitions" | "ProgramVariables" | "Problem" | "End") => Some(s),
                _ => None,
            }
        } else {
            None
        }
    }

    /// Skip to just past the next `.` (or stop before a block keyword / EOF).
    fn recover_to_dot(&mut self) {
        loop {
            if self.at_block_keyword().is_some() || self.peek() == Tok::Eof {
                return;
            }
            if self.bump().tok == Tok::Dot {
                return;
            }
        }
    }

    // ------------------------------------------------------------------
    // Model structure
    // ------------------------------------------------------------------

    fn model(&mut self) -> Option<Model> {
        let mut model = Model::default();

        if self.at_block_keyword() == Some("Definitions") {
            self.bump();
            self.bump(); // `.`
            self.definitions(&mut model);
        }
        if self.at_block_keyword() == Some("ProgramVariables") {
            self.bump();
            self.bump();
            self.program_variables(&mut model);
        }
        if self.at_block_keyword() == Some("Problem") {
            self.bump();
            self.bump();
            match self.formula() {
                Ok(f) => model.problem = f,
                Err(()) => {
                    // Skip to End.
                    while self.at_block_keyword() != Some("End") && self.peek() != Tok::Eof {
                        self.bump();
                    }
                }
            }
        } else {
            self.error_here("expected a `Problem.` block");
            return None;
        }
        if self.at_block_keyword() == Some("End") {
            self.bump();
            self.bump();
        } else {
            self.error_here("expected `End.` after the problem formula");
            return None;
        }
        if self.peek() != Tok::Eof {
            self.error_here("trailing input after `End.`");
        }
        model.low_integrity_vars = std::mem::take(&mut self.low_vars);
        Some(model)
    }

    fn declare(&mut self, name: &Name, sort: Sort, span: SourceSpan) -> bool {
        if self.table.contains_key(name) {
            self.errors
                .push(Diagnostic::error(span, format!("`{}` is declared twice", name)));
            false
        } else {
            self.table.insert(name.clone(), sort);
            true
        }
    }

    fn ident(&mut self) -> PResult<(Name, SourceSpan)> {
        let span = self.here();
        let t = self.expect(Tok::Ident, "an identifier")?;
        Ok((Name::new(t.text), span))
    }

    fn definitions(&mut self, model: &mut Model) {
        loop {
            if self.at_block_keyword().is_some() || self.peek() == Tok::Eof {
                return;
            }
            if self.definition(model).is_err() {
                self.recover_to_dot();
            }
        }
    }

    fn definition(&mut self, model: &mut Model) -> PResult<()> {
        let sort_span = self.here();
        let sort_tok = self.expect(Tok::Ident, "a sort (`R`, `B`, or `HP`)")?;
        match sort_tok.text.as_str() {
            "R" => {
                let (first, first_span) = self.ident()?;
                let mut names = vec![(first, first_span)];
                while self.peek() == Tok::Comma {
                    self.bump();
                    names.push(self.ident()?);
                }
                let body = if self.peek() == Tok::Defines {
                    self.bump();
                    if names.len() > 1 {
                        self.errors.push(Diagnostic::error(
                            sort_span.clone(),
                            "a defined constant takes exactly one name",
                        ));
                        return Err(());
                    }
                    Some(self.term()?)
                } else {
                    None
                };
                self.expect(Tok::Dot, "`.` after the declaration")?;
                for (name, span) in names {
                    if self.declare(&name, Sort::Real, span) {
                        model.definitions.push((name, Definition::RealConst(body.clone())));
                    }
                }
                Ok(())
            }
            "B" => {
                let (name, span) = self.ident()?;
                let body = if self.peek() == Tok::Defines {
                    self.bump();
                    Some(self.formula()?)
                } else {
                    None
                };
                self.expect(Tok::Dot, "`.` after the declaration")?;
                if self.declare(&name, Sort::Bool, span) {
                    model.definitions.push((name, Definition::BoolDef(body)));
                }
                Ok(())
            }
            "HP" => {
                let (name, span) = self.ident()?;
                self.expect(Tok::Defines, "`::=` (program definitions need a body)")?;
                let body = self.program()?;
                self.expect(Tok::Dot, "`.` after the declaration")?;
                if self.declare(&name, Sort::Program, span) {
                    model.definitions.push((name, Definition::Program(body)));
                }
                Ok(())
            }
            other => {
                self.errors.push(Diagnostic::error(
                    sort_span,
                    format!("expected a sort (`R`, `B`, or `HP`), found `{}`", other),
                ));
                Err(())
            }
        }
    }

    fn program_variables(&mut self, model: &mut Model) {
        loop {
            if self.at_block_keyword().is_some() || self.peek() == Tok::Eof {
                return;
            }
            if self.program_variable_entry(model).is_err() {
                self.recover_to_dot();
            }
        }
    }

    fn program_variable_entry(&mut self, model: &mut Model) -> PResult<()> {
        let sort_span = self.here();
        let sort_tok = self.expect(Tok::Ident, "a sort (`R`)")?;
        match sort_tok.text.as_str() {
            "R" => {}
            "B" => {
                self.errors.push(Diagnostic::error(
                    sort_span,
                    "Boolean program variables are not supported; \
                     model Boolean state as R with `x != 0` guards",
                ));
                return Err(());
            }
            other => {
                self.errors.push(Diagnostic::error(
                    sort_span,
                    format!("expected `R`, found `{}`", other),
                ));
                return Err(());
            }
        }
        loop {
            let (name, span) = self.ident()?;
            if self.declare(&name, Sort::Real, span) {
                self.progvars.insert(name.clone());
                model.program_vars.insert(name);
            }
            if self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::Dot, "`.` after the declaration")?;
        Ok(())
    }

    // ------------------------------------------------------------------
    // Programs
    // ------------------------------------------------------------------

    fn program(&mut self) -> PResult<HybridProgram> {
        let mut stmts = vec![self.program_item()?];
        while self.peek() == Tok::Semi {
            self.bump();
            stmts.push(self.program_item()?);
        }
        Ok(seq_all(stmts))
    }

    fn program_item(&mut self) -> PResult<HybridProgram> {
        if self.peek() == Tok::LowAnnot {
            let span = self.here();
            self.bump();
            let atom = self.program_atom()?;
            match &atom {
                HybridProgram::AssignAny(v) => {
                    self.low_vars.insert(v.clone());
                }
                _ => self.warnings.push(Diagnostic::warning(
                    span,
                    "`/*@low*/` only applies to nondeterministic assignments \
                     (`x := *`); annotation ignored",
                )),
            }
            Ok(atom)
        } else {
            self.program_atom()
        }
    }

    fn program_atom(&mut self) -> PResult<HybridProgram> {
        match self.peek() {
            Tok::Ident => {
                let (name, span) = self.ident()?;
                if self.peek() == Tok::Assign {
                    self.bump();
                    if self.peek() == Tok::Star {
                        self.bump();
                        self.note_assign_target(&name, span);
                        Ok(HybridProgram::AssignAny(name))
                    } else {
                        self.note_assign_target(&name, span);
                        let rhs = self.term()?;
                        Ok(HybridProgram::Assign(name, rhs))
                    }
                } else {
                    // Bare identifier: a program abbreviation reference.
                    if !self.standalone {
                        match self.table.get(&name) {
                            Some(Sort::Program) => {}
                            Some(_) => {
                                self.errors.push(Diagnostic::error(
                                    span,
                                    format!("`{}` is not a program definition", name),
                                ));
                                return Err(());
                            }
                            None => {
                                self.errors.push(Diagnostic::error(
                                    span,
                                    format!(
                                        "undefined program reference `{}` \
                                         (programs must be defined before use)",
                                        name
                                    ),
                                ));
                                return Err(());
                            }
                        }
                    }
                    Ok(HybridProgram::Ref(name))
                }
            }
            Tok::Question => {
                self.bump();
                Ok(HybridProgram::Test(self.formula()?))
            }
            Tok::If => self.if_sugar(),
            Tok::LBrace => self.braced_program(),
            _ => {
                self.error_here(format!(
                    "expected a program statement, found {}",
                    self.describe()
                ));
                Err(())
            }
        }
    }

    /// `if (f) then a else b` desugars to `{?f; a ++ ?!f; b}`.
    fn if_sugar(&mut self) -> PResult<HybridProgram> {
        self.expect(Tok::If, "`if`")?;
        self.expect(Tok::LParen, "`(` after `if`")?;
        let guard = self.formula()?;
        self.expect(Tok::RParen, "`)` after the guard")?;
        self.expect(Tok::Then, "`then`")?;
        let then_branch = self.program_atom()?;
        self.expect(Tok::Else, "`else`")?;
        let else_branch = self.program_atom()?;
        Ok(HybridProgram::choice(
            HybridProgram::seq(HybridProgram::Test(guard.clone()), then_branch),
            HybridProgram::seq(HybridProgram::Test(Formula::not(guard)), else_branch),
        ))
    }

    /// `{...}`: an ODE system, a choice, a loop body, or plain grouping.
    fn braced_program(&mut self) -> PResult<HybridProgram> {
        let open = self.here();
        self.expect(Tok::LBrace, "`{`")?;
        if self.peek() == Tok::Ident && self.peek_at(1) == Tok::Prime {
            return self.ode_tail(open);
        }
        let mut branches = vec![self.program()?];
        while self.peek() == Tok::PlusPlus {
            self.bump();
            branches.push(self.program()?);
        }
        self.expect(Tok::RBrace, "`}`")?;
        let inner = if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            let mut it = branches.into_iter().rev();
            let last = it.next().unwrap();
            it.fold(last, |acc, b| HybridProgram::choice(b, acc))
        };
        if self.peek() == Tok::Star {
            self.bump();
            Ok(HybridProgram::repeat(inner))
        } else {
            Ok(inner)
        }
    }

    fn ode_tail(&mut self, open: SourceSpan) -> PResult<HybridProgram> {
        let mut equations = Vec::new();
        let mut seen: BTreeSet<Name> = BTreeSet::new();
        loop {
            let (var, span) = self.ident()?;
            self.expect(Tok::Prime, "`'` on the differential equation's left side")?;
            self.expect(Tok::EqSym, "`=` in the differential equation")?;
            let rhs = self.term()?;
            if !seen.insert(var.clone()) {
                self.errors.push(Diagnostic::error(
                    span.clone(),
                    format!("`{}'` appears twice in one ODE system", var),
                ));
            }
            self.note_assign_target(&var, span);
            equations.push(OdeEq { var, rhs });
            if self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        let domain = if self.peek() == Tok::Amp {
            self.bump();
            let f = self.formula()?;
            if formula_mentions_box(&f) {
                self.errors.push(Diagnostic::error(
                    open.clone(),
                    "an evolution domain must be a first-order formula \
                     (no `[...]` modality)",
                ));
            }
            f
        } else {
            Formula::True
        };
        self.expect(Tok::RBrace, "`}` closing the ODE")?;
        if self.peek() == Tok::Star {
            self.error_here("an ODE cannot be repeated directly; wrap it in a loop body");
            return Err(());
        }
        Ok(HybridProgram::Ode { equations, domain })
    }

    // ------------------------------------------------------------------
    // Formulas
    // ------------------------------------------------------------------

    fn formula(&mut self) -> PResult<Formula> {
        let lhs = self.formula_or()?;
        if self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn formula_or(&mut self) -> PResult<Formula> {
        let lhs = self.formula_and()?;
        if self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.formula_or()?;
            Ok(Formula::or(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn formula_and(&mut self) -> PResult<Formula> {
        let lhs = self.formula_unary()?;
        if self.peek() == Tok::Amp {
            self.bump();
            let rhs = self.formula_and()?;
            Ok(Formula::and(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn formula_unary(&mut self) -> PResult<Formula> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.formula_unary()?))
            }
            Tok::LBracket => {
                self.bump();
                let prog = self.program()?;
                self.expect(Tok::RBracket, "`]` closing the modality")?;
                let body = self.formula_unary()?;
                Ok(Formula::boxed(prog, body))
            }
            Tok::Forall | Tok::Exists => {
                let is_forall = self.peek() == Tok::Forall;
                self.bump();
                let (binder, _span) = self.ident()?;
                self.expect(Tok::Dot, "`.` after the quantified variable")?;
                self.bound.push(binder.clone());
                let body = self.formula_unary();
                self.bound.pop();
                let body = Box::new(body?);
                Ok(if is_forall {
                    Formula::Forall(binder, body)
                } else {
                    Formula::Exists(binder, body)
                })
            }
            Tok::True => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::False => {
                self.bump();
                Ok(Formula::False)
            }
            _ => self.formula_atom(),
        }
    }

    /// Comparison, Boolean reference, or parenthesized formula.
    ///
    /// `(` is ambiguous between terms and formulas, so we first try the
    /// term-comparison reading and backtrack on failure.
    fn formula_atom(&mut self) -> PResult<Formula> {
        let save_pos = self.pos;
        let save_errors = self.errors.len();
        let save_real = self.pending_real.len();
        if let Ok(lhs) = self.term() {
            if let Some(op) = self.cmp_op() {
                if self.options.strict_core && op == CmpOp::Ne {
                    let span = self.here();
                    self.errors.push(Diagnostic::error(
                        span,
                        "`!=` is not part of the core term language (strict mode)",
                    ));
                }
                self.bump();
                let rhs = self.term()?;
                return Ok(Formula::Cmp(op, lhs, rhs));
            }
            // A bare identifier is a Boolean reference.
            if let Term::Variable(name) = &lhs {
                // It was noted as a real-valued use (possibly already an
                // error if the name has a known non-real sort); retract.
                self.pending_real.truncate(save_real);
                self.errors.truncate(save_errors);
                let span = self.toks[save_pos].span(self.file);
                if !self.standalone {
                    match self.table.get(name) {
                        Some(Sort::Bool) => {}
                        Some(_) => {
                            self.errors.push(Diagnostic::error(
                                span,
                                format!("`{}` is not a Boolean definition", name),
                            ));
                            return Err(());
                        }
                        None => self.pending_bool.push((name.clone(), span)),
                    }
                }
                return Ok(Formula::PredRef(name.clone()));
            }
        }
        // Backtrack and try a parenthesized formula.
        self.pos = save_pos;
        self.errors.truncate(save_errors);
        self.pending_real.truncate(save_real);
        if self.peek() == Tok::LParen {
            self.bump();
            let f = self.formula()?;
            self.expect(Tok::RParen, "`)`")?;
            Ok(f)
        } else {
            self.error_here(format!("expected a formula, found {}", self.describe()));
            Err(())
        }
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        match self.peek() {
            Tok::Lt => Some(CmpOp::Lt),
            Tok::Le => Some(CmpOp::Le),
            Tok::EqSym => Some(CmpOp::Eq),
            Tok::Gt => Some(CmpOp::Gt),
            Tok::Ge => Some(CmpOp::Ge),
            Tok::Ne => Some(CmpOp::Ne),
            _ => None,
        }
    }

    // ------------------------------------------------------------------
    // Terms
    // ------------------------------------------------------------------

    fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.term_mul()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Term::plus(lhs, self.term_mul()?);
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Term::minus(lhs, self.term_mul()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term_mul(&mut self) -> PResult<Term> {
        let mut lhs = self.term_unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Term::times(lhs, self.term_unary()?);
                }
                Tok::Slash => {
                    let span = self.here();
                    if self.options.strict_core {
                        self.errors.push(Diagnostic::error(
                            span.clone(),
                            "division is not part of the core term language (strict mode)",
                        ));
                    }
                    self.bump();
                    let rhs = self.term_unary()?;
                    match Term::divide(lhs, rhs) {
                        Ok(t) => lhs = t,
                        Err(e) => {
                            self.errors.push(Diagnostic::error(span, e.to_string()));
                            return Err(());
                        }
                    }
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term_unary(&mut self) -> PResult<Term> {
        if self.peek() == Tok::Minus {
            self.bump();
            Ok(Term::neg(self.term_unary()?))
        } else {
            self.term_power()
        }
    }

    fn term_power(&mut self) -> PResult<Term> {
        let base = self.term_atom()?;
        if self.peek() == Tok::Caret {
            let span = self.here();
            if self.options.strict_core {
                self.errors.push(Diagnostic::error(
                    span.clone(),
                    "`^` is not part of the core term language (strict mode)",
                ));
            }
            self.bump();
            let exp_tok = self.expect(Tok::Number, "a non-negative integer exponent")?;
            if exp_tok.text.contains('.') {
                self.errors.push(Diagnostic::error(
                    exp_tok.span(self.file),
                    "exponents must be non-negative integers",
                ));
                return Err(());
            }
            let exp: u32 = exp_tok.text.parse().map_err(|_| {
                self.errors.push(Diagnostic::error(
                    exp_tok.span(self.file),
                    "exponent out of range",
                ));
            })?;
            Ok(Term::power(base, exp))
        } else {
            Ok(base)
        }
    }

    fn term_atom(&mut self) -> PResult<Term> {
        match self.peek() {
            Tok::Number => {
                let t = self.bump();
                Ok(Term::Constant(rational_from_literal(&t.text)))
            }
            Tok::Ident => {
                let (name, span) = self.ident()?;
                if self.peek() == Tok::LParen {
                    if self.options.strict_core {
                        self.errors.push(Diagnostic::error(
                            span.clone(),
                            "function application is not part of the core term \
                             language (strict mode)",
                        ));
                    }
                    self.bump();
                    let mut args = vec![self.term()?];
                    while self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.term()?);
                    }
                    self.expect(Tok::RParen, "`)` closing the argument list")?;
                    Ok(Term::Apply(name, args))
                } else {
                    self.note_real_use(&name, span);
                    Ok(Term::Variable(name))
                }
            }
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            _ => {
                self.error_here(format!("expected a term, found {}", self.describe()));
                Err(())
            }
        }
    }

    /// Assignment and ODE left sides must be mutable state. They may be
    /// written before `ProgramVariables.` is seen, so settle at the end.
    fn note_assign_target(&mut self, name: &Name, span: SourceSpan) {
        if !self.standalone {
            self.pending_assign.push((name.clone(), span));
        }
    }

    fn note_real_use(&mut self, name: &Name, span: SourceSpan) {
        if self.standalone || self.bound.contains(name) {
            return;
        }
        match self.table.get(name) {
            Some(Sort::Real) => {}
            Some(other) => {
                let what = match other {
                    Sort::Bool => "a Boolean definition",
                    Sort::Program => "a program definition",
                    Sort::Real => unreachable!(),
                };
                self.errors.push(Diagnostic::error(
                    span,
                    format!("`{}` is {} and cannot appear in a term", name, what),
                ));
            }
            None => self.pending_real.push((name.clone(), span)),
        }
    }

    /// Declarations may follow use only for real-sorted names; settle those
    /// obligations once the whole file is parsed.
    fn finish_validation(&mut self) {
        let pending_real = std::mem::take(&mut self.pending_real);
        for (name, span) in pending_real {
            match self.table.get(&name) {
                Some(Sort::Real) => {}
                Some(_) => self.errors.push(Diagnostic::error(
                    span,
                    format!("`{}` is not real-sorted but is used in a term", name),
                )),
                None => self.errors.push(Diagnostic::error(
                    span,
                    format!("undeclared identifier `{}`", name),
                )),
            }
        }
        let pending_bool = std::mem::take(&mut self.pending_bool);
        for (name, span) in pending_bool {
            match self.table.get(&name) {
                Some(Sort::Bool) => {}
                Some(_) => self.errors.push(Diagnostic::error(
                    span,
                    format!("`{}` is not a Boolean definition", name),
                )),
                None => self.errors.push(Diagnostic::error(
                    span,
                    format!("undeclared Boolean `{}`", name),
                )),
            }
        }
        let pending_assign = std::mem::take(&mut self.pending_assign);
        for (name, span) in pending_assign {
            if !self.progvars.contains(&name) {
                let what = match self.table.get(&name) {
                    Some(_) => "a definition, not a program variable",
                    None => "undeclared",
                };
                self.errors.push(Diagnostic::error(
                    span,
                    format!("`{}` cannot be assigned: it is {}", name, what),
                ));
            }
        }
    }
}

fn formula_mentions_box(f: &Formula) -> bool {
    match f {
        Formula::Box(..) => true,
        Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => {
            formula_mentions_box(a)
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            formula_mentions_box(a) || formula_mentions_box(b)
        }
        _ => false,
    }
}

fn rational_from_literal(text: &str) -> Rational {
    use num_bigint::BigInt;
    match text.split_once('.') {
        None => Rational::from(text.parse::<BigInt>().expect("lexed integer")),
        Some((int, frac)) => {
            let scale = BigInt::from(10).pow(frac.len() as u32);
            let int: BigInt = int.parse().expect("lexed integer part");
            let frac: BigInt = frac.parse().expect("lexed fraction part");
            Rational::new(int * &scale + frac, scale)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(src: &str) -> Parsed {
        match parse_model("test.hp", src) {
            Ok(p) => p,
            Err(ds) => panic!("expected parse success, got:\n{}", render(&ds)),
        }
    }

    fn err(src: &str) -> Vec<Diagnostic> {
        match parse_model("test.hp", src) {
            Ok(_) => panic!("expected parse failure"),
            Err(ds) => ds,
        }
    }

    fn render(ds: &[Diagnostic]) -> String {
        ds.iter().map(|d| format!("{}\n", d)).collect()
    }

    fn var(n: &str) -> Term {
        Term::Variable(Name::new(n))
    }

    #[test]
    fn model_structure_round_trips_to_ast() {
        let p = ok("Definitions.\n\
                    R eps.\n\
                    B inv ::= x >= eps.\n\
                    HP step ::= x := x + 1.\n\
                    ProgramVariables.\n\
                    R x.\n\
                    Problem.\n\
                    inv -> [{step}*]inv\n\
                    End.");
        assert!(p.warnings.is_empty());
        let m = &p.model;
        assert_eq!(m.definitions.len(), 3);
        assert_eq!(m.definitions[0].0.as_str(), "eps");
        assert!(matches!(m.definitions[0].1, Definition::RealConst(None)));
        assert!(matches!(m.definitions[1].1, Definition::BoolDef(Some(_))));
        assert_eq!(
            m.definitions[2].1,
            Definition::Program(HybridProgram::assign("x", Term::plus(var("x"), Term::num(1))))
        );
        assert_eq!(m.program_vars.len(), 1);
        assert_eq!(
            m.problem,
            Formula::implies(
                Formula::PredRef(Name::new("inv")),
                Formula::boxed(
                    HybridProgram::repeat(HybridProgram::Ref(Name::new("step"))),
                    Formula::PredRef(Name::new("inv")),
                ),
            )
        );
    }

    #[test]
    fn use_before_declaration_is_fine_for_real_names() {
        ok("Definitions.\n\
            B inv ::= x >= eps.\n\
            R eps.\n\
            ProgramVariables. R x.\n\
            Problem. inv End.");
    }

    #[test]
    fn if_sugar_desugars_to_guarded_choice() {
        let p = parse_program_str("if (v >= 0) then a := 1 else a := -1").unwrap();
        let guard = Formula::cmp(CmpOp::Ge, var("v"), Term::num(0));
        assert_eq!(
            p,
            HybridProgram::choice(
                HybridProgram::seq(
                    HybridProgram::test(guard.clone()),
                    HybridProgram::assign("a", Term::num(1)),
                ),
                HybridProgram::seq(
                    HybridProgram::test(Formula::not(guard)),
                    HybridProgram::assign("a", Term::neg(Term::num(1))),
                ),
            )
        );
    }

    #[test]
    fn ode_without_domain_defaults_to_true() {
        let p = parse_program_str("{x' = v, v' = a}").unwrap();
        match p {
            HybridProgram::Ode { equations, domain } => {
                assert_eq!(equations.len(), 2);
                assert_eq!(equations[0].var.as_str(), "x");
                assert_eq!(domain, Formula::True);
            }
            other => panic!("expected an ODE, got {:?}", other),
        }
    }

    #[test]
    fn choices_nest_to_the_right() {
        let p = parse_program_str("{a := 1 ++ a := 2 ++ a := 3}").unwrap();
        let one = HybridProgram::assign("a", Term::num(1));
        let two = HybridProgram::assign("a", Term::num(2));
        let three = HybridProgram::assign("a", Term::num(3));
        assert_eq!(
            p,
            HybridProgram::choice(one, HybridProgram::choice(two, three))
        );
    }

    #[test]
    fn sequence_nests_to_the_right() {
        let p = parse_program_str("a := 1; b := 2; c := 3").unwrap();
        assert_eq!(
            p,
            HybridProgram::seq(
                HybridProgram::assign("a", Term::num(1)),
                HybridProgram::seq(
                    HybridProgram::assign("b", Term::num(2)),
                    HybridProgram::assign("c", Term::num(3)),
                ),
            )
        );
    }

    #[test]
    fn connective_precedence() {
        // a & b -> c | d  reads  (a & b) -> (c | d)
        let f = parse_formula_str("x = 1 & y = 1 -> x = 2 | y = 2").unwrap();
        match f {
            Formula::Implies(lhs, rhs) => {
                assert!(matches!(*lhs, Formula::And(..)));
                assert!(matches!(*rhs, Formula::Or(..)));
            }
            other => panic!("expected an implication, got {:?}", other),
        }
    }

    #[test]
    fn parenthesized_term_on_comparison_left() {
        let f = parse_formula_str("(x + 1) * 2 >= 0").unwrap();
        assert_eq!(
            f,
            Formula::cmp(
                CmpOp::Ge,
                Term::times(Term::plus(var("x"), Term::num(1)), Term::num(2)),
                Term::num(0),
            )
        );
    }

    #[test]
    fn low_annotation_collects_the_assigned_variable() {
        let p = ok("ProgramVariables. R x, s.\n\
                    Problem. [/*@low*/ s := *; ?s >= 0; x := s] x >= 0 End.");
        assert!(p.warnings.is_empty());
        assert_eq!(
            p.model.low_integrity_vars,
            [Name::new("s")].into_iter().collect::<BTreeSet<_>>()
        );
    }

    #[test]
    fn misplaced_low_annotation_warns() {
        let p = ok("ProgramVariables. R x.\n\
                    Problem. [/*@low*/ x := 1] x >= 0 End.");
        assert_eq!(p.warnings.len(), 1);
        assert!(p.warnings[0].message.contains("nondeterministic"));
        assert!(p.model.low_integrity_vars.is_empty());
    }

    #[test]
    fn undeclared_identifier_is_an_error() {
        let ds = err("ProgramVariables. R x.\nProblem. [x := y] x >= 0 End.");
        assert!(ds.iter().any(|d| d.message.contains("undeclared identifier `y`")));
    }

    #[test]
    fn duplicate_declaration_is_an_error() {
        let ds = err("Definitions. R a. ProgramVariables. R a.\nProblem. a >= 0 End.");
        assert!(ds.iter().any(|d| d.message.contains("declared twice")));
    }

    #[test]
    fn undefined_program_reference_is_an_error() {
        let ds = err("ProgramVariables. R x.\nProblem. [later; x := 1] x >= 0 End.");
        assert!(ds.iter().any(|d| d.message.contains("undefined program reference")));
    }

    #[test]
    fn boolean_program_variables_are_rejected() {
        let ds = err("ProgramVariables. R x. B flag.\nProblem. x >= 0 End.");
        assert!(ds.iter().any(|d| d.message.contains("Boolean program variables")));
    }

    #[test]
    fn constants_cannot_be_assigned() {
        let ds = err("Definitions. R A.\nProgramVariables. R x.\n\
                      Problem. [A := 1; x := A] x = 1 End.");
        assert!(
            ds.iter().any(|d| d.message.contains("cannot be assigned")),
            "{}",
            render(&ds)
        );
        let ds = err("Definitions. R A.\nProgramVariables. R x.\n\
                      Problem. [{A' = 1, x' = 1}] x >= 0 End.");
        assert!(ds.iter().any(|d| d.message.contains("cannot be assigned")));
    }

    #[test]
    fn bodyless_program_definition_is_an_error() {
        let ds = err("Definitions. HP ctrl.\nProblem. [ctrl] x >= 0 End.");
        assert!(ds.iter().any(|d| d.message.contains("::=")));
    }

    #[test]
    fn multi_name_defined_constant_is_an_error() {
        let ds = err("Definitions. R a, b ::= 1.\nProblem. a >= b End.");
        assert!(ds.iter().any(|d| d.message.contains("exactly one name")));
    }

    #[test]
    fn division_by_literal_zero_is_an_error() {
        let ds = err("Definitions. R bad ::= 1/0.\nProblem. bad >= 0 End.");
        assert!(ds.iter().any(|d| d.message.contains("zero")));
    }

    #[test]
    fn several_errors_are_reported_in_one_pass() {
        let ds = err("Definitions. R a, b ::= 1. HP ctrl.\nProblem. a >= 0 End.");
        assert!(ds.len() >= 2, "expected two diagnostics, got: {}", render(&ds));
    }

    #[test]
    fn strict_mode_rejects_extended_operators() {
        let src = "ProgramVariables. R x.\nProblem. [x := x/2] x^2 >= 0 & x != 1 End.";
        assert!(parse_model("t.hp", src).is_ok());
        let ds = parse_model_with("t.hp", src, ParseOptions { strict_core: true })
            .expect_err("strict mode must reject");
        let all = render(&ds);
        assert!(all.contains("division"), "{all}");
        assert!(all.contains('^'), "{all}");
        assert!(all.contains("!="), "{all}");
    }

    #[test]
    fn unicode_aliases_parse_like_ascii() {
        let uni = "ProgramVariables. R x, y.\n\
                   Problem. ∀ x. (x ≥ 0 ∧ x ≠ 1 → [{x := 1 ∪ x := 2}; {y′ = x}] ¬(y < 0)) End.";
        let asc = "ProgramVariables. R x, y.\n\
                   Problem. forall x. (x >= 0 & x != 1 -> [{x := 1 ++ x := 2}; {y' = x}] !(y < 0)) End.";
        assert_eq!(ok(uni).model, ok(asc).model);
    }

    #[test]
    fn quantifier_binders_do_not_need_declarations() {
        ok("ProgramVariables. R x.\nProblem. forall q. (q >= 0 | q < 0) -> x = x End.");
    }

    #[test]
    fn trailing_input_after_end_is_an_error() {
        let ds = err("ProgramVariables. R x.\nProblem. x = x End. leftover");
        assert!(ds.iter().any(|d| d.message.contains("trailing input")));
    }

    #[test]
    fn modality_in_evolution_domain_is_rejected() {
        let ds = err("ProgramVariables. R x, y.\n\
                      Problem. [{x' = 1 & [y := 1] y = 1}] x = x End.");
        assert!(ds.iter().any(|d| d.message.contains("first-order")));
    }

    #[test]
    fn decimal_literals_are_exact() {
        let f = parse_formula_str("x = 0.125").unwrap();
        match f {
            Formula::Cmp(CmpOp::Eq, _, Term::Constant(c)) => {
                assert_eq!(c, Rational::new(1.into(), 8.into()));
            }
            other => panic!("unexpected shape: {:?}", other),
        }
    }
}
