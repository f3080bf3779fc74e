//! Concrete syntax: lexing, parsing, printing, and archive emission.

pub mod kyx;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod span;

pub use kyx::{emit_kyx, EmitError, EmitOptions};
pub use parser::{
    parse_formula_str, parse_model, parse_model_with, parse_program_str, ParseOptions, Parsed,
};
pub use printer::{
    as_if_sugar, locate, locate_in_model, print_formula, print_model, print_model_listing,
    print_program, print_program_annotated, print_term, Listing, ProgPath, ProgramSite, Step,
};
pub use span::{Diagnostic, Severity, SourceSpan};
