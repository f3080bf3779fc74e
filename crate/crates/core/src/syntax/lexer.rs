//! Hand-rolled lexer for the model surface syntax.
//!
//! Produces a flat token stream with character-precise positions. Unicode
//! operator aliases are folded onto their ASCII spellings here so the parser
//! only ever sees one spelling.

use super::span::{Diagnostic, SourceSpan};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Tok {
    Ident,
    Number,
    /// `/*@low*/` integrity annotation.
    LowAnnot,
    Assign,    // :=
    Defines,   // ::=
    Star,      // *
    Plus,      // +
    Minus,     // -
    Slash,     // /
    Caret,     // ^
    PlusPlus,  // ++  (also ∪)
    Semi,      // ;
    Comma,     // ,
    Dot,       // .
    Question,  // ?
    Prime,     // '
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Lt,
    Le,
    EqSym,
    Gt,
    Ge,
    Ne,
    Amp,       // &  (also ∧)
    Pipe,      // |  (also ∨)
    Bang,      // !  (also ¬)
    Arrow,     // -> (also →)
    Forall,    // forall / ∀
    Exists,    // exists / ∃
    If,
    Then,
    Else,
    True,
    False,
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    /// Slice of the source (ASCII-folded for aliased operators).
    pub text: String,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn span(&self, file: &str) -> SourceSpan {
        SourceSpan::new(file, self.line, self.column, self.text.chars().count() as u32)
    }
}

pub fn lex(file: &str, src: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $text:expr, $len:expr) => {{
            toks.push(Token { tok: $tok, text: $text.to_string(), line, column: col });
            i += $len;
            col += $len as u32;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '/' if next == Some('*') => {
                // Comment; `/*@low*/` is the one comment that is a token.
                let start_line = line;
                let start_col = col;
                let mut j = i + 2;
                let mut c_line = line;
                let mut c_col = col + 2;
                let mut closed = false;
                while j < chars.len() {
                    if chars[j] == '*' && chars.get(j + 1) == Some(&'/') {
                        closed = true;
                        c_col += 2;
                        j += 2;
                        break;
                    }
                    if chars[j] == '\n' {
                        c_line += 1;
                        c_col = 1;
                    } else {
                        c_col += 1;
                    }
                    j += 1;
                }
                if !closed {
                    return Err(Diagnostic::error(
                        SourceSpan::new(file, start_line, start_col, 2),
                        "unterminated comment",
                    ));
                }
                let body: String = chars[i..j].iter().collect();
                if body == "/*@low*/" {
                    toks.push(Token {
                        tok: Tok::LowAnnot,
                        text: body,
                        line: start_line,
                        column: start_col,
                    });
                }
                i = j;
                line = c_line;
                col = c_col;
            }
            '/' if next == Some('/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            ':' if next == Some(':') && chars.get(i + 2) == Some(&'=') => {
                push!(Tok::Defines, "::=", 3)
            }
            ':' if next == Some('=') => push!(Tok::Assign, ":=", 2),
            '+' if next == Some('+') => push!(Tok::PlusPlus, "++", 2),
            '∪' => push!(Tok::PlusPlus, "++", 1),
            '+' => push!(Tok::Plus, "+", 1),
            '-' if next == Some('>') => push!(Tok::Arrow, "->", 2),
            '→' => push!(Tok::Arrow, "->", 1),
            '-' | '−' => push!(Tok::Minus, "-", 1),
            '*' | '×' => push!(Tok::Star, "*", 1),
            '/' => push!(Tok::Slash, "/", 1),
            '^' => push!(Tok::Caret, "^", 1),
            ';' => push!(Tok::Semi, ";", 1),
            ',' => push!(Tok::Comma, ",", 1),
            '?' => push!(Tok::Question, "?", 1),
            '\'' | '′' => push!(Tok::Prime, "'", 1),
            '(' => push!(Tok::LParen, "(", 1),
            ')' => push!(Tok::RParen, ")", 1),
            '{' => push!(Tok::LBrace, "{", 1),
            '}' => push!(Tok::RBrace, "}", 1),
            '[' => push!(Tok::LBracket, "[", 1),
            ']' => push!(Tok::RBracket, "]", 1),
            '<' if next == Some('=') => push!(Tok::Le, "<=", 2),
            '≤' => push!(Tok::Le, "<=", 1),
            '<' => push!(Tok::Lt, "<", 1),
            '>' if next == Some('=') => push!(Tok::Ge, ">=", 2),
            '≥' => push!(Tok::Ge, ">=", 1),
            '>' => push!(Tok::Gt, ">", 1),
            '=' => push!(Tok::EqSym, "=", 1),
            '!' if next == Some('=') => push!(Tok::Ne, "!=", 2),
            '≠' => push!(Tok::Ne, "!=", 1),
            '!' | '¬' => push!(Tok::Bang, "!", 1),
            '&' | '∧' => push!(Tok::Amp, "&", 1),
            '|' | '∨' => push!(Tok::Pipe, "|", 1),
            '∀' => push!(Tok::Forall, "forall", 1),
            '∃' => push!(Tok::Exists, "exists", 1),
            '.' => push!(Tok::Dot, ".", 1),
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                // A dot joins the number only when digits follow: `0.` at the
                // end of a declaration is the terminator, `0.5` is a literal.
                if chars.get(j) == Some(&'.')
                    && chars.get(j + 1).is_some_and(|c| c.is_ascii_digit())
                {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let len = j - i;
                push!(Tok::Number, text, len);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_ascii_alphanumeric() || chars[j] == '_')
                {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                let tok = match text.as_str() {
                    "forall" => Tok::Forall,
                    "exists" => Tok::Exists,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident,
                };
                let len = j - i;
                push!(tok, text, len);
            }
            other => {
                return Err(Diagnostic::error(
                    SourceSpan::new(file, line, col, 1),
                    format!("unexpected character {:?}", other),
                ));
            }
        }
    }
    toks.push(Token { tok: Tok::Eof, text: String::new(), line, column: col });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        lex("t", src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn number_dot_disambiguation() {
        // `t := 0.` — the dot terminates the declaration.
        assert_eq!(
            kinds("t := 0."),
            vec![Tok::Ident, Tok::Assign, Tok::Number, Tok::Dot, Tok::Eof]
        );
        assert_eq!(kinds("0.5"), vec![Tok::Number, Tok::Eof]);
        assert_eq!(kinds("0.5."), vec![Tok::Number, Tok::Dot, Tok::Eof]);
    }

    #[test]
    fn unicode_aliases_fold_to_ascii() {
        assert_eq!(kinds("a ∪ b"), kinds("a ++ b"));
        assert_eq!(kinds("x ≤ y ∧ y ≥ z"), kinds("x <= y & y >= z"));
        assert_eq!(kinds("¬(x ≠ y) → z = 1"), kinds("!(x != y) -> z = 1"));
        assert_eq!(kinds("v′"), kinds("v'"));
    }

    #[test]
    fn low_annotation_is_a_token_other_comments_vanish() {
        assert_eq!(kinds("/* hi */ x"), vec![Tok::Ident, Tok::Eof]);
        assert_eq!(kinds("/*@low*/ x := *"), vec![
            Tok::LowAnnot,
            Tok::Ident,
            Tok::Assign,
            Tok::Star,
            Tok::Eof
        ]);
    }

    #[test]
    fn positions_track_lines_and_columns() {
        let toks = lex("t", "x\n  y := 1").unwrap();
        assert_eq!((toks[0].line, toks[0].column), (1, 1));
        assert_eq!((toks[1].line, toks[1].column), (2, 3));
        assert_eq!((toks[2].line, toks[2].column), (2, 5));
    }

    #[test]
    fn unterminated_comment_is_an_error() {
        assert!(lex("t", "/* no end").is_err());
    }
}
