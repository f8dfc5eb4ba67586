//! Hand-rolled lexer for the `.chor` surface syntax.

use crate::diag::{DiagCode, Diagnostic, Span};

/// Token kinds. Keywords are distinguished from identifiers here so the
/// parser never has to compare strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(String),
    /// A `//!` pragma line (text after the marker, trimmed).
    Pragma(String),

    // Keywords
    KwClass,
    KwResource,
    KwPure,
    KwRequires,
    KwEnsures,
    KwChoreography,
    KwEndpoint,
    KwRun,
    KwIf,
    KwElse,
    KwWhile,
    KwLoopInvariant,
    KwAssert,
    KwCommunicate,
    KwChannelInvariant,
    KwPar,
    KwInhale,
    KwExhale,
    KwConstructor,
    KwInt,
    KwBoolean,
    KwSeq,
    KwTrue,
    KwFalse,
    KwThis,
    KwPerm,

    // Backslash keywords
    BsEndpoint,
    BsChor,
    BsMsg,
    BsSender,
    BsReceiver,
    BsForall,
    BsForallStar,
    /// A bare `\` (fraction separator between integer literals).
    Backslash,

    // Punctuation and operators
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Colon,
    Comma,
    Dot,
    DotDot,
    Assign,  // :=
    EqEq,    // ==
    Neq,     // !=
    Le,      // <=
    Lt,      // <
    Ge,      // >=
    Gt,      // >
    Plus,
    Minus,
    Star,
    StarStar,
    AndAnd,
    OrOr,
    Implies, // ==>
    Arrow,   // ->
    Eq,      // =
    Eof,
}

impl Tok {
    /// Human-readable description used in parse errors.
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(s) => format!("integer `{s}`"),
            Tok::Pragma(_) => "pragma".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::KwClass => "class",
            Tok::KwResource => "resource",
            Tok::KwPure => "pure",
            Tok::KwRequires => "requires",
            Tok::KwEnsures => "ensures",
            Tok::KwChoreography => "choreography",
            Tok::KwEndpoint => "endpoint",
            Tok::KwRun => "run",
            Tok::KwIf => "if",
            Tok::KwElse => "else",
            Tok::KwWhile => "while",
            Tok::KwLoopInvariant => "loop_invariant",
            Tok::KwAssert => "assert",
            Tok::KwCommunicate => "communicate",
            Tok::KwChannelInvariant => "channel_invariant",
            Tok::KwPar => "par",
            Tok::KwInhale => "inhale",
            Tok::KwExhale => "exhale",
            Tok::KwConstructor => "constructor",
            Tok::KwInt => "int",
            Tok::KwBoolean => "boolean",
            Tok::KwSeq => "seq",
            Tok::KwTrue => "true",
            Tok::KwFalse => "false",
            Tok::KwThis => "this",
            Tok::KwPerm => "Perm",
            Tok::BsEndpoint => "\\endpoint",
            Tok::BsChor => "\\chor",
            Tok::BsMsg => "\\msg",
            Tok::BsSender => "\\sender",
            Tok::BsReceiver => "\\receiver",
            Tok::BsForall => "\\forall",
            Tok::BsForallStar => "\\forall*",
            Tok::Backslash => "\\",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::DotDot => "..",
            Tok::Assign => ":=",
            Tok::EqEq => "==",
            Tok::Neq => "!=",
            Tok::Le => "<=",
            Tok::Lt => "<",
            Tok::Ge => ">=",
            Tok::Gt => ">",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::StarStar => "**",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Implies => "==>",
            Tok::Arrow => "->",
            Tok::Eq => "=",
            Tok::Ident(_) | Tok::Int(_) | Tok::Pragma(_) | Tok::Eof => unreachable!(),
        }
    }
}

/// A token with its source position.
#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "class" => Tok::KwClass,
        "resource" => Tok::KwResource,
        "pure" => Tok::KwPure,
        "requires" => Tok::KwRequires,
        "ensures" => Tok::KwEnsures,
        "choreography" => Tok::KwChoreography,
        "endpoint" => Tok::KwEndpoint,
        "run" => Tok::KwRun,
        "if" => Tok::KwIf,
        "else" => Tok::KwElse,
        "while" => Tok::KwWhile,
        "loop_invariant" => Tok::KwLoopInvariant,
        "assert" => Tok::KwAssert,
        "communicate" => Tok::KwCommunicate,
        "channel_invariant" => Tok::KwChannelInvariant,
        "par" => Tok::KwPar,
        "inhale" => Tok::KwInhale,
        "exhale" => Tok::KwExhale,
        "constructor" => Tok::KwConstructor,
        "int" => Tok::KwInt,
        "boolean" => Tok::KwBoolean,
        "seq" => Tok::KwSeq,
        "true" => Tok::KwTrue,
        "false" => Tok::KwFalse,
        "this" => Tok::KwThis,
        "Perm" => Tok::KwPerm,
        _ => return None,
    })
}

/// Tokenize `src`. Lexical problems are reported as diagnostics; the token
/// stream is still returned so the parser can recover at statement level.
pub fn lex(src: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut toks = Vec::new();
    let mut diags = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $span:expr) => {
            toks.push(Token { tok: $tok, span: $span })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        // Advance helpers keep line/col in sync with `i`.
        let advance = |i: &mut usize, line: &mut u32, col: &mut u32| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };

        match c {
            ' ' | '\t' | '\r' | '\n' => {
                advance(&mut i, &mut line, &mut col);
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                // Line comment; `//!` is a pragma that passes through.
                let is_pragma = chars.get(i + 2) == Some(&'!');
                let start = i;
                while i < chars.len() && chars[i] != '\n' {
                    advance(&mut i, &mut line, &mut col);
                }
                if is_pragma {
                    let text: String = chars[start + 3..i].iter().collect();
                    push!(Tok::Pragma(text.trim().to_string()), span);
                }
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                let open = span;
                advance(&mut i, &mut line, &mut col);
                advance(&mut i, &mut line, &mut col);
                let mut closed = false;
                while i < chars.len() {
                    if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                        advance(&mut i, &mut line, &mut col);
                        advance(&mut i, &mut line, &mut col);
                        closed = true;
                        break;
                    }
                    advance(&mut i, &mut line, &mut col);
                }
                if !closed {
                    diags.push(Diagnostic::error(DiagCode::Lex, open, "unterminated block comment"));
                }
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut line, &mut col);
                }
                let text: String = chars[start..i].iter().collect();
                push!(Tok::Int(text), span);
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    advance(&mut i, &mut line, &mut col);
                }
                let word: String = chars[start..i].iter().collect();
                match keyword(&word) {
                    Some(k) => push!(k, span),
                    None => push!(Tok::Ident(word), span),
                }
            }
            '\\' => {
                advance(&mut i, &mut line, &mut col);
                if i < chars.len() && chars[i].is_ascii_alphabetic() {
                    let start = i;
                    while i < chars.len() && chars[i].is_ascii_alphabetic() {
                        advance(&mut i, &mut line, &mut col);
                    }
                    let word: String = chars[start..i].iter().collect();
                    let tok = match word.as_str() {
                        "endpoint" => Tok::BsEndpoint,
                        "chor" => Tok::BsChor,
                        "msg" => Tok::BsMsg,
                        "sender" => Tok::BsSender,
                        "receiver" => Tok::BsReceiver,
                        "forall" => {
                            if chars.get(i) == Some(&'*') {
                                advance(&mut i, &mut line, &mut col);
                                Tok::BsForallStar
                            } else {
                                Tok::BsForall
                            }
                        }
                        other => {
                            diags.push(Diagnostic::error(
                                DiagCode::Lex,
                                span,
                                format!("unknown keyword `\\{other}`"),
                            ));
                            continue;
                        }
                    };
                    push!(tok, span);
                } else {
                    // Fraction separator (`1\2`); validity is the parser's job.
                    push!(Tok::Backslash, span);
                }
            }
            _ => {
                // Operators: longest match first.
                let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let three: String = chars[i..chars.len().min(i + 3)].iter().collect();
                let (tok, len) = if three == "==>" {
                    (Tok::Implies, 3)
                } else {
                    match two.as_str() {
                        ".." => (Tok::DotDot, 2),
                        ":=" => (Tok::Assign, 2),
                        "==" => (Tok::EqEq, 2),
                        "!=" => (Tok::Neq, 2),
                        "<=" => (Tok::Le, 2),
                        ">=" => (Tok::Ge, 2),
                        "**" => (Tok::StarStar, 2),
                        "&&" => (Tok::AndAnd, 2),
                        "||" => (Tok::OrOr, 2),
                        "->" => (Tok::Arrow, 2),
                        _ => match c {
                            '{' => (Tok::LBrace, 1),
                            '}' => (Tok::RBrace, 1),
                            '(' => (Tok::LParen, 1),
                            ')' => (Tok::RParen, 1),
                            '[' => (Tok::LBracket, 1),
                            ']' => (Tok::RBracket, 1),
                            ';' => (Tok::Semi, 1),
                            ':' => (Tok::Colon, 1),
                            ',' => (Tok::Comma, 1),
                            '.' => (Tok::Dot, 1),
                            '<' => (Tok::Lt, 1),
                            '>' => (Tok::Gt, 1),
                            '+' => (Tok::Plus, 1),
                            '-' => (Tok::Minus, 1),
                            '*' => (Tok::Star, 1),
                            '=' => (Tok::Eq, 1),
                            other => {
                                diags.push(Diagnostic::error(
                                    DiagCode::Lex,
                                    span,
                                    format!("unexpected character `{other}`"),
                                ));
                                advance(&mut i, &mut line, &mut col);
                                continue;
                            }
                        },
                    }
                };
                for _ in 0..len {
                    advance(&mut i, &mut line, &mut col);
                }
                push!(tok, span);
            }
        }
    }
    toks.push(Token { tok: Tok::Eof, span: Span::new(line, col) });
    (toks, diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        let (toks, diags) = lex(src);
        assert!(diags.is_empty(), "unexpected diagnostics: {diags:?}");
        toks.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_longest_match() {
        assert_eq!(
            kinds("==> == = ** * && .. . := : ->"),
            vec![
                Tok::Implies,
                Tok::EqEq,
                Tok::Eq,
                Tok::StarStar,
                Tok::Star,
                Tok::AndAnd,
                Tok::DotDot,
                Tok::Dot,
                Tok::Assign,
                Tok::Colon,
                Tok::Arrow,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn backslash_keywords_are_single_tokens() {
        assert_eq!(
            kinds(r"\endpoint \chor \msg \sender \receiver \forall \forall*"),
            vec![
                Tok::BsEndpoint,
                Tok::BsChor,
                Tok::BsMsg,
                Tok::BsSender,
                Tok::BsReceiver,
                Tok::BsForall,
                Tok::BsForallStar,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn fraction_tokens() {
        assert_eq!(
            kinds(r"1\2"),
            vec![Tok::Int("1".into()), Tok::Backslash, Tok::Int("2".into()), Tok::Eof]
        );
    }

    #[test]
    fn pragmas_pass_through_comments_drop() {
        let toks = kinds("//! keep me\n// drop me\n/* and me */ x");
        assert_eq!(
            toks,
            vec![Tok::Pragma("keep me".into()), Tok::Ident("x".into()), Tok::Eof]
        );
    }

    #[test]
    fn positions_are_tracked() {
        let (toks, _) = lex("a\n  b");
        assert_eq!(toks[0].span.line, 1);
        assert_eq!(toks[0].span.col, 1);
        assert_eq!(toks[1].span.line, 2);
        assert_eq!(toks[1].span.col, 3);
    }

    #[test]
    fn unknown_characters_are_reported() {
        let (_, diags) = lex("a ? b");
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::Lex);
    }

    #[test]
    fn dotdot_vs_dot_in_context() {
        assert_eq!(
            kinds("0..n F[i].x"),
            vec![
                Tok::Int("0".into()),
                Tok::DotDot,
                Tok::Ident("n".into()),
                Tok::Ident("F".into()),
                Tok::LBracket,
                Tok::Ident("i".into()),
                Tok::RBracket,
                Tok::Dot,
                Tok::Ident("x".into()),
                Tok::Eof
            ]
        );
    }
}
