//! Source positions and diagnostics shared by the frontend and the static checks.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A source position (1-based line and column).
///
/// Positions are metadata: two AST nodes that differ only in their spans are
/// considered equal, so `PartialEq`/`Hash` deliberately ignore the fields.
/// This keeps structural comparisons (round-trip tests, golden comparisons,
/// self-communication detection) independent of where a node was written.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _state: &mut H) {}
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Diagnostic severity. Warnings do not block the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

/// Stable identifiers for everything the frontend and checker can complain about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagCode {
    /// Lexical error (bad character, unterminated comment, malformed token).
    Lex,
    /// Parse error (unexpected token, non-associative comparison chain, ...).
    Parse,
    /// A name is declared twice in the same scope.
    DuplicateName,
    /// A referenced name does not resolve to any declaration.
    UnresolvedName,
    /// A family or quantifier binder shadows an existing name.
    BinderShadowing,
    /// An `\endpoint` expression occurs in a negative position.
    Positivity,
    /// A `\chor` expression occurs outside contracts, asserts and invariants.
    ChorPosition,
    /// `\msg`, `\sender` or `\receiver` occurs outside a channel invariant.
    PlaceholderPosition,
    /// An expression exceeds the purity level its position permits.
    Purity,
    /// A branch or loop condition is not an `&&`-list of `\endpoint` expressions.
    ConditionShape,
    /// An assignment or receive location is not an assignable heap location.
    AssignableLocation,
    /// The program does not contain exactly one choreography.
    ChoreographyCount,
    /// `inhale`/`exhale` written directly in a method body (accepted, flagged).
    UserInhaleExhale,
    /// Miscellaneous structural restriction (family size shape, argument purity, ...).
    Structure,
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagCode::Lex => "lex",
            DiagCode::Parse => "parse",
            DiagCode::DuplicateName => "duplicate-name",
            DiagCode::UnresolvedName => "unresolved-name",
            DiagCode::BinderShadowing => "binder-shadowing",
            DiagCode::Positivity => "positivity",
            DiagCode::ChorPosition => "chor-position",
            DiagCode::PlaceholderPosition => "placeholder-position",
            DiagCode::Purity => "purity",
            DiagCode::ConditionShape => "condition-shape",
            DiagCode::AssignableLocation => "assignable-location",
            DiagCode::ChoreographyCount => "choreography-count",
            DiagCode::UserInhaleExhale => "user-inhale-exhale",
            DiagCode::Structure => "structure",
        };
        f.write_str(s)
    }
}

/// A single diagnostic with a source position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, code, span, message: message.into() }
    }

    pub fn warning(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, code, span, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{}:{}: {} [{}]: {}", self.span.line, self.span.col, sev, self.code, self.message)
    }
}

/// True if `diags` contains no error-severity entries (warnings are fine).
pub fn is_clean(diags: &[Diagnostic]) -> bool {
    diags.iter().all(|d| d.severity != Severity::Error)
}

/// Sort diagnostics into canonical reporting order: position, then code.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| {
        (a.span.line, a.span.col, a.code, a.severity, &a.message).cmp(&(
            b.span.line,
            b.span.col,
            b.code,
            b.severity,
            &b.message,
        ))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_are_metadata() {
        assert_eq!(Span::new(1, 1), Span::new(99, 42));
    }

    #[test]
    fn display_format() {
        let d = Diagnostic::error(DiagCode::Purity, Span::new(3, 7), "heap read in pure position");
        assert_eq!(d.to_string(), "3:7: error [purity]: heap read in pure position");
    }

    #[test]
    fn clean_ignores_warnings() {
        let w = Diagnostic::warning(DiagCode::UserInhaleExhale, Span::default(), "flagged");
        assert!(is_clean(std::slice::from_ref(&w)));
        let e = Diagnostic::error(DiagCode::Parse, Span::default(), "bad");
        assert!(!is_clean(&[w, e]));
    }
}
