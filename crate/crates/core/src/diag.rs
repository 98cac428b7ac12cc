//! Source locations and human-readable rendering of diagnostics.

use std::fmt;

use serde::Serialize;

use crate::il::Span;

/// A span tied to a file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub file: String,
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    pub fn new(file: &str, span: Span) -> Self {
        SourceSpan {
            file: file.to_owned(),
            start_line: span.start.line,
            start_col: span.start.col,
            end_line: span.end.line,
            end_col: span.end.col,
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.start_line, self.start_col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// Renders `file:line:col: severity[CODE]: message` followed by the source
/// line and a caret underline when the line is available.
pub fn render(
    source: Option<&str>,
    span: &SourceSpan,
    severity: Severity,
    code: &str,
    message: &str,
    color: bool,
) -> String {
    let (on, off) = match (color, severity) {
        (false, _) => ("", ""),
        (true, Severity::Error) => ("\x1b[1;31m", "\x1b[0m"),
        (true, Severity::Warning) => ("\x1b[1;33m", "\x1b[0m"),
    };
    let mut out = format!("{span}: {on}{severity}[{code}]{off}: {message}\n");
    let line = source
        .and_then(|s| s.lines().nth(span.start_line.saturating_sub(1) as usize));
    if let Some(line) = line {
        let gutter = span.start_line.to_string();
        let pad = " ".repeat(gutter.len());
        let start = span.start_col.max(1) as usize;
        let width = if span.end_line == span.start_line && span.end_col > span.start_col {
            (span.end_col - span.start_col) as usize
        } else {
            line.chars().count().saturating_sub(start - 1).max(1)
        };
        out.push_str(&format!("{pad} |\n{gutter} | {line}\n{pad} | "));
        out.push_str(&" ".repeat(start - 1));
        out.push_str(on);
        out.push_str(&"^".repeat(width));
        out.push_str(off);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::il::Pos;

    #[test]
    fn caret_underlines_span() {
        let src = "func main(): () -> () {\n  x = load y\n}\n";
        let span = SourceSpan::new(
            "t.fuel",
            Span::new(Pos { line: 2, col: 3 }, Pos { line: 2, col: 13 }),
        );
        let text = render(Some(src), &span, Severity::Error, "UseOfJunk", "bad", false);
        assert_eq!(
            text,
            "t.fuel:2:3: error[UseOfJunk]: bad\n  |\n2 |   x = load y\n  |   ^^^^^^^^^^\n"
        );
    }

    #[test]
    fn no_excerpt_without_source() {
        let span = SourceSpan::new("t.fuel", Span::default());
        let text = render(None, &span, Severity::Warning, "X", "m", false);
        assert_eq!(text, "t.fuel:0:0: warning[X]: m\n");
    }
}
