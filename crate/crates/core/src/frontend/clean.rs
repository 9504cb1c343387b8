use super::lexer::{lex, LexedSource};
use super::parser::string_content;
use super::token::TokenKind;
use super::FrontendError;

/// Which raw tokens belong to `annotation(...)` clauses, plus the content of
/// every `Documentation` annotation found while marking.
#[derive(Debug, Clone)]
pub struct AnnotationMarks {
    pub removed: Vec<bool>,
    /// (raw index of the `annotation` keyword, extracted documentation text)
    pub documentation: Vec<(usize, String)>,
}

/// Result of cleaning one source unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanedUnit {
    pub text: String,
    pub documentation: String,
}

/// Remove every `annotation(...)` clause, collapse blank-line runs, and trim
/// redundant whitespace. Documentation annotations are dropped like the rest;
/// use [`clean_source`] to capture their content.
pub fn strip_annotations(source: &str) -> Result<String, FrontendError> {
    Ok(clean_source(source)?.text)
}

/// Like [`strip_annotations`] but also returns the text extracted from
/// `Documentation` annotations before removal.
pub fn clean_source(source: &str) -> Result<CleanedUnit, FrontendError> {
    let lexed = lex(source)?;
    let marks = mark_annotations(&lexed)?;
    let text = if lexed.tokens.is_empty() {
        String::new()
    } else {
        render_span(&lexed, &marks, 0, lexed.tokens.len() - 1).trim().to_string()
    };
    let documentation = marks
        .documentation
        .iter()
        .map(|(_, d)| d.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    Ok(CleanedUnit { text, documentation })
}

/// Scan the token stream for `annotation(...)` clauses, marking their tokens
/// for removal and extracting Documentation content.
pub fn mark_annotations(lexed: &LexedSource) -> Result<AnnotationMarks, FrontendError> {
    let tokens = &lexed.tokens;
    let mut removed = vec![false; tokens.len()];
    let mut documentation = Vec::new();

    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if !(tok.kind == TokenKind::Keyword && tok.text == "annotation") {
            i += 1;
            continue;
        }
        // Find the opening parenthesis (comments may intervene).
        let mut j = i + 1;
        while j < tokens.len() && tokens[j].kind == TokenKind::Comment {
            j += 1;
        }
        if !(j < tokens.len() && tokens[j].is_punct("(")) {
            i += 1;
            continue;
        }
        let mut depth = 0usize;
        let mut close = None;
        for k in j..tokens.len() {
            if tokens[k].is_punct("(") {
                depth += 1;
            } else if tokens[k].is_punct(")") {
                depth -= 1;
                if depth == 0 {
                    close = Some(k);
                    break;
                }
            }
        }
        let close = close.ok_or(FrontendError::UnbalancedAnnotation { line: tok.line })?;
        if let Some(doc) = extract_documentation(lexed, j + 1, close) {
            documentation.push((i, doc));
        }
        for flag in removed.iter_mut().take(close + 1).skip(i) {
            *flag = true;
        }
        i = close + 1;
    }

    Ok(AnnotationMarks { removed, documentation })
}

/// Pull the `info` string out of a `Documentation(info="...")` body within
/// the token range `start..end`. Falls back to concatenating every string in
/// the Documentation body when no `info` binding exists.
fn extract_documentation(lexed: &LexedSource, start: usize, end: usize) -> Option<String> {
    let tokens = &lexed.tokens;
    let doc_idx = (start..end).find(|&k| {
        tokens[k].kind == TokenKind::Identifier && tokens[k].text == "Documentation"
    })?;
    let mut open = doc_idx + 1;
    while open < end && tokens[open].kind == TokenKind::Comment {
        open += 1;
    }
    if !(open < end && tokens[open].is_punct("(")) {
        return None;
    }
    let mut depth = 0usize;
    let mut doc_close = end;
    for k in open..end {
        if tokens[k].is_punct("(") {
            depth += 1;
        } else if tokens[k].is_punct(")") {
            depth -= 1;
            if depth == 0 {
                doc_close = k;
                break;
            }
        }
    }

    // info = "..."
    for k in open + 1..doc_close {
        if tokens[k].kind == TokenKind::Identifier
            && tokens[k].text == "info"
            && tokens.get(k + 1).is_some_and(|t| t.is_op("="))
            && tokens.get(k + 2).is_some_and(|t| t.kind == TokenKind::String)
        {
            return Some(string_content(&tokens[k + 2].text));
        }
    }
    let strings: Vec<String> = (open + 1..doc_close)
        .filter(|&k| tokens[k].kind == TokenKind::String)
        .map(|k| string_content(&tokens[k].text))
        .collect();
    if strings.is_empty() {
        None
    } else {
        Some(strings.join("\n"))
    }
}

/// Render the raw token range `raw_start..=raw_end`, skipping tokens marked
/// as removed. Gaps around removed tokens merge; whitespace is normalized:
/// intra-line runs become one space, trailing whitespace is dropped, and
/// blank-line runs collapse to a single blank line.
pub fn render_span(
    lexed: &LexedSource,
    marks: &AnnotationMarks,
    raw_start: usize,
    raw_end: usize,
) -> String {
    let mut out = String::new();
    let mut pending = String::new();
    let mut emitted = false;
    for i in raw_start..=raw_end.min(lexed.tokens.len().saturating_sub(1)) {
        pending.push_str(&lexed.gaps[i]);
        if marks.removed[i] {
            continue;
        }
        if emitted {
            out.push_str(&normalize_gap(&pending));
        }
        pending.clear();
        out.push_str(&lexed.tokens[i].text);
        emitted = true;
    }
    out
}

/// Normalize one whitespace-only gap: a gap without newlines becomes a single
/// space; a gap with newlines keeps at most two (one blank line) plus the
/// final line's indentation.
fn normalize_gap(gap: &str) -> String {
    if gap.is_empty() {
        return String::new();
    }
    let newlines = gap.chars().filter(|&c| c == '\n').count();
    if newlines == 0 {
        return " ".to_string();
    }
    let indent = gap.rsplit('\n').next().unwrap_or("");
    let mut out = String::new();
    for _ in 0..newlines.min(2) {
        out.push('\n');
    }
    out.push_str(indent);
    out
}
