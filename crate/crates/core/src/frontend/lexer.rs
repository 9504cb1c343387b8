use super::token::{is_keyword, Token, TokenKind};
use super::FrontendError;

/// A lossless lexing of one source text: `gaps[i]` is the whitespace run
/// preceding `tokens[i]`, and `gaps[tokens.len()]` is the trailing run, so
/// interleaving gaps and token texts reproduces the input byte-for-byte.
#[derive(Debug, Clone)]
pub struct LexedSource {
    pub tokens: Vec<Token>,
    pub gaps: Vec<String>,
}

impl LexedSource {
    /// Reassemble the original source text.
    pub fn reconstruct(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            out.push_str(&self.gaps[i]);
            out.push_str(&tok.text);
        }
        out.push_str(&self.gaps[self.tokens.len()]);
        out
    }

    /// Verbatim text of the token range `start..=end`, including interior
    /// gaps but not the surrounding ones.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for i in start..=end.min(self.tokens.len().saturating_sub(1)) {
            if i > start {
                out.push_str(&self.gaps[i]);
            }
            out.push_str(&self.tokens[i].text);
        }
        out
    }
}

struct Cursor<'a> {
    rest: &'a str,
    line: u32,
    column: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.rest.chars().next()
    }

    fn peek2(&self) -> Option<char> {
        self.rest.chars().nth(1)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.rest = &self.rest[c.len_utf8()..];
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest.starts_with(s)
    }
}

/// Lex `source` keeping every byte: tokens plus whitespace gaps.
pub fn lex(source: &str) -> Result<LexedSource, FrontendError> {
    let mut cur = Cursor { rest: source, line: 1, column: 1 };
    let mut tokens = Vec::new();
    let mut gaps = Vec::new();

    loop {
        // Collect the whitespace run before the next token.
        let mut gap = String::new();
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                gap.push(c);
                cur.bump();
            } else {
                break;
            }
        }
        gaps.push(gap);

        let (line, column) = (cur.line, cur.column);
        let c = match cur.peek() {
            Some(c) => c,
            None => break,
        };

        let token = if cur.starts_with("//") {
            let mut text = String::new();
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                text.push(c);
                cur.bump();
            }
            Token { kind: TokenKind::Comment, text, line, column }
        } else if cur.starts_with("/*") {
            let mut text = String::from("/*");
            cur.bump();
            cur.bump();
            let mut closed = false;
            while let Some(c) = cur.peek() {
                if c == '*' && cur.peek2() == Some('/') {
                    cur.bump();
                    cur.bump();
                    text.push_str("*/");
                    closed = true;
                    break;
                }
                text.push(c);
                cur.bump();
            }
            if !closed {
                return Err(FrontendError::UnterminatedComment { line, column });
            }
            Token { kind: TokenKind::Comment, text, line, column }
        } else if c == '"' {
            let mut text = String::from("\"");
            cur.bump();
            let mut closed = false;
            while let Some(c) = cur.peek() {
                if c == '\\' {
                    text.push(c);
                    cur.bump();
                    if let Some(esc) = cur.bump() {
                        text.push(esc);
                    }
                    continue;
                }
                text.push(c);
                cur.bump();
                if c == '"' {
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(FrontendError::UnterminatedString { line, column });
            }
            Token { kind: TokenKind::String, text, line, column }
        } else if c == '\'' {
            // Quoted identifier: lexed verbatim, quotes included.
            let mut text = String::from("'");
            cur.bump();
            let mut closed = false;
            while let Some(c) = cur.peek() {
                if c == '\\' {
                    text.push(c);
                    cur.bump();
                    if let Some(esc) = cur.bump() {
                        text.push(esc);
                    }
                    continue;
                }
                text.push(c);
                cur.bump();
                if c == '\'' {
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(FrontendError::UnterminatedString { line, column });
            }
            Token { kind: TokenKind::Identifier, text, line, column }
        } else if c.is_ascii_digit() {
            lex_number(&mut cur)
        } else if c == '_' || c.is_alphabetic() {
            let mut text = String::new();
            while let Some(c) = cur.peek() {
                if c == '_' || c.is_alphanumeric() {
                    text.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            let kind = if is_keyword(&text) { TokenKind::Keyword } else { TokenKind::Identifier };
            Token { kind, text, line, column }
        } else {
            lex_symbol(&mut cur, line, column)
        };

        let mut token = token;
        token.line = line;
        token.column = column;
        tokens.push(token);
    }

    Ok(LexedSource { tokens, gaps })
}

fn lex_number(cur: &mut Cursor) -> Token {
    let mut text = String::new();
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            text.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    if cur.peek() == Some('.') {
        text.push('.');
        cur.bump();
        while let Some(c) = cur.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                cur.bump();
            } else {
                break;
            }
        }
    }
    if matches!(cur.peek(), Some('e') | Some('E')) {
        // Exponent only when followed by digits (with optional sign).
        let next = cur.peek2();
        let has_exp = match next {
            Some(d) if d.is_ascii_digit() => true,
            Some('+') | Some('-') => cur.rest.chars().nth(2).is_some_and(|d| d.is_ascii_digit()),
            _ => false,
        };
        if has_exp {
            text.push(cur.bump().unwrap());
            if matches!(cur.peek(), Some('+') | Some('-')) {
                text.push(cur.bump().unwrap());
            }
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() {
                    text.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
        }
    }
    Token { kind: TokenKind::Number, text, line: 0, column: 0 }
}

const TWO_CHAR_OPS: &[&str] = &[":=", "<=", ">=", "==", "<>", ".+", ".-", ".*", "./", ".^"];

fn lex_symbol(cur: &mut Cursor, line: u32, column: u32) -> Token {
    for op in TWO_CHAR_OPS {
        if cur.starts_with(op) {
            cur.bump();
            cur.bump();
            return Token { kind: TokenKind::Operator, text: (*op).to_string(), line, column };
        }
    }
    let c = cur.bump().unwrap();
    let kind = match c {
        '+' | '-' | '*' | '/' | '^' | '=' | '<' | '>' => TokenKind::Operator,
        _ => TokenKind::Punctuation,
    };
    Token { kind, text: c.to_string(), line, column }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_model_tokens() {
        let lexed = lex("model A end A;").unwrap();
        let kinds: Vec<_> = lexed.tokens.iter().map(|t| (t.kind, t.text.as_str())).collect();
        assert_eq!(
            kinds,
            vec![
                (TokenKind::Keyword, "model"),
                (TokenKind::Identifier, "A"),
                (TokenKind::Keyword, "end"),
                (TokenKind::Identifier, "A"),
                (TokenKind::Punctuation, ";"),
            ]
        );
    }

    #[test]
    fn reconstruct_is_lossless() {
        let src = "model A\n  // note\n  Real x(start=1.5e-3) \"d\";\nequation\n  der(x) = -x; /* b */\nend A;\n";
        let lexed = lex(src).unwrap();
        assert_eq!(lexed.reconstruct(), src);
    }

    #[test]
    fn comments_are_tokens() {
        let lexed = lex("// line\n/* block */ x").unwrap();
        assert_eq!(lexed.tokens[0].kind, TokenKind::Comment);
        assert_eq!(lexed.tokens[0].text, "// line");
        assert_eq!(lexed.tokens[1].kind, TokenKind::Comment);
        assert_eq!(lexed.tokens[1].text, "/* block */");
    }

    #[test]
    fn unterminated_comment_reports_position() {
        let err = lex("x = /*unterminated").unwrap_err();
        match err {
            FrontendError::UnterminatedComment { line, column } => {
                assert_eq!(line, 1);
                assert_eq!(column, 5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unterminated_string_reports_position() {
        let err = lex("s = \"oops").unwrap_err();
        assert!(matches!(err, FrontendError::UnterminatedString { line: 1, column: 5 }));
    }

    #[test]
    fn number_forms() {
        for src in ["9.81", "0.9", "1e-3", "2.", "0.5e+3", "42", "3E8"] {
            let lexed = lex(src).unwrap();
            assert_eq!(lexed.tokens.len(), 1, "{src}");
            assert_eq!(lexed.tokens[0].kind, TokenKind::Number, "{src}");
            assert_eq!(lexed.tokens[0].text, src);
        }
    }

    #[test]
    fn line_and_column_are_one_based() {
        let lexed = lex("model A\n  Real x;\nend A;").unwrap();
        let x = lexed.tokens.iter().find(|t| t.text == "x").unwrap();
        assert_eq!((x.line, x.column), (2, 8));
    }

    #[test]
    fn ident_followed_by_dot_is_not_exponent() {
        let lexed = lex("a.e.b").unwrap();
        assert_eq!(lexed.tokens.len(), 5);
    }

    #[test]
    fn number_dot_then_ident_stays_separate() {
        // "1.e" must not swallow the identifier: exponent needs digits.
        let lexed = lex("x[1].y").unwrap();
        let texts: Vec<_> = lexed.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["x", "[", "1", "]", ".", "y"]);
    }
}
