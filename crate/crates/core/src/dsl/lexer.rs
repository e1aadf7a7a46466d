//! Tokenizer for the `.ocp` language.

use serde::Serialize;

use super::DslError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Keyword {
    In,
    Time,
    State,
    Control,
    Variable,
    Min,
    Max,
    Derivative,
    Integral,
}

impl Keyword {
    fn from_ident(s: &str) -> Option<Self> {
        Some(match s {
            "in" => Keyword::In,
            "time" => Keyword::Time,
            "state" => Keyword::State,
            "control" => Keyword::Control,
            "variable" => Keyword::Variable,
            "min" => Keyword::Min,
            "max" => Keyword::Max,
            "derivative" => Keyword::Derivative,
            "integral" => Keyword::Integral,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::In => "in",
            Keyword::Time => "time",
            Keyword::State => "state",
            Keyword::Control => "control",
            Keyword::Variable => "variable",
            Keyword::Min => "min",
            Keyword::Max => "max",
            Keyword::Derivative => "derivative",
            Keyword::Integral => "integral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TokenKind {
    Ident(String),
    Keyword(Keyword),
    Int(u64),
    Real(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Assign,
    EqEq,
    Le,
    Ge,
    Arrow,
    Newline,
}

impl TokenKind {
    /// Tokens after which an expression cannot end, so a newline continues
    /// the statement.
    fn continues_line(&self) -> bool {
        matches!(
            self,
            TokenKind::Comma
                | TokenKind::Plus
                | TokenKind::Minus
                | TokenKind::Star
                | TokenKind::Slash
                | TokenKind::Caret
                | TokenKind::Assign
                | TokenKind::EqEq
                | TokenKind::Le
                | TokenKind::Ge
                | TokenKind::Arrow
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    /// 1-based line.
    pub line: usize,
    /// 1-based column.
    pub col: usize,
    /// Byte offsets into the source.
    pub start: usize,
    pub end: usize,
}

/// Splits `source` into tokens. Comments are dropped; newlines are kept only
/// where they terminate a statement.
pub fn tokenize(source: &str) -> Result<Vec<Token>, DslError> {
    let bytes = source.as_bytes();
    let mut tokens: Vec<Token> = Vec::new();
    let mut depth = 0usize;
    let mut pos = 0;
    let mut line = 1;
    let mut line_start = 0;

    while pos < bytes.len() {
        let c = bytes[pos];
        let col = pos - line_start + 1;
        let start = pos;
        let simple = |kind: TokenKind, len: usize| Token {
            kind,
            line,
            col,
            start,
            end: start + len,
        };
        match c {
            b' ' | b'\t' | b'\r' => pos += 1,
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b'\n' => {
                let keep = depth == 0
                    && tokens
                        .last()
                        .is_some_and(|t| t.kind != TokenKind::Newline && !t.kind.continues_line());
                if keep {
                    tokens.push(simple(TokenKind::Newline, 1));
                }
                pos += 1;
                line += 1;
                line_start = pos;
            }
            b'0'..=b'9' | b'.' => {
                let (tok, len) = lex_number(&source[pos..]).ok_or_else(|| DslError::Lex {
                    line,
                    col,
                    message: format!("malformed number starting with '{}'", c as char),
                })?;
                tokens.push(simple(tok, len));
                pos += len;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = pos + 1;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                let word = &source[pos..end];
                let kind = match Keyword::from_ident(word) {
                    Some(kw) => TokenKind::Keyword(kw),
                    None => TokenKind::Ident(word.to_string()),
                };
                tokens.push(simple(kind, end - pos));
                pos = end;
            }
            _ => {
                let next = bytes.get(pos + 1).copied();
                let (kind, len) = match (c, next) {
                    (b'=', Some(b'=')) => (TokenKind::EqEq, 2),
                    (b'=', Some(b'>')) => (TokenKind::Arrow, 2),
                    (b'<', Some(b'=')) => (TokenKind::Le, 2),
                    (b'>', Some(b'=')) => (TokenKind::Ge, 2),
                    (b'=', _) => (TokenKind::Assign, 1),
                    (b'(', _) => (TokenKind::LParen, 1),
                    (b')', _) => (TokenKind::RParen, 1),
                    (b'[', _) => (TokenKind::LBracket, 1),
                    (b']', _) => (TokenKind::RBracket, 1),
                    (b',', _) => (TokenKind::Comma, 1),
                    (b'+', _) => (TokenKind::Plus, 1),
                    (b'-', _) => (TokenKind::Minus, 1),
                    (b'*', _) => (TokenKind::Star, 1),
                    (b'/', _) => (TokenKind::Slash, 1),
                    (b'^', _) => (TokenKind::Caret, 1),
                    _ => {
                        let ch = source[pos..].chars().next().unwrap_or('?');
                        return Err(DslError::Lex {
                            line,
                            col,
                            message: format!("illegal character '{ch}'"),
                        });
                    }
                };
                match kind {
                    TokenKind::LParen | TokenKind::LBracket => depth += 1,
                    TokenKind::RParen | TokenKind::RBracket => depth = depth.saturating_sub(1),
                    _ => {}
                }
                tokens.push(simple(kind, len));
                pos += len;
            }
        }
    }
    if tokens.last().is_some_and(|t| t.kind == TokenKind::Newline) {
        tokens.pop();
    }
    Ok(tokens)
}

/// Lexes an integer or real literal at the start of `s`. An exponent marker
/// is only consumed when digits follow, so `2exp(x)` lexes as `2` `exp`.
fn lex_number(s: &str) -> Option<(TokenKind, usize)> {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut real = false;
    if i < b.len() && b[i] == b'.' {
        real = true;
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            real = true;
            i = j;
        }
    }
    let text = &s[..i];
    if text == "." || text.is_empty() {
        return None;
    }
    if real {
        text.parse::<f64>().ok().map(|v| (TokenKind::Real(v), i))
    } else {
        text.parse::<u64>().ok().map(|v| (TokenKind::Int(v), i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    fn ident(s: &str) -> TokenKind {
        TokenKind::Ident(s.to_string())
    }

    #[test]
    fn state_declaration() {
        assert_eq!(
            kinds("x in R^2, state"),
            vec![
                ident("x"),
                TokenKind::Keyword(Keyword::In),
                ident("R"),
                TokenKind::Caret,
                TokenKind::Int(2),
                TokenKind::Comma,
                TokenKind::Keyword(Keyword::State),
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("  # only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn chained_inequality() {
        assert_eq!(
            kinds("0 <= u(t) <= 1"),
            vec![
                TokenKind::Int(0),
                TokenKind::Le,
                ident("u"),
                TokenKind::LParen,
                ident("t"),
                TokenKind::RParen,
                TokenKind::Le,
                TokenKind::Int(1),
            ]
        );
    }

    #[test]
    fn numbers_and_juxtaposition() {
        assert_eq!(kinds("2pi"), vec![TokenKind::Int(2), ident("pi")]);
        assert_eq!(kinds("0.5u"), vec![TokenKind::Real(0.5), ident("u")]);
        assert_eq!(kinds("1e-5"), vec![TokenKind::Real(1e-5)]);
        assert_eq!(kinds("2exp"), vec![TokenKind::Int(2), ident("exp")]);
        assert_eq!(kinds("3.5E2"), vec![TokenKind::Real(350.0)]);
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("a = 1\n  b = 2").unwrap();
        let b = toks.iter().find(|t| t.kind == ident("b")).unwrap();
        assert_eq!((b.line, b.col), (2, 3));
    }

    #[test]
    fn continuation_lines() {
        // trailing operator and open parenthesis both continue the statement
        let k = kinds("a = 1 +\n 2\nb = (1,\n 2)\n");
        assert_eq!(k.iter().filter(|t| **t == TokenKind::Newline).count(), 1);
    }

    #[test]
    fn comments_are_stripped() {
        assert_eq!(kinds("x # trailing\n# full line\ny"), vec![ident("x"), TokenKind::Newline, ident("y")]);
    }

    #[test]
    fn illegal_character_reports_position() {
        let err = tokenize("x = 1\ny = 2 $ 3").unwrap_err();
        match err {
            DslError::Lex { line, col, .. } => assert_eq!((line, col), (2, 7)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(tokenize("x < 1").is_err());
    }
}
