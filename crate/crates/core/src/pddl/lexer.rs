use super::ast::Span;
use super::PddlError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Open,
    Close,
    /// Identifier, variable, keyword or number, lower-cased.
    Word(String),
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '?' | ':' | '.' | '/' | '=' | '<' | '>' | '+' | '*')
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, PddlError> {
    let mut tokens = Vec::new();
    let (mut line, mut col) = (1u32, 1u32);
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let span = Span { line, col };
        match c {
            '\n' => {
                line = line.saturating_add(1);
                col = 1;
                continue;
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        line = line.saturating_add(1);
                        col = 1;
                        break;
                    }
                }
                continue;
            }
            c if c.is_whitespace() => {}
            '(' => tokens.push(Token { kind: TokenKind::Open, span }),
            ')' => tokens.push(Token { kind: TokenKind::Close, span }),
            c if is_word_char(c) => {
                let mut word = String::new();
                word.push(c.to_ascii_lowercase());
                while let Some(&next) = chars.peek() {
                    if !is_word_char(next) {
                        break;
                    }
                    word.push(next.to_ascii_lowercase());
                    chars.next();
                    col = col.saturating_add(1);
                }
                tokens.push(Token {
                    kind: TokenKind::Word(word),
                    span,
                });
            }
            other => return Err(PddlError::Lex { pos: span, ch: other }),
        }
        col = col.saturating_add(1);
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_positions_and_lowercases() {
        let toks = tokenize("(Define\n  ; comment\n (Domain X))").unwrap();
        assert_eq!(toks.len(), 7);
        assert_eq!(toks[1].kind, TokenKind::Word("define".into()));
        assert_eq!((toks[2].span.line, toks[2].span.col), (3, 2));
        assert_eq!(toks[4].kind, TokenKind::Word("x".into()));
    }

    #[test]
    fn rejects_foreign_characters() {
        match tokenize("(a\n  \"b\")") {
            Err(PddlError::Lex { pos, ch: '"' }) => assert_eq!((pos.line, pos.col), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
