use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    /// Bare word: keywords, identifiers and unquoted literals such as `10ms`.
    Word(String),
    /// Single-quoted string, quotes stripped.
    Str(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Newline,
    Eof,
}

impl TokenKind {
    pub(crate) fn describe(&self) -> String {
        match self {
            TokenKind::Word(w) => format!("`{w}`"),
            TokenKind::Str(s) => format!("'{s}'"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Colon => "`:`".into(),
            TokenKind::Newline => "end of line".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

pub(crate) fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = source.char_indices().peekable();
    let mut line = 1;
    let mut line_start = 0;

    while let Some(&(offset, c)) = chars.peek() {
        let column = source[line_start..offset].chars().count() + 1;
        let mut push = |kind| tokens.push(Token { kind, line, column });
        match c {
            '\n' => {
                chars.next();
                push(TokenKind::Newline);
                line += 1;
                line_start = offset + 1;
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                push(TokenKind::LParen);
            }
            ')' => {
                chars.next();
                push(TokenKind::RParen);
            }
            ',' => {
                chars.next();
                push(TokenKind::Comma);
            }
            ':' => {
                chars.next();
                push(TokenKind::Colon);
            }
            '\'' => {
                chars.next();
                let mut text = String::new();
                loop {
                    match chars.next() {
                        Some((_, '\'')) => break,
                        Some((_, '\n')) | None => {
                            return Err(ParseError::new(
                                line,
                                column,
                                vec!["closing `'`".into()],
                                "unterminated string",
                            ));
                        }
                        Some((_, ch)) => text.push(ch),
                    }
                }
                push(TokenKind::Str(text));
            }
            c if is_word_char(c) => {
                let mut word = String::new();
                while let Some(&(_, ch)) = chars.peek() {
                    if !is_word_char(ch) {
                        break;
                    }
                    word.push(ch);
                    chars.next();
                }
                push(TokenKind::Word(word));
            }
            other => {
                return Err(ParseError::new(
                    line,
                    column,
                    vec!["keyword, identifier, string or punctuation".into()],
                    format!("`{other}`"),
                ));
            }
        }
    }

    let column = source[line_start..].chars().count() + 1;
    tokens.push(Token {
        kind: TokenKind::Eof,
        line,
        column,
    });
    Ok(tokens)
}
