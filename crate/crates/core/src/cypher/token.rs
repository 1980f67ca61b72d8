//! Tokens and the lexer. Keywords are case-insensitive; strings take
//! single or double quotes with backslash escapes; `//` comments run to end
//! of line.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("lex error at offset {offset}: {msg}")]
pub struct LexError {
    pub offset: usize,
    pub ch: char,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kw {
    Match,
    Where,
    With,
    Create,
    Return,
    Order,
    By,
    Limit,
    As,
    And,
    Or,
    Not,
    In,
    Contains,
    Starts,
    Ends,
    Distinct,
    Unwind,
    Asc,
    Desc,
    Null,
    True,
    False,
}

impl Kw {
    fn from_ident(text: &str) -> Option<Kw> {
        Some(match text.to_ascii_lowercase().as_str() {
            "match" => Kw::Match,
            "where" => Kw::Where,
            "with" => Kw::With,
            "create" => Kw::Create,
            "return" => Kw::Return,
            "order" => Kw::Order,
            "by" => Kw::By,
            "limit" => Kw::Limit,
            "as" => Kw::As,
            "and" => Kw::And,
            "or" => Kw::Or,
            "not" => Kw::Not,
            "in" => Kw::In,
            "contains" => Kw::Contains,
            "starts" => Kw::Starts,
            "ends" => Kw::Ends,
            "distinct" => Kw::Distinct,
            "unwind" => Kw::Unwind,
            "asc" => Kw::Asc,
            "desc" => Kw::Desc,
            "null" => Kw::Null,
            "true" => Kw::True,
            "false" => Kw::False,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Kw),
    Ident,
    /// Text holds the unescaped string content.
    Str,
    Int,
    Float,
    Sym,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: (usize, usize),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TokenKind::Str => write!(f, "'{}'", self.text),
            _ => write!(f, "{}", self.text),
        }
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (offset, ch) = chars[i];
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        // line comment
        if ch == '/' && matches!(chars.get(i + 1), Some((_, '/'))) {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        if ch == '\'' || ch == '"' {
            let quote = ch;
            let mut text = String::new();
            let mut j = i + 1;
            let mut closed = false;
            while j < chars.len() {
                let c = chars[j].1;
                if c == '\\' {
                    match chars.get(j + 1).map(|(_, c)| *c) {
                        Some('n') => text.push('\n'),
                        Some('t') => text.push('\t'),
                        Some('r') => text.push('\r'),
                        Some(other) => text.push(other),
                        None => break,
                    }
                    j += 2;
                } else if c == quote {
                    closed = true;
                    break;
                } else {
                    text.push(c);
                    j += 1;
                }
            }
            if !closed {
                return Err(LexError {
                    offset,
                    ch: quote,
                    msg: "unterminated string".into(),
                });
            }
            let end = chars[j].0 + quote.len_utf8();
            tokens.push(Token {
                kind: TokenKind::Str,
                text,
                span: (offset, end),
            });
            i = j + 1;
            continue;
        }
        if ch.is_ascii_digit() {
            let mut j = i;
            let mut is_float = false;
            while j < chars.len() && chars[j].1.is_ascii_digit() {
                j += 1;
            }
            if j < chars.len()
                && chars[j].1 == '.'
                && matches!(chars.get(j + 1), Some((_, c)) if c.is_ascii_digit())
            {
                is_float = true;
                j += 1;
                while j < chars.len() && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && matches!(chars[j].1, 'e' | 'E') {
                let mut k = j + 1;
                if k < chars.len() && matches!(chars[k].1, '+' | '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].1.is_ascii_digit() {
                    is_float = true;
                    j = k;
                    while j < chars.len() && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                }
            }
            let end = if j < chars.len() { chars[j].0 } else { src.len() };
            tokens.push(Token {
                kind: if is_float { TokenKind::Float } else { TokenKind::Int },
                text: src[offset..end].to_string(),
                span: (offset, end),
            });
            i = j;
            continue;
        }
        if ch.is_alphabetic() || ch == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].1.is_alphanumeric() || chars[j].1 == '_') {
                j += 1;
            }
            let end = if j < chars.len() { chars[j].0 } else { src.len() };
            let text = src[offset..end].to_string();
            let kind = match Kw::from_ident(&text) {
                Some(kw) => TokenKind::Keyword(kw),
                None => TokenKind::Ident,
            };
            tokens.push(Token {
                kind,
                text,
                span: (offset, end),
            });
            i = j;
            continue;
        }
        // multi-char symbols first
        let two: String = chars[i..chars.len().min(i + 2)].iter().map(|(_, c)| *c).collect();
        if matches!(two.as_str(), "<=" | ">=" | "<>") {
            let end = chars
                .get(i + 2)
                .map(|(o, _)| *o)
                .unwrap_or(src.len());
            tokens.push(Token {
                kind: TokenKind::Sym,
                text: two,
                span: (offset, end),
            });
            i += 2;
            continue;
        }
        if "()[]{},:.+-*/<>=;|".contains(ch) {
            tokens.push(Token {
                kind: TokenKind::Sym,
                text: ch.to_string(),
                span: (offset, offset + ch.len_utf8()),
            });
            i += 1;
            continue;
        }
        return Err(LexError {
            offset,
            ch,
            msg: format!("illegal character '{ch}'"),
        });
    }
    Ok(tokens)
}
