use super::{DslError, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    DotDot,
    And,
    Or,
    Not,
    Implies,
    Iff,
    In,
    True,
    False,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(source: &str) -> Result<Vec<Token>, DslError> {
    let mut tokens = Vec::new();
    let mut chars = source.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let single = |tok: Tok| Token {
            tok,
            span: Span::new(start, start + c.len_utf8()),
        };
        match c {
            '(' => {
                chars.next();
                tokens.push(single(Tok::LParen));
            }
            ')' => {
                chars.next();
                tokens.push(single(Tok::RParen));
            }
            ',' => {
                chars.next();
                tokens.push(single(Tok::Comma));
            }
            '+' => {
                chars.next();
                tokens.push(single(Tok::Plus));
            }
            '-' => {
                chars.next();
                tokens.push(single(Tok::Minus));
            }
            '≠' => {
                chars.next();
                tokens.push(single(Tok::Ne));
            }
            '≤' => {
                chars.next();
                tokens.push(single(Tok::Le));
            }
            '≥' => {
                chars.next();
                tokens.push(single(Tok::Ge));
            }
            '=' => {
                chars.next();
                tokens.push(single(Tok::Eq));
            }
            '!' => {
                chars.next();
                match chars.peek() {
                    Some(&(_, '=')) => {
                        chars.next();
                        tokens.push(Token {
                            tok: Tok::Ne,
                            span: Span::new(start, start + 2),
                        });
                    }
                    _ => {
                        return Err(DslError::Syntax {
                            span: Span::new(start, start + 1),
                            message: "expected '=' after '!'".into(),
                        })
                    }
                }
            }
            '<' => {
                chars.next();
                if let Some(&(_, '=')) = chars.peek() {
                    chars.next();
                    tokens.push(Token {
                        tok: Tok::Le,
                        span: Span::new(start, start + 2),
                    });
                } else {
                    tokens.push(single(Tok::Lt));
                }
            }
            '>' => {
                chars.next();
                if let Some(&(_, '=')) = chars.peek() {
                    chars.next();
                    tokens.push(Token {
                        tok: Tok::Ge,
                        span: Span::new(start, start + 2),
                    });
                } else {
                    tokens.push(single(Tok::Gt));
                }
            }
            '.' => {
                chars.next();
                match chars.peek() {
                    Some(&(_, '.')) => {
                        chars.next();
                        tokens.push(Token {
                            tok: Tok::DotDot,
                            span: Span::new(start, start + 2),
                        });
                    }
                    _ => {
                        return Err(DslError::Syntax {
                            span: Span::new(start, start + 1),
                            message: "expected '..'".into(),
                        })
                    }
                }
            }
            '"' => {
                chars.next();
                let mut text = String::new();
                let mut end = None;
                while let Some((i, ch)) = chars.next() {
                    match ch {
                        '"' => {
                            end = Some(i + 1);
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, esc @ ('"' | '\\'))) => text.push(esc),
                            _ => {
                                return Err(DslError::Syntax {
                                    span: Span::new(i, i + 1),
                                    message: "invalid escape in string literal".into(),
                                })
                            }
                        },
                        other => text.push(other),
                    }
                }
                let Some(end) = end else {
                    return Err(DslError::Syntax {
                        span: Span::new(start, source.len()),
                        message: "unterminated string literal".into(),
                    });
                };
                tokens.push(Token {
                    tok: Tok::Str(text),
                    span: Span::new(start, end),
                });
            }
            d if d.is_ascii_digit() => {
                let mut end = start;
                let mut text = String::new();
                while let Some(&(i, ch)) = chars.peek() {
                    if ch.is_ascii_digit() {
                        text.push(ch);
                        end = i + 1;
                        chars.next();
                    } else {
                        break;
                    }
                }
                let value: i64 = text.parse().map_err(|_| DslError::Syntax {
                    span: Span::new(start, end),
                    message: "integer literal out of range".into(),
                })?;
                tokens.push(Token {
                    tok: Tok::Int(value),
                    span: Span::new(start, end),
                });
            }
            a if a.is_alphabetic() || a == '_' => {
                let mut end = start;
                let mut text = String::new();
                while let Some(&(i, ch)) = chars.peek() {
                    if ch.is_alphanumeric() || ch == '_' {
                        text.push(ch);
                        end = i + ch.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let tok = match text.as_str() {
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    "implies" => Tok::Implies,
                    "iff" => Tok::Iff,
                    "in" => Tok::In,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(text),
                };
                tokens.push(Token {
                    tok,
                    span: Span::new(start, end),
                });
            }
            other => {
                return Err(DslError::Syntax {
                    span: Span::new(start, start + other.len_utf8()),
                    message: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_idents() {
        let toks = lex("pos(order, F) + 1 >= pos(order, H)").unwrap();
        let kinds: Vec<_> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("pos".into()),
                Tok::LParen,
                Tok::Ident("order".into()),
                Tok::Comma,
                Tok::Ident("F".into()),
                Tok::RParen,
                Tok::Plus,
                Tok::Int(1),
                Tok::Ge,
                Tok::Ident("pos".into()),
                Tok::LParen,
                Tok::Ident("order".into()),
                Tok::Comma,
                Tok::Ident("H".into()),
                Tok::RParen,
            ]
        );
    }

    #[test]
    fn unicode_comparison_aliases() {
        let toks = lex("1 ≤ 2 ≠ 3 ≥ 4").unwrap();
        let kinds: Vec<_> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![Tok::Int(1), Tok::Le, Tok::Int(2), Tok::Ne, Tok::Int(3), Tok::Ge, Tok::Int(4)]
        );
    }

    #[test]
    fn unterminated_string_errors_with_position() {
        let err = lex("val(colors, S) = \"red").unwrap_err();
        assert!(matches!(err, DslError::Syntax { span, .. } if span.start == 17));
    }

    #[test]
    fn cjk_identifiers_lex_as_idents() {
        let toks = lex("pos(货架, 零食)").unwrap();
        assert!(matches!(&toks[2].tok, Tok::Ident(s) if s == "货架"));
    }
}
