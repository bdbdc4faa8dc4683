//! Lenient JSON extraction from free-form model responses.
//!
//! [`extract_last_json`] returns the last well-formed JSON object or array in
//! a text, scanning left to right and skipping over each parsed value so that
//! nested values are not reported on their own. The parser tolerates the
//! Python-flavoured output models tend to produce: single-quoted strings,
//! set literals (`{'K', 'G'}` becomes an array), `True`/`False`/`None`,
//! and trailing commas.

use serde_json::{Map, Number, Value};

/// Last maximal well-formed JSON object or array in `text`, if any.
pub fn extract_last_json(text: &str) -> Option<Value> {
    let chars: Vec<char> = text.chars().collect();
    let mut last = None;
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '{' || chars[i] == '[' {
            let mut p = Parser {
                chars: &chars,
                pos: i,
            };
            if let Some(value) = p.value() {
                last = Some(value);
                i = p.pos;
                continue;
            }
        }
        i += 1;
    }
    last
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Option<Value> {
        self.skip_ws();
        match self.peek()? {
            '{' => self.braced(),
            '[' => self.array(),
            '"' | '\'' => self.string().map(Value::String),
            c if c.is_ascii_digit() || c == '-' => self.number(),
            c if c.is_alphabetic() => self.word(),
            _ => None,
        }
    }

    /// `{...}`: a JSON object when entries are `key: value`, a set literal
    /// (normalized to an array) when entries are bare values.
    fn braced(&mut self) -> Option<Value> {
        self.bump();
        self.skip_ws();
        if self.peek() == Some('}') {
            self.bump();
            return Some(Value::Object(Map::new()));
        }
        let first = self.value()?;
        self.skip_ws();
        match self.peek() {
            Some(':') => {
                self.bump();
                let key = first.as_str()?.to_string();
                let val = self.value()?;
                let mut map = Map::new();
                map.insert(key, val);
                loop {
                    self.skip_ws();
                    match self.bump()? {
                        '}' => return Some(Value::Object(map)),
                        ',' => {
                            self.skip_ws();
                            if self.peek() == Some('}') {
                                self.bump();
                                return Some(Value::Object(map));
                            }
                            let key = self.value()?.as_str()?.to_string();
                            self.skip_ws();
                            if self.bump()? != ':' {
                                return None;
                            }
                            let val = self.value()?;
                            map.insert(key, val);
                        }
                        _ => return None,
                    }
                }
            }
            Some(',') | Some('}') => {
                let mut items = vec![first];
                loop {
                    self.skip_ws();
                    match self.bump()? {
                        '}' => return Some(Value::Array(items)),
                        ',' => {
                            self.skip_ws();
                            if self.peek() == Some('}') {
                                self.bump();
                                return Some(Value::Array(items));
                            }
                            items.push(self.value()?);
                        }
                        _ => return None,
                    }
                }
            }
            _ => None,
        }
    }

    fn array(&mut self) -> Option<Value> {
        self.bump();
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek()? {
                ']' => {
                    self.bump();
                    return Some(Value::Array(items));
                }
                ',' => {
                    self.bump();
                }
                _ => items.push(self.value()?),
            }
        }
    }

    fn string(&mut self) -> Option<String> {
        let quote = self.bump()?;
        let mut out = String::new();
        loop {
            match self.bump()? {
                c if c == quote => return Some(out),
                '\\' => match self.bump()? {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'u' => {
                        let mut code = 0u32;
                        for _ in 0..4 {
                            code = code * 16 + self.bump()?.to_digit(16)?;
                        }
                        out.push(char::from_u32(code)?);
                    }
                    other => out.push(other),
                },
                c => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Option<Value> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.bump();
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || "+-.eE".contains(c)) {
            self.bump();
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        if let Ok(i) = text.parse::<i64>() {
            return Some(Value::Number(Number::from(i)));
        }
        let f: f64 = text.parse().ok()?;
        Number::from_f64(f).map(Value::Number)
    }

    fn word(&mut self) -> Option<Value> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric()) {
            self.bump();
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.as_str() {
            "true" | "True" => Some(Value::Bool(true)),
            "false" | "False" => Some(Value::Bool(false)),
            "null" | "None" => Some(Value::Null),
            _ => None,
        }
    }
}
