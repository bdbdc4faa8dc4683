use super::lexer::{lex, Tok, Token};
use super::{BinOp, DslError, Expr, ExprKind, QuantKind, Span};

/// Parses DSL source into an AST with byte spans. Identifier resolution is
/// deferred to [`check`](super::check).
pub fn parse(source: &str) -> Result<Expr, DslError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        len: source.len(),
    };
    let expr = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(DslError::Syntax {
            span: tok.span,
            message: "unexpected trailing input".into(),
        });
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Span, DslError> {
        match self.next() {
            Some(t) if t.tok == tok => Ok(t.span),
            Some(t) => Err(DslError::Syntax {
                span: t.span,
                message: format!("expected {what}"),
            }),
            None => Err(self.eof(what)),
        }
    }

    fn eof(&self, what: &str) -> DslError {
        DslError::Syntax {
            span: Span::new(self.len, self.len),
            message: format!("unexpected end of input, expected {what}"),
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        self.iff_expr()
    }

    fn iff_expr(&mut self) -> Result<Expr, DslError> {
        let mut left = self.implies_expr()?;
        while self.eat(&Tok::Iff) {
            let right = self.implies_expr()?;
            left = binary(BinOp::Iff, left, right);
        }
        Ok(left)
    }

    fn implies_expr(&mut self) -> Result<Expr, DslError> {
        let left = self.or_expr()?;
        if self.eat(&Tok::Implies) {
            // right-associative
            let right = self.implies_expr()?;
            return Ok(binary(BinOp::Implies, left, right));
        }
        Ok(left)
    }

    fn or_expr(&mut self) -> Result<Expr, DslError> {
        let mut left = self.and_expr()?;
        while self.eat(&Tok::Or) {
            let right = self.and_expr()?;
            left = binary(BinOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, DslError> {
        let mut left = self.cmp_expr()?;
        while self.eat(&Tok::And) {
            let right = self.cmp_expr()?;
            left = binary(BinOp::And, left, right);
        }
        Ok(left)
    }

    fn cmp_expr(&mut self) -> Result<Expr, DslError> {
        let left = self.not_expr()?;
        let op = match self.peek().map(|t| &t.tok) {
            Some(Tok::Eq) => BinOp::Eq,
            Some(Tok::Ne) => BinOp::Ne,
            Some(Tok::Lt) => BinOp::Lt,
            Some(Tok::Le) => BinOp::Le,
            Some(Tok::Gt) => BinOp::Gt,
            Some(Tok::Ge) => BinOp::Ge,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.not_expr()?;
        Ok(binary(op, left, right))
    }

    fn not_expr(&mut self) -> Result<Expr, DslError> {
        if let Some(t) = self.peek() {
            if t.tok == Tok::Not {
                let start = t.span.start;
                self.pos += 1;
                let inner = self.not_expr()?;
                let span = Span::new(start, inner.span.end);
                return Ok(Expr {
                    kind: ExprKind::Not(Box::new(inner)),
                    span,
                });
            }
        }
        self.add_expr()
    }

    fn add_expr(&mut self) -> Result<Expr, DslError> {
        let mut left = self.primary()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let right = self.primary()?;
            left = binary(op, left, right);
        }
        Ok(left)
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let Some(token) = self.next() else {
            return Err(self.eof("an expression"));
        };
        let span = token.span;
        match token.tok {
            Tok::Int(v) => Ok(Expr {
                kind: ExprKind::Int(v),
                span,
            }),
            Tok::Str(s) => Ok(Expr {
                kind: ExprKind::Str(s),
                span,
            }),
            Tok::True => Ok(Expr {
                kind: ExprKind::Bool(true),
                span,
            }),
            Tok::False => Ok(Expr {
                kind: ExprKind::Bool(false),
                span,
            }),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().map(|t| &t.tok) == Some(&Tok::LParen) {
                    let quant = match name.as_str() {
                        "all" => Some(QuantKind::All),
                        "exists" => Some(QuantKind::Exists),
                        "exactly" => Some(QuantKind::Exactly),
                        "atleast" => Some(QuantKind::AtLeast),
                        "atmost" => Some(QuantKind::AtMost),
                        "count" => Some(QuantKind::Count),
                        _ => None,
                    };
                    match quant {
                        Some(kind) => self.quantifier(kind, span),
                        None => self.call(name, span),
                    }
                } else {
                    Ok(Expr {
                        kind: ExprKind::Ident(name),
                        span,
                    })
                }
            }
            _ => Err(DslError::Syntax {
                span,
                message: "expected an expression".into(),
            }),
        }
    }

    fn call(&mut self, name: String, start: Span) -> Result<Expr, DslError> {
        self.expect(Tok::LParen, "'('")?;
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                args.push(self.coll_or_expr()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen, "')' or ','")?;
                break;
            }
        }
        let end = args.last().map(|a| a.span.end).unwrap_or(start.end) + 1;
        Ok(Expr {
            kind: ExprKind::Call { name, args },
            span: Span::new(start.start, end),
        })
    }

    fn quantifier(&mut self, kind: QuantKind, start: Span) -> Result<Expr, DslError> {
        self.expect(Tok::LParen, "'('")?;
        let bound = if matches!(kind, QuantKind::Exactly | QuantKind::AtLeast | QuantKind::AtMost)
        {
            let b = self.expr()?;
            self.expect(Tok::Comma, "','")?;
            Some(Box::new(b))
        } else {
            None
        };
        let var = match self.next() {
            Some(Token {
                tok: Tok::Ident(v), ..
            }) => v,
            Some(t) => {
                return Err(DslError::Syntax {
                    span: t.span,
                    message: "expected a quantifier variable".into(),
                })
            }
            None => return Err(self.eof("a quantifier variable")),
        };
        self.expect(Tok::In, "'in'")?;
        let coll = self.coll_or_expr()?;
        self.expect(Tok::Comma, "','")?;
        let body = self.expr()?;
        let end = self.expect(Tok::RParen, "')'")?;
        Ok(Expr {
            kind: ExprKind::Quant {
                kind,
                bound,
                var,
                coll: Box::new(coll),
                body: Box::new(body),
            },
            span: Span::new(start.start, end.end),
        })
    }

    /// An argument or collection: an expression, optionally extended into an
    /// inclusive integer range with `..`.
    fn coll_or_expr(&mut self) -> Result<Expr, DslError> {
        let first = self.add_expr()?;
        if self.eat(&Tok::DotDot) {
            let last = self.add_expr()?;
            let span = Span::new(first.span.start, last.span.end);
            return Ok(Expr {
                kind: ExprKind::Range(Box::new(first), Box::new(last)),
                span,
            });
        }
        Ok(first)
    }
}

fn binary(op: BinOp, left: Expr, right: Expr) -> Expr {
    let span = Span::new(left.span.start, right.span.end);
    Expr {
        kind: ExprKind::Binary(op, Box::new(left), Box::new(right)),
        span,
    }
}
