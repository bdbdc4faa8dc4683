use std::collections::BTreeSet;

use super::{BinOp, DslError, Expr, ExprKind, QuantKind, Span};
use crate::domain::{DomainSpec, SlotKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Bool,
    Int,
    Str,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Bool => "bool",
            Ty::Int => "int",
            Ty::Str => "token",
        }
    }
}

/// Resolved, type-checked expression tree. Slot references are indices into
/// the domain's slot list; variables index the evaluation scope stack.
#[derive(Debug, Clone, PartialEq)]
pub enum TNode {
    Bool(bool),
    Int(i64),
    Str(String),
    Var(usize),
    /// A scalar slot used directly as a token expression.
    ScalarSlot(usize),
    Not(Box<TNode>),
    Abs(Box<TNode>),
    Binary(BinOp, Box<TNode>, Box<TNode>),
    Quant {
        kind: QuantKind,
        bound: Option<Box<TNode>>,
        coll: TColl,
        body: Box<TNode>,
    },
    Pos { slot: usize, item: Box<TNode> },
    At { slot: usize, index: Box<TNode> },
    Val { slot: usize, key: Box<TNode> },
    Member { coll: TColl, item: Box<TNode> },
    Size(TColl),
}

/// A finite collection to iterate or test membership against.
#[derive(Debug, Clone, PartialEq)]
pub enum TColl {
    /// The tokens of a slot: sequence order for permutations, members for
    /// subsets, keys for assignments, the bound value for scalars.
    Slot(usize),
    /// Prefix of a permutation strictly preceding `item`.
    Before { slot: usize, item: Box<TNode> },
    /// Inclusive integer range; binds an int variable.
    Range(Box<TNode>, Box<TNode>),
}

/// A checked constraint: boolean at the root, every accessor resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedExpr {
    pub root: TNode,
    /// Indices of every slot the expression reads; drives solver pruning.
    pub slots: BTreeSet<usize>,
}

/// Resolves identifiers against the domain and type-checks the expression.
/// The root must be boolean.
pub fn check(expr: &Expr, domain: &DomainSpec) -> Result<TypedExpr, DslError> {
    let mut cx = Checker {
        domain,
        scope: Vec::new(),
        slots: BTreeSet::new(),
    };
    let (root, ty) = cx.node(expr)?;
    if ty != Ty::Bool {
        return Err(type_err(expr.span, "constraint root", Ty::Bool, ty));
    }
    Ok(TypedExpr {
        root,
        slots: cx.slots,
    })
}

struct Checker<'a> {
    domain: &'a DomainSpec,
    scope: Vec<(String, Ty)>,
    slots: BTreeSet<usize>,
}

fn type_err(span: Span, what: &str, expected: Ty, actual: Ty) -> DslError {
    DslError::Type {
        span,
        message: format!("{what} has the wrong type"),
        expected: expected.name().into(),
        actual: actual.name().into(),
    }
}

impl<'a> Checker<'a> {
    fn node(&mut self, expr: &Expr) -> Result<(TNode, Ty), DslError> {
        match &expr.kind {
            ExprKind::Bool(b) => Ok((TNode::Bool(*b), Ty::Bool)),
            ExprKind::Int(v) => Ok((TNode::Int(*v), Ty::Int)),
            ExprKind::Str(s) => Ok((TNode::Str(s.clone()), Ty::Str)),
            ExprKind::Ident(name) => self.ident(name, expr.span),
            ExprKind::Not(inner) => {
                let (node, ty) = self.node(inner)?;
                if ty != Ty::Bool {
                    return Err(type_err(inner.span, "operand of 'not'", Ty::Bool, ty));
                }
                Ok((TNode::Not(Box::new(node)), Ty::Bool))
            }
            ExprKind::Binary(op, l, r) => self.binary(*op, l, r),
            ExprKind::Call { name, args } => self.call(name, args, expr.span),
            ExprKind::Quant {
                kind,
                bound,
                var,
                coll,
                body,
            } => self.quant(*kind, bound.as_deref(), var, coll, body),
            ExprKind::Range(..) => Err(DslError::Syntax {
                span: expr.span,
                message: "a range is only valid as a quantifier collection".into(),
            }),
        }
    }

    fn ident(&mut self, name: &str, span: Span) -> Result<(TNode, Ty), DslError> {
        // Innermost binding wins; a variable may not shadow anything, which
        // `bind` enforces at the quantifier site.
        if let Some(idx) = self.scope.iter().rposition(|(n, _)| n == name) {
            let ty = self.scope[idx].1;
            return Ok((TNode::Var(idx), ty));
        }
        if let Some((idx, slot)) = self.domain.slot(name) {
            return match slot.kind {
                SlotKind::Scalar { .. } => {
                    self.slots.insert(idx);
                    Ok((TNode::ScalarSlot(idx), Ty::Str))
                }
                _ => Err(DslError::Type {
                    span,
                    message: format!("slot {name:?} cannot be used as a plain value"),
                    expected: "token".into(),
                    actual: "slot".into(),
                }),
            };
        }
        if self.domain.knows_token(name) {
            return Ok((TNode::Str(name.to_string()), Ty::Str));
        }
        Err(DslError::UnknownIdentifier {
            span,
            name: name.to_string(),
        })
    }

    fn binary(&mut self, op: BinOp, l: &Expr, r: &Expr) -> Result<(TNode, Ty), DslError> {
        let (ln, lt) = self.node(l)?;
        let (rn, rt) = self.node(r)?;
        let out = match op {
            BinOp::And | BinOp::Or | BinOp::Implies | BinOp::Iff => {
                if lt != Ty::Bool {
                    return Err(type_err(l.span, "boolean operand", Ty::Bool, lt));
                }
                if rt != Ty::Bool {
                    return Err(type_err(r.span, "boolean operand", Ty::Bool, rt));
                }
                Ty::Bool
            }
            BinOp::Eq | BinOp::Ne => {
                if lt != rt {
                    return Err(type_err(r.span, "comparison operand", lt, rt));
                }
                Ty::Bool
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                if lt != Ty::Int {
                    return Err(type_err(l.span, "ordering operand", Ty::Int, lt));
                }
                if rt != Ty::Int {
                    return Err(type_err(r.span, "ordering operand", Ty::Int, rt));
                }
                Ty::Bool
            }
            BinOp::Add | BinOp::Sub => {
                if lt != Ty::Int {
                    return Err(type_err(l.span, "arithmetic operand", Ty::Int, lt));
                }
                if rt != Ty::Int {
                    return Err(type_err(r.span, "arithmetic operand", Ty::Int, rt));
                }
                Ty::Int
            }
        };
        Ok((TNode::Binary(op, Box::new(ln), Box::new(rn)), out))
    }

    fn call(&mut self, name: &str, args: &[Expr], span: Span) -> Result<(TNode, Ty), DslError> {
        let arity = |expected: usize| -> Result<(), DslError> {
            if args.len() != expected {
                return Err(DslError::Arity {
                    span,
                    name: name.to_string(),
                    expected,
                    actual: args.len(),
                });
            }
            Ok(())
        };
        match name {
            "abs" => {
                arity(1)?;
                let (n, t) = self.node(&args[0])?;
                if t != Ty::Int {
                    return Err(type_err(args[0].span, "operand of abs", Ty::Int, t));
                }
                Ok((TNode::Abs(Box::new(n)), Ty::Int))
            }
            "pos" => {
                arity(2)?;
                let slot = self.sequence_slot(&args[0], "pos")?;
                let item = self.token_arg(&args[1], slot)?;
                Ok((
                    TNode::Pos {
                        slot,
                        item: Box::new(item),
                    },
                    Ty::Int,
                ))
            }
            "at" => {
                arity(2)?;
                let slot = self.sequence_slot(&args[0], "at")?;
                let (idx, t) = self.node(&args[1])?;
                if t != Ty::Int {
                    return Err(type_err(args[1].span, "index of at", Ty::Int, t));
                }
                Ok((
                    TNode::At {
                        slot,
                        index: Box::new(idx),
                    },
                    Ty::Str,
                ))
            }
            "val" => {
                arity(2)?;
                let slot = self.slot_of(&args[0])?;
                match self.domain.slots[slot].kind {
                    SlotKind::Assignment { .. } => {}
                    _ => {
                        return Err(DslError::Type {
                            span: args[0].span,
                            message: "val needs an assignment slot".into(),
                            expected: "assignment slot".into(),
                            actual: "other slot".into(),
                        })
                    }
                }
                let key = self.token_arg(&args[1], slot)?;
                Ok((
                    TNode::Val {
                        slot,
                        key: Box::new(key),
                    },
                    Ty::Str,
                ))
            }
            "member" => {
                arity(2)?;
                let coll = self.collection(&args[0])?;
                let (item, t) = self.node(&args[1])?;
                if t != Ty::Str {
                    return Err(type_err(args[1].span, "item of member", Ty::Str, t));
                }
                Ok((
                    TNode::Member {
                        coll,
                        item: Box::new(item),
                    },
                    Ty::Bool,
                ))
            }
            "size" => {
                arity(1)?;
                let coll = self.collection(&args[0])?;
                Ok((TNode::Size(coll), Ty::Int))
            }
            "before" => Err(DslError::Syntax {
                span,
                message: "before(...) is only valid as a collection".into(),
            }),
            other => Err(DslError::UnknownIdentifier {
                span,
                name: other.to_string(),
            }),
        }
    }

    fn quant(
        &mut self,
        kind: QuantKind,
        bound: Option<&Expr>,
        var: &str,
        coll: &Expr,
        body: &Expr,
    ) -> Result<(TNode, Ty), DslError> {
        let bound_node = match bound {
            Some(b) => {
                let (n, t) = self.node(b)?;
                if t != Ty::Int {
                    return Err(type_err(b.span, "quantifier bound", Ty::Int, t));
                }
                Some(Box::new(n))
            }
            None => None,
        };
        let (tcoll, var_ty) = self.collection_with_ty(coll)?;
        self.bind(var, var_ty, coll.span)?;
        let (body_node, body_ty) = self.node(body)?;
        self.scope.pop();
        if body_ty != Ty::Bool {
            return Err(type_err(body.span, "quantifier body", Ty::Bool, body_ty));
        }
        let out = if kind == QuantKind::Count {
            Ty::Int
        } else {
            Ty::Bool
        };
        Ok((
            TNode::Quant {
                kind,
                bound: bound_node,
                coll: tcoll,
                body: Box::new(body_node),
            },
            out,
        ))
    }

    fn bind(&mut self, var: &str, ty: Ty, span: Span) -> Result<(), DslError> {
        // Quantifier variables shadow nothing.
        let shadows = self.scope.iter().any(|(n, _)| n == var)
            || self.domain.slot(var).is_some()
            || self.domain.knows_token(var);
        if shadows {
            return Err(DslError::Syntax {
                span,
                message: format!("quantifier variable {var:?} shadows an existing name"),
            });
        }
        self.scope.push((var.to_string(), ty));
        Ok(())
    }

    fn collection(&mut self, expr: &Expr) -> Result<TColl, DslError> {
        Ok(self.collection_with_ty(expr)?.0)
    }

    fn collection_with_ty(&mut self, expr: &Expr) -> Result<(TColl, Ty), DslError> {
        match &expr.kind {
            ExprKind::Ident(name) => {
                let slot = self.slot_of(expr)?;
                let _ = name;
                Ok((TColl::Slot(slot), Ty::Str))
            }
            ExprKind::Call { name, args } if name == "before" => {
                if args.len() != 2 {
                    return Err(DslError::Arity {
                        span: expr.span,
                        name: name.clone(),
                        expected: 2,
                        actual: args.len(),
                    });
                }
                let slot = self.sequence_slot(&args[0], "before")?;
                let item = self.token_arg(&args[1], slot)?;
                Ok((
                    TColl::Before {
                        slot,
                        item: Box::new(item),
                    },
                    Ty::Str,
                ))
            }
            ExprKind::Range(lo, hi) => {
                let (ln, lt) = self.node(lo)?;
                let (hn, ht) = self.node(hi)?;
                if lt != Ty::Int {
                    return Err(type_err(lo.span, "range bound", Ty::Int, lt));
                }
                if ht != Ty::Int {
                    return Err(type_err(hi.span, "range bound", Ty::Int, ht));
                }
                Ok((TColl::Range(Box::new(ln), Box::new(hn)), Ty::Int))
            }
            _ => Err(DslError::Syntax {
                span: expr.span,
                message: "expected a slot, before(...), or an integer range".into(),
            }),
        }
    }

    /// Resolves an argument that must name a slot.
    fn slot_of(&mut self, expr: &Expr) -> Result<usize, DslError> {
        let ExprKind::Ident(name) = &expr.kind else {
            return Err(DslError::Syntax {
                span: expr.span,
                message: "expected a slot name".into(),
            });
        };
        let Some((idx, _)) = self.domain.slot(name) else {
            return Err(DslError::UnknownIdentifier {
                span: expr.span,
                name: name.clone(),
            });
        };
        self.slots.insert(idx);
        Ok(idx)
    }

    fn sequence_slot(&mut self, expr: &Expr, func: &str) -> Result<usize, DslError> {
        let idx = self.slot_of(expr)?;
        match self.domain.slots[idx].kind {
            SlotKind::Permutation { .. } => Ok(idx),
            _ => Err(DslError::Type {
                span: expr.span,
                message: format!("{func} needs a sequence slot"),
                expected: "permutation slot".into(),
                actual: "other slot".into(),
            }),
        }
    }

    /// Checks a token argument; literal tokens must be in the slot's universe.
    fn token_arg(&mut self, expr: &Expr, slot: usize) -> Result<TNode, DslError> {
        let (node, ty) = self.node(expr)?;
        if ty != Ty::Str {
            return Err(type_err(expr.span, "token argument", Ty::Str, ty));
        }
        if let TNode::Str(tok) = &node {
            let kind = &self.domain.slots[slot].kind;
            let in_universe = match kind {
                SlotKind::Assignment { keys, .. } => keys.iter().any(|k| k == tok),
                other => other.universe().contains(&tok.as_str()),
            };
            if !in_universe {
                return Err(DslError::Type {
                    span: expr.span,
                    message: format!(
                        "token {tok:?} is not in the universe of slot {:?}",
                        self.domain.slots[slot].name
                    ),
                    expected: "slot token".into(),
                    actual: "foreign token".into(),
                });
            }
        }
        Ok(node)
    }
}
