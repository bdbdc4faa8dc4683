use super::check::{TColl, TNode, TypedExpr};
use super::{BinOp, QuantKind};
use crate::domain::{Arrangement, DomainSpec, SlotKind, SlotValue};

/// Evaluates a checked constraint on an arrangement. Total and pure: missing
/// or mismatched bindings evaluate to neutral values (position 0, empty
/// token, empty collection) instead of failing.
pub fn eval(expr: &TypedExpr, domain: &DomainSpec, arrangement: &Arrangement) -> bool {
    let mut cx = Ctx {
        domain,
        arrangement,
        env: Vec::new(),
    };
    match cx.node(&expr.root) {
        Val::B(b) => b,
        _ => unreachable!("checker guarantees a boolean root"),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    B(bool),
    I(i64),
    S(String),
}

impl Val {
    fn as_bool(&self) -> bool {
        match self {
            Val::B(b) => *b,
            _ => false,
        }
    }

    fn as_int(&self) -> i64 {
        match self {
            Val::I(v) => *v,
            _ => 0,
        }
    }

    fn as_str(&self) -> &str {
        match self {
            Val::S(s) => s,
            _ => "",
        }
    }
}

struct Ctx<'a> {
    domain: &'a DomainSpec,
    arrangement: &'a Arrangement,
    env: Vec<Val>,
}

impl<'a> Ctx<'a> {
    fn binding(&self, slot: usize) -> Option<&'a SlotValue> {
        let name = &self.domain.slots[slot].name;
        self.arrangement.get(name)
    }

    fn node(&mut self, n: &TNode) -> Val {
        match n {
            TNode::Bool(b) => Val::B(*b),
            TNode::Int(v) => Val::I(*v),
            TNode::Str(s) => Val::S(s.clone()),
            TNode::Var(idx) => self.env.get(*idx).cloned().unwrap_or(Val::I(0)),
            TNode::ScalarSlot(slot) => match self.binding(*slot) {
                Some(SlotValue::Atom(s)) => Val::S(s.clone()),
                _ => Val::S(String::new()),
            },
            TNode::Not(inner) => Val::B(!self.node(inner).as_bool()),
            TNode::Abs(inner) => Val::I(self.node(inner).as_int().saturating_abs()),
            TNode::Binary(op, l, r) => self.binary(*op, l, r),
            TNode::Quant {
                kind,
                bound,
                coll,
                body,
            } => self.quant(*kind, bound.as_deref(), coll, body),
            TNode::Pos { slot, item } => {
                let item = self.node(item);
                let pos = match self.binding(*slot) {
                    Some(SlotValue::Seq(seq)) => seq
                        .iter()
                        .position(|t| t == item.as_str())
                        .map(|i| i as i64 + 1)
                        .unwrap_or(0),
                    _ => 0,
                };
                Val::I(pos)
            }
            TNode::At { slot, index } => {
                let idx = self.node(index).as_int();
                let token = match self.binding(*slot) {
                    Some(SlotValue::Seq(seq)) if idx >= 1 && (idx as usize) <= seq.len() => {
                        seq[idx as usize - 1].clone()
                    }
                    _ => String::new(),
                };
                Val::S(token)
            }
            TNode::Val { slot, key } => {
                let key = self.node(key);
                let value = match self.binding(*slot) {
                    Some(SlotValue::Map(map)) => {
                        map.get(key.as_str()).cloned().unwrap_or_default()
                    }
                    _ => String::new(),
                };
                Val::S(value)
            }
            TNode::Member { coll, item } => {
                let item = self.node(item);
                let members = self.tokens_of(coll);
                Val::B(members.iter().any(|t| match t {
                    Val::S(s) => s == item.as_str(),
                    _ => false,
                }))
            }
            TNode::Size(coll) => Val::I(self.tokens_of(coll).len() as i64),
        }
    }

    fn binary(&mut self, op: BinOp, l: &TNode, r: &TNode) -> Val {
        match op {
            BinOp::And => Val::B(self.node(l).as_bool() && self.node(r).as_bool()),
            BinOp::Or => Val::B(self.node(l).as_bool() || self.node(r).as_bool()),
            BinOp::Implies => Val::B(!self.node(l).as_bool() || self.node(r).as_bool()),
            BinOp::Iff => Val::B(self.node(l).as_bool() == self.node(r).as_bool()),
            BinOp::Eq => Val::B(self.node(l) == self.node(r)),
            BinOp::Ne => Val::B(self.node(l) != self.node(r)),
            BinOp::Lt => Val::B(self.node(l).as_int() < self.node(r).as_int()),
            BinOp::Le => Val::B(self.node(l).as_int() <= self.node(r).as_int()),
            BinOp::Gt => Val::B(self.node(l).as_int() > self.node(r).as_int()),
            BinOp::Ge => Val::B(self.node(l).as_int() >= self.node(r).as_int()),
            BinOp::Add => Val::I(self.node(l).as_int().saturating_add(self.node(r).as_int())),
            BinOp::Sub => Val::I(self.node(l).as_int().saturating_sub(self.node(r).as_int())),
        }
    }

    fn quant(
        &mut self,
        kind: QuantKind,
        bound: Option<&TNode>,
        coll: &TColl,
        body: &TNode,
    ) -> Val {
        let bound = bound.map(|b| self.node(b).as_int());
        let members = self.tokens_of(coll);
        let mut matched: i64 = 0;
        let mut total: i64 = 0;
        for value in members {
            total += 1;
            self.env.push(value);
            let hit = self.node(body).as_bool();
            self.env.pop();
            if hit {
                matched += 1;
            }
        }
        match kind {
            QuantKind::All => Val::B(matched == total),
            QuantKind::Exists => Val::B(matched > 0),
            QuantKind::Exactly => Val::B(matched == bound.unwrap_or(0)),
            QuantKind::AtLeast => Val::B(matched >= bound.unwrap_or(0)),
            QuantKind::AtMost => Val::B(matched <= bound.unwrap_or(0)),
            QuantKind::Count => Val::I(matched),
        }
    }

    fn tokens_of(&mut self, coll: &TColl) -> Vec<Val> {
        match coll {
            TColl::Slot(slot) => match self.binding(*slot) {
                Some(SlotValue::Seq(seq)) => {
                    seq.iter().map(|t| Val::S(t.clone())).collect()
                }
                Some(SlotValue::Set(set)) => {
                    set.iter().map(|t| Val::S(t.clone())).collect()
                }
                Some(SlotValue::Map(map)) => {
                    // Iterate declared key order, not map order.
                    match &self.domain.slots[*slot].kind {
                        SlotKind::Assignment { keys, .. } => {
                            keys.iter().map(|k| Val::S(k.clone())).collect()
                        }
                        _ => map.keys().map(|k| Val::S(k.clone())).collect(),
                    }
                }
                Some(SlotValue::Atom(s)) => vec![Val::S(s.clone())],
                None => Vec::new(),
            },
            TColl::Before { slot, item } => {
                let item = self.node(item);
                match self.binding(*slot) {
                    Some(SlotValue::Seq(seq)) => {
                        let cut = seq
                            .iter()
                            .position(|t| t == item.as_str())
                            .unwrap_or(0);
                        seq[..cut].iter().map(|t| Val::S(t.clone())).collect()
                    }
                    _ => Vec::new(),
                }
            }
            TColl::Range(lo, hi) => {
                let lo = self.node(lo).as_int();
                let hi = self.node(hi).as_int();
                (lo..=hi).map(Val::I).collect()
            }
        }
    }
}
