//! Domain types shared by every pipeline stage: puzzles, domains,
//! arrangements, and the canonical JSON schema derived from a domain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard ceiling on the number of candidate arrangements a domain may span.
pub const DEFAULT_DOMAIN_CAP: u64 = 1_000_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("domain too large: {size} candidates exceeds cap {cap}")]
    DomainTooLarge { size: u128, cap: u64 },
    #[error("invalid domain: {0}")]
    Invalid(String),
}

/// The value structure of one puzzle slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    /// An ordering of all `items`; bound to a list.
    Permutation { items: Vec<String> },
    /// A total map from `keys` into `values`; bound to an object.
    Assignment { keys: Vec<String>, values: Vec<String> },
    /// A fixed-size subset of `items`; bound to a set.
    Subset { items: Vec<String>, cardinality: usize },
    /// A single choice among `values`; bound to a string.
    Scalar { values: Vec<String> },
}

impl SlotKind {
    /// Number of possible values this slot alone can take.
    pub fn cardinality(&self) -> u128 {
        match self {
            SlotKind::Permutation { items } => factorial(items.len()),
            SlotKind::Assignment { keys, values } => {
                (values.len() as u128).pow(keys.len() as u32)
            }
            SlotKind::Subset { items, cardinality } => binomial(items.len(), *cardinality),
            SlotKind::Scalar { values } => values.len() as u128,
        }
    }

    /// Tokens that may appear in values of this slot.
    pub fn universe(&self) -> Vec<&str> {
        match self {
            SlotKind::Permutation { items } | SlotKind::Subset { items, .. } => {
                items.iter().map(String::as_str).collect()
            }
            SlotKind::Assignment { keys, values } => keys
                .iter()
                .chain(values.iter())
                .map(String::as_str)
                .collect(),
            SlotKind::Scalar { values } => values.iter().map(String::as_str).collect(),
        }
    }

    fn validate(&self, slot: &str) -> Result<(), DomainError> {
        let err = |m: String| Err(DomainError::Invalid(m));
        match self {
            SlotKind::Permutation { items } => {
                if items.is_empty() {
                    return err(format!("slot {slot}: permutation has no items"));
                }
                if !all_distinct(items) {
                    return err(format!("slot {slot}: permutation items not distinct"));
                }
            }
            SlotKind::Assignment { keys, values } => {
                if keys.is_empty() || values.is_empty() {
                    return err(format!("slot {slot}: assignment needs keys and values"));
                }
                if !all_distinct(keys) {
                    return err(format!("slot {slot}: assignment keys not distinct"));
                }
            }
            SlotKind::Subset { items, cardinality } => {
                if !all_distinct(items) {
                    return err(format!("slot {slot}: subset items not distinct"));
                }
                if *cardinality == 0 || *cardinality > items.len() {
                    return err(format!(
                        "slot {slot}: subset cardinality {cardinality} out of range 1..={}",
                        items.len()
                    ));
                }
            }
            SlotKind::Scalar { values } => {
                if values.is_empty() {
                    return err(format!("slot {slot}: scalar has no values"));
                }
            }
        }
        Ok(())
    }
}

fn all_distinct(items: &[String]) -> bool {
    let set: BTreeSet<&str> = items.iter().map(String::as_str).collect();
    set.len() == items.len()
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub kind: SlotKind,
}

/// An ordered list of named slots; the full domain space is the cartesian
/// product of the per-slot value spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub slots: Vec<Slot>,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.slots.is_empty() {
            return Err(DomainError::Invalid("domain has no slots".into()));
        }
        let mut names = BTreeSet::new();
        for slot in &self.slots {
            if slot.name.is_empty() {
                return Err(DomainError::Invalid("slot with empty name".into()));
            }
            if !names.insert(slot.name.as_str()) {
                return Err(DomainError::Invalid(format!(
                    "duplicate slot name {}",
                    slot.name
                )));
            }
            slot.kind.validate(&slot.name)?;
        }
        Ok(())
    }

    /// Total number of candidate arrangements, or `DomainTooLarge` past `cap`.
    pub fn size(&self, cap: u64) -> Result<u64, DomainError> {
        let mut total: u128 = 1;
        for slot in &self.slots {
            total = total.saturating_mul(slot.kind.cardinality());
            if total > cap as u128 {
                return Err(DomainError::DomainTooLarge { size: total, cap });
            }
        }
        Ok(total as u64)
    }

    pub fn slot(&self, name: &str) -> Option<(usize, &Slot)> {
        self.slots
            .iter()
            .enumerate()
            .find(|(_, s)| s.name == name)
    }

    /// True if `token` appears in any slot's token universe.
    pub fn knows_token(&self, token: &str) -> bool {
        self.slots
            .iter()
            .any(|s| s.kind.universe().contains(&token))
    }

    pub fn schema(&self) -> ArrangementSchema {
        ArrangementSchema {
            fields: self
                .slots
                .iter()
                .map(|s| FieldSchema {
                    name: s.name.clone(),
                    shape: Shape::from_kind(&s.kind),
                })
                .collect(),
        }
    }
}

/// The bound value of one slot inside an arrangement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotValue {
    Seq(Vec<String>),
    Map(BTreeMap<String, String>),
    Set(BTreeSet<String>),
    Atom(String),
}

/// A concrete assignment of every puzzle slot, proposed as a solution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arrangement {
    pub bindings: BTreeMap<String, SlotValue>,
}

impl Arrangement {
    pub fn get(&self, slot: &str) -> Option<&SlotValue> {
        self.bindings.get(slot)
    }
}

/// JSON shape of one schema field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Array holding a permutation of `universe`.
    TokenList { universe: Vec<String> },
    /// Object with exactly `keys`, each value drawn from `values`.
    TokenMap { keys: Vec<String>, values: Vec<String> },
    /// Array of `cardinality` distinct tokens from `universe`.
    TokenSet { universe: Vec<String>, cardinality: usize },
    /// Single string drawn from `universe`.
    Token { universe: Vec<String> },
}

impl Shape {
    fn from_kind(kind: &SlotKind) -> Shape {
        match kind {
            SlotKind::Permutation { items } => Shape::TokenList {
                universe: items.clone(),
            },
            SlotKind::Assignment { keys, values } => Shape::TokenMap {
                keys: keys.clone(),
                values: values.clone(),
            },
            SlotKind::Subset { items, cardinality } => Shape::TokenSet {
                universe: items.clone(),
                cardinality: *cardinality,
            },
            SlotKind::Scalar { values } => Shape::Token {
                universe: values.clone(),
            },
        }
    }

    fn to_kind(&self) -> SlotKind {
        match self {
            Shape::TokenList { universe } => SlotKind::Permutation {
                items: universe.clone(),
            },
            Shape::TokenMap { keys, values } => SlotKind::Assignment {
                keys: keys.clone(),
                values: values.clone(),
            },
            Shape::TokenSet {
                universe,
                cardinality,
            } => SlotKind::Subset {
                items: universe.clone(),
                cardinality: *cardinality,
            },
            Shape::Token { universe } => SlotKind::Scalar {
                values: universe.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub shape: Shape,
}

/// Canonical JSON layout for arrangements of a domain. A single-slot domain
/// maps to that slot's bare value; multi-slot domains map to an object keyed
/// by slot name. The derivation is bijective: `schema.domain()` reproduces
/// the originating `DomainSpec`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrangementSchema {
    pub fields: Vec<FieldSchema>,
}

impl ArrangementSchema {
    pub fn domain(&self) -> DomainSpec {
        DomainSpec {
            slots: self
                .fields
                .iter()
                .map(|f| Slot {
                    name: f.name.clone(),
                    kind: f.shape.to_kind(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatViolation {
    /// Slot name, or `$` for the top-level value.
    pub path: String,
    pub message: String,
}

/// Outcome of the format check; an empty violation list means conformant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatReport {
    pub violations: Vec<FormatViolation>,
}

impl FormatReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(FormatViolation {
            path: path.to_string(),
            message: message.into(),
        });
    }
}

/// Checks a candidate JSON value against the schema, reporting every
/// violation. On a clean report the parsed [`Arrangement`] is returned.
pub fn conforms(
    candidate: &serde_json::Value,
    schema: &ArrangementSchema,
) -> (FormatReport, Option<Arrangement>) {
    let mut report = FormatReport::default();
    let mut bindings = BTreeMap::new();

    if schema.fields.len() == 1 {
        let field = &schema.fields[0];
        if let Some(v) = check_field(candidate, field, &mut report) {
            bindings.insert(field.name.clone(), v);
        }
    } else {
        let Some(obj) = candidate.as_object() else {
            report.push("$", "expected a JSON object keyed by slot name");
            return (report, None);
        };
        for field in &schema.fields {
            match obj.get(&field.name) {
                None => report.push(&field.name, "missing key"),
                Some(v) => {
                    if let Some(sv) = check_field(v, field, &mut report) {
                        bindings.insert(field.name.clone(), sv);
                    }
                }
            }
        }
    }

    if report.is_clean() {
        (report, Some(Arrangement { bindings }))
    } else {
        (report, None)
    }
}

fn check_field(
    value: &serde_json::Value,
    field: &FieldSchema,
    report: &mut FormatReport,
) -> Option<SlotValue> {
    let path = field.name.as_str();
    match &field.shape {
        Shape::TokenList { universe } => {
            let items = string_array(value, path, report)?;
            if items.len() != universe.len() {
                report.push(
                    path,
                    format!("length mismatch: expected {}, got {}", universe.len(), items.len()),
                );
                return None;
            }
            let mut ok = true;
            let mut seen = BTreeSet::new();
            for t in &items {
                if !universe.contains(t) {
                    report.push(path, format!("token out of range: {t:?}"));
                    ok = false;
                } else if !seen.insert(t.clone()) {
                    report.push(path, format!("duplicate token: {t:?}"));
                    ok = false;
                }
            }
            ok.then(|| SlotValue::Seq(items))
        }
        Shape::TokenMap { keys, values } => {
            let Some(obj) = value.as_object() else {
                report.push(path, "expected a JSON object");
                return None;
            };
            let mut map = BTreeMap::new();
            let mut ok = true;
            for k in keys {
                match obj.get(k).and_then(|v| v.as_str()) {
                    None => {
                        report.push(path, format!("missing or non-string entry for key {k:?}"));
                        ok = false;
                    }
                    Some(v) if !values.iter().any(|x| x == v) => {
                        report.push(path, format!("token out of range: {v:?}"));
                        ok = false;
                    }
                    Some(v) => {
                        map.insert(k.clone(), v.to_string());
                    }
                }
            }
            for k in obj.keys() {
                if !keys.contains(k) {
                    report.push(path, format!("unexpected key {k:?}"));
                    ok = false;
                }
            }
            ok.then(|| SlotValue::Map(map))
        }
        Shape::TokenSet {
            universe,
            cardinality,
        } => {
            let items = string_array(value, path, report)?;
            let set: BTreeSet<String> = items.iter().cloned().collect();
            let mut ok = true;
            if set.len() != items.len() {
                report.push(path, "duplicate token in set");
                ok = false;
            }
            if items.len() != *cardinality {
                report.push(
                    path,
                    format!("cardinality mismatch: expected {cardinality}, got {}", items.len()),
                );
                ok = false;
            }
            for t in &set {
                if !universe.contains(t) {
                    report.push(path, format!("token out of range: {t:?}"));
                    ok = false;
                }
            }
            ok.then(|| SlotValue::Set(set))
        }
        Shape::Token { universe } => {
            let Some(s) = value.as_str() else {
                report.push(path, "expected a JSON string");
                return None;
            };
            let s = s.trim();
            if !universe.iter().any(|x| x == s) {
                report.push(path, format!("token out of range: {s:?}"));
                return None;
            }
            Some(SlotValue::Atom(s.to_string()))
        }
    }
}

fn string_array(
    value: &serde_json::Value,
    path: &str,
    report: &mut FormatReport,
) -> Option<Vec<String>> {
    let Some(arr) = value.as_array() else {
        report.push(path, "expected a JSON array");
        return None;
    };
    let mut out = Vec::with_capacity(arr.len());
    for v in arr {
        match v.as_str() {
            Some(s) => out.push(s.trim().to_string()),
            None => {
                report.push(path, "expected string elements");
                return None;
            }
        }
    }
    Some(out)
}

/// Renders an arrangement in the JSON layout fixed by the schema.
pub fn arrangement_to_value(arr: &Arrangement, schema: &ArrangementSchema) -> serde_json::Value {
    let render = |field: &FieldSchema| -> serde_json::Value {
        match arr.get(&field.name) {
            Some(SlotValue::Seq(items)) => serde_json::json!(items),
            Some(SlotValue::Map(map)) => serde_json::json!(map),
            Some(SlotValue::Set(set)) => {
                serde_json::json!(set.iter().collect::<Vec<_>>())
            }
            Some(SlotValue::Atom(s)) => serde_json::json!(s),
            None => serde_json::Value::Null,
        }
    };
    if schema.fields.len() == 1 {
        render(&schema.fields[0])
    } else {
        let mut obj = serde_json::Map::new();
        for field in &schema.fields {
            obj.insert(field.name.clone(), render(field));
        }
        serde_json::Value::Object(obj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "CN")]
    Cn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    Reduce,
    Expand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: String,
    pub op: AugmentOp,
}

/// One logical constraint: its natural-language statement paired with the
/// DSL expression that decides it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    pub text: String,
    /// DSL source; parsed and type-checked against the puzzle's domain.
    pub expr: String,
}

/// The unit flowing through every stage of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleSpec {
    pub id: String,
    pub language: Language,
    pub background: String,
    pub constraints: Vec<Constraint>,
    pub domain: DomainSpec,
    pub schema: ArrangementSchema,
    /// A schema-conformant sample; it need not satisfy the constraints.
    pub example: Arrangement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<Lineage>,
}

impl PuzzleSpec {
    /// Structural validation: non-empty constraint list, valid domain,
    /// schema/domain agreement, and a schema-conformant example.
    /// Constraint expressions are checked separately by the DSL layer.
    pub fn validate(&self) -> Result<(), DomainError> {
        self.domain.validate()?;
        if self.constraints.is_empty() {
            return Err(DomainError::Invalid(format!(
                "puzzle {}: no constraints",
                self.id
            )));
        }
        if self.schema != self.domain.schema() {
            return Err(DomainError::Invalid(format!(
                "puzzle {}: schema does not match domain",
                self.id
            )));
        }
        let value = arrangement_to_value(&self.example, &self.schema);
        let (report, _) = conforms(&value, &self.schema);
        if !report.is_clean() {
            return Err(DomainError::Invalid(format!(
                "puzzle {}: example does not conform to schema: {:?}",
                self.id, report.violations
            )));
        }
        Ok(())
    }
}
