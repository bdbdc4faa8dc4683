//! Reusable fixtures and seeded generators for tests and examples: the two
//! reference puzzles exercised throughout the test suite, plus a random
//! puzzle generator for solver and augmentation property checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    Arrangement, Constraint, DomainSpec, Language, PuzzleSpec, Slot, SlotKind, SlotValue,
};

pub fn seq(items: &[&str]) -> SlotValue {
    SlotValue::Seq(items.iter().map(|s| s.to_string()).collect())
}

pub fn map(pairs: &[(&str, &str)]) -> SlotValue {
    SlotValue::Map(
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    )
}

fn tokens(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Five islands in a line, north to south.
pub fn islands_domain() -> DomainSpec {
    DomainSpec {
        slots: vec![Slot {
            name: "order".into(),
            kind: SlotKind::Permutation {
                items: tokens(&["E", "F", "G", "H", "I"]),
            },
        }],
    }
}

/// The islands puzzle: four adjacency/ordering constraints, two solutions.
pub fn islands_puzzle() -> PuzzleSpec {
    let domain = islands_domain();
    let schema = domain.schema();
    let constraints = [
        ("c1", "F is adjacent to H and is located north of H.",
         "pos(order, F) + 1 = pos(order, H)"),
        ("c2", "I is adjacent to E.",
         "abs(pos(order, I) - pos(order, E)) = 1"),
        ("c3", "G is located somewhere north of F.",
         "pos(order, G) < pos(order, F)"),
        ("c4", "G is adjacent to E.",
         "abs(pos(order, G) - pos(order, E)) = 1"),
    ];
    PuzzleSpec {
        id: "islands".into(),
        language: Language::En,
        background: "There are 5 volcanic islands, E, F, G, H, and I, located along the \
                     eastern coast of a country, arranged in a straight line from north to south."
            .into(),
        constraints: constraints
            .iter()
            .map(|(id, text, expr)| Constraint {
                id: id.to_string(),
                text: text.to_string(),
                expr: expr.to_string(),
            })
            .collect(),
        domain,
        schema,
        example: Arrangement {
            bindings: [("order".to_string(), seq(&["F", "H", "I", "E", "G"]))]
                .into_iter()
                .collect(),
        },
        lineage: None,
    }
}

/// Seven athletes: finish order plus a red/green outfit per athlete.
pub fn athletes_domain() -> DomainSpec {
    let names = ["S", "T", "U", "W", "X", "Y", "Z"];
    DomainSpec {
        slots: vec![
            Slot {
                name: "order".into(),
                kind: SlotKind::Permutation {
                    items: tokens(&names),
                },
            },
            Slot {
                name: "colors".into(),
                kind: SlotKind::Assignment {
                    keys: tokens(&names),
                    values: tokens(&["red", "green"]),
                },
            },
        ],
    }
}

/// The sample arrangement shown alongside the athletes puzzle; valid in
/// format but not a correct solution.
pub fn fig1_sample_arrangement() -> Arrangement {
    let mut bindings = BTreeMap::new();
    bindings.insert("order".to_string(), seq(&["T", "Y", "Z", "U", "W", "S", "X"]));
    bindings.insert(
        "colors".to_string(),
        map(&[
            ("S", "red"),
            ("T", "green"),
            ("U", "red"),
            ("W", "green"),
            ("X", "red"),
            ("Y", "green"),
            ("Z", "green"),
        ]),
    );
    Arrangement { bindings }
}

/// The athletes puzzle: five constraints over a 645,120-candidate domain.
pub fn athletes_puzzle() -> PuzzleSpec {
    let domain = athletes_domain();
    let schema = domain.schema();
    let constraints = [
        ("c1", "The athletes who reached the finish line consecutively do not all wear red outfits.",
         "all(i in 1..6, not (val(colors, at(order, i)) = \"red\" and val(colors, at(order, i + 1)) = \"red\"))"),
        ("c2", "Y reached the finish line at some point before T and W.",
         "pos(order, Y) < pos(order, T) and pos(order, Y) < pos(order, W)"),
        ("c3", "Among the athletes who reached the finish line before Y, exactly two wore red outfits.",
         "exactly(2, x in before(order, Y), val(colors, x) = \"red\")"),
        ("c4", "S is the sixth athlete to reach the finish line.",
         "pos(order, S) = 6"),
        ("c5", "Z reached the finish line at some point before U.",
         "pos(order, Z) < pos(order, U)"),
    ];
    PuzzleSpec {
        id: "athletes".into(),
        language: Language::En,
        background: "There are 7 athletes participating in the men's 5-kilometer final: \
                     S, T, U, W, X, Y, and Z. The athletes' outfits are either red or green, \
                     and no athletes reached the finish line simultaneously."
            .into(),
        constraints: constraints
            .iter()
            .map(|(id, text, expr)| Constraint {
                id: id.to_string(),
                text: text.to_string(),
                expr: expr.to_string(),
            })
            .collect(),
        domain,
        schema,
        example: fig1_sample_arrangement(),
        lineage: None,
    }
}

/// Deterministic random puzzle for property tests: a small traversable
/// domain with 2 to 5 type-correct constraints.
pub fn random_puzzle(seed: u64) -> PuzzleSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = random_domain(&mut rng);
    let schema = domain.schema();
    let n_constraints = rng.gen_range(2..=5);
    let constraints = (0..n_constraints)
        .map(|i| Constraint {
            id: format!("c{}", i + 1),
            text: format!("generated constraint {}", i + 1),
            expr: random_constraint(&mut rng, &domain),
        })
        .collect();
    let example = first_arrangement(&domain);
    PuzzleSpec {
        id: format!("rand-{seed}"),
        language: Language::En,
        background: format!("Randomly generated puzzle {seed}."),
        constraints,
        domain,
        schema,
        example,
        lineage: None,
    }
}

fn random_domain(rng: &mut ChaCha8Rng) -> DomainSpec {
    let letters = ["A", "B", "C", "D", "E", "F"];
    let mut slots = vec![Slot {
        name: "order".into(),
        kind: SlotKind::Permutation {
            items: tokens(&letters[..rng.gen_range(3..=5)]),
        },
    }];
    match rng.gen_range(0..3) {
        0 => {}
        1 => slots.push(Slot {
            name: "tags".into(),
            kind: SlotKind::Assignment {
                keys: tokens(&letters[..rng.gen_range(2..=3)]),
                values: tokens(&["on", "off"]),
            },
        }),
        _ => slots.push(Slot {
            name: "crew".into(),
            kind: SlotKind::Subset {
                items: tokens(&letters[..4]),
                cardinality: 2,
            },
        }),
    }
    DomainSpec { slots }
}

fn random_constraint(rng: &mut ChaCha8Rng, domain: &DomainSpec) -> String {
    let atom = random_atom(rng, domain);
    match rng.gen_range(0..4) {
        0 => atom,
        1 => format!("not ({atom})"),
        2 => format!("({atom}) or ({})", random_atom(rng, domain)),
        _ => format!("({atom}) implies ({})", random_atom(rng, domain)),
    }
}

fn random_atom(rng: &mut ChaCha8Rng, domain: &DomainSpec) -> String {
    let slot = &domain.slots[rng.gen_range(0..domain.slots.len())];
    match &slot.kind {
        SlotKind::Permutation { items } => {
            let a = &items[rng.gen_range(0..items.len())];
            let b = &items[rng.gen_range(0..items.len())];
            match rng.gen_range(0..4) {
                0 => format!("pos({0}, {a}) < pos({0}, {b})", slot.name),
                1 => format!("abs(pos({0}, {a}) - pos({0}, {b})) = 1", slot.name),
                2 => format!(
                    "pos({0}, {a}) = {1}",
                    slot.name,
                    rng.gen_range(1..=items.len())
                ),
                _ => format!(
                    "atleast(1, x in before({0}, {a}), x != {b})",
                    slot.name
                ),
            }
        }
        SlotKind::Assignment { keys, values } => {
            let k = &keys[rng.gen_range(0..keys.len())];
            let v = &values[rng.gen_range(0..values.len())];
            match rng.gen_range(0..2) {
                0 => format!("val({}, {k}) = \"{v}\"", slot.name),
                _ => format!(
                    "exactly({}, x in {}, val({}, x) = \"{v}\")",
                    rng.gen_range(0..=keys.len()),
                    slot.name,
                    slot.name
                ),
            }
        }
        SlotKind::Subset { items, .. } => {
            let a = &items[rng.gen_range(0..items.len())];
            format!("member({}, {a})", slot.name)
        }
        SlotKind::Scalar { values } => {
            let v = &values[rng.gen_range(0..values.len())];
            format!("{} = \"{v}\"", slot.name)
        }
    }
}

/// The canonically-first arrangement of a domain; used as a schema-valid
/// example for generated puzzles.
pub fn first_arrangement(domain: &DomainSpec) -> Arrangement {
    let mut bindings = BTreeMap::new();
    for slot in &domain.slots {
        let value = match &slot.kind {
            SlotKind::Permutation { items } => SlotValue::Seq(items.clone()),
            SlotKind::Assignment { keys, values } => SlotValue::Map(
                keys.iter()
                    .map(|k| (k.clone(), values[0].clone()))
                    .collect(),
            ),
            SlotKind::Subset { items, cardinality } => {
                SlotValue::Set(items.iter().take(*cardinality).cloned().collect())
            }
            SlotKind::Scalar { values } => SlotValue::Atom(values[0].clone()),
        };
        bindings.insert(slot.name.clone(), value);
    }
    Arrangement { bindings }
}
