//! Stage 3: difficulty augmentation. Reduction removes constraints along a
//! seeded random chain; expansion adds LLM-proposed constraints gated by
//! exhaustive solvability checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{arrangement_to_value, AugmentOp, Constraint, Lineage, PuzzleSpec};
use crate::dsl::{check, parse};
use crate::jsonx::extract_last_json;
use crate::llm::{Client, CompletionRequest, GENERATION_TEMPERATURE};
use crate::solver::{solve, SolutionSpace, SolveOptions};
use crate::synthesis::{compile_constraints, PromptTemplate, Templates};

/// Default number of expansion proposals requested per puzzle.
pub const DEFAULT_MAX_ATTEMPTS: u32 = 8;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("no cached solution space for puzzle {0}")]
    MissingSolutionSpace(String),
    #[error("puzzle {0} failed to solve: {1}")]
    Unsolved(String, String),
}

/// The audit trail of one augmentation step, accepted or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub parent: String,
    pub op: AugmentOp,
    /// Removed (reduce) or proposed (expand) constraint id; absent when the
    /// proposal never parsed far enough to get an id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_id: Option<String>,
    /// Solution count of the resulting puzzle, when its domain is traversable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_count: Option<u64>,
    pub accepted: bool,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Stable per-puzzle stream seed, so chains do not depend on batch order.
fn chain_seed(seed: u64, puzzle_id: &str) -> u64 {
    let digest = Sha256::digest(puzzle_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

/// Removes one uniformly chosen constraint per step until a single
/// constraint remains, yielding a chain of `k - 1` easier puzzles. Children
/// of a solvable puzzle stay solvable (their solution sets are supersets),
/// so no traversal is needed here.
pub fn reduce(puzzle: &PuzzleSpec, seed: u64) -> Vec<PuzzleSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(seed, &puzzle.id));
    let mut chain = Vec::new();
    let mut current = puzzle.clone();
    let mut step = 1;
    while current.constraints.len() > 1 {
        let victim = rng.gen_range(0..current.constraints.len());
        let mut child = current.clone();
        child.constraints.remove(victim);
        child.id = format!("{}-r{step}", puzzle.id);
        child.lineage = Some(Lineage {
            parent: current.id.clone(),
            op: AugmentOp::Reduce,
        });
        chain.push(child.clone());
        current = child;
        step += 1;
    }
    chain
}

/// Records the reduction chain with child solution counts where the domain
/// is traversable.
pub fn reduce_records(
    puzzle: &PuzzleSpec,
    chain: &[PuzzleSpec],
    options: &SolveOptions,
) -> Vec<AugmentationRecord> {
    chain
        .iter()
        .enumerate()
        .map(|(i, child)| {
            let parent = child
                .lineage
                .as_ref()
                .map(|l| l.parent.clone())
                .unwrap_or_else(|| puzzle.id.clone());
            let solution_count = compile_constraints(child)
                .ok()
                .and_then(|typed| solve(&child.domain, &typed, options).ok())
                .filter(|s| s.exhausted)
                .map(|s| s.solution_count);
            AugmentationRecord {
                parent,
                op: AugmentOp::Reduce,
                constraint_id: None,
                solution_count,
                accepted: true,
                attempt: i as u32 + 1,
                reason: None,
            }
        })
        .collect()
}

/// Outcome of expanding one puzzle.
#[derive(Debug, Default)]
pub struct Expansion {
    /// Each accepted constraint yields one new, strictly harder puzzle.
    pub puzzles: Vec<PuzzleSpec>,
    pub records: Vec<AugmentationRecord>,
}

/// Repeatedly asks the model for one additional constraint. A proposal is
/// accepted only when its expression type-checks and the tightened puzzle
/// still has at least one solution while having strictly fewer than before.
/// Stops after `max_attempts` proposals or when the solution space shrinks
/// to a single arrangement.
pub fn expand(
    client: &Client,
    puzzle: &PuzzleSpec,
    template: &PromptTemplate,
    max_attempts: u32,
    options: &SolveOptions,
) -> Result<Expansion, AugmentError> {
    let typed = compile_constraints(puzzle)
        .map_err(|e| AugmentError::Unsolved(puzzle.id.clone(), e.to_string()))?;
    let mut space = solve(&puzzle.domain, &typed, options)
        .map_err(|e| AugmentError::Unsolved(puzzle.id.clone(), e.to_string()))?;
    if space.solution_count == 0 {
        return Err(AugmentError::Unsolved(
            puzzle.id.clone(),
            "no solutions to tighten".into(),
        ));
    }

    let mut out = Expansion::default();
    let mut current = puzzle.clone();
    let mut accepted_count = 0;
    for attempt in 1..=max_attempts {
        if space.solution_count == 1 {
            break;
        }
        let prompt = template.render(&expansion_question(&current, &space));
        let request = CompletionRequest::user(&client.model, &prompt, GENERATION_TEMPERATURE);
        let mut record = AugmentationRecord {
            parent: current.id.clone(),
            op: AugmentOp::Expand,
            constraint_id: None,
            solution_count: None,
            accepted: false,
            attempt,
            reason: None,
        };
        let proposal = match client.complete(&request) {
            Ok(text) => text,
            Err(e) => {
                record.reason = Some(format!("backend error: {e}"));
                out.records.push(record);
                continue;
            }
        };
        let Some((text, expr)) = parse_proposal(&proposal) else {
            record.reason = Some("malformed proposal".into());
            out.records.push(record);
            continue;
        };
        let compiled = parse(&expr).and_then(|ast| check(&ast, &current.domain));
        let typed_new = match compiled {
            Ok(t) => t,
            Err(e) => {
                record.reason = Some(format!("expression rejected: {e}"));
                out.records.push(record);
                continue;
            }
        };
        let mut all_typed = compile_constraints(&current)
            .map_err(|e| AugmentError::Unsolved(current.id.clone(), e.to_string()))?;
        all_typed.push(typed_new);
        let tightened = solve(&current.domain, &all_typed, options)
            .map_err(|e| AugmentError::Unsolved(current.id.clone(), e.to_string()))?;
        record.solution_count = Some(tightened.solution_count);
        if tightened.solution_count == 0 {
            record.reason = Some("unsolvable with proposed constraint".into());
            out.records.push(record);
            continue;
        }
        if tightened.solution_count >= space.solution_count {
            record.reason = Some("solution count did not decrease".into());
            out.records.push(record);
            continue;
        }

        accepted_count += 1;
        let constraint_id = format!("c{}", current.constraints.len() + 1);
        record.constraint_id = Some(constraint_id.clone());
        record.accepted = true;
        out.records.push(record);

        let mut child = current.clone();
        child.constraints.push(Constraint {
            id: constraint_id,
            text,
            expr,
        });
        child.id = format!("{}-e{accepted_count}", puzzle.id);
        child.lineage = Some(Lineage {
            parent: current.id.clone(),
            op: AugmentOp::Expand,
        });
        out.puzzles.push(child.clone());
        current = child;
        space = tightened;
    }
    Ok(out)
}

/// The puzzle statement fed into the expansion template, including the
/// current solution space summary.
fn expansion_question(puzzle: &PuzzleSpec, space: &SolutionSpace) -> String {
    let mut q = puzzle.background.clone();
    q.push_str("\n\nCurrent constraints:\n");
    for (i, c) in puzzle.constraints.iter().enumerate() {
        q.push_str(&format!("({}) {}  [{}]\n", i + 1, c.text, c.expr));
    }
    q.push_str(&format!(
        "\nSolution space: {} of {} arrangements are valid.\n",
        space.solution_count, space.domain_count
    ));
    for sample in space.samples.iter().take(3) {
        let rendered = arrangement_to_value(sample, &puzzle.schema);
        q.push_str(&format!("Sample solution: {rendered}\n"));
    }
    q
}

fn parse_proposal(response: &str) -> Option<(String, String)> {
    let value = extract_last_json(response)?;
    let expr = value.get("expr")?.as_str()?.trim().to_string();
    let text = value
        .get("text")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .trim()
        .to_string();
    (!expr.is_empty()).then_some((text, expr))
}

/// Decade band index of a solution-space ratio: band `b` holds ratios in
/// `(10^-(b+1), 10^-b]`, so band 0 is `(0.1, 1]`, band 1 is `(0.01, 0.1]`,
/// and so on. Computed in integers to avoid rounding at the band edges.
pub fn ratio_band(solution_count: u64, domain_count: u64) -> u32 {
    const MAX_BAND: u32 = 18;
    if solution_count == 0 {
        return MAX_BAND;
    }
    let (n, d) = (solution_count as u128, domain_count as u128);
    let mut scale: u128 = 10;
    for band in 0..MAX_BAND {
        // r > 10^-(band+1)  ⇔  n · 10^(band+1) > d
        if n.saturating_mul(scale) > d {
            return band;
        }
        scale = scale.saturating_mul(10);
    }
    MAX_BAND
}

/// Histogram over (constraint count, ratio decade band).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DifficultyProfile {
    pub cells: BTreeMap<String, u64>,
}

impl DifficultyProfile {
    fn bump(&mut self, constraints: usize, band: u32) {
        *self
            .cells
            .entry(format!("{constraints}/{band}"))
            .or_insert(0) += 1;
    }

    pub fn count(&self, constraints: usize, band: u32) -> u64 {
        self.cells
            .get(&format!("{constraints}/{band}"))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.cells.values().sum()
    }
}

/// Buckets puzzles by difficulty axes; every puzzle must have a cached
/// solution space.
pub fn difficulty_profile(
    puzzles: &[PuzzleSpec],
    spaces: &BTreeMap<String, SolutionSpace>,
) -> Result<DifficultyProfile, AugmentError> {
    let mut profile = DifficultyProfile::default();
    for p in puzzles {
        let space = spaces
            .get(&p.id)
            .ok_or_else(|| AugmentError::MissingSolutionSpace(p.id.clone()))?;
        profile.bump(
            p.constraints.len(),
            ratio_band(space.solution_count, space.domain_count),
        );
    }
    Ok(profile)
}

/// Everything the `augment` command produces for one input set.
#[derive(Debug, Default)]
pub struct AugmentOutput {
    /// Roots plus all reduced and expanded descendants.
    pub puzzles: Vec<PuzzleSpec>,
    pub records: Vec<AugmentationRecord>,
}

/// Reduces then expands every puzzle. Puzzles are processed in id order;
/// per-puzzle seeds derive from (seed, id), so results are independent of
/// batch composition.
pub fn augment(
    client: &Client,
    puzzles: &[PuzzleSpec],
    templates: &Templates,
    seed: u64,
    max_attempts: u32,
    options: &SolveOptions,
) -> Result<AugmentOutput, AugmentError> {
    let mut roots: Vec<&PuzzleSpec> = puzzles.iter().collect();
    roots.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = AugmentOutput::default();
    for root in roots {
        out.puzzles.push(root.clone());
        let chain = reduce(root, seed);
        out.records
            .extend(reduce_records(root, &chain, options));
        out.puzzles.extend(chain);
        let template = &templates.get(root.language).expand;
        let expansion = expand(client, root, template, max_attempts, options)?;
        out.puzzles.extend(expansion.puzzles);
        out.records.extend(expansion.records);
    }
    Ok(out)
}
