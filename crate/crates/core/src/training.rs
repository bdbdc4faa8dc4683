//! Verifier-gated rejection sampling and assembly of SFT and DPO datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::PuzzleSpec;
use crate::harness::{render_prompt, verify, Extraction, Verdict};
use crate::llm::{Client, CompletionRequest, SAMPLING_TEMPERATURE};
use crate::synthesis::Templates;

/// Default number of sampling rounds per puzzle.
pub const DEFAULT_ROUNDS: u32 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("puzzle {0} has fewer than 2 constraints; excluded from sampling")]
    SingleConstraint(String),
}

/// All sampled responses for one puzzle, each with its verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    pub puzzle_id: String,
    pub prompt: String,
    pub responses: Vec<(String, Verdict)>,
}

impl SampleSet {
    fn first_correct(&self) -> Option<&(String, Verdict)> {
        self.responses.iter().find(|(_, v)| v.correct)
    }

    fn first_incorrect(&self) -> Option<&(String, Verdict)> {
        self.responses.iter().find(|(_, v)| !v.correct)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
    pub puzzle_id: String,
    pub model: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpoRecord {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub puzzle_id: String,
}

/// Draws `n` completions for one puzzle at sampling temperature and verifies
/// each immediately. Single-constraint puzzles are excluded up front.
pub fn sample(
    client: &Client,
    puzzle: &PuzzleSpec,
    templates: &Templates,
    n: u32,
) -> Result<SampleSet, TrainError> {
    if puzzle.constraints.len() < 2 {
        return Err(TrainError::SingleConstraint(puzzle.id.clone()));
    }
    let prompt = render_prompt(puzzle, templates);
    let request = CompletionRequest::user(&client.model, &prompt, SAMPLING_TEMPERATURE);
    let mut responses = Vec::with_capacity(n as usize);
    for round in 1..=n {
        let (text, verdict) = match client.complete(&request) {
            Ok(text) => {
                let v = verify(&text, puzzle);
                (text, v)
            }
            Err(e) => (
                String::new(),
                Verdict {
                    puzzle_id: puzzle.id.clone(),
                    trial: 0,
                    extraction: Extraction::None,
                    format: Default::default(),
                    constraint_results: Vec::new(),
                    correct: false,
                    flagged: Some(e.to_string()),
                },
            ),
        };
        let mut verdict = verdict;
        verdict.trial = round;
        responses.push((text, verdict));
    }
    Ok(SampleSet {
        puzzle_id: puzzle.id.clone(),
        prompt,
        responses,
    })
}

/// How records are selected from each eligible sample set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPolicy {
    /// One record per set: the first eligible response(s) by sampling order.
    First,
    /// Every eligible response (SFT) or correct×incorrect pair (DPO).
    All,
    /// One record per set, chosen with the given seed.
    Random(u64),
}

#[derive(Debug, Default)]
pub struct BuildCounts {
    /// Sets dropped for lacking a correct (SFT) or contrastive (DPO) side.
    pub dropped: u64,
}

/// Assembles SFT records from sample sets; sets without any verified-correct
/// response are dropped and counted. Sets are processed in puzzle-id order.
pub fn build_sft(
    sets: &[SampleSet],
    model: &str,
    policy: SelectionPolicy,
) -> (Vec<SftRecord>, BuildCounts) {
    let mut ordered: Vec<&SampleSet> = sets.iter().collect();
    ordered.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    let mut records = Vec::new();
    let mut counts = BuildCounts::default();
    for set in ordered {
        let correct: Vec<&(String, Verdict)> =
            set.responses.iter().filter(|(_, v)| v.correct).collect();
        if correct.is_empty() {
            counts.dropped += 1;
            continue;
        }
        let make = |(text, _): &(String, Verdict)| SftRecord {
            prompt: set.prompt.clone(),
            completion: text.clone(),
            puzzle_id: set.puzzle_id.clone(),
            model: model.to_string(),
        };
        match policy {
            SelectionPolicy::First => records.push(make(correct[0])),
            SelectionPolicy::All => records.extend(correct.iter().map(|r| make(r))),
            SelectionPolicy::Random(seed) => {
                let mut rng = seeded(seed, &set.puzzle_id);
                records.push(make(correct[rng.gen_range(0..correct.len())]));
            }
        }
    }
    (records, counts)
}

/// Assembles DPO pairs; sets lacking either a correct or an incorrect
/// response have no contrastive pair and are dropped and counted.
pub fn build_dpo(sets: &[SampleSet], policy: SelectionPolicy) -> (Vec<DpoRecord>, BuildCounts) {
    let mut ordered: Vec<&SampleSet> = sets.iter().collect();
    ordered.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    let mut records = Vec::new();
    let mut counts = BuildCounts::default();
    for set in ordered {
        if set.first_correct().is_none() || set.first_incorrect().is_none() {
            counts.dropped += 1;
            continue;
        }
        let make = |chosen: &str, rejected: &str| DpoRecord {
            prompt: set.prompt.clone(),
            chosen: chosen.to_string(),
            rejected: rejected.to_string(),
            puzzle_id: set.puzzle_id.clone(),
        };
        match policy {
            SelectionPolicy::First => {
                records.push(make(
                    &set.first_correct().unwrap().0,
                    &set.first_incorrect().unwrap().0,
                ));
            }
            SelectionPolicy::All => {
                for (chosen, cv) in &set.responses {
                    if !cv.correct {
                        continue;
                    }
                    for (rejected, rv) in &set.responses {
                        if !rv.correct {
                            records.push(make(chosen, rejected));
                        }
                    }
                }
            }
            SelectionPolicy::Random(seed) => {
                let correct: Vec<&str> = set
                    .responses
                    .iter()
                    .filter(|(_, v)| v.correct)
                    .map(|(t, _)| t.as_str())
                    .collect();
                let incorrect: Vec<&str> = set
                    .responses
                    .iter()
                    .filter(|(_, v)| !v.correct)
                    .map(|(t, _)| t.as_str())
                    .collect();
                let mut rng = seeded(seed, &set.puzzle_id);
                records.push(make(
                    correct[rng.gen_range(0..correct.len())],
                    incorrect[rng.gen_range(0..incorrect.len())],
                ));
            }
        }
    }
    (records, counts)
}

fn seeded(seed: u64, puzzle_id: &str) -> ChaCha8Rng {
    use sha2::Digest;
    let digest = sha2::Sha256::digest(puzzle_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockBackend;
    use crate::testkit::islands_puzzle;

    const GOOD: &str = r#"["G", "E", "I", "F", "H"]"#;
    const GOOD2: &str = r#"["I", "E", "G", "F", "H"]"#;
    const BAD: &str = r#"["I", "G", "E", "F", "H"]"#;

    fn sampled(responses: &[&str]) -> SampleSet {
        let client = Client::mock(MockBackend::new().otherwise(responses));
        sample(
            &client,
            &islands_puzzle(),
            &Templates::builtin(),
            responses.len() as u32,
        )
        .unwrap()
    }

    #[test]
    fn sample_verifies_each_round() {
        let set = sampled(&[GOOD, BAD, GOOD, BAD, BAD, GOOD, BAD, BAD]);
        assert_eq!(set.responses.len(), 8);
        let correct = set.responses.iter().filter(|(_, v)| v.correct).count();
        assert_eq!(correct, 3);
        // Round indices recorded in order.
        assert_eq!(set.responses[7].1.trial, 8);
    }

    #[test]
    fn single_constraint_puzzle_is_excluded() {
        let mut puzzle = islands_puzzle();
        puzzle.constraints.truncate(1);
        let client = Client::mock(MockBackend::new().otherwise(&[GOOD]));
        assert_eq!(
            sample(&client, &puzzle, &Templates::builtin(), 8).unwrap_err(),
            TrainError::SingleConstraint("islands".into())
        );
    }

    #[test]
    fn backend_error_rounds_are_flagged_incorrect() {
        // Two scripted responses, then the queue would repeat; use a rule
        // that rate-limits past the retry budget instead.
        let backend = MockBackend::new().otherwise(&[
            GOOD,
            crate::llm::MOCK_RATE_LIMIT,
            crate::llm::MOCK_RATE_LIMIT,
            crate::llm::MOCK_RATE_LIMIT,
            crate::llm::MOCK_RATE_LIMIT,
            crate::llm::MOCK_RATE_LIMIT,
            crate::llm::MOCK_RATE_LIMIT,
            crate::llm::MOCK_RATE_LIMIT,
        ]);
        let client = Client::mock(backend);
        let set = sample(&client, &islands_puzzle(), &Templates::builtin(), 2).unwrap();
        assert!(set.responses[0].1.correct);
        assert!(!set.responses[1].1.correct);
        assert!(set.responses[1].1.flagged.is_some());
    }

    #[test]
    fn sft_takes_first_correct_and_drops_hopeless_sets() {
        let with_correct = sampled(&[BAD, GOOD2, GOOD]);
        let mut hopeless = sampled(&[BAD, BAD]);
        hopeless.puzzle_id = "hopeless".into();
        let (records, counts) =
            build_sft(&[with_correct, hopeless], "m", SelectionPolicy::First);
        assert_eq!(records.len(), 1);
        assert_eq!(counts.dropped, 1);
        // First correct by sampling order, and it re-verifies.
        assert_eq!(records[0].completion, GOOD2);
        assert!(verify(&records[0].completion, &islands_puzzle()).correct);
    }

    #[test]
    fn sft_all_policy_keeps_every_correct() {
        let set = sampled(&[BAD, GOOD2, GOOD, GOOD]);
        let (records, _) = build_sft(&[set], "m", SelectionPolicy::All);
        assert_eq!(records.len(), 3);
    }

    #[test]
    fn dpo_pairs_first_correct_with_first_incorrect() {
        let set = sampled(&[BAD, GOOD2, GOOD, BAD]);
        let (records, counts) = build_dpo(&[set], SelectionPolicy::First);
        assert_eq!(records.len(), 1);
        assert_eq!(counts.dropped, 0);
        assert_eq!(records[0].chosen, GOOD2);
        assert_eq!(records[0].rejected, BAD);
        assert!(verify(&records[0].chosen, &islands_puzzle()).correct);
        assert!(!verify(&records[0].rejected, &islands_puzzle()).correct);
    }

    #[test]
    fn dpo_drops_one_sided_sets() {
        let mut all_correct = sampled(&[GOOD, GOOD2]);
        all_correct.puzzle_id = "all-correct".into();
        let mut all_wrong = sampled(&[BAD, BAD]);
        all_wrong.puzzle_id = "all-wrong".into();
        let (records, counts) = build_dpo(&[all_correct, all_wrong], SelectionPolicy::First);
        assert!(records.is_empty());
        assert_eq!(counts.dropped, 2);
    }

    #[test]
    fn dpo_all_policy_emits_every_pair() {
        let set = sampled(&[BAD, GOOD2, GOOD, BAD]);
        let (records, _) = build_dpo(&[set], SelectionPolicy::All);
        assert_eq!(records.len(), 4); // 2 correct × 2 incorrect
    }

    #[test]
    fn random_policy_is_seed_deterministic() {
        let set = sampled(&[BAD, GOOD2, GOOD, BAD]);
        let (a, _) = build_dpo(std::slice::from_ref(&set), SelectionPolicy::Random(5));
        let (b, _) = build_dpo(std::slice::from_ref(&set), SelectionPolicy::Random(5));
        assert_eq!(a[0].chosen, b[0].chosen);
        assert_eq!(a[0].rejected, b[0].rejected);
    }

    #[test]
    fn empty_input_builds_empty_outputs() {
        let (sft, _) = build_sft(&[], "m", SelectionPolicy::First);
        let (dpo, _) = build_dpo(&[], SelectionPolicy::First);
        assert!(sft.is_empty());
        assert!(dpo.is_empty());
    }
}
