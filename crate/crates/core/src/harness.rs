//! Evaluation harness: renders puzzle prompts, extracts candidate
//! arrangements from free-text model responses, verifies them against the
//! format and constraint checkers, and scores models over repeated trials.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::ratio_band;
use crate::domain::{
    arrangement_to_value, conforms, Arrangement, ArrangementSchema, FormatReport, PuzzleSpec,
    Shape,
};
use crate::dsl::eval;
use crate::jsonx::extract_last_json;
use crate::llm::{Client, CompletionRequest};
use crate::solver::{solve, SolveOptions};
use crate::synthesis::{compile_constraints, Templates};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    Found,
    None,
}

/// The graded outcome of one model response to one puzzle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub puzzle_id: String,
    pub trial: u32,
    pub extraction: Extraction,
    pub format: FormatReport,
    /// Every constraint's result is reported, even after the first failure,
    /// to support error analytics. Empty when no conformant candidate exists.
    pub constraint_results: Vec<(String, bool)>,
    pub correct: bool,
    /// Backend error for this response, if any; such responses grade
    /// incorrect but remain distinguishable from model failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<String>,
}

/// Aggregated model scores over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub model: String,
    pub dataset: String,
    pub trial_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the trial accuracies.
    pub std: f64,
    /// Accuracy per difficulty cell, keyed "constraint_count/ratio_band":
    /// (correct verdicts, total verdicts).
    pub buckets: BTreeMap<String, (u64, u64)>,
    pub temperature: f64,
    pub trials: u32,
}

/// Renders the evaluation prompt: background, numbered constraints, format
/// requirements, and the example tagged as not necessarily correct.
pub fn render_prompt(puzzle: &PuzzleSpec, templates: &Templates) -> String {
    let template = &templates.get(puzzle.language).eval;
    let mut constraints = String::new();
    for (i, c) in puzzle.constraints.iter().enumerate() {
        constraints.push_str(&format!("({}) {}\n", i + 1, c.text));
    }
    let example = arrangement_to_value(&puzzle.example, &puzzle.schema).to_string();
    template
        .text
        .replace("[[[background]]]", &puzzle.background)
        .replace("[[[constraints]]]", constraints.trim_end())
        .replace("[[[format]]]", &format_description(&puzzle.schema))
        .replace("[[[example]]]", &example)
}

/// Human-readable description of the required JSON answer layout.
pub fn format_description(schema: &ArrangementSchema) -> String {
    let shape_line = |shape: &Shape| match shape {
        Shape::TokenList { universe } => format!(
            "a JSON array arranging all of [{}] in order",
            universe.join(", ")
        ),
        Shape::TokenMap { keys, values } => format!(
            "a JSON object mapping each of [{}] to one of [{}]",
            keys.join(", "),
            values.join(", ")
        ),
        Shape::TokenSet {
            universe,
            cardinality,
        } => format!(
            "a JSON array of {cardinality} distinct tokens from [{}]",
            universe.join(", ")
        ),
        Shape::Token { universe } => format!("a JSON string, one of [{}]", universe.join(", ")),
    };
    if schema.fields.len() == 1 {
        shape_line(&schema.fields[0].shape)
    } else {
        let mut out = String::from("a JSON object with:\n");
        for field in &schema.fields {
            out.push_str(&format!("  \"{}\": {}\n", field.name, shape_line(&field.shape)));
        }
        out.trim_end().to_string()
    }
}

/// The last well-formed JSON value in the response, accepted only if it
/// conforms to the schema.
pub fn extract_candidate(response: &str, schema: &ArrangementSchema) -> Option<Arrangement> {
    let value = extract_last_json(response)?;
    conforms(&value, schema).1
}

/// Grades one response: extraction, then format check, then one result per
/// constraint. Nothing short-circuits; all constraint results are reported.
pub fn verify(response: &str, puzzle: &PuzzleSpec) -> Verdict {
    let mut verdict = Verdict {
        puzzle_id: puzzle.id.clone(),
        trial: 0,
        extraction: Extraction::None,
        format: FormatReport::default(),
        constraint_results: Vec::new(),
        correct: false,
        flagged: None,
    };
    let Some(value) = extract_last_json(response) else {
        return verdict;
    };
    verdict.extraction = Extraction::Found;
    let (report, arrangement) = conforms(&value, &puzzle.schema);
    verdict.format = report;
    let Some(arrangement) = arrangement else {
        return verdict;
    };
    let Ok(typed) = compile_constraints(puzzle) else {
        return verdict;
    };
    verdict.constraint_results = puzzle
        .constraints
        .iter()
        .zip(typed.iter())
        .map(|(c, t)| (c.id.clone(), eval(t, &puzzle.domain, &arrangement)))
        .collect();
    verdict.correct = verdict.constraint_results.iter().all(|(_, ok)| *ok);
    verdict
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub trials: u32,
    pub temperature: f64,
    pub dataset: String,
    pub solve: SolveOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            trials: 5,
            temperature: 0.2,
            dataset: "dataset".into(),
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug)]
pub struct EvalOutput {
    pub report: ScoreReport,
    /// All verdicts, ordered by (trial, puzzle id).
    pub verdicts: Vec<Verdict>,
}

/// Scores a model over the dataset: one completion per puzzle per trial,
/// accuracy aggregated as mean and population standard deviation, plus
/// difficulty-bucket breakdowns.
pub fn evaluate(
    client: &Client,
    puzzles: &[PuzzleSpec],
    templates: &Templates,
    config: &EvalConfig,
) -> Result<EvalOutput, EvalError> {
    if puzzles.is_empty() || config.trials == 0 {
        return Err(EvalError::EmptyDataset);
    }
    let mut ordered: Vec<&PuzzleSpec> = puzzles.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    // Difficulty cell per puzzle, where the domain is traversable.
    let mut cells: BTreeMap<&str, String> = BTreeMap::new();
    for p in &ordered {
        if let Ok(typed) = compile_constraints(p) {
            if let Ok(space) = solve(&p.domain, &typed, &config.solve) {
                cells.insert(
                    p.id.as_str(),
                    format!(
                        "{}/{}",
                        p.constraints.len(),
                        ratio_band(space.solution_count, space.domain_count)
                    ),
                );
            }
        }
    }

    let mut verdicts = Vec::new();
    let mut trial_accuracies = Vec::new();
    let mut buckets: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for trial in 1..=config.trials {
        let mut correct = 0u64;
        for p in &ordered {
            let prompt = render_prompt(p, templates);
            let request = CompletionRequest::user(&client.model, &prompt, config.temperature);
            let mut verdict = match client.complete(&request) {
                Ok(response) => verify(&response, p),
                Err(e) => Verdict {
                    puzzle_id: p.id.clone(),
                    trial,
                    extraction: Extraction::None,
                    format: FormatReport::default(),
                    constraint_results: Vec::new(),
                    correct: false,
                    flagged: Some(e.to_string()),
                },
            };
            verdict.trial = trial;
            if verdict.correct {
                correct += 1;
            }
            if let Some(cell) = cells.get(p.id.as_str()) {
                let entry = buckets.entry(cell.clone()).or_insert((0, 0));
                entry.1 += 1;
                if verdict.correct {
                    entry.0 += 1;
                }
            }
            verdicts.push(verdict);
        }
        trial_accuracies.push(correct as f64 / ordered.len() as f64);
    }

    let mean = trial_accuracies.iter().sum::<f64>() / trial_accuracies.len() as f64;
    let variance = trial_accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / trial_accuracies.len() as f64;
    Ok(EvalOutput {
        report: ScoreReport {
            model: client.model.clone(),
            dataset: config.dataset.clone(),
            trial_accuracies,
            mean,
            std: variance.sqrt(),
            buckets,
            temperature: config.temperature,
            trials: config.trials,
        },
        verdicts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

/// Renders the difficulty-bucket table from a score report.
pub fn render_report(report: &ScoreReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            out.push_str(&format!(
                "# {} on {}\n\nmean accuracy {:.3}, std {:.3} over {} trials\n\n",
                report.model, report.dataset, report.mean, report.std, report.trials
            ));
            out.push_str("| constraints | ratio band | correct | total | accuracy |\n");
            out.push_str("|---|---|---|---|---|\n");
            for (cell, (correct, total)) in &report.buckets {
                let (c, b) = cell.split_once('/').unwrap_or((cell.as_str(), "?"));
                out.push_str(&format!(
                    "| {c} | {b} | {correct} | {total} | {:.3} |\n",
                    *correct as f64 / (*total).max(1) as f64
                ));
            }
        }
        ReportFormat::Csv => {
            out.push_str("constraints,ratio_band,correct,total,accuracy\n");
            for (cell, (correct, total)) in &report.buckets {
                let (c, b) = cell.split_once('/').unwrap_or((cell.as_str(), "?"));
                out.push_str(&format!(
                    "{c},{b},{correct},{total},{:.6}\n",
                    *correct as f64 / (*total).max(1) as f64
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockBackend;
    use crate::testkit::{athletes_puzzle, islands_puzzle};

    #[test]
    fn wrong_islands_answer_fails_exactly_the_adjacency_constraint() {
        let puzzle = islands_puzzle();
        let verdict = verify("My answer: ['I', 'G', 'E', 'F', 'H']", &puzzle);
        assert_eq!(verdict.extraction, Extraction::Found);
        assert!(verdict.format.is_clean());
        assert!(!verdict.correct);
        let failing: Vec<&str> = verdict
            .constraint_results
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(id, _)| id.as_str())
            .collect();
        // Only "I is adjacent to E" fails: |pos(I) - pos(E)| = 2.
        assert_eq!(failing, vec!["c2"]);
    }

    #[test]
    fn known_islands_solution_grades_correct() {
        let puzzle = islands_puzzle();
        let verdict = verify(r#"["G", "E", "I", "F", "H"]"#, &puzzle);
        assert!(verdict.correct, "{:?}", verdict.constraint_results);
    }

    #[test]
    fn athletes_sample_input_fails_y_before_t_and_w() {
        let puzzle = athletes_puzzle();
        let response = r#"{"order": ["T", "Y", "Z", "U", "W", "S", "X"],
            "colors": {"S": "red", "T": "green", "U": "red", "W": "green",
                       "X": "red", "Y": "green", "Z": "green"}}"#;
        let verdict = verify(response, &puzzle);
        assert!(!verdict.correct);
        let c2 = verdict
            .constraint_results
            .iter()
            .find(|(id, _)| id == "c2")
            .unwrap();
        assert!(!c2.1, "Y-before-T-and-W must fail on the sample input");
        // All constraints reported despite failures.
        assert_eq!(verdict.constraint_results.len(), 5);
    }

    #[test]
    fn athletes_hand_built_solution_grades_correct() {
        let puzzle = athletes_puzzle();
        let response = r#"Final answer:
            {"order": ["X", "Z", "U", "Y", "T", "S", "W"],
             "colors": {"X": "red", "Z": "green", "U": "red", "Y": "green",
                        "T": "green", "S": "red", "W": "green"}}"#;
        let verdict = verify(response, &puzzle);
        assert!(verdict.correct, "{:?}", verdict.constraint_results);
    }

    #[test]
    fn missing_json_is_extraction_none() {
        let verdict = verify("E is first, then F, G, H, I.", &islands_puzzle());
        assert_eq!(verdict.extraction, Extraction::None);
        assert!(!verdict.correct);
        assert!(verdict.constraint_results.is_empty());
    }

    #[test]
    fn dirty_format_counts_incorrect() {
        let verdict = verify(r#"["E", "F", "G"]"#, &islands_puzzle());
        assert_eq!(verdict.extraction, Extraction::Found);
        assert!(!verdict.format.is_clean());
        assert!(!verdict.correct);
    }

    #[test]
    fn last_json_value_wins() {
        let puzzle = islands_puzzle();
        let response = r#"First try ["I", "G", "E", "F", "H"], but actually
            the answer is ["G", "E", "I", "F", "H"]"#;
        assert!(verify(response, &puzzle).correct);
    }

    #[test]
    fn solver_samples_round_trip_through_verify() {
        // Self-consistency: every enumerated solution, rendered in schema
        // form, grades correct.
        let puzzle = islands_puzzle();
        let typed = compile_constraints(&puzzle).unwrap();
        let space = solve(&puzzle.domain, &typed, &SolveOptions::default()).unwrap();
        assert_eq!(space.solution_count, 2);
        for sample in &space.samples {
            let rendered = arrangement_to_value(sample, &puzzle.schema).to_string();
            assert!(verify(&rendered, &puzzle).correct);
        }
    }

    #[test]
    fn render_prompt_includes_all_parts() {
        let templates = Templates::builtin();
        let prompt = render_prompt(&athletes_puzzle(), &templates);
        assert!(prompt.contains("7 athletes"));
        assert!(prompt.contains("(5)"));
        assert!(prompt.contains("S is the sixth athlete"));
        assert!(prompt.contains("not\nnecessarily the correct arrangement")
            || prompt.contains("not necessarily the correct arrangement"));
        assert!(prompt.contains(r#""order""#));

        let islands = render_prompt(&islands_puzzle(), &templates);
        assert!(islands.contains(r#"["F","H","I","E","G"]"#));
    }

    #[test]
    fn half_correct_mock_scores_mean_half_std_zero() {
        let islands = islands_puzzle();
        let mut other = islands_puzzle();
        other.id = "islands-2".into();
        other.background = "A second island chain, arranged the same way.".into();

        let backend = MockBackend::new()
            .on("volcanic", &[r#"["G", "E", "I", "F", "H"]"#])
            .on("second island chain", &[r#"["I", "G", "E", "F", "H"]"#]);
        let client = Client::mock(backend);
        let out = evaluate(
            &client,
            &[islands, other],
            &Templates::builtin(),
            &EvalConfig::default(),
        )
        .unwrap();
        assert!((out.report.mean - 0.5).abs() < 1e-9);
        assert!(out.report.std.abs() < 1e-9);
        assert_eq!(out.report.trial_accuracies.len(), 5);
        assert_eq!(out.verdicts.len(), 10);
        // Bucket totals sum to the verdict count.
        let total: u64 = out.report.buckets.values().map(|(_, t)| t).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn single_trial_has_zero_std() {
        let client = Client::mock(
            MockBackend::new().otherwise(&[r#"["G", "E", "I", "F", "H"]"#]),
        );
        let config = EvalConfig {
            trials: 1,
            ..EvalConfig::default()
        };
        let out = evaluate(&client, &[islands_puzzle()], &Templates::builtin(), &config).unwrap();
        assert_eq!(out.report.std, 0.0);
        assert_eq!(out.report.mean, 1.0);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let client = Client::mock(MockBackend::new());
        assert_eq!(
            evaluate(&client, &[], &Templates::builtin(), &EvalConfig::default()).unwrap_err(),
            EvalError::EmptyDataset
        );
    }

    #[test]
    fn backend_error_counts_incorrect_and_flagged() {
        // No fixture for the prompt: the completion fails, the verdict is
        // flagged, and the run still finishes.
        let client = Client::mock(MockBackend::new());
        let config = EvalConfig {
            trials: 1,
            ..EvalConfig::default()
        };
        let out = evaluate(&client, &[islands_puzzle()], &Templates::builtin(), &config).unwrap();
        assert!(!out.verdicts[0].correct);
        assert!(out.verdicts[0].flagged.is_some());
        assert_eq!(out.report.mean, 0.0);
    }

    #[test]
    fn report_renders_bucket_rows() {
        let report = ScoreReport {
            model: "m".into(),
            dataset: "d".into(),
            trial_accuracies: vec![0.5],
            mean: 0.5,
            std: 0.0,
            buckets: [("4/1".to_string(), (1, 2))].into_iter().collect(),
            temperature: 0.2,
            trials: 1,
        };
        let md = render_report(&report, ReportFormat::Markdown);
        assert!(md.contains("| 4 | 1 | 1 | 2 | 0.500 |"));
        let csv = render_report(&report, ReportFormat::Csv);
        assert!(csv.contains("4,1,1,2,0.500000"));
    }

    #[test]
    fn reverify_stored_response_is_reproducible() {
        let puzzle = athletes_puzzle();
        let response = r#"{"order": ["X", "Z", "U", "Y", "T", "S", "W"],
             "colors": {"X": "red", "Z": "green", "U": "red", "Y": "green",
                        "T": "green", "S": "red", "W": "green"}}"#;
        assert_eq!(verify(response, &puzzle), verify(response, &puzzle));
    }

    #[test]
    fn extract_candidate_requires_conformance() {
        let schema = islands_puzzle().schema;
        assert!(extract_candidate(r#"["G", "E", "I", "F", "H"]"#, &schema).is_some());
        assert!(extract_candidate(r#"["G", "E"]"#, &schema).is_none());
        assert!(extract_candidate("no json", &schema).is_none());
    }
}
