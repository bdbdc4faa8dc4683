//! Stages 1–2 of the pipeline: turn corpus items into puzzle specifications
//! via templated LLM prompts, then cross-validate each specification by
//! exhaustive traversal and drive the bounded regeneration loop.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{
    conforms, Arrangement, Constraint, DomainError, DomainSpec, Language, PuzzleSpec,
};
use crate::dsl::{check, parse, print, TypedExpr};
use crate::jsonx::extract_last_json;
use crate::llm::{Client, CompletionRequest, LlmError, GENERATION_TEMPERATURE};
use crate::solver::{solve, SolutionSpace, SolveOptions};

/// Placeholder substituted with the corpus question in stage templates.
pub const QUESTION_PLACEHOLDER: &str = "[[[question]]]";

/// Default regeneration budget per corpus item.
pub const DEFAULT_RETRIES: u32 = 3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("malformed model output: {0}")]
    MalformedOutput(String),
    #[error("constraint expression rejected: {0}")]
    DslRejected(String),
    #[error("example arrangement does not conform to the schema: {0}")]
    ExampleNonconformant(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// One source question; options and answers, if present, travel along as
/// opaque text the model is told to ignore.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub language: Language,
    pub text: String,
}

/// A UTF-8 prompt template with a `[[[question]]]` placeholder.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub text: String,
}

impl PromptTemplate {
    pub fn new(text: &str) -> PromptTemplate {
        PromptTemplate {
            text: text.to_string(),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<PromptTemplate> {
        Ok(PromptTemplate {
            text: std::fs::read_to_string(path)?,
        })
    }

    pub fn render(&self, question: &str) -> String {
        self.text.replace(QUESTION_PLACEHOLDER, question)
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

/// The four templates used across the pipeline, for one language.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub formulate: PromptTemplate,
    pub spec: PromptTemplate,
    pub expand: PromptTemplate,
    pub eval: PromptTemplate,
}

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn builtin(language: Language) -> TemplateSet {
        let t = |en: &str, cn: &str| {
            PromptTemplate::new(match language {
                Language::En => en,
                Language::Cn => cn,
            })
        };
        TemplateSet {
            formulate: t(
                include_str!("../templates/formulate_en.txt"),
                include_str!("../templates/formulate_cn.txt"),
            ),
            spec: t(
                include_str!("../templates/spec_en.txt"),
                include_str!("../templates/spec_cn.txt"),
            ),
            expand: t(
                include_str!("../templates/expand_en.txt"),
                include_str!("../templates/expand_cn.txt"),
            ),
            eval: t(
                include_str!("../templates/eval_en.txt"),
                include_str!("../templates/eval_cn.txt"),
            ),
        }
    }

    /// Loads `{formulate,spec,expand,eval}_{en,cn}.txt` from a directory.
    pub fn from_dir(dir: &Path, language: Language) -> std::io::Result<TemplateSet> {
        let suffix = match language {
            Language::En => "en",
            Language::Cn => "cn",
        };
        let load = |stage: &str| PromptTemplate::from_file(&dir.join(format!("{stage}_{suffix}.txt")));
        Ok(TemplateSet {
            formulate: load("formulate")?,
            spec: load("spec")?,
            expand: load("expand")?,
            eval: load("eval")?,
        })
    }

    pub fn digests(&self) -> Vec<(String, String)> {
        vec![
            ("formulate".into(), self.formulate.digest()),
            ("spec".into(), self.spec.digest()),
            ("expand".into(), self.expand.digest()),
            ("eval".into(), self.eval.digest()),
        ]
    }
}

/// Per-language template sets.
#[derive(Debug, Clone)]
pub struct Templates {
    pub en: TemplateSet,
    pub cn: TemplateSet,
}

impl Templates {
    pub fn builtin() -> Templates {
        Templates {
            en: TemplateSet::builtin(Language::En),
            cn: TemplateSet::builtin(Language::Cn),
        }
    }

    pub fn from_dir(dir: &Path) -> std::io::Result<Templates> {
        Ok(Templates {
            en: TemplateSet::from_dir(dir, Language::En)?,
            cn: TemplateSet::from_dir(dir, Language::Cn)?,
        })
    }

    pub fn get(&self, language: Language) -> &TemplateSet {
        match language {
            Language::En => &self.en,
            Language::Cn => &self.cn,
        }
    }
}

/// Stage-1 output: the question split into context and constraint texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub background: String,
    pub constraints_text: Vec<String>,
}

/// Splits the question into background and constraint statements.
pub fn formulate(
    client: &Client,
    item: &CorpusItem,
    template: &PromptTemplate,
) -> Result<Draft, SynthError> {
    let prompt = template.render(&item.text);
    let request = CompletionRequest::user(&client.model, &prompt, GENERATION_TEMPERATURE);
    let response = client.complete(&request)?;
    let value = extract_last_json(&response)
        .ok_or_else(|| SynthError::MalformedOutput("no JSON object in response".into()))?;
    let background = value
        .get("background")
        .and_then(|v| v.as_str())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| SynthError::MalformedOutput("missing background".into()))?
        .to_string();
    let constraints_text = match value.get("logic_constraints") {
        Some(serde_json::Value::String(s)) => split_constraints(s),
        Some(serde_json::Value::Array(items)) => items
            .iter()
            .filter_map(|v| v.as_str())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        _ => {
            return Err(SynthError::MalformedOutput(
                "missing logic_constraints".into(),
            ))
        }
    };
    if constraints_text.is_empty() {
        return Err(SynthError::MalformedOutput("no constraints listed".into()));
    }
    Ok(Draft {
        background,
        constraints_text,
    })
}

/// Splits a constraint list on ASCII and fullwidth semicolons.
fn split_constraints(s: &str) -> Vec<String> {
    s.split(|c| c == ';' || c == '；')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

/// Stage-2 generation: asks the model for a domain declaration, one DSL
/// expression per constraint, and an example arrangement, then parses,
/// type-checks, and assembles the puzzle.
pub fn generate_spec(
    client: &Client,
    item: &CorpusItem,
    draft: &Draft,
    template: &PromptTemplate,
) -> Result<PuzzleSpec, SynthError> {
    let mut question = draft.background.clone();
    question.push_str("\n\nConstraints:\n");
    for (i, text) in draft.constraints_text.iter().enumerate() {
        question.push_str(&format!("({}) {text}\n", i + 1));
    }
    let prompt = template.render(&question);
    let request = CompletionRequest::user(&client.model, &prompt, GENERATION_TEMPERATURE);
    let response = client.complete(&request)?;
    let value = extract_last_json(&response)
        .ok_or_else(|| SynthError::MalformedOutput("no JSON object in response".into()))?;

    let domain: DomainSpec = serde_json::from_value(
        value
            .get("domain")
            .cloned()
            .ok_or_else(|| SynthError::MalformedOutput("missing domain".into()))?,
    )
    .map_err(|e| SynthError::MalformedOutput(format!("bad domain declaration: {e}")))?;
    domain.validate()?;

    let raw = value
        .get("constraints")
        .and_then(|v| v.as_array())
        .ok_or_else(|| SynthError::MalformedOutput("missing constraints array".into()))?;
    if raw.is_empty() {
        return Err(SynthError::MalformedOutput("empty constraints array".into()));
    }
    let mut constraints = Vec::with_capacity(raw.len());
    for (i, entry) in raw.iter().enumerate() {
        let text = entry
            .get("text")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .trim()
            .to_string();
        let expr = entry
            .get("expr")
            .and_then(|v| v.as_str())
            .ok_or_else(|| SynthError::MalformedOutput(format!("constraint {i}: missing expr")))?
            .trim()
            .to_string();
        let ast =
            parse(&expr).map_err(|e| SynthError::DslRejected(format!("{expr:?}: {e}")))?;
        check(&ast, &domain).map_err(|e| SynthError::DslRejected(format!("{expr:?}: {e}")))?;
        constraints.push(Constraint {
            id: format!("c{}", i + 1),
            text,
            expr,
        });
    }

    let schema = domain.schema();
    let example_value = value
        .get("example")
        .cloned()
        .ok_or_else(|| SynthError::MalformedOutput("missing example".into()))?;
    let (report, example) = conforms(&example_value, &schema);
    let example: Arrangement = example
        .ok_or_else(|| SynthError::ExampleNonconformant(format!("{:?}", report.violations)))?;

    Ok(PuzzleSpec {
        id: item.id.clone(),
        language: item.language,
        background: draft.background.clone(),
        constraints,
        domain,
        schema,
        example,
        lineage: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Valid,
    EmptySolutionSpace,
    ParseFailure,
    SchemaMismatch,
    TooLarge,
    Timeout,
}

/// The outcome of validating one puzzle (or of failing to construct one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub id: String,
    pub status: ValidationStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_count: Option<u64>,
}

/// Compiles every constraint expression of a puzzle.
pub fn compile_constraints(puzzle: &PuzzleSpec) -> Result<Vec<TypedExpr>, SynthError> {
    puzzle
        .constraints
        .iter()
        .map(|c| {
            let ast = parse(&c.expr)
                .map_err(|e| SynthError::DslRejected(format!("{}: {e}", c.id)))?;
            check(&ast, &puzzle.domain)
                .map_err(|e| SynthError::DslRejected(format!("{}: {e}", c.id)))
        })
        .collect()
}

/// Certifies solvability by exhaustive traversal: a puzzle is kept only if
/// the traversal finds at least one constraint-satisfying arrangement.
pub fn cross_validate(puzzle: &PuzzleSpec, options: &SolveOptions) -> ValidationReport {
    let report = |status, space: Option<&SolutionSpace>| ValidationReport {
        id: puzzle.id.clone(),
        status,
        attempts: 1,
        solution_count: space.map(|s| s.solution_count),
        domain_count: space.map(|s| s.domain_count),
    };
    if puzzle.validate().is_err() {
        return report(ValidationStatus::SchemaMismatch, None);
    }
    let typed = match compile_constraints(puzzle) {
        Ok(t) => t,
        Err(_) => return report(ValidationStatus::ParseFailure, None),
    };
    match solve(&puzzle.domain, &typed, options) {
        Ok(space) if space.solution_count >= 1 => report(ValidationStatus::Valid, Some(&space)),
        Ok(space) if !space.exhausted => report(ValidationStatus::Timeout, Some(&space)),
        Ok(space) => report(ValidationStatus::EmptySolutionSpace, Some(&space)),
        Err(DomainError::DomainTooLarge { .. }) => report(ValidationStatus::TooLarge, None),
        Err(_) => report(ValidationStatus::SchemaMismatch, None),
    }
}

/// Duplicate-detection fingerprint: normalized background plus the sorted
/// canonical prints of every constraint expression.
pub fn fingerprint(puzzle: &PuzzleSpec) -> String {
    let background: String = puzzle
        .background
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    let mut exprs: Vec<String> = puzzle
        .constraints
        .iter()
        .map(|c| match parse(&c.expr) {
            Ok(ast) => print(&ast),
            Err(_) => c.expr.clone(),
        })
        .collect();
    exprs.sort();
    let mut hasher = Sha256::new();
    hasher.update(background.as_bytes());
    for e in &exprs {
        hasher.update(b"\x1f");
        hasher.update(e.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub retries: u32,
    pub solve: SolveOptions,
    pub templates: Templates,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            retries: DEFAULT_RETRIES,
            solve: SolveOptions::default(),
            templates: Templates::builtin(),
        }
    }
}

/// The synthesized dataset plus the quarantine ledger.
#[derive(Debug, Default)]
pub struct SynthOutput {
    pub puzzles: Vec<PuzzleSpec>,
    /// One report per emitted puzzle, aligned by puzzle id.
    pub reports: Vec<ValidationReport>,
    /// Items that failed after the full retry budget.
    pub quarantine: Vec<ValidationReport>,
    /// Items dropped because their fingerprint duplicated an earlier puzzle.
    pub duplicates: u64,
}

/// Runs formulate → generate → cross-validate for every corpus item, with
/// up to `retries` regenerations per item. Items are processed in id order,
/// so with a scripted backend the output is deterministic.
pub fn synthesize(client: &Client, corpus: &[CorpusItem], config: &SynthConfig) -> SynthOutput {
    let mut items: Vec<&CorpusItem> = corpus.iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));

    let mut out = SynthOutput::default();
    let mut seen = BTreeSet::new();
    for item in items {
        let templates = config.templates.get(item.language);
        let mut last: Option<ValidationReport> = None;
        let mut accepted = false;
        for attempt in 1..=config.retries.max(1) {
            let constructed = formulate(client, item, &templates.formulate)
                .and_then(|draft| generate_spec(client, item, &draft, &templates.spec));
            let mut report = match constructed {
                Ok(puzzle) => {
                    let report = cross_validate(&puzzle, &config.solve);
                    if report.status == ValidationStatus::Valid {
                        if seen.insert(fingerprint(&puzzle)) {
                            out.puzzles.push(puzzle);
                            out.reports.push(ValidationReport { attempts: attempt, ..report });
                        } else {
                            out.duplicates += 1;
                        }
                        accepted = true;
                        break;
                    }
                    report
                }
                Err(e) => ValidationReport {
                    id: item.id.clone(),
                    status: match e {
                        SynthError::ExampleNonconformant(_) | SynthError::Domain(_) => {
                            ValidationStatus::SchemaMismatch
                        }
                        _ => ValidationStatus::ParseFailure,
                    },
                    attempts: attempt,
                    solution_count: None,
                    domain_count: None,
                },
            };
            report.attempts = attempt;
            last = Some(report);
        }
        if !accepted {
            out.quarantine
                .push(last.expect("at least one attempt recorded"));
        }
    }
    out
}
