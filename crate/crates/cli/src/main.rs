//! `logigen`: synthesize, validate, augment, evaluate, sample, and assemble
//! training data for constraint-based logic puzzles.
//!
//! Exit status: 0 on success, 1 on pipeline errors, 2 on usage errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use logigen::augment::{augment, difficulty_profile, ratio_band};
use logigen::harness::{
    evaluate, render_report, EvalConfig, ReportFormat, ScoreReport, Verdict,
};
use logigen::llm::{client_from_config, Client, Transcript};
use logigen::solver::{solve, SolveOptions};
use logigen::store::{
    load_jsonl, load_puzzles, save_jsonl, save_puzzles, PipelineConfig, RunManifest,
};
use logigen::synthesis::{
    compile_constraints, cross_validate, synthesize, CorpusItem, SynthConfig, Templates,
    ValidationStatus,
};
use logigen::training::{build_dpo, build_sft, sample, SampleSet, SelectionPolicy, TrainError};

#[derive(Parser)]
#[command(name = "logigen", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a corpus of questions into validated puzzle specifications.
    Synthesize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quarantine: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Transcript JSONL feeding the replay backend.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Revalidate a puzzle file: structure, expressions, and solvability.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Reduce and expand puzzles into a difficulty-spread dataset.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_attempts: Option<u32>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Score a model over a puzzle dataset with repeated trials.
    Evaluate {
        #[arg(long)]
        puzzles: PathBuf,
        /// Model/backend configuration file.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Draw verified rejection samples for each puzzle.
    Sample {
        #[arg(long)]
        puzzles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rounds: Option<u32>,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Assemble SFT or DPO records from stored sample sets.
    BuildTraining {
        #[arg(long, value_enum)]
        kind: TrainingKind,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::First)]
        policy: Policy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render the difficulty-bucket accuracy table from stored verdicts.
    Report {
        #[arg(long)]
        verdicts: PathBuf,
        /// Needed to recompute difficulty buckets.
        #[arg(long)]
        puzzles: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainingKind {
    Sft,
    Dpo,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Policy {
    First,
    All,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_templates(dir: &Option<PathBuf>) -> Result<Templates> {
    match dir {
        Some(d) => Templates::from_dir(d).with_context(|| format!("loading templates from {}", d.display())),
        None => Ok(Templates::builtin()),
    }
}

fn build_client(config: &PipelineConfig, transcripts: &Option<PathBuf>) -> Result<Client> {
    let replay: Option<Vec<Transcript>> = match transcripts {
        Some(p) => Some(load_jsonl(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    client_from_config(&config.llm, replay).context("configuring backend")
}

fn base_manifest(
    command: &str,
    config: &PipelineConfig,
    templates: &Templates,
    backend: Option<&Client>,
) -> RunManifest {
    let mut manifest = RunManifest::new(command, config.snapshot());
    manifest.template_hashes = templates
        .en
        .digests()
        .into_iter()
        .map(|(n, h)| (format!("en/{n}"), h))
        .chain(
            templates
                .cn
                .digests()
                .into_iter()
                .map(|(n, h)| (format!("cn/{n}"), h)),
        )
        .collect();
    if let Some(c) = backend {
        manifest.backend = c.backend_id();
    }
    manifest
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize {
            corpus,
            out,
            quarantine,
            templates,
            config,
            transcripts,
        } => {
            let config = load_config(&config)?;
            let templates = load_templates(&templates)?;
            let client = build_client(&config, &transcripts)?;
            let items: Vec<CorpusItem> = load_jsonl(&corpus)?;
            let synth_config = SynthConfig {
                retries: config.retries,
                templates: templates.clone(),
                ..SynthConfig::default()
            };
            let output = synthesize(&client, &items, &synth_config);
            save_puzzles(&out, &output.puzzles)?;
            save_jsonl(&quarantine, &output.quarantine)?;
            let mut manifest = base_manifest("synthesize", &config, &templates, Some(&client));
            manifest.record_input(&corpus)?;
            manifest.record_output(&out)?;
            manifest.record_output(&quarantine)?;
            manifest.write_beside(&out)?;
            eprintln!(
                "synthesized {} puzzles, quarantined {}, {} duplicates",
                output.puzzles.len(),
                output.quarantine.len(),
                output.duplicates
            );
            Ok(())
        }
        Command::Validate { input } => {
            let puzzles = load_puzzles(&input)?;
            let options = SolveOptions::default();
            let mut bad = 0;
            for p in &puzzles {
                let report = cross_validate(p, &options);
                if report.status != ValidationStatus::Valid {
                    bad += 1;
                    eprintln!("{}: {:?}", p.id, report.status);
                }
            }
            eprintln!("{} of {} puzzles valid", puzzles.len() - bad, puzzles.len());
            if bad > 0 {
                bail!("{bad} puzzles failed validation");
            }
            Ok(())
        }
        Command::Augment {
            input,
            out,
            seed,
            max_attempts,
            report,
            templates,
            config,
            transcripts,
        } => {
            let config = load_config(&config)?;
            let templates = load_templates(&templates)?;
            let client = build_client(&config, &transcripts)?;
            let puzzles = load_puzzles(&input)?;
            let seed = seed.unwrap_or(config.seed);
            let max_attempts = max_attempts.unwrap_or(config.max_attempts);
            let output = augment(
                &client,
                &puzzles,
                &templates,
                seed,
                max_attempts,
                &SolveOptions::default(),
            )?;
            save_puzzles(&out, &output.puzzles)?;
            save_jsonl(&report, &output.records)?;
            let mut manifest = base_manifest("augment", &config, &templates, Some(&client));
            manifest.seeds = vec![seed];
            manifest.record_input(&input)?;
            manifest.record_output(&out)?;
            manifest.record_output(&report)?;
            manifest.write_beside(&out)?;
            eprintln!(
                "augmented {} roots into {} puzzles ({} records)",
                puzzles.len(),
                output.puzzles.len(),
                output.records.len()
            );
            Ok(())
        }
        Command::Evaluate {
            puzzles,
            model,
            trials,
            out,
            report,
            templates,
            transcripts,
        } => {
            let config = load_config(&model)?;
            let templates = load_templates(&templates)?;
            let client = build_client(&config, &transcripts)?;
            let dataset = load_puzzles(&puzzles)?;
            let eval_config = EvalConfig {
                trials: trials.unwrap_or(config.trials),
                temperature: config.eval_temperature,
                dataset: puzzles.display().to_string(),
                solve: SolveOptions::default(),
            };
            let output = evaluate(&client, &dataset, &templates, &eval_config)?;
            save_jsonl(&out, &output.verdicts)?;
            let mut bytes = serde_json::to_vec_pretty(&output.report)?;
            bytes.push(b'\n');
            logigen::store::write_atomic(&report, &bytes)?;
            let mut manifest = base_manifest("evaluate", &config, &templates, Some(&client));
            manifest.record_input(&puzzles)?;
            manifest.record_output(&out)?;
            manifest.record_output(&report)?;
            manifest.write_beside(&out)?;
            eprintln!(
                "mean accuracy {:.3} (std {:.3}) over {} trials",
                output.report.mean, output.report.std, output.report.trials
            );
            Ok(())
        }
        Command::Sample {
            puzzles,
            out,
            rounds,
            templates,
            config,
            transcripts,
        } => {
            let config = load_config(&config)?;
            let templates = load_templates(&templates)?;
            let client = build_client(&config, &transcripts)?;
            let dataset = load_puzzles(&puzzles)?;
            let rounds = rounds.unwrap_or(config.sample_rounds);
            let mut sets = Vec::new();
            let mut skipped = 0;
            let mut ordered: Vec<_> = dataset.iter().collect();
            ordered.sort_by(|a, b| a.id.cmp(&b.id));
            for p in ordered {
                match sample(&client, p, &templates, rounds) {
                    Ok(set) => sets.push(set),
                    Err(TrainError::SingleConstraint(_)) => skipped += 1,
                }
            }
            save_jsonl(&out, &sets)?;
            let mut manifest = base_manifest("sample", &config, &templates, Some(&client));
            manifest.record_input(&puzzles)?;
            manifest.record_output(&out)?;
            manifest.write_beside(&out)?;
            eprintln!(
                "sampled {} puzzles × {rounds} rounds ({skipped} single-constraint skipped)",
                sets.len()
            );
            Ok(())
        }
        Command::BuildTraining {
            kind,
            samples,
            out,
            policy,
            seed,
            config,
        } => {
            let config = load_config(&config)?;
            let sets: Vec<SampleSet> = load_jsonl(&samples)?;
            let policy = match policy {
                Policy::First => SelectionPolicy::First,
                Policy::All => SelectionPolicy::All,
                Policy::Random => SelectionPolicy::Random(seed),
            };
            let dropped = match kind {
                TrainingKind::Sft => {
                    let (records, counts) =
                        build_sft(&sets, &config.llm.backend.model, policy);
                    save_jsonl(&out, &records)?;
                    eprintln!("{} SFT records", records.len());
                    counts.dropped
                }
                TrainingKind::Dpo => {
                    let (records, counts) = build_dpo(&sets, policy);
                    save_jsonl(&out, &records)?;
                    eprintln!("{} DPO pairs", records.len());
                    counts.dropped
                }
            };
            let templates = Templates::builtin();
            let mut manifest = base_manifest("build-training", &config, &templates, None);
            manifest.seeds = vec![seed];
            manifest.record_input(&samples)?;
            manifest.record_output(&out)?;
            manifest.write_beside(&out)?;
            eprintln!("{dropped} sets dropped");
            Ok(())
        }
        Command::Report {
            verdicts,
            puzzles,
            format,
            out,
        } => {
            let verdicts: Vec<Verdict> = load_jsonl(&verdicts)?;
            if verdicts.is_empty() {
                bail!("no verdicts to report");
            }
            let report = score_from_verdicts(&verdicts, puzzles.as_deref())?;
            let format = match format {
                Format::Md => ReportFormat::Markdown,
                Format::Csv => ReportFormat::Csv,
            };
            let rendered = render_report(&report, format);
            match out {
                Some(path) => logigen::store::write_atomic(&path, rendered.as_bytes())?,
                None => print!("{rendered}"),
            }
            Ok(())
        }
    }
}

/// Rebuilds a score report from stored verdicts; difficulty buckets need the
/// puzzle file to re-derive constraint counts and solution-space ratios.
fn score_from_verdicts(verdicts: &[Verdict], puzzles: Option<&Path>) -> Result<ScoreReport> {
    let mut trials: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for v in verdicts {
        let entry = trials.entry(v.trial).or_insert((0, 0));
        entry.1 += 1;
        if v.correct {
            entry.0 += 1;
        }
    }
    let trial_accuracies: Vec<f64> = trials
        .values()
        .map(|(c, t)| *c as f64 / (*t).max(1) as f64)
        .collect();
    let mean = trial_accuracies.iter().sum::<f64>() / trial_accuracies.len() as f64;
    let variance = trial_accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / trial_accuracies.len() as f64;

    let mut buckets = BTreeMap::new();
    if let Some(path) = puzzles {
        let dataset = load_puzzles(path)?;
        let options = SolveOptions::default();
        let mut cells: BTreeMap<String, String> = BTreeMap::new();
        let mut spaces = BTreeMap::new();
        for p in &dataset {
            if let Ok(typed) = compile_constraints(p) {
                if let Ok(space) = solve(&p.domain, &typed, &options) {
                    cells.insert(
                        p.id.clone(),
                        format!(
                            "{}/{}",
                            p.constraints.len(),
                            ratio_band(space.solution_count, space.domain_count)
                        ),
                    );
                    spaces.insert(p.id.clone(), space);
                }
            }
        }
        // The profile is validated as a side effect; report cells come from
        // the verdicts so partial verdict files still render.
        let _ = difficulty_profile(&dataset, &spaces);
        for v in verdicts {
            if let Some(cell) = cells.get(&v.puzzle_id) {
                let entry = buckets.entry(cell.clone()).or_insert((0, 0));
                entry.1 += 1;
                if v.correct {
                    entry.0 += 1;
                }
            }
        }
    }

    Ok(ScoreReport {
        model: String::new(),
        dataset: String::new(),
        trials: trial_accuracies.len() as u32,
        trial_accuracies,
        mean,
        std: variance.sqrt(),
        buckets,
        temperature: 0.0,
    })
}
