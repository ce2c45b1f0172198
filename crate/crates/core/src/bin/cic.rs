use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use cic::backends::Region;
use cic::captioning::AblationFlag;
use cic::metrics::{match_rate, preference_rate, rank_images, read_scores_csv, write_scores_csv};
use cic::pipeline::{self, report, DatasetManifest, RunConfig};
use cic::question_bank::{
    cluster_questions, collect_transcripts, filter_questions, generate_questions, read_questions, score_precision,
    select_top_k, write_questions, CategoryKeywords, ClusterParams, CulturalCategory, FilterRule, PrecisionScore,
    Question, QuestionBank, Transcript,
};
use cic::survey::{ingest_responses, make_bundle, read_answer_key, write_bundle};

#[derive(Parser)]
#[command(name = "cic", version, about = "Culturally-aware image captioning pipeline")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Caption every manifest image and score the results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_caption_prompt: bool,
        #[arg(long)]
        no_extraction: bool,
    },
    /// Score existing bundles.
    Score {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long, default_value = "scores.csv")]
        out: PathBuf,
    },
    /// Render a run report from bundles and scores.
    Report {
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Question curation.
    #[command(subcommand)]
    Questions(QuestionsCommand),
    /// Human-evaluation survey files.
    #[command(subcommand)]
    Survey(SurveyCommand),
}

#[derive(Subcommand)]
enum QuestionsCommand {
    /// Ask the chat model for cultural questions about each image.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        per_image: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop questions unrelated to the cultural categories.
    Filter {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        io: InOut,
        /// Ask the chat model about questions no keyword matches.
        #[arg(long)]
        classifier: bool,
    },
    /// Group similar questions within each category.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        min_size: Option<usize>,
    },
    /// Compute the cultural precision of clustered questions.
    Score {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        io: InOut,
        /// Images to ask the questions about.
        #[arg(long, required_unless_present = "transcripts")]
        manifest: Option<PathBuf>,
        /// Precomputed transcripts (JSONL) instead of asking the VQA backend.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Mark the best question of each category as selected.
    Select {
        #[command(flatten)]
        io: InOut,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
}

#[derive(Args)]
struct InOut {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SurveyCommand {
    /// Lay out survey pages and write the participant bundle and answer key.
    Make {
        #[arg(long)]
        manifest: PathBuf,
        /// JSONL rows of {image_id, model, caption}.
        #[arg(long)]
        captions: PathBuf,
        #[arg(long, default_value_t = 10)]
        pages: usize,
        /// Participants per region.
        #[arg(long)]
        participants: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Read collected responses and render the survey tables.
    Ingest {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        answer_key: PathBuf,
        /// Caption bundles, for the category match rate.
        #[arg(long)]
        bundles: Option<PathBuf>,
        /// Model whose picks are ranked per image.
        #[arg(long, default_value = "CIC")]
        model: String,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_validate(config: &Path) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let diags = cfg.validate();
    for d in &diags {
        eprintln!("{d}");
    }
    if pipeline::has_fatal(&diags) {
        return Ok(ExitCode::FAILURE);
    }
    eprintln!("{} ok", config.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(config: &Path, manifest: &Path, out: Option<PathBuf>, flags: BTreeSet<AblationFlag>) -> Result<ExitCode> {
    let mut cfg = load_config(config)?;
    cfg.ablation.no_caption_prompt |= flags.contains(&AblationFlag::NoCaptionPrompt);
    cfg.ablation.no_extraction |= flags.contains(&AblationFlag::NoExtraction);
    let manifest = DatasetManifest::load(manifest)?;
    let out = out.unwrap_or_else(|| cfg.output_path());
    let summary = pipeline::run(&cfg, &manifest, &out)?;
    eprintln!(
        "{} images, {} failed, {} kept baseline, {} backend calls, {} cache hits -> {}",
        summary.images,
        summary.failed,
        summary.fallbacks,
        summary.backend_calls,
        summary.cache_hits,
        out.display()
    );
    if summary.over_failure_budget() {
        eprintln!("more than 10% of images failed: {}", summary.failed_images.join(", "));
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_score(config: &Path, bundles: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let bundles = pipeline::read_bundles(bundles)?;
    let lexicon = cfg.load_lexicon()?;
    let stack = cfg.backend_stack()?;
    let (rows, problems) =
        pipeline::score_bundles(&bundles, &stack.backends, &lexicon, &cfg.model_label, &cfg.baseline_label, cfg.clip_weight);
    for p in &problems {
        eprintln!("warning: {p}");
    }
    write_scores_csv(out, &rows)?;
    Ok(())
}

fn cmd_report(bundles: &Path, scores: &Path, out: Option<&Path>) -> Result<()> {
    let bundles = pipeline::read_bundles(bundles)?;
    let scores = read_scores_csv(scores)?;
    write_text(out, &report::render_run_report(&bundles, &scores))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
        }
    }
    Ok(out)
}

fn cmd_questions(cmd: QuestionsCommand) -> Result<()> {
    match cmd {
        QuestionsCommand::Generate { config, manifest, per_image, out } => {
            let cfg = load_config(&config)?;
            let stack = cfg.backend_stack()?;
            let images = DatasetManifest::load(&manifest)?.images();
            let outcome =
                generate_questions(&images, per_image, &stack.backends, &CategoryKeywords::default(), cfg.chat)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            write_questions(&out, &outcome.questions)?;
            eprintln!("{} questions from {} images", outcome.questions.len(), images.len());
        }
        QuestionsCommand::Filter { config, io, classifier } => {
            let cfg = load_config(&config)?;
            let raw = read_questions(&io.input)?;
            let lexicon = cfg.load_lexicon()?;
            let stack;
            let rule = if classifier {
                stack = cfg.backend_stack()?;
                FilterRule::Classifier { backends: &stack.backends, params: cfg.chat }
            } else {
                FilterRule::Keywords
            };
            let kept = filter_questions(&raw, &CategoryKeywords::default(), &lexicon, rule)?;
            write_questions(&io.out, &kept)?;
            eprintln!("kept {} of {} questions", kept.len(), raw.len());
        }
        QuestionsCommand::Cluster { config, io, threshold, min_size } => {
            let cfg = load_config(&config)?;
            let params = ClusterParams {
                threshold: threshold.unwrap_or(cfg.clustering.threshold),
                min_size: min_size.unwrap_or(cfg.clustering.min_size),
            };
            let filtered = read_questions(&io.input)?;
            let stack = cfg.backend_stack()?;
            let outcome = cluster_questions(&filtered, &stack.backends, params)?;
            let members: Vec<Question> = outcome.clusters.iter().flat_map(|c| c.members.iter().cloned()).collect();
            write_questions(&io.out, &members)?;
            for c in CulturalCategory::ALL {
                let n = outcome.clusters.iter().filter(|k| k.category == c).count();
                eprintln!(
                    "{c}: {n} clusters, discarded {} questions in {} components",
                    outcome.discarded_questions.get(&c).unwrap_or(&0),
                    outcome.discarded_components.get(&c).unwrap_or(&0)
                );
            }
        }
        QuestionsCommand::Score { config, io, manifest, transcripts } => {
            let cfg = load_config(&config)?;
            let questions = read_questions(&io.input)?;
            let bank = QuestionBank::from_questions(questions.clone())?;
            let lexicon = cfg.load_lexicon()?;
            let transcripts: Vec<Transcript> = match (transcripts, manifest) {
                (Some(path), _) => read_jsonl(&path)?,
                (None, Some(manifest)) => {
                    let stack = cfg.backend_stack()?;
                    collect_transcripts(&bank.clusters, &DatasetManifest::load(&manifest)?.images(), &stack.backends)?
                }
                (None, None) => bail!("need --manifest or --transcripts"),
            };
            let scores: BTreeMap<String, PrecisionScore> = bank
                .clusters
                .iter()
                .flat_map(|c| score_precision(c, &transcripts, &lexicon))
                .map(|s| (s.question_id.clone(), s))
                .collect();
            let scored: Vec<Question> = questions
                .into_iter()
                .map(|q| {
                    let precision = scores.get(&q.id).and_then(|s| s.precision);
                    Question { precision, ..q }
                })
                .collect();
            write_questions(&io.out, &scored)?;
            eprintln!("scored {} questions from {} transcripts", scores.len(), transcripts.len());
        }
        QuestionsCommand::Select { io, k } => {
            let questions = read_questions(&io.input)?;
            let bank = QuestionBank::from_questions(questions.clone())?;
            let scores: Vec<PrecisionScore> = questions
                .iter()
                .map(|q| PrecisionScore { question_id: q.id.clone(), tp: 0, fp: 0, precision: q.precision })
                .collect();
            let picked = select_top_k(&bank.clusters, &scores, k, &CulturalCategory::ALL)?;
            let ids: BTreeSet<&str> = picked.values().flatten().map(|q| q.id.as_str()).collect();
            let selected: Vec<Question> =
                questions.iter().map(|q| Question { selected: ids.contains(q.id.as_str()), ..q.clone() }).collect();
            write_questions(&io.out, &selected)?;
            for (c, qs) in &picked {
                for q in qs {
                    eprintln!("{c}: {} ({:.4})", q.text, q.precision.unwrap_or(0.0));
                }
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct CaptionRow {
    image_id: String,
    model: String,
    caption: String,
}

fn cmd_survey(cmd: SurveyCommand) -> Result<()> {
    match cmd {
        SurveyCommand::Make { manifest, captions, pages, participants, seed, out_dir } => {
            let images = DatasetManifest::load(&manifest)?.images();
            let mut sets: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
            for row in read_jsonl::<CaptionRow>(&captions)? {
                sets.entry(row.image_id).or_default().insert(row.model, row.caption);
            }
            let regions: BTreeSet<Region> = images.iter().map(|i| i.region).collect();
            let heads: BTreeMap<Region, usize> = regions.into_iter().map(|r| (r, participants)).collect();
            let (bundle, key) = make_bundle(&images, &sets, pages, &heads, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            write_bundle(&out_dir.join("survey_bundle.json"), &out_dir.join("answer_key.json"), &bundle, &key)?;
            eprintln!("{} participants, {} pages -> {}", bundle.participants.len(), key.pages.len(), out_dir.display());
        }
        SurveyCommand::Ingest { responses, answer_key, bundles, model, top_k, out } => {
            let key = read_answer_key(&answer_key)?;
            let ingestion = ingest_responses(&responses, &key)?;
            for r in &ingestion.rejects {
                eprintln!("rejected line {}: {}", r.line, r.reason);
            }
            let models: Vec<String> = key
                .pages
                .values()
                .flat_map(|e| e.slots.values().cloned())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let preference = preference_rate(&ingestion.responses, &models);
            let matches = match bundles {
                Some(path) => Some(match_rate(&ingestion.responses, &pipeline::read_bundles(&path)?)?),
                None => None,
            };
            let rankings = rank_images(&ingestion.responses, top_k, &model);
            let md = report::render_survey_report(&ingestion, &preference, &models, matches.as_ref(), &rankings, &model);
            write_text(out.as_deref(), &md)?;
        }
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Validate { config } => return cmd_validate(&config),
        Command::Run { config, manifest, out, no_caption_prompt, no_extraction } => {
            let mut flags = BTreeSet::new();
            if no_caption_prompt {
                flags.insert(AblationFlag::NoCaptionPrompt);
            }
            if no_extraction {
                flags.insert(AblationFlag::NoExtraction);
            }
            return cmd_run(&config, &manifest, out, flags);
        }
        Command::Score { config, bundles, out } => cmd_score(&config, &bundles, &out)?,
        Command::Report { bundles, scores, out } => cmd_report(&bundles, &scores, out.as_deref())?,
        Command::Questions(cmd) => cmd_questions(cmd)?,
        Command::Survey(cmd) => cmd_survey(cmd)?,
    }
    Ok(ExitCode::SUCCESS)
}
