//! Subcommand implementations.
//!
//! All corpus work follows the same plan: load and join the files,
//! fan the per-sample stage out over a rayon pool in input order, then
//! reduce sequentially so outputs are byte-identical run to run.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use forgeval::cct::{self, Finding, FindingCode, Severity};
use forgeval::config::Settings;
use forgeval::corpus::{
    self, PredictionRecord, RewardLogRecord, RewardsInput, SCHEMA_VERSION,
};
use forgeval::grpo;
use forgeval::metrics::{self, MetricsSummary, SummaryOptions};
use forgeval::model::GroundTruthRecord;
use forgeval::reward::Scorer;

/// Arguments shared by every corpus-reading subcommand.
#[derive(Args)]
pub struct CorpusArgs {
    /// Predictions file (JSONL: sample_id, raw_output).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth file (JSONL).
    #[arg(long)]
    gt: PathBuf,
    /// Config file (flat key = value lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Evaluate the intersection when the id sets differ, instead of
    /// failing.
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Assign contiguous rollout groups of this size in the reward log.
    #[arg(long)]
    group_size: Option<usize>,
    /// Output reward log (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Sidecar of externally computed explanation F1 scores (JSONL:
    /// sample_id, bertscore_f1).
    #[arg(long)]
    bertscore: Option<PathBuf>,
    /// Use CSS as the explanation term of the composite when no external
    /// explanation F1 is available; the column is labeled M-F1(CSS).
    #[arg(long)]
    mf1_css_substitute: bool,
    /// Output metrics file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Output per-record diagnostics file (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct AdvantagesArgs {
    /// Rewards to normalize: a reward log (JSONL) or a bare JSON array.
    #[arg(long)]
    rewards: PathBuf,
    /// Group size for contiguous grouping; required for bare arrays,
    /// overrides group ids in reward logs.
    #[arg(long)]
    group_size: Option<usize>,
    /// Stabilizer added to each group's standard deviation.
    #[arg(long, default_value_t = grpo::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Output advantages file (bare JSON array).
    #[arg(long)]
    out: PathBuf,
}

fn load_settings(config: Option<&Path>) -> anyhow::Result<Settings> {
    let mut settings = match config {
        Some(path) => Settings::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => Settings::default(),
    };
    settings.apply_process_env();
    settings.check_invariants()?;
    Ok(settings)
}

fn print_warnings(warnings: &[String]) {
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
}

/// Both corpus files plus the join: `pairs` holds `(prediction index,
/// ground-truth index)` in prediction-file order.
struct LoadedCorpora {
    gt: Vec<GroundTruthRecord>,
    pred: Vec<PredictionRecord>,
    pairs: Vec<(usize, usize)>,
}

/// Loads both corpus files and joins them by sample id.
fn load_joined(args: &CorpusArgs) -> anyhow::Result<LoadedCorpora> {
    let gt = corpus::load_ground_truth(&args.gt)
        .with_context(|| format!("reading ground truth {}", args.gt.display()))?;
    print_warnings(&gt.warnings);
    let pred = corpus::load_predictions(&args.pred)
        .with_context(|| format!("reading predictions {}", args.pred.display()))?;
    print_warnings(&pred.warnings);

    let (joined, warnings) = corpus::join_corpora(&pred.records, &gt.records, args.allow_partial)?;
    print_warnings(&warnings);

    // Resolve the joined references to indices so the records can be
    // returned by value alongside the pairing.
    let gt_index: HashMap<&str, usize> = gt
        .records
        .iter()
        .enumerate()
        .map(|(i, g)| (g.sample_id.as_str(), i))
        .collect();
    let pred_index: HashMap<&str, usize> = pred
        .records
        .iter()
        .enumerate()
        .map(|(i, p)| (p.sample_id.as_str(), i))
        .collect();
    let pairs: Vec<(usize, usize)> = joined
        .iter()
        .map(|(p, g)| (pred_index[p.sample_id.as_str()], gt_index[g.sample_id.as_str()]))
        .collect();
    Ok(LoadedCorpora {
        gt: gt.records,
        pred: pred.records,
        pairs,
    })
}

fn build_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")
}

/// Runs the per-sample stage in parallel, preserving input order, then
/// surfaces the first error by position so failures are deterministic.
fn run_ordered<T, F>(jobs: usize, pairs: &[(usize, usize)], stage: F) -> anyhow::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, usize) -> Result<T, forgeval::Error> + Sync,
{
    let pool = build_pool(jobs)?;
    let results: Vec<Result<T, forgeval::Error>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(pred_idx, gt_idx)| stage(pred_idx, gt_idx))
            .collect()
    });
    let mut out = Vec::with_capacity(results.len());
    for result in results {
        out.push(result?);
    }
    Ok(out)
}

pub fn score(args: &ScoreArgs) -> anyhow::Result<u8> {
    let settings = load_settings(args.corpus.config.as_deref())?;
    if let Some(size) = args.group_size {
        anyhow::ensure!(size >= 2, "--group-size must be at least 2");
    }
    let embedder = settings.build_embedder()?;
    let LoadedCorpora { gt, pred, pairs } = load_joined(&args.corpus)?;
    let config_hash = settings.content_hash();

    let scorer = Scorer::new(&settings.reward, &settings.keywords, embedder.as_ref());
    let breakdowns = run_ordered(args.corpus.jobs, &pairs, |pred_idx, gt_idx| {
        scorer.score(&pred[pred_idx].raw_output, &gt[gt_idx])
    })?;

    let records: Vec<RewardLogRecord> = breakdowns
        .into_iter()
        .enumerate()
        .map(|(i, breakdown)| RewardLogRecord {
            schema_version: SCHEMA_VERSION,
            sample_id: pred[pairs[i].0].sample_id.clone(),
            group_id: args.group_size.map(|size| format!("g{}", i / size)),
            config_hash: config_hash.clone(),
            breakdown,
        })
        .collect();
    corpus::write_reward_log(&args.out, &records)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let mean: f64 =
        records.iter().map(|r| r.breakdown.r_total).sum::<f64>() / records.len() as f64;
    println!(
        "scored {} sample(s); mean reward {mean:.4}; config {config_hash}",
        records.len()
    );
    Ok(0)
}

/// The evaluate subcommand's JSON artifact.
#[derive(Serialize)]
struct EvaluationOutput {
    schema_version: u32,
    config_hash: String,
    metrics: MetricsSummary,
}

pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<u8> {
    let settings = load_settings(args.corpus.config.as_deref())?;
    let embedder = settings.build_embedder()?;
    let LoadedCorpora { gt, pred, pairs } = load_joined(&args.corpus)?;

    let sidecar: Option<HashMap<String, f64>> = match args.bertscore.as_deref() {
        Some(path) => {
            let loaded = corpus::load_bertscore_sidecar(path)
                .with_context(|| format!("reading explanation scores {}", path.display()))?;
            print_warnings(&loaded.warnings);
            let known: std::collections::HashSet<&str> =
                gt.iter().map(|g| g.sample_id.as_str()).collect();
            let stray = loaded
                .records
                .iter()
                .filter(|(id, _)| !known.contains(id.as_str()))
                .count();
            if stray > 0 {
                eprintln!(
                    "warning: {stray} explanation score(s) reference unknown sample ids; ignored"
                );
            }
            Some(loaded.records.into_iter().collect())
        }
        None => None,
    };

    let mut evals = run_ordered(args.corpus.jobs, &pairs, |pred_idx, gt_idx| {
        Ok(metrics::sample_eval(
            &pred[pred_idx].raw_output,
            &gt[gt_idx],
            &settings.keywords,
            &settings.reward.tags,
        ))
    })?;
    if let Some(scores) = &sidecar {
        for eval in &mut evals {
            if let Some(value) = scores.get(&eval.sample_id) {
                eval.bertscore_f1 = Some(*value);
            }
        }
    }

    let options = SummaryOptions {
        mf1_css_substitute: args.mf1_css_substitute,
    };
    let summary = metrics::summarize(&evals, embedder.as_ref(), &options)?;
    print_warnings(&summary.warnings);

    let output = EvaluationOutput {
        schema_version: SCHEMA_VERSION,
        config_hash: settings.content_hash(),
        metrics: summary,
    };
    let json = serde_json::to_string_pretty(&output)?;
    std::fs::write(&args.out, json + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;

    print!("{}", output.metrics.format_table());
    Ok(0)
}

/// One record's validation result, as written to the diagnostics file.
#[derive(Serialize)]
struct ValidationRecord {
    schema_version: u32,
    sample_id: String,
    structurally_valid: bool,
    findings: Vec<Finding>,
}

pub fn validate(args: &ValidateArgs) -> anyhow::Result<u8> {
    let settings = load_settings(args.corpus.config.as_deref())?;
    // The join is still wanted here: it guarantees every prediction has a
    // reference record, even though trace checks only read the prediction.
    let LoadedCorpora { gt: _, pred, pairs } = load_joined(&args.corpus)?;

    let records = run_ordered(args.corpus.jobs, &pairs, |pred_idx, _gt_idx| {
        let raw = &pred[pred_idx].raw_output;
        let parsed = forgeval::parser::parse_prediction(raw, &settings.keywords, &settings.reward.tags);
        let findings = match &parsed.report {
            Some(report) => {
                let think = parsed.sections.think_text.as_deref().unwrap_or("");
                let trace = cct::parse_trace(think);
                cct::validate(&trace, report).findings
            }
            None => {
                // Without a report there is nothing to cross-check the
                // trace against; report that one structural failure.
                let (code, detail) = if raw.contains(settings.reward.tags.report_open.as_str()) {
                    (FindingCode::ReportInvalid, "report block does not parse")
                } else {
                    (FindingCode::ReportMissing, "no report block found")
                };
                let message = match &parsed.report_error {
                    Some(err) => format!("{detail}: {err}"),
                    None => detail.to_string(),
                };
                vec![Finding {
                    code,
                    severity: Severity::Error,
                    message,
                    location: None,
                }]
            }
        };
        let structurally_valid = findings.iter().all(|f| f.severity != Severity::Error);
        Ok(ValidationRecord {
            schema_version: SCHEMA_VERSION,
            sample_id: pred[pred_idx].sample_id.clone(),
            structurally_valid,
            findings,
        })
    })?;

    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut writer = std::io::BufWriter::new(file);
    for record in &records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;

    let with_errors = records.iter().filter(|r| !r.structurally_valid).count();
    let with_warnings = records
        .iter()
        .filter(|r| r.structurally_valid && !r.findings.is_empty())
        .count();
    let clean = records.len() - with_errors - with_warnings;
    println!(
        "validated {} record(s): {clean} clean, {with_warnings} with warnings, {with_errors} with errors",
        records.len()
    );
    Ok(if with_errors > 0 { 1 } else { 0 })
}

pub fn advantages(args: &AdvantagesArgs) -> anyhow::Result<u8> {
    if let Some(size) = args.group_size {
        anyhow::ensure!(size >= 2, "--group-size must be at least 2");
    }
    anyhow::ensure!(
        args.epsilon.is_finite() && args.epsilon >= 0.0,
        "--epsilon must be a non-negative number"
    );
    let input = corpus::read_rewards_input(&args.rewards)
        .with_context(|| format!("reading rewards {}", args.rewards.display()))?;
    let rewards = input.rewards();

    let advantages = match (&input, args.group_size) {
        // Explicit size always wins: contiguous groups.
        (_, Some(size)) => grpo::batch_advantages(&rewards, size, args.epsilon)?,
        (RewardsInput::Array(_), None) => {
            anyhow::bail!("--group-size is required when the input is a bare reward array");
        }
        (RewardsInput::Log(records), None) => {
            // Group by the log's group ids, which may interleave; results
            // go back to each reward's original position.
            anyhow::ensure!(
                records.iter().all(|r| r.group_id.is_some()),
                "reward log records lack group_id values; pass --group-size instead"
            );
            let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
            let mut by_id: HashMap<&str, usize> = HashMap::new();
            for (index, record) in records.iter().enumerate() {
                let id = record.group_id.as_deref().unwrap();
                let slot = *by_id.entry(id).or_insert_with(|| {
                    groups.push((id, Vec::new()));
                    groups.len() - 1
                });
                groups[slot].1.push(index);
            }
            let mut out = vec![0.0; rewards.len()];
            for (id, indices) in &groups {
                let group: Vec<f64> = indices.iter().map(|&i| rewards[i]).collect();
                let normalized = grpo::group_advantages(&group, args.epsilon)
                    .with_context(|| format!("group \"{id}\""))?;
                for (&index, value) in indices.iter().zip(&normalized) {
                    out[index] = *value;
                }
            }
            out
        }
    };

    corpus::write_advantages(&args.out, &advantages)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let group_count = match (&input, args.group_size) {
        (_, Some(size)) => rewards.len() / size,
        (RewardsInput::Log(records), None) => {
            let mut ids: Vec<&str> = records.iter().filter_map(|r| r.group_id.as_deref()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        }
        (RewardsInput::Array(_), None) => unreachable!("rejected above"),
    };
    let mut line = format!(
        "normalized {} reward(s) in {group_count} group(s)",
        rewards.len()
    );
    if let RewardsInput::Log(records) = &input {
        let mut hashes: Vec<&str> = records.iter().map(|r| r.config_hash.as_str()).collect();
        hashes.sort_unstable();
        hashes.dedup();
        match hashes.as_slice() {
            [single] => line.push_str(&format!("; config {single}")),
            _ => eprintln!(
                "warning: reward log mixes {} different scoring configs",
                hashes.len()
            ),
        }
    }
    println!("{line}");
    Ok(0)
}
