//! Command-line workflows: extract, convert, check, audit, eval, validate.
//!
//! Machine-readable diagnostics go to stderr as JSON lines; outputs land in
//! the directory given by `--out` and nowhere else. Exit codes: 0 success,
//! 1 fatal, 2 partial success (some segments failed during extraction).

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use privacheck_core::audit::{audit, summary_table};
use privacheck_core::convert::convert_document;
use privacheck_core::diag::{Diagnostic, Severity};
use privacheck_core::extraction::backend::{
    BackendConfig, HttpBackend, MockBackend, ModelBackend, RetryPolicy,
};
use privacheck_core::extraction::prompts::PromptSet;
use privacheck_core::extraction::{DocumentExtraction, Extractor};
use privacheck_core::metrics::evaluate_dumps;
use privacheck_core::policy::{
    parse_app_policy, parse_profile, serialize_app_policy, validate_app_policy, validate_profile,
    AppPolicy, UserProfile,
};
use privacheck_core::reason::{check_compliance, ConflictReport};
use privacheck_core::vocab::{load_vocabulary_file, ConceptHierarchy};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "privacheck",
    about = "Convert privacy-policy text into formal app policies and check them against user preferences",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory (created if missing); no command writes elsewhere.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the extraction pipeline over policy text files.
    Extract {
        /// Policy text files (UTF-8, one segment per line).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Vocabulary file for grounding classification output.
        #[arg(long)]
        vocab: PathBuf,
        /// Remote backend config (JSON). Mutually exclusive with --mock-fixtures.
        #[arg(long, conflicts_with = "mock_fixtures")]
        backend: Option<PathBuf>,
        /// Directory of recorded mock responses; replays deterministically.
        #[arg(long)]
        mock_fixtures: Option<PathBuf>,
        /// Worker cap for segment fan-out (overrides backend config).
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Convert practice dumps into formal app policies.
    Convert {
        /// Practice dump files produced by `extract`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        /// App id for the output policy; defaults to the dump's doc_id.
        #[arg(long)]
        app_id: Option<String>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Check app policies against every profile in a pack.
    Check {
        /// App policy files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        /// Directory of user-profile JSON files.
        #[arg(long)]
        profiles: PathBuf,
        /// Worker cap for (policy × profile) fan-out.
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Aggregate a directory of conflict reports into audit statistics.
    Audit {
        /// Directory containing `{app}__{profile}.report` files.
        reports: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Score prediction dumps against gold dumps, per task.
    Eval {
        /// Gold practice dump (file, or directory of `*.practices.json`).
        #[arg(long)]
        gold: PathBuf,
        /// Prediction dump (file or directory, matched by file name).
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Validate app policies or profiles against the vocabulary.
    Validate {
        /// Policy or profile JSON files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{}", diag_line(&Diagnostic::error("privacheck", format!("{err:#}"))));
            ExitCode::from(1)
        }
    }
}

fn diag_line(d: &Diagnostic) -> String {
    serde_json::to_string(d).expect("diagnostic serializes")
}

fn emit_diags(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}", diag_line(d));
    }
}

fn require_readable(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("input path {} does not exist", path.display());
    }
    Ok(())
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn load_vocab(path: &Path) -> Result<ConceptHierarchy> {
    require_readable(path)?;
    load_vocabulary_file(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn doc_id_of(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("document");
    name.strip_suffix(".txt")
        .or_else(|| name.strip_suffix(".practices.json"))
        .or_else(|| name.strip_suffix(".policy.json"))
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name)
        .to_string()
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Extract { inputs, vocab, backend, mock_fixtures, workers, out } => cmd_extract(
            &inputs,
            &vocab,
            backend.as_deref(),
            mock_fixtures.as_deref(),
            workers,
            &out.out,
        ),
        Command::Convert { inputs, vocab, app_id, out } => {
            cmd_convert(&inputs, &vocab, app_id.as_deref(), &out.out)
        }
        Command::Check { inputs, vocab, profiles, workers, out } => {
            cmd_check(&inputs, &vocab, &profiles, workers, &out.out)
        }
        Command::Audit { reports, out } => cmd_audit(&reports, &out.out),
        Command::Eval { gold, pred, out } => cmd_eval(&gold, &pred, &out.out),
        Command::Validate { inputs, vocab } => cmd_validate(&inputs, &vocab),
    }
}

fn cmd_extract(
    inputs: &[PathBuf],
    vocab: &Path,
    backend_cfg: Option<&Path>,
    mock_fixtures: Option<&Path>,
    workers: Option<usize>,
    out: &Path,
) -> Result<ExitCode> {
    // fail fast: resolve everything before the first model call
    for input in inputs {
        require_readable(input)?;
    }
    let hierarchy = load_vocab(vocab)?;
    ensure_out(out)?;

    let mut prompts = PromptSet::default();
    let mut worker_cap = workers.unwrap_or(4);
    let mut retry = RetryPolicy::default();
    let backend: Box<dyn ModelBackend> = match (backend_cfg, mock_fixtures) {
        (None, Some(dir)) => {
            require_readable(dir)?;
            Box::new(MockBackend::from_dir(dir)?)
        }
        (Some(cfg_path), None) => {
            require_readable(cfg_path)?;
            let cfg = BackendConfig::from_file(cfg_path)?;
            if let Some(dir) = &cfg.prompt_dir {
                prompts = PromptSet::from_dir(dir)?;
            }
            if workers.is_none() {
                worker_cap = cfg.workers;
            }
            retry = cfg.retry;
            Box::new(HttpBackend::from_config(&cfg)?)
        }
        _ => bail!("exactly one of --backend or --mock-fixtures is required"),
    };

    let mut extractor = Extractor::new(backend.as_ref());
    extractor.prompts = prompts;
    extractor.workers = worker_cap;
    extractor.retry = retry;

    let mut partial = false;
    for input in inputs {
        let doc_id = doc_id_of(input);
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
        let (dump, diags) = extractor.extract_document(&hierarchy, &doc_id, &text);
        emit_diags(&diags);
        let mut diag_text = String::new();
        for d in &diags {
            diag_text.push_str(&diag_line(d));
            diag_text.push('\n');
        }
        let diag_path = out.join(format!("{doc_id}.diagnostics.jsonl"));
        std::fs::write(&diag_path, diag_text)
            .with_context(|| format!("writing {}", diag_path.display()))?;
        let dump_path = out.join(format!("{doc_id}.practices.json"));
        std::fs::write(&dump_path, dump.serialize())
            .with_context(|| format!("writing {}", dump_path.display()))?;
        if diags.iter().any(|d| d.severity == Severity::Error) {
            partial = true;
        }
    }
    Ok(ExitCode::from(if partial { 2 } else { 0 }))
}

fn cmd_convert(
    inputs: &[PathBuf],
    vocab: &Path,
    app_id: Option<&str>,
    out: &Path,
) -> Result<ExitCode> {
    for input in inputs {
        require_readable(input)?;
    }
    if app_id.is_some() && inputs.len() > 1 {
        bail!("--app-id only applies to a single input dump");
    }
    let hierarchy = load_vocab(vocab)?;
    ensure_out(out)?;
    for input in inputs {
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
        let dump = DocumentExtraction::parse(&text)
            .with_context(|| format!("parsing practice dump {}", input.display()))?;
        let app = app_id.unwrap_or(&dump.doc_id).to_string();
        let converted = convert_document(&dump, &app, &hierarchy);
        emit_diags(&converted.diagnostics);
        let path = out.join(format!("{app}.policy.json"));
        std::fs::write(&path, serialize_app_policy(&converted.policy))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::from(0))
}

fn load_profile_pack(dir: &Path, hierarchy: &ConceptHierarchy) -> Result<Vec<UserProfile>> {
    require_readable(dir)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading profile pack {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("profile pack {} contains no .json profiles", dir.display());
    }
    let mut profiles = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let profile = parse_profile(&text, Some(hierarchy))
            .with_context(|| format!("parsing profile {}", path.display()))?;
        profiles.push(profile);
    }
    Ok(profiles)
}

fn cmd_check(
    inputs: &[PathBuf],
    vocab: &Path,
    profile_dir: &Path,
    workers: usize,
    out: &Path,
) -> Result<ExitCode> {
    for input in inputs {
        require_readable(input)?;
    }
    let hierarchy = load_vocab(vocab)?;
    let profiles = load_profile_pack(profile_dir, &hierarchy)?;
    ensure_out(out)?;

    let mut policies: Vec<AppPolicy> = Vec::new();
    for input in inputs {
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
        let policy = parse_app_policy(&text, Some(&hierarchy))
            .with_context(|| format!("validating app policy {}", input.display()))?;
        policies.push(policy);
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let mut reports: Vec<ConflictReport> = pool.install(|| {
        use rayon::prelude::*;
        policies
            .par_iter()
            .flat_map(|policy| {
                profiles
                    .par_iter()
                    .map(|profile| check_compliance(policy, profile, &hierarchy))
            })
            .collect()
    });
    reports.sort_by(|a, b| (&a.app_id, &a.profile_id).cmp(&(&b.app_id, &b.profile_id)));
    for report in &reports {
        let path = out.join(format!("{}__{}.report", report.app_id, report.profile_id));
        std::fs::write(&path, report.serialize())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::from(0))
}

fn cmd_audit(reports_dir: &Path, out: &Path) -> Result<ExitCode> {
    require_readable(reports_dir)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(reports_dir)
        .with_context(|| format!("reading {}", reports_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".report")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{} contains no .report files", reports_dir.display());
    }
    ensure_out(out)?;
    let mut reports = Vec::new();
    for path in &paths {
        let stem = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".report"))
            .unwrap_or_default();
        let Some((app, profile)) = stem.split_once("__") else {
            bail!(
                "report filename {} does not follow {{app}}__{{profile}}.report",
                path.display()
            );
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let report = ConflictReport::parse(&text)
            .with_context(|| format!("parsing report {}", path.display()))?;
        if report.app_id != app || report.profile_id != profile {
            bail!(
                "report {} names ({}, {}) but the filename says ({app}, {profile})",
                path.display(),
                report.app_id,
                report.profile_id
            );
        }
        reports.push(report);
    }
    let summary = audit(&reports)?;
    std::fs::write(out.join("audit-summary.json"), summary.serialize())
        .context("writing audit-summary.json")?;
    std::fs::write(out.join("audit-table.csv"), summary_table(&summary))
        .context("writing audit-table.csv")?;
    Ok(ExitCode::from(0))
}

fn collect_dumps(path: &Path) -> Result<Vec<(String, DocumentExtraction)>> {
    require_readable(path)?;
    let mut files = Vec::new();
    if path.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".practices.json"))
            })
            .collect();
        paths.sort();
        files.extend(paths);
    } else {
        files.push(path.to_path_buf());
    }
    let mut dumps = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(&file)
            .with_context(|| format!("reading {}", file.display()))?;
        let dump = DocumentExtraction::parse(&text)
            .with_context(|| format!("parsing practice dump {}", file.display()))?;
        let name = file.file_name().unwrap().to_string_lossy().to_string();
        dumps.push((name, dump));
    }
    Ok(dumps)
}

fn cmd_eval(gold: &Path, pred: &Path, out: &Path) -> Result<ExitCode> {
    let gold_dumps = collect_dumps(gold)?;
    let pred_dumps = collect_dumps(pred)?;
    if gold.is_dir() || pred.is_dir() {
        let gold_names: Vec<&String> = gold_dumps.iter().map(|(n, _)| n).collect();
        let pred_names: Vec<&String> = pred_dumps.iter().map(|(n, _)| n).collect();
        if gold_names != pred_names {
            bail!("gold and prediction dumps do not pair up: {gold_names:?} vs {pred_names:?}");
        }
    }
    ensure_out(out)?;
    let gold_docs: Vec<DocumentExtraction> = gold_dumps.into_iter().map(|(_, d)| d).collect();
    let pred_docs: Vec<DocumentExtraction> = pred_dumps.into_iter().map(|(_, d)| d).collect();
    let report = evaluate_dumps(&gold_docs, &pred_docs)?;
    std::fs::write(out.join("task-scores.json"), report.serialize())
        .context("writing task-scores.json")?;
    for score in &report.scores {
        println!(
            "{}: f1_n={:.4} f1_e={:.4} f1={:.4}",
            score.task, score.f1_nonempty, score.f1_empty, score.f1_macro
        );
    }
    Ok(ExitCode::from(0))
}

fn cmd_validate(inputs: &[PathBuf], vocab: &Path) -> Result<ExitCode> {
    for input in inputs {
        require_readable(input)?;
    }
    let hierarchy = load_vocab(vocab)?;
    let mut failed = false;
    for input in inputs {
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", input.display()))?;
        let diags = if value.get("input_specs").is_some() {
            match parse_app_policy(&text, None) {
                Ok(policy) => validate_app_policy(&policy, Some(&hierarchy)),
                Err(e) => vec![Diagnostic::error(input.display().to_string(), e.to_string())],
            }
        } else if value.get("policies").is_some() {
            match parse_profile(&text, None) {
                Ok(profile) => validate_profile(&profile, Some(&hierarchy)),
                Err(e) => vec![Diagnostic::error(input.display().to_string(), e.to_string())],
            }
        } else {
            vec![Diagnostic::error(
                input.display().to_string(),
                "not an app policy (input_specs) or profile (policies) document",
            )]
        };
        emit_diags(&diags);
        if diags.iter().any(|d| d.severity == Severity::Error) {
            failed = true;
        } else {
            println!("{}: ok", input.display());
        }
    }
    Ok(ExitCode::from(if failed { 1 } else { 0 }))
}
