//! Command-line entry point.
//!
//! Each subcommand is a thin adapter over one library operation: the
//! CLI only parses arguments, reads inputs, and writes the operation's
//! artifact. Output files are written atomically (temp file + rename).
//! Exit codes: 0 success, 1 data errors (prefixed with the originating
//! error name), 2 usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::catalog::SourceSinkCatalog;
use crate::classifier::{train, ForestModel, ForestParams, LabeledSample};
use crate::eval_harness::{
    cross_validate, holdout_eval, span_eval, summarize, summary_to_csv, EvalReport,
};
use crate::sad_extractor::{
    extract_profile, fmt_sig9, parse_profiles_csv, write_profiles_csv, ExtractOptions, ProfileRow,
    ReachabilityMode, VulnDenominator,
};
use crate::synth_gen::{manifest_csv, synth_corpus, CorpusSpec};
use crate::trace_model::{Label, Trace};

#[derive(Parser)]
#[command(
    name = "sadscan",
    version,
    about = "Sensitive-access trace analytics: profile extraction, detection, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract SAD profiles from traces into a profile CSV
    Extract(ExtractArgs),
    /// Lint trace (.trc) and catalog (.ssl) files
    Validate(ValidateArgs),
    /// Train a forest model from a profile CSV
    Train(TrainArgs),
    /// Classify traces or profiles with a trained model
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation on a profile CSV
    Crossval(CrossvalArgs),
    /// Stratified train/test holdout evaluation on a profile CSV
    Holdout(HoldoutArgs),
    /// Train on one profile CSV, test against later-year CSVs in order
    Span(SpanArgs),
    /// Per-group feature means with 0.95 confidence intervals
    Summarize(SummarizeArgs),
    /// Generate a synthetic trace corpus from a spec file
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ReachabilityFlag {
    /// Call-graph reachability plus a source-before-sink witness
    Temporal,
    /// Call-graph reachability only
    GraphOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenominatorFlag {
    /// f42–f52 over all source/sink instances
    LiteralTable,
    /// f42–f52 over instances of vulnerable callsites only
    VulnerableOnly,
}

#[derive(Args, Clone, Copy)]
struct ExtractFlags {
    #[arg(long, value_enum, default_value_t = ReachabilityFlag::Temporal)]
    reachability: ReachabilityFlag,
    #[arg(long, value_enum, default_value_t = DenominatorFlag::LiteralTable)]
    denominator: DenominatorFlag,
}

impl ExtractFlags {
    fn options(&self) -> ExtractOptions {
        ExtractOptions {
            reachability: match self.reachability {
                ReachabilityFlag::Temporal => ReachabilityMode::Temporal,
                ReachabilityFlag::GraphOnly => ReachabilityMode::GraphOnly,
            },
            vuln_denominator: match self.denominator {
                DenominatorFlag::LiteralTable => VulnDenominator::AllInstances,
                DenominatorFlag::VulnerableOnly => VulnDenominator::VulnerableOnly,
            },
        }
    }
}

#[derive(Args, Clone, Copy)]
struct ForestFlags {
    /// Number of trees in the forest
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Depth cap per tree (unlimited when omitted)
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    /// Features considered per split (default ⌈√52⌉)
    #[arg(long, default_value_t = 8)]
    features_per_split: usize,
    /// Grow each tree on the full sample instead of a bootstrap resample
    #[arg(long)]
    no_bootstrap: bool,
}

impl ForestFlags {
    fn params(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            features_per_split: self.features_per_split,
            bootstrap: !self.no_bootstrap,
            seed,
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Source/sink catalog (.ssl)
    #[arg(long)]
    catalog: PathBuf,
    /// Output profile CSV
    #[arg(long)]
    out: PathBuf,
    /// Optional manifest CSV overriding header label/year per app_id
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    extract: ExtractFlags,
    /// Trace files or directories containing .trc files
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Trace (.trc) or catalog (.ssl) files, or directories of traces
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training profile CSV
    #[arg(long)]
    profiles: PathBuf,
    /// Output model file (.sadmodel)
    #[arg(long)]
    out: PathBuf,
    /// Training seed
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    forest: ForestFlags,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model (.sadmodel)
    #[arg(long)]
    model: PathBuf,
    /// Output verdict CSV
    #[arg(long)]
    out: PathBuf,
    /// Catalog, required when classifying .trc inputs
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[command(flatten)]
    extract: ExtractFlags,
    /// Profile CSVs or trace files/directories
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct CrossvalArgs {
    #[arg(long)]
    profiles: PathBuf,
    /// Output report CSV
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[command(flatten)]
    forest: ForestFlags,
}

#[derive(Args)]
struct HoldoutArgs {
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Fraction of each class reserved for testing
    #[arg(long, default_value_t = 0.30)]
    test_fraction: f64,
    #[command(flatten)]
    forest: ForestFlags,
}

#[derive(Args)]
struct SpanArgs {
    /// Training profile CSV
    #[arg(long)]
    train: PathBuf,
    /// Test profile CSVs, one per span year, oldest first (repeatable)
    #[arg(long = "test", required = true)]
    test: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    forest: ForestFlags,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    profiles: PathBuf,
    /// Output summary-stat CSV
    #[arg(long)]
    out: PathBuf,
    /// Manifest CSV with a group_tag column to group by instead of
    /// label and year
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus spec file
    #[arg(long)]
    spec: PathBuf,
    /// Output directory (created if missing; its traces/ subdirectory
    /// is replaced)
    #[arg(long)]
    out_dir: PathBuf,
    /// Override the spec's seed
    #[arg(long)]
    seed: Option<u64>,
}

/// A data-level failure: the originating module's error name plus a
/// human-readable message.
#[derive(Debug)]
pub struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::new("Io", format!("{}: {err}", path.display()))
    }

    pub fn code(&self) -> &str {
        self.code
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return err.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error[{}]: {}", err.code, err.message);
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Extract(args) => cmd_extract(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Crossval(args) => cmd_crossval(args),
        Command::Holdout(args) => cmd_holdout(args),
        Command::Span(args) => cmd_span(args),
        Command::Summarize(args) => cmd_summarize(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes via a temp file in the destination directory plus rename, so
/// readers never observe partial output.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Expands directory inputs into their .trc files, sorted for
/// reproducible processing order.
fn collect_trace_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::io(input, e))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("trc"))
                .collect();
            entries.sort();
            paths.extend(entries);
        } else {
            paths.push(input.clone());
        }
    }
    if paths.is_empty() {
        return Err(CliError::new(
            "NoInputs",
            "no trace files found in the given inputs",
        ));
    }
    Ok(paths)
}

fn load_catalog(path: &Path) -> Result<SourceSinkCatalog, CliError> {
    SourceSinkCatalog::parse(&read_file(path)?)
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))
}

fn load_trace(path: &Path) -> Result<Trace, CliError> {
    Trace::parse(&read_file(path)?)
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))
}

fn load_profiles(path: &Path) -> Result<Vec<ProfileRow>, CliError> {
    parse_profiles_csv(&read_file(path)?)
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))
}

fn rows_to_samples(path: &Path, rows: &[ProfileRow]) -> Result<Vec<LabeledSample>, CliError> {
    rows.iter()
        .map(|row| {
            LabeledSample::try_from(row)
                .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))
        })
        .collect()
}

struct ManifestEntry {
    label: Label,
    year: i32,
    group_tag: Option<String>,
}

fn parse_manifest(path: &Path) -> Result<BTreeMap<String, ManifestEntry>, CliError> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::new("InvalidUtf8", format!("{}: not UTF-8", path.display())))?;
    let mut lines = text.lines().enumerate();
    let has_group = match lines.next() {
        Some((_, "app_id,label,year,group_tag")) => true,
        Some((_, "app_id,label,year")) => false,
        _ => {
            return Err(CliError::new(
                "MalformedRow",
                format!(
                    "{}: expected an `app_id,label,year[,group_tag]` header",
                    path.display()
                ),
            ));
        }
    };
    let mut entries = BTreeMap::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| {
            CliError::new(
                "MalformedRow",
                format!("{}:{}: {reason}", path.display(), idx + 1),
            )
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != if has_group { 4 } else { 3 } {
            return Err(bad("wrong field count".into()));
        }
        let label =
            Label::parse(fields[1]).ok_or_else(|| bad(format!("unknown label {:?}", fields[1])))?;
        let year: i32 = fields[2]
            .parse()
            .map_err(|_| bad(format!("non-numeric year {:?}", fields[2])))?;
        entries.insert(
            fields[0].to_string(),
            ManifestEntry {
                label,
                year,
                group_tag: fields.get(3).map(|s| s.to_string()),
            },
        );
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// Subcommands

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    let catalog = load_catalog(&args.catalog)?;
    let manifest = args.manifest.as_deref().map(parse_manifest).transpose()?;
    let options = args.extract.options();
    let mut rows = Vec::new();
    for path in collect_trace_paths(&args.inputs)? {
        let mut trace = load_trace(&path)?;
        if let Some(entry) = manifest.as_ref().and_then(|m| m.get(&trace.app_id)) {
            trace.label = entry.label;
            trace.year = entry.year;
        }
        let profile = extract_profile(&trace, &catalog, &options)
            .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))?;
        rows.push(ProfileRow::from(&profile));
    }
    let csv = write_profiles_csv(&rows).map_err(|e| CliError::new(e.code(), e.to_string()))?;
    write_atomic(&args.out, &csv)?;
    println!("wrote {} profiles to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let mut paths = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            paths.extend(collect_trace_paths(std::slice::from_ref(input))?);
        } else {
            paths.push(input.clone());
        }
    }
    let mut problems = 0usize;
    for path in &paths {
        if path.extension().and_then(|e| e.to_str()) == Some("ssl") {
            match SourceSinkCatalog::parse(&read_file(path)?) {
                Ok(c) => println!(
                    "OK {} ({} sources, {} sinks)",
                    path.display(),
                    c.source_count(),
                    c.sink_count()
                ),
                Err(e) => {
                    problems += 1;
                    println!("FAIL {}: [{}] {e}", path.display(), e.code());
                }
            }
            continue;
        }
        match Trace::parse(&read_file(path)?) {
            Ok(trace) => {
                let findings = trace.validate();
                if findings.is_empty() {
                    println!("OK {} ({} records)", path.display(), trace.records.len());
                } else {
                    problems += findings.len();
                    for f in findings {
                        println!("FAIL {}: {f}", path.display());
                    }
                }
            }
            Err(e) => {
                problems += 1;
                println!("FAIL {}: [{}] {e}", path.display(), e.code());
            }
        }
    }
    if problems > 0 {
        return Err(CliError::new(
            "ValidationFindings",
            format!("{problems} problem(s) found"),
        ));
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let rows = load_profiles(&args.profiles)?;
    let samples = rows_to_samples(&args.profiles, &rows)?;
    let params = args.forest.params(args.seed);
    let model = train(&samples, &params).map_err(|e| CliError::new(e.code(), e.to_string()))?;
    write_atomic(&args.out, &model.save())?;
    println!(
        "trained {} trees on {} samples (fingerprint {}) -> {}",
        params.n_trees,
        samples.len(),
        model.training_fingerprint,
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let model = ForestModel::load(&read_file(&args.model)?)
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", args.model.display())))?;
    let options = args.extract.options();

    let mut rows: Vec<ProfileRow> = Vec::new();
    let mut trace_inputs: Vec<PathBuf> = Vec::new();
    for input in &args.inputs {
        if input.extension().and_then(|e| e.to_str()) == Some("csv") {
            rows.extend(load_profiles(input)?);
        } else {
            trace_inputs.push(input.clone());
        }
    }
    if !trace_inputs.is_empty() {
        let catalog_path = args.catalog.as_ref().ok_or_else(|| {
            CliError::new(
                "MissingCatalog",
                "classifying .trc inputs requires --catalog",
            )
        })?;
        let catalog = load_catalog(catalog_path)?;
        for path in collect_trace_paths(&trace_inputs)? {
            let trace = load_trace(&path)?;
            let profile = extract_profile(&trace, &catalog, &options)
                .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))?;
            rows.push(ProfileRow::from(&profile));
        }
    }
    if rows.is_empty() {
        return Err(CliError::new(
            "NoInputs",
            "no profiles or traces to classify",
        ));
    }

    let mut out = String::from("app_id,true_label,prediction,score\n");
    for row in &rows {
        let score = model.predict_score(&row.features);
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.app_id,
            row.label,
            model.predict(&row.features),
            fmt_sig9(score)
        ));
    }
    write_atomic(&args.out, &out)?;
    println!("classified {} inputs -> {}", rows.len(), args.out.display());
    Ok(())
}

fn finish_report(report: &EvalReport, out: &Path) -> Result<(), CliError> {
    write_atomic(out, &report.to_csv())?;
    print!("{}", report.render_table());
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_crossval(args: CrossvalArgs) -> Result<(), CliError> {
    let rows = load_profiles(&args.profiles)?;
    let samples = rows_to_samples(&args.profiles, &rows)?;
    let report = cross_validate(
        &samples,
        &args.forest.params(args.seed),
        args.folds,
        args.seed,
    )
    .map_err(|e| CliError::new(e.code(), e.to_string()))?;
    finish_report(&report, &args.out)
}

fn cmd_holdout(args: HoldoutArgs) -> Result<(), CliError> {
    let rows = load_profiles(&args.profiles)?;
    let samples = rows_to_samples(&args.profiles, &rows)?;
    let report = holdout_eval(
        &samples,
        &args.forest.params(args.seed),
        args.test_fraction,
        args.seed,
    )
    .map_err(|e| CliError::new(e.code(), e.to_string()))?;
    finish_report(&report, &args.out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_span(args: SpanArgs) -> Result<(), CliError> {
    let train_rows = load_profiles(&args.train)?;
    let train_samples = rows_to_samples(&args.train, &train_rows)?;
    let mut test_sets = Vec::new();
    for path in &args.test {
        let rows = load_profiles(path)?;
        test_sets.push((stem(path), rows_to_samples(path, &rows)?));
    }
    let report = span_eval(
        &stem(&args.train),
        &train_samples,
        &test_sets,
        &args.forest.params(args.seed),
        args.seed,
    )
    .map_err(|e| CliError::new(e.code(), e.to_string()))?;
    finish_report(&report, &args.out)
}

fn cmd_summarize(args: SummarizeArgs) -> Result<(), CliError> {
    let rows = load_profiles(&args.profiles)?;
    let manifest = args.manifest.as_deref().map(parse_manifest).transpose()?;
    let mut groups: BTreeMap<String, Vec<[f64; crate::sad_extractor::FEATURE_COUNT]>> =
        BTreeMap::new();
    for row in &rows {
        let tag = manifest
            .as_ref()
            .and_then(|m| m.get(&row.app_id))
            .and_then(|e| e.group_tag.clone())
            .unwrap_or_else(|| format!("{}:{}", row.label, row.year));
        groups.entry(tag).or_default().push(row.features);
    }
    let groups: Vec<(String, Vec<[f64; crate::sad_extractor::FEATURE_COUNT]>)> =
        groups.into_iter().collect();
    let stats = summarize(&groups).map_err(|e| CliError::new(e.code(), e.to_string()))?;
    write_atomic(&args.out, &summary_to_csv(&stats))?;
    println!(
        "wrote {} summary rows ({} groups) to {}",
        stats.len(),
        groups.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut spec = CorpusSpec::parse(&read_file(&args.spec)?)
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = synth_corpus(&spec).map_err(|e| CliError::new(e.code(), e.to_string()))?;

    // Replace any previous traces/ wholesale: leftovers from an earlier,
    // larger run would otherwise leak into downstream extraction.
    let traces_dir = args.out_dir.join("traces");
    if traces_dir.exists() {
        fs::remove_dir_all(&traces_dir).map_err(|e| CliError::io(&traces_dir, e))?;
    }
    fs::create_dir_all(&traces_dir).map_err(|e| CliError::io(&traces_dir, e))?;
    for app in &corpus.apps {
        let path = traces_dir.join(format!("{}.trc", app.trace.app_id));
        write_atomic(&path, &app.trace.to_trc())?;
    }
    write_atomic(&args.out_dir.join("manifest.csv"), &manifest_csv(&corpus))?;
    write_atomic(&args.out_dir.join("catalog.ssl"), &corpus.catalog.to_ssl())?;
    println!(
        "wrote {} traces, manifest.csv and catalog.ssl to {}",
        corpus.apps.len(),
        args.out_dir.display()
    );
    Ok(())
}
