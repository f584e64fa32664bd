use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::Value;

use benchsem::diagnostics::benchmark_report;
use benchsem::estimator::{fit, EstimatorConfig};
use benchsem::model::{parse_scores, parse_taxonomy, validate, MissingPolicy, ScoreMatrix, ValidatedDataset};
use benchsem::pruner::{prune, PruneConfig};
use benchsem::rank_analysis::{composite_score, leaderboard_scores, rank_report, ModelScores, SubsetDef};
use benchsem::report::{self, to_canonical_json, Provenance};
use benchsem::simulator::{generate, SimSpec};
use benchsem::{Error, Result};

/// Audit a multi-task benchmark with a latent-construct model.
#[derive(Parser)]
#[command(name = "benchsem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and write every diagnostic.
    Analyze(AnalyzeArgs),
    /// Remove redundant or weak tasks until the thresholds hold.
    Prune(PruneArgs),
    /// Draw a score table from a planted latent structure.
    Simulate(SimulateArgs),
    /// Compare original, refined and human model rankings.
    Rank(RankArgs),
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Missing {
    Listwise,
    Reject,
}

impl From<Missing> for MissingPolicy {
    fn from(m: Missing) -> Self {
        match m {
            Missing::Listwise => MissingPolicy::Listwise,
            Missing::Reject => MissingPolicy::Reject,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    taxonomy: PathBuf,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    /// JSON file of defaults; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum)]
    missing_policy: Option<Missing>,
    /// Directory for per-metric CSV tables.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Two-column CSV: model id, human score.
    #[arg(long)]
    human: Option<PathBuf>,
}

#[derive(Args)]
struct PruneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    vif_threshold: Option<f64>,
    #[arg(long)]
    loading_threshold: Option<f64>,
    /// Where to write the refined taxonomy (default: next to the trace).
    #[arg(long)]
    refined_taxonomy: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the seed in the spec file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    /// Ground-truth sidecar path (default: `<output stem>.truth.json`).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    refined: PathBuf,
    #[arg(long)]
    human: PathBuf,
    /// Score the refined table by its latent composite under this taxonomy
    /// instead of the row mean.
    #[arg(long)]
    refined_taxonomy: Option<PathBuf>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    epsilon: Option<f64>,
    max_iter: Option<usize>,
    missing_policy: Option<Missing>,
    vif_threshold: Option<f64>,
    loading_threshold: Option<f64>,
    subsets: Option<Vec<SubsetDef>>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
    }
}

fn display(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

struct Loaded {
    data: ValidatedDataset,
    estimator: EstimatorConfig,
    file: FileConfig,
    provenance: Provenance,
}

fn load(common: &Common) -> Result<Loaded> {
    let file = load_config(common.config.as_deref())?;
    let estimator = EstimatorConfig {
        epsilon: common.epsilon.or(file.epsilon).unwrap_or(EstimatorConfig::default().epsilon),
        max_iter: common.max_iter.or(file.max_iter).unwrap_or(EstimatorConfig::default().max_iter),
    };
    estimator.validate()?;
    let missing = common.missing_policy.or(file.missing_policy).unwrap_or(Missing::Listwise);
    let scores = parse_scores(&read(&common.scores)?)?;
    let taxonomy = parse_taxonomy(&read(&common.taxonomy)?)?;
    let data = validate(&scores, &taxonomy, missing.into())?;
    let provenance = Provenance::default()
        .with("scores", display(&common.scores))
        .with("taxonomy", display(&common.taxonomy))
        .with(
            "missing_policy",
            match missing {
                Missing::Listwise => "listwise",
                Missing::Reject => "reject",
            },
        );
    Ok(Loaded {
        data,
        estimator,
        file,
        provenance,
    })
}

fn write_plot_data(dir: &Path, diag: &benchsem::diagnostics::DiagnosticsReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in report::plot_data(diag) {
        write(&dir.join(name), &text)?;
    }
    Ok(())
}

fn single_column_scores(path: &Path) -> Result<ModelScores> {
    let table = parse_scores(&read(path)?)?;
    if table.n_indicators() != 1 {
        return Err(Error::Config(format!(
            "{}: expected two columns (model id, score), found {}",
            path.display(),
            table.n_indicators() + 1
        )));
    }
    Ok(leaderboard_scores(&table))
}

fn run_analyze(args: &AnalyzeArgs) -> Result<()> {
    let Loaded { data, estimator, provenance, .. } = load(&args.common)?;
    let human = args.human.as_deref().map(single_column_scores).transpose()?;
    let provenance = match &args.human {
        Some(h) => provenance.with("human", display(h)),
        None => provenance,
    };
    let fitted = fit(&data, &estimator)?;
    let diag = benchmark_report(&fitted, &data, human.as_ref())?;
    let value = report::analyze_value(&diag, &data, &estimator, &provenance);
    write(&args.common.output, &to_canonical_json(&value))?;
    if let Some(dir) = &args.common.plot_data {
        write_plot_data(dir, &diag)?;
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn run_prune(args: &PruneArgs) -> Result<()> {
    let Loaded { data, estimator, file, provenance } = load(&args.common)?;
    let defaults = PruneConfig::default();
    let config = PruneConfig {
        vif_threshold: args.vif_threshold.or(file.vif_threshold).unwrap_or(defaults.vif_threshold),
        loading_threshold: args
            .loading_threshold
            .or(file.loading_threshold)
            .unwrap_or(defaults.loading_threshold),
        min_indicators: defaults.min_indicators,
        estimator,
    };
    let trace = prune(&data, &config)?;
    let value = report::prune_value(&trace, &data, &config, &provenance);
    write(&args.common.output, &to_canonical_json(&value))?;
    let taxonomy_path = args
        .refined_taxonomy
        .clone()
        .unwrap_or_else(|| sibling(&args.common.output, ".taxonomy.json"));
    write(&taxonomy_path, &report::taxonomy_text(&trace.final_taxonomy))?;
    if let Some(dir) = &args.common.plot_data {
        write_plot_data(dir, &trace.final_report)?;
    }
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec: SimSpec =
        serde_json::from_str(&read(&args.spec)?).map_err(|e| Error::Json(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let sim = generate(&spec)?;
    write(&args.output, &sim.scores.to_csv())?;
    let truth_path = args.truth.clone().unwrap_or_else(|| sibling(&args.output, ".truth.json"));
    write(&truth_path, &to_canonical_json(&report::truth_value(&sim.truth)))
}

fn refined_composite(scores: &ScoreMatrix, taxonomy_path: &Path) -> Result<ModelScores> {
    let taxonomy = parse_taxonomy(&read(taxonomy_path)?)?;
    let data = validate(scores, &taxonomy, MissingPolicy::Listwise)?;
    let fitted = fit(&data, &EstimatorConfig::default())?;
    Ok(composite_score(&fitted, &data)?.to_map())
}

fn run_rank(args: &RankArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let original = leaderboard_scores(&parse_scores(&read(&args.original)?)?);
    let refined_table = parse_scores(&read(&args.refined)?)?;
    let refined = match &args.refined_taxonomy {
        Some(t) => refined_composite(&refined_table, t)?,
        None => leaderboard_scores(&refined_table),
    };
    let human = single_column_scores(&args.human)?;
    let subsets = file.subsets.unwrap_or_else(SubsetDef::defaults);
    let rep = rank_report(&original, &refined, &human, &subsets);
    let mut provenance = Provenance::default()
        .with("original", display(&args.original))
        .with("refined", display(&args.refined))
        .with("human", display(&args.human));
    if let Some(t) = &args.refined_taxonomy {
        provenance = provenance.with("refined_taxonomy", display(t));
    }
    write(&args.output, &to_canonical_json(&report::rank_value(&rep, &provenance)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Prune(a) => run_prune(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Rank(a) => run_rank(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
