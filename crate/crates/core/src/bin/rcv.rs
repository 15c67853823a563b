use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use rcv_core::pipeline::{
    rcv_stem, run_demo, run_extract, run_fit, run_score, run_stats, AnalysisConfig, DemoConfig,
    ExtractConfig, LayerPaths, RelevanceReport,
};
use rcv_core::tensorio::write_measures;

#[derive(Parser)]
#[command(
    name = "rcv",
    version,
    about = "Fit, score and test regression concept vectors in network activation space"
)]
struct Cli {
    /// Seed for every random stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports and artifacts.
    #[arg(long, global = true, default_value = "rcv-out")]
    out_dir: PathBuf,
    /// JSON config of the subcommand (a report is accepted too); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Accept NaN and infinite values in tensor files.
    #[arg(long, global = true)]
    allow_nonfinite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute concept measures from grayscale patches and instance masks.
    Extract(ExtractArgs),
    /// Fit one RCV per (layer, concept) and report R² across layers.
    Fit(AnalysisArgs),
    /// Compute TCAV and Br scores from test-set gradients.
    Score(AnalysisArgs),
    /// Test TCAV and Br for significance over repeated fits.
    Stats(StatsArgs),
    /// Run the whole pipeline on synthetic data with a planted causal concept.
    Demo(DemoArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// npy stack (P×H×W) or directory of <sample_id>.png files.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Instance masks in the same layout as the images.
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Largest raw intensity of npy stacks.
    #[arg(long)]
    max_value: Option<u32>,
    /// Gray levels after quantization.
    #[arg(long)]
    levels: Option<usize>,
    /// Ignore nuclei touching the patch border.
    #[arg(long)]
    exclude_border: bool,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long)]
    concept_manifest: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    #[arg(long)]
    measures: Option<PathBuf>,
    /// Network outputs on the concept set (npy).
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Layer dumps as ID=ACTIVATIONS[,GRADIENTS]; repeatable, shallow to deep.
    #[arg(long = "layer", value_name = "ID=FILES")]
    layers: Vec<String>,
    /// Comma-separated concept names (default: all in the measures file).
    #[arg(long, value_delimiter = ',')]
    concepts: Vec<String>,
    /// Fit without an intercept.
    #[arg(long)]
    no_intercept: bool,
    /// Standardize activation columns before fitting.
    #[arg(long)]
    standardize: bool,
    /// Score saved RCVs from this directory instead of refitting.
    #[arg(long)]
    rcv_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    resample_fraction: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bonferroni family size (default: number of concepts).
    #[arg(long)]
    comparisons: Option<usize>,
    /// Layer to test (default: last --layer).
    #[arg(long)]
    stats_layer: Option<String>,
}

#[derive(Args)]
struct DemoArgs {
    /// Slope of the causal concept in the label model.
    #[arg(long, allow_negative_numbers = true)]
    slope: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Keep the network fixed and only resample the concept set.
    #[arg(long)]
    no_retrain: bool,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    standardize: bool,
}

fn analysis_config(cli: &Cli, a: &AnalysisArgs) -> Result<AnalysisConfig> {
    let mut cfg = match &cli.config {
        Some(p) => AnalysisConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => AnalysisConfig::default(),
    };
    if let Some(p) = &a.concept_manifest {
        cfg.concept_manifest = p.clone();
    }
    if let Some(p) = &a.test_manifest {
        cfg.test_manifest = Some(p.clone());
    }
    if let Some(p) = &a.measures {
        cfg.measures = p.clone();
    }
    if let Some(p) = &a.predictions {
        cfg.predictions = Some(p.clone());
    }
    if !a.layers.is_empty() {
        cfg.layers = a
            .layers
            .iter()
            .map(|s| LayerPaths::parse(s))
            .collect::<rcv_core::Result<_>>()?;
    }
    if !a.concepts.is_empty() {
        cfg.concepts = a.concepts.clone();
    }
    if a.no_intercept {
        cfg.fit.intercept = false;
    }
    if a.standardize {
        cfg.fit.standardize = true;
    }
    if let Some(d) = &a.rcv_dir {
        cfg.rcv_dir = Some(d.clone());
    }
    if let Some(s) = cli.seed {
        cfg.repetitions.seed = s;
    }
    if cli.allow_nonfinite {
        cfg.allow_nonfinite = true;
    }
    if cfg.concept_manifest.as_os_str().is_empty() || cfg.measures.as_os_str().is_empty() {
        anyhow::bail!("a concept manifest and a measures file are required (flags or --config)");
    }
    Ok(cfg)
}

fn write_report(report: &RelevanceReport, out_dir: &Path, stem: &str) -> Result<()> {
    for p in report.write(out_dir, stem)? {
        info!("wrote {}", p.display());
    }
    println!("report: {}", out_dir.join(format!("{stem}.json")).display());
    Ok(())
}

fn print_rsquared(report: &RelevanceReport) {
    println!("{:<16} {:<16} {:>10}", "layer", "concept", "R2");
    for e in &report.rsquared {
        println!(
            "{:<16} {:<16} {:>10.4}",
            e.layer_id, e.concept_name, e.r_squared
        );
    }
}

fn print_scores(report: &RelevanceReport) {
    println!(
        "{:<16} {:<16} {:>8} {:>12} {:>12}",
        "layer", "concept", "TCAV", "Br", "Br (norm)"
    );
    for e in &report.scores {
        println!(
            "{:<16} {:<16} {:>8.3} {:>12.4} {:>12.4}",
            e.layer_id, e.concept_name, e.tcav, e.br_raw, e.br_normalized
        );
    }
}

fn print_significance(report: &RelevanceReport) {
    println!(
        "{:<16} {:<16} {:<6} {:>10} {:>12} {:>10}  reject",
        "layer", "concept", "score", "mean", "p", "threshold"
    );
    for s in &report.significance {
        println!(
            "{:<16} {:<16} {:<6} {:>10.4} {:>12.3e} {:>10.2e}  {}",
            s.layer_id,
            s.concept_name,
            s.score_kind.to_string(),
            s.mean_score(),
            s.p_value,
            s.corrected_threshold,
            if s.reject_null { "yes" } else { "no" }
        );
    }
}

fn extract(cli: &Cli, a: &ExtractArgs) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExtractConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExtractConfig::default(),
    };
    if let Some(p) = &a.images {
        cfg.images = p.clone();
    }
    if let Some(p) = &a.masks {
        cfg.masks = p.clone();
    }
    if let Some(p) = &a.manifest {
        cfg.manifest = p.clone();
    }
    if a.max_value.is_some() {
        cfg.max_value = a.max_value;
    }
    if let Some(l) = a.levels {
        cfg.options.levels = l;
    }
    if a.exclude_border {
        cfg.options.exclude_border = true;
    }
    let out = run_extract(&cfg)?;
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let path = cli.out_dir.join("measures.csv");
    write_measures(&out.table, &path)?;
    println!("measures: {} ({} rows)", path.display(), out.table.len());
    if !out.skipped.is_empty() {
        let skipped = cli.out_dir.join("measures.skipped.csv");
        std::fs::write(&skipped, out.skipped_csv()?)
            .with_context(|| format!("writing {}", skipped.display()))?;
        println!(
            "skipped: {} ({} entries)",
            skipped.display(),
            out.skipped.len()
        );
    }
    Ok(())
}

fn fit(cli: &Cli, a: &AnalysisArgs) -> Result<()> {
    let cfg = analysis_config(cli, a)?;
    let (report, rcvs) = run_fit(&cfg)?;
    let rcv_dir = cli.out_dir.join("rcv");
    std::fs::create_dir_all(&rcv_dir).with_context(|| format!("creating {}", rcv_dir.display()))?;
    for r in &rcvs {
        r.save(rcv_stem(&rcv_dir, &r.layer_id, &r.concept_name))?;
    }
    print_rsquared(&report);
    write_report(&report, &cli.out_dir, "fit")
}

fn score(cli: &Cli, a: &AnalysisArgs) -> Result<()> {
    let cfg = analysis_config(cli, a)?;
    let report = run_score(&cfg)?;
    print_scores(&report);
    write_report(&report, &cli.out_dir, "score")
}

fn stats(cli: &Cli, a: &StatsArgs) -> Result<()> {
    let mut cfg = analysis_config(cli, &a.analysis)?;
    if let Some(n) = a.repetitions {
        cfg.repetitions.n_repetitions = n;
    }
    if let Some(f) = a.resample_fraction {
        cfg.repetitions.resample_fraction = f;
    }
    if let Some(alpha) = a.alpha {
        cfg.repetitions.alpha = alpha;
    }
    if a.comparisons.is_some() {
        cfg.repetitions.n_comparisons = a.comparisons;
    }
    if let Some(l) = &a.stats_layer {
        cfg.stats_layer = Some(l.clone());
    }
    let report = run_stats(&cfg)?;
    print_significance(&report);
    write_report(&report, &cli.out_dir, "stats")
}

fn demo(cli: &Cli, a: &DemoArgs) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => DemoConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => DemoConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.slope {
        cfg.synthetic.slope = s;
    }
    if let Some(n) = a.repetitions {
        cfg.n_repetitions = n;
    }
    if a.no_retrain {
        cfg.retrain = false;
    }
    if a.no_intercept {
        cfg.fit.intercept = false;
    }
    if a.standardize {
        cfg.fit.standardize = true;
    }
    let run = run_demo(&cfg, Some(&cli.out_dir))?;
    println!("test accuracy: {:.3}", run.test_accuracy);
    print_rsquared(&run.report);
    println!();
    print_scores(&run.report);
    println!();
    print_significance(&run.report);
    write_report(&run.report, &cli.out_dir, "demo")?;
    let v = &run.verdict;
    println!(
        "causal concept '{}': {}; distractors significant: {}",
        cfg.synthetic.causal,
        if v.causal_significant && v.causal_sign_matches {
            "significant with the planted sign"
        } else {
            "not recovered"
        },
        if v.significant_distractors.is_empty() {
            "none".to_string()
        } else {
            v.significant_distractors.join(", ")
        }
    );
    println!("verdict: {}", if v.passed { "PASS" } else { "FAIL" });
    Ok(v.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Extract(a) => extract(&cli, a).map(|_| true),
        Command::Fit(a) => fit(&cli, a).map(|_| true),
        Command::Score(a) => score(&cli, a).map(|_| true),
        Command::Stats(a) => stats(&cli, a).map(|_| true),
        Command::Demo(a) => demo(&cli, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
