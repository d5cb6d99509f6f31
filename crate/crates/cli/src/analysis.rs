use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use feta_eval::domain_shift::{
    build_frame, conditional_mean, explain_frame, fit_ensemble, r_squared, subsample_background, top_k_teams,
    write_attributions_csv, write_deviations_csv, BinDeviation, Bins, Factor, ForestConfig, DEFAULT_BACKGROUND,
    DEFAULT_TOP_K,
};
use feta_eval::metadata::read_metadata_file;
use feta_eval::ranking::{aggregate_segmentation, RankingScheme, SegMetric};
use feta_eval::stats::{bonferroni, mann_whitney_u, pearson_permutation, wilcoxon_signed_rank};
use serde_json::json;

use crate::manifest::{manifest_hash, write_json_mirror};
use crate::paths::require_file;
use crate::rank::read_metric_dir;
use crate::{Global, Outcome};

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum TestKind {
    Wilcoxon,
    MannWhitney,
    Pearson,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long, value_enum)]
    pub test: TestKind,
    /// CSV file holding the two columns.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    /// Permutations for the Pearson test.
    #[arg(long, default_value_t = 9999)]
    pub n_perm: usize,
    /// Number of comparisons for a Bonferroni-adjusted p-value.
    #[arg(long)]
    pub comparisons: Option<usize>,
}

type Column = Vec<Option<f64>>;

/// Two columns of a CSV; empty cells are `None`.
fn read_columns(path: &std::path::Path, x: &str, y: &str) -> Result<(Column, Column)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).with_context(|| format!("column `{name}` not in {}", path.display()))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let cell = |i: usize| -> Result<Option<f64>> {
            let s = &row[i];
            if s.is_empty() {
                return Ok(None);
            }
            Ok(Some(s.parse().with_context(|| format!("row {}: `{s}` is not a number", line + 2))?))
        };
        xs.push(cell(ix)?);
        ys.push(cell(iy)?);
    }
    Ok((xs, ys))
}

pub fn run_stats(g: &Global, args: StatsArgs) -> Result<Outcome> {
    let schema = g.load_schema()?;
    let (xs, ys) = read_columns(&args.input, &args.x, &args.y)?;
    let paired: (Vec<f64>, Vec<f64>) =
        xs.iter().zip(&ys).filter_map(|(a, b)| Some(((*a)?, (*b)?))).unzip();
    let result = match args.test {
        TestKind::Wilcoxon => wilcoxon_signed_rank(&paired.0, &paired.1)?,
        TestKind::MannWhitney => {
            let a: Vec<f64> = xs.iter().flatten().copied().collect();
            let b: Vec<f64> = ys.iter().flatten().copied().collect();
            mann_whitney_u(&a, &b)?
        }
        TestKind::Pearson => g.pool()?.install(|| pearson_permutation(&paired.0, &paired.1, args.n_perm, g.seed))?,
    };
    let adjusted = match args.comparisons {
        Some(m) => Some(bonferroni(&[result.p_value], m)?[0]),
        None => None,
    };
    let out = g.out_dir()?;
    let doc = json!({
        "test": format!("{:?}", args.test).to_lowercase(),
        "x": args.x,
        "y": args.y,
        "seed": g.seed,
        "result": result,
        "p_bonferroni": adjusted,
    });
    write_json_mirror(&out.join("stats.json"), &manifest_hash(g.seed, &schema), &doc)?;
    println!("statistic={} p={} method={:?}", result.statistic, result.p_value, result.method);
    Ok(Outcome::Clean)
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum MetricArg {
    Dice,
    Hd95,
    Vs,
    Ed,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
pub enum FactorArg {
    Quality,
    Ga,
    Condition,
    SiteSr,
}

#[derive(Args, Debug)]
pub struct DomainShiftArgs {
    /// Directory of per-team metric CSVs written by `evaluate`.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long, value_enum, default_value = "dice")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Factors to profile; all by default.
    #[arg(long, value_enum)]
    pub factor: Vec<FactorArg>,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    /// Largest background set for attributions.
    #[arg(long, default_value_t = DEFAULT_BACKGROUND)]
    pub background: usize,
}

pub fn run_domain_shift(g: &Global, args: DomainShiftArgs) -> Result<Outcome> {
    let schema = g.load_schema()?;
    require_file(&args.metadata, "metadata")?;
    let records = read_metric_dir(&args.metrics)?;
    let metadata = read_metadata_file(&args.metadata).with_context(|| format!("reading {}", args.metadata.display()))?;
    let board = aggregate_segmentation(&records, RankingScheme::PerMetric)?;
    let teams = top_k_teams(&board, args.top_k)?;
    let metric = match args.metric {
        MetricArg::Dice => SegMetric::Dice,
        MetricArg::Hd95 => SegMetric::Hd95,
        MetricArg::Vs => SegMetric::Vs,
        MetricArg::Ed => SegMetric::Ed,
    };
    let frame = build_frame(&records, &metadata, metric, &teams)?;
    if frame.rows.len() < metadata.len() {
        log::warn!("{} of {} cases lack metadata or scores and were skipped", metadata.len() - frame.rows.len(), metadata.len());
    }

    let factors: Vec<Factor> = if args.factor.is_empty() {
        vec![Factor::Quality, Factor::Ga, Factor::Condition, Factor::SiteSr]
    } else {
        args.factor
            .iter()
            .map(|f| match f {
                FactorArg::Quality => Factor::Quality,
                FactorArg::Ga => Factor::Ga,
                FactorArg::Condition => Factor::Condition,
                FactorArg::SiteSr => Factor::SiteSr,
            })
            .collect()
    };
    let out = g.out_dir()?;
    let hash = manifest_hash(g.seed, &schema);

    let mut all_devs: Vec<(Factor, Vec<BinDeviation>)> = Vec::new();
    for &f in &factors {
        all_devs.push((f, conditional_mean(&frame, f, &Bins::default_for(f))?));
    }
    write_deviations_csv(fs::File::create(out.join("deviations.csv"))?, &all_devs)?;

    let config = ForestConfig { n_trees: args.n_trees, max_depth: args.max_depth, min_leaf: args.min_leaf, seed: g.seed };
    let pool = g.pool()?;
    let x = frame.features();
    let y = frame.targets();
    let (forest, attributions) = pool.install(|| -> Result<_> {
        let forest = fit_ensemble(&x, &y, &config)?;
        let background = subsample_background(&x, args.background, g.seed);
        let attributions = explain_frame(&forest, &frame, &background)?;
        Ok((forest, attributions))
    })?;
    if attributions.is_empty() {
        bail!("no case to attribute");
    }
    let file = fs::File::create(out.join("attributions.csv"))?;
    write_attributions_csv(file, &attributions)?;

    let doc = json!({
        "metric": metric.name(),
        "top_k_teams": teams,
        "forest": config,
        "training_r2": r_squared(&forest, &x, &y),
        "background_rows": args.background.min(x.len()),
        "features": Factor::FEATURES.iter().map(|f| f.name()).collect::<Vec<_>>(),
        "deviations": all_devs.iter().map(|(f, d)| json!({ "factor": f.name(), "bins": d })).collect::<Vec<_>>(),
        "attributions": attributions.iter().map(|(c, a)| json!({ "case_id": c, "attribution": a })).collect::<Vec<_>>(),
    });
    write_json_mirror(&out.join("domain_shift.json"), &hash, &doc)?;
    Ok(Outcome::Clean)
}
