use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use feta_eval::metrics::read_metric_csv;
use feta_eval::ranking::{aggregate_biometry, aggregate_segmentation, write_leaderboard_csv, MapeAggregation, RankingScheme};
use feta_eval::{Leaderboard, MetricRecord};

use crate::biometry::read_mape_csv;
use crate::manifest::{manifest_hash, write_json_mirror};
use crate::paths::{files_with_ext, require_dir, require_file};
use crate::{Global, Outcome};

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Scheme {
    PerMetric,
    AllColumns,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Aggregation {
    Pooled,
    MeanOfKinds,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    /// Directory of per-team metric CSVs written by `evaluate`.
    #[arg(long, conflicts_with = "mape", required_unless_present = "mape")]
    pub segmentation: Option<PathBuf>,
    /// Per-team per-kind MAPE CSV written by `biometry`.
    #[arg(long)]
    pub mape: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "per-metric")]
    pub scheme: Scheme,
    #[arg(long, value_enum, default_value = "pooled")]
    pub aggregation: Aggregation,
}

/// Team metric tables of a directory, keyed by file stem.
pub fn read_metric_dir(dir: &std::path::Path) -> Result<BTreeMap<String, Vec<MetricRecord>>> {
    require_dir(dir, "metrics")?;
    let mut out = BTreeMap::new();
    for (team, path) in files_with_ext(dir, "csv")? {
        let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let recs = read_metric_csv(file).with_context(|| format!("reading {}", path.display()))?;
        out.insert(team, recs);
    }
    if out.len() < 2 {
        bail!("ranking needs at least 2 team tables in {}, found {}", dir.display(), out.len());
    }
    Ok(out)
}

pub fn segmentation_board(dir: &std::path::Path, scheme: Scheme) -> Result<Leaderboard> {
    let subs = read_metric_dir(dir)?;
    let scheme = match scheme {
        Scheme::PerMetric => RankingScheme::PerMetric,
        Scheme::AllColumns => RankingScheme::AllColumns,
    };
    Ok(aggregate_segmentation(&subs, scheme)?)
}

pub fn run(g: &Global, args: RankArgs) -> Result<Outcome> {
    let schema = g.load_schema()?;
    let board = match (&args.segmentation, &args.mape) {
        (Some(dir), _) => segmentation_board(dir, args.scheme)?,
        (None, Some(path)) => {
            require_file(path, "MAPE")?;
            let scores = read_mape_csv(fs::File::open(path)?)?;
            let agg = match args.aggregation {
                Aggregation::Pooled => MapeAggregation::Pooled,
                Aggregation::MeanOfKinds => MapeAggregation::MeanOfKinds,
            };
            aggregate_biometry(&scores, agg)?
        }
        (None, None) => bail!("one of --segmentation or --mape is required"),
    };
    let out = g.out_dir()?;
    let hash = manifest_hash(g.seed, &schema);
    let csv_path = out.join("leaderboard.csv");
    write_leaderboard_csv(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?, &board)?;
    write_json_mirror(&out.join("leaderboard.json"), &hash, &board)?;
    for r in &board.rows {
        log::info!("{:>4} {:<24} {}", r.final_rank.map(|v| v.to_string()).unwrap_or("*".into()), r.team, r.final_score.unwrap_or(f64::NAN));
    }
    for d in &board.dropped {
        log::warn!("column {d} dropped: no scores");
    }
    Ok(Outcome::Clean)
}
