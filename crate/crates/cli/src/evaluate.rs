use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use feta_eval::metrics::{write_metric_csv, CONVENTIONS};
use feta_eval::nifti::read_volume;
use feta_eval::{evaluate_case, LabelSchema, LabelVolume, MetricRecord};
use rayon::prelude::*;

use crate::manifest::{manifest_hash, write_json, write_json_mirror, Clock, Issue, Manifest, TOOL, VERSION};
use crate::paths::{require_dir, team_dirs, volumes_in};
use crate::{Global, Outcome};

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory of reference label maps `<case_id>.nii.gz`.
    #[arg(long)]
    pub reference: PathBuf,
    /// Directory with one subdirectory of label maps per team.
    #[arg(long)]
    pub submissions: PathBuf,
}

struct CaseResult {
    /// `records[team]`; empty when the reference itself failed.
    records: Vec<Vec<MetricRecord>>,
    issues: Vec<Issue>,
}

fn score(case_id: &str, pred: &LabelVolume, reference: &LabelVolume, schema: &LabelSchema) -> Result<Vec<MetricRecord>> {
    Ok(evaluate_case(case_id, pred, reference, schema)?)
}

fn evaluate_one(
    case_id: &str,
    ref_path: &std::path::Path,
    teams: &[(String, PathBuf)],
    schema: &LabelSchema,
) -> CaseResult {
    let reference = match read_volume(ref_path).map_err(anyhow::Error::from).and_then(|v| {
        v.validate_codes(schema)?;
        Ok(v)
    }) {
        Ok(v) => v,
        Err(e) => {
            log::error!("{case_id}: reference unusable: {e:#}");
            return CaseResult {
                records: Vec::new(),
                issues: vec![Issue {
                    team: "<reference>".into(),
                    case_id: case_id.into(),
                    status: "failed",
                    detail: format!("{e:#}"),
                }],
            };
        }
    };
    let empty = || LabelVolume::filled(reference.dims(), 0, *reference.affine()).expect("valid grid");
    let mut records = Vec::with_capacity(teams.len());
    let mut issues = Vec::new();
    for (team, dir) in teams {
        let candidates = [dir.join(format!("{case_id}.nii.gz")), dir.join(format!("{case_id}.nii"))];
        let found = candidates.iter().find(|p| p.is_file());
        let attempt = match found {
            None => {
                issues.push(Issue {
                    team: team.clone(),
                    case_id: case_id.into(),
                    status: "missing",
                    detail: "no prediction file; scored as an empty label map".into(),
                });
                None
            }
            Some(p) => match read_volume(p).map_err(anyhow::Error::from).and_then(|v| score(case_id, &v, &reference, schema)) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("{team}/{case_id}: {e:#}");
                    issues.push(Issue {
                        team: team.clone(),
                        case_id: case_id.into(),
                        status: "failed",
                        detail: format!("{e:#}; scored as an empty label map"),
                    });
                    None
                }
            },
        };
        let recs = match attempt {
            Some(r) => r,
            None => score(case_id, &empty(), &reference, schema).expect("empty map on the reference grid pairs"),
        };
        records.push(recs);
    }
    log::info!("{case_id} done");
    CaseResult { records, issues }
}

pub fn run(g: &Global, args: EvaluateArgs) -> Result<Outcome> {
    let clock = Clock::start();
    require_dir(&args.reference, "reference")?;
    require_dir(&args.submissions, "submissions")?;
    let schema = g.load_schema()?;
    let cases = volumes_in(&args.reference)?;
    if cases.is_empty() {
        anyhow::bail!("no reference volumes in {}", args.reference.display());
    }
    let teams = team_dirs(&args.submissions)?;
    if teams.is_empty() {
        anyhow::bail!("no team directories in {}", args.submissions.display());
    }
    for (team, dir) in &teams {
        for extra in volumes_in(dir)?.keys().filter(|c| !cases.contains_key(*c)) {
            log::warn!("{team}: {extra} has no reference and is ignored");
        }
    }

    let pool = g.pool()?;
    let jobs: Vec<(&String, &PathBuf)> = cases.iter().collect();
    let results: Vec<CaseResult> =
        pool.install(|| jobs.par_iter().map(|(id, p)| evaluate_one(id, p, &teams, &schema)).collect());

    let mut per_team: Vec<Vec<MetricRecord>> = vec![Vec::new(); teams.len()];
    let mut issues = Vec::new();
    let mut n_cases = 0;
    for r in results {
        if !r.records.is_empty() {
            n_cases += 1;
        }
        for (t, recs) in r.records.into_iter().enumerate() {
            per_team[t].extend(recs);
        }
        issues.extend(r.issues);
    }

    let hash = manifest_hash(g.seed, &schema);
    let out = g.out_dir()?.join("metrics");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for ((team, _), recs) in teams.iter().zip(&per_team) {
        let csv_path = out.join(format!("{team}.csv"));
        let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
        write_metric_csv(std::io::BufWriter::new(file), recs)?;
        write_json_mirror(&out.join(format!("{team}.json")), &hash, recs)?;
    }

    let manifest = Manifest {
        tool: TOOL,
        version: VERSION,
        command: "evaluate",
        manifest_hash: hash,
        conventions: CONVENTIONS.iter().copied().collect(),
        seed: g.seed,
        schema: &schema,
        workers: pool.current_num_threads(),
        started_unix_s: clock.started_unix_s(),
        elapsed_s: clock.elapsed_s(),
        teams: teams.iter().map(|t| t.0.clone()).collect(),
        cases: n_cases,
        issues,
    };
    write_json(&g.out.join("manifest.json"), &manifest)?;
    for i in &manifest.issues {
        eprintln!("{}: {}/{}: {}", i.status, i.team, i.case_id, i.detail);
    }
    Ok(if manifest.issues.is_empty() { Outcome::Clean } else { Outcome::Partial })
}
