use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use feta_eval::biometry::{
    fit_ga_baseline, landmarks_from_label_volume, read_biometry_csv, read_landmarks_json, score_entries,
    training_samples, write_biometry_csv, BiometryEntry, LandmarkSchema,
};
use feta_eval::metadata::read_metadata_file;
use feta_eval::nifti::read_volume;
use feta_eval::ranking::{BiometryScore, KindScore};
use feta_eval::{BiometryRecord, MeasurementKind, Participation};
use rayon::prelude::*;

use crate::manifest::{manifest_hash, write_json_mirror};
use crate::paths::{files_with_ext, require_dir, require_file, team_dirs, volumes_in};
use crate::{Global, Outcome};

#[derive(Args, Debug)]
pub struct BiometryArgs {
    /// Reference measurements: a biometry CSV, or a directory of landmark
    /// JSON files and/or landmark label maps.
    #[arg(long)]
    pub reference: PathBuf,
    /// Directory with `<team>/biometry.csv` per team.
    #[arg(long)]
    pub submissions: PathBuf,
    /// Extra entry ranked per measurement but not in the final ranking, as NAME=CSV.
    #[arg(long, value_parser = parse_named)]
    pub baseline: Vec<(String, PathBuf)>,
    /// Extra entry reported but never ranked, as NAME=CSV.
    #[arg(long, value_parser = parse_named)]
    pub bound: Vec<(String, PathBuf)>,
    /// Landmark label codes JSON, `{"LCC": [1, 2], ...}`.
    #[arg(long)]
    pub landmark_schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    /// Training measurements (biometry CSV).
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub train_metadata: PathBuf,
    #[arg(long)]
    pub test_metadata: PathBuf,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got `{s}`"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got `{s}`"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn read_records(path: &Path) -> Result<Vec<BiometryRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_biometry_csv(file).with_context(|| format!("reading {}", path.display()))
}

/// Reference records from a CSV file or a landmark directory.
pub fn load_reference(path: &Path, schema: &LandmarkSchema) -> Result<Vec<BiometryRecord>> {
    if path.is_file() {
        return read_records(path);
    }
    require_dir(path, "reference")?;
    let mut sets = Vec::new();
    for (_, p) in files_with_ext(path, "json")? {
        let file = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
        sets.push(read_landmarks_json(file).with_context(|| format!("reading {}", p.display()))?);
    }
    let volumes: Vec<(String, PathBuf)> = volumes_in(path)?.into_iter().collect();
    let from_maps: Vec<_> = volumes
        .par_iter()
        .map(|(id, p)| -> Result<_> {
            let v = read_volume(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(landmarks_from_label_volume(id, &v, schema))
        })
        .collect::<Result<_>>()?;
    sets.extend(from_maps);
    sets.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    if let Some(w) = sets.windows(2).find(|w| w[0].case_id == w[1].case_id) {
        bail!("case {} has landmarks in more than one file", w[0].case_id);
    }
    if sets.is_empty() {
        bail!("no landmark files in {}", path.display());
    }
    Ok(sets.iter().flat_map(|s| s.records()).collect())
}

pub const MAPE_CSV_HEADER: [&str; 6] = ["team", "role", "kind", "mape", "n", "n_imputed"];

pub fn write_mape_csv<W: Write>(writer: W, scores: &[BiometryScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MAPE_CSV_HEADER)?;
    for s in scores {
        for (kind, k) in &s.per_kind {
            w.write_record([
                s.team.clone(),
                s.role.as_str().to_string(),
                kind.to_string(),
                k.mape.map(|v| v.to_string()).unwrap_or_default(),
                k.n.to_string(),
                k.n_imputed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_mape_csv<R: Read>(reader: R) -> Result<Vec<BiometryScore>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if rdr.headers()?.iter().collect::<Vec<_>>() != MAPE_CSV_HEADER {
        bail!("MAPE CSV header must be `{}`", MAPE_CSV_HEADER.join(","));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_team: BTreeMap<String, BiometryScore> = BTreeMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let ctx = || format!("MAPE CSV row {}", line + 2);
        let role = match &row[1] {
            "competing" => Participation::Competing,
            "baseline" => Participation::Baseline,
            "bound" => Participation::Bound,
            other => bail!("{}: unknown role `{other}`", ctx()),
        };
        let kind: MeasurementKind = row[2].parse().with_context(ctx)?;
        let mape = if row[3].is_empty() { None } else { Some(row[3].parse::<f64>().with_context(ctx)?) };
        let score = KindScore { mape, n: row[4].parse().with_context(ctx)?, n_imputed: row[5].parse().with_context(ctx)? };
        let team = row[0].to_string();
        let entry = by_team.entry(team.clone()).or_insert_with(|| {
            order.push(team.clone());
            BiometryScore { team: team.clone(), role, per_kind: BTreeMap::new() }
        });
        if entry.role != role {
            bail!("{}: team {team} listed with two roles", ctx());
        }
        entry.per_kind.insert(kind, score);
    }
    Ok(order.into_iter().map(|t| by_team.remove(&t).expect("inserted")).collect())
}

pub fn run(g: &Global, args: BiometryArgs) -> Result<Outcome> {
    let schema = g.load_schema()?;
    let landmark_schema = match &args.landmark_schema {
        None => LandmarkSchema::default(),
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
    };
    require_dir(&args.submissions, "submissions")?;
    let pool = g.pool()?;
    let reference = pool.install(|| load_reference(&args.reference, &landmark_schema))?;

    let mut entries = Vec::new();
    let mut partial = false;
    for (team, dir) in team_dirs(&args.submissions)? {
        let path = dir.join("biometry.csv");
        let predictions = if path.is_file() {
            match read_records(&path) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("failed: {team}: {e:#}; scored as all missing");
                    partial = true;
                    Vec::new()
                }
            }
        } else {
            eprintln!("missing: {team}: no biometry.csv; scored as all missing");
            partial = true;
            Vec::new()
        };
        entries.push(BiometryEntry { name: team, role: Participation::Competing, predictions });
    }
    for (list, role) in [(&args.baseline, Participation::Baseline), (&args.bound, Participation::Bound)] {
        for (name, path) in list {
            require_file(path, name)?;
            entries.push(BiometryEntry { name: name.clone(), role, predictions: read_records(path)? });
        }
    }
    let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("entry name {} used twice", w[0]);
    }

    let scores = score_entries(&entries, &reference);
    let out = g.out_dir()?;
    let hash = manifest_hash(g.seed, &schema);
    let csv_path = out.join("biometry_mape.csv");
    write_mape_csv(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?, &scores)?;
    write_json_mirror(&out.join("biometry_mape.json"), &hash, &scores)?;
    Ok(if partial { Outcome::Partial } else { Outcome::Clean })
}

pub fn run_baseline(g: &Global, args: BaselineArgs) -> Result<Outcome> {
    let schema = g.load_schema()?;
    let train = read_records(&args.train)?;
    let train_meta = read_metadata_file(&args.train_metadata)
        .with_context(|| format!("reading {}", args.train_metadata.display()))?;
    let test_meta =
        read_metadata_file(&args.test_metadata).with_context(|| format!("reading {}", args.test_metadata.display()))?;
    let baseline = fit_ga_baseline(&training_samples(&train, &train_meta))?;
    if baseline.fits.is_empty() {
        bail!("no training measurement could be matched to training metadata");
    }
    let predictions = baseline.predict_cases(&test_meta);

    let out = g.out_dir()?;
    let hash = manifest_hash(g.seed, &schema);
    let csv_path = out.join("ga_baseline.csv");
    write_biometry_csv(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?, &predictions)?;
    write_json_mirror(&out.join("ga_baseline.json"), &hash, &baseline)?;
    Ok(Outcome::Clean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_csv_roundtrip() {
        let scores = vec![
            BiometryScore {
                team: "zeta".into(),
                role: Participation::Competing,
                per_kind: [(MeasurementKind::Lcc, KindScore { mape: Some(4.5), n: 3, n_imputed: 1 })].into(),
            },
            BiometryScore {
                team: "GA".into(),
                role: Participation::Baseline,
                per_kind: [(MeasurementKind::Tcd, KindScore { mape: None, n: 3, n_imputed: 0 })].into(),
            },
        ];
        let mut buf = Vec::new();
        write_mape_csv(&mut buf, &scores).unwrap();
        assert_eq!(read_mape_csv(buf.as_slice()).unwrap(), scores);
    }

    #[test]
    fn named_paths() {
        assert_eq!(parse_named("GA=a/b.csv").unwrap(), ("GA".to_string(), PathBuf::from("a/b.csv")));
        assert!(parse_named("GA").is_err());
    }
}
