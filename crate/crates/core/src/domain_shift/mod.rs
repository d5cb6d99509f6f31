//! How segmentation performance varies with image-level factors:
//! conditional-mean deviation profiles and Shapley attribution through a
//! bagged regression-tree surrogate.

pub mod forest;
pub mod shapley;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata::{CaseMetadata, Condition};
use crate::metrics::MetricRecord;
use crate::ranking::{Leaderboard, SegMetric};

pub use forest::{fit_ensemble, fit_tree, r_squared, ForestConfig, Model, Node, TreeEnsemble};
pub use shapley::{shapley, subsample_background, ShapleyAttribution, DEFAULT_BACKGROUND};

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Quality,
    Ga,
    Condition,
    SiteSr,
}

impl Factor {
    /// Surrogate model inputs, in column order.
    pub const FEATURES: [Factor; 3] = [Factor::Quality, Factor::Ga, Factor::Condition];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Quality => "quality",
            Factor::Ga => "ga",
            Factor::Condition => "condition",
            Factor::SiteSr => "site_sr",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Factor::Quality, Factor::Ga, Factor::Condition, Factor::SiteSr]
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown factor `{s}` (quality|ga|condition|site_sr)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub case_id: String,
    pub quality: f64,
    pub ga_weeks: f64,
    /// 0 neurotypical, 1 pathological.
    pub condition: f64,
    pub site_sr: String,
    pub target: f64,
}

impl FactorRow {
    pub fn features(&self) -> Vec<f64> {
        vec![self.quality, self.ga_weeks, self.condition]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFrame {
    pub metric: SegMetric,
    /// Teams whose scores were averaged into the target.
    pub teams: Vec<String>,
    pub rows: Vec<FactorRow>,
}

impl FactorFrame {
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(FactorRow::features).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }
}

/// The first `k` competing teams of a leaderboard, in final-rank order.
pub fn top_k_teams(board: &Leaderboard, k: usize) -> Result<Vec<String>> {
    let mut rows: Vec<_> = board.rows.iter().filter(|r| r.final_rank.is_some()).collect();
    rows.sort_by(|a, b| a.final_rank.cmp(&b.final_rank).then_with(|| a.team.cmp(&b.team)));
    if rows.len() < k || k == 0 {
        return Err(Error::InvalidInput(format!("top-{k} requested but only {} ranked teams", rows.len())));
    }
    Ok(rows.into_iter().take(k).map(|r| r.team.clone()).collect())
}

/// Per-case target: the metric averaged over labels for each team, then over
/// `teams`. Cases lacking metadata, or a score from any of the teams, are
/// skipped.
pub fn build_frame(
    records: &BTreeMap<String, Vec<MetricRecord>>,
    metadata: &[CaseMetadata],
    metric: SegMetric,
    teams: &[String],
) -> Result<FactorFrame> {
    let per_team: Vec<BTreeMap<&str, f64>> = teams
        .iter()
        .map(|t| {
            let recs = records.get(t).ok_or_else(|| Error::InvalidInput(format!("no records for team {t}")))?;
            let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for r in recs {
                if let Some(v) = metric.value(r) {
                    let e = acc.entry(r.case_id.as_str()).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
            }
            Ok(acc.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect())
        })
        .collect::<Result<_>>()?;

    let mut meta: Vec<&CaseMetadata> = metadata.iter().collect();
    meta.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let mut rows = Vec::new();
    for m in meta {
        let vals: Option<Vec<f64>> = per_team.iter().map(|t| t.get(m.case_id.as_str()).copied()).collect();
        let Some(vals) = vals else {
            log::debug!("{}: not scored by all top teams, skipped", m.case_id);
            continue;
        };
        rows.push(FactorRow {
            case_id: m.case_id.clone(),
            quality: m.quality,
            ga_weeks: m.ga_weeks,
            condition: if m.condition == Condition::Pathological { 1.0 } else { 0.0 },
            site_sr: m.site_sr(),
            target: vals.iter().sum::<f64>() / vals.len() as f64,
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no case has both metadata and scores".into()));
    }
    Ok(FactorFrame { metric, teams: teams.to_vec(), rows })
}

/// Binning of a factor for conditional means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Bins {
    /// Half-open `[e_i, e_{i+1})` intervals. `closed_last` makes the final one
    /// closed; `outer` adds underflow and overflow bins.
    Edges { edges: Vec<f64>, closed_last: bool, outer: bool },
    Categorical,
}

impl Bins {
    pub fn default_for(factor: Factor) -> Bins {
        match factor {
            Factor::Ga => Bins::Edges { edges: (0..10).map(|i| 18.0 + 2.0 * i as f64).collect(), closed_last: false, outer: true },
            Factor::Quality => Bins::Edges { edges: (0..9).map(|i| 0.5 * i as f64).collect(), closed_last: true, outer: false },
            Factor::Condition | Factor::SiteSr => Bins::Categorical,
        }
    }

    /// Bin index and label; `None` if the value falls outside every bin.
    fn assign(&self, v: f64) -> Option<(usize, String)> {
        let Bins::Edges { edges, closed_last, outer } = self else {
            return None;
        };
        let n = edges.len() - 1;
        let first = edges[0];
        let last = edges[n];
        if v < first {
            return outer.then(|| (0, format!("<{first}")));
        }
        if v > last || (v == last && !closed_last) {
            return outer.then(|| (n + 1, format!(">={last}")));
        }
        let i = edges.windows(2).position(|w| v >= w[0] && v < w[1]).unwrap_or(n - 1);
        let close = if *closed_last && i == n - 1 { "]" } else { ")" };
        Some((i + 1, format!("[{},{}{close}", edges[i], edges[i + 1])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDeviation {
    pub bin: String,
    pub n: usize,
    pub mean: f64,
    /// Bin mean minus the overall mean.
    pub deviation: f64,
}

fn categorical_key(row: &FactorRow, factor: Factor) -> String {
    match factor {
        Factor::Condition => {
            if row.condition >= 0.5 { Condition::Pathological } else { Condition::Neurotypical }.to_string()
        }
        Factor::SiteSr => row.site_sr.clone(),
        Factor::Quality => row.quality.to_string(),
        Factor::Ga => row.ga_weeks.to_string(),
    }
}

/// Target mean per bin of `factor`, relative to the overall target mean.
/// Empty bins are omitted.
pub fn conditional_mean(frame: &FactorFrame, factor: Factor, bins: &Bins) -> Result<Vec<BinDeviation>> {
    if frame.rows.is_empty() {
        return Err(Error::InvalidInput("conditional mean over zero records".into()));
    }
    if let Bins::Edges { edges, .. } = bins {
        if edges.len() < 2 || edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::InvalidInput("bin edges must be strictly increasing, at least two".into()));
        }
    }
    let global = frame.rows.iter().map(|r| r.target).sum::<f64>() / frame.rows.len() as f64;
    // ordered by (bin index, label)
    let mut acc: BTreeMap<(usize, String), (f64, usize)> = BTreeMap::new();
    for row in &frame.rows {
        let key = match bins {
            Bins::Categorical => Some((0, categorical_key(row, factor))),
            Bins::Edges { .. } => {
                let v = match factor {
                    Factor::Quality => row.quality,
                    Factor::Ga => row.ga_weeks,
                    Factor::Condition => row.condition,
                    Factor::SiteSr => {
                        return Err(Error::InvalidInput("site_sr is categorical".into()));
                    }
                };
                bins.assign(v)
            }
        };
        if let Some(k) = key {
            let e = acc.entry(k).or_default();
            e.0 += row.target;
            e.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((_, bin), (s, n))| {
            let mean = s / n as f64;
            BinDeviation { bin, n, mean, deviation: mean - global }
        })
        .collect())
}

/// Attribution of every frame row, explained against `background`.
pub fn explain_frame(
    model: &impl Model,
    frame: &FactorFrame,
    background: &[Vec<f64>],
) -> Result<Vec<(String, ShapleyAttribution)>> {
    frame
        .rows
        .par_iter()
        .map(|r| shapley(model, background, &r.features()).map(|a| (r.case_id.clone(), a)))
        .collect()
}

pub fn write_deviations_csv<W: Write>(writer: W, profiles: &[(Factor, Vec<BinDeviation>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["factor", "bin", "n", "mean", "deviation"])?;
    for (factor, rows) in profiles {
        for r in rows {
            w.write_record([factor.to_string(), r.bin.clone(), r.n.to_string(), r.mean.to_string(), r.deviation.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_attributions_csv<W: Write>(writer: W, rows: &[(String, ShapleyAttribution)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["case_id".to_string(), "baseline".to_string()];
    header.extend(Factor::FEATURES.iter().map(|f| f.to_string()));
    header.push("prediction".into());
    w.write_record(&header)?;
    for (case, a) in rows {
        let mut rec = vec![case.clone(), a.baseline.to_string()];
        rec.extend(a.values.iter().map(|v| v.to_string()));
        rec.push(a.prediction.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn frame(rows: Vec<(f64, f64, f64)>) -> FactorFrame {
        FactorFrame {
            metric: SegMetric::Dice,
            teams: vec!["a".into()],
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, (q, ga, t))| FactorRow {
                    case_id: format!("c{i:03}"),
                    quality: q,
                    ga_weeks: ga,
                    condition: (i % 2) as f64,
                    site_sr: if i % 3 == 0 { "KISPI-MIALSRTK".into() } else { "CHUV-IRTK".into() },
                    target: t,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_target_has_zero_deviation() {
        let f = frame((0..20).map(|i| (i as f64 * 0.2, 18.0 + i as f64, 0.8)).collect());
        for factor in [Factor::Quality, Factor::Ga, Factor::Condition, Factor::SiteSr] {
            for b in conditional_mean(&f, factor, &Bins::default_for(factor)).unwrap() {
                assert_abs_diff_eq!(b.deviation, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_bins_deviation() {
        let f = frame(vec![(1.0, 20.0, 0.7), (1.2, 20.0, 0.7), (3.0, 30.0, 0.9), (3.5, 31.0, 0.9)]);
        let d = conditional_mean(&f, Factor::Quality, &Bins::default_for(Factor::Quality)).unwrap();
        let devs: Vec<f64> = d.iter().map(|b| b.deviation).filter(|v| v.abs() > 0.0).collect();
        assert_eq!(d.len(), 3);
        assert_abs_diff_eq!(d[0].deviation, -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2].deviation, 0.1, epsilon = 1e-12);
        assert_eq!(devs.len(), 3);
    }

    #[test]
    fn weighted_deviations_cancel() {
        let f = frame((0..40).map(|i| ((i % 9) as f64 * 0.5, 16.0 + i as f64 * 0.6, (i * 7 % 11) as f64 / 11.0)).collect());
        for factor in [Factor::Quality, Factor::Ga, Factor::Condition, Factor::SiteSr] {
            let d = conditional_mean(&f, factor, &Bins::default_for(factor)).unwrap();
            assert_eq!(d.iter().map(|b| b.n).sum::<usize>(), 40, "{factor}");
            let s: f64 = d.iter().map(|b| b.n as f64 * b.deviation).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ga_bins_have_outer_bins() {
        let bins = Bins::default_for(Factor::Ga);
        assert_eq!(bins.assign(17.0).unwrap().1, "<18");
        assert_eq!(bins.assign(36.0).unwrap().1, ">=36");
        assert_eq!(bins.assign(19.9).unwrap().1, "[18,20)");
        let q = Bins::default_for(Factor::Quality);
        assert_eq!(q.assign(4.0).unwrap().1, "[3.5,4]");
        assert_eq!(q.assign(0.0).unwrap().1, "[0,0.5)");
    }

    #[test]
    fn frame_from_records() {
        use crate::labels::TissueLabel;
        use crate::metadata::{Site, SrMethod};
        let rec = |c: &str, l, d| MetricRecord { case_id: c.into(), label: l, dice: d, vs: d, hd95: Some(1.0), ed: 0 };
        let records: BTreeMap<String, Vec<MetricRecord>> = [
            ("a".to_string(), vec![rec("c1", TissueLabel::Gm, 0.6), rec("c1", TissueLabel::Wm, 0.8)]),
            ("b".to_string(), vec![rec("c1", TissueLabel::Gm, 0.9), rec("c1", TissueLabel::Wm, 0.9)]),
        ]
        .into();
        let meta = vec![CaseMetadata {
            case_id: "c1".into(),
            site: Site::Kispi,
            sr_method: SrMethod::Mialsrtk,
            ga_weeks: 27.0,
            condition: Condition::Pathological,
            quality: 2.5,
            in_domain: true,
        }];
        let f = build_frame(&records, &meta, SegMetric::Dice, &["a".into(), "b".into()]).unwrap();
        assert_abs_diff_eq!(f.rows[0].target, 0.8, epsilon = 1e-12);
        assert_eq!(f.rows[0].condition, 1.0);
        assert!(build_frame(&records, &meta, SegMetric::Dice, &["z".into()]).is_err());
    }

    #[test]
    fn additive_trees_decompose() {
        let g = Node::split(0, 2.0, Node::leaf(0.5), Node::leaf(0.9));
        let h = Node::split(1, 28.0, Node::leaf(0.1), Node::split(1, 32.0, Node::leaf(-0.2), Node::leaf(0.3)));
        let ens = TreeEnsemble::from_trees(vec![g.clone(), h.clone()], ForestConfig::default());
        let bg: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 9) as f64 * 0.5, 20.0 + i as f64 * 0.5, (i % 2) as f64]).collect();
        let eg = bg.iter().map(|r| g.predict(r)).sum::<f64>() / bg.len() as f64;
        let eh = bg.iter().map(|r| h.predict(r)).sum::<f64>() / bg.len() as f64;
        let x = [3.1, 30.0, 1.0];
        let a = shapley(&ens, &bg, &x).unwrap();
        assert_abs_diff_eq!(a.values[0], (g.predict(&x) - eg) / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.values[1], (h.predict(&x) - eh) / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.values[2], 0.0, epsilon = 1e-12);
    }
}
