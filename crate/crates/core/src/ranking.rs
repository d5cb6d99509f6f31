//! Leaderboards: missing-result penalties, per-column fractional ranks,
//! mean-rank aggregation and competition ranking of the final order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::biometry::MeasurementKind;
use crate::error::{Error, Result};
use crate::labels::TissueLabel;
use crate::metrics::MetricRecord;

/// Scores closer than this are ties.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SegMetric {
    Dice,
    #[serde(rename = "HD95")]
    Hd95,
    #[serde(rename = "VS")]
    Vs,
    #[serde(rename = "ED")]
    Ed,
}

impl SegMetric {
    /// Leaderboard column order.
    pub const ALL: [SegMetric; 4] = [SegMetric::Dice, SegMetric::Hd95, SegMetric::Vs, SegMetric::Ed];

    pub fn direction(self) -> Direction {
        match self {
            SegMetric::Dice | SegMetric::Vs => Direction::HigherBetter,
            SegMetric::Hd95 | SegMetric::Ed => Direction::LowerBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SegMetric::Dice => "Dice",
            SegMetric::Hd95 => "HD95",
            SegMetric::Vs => "VS",
            SegMetric::Ed => "ED",
        }
    }

    /// Value of this metric in a record; missing when the label was absent
    /// from exactly one of prediction and reference.
    pub fn value(self, r: &MetricRecord) -> Option<f64> {
        match self {
            SegMetric::Dice => Some(r.dice),
            SegMetric::Vs => Some(r.vs),
            SegMetric::Hd95 => r.hd95,
            SegMetric::Ed => (!r.label_missing()).then_some(r.ed as f64),
        }
    }
}

impl fmt::Display for SegMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SegMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SegMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown metric `{s}` (dice|hd95|vs|ed)")))
    }
}

/// Fills missing scores of one sub-ranking column.
///
/// Higher-is-better scores become 0; lower-is-better ones become twice the
/// largest present score. `None` if a lower-is-better column has no score at
/// all, in which case the column cannot be ranked.
pub fn impute_missing(column: &[Option<f64>], direction: Direction) -> Option<Vec<f64>> {
    match direction {
        Direction::HigherBetter => Some(column.iter().map(|v| v.unwrap_or(0.0)).collect()),
        Direction::LowerBetter => {
            let max = column.iter().flatten().copied().reduce(f64::max)?;
            Some(column.iter().map(|v| v.unwrap_or(2.0 * max)).collect())
        }
    }
}

/// Indices sorted best first, with tie groups as `(start, end)` ranges.
fn tie_groups(scores: &[f64], direction: Direction) -> (Vec<usize>, Vec<(usize, usize)>) {
    let key = |i: usize| match direction {
        Direction::HigherBetter => -scores[i],
        Direction::LowerBetter => scores[i],
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut groups = Vec::new();
    let mut start = 0;
    for p in 1..=order.len() {
        if p == order.len() || (key(order[p]) - key(order[p - 1])).abs() > TIE_TOL {
            groups.push((start, p - 1));
            start = p;
        }
    }
    (order, groups)
}

/// Rank 1 for the best score; ties get the average of the positions they span.
pub fn rank_scores(scores: &[f64], direction: Direction) -> Vec<f64> {
    let (order, groups) = tie_groups(scores, direction);
    let mut ranks = vec![0.0; scores.len()];
    for (s, e) in groups {
        let r = (s + e) as f64 / 2.0 + 1.0;
        for &i in &order[s..=e] {
            ranks[i] = r;
        }
    }
    ranks
}

/// Standard competition ranking ("1224"): ties share the lowest position.
pub fn competition_ranks(scores: &[f64], direction: Direction) -> Vec<usize> {
    let (order, groups) = tie_groups(scores, direction);
    let mut ranks = vec![0; scores.len()];
    for (s, e) in groups {
        for &i in &order[s..=e] {
            ranks[i] = s + 1;
        }
    }
    ranks
}

/// How column ranks are combined into a mean rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingScheme {
    /// Label ranks are summed within each metric, the sums ranked, and the
    /// four metric ranks averaged.
    #[default]
    PerMetric,
    /// Mean over every (label, metric) column rank.
    AllColumns,
}

/// Role of a leaderboard row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Participation {
    /// Ranked everywhere.
    #[default]
    Competing,
    /// Ranked per column, excluded from the final ranking.
    Baseline,
    /// Reported only, never ranked and never used for penalties.
    Bound,
}

impl Participation {
    pub fn as_str(self) -> &'static str {
        match self {
            Participation::Competing => "competing",
            Participation::Baseline => "baseline",
            Participation::Bound => "bound",
        }
    }
}

/// Scores of every team on a set of named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub teams: Vec<String>,
    pub columns: Vec<(String, Direction)>,
    /// `scores[team][column]`.
    pub scores: Vec<Vec<Option<f64>>>,
}

impl ScoreMatrix {
    pub fn new(teams: Vec<String>, columns: Vec<(String, Direction)>, scores: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if teams.len() < 2 {
            return Err(Error::Ranking(format!("need at least 2 teams, got {}", teams.len())));
        }
        if scores.len() != teams.len() || scores.iter().any(|row| row.len() != columns.len()) {
            return Err(Error::Ranking("score matrix shape does not match teams x columns".into()));
        }
        Ok(ScoreMatrix { teams, columns, scores })
    }

    /// Imputes and ranks every column; unrankable columns are skipped.
    pub fn rank(&self) -> RankTable {
        let mut ranks = vec![Vec::new(); self.teams.len()];
        let mut columns = Vec::new();
        for (c, (name, dir)) in self.columns.iter().enumerate() {
            let col: Vec<Option<f64>> = self.scores.iter().map(|row| row[c]).collect();
            let Some(filled) = impute_missing(&col, *dir) else {
                log::warn!("column {name} has no scores, dropped");
                continue;
            };
            columns.push(name.clone());
            for (t, r) in rank_scores(&filled, *dir).into_iter().enumerate() {
                ranks[t].push(r);
            }
        }
        let mean_rank: Vec<f64> = ranks.iter().map(|r| r.iter().sum::<f64>() / r.len().max(1) as f64).collect();
        let final_rank = competition_ranks(&mean_rank, Direction::LowerBetter);
        RankTable { teams: self.teams.clone(), columns, ranks, mean_rank, final_rank }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub teams: Vec<String>,
    pub columns: Vec<String>,
    /// `ranks[team][column]`.
    pub ranks: Vec<Vec<f64>>,
    pub mean_rank: Vec<f64>,
    pub final_rank: Vec<usize>,
}

/// Mean rank and final competition rank of each team from precomputed
/// per-metric ranks (`metric_ranks[team][metric]`).
pub fn aggregate_from_ranks(metric_ranks: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let mean: Vec<f64> = metric_ranks.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let fin = competition_ranks(&mean, Direction::LowerBetter);
    (mean, fin)
}

/// One score/rank cell of a leaderboard row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnResult {
    pub column: String,
    pub score: Option<f64>,
    pub rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub team: String,
    pub role: Participation,
    pub columns: Vec<ColumnResult>,
    /// Per (label, metric) sub-rankings behind the segmentation columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detail: Vec<ColumnResult>,
    pub mean_rank: Option<f64>,
    /// Mean rank for segmentation, overall MAPE for biometry.
    pub final_score: Option<f64>,
    pub final_rank: Option<usize>,
}

impl LeaderboardRow {
    pub fn column(&self, name: &str) -> Option<&ColumnResult> {
        self.columns.iter().find(|c| c.column == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub task: String,
    pub scheme: String,
    pub columns: Vec<String>,
    /// Columns that could not be ranked because no team had a score.
    pub dropped: Vec<String>,
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    pub fn row(&self, team: &str) -> Option<&LeaderboardRow> {
        self.rows.iter().find(|r| r.team == team)
    }
}

type Column = (TissueLabel, SegMetric);

/// Segmentation leaderboard from per-case records of every team.
///
/// Each (case, label, metric) cell is penalised across teams first, then
/// averaged over cases per team and ranked per (label, metric). A cell no
/// team could score is left out of that column.
pub fn aggregate_segmentation(
    submissions: &BTreeMap<String, Vec<MetricRecord>>,
    scheme: RankingScheme,
) -> Result<Leaderboard> {
    if submissions.len() < 2 {
        return Err(Error::Ranking(format!("need at least 2 teams, got {}", submissions.len())));
    }
    let teams: Vec<&String> = submissions.keys().collect();
    let case_sets: Vec<BTreeSet<&str>> =
        submissions.values().map(|recs| recs.iter().map(|r| r.case_id.as_str()).collect()).collect();
    for (t, set) in teams.iter().zip(&case_sets).skip(1) {
        if *set != case_sets[0] {
            let diff: Vec<_> = set.symmetric_difference(&case_sets[0]).take(5).collect();
            return Err(Error::Pairing {
                case_id: diff.first().map(|s| s.to_string()).unwrap_or_default(),
                reason: format!("team {t} was evaluated on a different case set than {} ({diff:?})", teams[0]),
            });
        }
    }
    let cases: Vec<&str> = case_sets[0].iter().copied().collect();
    let labels: BTreeSet<TissueLabel> = submissions.values().flatten().map(|r| r.label).collect();

    let lookup: Vec<BTreeMap<(&str, TissueLabel), &MetricRecord>> = submissions
        .values()
        .map(|recs| recs.iter().map(|r| ((r.case_id.as_str(), r.label), r)).collect())
        .collect();

    // team means per column
    let mut means: BTreeMap<Column, Vec<f64>> = BTreeMap::new();
    let mut dropped = Vec::new();
    for &label in &labels {
        for metric in SegMetric::ALL {
            let mut sums = vec![0.0; teams.len()];
            let mut kept = 0usize;
            for &case in &cases {
                let cell: Vec<Option<f64>> =
                    lookup.iter().map(|m| m.get(&(case, label)).and_then(|r| metric.value(r))).collect();
                let Some(filled) = impute_missing(&cell, metric.direction()) else {
                    continue;
                };
                kept += 1;
                sums.iter_mut().zip(filled).for_each(|(s, v)| *s += v);
            }
            if kept == 0 {
                log::warn!("{label} {metric}: no team has a score on any case, column dropped");
                dropped.push(format!("{label} {metric}"));
                continue;
            }
            means.insert((label, metric), sums.into_iter().map(|s| s / kept as f64).collect());
        }
    }

    let col_ranks: BTreeMap<Column, Vec<f64>> =
        means.iter().map(|(&(l, m), v)| ((l, m), rank_scores(v, m.direction()))).collect();

    let mut metric_ranks: BTreeMap<SegMetric, Vec<f64>> = BTreeMap::new();
    let mut metric_scores: BTreeMap<SegMetric, Vec<f64>> = BTreeMap::new();
    for metric in SegMetric::ALL {
        let cols: Vec<_> = col_ranks.keys().filter(|(_, m)| *m == metric).collect();
        if cols.is_empty() {
            continue;
        }
        let sums: Vec<f64> = (0..teams.len()).map(|t| cols.iter().map(|c| col_ranks[c][t]).sum()).collect();
        metric_ranks.insert(metric, rank_scores(&sums, Direction::LowerBetter));
        let avg: Vec<f64> =
            (0..teams.len()).map(|t| cols.iter().map(|c| means[c][t]).sum::<f64>() / cols.len() as f64).collect();
        metric_scores.insert(metric, avg);
    }
    if metric_ranks.is_empty() {
        return Err(Error::Ranking("no rankable column".into()));
    }

    let mean_rank: Vec<f64> = (0..teams.len())
        .map(|t| match scheme {
            RankingScheme::PerMetric => {
                metric_ranks.values().map(|r| r[t]).sum::<f64>() / metric_ranks.len() as f64
            }
            RankingScheme::AllColumns => col_ranks.values().map(|r| r[t]).sum::<f64>() / col_ranks.len() as f64,
        })
        .collect();
    let final_rank = competition_ranks(&mean_rank, Direction::LowerBetter);

    let mut rows: Vec<LeaderboardRow> = teams
        .iter()
        .enumerate()
        .map(|(t, team)| LeaderboardRow {
            team: team.to_string(),
            role: Participation::Competing,
            columns: metric_ranks
                .keys()
                .map(|m| ColumnResult {
                    column: m.name().to_string(),
                    score: Some(metric_scores[m][t]),
                    rank: Some(metric_ranks[m][t]),
                })
                .collect(),
            detail: col_ranks
                .keys()
                .map(|c| ColumnResult {
                    column: format!("{} {}", c.0, c.1),
                    score: Some(means[c][t]),
                    rank: Some(col_ranks[c][t]),
                })
                .collect(),
            mean_rank: Some(mean_rank[t]),
            final_score: Some(mean_rank[t]),
            final_rank: Some(final_rank[t]),
        })
        .collect();
    rows.sort_by(|a, b| a.final_rank.cmp(&b.final_rank).then_with(|| a.team.cmp(&b.team)));

    Ok(Leaderboard {
        task: "segmentation".into(),
        scheme: match scheme {
            RankingScheme::PerMetric => "per-metric".into(),
            RankingScheme::AllColumns => "all-columns".into(),
        },
        columns: metric_ranks.keys().map(|m| m.name().to_string()).collect(),
        dropped,
        rows,
    })
}

/// Penalised MAPE of one team on one measurement kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindScore {
    /// `None` when the team produced no valid prediction for this kind.
    pub mape: Option<f64>,
    /// Reference-present pairs of this kind.
    pub n: usize,
    /// Pairs whose error was imputed.
    pub n_imputed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiometryScore {
    pub team: String,
    pub role: Participation,
    pub per_kind: BTreeMap<MeasurementKind, KindScore>,
}

/// Combination of per-kind MAPEs into the overall score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapeAggregation {
    /// Weighted by the number of reference pairs of each kind.
    #[default]
    Pooled,
    MeanOfKinds,
}

/// Biometry leaderboard. Baselines are ranked per kind only; bounds are
/// reported unranked. Rows are ordered by overall MAPE.
pub fn aggregate_biometry(scores: &[BiometryScore], aggregation: MapeAggregation) -> Result<Leaderboard> {
    let ranked: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].role != Participation::Bound).collect();
    if ranked.len() < 2 {
        return Err(Error::Ranking(format!("need at least 2 ranked entries, got {}", ranked.len())));
    }
    let kinds: BTreeSet<MeasurementKind> = scores.iter().flat_map(|s| s.per_kind.keys().copied()).collect();

    let mut values: Vec<BTreeMap<MeasurementKind, (f64, usize)>> = vec![BTreeMap::new(); scores.len()];
    let mut ranks: Vec<BTreeMap<MeasurementKind, f64>> = vec![BTreeMap::new(); scores.len()];
    let mut dropped = Vec::new();
    for &kind in &kinds {
        let n_ref = scores.iter().filter_map(|s| s.per_kind.get(&kind)).map(|k| k.n).max().unwrap_or(0);
        let col: Vec<Option<f64>> =
            ranked.iter().map(|&i| scores[i].per_kind.get(&kind).and_then(|k| k.mape)).collect();
        let Some(filled) = impute_missing(&col, Direction::LowerBetter) else {
            log::warn!("{kind}: no entry has a valid prediction, kind dropped");
            dropped.push(kind.to_string());
            continue;
        };
        for ((&i, v), r) in ranked.iter().zip(&filled).zip(rank_scores(&filled, Direction::LowerBetter)) {
            values[i].insert(kind, (*v, n_ref));
            ranks[i].insert(kind, r);
        }
        for (i, s) in scores.iter().enumerate().filter(|(_, s)| s.role == Participation::Bound) {
            if let Some(m) = s.per_kind.get(&kind).and_then(|k| k.mape) {
                values[i].insert(kind, (m, s.per_kind[&kind].n));
            }
        }
    }

    let final_mape: Vec<Option<f64>> = values
        .iter()
        .map(|v| {
            if v.is_empty() {
                return None;
            }
            Some(match aggregation {
                MapeAggregation::Pooled => {
                    let w: usize = v.values().map(|x| x.1).sum();
                    if w == 0 {
                        v.values().map(|x| x.0).sum::<f64>() / v.len() as f64
                    } else {
                        v.values().map(|x| x.0 * x.1 as f64).sum::<f64>() / w as f64
                    }
                }
                MapeAggregation::MeanOfKinds => v.values().map(|x| x.0).sum::<f64>() / v.len() as f64,
            })
        })
        .collect();

    let rows = biometry_rows(scores.iter().map(|s| (s.team.as_str(), s.role)), &values, &ranks, &final_mape, &kinds);
    Ok(Leaderboard {
        task: "biometry".into(),
        scheme: match aggregation {
            MapeAggregation::Pooled => "pooled-mape".into(),
            MapeAggregation::MeanOfKinds => "mean-of-kinds-mape".into(),
        },
        columns: kinds.iter().filter(|k| !dropped.contains(&k.to_string())).map(|k| k.to_string()).collect(),
        dropped,
        rows,
    })
}

/// Ranks a biometry table given final per-kind and overall MAPEs directly.
pub fn rank_biometry_table(
    entries: &[(String, Participation, BTreeMap<MeasurementKind, f64>, f64)],
) -> Result<Leaderboard> {
    let kinds: BTreeSet<MeasurementKind> = entries.iter().flat_map(|e| e.2.keys().copied()).collect();
    let values: Vec<BTreeMap<MeasurementKind, (f64, usize)>> =
        entries.iter().map(|e| e.2.iter().map(|(&k, &v)| (k, (v, 1))).collect()).collect();
    let ranked: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].1 != Participation::Bound).collect();
    let mut ranks: Vec<BTreeMap<MeasurementKind, f64>> = vec![BTreeMap::new(); entries.len()];
    for &kind in &kinds {
        let col: Vec<Option<f64>> = ranked.iter().map(|&i| entries[i].2.get(&kind).copied()).collect();
        let filled = impute_missing(&col, Direction::LowerBetter)
            .ok_or_else(|| Error::Ranking(format!("{kind}: no ranked values")))?;
        for (&i, r) in ranked.iter().zip(rank_scores(&filled, Direction::LowerBetter)) {
            ranks[i].insert(kind, r);
        }
    }
    let final_mape: Vec<Option<f64>> = entries.iter().map(|e| Some(e.3)).collect();
    let rows = biometry_rows(entries.iter().map(|e| (e.0.as_str(), e.1)), &values, &ranks, &final_mape, &kinds);
    Ok(Leaderboard {
        task: "biometry".into(),
        scheme: "given".into(),
        columns: kinds.iter().map(|k| k.to_string()).collect(),
        dropped: Vec::new(),
        rows,
    })
}

fn biometry_rows<'a>(
    entries: impl Iterator<Item = (&'a str, Participation)>,
    values: &[BTreeMap<MeasurementKind, (f64, usize)>],
    ranks: &[BTreeMap<MeasurementKind, f64>],
    final_mape: &[Option<f64>],
    kinds: &BTreeSet<MeasurementKind>,
) -> Vec<LeaderboardRow> {
    let entries: Vec<_> = entries.collect();
    let competing: Vec<usize> = (0..entries.len())
        .filter(|&i| entries[i].1 == Participation::Competing && final_mape[i].is_some())
        .collect();
    let comp = competition_ranks(
        &competing.iter().map(|&i| final_mape[i].unwrap()).collect::<Vec<_>>(),
        Direction::LowerBetter,
    );
    let mut final_rank = vec![None; entries.len()];
    for (&i, r) in competing.iter().zip(comp) {
        final_rank[i] = Some(r);
    }
    let mut rows: Vec<LeaderboardRow> = entries
        .iter()
        .enumerate()
        .map(|(i, (team, role))| LeaderboardRow {
            team: team.to_string(),
            role: *role,
            columns: kinds
                .iter()
                .filter(|k| values.iter().any(|v| v.contains_key(k)))
                .map(|k| ColumnResult {
                    column: k.to_string(),
                    score: values[i].get(k).map(|x| x.0),
                    rank: ranks[i].get(k).copied(),
                })
                .collect(),
            detail: Vec::new(),
            mean_rank: None,
            final_score: final_mape[i],
            final_rank: final_rank[i],
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &LeaderboardRow| r.final_score.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| a.team.cmp(&b.team))
    });
    rows
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `team,role,<col>_score,<col>_rank,...,mean_rank,final_score,final_rank`.
pub fn write_leaderboard_csv<W: Write>(writer: W, board: &Leaderboard) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["team".to_string(), "role".to_string()];
    for c in &board.columns {
        header.push(format!("{c}_score"));
        header.push(format!("{c}_rank"));
    }
    header.extend(["mean_rank", "final_score", "final_rank"].map(String::from));
    w.write_record(&header)?;
    for row in &board.rows {
        let mut rec = vec![row.team.clone(), row.role.as_str().to_string()];
        for c in &board.columns {
            let cell = row.column(c);
            rec.push(fmt_opt(cell.and_then(|c| c.score)));
            rec.push(fmt_opt(cell.and_then(|c| c.rank)));
        }
        rec.push(fmt_opt(row.mean_rank));
        rec.push(fmt_opt(row.final_score));
        rec.push(fmt_opt(row.final_rank));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
