//! Landmark-based biometry: caliper measurements, MAPE scoring, the
//! gestational-age regression baseline and inter-rater agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata::CaseMetadata;
use crate::ranking::{BiometryScore, KindScore, Participation};
use crate::volume::{LabelVolume, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementKind {
    /// Length of the corpus callosum.
    #[serde(rename = "LCC")]
    Lcc,
    /// Height of the vermis.
    #[serde(rename = "HV")]
    Hv,
    /// Brain biparietal diameter.
    #[serde(rename = "bBIP")]
    Bbip,
    /// Skull biparietal diameter.
    #[serde(rename = "sBIP")]
    Sbip,
    /// Transverse cerebellar diameter.
    #[serde(rename = "TCD")]
    Tcd,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 5] = [
        MeasurementKind::Lcc,
        MeasurementKind::Hv,
        MeasurementKind::Bbip,
        MeasurementKind::Sbip,
        MeasurementKind::Tcd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasurementKind::Lcc => "LCC",
            MeasurementKind::Hv => "HV",
            MeasurementKind::Bbip => "bBIP",
            MeasurementKind::Sbip => "sBIP",
            MeasurementKind::Tcd => "TCD",
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasurementKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown measurement kind `{s}`")))
    }
}

/// Endpoint pairs for the five measurements of one case (world mm).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub case_id: String,
    pub pairs: BTreeMap<MeasurementKind, (Point3, Point3)>,
}

impl LandmarkSet {
    pub fn new(case_id: impl Into<String>) -> Self {
        LandmarkSet { case_id: case_id.into(), pairs: BTreeMap::new() }
    }

    pub fn insert(&mut self, kind: MeasurementKind, a: Point3, b: Point3) -> Result<()> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!("{}: {kind} endpoint is not finite", self.case_id)));
        }
        if a.distance(&b) <= 0.0 {
            return Err(Error::InvalidInput(format!("{}: {kind} endpoints coincide", self.case_id)));
        }
        self.pairs.insert(kind, (a, b));
        Ok(())
    }

    pub fn records(&self) -> Vec<BiometryRecord> {
        MeasurementKind::ALL
            .iter()
            .map(|&kind| BiometryRecord { case_id: self.case_id.clone(), kind, value_mm: measure(self, kind) })
            .collect()
    }
}

/// One measured (or missing) biometric length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiometryRecord {
    pub case_id: String,
    pub kind: MeasurementKind,
    pub value_mm: Option<f64>,
}

impl BiometryRecord {
    pub fn new(case_id: impl Into<String>, kind: MeasurementKind, value_mm: Option<f64>) -> Self {
        BiometryRecord { case_id: case_id.into(), kind, value_mm }
    }
}

/// Point-to-point caliper length; `None` when the pair is not annotated.
pub fn measure(lm: &LandmarkSet, kind: MeasurementKind) -> Option<f64> {
    lm.pairs.get(&kind).map(|(a, b)| a.distance(b))
}

/// Label codes of the two endpoints of every measurement in a landmark map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSchema(pub BTreeMap<MeasurementKind, [u8; 2]>);

impl Default for LandmarkSchema {
    fn default() -> Self {
        LandmarkSchema(
            MeasurementKind::ALL
                .iter()
                .enumerate()
                .map(|(i, &k)| (k, [2 * i as u8 + 1, 2 * i as u8 + 2]))
                .collect(),
        )
    }
}

/// Endpoints at the world-space centroid of each landmark code's voxels.
/// A measurement is missing unless both of its codes occur.
pub fn landmarks_from_label_volume(case_id: &str, v: &LabelVolume, schema: &LandmarkSchema) -> LandmarkSet {
    let [nx, ny, _] = v.dims();
    let mut sums = [[0.0f64; 3]; 256];
    let mut counts = [0usize; 256];
    for (idx, &code) in v.data().iter().enumerate() {
        if code == 0 {
            continue;
        }
        let c = code as usize;
        sums[c][0] += (idx % nx) as f64;
        sums[c][1] += ((idx / nx) % ny) as f64;
        sums[c][2] += (idx / (nx * ny)) as f64;
        counts[c] += 1;
    }
    let centroid = |code: u8| -> Option<Point3> {
        let n = counts[code as usize];
        (n > 0).then(|| v.world_coords_f(sums[code as usize].map(|s| s / n as f64)))
    };
    let mut set = LandmarkSet::new(case_id);
    for (&kind, &[a, b]) in &schema.0 {
        if let (Some(pa), Some(pb)) = (centroid(a), centroid(b)) {
            if set.insert(kind, pa, pb).is_err() {
                log::warn!("{case_id}: {kind} landmarks coincide, treated as missing");
            }
        }
    }
    set
}

#[derive(Debug, Deserialize, Serialize)]
struct LandmarkJson {
    case_id: String,
    landmarks: BTreeMap<String, [[f64; 3]; 2]>,
}

/// Parses `{case_id, landmarks: {LCC: [[x,y,z],[x,y,z]], ...}}` (world mm).
pub fn read_landmarks_json<R: Read>(reader: R) -> Result<LandmarkSet> {
    let raw: LandmarkJson = serde_json::from_reader(reader)?;
    let mut set = LandmarkSet::new(raw.case_id);
    for (name, [a, b]) in raw.landmarks {
        set.insert(name.parse()?, a.into(), b.into())?;
    }
    Ok(set)
}

pub fn write_landmarks_json<W: Write>(writer: W, set: &LandmarkSet) -> Result<()> {
    let raw = LandmarkJson {
        case_id: set.case_id.clone(),
        landmarks: set.pairs.iter().map(|(k, (a, b))| (k.name().to_string(), [a.to_array(), b.to_array()])).collect(),
    };
    serde_json::to_writer_pretty(writer, &raw)?;
    Ok(())
}

/// Mean absolute percentage error with bookkeeping of what was excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeSummary {
    /// Percent.
    pub value: f64,
    /// Pairs with both reference and prediction present.
    pub n: usize,
    /// Reference present but prediction missing.
    pub n_missing_prediction: usize,
}

impl MapeSummary {
    pub fn has_missing(&self) -> bool {
        self.n_missing_prediction > 0
    }
}

type PairKey = (String, MeasurementKind);

fn index_records(records: &[BiometryRecord]) -> BTreeMap<PairKey, Option<f64>> {
    records.iter().map(|r| ((r.case_id.clone(), r.kind), r.value_mm)).collect()
}

/// Absolute percentage error of every reference-present pair; `None` marks
/// a missing prediction.
pub fn pair_errors(pred: &[BiometryRecord], reference: &[BiometryRecord]) -> BTreeMap<PairKey, Option<f64>> {
    let pred = index_records(pred);
    index_records(reference)
        .into_iter()
        .filter_map(|(key, y)| {
            let y = y?;
            let yhat = pred.get(&key).copied().flatten();
            Some((key, yhat.map(|yhat| (y - yhat).abs() / y * 100.0)))
        })
        .collect()
}

fn summarize<'a>(errors: impl Iterator<Item = &'a Option<f64>>) -> Result<MapeSummary> {
    let (mut sum, mut n, mut missing) = (0.0, 0usize, 0usize);
    for e in errors {
        match e {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => missing += 1,
        }
    }
    if n == 0 {
        return Err(Error::Undefined("MAPE over zero matched measurement pairs".into()));
    }
    Ok(MapeSummary { value: sum / n as f64, n, n_missing_prediction: missing })
}

/// `(1/N) Σ |y - ŷ| / y × 100` over pairs matched on (case, kind).
/// Pairs whose reference is missing do not count towards N.
pub fn mape(pred: &[BiometryRecord], reference: &[BiometryRecord]) -> Result<MapeSummary> {
    summarize(pair_errors(pred, reference).values())
}

/// MAPE per measurement kind; kinds without any matched pair are omitted.
pub fn mape_by_kind(pred: &[BiometryRecord], reference: &[BiometryRecord]) -> BTreeMap<MeasurementKind, MapeSummary> {
    let errors = pair_errors(pred, reference);
    MeasurementKind::ALL
        .iter()
        .filter_map(|&k| {
            summarize(errors.iter().filter(|((_, kind), _)| *kind == k).map(|(_, e)| e))
                .ok()
                .map(|s| (k, s))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterRaterMape {
    pub per_kind: BTreeMap<MeasurementKind, f64>,
    /// Pooled over every matched pair.
    pub overall: f64,
    /// Unweighted mean of the per-kind values.
    pub mean_of_kinds: f64,
}

/// Agreement of rater A (as prediction) with rater B (as reference).
pub fn inter_rater_mape(rater_a: &[BiometryRecord], rater_b: &[BiometryRecord]) -> Result<InterRaterMape> {
    let errors: BTreeMap<_, _> = pair_errors(rater_a, rater_b).into_iter().filter(|(_, e)| e.is_some()).collect();
    if errors.is_empty() {
        return Err(Error::Undefined("raters share no annotated measurement".into()));
    }
    let overall = summarize(errors.values())?.value;
    let per_kind: BTreeMap<_, _> = MeasurementKind::ALL
        .iter()
        .filter_map(|&k| {
            summarize(errors.iter().filter(|((_, kind), _)| *kind == k).map(|(_, e)| e))
                .ok()
                .map(|s| (k, s.value))
        })
        .collect();
    let mean_of_kinds = per_kind.values().sum::<f64>() / per_kind.len() as f64;
    Ok(InterRaterMape { per_kind, overall, mean_of_kinds })
}

/// Intercept (mm) and slope (mm per week) of a straight line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub beta0: f64,
    pub beta1: f64,
}

impl LinearFit {
    pub fn predict(&self, ga_weeks: f64) -> f64 {
        self.beta0 + self.beta1 * ga_weeks
    }
}

/// Ordinary least squares fit of `y` on `x`.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * n {
        return Err(Error::Fit("all gestational ages are equal".into()));
    }
    let beta1 = sxy / sxx;
    Ok(LinearFit { beta0: my - beta1 * mx, beta1 })
}

/// Per-measurement linear regression on gestational age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaBaseline {
    pub fits: BTreeMap<MeasurementKind, LinearFit>,
}

impl GaBaseline {
    pub fn predict(&self, kind: MeasurementKind, ga_weeks: f64) -> Option<f64> {
        self.fits.get(&kind).map(|f| f.predict(ga_weeks))
    }

    /// One prediction per (case, fitted kind), sorted by case then kind.
    pub fn predict_cases(&self, cases: &[CaseMetadata]) -> Vec<BiometryRecord> {
        let mut cases: Vec<_> = cases.iter().collect();
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        cases
            .iter()
            .flat_map(|c| {
                self.fits
                    .iter()
                    .map(|(&kind, fit)| BiometryRecord::new(c.case_id.clone(), kind, Some(fit.predict(c.ga_weeks))))
            })
            .collect()
    }
}

/// Fits one line per kind from `(ga_weeks, value_mm)` samples.
pub fn fit_ga_baseline(train: &BTreeMap<MeasurementKind, Vec<(f64, f64)>>) -> Result<GaBaseline> {
    let fits = train
        .iter()
        .map(|(&kind, pts)| fit_line(pts).map(|f| (kind, f)).map_err(|e| Error::Fit(format!("{kind}: {e}"))))
        .collect::<Result<_>>()?;
    Ok(GaBaseline { fits })
}

/// Joins measurements with case GA into regression samples; cases without
/// metadata or with missing values are skipped.
pub fn training_samples(
    records: &[BiometryRecord],
    metadata: &[CaseMetadata],
) -> BTreeMap<MeasurementKind, Vec<(f64, f64)>> {
    let ga: BTreeMap<&str, f64> = metadata.iter().map(|m| (m.case_id.as_str(), m.ga_weeks)).collect();
    let mut out: BTreeMap<MeasurementKind, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        if let (Some(&g), Some(v)) = (ga.get(r.case_id.as_str()), r.value_mm) {
            out.entry(r.kind).or_default().push((g, v));
        }
    }
    out
}

/// A named set of biometry predictions taking part in scoring.
#[derive(Debug, Clone)]
pub struct BiometryEntry {
    pub name: String,
    pub role: Participation,
    pub predictions: Vec<BiometryRecord>,
}

/// Per-kind MAPE of each entry against the reference, applying the
/// missing-result penalty at the pair level.
///
/// A prediction missing for a (case, kind) pair gets twice the largest error
/// any other ranked entry made on that pair. An entry with no valid
/// prediction at all for a kind has that kind left MISSING, for imputation
/// at the leaderboard level.
pub fn score_entries(entries: &[BiometryEntry], reference: &[BiometryRecord]) -> Vec<BiometryScore> {
    let errors: Vec<BTreeMap<PairKey, Option<f64>>> =
        entries.iter().map(|e| pair_errors(&e.predictions, reference)).collect();
    let keys: BTreeSet<&PairKey> = errors.iter().flat_map(|m| m.keys()).collect();

    entries
        .iter()
        .enumerate()
        .map(|(ei, entry)| {
            let mut per_kind = BTreeMap::new();
            for kind in MeasurementKind::ALL {
                let mine: Vec<(&PairKey, Option<f64>)> = keys
                    .iter()
                    .filter(|k| k.1 == kind)
                    .map(|&k| (k, errors[ei].get(k).copied().flatten()))
                    .collect();
                if mine.is_empty() {
                    continue;
                }
                if mine.iter().all(|(_, e)| e.is_none()) {
                    per_kind.insert(kind, KindScore { mape: None, n: mine.len(), n_imputed: 0 });
                    continue;
                }
                let (mut sum, mut n, mut imputed) = (0.0, 0usize, 0usize);
                for (key, e) in mine {
                    let value = match e {
                        Some(v) => Some(v),
                        None => errors
                            .iter()
                            .enumerate()
                            .filter(|(oi, _)| *oi != ei && entries[*oi].role != Participation::Bound)
                            .filter_map(|(_, m)| m.get(key).copied().flatten())
                            .reduce(f64::max)
                            .map(|m| {
                                imputed += 1;
                                2.0 * m
                            }),
                    };
                    if let Some(v) = value {
                        sum += v;
                        n += 1;
                    }
                }
                per_kind.insert(kind, KindScore { mape: Some(sum / n as f64), n, n_imputed: imputed });
            }
            BiometryScore { team: entry.name.clone(), role: entry.role, per_kind }
        })
        .collect()
}

pub const BIOMETRY_CSV_HEADER: [&str; 3] = ["case_id", "kind", "value_mm"];

/// Reads `case_id,kind,value_mm`; an empty value is a missing measurement.
pub fn read_biometry_csv<R: Read>(reader: R) -> Result<Vec<BiometryRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != BIOMETRY_CSV_HEADER {
        return Err(Error::Parse(format!("biometry CSV header must be `{}`", BIOMETRY_CSV_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let value_mm = if row[2].is_empty() {
            None
        } else {
            let v: f64 = row[2]
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: value_mm `{}`: {e}", line + 2, &row[2])))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parse(format!("row {}: value_mm must be positive, got {v}", line + 2)));
            }
            Some(v)
        };
        out.push(BiometryRecord { case_id: row[0].to_string(), kind: row[1].parse()?, value_mm });
    }
    Ok(out)
}

pub fn write_biometry_csv<W: Write>(writer: W, records: &[BiometryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BIOMETRY_CSV_HEADER)?;
    for r in records {
        w.write_record([r.case_id.clone(), r.kind.to_string(), r.value_mm.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Affine;
    use approx::assert_abs_diff_eq;

    fn rec(case: &str, kind: MeasurementKind, v: Option<f64>) -> BiometryRecord {
        BiometryRecord::new(case, kind, v)
    }

    #[test]
    fn measure_examples() {
        let mut lm = LandmarkSet::new("c");
        lm.insert(MeasurementKind::Lcc, Point3::ORIGIN, Point3::new(0.0, 0.0, 10.0)).unwrap();
        lm.insert(MeasurementKind::Hv, Point3::new(1.0, 2.0, 2.0), Point3::ORIGIN).unwrap();
        assert_eq!(measure(&lm, MeasurementKind::Lcc), Some(10.0));
        assert_eq!(measure(&lm, MeasurementKind::Hv), Some(3.0));
        assert_eq!(measure(&lm, MeasurementKind::Tcd), None);
        assert!(lm.insert(MeasurementKind::Tcd, Point3::ORIGIN, Point3::ORIGIN).is_err());
    }

    #[test]
    fn landmarks_from_voxel_indices() {
        // 0.8 mm isotropic, endpoints 10 voxels apart on x
        let mut data = vec![0u8; 16 * 3 * 3];
        data[1 + 16 * (1 + 3)] = 1;
        data[11 + 16 * (1 + 3)] = 2;
        let v = LabelVolume::new([16, 3, 3], data, Affine::from_scale_translation([0.8; 3], [-5.0; 3])).unwrap();
        let lm = landmarks_from_label_volume("c", &v, &LandmarkSchema::default());
        assert_abs_diff_eq!(measure(&lm, MeasurementKind::Lcc).unwrap(), 8.0, epsilon = 1e-12);
        assert_eq!(measure(&lm, MeasurementKind::Hv), None);
    }

    #[test]
    fn centroid_of_multi_voxel_landmark() {
        let mut data = vec![0u8; 5];
        data[0] = 3;
        data[2] = 3;
        data[4] = 4;
        let v = LabelVolume::with_spacing([5, 1, 1], data, [1.0; 3]).unwrap();
        let lm = landmarks_from_label_volume("c", &v, &LandmarkSchema::default());
        let (a, b) = lm.pairs[&MeasurementKind::Hv];
        assert_eq!(a, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(b, Point3::new(4.0, 0.0, 0.0));
    }

    #[test]
    fn full_schema_phantom() {
        let dims = [40, 40, 40];
        let mut data = vec![0u8; 40 * 40 * 40];
        let idx = |i: usize, j: usize, k: usize| i + 40 * (j + 40 * k);
        // known distances: 3-4-0 -> 5, 0-0-12 -> 12, 6-8-0 -> 10, 2-3-6 -> 7, 1-4-8 -> 9
        let pairs = [((1, 1, 1), (4, 5, 1)), ((2, 2, 2), (2, 2, 14)), ((5, 5, 5), (11, 13, 5)), ((20, 20, 20), (22, 23, 26)), ((30, 1, 1), (31, 5, 9))];
        for (n, (a, b)) in pairs.iter().enumerate() {
            data[idx(a.0, a.1, a.2)] = 2 * n as u8 + 1;
            data[idx(b.0, b.1, b.2)] = 2 * n as u8 + 2;
        }
        let v = LabelVolume::with_spacing(dims, data, [1.0; 3]).unwrap();
        let lm = landmarks_from_label_volume("c", &v, &LandmarkSchema::default());
        let got: Vec<f64> = lm.records().iter().map(|r| r.value_mm.unwrap()).collect();
        assert_eq!(got, vec![5.0, 12.0, 10.0, 7.0, 9.0]);
    }

    #[test]
    fn landmark_json_roundtrip() {
        let text = r#"{"case_id":"sub-1","landmarks":{"LCC":[[0,0,0],[3,4,0]],"tcd":[[1,1,1],[1,1,3]]}}"#;
        let set = read_landmarks_json(text.as_bytes()).unwrap();
        assert_eq!(measure(&set, MeasurementKind::Lcc), Some(5.0));
        assert_eq!(measure(&set, MeasurementKind::Tcd), Some(2.0));
        let mut buf = Vec::new();
        write_landmarks_json(&mut buf, &set).unwrap();
        assert_eq!(read_landmarks_json(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn mape_examples() {
        let y = vec![rec("a", MeasurementKind::Lcc, Some(100.0))];
        assert_eq!(mape(&y, &y).unwrap().value, 0.0);
        let yhat = vec![rec("a", MeasurementKind::Lcc, Some(90.0))];
        assert_abs_diff_eq!(mape(&yhat, &y).unwrap().value, 10.0, epsilon = 1e-12);

        let y = vec![rec("a", MeasurementKind::Hv, Some(10.0)), rec("b", MeasurementKind::Hv, Some(20.0))];
        let yhat = vec![rec("a", MeasurementKind::Hv, Some(11.0)), rec("b", MeasurementKind::Hv, Some(18.0))];
        assert_abs_diff_eq!(mape(&yhat, &y).unwrap().value, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn mape_flags_missing_predictions_and_skips_missing_reference() {
        let y = vec![
            rec("a", MeasurementKind::Lcc, Some(10.0)),
            rec("b", MeasurementKind::Lcc, None),
            rec("c", MeasurementKind::Lcc, Some(10.0)),
        ];
        let yhat = vec![rec("a", MeasurementKind::Lcc, Some(12.0)), rec("b", MeasurementKind::Lcc, Some(50.0))];
        let s = mape(&yhat, &y).unwrap();
        assert_eq!((s.n, s.n_missing_prediction), (1, 1));
        assert!(s.has_missing());
        assert_abs_diff_eq!(s.value, 20.0, epsilon = 1e-12);
        assert!(matches!(mape(&[], &y), Err(Error::Undefined(_))));
    }

    #[test]
    fn mape_scale_invariant() {
        let y: Vec<_> = (1..6).map(|i| rec(&format!("c{i}"), MeasurementKind::Tcd, Some(10.0 * i as f64))).collect();
        let yhat: Vec<_> = (1..6).map(|i| rec(&format!("c{i}"), MeasurementKind::Tcd, Some(10.0 * i as f64 + 1.5))).collect();
        let scale = |v: &[BiometryRecord]| -> Vec<BiometryRecord> {
            v.iter().map(|r| rec(&r.case_id, r.kind, r.value_mm.map(|x| x * 3.7))).collect()
        };
        assert_abs_diff_eq!(mape(&yhat, &y).unwrap().value, mape(&scale(&yhat), &scale(&y)).unwrap().value, epsilon = 1e-9);
    }

    #[test]
    fn ga_fit_examples() {
        let pts: Vec<(f64, f64)> = (20..35).map(|g| (g as f64, 2.0 + 3.0 * g as f64)).collect();
        let f = fit_line(&pts).unwrap();
        assert_abs_diff_eq!(f.beta0, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.beta1, 3.0, epsilon = 1e-9);

        let f = fit_line(&[(20.0, 40.0), (30.0, 60.0)]).unwrap();
        assert_abs_diff_eq!(f.beta0, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.beta1, 2.0, epsilon = 1e-9);

        let f = fit_line(&[(20.0, 7.0), (25.0, 7.0), (33.0, 7.0)]).unwrap();
        assert_eq!(f.beta1, 0.0);
        assert_abs_diff_eq!(f.beta0, 7.0, epsilon = 1e-12);

        assert!(matches!(fit_line(&[(25.0, 1.0), (25.0, 2.0)]), Err(Error::Fit(_))));
        let mut train = BTreeMap::new();
        train.insert(MeasurementKind::Hv, vec![(25.0, 1.0), (25.0, 2.0)]);
        assert!(fit_ga_baseline(&train).is_err());
    }

    #[test]
    fn inter_rater_examples() {
        let b: Vec<_> = (0..10).map(|i| rec(&format!("c{i}"), MeasurementKind::ALL[i % 5], Some(20.0 + i as f64))).collect();
        let same = inter_rater_mape(&b, &b).unwrap();
        assert_eq!(same.overall, 0.0);
        let a: Vec<_> = b
            .iter()
            .enumerate()
            .map(|(i, r)| rec(&r.case_id, r.kind, r.value_mm.map(|v| if i % 2 == 0 { v * 1.05 } else { v * 0.95 })))
            .collect();
        let ir = inter_rater_mape(&a, &b).unwrap();
        assert_abs_diff_eq!(ir.overall, 5.0, epsilon = 1e-9);
        for v in ir.per_kind.values() {
            assert_abs_diff_eq!(*v, 5.0, epsilon = 1e-9);
        }
        assert!(inter_rater_mape(&[], &b).is_err());
    }

    #[test]
    fn biometry_csv_roundtrip() {
        let recs = vec![rec("a", MeasurementKind::Sbip, Some(71.25)), rec("a", MeasurementKind::Lcc, None)];
        let mut buf = Vec::new();
        write_biometry_csv(&mut buf, &recs).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("a,LCC,\n"));
        assert_eq!(read_biometry_csv(buf.as_slice()).unwrap(), recs);
        assert!(read_biometry_csv("case_id,kind,value_mm\na,LCC,-3\n".as_bytes()).is_err());
        assert!(read_biometry_csv("case_id,kind,value_mm\na,XYZ,3\n".as_bytes()).is_err());
    }

    #[test]
    fn pair_level_penalty_for_partial_missing() {
        let reference = vec![rec("a", MeasurementKind::Lcc, Some(10.0)), rec("b", MeasurementKind::Lcc, Some(10.0))];
        let entries = vec![
            BiometryEntry {
                name: "t1".into(),
                role: Participation::Competing,
                predictions: vec![rec("a", MeasurementKind::Lcc, Some(11.0)), rec("b", MeasurementKind::Lcc, Some(13.0))],
            },
            BiometryEntry {
                name: "t2".into(),
                role: Participation::Competing,
                predictions: vec![rec("a", MeasurementKind::Lcc, Some(12.0))],
            },
            BiometryEntry { name: "t3".into(), role: Participation::Competing, predictions: vec![] },
        ];
        let scores = score_entries(&entries, &reference);
        let t2 = &scores[1].per_kind[&MeasurementKind::Lcc];
        // pair a: 20 %, pair b imputed 2 * 30 % = 60 %
        assert_abs_diff_eq!(t2.mape.unwrap(), 40.0, epsilon = 1e-9);
        assert_eq!((t2.n, t2.n_imputed), (2, 1));
        assert_eq!(scores[2].per_kind[&MeasurementKind::Lcc].mape, None);
    }
}
