//! Per-label segmentation metrics: Dice, volume similarity, HD95 and
//! Euler characteristic difference.

pub mod distance;
pub mod overlap;
pub mod topology;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSchema, TissueLabel};
use crate::volume::LabelVolume;

pub use distance::{edt, hausdorff_percentile, hd95, percentile_sorted, surface_distances, surface_voxels, DistanceMap};
pub use overlap::{dice, volume_similarity};
pub use topology::{
    betti_numbers, count_cavities, count_components, euler_characteristic, euler_difference, Connectivity,
    TopologySummary,
};

/// Maximum affine discrepancy tolerated between a prediction and its reference.
pub const AFFINE_PAIRING_TOL: f64 = 1e-3;

/// Conventions baked into the metric implementations, recorded in run manifests.
pub const CONVENTIONS: &[(&str, &str)] = &[
    ("hd95", "pooled directed surface distances, 95th percentile, linear interpolation at p(n-1)/100"),
    ("surface", "foreground voxels with a background 6-neighbour; out-of-grid counts as background"),
    ("distance", "voxel-centre to voxel-centre, world mm from affine column norms"),
    ("connectivity", "26 foreground / 6 background"),
    ("ed", "|EC(pred) - fixed anatomical target|, EC = V - E + F - C of closed voxel cubes"),
    ("empty", "dice = vs = 1 when both empty, 0 when exactly one is empty; hd95 missing if either is empty"),
];

/// Metric values for one (case, tissue label) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub case_id: String,
    pub label: TissueLabel,
    pub dice: f64,
    pub vs: f64,
    /// `None` when either mask is empty.
    pub hd95: Option<f64>,
    pub ed: u64,
}

impl MetricRecord {
    /// Exactly one of prediction / reference lacks the label. Ranking treats
    /// the surface and topology metrics of such records as missing results.
    pub fn label_missing(&self) -> bool {
        self.hd95.is_none() && self.dice == 0.0
    }
}

/// Evaluates every ranked label of the schema for one case.
pub fn evaluate_case(
    case_id: &str,
    pred: &LabelVolume,
    reference: &LabelVolume,
    schema: &LabelSchema,
) -> Result<Vec<MetricRecord>> {
    if pred.dims() != reference.dims() {
        return Err(Error::Pairing {
            case_id: case_id.to_string(),
            reason: format!("prediction dims {:?} differ from reference dims {:?}", pred.dims(), reference.dims()),
        });
    }
    let diff = pred.affine().max_abs_diff(reference.affine());
    if diff > AFFINE_PAIRING_TOL {
        return Err(Error::Pairing {
            case_id: case_id.to_string(),
            reason: format!("affines differ by {diff:.3e} (tolerance {AFFINE_PAIRING_TOL:e})"),
        });
    }
    for (what, v) in [("prediction", pred), ("reference", reference)] {
        v.validate_codes(schema).map_err(|e| Error::Pairing {
            case_id: case_id.to_string(),
            reason: format!("{what}: {e}"),
        })?;
    }
    let targets = schema.topology_targets();
    let spacing = reference.spacing();
    schema
        .ranked()
        .into_iter()
        .map(|entry| {
            let p = pred.binary_mask(entry.code);
            let g = reference.binary_mask(entry.code);
            let (np, ng, inter) = overlap::overlap_counts(&p, &g);
            let dice = if np + ng == 0 { 1.0 } else { 2.0 * inter as f64 / (np + ng) as f64 };
            Ok(MetricRecord {
                case_id: case_id.to_string(),
                label: entry.label,
                dice,
                vs: overlap::volume_similarity_from_counts(np, ng),
                hd95: hd95(&p, &g, spacing)?,
                ed: euler_difference(&p, entry.label, &targets),
            })
        })
        .collect()
}

pub const METRIC_CSV_HEADER: [&str; 6] = ["case_id", "label", "dice", "vs", "hd95", "ed"];

/// Writes `case_id,label,dice,vs,hd95,ed`; missing HD95 is an empty cell.
pub fn write_metric_csv<W: Write>(writer: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRIC_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.case_id.clone(),
            r.label.name().to_string(),
            r.dice.to_string(),
            r.vs.to_string(),
            r.hd95.map(|v| v.to_string()).unwrap_or_default(),
            r.ed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric_csv<R: Read>(reader: R) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != METRIC_CSV_HEADER {
        return Err(Error::Parse(format!("metric CSV header must be `{}`", METRIC_CSV_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|e| Error::Parse(format!("row {}: `{}`: {e}", line + 2, &row[i])))
        };
        out.push(MetricRecord {
            case_id: row[0].to_string(),
            label: row[1].parse()?,
            dice: num(2)?,
            vs: num(3)?,
            hd95: if row[4].is_empty() { None } else { Some(num(4)?) },
            ed: row[5].parse().map_err(|e| Error::Parse(format!("row {}: ed: {e}", line + 2)))?,
        });
    }
    Ok(out)
}
