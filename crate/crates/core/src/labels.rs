//! Tissue label taxonomy and the configurable label schema.
//!
//! The default schema follows the FeTA convention: background plus seven
//! tissue classes with codes 0..=7. Only tissue labels (1..=7) take part in
//! metric aggregation and ranking.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TissueLabel {
    Background,
    /// External cerebrospinal fluid.
    #[serde(rename = "eCSF")]
    Ecsf,
    /// Grey matter.
    #[serde(rename = "GM")]
    Gm,
    /// White matter.
    #[serde(rename = "WM")]
    Wm,
    /// Ventricles.
    #[serde(rename = "VM")]
    Vm,
    /// Cerebellum.
    #[serde(rename = "CBM")]
    Cbm,
    /// Subcortical (deep) grey matter.
    #[serde(rename = "SGM")]
    Sgm,
    /// Brainstem.
    #[serde(rename = "BSM")]
    Bsm,
}

impl TissueLabel {
    pub const ALL: [TissueLabel; 8] = [
        TissueLabel::Background,
        TissueLabel::Ecsf,
        TissueLabel::Gm,
        TissueLabel::Wm,
        TissueLabel::Vm,
        TissueLabel::Cbm,
        TissueLabel::Sgm,
        TissueLabel::Bsm,
    ];

    /// The seven ranking-eligible tissue classes.
    pub const TISSUES: [TissueLabel; 7] = [
        TissueLabel::Ecsf,
        TissueLabel::Gm,
        TissueLabel::Wm,
        TissueLabel::Vm,
        TissueLabel::Cbm,
        TissueLabel::Sgm,
        TissueLabel::Bsm,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or(Error::UnknownLabel { code })
    }

    pub fn name(self) -> &'static str {
        match self {
            TissueLabel::Background => "Background",
            TissueLabel::Ecsf => "eCSF",
            TissueLabel::Gm => "GM",
            TissueLabel::Wm => "WM",
            TissueLabel::Vm => "VM",
            TissueLabel::Cbm => "CBM",
            TissueLabel::Sgm => "SGM",
            TissueLabel::Bsm => "BSM",
        }
    }

    pub fn is_tissue(self) -> bool {
        self != TissueLabel::Background
    }
}

impl fmt::Display for TissueLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TissueLabel {
    type Err = Error;

    /// Accepts either the short name (case-insensitive) or the numeric code.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(code) = s.parse::<u8>() {
            return Self::from_code(code);
        }
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown tissue label `{s}`")))
    }
}

/// Target Euler characteristic per tissue label.
///
/// Every structure is a single solid component except grey matter, which
/// consists of two (one per hemisphere). No tunnels, no cavities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyTargets(BTreeMap<TissueLabel, i64>);

impl Default for TopologyTargets {
    fn default() -> Self {
        let map = TissueLabel::TISSUES
            .iter()
            .map(|&l| (l, if l == TissueLabel::Gm { 2 } else { 1 }))
            .collect();
        TopologyTargets(map)
    }
}

impl TopologyTargets {
    pub fn new(map: BTreeMap<TissueLabel, i64>) -> Self {
        TopologyTargets(map)
    }

    /// Target EC for a label; labels without an explicit entry default to 1.
    pub fn target(&self, label: TissueLabel) -> i64 {
        self.0.get(&label).copied().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub code: u8,
    pub label: TissueLabel,
    #[serde(default = "default_true")]
    pub ranked: bool,
    /// Overrides the default target Euler characteristic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_ec: Option<i64>,
}

fn default_true() -> bool {
    true
}

/// Mapping from voxel codes to tissue labels.
///
/// Codes not listed here are rejected when a volume is validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub labels: Vec<LabelEntry>,
}

impl Default for LabelSchema {
    fn default() -> Self {
        let labels = TissueLabel::ALL
            .iter()
            .map(|&label| LabelEntry {
                code: label.code(),
                label,
                ranked: label.is_tissue(),
                target_ec: None,
            })
            .collect();
        LabelSchema { labels }
    }
}

impl LabelSchema {
    /// Checks that codes and labels are each used once.
    pub fn validate(&self) -> Result<()> {
        let mut codes = std::collections::BTreeSet::new();
        let mut labels = std::collections::BTreeSet::new();
        for e in &self.labels {
            if !codes.insert(e.code) {
                return Err(Error::InvalidInput(format!("duplicate code {} in label schema", e.code)));
            }
            if !labels.insert(e.label) {
                return Err(Error::InvalidInput(format!("label {} mapped twice in label schema", e.label)));
            }
        }
        if labels.contains(&TissueLabel::Background)
            && self.labels.iter().any(|e| e.label == TissueLabel::Background && e.ranked)
        {
            log::warn!("background is marked as ranked in the label schema");
        }
        Ok(())
    }

    pub fn is_known(&self, code: u8) -> bool {
        self.labels.iter().any(|e| e.code == code)
    }

    pub fn code_of(&self, label: TissueLabel) -> Option<u8> {
        self.labels.iter().find(|e| e.label == label).map(|e| e.code)
    }

    /// Ranking-eligible entries, sorted by label.
    pub fn ranked(&self) -> Vec<&LabelEntry> {
        let mut v: Vec<_> = self.labels.iter().filter(|e| e.ranked).collect();
        v.sort_by_key(|e| e.label);
        v
    }

    pub fn topology_targets(&self) -> TopologyTargets {
        let mut targets = TopologyTargets::default();
        for e in &self.labels {
            if let Some(t) = e.target_ec {
                targets.0.insert(e.label, t);
            }
        }
        targets
    }

    /// Lookup table code -> known, for fast volume validation.
    pub(crate) fn known_table(&self) -> [bool; 256] {
        let mut table = [false; 256];
        for e in &self.labels {
            table[e.code as usize] = true;
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_a_contiguous_bijection() {
        for (i, l) in TissueLabel::ALL.iter().enumerate() {
            assert_eq!(l.code() as usize, i);
            assert_eq!(TissueLabel::from_code(i as u8).unwrap(), *l);
        }
        assert!(TissueLabel::from_code(8).is_err());
        assert_eq!(TissueLabel::TISSUES.len(), 7);
        assert!(!TissueLabel::TISSUES.contains(&TissueLabel::Background));
    }

    #[test]
    fn parse_names_and_codes() {
        assert_eq!("gm".parse::<TissueLabel>().unwrap(), TissueLabel::Gm);
        assert_eq!("eCSF".parse::<TissueLabel>().unwrap(), TissueLabel::Ecsf);
        assert_eq!("7".parse::<TissueLabel>().unwrap(), TissueLabel::Bsm);
        assert!("cortex".parse::<TissueLabel>().is_err());
    }

    #[test]
    fn default_targets() {
        let t = TopologyTargets::default();
        assert_eq!(t.target(TissueLabel::Gm), 2);
        for l in TissueLabel::TISSUES.iter().filter(|&&l| l != TissueLabel::Gm) {
            assert_eq!(t.target(*l), 1);
        }
    }

    #[test]
    fn default_schema_excludes_background_from_ranking() {
        let s = LabelSchema::default();
        s.validate().unwrap();
        let ranked: Vec<_> = s.ranked().iter().map(|e| e.label).collect();
        assert_eq!(ranked, TissueLabel::TISSUES.to_vec());
    }

    #[test]
    fn schema_json_roundtrip_with_override() {
        let json = r#"{"labels":[{"code":0,"label":"Background","ranked":false},{"code":1,"label":"GM","target_ec":3}]}"#;
        let s: LabelSchema = serde_json::from_str(json).unwrap();
        s.validate().unwrap();
        assert_eq!(s.topology_targets().target(TissueLabel::Gm), 3);
        assert_eq!(s.code_of(TissueLabel::Gm), Some(1));
        assert!(!s.is_known(2));
    }

    #[test]
    fn duplicate_codes_rejected() {
        let mut s = LabelSchema::default();
        s.labels[2].code = 1;
        assert!(s.validate().is_err());
    }
}
