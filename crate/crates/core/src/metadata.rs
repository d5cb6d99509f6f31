//! Per-case acquisition metadata and its CSV representation.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quality ratings below this value flag a poor-quality reconstruction.
pub const POOR_QUALITY_THRESHOLD: f64 = 1.0;

macro_rules! string_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Parse(format!(concat!("unknown ", stringify!($name), " `{}`"), s)))
            }
        }
    };
}

string_enum!(
    /// Acquisition site.
    Site {
        Kispi => "KISPI",
        Vien => "VIEN",
        Chuv => "CHUV",
        Ucsf => "UCSF",
        Kcl => "KCL",
    }
);

string_enum!(
    /// Super-resolution reconstruction method.
    SrMethod {
        Mialsrtk => "MIALSRTK",
        Irtk => "IRTK",
        NiftyMic => "NiftyMIC",
        Svrtk => "SVRTK",
    }
);

string_enum!(
    Condition {
        Neurotypical => "neurotypical",
        Pathological => "pathological",
    }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetadata {
    pub case_id: String,
    pub site: Site,
    pub sr_method: SrMethod,
    pub ga_weeks: f64,
    pub condition: Condition,
    pub quality: f64,
    pub in_domain: bool,
}

impl CaseMetadata {
    pub fn validate(&self) -> Result<()> {
        if !(15.0..=42.0).contains(&self.ga_weeks) {
            return Err(Error::InvalidInput(format!(
                "case {}: ga_weeks {} outside [15, 42]",
                self.case_id, self.ga_weeks
            )));
        }
        if !(0.0..=4.0).contains(&self.quality) {
            return Err(Error::InvalidInput(format!(
                "case {}: quality {} outside [0, 4]",
                self.case_id, self.quality
            )));
        }
        Ok(())
    }

    pub fn is_poor_quality(&self) -> bool {
        self.quality < POOR_QUALITY_THRESHOLD
    }

    /// Combined site and reconstruction level, e.g. `KISPI-MIALSRTK`.
    pub fn site_sr(&self) -> String {
        format!("{}-{}", self.site, self.sr_method)
    }
}

#[derive(Debug, Deserialize)]
struct MetadataRow {
    case_id: String,
    site: String,
    sr_method: String,
    ga_weeks: f64,
    condition: String,
    quality: f64,
    in_domain: String,
}

fn parse_bool01(s: &str) -> Result<bool> {
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Parse(format!("in_domain must be 0 or 1, got `{other}`"))),
    }
}

pub const METADATA_HEADER: [&str; 7] =
    ["case_id", "site", "sr_method", "ga_weeks", "condition", "quality", "in_domain"];

/// Reads `case_id,site,sr_method,ga_weeks,condition,quality,in_domain`.
pub fn read_metadata_csv<R: Read>(reader: R) -> Result<Vec<CaseMetadata>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != METADATA_HEADER {
        return Err(Error::Parse(format!(
            "metadata header must be `{}`, got `{}`",
            METADATA_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<MetadataRow>() {
        let row = row?;
        let meta = CaseMetadata {
            site: row.site.parse()?,
            sr_method: row.sr_method.parse()?,
            ga_weeks: row.ga_weeks,
            condition: row.condition.parse()?,
            quality: row.quality,
            in_domain: parse_bool01(&row.in_domain)?,
            case_id: row.case_id,
        };
        meta.validate()?;
        out.push(meta);
    }
    Ok(out)
}

pub fn read_metadata_file(path: &std::path::Path) -> Result<Vec<CaseMetadata>> {
    read_metadata_csv(std::fs::File::open(path)?)
}

pub fn write_metadata_csv<W: std::io::Write>(writer: W, rows: &[CaseMetadata]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METADATA_HEADER)?;
    for m in rows {
        w.write_record([
            m.case_id.clone(),
            m.site.to_string(),
            m.sr_method.to_string(),
            m.ga_weeks.to_string(),
            m.condition.to_string(),
            m.quality.to_string(),
            if m.in_domain { "1".into() } else { "0".into() },
        ])?;
    }
    w.flush()?;
    Ok(())
}
