//! VIN-keyed variant manifest store.
//!
//! The manifest supplies the expected feature set for each vehicle. Records
//! live one-per-line as JSON; ingestion validates every record, rejects
//! duplicate VINs, and freezes the database. Export reproduces the ingested
//! content byte-stably.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::routing::{RoutingTable, TaskId};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("invalid VIN `{vin}`: {reason}")]
    InvalidVin { vin: String, reason: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate VIN `{0}`")]
    DuplicateVin(String),
    #[error("record for VIN `{vin}` is invalid: {reason}")]
    InvalidRecord { vin: String, reason: String },
    #[error("no manifest entry for VIN `{0}`")]
    UnknownVin(String),
    #[error("failed to read manifest: {0}")]
    Io(#[from] std::io::Error),
}

/// 17-character Vehicle Identification Number.
///
/// Uppercase alphanumeric, excluding the ambiguous letters I, O and Q.
/// Check-digit validation is opt-in via [`Vin::validate_check_digit`];
/// synthetic fleet VINs generally do not carry a valid check digit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Vin(String);

impl Vin {
    pub fn parse(s: &str) -> Result<Self, ManifestError> {
        if s.len() != 17 {
            return Err(ManifestError::InvalidVin {
                vin: s.to_string(),
                reason: format!("length {} != 17", s.len()),
            });
        }
        for c in s.chars() {
            let ok = c.is_ascii_digit() || (c.is_ascii_uppercase() && !matches!(c, 'I' | 'O' | 'Q'));
            if !ok {
                return Err(ManifestError::InvalidVin {
                    vin: s.to_string(),
                    reason: format!("illegal character `{c}`"),
                });
            }
        }
        Ok(Vin(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Strict-mode check: standard transliteration/weights, position 9 is
    /// the check digit.
    pub fn validate_check_digit(&self) -> Result<(), ManifestError> {
        const WEIGHTS: [u32; 17] = [8, 7, 6, 5, 4, 3, 2, 10, 0, 9, 8, 7, 6, 5, 4, 3, 2];
        let translit = |c: char| -> u32 {
            match c {
                '0'..='9' => c as u32 - '0' as u32,
                'A' | 'J' => 1,
                'B' | 'K' | 'S' => 2,
                'C' | 'L' | 'T' => 3,
                'D' | 'M' | 'U' => 4,
                'E' | 'N' | 'V' => 5,
                'F' | 'W' => 6,
                'G' | 'P' | 'X' => 7,
                'H' | 'Y' => 8,
                'R' | 'Z' => 9,
                _ => 0,
            }
        };
        let sum: u32 = self
            .0
            .chars()
            .zip(WEIGHTS)
            .map(|(c, w)| translit(c) * w)
            .sum();
        let rem = sum % 11;
        let expected = if rem == 10 { 'X' } else { char::from_digit(rem, 10).unwrap() };
        let actual = self.0.chars().nth(8).unwrap();
        if expected == actual {
            Ok(())
        } else {
            Err(ManifestError::InvalidVin {
                vin: self.0.clone(),
                reason: format!("check digit `{actual}` != computed `{expected}`"),
            })
        }
    }
}

impl TryFrom<String> for Vin {
    type Error = ManifestError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Vin::parse(&s)
    }
}

impl From<Vin> for String {
    fn from(v: Vin) -> String {
        v.0
    }
}

impl fmt::Display for Vin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// ICE or EV powertrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Powertrain {
    Ice,
    Ev,
}

impl Powertrain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Powertrain::Ice => "ICE",
            Powertrain::Ev => "EV",
        }
    }

    pub fn flipped(&self) -> Powertrain {
        match self {
            Powertrain::Ice => Powertrain::Ev,
            Powertrain::Ev => Powertrain::Ice,
        }
    }
}

/// Expected build for one VIN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub vin: Vin,
    pub model: String,
    pub variant: String,
    pub powertrain: Powertrain,
    pub features: Vec<TaskId>,
    /// Free-form metadata passed through untouched.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Immutable VIN-to-spec database.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestDb {
    records: IndexMap<Vin, VariantSpec>,
    fingerprint: String,
}

impl ManifestDb {
    /// Parses one JSON record per line, validating each against the routing
    /// vocabulary when a table is supplied.
    pub fn ingest_str(text: &str, table: Option<&RoutingTable>) -> Result<Self, ManifestError> {
        let mut records = IndexMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let spec: VariantSpec =
                serde_json::from_str(line).map_err(|source| ManifestError::Parse {
                    line: idx + 1,
                    source,
                })?;
            if spec.variant.is_empty() {
                return Err(ManifestError::InvalidRecord {
                    vin: spec.vin.to_string(),
                    reason: "variant name is empty".into(),
                });
            }
            if let Some(table) = table {
                for f in &spec.features {
                    if !table.contains_task(f) {
                        return Err(ManifestError::InvalidRecord {
                            vin: spec.vin.to_string(),
                            reason: format!("feature `{f}` not in routing vocabulary"),
                        });
                    }
                }
            }
            if records.contains_key(&spec.vin) {
                return Err(ManifestError::DuplicateVin(spec.vin.to_string()));
            }
            records.insert(spec.vin.clone(), spec);
        }
        let fingerprint = hex_digest(text.as_bytes());
        Ok(ManifestDb {
            records,
            fingerprint,
        })
    }

    pub fn ingest(path: impl AsRef<Path>, table: Option<&RoutingTable>) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        Self::ingest_str(&text, table)
    }

    /// Builds a database directly from records (simulation path).
    pub fn from_records(records: Vec<VariantSpec>) -> Result<Self, ManifestError> {
        let text = export_records(&records);
        Self::ingest_str(&text, None)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// SHA-256 of the ingested bytes.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn lookup(&self, vin: &Vin) -> Result<&VariantSpec, ManifestError> {
        self.records
            .get(vin)
            .ok_or_else(|| ManifestError::UnknownVin(vin.to_string()))
    }

    pub fn expected_features(&self, vin: &Vin) -> Result<&[TaskId], ManifestError> {
        Ok(&self.lookup(vin)?.features)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VariantSpec> {
        self.records.values()
    }

    /// Byte-stable export: records in ingestion order, one compact JSON
    /// object per line.
    pub fn export(&self) -> String {
        export_records(&self.records.values().cloned().collect::<Vec<_>>())
    }
}

fn export_records(records: &[VariantSpec]) -> String {
    let mut out = String::new();
    for spec in records {
        out.push_str(&serde_json::to_string(spec).expect("spec serializes"));
        out.push('\n');
    }
    out
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let d = h.finalize();
    d.iter().map(|b| format!("{b:02x}")).collect()
}
