//! Seeded verification suites and their reports.
//!
//! Exponents in a [`SuiteConfig`] are the transport exponent `p`; routines
//! that work with gradients use the conjugate `q = p / (p - 1)`.

pub mod emit;
mod suites;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::report::Check;

pub use emit::{emit_report, to_canonical_json, Format};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteName {
    Hj,
    Modulus,
    Flow,
    Duality,
    Identification,
}

impl SuiteName {
    pub const ALL: [SuiteName; 5] = [
        SuiteName::Hj,
        SuiteName::Modulus,
        SuiteName::Flow,
        SuiteName::Duality,
        SuiteName::Identification,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::Hj => "hj",
            SuiteName::Modulus => "modulus",
            SuiteName::Flow => "flow",
            SuiteName::Duality => "duality",
            SuiteName::Identification => "identification",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite: SuiteName,
    pub seeds: Vec<u64>,
    pub sizes: Vec<usize>,
    pub exponents: Vec<f64>,
    /// Replaces the tolerance of every check with the given name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl SuiteConfig {
    /// The configuration each suite runs with when none is given.
    pub fn preset(suite: SuiteName) -> Self {
        let (seeds, sizes, exponents): (Vec<u64>, Vec<usize>, Vec<f64>) = match suite {
            SuiteName::Hj => ((0..50).collect(), vec![12], vec![1.5, 2.0, 3.0]),
            SuiteName::Modulus => ((0..50).collect(), vec![6], vec![1.5, 2.0, 3.0]),
            SuiteName::Flow => ((0..8).collect(), vec![6], vec![1.5, 2.0, 3.0]),
            SuiteName::Duality => ((0..12).collect(), vec![6, 10], vec![1.5, 2.0, 3.0]),
            SuiteName::Identification => (vec![0], vec![8, 16, 32, 64], vec![2.0]),
        };
        Self {
            suite,
            seeds,
            sizes,
            exponents,
            tolerances: BTreeMap::new(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("seeds must be nonempty".into()));
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidInput("sizes must be nonempty".into()));
        }
        if self.exponents.is_empty() {
            return Err(Error::InvalidInput("exponents must be nonempty".into()));
        }
        if let Some(n) = self.sizes.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidInput(format!("size {n} is below 2")));
        }
        if let Some(p) = self
            .exponents
            .iter()
            .find(|&&p| !(p > 1.0 && p.is_finite()))
        {
            return Err(Error::InvalidInput(format!("exponent {p} must exceed 1")));
        }
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "tolerance {k} = {v} must be nonnegative"
            )));
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = to_canonical_json(self).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub instance: String,
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Recorded for the study but excluded from the verdict.
    pub informational: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn counts(&self) -> bool {
        !self.informational
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstEntry {
    pub instance: String,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub informational: usize,
    /// Per asserted check name, the record with the largest `residual - tolerance`.
    pub worst: BTreeMap<String, WorstEntry>,
}

impl Summary {
    pub fn from_records(records: &[CheckRecord]) -> Self {
        let mut worst: BTreeMap<String, WorstEntry> = BTreeMap::new();
        let (mut passed, mut failed, mut informational) = (0, 0, 0);
        for r in records {
            if r.informational {
                informational += 1;
                continue;
            }
            if r.pass {
                passed += 1;
            } else {
                failed += 1;
            }
            let excess = |e: &WorstEntry| {
                if e.residual.is_nan() {
                    f64::INFINITY
                } else {
                    e.residual - e.tolerance
                }
            };
            let entry = WorstEntry {
                instance: r.instance.clone(),
                residual: r.residual,
                tolerance: r.tolerance,
            };
            match worst.get_mut(&r.name) {
                Some(slot) if excess(&entry) > excess(slot) => *slot = entry,
                Some(_) => {}
                None => {
                    worst.insert(r.name.clone(), entry);
                }
            }
        }
        Self {
            total: records.len(),
            passed,
            failed,
            informational,
            worst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub schema_version: String,
    pub suite: SuiteName,
    pub config: SuiteConfig,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
    pub provenance: Provenance,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn records_named<'a>(
        &'a self,
        name: &'a str,
    ) -> impl Iterator<Item = &'a CheckRecord> + 'a {
        self.records.iter().filter(move |r| r.name == name)
    }
}

/// Collects the records of one instance.
pub(crate) struct Recorder<'a> {
    instance: String,
    tolerances: &'a BTreeMap<String, f64>,
    records: Vec<CheckRecord>,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(instance: String, tolerances: &'a BTreeMap<String, f64>) -> Self {
        Self {
            instance,
            tolerances,
            records: Vec::new(),
        }
    }

    fn push(&mut self, check: Check, informational: bool) {
        let tolerance = self
            .tolerances
            .get(&check.name)
            .copied()
            .unwrap_or(check.tolerance);
        self.records.push(CheckRecord {
            instance: self.instance.clone(),
            pass: check.residual <= tolerance,
            name: check.name,
            residual: check.residual,
            tolerance,
            informational,
            note: check.note,
        });
    }

    pub(crate) fn check(&mut self, check: Check) {
        self.push(check, false);
    }

    pub(crate) fn info(&mut self, check: Check) {
        self.push(check, true);
    }

    /// A value recorded for the study, with no threshold.
    pub(crate) fn value(&mut self, name: &str, value: f64) {
        self.push(Check::new(name, value, f64::INFINITY), true);
    }

    pub(crate) fn error(&mut self, stage: &str, err: &Error) {
        self.push(
            Check::flag(format!("error:{stage}"), false).with_note(err.to_string()),
            false,
        );
    }

    pub(crate) fn finish(self) -> Vec<CheckRecord> {
        self.records
    }
}

/// Runs every instance of the suite; instances run in parallel and are
/// merged in enumeration order.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    config.validate()?;
    let instances = suites::instances(config);
    let mut records: Vec<CheckRecord> = instances
        .par_iter()
        .map(|inst| suites::run_instance(config, inst))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let extra = suites::cross_instance(config, &records);
    records.extend(extra);
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION.into(),
        suite: config.suite,
        config: config.clone(),
        summary: Summary::from_records(&records),
        records,
        provenance: Provenance {
            seeds: config.seeds.clone(),
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_seeds_rejected() {
        let mut c = SuiteConfig::preset(SuiteName::Hj);
        c.seeds.clear();
        assert!(c.validate().is_err());
        assert!(run_suite(&c).is_err());
    }

    #[test]
    fn config_json_roundtrip_and_unknown_suite() {
        let c = SuiteConfig::preset(SuiteName::Duality);
        let text = to_canonical_json(&c).unwrap();
        assert_eq!(SuiteConfig::from_json(&text).unwrap(), c);
        assert!(SuiteConfig::from_json(
            r#"{"suite":"nope","seeds":[0],"sizes":[4],"exponents":[2]}"#
        )
        .is_err());
        assert!("flow".parse::<SuiteName>().is_ok());
        assert!("Flow".parse::<SuiteName>().is_err());
    }

    #[test]
    fn hash_depends_on_config() {
        let a = SuiteConfig::preset(SuiteName::Hj);
        let mut b = a.clone();
        b.seeds.push(99);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn tolerance_override_applies() {
        let mut overrides = BTreeMap::new();
        overrides.insert("x".to_string(), 10.0);
        let mut r = Recorder::new("i".into(), &overrides);
        r.check(Check::new("x", 1.0, 0.5));
        r.check(Check::new("y", 1.0, 0.5));
        let recs = r.finish();
        assert!(recs[0].pass && recs[0].tolerance == 10.0);
        assert!(!recs[1].pass);
        let s = Summary::from_records(&recs);
        assert_eq!((s.passed, s.failed), (1, 1));
    }

    #[test]
    fn small_suites_are_deterministic() {
        let config = SuiteConfig {
            seeds: vec![1, 2],
            sizes: vec![5],
            exponents: vec![2.0],
            ..SuiteConfig::preset(SuiteName::Hj)
        };
        let a = to_canonical_json(&run_suite(&config).unwrap()).unwrap();
        let b = to_canonical_json(&run_suite(&config).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
