//! Simulator configuration as a flat `key=value` file.
//!
//! ```text
//! # MESC with a smaller shared TLB
//! design = mesc
//! iommu_entries = 256
//! energy_memory_read = 120.0
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Baseline,
    Thp,
    Colt,
    FullColt,
    Mesc,
    MescColt,
}

impl Design {
    pub const ALL: [Design; 6] = [
        Design::Baseline,
        Design::Thp,
        Design::Colt,
        Design::FullColt,
        Design::Mesc,
        Design::MescColt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Design::Baseline => "baseline",
            Design::Thp => "thp",
            Design::Colt => "colt",
            Design::FullColt => "full_colt",
            Design::Mesc => "mesc",
            Design::MescColt => "mesc_colt",
        }
    }

    /// Subregion entries, the MSC and the contiguity-aware walk.
    pub fn uses_subregions(self) -> bool {
        matches!(self, Design::Mesc | Design::MescColt)
    }

    /// Walks also produce a CoLT run.
    pub fn uses_colt(self) -> bool {
        matches!(self, Design::Colt | Design::FullColt | Design::MescColt)
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        Design::ALL
            .into_iter()
            .find(|d| d.name() == norm)
            .ok_or_else(|| Error::UnknownDesign(s.to_string()))
    }
}

/// Simulated cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Latencies {
    pub per_cu_hit: u64,
    pub iommu_access: u64,
    pub memory_read: u64,
    pub iommu_round_trip: u64,
}

impl Default for Latencies {
    fn default() -> Self {
        Latencies {
            per_cu_hit: 1,
            iommu_access: 20,
            memory_read: 200,
            iommu_round_trip: 100,
        }
    }
}

/// Picojoules per access. The defaults are placeholders of plausible
/// relative magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParams {
    pub per_cu_read: f64,
    pub per_cu_write: f64,
    pub iommu_regular_read: f64,
    pub iommu_regular_write: f64,
    pub iommu_subregion_read: f64,
    pub iommu_subregion_write: f64,
    pub msc_read: f64,
    pub msc_write: f64,
    pub pwc_read: f64,
    pub pwc_write: f64,
    pub memory_read: f64,
    pub memory_write: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            per_cu_read: 1.0,
            per_cu_write: 1.2,
            iommu_regular_read: 6.0,
            iommu_regular_write: 7.0,
            iommu_subregion_read: 4.0,
            iommu_subregion_write: 5.0,
            msc_read: 2.0,
            msc_write: 2.5,
            pwc_read: 3.0,
            pwc_write: 3.5,
            memory_read: 100.0,
            memory_write: 100.0,
        }
    }
}

impl EnergyParams {
    pub fn fields(&self) -> [(&'static str, f64); 12] {
        [
            ("per_cu_read", self.per_cu_read),
            ("per_cu_write", self.per_cu_write),
            ("iommu_regular_read", self.iommu_regular_read),
            ("iommu_regular_write", self.iommu_regular_write),
            ("iommu_subregion_read", self.iommu_subregion_read),
            ("iommu_subregion_write", self.iommu_subregion_write),
            ("msc_read", self.msc_read),
            ("msc_write", self.msc_write),
            ("pwc_read", self.pwc_read),
            ("pwc_write", self.pwc_write),
            ("memory_read", self.memory_read),
            ("memory_write", self.memory_write),
        ]
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "per_cu_read" => &mut self.per_cu_read,
            "per_cu_write" => &mut self.per_cu_write,
            "iommu_regular_read" => &mut self.iommu_regular_read,
            "iommu_regular_write" => &mut self.iommu_regular_write,
            "iommu_subregion_read" => &mut self.iommu_subregion_read,
            "iommu_subregion_write" => &mut self.iommu_subregion_write,
            "msc_read" => &mut self.msc_read,
            "msc_write" => &mut self.msc_write,
            "pwc_read" => &mut self.pwc_read,
            "pwc_write" => &mut self.pwc_write,
            "memory_read" => &mut self.memory_read,
            "memory_write" => &mut self.memory_write,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeEnergy(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignConfig {
    pub design: Design,
    pub cus: usize,
    pub per_cu_entries: usize,
    pub iommu_sets: usize,
    pub iommu_ways: usize,
    /// Ways reserved for regular entries; the rest may hold subregions.
    pub partition_split: usize,
    pub msc_entries: usize,
    pub msc_ways: usize,
    pub pwc_bytes: usize,
    pub walkers: usize,
    /// `None` is unbounded.
    pub pwb_depth: Option<usize>,
    pub latency: Latencies,
    pub energy: EnergyParams,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            design: Design::Baseline,
            cus: 16,
            per_cu_entries: 32,
            iommu_sets: 32,
            iommu_ways: 16,
            partition_split: 8,
            msc_entries: 512,
            msc_ways: 8,
            pwc_bytes: 8192,
            walkers: 16,
            pwb_depth: None,
            latency: Latencies::default(),
            energy: EnergyParams::default(),
        }
    }
}

const INT_KEYS: &[&str] = &[
    "cus",
    "per_cu_entries",
    "iommu_entries",
    "iommu_sets",
    "iommu_ways",
    "partition_split",
    "msc_entries",
    "msc_ways",
    "pwc_bytes",
    "walkers",
    "pwb_depth",
    "latency_per_cu_hit",
    "latency_iommu_access",
    "latency_memory_read",
    "latency_iommu_round_trip",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        msg: "not a number of the expected kind".into(),
    })
}

impl DesignConfig {
    pub fn with_design(design: Design) -> Self {
        DesignConfig {
            design,
            ..Default::default()
        }
    }

    pub fn iommu_entries(&self) -> usize {
        self.iommu_sets * self.iommu_ways
    }

    /// Every key `set` accepts with a numeric value.
    pub fn numeric_keys() -> Vec<String> {
        let mut keys: Vec<String> = INT_KEYS.iter().map(|k| k.to_string()).collect();
        keys.extend(EnergyParams::default().fields().iter().map(|(k, _)| format!("energy_{k}")));
        keys
    }

    pub fn is_numeric_key(key: &str) -> bool {
        INT_KEYS.contains(&key)
            || key
                .strip_prefix("energy_")
                .is_some_and(|k| EnergyParams::default().field_mut(k).is_some())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let int = || parse_num::<usize>(key, value);
        match key {
            "design" => self.design = value.parse()?,
            "cus" => self.cus = int()?,
            "per_cu_entries" => self.per_cu_entries = int()?,
            "iommu_entries" => {
                let n = int()?;
                if self.iommu_ways == 0 || n % self.iommu_ways != 0 {
                    return Err(Error::BadValue {
                        key: key.into(),
                        value: value.into(),
                        msg: format!("must be a multiple of iommu_ways ({})", self.iommu_ways),
                    });
                }
                self.iommu_sets = n / self.iommu_ways;
            }
            "iommu_sets" => self.iommu_sets = int()?,
            "iommu_ways" => self.iommu_ways = int()?,
            "partition_split" => self.partition_split = int()?,
            "msc_entries" => self.msc_entries = int()?,
            "msc_ways" => self.msc_ways = int()?,
            "pwc_bytes" => self.pwc_bytes = int()?,
            "walkers" => self.walkers = int()?,
            "pwb_depth" => {
                self.pwb_depth = match value {
                    "unbounded" | "none" => None,
                    _ => Some(int()?),
                }
            }
            "latency_per_cu_hit" => self.latency.per_cu_hit = parse_num(key, value)?,
            "latency_iommu_access" => self.latency.iommu_access = parse_num(key, value)?,
            "latency_memory_read" => self.latency.memory_read = parse_num(key, value)?,
            "latency_iommu_round_trip" => self.latency.iommu_round_trip = parse_num(key, value)?,
            _ => {
                let slot = key
                    .strip_prefix("energy_")
                    .and_then(|k| self.energy.field_mut(k))
                    .ok_or_else(|| Error::UnknownKey(key.to_string()))?;
                *slot = parse_num(key, value)?;
            }
        }
        Ok(())
    }

    /// Sets a numeric key from an `f64`, rejecting fractions for integer keys.
    pub fn set_numeric(&mut self, key: &str, value: f64) -> Result<()> {
        if !Self::is_numeric_key(key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        if INT_KEYS.contains(&key) && (value.fract() != 0.0 || value < 0.0) {
            return Err(Error::BadValue {
                key: key.into(),
                value: value.to_string(),
                msg: "expected a non-negative integer".into(),
            });
        }
        self.set(key, &value.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if self.cus == 0 {
            return bad("cus must be positive".into());
        }
        if self.iommu_sets == 0 || self.iommu_ways == 0 {
            return bad("the IOMMU TLB needs at least one set and one way".into());
        }
        if self.partition_split > self.iommu_ways {
            return bad(format!(
                "partition_split {} exceeds iommu_ways {}",
                self.partition_split, self.iommu_ways
            ));
        }
        if self.msc_entries > 0 && (self.msc_ways == 0 || !self.msc_entries.is_multiple_of(self.msc_ways)) {
            return bad(format!(
                "msc_entries {} is not a multiple of msc_ways {}",
                self.msc_entries, self.msc_ways
            ));
        }
        if self.walkers == 0 {
            return bad("walkers must be positive".into());
        }
        self.energy.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = DesignConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("design", self.design.to_string());
        kv("cus", self.cus.to_string());
        kv("per_cu_entries", self.per_cu_entries.to_string());
        kv("iommu_sets", self.iommu_sets.to_string());
        kv("iommu_ways", self.iommu_ways.to_string());
        kv("partition_split", self.partition_split.to_string());
        kv("msc_entries", self.msc_entries.to_string());
        kv("msc_ways", self.msc_ways.to_string());
        kv("pwc_bytes", self.pwc_bytes.to_string());
        kv("walkers", self.walkers.to_string());
        kv("pwb_depth", self.pwb_depth.map_or("unbounded".into(), |d| d.to_string()));
        kv("latency_per_cu_hit", self.latency.per_cu_hit.to_string());
        kv("latency_iommu_access", self.latency.iommu_access.to_string());
        kv("latency_memory_read", self.latency.memory_read.to_string());
        kv("latency_iommu_round_trip", self.latency.iommu_round_trip.to_string());
        for (k, v) in self.energy.fields() {
            kv(&format!("energy_{k}"), format!("{v:?}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_machine() {
        let c = DesignConfig::default();
        assert_eq!(c.iommu_entries(), 512);
        assert_eq!(c.iommu_ways, 16);
        assert_eq!(c.walkers, 16);
        assert_eq!(c.pwc_bytes, 8192);
        assert_eq!(c.per_cu_entries, 32);
        assert_eq!(c.msc_entries, 512);
        c.validate().unwrap();
    }

    #[test]
    fn parse_with_comments() {
        let c = DesignConfig::parse("# test\ndesign = mesc+colt\niommu_entries=256 # half\n\nenergy_memory_read = 50\n").unwrap();
        assert_eq!(c.design, Design::MescColt);
        assert_eq!(c.iommu_sets, 16);
        assert_eq!(c.energy.memory_read, 50.0);
    }

    #[test]
    fn text_round_trip() {
        let mut c = DesignConfig::with_design(Design::FullColt);
        c.pwb_depth = Some(64);
        c.energy.msc_read = 0.125;
        assert_eq!(DesignConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors() {
        assert!(matches!(DesignConfig::parse("bogus = 1"), Err(Error::UnknownKey(_))));
        assert!(matches!(DesignConfig::parse("design = tlb9000"), Err(Error::UnknownDesign(_))));
        assert!(matches!(DesignConfig::parse("walkers"), Err(Error::ConfigSyntax { line: 1, .. })));
        assert!(matches!(DesignConfig::parse("walkers = x"), Err(Error::BadValue { .. })));
        assert!(matches!(DesignConfig::parse("iommu_entries = 100"), Err(Error::BadValue { .. })));
        assert!(matches!(DesignConfig::parse("energy_pwc_read = -1"), Err(Error::NegativeEnergy("pwc_read"))));
        assert!(matches!(DesignConfig::parse("partition_split = 17"), Err(Error::BadConfig(_))));
    }

    #[test]
    fn numeric_keys_are_settable() {
        for k in DesignConfig::numeric_keys() {
            let mut c = DesignConfig::default();
            c.set_numeric(&k, 16.0).unwrap();
        }
        let mut c = DesignConfig::default();
        assert!(c.set_numeric("design", 1.0).is_err());
        assert!(c.set_numeric("walkers", 1.5).is_err());
        c.set_numeric("energy_msc_read", 1.5).unwrap();
    }
}
