use serde::Serialize;
use serde_json::Value;

use crate::engine::config::Design;
use crate::engine::energy::{EnergyReport, StructureCounts};
use crate::error::Result;
use crate::page_table::ScanStats;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
    pub max: u64,
}

impl LatencyStats {
    /// Nearest-rank percentiles. Sorts `samples`.
    pub fn from_samples(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let rank = |p: f64| samples[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        LatencyStats {
            mean: samples.iter().sum::<u64>() as f64 / n as f64,
            p50: rank(0.50),
            p95: rank(0.95),
            p99: rank(0.99),
            max: samples[n - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScanReport {
    pub frames_scanned: u64,
    pub c_bits_set: u64,
    pub ac_bits_set: u64,
}

impl From<ScanStats> for ScanReport {
    fn from(s: ScanStats) -> Self {
        ScanReport {
            frames_scanned: s.frames_scanned,
            c_bits_set: s.c_bits_set,
            ac_bits_set: s.ac_bits_set,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub design: Design,
    pub seed: u64,
    pub events: u64,
    pub per_cu_hits: u64,
    pub per_cu_hit_ratio: f64,
    pub iommu_lookups: u64,
    pub iommu_hits: u64,
    pub iommu_hit_ratio: f64,
    pub walks: u64,
    pub walk_memory_reads: u64,
    pub msc_lookups: u64,
    pub msc_hits: u64,
    pub msc_hit_ratio: f64,
    /// Subregion entries inserted into the IOMMU TLB, by length field.
    pub subregion_length_histogram: [u64; 8],
    pub remapped_pages: u64,
    pub shootdown_invalidations: u64,
    pub latency: LatencyStats,
    pub energy: EnergyReport,
    pub accesses: StructureCounts,
    /// One-off contiguity scan at load time; not part of translation latency.
    pub scan: ScanReport,
    /// SHA-256 over every event outcome, hex.
    pub digest: String,
}

pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}_{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

impl SimReport {
    /// Keys in sorted order, so equal reports give byte-equal text.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }

    /// The report as flat (column, value) pairs, nested fields joined by `_`.
    pub fn flat_fields(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        flatten("", &serde_json::to_value(self)?, &mut out);
        Ok(out)
    }

    pub fn csv_header() -> Vec<String> {
        let blank = SimReport {
            design: Design::Baseline,
            seed: 0,
            events: 0,
            per_cu_hits: 0,
            per_cu_hit_ratio: 0.0,
            iommu_lookups: 0,
            iommu_hits: 0,
            iommu_hit_ratio: 0.0,
            walks: 0,
            walk_memory_reads: 0,
            msc_lookups: 0,
            msc_hits: 0,
            msc_hit_ratio: 0.0,
            subregion_length_histogram: [0; 8],
            remapped_pages: 0,
            shootdown_invalidations: 0,
            latency: LatencyStats::default(),
            energy: EnergyReport::default(),
            accesses: StructureCounts::default(),
            scan: ScanReport::default(),
            digest: String::new(),
        };
        blank.flat_fields().unwrap().into_iter().map(|(k, _)| k).collect()
    }
}

/// One CSV row per report, with optional leading columns (such as a sweep
/// axis) given as `extra` names and per-row values.
pub fn reports_to_csv(extra: &[&str], rows: &[(Vec<String>, &SimReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    header.extend(SimReport::csv_header());
    w.write_record(&header)?;
    for (pre, r) in rows {
        let mut rec = pre.clone();
        rec.extend(r.flat_fields()?.into_iter().map(|(_, v)| v));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let mut v: Vec<u64> = (1..=100).rev().collect();
        let s = LatencyStats::from_samples(&mut v);
        assert_eq!((s.p50, s.p95, s.p99, s.max), (50, 95, 99, 100));
        assert_eq!(s.mean, 50.5);
        assert_eq!(LatencyStats::from_samples(&mut []), LatencyStats::default());
    }

    #[test]
    fn header_is_flat_and_sorted_within_objects() {
        let h = SimReport::csv_header();
        assert!(h.contains(&"latency_p95".to_string()));
        assert!(h.contains(&"subregion_length_histogram_7".to_string()));
        assert!(h.contains(&"accesses_memory_reads".to_string()));
        assert!(h.contains(&"energy_total".to_string()));
        let top: Vec<&String> = h.iter().filter(|k| k.starts_with("d")).collect();
        assert_eq!(top, ["design", "digest"]);
    }

    #[test]
    fn empty_csv_has_header_only() {
        let csv = reports_to_csv(&["axis", "value"], &[]).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("axis,value,accesses_"));
    }
}
