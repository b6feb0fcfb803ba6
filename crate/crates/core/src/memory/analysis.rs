//! Contiguity analysis of a mapping: run-length histograms and the share of
//! the footprint that sits in fully contiguous subregions.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Permissions, Pfn, Vfn, Vsn, SUBREGION_PAGES};
use crate::memory::mapping::PageMapping;

/// A maximal stretch of consecutive VFNs backed by consecutive PFNs with
/// equal permissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub vfn: Vfn,
    pub pfn: Pfn,
    pub pages: u64,
    pub perms: Permissions,
}

pub fn runs(m: &PageMapping) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (vfn, page) in m.iter() {
        if let Some(last) = out.last_mut() {
            if last.vfn.0 + last.pages == vfn.0
                && last.pfn.0 + last.pages == page.pfn.0
                && last.perms == page.perms
            {
                last.pages += 1;
                continue;
            }
        }
        out.push(Run {
            vfn,
            pfn: page.pfn,
            pages: 1,
            perms: page.perms,
        });
    }
    out
}

/// An inclusive run-length range; `hi == None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bucket {
    pub lo: u64,
    pub hi: Option<u64>,
}

impl Bucket {
    pub fn contains(&self, len: u64) -> bool {
        len >= self.lo && self.hi.is_none_or(|hi| len <= hi)
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(hi) => write!(f, "{}-{}", self.lo, hi),
            None => write!(f, "{}+", self.lo),
        }
    }
}

/// Ascending, gap-free bucket list starting at 1, e.g. `1-256,257-512,513+`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketSpec(pub Vec<Bucket>);

impl BucketSpec {
    pub fn new(buckets: Vec<Bucket>) -> Result<Self> {
        if buckets.is_empty() {
            return Err(Error::BadBuckets("no buckets".into()));
        }
        let mut next = 1;
        for (i, b) in buckets.iter().enumerate() {
            if b.lo != next {
                return Err(Error::BadBuckets(format!(
                    "bucket {b} should start at {next}"
                )));
            }
            match b.hi {
                Some(hi) if hi < b.lo => {
                    return Err(Error::BadBuckets(format!("bucket {b} is empty")))
                }
                Some(hi) => next = hi + 1,
                None if i + 1 != buckets.len() => {
                    return Err(Error::BadBuckets(format!(
                        "open bucket {b} must be last"
                    )))
                }
                None => {}
            }
        }
        Ok(BucketSpec(buckets))
    }

    /// Buckets of 256 pages up to 1024, then everything larger.
    pub fn default_quarters() -> Self {
        "1-256,257-512,513-768,769-1024,1025+".parse().unwrap()
    }
}

impl FromStr for BucketSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |p: &str| Error::BadBuckets(format!("cannot parse `{p}`"));
        let mut buckets = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bucket = if let Some(lo) = part.strip_suffix('+') {
                Bucket {
                    lo: lo.trim().parse().map_err(|_| bad(part))?,
                    hi: None,
                }
            } else if let Some((lo, hi)) = part.split_once('-') {
                Bucket {
                    lo: lo.trim().parse().map_err(|_| bad(part))?,
                    hi: Some(hi.trim().parse().map_err(|_| bad(part))?),
                }
            } else {
                let n = part.parse().map_err(|_| bad(part))?;
                Bucket { lo: n, hi: Some(n) }
            };
            buckets.push(bucket);
        }
        BucketSpec::new(buckets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub bucket: String,
    pub regions: u64,
    pub pages: u64,
    pub region_ratio: f64,
    pub coverage_ratio: f64,
    pub cumulative_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContiguityHistogram {
    pub total_regions: u64,
    pub total_pages: u64,
    pub rows: Vec<HistogramRow>,
}

pub fn contiguity_histogram(m: &PageMapping, buckets: &BucketSpec) -> Result<ContiguityHistogram> {
    if m.is_empty() {
        return Err(Error::EmptyMapping);
    }
    let mut regions = vec![0u64; buckets.0.len()];
    let mut pages = vec![0u64; buckets.0.len()];
    let runs = runs(m);
    for run in &runs {
        let i = buckets
            .0
            .iter()
            .position(|b| b.contains(run.pages))
            .ok_or(Error::RunOutsideBuckets(run.pages))?;
        regions[i] += 1;
        pages[i] += run.pages;
    }
    let total_regions = runs.len() as u64;
    let total_pages = m.len() as u64;
    let mut cumulative = 0u64;
    let rows = buckets
        .0
        .iter()
        .enumerate()
        .map(|(i, b)| {
            cumulative += pages[i];
            HistogramRow {
                bucket: b.to_string(),
                regions: regions[i],
                pages: pages[i],
                region_ratio: regions[i] as f64 / total_regions as f64,
                coverage_ratio: pages[i] as f64 / total_pages as f64,
                cumulative_coverage: cumulative as f64 / total_pages as f64,
            }
        })
        .collect();
    Ok(ContiguityHistogram {
        total_regions,
        total_pages,
        rows,
    })
}

/// True when all 64 pages of `vsn` are present, physically consecutive and
/// share one permission set.
pub fn subregion_is_contiguous(m: &PageMapping, vsn: Vsn) -> bool {
    let base = vsn.base_vfn();
    let Some(head) = m.get(base) else {
        return false;
    };
    (1..SUBREGION_PAGES).all(|i| {
        m.get(base.offset(i))
            .is_some_and(|p| p.pfn == head.pfn.offset(i) && p.perms == head.perms)
    })
}

/// Fraction of mapped pages that live in contiguous, permission-uniform,
/// 64-page-aligned subregions. Zero for an empty mapping.
pub fn subregion_coverage(m: &PageMapping) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let mut covered = 0u64;
    let mut last = None;
    for vfn in m.vfns() {
        let vsn = vfn.vsn();
        if last == Some(vsn) {
            continue;
        }
        last = Some(vsn);
        if subregion_is_contiguous(m, vsn) {
            covered += SUBREGION_PAGES;
        }
    }
    covered as f64 / m.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::mapping::contiguous_mapping;

    fn scattered(n: u64) -> PageMapping {
        PageMapping::from_pages((0..n).map(|i| (Vfn(0x80000 + i), Pfn(1000 + 2 * i), Permissions::RW_USER)))
            .unwrap()
    }

    #[test]
    fn single_run_histogram() {
        let m = contiguous_mapping(Vfn(0x80000), 512, Pfn(0x6000A));
        let h = contiguity_histogram(&m, &"1-256,257-512".parse().unwrap()).unwrap();
        assert_eq!(h.rows[0].region_ratio, 0.0);
        assert_eq!(h.rows[1].region_ratio, 1.0);
        assert_eq!(h.rows[0].cumulative_coverage, 0.0);
        assert_eq!(h.rows[1].cumulative_coverage, 1.0);
    }

    #[test]
    fn singleton_histogram() {
        let h = contiguity_histogram(&scattered(512), &"1-256,257-512".parse().unwrap()).unwrap();
        assert_eq!(h.total_regions, 512);
        assert_eq!(h.rows[0].region_ratio, 1.0);
        assert_eq!(h.rows[0].cumulative_coverage, 1.0);
    }

    #[test]
    fn empty_mapping_rejected() {
        assert!(matches!(
            contiguity_histogram(&PageMapping::new(), &BucketSpec::default_quarters()),
            Err(Error::EmptyMapping)
        ));
    }

    #[test]
    fn uncovered_run_rejected() {
        let m = contiguous_mapping(Vfn(0), 600, Pfn(0));
        assert!(matches!(
            contiguity_histogram(&m, &"1-256,257-512".parse().unwrap()),
            Err(Error::RunOutsideBuckets(600))
        ));
    }

    #[test]
    fn bucket_parsing() {
        assert!("2-5".parse::<BucketSpec>().is_err());
        assert!("1-5,7-9".parse::<BucketSpec>().is_err());
        assert!("1+,2-3".parse::<BucketSpec>().is_err());
        assert!("".parse::<BucketSpec>().is_err());
        let b: BucketSpec = "1, 2-3, 4+".parse().unwrap();
        assert_eq!(b.0.len(), 3);
        assert!(b.0[2].contains(1 << 40));
    }

    #[test]
    fn permissions_split_runs() {
        let mut m = contiguous_mapping(Vfn(0), 8, Pfn(0));
        m.set_perms(Vfn(4), Permissions::RO_USER).unwrap();
        assert_eq!(runs(&m).len(), 3);
    }

    #[test]
    fn coverage_extremes() {
        let m = contiguous_mapping(Vfn(0x80000), 1024, Pfn(0x200));
        assert_eq!(subregion_coverage(&m), 1.0);

        let mut broken = m.clone();
        for k in 0..16 {
            let v = Vfn(0x80000 + 64 * k);
            broken.unmap(v);
            broken.map(v, Pfn(0x100000 + k), Permissions::RW_USER).unwrap();
        }
        assert_eq!(subregion_coverage(&broken), 0.0);
        assert_eq!(subregion_coverage(&PageMapping::new()), 0.0);
    }

    #[test]
    fn unaligned_physical_run_still_covers() {
        // subregions only need 4KB alignment physically
        let m = contiguous_mapping(Vfn(0x80040), 64, Pfn(0x12345));
        assert_eq!(subregion_coverage(&m), 1.0);
        // a virtually unaligned run covers nothing
        let m = contiguous_mapping(Vfn(0x80001), 64, Pfn(0x12345));
        assert_eq!(subregion_coverage(&m), 0.0);
    }
}
