//! Linux `/proc/<pid>/pagemap` dumps.
//!
//! A dump is the concatenation of the 64-bit little-endian pagemap records of
//! every page of every listed region, in region order. Bit 63 is "present",
//! bit 62 "swapped", bits 54..0 the PFN. The companion regions file lists one
//! region per line as `<hex va_start> <decimal byte_length>`.

use crate::error::{Error, Result};
use crate::geometry::{Permissions, Pfn, VirtAddr, Vfn, PAGE_SIZE};
use crate::memory::mapping::PageMapping;

pub const PRESENT_BIT: u64 = 1 << 63;
pub const SWAPPED_BIT: u64 = 1 << 62;
pub const PFN_MASK: u64 = (1 << 55) - 1;
const RECORD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub start: VirtAddr,
    pub bytes: u64,
}

impl Region {
    pub fn pages(&self) -> u64 {
        self.bytes.div_ceil(PAGE_SIZE)
    }

    pub fn first_vfn(&self) -> Vfn {
        self.start.vfn()
    }
}

pub fn parse_regions(text: &str) -> Result<Vec<Region>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::RegionsSyntax {
            line: i + 1,
            msg: msg.to_string(),
        };
        let mut fields = line.split_whitespace();
        let (Some(start), Some(len), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err("expected `<hex va_start> <decimal byte_length>`"));
        };
        let start = u64::from_str_radix(start.trim_start_matches("0x"), 16)
            .map_err(|_| err("bad hex start address"))?;
        let bytes = len.parse().map_err(|_| err("bad byte length"))?;
        out.push(Region {
            start: VirtAddr(start),
            bytes,
        });
    }
    Ok(out)
}

pub fn write_regions(regions: &[Region]) -> String {
    regions
        .iter()
        .map(|r| format!("{:#x} {}\n", r.start.0, r.bytes))
        .collect()
}

fn check_regions(regions: &[Region]) -> Result<()> {
    let mut sorted: Vec<_> = regions.to_vec();
    sorted.sort_by_key(|r| r.start);
    for r in &sorted {
        if r.start.page_offset() != 0 {
            return Err(Error::UnalignedRegion(r.start));
        }
    }
    for w in sorted.windows(2) {
        if w[0].first_vfn().0 + w[0].pages() > w[1].first_vfn().0 {
            return Err(Error::OverlappingRegions(w[1].start));
        }
    }
    Ok(())
}

/// Decodes a dump into a mapping of its present pages. Swapped and
/// not-present records are skipped.
pub fn ingest_pagemap(regions: &[Region], bytes: &[u8]) -> Result<PageMapping> {
    check_regions(regions)?;
    let expected = regions.iter().map(|r| r.pages() as usize * RECORD).sum::<usize>();
    if bytes.len() < expected {
        return Err(Error::PagemapTruncated {
            offset: bytes.len() - bytes.len() % RECORD,
            expected,
        });
    }
    if bytes.len() > expected {
        return Err(Error::PagemapTrailing {
            offset: expected,
            extra: bytes.len() - expected,
        });
    }
    let mut m = PageMapping::new();
    let mut records = bytes.chunks_exact(RECORD);
    for r in regions {
        for i in 0..r.pages() {
            let rec = u64::from_le_bytes(records.next().unwrap().try_into().unwrap());
            if rec & PRESENT_BIT == 0 || rec & SWAPPED_BIT != 0 {
                continue;
            }
            m.map(r.first_vfn().offset(i), Pfn(rec & PFN_MASK), Permissions::RW_USER)?;
        }
    }
    Ok(m)
}

/// Encodes `m` over `regions`: present pages get the present bit and their
/// PFN, everything else an all-zero record.
pub fn serialize_pagemap(regions: &[Region], m: &PageMapping) -> Vec<u8> {
    let mut out = Vec::new();
    for r in regions {
        for i in 0..r.pages() {
            let rec = m
                .get(r.first_vfn().offset(i))
                .map_or(0, |p| PRESENT_BIT | (p.pfn.0 & PFN_MASK));
            out.extend_from_slice(&rec.to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::analysis::subregion_coverage;
    use proptest::prelude::*;

    fn rec(present: bool, pfn: u64) -> [u8; 8] {
        ((present as u64) << 63 | pfn).to_le_bytes()
    }

    fn region(vfn: u64, pages: u64) -> Region {
        Region {
            start: Vfn(vfn).addr(),
            bytes: pages * PAGE_SIZE,
        }
    }

    #[test]
    fn two_present_pages() {
        let mut bytes = rec(true, 10).to_vec();
        bytes.extend(rec(true, 11));
        let m = ingest_pagemap(&[region(0x400, 2)], &bytes).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get(Vfn(0x400)).unwrap().pfn, Pfn(10));
        assert_eq!(m.get(Vfn(0x401)).unwrap().pfn, Pfn(11));
    }

    #[test]
    fn absent_and_swapped_skipped() {
        let mut bytes = rec(false, 10).to_vec();
        bytes.extend((PRESENT_BIT | SWAPPED_BIT | 5).to_le_bytes());
        bytes.extend(rec(true, 12));
        let m = ingest_pagemap(&[region(0, 3)], &bytes).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m.get(Vfn(2)).is_some());
    }

    #[test]
    fn aligned_contiguous_subregion_is_covered() {
        let bytes: Vec<u8> = (0..64).flat_map(|i| rec(true, 0x777 + i)).collect();
        let m = ingest_pagemap(&[region(0x80040, 64)], &bytes).unwrap();
        assert_eq!(subregion_coverage(&m), 1.0);
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = vec![0u8; 13];
        assert!(matches!(
            ingest_pagemap(&[region(0, 2)], &bytes),
            Err(Error::PagemapTruncated { offset: 8, expected: 16 })
        ));
        let bytes = vec![0u8; 24];
        assert!(matches!(
            ingest_pagemap(&[region(0, 2)], &bytes),
            Err(Error::PagemapTrailing { offset: 16, extra: 8 })
        ));
    }

    #[test]
    fn overlapping_regions_rejected() {
        let bytes = vec![0u8; 8 * 6];
        assert!(matches!(
            ingest_pagemap(&[region(10, 4), region(12, 2)], &bytes),
            Err(Error::OverlappingRegions(_))
        ));
    }

    #[test]
    fn regions_file() {
        let text = "# heap\n0x80000000 8192\n\n0x90000000 4097\n";
        let r = parse_regions(text).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].pages(), 2);
        assert_eq!(parse_regions(&write_regions(&r)).unwrap(), r);
        assert!(matches!(
            parse_regions("0x1000\n"),
            Err(Error::RegionsSyntax { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn present_records_round_trip(recs in prop::collection::vec((any::<bool>(), 0u64..(1 << 55)), 1..64)) {
            // distinct PFNs keep the mapping injective
            let recs: Vec<(bool, u64)> = recs
                .into_iter()
                .enumerate()
                .map(|(i, (p, pfn))| (p, (pfn & !0x3f) | i as u64))
                .collect();
            let bytes: Vec<u8> = recs.iter().flat_map(|&(p, pfn)| rec(p, pfn)).collect();
            let regions = [region(0x1000, recs.len() as u64)];
            let m = ingest_pagemap(&regions, &bytes).unwrap();
            prop_assert_eq!(serialize_pagemap(&regions, &m), bytes.iter().enumerate().map(|(i, &b)| {
                // absent records come back zeroed
                if recs[i / 8].0 { b } else { 0 }
            }).collect::<Vec<u8>>());
        }
    }
}
