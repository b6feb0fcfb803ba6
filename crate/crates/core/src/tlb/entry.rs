use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Permissions, Pfn, Vfn, Vsn, FRAME_PAGES, SUBREGIONS_PER_FRAME, SUBREGION_SHIFT};

/// Pages in a CoLT coalescing block.
pub const COLT_BLOCK: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Regular,
    Subregion,
    Colt,
    LargePage,
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::Regular => "regular",
            EntryKind::Subregion => "subregion",
            EntryKind::Colt => "colt",
            EntryKind::LargePage => "large_page",
        })
    }
}

/// One 4KB translation (T=0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegularEntry {
    pub vfn: Vfn,
    pub pfn: Pfn,
    pub perms: Permissions,
}

/// `length + 1` consecutive subregions starting at `vsn` (T=1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubregionEntry {
    pub vsn: Vsn,
    pub length: u8,
    pub base_pfn: Pfn,
    pub perms: Permissions,
}

impl SubregionEntry {
    pub fn new(vsn: Vsn, length: u8, base_pfn: Pfn, perms: Permissions) -> Result<Self> {
        if vsn.index_in_frame() as u64 + length as u64 >= SUBREGIONS_PER_FRAME {
            return Err(Error::FrameBoundary { vsn, length });
        }
        Ok(SubregionEntry {
            vsn,
            length,
            base_pfn,
            perms,
        })
    }

    pub fn pages(&self) -> u64 {
        (self.length as u64 + 1) << SUBREGION_SHIFT
    }
}

/// Inclusive VFN range covered by a subregion entry.
pub fn coverage_bounds(e: &SubregionEntry) -> (Vfn, Vfn) {
    let lower = e.vsn.0 << SUBREGION_SHIFT;
    let upper = ((e.vsn.0 + e.length as u64) << SUBREGION_SHIFT) | 0x3f;
    (Vfn(lower), Vfn(upper))
}

/// `length + 1` consecutive pages inside one 4-page-aligned block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColtEntry {
    pub vfn: Vfn,
    pub length: u8,
    pub base_pfn: Pfn,
    pub perms: Permissions,
}

impl ColtEntry {
    pub fn new(vfn: Vfn, length: u8, base_pfn: Pfn, perms: Permissions) -> Self {
        debug_assert!(vfn.0 % COLT_BLOCK + (length as u64) < COLT_BLOCK);
        ColtEntry {
            vfn,
            length,
            base_pfn,
            perms,
        }
    }
}

/// A 2MB translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LargePageEntry {
    pub frame_vfn: Vfn,
    pub base_pfn: Pfn,
    pub perms: Permissions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlbEntry {
    Regular(RegularEntry),
    Subregion(SubregionEntry),
    Colt(ColtEntry),
    LargePage(LargePageEntry),
}

impl TlbEntry {
    pub fn kind(&self) -> EntryKind {
        match self {
            TlbEntry::Regular(_) => EntryKind::Regular,
            TlbEntry::Subregion(_) => EntryKind::Subregion,
            TlbEntry::Colt(_) => EntryKind::Colt,
            TlbEntry::LargePage(_) => EntryKind::LargePage,
        }
    }

    /// The T bit of the unified TLB.
    pub fn type_bit(&self) -> u8 {
        matches!(self, TlbEntry::Subregion(_)) as u8
    }

    pub fn tag(&self) -> u64 {
        match self {
            TlbEntry::Regular(e) => e.vfn.0,
            TlbEntry::Subregion(e) => e.vsn.0,
            TlbEntry::Colt(e) => e.vfn.0,
            TlbEntry::LargePage(e) => e.frame_vfn.0,
        }
    }

    pub fn length(&self) -> u8 {
        match self {
            TlbEntry::Subregion(e) => e.length,
            TlbEntry::Colt(e) => e.length,
            _ => 0,
        }
    }

    pub fn base_pfn(&self) -> Pfn {
        match self {
            TlbEntry::Regular(e) => e.pfn,
            TlbEntry::Subregion(e) => e.base_pfn,
            TlbEntry::Colt(e) => e.base_pfn,
            TlbEntry::LargePage(e) => e.base_pfn,
        }
    }

    pub fn perms(&self) -> Permissions {
        match self {
            TlbEntry::Regular(e) => e.perms,
            TlbEntry::Subregion(e) => e.perms,
            TlbEntry::Colt(e) => e.perms,
            TlbEntry::LargePage(e) => e.perms,
        }
    }

    /// Inclusive VFN range.
    pub fn bounds(&self) -> (Vfn, Vfn) {
        match self {
            TlbEntry::Regular(e) => (e.vfn, e.vfn),
            TlbEntry::Subregion(e) => coverage_bounds(e),
            TlbEntry::Colt(e) => (e.vfn, e.vfn.offset(e.length as u64)),
            TlbEntry::LargePage(e) => (e.frame_vfn, e.frame_vfn.offset(FRAME_PAGES - 1)),
        }
    }

    pub fn pages(&self) -> u64 {
        let (lo, hi) = self.bounds();
        hi.0 - lo.0 + 1
    }

    pub fn covers(&self, vfn: Vfn) -> bool {
        let (lo, hi) = self.bounds();
        lo <= vfn && vfn <= hi
    }

    pub fn overlaps(&self, other: &TlbEntry) -> bool {
        let (a, b) = self.bounds();
        let (c, d) = other.bounds();
        a <= d && c <= b
    }

    pub fn translate(&self, vfn: Vfn) -> Option<Pfn> {
        let (lo, _) = self.bounds();
        self.covers(vfn).then(|| self.base_pfn().offset(vfn.0 - lo.0))
    }
}

impl From<RegularEntry> for TlbEntry {
    fn from(e: RegularEntry) -> Self {
        TlbEntry::Regular(e)
    }
}

impl From<SubregionEntry> for TlbEntry {
    fn from(e: SubregionEntry) -> Self {
        TlbEntry::Subregion(e)
    }
}

impl From<ColtEntry> for TlbEntry {
    fn from(e: ColtEntry) -> Self {
        TlbEntry::Colt(e)
    }
}

impl From<LargePageEntry> for TlbEntry {
    fn from(e: LargePageEntry) -> Self {
        TlbEntry::LargePage(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sub(vsn: u64, length: u8, pfn: u64) -> SubregionEntry {
        SubregionEntry::new(Vsn(vsn), length, Pfn(pfn), Permissions::RW_USER).unwrap()
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(coverage_bounds(&sub(0, 0, 0)), (Vfn(0), Vfn(0x3f)));
        assert_eq!(coverage_bounds(&sub(0x2000, 3, 0)), (Vfn(0x80000), Vfn(0x800ff)));
        assert_eq!(coverage_bounds(&sub(0x2007, 0, 0)), (Vfn(0x801c0), Vfn(0x801ff)));
    }

    #[test]
    fn frame_boundary_rejected() {
        assert!(matches!(
            SubregionEntry::new(Vsn(0x2005), 3, Pfn(0), Permissions::RW_USER),
            Err(Error::FrameBoundary { .. })
        ));
        assert!(SubregionEntry::new(Vsn(0x2000), 7, Pfn(0), Permissions::RW_USER).is_ok());
    }

    #[test]
    fn translate_offsets_from_lower_bound() {
        let e = TlbEntry::from(sub(0x2000, 3, 0xf87));
        assert_eq!(e.translate(Vfn(0x80042)), Some(Pfn(0xfc9)));
        assert_eq!(e.translate(Vfn(0x80100)), None);
        let c = TlbEntry::from(ColtEntry::new(Vfn(0x100), 3, Pfn(0x500), Permissions::RW_USER));
        assert_eq!(c.translate(Vfn(0x102)), Some(Pfn(0x502)));
        assert_eq!(c.pages(), 4);
    }

    proptest! {
        #[test]
        fn bounds_match_enumeration(frame in 0u64..(1 << 30), first in 0u64..8, len in 0u8..8, probe in 0u64..1024) {
            prop_assume!(first + len as u64 <= 7);
            let vsn = frame * 8 + first;
            let e = sub(vsn, len, 0);
            let (lo, hi) = coverage_bounds(&e);
            let vfn = Vfn((frame * 512).saturating_sub(256) + probe);
            let listed = (0..=len as u64)
                .any(|s| (0..64).any(|p| ((vsn + s) << 6) + p == vfn.0));
            prop_assert_eq!(lo <= vfn && vfn <= hi, listed);
        }
    }
}
