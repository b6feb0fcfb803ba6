use std::collections::btree_map::{self, BTreeMap};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Permissions, PhysAddr, Pfn, VirtAddr, Vfn, FRAME_PAGES};

/// One present page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageInfo {
    pub pfn: Pfn,
    pub perms: Permissions,
}

/// The simulated virtual-to-physical map. Membership means present.
///
/// Injective: no physical frame backs two virtual pages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageMapping {
    pages: BTreeMap<Vfn, PageInfo>,
    owners: HashMap<Pfn, Vfn>,
}

impl PageMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pages<I>(pages: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vfn, Pfn, Permissions)>,
    {
        let mut m = PageMapping::new();
        for (v, p, perms) in pages {
            m.map(v, p, perms)?;
        }
        Ok(m)
    }

    /// Maps `vfn`, replacing any previous translation of the same page.
    pub fn map(&mut self, vfn: Vfn, pfn: Pfn, perms: Permissions) -> Result<()> {
        if let Some(&owner) = self.owners.get(&pfn) {
            if owner != vfn {
                return Err(Error::PfnInUse {
                    pfn,
                    existing: owner,
                });
            }
        }
        if let Some(old) = self.pages.insert(vfn, PageInfo { pfn, perms }) {
            self.owners.remove(&old.pfn);
        }
        self.owners.insert(pfn, vfn);
        Ok(())
    }

    pub fn unmap(&mut self, vfn: Vfn) -> Option<PageInfo> {
        let old = self.pages.remove(&vfn)?;
        self.owners.remove(&old.pfn);
        Some(old)
    }

    pub fn set_perms(&mut self, vfn: Vfn, perms: Permissions) -> Result<()> {
        let page = self.pages.get_mut(&vfn).ok_or(Error::NotMapped(vfn))?;
        page.perms = perms;
        Ok(())
    }

    pub fn get(&self, vfn: Vfn) -> Option<PageInfo> {
        self.pages.get(&vfn).copied()
    }

    pub fn owner_of(&self, pfn: Pfn) -> Option<Vfn> {
        self.owners.get(&pfn).copied()
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vfn, PageInfo)> + '_ {
        self.pages.iter().map(|(&v, &p)| (v, p))
    }

    pub fn range(&self, lo: Vfn, hi_exclusive: Vfn) -> btree_map::Range<'_, Vfn, PageInfo> {
        self.pages.range(lo..hi_exclusive)
    }

    pub fn vfns(&self) -> impl Iterator<Item = Vfn> + '_ {
        self.pages.keys().copied()
    }

    /// Brute-force translation: the ground truth every design is checked against.
    pub fn translate(&self, va: VirtAddr) -> Result<PhysAddr> {
        let page = self.get(va.vfn()).ok_or(Error::Fault {
            va,
            level: "mapping",
        })?;
        Ok(PhysAddr::new(page.pfn, va.page_offset()))
    }
}

pub fn oracle_translate(m: &PageMapping, va: VirtAddr) -> Result<PhysAddr> {
    m.translate(va)
}

/// `pages` virtual pages from `base_vfn` mapped to consecutive frames from `base_pfn`.
pub fn contiguous_mapping(base_vfn: Vfn, pages: u64, base_pfn: Pfn) -> PageMapping {
    let mut m = PageMapping::new();
    for i in 0..pages {
        m.map(base_vfn.offset(i), base_pfn.offset(i), Permissions::RW_USER)
            .expect("consecutive frames are distinct");
    }
    m
}

/// A 2MB-aligned, fully contiguous heap in both address spaces, as a
/// transparent-huge-page allocation would produce. `pages` is rounded up to
/// whole frames.
pub fn huge_page_mapping(base_vfn: Vfn, pages: u64, base_pfn: Pfn) -> PageMapping {
    debug_assert_eq!(base_vfn.0 % FRAME_PAGES, 0);
    debug_assert_eq!(base_pfn.0 % FRAME_PAGES, 0);
    let frames = pages.div_ceil(FRAME_PAGES);
    contiguous_mapping(base_vfn, frames * FRAME_PAGES, base_pfn)
}

/// One 2MB frame at `frame_base` holding three coalescible regions:
/// subregions 0..=3 from PFN 0x00F87, subregion 4 from 0x0201D and
/// subregion 7 from 0x0205D. Subregions 5 and 6 are scattered page by page,
/// and subregion 4 is not physically adjacent to subregion 3.
pub fn split_frame_mapping(frame_base: Vfn) -> PageMapping {
    assert_eq!(frame_base.0 % FRAME_PAGES, 0, "frame base must be 2MB aligned");
    let mut m = PageMapping::new();
    let mut put = |sub: u64, page: u64, pfn: u64| {
        m.map(
            frame_base.offset(sub * 64 + page),
            Pfn(pfn),
            Permissions::RW_USER,
        )
        .expect("frames are distinct");
    };
    for i in 0..256 {
        put(0, i, 0x00F87 + i);
    }
    for i in 0..64 {
        put(4, i, 0x0201D + i);
        put(7, i, 0x0205D + i);
        put(5, i, 0x40000 + 2 * i);
        put(6, i, 0x40100 + 2 * i);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injectivity_enforced() {
        let mut m = PageMapping::new();
        m.map(Vfn(1), Pfn(10), Permissions::RW_USER).unwrap();
        assert!(matches!(
            m.map(Vfn(2), Pfn(10), Permissions::RW_USER),
            Err(Error::PfnInUse { .. })
        ));
        // remapping the same page frees its old frame
        m.map(Vfn(1), Pfn(11), Permissions::RW_USER).unwrap();
        m.map(Vfn(2), Pfn(10), Permissions::RW_USER).unwrap();
        assert_eq!(m.owner_of(Pfn(11)), Some(Vfn(1)));
        m.unmap(Vfn(1));
        assert_eq!(m.owner_of(Pfn(11)), None);
    }

    #[test]
    fn oracle_on_large_frame_example() {
        let m = contiguous_mapping(Vfn(0x80000), 512, Pfn(0x6000A));
        let pa = oracle_translate(&m, VirtAddr(Vfn(0x80188).addr().0 | 0x123)).unwrap();
        assert_eq!(pa.pfn(), Pfn(0x60192));
        assert_eq!(pa.0 & 0xfff, 0x123);
    }

    #[test]
    fn oracle_faults_on_unmapped() {
        let m = contiguous_mapping(Vfn(0x80000), 4, Pfn(0));
        assert!(matches!(
            oracle_translate(&m, Vfn(0x90000).addr()),
            Err(Error::Fault { .. })
        ));
    }

    #[test]
    fn identity_mapping_is_identity() {
        let m = contiguous_mapping(Vfn(0x1234), 16, Pfn(0x1234));
        for v in m.vfns() {
            let va = VirtAddr(v.addr().0 | 0xabc);
            assert_eq!(oracle_translate(&m, va).unwrap().0, va.0);
        }
    }

    #[test]
    fn split_frame_layout() {
        let m = split_frame_mapping(Vfn(0x80000));
        assert_eq!(m.len(), 512);
        assert_eq!(m.get(Vfn(0x80000)).unwrap().pfn, Pfn(0x00F87));
        assert_eq!(m.get(Vfn(0x80100)).unwrap().pfn, Pfn(0x0201D));
        assert_eq!(m.get(Vfn(0x801C0)).unwrap().pfn, Pfn(0x0205D));
        assert!(m.get(Vfn(0x80180)).is_some());
    }
}
