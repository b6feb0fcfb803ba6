//! The shared IOMMU TLB: one set-associative array whose upper ways may hold
//! subregion entries (T=1) next to ordinary ones (T=0).

use std::fmt::Write as _;

use crate::error::Result;
use crate::geometry::{
    subregion_set_index_in, Permissions, Pfn, PhysAddr, VirtAddr, Vfn, Vsn, FRAME_SHIFT,
};
use crate::page_table::InvalidationSet;
use crate::tlb::entry::{ColtEntry, LargePageEntry, RegularEntry, SubregionEntry, TlbEntry};

/// (set, way range, entry kind filter)
type Probe = (usize, std::ops::Range<usize>, fn(&TlbEntry) -> bool);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IommuHit {
    pub pa: PhysAddr,
    pub entry: TlbEntry,
    pub set: usize,
    pub way: usize,
}

impl IommuHit {
    pub fn pfn(&self) -> Pfn {
        self.pa.pfn()
    }
}

/// Result of one lookup, including which partitions were read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IommuLookup {
    pub hit: Option<IommuHit>,
    pub subregion_probed: bool,
    pub regular_probed: bool,
}

#[derive(Debug, Clone)]
pub struct UnifiedTlb {
    sets: usize,
    ways: usize,
    /// Ways `0..split` never hold subregion entries.
    split: usize,
    subregions: bool,
    slots: Vec<Option<TlbEntry>>,
    stamps: Vec<u64>,
    clock: u64,
}

impl UnifiedTlb {
    /// `split` is the number of regular-only ways. With `subregions` off the
    /// first lookup phase is skipped.
    pub fn new(sets: usize, ways: usize, split: usize, subregions: bool) -> Self {
        assert!(sets > 0 && ways > 0 && split <= ways);
        UnifiedTlb {
            sets,
            ways,
            split,
            subregions,
            slots: vec![None; sets * ways],
            stamps: vec![0; sets * ways],
            clock: 0,
        }
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn capacity(&self) -> usize {
        self.sets * self.ways
    }

    fn slot(&self, set: usize, way: usize) -> usize {
        set * self.ways + way
    }

    fn touch(&mut self, i: usize) {
        self.clock += 1;
        self.stamps[i] = self.clock;
    }

    fn regular_set(&self, vfn: Vfn) -> usize {
        (vfn.0 % self.sets as u64) as usize
    }

    fn colt_set(&self, vfn: Vfn) -> usize {
        ((vfn.0 >> 2) % self.sets as u64) as usize
    }

    fn large_set(&self, vfn: Vfn) -> usize {
        ((vfn.0 >> FRAME_SHIFT) % self.sets as u64) as usize
    }

    fn subregion_set(&self, vsn: Vsn) -> usize {
        subregion_set_index_in(vsn, self.sets as u64)
    }

    fn find(&mut self, set: usize, ways: std::ops::Range<usize>, vfn: Vfn, pred: impl Fn(&TlbEntry) -> bool) -> Option<(usize, TlbEntry)> {
        let way = ways.clone().find(|&w| {
            self.slots[self.slot(set, w)].is_some_and(|e| pred(&e) && e.covers(vfn))
        })?;
        let i = self.slot(set, way);
        self.touch(i);
        Some((way, self.slots[i].unwrap()))
    }

    /// Subregion partition first, then the regular entries of the set the
    /// VFN indexes (and the CoLT and large-page sets).
    pub fn iommu_lookup(&mut self, va: VirtAddr) -> IommuLookup {
        let vfn = va.vfn();
        let mut out = IommuLookup {
            hit: None,
            subregion_probed: false,
            regular_probed: true,
        };
        let mut probes: Vec<Probe> = Vec::with_capacity(4);
        if self.subregions {
            out.subregion_probed = true;
            probes.push((self.subregion_set(vfn.vsn()), self.split..self.ways, |e| {
                matches!(e, TlbEntry::Subregion(_))
            }));
        }
        probes.push((self.regular_set(vfn), 0..self.ways, |e| matches!(e, TlbEntry::Regular(_))));
        probes.push((self.large_set(vfn), 0..self.ways, |e| matches!(e, TlbEntry::LargePage(_))));
        probes.push((self.colt_set(vfn), 0..self.ways, |e| matches!(e, TlbEntry::Colt(_))));
        for (k, (set, ways, pred)) in probes.into_iter().enumerate() {
            if let Some((way, entry)) = self.find(set, ways, vfn, pred) {
                if k == 0 && out.subregion_probed {
                    out.regular_probed = false;
                }
                let pfn = entry.translate(vfn).expect("matched entries cover the VFN");
                out.hit = Some(IommuHit {
                    pa: PhysAddr::new(pfn, va.page_offset()),
                    entry,
                    set,
                    way,
                });
                return out;
            }
        }
        out
    }

    /// Places `entry` in `set` within `ways`: an invalid way if any, else
    /// the least recently used. Returns what was displaced.
    fn place(&mut self, set: usize, ways: std::ops::Range<usize>, entry: TlbEntry) -> Option<TlbEntry> {
        if ways.is_empty() {
            return None;
        }
        let way = ways
            .clone()
            .find(|&w| self.slots[self.slot(set, w)].is_none())
            .unwrap_or_else(|| {
                ways.min_by_key(|&w| self.stamps[self.slot(set, w)]).unwrap()
            });
        let i = self.slot(set, way);
        let old = self.slots[i].replace(entry);
        self.touch(i);
        old
    }

    /// Drops entries of one kind in `set` that overlap `entry`. Returns true
    /// if an identical entry was found instead (it is refreshed and kept).
    fn dedup(&mut self, set: usize, entry: &TlbEntry) -> bool {
        for w in 0..self.ways {
            let i = self.slot(set, w);
            if let Some(e) = self.slots[i] {
                if e == *entry {
                    self.touch(i);
                    return true;
                }
                if e.kind() == entry.kind() && e.overlaps(entry) {
                    self.slots[i] = None;
                }
            }
        }
        false
    }

    pub fn insert_subregion(&mut self, vsn: Vsn, length: u8, base_pfn: Pfn, perms: Permissions) -> Result<Option<TlbEntry>> {
        let entry = TlbEntry::from(SubregionEntry::new(vsn, length, base_pfn, perms)?);
        let set = self.subregion_set(vsn);
        if self.dedup(set, &entry) {
            return Ok(None);
        }
        Ok(self.place(set, self.split..self.ways, entry))
    }

    pub fn insert_regular(&mut self, vfn: Vfn, pfn: Pfn, perms: Permissions) -> Option<TlbEntry> {
        let entry = TlbEntry::from(RegularEntry { vfn, pfn, perms });
        let set = self.regular_set(vfn);
        if self.dedup(set, &entry) {
            return None;
        }
        self.place(set, 0..self.ways, entry)
    }

    pub fn insert_colt(&mut self, e: ColtEntry) -> Option<TlbEntry> {
        let entry = TlbEntry::from(e);
        let set = self.colt_set(e.vfn);
        if self.dedup(set, &entry) {
            return None;
        }
        self.place(set, 0..self.ways, entry)
    }

    pub fn insert_large(&mut self, e: LargePageEntry) -> Option<TlbEntry> {
        let entry = TlbEntry::from(e);
        let set = self.large_set(e.frame_vfn);
        if self.dedup(set, &entry) {
            return None;
        }
        self.place(set, 0..self.ways, entry)
    }

    /// Dispatches on the entry kind.
    pub fn insert(&mut self, entry: TlbEntry) -> Result<Option<TlbEntry>> {
        Ok(match entry {
            TlbEntry::Regular(e) => self.insert_regular(e.vfn, e.pfn, e.perms),
            TlbEntry::Subregion(e) => return self.insert_subregion(e.vsn, e.length, e.base_pfn, e.perms),
            TlbEntry::Colt(e) => self.insert_colt(e),
            TlbEntry::LargePage(e) => self.insert_large(e),
        })
    }

    /// Drops every entry made stale by `inv`. Returns how many went.
    pub fn invalidate(&mut self, inv: &InvalidationSet) -> usize {
        let mut n = 0;
        for slot in &mut self.slots {
            if slot.is_some_and(|e| is_stale(&e, inv)) {
                *slot = None;
                n += 1;
            }
        }
        n
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
    }

    /// Valid entries as (set, way, entry).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, TlbEntry)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|e| (i / self.ways, i % self.ways, e)))
    }

    /// One line per valid entry: `SET=<n> WAY=<n> T=<0|1> TAG=<hex> LEN=<n> PFN=<hex>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (set, way, e) in self.entries() {
            writeln!(
                out,
                "SET={set} WAY={way} T={} TAG={:#x} LEN={} PFN={:#x}",
                e.type_bit(),
                e.tag(),
                e.length(),
                e.base_pfn().0
            )
            .unwrap();
        }
        out
    }
}

/// Whether a cached entry may translate a page `inv` changed.
pub fn is_stale(e: &TlbEntry, inv: &InvalidationSet) -> bool {
    match e {
        TlbEntry::Subregion(s) => {
            let lo = s.vsn;
            let hi = Vsn(s.vsn.0 + s.length as u64);
            inv.vsns.range(lo..=hi).next().is_some()
        }
        _ => {
            let (lo, hi) = e.bounds();
            inv.vfns.range(lo..=hi).next().is_some()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::IOMMU_SETS;

    const RW: Permissions = Permissions::RW_USER;

    fn tlb() -> UnifiedTlb {
        UnifiedTlb::new(IOMMU_SETS as usize, 16, 8, true)
    }

    fn pfn_of(t: &mut UnifiedTlb, vfn: u64) -> Option<Pfn> {
        t.iommu_lookup(Vfn(vfn).addr()).hit.map(|h| h.pfn())
    }

    #[test]
    fn subregion_hit_uses_offset_from_lower_bound() {
        let mut t = tlb();
        t.insert_subregion(Vsn(0x2000), 3, Pfn(0xf87), RW).unwrap();
        let l = t.iommu_lookup(VirtAddr(0x8004_2123));
        let hit = l.hit.unwrap();
        assert_eq!(hit.pa, PhysAddr(0xfc9_123));
        assert!(l.subregion_probed && !l.regular_probed);
        assert!(hit.way >= 8);
        assert_eq!(pfn_of(&mut t, 0x80100), None);
    }

    #[test]
    fn regular_hit_in_second_phase() {
        let mut t = tlb();
        t.insert_regular(Vfn(0x80188), Pfn(0x60192), RW);
        let l = t.iommu_lookup(Vfn(0x80188).addr());
        assert_eq!(l.hit.unwrap().pfn(), Pfn(0x60192));
        assert_eq!(l.hit.unwrap().set, 8);
        assert!(l.subregion_probed && l.regular_probed);
    }

    #[test]
    fn subregion_wins_over_regular() {
        let mut t = tlb();
        t.insert_regular(Vfn(0x80010), Pfn(0x1010), RW);
        t.insert_subregion(Vsn(0x2000), 0, Pfn(0x1000), RW).unwrap();
        let hit = t.iommu_lookup(Vfn(0x80010).addr()).hit.unwrap();
        assert_eq!(hit.entry.type_bit(), 1);
        assert_eq!(hit.pfn(), Pfn(0x1010));
    }

    #[test]
    fn ninth_frame_evicts_lru_in_partition() {
        let mut t = tlb();
        // frames 32 apart share a subregion set
        for k in 0..9u64 {
            let evicted = t.insert_subregion(Vsn(k * 32 * 8), 7, Pfn(k * 512), RW).unwrap();
            assert_eq!(evicted.is_some(), k == 8);
            if k == 8 {
                assert_eq!(evicted.unwrap().tag(), 0);
            }
        }
        assert!(t.entries().all(|(_, w, e)| e.type_bit() == 0 || w >= 8));
    }

    #[test]
    fn duplicate_subregion_kept_once() {
        let mut t = tlb();
        t.insert_subregion(Vsn(0x2000), 3, Pfn(0xf87), RW).unwrap();
        t.insert_subregion(Vsn(0x2000), 3, Pfn(0xf87), RW).unwrap();
        assert_eq!(t.entries().count(), 1);
        // a wider entry replaces the one it overlaps
        t.insert_subregion(Vsn(0x2000), 7, Pfn(0xf87), RW).unwrap();
        assert_eq!(t.entries().count(), 1);
        assert_eq!(t.entries().next().unwrap().2.length(), 7);
    }

    #[test]
    fn seventeenth_regular_evicts_first() {
        let mut t = tlb();
        for k in 0..16u64 {
            assert!(t.insert_regular(Vfn(k * 32), Pfn(k), RW).is_none());
        }
        let ev = t.insert_regular(Vfn(16 * 32), Pfn(16), RW).unwrap();
        assert_eq!(ev.tag(), 0);
    }

    #[test]
    fn just_hit_is_not_next_victim() {
        let mut t = tlb();
        for k in 0..16u64 {
            t.insert_regular(Vfn(k * 32), Pfn(k), RW);
        }
        assert!(pfn_of(&mut t, 0).is_some());
        let ev = t.insert_regular(Vfn(16 * 32), Pfn(16), RW).unwrap();
        assert_eq!(ev.tag(), 32);
    }

    #[test]
    fn subregions_never_evict_partition_zero() {
        let mut t = tlb();
        for k in 0..16u64 {
            t.insert_regular(Vfn(k * 32), Pfn(k), RW);
        }
        t.insert_subregion(Vsn(0x2000), 0, Pfn(0x9000), RW).unwrap();
        let lost: Vec<u64> = (0..16u64).filter(|k| pfn_of(&mut t, k * 32).is_none()).collect();
        assert_eq!(lost.len(), 1);
        assert!(lost[0] >= 8);
    }

    #[test]
    fn invalidation_is_selective() {
        let mut t = tlb();
        t.insert_subregion(Vsn(0x2000), 3, Pfn(0xf87), RW).unwrap();
        t.insert_subregion(Vsn(0x2008), 0, Pfn(0x5000), RW).unwrap();
        t.insert_regular(Vfn(0x90000), Pfn(7), RW);
        assert_eq!(t.invalidate(&InvalidationSet::default()), 0);
        let mut inv = InvalidationSet::default();
        inv.vfns.insert(Vfn(0x800c5));
        inv.vsns.insert(Vfn(0x800c5).vsn());
        assert_eq!(t.invalidate(&inv), 1);
        assert_eq!(pfn_of(&mut t, 0x80000), None);
        assert_eq!(pfn_of(&mut t, 0x80200), Some(Pfn(0x5000)));
        assert_eq!(pfn_of(&mut t, 0x90000), Some(Pfn(7)));
        // a change nothing covers removes nothing
        let mut inv = InvalidationSet::default();
        inv.vfns.insert(Vfn(0x12345));
        inv.vsns.insert(Vfn(0x12345).vsn());
        assert_eq!(t.invalidate(&inv), 0);
    }

    #[test]
    fn dump_format() {
        let mut t = tlb();
        t.insert_subregion(Vsn(0x2000), 3, Pfn(0xf87), RW).unwrap();
        assert_eq!(t.dump(), "SET=0 WAY=8 T=1 TAG=0x2000 LEN=3 PFN=0xf87\n");
    }

    #[test]
    fn colt_and_large_entries() {
        let mut t = UnifiedTlb::new(32, 16, 8, false);
        t.insert_colt(ColtEntry::new(Vfn(0x101), 2, Pfn(0x501), RW));
        assert_eq!(pfn_of(&mut t, 0x103), Some(Pfn(0x503)));
        assert_eq!(pfn_of(&mut t, 0x100), None);
        t.insert_large(LargePageEntry { frame_vfn: Vfn(0x80000), base_pfn: Pfn(0x40000), perms: RW });
        assert_eq!(pfn_of(&mut t, 0x801ff), Some(Pfn(0x401ff)));
        let l = t.iommu_lookup(Vfn(0x80000).addr());
        assert!(!l.subregion_probed);
    }
}
