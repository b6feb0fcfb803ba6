use crate::geometry::{Pfn, Vfn};
use crate::page_table::InvalidationSet;
use crate::tlb::entry::TlbEntry;
use crate::tlb::unified::is_stale;

/// Fully associative, LRU.
#[derive(Debug, Clone)]
pub struct PerCuTlb {
    capacity: usize,
    entries: Vec<(TlbEntry, u64)>,
    clock: u64,
}

impl PerCuTlb {
    pub fn new(capacity: usize) -> Self {
        PerCuTlb {
            capacity,
            entries: Vec::with_capacity(capacity),
            clock: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&mut self, vfn: Vfn) -> Option<(Pfn, TlbEntry)> {
        self.clock += 1;
        let clock = self.clock;
        let (e, stamp) = self.entries.iter_mut().find(|(e, _)| e.covers(vfn))?;
        *stamp = clock;
        Some((e.translate(vfn).unwrap(), *e))
    }

    /// Entries overlapping the new one are replaced. Returns the LRU victim
    /// if the TLB was full.
    pub fn insert(&mut self, entry: TlbEntry) -> Option<TlbEntry> {
        if self.capacity == 0 {
            return None;
        }
        self.clock += 1;
        self.entries.retain(|(e, _)| !e.overlaps(&entry));
        let victim = if self.entries.len() == self.capacity {
            let i = (0..self.entries.len())
                .min_by_key(|&i| self.entries[i].1)
                .unwrap();
            Some(self.entries.swap_remove(i).0)
        } else {
            None
        };
        self.entries.push((entry, self.clock));
        victim
    }

    pub fn invalidate(&mut self, inv: &InvalidationSet) -> usize {
        let before = self.entries.len();
        self.entries.retain(|(e, _)| !is_stale(e, inv));
        before - self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TlbEntry> {
        self.entries.iter().map(|(e, _)| e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Permissions;
    use crate::tlb::entry::{ColtEntry, LargePageEntry, RegularEntry};

    const RW: Permissions = Permissions::RW_USER;

    fn page(vfn: u64) -> TlbEntry {
        RegularEntry { vfn: Vfn(vfn), pfn: Pfn(vfn + 7), perms: RW }.into()
    }

    #[test]
    fn colt_range_hit() {
        let mut t = PerCuTlb::new(32);
        t.insert(ColtEntry::new(Vfn(0x100), 3, Pfn(0x500), RW).into());
        assert_eq!(t.lookup(Vfn(0x102)).unwrap().0, Pfn(0x502));
        assert!(t.lookup(Vfn(0x104)).is_none());
    }

    #[test]
    fn thirty_third_evicts_lru() {
        let mut t = PerCuTlb::new(32);
        for v in 0..32 {
            assert!(t.insert(page(v)).is_none());
        }
        t.lookup(Vfn(0));
        assert_eq!(t.insert(page(32)), Some(page(1)));
        assert_eq!(t.len(), 32);
    }

    #[test]
    fn large_page_covers_frame() {
        let mut t = PerCuTlb::new(4);
        t.insert(LargePageEntry { frame_vfn: Vfn(0x200), base_pfn: Pfn(0x1000), perms: RW }.into());
        assert_eq!(t.lookup(Vfn(0x3ff)).unwrap().0, Pfn(0x11ff));
    }

    #[test]
    fn overlapping_insert_replaces() {
        let mut t = PerCuTlb::new(8);
        t.insert(page(0x101));
        t.insert(ColtEntry::new(Vfn(0x100), 3, Pfn(0x107), RW).into());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn zero_capacity_never_hits() {
        let mut t = PerCuTlb::new(0);
        t.insert(page(1));
        assert!(t.lookup(Vfn(1)).is_none());
    }

    #[test]
    fn invalidate_changed_pages() {
        let mut t = PerCuTlb::new(8);
        t.insert(page(1));
        t.insert(page(2));
        let mut inv = InvalidationSet::default();
        inv.vfns.insert(Vfn(2));
        assert_eq!(t.invalidate(&inv), 1);
        assert!(t.lookup(Vfn(1)).is_some());
    }
}
