//! Four-level x86-64 radix page table whose L2 entries carry per-subregion
//! contiguity bits (C0..C7) and a whole-frame bit (AC).

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::geometry::{
    Permissions, PhysAddr, Pfn, VirtAddr, Vfn, Vsn, FRAME_PAGES, SUBREGIONS_PER_FRAME,
    SUBREGION_PAGES,
};
use crate::memory::PageMapping;

const ENTRIES: usize = 512;
const PTE_BYTES: u64 = 8;
/// Page-table pages live far above any simulated data frame.
pub const TABLE_PFN_BASE: u64 = 1 << 40;

pub type TableId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    L4,
    L3,
    L2,
    L1,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::L4, Level::L3, Level::L2, Level::L1];

    pub fn index(self, vfn: Vfn) -> usize {
        let shift = match self {
            Level::L4 => 27,
            Level::L3 => 18,
            Level::L2 => 9,
            Level::L1 => 0,
        };
        ((vfn.0 >> shift) & (ENTRIES as u64 - 1)) as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::L4 => "L4",
            Level::L3 => "L3",
            Level::L2 => "L2",
            Level::L1 => "L1",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L1Pte {
    pub pfn: Pfn,
    pub present: bool,
    pub perms: Permissions,
}

/// Bit `i` is C_i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContiguityBits(pub u8);

impl ContiguityBits {
    pub fn get(self, i: usize) -> bool {
        self.0 >> i & 1 != 0
    }

    pub fn all(self) -> bool {
        self.0 == 0xff
    }
}

impl fmt::Display for ContiguityBits {
    /// C0 first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..8 {
            f.write_char(if self.get(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L2Pte {
    pub next_table: TableId,
    pub present: bool,
    pub c_bits: ContiguityBits,
    pub ac: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct UpperSlot {
    next: Option<TableId>,
    c_bits: ContiguityBits,
    ac: bool,
}

#[derive(Debug, Clone)]
enum Table {
    Upper(Box<[UpperSlot]>),
    Leaf(Box<[Option<L1Pte>]>),
}

/// One PTE fetched during a walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkRead {
    pub level: Level,
    pub addr: PhysAddr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub pfn: Pfn,
    pub perms: Permissions,
    pub reads: Vec<WalkRead>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub frames_scanned: u64,
    pub c_bits_set: u64,
    pub ac_bits_set: u64,
}

/// What a batch of mapping changes obliges the translation caches to drop.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvalidationSet {
    /// Changed pages: their regular, CoLT and large-page entries go.
    pub vfns: BTreeSet<Vfn>,
    /// Subregions holding a changed page: subregion entries covering any of
    /// them go.
    pub vsns: BTreeSet<Vsn>,
    /// Frame base VSNs whose MSC line is stale.
    pub frames: BTreeSet<Vsn>,
}

impl InvalidationSet {
    pub fn is_empty(&self) -> bool {
        self.vfns.is_empty() && self.vsns.is_empty() && self.frames.is_empty()
    }

    fn record(&mut self, vfn: Vfn) {
        self.vfns.insert(vfn);
        self.vsns.insert(vfn.vsn());
        self.frames.insert(vfn.vsn().frame_base());
    }
}

/// `None` unmaps the page.
pub type Change = (Vfn, Option<Pfn>);

#[derive(Debug, Clone)]
pub struct PageTable {
    tables: Vec<Table>,
    root: TableId,
}

impl Default for PageTable {
    fn default() -> Self {
        Self::new()
    }
}

fn sign_extend_vfn(vfn: u64) -> u64 {
    // bit 35 of the VFN is VA bit 47
    if vfn & (1 << 35) != 0 {
        vfn | !((1u64 << 36) - 1)
    } else {
        vfn
    }
}

impl PageTable {
    pub fn new() -> Self {
        PageTable {
            tables: vec![Table::Upper(vec![UpperSlot::default(); ENTRIES].into_boxed_slice())],
            root: 0,
        }
    }

    pub fn build_from_mapping(m: &PageMapping) -> Self {
        let mut pt = PageTable::new();
        for (vfn, page) in m.iter() {
            pt.set_l1(vfn, Some(L1Pte {
                pfn: page.pfn,
                present: true,
                perms: page.perms,
            }));
        }
        pt
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn table_addr(id: TableId) -> PhysAddr {
        PhysAddr::new(Pfn(TABLE_PFN_BASE + id as u64), 0)
    }

    fn alloc(&mut self, leaf: bool) -> TableId {
        let t = if leaf {
            Table::Leaf(vec![None; ENTRIES].into_boxed_slice())
        } else {
            Table::Upper(vec![UpperSlot::default(); ENTRIES].into_boxed_slice())
        };
        self.tables.push(t);
        (self.tables.len() - 1) as TableId
    }

    fn upper(&self, id: TableId) -> &[UpperSlot] {
        match &self.tables[id as usize] {
            Table::Upper(s) => s,
            Table::Leaf(_) => unreachable!("leaf table at an upper level"),
        }
    }

    fn upper_mut(&mut self, id: TableId) -> &mut [UpperSlot] {
        match &mut self.tables[id as usize] {
            Table::Upper(s) => s,
            Table::Leaf(_) => unreachable!("leaf table at an upper level"),
        }
    }

    fn leaf(&self, id: TableId) -> &[Option<L1Pte>] {
        match &self.tables[id as usize] {
            Table::Leaf(s) => s,
            Table::Upper(_) => unreachable!("upper table at L1"),
        }
    }

    fn leaf_mut(&mut self, id: TableId) -> &mut [Option<L1Pte>] {
        match &mut self.tables[id as usize] {
            Table::Leaf(s) => s,
            Table::Upper(_) => unreachable!("upper table at L1"),
        }
    }

    /// Table that holds the PTE for `vfn` at `level`, if the path exists.
    fn table_at(&self, level: Level, vfn: Vfn) -> Option<TableId> {
        let mut id = self.root;
        for l in [Level::L4, Level::L3, Level::L2] {
            if l == level {
                return Some(id);
            }
            id = self.upper(id)[l.index(vfn)].next?;
        }
        Some(id)
    }

    /// Physical address of the PTE read at `level` for `vfn`.
    pub fn pte_addr(&self, level: Level, vfn: Vfn) -> Option<PhysAddr> {
        let id = self.table_at(level, vfn)?;
        Some(PhysAddr(
            Self::table_addr(id).0 + level.index(vfn) as u64 * PTE_BYTES,
        ))
    }

    fn set_l1(&mut self, vfn: Vfn, pte: Option<L1Pte>) {
        let mut id = self.root;
        for (l, leaf_next) in [(Level::L4, false), (Level::L3, false), (Level::L2, true)] {
            let i = l.index(vfn);
            id = match self.upper(id)[i].next {
                Some(n) => n,
                None => {
                    if pte.is_none() {
                        return;
                    }
                    let n = self.alloc(leaf_next);
                    self.upper_mut(id)[i].next = Some(n);
                    n
                }
            };
        }
        self.leaf_mut(id)[Level::L1.index(vfn)] = pte;
    }

    pub fn l1_entry(&self, vfn: Vfn) -> Option<L1Pte> {
        let id = self.table_at(Level::L1, vfn)?;
        self.leaf(id)[Level::L1.index(vfn)].filter(|p| p.present)
    }

    /// The L2PTE of the frame containing `vfn`.
    pub fn l2_entry(&self, vfn: Vfn) -> Option<L2Pte> {
        let id = self.table_at(Level::L2, vfn)?;
        let slot = self.upper(id)[Level::L2.index(vfn)];
        Some(L2Pte {
            next_table: slot.next?,
            present: true,
            c_bits: slot.c_bits,
            ac: slot.ac,
        })
    }

    /// Plain four-level walk that ignores the contiguity bits.
    pub fn walk(&self, va: VirtAddr) -> Result<Walk> {
        let vfn = va.vfn();
        let mut reads = Vec::with_capacity(4);
        let mut id = self.root;
        for l in [Level::L4, Level::L3, Level::L2] {
            reads.push(WalkRead {
                level: l,
                addr: PhysAddr(Self::table_addr(id).0 + l.index(vfn) as u64 * PTE_BYTES),
            });
            id = self.upper(id)[l.index(vfn)]
                .next
                .ok_or(Error::Fault { va, level: l.name() })?;
        }
        reads.push(WalkRead {
            level: Level::L1,
            addr: PhysAddr(Self::table_addr(id).0 + Level::L1.index(vfn) as u64 * PTE_BYTES),
        });
        let pte = self.leaf(id)[Level::L1.index(vfn)]
            .filter(|p| p.present)
            .ok_or(Error::Fault { va, level: "L1" })?;
        Ok(Walk {
            pfn: pte.pfn,
            perms: pte.perms,
            reads,
        })
    }

    /// Every L2 slot that points at an L1 table, as (frame base VFN, L2
    /// table, index).
    fn l2_slots(&self) -> Vec<(Vfn, TableId, usize)> {
        let mut out = Vec::new();
        for (i4, s4) in self.upper(self.root).iter().enumerate() {
            let Some(t3) = s4.next else { continue };
            for (i3, s3) in self.upper(t3).iter().enumerate() {
                let Some(t2) = s3.next else { continue };
                for (i2, s2) in self.upper(t2).iter().enumerate() {
                    if s2.next.is_some() {
                        let vfn = (i4 as u64) << 27 | (i3 as u64) << 18 | (i2 as u64) << 9;
                        out.push((Vfn(sign_extend_vfn(vfn)), t2, i2));
                    }
                }
            }
        }
        out
    }

    /// Contiguity of one frame's L1 table: (C bits, AC).
    fn frame_contiguity(&self, l1: TableId) -> (ContiguityBits, bool) {
        let ptes = self.leaf(l1);
        let sub = SUBREGION_PAGES as usize;
        let mut c = 0u8;
        let mut all_cont = true;
        let mut prev_head: Option<L1Pte> = None;
        for s in 0..SUBREGIONS_PER_FRAME as usize {
            let pages = &ptes[s * sub..(s + 1) * sub];
            let head = pages[0].filter(|p| p.present);
            let sub_cont = head.is_some_and(|h| {
                pages.iter().enumerate().all(|(i, p)| {
                    p.is_some_and(|p| {
                        p.present && p.pfn == h.pfn.offset(i as u64) && p.perms == h.perms
                    })
                })
            });
            if sub_cont {
                c |= 1 << s;
            }
            let inter_cont = match (prev_head, head) {
                (None, _) => true,
                (Some(prev), Some(cur)) => {
                    cur.pfn == prev.pfn.offset(SUBREGION_PAGES) && cur.perms == prev.perms
                }
                (Some(_), None) => false,
            };
            if !sub_cont || !inter_cont {
                all_cont = false;
            }
            prev_head = head;
        }
        (ContiguityBits(c), all_cont)
    }

    /// Recomputes the C and AC bits of every L2PTE.
    pub fn scan_contiguity(&mut self) -> ScanStats {
        let mut stats = ScanStats::default();
        for (_, t2, i2) in self.l2_slots() {
            let l1 = self.upper(t2)[i2].next.expect("listed slots are present");
            let (c, ac) = self.frame_contiguity(l1);
            let slot = &mut self.upper_mut(t2)[i2];
            slot.c_bits = c;
            slot.ac = ac;
            stats.frames_scanned += 1;
            stats.c_bits_set += c.0.count_ones() as u64;
            stats.ac_bits_set += ac as u64;
        }
        stats
    }

    /// Rescans the frame containing `vfn`.
    pub fn scan_frame(&mut self, vfn: Vfn) {
        let Some(t2) = self.table_at(Level::L2, vfn) else {
            return;
        };
        let i2 = Level::L2.index(vfn);
        let Some(l1) = self.upper(t2)[i2].next else {
            return;
        };
        let (c, ac) = self.frame_contiguity(l1);
        let slot = &mut self.upper_mut(t2)[i2];
        slot.c_bits = c;
        slot.ac = ac;
    }

    /// Applies `changes` to both the mapping and the table, then recomputes
    /// the contiguity bits of each touched frame. Changes that leave a page
    /// as it was are ignored.
    pub fn remap_pages(&mut self, m: &mut PageMapping, changes: &[Change]) -> Result<InvalidationSet> {
        let mut inv = InvalidationSet::default();
        let applied = self.apply_changes(m, changes, &mut inv);
        for &frame in &inv.frames {
            self.scan_frame(frame.base_vfn());
        }
        applied.map(|()| inv)
    }

    fn apply_changes(
        &mut self,
        m: &mut PageMapping,
        changes: &[Change],
        inv: &mut InvalidationSet,
    ) -> Result<()> {
        for &(vfn, target) in changes {
            let current = m.get(vfn);
            match (current, target) {
                (None, None) => {}
                (None, Some(_)) => return Err(Error::NotMapped(vfn)),
                (Some(cur), Some(pfn)) if cur.pfn == pfn => {}
                (Some(cur), Some(pfn)) => {
                    m.map(vfn, pfn, cur.perms)?;
                    self.set_l1(vfn, Some(L1Pte {
                        pfn,
                        present: true,
                        perms: cur.perms,
                    }));
                    inv.record(vfn);
                }
                (Some(_), None) => {
                    m.unmap(vfn);
                    self.set_l1(vfn, None);
                    inv.record(vfn);
                }
            }
        }
        Ok(())
    }

    /// One line per present L2PTE: `<frame_vfn hex> AC=<0|1> C=<C0..C7>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (frame, t2, i2) in self.l2_slots() {
            let slot = self.upper(t2)[i2];
            writeln!(out, "{:#x} AC={} C={}", frame.0, slot.ac as u8, slot.c_bits).unwrap();
        }
        out
    }
}

/// Frame base of `vfn` as used by the L2PTE that covers it.
pub fn frame_of(vfn: Vfn) -> Vfn {
    Vfn(vfn.0 & !(FRAME_PAGES - 1))
}
