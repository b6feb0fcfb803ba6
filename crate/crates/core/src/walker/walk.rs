//! One IOMMU page table walk under a given design.
//!
//! Contiguity-aware designs read the L2PTE's AC and C bits first and pick
//! one of three walks:
//!
//! * AC=1: read the frame's head L1PTE; the payload is one subregion entry
//!   covering the whole frame.
//! * C=0 for the requested subregion: read the page's own L1PTE; the payload
//!   is a regular entry.
//! * C=1, AC=0: read the requested subregion's head L1PTE and answer. Then
//!   take the frame's bitmap from the MSC, or on a miss read the head L1PTE
//!   of every other contiguous subregion to build it, and insert the
//!   maximal run of linked subregions.

use crate::engine::config::Design;
use crate::error::{Error, Result};
use crate::geometry::{Permissions, Pfn, VirtAddr, Vfn, Vsn, SUBREGIONS_PER_FRAME, SUBREGION_PAGES};
use crate::page_table::{L1Pte, L2Pte, PageTable};
use crate::tlb::{ColtEntry, LargePageEntry, RegularEntry, SubregionEntry, TlbEntry, COLT_BLOCK};
use crate::walker::msc::{run_from_bitmap, Bitmap, Msc};
use crate::walker::pwc::Pwc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WalkMode {
    /// Whole frame contiguous.
    Frame,
    /// Ordinary 4KB walk.
    Page,
    /// Requested subregion contiguous, frame not.
    Subregion,
    /// THP leaf at L2.
    LargePage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkResult {
    pub pfn: Pfn,
    pub perms: Permissions,
    pub mode: WalkMode,
    /// What the IOMMU TLB learns from this walk.
    pub payload: TlbEntry,
    /// The CoLT run around the page, for designs that coalesce with CoLT.
    pub colt: Option<ColtEntry>,
    /// Reads before the requester has its translation.
    pub critical_reads: u32,
    /// All memory reads, including the MSC fill.
    pub memory_reads: u32,
    /// `None` when the MSC was not consulted.
    pub msc_hit: Option<bool>,
}

/// The bitmap of a frame, computed from its L2PTE and head L1PTEs. Bit `i`
/// needs C_i, C_{i+1}, a head-PFN gap of exactly 64 and equal permissions.
pub fn frame_bitmap(pt: &PageTable, frame: Vfn) -> Bitmap {
    let Some(l2) = pt.l2_entry(frame) else {
        return Bitmap(0);
    };
    let heads = heads(pt, frame, &l2);
    let mut b = 0u8;
    for i in 0..7 {
        if let (Some(a), Some(c)) = (heads[i], heads[i + 1]) {
            if c.pfn == a.pfn.offset(SUBREGION_PAGES) && c.perms == a.perms {
                b |= 1 << i;
            }
        }
    }
    Bitmap(b)
}

/// Head L1PTEs of the contiguous subregions of a frame.
fn heads(pt: &PageTable, frame: Vfn, l2: &L2Pte) -> [Option<L1Pte>; 8] {
    let mut out = [None; 8];
    for (i, slot) in out.iter_mut().enumerate() {
        if l2.c_bits.get(i) {
            *slot = pt.l1_entry(frame.offset(i as u64 * SUBREGION_PAGES));
        }
    }
    out
}

/// The maximal run through `vfn` inside its 4-page block whose pages are
/// present, physically consecutive and share permissions. All four PTEs
/// arrive in the cache line the walk already fetched.
pub fn colt_run(pt: &PageTable, vfn: Vfn) -> Option<ColtEntry> {
    let pte = pt.l1_entry(vfn)?;
    let block = vfn.0 - vfn.0 % COLT_BLOCK;
    let same = |v: u64| {
        pt.l1_entry(Vfn(v)).is_some_and(|p| {
            p.perms == pte.perms && p.pfn.0.wrapping_sub(pte.pfn.0) == v.wrapping_sub(vfn.0)
        })
    };
    let mut lo = vfn.0;
    while lo > block && same(lo - 1) {
        lo -= 1;
    }
    let mut hi = vfn.0;
    while hi + 1 < block + COLT_BLOCK && same(hi + 1) {
        hi += 1;
    }
    Some(ColtEntry::new(
        Vfn(lo),
        (hi - lo) as u8,
        Pfn(pte.pfn.0 - (vfn.0 - lo)),
        pte.perms,
    ))
}

/// Inside a contiguous subregion the aligned 4-page block is contiguous by
/// construction, so no PTE needs inspecting.
fn colt_block(vfn: Vfn, pfn: Pfn, perms: Permissions) -> ColtEntry {
    let skew = vfn.0 % COLT_BLOCK;
    ColtEntry::new(Vfn(vfn.0 - skew), (COLT_BLOCK - 1) as u8, Pfn(pfn.0 - skew), perms)
}

pub fn walk_request(pt: &PageTable, msc: &mut Msc, pwc: &mut Pwc, va: VirtAddr, design: Design) -> Result<WalkResult> {
    let vfn = va.vfn();
    // the plain walk supplies the fault behaviour and the upper-level reads
    let plain = pt.walk(va)?;
    let upper = &plain.reads[..3];
    let l2 = pt.l2_entry(vfn).expect("a successful walk has an L2PTE");
    let frame = vfn.frame_base();
    let x = vfn.subregion_index();

    if design == Design::Thp && l2.ac {
        // L2 is the leaf: the PWC may hold L4 and L3 only
        let upper_reads = pwc.access(&upper[..2]).len() as u32 + 1;
        let base_pfn = Pfn(plain.pfn.0 - (vfn.0 - frame.0));
        return Ok(WalkResult {
            pfn: plain.pfn,
            perms: plain.perms,
            mode: WalkMode::LargePage,
            payload: LargePageEntry { frame_vfn: frame, base_pfn, perms: plain.perms }.into(),
            colt: None,
            critical_reads: upper_reads,
            memory_reads: upper_reads,
            msc_hit: None,
        });
    }

    let upper_reads = pwc.access(upper).len() as u32;
    let regular = |colt: Option<ColtEntry>| WalkResult {
        pfn: plain.pfn,
        perms: plain.perms,
        mode: WalkMode::Page,
        payload: RegularEntry { vfn, pfn: plain.pfn, perms: plain.perms }.into(),
        colt,
        critical_reads: upper_reads + 1,
        memory_reads: upper_reads + 1,
        msc_hit: None,
    };

    if !design.uses_subregions() {
        let colt = if design.uses_colt() { colt_run(pt, vfn) } else { None };
        return Ok(regular(colt));
    }

    let colt = |pfn, perms| design.uses_colt().then(|| colt_block(vfn, pfn, perms));

    if l2.ac {
        let head = pt.l1_entry(frame).ok_or(Error::Fault { va, level: "L1" })?;
        let pfn = head.pfn.offset(vfn.0 - frame.0);
        debug_assert_eq!(pfn, plain.pfn);
        return Ok(WalkResult {
            pfn,
            perms: head.perms,
            mode: WalkMode::Frame,
            payload: SubregionEntry::new(frame.vsn(), 7, head.pfn, head.perms)?.into(),
            colt: colt(pfn, head.perms),
            critical_reads: upper_reads + 1,
            memory_reads: upper_reads + 1,
            msc_hit: None,
        });
    }

    if !l2.c_bits.get(x) {
        let colt = if design.uses_colt() { colt_run(pt, vfn) } else { None };
        return Ok(regular(colt));
    }

    let sub_base = vfn.subregion_base();
    let head = pt.l1_entry(sub_base).ok_or(Error::Fault { va, level: "L1" })?;
    let pfn = head.pfn.offset(vfn.0 - sub_base.0);
    debug_assert_eq!(pfn, plain.pfn);
    let frame_vsn = frame.vsn();
    let (bitmap, hit, extra) = match msc.lookup(frame_vsn)? {
        Some(b) => (b, true, 0),
        None => {
            let others = (0..SUBREGIONS_PER_FRAME as usize)
                .filter(|&i| i != x && l2.c_bits.get(i))
                .count() as u32;
            let b = frame_bitmap(pt, frame);
            msc.insert(frame_vsn, b)?;
            (b, false, others)
        }
    };
    let (first, length) = run_from_bitmap(bitmap, x);
    let base_pfn = Pfn(head.pfn.0 - (x - first) as u64 * SUBREGION_PAGES);
    Ok(WalkResult {
        pfn,
        perms: head.perms,
        mode: WalkMode::Subregion,
        payload: SubregionEntry::new(Vsn(frame_vsn.0 + first as u64), length, base_pfn, head.perms)?.into(),
        colt: colt(pfn, head.perms),
        critical_reads: upper_reads + 1,
        memory_reads: upper_reads + 1 + extra,
        msc_hit: Some(hit),
    })
}
