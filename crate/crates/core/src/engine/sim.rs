//! Event-by-event replay of a translation trace.

use sha2::{Digest, Sha256};

use crate::engine::config::{Design, DesignConfig};
use crate::engine::energy::{compute_energy, StructureCounts};
use crate::engine::report::{ratio, LatencyStats, SimReport};
use crate::error::{Error, Result};
use crate::geometry::{decompose_va, Pfn, PhysAddr, Vfn, Vsn};
use crate::memory::PageMapping;
use crate::page_table::{Change, PageTable, ScanStats};
use crate::tlb::{EntryKind, IommuHit, PerCuTlb, RegularEntry, TlbEntry, UnifiedTlb};
use crate::walker::{walk_request, AccessCounts, Bitmap, Msc, Pwc, WalkResult, WalkerPool};
use crate::workloads::{Trace, TranslationEvent};

/// Where a translation was served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServedBy {
    PerCu,
    Iommu(EntryKind),
    Walk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub pa: PhysAddr,
    pub served_by: ServedBy,
    pub latency: u64,
}

/// What one translation teaches the TLBs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fill<'a> {
    Walk(&'a WalkResult),
    IommuHit(&'a IommuHit),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Insertions {
    pub iommu: Option<TlbEntry>,
    pub per_cu: Option<TlbEntry>,
}

/// Per-CU TLBs cannot hold subregion entries, and a one-page CoLT run is
/// just a regular entry.
fn per_cu_form(e: TlbEntry) -> TlbEntry {
    match e {
        TlbEntry::Colt(c) if c.length == 0 => RegularEntry { vfn: c.vfn, pfn: c.base_pfn, perms: c.perms }.into(),
        e => e,
    }
}

/// The insertion policy of each design.
pub fn apply_design(design: Design, vfn: Vfn, fill: Fill<'_>) -> Insertions {
    match fill {
        Fill::Walk(r) => {
            let page: TlbEntry = RegularEntry { vfn, pfn: r.pfn, perms: r.perms }.into();
            let colt = r.colt.map(|c| per_cu_form(c.into()));
            let iommu = match design {
                Design::FullColt => r.colt.map(TlbEntry::from).unwrap_or(page),
                _ => r.payload,
            };
            let per_cu = match design {
                Design::Baseline | Design::Mesc => page,
                Design::Thp if r.payload.kind() == EntryKind::LargePage => r.payload,
                Design::Thp => page,
                Design::Colt | Design::FullColt | Design::MescColt => colt.unwrap_or(page),
            };
            Insertions { iommu: Some(iommu), per_cu: Some(per_cu) }
        }
        Fill::IommuHit(h) => {
            let page: TlbEntry = RegularEntry { vfn, pfn: h.pfn(), perms: h.entry.perms() }.into();
            let per_cu = match (design, h.entry) {
                (Design::FullColt, e @ TlbEntry::Colt(_)) => per_cu_form(e),
                (Design::Thp, e @ TlbEntry::LargePage(_)) => e,
                _ => page,
            };
            Insertions { iommu: None, per_cu: Some(per_cu) }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Counters {
    events: u64,
    per_cu_hits: u64,
    iommu_lookups: u64,
    iommu_hits: u64,
    walks: u64,
    walk_memory_reads: u64,
    msc_lookups: u64,
    msc_hits: u64,
    histogram: [u64; 8],
    remapped_pages: u64,
    shootdowns: u64,
    per_cu: AccessCounts,
    iommu_regular: AccessCounts,
    iommu_subregion: AccessCounts,
}

/// A running simulation that owns its mapping, page table and every cache.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: DesignConfig,
    mapping: PageMapping,
    pt: PageTable,
    per_cu: Vec<PerCuTlb>,
    iommu: UnifiedTlb,
    msc: Msc,
    pwc: Pwc,
    pool: WalkerPool,
    scan: ScanStats,
    counters: Counters,
    latencies: Vec<u64>,
    digest: Sha256,
    now: u64,
    index: usize,
}

impl Simulator {
    /// Builds the page table for `mapping` and runs the contiguity scan.
    pub fn new(mapping: PageMapping, config: DesignConfig) -> Result<Self> {
        config.validate()?;
        let mut pt = PageTable::build_from_mapping(&mapping);
        let scan = pt.scan_contiguity();
        let d = config.design;
        Ok(Simulator {
            per_cu: (0..config.cus).map(|_| PerCuTlb::new(config.per_cu_entries)).collect(),
            iommu: UnifiedTlb::new(config.iommu_sets, config.iommu_ways, config.partition_split, d.uses_subregions()),
            msc: Msc::new(if d.uses_subregions() { config.msc_entries } else { 0 }, config.msc_ways),
            pwc: Pwc::new(config.pwc_bytes),
            pool: WalkerPool::new(config.walkers, config.pwb_depth),
            mapping,
            pt,
            scan,
            config,
            counters: Counters::default(),
            latencies: Vec::new(),
            digest: Sha256::new(),
            now: 0,
            index: 0,
        })
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn mapping(&self) -> &PageMapping {
        &self.mapping
    }

    pub fn page_table(&self) -> &PageTable {
        &self.pt
    }

    pub fn iommu(&self) -> &UnifiedTlb {
        &self.iommu
    }

    pub fn per_cu(&self, cu: usize) -> &PerCuTlb {
        &self.per_cu[cu]
    }

    pub fn msc_bitmap(&self, frame: Vsn) -> Option<Bitmap> {
        self.msc.peek(frame)
    }

    /// Translates one event. Times that go backwards are treated as now.
    pub fn translate(&mut self, ev: &TranslationEvent) -> Result<Outcome> {
        let index = self.index;
        self.index += 1;
        let outcome = self
            .translate_inner(ev, index)
            .map_err(|e| match e {
                e @ (Error::BadCu { .. } | Error::PwbOverflow { .. }) => e,
                e => Error::TraceFault { index, source: Box::new(e) },
            })?;
        let code = match outcome.served_by {
            ServedBy::PerCu => 0u8,
            ServedBy::Iommu(_) => 1,
            ServedBy::Walk => 2,
        };
        self.digest.update(b"T");
        self.digest.update((index as u64).to_le_bytes());
        self.digest.update([code]);
        self.digest.update(outcome.pa.0.to_le_bytes());
        self.digest.update(outcome.latency.to_le_bytes());
        self.latencies.push(outcome.latency);
        Ok(outcome)
    }

    fn translate_inner(&mut self, ev: &TranslationEvent, index: usize) -> Result<Outcome> {
        let cus = self.per_cu.len();
        if ev.cu as usize >= cus {
            return Err(Error::BadCu { index, cu: ev.cu, cus: cus as u32 });
        }
        let parts = decompose_va(ev.va)?;
        let vfn = parts.vfn;
        let lat = self.config.latency;
        self.now = self.now.max(ev.time);
        self.counters.events += 1;

        let cu = ev.cu as usize;
        self.counters.per_cu.reads += 1;
        if let Some((pfn, _)) = self.per_cu[cu].lookup(vfn) {
            self.counters.per_cu_hits += 1;
            return Ok(Outcome {
                pa: PhysAddr::new(pfn, parts.page_offset),
                served_by: ServedBy::PerCu,
                latency: lat.per_cu_hit,
            });
        }
        let mut latency = lat.per_cu_hit + lat.iommu_round_trip + lat.iommu_access;

        self.counters.iommu_lookups += 1;
        let look = self.iommu.iommu_lookup(ev.va);
        if look.subregion_probed {
            self.counters.iommu_subregion.reads += 1;
        }
        if look.regular_probed {
            self.counters.iommu_regular.reads += 1;
        }
        if let Some(hit) = look.hit {
            self.counters.iommu_hits += 1;
            let ins = apply_design(self.config.design, vfn, Fill::IommuHit(&hit));
            self.insert(cu, ins)?;
            return Ok(Outcome {
                pa: hit.pa,
                served_by: ServedBy::Iommu(hit.entry.kind()),
                latency,
            });
        }

        let r = walk_request(&self.pt, &mut self.msc, &mut self.pwc, ev.va, self.config.design)?;
        self.counters.walks += 1;
        self.counters.walk_memory_reads += r.memory_reads as u64;
        if let Some(hit) = r.msc_hit {
            self.counters.msc_lookups += 1;
            self.counters.msc_hits += hit as u64;
        }
        let start = self.pool.admit(self.now, r.memory_reads as u64 * lat.memory_read)?;
        latency += (start - self.now) + r.critical_reads as u64 * lat.memory_read;
        let ins = apply_design(self.config.design, vfn, Fill::Walk(&r));
        self.insert(cu, ins)?;
        Ok(Outcome {
            pa: PhysAddr::new(r.pfn, parts.page_offset),
            served_by: ServedBy::Walk,
            latency,
        })
    }

    fn insert(&mut self, cu: usize, ins: Insertions) -> Result<()> {
        if let Some(e) = ins.iommu {
            if let TlbEntry::Subregion(s) = e {
                self.counters.iommu_subregion.writes += 1;
                self.counters.histogram[s.length as usize] += 1;
            } else {
                self.counters.iommu_regular.writes += 1;
            }
            self.iommu.insert(e)?;
        }
        if let Some(e) = ins.per_cu {
            if self.per_cu[cu].capacity() > 0 {
                self.counters.per_cu.writes += 1;
            }
            self.per_cu[cu].insert(e);
        }
        Ok(())
    }

    /// Applies mapping changes and shoots down every cached translation they
    /// affect. Returns the number of TLB entries invalidated.
    pub fn remap(&mut self, changes: &[Change]) -> Result<usize> {
        let inv = self.pt.remap_pages(&mut self.mapping, changes)?;
        let mut n = self.iommu.invalidate(&inv);
        for t in &mut self.per_cu {
            n += t.invalidate(&inv);
        }
        for &frame in &inv.frames {
            self.msc.invalidate(frame)?;
        }
        self.counters.remapped_pages += inv.vfns.len() as u64;
        self.counters.shootdowns += n as u64;
        self.digest.update(b"R");
        for (vfn, pfn) in changes {
            self.digest.update(vfn.0.to_le_bytes());
            self.digest.update(pfn.map_or(u64::MAX, |p: Pfn| p.0).to_le_bytes());
        }
        Ok(n)
    }

    pub fn structure_counts(&self) -> StructureCounts {
        StructureCounts {
            per_cu: self.counters.per_cu,
            iommu_regular: self.counters.iommu_regular,
            iommu_subregion: self.counters.iommu_subregion,
            msc: self.msc.counts,
            pwc: self.pwc.counts,
            memory: AccessCounts { reads: self.counters.walk_memory_reads, writes: 0 },
        }
    }

    pub fn report(&self, seed: u64) -> Result<SimReport> {
        let c = &self.counters;
        let accesses = self.structure_counts();
        let mut samples = self.latencies.clone();
        let digest = self.digest.clone().finalize();
        Ok(SimReport {
            design: self.config.design,
            seed,
            events: c.events,
            per_cu_hits: c.per_cu_hits,
            per_cu_hit_ratio: ratio(c.per_cu_hits, c.events),
            iommu_lookups: c.iommu_lookups,
            iommu_hits: c.iommu_hits,
            iommu_hit_ratio: ratio(c.iommu_hits, c.iommu_lookups),
            walks: c.walks,
            walk_memory_reads: c.walk_memory_reads,
            msc_lookups: c.msc_lookups,
            msc_hits: c.msc_hits,
            msc_hit_ratio: ratio(c.msc_hits, c.msc_lookups),
            subregion_length_histogram: c.histogram,
            remapped_pages: c.remapped_pages,
            shootdown_invalidations: c.shootdowns,
            latency: LatencyStats::from_samples(&mut samples),
            energy: compute_energy(&accesses, &self.config.energy)?,
            accesses,
            scan: self.scan.into(),
            digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

/// Events in (time, position) order.
pub fn ordered(trace: &Trace) -> Vec<(usize, &TranslationEvent)> {
    let mut evs: Vec<(usize, &TranslationEvent)> = trace.events.iter().enumerate().collect();
    evs.sort_by_key(|&(i, e)| (e.time, i));
    evs
}

/// Replays `trace` over `mapping`. The engine itself is deterministic;
/// `seed` is recorded so reports of seeded inputs say where they came from.
pub fn run_trace(trace: &Trace, mapping: &PageMapping, config: &DesignConfig, seed: u64) -> Result<SimReport> {
    let mut sim = Simulator::new(mapping.clone(), config.clone())?;
    for (i, ev) in ordered(trace) {
        sim.index = i;
        sim.translate(ev)?;
    }
    sim.report(seed)
}
