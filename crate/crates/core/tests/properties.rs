mod common;

use common::*;
use mesc_sim::engine::{Design, DesignConfig, Simulator};
use mesc_sim::geometry::{Pfn, VirtAddr, Vfn};
use mesc_sim::memory::{oracle_translate, PageMapping};
use mesc_sim::page_table::PageTable;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scanned(m: &PageMapping) -> PageTable {
    let mut pt = PageTable::build_from_mapping(m);
    pt.scan_contiguity();
    pt
}

/// Every cached entry agrees with the mapping on every page it covers.
fn entries_valid(sim: &Simulator, m: &PageMapping) -> Result<(), String> {
    let per_cu = (0..sim.config().cus).flat_map(|cu| sim.per_cu(cu).entries().copied().collect::<Vec<_>>());
    for e in sim.iommu().entries().map(|(_, _, e)| e).chain(per_cu) {
        let (lo, hi) = e.bounds();
        for v in lo.0..=hi.0 {
            let want = m.get(Vfn(v)).map(|p| (p.pfn, p.perms));
            if want != Some((e.translate(Vfn(v)).unwrap(), e.perms())) {
                return Err(format!("{e:?} disagrees at {:#x}: mapping has {want:?}", v));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn walk_matches_oracle(seed in any::<u64>()) {
        let (m, frames) = random_frames(seed, Vfn(0x40000), 4);
        let pt = scanned(&m);
        for f in frames {
            for j in 0..FRAME {
                let va = VirtAddr((f.0 + j) << 12 | 0xabc);
                let walk = pt.walk(va).ok().map(|w| w.pfn);
                let oracle = oracle_translate(&m, va).ok().map(|pa| pa.pfn());
                prop_assert_eq!(walk, oracle);
            }
        }
    }

    #[test]
    fn ac_implies_contiguous_walks(seed in any::<u64>()) {
        let (m, frames) = random_frames(seed, Vfn(0x40000), 8);
        let pt = scanned(&m);
        for f in frames {
            if pt.l2_entry(f).unwrap().ac {
                let head = pt.walk(VirtAddr(f.0 << 12)).unwrap().pfn;
                for j in 0..FRAME {
                    prop_assert_eq!(pt.walk(VirtAddr((f.0 + j) << 12)).unwrap().pfn, Pfn(head.0 + j));
                }
            }
        }
    }

    #[test]
    fn incremental_rescan_is_a_fixed_point(seed in any::<u64>(), batches in 1usize..20) {
        let (mut m, frames) = random_frames(seed, Vfn(0x40000), 4);
        let mut pt = scanned(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut fresh = PfnCursor(1 << 30);
        let vfns: Vec<Vfn> = m.vfns().collect();
        for _ in 0..batches {
            let mut changes = std::collections::BTreeMap::new();
            for _ in 0..rng.gen_range(1..80) {
                let v = *vfns.choose(&mut rng).unwrap();
                if m.get(v).is_some() {
                    let to = if rng.gen_bool(0.1) { None } else { Some(Pfn(fresh.take(1))) };
                    changes.insert(v, to);
                }
            }
            let changes: Vec<(Vfn, Option<Pfn>)> = changes.into_iter().collect();
            pt.remap_pages(&mut m, &changes).unwrap();
        }
        let rebuilt = scanned(&m);
        for f in frames {
            prop_assert_eq!(pt.l2_entry(f), rebuilt.l2_entry(f));
            if let Some(l2) = pt.l2_entry(f) {
                prop_assert_eq!(l2.c_bits.0, bf_c_bits(&m, f));
                prop_assert_eq!(l2.ac, bf_ac(&m, f));
            }
        }
    }
}

#[test]
fn cached_entries_cover_only_matching_pages() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for round in 0..4 {
        let m = fragmented_mapping(&mut rng, true);
        let trace = mixed_trace(&mut rng, &m, 4000, 16);
        for &d in &Design::ALL {
            let mut sim = Simulator::new(m.clone(), DesignConfig::with_design(d)).unwrap();
            for ev in &trace.events {
                let _ = sim.translate(ev);
            }
            if let Err(e) = entries_valid(&sim, &m) {
                panic!("round {round}, {}: {e}", d.name());
            }
        }
    }
}

#[test]
fn entries_stay_valid_across_remaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let (m, _) = random_frames(78, Vfn(0x40000), 16);
    let vfns: Vec<Vfn> = m.vfns().collect();
    for &d in &[Design::Mesc, Design::MescColt, Design::FullColt, Design::Thp] {
        let mut sim = Simulator::new(m.clone(), DesignConfig::with_design(d)).unwrap();
        let mut fresh = PfnCursor(1 << 30);
        for step in 0..300 {
            for k in 0..20 {
                let v = *vfns.choose(&mut rng).unwrap();
                let ev = mesc_sim::TranslationEvent {
                    time: step * 20 + k,
                    cu: (k % 16) as u32,
                    va: VirtAddr(v.0 << 12),
                    access: mesc_sim::workloads::Access::Read,
                };
                let _ = sim.translate(&ev);
            }
            let v = *vfns.choose(&mut rng).unwrap();
            if sim.mapping().get(v).is_some() {
                sim.remap(&[(v, Some(Pfn(fresh.take(1))))]).unwrap();
            }
            let current = sim.mapping().clone();
            entries_valid(&sim, &current).unwrap_or_else(|e| panic!("{} step {step}: {e}", d.name()));
        }
    }
}

#[test]
fn counters_are_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let m = fragmented_mapping(&mut rng, false);
    let trace = mixed_trace(&mut rng, &m, 5000, 16);
    let trace = mesc_sim::Trace::new(
        trace.events.into_iter().filter(|e| oracle_translate(&m, e.va).is_ok()).collect(),
    );
    for &d in &Design::ALL {
        let r = mesc_sim::run_trace(&trace, &m, &DesignConfig::with_design(d), 0).unwrap();
        assert_eq!(r.events, trace.len() as u64);
        assert_eq!(r.per_cu_hits + r.iommu_lookups, r.events, "{}", d.name());
        assert_eq!(r.iommu_hits + r.walks, r.iommu_lookups, "{}", d.name());
        assert!(r.walk_memory_reads >= r.walks);
        let inserted: u64 = r.subregion_length_histogram.iter().sum();
        if !d.uses_subregions() {
            assert_eq!(inserted, 0);
        }
    }
}
