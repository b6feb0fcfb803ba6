//! Independent brute-force oracles and randomized inputs shared by the
//! integration tests. Nothing here calls the library's own contiguity
//! analysis.
#![allow(dead_code)]

use std::io::Write;

use mesc_sim::geometry::{Permissions, Pfn, VirtAddr, Vfn};
use mesc_sim::memory::{allocate_heap_at, fragment_memory, BuddyState, PageMapping};
use mesc_sim::workloads::{Access, Trace, TranslationEvent};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SUB: u64 = 64;
pub const FRAME: u64 = 512;

/// Writes straight to the process stdout so the line shows even when the
/// harness captures test output.
pub fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    let line = format!(
        "criterion {id:>2} [{}] {name}: {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "criterion {id} failed: {name}: {detail}");
}

/// `count` pages from `start` are present, physically consecutive and share
/// one permission set.
pub fn bf_run(m: &PageMapping, start: Vfn, count: u64) -> bool {
    let Some(head) = m.get(start) else {
        return false;
    };
    (0..count).all(|j| {
        m.get(Vfn(start.0 + j))
            .is_some_and(|p| p.pfn.0 == head.pfn.0 + j && p.perms == head.perms)
    })
}

pub fn bf_c_bits(m: &PageMapping, frame: Vfn) -> u8 {
    (0..8).fold(0, |acc, s| acc | (bf_run(m, Vfn(frame.0 + s * SUB), SUB) as u8) << s)
}

pub fn bf_ac(m: &PageMapping, frame: Vfn) -> bool {
    bf_run(m, frame, FRAME)
}

/// Bit i: subregions i and i + 1 form one 128-page run.
pub fn bf_bitmap(m: &PageMapping, frame: Vfn) -> u8 {
    (0..7).fold(0, |acc, i| acc | (bf_run(m, Vfn(frame.0 + i * SUB), 2 * SUB) as u8) << i)
}

/// Hands out physical frames in increasing order.
pub struct PfnCursor(pub u64);

impl PfnCursor {
    pub fn take(&mut self, n: u64) -> u64 {
        let p = self.0;
        self.0 += n;
        p
    }
}

fn other(p: Permissions) -> Permissions {
    if p == Permissions::RW_USER {
        Permissions::RO_USER
    } else {
        Permissions::RW_USER
    }
}

/// Maps one 2MB frame with a random mix of subregion shapes: adjacent
/// runs, runs after a physical gap, scattered pages, holes, single-page
/// permission flips, uniformly different permissions, swapped pages and
/// empty subregions. A quarter of frames are fully adjacent.
pub fn random_frame(rng: &mut ChaCha8Rng, m: &mut PageMapping, frame: Vfn, pfns: &mut PfnCursor) {
    let perms = if rng.gen_bool(0.1) { Permissions::RO_USER } else { Permissions::RW_USER };
    let all_adjacent = rng.gen_bool(0.25);
    pfns.take(rng.gen_range(1..64));
    for s in 0..8 {
        let base = Vfn(frame.0 + s * SUB);
        let kind = if all_adjacent {
            if rng.gen_bool(0.05) { 5 } else { 0 }
        } else {
            *[0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 3, 3, 4, 4, 5, 6, 6, 7]
                .choose(rng)
                .unwrap()
        };
        if kind == 1 {
            pfns.take(rng.gen_range(1..200));
        }
        let mut pages: Vec<(u64, Permissions)> = match kind {
            2 => (0..SUB).map(|_| (pfns.take(2), perms)).collect(),
            5 => {
                let p = pfns.take(SUB);
                (0..SUB).map(|j| (p + j, other(perms))).collect()
            }
            7 => Vec::new(),
            _ => {
                let p = pfns.take(SUB);
                (0..SUB).map(|j| (p + j, perms)).collect()
            }
        };
        let j = rng.gen_range(0..SUB as usize);
        match kind {
            4 => pages[j].1 = other(perms),
            6 => {
                let k = (j + rng.gen_range(1..SUB as usize)) % SUB as usize;
                let (a, b) = (pages[j].0, pages[k].0);
                pages[j].0 = b;
                pages[k].0 = a;
            }
            _ => {}
        }
        for (i, &(pfn, p)) in pages.iter().enumerate() {
            if kind == 3 && i == j {
                continue;
            }
            m.map(Vfn(base.0 + i as u64), Pfn(pfn), p).unwrap();
        }
    }
}

/// `frames` random frames at consecutive 2MB-aligned VFNs from `first`.
pub fn random_frames(seed: u64, first: Vfn, frames: u64) -> (PageMapping, Vec<Vfn>) {
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let mut m = PageMapping::new();
    let mut pfns = PfnCursor(0x100000);
    let bases: Vec<Vfn> = (0..frames).map(|f| Vfn(first.0 + f * FRAME)).collect();
    for &b in &bases {
        random_frame(&mut rng, &mut m, b, &mut pfns);
    }
    (m, bases)
}

/// A fragmented buddy heap, optionally with permission flips and a block of
/// hand-shaped frames (some in the upper canonical half).
pub fn fragmented_mapping(rng: &mut ChaCha8Rng, with_frames: bool) -> PageMapping {
    let buddy = BuddyState::new(1 << 15, 10, rng.gen())
        .unwrap()
        .with_allocation_noise(rng.gen_range(0.0..0.01))
        .unwrap()
        .with_pin_max_order(rng.gen_range(3..=8));
    let mut buddy = fragment_memory(buddy, rng.gen_range(0.1..0.7), rng.gen()).unwrap();
    let base = Vfn(0x80000 + rng.gen_range(0..FRAME));
    let pages = rng.gen_range(2048..6000);
    let mut m = allocate_heap_at(base, pages, &mut buddy).unwrap();
    let vfns: Vec<Vfn> = m.vfns().collect();
    for _ in 0..pages / 100 {
        let v = *vfns.choose(rng).unwrap();
        m.set_perms(v, Permissions::RO_USER).unwrap();
    }
    if rng.gen_bool(0.5) {
        let sub = vfns.choose(rng).unwrap().0 & !(SUB - 1);
        for v in sub..sub + SUB {
            if m.get(Vfn(v)).is_some() {
                m.set_perms(Vfn(v), Permissions::RO_USER).unwrap();
            }
        }
    }
    if with_frames {
        let mut pfns = PfnCursor(1 << 20);
        for f in 0..8 {
            random_frame(rng, &mut m, Vfn(0x200000 + f * FRAME), &mut pfns);
        }
        // VA 0xffff_8000_0000_0000 and up
        let high = VirtAddr(0xffff_8000_0000_0000).vfn();
        for f in 0..4 {
            random_frame(rng, &mut m, Vfn(high.0 + f * FRAME), &mut pfns);
        }
    }
    m
}

/// `n` accesses over `m`: random mapped pages, sequential stretches, and a
/// few addresses that may be unmapped.
pub fn mixed_trace(rng: &mut ChaCha8Rng, m: &PageMapping, n: usize, cus: u32) -> Trace {
    let vfns: Vec<Vfn> = m.vfns().collect();
    let mut cur = vfns[0];
    let events = (0..n)
        .map(|i| {
            let r: f64 = rng.gen();
            cur = if r < 0.5 {
                *vfns.choose(rng).unwrap()
            } else if r < 0.9 {
                Vfn(cur.0 + 1)
            } else {
                Vfn(vfns.choose(rng).unwrap().0.wrapping_add(rng.gen_range(0..1024)))
            };
            let va = VirtAddr((cur.0 << 12 | rng.gen_range(0..4096u64)) & ((1 << 48) - 1));
            let va = VirtAddr(((va.0 << 16) as i64 >> 16) as u64);
            TranslationEvent {
                time: (i as u64) / cus as u64,
                cu: i as u32 % cus,
                va,
                access: if rng.gen_bool(0.25) { Access::Write } else { Access::Read },
            }
        })
        .collect();
    Trace::new(events)
}
