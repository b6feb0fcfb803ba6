//! A buddy allocator over simulated physical memory, used to produce heap
//! mappings with realistic contiguity.
//!
//! Two knobs shape the result. `fragment_memory` pins a fraction of physical
//! memory in randomly placed, randomly sized buddy blocks before the heap is
//! allocated (a memory hog running alongside). `allocation_noise` is the
//! per-page probability that a heap page comes from a random free page
//! instead of the current buddy block, modelling an aged free list.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Permissions, Pfn, Vfn};
use crate::memory::mapping::PageMapping;

pub const DEFAULT_MAX_ORDER: u32 = 10;
/// Largest block a single fragmenting pin grabs (order 6 = one subregion).
pub const DEFAULT_PIN_MAX_ORDER: u32 = 6;
/// Heap base used when the caller does not pick one: VA 0x8000_0000.
pub const DEFAULT_HEAP_BASE: Vfn = Vfn(0x80000);

#[derive(Debug, Clone)]
pub struct BuddyState {
    total_pages: u64,
    max_order: u32,
    free: Vec<BTreeSet<u64>>,
    free_pages: u64,
    allocation_noise: f64,
    pin_max_order: u32,
    defrag: bool,
    rng: ChaCha8Rng,
}

impl BuddyState {
    /// `total_pages` must be a positive multiple of the max-order block size.
    pub fn new(total_pages: u64, max_order: u32, seed: u64) -> Result<Self> {
        let block = 1u64 << max_order;
        if total_pages == 0 || !total_pages.is_multiple_of(block) {
            return Err(Error::BadBuddy(format!(
                "{total_pages} pages is not a positive multiple of the order-{max_order} block ({block} pages)"
            )));
        }
        let mut free = vec![BTreeSet::new(); max_order as usize + 1];
        free[max_order as usize] = (0..total_pages).step_by(block as usize).collect();
        Ok(BuddyState {
            total_pages,
            max_order,
            free,
            free_pages: total_pages,
            allocation_noise: 0.0,
            pin_max_order: DEFAULT_PIN_MAX_ORDER.min(max_order),
            defrag: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_allocation_noise(mut self, level: f64) -> Result<Self> {
        check_fraction(level)?;
        self.allocation_noise = level;
        Ok(self)
    }

    pub fn with_defrag(mut self, defrag: bool) -> Self {
        self.defrag = defrag;
        self
    }

    pub fn with_pin_max_order(mut self, order: u32) -> Self {
        self.pin_max_order = order.min(self.max_order);
        self
    }

    pub fn total_pages(&self) -> u64 {
        self.total_pages
    }

    pub fn free_pages(&self) -> u64 {
        self.free_pages
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn allocation_noise(&self) -> f64 {
        self.allocation_noise
    }

    /// Free blocks per order, as `(order, base pfn)`.
    pub fn free_blocks(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.free
            .iter()
            .enumerate()
            .flat_map(|(o, set)| set.iter().map(move |&b| (o as u32, b)))
    }

    pub fn largest_free_order(&self) -> Option<u32> {
        (0..=self.max_order)
            .rev()
            .find(|&o| !self.free[o as usize].is_empty())
    }

    fn containing_free_block(&self, pfn: u64) -> Option<(u64, u32)> {
        (0..=self.max_order).find_map(|o| {
            let base = pfn & !((1u64 << o) - 1);
            self.free[o as usize].contains(&base).then_some((base, o))
        })
    }

    pub fn is_free(&self, pfn: u64) -> bool {
        self.containing_free_block(pfn).is_some()
    }

    /// Removes free block `(base, order)` and splits it down until the
    /// aligned block `(target, target_order)` is carved out; the other
    /// halves go back on the free lists.
    fn carve(&mut self, mut base: u64, mut order: u32, target: u64, target_order: u32) {
        let removed = self.free[order as usize].remove(&base);
        debug_assert!(removed);
        while order > target_order {
            order -= 1;
            let half = 1u64 << order;
            let (keep, spare) = if target >= base + half {
                (base + half, base)
            } else {
                (base, base + half)
            };
            self.free[order as usize].insert(spare);
            base = keep;
        }
        debug_assert_eq!(base, target);
        self.free_pages -= 1u64 << target_order;
    }

    /// Allocates every still-free page of the aligned block `(base, order)`.
    /// Returns how many pages were newly taken.
    pub fn reserve(&mut self, base: u64, order: u32) -> u64 {
        debug_assert_eq!(base % (1u64 << order), 0);
        if let Some((b, o)) = self.containing_free_block(base) {
            if o >= order {
                self.carve(b, o, base, order);
                return 1u64 << order;
            }
        }
        if order == 0 {
            return 0;
        }
        let half = 1u64 << (order - 1);
        self.reserve(base, order - 1) + self.reserve(base + half, order - 1)
    }

    /// Lowest-addressed block of the smallest order that can satisfy `order`.
    pub fn alloc_block(&mut self, order: u32) -> Option<u64> {
        let o = (order..=self.max_order).find(|&o| !self.free[o as usize].is_empty())?;
        let base = *self.free[o as usize].first()?;
        self.carve(base, o, base, order);
        Some(base)
    }

    pub fn free_block(&mut self, mut base: u64, mut order: u32) {
        self.free_pages += 1u64 << order;
        while order < self.max_order {
            let buddy = base ^ (1u64 << order);
            if !self.free[order as usize].remove(&buddy) {
                break;
            }
            base = base.min(buddy);
            order += 1;
        }
        self.free[order as usize].insert(base);
    }

    fn random_free_page(&mut self) -> Option<u64> {
        for _ in 0..64 {
            let pfn = self.rng.gen_range(0..self.total_pages);
            if self.reserve(pfn, 0) == 1 {
                return Some(pfn);
            }
        }
        self.alloc_block(0)
    }

    /// Occupied page count of every max-order block.
    fn block_occupancy(&self) -> Vec<u64> {
        let block = 1u64 << self.max_order;
        let mut occupied = vec![block; (self.total_pages / block) as usize];
        for (o, b) in self.free_blocks() {
            occupied[(b / block) as usize] -= 1u64 << o;
        }
        occupied
    }

    /// Migrates occupied pages out of the emptiest max-order blocks into the
    /// fullest ones, moving at most `budget` pages. Returns pages moved.
    pub fn compact(&mut self, budget: u64) -> u64 {
        let block = 1u64 << self.max_order;
        let occupancy = self.block_occupancy();
        let mut order: Vec<usize> = (0..occupancy.len())
            .filter(|&i| occupancy[i] > 0 && occupancy[i] < block)
            .collect();
        order.sort_by_key(|&i| (occupancy[i], i));
        let (mut lo, mut hi) = (0usize, order.len());
        let mut moved = 0;
        while lo + 1 < hi && moved < budget {
            let src = order[lo] as u64 * block;
            let dst = order[hi - 1] as u64 * block;
            let mut progressed = false;
            for page in src..src + block {
                if moved >= budget {
                    break;
                }
                if self.is_free(page) {
                    continue;
                }
                let Some(target) = (dst..dst + block).find(|&p| self.is_free(p)) else {
                    break;
                };
                self.reserve(target, 0);
                self.free_block(page, 0);
                moved += 1;
                progressed = true;
            }
            if (dst..dst + block).all(|p| !self.is_free(p)) {
                hi -= 1;
            } else if (src..src + block).all(|p| self.is_free(p)) || !progressed {
                lo += 1;
            }
        }
        moved
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(Error::BadFraction(f))
    }
}

/// Pins `fraction` of physical memory in random buddy blocks of order
/// `0..=pin_max_order`, seeded. With defrag enabled the pinned pages are
/// then partially compacted (one eighth of them may migrate).
pub fn fragment_memory(mut buddy: BuddyState, fraction: f64, seed: u64) -> Result<BuddyState> {
    check_fraction(fraction)?;
    let target = (fraction * buddy.total_pages as f64).round() as u64;
    if target == 0 {
        return Ok(buddy);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pinned = 0u64;
    let mut misses = 0u32;
    while pinned < target && buddy.free_pages > 0 {
        let left = target - pinned;
        let cap = (63 - left.leading_zeros()).min(buddy.pin_max_order);
        let order = rng.gen_range(0..=cap);
        let blocks = buddy.total_pages >> order;
        let base = rng.gen_range(0..blocks) << order;
        let got = buddy.reserve(base, order);
        if got == 0 {
            misses += 1;
            if misses > 10_000 {
                buddy.alloc_block(0);
                pinned += 1;
            }
        } else {
            misses = 0;
            pinned += got;
        }
    }
    if buddy.defrag {
        buddy.compact(pinned / 8);
    }
    Ok(buddy)
}

pub fn allocate_heap(total_pages: u64, buddy: &mut BuddyState) -> Result<PageMapping> {
    allocate_heap_at(DEFAULT_HEAP_BASE, total_pages, buddy)
}

/// Pages until the next noisy page, drawn from a geometric distribution
/// with per-page probability `p`.
fn clean_gap(rng: &mut ChaCha8Rng, p: f64) -> u64 {
    if p <= 0.0 {
        return u64::MAX;
    }
    if p >= 1.0 {
        return 0;
    }
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let k = (u.ln() / (1.0 - p).ln()).floor();
    if k >= u64::MAX as f64 { u64::MAX } else { k as u64 }
}

/// Allocates a heap of `total_pages` at ascending VFNs from `base`, taking
/// the largest buddy block that fits at each step. Each page is
/// independently replaced by a scattered single page with probability
/// `allocation_noise`.
pub fn allocate_heap_at(base: Vfn, total_pages: u64, buddy: &mut BuddyState) -> Result<PageMapping> {
    if total_pages > buddy.free_pages {
        return Err(Error::OutOfMemory {
            requested: total_pages,
            free: buddy.free_pages,
        });
    }
    let mut m = PageMapping::new();
    let mut vfn = base;
    let mut remaining = total_pages;
    let noise = buddy.allocation_noise;
    let mut clean = clean_gap(&mut buddy.rng, noise);
    while remaining > 0 {
        let (pfn, pages) = if clean == 0 {
            clean = clean_gap(&mut buddy.rng, noise);
            (buddy.random_free_page().expect("free pages were counted"), 1)
        } else {
            let want = remaining.min(clean);
            let cap = (63 - want.leading_zeros()).min(buddy.max_order);
            let order = cap.min(buddy.largest_free_order().expect("free pages were counted"));
            clean = clean.saturating_sub(1u64 << order);
            (buddy.alloc_block(order).expect("order is available"), 1u64 << order)
        };
        for i in 0..pages {
            m.map(vfn.offset(i), Pfn(pfn + i), Permissions::RW_USER)?;
        }
        vfn = vfn.offset(pages);
        remaining -= pages;
    }
    Ok(m)
}
