//! Page walk cache for the L4, L3 and L2 levels, keyed by PTE address.

use std::collections::{BTreeMap, HashMap};

use crate::geometry::PhysAddr;
use crate::page_table::{Level, WalkRead};
use crate::walker::msc::AccessCounts;

const PTE_BYTES: usize = 8;

#[derive(Debug, Clone)]
pub struct Pwc {
    capacity: usize,
    stamp_of: HashMap<PhysAddr, u64>,
    by_stamp: BTreeMap<u64, PhysAddr>,
    clock: u64,
    pub counts: AccessCounts,
}

impl Pwc {
    pub fn new(bytes: usize) -> Self {
        Pwc {
            capacity: bytes / PTE_BYTES,
            stamp_of: HashMap::new(),
            by_stamp: BTreeMap::new(),
            clock: 0,
            counts: AccessCounts::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.stamp_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamp_of.is_empty()
    }

    pub fn contains(&self, addr: PhysAddr) -> bool {
        self.stamp_of.contains_key(&addr)
    }

    fn touch(&mut self, addr: PhysAddr) {
        self.clock += 1;
        if let Some(old) = self.stamp_of.insert(addr, self.clock) {
            self.by_stamp.remove(&old);
        } else {
            self.counts.writes += 1;
            if self.stamp_of.len() > self.capacity {
                let (_, victim) = self.by_stamp.pop_first().unwrap();
                self.stamp_of.remove(&victim);
            }
        }
        self.by_stamp.insert(self.clock, addr);
    }

    /// Filters the upper-level reads of one walk: the deepest cached level
    /// lets the walk skip it and everything above. Returns the reads that
    /// still go to memory. L1 reads pass through untouched.
    pub fn access(&mut self, reads: &[WalkRead]) -> Vec<WalkRead> {
        let upper: Vec<&WalkRead> = reads.iter().filter(|r| r.level != Level::L1).collect();
        let mut out: Vec<WalkRead> = Vec::with_capacity(reads.len());
        if self.capacity == 0 {
            return reads.to_vec();
        }
        self.counts.reads += 1;
        let deepest_hit = upper.iter().rposition(|r| self.contains(r.addr));
        let skip = deepest_hit.map_or(0, |i| i + 1);
        if let Some(i) = deepest_hit {
            self.touch(upper[i].addr);
        }
        for r in &upper[skip..] {
            out.push(**r);
            self.touch(r.addr);
        }
        out.extend(reads.iter().filter(|r| r.level == Level::L1));
        out
    }
}
