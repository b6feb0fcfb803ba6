//! Memory subregion cache: one 7-bit bitmap per 2MB frame, where bit `i`
//! says subregions `i` and `i + 1` are both contiguous and physically
//! adjacent.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Vsn, SUBREGIONS_PER_FRAME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Bitmap(pub u8);

impl Bitmap {
    pub const FULL: Bitmap = Bitmap(0x7f);

    pub fn get(self, i: usize) -> bool {
        i < 7 && self.0 >> i & 1 != 0
    }
}

/// The maximal run of linked subregions containing `index`, as
/// (first subregion, subregion count - 1).
pub fn run_from_bitmap(bitmap: Bitmap, index: usize) -> (usize, u8) {
    debug_assert!(index < SUBREGIONS_PER_FRAME as usize);
    let mut first = index;
    while first > 0 && bitmap.get(first - 1) {
        first -= 1;
    }
    let mut last = index;
    while bitmap.get(last) {
        last += 1;
    }
    (first, (last - first) as u8)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AccessCounts {
    pub reads: u64,
    pub writes: u64,
}

#[derive(Debug, Clone)]
pub struct Msc {
    sets: usize,
    ways: usize,
    slots: Vec<Option<(Vsn, Bitmap)>>,
    stamps: Vec<u64>,
    clock: u64,
    pub counts: AccessCounts,
}

impl Msc {
    /// Zero entries disables the cache: every lookup misses.
    pub fn new(entries: usize, ways: usize) -> Self {
        let (sets, ways) = if entries == 0 { (0, 0) } else { (entries / ways, ways) };
        Msc {
            sets,
            ways,
            slots: vec![None; sets * ways],
            stamps: vec![0; sets * ways],
            clock: 0,
            counts: AccessCounts::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.sets * self.ways
    }

    fn set_of(&self, frame: Vsn) -> Result<std::ops::Range<usize>> {
        if !frame.is_frame_aligned() {
            return Err(Error::MisalignedFrame(frame));
        }
        if self.sets == 0 {
            return Ok(0..0);
        }
        let set = ((frame.0 / SUBREGIONS_PER_FRAME) % self.sets as u64) as usize;
        Ok(set * self.ways..(set + 1) * self.ways)
    }

    pub fn lookup(&mut self, frame: Vsn) -> Result<Option<Bitmap>> {
        let range = self.set_of(frame)?;
        self.counts.reads += 1;
        let Some(i) = range.clone().find(|&i| self.slots[i].is_some_and(|(f, _)| f == frame)) else {
            return Ok(None);
        };
        self.clock += 1;
        self.stamps[i] = self.clock;
        Ok(self.slots[i].map(|(_, b)| b))
    }

    pub fn insert(&mut self, frame: Vsn, bitmap: Bitmap) -> Result<()> {
        let range = self.set_of(frame)?;
        if range.is_empty() {
            return Ok(());
        }
        self.counts.writes += 1;
        let i = range
            .clone()
            .find(|&i| self.slots[i].is_some_and(|(f, _)| f == frame))
            .or_else(|| range.clone().find(|&i| self.slots[i].is_none()))
            .unwrap_or_else(|| range.min_by_key(|&i| self.stamps[i]).unwrap());
        self.slots[i] = Some((frame, bitmap));
        self.clock += 1;
        self.stamps[i] = self.clock;
        Ok(())
    }

    /// Looks without counting an access or touching LRU state.
    pub fn peek(&self, frame: Vsn) -> Option<Bitmap> {
        let range = self.set_of(frame).ok()?;
        range
            .filter_map(|i| self.slots[i])
            .find(|(f, _)| *f == frame)
            .map(|(_, b)| b)
    }

    /// Returns whether an entry was dropped.
    pub fn invalidate(&mut self, frame: Vsn) -> Result<bool> {
        let range = self.set_of(frame)?;
        for i in range {
            if self.slots[i].is_some_and(|(f, _)| f == frame) {
                self.slots[i] = None;
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn len(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
