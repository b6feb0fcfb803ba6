//! Address arithmetic shared by every part of the simulator.
//!
//! A 2MB virtual large page frame is split into eight fixed 64-page
//! subregions. Page, subregion and frame numbers are plain `u64` newtypes;
//! the bit layout below is fixed because the L2PTE contiguity bits and the
//! subregion TLB entry format both hard-code it.
//!
//! ```text
//!  47            21 20     18 17        12 11          0
//! +----------------+---------+------------+-------------+
//! |  frame number  | subreg. | page in sr |   offset    |
//! +----------------+---------+------------+-------------+
//!  \_______________ VSN ____/
//!  \________________________ VFN ________/
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAGE_SHIFT: u32 = 12;
pub const PAGE_SIZE: u64 = 1 << PAGE_SHIFT;
pub const SUBREGION_SHIFT: u32 = 6;
pub const SUBREGION_PAGES: u64 = 1 << SUBREGION_SHIFT;
pub const SUBREGIONS_PER_FRAME: u64 = 8;
pub const FRAME_SHIFT: u32 = 9;
pub const FRAME_PAGES: u64 = 1 << FRAME_SHIFT;
pub const IOMMU_SETS: u64 = 32;
pub const VA_BITS: u32 = 48;

/// The constant geometry table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Geometry {
    pub page_size: u64,
    pub subregion_pages: u64,
    pub subregions_per_frame: u64,
    pub frame_pages: u64,
    pub iommu_sets: u64,
}

pub const GEOMETRY: Geometry = Geometry {
    page_size: PAGE_SIZE,
    subregion_pages: SUBREGION_PAGES,
    subregions_per_frame: SUBREGIONS_PER_FRAME,
    frame_pages: FRAME_PAGES,
    iommu_sets: IOMMU_SETS,
};

const _: () = assert!(SUBREGION_PAGES * SUBREGIONS_PER_FRAME == FRAME_PAGES);
const _: () = assert!(PAGE_SIZE * FRAME_PAGES == 2 << 20);

macro_rules! number {
    ($(#[$m:meta])* $name:ident, $prefix:literal) => {
        $(#[$m])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, " {:#x}"), self.0)
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                $name(v)
            }
        }
    };
}

number!(
    /// A virtual byte address.
    VirtAddr, "VA"
);
number!(
    /// A physical byte address.
    PhysAddr, "PA"
);
number!(
    /// Virtual frame (page) number: `va >> 12`.
    Vfn, "VFN"
);
number!(
    /// Physical frame (page) number.
    Pfn, "PFN"
);
number!(
    /// Virtual subregion number: `vfn >> 6`.
    Vsn, "VSN"
);

impl VirtAddr {
    /// Canonical when bits 63..47 are all copies of bit 47.
    pub fn is_canonical(self) -> bool {
        let top = (self.0 as i64) >> (VA_BITS - 1);
        top == 0 || top == -1
    }

    pub fn vfn(self) -> Vfn {
        Vfn(self.0 >> PAGE_SHIFT)
    }

    pub fn page_offset(self) -> u64 {
        self.0 & (PAGE_SIZE - 1)
    }
}

impl PhysAddr {
    pub fn new(pfn: Pfn, offset: u64) -> Self {
        debug_assert!(offset < PAGE_SIZE);
        PhysAddr((pfn.0 << PAGE_SHIFT) | offset)
    }

    pub fn pfn(self) -> Pfn {
        Pfn(self.0 >> PAGE_SHIFT)
    }
}

impl Vfn {
    pub fn addr(self) -> VirtAddr {
        VirtAddr(self.0 << PAGE_SHIFT)
    }

    pub fn vsn(self) -> Vsn {
        Vsn(self.0 >> SUBREGION_SHIFT)
    }

    /// First page of the enclosing 2MB frame.
    pub fn frame_base(self) -> Vfn {
        Vfn(self.0 & !(FRAME_PAGES - 1))
    }

    /// First page of the enclosing subregion.
    pub fn subregion_base(self) -> Vfn {
        Vfn(self.0 & !(SUBREGION_PAGES - 1))
    }

    /// Index of the enclosing subregion within its frame, in `0..8`.
    pub fn subregion_index(self) -> usize {
        self.vsn().index_in_frame()
    }

    pub fn offset(self, pages: u64) -> Vfn {
        Vfn(self.0 + pages)
    }
}

impl Pfn {
    pub fn offset(self, pages: u64) -> Pfn {
        Pfn(self.0 + pages)
    }
}

impl Vsn {
    /// First page of this subregion.
    pub fn base_vfn(self) -> Vfn {
        Vfn(self.0 << SUBREGION_SHIFT)
    }

    pub fn index_in_frame(self) -> usize {
        (self.0 % SUBREGIONS_PER_FRAME) as usize
    }

    /// VSN of subregion 0 of the enclosing frame.
    pub fn frame_base(self) -> Vsn {
        Vsn(self.0 & !(SUBREGIONS_PER_FRAME - 1))
    }

    pub fn is_frame_aligned(self) -> bool {
        self.0.is_multiple_of(SUBREGIONS_PER_FRAME)
    }
}

/// Page permissions. Coalescing requires equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Permissions {
    pub readable: bool,
    pub writable: bool,
    pub executable: bool,
    pub user: bool,
}

impl Permissions {
    pub const RW_USER: Permissions = Permissions {
        readable: true,
        writable: true,
        executable: false,
        user: true,
    };
    pub const RO_USER: Permissions = Permissions {
        readable: true,
        writable: false,
        executable: false,
        user: true,
    };

    pub fn bits(self) -> u8 {
        self.readable as u8
            | (self.writable as u8) << 1
            | (self.executable as u8) << 2
            | (self.user as u8) << 3
    }

    pub fn from_bits(bits: u8) -> Self {
        Permissions {
            readable: bits & 1 != 0,
            writable: bits & 2 != 0,
            executable: bits & 4 != 0,
            user: bits & 8 != 0,
        }
    }
}

/// The fields of a virtual address used by the translation structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaParts {
    pub vfn: Vfn,
    pub vsn: Vsn,
    pub frame_base_vfn: Vfn,
    pub subregion_index: usize,
    pub page_offset: u64,
}

impl VaParts {
    pub fn recompose(&self) -> VirtAddr {
        VirtAddr((self.vfn.0 << PAGE_SHIFT) | self.page_offset)
    }
}

pub fn decompose_va(va: VirtAddr) -> Result<VaParts> {
    if !va.is_canonical() {
        return Err(Error::NonCanonical(va));
    }
    let vfn = va.vfn();
    Ok(VaParts {
        vfn,
        vsn: vfn.vsn(),
        frame_base_vfn: vfn.frame_base(),
        subregion_index: vfn.subregion_index(),
        page_offset: va.page_offset(),
    })
}

/// Regular-entry set: VFN bits [4:0] (VA bits 16..12).
pub fn regular_set_index(vfn: Vfn) -> usize {
    regular_set_index_in(vfn, IOMMU_SETS)
}

/// Subregion-entry set: VSN bits [7:3] (VA bits 25..21), so every subregion
/// of one frame shares a set and adjacent frames land in adjacent sets.
pub fn subregion_set_index(vsn: Vsn) -> usize {
    subregion_set_index_in(vsn, IOMMU_SETS)
}

pub fn regular_set_index_in(vfn: Vfn, sets: u64) -> usize {
    (vfn.0 % sets) as usize
}

pub fn subregion_set_index_in(vsn: Vsn, sets: u64) -> usize {
    ((vsn.0 >> 3) % sets) as usize
}
