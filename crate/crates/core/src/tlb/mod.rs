//! Translation caches: per-CU L1 TLBs and the unified IOMMU TLB.

pub mod entry;
pub mod per_cu;
pub mod unified;

pub use entry::{
    coverage_bounds, ColtEntry, EntryKind, LargePageEntry, RegularEntry, SubregionEntry, TlbEntry,
    COLT_BLOCK,
};
pub use per_cu::PerCuTlb;
pub use unified::{IommuHit, IommuLookup, UnifiedTlb};
