//! Trace-driven simulation of GPU address translation with memory
//! subregion coalescing (MESC).
//!
//! A 2MB virtual frame is split into eight 64-page subregions. The OS marks
//! physically contiguous subregions with C bits in the L2 page table entry,
//! and the IOMMU TLB holds one entry per run of adjacent contiguous
//! subregions, so up to 512 pages share a single entry. The simulator
//! replays translation traces against that design and five reference
//! designs (baseline, THP, CoLT, full CoLT, MESC+CoLT) and reports hit
//! ratios, walk traffic, latency and dynamic energy.
//!
//! Layout:
//! * [`memory`]: mappings, the buddy allocator, pagemap ingestion, analysis.
//! * [`page_table`]: the four-level radix table with contiguity bits.
//! * [`tlb`]: entry formats, the way-partitioned IOMMU TLB, per-CU TLBs.
//! * [`walker`]: page walks, the page walk cache, the subregion cache, walkers.
//! * [`engine`]: the event loop, reports, energy and sweeps.
//! * [`workloads`]: trace generators and the trace text format.

pub mod cli;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod memory;
pub mod page_table;
pub mod tlb;
pub mod walker;
pub mod workloads;

pub use engine::{run_trace, Design, DesignConfig, SimReport, Simulator};
pub use error::{Error, Result};
pub use memory::{oracle_translate, PageMapping};
pub use workloads::{Trace, TranslationEvent};
