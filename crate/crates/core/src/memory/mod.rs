//! Virtual-to-physical mappings: construction, ingestion and analysis.

pub mod analysis;
pub mod buddy;
pub mod mapping;
pub mod pagemap;

pub use analysis::{
    contiguity_histogram, runs, subregion_coverage, subregion_is_contiguous, BucketSpec,
    ContiguityHistogram, Run,
};
pub use buddy::{allocate_heap, allocate_heap_at, fragment_memory, BuddyState};
pub use mapping::{
    contiguous_mapping, huge_page_mapping, oracle_translate, split_frame_mapping, PageInfo,
    PageMapping,
};
pub use pagemap::{ingest_pagemap, parse_regions, serialize_pagemap, Region};
