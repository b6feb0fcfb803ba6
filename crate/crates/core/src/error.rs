use std::path::PathBuf;

use crate::geometry::{Pfn, VirtAddr, Vfn, Vsn};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("virtual address {0} is not in 48-bit canonical form")]
    NonCanonical(VirtAddr),

    #[error("page fault: {va} not present (missing at {level})")]
    Fault { va: VirtAddr, level: &'static str },

    #[error("physical frame {pfn} already backs {existing}")]
    PfnInUse { pfn: Pfn, existing: Vfn },

    #[error("cannot remap {0}: page is not mapped")]
    NotMapped(Vfn),

    #[error("out of simulated physical memory ({requested} pages requested, {free} free)")]
    OutOfMemory { requested: u64, free: u64 },

    #[error("fraction {0} is outside [0, 1]")]
    BadFraction(f64),

    #[error("invalid buddy configuration: {0}")]
    BadBuddy(String),

    #[error("pagemap truncated at byte offset {offset}: expected {expected} bytes")]
    PagemapTruncated { offset: usize, expected: usize },

    #[error("pagemap has {extra} trailing bytes after byte offset {offset}")]
    PagemapTrailing { offset: usize, extra: usize },

    #[error("pagemap regions overlap at {0}")]
    OverlappingRegions(VirtAddr),

    #[error("pagemap region start {0} is not page aligned")]
    UnalignedRegion(VirtAddr),

    #[error("regions file line {line}: {msg}")]
    RegionsSyntax { line: usize, msg: String },

    #[error("mapping is empty")]
    EmptyMapping,

    #[error("invalid histogram buckets: {0}")]
    BadBuckets(String),

    #[error("run of {0} pages falls outside every histogram bucket")]
    RunOutsideBuckets(u64),

    #[error("subregion entry {vsn} with length {length} crosses a 2MB frame boundary")]
    FrameBoundary { vsn: Vsn, length: u8 },

    #[error("MSC frame base {0} is not 8-subregion aligned")]
    MisalignedFrame(Vsn),

    #[error("page walk buffer full ({depth} requests waiting)")]
    PwbOverflow { depth: usize },

    #[error("translation fault at trace event {index}: {source}")]
    TraceFault {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trace event {index} names CU {cu}, but only {cus} CUs are configured")]
    BadCu { index: usize, cu: u32, cus: u32 },

    #[error("negative energy parameter {0}")]
    NegativeEnergy(&'static str),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("unknown design `{0}`")]
    UnknownDesign(String),

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("invalid value `{value}` for `{key}`: {msg}")]
    BadValue { key: String, value: String, msg: String },

    #[error("config line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },

    #[error("trace line {line}: {msg}")]
    TraceSyntax { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
