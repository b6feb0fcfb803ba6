//! The IOMMU page table walker and the structures beside it: page walk
//! cache, memory subregion cache and the walker pool.

pub mod msc;
pub mod pool;
pub mod pwc;
pub mod walk;

pub use msc::{run_from_bitmap, AccessCounts, Bitmap, Msc};
pub use pool::WalkerPool;
pub use pwc::Pwc;
pub use walk::{colt_run, frame_bitmap, walk_request, WalkMode, WalkResult};
