//! Dynamic translation energy: access counts times per-access energy. The
//! unified IOMMU TLB is metered as two structures, one per partition.

use serde::Serialize;

use crate::engine::config::EnergyParams;
use crate::error::Result;
use crate::walker::AccessCounts;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StructureCounts {
    pub per_cu: AccessCounts,
    pub iommu_regular: AccessCounts,
    pub iommu_subregion: AccessCounts,
    pub msc: AccessCounts,
    pub pwc: AccessCounts,
    pub memory: AccessCounts,
}

/// Picojoules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyReport {
    pub per_cu: f64,
    pub iommu_regular: f64,
    pub iommu_subregion: f64,
    pub msc: f64,
    pub pwc: f64,
    pub memory: f64,
    pub total: f64,
}

fn cost(c: AccessCounts, read: f64, write: f64) -> f64 {
    c.reads as f64 * read + c.writes as f64 * write
}

pub fn compute_energy(counts: &StructureCounts, p: &EnergyParams) -> Result<EnergyReport> {
    p.validate()?;
    let mut e = EnergyReport {
        per_cu: cost(counts.per_cu, p.per_cu_read, p.per_cu_write),
        iommu_regular: cost(counts.iommu_regular, p.iommu_regular_read, p.iommu_regular_write),
        iommu_subregion: cost(counts.iommu_subregion, p.iommu_subregion_read, p.iommu_subregion_write),
        msc: cost(counts.msc, p.msc_read, p.msc_write),
        pwc: cost(counts.pwc, p.pwc_read, p.pwc_write),
        memory: cost(counts.memory, p.memory_read, p.memory_write),
        total: 0.0,
    };
    e.total = e.per_cu + e.iommu_regular + e.iommu_subregion + e.msc + e.pwc + e.memory;
    Ok(e)
}
