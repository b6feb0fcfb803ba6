//! Parameter sweeps: one independent run per value of one config key.

use rayon::prelude::*;

use crate::engine::config::DesignConfig;
use crate::engine::report::SimReport;
use crate::engine::sim::run_trace;
use crate::error::{Error, Result};
use crate::memory::PageMapping;
use crate::workloads::Trace;

/// Runs `trace` once per value of `axis`, in parallel, keeping value order.
pub fn sweep(
    trace: &Trace,
    mapping: &PageMapping,
    base: &DesignConfig,
    axis: &str,
    values: &[f64],
    seed: u64,
) -> Result<Vec<SimReport>> {
    if !DesignConfig::is_numeric_key(axis) {
        return Err(Error::UnknownKey(axis.to_string()));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            c.set_numeric(axis, v)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .map(|c| run_trace(trace, mapping, c, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::config::Design;
    use crate::geometry::{Pfn, Vfn};
    use crate::memory::contiguous_mapping;
    use crate::workloads::gen_random;

    #[test]
    fn axis_checks() {
        let m = contiguous_mapping(Vfn(0x80000), 64, Pfn(0));
        let t = gen_random(Vfn(0x80000), 64, 100, 1, 4).unwrap();
        let base = DesignConfig::default();
        assert!(matches!(sweep(&t, &m, &base, "colour", &[1.0], 0), Err(Error::UnknownKey(_))));
        assert!(matches!(sweep(&t, &m, &base, "design", &[], 0), Err(Error::UnknownKey(_))));
        assert!(sweep(&t, &m, &base, "iommu_entries", &[], 0).unwrap().is_empty());
        assert!(sweep(&t, &m, &base, "iommu_entries", &[100.0], 0).is_err());
    }

    #[test]
    fn runs_in_value_order() {
        let m = contiguous_mapping(Vfn(0x80000), 4096, Pfn(0x10000));
        let t = gen_random(Vfn(0x80000), 4096, 4000, 1, 16).unwrap();
        let base = DesignConfig::with_design(Design::Baseline);
        let vals = [128.0, 256.0, 512.0, 1024.0];
        let rs = sweep(&t, &m, &base, "iommu_entries", &vals, 0).unwrap();
        assert_eq!(rs.len(), 4);
        for w in rs.windows(2) {
            assert!(w[1].iommu_hit_ratio >= w[0].iommu_hit_ratio);
        }
    }
}
