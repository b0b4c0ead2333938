//! Static analysis of network descriptors: FMA counts, bit-weighted compute
//! cost, widening, memory footprint and idealized PE efficiency.

pub mod cost;
pub mod descriptor;
pub mod footprint;
pub mod reference;
pub mod zoo;

pub use cost::{
    compute_cost, cost_table, ops_ratio, CostBlock, CostModel, CostReport, CostTable, LayerBits,
    LayerCost, PrecisionPolicy, ALLOWED_BITS, FULL_PRECISION_BITS, STANDARD_GRID,
};
pub use descriptor::{
    fma_count, volume, widen_descriptor, Extent2, LayerKind, LayerSpec, NetworkDescriptor,
    ResolvedLayer, DESCRIPTOR_FORMAT, NETWORK_INPUT,
};
pub use footprint::{memory_footprint, FootprintReport, LayerFootprint, Phase};
pub use reference::{reference_values, reproduce, Comparison, ReferenceValues, ReproReport};
pub use zoo::{builtin, builtin_names, load_descriptor, IMAGENET_NETWORKS};

use crate::error::{Error, Result};

/// Idealized speedup of an (A, W)-bit multiply over FP32×FP32, counting
/// only operand bits: 64 / (bits_a + bits_w).
pub fn first_order_efficiency(bits_a: u32, bits_w: u32) -> Result<f64> {
    LayerBits::new(bits_a, bits_w).map_err(|_| {
        Error::InvalidArgument(format!(
            "bit widths {bits_a}/{bits_w} must each be one of {ALLOWED_BITS:?}"
        ))
    })?;
    Ok(64.0 / f64::from(bits_a + bits_w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_points() {
        assert_eq!(first_order_efficiency(4, 4).unwrap(), 8.0);
        assert_eq!(first_order_efficiency(1, 1).unwrap(), 32.0);
        assert_eq!(first_order_efficiency(32, 32).unwrap(), 1.0);
        assert!(first_order_efficiency(3, 4).is_err());
    }

    #[test]
    fn reproduction_passes_under_uniform_model() {
        let r = reproduce(CostModel::Uniform).unwrap();
        assert!(r.all_passed(), "{}", r.pretty());
    }
}
