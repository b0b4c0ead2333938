//! Device-memory footprint of activations, weights and gradient maps.
//!
//! Training keeps every activation map and every weight tensor resident,
//! plus one input-gradient buffer (δZ, sized to the largest layer output)
//! and one back-propagated gradient buffer (δX, sized to the largest layer
//! input). Inference keeps all weights plus one input and one output
//! feature-map buffer, each sized to the largest across layers.

use std::fmt::Write as _;

use super::descriptor::{volume, NetworkDescriptor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFootprint {
    pub id: String,
    pub ifm_bytes: f64,
    pub ofm_bytes: f64,
    pub weight_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintReport {
    pub network: String,
    pub batch: usize,
    pub phase: Phase,
    pub layers: Vec<LayerFootprint>,
    /// Network input plus every layer output (ΣACT).
    pub act_bytes: f64,
    /// ΣW.
    pub weight_bytes: f64,
    pub max_ifm: f64,
    pub max_ofm: f64,
    /// Largest input-gradient map (sized as the largest layer output).
    pub max_dz: f64,
    /// Largest back-propagated gradient (sized as the largest layer input).
    pub max_dx: f64,
    pub training_total: f64,
    pub inference_total: f64,
}

impl FootprintReport {
    pub fn total(&self) -> f64 {
        match self.phase {
            Phase::Training => self.training_total,
            Phase::Inference => self.inference_total,
        }
    }

    /// Share of the total taken by batch-proportional feature maps
    /// (activations and, during training, gradient maps).
    pub fn activation_fraction(&self) -> f64 {
        let maps = match self.phase {
            Phase::Training => self.act_bytes + self.max_dz + self.max_dx,
            Phase::Inference => self.max_ifm + self.max_ofm,
        };
        maps / self.total()
    }

    pub const CSV_HEADER: &'static str =
        "network,phase,batch,act_bytes,weight_bytes,max_ifm,max_ofm,max_dz,max_dx,total_bytes,activation_fraction";

    pub fn csv_line(&self) -> String {
        let phase = match self.phase {
            Phase::Training => "training",
            Phase::Inference => "inference",
        };
        let mut s = String::new();
        write!(
            s,
            "{},{phase},{},{},{},{},{},{},{},{},{:.6}",
            self.network,
            self.batch,
            self.act_bytes,
            self.weight_bytes,
            self.max_ifm,
            self.max_ofm,
            self.max_dz,
            self.max_dx,
            self.total(),
            self.activation_fraction()
        )
        .unwrap();
        s
    }
}

/// `bytes_per_act` / `bytes_per_weight` may be fractional (0.5 for 4-bit).
pub fn memory_footprint(
    desc: &NetworkDescriptor,
    batch: usize,
    phase: Phase,
    bytes_per_act: f64,
    bytes_per_weight: f64,
) -> Result<FootprintReport> {
    if batch == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    if !(bytes_per_act > 0.0 && bytes_per_weight > 0.0) {
        return Err(Error::InvalidArgument(
            "byte widths must be positive".into(),
        ));
    }
    let b = batch as f64;
    let input_bytes = volume(&desc.input) as f64 * b * bytes_per_act;
    let layers: Vec<LayerFootprint> = desc
        .resolve()?
        .into_iter()
        .map(|l| LayerFootprint {
            ifm_bytes: l.in_shapes.iter().map(volume).sum::<u64>() as f64 * b * bytes_per_act,
            ofm_bytes: volume(&l.out_shape) as f64 * b * bytes_per_act,
            weight_bytes: l.params as f64 * bytes_per_weight,
            id: l.id,
        })
        .collect();
    let act_bytes = input_bytes + layers.iter().map(|l| l.ofm_bytes).sum::<f64>();
    let weight_bytes: f64 = layers.iter().map(|l| l.weight_bytes).sum();
    let max_ifm = layers.iter().map(|l| l.ifm_bytes).fold(0.0, f64::max);
    let max_ofm = layers.iter().map(|l| l.ofm_bytes).fold(0.0, f64::max);
    let (max_dz, max_dx) = (max_ofm, max_ifm);
    Ok(FootprintReport {
        network: desc.name.clone(),
        batch,
        phase,
        layers,
        act_bytes,
        weight_bytes,
        max_ifm,
        max_ofm,
        max_dz,
        max_dx,
        training_total: act_bytes + weight_bytes + max_dz + max_dx,
        inference_total: max_ifm + max_ofm + weight_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::descriptor::{LayerKind, LayerSpec};

    #[test]
    fn single_fc_inference_is_in_plus_out_plus_weights() {
        let d = NetworkDescriptor::new("fc", [10, 1, 1], vec![LayerSpec::fc("fc", 5)]);
        let r = memory_footprint(&d, 1, Phase::Inference, 4.0, 4.0).unwrap();
        assert_eq!(r.total(), 40.0 + 20.0 + 200.0);
    }

    #[test]
    fn toy_net_hand_computation() {
        let d = NetworkDescriptor::new(
            "toy",
            [4, 1, 1],
            vec![
                LayerSpec::fc("fc1", 3),
                LayerSpec::new("relu", LayerKind::Relu),
                LayerSpec::fc("fc2", 2),
            ],
        );
        // batch 4, FP32: input 64 B; outputs 48, 48, 32 B; weights 48 + 24 B.
        let t = memory_footprint(&d, 4, Phase::Training, 4.0, 4.0).unwrap();
        assert_eq!(t.act_bytes, 192.0);
        assert_eq!(t.weight_bytes, 72.0);
        assert_eq!((t.max_dz, t.max_dx), (48.0, 64.0));
        assert_eq!(t.training_total, 376.0);
        assert_eq!(t.activation_fraction(), 304.0 / 376.0);
        let i = memory_footprint(&d, 4, Phase::Inference, 4.0, 4.0).unwrap();
        assert_eq!(i.inference_total, 184.0);
        assert_eq!(i.activation_fraction(), 112.0 / 184.0);
    }

    #[test]
    fn reduced_precision_bytes_scale_linearly() {
        let d = NetworkDescriptor::new("fc", [8, 1, 1], vec![LayerSpec::fc("fc", 8)]);
        let full = memory_footprint(&d, 2, Phase::Training, 4.0, 4.0).unwrap();
        let low = memory_footprint(&d, 2, Phase::Training, 0.5, 0.25).unwrap();
        assert_eq!(low.act_bytes * 8.0, full.act_bytes);
        assert_eq!(low.weight_bytes * 16.0, full.weight_bytes);
        assert!(memory_footprint(&d, 0, Phase::Training, 4.0, 4.0).is_err());
    }
}
