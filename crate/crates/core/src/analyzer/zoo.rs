//! Descriptors shipped with the crate.

use super::descriptor::NetworkDescriptor;
use crate::error::{Error, Result};

const SHIPPED: &[(&str, &str)] = &[
    ("alexnet", include_str!("../../descriptors/alexnet.json")),
    ("resnet34", include_str!("../../descriptors/resnet34.json")),
    ("resnet50", include_str!("../../descriptors/resnet50.json")),
    (
        "inception-bn",
        include_str!("../../descriptors/inception-bn.json"),
    ),
    (
        "mlp-blobs",
        include_str!("../../descriptors/mlp-blobs.json"),
    ),
    (
        "lenet-mnist",
        include_str!("../../descriptors/lenet-mnist.json"),
    ),
];

/// The four ImageNet-scale networks used by the cost and footprint reports.
pub const IMAGENET_NETWORKS: [&str; 4] = ["alexnet", "resnet34", "resnet50", "inception-bn"];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Result<NetworkDescriptor> {
    let (_, text) = SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Descriptor(format!("no shipped descriptor named {name:?}")))?;
    NetworkDescriptor::from_json(text)
}

/// A shipped name, or otherwise a path to a descriptor JSON file.
pub fn load_descriptor(name_or_path: &str) -> Result<NetworkDescriptor> {
    let stem = name_or_path.strip_suffix(".json").unwrap_or(name_or_path);
    if SHIPPED.iter().any(|(n, _)| *n == stem) && !std::path::Path::new(name_or_path).exists() {
        return builtin(stem);
    }
    NetworkDescriptor::load(name_or_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_shipped_descriptors_resolve() {
        for name in builtin_names() {
            let d = builtin(name).unwrap();
            assert_eq!(d.name, name);
            assert!(d.total_fma().unwrap() > 0);
        }
        assert!(builtin("vgg").is_err());
        assert_eq!(load_descriptor("alexnet.json").unwrap().name, "alexnet");
    }

    #[test]
    fn imagenet_nets_have_1000_classes() {
        for name in IMAGENET_NETWORKS {
            assert_eq!(builtin(name).unwrap().num_classes(), Some(1000));
        }
    }

    #[test]
    fn alexnet_conv1_by_hand() {
        // conv1: 54x54 output, 256 filters over 96 channels with 5x5 windows.
        let r = builtin("alexnet").unwrap().resolve().unwrap();
        let conv1 = r.iter().find(|l| l.id == "conv1").unwrap();
        assert_eq!(conv1.fma, 54 * 54 * 256 * 96 * 25);
        let fc0 = r.iter().find(|l| l.id == "fc0").unwrap();
        assert_eq!(fc0.fma, 256 * 6 * 6 * 4096);
    }

    #[test]
    fn imagenet_fma_totals_are_plausible() {
        // Published totals: ResNet-34 ≈ 3.6 GFMA, ResNet-50 ≈ 4.1 GFMA,
        // BN-Inception ≈ 2.0 GFMA.
        let g = |n: &str| builtin(n).unwrap().total_fma().unwrap() as f64 / 1e9;
        assert!((3.4..3.8).contains(&g("resnet34")), "{}", g("resnet34"));
        assert!((3.8..4.4).contains(&g("resnet50")), "{}", g("resnet50"));
        assert!(
            (1.8..2.2).contains(&g("inception-bn")),
            "{}",
            g("inception-bn")
        );
    }
}
