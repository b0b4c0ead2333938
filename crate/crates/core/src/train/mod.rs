//! Desk-scale training of wide reduced-precision networks.
//!
//! Networks are built from sequential descriptors. Conv and FC layers keep
//! full-precision master weights; when their policy asks for fewer than 32
//! bits they quantize their input activations (clipped to [0, 1]) and
//! their weights (clipped to [-1, 1], or binarized with BWN at 1 bit) on
//! every forward pass. When both operands are quantized the product runs on
//! the packed integer kernels and is rescaled by `scale_w · scale_a`.
//! Gradients flow straight through the quantizers and are masked outside
//! the clip ranges. Batch norm always runs in full precision.

mod data;
mod linalg;
mod network;
mod optim;

pub use data::{
    desk_scale_task, idx_dataset, load_idx, parse_idx_images, parse_idx_labels, synthetic_blobs,
    BlobConfig, Dataset, DESK_TRAIN_SAMPLES,
};
pub use network::{
    build_network, BatchNormLayer, DenseLayer, DenseShape, ForwardCache, Gradients, Layer, Network,
};
pub use optim::{evaluate, train, EpochRecord, LrStep, Sgd, TrainConfig, TrainLog};
