//! Siamese 3D convolutional descriptor network.
//!
//! The stack is valid (no-padding) 3D convolutions with ReLU after each
//! conv, one max-pool, and a final global mean pool collapsing the spatial
//! dims into the descriptor vector. Two weight-sharing streams are trained
//! with a contrastive loss on the L2 descriptor distance. All math runs in
//! f32 to match the weight file format; gradients are exact analytic
//! derivatives of the forward pass.

mod ops;
mod store;
mod train;

pub use store::{load_weights, load_weights_expecting, save_weights};
pub use train::{train, EpochStats, PairSample, TrainConfig, TrainHistory};

use ndarray::{Array1, Array4, Array5};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sampler::PairLabel;
use crate::seed::stream_rng;
use crate::tdf::VoxelGrid;
use crate::{Error, Result};

/// One layer of the stack. Convolutions are cubic, stride 1, valid padding;
/// pooling is max with stride equal to its kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv3d { kernel: usize, channels: usize },
    MaxPool3d { kernel: usize },
}

/// Network shape: input grid edge plus the layer list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
}

impl NetConfig {
    /// Desk-scale default: 9 convolutions and 1 max-pool on a 16^3 input.
    ///
    /// Channel plan (16,16,32,32,32,64,64,64,64) with the pool after the
    /// first conv. A 16^3 input cannot geometrically fit nine valid 3^3
    /// convolutions, so the trailing convolutions switch to 1^3 kernels
    /// once the spatial extent reaches 1.
    pub fn desk() -> Self {
        Self {
            input_dim: 16,
            layers: vec![
                Layer::Conv3d { kernel: 3, channels: 16 },
                Layer::MaxPool3d { kernel: 2 },
                Layer::Conv3d { kernel: 3, channels: 16 },
                Layer::Conv3d { kernel: 3, channels: 32 },
                Layer::Conv3d { kernel: 3, channels: 32 },
                Layer::Conv3d { kernel: 1, channels: 32 },
                Layer::Conv3d { kernel: 1, channels: 64 },
                Layer::Conv3d { kernel: 1, channels: 64 },
                Layer::Conv3d { kernel: 1, channels: 64 },
                Layer::Conv3d { kernel: 1, channels: 64 },
            ],
        }
    }

    /// Paper-scale: all-64 channels, nine 3^3 convolutions and one pool.
    /// Needs a 36^3 input for the spatial dims to survive the stack.
    pub fn paper_scale() -> Self {
        let mut layers = vec![
            Layer::Conv3d { kernel: 3, channels: 64 },
            Layer::MaxPool3d { kernel: 2 },
        ];
        layers.extend(std::iter::repeat_n(Layer::Conv3d { kernel: 3, channels: 64 }, 8));
        Self {
            input_dim: 36,
            layers,
        }
    }

    /// Descriptor length: channel count of the last convolution.
    pub fn descriptor_len(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv3d { channels, .. } => Some(*channels),
                _ => None,
            })
            .unwrap_or(1)
    }

    /// (channels, spatial) after each layer, starting from the input.
    pub fn stage_dims(&self) -> Result<Vec<(usize, usize)>> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        let mut dims = vec![(1usize, self.input_dim)];
        for (i, layer) in self.layers.iter().enumerate() {
            let (c, s) = *dims.last().expect("non-empty");
            let next = match *layer {
                Layer::Conv3d { kernel, channels } => {
                    if kernel == 0 || channels == 0 {
                        return Err(Error::Config(format!(
                            "layer {i}: kernel and channels must be positive"
                        )));
                    }
                    if s < kernel {
                        return Err(Error::Config(format!(
                            "layer {i}: spatial dim {s} smaller than kernel {kernel}"
                        )));
                    }
                    (channels, s - kernel + 1)
                }
                Layer::MaxPool3d { kernel } => {
                    if kernel == 0 || s < kernel {
                        return Err(Error::Config(format!(
                            "layer {i}: spatial dim {s} smaller than pool kernel {kernel}"
                        )));
                    }
                    (c, s / kernel)
                }
            };
            if next.1 == 0 {
                return Err(Error::Config(format!("layer {i}: spatial dims reach zero")));
            }
            dims.push(next);
        }
        if !self.layers.iter().any(|l| matches!(l, Layer::Conv3d { .. })) {
            return Err(Error::Config("network needs at least one convolution".into()));
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_dims().map(|_| ())
    }
}

/// Kernel and bias of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    /// (out_channels, in_channels, k, k, k)
    pub kernel: Array5<f32>,
    pub bias: Array1<f32>,
}

/// Shared weights of both Siamese streams.
#[derive(Debug, Clone, PartialEq)]
pub struct NetWeights {
    pub config: NetConfig,
    pub convs: Vec<ConvWeights>,
}

impl NetWeights {
    /// Glorot-uniform initialization, deterministic for a fixed seed.
    pub fn init(config: &NetConfig, seed: u64) -> Result<Self> {
        let dims = config.stage_dims()?;
        let mut rng = stream_rng(seed, 0);
        let mut convs = Vec::new();
        let mut stage = 0usize;
        for layer in &config.layers {
            let (in_c, _) = dims[stage];
            stage += 1;
            if let Layer::Conv3d { kernel, channels } = *layer {
                let fan_in = (in_c * kernel * kernel * kernel) as f64;
                let fan_out = (channels * kernel * kernel * kernel) as f64;
                let bound = (6.0 / (fan_in + fan_out)).sqrt();
                let k = Array5::from_shape_simple_fn(
                    (channels, in_c, kernel, kernel, kernel),
                    || rng.random_range(-bound..=bound) as f32,
                );
                convs.push(ConvWeights {
                    kernel: k,
                    bias: Array1::zeros(channels),
                });
            }
        }
        Ok(Self {
            config: config.clone(),
            convs,
        })
    }

    /// Total number of stored f32 parameters.
    pub fn parameter_count(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.kernel.len() + c.bias.len())
            .sum()
    }
}

/// Fixed-length descriptor vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub Vec<f32>);

impl Descriptor {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Euclidean distance between descriptors, accumulated in f64.
pub fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "descriptor length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut sum = 0.0f64;
    for (x, y) in a.0.iter().zip(&b.0) {
        let d = *x as f64 - *y as f64;
        sum += d * d;
    }
    Ok(sum.sqrt())
}

/// Contrastive loss and its derivative with respect to the distance.
///
/// Positive pairs: `d^2`. Negative pairs: `max(0, margin - d)^2`, so they
/// only contribute while the distance is below the margin; the gradient at
/// the hinge boundary (d >= margin) is 0.
pub fn contrastive_loss(d: f64, label: PairLabel, margin: f64) -> (f64, f64) {
    match label {
        PairLabel::Positive => (d * d, 2.0 * d),
        PairLabel::Negative => {
            if d < margin {
                let gap = margin - d;
                (gap * gap, -2.0 * gap)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

/// Convert a TDF grid into the network's input tensor.
pub fn grid_to_tensor(grid: &VoxelGrid) -> Array4<f32> {
    let d = grid.dim();
    let values: Vec<f32> = grid.values().iter().map(|v| *v as f32).collect();
    Array4::from_shape_vec((1, d, d, d), values).expect("grid length is dim^3")
}

fn check_input(weights: &NetWeights, input: &Array4<f32>) -> Result<()> {
    let d = weights.config.input_dim;
    if input.dim() != (1, d, d, d) {
        return Err(Error::InvalidInput(format!(
            "input shape {:?} does not match configured {}^3 grid",
            input.dim(),
            d
        )));
    }
    Ok(())
}

/// Forward pass on a prepared input tensor.
pub fn forward_tensor(weights: &NetWeights, input: &Array4<f32>) -> Result<Descriptor> {
    check_input(weights, input)?;
    let mut act = input.clone();
    let mut conv_idx = 0usize;
    for layer in &weights.config.layers {
        act = match *layer {
            Layer::Conv3d { .. } => {
                let w = &weights.convs[conv_idx];
                conv_idx += 1;
                ops::conv3d_forward(&act, &w.kernel, &w.bias, true)
            }
            Layer::MaxPool3d { kernel } => ops::maxpool_forward(&act, kernel),
        };
    }
    Ok(Descriptor(ops::global_mean(&act)))
}

/// Forward pass on a TDF grid.
pub fn forward(weights: &NetWeights, grid: &VoxelGrid) -> Result<Descriptor> {
    forward_tensor(weights, &grid_to_tensor(grid))
}

/// Per-layer weight gradients, matching `NetWeights::convs`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub convs: Vec<(Array5<f32>, Array1<f32>)>,
}

impl Gradients {
    pub fn zeros_like(weights: &NetWeights) -> Self {
        Self {
            convs: weights
                .convs
                .iter()
                .map(|c| {
                    (
                        Array5::zeros(c.kernel.raw_dim()),
                        Array1::zeros(c.bias.raw_dim()),
                    )
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((k, b), (ok, ob)) in self.convs.iter_mut().zip(&other.convs) {
            *k += ok;
            *b += ob;
        }
    }

    pub fn max_abs(&self) -> f32 {
        self.convs
            .iter()
            .flat_map(|(k, b)| k.iter().chain(b.iter()))
            .fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

fn forward_cached(weights: &NetWeights, input: &Array4<f32>) -> (Vec<Array4<f32>>, Vec<f32>) {
    let mut acts = vec![input.clone()];
    let mut conv_idx = 0usize;
    for layer in &weights.config.layers {
        let next = match *layer {
            Layer::Conv3d { .. } => {
                let w = &weights.convs[conv_idx];
                conv_idx += 1;
                ops::conv3d_forward(acts.last().unwrap(), &w.kernel, &w.bias, true)
            }
            Layer::MaxPool3d { kernel } => ops::maxpool_forward(acts.last().unwrap(), kernel),
        };
        acts.push(next);
    }
    let desc = ops::global_mean(acts.last().unwrap());
    (acts, desc)
}

/// Backpropagate one stream from a descriptor gradient, accumulating into
/// `grads`.
fn backward_stream(
    weights: &NetWeights,
    acts: &[Array4<f32>],
    desc_grad: &[f32],
    grads: &mut Gradients,
) {
    let mut g = ops::global_mean_backward(acts.last().unwrap().raw_dim(), desc_grad);
    let mut conv_idx = weights.convs.len();
    for (i, layer) in weights.config.layers.iter().enumerate().rev() {
        match *layer {
            Layer::Conv3d { .. } => {
                conv_idx -= 1;
                let w = &weights.convs[conv_idx];
                // ReLU mask: derivative is 1 where the stored post-activation
                // output is positive, 0 elsewhere (including exactly at 0).
                ops::relu_mask_inplace(&mut g, &acts[i + 1]);
                let (dk, db, dinput) = ops::conv3d_backward(&acts[i], &w.kernel, &g, i > 0);
                let (gk, gb) = &mut grads.convs[conv_idx];
                *gk += &dk;
                *gb += &db;
                g = dinput;
            }
            Layer::MaxPool3d { kernel } => {
                g = ops::maxpool_backward(&acts[i], kernel, &g);
            }
        }
    }
}

/// Loss, descriptor distance, and exact weight gradients for one Siamese
/// pair. Gradients from both streams accumulate into the shared weights.
pub fn pair_backward_tensors(
    weights: &NetWeights,
    a: &Array4<f32>,
    b: &Array4<f32>,
    label: PairLabel,
    margin: f64,
) -> Result<(f64, f64, Gradients)> {
    check_input(weights, a)?;
    check_input(weights, b)?;
    if !(margin > 0.0) {
        return Err(Error::InvalidInput("margin must be positive".into()));
    }
    let (acts_a, desc_a) = forward_cached(weights, a);
    let (acts_b, desc_b) = forward_cached(weights, b);

    let delta: Vec<f64> = desc_a
        .iter()
        .zip(&desc_b)
        .map(|(x, y)| *x as f64 - *y as f64)
        .collect();
    let d = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (loss, _) = contrastive_loss(d, label, margin);

    let mut grads = Gradients::zeros_like(weights);
    // Gradient with respect to (desc_a - desc_b); formulated this way the
    // positive branch has no singularity at d = 0.
    let coeff = match label {
        PairLabel::Positive => 2.0,
        PairLabel::Negative => {
            if d >= margin || d == 0.0 {
                return Ok((loss, d, grads));
            }
            -2.0 * (margin - d) / d
        }
    };
    let ddesc: Vec<f32> = delta.iter().map(|v| (coeff * v) as f32).collect();
    let ddesc_neg: Vec<f32> = ddesc.iter().map(|v| -v).collect();
    backward_stream(weights, &acts_a, &ddesc, &mut grads);
    backward_stream(weights, &acts_b, &ddesc_neg, &mut grads);
    Ok((loss, d, grads))
}

/// Grid-level wrapper around [`pair_backward_tensors`].
pub fn pair_backward(
    weights: &NetWeights,
    grid_a: &VoxelGrid,
    grid_b: &VoxelGrid,
    label: PairLabel,
    margin: f64,
) -> Result<(f64, f64, Gradients)> {
    pair_backward_tensors(
        weights,
        &grid_to_tensor(grid_a),
        &grid_to_tensor(grid_b),
        label,
        margin,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> NetConfig {
        NetConfig {
            input_dim: 6,
            layers: vec![
                Layer::Conv3d { kernel: 3, channels: 2 },
                Layer::MaxPool3d { kernel: 2 },
                Layer::Conv3d { kernel: 2, channels: 3 },
            ],
        }
    }

    fn random_input(dim: usize, seed: u64) -> Array4<f32> {
        let mut rng = stream_rng(seed, 0);
        Array4::from_shape_simple_fn((1, dim, dim, dim), || rng.random_range(0.0..1.0f32))
    }

    #[test]
    fn desk_config_has_nine_convs_and_one_pool() {
        let cfg = NetConfig::desk();
        let convs = cfg.layers.iter().filter(|l| matches!(l, Layer::Conv3d { .. })).count();
        let pools = cfg
            .layers
            .iter()
            .filter(|l| matches!(l, Layer::MaxPool3d { .. }))
            .count();
        assert_eq!((convs, pools), (9, 1));
        assert_eq!(cfg.descriptor_len(), 64);
        cfg.validate().unwrap();
    }

    #[test]
    fn paper_config_has_nine_convs_and_one_pool() {
        let cfg = NetConfig::paper_scale();
        let convs = cfg.layers.iter().filter(|l| matches!(l, Layer::Conv3d { .. })).count();
        assert_eq!(convs, 9);
        assert!(cfg
            .layers
            .iter()
            .all(|l| !matches!(l, Layer::Conv3d { kernel, .. } if *kernel != 3)));
        cfg.validate().unwrap();
        let dims = cfg.stage_dims().unwrap();
        assert_eq!(dims.last().unwrap().1, 1);
    }

    #[test]
    fn zero_spatial_dim_rejected() {
        let cfg = NetConfig {
            input_dim: 4,
            layers: vec![
                Layer::Conv3d { kernel: 3, channels: 2 },
                Layer::Conv3d { kernel: 3, channels: 2 },
            ],
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_grid_zero_bias_gives_zero_descriptor() {
        let cfg = tiny_config();
        let weights = NetWeights::init(&cfg, 1).unwrap();
        let input = Array4::zeros((1, 6, 6, 6));
        let desc = forward_tensor(&weights, &input).unwrap();
        assert!(desc.0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_is_deterministic_and_correct_length() {
        for (seed, cfg) in [
            (1u64, tiny_config()),
            (
                2,
                NetConfig {
                    input_dim: 5,
                    layers: vec![Layer::Conv3d { kernel: 3, channels: 7 }],
                },
            ),
            (
                3,
                NetConfig {
                    input_dim: 8,
                    layers: vec![
                        Layer::Conv3d { kernel: 3, channels: 4 },
                        Layer::MaxPool3d { kernel: 3 },
                        Layer::Conv3d { kernel: 1, channels: 6 },
                    ],
                },
            ),
        ] {
            let weights = NetWeights::init(&cfg, seed).unwrap();
            let input = random_input(cfg.input_dim, seed);
            let a = forward_tensor(&weights, &input).unwrap();
            let b = forward_tensor(&weights, &input).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), cfg.descriptor_len());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let weights = NetWeights::init(&tiny_config(), 4).unwrap();
        let wrong = random_input(5, 1);
        assert!(forward_tensor(&weights, &wrong).is_err());
    }

    #[test]
    fn descriptor_distance_basics() {
        let a = Descriptor(vec![3.0, 0.0, 0.0]);
        let b = Descriptor(vec![0.0, 4.0, 0.0]);
        assert_eq!(descriptor_distance(&a, &a).unwrap(), 0.0);
        assert!((descriptor_distance(&a, &b).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(
            descriptor_distance(&a, &b).unwrap(),
            descriptor_distance(&b, &a).unwrap()
        );
        assert!(descriptor_distance(&a, &Descriptor(vec![1.0])).is_err());
    }

    #[test]
    fn contrastive_loss_cases() {
        assert_eq!(contrastive_loss(0.0, PairLabel::Positive, 1.0), (0.0, 0.0));
        assert_eq!(contrastive_loss(1.0, PairLabel::Negative, 1.0), (0.0, 0.0));
        assert_eq!(contrastive_loss(2.0, PairLabel::Negative, 1.0), (0.0, 0.0));
        assert_eq!(contrastive_loss(0.0, PairLabel::Negative, 1.0), (1.0, -2.0));
        let (l, g) = contrastive_loss(0.5, PairLabel::Positive, 1.0);
        assert!((l - 0.25).abs() < 1e-15);
        assert!((g - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_loss_negative_pair_has_zero_gradients() {
        let cfg = tiny_config();
        let weights = NetWeights::init(&cfg, 9).unwrap();
        let a = random_input(6, 10);
        let b = random_input(6, 11);
        let d = descriptor_distance(
            &forward_tensor(&weights, &a).unwrap(),
            &forward_tensor(&weights, &b).unwrap(),
        )
        .unwrap();
        // Margin below the distance forces the hinge to zero.
        let margin = (d / 2.0).max(1e-6);
        let (loss, _, grads) =
            pair_backward_tensors(&weights, &a, &b, PairLabel::Negative, margin).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_positive_pair_is_stationary() {
        let cfg = tiny_config();
        let weights = NetWeights::init(&cfg, 12).unwrap();
        let a = random_input(6, 13);
        let (loss, d, grads) =
            pair_backward_tensors(&weights, &a, &a, PairLabel::Positive, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(d, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }
}
