//! Run configuration: one TOML file covering every subcommand, with
//! defaults that encode the desk-scale pipeline. The top-level seed (or
//! `--seed`) drives every stage through derived streams; the patched,
//! fully effective config is written next to each run's outputs.

use serde::{Deserialize, Serialize};

use crossreg_core::eval::{ExperimentConfig, SweepParams};
use crossreg_core::net::{NetConfig, TrainConfig};
use crossreg_core::register::RegisterParams;
use crossreg_core::sampler::{AugmentAxis, SampleConfig};
use crossreg_core::seed::derive_seed;
use crossreg_core::synth::{DegradationProfile, PlacedPrimitive, PoseSpec, SceneSpec};
use crossreg_core::{Error, Result};

// Stream tags for deriving per-stage seeds from the master seed.
pub const STREAM_SCENE: u64 = 1;
pub const STREAM_DEGRADE_A: u64 = 2;
pub const STREAM_DEGRADE_B: u64 = 3;
pub const STREAM_SAMPLE: u64 = 4;
pub const STREAM_AUGMENT: u64 = 5;
pub const STREAM_NET_INIT: u64 = 6;
pub const STREAM_TRAIN: u64 = 7;
pub const STREAM_RANSAC: u64 = 8;
pub const STREAM_SWEEP: u64 = 9;
pub const STREAM_EXPERIMENTS: u64 = 10;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub primitives: Vec<PlacedPrimitive>,
}

impl Default for SceneSection {
    fn default() -> Self {
        // Desk-scale default: a ground plane plus distinct shapes, sized so
        // segmentation yields a healthy set of control points.
        let prim = |kind: &str, extent: Vec<f64>, points: usize, t: [f64; 3], deg: f64| {
            PlacedPrimitive {
                kind: kind.into(),
                extent,
                points,
                pose: PoseSpec {
                    translation: t,
                    rotation_axis: [0.0, 0.0, 1.0],
                    rotation_deg: deg,
                },
            }
        };
        Self {
            primitives: vec![
                prim("plane", vec![3.0, 3.0], 5200, [0.0, 0.0, 0.0], 0.0),
                prim("cuboid", vec![0.8, 0.6, 0.5], 2200, [0.8, 0.6, 0.25], 0.0),
                prim("sphere", vec![0.45], 1800, [-0.8, -0.7, 0.45], 0.0),
                prim("cylinder", vec![0.3, 0.9], 1800, [-0.9, 0.8, 0.45], 0.0),
                prim("cuboid", vec![0.4, 0.4, 1.1], 1600, [1.1, -0.9, 0.55], 30.0),
            ],
        }
    }
}

impl SceneSection {
    pub fn to_spec(&self, master_seed: u64) -> SceneSpec {
        SceneSpec {
            seed: derive_seed(master_seed, STREAM_SCENE),
            primitives: self.primitives.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(flatten)]
    pub config: SampleConfig,
    /// Append one rotated copy per pair after sampling.
    pub augment: bool,
    pub augment_axis: AugmentAxis,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            config: SampleConfig::default(),
            augment: true,
            augment_axis: AugmentAxis::Z,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    /// `desk`, `paper`, or `custom` (which reads `custom`).
    pub preset: String,
    pub custom: Option<NetConfig>,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            custom: None,
        }
    }
}

impl NetSection {
    pub fn resolve(&self) -> Result<NetConfig> {
        let cfg = match self.preset.as_str() {
            "desk" => NetConfig::desk(),
            "paper" => NetConfig::paper_scale(),
            "custom" => self.custom.clone().ok_or_else(|| {
                Error::Config("net.preset = \"custom\" requires a [net.custom] table".into())
            })?,
            other => {
                return Err(Error::Config(format!(
                    "unknown net preset '{other}' (expected desk, paper, or custom)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TdfSection {
    /// Truncation distance in multiples of the voxel size.
    pub truncation_voxels: f64,
}

impl Default for TdfSection {
    fn default() -> Self {
        Self {
            truncation_voxels: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides it. Every stage derives its own
    /// stream from this value.
    pub seed: u64,
    pub scene: SceneSection,
    pub degrade_a: DegradationProfile,
    pub degrade_b: DegradationProfile,
    pub sampler: SamplerSection,
    pub net: NetSection,
    pub tdf: TdfSection,
    pub train: TrainConfig,
    pub register: RegisterParams,
    pub sweep: SweepParams,
    pub experiments: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene: SceneSection::default(),
            // Mild dense view vs sparse, noisy, outlier-ridden view: the
            // cross-source axes the training data is meant to span.
            degrade_a: DegradationProfile {
                keep_fraction: 0.9,
                noise_sigma: 0.002,
                ..DegradationProfile::identity()
            },
            degrade_b: DegradationProfile {
                keep_fraction: 0.5,
                occlusion_cuts: 2,
                occlusion_max_fraction: 0.15,
                noise_sigma: 0.005,
                outlier_fraction: 0.05,
                ..DegradationProfile::identity()
            },
            sampler: SamplerSection::default(),
            net: NetSection::default(),
            tdf: TdfSection::default(),
            train: TrainConfig::default(),
            register: RegisterParams::default(),
            sweep: SweepParams::default(),
            experiments: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        cfg.derive_stage_seeds();
        Ok(cfg)
    }

    pub fn defaults() -> Self {
        let mut cfg = Self::default();
        cfg.derive_stage_seeds();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.degrade_a.validate()?;
        self.degrade_b.validate()?;
        self.sampler.config.validate()?;
        self.net.resolve()?;
        self.train.validate()?;
        if !(self.tdf.truncation_voxels > 0.0) {
            return Err(Error::Config("tdf.truncation_voxels must be positive".into()));
        }
        Ok(())
    }

    /// Override the master seed (from `--seed`) and refresh derived seeds.
    pub fn with_master_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.derive_stage_seeds();
        self
    }

    /// Stamp every nested seed field from the master seed so the recorded
    /// effective config pins the whole run.
    fn derive_stage_seeds(&mut self) {
        self.train.seed = derive_seed(self.seed, STREAM_TRAIN);
        self.register.ransac.seed = derive_seed(self.seed, STREAM_RANSAC);
        self.sweep.seed = derive_seed(self.seed, STREAM_SWEEP);
        self.experiments.seed = derive_seed(self.seed, STREAM_EXPERIMENTS);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
