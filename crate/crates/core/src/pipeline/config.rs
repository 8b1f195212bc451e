//! Run configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generator::GeneratorSpec;
use crate::objectives::{EnergyConfig, ObjAggregation};
use crate::transforms::{EotConfig, Range, TransformConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOneConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub aux_lr: f64,
    /// Weight of the information term relative to the adversary term.
    pub info_weight: f64,
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTwoConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Side of the toroidal latent unit.
    pub local_side: usize,
    /// Side of the latent cropped from the unit each step.
    pub latent_side: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tca_side: usize,
    pub rca2_side: usize,
    pub rca6_side: usize,
    /// Side of the random-color unit and number of color blocks per side.
    pub random_unit_side: usize,
    pub random_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Confidence above which clean detections become ground truth.
    pub gt_conf_threshold: f64,
    /// Confidence floor for predictions entering AP.
    pub pred_conf_threshold: f64,
    pub nms_iou: f64,
    pub resample: bool,
    pub shift_ratios: Vec<f64>,
    /// Latent side used when synthesizing a texture for evaluation.
    pub texture_latent_side: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub detector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_weights: Option<PathBuf>,
    pub dataset: PathBuf,
    pub train_split: String,
    pub test_split: String,
    /// Side of the square patches cut from textures.
    pub crop_size: usize,
    pub obj_aggregation: ObjAggregation,
    pub energy: EnergyConfig,
    pub generator: GeneratorSpec,
    pub transforms: TransformConfig,
    pub stage_one: StageOneConfig,
    pub stage_two: StageTwoConfig,
    pub baselines: BaselineConfig,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    /// Full-size settings: 128×9×9 latents, 324 px textures, 150 px crops.
    pub fn full() -> Self {
        Self {
            seed: 0,
            detector: "yolov2".into(),
            detector_weights: None,
            dataset: PathBuf::from("data/inria"),
            train_split: "train".into(),
            test_split: "test".into(),
            crop_size: 150,
            obj_aggregation: ObjAggregation::Mean,
            energy: EnergyConfig::default(),
            generator: GeneratorSpec::full(),
            transforms: TransformConfig::default(),
            stage_one: StageOneConfig {
                steps: 10_000,
                batch_size: 8,
                lr: 0.001,
                aux_lr: 0.001,
                info_weight: 1.0,
                checkpoint_every: 500,
            },
            stage_two: StageTwoConfig {
                steps: 2_000,
                batch_size: 8,
                lr: 0.03,
                local_side: 4,
                latent_side: 9,
            },
            baselines: BaselineConfig {
                steps: 10_000,
                batch_size: 8,
                lr: 0.03,
                tca_side: 300,
                rca2_side: 300,
                rca6_side: 900,
                random_unit_side: 150,
                random_blocks: 6,
            },
            evaluation: EvalConfig {
                gt_conf_threshold: 0.5,
                pred_conf_threshold: 0.01,
                nms_iou: 0.4,
                resample: true,
                shift_ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0],
                texture_latent_side: 18,
            },
        }
    }

    /// CPU-sized settings for the bundled toy detector and synthetic scenes.
    pub fn desk() -> Self {
        let full = Self::full();
        Self {
            detector: "toy".into(),
            dataset: PathBuf::from("data/toy"),
            crop_size: 32,
            obj_aggregation: ObjAggregation::Max,
            energy: EnergyConfig { alpha: 5e-4, beta: 1.0 },
            generator: GeneratorSpec::desk(),
            transforms: TransformConfig {
                eot: EotConfig {
                    scale: Range::new(0.9 * 0.9, 0.9 * 1.1),
                    ..EotConfig::default()
                },
                ..TransformConfig::default()
            },
            stage_one: StageOneConfig {
                steps: 200,
                batch_size: 4,
                aux_lr: 0.003,
                ..full.stage_one
            },
            stage_two: StageTwoConfig {
                steps: 100,
                batch_size: 4,
                ..full.stage_two
            },
            baselines: BaselineConfig {
                steps: 200,
                batch_size: 4,
                lr: 0.03,
                tca_side: 64,
                rca2_side: 64,
                rca6_side: 192,
                random_unit_side: 32,
                random_blocks: 6,
            },
            evaluation: EvalConfig {
                texture_latent_side: 18,
                ..full.evaluation
            },
            ..full
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.energy.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.transforms.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.generator.validate()?;
        for (name, lr) in [
            ("stage_one.lr", self.stage_one.lr),
            ("stage_one.aux_lr", self.stage_one.aux_lr),
            ("stage_two.lr", self.stage_two.lr),
            ("baselines.lr", self.baselines.lr),
        ] {
            if !lr.is_finite() || lr <= 0.0 {
                return cfg(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.crop_size == 0 {
            return cfg("crop_size must be positive".into());
        }
        if self.stage_one.batch_size == 0 || self.stage_two.batch_size == 0 || self.baselines.batch_size == 0 {
            return cfg("batch sizes must be positive".into());
        }
        if self.stage_two.local_side == 0 {
            return cfg("stage_two.local_side must be positive".into());
        }
        let (hmin, wmin) = self.generator.min_latent_side;
        if self.stage_two.latent_side < hmin.max(wmin) {
            return cfg(format!(
                "stage_two.latent_side {} is below the generator minimum {hmin}×{wmin}",
                self.stage_two.latent_side
            ));
        }
        let out = hmin.min(wmin) * self.generator.expansion();
        if self.crop_size > out {
            return cfg(format!(
                "crop_size {} exceeds the minimum texture side {out}",
                self.crop_size
            ));
        }
        if self.baselines.rca2_side < self.crop_size || self.baselines.rca6_side < self.crop_size {
            return cfg("RCA patch sides must be at least crop_size".into());
        }
        let e = &self.evaluation;
        for (name, v) in [
            ("gt_conf_threshold", e.gt_conf_threshold),
            ("pred_conf_threshold", e.pred_conf_threshold),
            ("nms_iou", e.nms_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return cfg(format!("evaluation.{name} must lie in [0,1], got {v}"));
            }
        }
        if e.shift_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return cfg("shift ratios must lie in [0,1]".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_toml().as_bytes())
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Hash of the settings that determine generator weights.
    pub fn generator_hash(&self) -> String {
        super::artifacts::spec_hash(&self.generator)
    }
}
