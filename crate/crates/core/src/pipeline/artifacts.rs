//! Checkpoints and training logs written by the optimizers.

use std::path::{Path, PathBuf};

use advtex_autograd::{ParamSet, Tensor};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::stages::TrainObserver;
use crate::error::{Error, Result};
use crate::generator::{AuxNet, AuxNetSpec, Generator, GeneratorSpec};
use crate::io::checkpoint::Checkpoint;
use crate::io::runlog::JsonlWriter;
use crate::io::RunLayout;
use crate::objectives::LossReport;
use crate::torus::LocalLatentPattern;

pub const GENERATOR_KIND: &str = "generator";
pub const LATENT_KIND: &str = "latent-unit";
pub const PIXELS_KIND: &str = "pixels";

/// SHA-256 of a generator spec, hex encoded.
pub fn spec_hash(spec: &GeneratorSpec) -> String {
    let digest = Sha256::digest(serde_json::to_vec(spec).expect("generator spec serializes"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn metadata<T: serde::de::DeserializeOwned>(ck: &Checkpoint, key: &str) -> Result<T> {
    let value = ck
        .metadata
        .get(key)
        .cloned()
        .ok_or_else(|| Error::ArtifactMismatch(format!("{} checkpoint lacks {key:?}", ck.kind)))?;
    serde_json::from_value(value).map_err(|e| Error::ArtifactMismatch(format!("{key}: {e}")))
}

pub fn generator_checkpoint(generator: &Generator, aux: &AuxNet, step: usize, config_hash: Option<&str>) -> Checkpoint {
    let mut ck = Checkpoint::new(GENERATOR_KIND)
        .with_group("generator", generator.params().clone())
        .with_group("aux", aux.params().clone());
    ck.config_hash = config_hash.map(str::to_owned);
    ck.metadata = json!({
        "generator": generator.spec(),
        "aux": aux.spec(),
        "step": step,
        "generator_hash": spec_hash(generator.spec()),
    });
    ck
}

/// Trained networks restored from a checkpoint.
pub struct TrainedGenerator {
    pub generator: Generator,
    pub aux: AuxNet,
    pub step: usize,
}

/// Restores a generator checkpoint. With `expected` set, the stored spec
/// must match it exactly.
pub fn load_generator(path: &Path, expected: Option<&GeneratorSpec>) -> Result<TrainedGenerator> {
    let ck = Checkpoint::load(path)?;
    ck.expect_kind(GENERATOR_KIND)?;
    let spec: GeneratorSpec = metadata(&ck, "generator")?;
    let stored: String = metadata(&ck, "generator_hash")?;
    if stored != spec_hash(&spec) {
        return Err(Error::ArtifactMismatch(format!(
            "{}: generator hash does not match its spec",
            path.display()
        )));
    }
    if let Some(want) = expected {
        if spec_hash(want) != stored {
            return Err(Error::ArtifactMismatch(format!(
                "{} was trained with a different generator architecture",
                path.display()
            )));
        }
    }
    let aux_spec: AuxNetSpec = metadata(&ck, "aux")?;
    Ok(TrainedGenerator {
        generator: Generator::from_parts(spec, ck.group("generator")?.clone())?,
        aux: AuxNet::from_parts(aux_spec, ck.group("aux")?.clone())?,
        step: metadata(&ck, "step")?,
    })
}

pub fn save_latent_unit(path: &Path, unit: &LocalLatentPattern, generator: &GeneratorSpec) -> Result<()> {
    let mut params = ParamSet::new();
    params.push("z_local", unit.tensor().clone());
    let mut ck = Checkpoint::new(LATENT_KIND).with_group("latent", params);
    ck.metadata = json!({ "generator_hash": spec_hash(generator) });
    ck.save(path)
}

/// Loads a latent unit and checks it belongs to `generator`.
pub fn load_latent_unit(path: &Path, generator: &GeneratorSpec) -> Result<LocalLatentPattern> {
    let ck = Checkpoint::load(path)?;
    ck.expect_kind(LATENT_KIND)?;
    let stored: String = metadata(&ck, "generator_hash")?;
    if stored != spec_hash(generator) {
        return Err(Error::ArtifactMismatch(format!(
            "{} was optimized for a different generator",
            path.display()
        )));
    }
    let group = ck.group("latent")?;
    if group.len() != 1 {
        return Err(Error::ArtifactMismatch("latent checkpoint must hold one tensor".into()));
    }
    LocalLatentPattern::new(group.get(0).clone())
}

/// Writes JSONL loss logs and periodic checkpoints under a run directory.
pub struct RunRecorder {
    layout: RunLayout,
    log: JsonlWriter,
    every: usize,
    config_hash: Option<String>,
    generator_spec: Option<GeneratorSpec>,
    best: Option<(f64, usize)>,
    pub checkpoints: Vec<PathBuf>,
}

impl RunRecorder {
    /// `name` selects the log file `logs/<name>.jsonl`. A zero `every`
    /// disables periodic checkpoints.
    pub fn create(layout: &RunLayout, name: &str, every: usize, config_hash: Option<String>) -> Result<Self> {
        layout.create()?;
        Ok(Self {
            layout: layout.clone(),
            log: JsonlWriter::create(&layout.logs().join(format!("{name}.jsonl")))?,
            every,
            config_hash,
            generator_spec: None,
            best: None,
            checkpoints: Vec::new(),
        })
    }

    /// Stage-two checkpoints record the generator they were optimized for.
    pub fn for_generator(mut self, spec: &GeneratorSpec) -> Self {
        self.generator_spec = Some(spec.clone());
        self
    }

    /// Lowest mean energy seen so far and its step.
    pub fn best(&self) -> Option<(f64, usize)> {
        self.best
    }

    fn record(&mut self, report: &LossReport) -> Result<bool> {
        self.log.write(report)?;
        if self.best.is_none_or(|(e, _)| report.energy < e) {
            self.best = Some((report.energy, report.step));
        }
        let due = self.every > 0 && (report.step + 1).is_multiple_of(self.every);
        if due {
            self.log.flush()?;
        }
        Ok(due)
    }

    pub fn finish(mut self) -> Result<()> {
        self.log.flush()
    }
}

impl TrainObserver for RunRecorder {
    fn stage_one_step(&mut self, report: &LossReport, generator: &Generator, aux: &AuxNet) -> Result<()> {
        if self.record(report)? {
            let path = self
                .layout
                .checkpoints()
                .join(format!("generator-{:06}.ckpt", report.step + 1));
            generator_checkpoint(generator, aux, report.step + 1, self.config_hash.as_deref()).save(&path)?;
            self.checkpoints.push(path);
        }
        Ok(())
    }

    fn stage_two_step(&mut self, report: &LossReport, z_local: &Tensor) -> Result<()> {
        if self.record(report)? {
            if let Some(spec) = &self.generator_spec {
                let path = self
                    .layout
                    .checkpoints()
                    .join(format!("latent-{:06}.ckpt", report.step + 1));
                save_latent_unit(&path, &LocalLatentPattern::new(z_local.clone())?, spec)?;
                self.checkpoints.push(path);
            }
        }
        Ok(())
    }

    fn pixel_step(&mut self, report: &LossReport, pixels: &Tensor) -> Result<()> {
        if self.record(report)? {
            let mut params = ParamSet::new();
            params.push("pixels", pixels.clone());
            let path = self
                .layout
                .checkpoints()
                .join(format!("pixels-{:06}.ckpt", report.step + 1));
            Checkpoint::new(PIXELS_KIND).with_group("pixels", params).save(&path)?;
            self.checkpoints.push(path);
        }
        Ok(())
    }

    fn diverged(&mut self, report: &LossReport, nets: Option<(&Generator, &AuxNet)>) {
        let _ = self.log.write(report);
        let _ = self.log.flush();
        if let Some((generator, aux)) = nets {
            let path = self.layout.checkpoints().join("generator-diverged.ckpt");
            if let Err(e) = generator_checkpoint(generator, aux, report.step, self.config_hash.as_deref()).save(&path) {
                log::error!("could not save the diverged checkpoint: {e}");
            }
        }
    }
}
