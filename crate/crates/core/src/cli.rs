//! The `advtex` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{
    extract_training_boxes, load_detector, DetectorAdapter, ExtractionConfig, ToyDetector, ToyTrainConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_clean, evaluate_texture, recall_csv, shift_csv, shift_study, summary_csv, write_json, EvalResult,
    ShiftReport, TestSet,
};
use crate::generator::{AuxNet, AuxNetSpec, Generator};
use crate::io::boxcache::BoxCache;
use crate::io::dataset::load_dataset;
use crate::io::imageio::{
    export_texture, load_texture, png_text, save_png, CONFIG_HASH_KEY, EXPANDABLE_KEY, MARGIN_KEY,
};
use crate::io::runlog::read_jsonl;
use crate::io::{write_atomic, RunLayout};
use crate::objectives::LossReport;
use crate::pipeline::{
    generator_checkpoint, init_local_latent, load_generator, load_latent_unit, optimize_latent_stage_two,
    optimize_pixels, run_baseline, save_latent_unit, synthesize_texture, train_stage_one, AttackContext,
    BaselineInputs, BaselineKind, RunConfig, RunRecorder, TrainedGenerator, TrainingSet,
};
use crate::synthetic::{render_scene, SceneConfig};
use crate::torus::TexturePattern;

mod plot;

#[derive(Debug, Parser)]
#[command(
    name = "advtex",
    version,
    about = "Expandable adversarial textures against person detectors"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Run config file; defaults to `<out>/config.toml`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Overrides the target detector.
    #[arg(long, global = true)]
    pub detector: Option<String>,
    /// Weights file for the target detector.
    #[arg(long, global = true)]
    pub detector_weights: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a preset run config.
    Init {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// Replace an existing config.
        #[arg(long)]
        force: bool,
    },
    /// Caches detector person boxes for a dataset split.
    ExtractBoxes {
        /// Split to process; defaults to the training split.
        #[arg(long)]
        split: Option<String>,
    },
    /// Stage one: trains the generator and auxiliary network.
    Train,
    /// Stage two: optimizes the toroidal latent unit.
    Refine,
    /// Produces a comparison texture.
    Baseline {
        #[arg(value_parser = parse_kind)]
        kind: BaselineKind,
        /// Input patch for `tiled-patch`.
        #[arg(long)]
        patch: Option<PathBuf>,
        /// Overrides the side of a pixel-optimized patch or torus.
        #[arg(long)]
        side: Option<usize>,
    },
    /// Generates a texture from the trained generator.
    Synthesize {
        /// Latent height and width in cells.
        #[arg(long, num_args = 2, value_names = ["H", "W"])]
        latent_sides: Option<Vec<usize>>,
        /// Samples the latent instead of tiling the optimized unit.
        #[arg(long)]
        ega: bool,
        /// Output PNG; defaults to `textures/<mode>.png`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Scores textures on the test split.
    Evaluate {
        /// Also scores the unmodified test images.
        #[arg(long)]
        clean: bool,
        /// Textures to score; defaults to every texture of the run.
        #[arg(long = "texture")]
        textures: Vec<PathBuf>,
    },
    /// AP of fixed crops as the window slides horizontally.
    ShiftStudy {
        #[arg(long = "texture")]
        textures: Vec<PathBuf>,
    },
    /// Renders loss, recall and shift charts as SVG.
    Plot,
    /// Renders a synthetic dataset for the toy detector.
    MakeToyDataset {
        #[arg(long, default_value_t = 60)]
        train: usize,
        #[arg(long, default_value_t = 40)]
        test: usize,
        /// Dataset root; defaults to the config dataset.
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Trains toy detector weights on synthetic scenes.
    TrainToyDetector {
        #[arg(long, default_value_t = 3000)]
        steps: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_kind(s: &str) -> std::result::Result<BaselineKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

struct Run {
    cfg: RunConfig,
    layout: RunLayout,
    hash: String,
    rng: ChaCha8Rng,
}

impl Run {
    fn load(cli: &Cli) -> Result<Self> {
        let path = cli.config.clone().unwrap_or_else(|| RunLayout::new(&cli.out).config());
        if !path.exists() {
            return Err(Error::Config(format!(
                "no run config at {}; create one with `advtex init`",
                path.display()
            )));
        }
        let mut cfg = RunConfig::load(&path)?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(name) = &cli.detector {
            cfg.detector = name.clone();
        }
        if let Some(w) = &cli.detector_weights {
            cfg.detector_weights = Some(w.clone());
        }
        cfg.validate()?;
        let layout = RunLayout::new(&cli.out);
        layout.create()?;
        Ok(Self {
            hash: cfg.hash(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            layout,
        })
    }

    /// Records the effective config next to the logs of `command`.
    fn snapshot(&self, command: &str) -> Result<()> {
        self.cfg
            .save(&self.layout.logs().join(format!("{command}.config.toml")))
    }

    fn detector(&self) -> Result<Box<dyn DetectorAdapter>> {
        load_detector(&self.cfg.detector, self.cfg.detector_weights.as_deref())
    }

    fn training_set(&self, detector: &dyn DetectorAdapter) -> Result<TrainingSet> {
        let dataset = load_dataset(&self.cfg.dataset, &self.cfg.train_split)?;
        let path = self.layout.box_cache(&self.cfg.detector, &self.cfg.train_split);
        if !path.exists() {
            return Err(Error::ArtifactMismatch(format!(
                "no box cache at {}; run `advtex extract-boxes` first",
                path.display()
            )));
        }
        let cache = BoxCache::load(&path)?;
        if cache.detector != self.cfg.detector {
            return Err(Error::ArtifactMismatch(format!(
                "box cache {} belongs to detector {}",
                path.display(),
                cache.detector
            )));
        }
        TrainingSet::load(&dataset, &cache, detector.input_size())
    }

    fn context<'a>(&self, detector: &'a dyn DetectorAdapter, data: &'a TrainingSet) -> Result<AttackContext<'a>> {
        AttackContext::new(
            detector,
            data,
            self.cfg.transforms,
            self.cfg.energy,
            self.cfg.obj_aggregation,
        )
    }

    fn generator_path(&self) -> PathBuf {
        self.layout.checkpoints().join("generator.ckpt")
    }

    fn latent_path(&self) -> PathBuf {
        self.layout.checkpoints().join("latent.ckpt")
    }

    fn generator(&self) -> Result<TrainedGenerator> {
        let path = self.generator_path();
        if !path.exists() {
            return Err(Error::ArtifactMismatch(format!(
                "no generator at {}; run `advtex train` first",
                path.display()
            )));
        }
        load_generator(&path, Some(&self.cfg.generator))
    }

    fn export(&self, texture: &TexturePattern, path: &Path, margin: usize, expandable: bool) -> Result<()> {
        let margin = margin.to_string();
        let text = [
            (CONFIG_HASH_KEY, self.hash.as_str()),
            (MARGIN_KEY, margin.as_str()),
            (EXPANDABLE_KEY, if expandable { "true" } else { "false" }),
        ];
        let preview = export_texture(texture, path, expandable, &text)?;
        println!("wrote {} ({}×{})", path.display(), texture.height(), texture.width());
        if let Some(p) = preview {
            println!("wrote {}", p.display());
        }
        Ok(())
    }

    fn test_set(&self, detector: &dyn DetectorAdapter) -> Result<TestSet> {
        let dataset = load_dataset(&self.cfg.dataset, &self.cfg.test_split)?;
        let test = TestSet::load(detector, &dataset, &self.cfg.evaluation)?;
        log::info!("{} test images, {} ground-truth boxes", test.len(), test.total_boxes());
        Ok(test)
    }

    /// Textures named on the command line, or every exported texture.
    fn textures(&self, given: &[PathBuf]) -> Result<Vec<PathBuf>> {
        if !given.is_empty() {
            return Ok(given.to_vec());
        }
        let dir = self.layout.textures();
        let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|e| e == "png")
                    && !p
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .is_some_and(|s| s.ends_with("_tiled3x3"))
            })
            .collect();
        found.sort();
        if found.is_empty() {
            return Err(Error::InvalidArgument(format!("no textures in {}", dir.display())));
        }
        Ok(found)
    }
}

/// A texture file with the crop settings stored alongside it.
struct TextureFile {
    label: String,
    texture: TexturePattern,
    margin: usize,
    expandable: bool,
}

fn read_texture(path: &Path, run_hash: &str) -> Result<TextureFile> {
    let texture = load_texture(path)?;
    if let Some(h) = png_text(path, CONFIG_HASH_KEY)? {
        if h != run_hash {
            log::warn!("{} was produced under a different run config", path.display());
        }
    }
    let margin = match png_text(path, MARGIN_KEY)? {
        Some(m) => m
            .parse()
            .map_err(|_| Error::format("texture metadata", path, format!("bad margin {m:?}")))?,
        None => 0,
    };
    Ok(TextureFile {
        label: path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("texture")
            .to_owned(),
        expandable: png_text(path, EXPANDABLE_KEY)?.as_deref() != Some("false"),
        texture,
        margin,
    })
}

fn mean_of(reports: &[LossReport], f: impl Fn(&LossReport) -> f64) -> f64 {
    let tail = &reports[reports.len().saturating_sub(50)..];
    tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Init { preset, force } => {
            let path = cli.config.clone().unwrap_or_else(|| RunLayout::new(&cli.out).config());
            if path.exists() && !force {
                return Err(Error::InvalidArgument(format!(
                    "{} exists; pass --force to replace it",
                    path.display()
                )));
            }
            let mut cfg = match preset {
                Preset::Desk => RunConfig::desk(),
                Preset::Full => RunConfig::full(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(d) = &cli.detector {
                cfg.detector = d.clone();
            }
            cfg.validate()?;
            cfg.save(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::MakeToyDataset { train, test, root } => {
            let run = Run::load(cli)?;
            let root = root.clone().unwrap_or_else(|| run.cfg.dataset.clone());
            let mut rng = run.rng;
            let scene = SceneConfig::default();
            for (split, n) in [(&run.cfg.train_split, *train), (&run.cfg.test_split, *test)] {
                let dir = root.join(split);
                for i in 0..n {
                    save_png(
                        &render_scene(&mut rng, &scene).image,
                        &dir.join(format!("scene-{i:05}.png")),
                        &[],
                    )?;
                }
                println!("wrote {n} scenes to {}", dir.display());
            }
            Ok(())
        }
        Command::TrainToyDetector { steps, output } => {
            let seed = cli.seed.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut det = ToyDetector::init(Default::default(), &mut rng)?;
            let cfg = ToyTrainConfig {
                steps: *steps,
                ..Default::default()
            };
            let mut window = 0.0;
            det.train(&cfg, &mut rng, |step, loss| {
                window += loss;
                if (step + 1) % 100 == 0 {
                    log::info!("step {} loss {:.4}", step + 1, window / 100.0);
                    window = 0.0;
                }
            })?;
            det.to_checkpoint().save(output)?;
            println!("wrote {}", output.display());
            Ok(())
        }
        Command::ExtractBoxes { split } => {
            let run = Run::load(cli)?;
            let split = split.clone().unwrap_or_else(|| run.cfg.train_split.clone());
            let detector = run.detector()?;
            let dataset = load_dataset(&run.cfg.dataset, &split)?;
            let cfg = ExtractionConfig::for_family(detector.family());
            let cache = extract_training_boxes(detector.as_ref(), &dataset, &cfg, 16)?;
            let path = run.layout.box_cache(&run.cfg.detector, &split);
            cache.save(&path)?;
            println!(
                "{} boxes on {} images → {}",
                cache.total_boxes(),
                cache.len(),
                path.display()
            );
            Ok(())
        }
        Command::Train => {
            let mut run = Run::load(cli)?;
            run.snapshot("stage_one")?;
            let detector = run.detector()?;
            let data = run.training_set(detector.as_ref())?;
            let ctx = run.context(detector.as_ref(), &data)?;
            let mut generator = Generator::build(run.cfg.generator.clone(), &mut run.rng)?;
            let mut aux = AuxNet::build(AuxNetSpec::for_generator(&run.cfg.generator), &mut run.rng)?;
            let mut recorder = RunRecorder::create(
                &run.layout,
                "stage_one",
                run.cfg.stage_one.checkpoint_every,
                Some(run.hash.clone()),
            )?;
            let log = train_stage_one(
                &ctx,
                &mut generator,
                &mut aux,
                &run.cfg.stage_one,
                run.cfg.crop_size,
                &mut run.rng,
                &mut recorder,
            )?;
            let best = recorder.best();
            recorder.finish()?;
            generator_checkpoint(&generator, &aux, log.len(), Some(&run.hash)).save(&run.generator_path())?;
            println!(
                "stage one: {} steps, last-50 total {:.4}, energy {:.4}, info {:.4}",
                log.len(),
                mean_of(&log, |r| r.total),
                mean_of(&log, |r| r.energy),
                mean_of(&log, |r| r.info)
            );
            if let Some((e, step)) = best {
                println!("lowest energy {e:.4} at step {step}");
            }
            println!("wrote {}", run.generator_path().display());
            Ok(())
        }
        Command::Refine => {
            let mut run = Run::load(cli)?;
            run.snapshot("stage_two")?;
            let trained = run.generator()?;
            let detector = run.detector()?;
            let data = run.training_set(detector.as_ref())?;
            let ctx = run.context(detector.as_ref(), &data)?;
            let init = init_local_latent(
                &mut run.rng,
                run.cfg.generator.latent_channels,
                run.cfg.stage_two.local_side,
            )?;
            let mut recorder = RunRecorder::create(
                &run.layout,
                "stage_two",
                run.cfg.stage_one.checkpoint_every,
                Some(run.hash.clone()),
            )?
            .for_generator(&run.cfg.generator);
            let (unit, log) = optimize_latent_stage_two(
                &ctx,
                &trained.generator,
                init,
                &run.cfg.stage_two,
                run.cfg.crop_size,
                &mut run.rng,
                &mut recorder,
            )?;
            recorder.finish()?;
            save_latent_unit(&run.latent_path(), &unit, &run.cfg.generator)?;
            println!(
                "stage two: {} steps, last-50 energy {:.4}",
                log.len(),
                mean_of(&log, |r| r.energy)
            );
            println!("wrote {}", run.latent_path().display());
            Ok(())
        }
        Command::Baseline { kind, patch, side } => {
            let mut run = Run::load(cli)?;
            run.snapshot(&format!("baseline-{kind}"))?;
            let path = run.layout.textures().join(format!("{kind}.png"));
            let side_of = |default: usize| side.unwrap_or(default);
            let pixel_side = match kind {
                BaselineKind::Tca => Some((side_of(run.cfg.baselines.tca_side), true)),
                BaselineKind::Rca2x => Some((side_of(run.cfg.baselines.rca2_side), false)),
                BaselineKind::Rca6x => Some((side_of(run.cfg.baselines.rca6_side), false)),
                _ => None,
            };
            if let Some((n, wrap)) = pixel_side {
                let detector = run.detector()?;
                let data = run.training_set(detector.as_ref())?;
                let ctx = run.context(detector.as_ref(), &data)?;
                let mut recorder = RunRecorder::create(
                    &run.layout,
                    &format!("baseline-{kind}"),
                    run.cfg.stage_one.checkpoint_every,
                    Some(run.hash.clone()),
                )?;
                let (texture, _) = optimize_pixels(
                    &ctx,
                    n,
                    wrap,
                    &run.cfg.baselines,
                    run.cfg.crop_size,
                    &mut run.rng,
                    &mut recorder,
                )?;
                recorder.finish()?;
                return run.export(&texture, &path, 0, wrap);
            }
            let trained = match kind {
                BaselineKind::Ega | BaselineKind::TcEga => Some(run.generator()?),
                _ if run.generator_path().exists() => Some(run.generator()?),
                _ => None,
            };
            let unit = match kind {
                BaselineKind::TcEga => Some(load_latent_unit(&run.latent_path(), &run.cfg.generator)?),
                _ => None,
            };
            let patch = patch.as_deref().map(load_texture).transpose()?;
            let inputs = BaselineInputs {
                generator: trained.as_ref().map(|t| &t.generator),
                z_local: unit.as_ref(),
                patch: patch.as_ref(),
            };
            let texture = run_baseline(
                *kind,
                None,
                &inputs,
                &run.cfg.baselines,
                run.cfg.crop_size,
                run.cfg.evaluation.texture_latent_side,
                &mut run.rng,
                &mut (),
            )?;
            let margin = match kind {
                BaselineKind::Ega | BaselineKind::TcEga => run.cfg.generator.border_margin(),
                _ => 0,
            };
            run.export(&texture, &path, margin, kind.is_expandable())
        }
        Command::Synthesize {
            latent_sides,
            ega,
            output,
        } => {
            let mut run = Run::load(cli)?;
            let trained = run.generator()?;
            let n = run.cfg.evaluation.texture_latent_side;
            let sides = match latent_sides.as_deref() {
                Some([h, w]) => (*h, *w),
                _ => (n, n),
            };
            let unit = if *ega {
                None
            } else {
                Some(load_latent_unit(&run.latent_path(), &run.cfg.generator)?)
            };
            let texture = synthesize_texture(&trained.generator, unit.as_ref(), sides, &mut run.rng)?;
            let name = if *ega { "ega" } else { "tc-ega" };
            let path = output
                .clone()
                .unwrap_or_else(|| run.layout.textures().join(format!("{name}.png")));
            run.export(&texture, &path, trained.generator.border_margin(), true)
        }
        Command::Evaluate { clean, textures } => {
            let mut run = Run::load(cli)?;
            let detector = run.detector()?;
            let test = run.test_set(detector.as_ref())?;
            let mut results: Vec<EvalResult> = Vec::new();
            if *clean {
                results.push(evaluate_clean(detector.as_ref(), &test, &run.cfg.evaluation)?);
            }
            if !*clean || !textures.is_empty() {
                for path in run.textures(textures)? {
                    let t = read_texture(&path, &run.hash)?;
                    results.push(evaluate_texture(
                        detector.as_ref(),
                        &test,
                        &t.texture,
                        run.cfg.crop_size,
                        t.margin,
                        &run.cfg.transforms,
                        &run.cfg.evaluation,
                        &t.label,
                        &mut run.rng,
                    )?);
                }
            }
            println!("{:<24} {:>7} {:>7}", "texture", "AP", "mASR");
            for r in &results {
                println!("{:<24} {:>7.3} {:>7.3}", r.label, r.ap, r.asr.masr);
            }
            let dir = run.layout.eval();
            write_atomic(&dir.join("summary.csv"), summary_csv(&results).as_bytes())?;
            write_atomic(&dir.join("recall.csv"), recall_csv(&results).as_bytes())?;
            write_json(&dir.join("results.json"), &results)?;
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::ShiftStudy { textures } => {
            let mut run = Run::load(cli)?;
            let detector = run.detector()?;
            let test = run.test_set(detector.as_ref())?;
            let mut reports: Vec<ShiftReport> = Vec::new();
            for path in run.textures(textures)? {
                let t = read_texture(&path, &run.hash)?;
                let r = shift_study(
                    detector.as_ref(),
                    &test,
                    &t.texture,
                    run.cfg.crop_size,
                    t.margin,
                    t.expandable,
                    &run.cfg.transforms,
                    &run.cfg.evaluation,
                    &t.label,
                    &mut run.rng,
                )?;
                let aps: Vec<String> = r.points.iter().map(|(_, ap)| format!("{ap:.3}")).collect();
                println!("{:<24} std {:.3}  AP [{}]", r.label, r.std, aps.join(", "));
                reports.push(r);
            }
            let dir = run.layout.eval();
            write_atomic(&dir.join("shift.csv"), shift_csv(&reports).as_bytes())?;
            write_json(&dir.join("shift.json"), &reports)?;
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::Plot => {
            let layout = RunLayout::new(&cli.out);
            let out = layout.eval().join("plots");
            let mut written = Vec::new();
            if let Ok(entries) = std::fs::read_dir(layout.logs()) {
                let mut logs: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
                    .collect();
                logs.sort();
                for path in logs {
                    let reports: Vec<LossReport> = read_jsonl(&path)?;
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
                    let target = out.join(format!("{stem}.svg"));
                    write_atomic(&target, plot::loss_chart(stem, &reports).as_bytes())?;
                    written.push(target);
                }
            }
            let results = layout.eval().join("results.json");
            if results.exists() {
                let text = std::fs::read_to_string(&results).map_err(|e| Error::io(&results, e))?;
                let results: Vec<EvalResult> =
                    serde_json::from_str(&text).map_err(|e| Error::format("evaluation results", layout.eval(), e))?;
                let target = out.join("recall.svg");
                write_atomic(&target, plot::recall_chart(&results).as_bytes())?;
                written.push(target);
            }
            let shift = layout.eval().join("shift.json");
            if shift.exists() {
                let text = std::fs::read_to_string(&shift).map_err(|e| Error::io(&shift, e))?;
                let reports: Vec<ShiftReport> =
                    serde_json::from_str(&text).map_err(|e| Error::format("shift study", &shift, e))?;
                let target = out.join("shift.svg");
                write_atomic(&target, plot::shift_chart(&reports).as_bytes())?;
                written.push(target);
            }
            if written.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "nothing to plot under {}",
                    layout.root.display()
                )));
            }
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
