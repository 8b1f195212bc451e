//! End-to-end acceptance checks. Prints one line per criterion and fails
//! if any criterion fails.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use advtex_autograd::Tensor;
use advtex_core::bbox::BBox;
use advtex_core::detector::{detect_eval, load_detector, ToyDetector, NMS_IOU};
use advtex_core::evaluation::{
    compute_ap, evaluate_texture, masr, recall_confidence_curve, recall_thresholds, shift_study, TestSet, IOU_MATCH,
    MASR_THRESHOLDS,
};
use advtex_core::generator::{AuxNet, AuxNetSpec, Generator, GeneratorSpec};
use advtex_core::objectives::{info_objective, info_objective_var, tv_loss, tv_loss_var};
use advtex_core::pipeline::{
    init_local_latent, optimize_latent_stage_two, optimize_pixels, run_baseline, synthesize_texture, train_stage_one,
    window_mean, AttackContext, BaselineInputs, BaselineKind, RunConfig, StageOneConfig, StageTwoConfig, TrainingSet,
};
use advtex_core::synthetic::{render_scene, SceneConfig};
use advtex_core::torus::{toroidal_crop, TexturePattern};
use advtex_core::transforms::{
    apply_eot_var, apply_patch_var, sample_tps, tps_transform_var, EotConfig, EotParams, Range, TransformConfig,
};
use common::oracles::{ap_fixture, curve_oracle, equivariance_error, exhaustive_ap, tiled_crop, tv_oracle};
use common::{det, gradient_error, labelled, uniform, weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn toroidal_oracle() -> Outcome {
    let start = Instant::now();
    let mut cases = 0u64;
    for h in 1..=5 {
        for w in 1..=5 {
            let p = labelled(2, h, w);
            for r in -6..=12 {
                for c in -6..=12 {
                    for rows in 1..=10 {
                        for cols in 1..=10 {
                            let got = toroidal_crop(&p, r, c, rows, cols).map_err(|e| e.to_string())?;
                            if got != tiled_crop(&p, r, c, rows, cols) {
                                return Err(format!("{h}×{w} pattern at ({r}, {c}) size {rows}×{cols} differs"));
                            }
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(10),
        format!("{cases} crops equal tile-then-crop in {:.2} s", elapsed.as_secs_f64()),
    )
}

fn mid_range(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(0.3..0.7))
}

fn energy_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tv_worst: f64 = 0.0;
    for _ in 0..100 {
        let side = rng.random_range(2..=24);
        let t = uniform(&mut rng, &[3, side, side]);
        let got = tv_loss(&TexturePattern::new(t.clone()).unwrap()).map_err(|e| e.to_string())?;
        tv_worst = tv_worst.max((got - tv_oracle(&t)).abs());
    }
    let info_zero = (info_objective(&[0.0; 8], &[0.0; 8]).unwrap() - 2.0 * 2f64.ln()).abs();

    let x = uniform(&mut rng, &[2, 3, 4, 4]);
    let tv_fd = gradient_error(
        &x,
        |v| {
            tv_loss_var(v)
                .unwrap()
                .mul(v.graph().constant(Tensor::new(&[2], vec![1.0, -0.5])))
                .sum()
        },
        1e-4,
        1e-3,
    );
    let x = Tensor::from_fn(&[2, 6], |_| rng.random_range(-3.0..3.0));
    let info_fd = gradient_error(
        &x,
        |v| info_objective_var(v.select0(0), v.select0(1)).unwrap(),
        1e-4,
        1e-3,
    );
    let x = mid_range(&mut rng, &[3, 5, 5]);
    let p = EotParams {
        contrast: 1.1,
        brightness: 0.05,
        noise_amplitude: 0.05,
        ..EotParams::identity()
    };
    let w = weights(&[3, 5, 5]);
    let eot_fd = gradient_error(
        &x,
        |v| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            apply_eot_var(v, &p, &mut rng).mul(v.graph().constant(w.clone())).sum()
        },
        1e-4,
        1e-3,
    );
    let x = mid_range(&mut rng, &[3, 6, 6]);
    let warp = sample_tps(&mut rng, 4, 0.05).unwrap();
    let w = weights(&[3, 6, 6]);
    let tps_fd = gradient_error(
        &x,
        |v| {
            tps_transform_var(v, &warp)
                .unwrap()
                .mul(v.graph().constant(w.clone()))
                .sum()
        },
        1e-4,
        1e-3,
    );
    let patch = mid_range(&mut rng, &[3, 16, 16]);
    let image = uniform(&mut rng, &[3, 40, 40]);
    let boxes = [
        det(BBox::new(0.35, 0.5, 0.4, 0.8), 0.9),
        det(BBox::new(0.7, 0.45, 0.35, 0.7), 0.7),
    ];
    let cfg = TransformConfig {
        eot: EotConfig {
            scale: Range::new(0.5, 0.6),
            contrast: Range::new(0.9, 1.1),
            brightness: Range::new(-0.05, 0.05),
            noise_amplitude: Range::point(0.02),
            rotation: Range::new(-10.0, 10.0),
        },
        ..TransformConfig::default()
    };
    let w = weights(&[3, 40, 40]);
    let chain_fd = gradient_error(
        &patch,
        |v| {
            let g = v.graph();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            apply_patch_var(g.constant(image.clone()), &boxes, v, &mut rng, &cfg)
                .unwrap()
                .mul(g.constant(w.clone()))
                .sum()
        },
        1e-4,
        1e-3,
    );
    let detail = format!(
        "tv oracle {tv_worst:.1e}, info at zero {info_zero:.1e}, gradient rel err tv {tv_fd:.1e} info {info_fd:.1e} \
         eot {eot_fd:.1e} tps {tps_fd:.1e} placement {chain_fd:.1e}"
    );
    check(
        tv_worst < 1e-6
            && info_zero < 1e-9
            && tv_fd < 1e-3
            && info_fd < 1e-3
            && eot_fd < 1e-3
            && tps_fd < 1e-3
            && chain_fd < 1e-2,
        detail,
    )
}

fn equivariance() -> Outcome {
    let g = Generator::build(GeneratorSpec::desk(), &mut ChaCha8Rng::seed_from_u64(7)).map_err(|e| e.to_string())?;
    let shifts = [(1, 0), (0, 1), (2, 2), (3, 1), (1, 3), (3, 3)];
    let err = equivariance_error(&g, 8, 12, &shifts);
    check(
        g.spec().layers.len() == 7 && err <= 1e-5,
        format!(
            "7-layer generator, margin {} px, max abs error {err:.1e}",
            g.border_margin()
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    let thresholds = recall_thresholds();
    for _ in 0..1000 {
        let (preds, gt) = ap_fixture(&mut rng);
        let ap = compute_ap(&preds, &gt, IOU_MATCH).map_err(|e| e.to_string())?;
        worst = worst.max((ap - exhaustive_ap(&preds, &gt, IOU_MATCH)).abs());
        let curve = recall_confidence_curve(&preds, &gt, &thresholds).map_err(|e| e.to_string())?;
        monotone &= curve.windows(2).all(|w| w[1].1 <= w[0].1);
        monotone &= curve.iter().all(|&(t, r)| r == curve_oracle(&preds, &gt, t));
    }
    let at = |cx: f64| BBox::new(cx, 0.5, 0.15, 0.4);
    let hits = [
        Some(0.95),
        Some(0.85),
        Some(0.55),
        Some(0.45),
        Some(0.25),
        Some(0.15),
        None,
        Some(0.65),
        Some(0.05),
    ];
    let mut preds: Vec<Vec<_>> = hits
        .iter()
        .map(|h| h.map(|c| det(at(0.5), c)).into_iter().collect())
        .collect();
    preds.push(vec![det(at(0.1), 0.9)]);
    let report = masr(&preds, &vec![vec![at(0.5)]; 10], &MASR_THRESHOLDS).map_err(|e| e.to_string())?;
    let hand = [3, 4, 5, 5, 6, 7, 8, 8, 9];
    let counts_match = report
        .per_threshold
        .iter()
        .zip(hand)
        .all(|(&(_, asr), missed)| asr == missed as f64 / 10.0);
    check(
        worst < 1e-9 && monotone && counts_match,
        format!("AP vs exhaustive matcher max diff {worst:.1e} over 1000 fixtures, recall monotone {monotone}, mASR hand counts {counts_match}"),
    )
}

fn scenes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Tensor> {
    (0..n)
        .map(|_| render_scene(rng, &SceneConfig::default()).image)
        .collect()
}

fn desk_end_to_end() -> Outcome {
    let start = Instant::now();
    let err = |e: advtex_core::Error| e.to_string();
    let mut cfg = RunConfig::desk();
    cfg.stage_one = StageOneConfig {
        steps: 400,
        batch_size: 8,
        ..cfg.stage_one
    };
    cfg.stage_two = StageTwoConfig {
        steps: 300,
        batch_size: 8,
        ..cfg.stage_two
    };
    let detector = ToyDetector::bundled().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let train_images = scenes(&mut rng, 60);
    let test_images = scenes(&mut rng, 40);
    let boxes = detect_eval(&detector, &train_images, 0.5, NMS_IOU).map_err(err)?;
    let data = TrainingSet::from_parts(train_images, boxes).map_err(err)?;
    let ids = (0..test_images.len()).map(|i| i.to_string()).collect();
    let test = TestSet::from_images(&detector, ids, test_images, &cfg.evaluation).map_err(err)?;
    let ctx = AttackContext::new(&detector, &data, cfg.transforms, cfg.energy, cfg.obj_aggregation).map_err(err)?;

    let mut generator = Generator::build(cfg.generator.clone(), &mut rng).map_err(err)?;
    let mut aux = AuxNet::build(AuxNetSpec::for_generator(&cfg.generator), &mut rng).map_err(err)?;
    let log = train_stage_one(
        &ctx,
        &mut generator,
        &mut aux,
        &cfg.stage_one,
        cfg.crop_size,
        &mut rng,
        &mut (),
    )
    .map_err(err)?;
    let total: Vec<f64> = log.iter().map(|r| r.total).collect();
    let n = total.len();
    let (first, last) = (window_mean(&total, 0, 50), window_mean(&total, n - 50, n));
    let drop = (first - last) / first.abs();

    let unit = init_local_latent(&mut rng, cfg.generator.latent_channels, cfg.stage_two.local_side).map_err(err)?;
    let (unit, log) =
        optimize_latent_stage_two(&ctx, &generator, unit, &cfg.stage_two, cfg.crop_size, &mut rng, &mut ())
            .map_err(err)?;
    let energy: Vec<f64> = log.iter().map(|r| r.energy).collect();
    let n = energy.len();
    let (e_first, e_last) = (window_mean(&energy, 0, 25), window_mean(&energy, n - 25, n));

    let side = cfg.evaluation.texture_latent_side;
    let tc_ega = synthesize_texture(&generator, Some(&unit), (side, side), &mut rng).map_err(err)?;
    let inputs = BaselineInputs {
        generator: Some(&generator),
        ..Default::default()
    };
    let random = run_baseline(
        BaselineKind::RandomTexture,
        None,
        &inputs,
        &cfg.baselines,
        cfg.crop_size,
        side,
        &mut rng,
        &mut (),
    )
    .map_err(err)?;
    let margin = generator.border_margin();
    let eval = |texture: &TexturePattern, margin: usize, label: &str, rng: &mut ChaCha8Rng| {
        evaluate_texture(
            &detector,
            &test,
            texture,
            cfg.crop_size,
            margin,
            &cfg.transforms,
            &cfg.evaluation,
            label,
            rng,
        )
    };
    let ap_tc = eval(&tc_ega, margin, "tc-ega", &mut rng).map_err(err)?.ap;
    let ap_random = eval(&random, 0, "random", &mut rng).map_err(err)?.ap;

    let (patch, _) = optimize_pixels(
        &ctx,
        cfg.crop_size,
        false,
        &cfg.baselines,
        cfg.crop_size,
        &mut rng,
        &mut (),
    )
    .map_err(err)?;
    let shift = |texture: &TexturePattern, margin: usize, expandable: bool, rng: &mut ChaCha8Rng| {
        shift_study(
            &detector,
            &test,
            texture,
            cfg.crop_size,
            margin,
            expandable,
            &cfg.transforms,
            &cfg.evaluation,
            "",
            rng,
        )
    };
    let tc_shift = shift(&tc_ega, margin, true, &mut rng).map_err(err)?;
    let patch_shift = shift(&patch, 0, false, &mut rng).map_err(err)?;
    let elapsed = start.elapsed();

    let a = drop >= 0.3;
    let b = e_last < e_first;
    let c = ap_random - ap_tc >= 0.2;
    let d = tc_shift.std < patch_shift.std;
    let within = elapsed < Duration::from_secs(15 * 60);
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    let detail = format!(
        "(a) stage-one loss {first:.3} -> {last:.3}, drop {:.0}% {}; (b) stage-two energy {e_first:.3} -> {e_last:.3} {}; \
         (c) AP tc-ega {ap_tc:.3} vs random {ap_random:.3} {}; (d) shift std tc-ega {:.3} vs patch {:.3} {}; \
         {} test boxes, {:.0} s {}",
        100.0 * drop,
        mark(a),
        mark(b),
        mark(c),
        tc_shift.std,
        patch_shift.std,
        mark(d),
        test.total_boxes(),
        elapsed.as_secs_f64(),
        mark(within),
    );
    check(a && b && c && d && within, detail)
}

/// Needs converted detector weights and the pedestrian dataset; both are
/// named through environment variables.
fn full_scale() -> Option<Outcome> {
    let weights = std::env::var_os("ADVTEX_FULL_WEIGHTS").map(PathBuf::from)?;
    let dataset = std::env::var_os("ADVTEX_FULL_DATASET").map(PathBuf::from)?;
    Some(match load_detector("yolov2", Some(&weights)) {
        Ok(_) => Err(format!(
            "full-scale training over {} is not automated in this suite",
            dataset.display()
        )),
        Err(e) => Err(e.to_string()),
    })
}

fn main() {
    let criteria: [Criterion; 5] = [
        ("toroidal oracle suite", toroidal_oracle),
        ("energy, TV and gradient math", energy_math),
        ("generator shift equivariance", equivariance),
        ("metric oracles", metric_oracles),
        ("desk-scale end to end", desk_end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    match full_scale() {
        None => println!(
            "criterion 6: SKIP full-scale reproduction: set ADVTEX_FULL_WEIGHTS and ADVTEX_FULL_DATASET to run it"
        ),
        Some(Ok(detail)) => println!("criterion 6: PASS full-scale reproduction: {detail}"),
        Some(Err(detail)) => {
            failed += 1;
            println!("criterion 6: FAIL full-scale reproduction: {detail}");
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
