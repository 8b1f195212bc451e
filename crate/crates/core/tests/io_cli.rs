mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use advtex_autograd::Tensor;
use advtex_core::io::dataset::load_dataset;
use advtex_core::io::imageio::{export_texture, load_texture, png_text, save_png, CONFIG_HASH_KEY};
use advtex_core::pipeline::RunConfig;
use advtex_core::torus::{tile_pattern, TexturePattern};
use advtex_core::Error;
use common::uniform;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn advtex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advtex"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("advtex runs")
}

fn succeed(dir: &Path, args: &[&str]) -> String {
    let out = advtex(dir, args);
    assert!(
        out.status.success(),
        "advtex {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_images(dir: &Path, names: &[&str]) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for name in names {
        save_png(&uniform(&mut rng, &[3, 8, 12]), &dir.join(name), &[]).unwrap();
    }
}

#[test]
fn empty_split_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("test")).unwrap();
    let data = load_dataset(dir.path(), "test").unwrap();
    assert!(data.is_empty());
    assert!(load_dataset(dir.path(), "train").unwrap().is_empty());
}

#[test]
fn manifest_is_sorted_and_stable() {
    let dir = tempfile::tempdir().unwrap();
    write_images(&dir.path().join("train"), &["c.png", "a.png", "b.png"]);
    std::fs::write(dir.path().join("train/notes.txt"), "not an image").unwrap();
    let data = load_dataset(dir.path(), "train").unwrap();
    let ids: Vec<&str> = data.records().iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!((data.records()[0].width, data.records()[0].height), (12, 8));
    let again = load_dataset(dir.path(), "train").unwrap();
    assert_eq!(serde_json::to_vec(&data).unwrap(), serde_json::to_vec(&again).unwrap());
    let img = data.load_image(&data.records()[1]).unwrap();
    assert_eq!(img.shape(), &[3, 8, 12]);
}

#[test]
fn corrupt_images_abort_the_load() {
    let dir = tempfile::tempdir().unwrap();
    write_images(&dir.path().join("train"), &["a.png", "b.png"]);
    std::fs::write(dir.path().join("train/broken.png"), b"not a png").unwrap();
    assert!(matches!(
        load_dataset(dir.path(), "train"),
        Err(Error::CorruptDataset {
            corrupt: 1,
            total: 3,
            ..
        })
    ));
    assert!(matches!(
        load_dataset(&dir.path().join("missing"), "train"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn half_grey_exports_as_128() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grey.png");
    export_texture(&TexturePattern::constant(5, 7, [0.5; 3]).unwrap(), &path, false, &[]).unwrap();
    let raw = image::open(&path).unwrap().to_rgb8();
    assert_eq!(raw.dimensions(), (7, 5));
    assert!(raw.as_raw().iter().all(|&b| b == 128));
}

#[test]
fn export_round_trip_is_within_one_level() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let texture = TexturePattern::new(uniform(&mut rng, &[3, 20, 30])).unwrap();
    let path = dir.path().join("t.png");
    export_texture(&texture, &path, false, &[(CONFIG_HASH_KEY, "cafe")]).unwrap();
    let back = load_texture(&path).unwrap();
    assert!(texture.tensor().max_abs_diff(back.tensor()) <= 1.0 / 255.0);
    assert_eq!(png_text(&path, CONFIG_HASH_KEY).unwrap().as_deref(), Some("cafe"));
}

#[test]
fn preview_is_the_tiled_texture() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let texture = TexturePattern::new(uniform(&mut rng, &[3, 9, 11])).unwrap();
    let path = dir.path().join("t.png");
    let preview = export_texture(&texture, &path, true, &[])
        .unwrap()
        .expect("preview written");
    let reloaded = load_texture(&path).unwrap();
    let tiled: Tensor = tile_pattern(reloaded.tensor(), 3, 3).unwrap();
    assert_eq!(load_texture(&preview).unwrap().tensor(), &tiled);
}

#[test]
fn no_arguments_print_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = advtex(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(advtex(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(advtex(dir.path(), &["baseline", "advpatch"]).status.code(), Some(2));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = advtex(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[config]"));
}

fn configure(dir: &Path, preset: &str, edit: impl FnOnce(&mut RunConfig)) -> PathBuf {
    succeed(dir, &["init", "--preset", preset]);
    let path = dir.join("run/config.toml");
    let mut cfg = RunConfig::load(&path).unwrap();
    cfg.detector = "toy".into();
    cfg.dataset = dir.join("data");
    edit(&mut cfg);
    cfg.save(&path).unwrap();
    path
}

#[test]
fn clean_evaluation_reports_full_ap() {
    let dir = tempfile::tempdir().unwrap();
    configure(dir.path(), "desk", |_| {});
    succeed(dir.path(), &["make-toy-dataset", "--train", "0", "--test", "6"]);
    let stdout = succeed(dir.path(), &["evaluate", "--clean"]);
    assert!(
        stdout.lines().any(|l| l.starts_with("clean") && l.contains("1.000")),
        "{stdout}"
    );
    let summary = std::fs::read_to_string(dir.path().join("run/eval/summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "clean");
    assert_eq!(row[1].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn full_geometry_run_synthesizes_324_pixels() {
    let dir = tempfile::tempdir().unwrap();
    configure(dir.path(), "full", |cfg| {
        cfg.stage_one.steps = 1;
        cfg.stage_one.batch_size = 1;
        cfg.stage_two.steps = 1;
        cfg.stage_two.batch_size = 1;
    });
    succeed(dir.path(), &["make-toy-dataset", "--train", "4", "--test", "0"]);
    succeed(dir.path(), &["extract-boxes"]);
    succeed(dir.path(), &["train"]);
    succeed(dir.path(), &["refine"]);
    succeed(dir.path(), &["synthesize", "--latent-sides", "9", "9"]);
    let texture = load_texture(&dir.path().join("run/textures/tc-ega.png")).unwrap();
    assert_eq!(texture.tensor().shape(), &[3, 324, 324]);
    assert!(dir.path().join("run/textures/tc-ega_tiled3x3.png").exists());
}
