use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_cli::{long_flags, subcommand_names};
use scene_core::audio::write_wav;
use scene_core::model::{mobilenet, ArchConfig, DType, Init, INIT_STD};
use scene_core::{SceneLabel, Waveform};

fn scene(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scene"))
        .args(args)
        .env_remove("SCENE_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn noise_wav(path: &Path, seconds: usize, seed: u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let w = Waveform::new((0..seconds * 16_000).map(|_| r.random_range(-0.2f32..0.2)).collect(), 16_000).unwrap();
    write_wav(&w, path).unwrap();
}

/// A 31 s speech recording (three clips after the lead-in) and six traffic
/// clips, so three get speech mixed in.
fn sources(dir: &Path) -> PathBuf {
    std::fs::create_dir_all(dir.join("speech")).unwrap();
    std::fs::create_dir_all(dir.join("traffic")).unwrap();
    noise_wav(&dir.join("speech/talk.wav"), 31, 1);
    for i in 0..6 {
        noise_wav(&dir.join(format!("traffic/t{i}.wav")), 10, 10 + i);
    }
    let p = dir.join("sources.json");
    std::fs::write(
        &p,
        r#"{
  "speech": {"name": "speech", "root": "speech"},
  "corpora": [{"name": "traffic", "label": "in_traffic", "root": "traffic", "standardise_by": "traffic"}]
}"#,
    )
    .unwrap();
    p
}

fn model(dir: &Path) -> PathBuf {
    let m = mobilenet(&ArchConfig::with_labels(SceneLabel::names()), Init::Random { seed: 3, std: INIT_STD }).unwrap();
    let p = dir.join("m.weights");
    m.save(&p, DType::F16).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_documents_every_flag_each_command_parses() {
    let top = stdout(&scene(&["--help"]));
    for sub in subcommand_names() {
        if sub == "help" {
            continue;
        }
        assert!(top.contains(&sub), "top-level help omits {sub}");
        let o = scene(&[&sub, "--help"]);
        assert!(o.status.success());
        let help = stdout(&o);
        for flag in long_flags(&sub).unwrap() {
            assert!(help.contains(&format!("--{flag}")), "{sub} --help omits --{flag}");
        }
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(scene(&[]).status.code(), Some(1));
    assert_eq!(scene(&["frobnicate"]).status.code(), Some(1));
    let o = scene(&["infer", "--wav", "x.wav"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--model"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 1, "learning_rat": 0.1}"#).unwrap();
    let o = scene(&["--config", s(&cfg), "inspect-model", "--model", "nope.weights"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rat"));
}

#[test]
fn missing_inputs_are_data_errors() {
    assert_eq!(scene(&["inspect-model", "--model", "/nonexistent/m.weights"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.weights");
    std::fs::write(&bogus, b"not a weights file").unwrap();
    assert_eq!(scene(&["inspect-model", "--model", s(&bogus)]).status.code(), Some(2));
}

#[test]
fn dataset_build_eval_and_train_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let src = sources(dir.path());
    let (a, b) = (dir.path().join("ds_a"), dir.path().join("ds_b"));
    for out in [&a, &b] {
        let o = scene(&["build-dataset", "--sources", s(&src), "--out", s(out), "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let manifest = std::fs::read(a.join("manifest.json")).unwrap();
    assert_eq!(manifest, std::fs::read(b.join("manifest.json")).unwrap());
    let resolved: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 7);

    let m: serde_json::Value = serde_json::from_slice(&manifest).unwrap();
    let clips = m["clips"].as_array().unwrap();
    assert_eq!(clips.len(), 6);
    let test_clips = clips.iter().filter(|c| c["split"] == "test").count();
    assert!(test_clips > 0);

    let weights = model(dir.path());
    let report_dir = dir.path().join("eval");
    let o = scene(&["eval", "--model", s(&weights), "--dataset", s(&a), "--split", "test", "--out", s(&report_dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(report_dir.join("report.json")).unwrap()).unwrap();
    let map = report["map"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&map));
    let total: u64 = report["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .sum();
    assert_eq!(total as usize, 20 * test_clips);

    // three clips per label leave the validation split empty, so training
    // has nothing to select on and must refuse
    let o = scene(&["train", "--dataset", s(&a), "--out", s(&dir.path().join("run")), "--backbone", s(&weights)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn infer_prints_twenty_rows_of_fourteen_scores() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("clip.wav");
    noise_wav(&wav, 10, 4);
    let weights = model(dir.path());
    let o = scene(&["infer", "--model", s(&weights), "--wav", s(&wav), "--format", "json", "--aggregate", "softmax"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = doc["windows"].as_array().unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r["scores"].as_array().unwrap().len() == 14));
    let clip: f64 = doc["aggregate"]["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((clip - 1.0).abs() < 1e-9);

    // a config file picks the format; a flag overrides it
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"infer": {"format": "csv"}}"#).unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["infer", "--model", s(&weights), "--wav", s(&wav)];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_scene"))
            .args(&args)
            .env("SCENE_CONFIG", &cfg)
            .output()
            .unwrap()
    };
    let csv = stdout(&run(&[]));
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.starts_with("window_index,start_s,"));
    assert!(serde_json::from_slice::<serde_json::Value>(&run(&["--format", "json"]).stdout).is_ok());
}

#[test]
fn inspect_commands_report_the_network_and_patches() {
    let dir = tempfile::tempdir().unwrap();
    let weights = model(dir.path());
    let o = scene(&["inspect-model", "--model", s(&weights), "--format", "json"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["parameters"], 3_231_694);
    assert_eq!(doc["dtype"], "f16");

    let wav = dir.path().join("clip.wav");
    noise_wav(&wav, 10, 5);
    let out = dir.path().join("patches");
    let o = scene(&["inspect-features", "--wav", s(&wav), "--out", s(&out)]);
    assert!(o.status.success());
    let dumps = std::fs::read_dir(&out).unwrap().filter(|e| {
        e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".bin")
    });
    assert_eq!(dumps.count(), 20);
    let p = scene_core::features::read_patch(std::fs::File::open(out.join("patch_000.bin")).unwrap()).unwrap();
    assert_eq!((p.frames(), p.bands()), (96, 64));
}

#[test]
fn bench_fits_a_line_and_rejects_bad_durations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = scene(&["bench", "--durations-s", "1,2,3", "--repeats", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("latency.json")).unwrap()).unwrap();
    assert_eq!(doc["timings"].as_array().unwrap().len(), 3);
    assert!(doc["fit"]["slope"].as_f64().unwrap() > 0.0);
    assert!(!String::from_utf8_lossy(&o.stderr).contains('\u{1b}'));
    assert_eq!(scene(&["bench", "--durations-s", "2,1", "--out", s(&out)]).status.code(), Some(1));
}
