mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::Part::{Pause, Word};
use common::{background_sd, named_vocabulary, render, stream};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swar_core::synth::{white_noise, WordPattern};
use swar_core::{load_registry, load_wav, save_wav};

fn swar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swar"))
        .args(args)
        .env_remove("SWAR_REGISTRY")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_clips(dir: &Path, prefix: &str, clips: &[swar_core::AudioClip]) -> Vec<String> {
    clips
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let p = dir.join(format!("{prefix}{i}.wav"));
            save_wav(c, &p).unwrap();
            p.to_string_lossy().into_owned()
        })
        .collect()
}

struct Fixture {
    dir: tempfile::TempDir,
    registry: PathBuf,
    vocab: Vec<WordPattern>,
    rng: ChaCha8Rng,
}

/// Registry with two words trained through the binary.
fn trained(words: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("HMMs");
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let vocab = named_vocabulary(words, &mut rng);
    for p in &vocab {
        let files = write_clips(dir.path(), &p.name, &render(p, 8, &mut rng));
        let mut args = vec![
            "--registry",
            registry.to_str().unwrap(),
            "train",
            "-n",
            "5",
            "-d",
            "13",
            "-w",
            &p.name,
        ];
        args.extend(files.iter().map(String::as_str));
        let out = swar(&args);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    Fixture {
        dir,
        registry,
        vocab,
        rng,
    }
}

#[test]
fn train_without_files_is_a_usage_error() {
    let out = swar(&["train", "-n", "5", "-d", "13", "-w", "go"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));
    assert_eq!(swar(&["train", "a.wav"]).status.code(), Some(2));
}

#[test]
fn training_reports_segments_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("HMMs");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab = named_vocabulary(&["open"], &mut rng);
    let files = write_clips(dir.path(), "open", &render(&vocab[0], 3, &mut rng));
    let mut args = vec![
        "--registry",
        registry.to_str().unwrap(),
        "train",
        "-n",
        "4",
        "-d",
        "13",
        "-w",
        "open",
    ];
    args.extend(files.iter().map(String::as_str));

    let out = swar(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for f in &files {
        assert!(text.contains(&format!("{f}: word at ")), "{text}");
    }
    assert!(text.contains("final log-likelihood"), "{text}");
    assert_eq!(load_registry(&registry).unwrap().words().collect::<Vec<_>>(), ["open"]);

    let snapshot = |name: &str| fs::read(registry.join(name)).unwrap();
    let (models, model) = (snapshot("models"), snapshot("open.whmm"));
    assert!(swar(&args).status.success());
    assert_eq!(snapshot("models"), models);
    assert_eq!(snapshot("open.whmm"), model);
}

#[test]
fn too_many_states_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab = named_vocabulary(&["open"], &mut rng);
    let files = write_clips(dir.path(), "open", &render(&vocab[0], 2, &mut rng));
    let registry = dir.path().join("HMMs");
    let mut args = vec![
        "--registry",
        registry.to_str().unwrap(),
        "train",
        "-n",
        "64",
        "-d",
        "13",
        "-w",
        "open",
    ];
    args.extend(files.iter().map(String::as_str));
    let out = swar(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(&files[0]), "{}", stderr(&out));
    assert!(!registry.join("models").exists());
}

#[test]
fn recognize_accepts_words_and_rejects_noise() {
    let mut f = trained(&["open", "close"]);
    let reg = f.registry.to_str().unwrap().to_string();
    for (k, p) in f.vocab.clone().iter().enumerate() {
        let files = write_clips(f.dir.path(), &format!("held{k}_"), &render(p, 2, &mut f.rng));
        for file in &files {
            let out = swar(&["--registry", &reg, "recognize", "--scores", file]);
            assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
            let text = stdout(&out);
            let lines: Vec<&str> = text.lines().collect();
            assert_eq!(lines[0], p.name);
            assert_eq!(lines.len(), 3);
            let scores: Vec<f64> = lines[1..]
                .iter()
                .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
                .collect();
            assert!(scores[0] >= scores[1]);
            assert!(lines[1].starts_with(&format!("{}\t", p.name)));
        }
    }
    let noise = f.dir.path().join("noise.wav");
    save_wav(&white_noise(1.0, 0.05, 16000, &mut f.rng), &noise).unwrap();
    let out = swar(&["--registry", &reg, "recognize", noise.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout(&out).trim(), "REJECTED");
}

#[test]
fn registry_falls_back_to_environment() {
    let mut f = trained(&["open"]);
    let file = write_clips(f.dir.path(), "env", &render(&f.vocab[0].clone(), 1, &mut f.rng)).remove(0);
    let out = Command::new(env!("CARGO_BIN_EXE_swar"))
        .args(["recognize", &file])
        .env("SWAR_REGISTRY", &f.registry)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "open");
}

#[test]
fn empty_registry_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let file = dir.path().join("n.wav");
    save_wav(&white_noise(0.5, 0.05, 16000, &mut rng), &file).unwrap();
    let out = swar(&[
        "--registry",
        dir.path().to_str().unwrap(),
        "recognize",
        file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("registry"), "{}", stderr(&out));
}

#[test]
fn record_from_file_writes_without_prompting() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = dir.path().join("in.wav");
    let clip = white_noise(2.0, 0.1, 16000, &mut rng);
    save_wav(&clip, &input).unwrap();
    let output = dir.path().join("out.wav");
    let source = format!("file:{}", input.display());
    let out = swar(&[
        "record",
        output.to_str().unwrap(),
        "--seconds",
        "1.5",
        "--input-source",
        &source,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let saved = load_wav(&output).unwrap();
    assert_eq!(saved.len(), 24000);
    assert_eq!(saved.samples(), &load_wav(&input).unwrap().samples()[..24000]);
}

#[test]
fn record_without_audio_hardware_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let output = dir.path().join("out.wav");
    let out = swar(&[
        "record",
        output.to_str().unwrap(),
        "--seconds",
        "0.2",
        "--input-source",
        "device:swar-no-such-device",
    ]);
    if out.status.success() {
        // a real capture stack is present
        return;
    }
    assert_eq!(out.status.code(), Some(1));
    assert!(!output.exists());
}

#[test]
fn listen_runs_bound_command_and_quits() {
    let mut f = trained(&["lights", "quit"]);
    let marker = f.dir.path().join("swar_ok");
    let table = f.dir.path().join("commands.txt");
    fs::write(
        &table,
        format!("# test bindings\nlights = touch '{}'\n", marker.display()),
    )
    .unwrap();
    let bg = background_sd(&f.vocab, &mut f.rng);
    let vocab = f.vocab.clone();
    let audio = stream(
        &[Pause(0.8), Word(&vocab[0]), Pause(0.8), Word(&vocab[1]), Pause(0.8)],
        bg,
        &mut f.rng,
    );
    let wav = f.dir.path().join("live.wav");
    save_wav(&audio, &wav).unwrap();
    let source = format!("file:{}", wav.display());
    let out = swar(&[
        "--registry",
        f.registry.to_str().unwrap(),
        "listen",
        "--commands",
        table.to_str().unwrap(),
        "--input-source",
        &source,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(marker.exists());
}

#[test]
fn listen_rejects_binding_the_quit_word() {
    let f = trained(&["quit"]);
    let table = f.dir.path().join("commands.txt");
    fs::write(&table, "quit = true\n").unwrap();
    let out = swar(&[
        "--registry",
        f.registry.to_str().unwrap(),
        "listen",
        "--commands",
        table.to_str().unwrap(),
        "--input-source",
        "file:/nonexistent.wav",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("quit"));
}
