//! Behavior of the installed binary: exit codes, manifests, idempotent
//! reruns, and surface-level contracts of each command.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dancegen_core::io::{load_motion, DatasetSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dancegen"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dancegen_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_dataset_spec(root: &Path, clips: usize) -> PathBuf {
    let spec = DatasetSpec {
        clips,
        ..DatasetSpec::desk(7)
    };
    let path = root.join("dataset.json");
    fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process exited")
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["gen-data", "train-vqvae", "train-gpt", "reconstruct", "generate", "evaluate", "gradcheck"] {
        assert!(text.contains(sub), "--help misses {sub}");
    }
}

#[test]
fn gen_data_prints_manifest_and_reruns_identically() {
    let root = temp_dir("gendata");
    let spec = write_dataset_spec(&root, 2);
    let data = root.join("data");

    let out = bin().arg("gen-data").arg(&spec).arg(&data).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = String::from_utf8_lossy(&out.stdout);
    assert!(manifest.contains("clip_000.fmot"));
    assert!(manifest.contains("clip_001.beats.txt"));

    let first = fs::read(data.join("clip_000.fmot")).unwrap();
    let out2 = bin().arg("gen-data").arg(&spec).arg(&data).output().unwrap();
    assert_eq!(code(&out2), 0);
    let second = fs::read(data.join("clip_000.fmot")).unwrap();
    assert_eq!(first, second, "rerun must overwrite identically");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn gen_data_bad_spec_exits_two() {
    let root = temp_dir("badspec");
    let spec = root.join("broken.json");
    fs::write(&spec, "{\"clips\": 0}").unwrap();
    let out = bin().arg("gen-data").arg(&spec).arg(root.join("out")).output().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn evaluate_empty_directory_exits_two() {
    let root = temp_dir("evalempty");
    fs::create_dir_all(root.join("a")).unwrap();
    fs::create_dir_all(root.join("b")).unwrap();
    let out = bin()
        .args(["evaluate", "--desk", "--reference"])
        .arg(root.join("a"))
        .arg("--generated")
        .arg(root.join("b"))
        .arg("--out")
        .arg(root.join("report"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn evaluate_reference_against_itself_has_near_zero_fid() {
    let root = temp_dir("selfeval");
    let spec = write_dataset_spec(&root, 3);
    let data = root.join("data");
    assert_eq!(code(&bin().arg("gen-data").arg(&spec).arg(&data).output().unwrap()), 0);
    let out = bin()
        .args(["evaluate", "--desk", "--reference"])
        .arg(&data)
        .arg("--generated")
        .arg(&data)
        .arg("--out")
        .arg(root.join("report"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(root.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "fid_k,fid_g,div_k,div_g,bas");
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(row[0].abs() < 1e-6, "fid_k(ref, ref) = {}", row[0]);
    assert!(row[1].abs() < 1e-6, "fid_g(ref, ref) = {}", row[1]);
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn gradcheck_ops_passes() {
    let out = bin().args(["gradcheck", "ops", "--seeds", "5"]).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 failed"), "{text}");
}

#[test]
fn gradcheck_unknown_scope_exits_two() {
    let out = bin().args(["gradcheck", "everything"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

/// The slow path: train briefly, then exercise reconstruct/generate
/// contracts and the compatibility/numeric exit codes on the result.
#[test]
fn trained_pipeline_surface_contracts() {
    let root = temp_dir("surface");
    let spec = write_dataset_spec(&root, 2);
    let data = root.join("data");
    let run = root.join("run");
    assert_eq!(code(&bin().arg("gen-data").arg(&spec).arg(&data).output().unwrap()), 0);

    let out = bin()
        .args(["train-vqvae", "--desk", "--epochs", "2", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("effective configuration"), "config not printed");

    // loss CSV has one row per epoch plus the header
    let csv = fs::read_to_string(run.join("vqvae_upper_loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");

    let out = bin()
        .args(["train-gpt", "--desk", "--epochs", "2", "--data"])
        .arg(&data)
        .arg("--vq-upper")
        .arg(run.join("vqvae_upper.fckp"))
        .arg("--vq-lower")
        .arg(run.join("vqvae_lower.fckp"))
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // reconstruct: output shape equals input shape
    let recon_path = root.join("recon.fmot");
    let out = bin()
        .args(["reconstruct", "--desk", "--vq-upper"])
        .arg(run.join("vqvae_upper.fckp"))
        .arg("--vq-lower")
        .arg(run.join("vqvae_lower.fckp"))
        .arg("--input")
        .arg(data.join("clip_000.fmot"))
        .arg("--output")
        .arg(&recon_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let original = load_motion(&data.join("clip_000.fmot")).unwrap();
    let recon = load_motion(&recon_path).unwrap();
    assert_eq!(recon.num_frames, original.num_frames);
    assert_eq!(recon.num_joints, original.num_joints);

    // generate: emits steps x rate frames, deterministic across reruns
    let gen_once = |path: &Path| {
        let out = bin()
            .args(["generate", "--desk", "--gpt"])
            .arg(run.join("gpt.fckp"))
            .arg("--vq-upper")
            .arg(run.join("vqvae_upper.fckp"))
            .arg("--vq-lower")
            .arg(run.join("vqvae_lower.fckp"))
            .arg("--pretrained")
            .arg(data.join("clip_000.pre.ftrk"))
            .arg("--handcrafted")
            .arg(data.join("clip_000.hand.ftrk"))
            .args(["--steps", "6", "--output"])
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    };
    let gen_a = root.join("gen_a.fmot");
    let gen_b = root.join("gen_b.fmot");
    gen_once(&gen_a);
    gen_once(&gen_b);
    assert_eq!(fs::read(&gen_a).unwrap(), fs::read(&gen_b).unwrap());
    let generated = load_motion(&gen_a).unwrap();
    assert_eq!(generated.num_frames, 6 * 8, "steps x downsampling rate");

    // incompatible checkpoint kinds exit 4
    let out = bin()
        .args(["reconstruct", "--desk", "--vq-upper"])
        .arg(run.join("gpt.fckp"))
        .arg("--vq-lower")
        .arg(run.join("vqvae_lower.fckp"))
        .arg("--input")
        .arg(data.join("clip_000.fmot"))
        .arg("--output")
        .arg(root.join("bad.fmot"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));

    // numeric divergence exits 3 and leaves the last good checkpoint
    let blowup = root.join("blowup");
    let out = bin()
        .args(["train-vqvae", "--desk", "--epochs", "3", "--lr", "1e155", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&blowup)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("checkpoint"),
        "divergence error must name the last-good checkpoint"
    );
    assert!(blowup.join("vqvae_upper.fckp").exists());

    let _ = fs::remove_dir_all(&root);
}
