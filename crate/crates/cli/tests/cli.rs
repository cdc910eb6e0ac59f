use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn heartgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heartgen"))
        .args(args)
        .env_remove("HEARTGEN_CHECKPOINT")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CONDITIONS: [&str; 10] = [
    "--age", "45", "--gender", "female", "--weight", "70", "--height", "165", "--sbp", "120",
];

/// Miniature dataset plus a 2-epoch miniature checkpoint.
fn setup(dir: &Path) {
    let data = dir.join("data");
    ok(heartgen(&[
        "make-phantoms", "-n", "10", "--seed", "1", "--dims", "8,8,4", "--spacing", "24,24,44", "--frames", "2",
        "-o", s(&data),
    ]));
    ok(heartgen(&[
        "train", "--data", s(&data), "-o", s(&dir.join("m.ckpt")), "--epochs", "2", "--miniature", "--batch-size", "2",
    ]));
}

#[test]
fn usage_errors_exit_2() {
    let out = heartgen(&["generate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(heartgen(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(heartgen(&["--help"]).status.code(), Some(0));
    // Conditions are checked after parsing but are still usage errors.
    let out = heartgen(&["generate", "--checkpoint", "x.ckpt", "--age", "45", "-o", "out"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["generate", "--checkpoint", "/nonexistent/m.ckpt", "-o", s(dir.path())];
    args.extend(CONDITIONS);
    let out = heartgen(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m.ckpt"));
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let ckpt = d.join("m.ckpt");
    let data = d.join("data");
    assert!(d.join("m.ckpt.history.jsonl").exists());
    assert!(data.join("test").is_dir() && data.join("phantom_params.json").exists());

    // generate, with the checkpoint taken from the environment
    let gen = d.join("gen");
    let mut args = vec!["generate", "-n", "3", "--seed", "1", "-o", s(&gen)];
    args.extend(CONDITIONS);
    ok(Command::new(env!("CARGO_BIN_EXE_heartgen"))
        .args(&args)
        .env("HEARTGEN_CHECKPOINT", &ckpt)
        .output()
        .unwrap());
    for i in 0..3 {
        assert!(gen.join(format!("sample_{i:03}/meta.json")).exists());
    }
    let ph: Value = serde_json::from_slice(&std::fs::read(gen.join("phenotypes.json")).unwrap()).unwrap();
    assert_eq!(ph.as_array().unwrap().len(), 3);

    // complete from a test subject
    let subject = std::fs::read_dir(data.join("test")).unwrap().next().unwrap().unwrap().path();
    let comp = d.join("comp");
    ok(heartgen(&["complete", "--checkpoint", s(&ckpt), "--input", s(&subject), "-o", s(&comp)]));
    assert!(comp.join("frame_001.u8raw").exists());

    // evaluate: the report mirrors the per-structure Dice / HD / ASSD table
    for method in ["model", "copy", "pca"] {
        let ev = d.join(format!("eval_{method}"));
        ok(heartgen(&[
            "evaluate", "--task", "completion", "--method", method, "--checkpoint", s(&ckpt), "--data", s(&data),
            "--pca-components", "3", "-o", s(&ev),
        ]));
        let r: Value = serde_json::from_slice(&std::fs::read(ev.join("report.json")).unwrap()).unwrap();
        for scope in ["all_frames", "excluding_frame0"] {
            for st in ["lv", "myo", "rv", "average"] {
                for m in ["dice", "hd_mm", "assd_mm"] {
                    assert!(r["completion"][scope][st][m].is_number(), "{method} {scope} {st} {m}");
                }
            }
        }
        assert!(ev.join("subjects.csv").exists());
    }
    let ev = d.join("eval_gen");
    ok(heartgen(&[
        "evaluate", "--task", "generation", "--checkpoint", s(&ckpt), "--data", s(&data), "-n", "2", "-o", s(&ev),
    ]));
    let r: Value = serde_json::from_slice(&std::fs::read(ev.join("report.json")).unwrap()).unwrap();
    assert!(r["generation"]["best"]["average"]["dice"].is_number());
    assert!(r["generation"]["distribution"].is_object());

    // sweep
    let sw = d.join("sweep");
    let mut args = vec![
        "sweep", "--checkpoint", s(&ckpt), "--factor", "age", "--values", "20,40,60", "-n", "3", "-o", s(&sw),
    ];
    args.extend(CONDITIONS);
    ok(heartgen(&args));
    let r: Value = serde_json::from_slice(&std::fs::read(sw.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(r["entries"].as_array().unwrap().len(), 3);

    // latent export
    let csv = d.join("z.csv");
    ok(heartgen(&["export-latents", "--checkpoint", s(&ckpt), "--data", s(&data), "-o", s(&csv)]));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sample_id,t,z_00,z_01,z_02,z_03,z_04,z_05,z_06,z_07,p0,p1");
    let out = heartgen(&["export-latents", "--checkpoint", s(&ckpt), "-o", s(&csv)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    setup(a.path());
    setup(b.path());
    let ca = std::fs::read(a.path().join("m.ckpt")).unwrap();
    let cb = std::fs::read(b.path().join("m.ckpt")).unwrap();
    assert_eq!(ca, cb);
}
