use std::path::Path;
use std::process::{Command, Output};

use freemesh_core::checkpoint::{self, CheckpointManifest, CODE_VERSION};
use freemesh_core::sac::{SacAgent, SacConfig};
use freemesh_core::EnvConfig;

fn meshctl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshctl"))
        .args(args)
        .current_dir(dir)
        .env_remove("MESHCTL_SERVER")
        .env_remove("MESHCTL_OUT_DIR")
        .output()
        .expect("meshctl runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn grid_3x3() -> String {
    let mut s = String::new();
    for j in 0..4 {
        for i in 0..4 {
            s.push_str(&format!("v {i} {j}\n"));
        }
    }
    for j in 0..3 {
        for i in 0..3 {
            let a = j * 4 + i + 1;
            s.push_str(&format!("q {} {} {} {}\n", a, a + 1, a + 5, a + 4));
        }
    }
    s
}

#[test]
fn gen_domain_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let o = meshctl(dir.path(), &["--seed", "1", "gen-domain", "star", "--points", "8", "--out", name]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["vertices"].as_array().unwrap().len(), 16);

    let o = meshctl(dir.path(), &["--seed", "2", "gen-domain", "star", "--points", "8", "--jitter", "0.2", "--out", "c.json"]);
    assert_eq!(code(&o), 0);
    assert_ne!(a, std::fs::read(dir.path().join("c.json")).unwrap());

    let o = meshctl(dir.path(), &["gen-domain", "star", "--points", "8", "--out", "/proc/nope/x.json"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn polygon_file_and_default_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("house.txt"), "# house\n0 0\n4 0\n4 3\n2 5\n0 3\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_meshctl"))
        .args(["gen-domain", "polygon-file", "house.txt"])
        .current_dir(dir.path())
        .env_remove("MESHCTL_SERVER")
        .env("MESHCTL_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("domain.json")).unwrap()).unwrap();
    assert_eq!(doc["vertices"].as_array().unwrap().len(), 6);
    assert_eq!(doc["orientation"], "cw");

    std::fs::write(dir.path().join("bad.txt"), "0 0\n1\n").unwrap();
    let o = meshctl(dir.path(), &["gen-domain", "polygon-file", "bad.txt", "--out", "x.json"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("bad.txt:2"), "{}", stderr(&o));
}

#[test]
fn eval_reports_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.txt"), grid_3x3()).unwrap();
    let o = meshctl(dir.path(), &["eval", "grid.txt", "--kv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let kv = stdout(&o);
    for line in [
        "quads=9",
        "singularity=0",
        "scaled_jacobian_mean=1.000000",
        "stretch_mean=1.000000",
        "taper_mean=0.000000",
        "min_angle_dev_mean=0.000000",
        "max_angle_dev_mean=0.000000",
        "triangles=0",
    ] {
        assert!(kv.lines().any(|l| l == line), "missing {line} in\n{kv}");
    }
    let o = meshctl(dir.path(), &["eval", "grid.txt"]);
    assert!(stdout(&o).starts_with("Metric"));

    std::fs::write(dir.path().join("tri.txt"), "v 0 0\nv 1 0\nv 1 1\nv 0 1\nt 1 2 3\nt 1 3 4\n").unwrap();
    let o = meshctl(dir.path(), &["eval", "tri.txt", "--kv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "triangles=2"));

    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    assert_eq!(code(&meshctl(dir.path(), &["eval", "empty.txt"])), 3);

    std::fs::write(dir.path().join("bad.txt"), "v 0 0\nv 1 0\nq 1 2\n").unwrap();
    let o = meshctl(dir.path(), &["eval", "bad.txt"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn render_modes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sq.txt"), "v 0 0\nv 1 0\nv 1 1\nv 0 1\nq 1 2 3 4\n").unwrap();
    for out in ["a.svg", "b.svg"] {
        let o = meshctl(dir.path(), &["render", "sq.txt", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read_to_string(dir.path().join("a.svg")).unwrap();
    assert_eq!(a, std::fs::read_to_string(dir.path().join("b.svg")).unwrap());
    assert_eq!(a.matches("<path").count(), 1);

    assert_eq!(code(&meshctl(dir.path(), &["gen-domain", "l-shape", "--out", "l.json"])), 0);
    let o = meshctl(dir.path(), &["render", "l.json", "--out", "l.svg"]);
    assert_eq!(code(&o), 0);
    let svg = std::fs::read_to_string(dir.path().join("l.svg")).unwrap();
    assert!(svg.contains("<polyline"));
    assert!(!svg.contains("<path"));
}

#[test]
fn train_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = meshctl(dir.path(), &["train", "--domain", "missing.json"]);
    assert_eq!(code(&o), 3);

    assert_eq!(code(&meshctl(dir.path(), &["gen-domain", "l-shape", "--out", "l.json"])), 0);
    std::fs::write(dir.path().join("sac.json"), r#"{"gamma": 1.5}"#).unwrap();
    let o = meshctl(dir.path(), &["train", "--domain", "l.json", "--sac-config", "sac.json", "--out", "run"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn train_then_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&meshctl(d, &["gen-domain", "l-shape", "--out", "l.json"])), 0);
    std::fs::write(
        d.join("sac.json"),
        r#"{"hidden":[16,16],"batch_size":32,"eval_every":100,"eval_episodes":1,"checkpoint_every":100}"#,
    )
    .unwrap();
    let o = meshctl(
        d,
        &["--seed", "5", "train", "--domain", "l.json", "--sac-config", "sac.json", "--total-steps", "200", "--out", "run", "--poll-ms", "50"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("{\"step\"")).count(), 2);
    assert!(out.lines().any(|l| l.starts_with("model ")));
    for f in ["manifest.json", "train_log.jsonl", "final.ckpt", "checkpoints/step_000200.ckpt"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);

    std::fs::write(d.join("sq.json"), r#"{"vertices": [[0,0],[0,2],[2,2],[2,0]]}"#).unwrap();
    let o = meshctl(d, &["mesh", "--domain", "sq.json", "--checkpoint", "run/final.ckpt", "--out", "m.txt", "--svg", "m.svg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mesh = std::fs::read_to_string(d.join("m.txt")).unwrap();
    assert_eq!(mesh.lines().filter(|l| l.starts_with("q ")).count(), 1);
    assert!(!mesh.lines().any(|l| l.starts_with("t ")));
    assert!(std::fs::read_to_string(d.join("m.svg")).unwrap().contains("<path"));

    let o = meshctl(d, &["mesh", "--domain", "sq.json", "--checkpoint", "missing.ckpt"]);
    assert_eq!(code(&o), 3);
    let o = meshctl(d, &["mesh", "--domain", "sq.json", "--checkpoint", "run/final.ckpt", "--upsilon", "-2"]);
    assert_eq!(code(&o), 4);
    let o = meshctl(d, &["mesh", "--domain", "sq.json"]);
    assert_eq!(code(&o), 3, "usage errors are input errors");
}

#[test]
fn untrained_policy_fails_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let env = EnvConfig { max_consecutive_invalid: 20, ..EnvConfig::default() };
    let sac = SacConfig { hidden: vec![8], seed: 1, ..SacConfig::default() };
    let agent = SacAgent::new(env.observation_len(), &sac).unwrap();
    let bytes = checkpoint::encode(&agent, &CheckpointManifest { env, sac, step: 0, seed: 1, code_version: CODE_VERSION.into() });
    std::fs::write(d.join("raw.ckpt"), bytes).unwrap();
    assert_eq!(code(&meshctl(d, &["gen-domain", "l-shape", "--out", "l.json"])), 0);

    let o = meshctl(d, &["mesh", "--domain", "l.json", "--checkpoint", "raw.ckpt", "--out", "m.txt"]);
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("steps") && err.contains("invalid"), "{err}");
    assert!(!d.join("m.txt").exists());
}
