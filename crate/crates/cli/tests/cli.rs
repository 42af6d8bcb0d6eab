use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn chromsep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chromsep"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = chromsep(&["generate", "--seed", "7", "--pairs", "12", "--splits", "8,2,2", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = tree(&dir.path().join("a"));
    assert!(a.len() > 12);
    assert_eq!(a, tree(&dir.path().join("b")));
}

#[test]
fn single_shape_splits_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = chromsep(&["generate", "--splits", "1,1,1", "--out", "d"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 2"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(chromsep(&["generate", "--nope"], dir.path()).status.code(), Some(1));
    assert_eq!(chromsep(&["generate"], dir.path()).status.code(), Some(1));
    assert_eq!(chromsep(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn malformed_layer_names_file_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    assert!(chromsep(&["generate", "--pairs", "3", "--splits", "2,2,2", "--out", "d"], dir.path()).status.success());
    let victim = dir.path().join("d/samples/train-0000/semantic3.png");
    let mut bytes = std::fs::read(&victim).unwrap();
    // Corrupt the IHDR payload so its CRC no longer matches.
    bytes[20] ^= 0xff;
    std::fs::write(&victim, bytes).unwrap();
    let o = chromsep(&["segment", "--input", "d", "--out", "s"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("semantic3.png"), "{err}");
    assert!(err.contains("byte offset"), "{err}");
}

#[test]
fn config_file_paths_are_relative_to_the_file_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("conf");
    std::fs::create_dir(&conf).unwrap();
    std::fs::write(conf.join("gen.json"), r#"{"out": "data", "seed": 3, "pairs": 4, "splits": [2, 2, 2]}"#).unwrap();
    let o = chromsep(&["generate", "--config", "conf/gen.json", "--pairs", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(conf.join("data/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 3);
    assert_eq!(manifest["samples"].as_array().unwrap().len(), 3);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gen.json"), r#"{"out": "d", "colour": "red"}"#).unwrap();
    let o = chromsep(&["generate", "--config", "gen.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn full_chain_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let steps: [&[&str]; 5] = [
        &["generate", "--seed", "11", "--pairs", "6", "--splits", "4,2,2", "--out", "d"],
        &["corrupt", "--input", "d", "--out", "p", "--orientation-noise-sigma", "5", "--seed", "2"],
        &["segment", "--input", "p", "--out", "s"],
        &["evaluate", "--truth", "d", "--prediction", "p", "--instances", "s", "--out", "r.json"],
        &["render", "--input", "d/samples/train-0000/semantic4.png", "--kind", "semantic4", "--out", "v.png"],
    ];
    for args in steps {
        let o = chromsep(args, dir.path());
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["aggregate"]["all"]["samples"], 6);
    assert!(dir.path().join("v.png").exists());
}
