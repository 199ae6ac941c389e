//! End-to-end runs of the `roughfilter` binary.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughfilter"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ROUGHFILTER_OUT")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn single_particle_filter_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["filter", "--model", "scalar_jump_diffusion", "--f", "identity", "--particles", "1"];
    assert!(run(&args, &a).status.success());
    assert!(run(&args, &b).status.success());
    assert_eq!(read(&a, "filter.csv"), read(&b, "filter.csv"));
    assert_eq!(read(&a, "filter.json"), read(&b, "filter.json"));
}

#[test]
fn manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = [
        "robustness", "--model", "scalar_jump_diffusion", "--meshes", "4,8", "--obs-steps", "32", "--steps", "32",
        "--particles", "64", "--repeats", "2", "--param", "kappa=0.8",
    ];
    let out = run(&args, &a);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = a.join("manifest.toml");
    let out = run(&["--config", manifest.to_str().unwrap()], &b);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["robustness.csv", "robustness.json"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let table: toml::Table = read(&a, "manifest.toml").parse().unwrap();
    for key in ["version", "norm_convention", "wall_time_s", "artifacts", "model", "seed", "meshes"] {
        assert!(table.contains_key(key), "manifest lacks {key}");
    }
}

#[test]
fn every_csv_row_carries_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 5] = [
        &["simulate", "--steps", "8", "--repeats", "2"],
        &["lift", "--model", "stable_shot_noise", "--obs-steps", "16"],
        &["metrics", "--obs-steps", "32", "--meshes", "4,8"],
        &["rde", "--model", "scalar_jump_diffusion", "--obs-steps", "16"],
        &["wongzakai", "--levels", "2", "--paths", "2"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let dir = tmp.path().join(i.to_string());
        let out = run(args, &dir);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let name = format!("{}.csv", args[0]);
        let mut rd = csv::Reader::from_path(dir.join(&name)).unwrap();
        assert_eq!(&rd.headers().unwrap().iter().take(3).collect::<Vec<_>>(), &["seed", "mesh", "norm"], "{name}");
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec.unwrap();
            assert!(rec[0].parse::<u64>().is_ok() && rec[1].parse::<usize>().is_ok() && !rec[2].is_empty());
            rows += 1;
        }
        assert!(rows > 0, "{name} is empty");
        assert!(!read(&dir, &name).contains('\r'));
    }
}

#[test]
fn wong_zakai_level_count_expands_from_four() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(&["wongzakai", "--levels", "3", "--paths", "1"], tmp.path()).status.success());
    let table: toml::Table = read(tmp.path(), "manifest.toml").parse().unwrap();
    let levels: Vec<i64> = table["levels"].as_array().unwrap().iter().map(|v| v.as_integer().unwrap()).collect();
    assert_eq!(levels, vec![4, 5, 6]);
}

#[test]
fn validation_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad: [&[&str]; 6] = [
        &["metrics", "--p", "3.5"],
        &["filter", "--model", "no_such_model"],
        &["filter", "--particles", "0"],
        &["filter", "--T", "-1"],
        &["filter", "--param", "nonsense=1"],
        &["robustness", "--meshes", "5", "--obs-steps", "32"],
    ];
    for args in bad {
        assert_eq!(run(args, tmp.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn numerical_abort_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["filter", "--param", "c=1000", "--particles", "10"], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_file_is_an_io_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["lift", "--input", "/nonexistent/path.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lift_of_a_csv_input_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("x.csv");
    std::fs::write(&input, "t,v1,v2,pre_v1,pre_v2\n0,0,0,0,0\n0.5,1,1,1,0\n1,0,1,0,1\n").unwrap();
    let out = run(&["lift", "--input", input.to_str().unwrap()], &tmp.path().join("o"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = roughfilter::lift::RoughPath::read_json(&tmp.path().join("o/lift_seed1.json")).unwrap();
    assert_eq!(path.len(), 3);
    assert!(path.is_jump(1));
    let g = path.end_point();
    assert_eq!(g.level1, vec![0.0, 1.0]);
}
