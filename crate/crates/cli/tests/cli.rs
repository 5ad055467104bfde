use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ecomerge"));
    c.env_remove("ECOMERGE_PARALLELISM").env("RUST_LOG", "off");
    c
}

fn nominal() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/nominal.json")
}

fn edited(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(nominal()).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join("cfg.json");
    std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn batch_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csvs: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = bin()
                .args(["batch", "--runs", "3", "--parallelism", "2", "--config"])
                .arg(nominal())
                .arg("--out")
                .arg(&out_dir)
                .output()
                .unwrap();
            ok(&out);
            std::fs::read_to_string(out_dir.join("runs.csv")).unwrap()
        })
        .collect();
    assert_eq!(csvs[0], csvs[1]);
    // header plus one row per controller and run
    assert_eq!(csvs[0].lines().count(), 7);
    assert!(dir.path().join("a/summary.json").exists());
    assert!(dir.path().join("a/hist_tel.csv").exists());
}

#[test]
fn batch_rows_are_paired_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["batch", "--runs", "2", "--seed", "40", "--config"])
        .arg(nominal())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (id, ctl, seed) = (col("run_id"), col("controller"), col("seed"));
    let mut seen = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        seen.push((f[id].to_string(), f[ctl].to_string(), f[seed].to_string()));
    }
    for r in ["0", "1"] {
        let seeds: Vec<&str> = seen.iter().filter(|s| s.0 == r).map(|s| s.2.as_str()).collect();
        assert_eq!(seeds.len(), 2);
        assert_eq!(seeds[0], seeds[1]);
    }
    assert_eq!(seen.iter().find(|s| s.0 == "1").unwrap().2, "41");

    let cmp = bin().arg("compare").arg("--out").arg(dir.path()).output().unwrap();
    ok(&cmp);
    assert!(String::from_utf8_lossy(&cmp.stdout).contains("TEL"));
}

#[test]
fn export_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = bin()
            .args(["export-scenario", "--seed", "5", "--config"])
            .arg(nominal())
            .arg("--out")
            .arg(p)
            .output()
            .unwrap();
        ok(&out);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let sampled = dir.path().join("sampled");
    let replayed = dir.path().join("replayed");
    for (args, out_dir) in [(vec!["--seed", "5"], &sampled), (vec![], &replayed)] {
        let mut c = bin();
        c.args(["run", "--controller", "fifo", "--config"]).arg(nominal()).args(&args);
        if args.is_empty() {
            c.arg("--scenario").arg(&a);
        }
        let out = c.arg("--out").arg(out_dir).output().unwrap();
        ok(&out);
    }
    let t1 = std::fs::read_to_string(sampled.join("trace_fifo.csv")).unwrap();
    let t2 = std::fs::read_to_string(replayed.join("trace_fifo.csv")).unwrap();
    assert_eq!(t1, t2);
    assert!(t1.starts_with("k,t,vehicle_id,road,s,v,u,a,in_cz"));
    assert!(sampled.join("metrics_fifo.json").exists());
}

#[test]
fn zero_merge_angle_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), |v| v["scenario"]["merge_angle_deg"] = 0.0.into());
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), |v| {
        v["barrier"].as_object_mut().unwrap().remove("lambda");
    });
    let out = bin()
        .args(["batch", "--runs", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["export-scenario", "--config"])
        .arg(dir.path().join("nope.json"))
        .arg("--out")
        .arg(dir.path().join("s.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
