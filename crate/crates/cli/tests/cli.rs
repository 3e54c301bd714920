use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nfad(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfad")).args(args).arg("--out").arg(out).output().expect("spawn nfad")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.ini");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn table_currents_has_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = nfad(&["table_currents"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("table_currents.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let f: Vec<f64> = row.split(',').take(5).map(|x| x.parse().unwrap()).collect();
        assert!((f[3] / f[4] - 1.0).abs() < 0.3, "{row}");
    }
    assert!(dir.path().join("manifest.ini").exists());
}

#[test]
fn out_of_range_efficiency_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = jitter\n[detector]\npreset = d2\nefficiency = 1.5\n");
    let o = nfad(&["--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("efficiency"));
}

#[test]
fn unknown_preset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[detector]\npreset = d9\n");
    let o = nfad(&["jitter", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[experiment]\nn_pulses\n");
    let o = nfad(&["jitter", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), "[experiment]\nnot_a_setting = 1\n");
    let o = nfad(&["jitter", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_same_output_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = click_curve\nseed = 7\n[experiment]\nn_trials = 500\n");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(nfad(&["--config", &cfg], &a).status.success());
    assert!(nfad(&["--config", &cfg], &b).status.success());
    let csv = |d: &Path| fs::read(d.join("click_curve.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));

    let manifest = a.join("manifest.ini").display().to_string();
    assert!(nfad(&["--config", &manifest], &c).status.success());
    assert_eq!(csv(&a), csv(&c));
    assert_eq!(fs::read(a.join("manifest.ini")).unwrap(), fs::read(c.join("manifest.ini")).unwrap());

    let d = dir.path().join("d");
    assert!(nfad(&["--config", &cfg, "--seed", "8"], &d).status.success());
    assert_ne!(csv(&a), csv(&d));
}
