use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scw"))
        .args(args)
        .env_remove("SCW_WORKERS")
        .output()
        .expect("spawn scw")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn recipe(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes").join(path)
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let idx = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[idx].parse().unwrap()).collect()
}

#[test]
fn codebook_writes_all_codewords() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("book.txt");
    let res = scw(&["codebook", "--L", "3", "--weights", "2,3,1", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(stdout(&res).contains("M=60"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert!(text.starts_with("3 6 60 full\n"));
}

#[test]
fn codebook_reports_cw_10_5_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cw.txt");
    let res = scw(&["codebook", "--levels", "2", "--weights", "5,5", "-o", out.to_str().unwrap()]);
    assert!(res.status.success());
    let text = stdout(&res);
    assert!(text.contains("M=252"));
    assert!(text.contains("rate=0.7977"));
    let partial = scw(&["codebook", "--L", "2", "--weights", "5,5", "--partial", "32", "--seed", "4", "-o", out.to_str().unwrap()]);
    assert!(stdout(&partial).contains("M=32") && stdout(&partial).contains("rate=0.5000"));
}

#[test]
fn invalid_weights_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.txt");
    let res = scw(&["codebook", "--L", "2", "--weights", "0,0", "-o", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(!String::from_utf8_lossy(&res.stderr).is_empty());
    assert!(!out.exists());
    assert!(!scw(&["codebook", "--L", "2", "--weights", "2,2,2", "-o", out.to_str().unwrap()]).status.success());
    assert!(!scw(&["codebook", "--L", "2", "--weights", "20,20", "--cap", "1000", "-o", out.to_str().unwrap()]).status.success());
}

#[test]
fn rate_subcommand() {
    let res = scw(&["rate", "--L", "3", "--weights", "2,2,2"]);
    assert!(res.status.success());
    let text = stdout(&res);
    assert!(text.contains("M=90"));
    assert!(text.contains("release_fraction=0.5000"));
}

#[test]
fn cir_table() {
    let res = scw(&["cir"]);
    let rows = csv_rows(&stdout(&res));
    assert_eq!(rows[0], vec!["t", "expected_count"]);
    let c: f64 = rows[1][1].parse().unwrap();
    assert!((c - 4.9).abs() <= 0.3, "{c}");

    let two = csv_rows(&stdout(&scw(&["cir", "--t", "1e-4,2e-4"])));
    assert_eq!(two.len(), 3);
    let doubled = csv_rows(&stdout(&scw(&["cir", "--t", "1e-4,2e-4", "--n-tx", "2e4"])));
    for (a, b) in two[1..].iter().zip(&doubled[1..]) {
        let (a, b): (f64, f64) = (a[1].parse().unwrap(), b[1].parse().unwrap());
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
    }
    assert!(!scw(&["cir", "--t", "0"]).status.success());
    assert!(!scw(&["cir", "--t", "-1e-4"]).status.success());
}

#[test]
fn cir_params_file_with_unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.toml");
    fs::write(&p, "n_tx = 2e4\ndistanse = 5e-7\n").unwrap();
    let res = scw(&["cir", "--params", p.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("distanse"));
    fs::write(&p, "n_tx = 2e4\n").unwrap();
    let rows = csv_rows(&stdout(&scw(&["cir", "--params", p.to_str().unwrap()])));
    let c: f64 = rows[1][1].parse().unwrap();
    assert!((c - 9.6).abs() < 0.5);
}

#[test]
fn bounds_are_ordered_row_wise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let res = scw(&["bounds", "-c", recipe("fig2/full.toml").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = csv_rows(&fs::read_to_string(&out).unwrap());
    let lower = column(&rows, "orderstat_lower");
    let upper = column(&rows, "orderstat_upper");
    assert_eq!(lower.len(), 11);
    assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u));
    assert!(out.with_file_name("b.csv.manifest.json").exists());
}

#[test]
fn simulate_is_reproducible_across_workers_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let cfg = recipe("fig1/w321.toml");
    let common = ["--trials", "3000", "--snr-db", "-2.5,5,10"];
    let run = |out: &Path, config: &Path, workers: &str| {
        let mut args = vec!["simulate", "-c", config.to_str().unwrap(), "-o", out.to_str().unwrap(), "--workers", workers];
        args.extend(common);
        let res = scw(&args);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    };
    run(&a, &cfg, "1");
    run(&b, &cfg, "4");
    let manifest = dir.path().join("a.csv.manifest.json");
    run(&c, &manifest, "3");
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    assert_eq!(first, fs::read(&c).unwrap());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["master_seed"], 1);
    assert_eq!(m["config"]["trials"], 3000);
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn workers_default_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_scw"))
        .args(["simulate", "-c", recipe("fig1/w222.toml").to_str().unwrap(), "-o", out.to_str().unwrap()])
        .args(["--trials", "500", "--snr-db", "0"])
        .env("SCW_WORKERS", "2")
        .output()
        .unwrap();
    assert!(res.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.with_file_name("env.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["workers"], 2);
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let out = dir.path().join("o.csv");
    let cases = [
        ("master_seed = 1\ntrials = \"many\"\n[code]\nweights = [5, 5]\n[sweep]\nkind = \"snr\"\nsnr_db = [0.0]\n", "trials"),
        ("master_seed = 1\n[code]\nweights = [5, 5]\nwieghts = 1\n[sweep]\nkind = \"snr\"\nsnr_db = [0.0]\n", "code"),
        ("master_seed = 1\n[code]\nweights = [5, 5]\n[sweep]\nkind = \"snr\"\nsnr_db = [0.0]\n[detector]\nkind = \"magic\"\n", "detector"),
    ];
    for (text, field) in cases {
        fs::write(&cfg, text).unwrap();
        let res = scw(&["simulate", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
        assert!(!res.status.success());
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(&format!("field `{field}")), "{err}");
    }
    fs::write(&cfg, "master_seed = 1\n[code]\nweights = [5, 5]\n[sweep]\nkind = \"snr\"\nsnr_db = []\n").unwrap();
    let res = scw(&["simulate", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn fig2_recipe_sits_inside_the_sandwich() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2.csv");
    let res = scw(&["simulate", "-c", recipe("fig2/full.toml").to_str().unwrap(), "-o", out.to_str().unwrap(), "--trials", "20000"]);
    assert!(res.status.success());
    let rows = csv_rows(&fs::read_to_string(&out).unwrap());
    let mc = column(&rows, "estimate");
    let lower = column(&rows, "orderstat_lower");
    let upper = column(&rows, "orderstat_upper");
    for i in 0..mc.len() {
        let sigma = |q: f64| (q * (1.0 - q) / 20_000.0).sqrt();
        assert!(mc[i] >= lower[i] - 3.0 * sigma(mc[i].max(lower[i])), "row {i}");
        assert!(mc[i] <= upper[i] + 3.0 * sigma(mc[i].max(upper[i])), "row {i}");
    }
}

#[test]
fn every_recipe_validates() {
    let root = recipe("");
    for fig in ["fig1", "fig2", "fig3"] {
        let mut found = 0;
        for entry in fs::read_dir(root.join(fig)).unwrap() {
            let path = entry.unwrap().path();
            let dir = tempfile::tempdir().unwrap();
            let out = dir.path().join("r.csv");
            let res = scw(&["simulate", "-c", path.to_str().unwrap(), "-o", out.to_str().unwrap(), "--trials", "10"]);
            assert!(res.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&res.stderr));
            found += 1;
        }
        assert!(found > 0);
    }
}
