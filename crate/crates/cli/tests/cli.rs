use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("strata-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn strata(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strata")).args(args).env("STRATA_OUT", out).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn rows(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn spec_path(name: &str) -> String {
    format!("{}/../../specs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn content_lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count()
}

#[test]
fn default_dataset_has_200_labels_and_5000_profiles() {
    let out = scratch("gen-default");
    let o = strata(&["gen-dataset"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(content_lines(&out.join("taxonomy.txt")), 201);
    assert_eq!(content_lines(&out.join("profiles.txt")), 5001);
    let text = stdout(&o);
    assert!(text.contains("labels          200") && text.contains("profiles        5000") && text.contains("seed            1"));
}

#[test]
fn minimal_dataset_is_valid_and_reproducible() {
    let (a, b) = (scratch("gen-min-a"), scratch("gen-min-b"));
    for dir in [&a, &b] {
        assert!(strata(&["gen-dataset", "--labels", "1", "--peers", "1", "--seed", "4"], dir).status.success());
    }
    for f in ["taxonomy.txt", "profiles.txt"] {
        let text = fs::read_to_string(a.join(f)).unwrap();
        assert_eq!(text, fs::read_to_string(b.join(f)).unwrap());
        assert!(text.starts_with("# seed 4"));
    }
    assert_eq!(content_lines(&a.join("profiles.txt")), 2);
}

#[test]
fn one_peer_smoke_run_prints_a_summary() {
    let out = scratch("smoke");
    let o = strata(&["run", "--peers", "1", "--cycles", "5", "--seed", "9"], &out);
    assert!(o.status.success());
    assert!(stdout(&o).contains("seed 9"));
    let r = rows(&out.join("summary.jsonl"));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0]["seed"], 9);
    assert!(out.join("run-seed9.metrics.jsonl").exists());
}

#[test]
fn flood_baseline_adds_comparison_columns_and_report_refolds_runs() {
    let out = scratch("flood");
    let common = ["run", "--peers", "60", "--cycles", "50", "--queries", "8", "--warmup", "40", "--seeds", "2,3"];
    let plain = strata(&common, &out);
    assert!(plain.status.success());
    assert!(!stdout(&plain).contains("flood_r"));
    let o = strata(&[&common[..], &["--baseline", "flood"]].concat(), &out);
    assert!(o.status.success());
    assert!(stdout(&o).contains("flood_r"));
    let summary = rows(&out.join("summary.jsonl"));
    assert!(summary.iter().all(|r| r["flood_recall"].is_number() && r["contacted_ratio"].is_number()));

    let rep = Command::new(env!("CARGO_BIN_EXE_strata")).args(["report", "--json"]).arg(&out).output().unwrap();
    assert!(rep.status.success());
    let refolded: Vec<Value> = stdout(&rep).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(refolded, summary);
}

#[test]
fn ttl_axis_gives_three_rows_per_seed_in_stable_order() {
    let run = |name: &str| {
        let out = scratch(name);
        let args = ["sweep", "--peers", "50", "--cycles", "45", "--queries", "4", "--warmup", "35", "--axis", "query.ttl=1,2,3"];
        let o = strata(&args, &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("sweep.jsonl")).unwrap()
    };
    let first = run("ttl-a");
    assert_eq!(first, run("ttl-b"));
    let r: Vec<Value> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(r.len(), 15);
    let order: Vec<(i64, i64)> =
        r.iter().map(|x| (x["cell"]["query.ttl"].as_i64().unwrap(), x["seed"].as_i64().unwrap())).collect();
    let want: Vec<(i64, i64)> = (1..=3).flat_map(|t| (1..=5).map(move |s| (t, s))).collect();
    assert_eq!(order, want);
}

#[test]
fn theta_sweep_on_the_reference_spec() {
    let out = scratch("theta");
    let o = strata(&["sweep", "--spec", &spec_path("reference.toml"), "--axis", "query.theta=0.3,0.5,0.7"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("sweep.jsonl"));
    let mean_of = |theta: f64, field: &str| {
        let xs: Vec<f64> = r
            .iter()
            .filter(|x| x["cell"]["query.theta"].as_f64() == Some(theta))
            .map(|x| if field == "recall" { x["recall"]["mean"].as_f64().unwrap() } else { x[field].as_f64().unwrap() })
            .collect();
        assert_eq!(xs.len(), 5);
        xs.iter().sum::<f64>() / 5.0
    };
    let recall: Vec<f64> = [0.3, 0.5, 0.7].iter().map(|&t| mean_of(t, "recall")).collect();
    assert!(recall[0] >= recall[1] && recall[1] >= recall[2], "recall by theta {recall:?}");

    let baseline: toml::Table = fs::read_to_string(spec_path("reference-baseline.toml")).unwrap().parse().unwrap();
    let tol = baseline["tolerance"].as_float().unwrap();
    let near = |x: f64, key: &str| (x - baseline[key].as_float().unwrap()).abs() <= tol;
    assert!(near(recall[1], "recall"), "recall {}", recall[1]);
    assert!(near(mean_of(0.5, "contacted_ratio"), "contacted_ratio"));
}

#[test]
fn invalid_input_exits_with_code_two() {
    let out = scratch("bad");
    let file = out.with_extension("file");
    fs::write(&file, "x").unwrap();
    let blocked = file.join("sub");
    let cases: Vec<(Vec<&str>, &Path)> = vec![
        (vec!["sweep", "--peers", "10", "--axis", "query.ttl="], &out),
        (vec!["sweep", "--peers", "10", "--axis", "query.bogus=1,2"], &out),
        (vec!["sweep", "--peers", "10"], &out),
        (vec!["run", "--peers", "0"], &out),
        (vec!["run", "--peers", "4", "--seeds", "1,1"], &out),
        (vec!["run", "--set", "dht.nothing=3"], &out),
        (vec!["run", "--peers", "4", "--cycles", "2"], &blocked),
        (vec!["gen-dataset", "--peers", "4"], &blocked),
    ];
    for (args, dir) in cases {
        let o = strata(&args, dir);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn run_reads_a_generated_dataset() {
    let out = scratch("from-dataset");
    assert!(strata(&["gen-dataset", "--peers", "30", "--seed", "6"], &out).status.success());
    let o = strata(&["run", "--dataset", out.to_str().unwrap(), "--cycles", "5"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("summary.jsonl"))[0]["n_peers"], 30);
}
