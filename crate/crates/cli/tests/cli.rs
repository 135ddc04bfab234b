use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rolestab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rolestab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = rolestab(dir, args);
    assert!(out.status.success(), "rolestab {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn synth_features(dir: &Path) {
    ok(dir, &["synth", "checkins", "--users", "60", "--rows", "1500", "--archetypes", "3", "--seed", "5", "--out-dir", "raw"]);
    ok(dir, &["ingest", "--input", "raw/checkins.tsv", "--out-dir", "ingest"]);
    ok(dir, &["featurize", "--input", "ingest/checkins.tsv", "--root-map", "raw/root_map.json", "--out-dir", "features"]);
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rolestab(dir.path(), &["ingest", "--input", "nope.tsv", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.tsv"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rolestab(dir.path(), &["cluster", "--bogus"]).status.code(), Some(2));
}

#[test]
fn strict_ingest_rejects_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let good = "1\tv1\tc1\tFood\t40.7\t-74.0\t-240\tSat Apr 07 17:42:24 +0000 2012\n";
    std::fs::write(dir.path().join("in.tsv"), format!("{good}1\tv1\tc1\tFood\tnorth\t-74.0\t-240\tSat Apr 07 17:42:24 +0000 2012\n")).unwrap();

    let out = rolestab(dir.path(), &["ingest", "--input", "in.tsv", "--out-dir", "o", "--strict"]);
    assert_eq!(out.status.code(), Some(1));

    ok(dir.path(), &["ingest", "--input", "in.tsv", "--out-dir", "lenient"]);
    let stats = json(dir.path().join("lenient/ingest_stats.json"));
    assert_eq!(stats["accepted"], 1);
    assert_eq!(stats["rejected"], 1);
    assert_eq!(stats["rejected_lines"], serde_json::json!([2]));
}

#[test]
fn ingest_counts_users() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "checkins", "--users", "1083", "--rows", "5000", "--seed", "1", "--out-dir", "raw"]);
    ok(dir.path(), &["ingest", "--input", "raw/checkins.tsv", "--out-dir", "ingest"]);
    let stats = json(dir.path().join("ingest/ingest_stats.json"));
    assert_eq!(stats["user_count"], 1083);
    assert_eq!(stats["accepted"], 5000);
    let manifest = json(dir.path().join("ingest/manifest.json"));
    assert_eq!(manifest["command"], "ingest");
    assert_eq!(manifest["inputs"][0]["path"], "raw/checkins.tsv");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn featurize_writes_both_pairs_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    synth_features(dir.path());
    let meta = json(dir.path().join("features/features.json"));
    assert_eq!(meta["user_count"], 60);
    assert_eq!(meta["checkin_count"], 1500);
    let files: Vec<&str> = meta["pairs"].as_array().unwrap().iter().map(|p| p["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["time-root_category.csv", "distance-root_category.csv"]);
    let header = std::fs::read_to_string(dir.path().join("features/time-root_category.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 1 + 24 * 9);
    assert!(header.starts_with("user_id,h0|Arts & Entertainment,"));
}

#[test]
fn stabilize_rejects_a_model_for_other_features() {
    let dir = tempfile::tempdir().unwrap();
    synth_features(dir.path());
    ok(dir.path(), &["cluster", "--features", "features/time-root_category.csv", "--k", "3", "--out-dir", "c"]);
    let out = rolestab(
        dir.path(),
        &["stabilize", "--features", "features/distance-root_category.csv", "--model", "c/model.json", "--out-dir", "s"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("c/model.json") && err.contains("columns"), "{err}");
}

#[test]
fn bad_feature_table_names_file_and_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("f.csv"), "user_id,a,b\nu1,1,x\nu2,0,1\n").unwrap();
    let out = rolestab(dir.path(), &["cluster", "--features", "f.csv", "--k", "2", "--out-dir", "c"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("f.csv") && err.contains("\"b\""), "{err}");
}

#[test]
fn report_has_per_run_and_per_pair_columns() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "blobs", "--k-true", "3", "--per-cluster", "20", "--dims", "4", "--separation", "10", "--seed", "3", "--out-dir", "b"]);
    ok(dir.path(), &["report", "--features", "b/features.csv", "--k", "3", "--runs", "3", "--seed", "1", "--out-dir", "r"]);
    let csv = std::fs::read_to_string(dir.path().join("r/comparison.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "feature,SC_K1,SC_K1_E,SC_K2,SC_K2_E,SC_K3,SC_K3_E,Rand_k1k2,Rand_k1k2_E,Rand_k1k3,Rand_k1k3_E,Rand_k2k3,Rand_k2k3_E"
    );
    assert!(dir.path().join("r/silhouette.svg").exists());
    assert!(dir.path().join("r/randomness.svg").exists());
}

#[test]
fn single_run_report_has_no_pairs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "blobs", "--k-true", "2", "--per-cluster", "10", "--dims", "2", "--seed", "3", "--out-dir", "b"]);
    ok(dir.path(), &["report", "--features", "b/features.csv", "--k", "2", "--runs", "1", "--out-dir", "r"]);
    let report = json(dir.path().join("r/comparison.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert!(report["pairs"].as_array().unwrap().is_empty());
    let csv = std::fs::read_to_string(dir.path().join("r/comparison.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "feature,SC_K1,SC_K1_E");
}

#[test]
fn separated_blobs_stabilize_to_agreement() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "blobs", "--k-true", "3", "--per-cluster", "20", "--dims", "6", "--separation", "12", "--seed", "8", "--out-dir", "b"]);
    ok(dir.path(), &["report", "--features", "b/features.csv", "--k", "3", "--seed", "2", "--out-dir", "r"]);
    let report = json(dir.path().join("r/comparison.json"));
    for p in report["pairs"].as_array().unwrap() {
        assert_eq!(p["randomness_after"], 0);
    }
    for r in report["runs"].as_array().unwrap() {
        assert_eq!(r["converged"], true);
    }
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in std::fs::read_dir(dir).unwrap().flatten() {
        for f in std::fs::read_dir(sub.path()).unwrap().flatten() {
            let name = format!("{}/{}", sub.file_name().to_string_lossy(), f.file_name().to_string_lossy());
            let mut bytes = std::fs::read(f.path()).unwrap();
            if name.ends_with("manifest.json") {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                let m = v.as_object_mut().unwrap();
                m.remove("started_at");
                m.remove("finished_at");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.push((name, bytes));
        }
    }
    out.sort();
    out
}

#[test]
fn identical_seeds_give_identical_outputs() {
    let root = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = root.path().join(name);
        std::fs::create_dir(&dir).unwrap();
        synth_features(&dir);
        let f = "features/time-root_category.csv";
        ok(&dir, &["elbow", "--features", f, "--k-max", "6", "--seed", "4", "--out-dir", "elbow"]);
        ok(&dir, &["cluster", "--features", f, "--k", "3", "--seed", "4", "--out-dir", "cluster"]);
        ok(&dir, &["stabilize", "--features", f, "--model", "cluster/model.json", "--seed", "4", "--order", "shuffle", "--max-rounds", "30", "--out-dir", "stab"]);
        ok(&dir, &["report", "--features", f, "--k", "3", "--seed", "4", "--max-rounds", "30", "--out-dir", "report"]);
        outputs(&dir)
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
}

#[test]
fn different_seeds_change_the_clustering_record() {
    let dir = tempfile::tempdir().unwrap();
    synth_features(dir.path());
    let f = "features/time-root_category.csv";
    ok(dir.path(), &["cluster", "--features", f, "--k", "3", "--seed", "1", "--out-dir", "c1"]);
    ok(dir.path(), &["cluster", "--features", f, "--k", "3", "--seed", "2", "--out-dir", "c2"]);
    assert_ne!(json(dir.path().join("c1/model.json"))["seed"], json(dir.path().join("c2/model.json"))["seed"]);
}
