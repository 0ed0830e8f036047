use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hqi::model::Metric;
use hqi::storage::{self, IndexManifest};
use serde_json::Value;

fn hqi() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hqi"));
    cmd.env_remove("HQI_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to launch hqi")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn ok_json(cmd: &mut Command) -> Value {
    let out = run(cmd);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("spec.json");
    fs::write(&p, body).unwrap();
    p
}

fn gen_synthetic(dir: &Path, n: usize, n_q: usize, seed: u64) -> PathBuf {
    let spec = write_spec(dir, &format!(r#"{{"kind": "synthetic", "n": {n}, "d": 8, "n_q": {n_q}, "seed": {seed}}}"#));
    let data = dir.join("data");
    ok_json(hqi().args(["gen", "--spec"]).arg(&spec).arg("--out").arg(&data));
    data
}

fn manifest(dir: &Path) -> IndexManifest {
    storage::read_manifest(dir).unwrap()
}

#[test]
fn gen_writes_files_matching_the_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), r#"{"kind": "synthetic", "n": 300, "d": 5, "n_q": 4, "seed": 9, "metric": "ip"}"#);
    let data = tmp.path().join("data");
    let report = ok_json(hqi().args(["gen", "--spec"]).arg(&spec).arg("--out").arg(&data));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["queries"], 80);

    let vf = storage::decode_vectors(&fs::read(data.join("vectors.bin")).unwrap()).unwrap();
    assert_eq!((vf.len(), vf.dim, vf.metric), (300, 5, Metric::InnerProduct));
    assert_eq!(fs::read_to_string(data.join("attrs.jsonl")).unwrap().lines().count(), 300);
    assert_eq!(fs::read_to_string(data.join("workload.jsonl")).unwrap().lines().count(), 80);
    let db = storage::load_dataset(&data).unwrap();
    assert_eq!(db.len(), 300);
}

#[test]
fn gen_is_byte_deterministic_and_honors_the_seed_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), r#"{"kind": "kg", "n": 400, "d": 4, "n_queries": 50, "seed": 1}"#);
    let outs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|s| tmp.path().join(s)).collect();
    ok_json(hqi().args(["gen", "--spec"]).arg(&spec).arg("--out").arg(&outs[0]));
    ok_json(hqi().args(["gen", "--spec"]).arg(&spec).arg("--out").arg(&outs[1]));
    let report = ok_json(hqi().env("HQI_SEED", "2").args(["gen", "--spec"]).arg(&spec).arg("--out").arg(&outs[2]));
    assert_eq!(report["seed"], 2);
    for f in ["vectors.bin", "attrs.jsonl", "workload.jsonl"] {
        let a = fs::read(outs[0].join(f)).unwrap();
        assert_eq!(a, fs::read(outs[1].join(f)).unwrap(), "{f}");
        assert_ne!(a, fs::read(outs[2].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gen_selectivities_follow_the_filter_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let n = 1usize << 16;
    let data = gen_synthetic(tmp.path(), n, 1, 21);
    let db = storage::load_dataset(&data).unwrap();
    for attr in ["A", "B"] {
        for i in 1..=10 {
            let s = 0.5f64.powi(i);
            let count = db
                .tuples()
                .iter()
                .filter(|t| match t.attrs[attr] {
                    hqi::model::AttributeValue::Float(v) => v < s,
                    _ => panic!("{attr} is not a float"),
                })
                .count() as f64;
            let sigma = (n as f64 * s * (1.0 - s)).sqrt();
            assert!((count - n as f64 * s).abs() <= 3.0 * sigma, "{attr} < 2^-{i}: {count}");
        }
    }
}

#[test]
fn gen_rejects_bad_specs() {
    let tmp = tempfile::tempdir().unwrap();
    for body in [r#"{"kind": "synthetic", "n": 0, "d": 4, "n_q": 1, "seed": 1}"#, r#"{"kind": "mystery"}"#, "not json"] {
        let spec = write_spec(tmp.path(), body);
        let out = run(hqi().args(["gen", "--spec"]).arg(&spec).arg("--out").arg(tmp.path().join("x")));
        assert_eq!(code(&out), 1, "{body}");
        assert!(!out.stderr.is_empty());
    }
    let out = run(hqi().args(["gen", "--spec"]).arg(tmp.path().join("missing.json")).arg("--out").arg(tmp.path()));
    assert_eq!(code(&out), 2);
}

/// Two clusters crossed with two entity types, plus one query per
/// combination.
fn write_toy(dir: &Path) -> PathBuf {
    let data = dir.join("toy");
    fs::create_dir_all(&data).unwrap();
    let groups = [(0.0f32, "artist", 30), (0.0, "song", 20), (10.0, "artist", 20), (10.0, "song", 10)];
    let mut vectors = Vec::new();
    let mut attrs = String::new();
    let mut id = 0;
    for &(center, ty, count) in &groups {
        for j in 0..count {
            vectors.extend([center + (j % 7) as f32 / 7.0, center + (j % 5) as f32 / 5.0]);
            attrs.push_str(&format!("{{\"id\": {id}, \"attrs\": {{\"type\": \"{ty}\"}}}}\n"));
            id += 1;
        }
    }
    fs::write(data.join("vectors.bin"), storage::encode_vectors(Metric::L2, 2, &vectors).unwrap()).unwrap();
    fs::write(data.join("attrs.jsonl"), attrs).unwrap();
    let mut workload = String::new();
    for (i, (c, ty)) in [(0.5, "song"), (10.5, "song"), (0.5, "artist"), (10.5, "artist")].iter().enumerate() {
        workload.push_str(&format!(
            "{{\"id\": {i}, \"vector\": [{c}, {c}], \"filter\": [{{\"attr\": \"type\", \"op\": \"eq\", \"value\": \"{ty}\"}}]}}\n"
        ));
    }
    fs::write(data.join("workload.jsonl"), workload).unwrap();
    data
}

#[test]
fn toy_input_builds_four_partitions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_toy(tmp.path());
    let idx = tmp.path().join("idx");
    let report = ok_json(
        hqi()
            .args(["build", "--strategy", "hqi", "--min_size", "1", "--num_centroids", "2", "--m", "1", "--data"])
            .arg(&data)
            .arg("--out")
            .arg(&idx),
    );
    assert_eq!(report["partitions"], 4);
    let m = manifest(&idx);
    assert_eq!(m.partitions.len(), 4);
    let mut sizes: Vec<usize> = m.partitions.iter().map(|p| p.size).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![10, 20, 20, 30]);
    let res = ok_json(hqi().args(["query", "--nprobe", "max", "--k", "5", "--data"]).arg(&data).arg("--index").arg(&idx));
    assert_eq!(res["queries"], 4);
}

#[test]
fn large_min_size_gives_one_partition_and_rebuilds_match() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 2000, 2, 4);
    let dirs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("idx{i}"))).collect();
    for d in &dirs {
        ok_json(hqi().args(["build", "--min_size", "5000", "--data"]).arg(&data).arg("--out").arg(d));
    }
    let (a, b) = (manifest(&dirs[0]), manifest(&dirs[1]));
    assert_eq!(a.partitions.len(), 1);
    assert_eq!(a, b);

    let many: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("hqi{i}"))).collect();
    for d in &many {
        ok_json(hqi().args(["build", "--min_size", "200", "--m", "2", "--data"]).arg(&data).arg("--out").arg(d));
    }
    let (a, b) = (manifest(&many[0]), manifest(&many[1]));
    assert!(a.partitions.len() > 1);
    let sums = |m: &IndexManifest| m.blobs().iter().map(|b| b.crc32).collect::<Vec<_>>();
    assert_eq!(sums(&a), sums(&b));
}

#[test]
fn seed_variable_overrides_the_seed_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 1000, 1, 4);
    let idx = tmp.path().join("idx");
    let report = ok_json(
        hqi()
            .env("HQI_SEED", "777")
            .args(["build", "--strategy", "prefilter", "--seed", "1", "--data"])
            .arg(&data)
            .arg("--out")
            .arg(&idx),
    );
    assert_eq!(report["config"]["seed"], 777);
    assert_eq!(manifest(&idx).seed, 777);
    let out = run(hqi().env("HQI_SEED", "abc").args(["build", "--data"]).arg(&data).arg("--out").arg(&idx));
    assert_eq!(code(&out), 1);
}

#[test]
fn build_accepts_a_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 1000, 1, 4);
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"strategy": {"kind": "range_c", "partition_attr": "B", "partition_count": 3}, "seed": 5}"#).unwrap();
    let idx = tmp.path().join("idx");
    let report = ok_json(hqi().args(["build", "--config"]).arg(&config).arg("--data").arg(&data).arg("--out").arg(&idx));
    assert_eq!(report["partitions"], 3);
    fs::write(&config, r#"{"strategy": {"kind": "range_c", "partition_attr": "nope", "partition_count": 3}, "seed": 5}"#).unwrap();
    let out = run(hqi().args(["build", "--config"]).arg(&config).arg("--data").arg(&data).arg("--out").arg(&idx));
    assert_eq!(code(&out), 2);
}

#[test]
fn query_at_exhaustive_nprobe_has_full_recall() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 3000, 3, 8);
    let oracle = tmp.path().join("oracle");
    ok_json(hqi().args(["build", "--strategy", "exhaustive", "--data"]).arg(&data).arg("--out").arg(&oracle));
    let truth = tmp.path().join("truth.jsonl");
    ok_json(hqi().args(["query", "--nprobe", "1", "--data"]).arg(&data).arg("--index").arg(&oracle).arg("--out").arg(&truth));

    let idx = tmp.path().join("idx");
    ok_json(hqi().args(["build", "--min_size", "300", "--data"]).arg(&data).arg("--out").arg(&idx));
    let metrics_path = tmp.path().join("metrics.json");
    let report = ok_json(
        hqi()
            .args(["query", "--nprobe", "max", "--k", "10", "--data"])
            .arg(&data)
            .arg("--index")
            .arg(&idx)
            .arg("--truth")
            .arg(&truth)
            .arg("--metrics")
            .arg(&metrics_path),
    );
    assert_eq!(report["recall"], 1.0);
    assert_eq!(report["schema_version"], 1);
    for field in ["strategy", "k", "nprobe", "tuples_scanned", "posting_lists_scanned", "wall_time_ms", "build_time_ms"] {
        assert!(report.get(field).is_some(), "{field}");
    }
    let saved: Value = serde_json::from_slice(&fs::read(&metrics_path).unwrap()).unwrap();
    assert_eq!(saved["recall"], 1.0);

    let auto = ok_json(hqi().args(["query", "--nprobe", "auto", "--data"]).arg(&data).arg("--index").arg(&idx));
    assert!(auto["recall"].as_f64().unwrap() >= 0.8);
    assert!(auto["tuning"].as_object().unwrap().len() == 20);

    let fixed = ok_json(hqi().args(["query", "--nprobe", "2", "--data"]).arg(&data).arg("--index").arg(&idx));
    assert!(fixed["recall"].is_null());
}

#[test]
fn empty_workload_gives_empty_results() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 800, 1, 8);
    let idx = tmp.path().join("idx");
    ok_json(hqi().args(["build", "--data"]).arg(&data).arg("--out").arg(&idx));
    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let results = tmp.path().join("res.jsonl");
    let report = ok_json(
        hqi()
            .args(["query", "--nprobe", "auto", "--data"])
            .arg(&data)
            .arg("--index")
            .arg(&idx)
            .arg("--workload")
            .arg(&empty)
            .arg("--out")
            .arg(&results),
    );
    assert_eq!(report["queries"], 0);
    assert_eq!(report["tuples_scanned"], 0);
    assert_eq!(report["posting_lists_scanned"], 0);
    assert_eq!(fs::read_to_string(&results).unwrap(), "");
}

#[test]
fn query_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 800, 1, 8);
    let idx = tmp.path().join("idx");
    ok_json(hqi().args(["build", "--data"]).arg(&data).arg("--out").arg(&idx));

    let wrong_dim = tmp.path().join("w.jsonl");
    fs::write(&wrong_dim, "{\"id\": 0, \"vector\": [1.0, 2.0], \"filter\": []}\n").unwrap();
    let out = run(hqi().args(["query", "--nprobe", "2", "--data"]).arg(&data).arg("--index").arg(&idx).arg("--workload").arg(&wrong_dim));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    let out = run(hqi().args(["query", "--nprobe", "lots", "--data"]).arg(&data).arg("--index").arg(&idx));
    assert_eq!(code(&out), 1);
    let out = run(hqi().args(["query", "--data"]).arg(&data));
    assert_eq!(code(&out), 1);

    let blob = manifest(&idx).partitions[0].postings.file.clone();
    let mut bytes = fs::read(idx.join(&blob)).unwrap();
    bytes[10] ^= 1;
    fs::write(idx.join(&blob), bytes).unwrap();
    let out = run(hqi().args(["query", "--nprobe", "2", "--data"]).arg(&data).arg("--index").arg(&idx));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn bench_with_one_strategy_has_unit_slowdown() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 1500, 2, 8);
    let report = ok_json(hqi().args(["bench", "--strategies", "exhaustive", "--data"]).arg(&data));
    assert_eq!(report["schema_version"], 1);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["slowdown"], 1.0);
    assert_eq!(rows[0]["recall"], 1.0);
    assert_eq!(report["per_filter"].as_array().unwrap().len(), 20);
}

#[test]
fn bench_reports_every_strategy_relative_to_hqi() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 4000, 3, 8);
    let out_path = tmp.path().join("report.json");
    let out = run(
        hqi()
            .args(["bench", "--min_size", "300", "--overfetch_factor", "10", "--data"])
            .arg(&data)
            .arg("--out")
            .arg(&out_path),
    );
    // post-filtering cannot reach the target on the most selective filters
    assert_eq!(code(&out), 3);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["reference"], "hqi");
    let rows = report["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["strategy"].as_str().unwrap()).collect();
    assert_eq!(names, ["exhaustive", "prefilter", "range", "postfilter", "hqi"]);
    let hqi_row = rows.iter().find(|r| r["strategy"] == "hqi").unwrap();
    assert_eq!(hqi_row["slowdown"], 1.0);
    for r in rows {
        let reached = r["target_reached"].as_bool().unwrap();
        assert_eq!(reached, r["strategy"] != "postfilter", "{}", r["strategy"]);
    }
    for r in rows {
        for f in ["build_time_ms", "nprobe", "recall", "tuples_scanned", "wall_time_ms", "slowdown"] {
            assert!(r.get(f).is_some(), "{f}");
        }
    }
    assert_eq!(report["per_filter"].as_array().unwrap().len(), 5 * 20);
    let saved: Value = serde_json::from_slice(&fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(saved["rows"], report["rows"]);
}

#[test]
fn bench_flags_unreachable_targets_with_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 3000, 2, 8);
    let out = run(
        hqi()
            .args(["bench", "--strategies", "postfilter", "--overfetch_factor", "1", "--data"])
            .arg(&data),
    );
    assert_eq!(code(&out), 3);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = &report["rows"][0];
    assert_eq!(row["target_reached"], false);
    assert!(row["recall"].as_f64().unwrap() < 0.8);
    let selective = report["per_filter"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["constraint"] == "A < 0.001953125")
        .unwrap();
    assert_eq!(selective["target_reached"], false);
}

#[test]
fn bench_skips_range_without_a_numeric_attribute() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_toy(tmp.path());
    let report = ok_json(hqi().args(["bench", "--strategies", "range,prefilter", "--data"]).arg(&data));
    assert_eq!(report["skipped"][0]["strategy"], "range");
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
    assert_eq!(report["reference"], "prefilter");
}

#[test]
fn batch_sweep_throughput_grows_with_batch_size() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_synthetic(tmp.path(), 20_000, 50, 8);
    let report = ok_json(
        hqi()
            .args(["bench", "--strategies", "prefilter", "--batch_sizes", "1,10,100,1000", "--data"])
            .arg(&data),
    );
    let sweep = report["batch_sweep"].as_array().unwrap();
    for mode in ["constraint", "full"] {
        let qps: Vec<f64> = sweep
            .iter()
            .filter(|r| r["batching"] == mode)
            .map(|r| r["queries_per_sec"].as_f64().unwrap())
            .collect();
        assert_eq!(qps.len(), 4);
        // single-run timings on a shared machine; allow some jitter between
        // neighbouring sizes but require a clear gain end to end
        for w in qps.windows(2) {
            assert!(w[1] >= 0.85 * w[0], "{mode}: {qps:?}");
        }
        assert!(qps[3] > 2.0 * qps[0], "{mode}: {qps:?}");
    }
}
