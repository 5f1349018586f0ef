//! End-to-end tests of the command-line binary: exit codes, configuration
//! layering, artifact verification, and byte-level reproducibility of a
//! full train → index → distill → query pipeline at a tiny budget.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jepa-ir"));
    // Isolate from ambient overrides so tests control every layer.
    for (key, _) in std::env::vars() {
        if key.starts_with("JEPA_IR_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("jepa-ir-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// A configuration small enough that every command finishes in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(
        &path,
        "# tiny smoke-test setup\n\
         d_model = 16\n\
         n_layers = 1\n\
         n_heads = 2\n\
         data = synth\n\
         n_docs = 4\n\
         train_queries = 8\n\
         dev_queries = 2\n\
         test_queries = 4\n\
         lr = 0.001\n\
         batch = 8\n\
         steps = 4\n\
         eval_every = 100\n\
         patience = 5\n\
         k = 2\n",
    )
    .unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process terminated by signal")
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tmp_dir("no-seed");
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["train-teacher", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed"), "stderr should explain the missing seed: {stderr}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_config_key_is_rejected_with_line_number() {
    let dir = tmp_dir("bad-key");
    let cfg = dir.join("bad.conf");
    std::fs::write(&cfg, "seed = 1\nbogus_key = 3\n").unwrap();
    let out = bin()
        .args(["train-teacher", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus_key") && stderr.contains('2'), "{stderr}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_dataset_path_is_a_usage_error() {
    let dir = tmp_dir("no-data");
    let out = bin()
        .args(["train-teacher", "--seed", "1", "--data", "/nonexistent/pairs.jsonl", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn distill_without_teacher_is_a_usage_error() {
    let dir = tmp_dir("no-teacher");
    let cfg = tiny_config(&dir);
    let out = bin()
        .args(["distill", "--seed", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not in the manifest"), "{stderr}");
    std::fs::remove_dir_all(&dir).unwrap();
}

fn run_pipeline(cfg: &Path, out_dir: &Path) {
    for step in ["train-teacher", "index", "distill"] {
        run_ok(bin().args([step, "--seed", "11", "--config"]).arg(cfg).arg("--out").arg(out_dir));
    }
    run_ok(
        bin()
            .args(["query", "rose bi wavy ca", "--seed", "11", "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(out_dir),
    );
}

#[test]
fn full_pipeline_produces_identical_artifacts_across_reruns() {
    let dir = tmp_dir("determinism");
    let cfg = tiny_config(&dir);
    let a = dir.join("a");
    let b = dir.join("b");
    run_pipeline(&cfg, &a);
    run_pipeline(&cfg, &b);

    for name in
        ["teacher.json", "teacher_ce.csv", "cache.jsonl", "theta.json", "distill_curve.csv", "query_result.json"]
    {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "artifact {name} differs between identical runs");
        assert!(!bytes_a.is_empty(), "artifact {name} is empty");
    }
    // The resolved config is serialized alongside the outputs.
    assert!(a.join("config.resolved").exists());
    assert!(a.join("manifest.json").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn query_beyond_pool_size_is_a_usage_error() {
    let dir = tmp_dir("big-k");
    let cfg = tiny_config(&dir);
    let out_dir = dir.join("out");
    run_pipeline(&cfg, &out_dir);
    let out = bin()
        .args(["query", "bi du", "--seed", "11", "--k", "99", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn tampered_cache_is_refused_by_downstream_commands() {
    let dir = tmp_dir("tamper");
    let cfg = tiny_config(&dir);
    let out_dir = dir.join("out");
    for step in ["train-teacher", "index"] {
        run_ok(bin().args([step, "--seed", "3", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    }
    // Flip one byte of the cache after indexing.
    let cache_path = out_dir.join("cache.jsonl");
    let mut bytes = std::fs::read(&cache_path).unwrap();
    let last = bytes.len() - 2;
    bytes[last] = bytes[last].wrapping_add(1);
    std::fs::write(&cache_path, &bytes).unwrap();

    let out = bin()
        .args(["distill", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("manifest"), "{stderr}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn lock_file_blocks_a_second_run() {
    let dir = tmp_dir("lock");
    let cfg = tiny_config(&dir);
    let out_dir = dir.join("out");
    std::fs::create_dir_all(&out_dir).unwrap();
    std::fs::write(out_dir.join(".lock"), "12345\n").unwrap();
    let out = bin()
        .args(["train-teacher", "--seed", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn environment_layer_supplies_values_and_flags_beat_it() {
    let dir = tmp_dir("env");
    let cfg = tiny_config(&dir);

    // Env supplies the seed: command succeeds without --seed.
    let out_a = dir.join("a");
    run_ok(
        bin()
            .env("JEPA_IR_SEED", "11")
            .args(["train-teacher", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_a),
    );
    let resolved = std::fs::read_to_string(out_a.join("config.resolved")).unwrap();
    assert!(resolved.contains("seed = 11"), "{resolved}");

    // A flag overrides the same key coming from the environment.
    let out_b = dir.join("b");
    run_ok(
        bin()
            .env("JEPA_IR_STEPS", "9")
            .args(["train-teacher", "--seed", "11", "--steps", "2", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_b),
    );
    let resolved = std::fs::read_to_string(out_b.join("config.resolved")).unwrap();
    assert!(resolved.contains("steps = 2"), "{resolved}");
    let curve = std::fs::read_to_string(out_b.join("teacher_ce.csv")).unwrap();
    let train_rows = curve.lines().filter(|l| l.contains(",train,")).count();
    assert_eq!(train_rows, 2, "steps flag should cap the run:\n{curve}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn query_output_json_matches_ranked_stdout() {
    let dir = tmp_dir("query-json");
    let cfg = tiny_config(&dir);
    let out_dir = dir.join("out");
    run_pipeline(&cfg, &out_dir);
    let out = run_ok(
        bin()
            .args(["query", "zest du suet fe", "--seed", "11", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with(char::is_numeric)).collect();
    assert_eq!(lines.len(), 2, "k=2 hits expected:\n{stdout}");

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("query_result.json")).unwrap())
            .unwrap();
    let results = json["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    for (line, hit) in lines.iter().zip(results) {
        let mut cols = line.split('\t');
        assert_eq!(cols.next().unwrap(), hit["rank"].to_string());
        assert_eq!(cols.next().unwrap(), hit["doc_id"].as_str().unwrap());
        let shown: f64 = cols.next().unwrap().parse().unwrap();
        assert!((shown - hit["relevance"].as_f64().unwrap()).abs() < 1e-5);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
