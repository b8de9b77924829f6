use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const KEY: &str = "00112233aabb";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gumbelmark"));
    cmd.env_remove("GUMBELMARK_KEY");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn generate_is_deterministic_and_counts_tokens() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path_str(&dir, "a.json"), path_str(&dir, "b.json"));
    for out in [&a, &b] {
        ok(&["generate", "--key", KEY, "--n", "400", "--m", "5", "--delta", "0.3", "--seed", "9", "--out", out]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let seq = json_file(Path::new(&a));
    let tokens = seq["tokens"].as_array().unwrap();
    let prompt = seq["provenance"].as_array().unwrap().iter().filter(|f| *f == "P").count();
    assert_eq!(prompt, 5);
    assert_eq!(tokens.len() - prompt, 400);

    let manifest = json_file(Path::new(&format!("{a}.manifest.json")));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["outputs"][0], a.as_str());
    assert!(manifest["config"].get("key").is_none_or(|k| k.as_object().is_some_and(|o| o.is_empty())));
}

#[test]
fn null_generation_has_no_watermarked_positions() {
    let dir = TempDir::new().unwrap();
    let out = path_str(&dir, "n.json");
    ok(&["generate", "--null", "--n", "300", "--seed", "2", "--out", &out]);
    let seq = json_file(Path::new(&out));
    let flags = seq["provenance"].as_array().unwrap();
    assert_eq!(flags.len(), seq["tokens"].as_array().unwrap().len());
    assert!(flags.iter().all(|f| f != "W"));
}

#[test]
fn detect_requires_exactly_one_threshold_source() {
    let dir = TempDir::new().unwrap();
    let seq = path_str(&dir, "w.json");
    ok(&["generate", "--key", KEY, "--n", "50", "--out", &seq]);
    let none = run(&["detect", "--input", &seq, "--key", KEY]);
    assert_eq!(none.status.code(), Some(2));
    let both = run(&["detect", "--input", &seq, "--key", KEY, "--critical-value", "3", "--calibrate"]);
    assert_eq!(both.status.code(), Some(2));
    let missing = run(&["detect", "--input", &path_str(&dir, "nope.json"), "--key", KEY, "--critical-value", "3"]);
    assert_eq!(missing.status.code(), Some(3));
    let bad_key = run(&["generate", "--key", "xyz", "--n", "5", "--out", &seq]);
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_flag = run(&["generate", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn key_from_environment_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let (env_out, flag_out) = (path_str(&dir, "e.json"), path_str(&dir, "f.json"));
    let status = bin()
        .env("GUMBELMARK_KEY", KEY)
        .args(["generate", "--n", "60", "--seed", "4", "--out", &env_out])
        .status()
        .unwrap();
    assert!(status.success());
    ok(&["generate", "--key", KEY, "--n", "60", "--seed", "4", "--out", &flag_out]);
    assert_eq!(fs::read(&env_out).unwrap(), fs::read(&flag_out).unwrap());

    let overridden = path_str(&dir, "o.json");
    let status = bin()
        .env("GUMBELMARK_KEY", "ffee")
        .args(["generate", "--key", KEY, "--n", "60", "--seed", "4", "--out", &overridden])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&overridden).unwrap(), fs::read(&flag_out).unwrap());
}

fn verdict(args: &[&str]) -> Value {
    serde_json::from_slice(&ok(args).stdout).unwrap()
}

#[test]
fn detection_power_and_wrong_key_rate() {
    let dir = TempDir::new().unwrap();
    let cal = path_str(&dir, "cal.json");
    ok(&["calibrate", "--n", "400", "--alpha", "0.01", "--reps", "10000", "--outer", "1", "--seed", "3", "--out", &cal]);
    let cv = json_file(Path::new(&cal))["critical_value"].as_f64().unwrap();
    let cv = cv.to_string();
    let runs = 200;
    let (mut hits, mut false_alarms) = (0, 0);
    for seed in 0..runs {
        let seq = path_str(&dir, &format!("w{seed}.json"));
        let seed = seed.to_string();
        ok(&["generate", "--key", KEY, "--n", "400", "--m", "5", "--delta", "0.3", "--seed", &seed, "--out", &seq]);
        let right = verdict(&["detect", "--input", &seq, "--key", KEY, "--critical-value", &cv]);
        assert_eq!(right["n_scored"], 400);
        hits += right["reject"].as_bool().unwrap() as usize;
        let wrong = verdict(&["detect", "--input", &seq, "--key", "0badc0de", "--critical-value", &cv]);
        false_alarms += wrong["reject"].as_bool().unwrap() as usize;
    }
    assert!(hits as f64 >= 0.95 * runs as f64, "power {hits}/{runs}");
    // Binomial(200, 0.01): P(X > 7) < 1e-3
    assert!(false_alarms <= 7, "wrong-key rejections {false_alarms}/{runs}");
}

#[test]
fn verdict_schema_and_calibration_cache() {
    let dir = TempDir::new().unwrap();
    let seq = path_str(&dir, "w.json");
    let cache = path_str(&dir, "cache");
    ok(&["generate", "--key", KEY, "--n", "200", "--seed", "1", "--out", &seq]);
    let args = [
        "detect", "--input", &seq, "--key", KEY, "--detector", "hc", "--calibrate", "--alpha", "0.05", "--reps", "2000",
        "--outer", "2", "--cache-dir", &cache,
    ];
    let first = verdict(&args);
    for field in ["statistic", "n_scored", "critical_value", "reject", "detector"] {
        assert!(first.get(field).is_some(), "missing {field}");
    }
    assert_eq!(first["detector"]["kind"], "hc");
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    let second = verdict(&args);
    assert_eq!(first, second);

    let clt = verdict(&[
        "detect", "--input", &seq, "--key", KEY, "--detector", "sum", "--score", "log", "--calibrate", "--clt",
    ]);
    assert_eq!(clt["detector"]["score"], "log");
    let hc_clt = run(&["detect", "--input", &seq, "--key", KEY, "--detector", "hc", "--calibrate", "--clt"]);
    assert_eq!(hc_clt.status.code(), Some(2));
}

#[test]
fn edit_round_trip() {
    let dir = TempDir::new().unwrap();
    let (seq, edited) = (path_str(&dir, "w.json"), path_str(&dir, "e.json"));
    ok(&["generate", "--key", KEY, "--n", "100", "--m", "3", "--seed", "5", "--out", &seq]);
    for kind in ["sub", "ins", "del", "adv"] {
        ok(&["edit", "--input", &seq, "--edit", kind, "--fraction", "0.2", "--key", KEY, "--out", &edited]);
        let before = json_file(Path::new(&seq));
        let after = json_file(Path::new(&edited));
        let len = |v: &Value| v["tokens"].as_array().unwrap().len() as i64;
        let expected = match kind {
            "ins" => 20,
            "del" => -20,
            _ => 0,
        };
        assert_eq!(len(&after) - len(&before), expected, "{kind}");
        assert!(Path::new(&format!("{edited}.manifest.json")).exists());
    }
    let no_key = run(&["edit", "--input", &seq, "--edit", "adv", "--fraction", "0.2", "--out", &edited]);
    assert_eq!(no_key.status.code(), Some(2));
}

#[test]
fn boundary_smoke_is_full_grid_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path_str(&dir, "a.csv"), path_str(&dir, "b.csv"));
    for out in [&a, &b] {
        ok(&["experiment", "boundary", "--n", "1000", "--grid", "10", "--trials", "100", "--seed", "8", "--out", out]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("detector,p,q,min_error_sum,threshold,oracle_error_sum"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);
    for row in rows {
        let err: f64 = row.rsplit(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=2.0).contains(&err));
    }
    let manifest = json_file(Path::new(&format!("{a}.manifest.json")));
    assert_eq!(manifest["config"]["suite"], "boundary");
}

#[test]
fn efficiency_rate_column_is_monotone() {
    let dir = TempDir::new().unwrap();
    let out = path_str(&dir, "eff.csv");
    ok(&["experiment", "efficiency", "--eps", "1.0", "--out", &out]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("delta,epsilon,rate\n"));
    let rates: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(rates.len() > 100);
    assert!(rates.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn small_suites_run() {
    let dir = TempDir::new().unwrap();
    let hist = path_str(&dir, "h.csv");
    ok(&["experiment", "hist", "--n", "500", "--trials", "50", "--s", "1,2", "--out", &hist]);
    let text = fs::read_to_string(&hist).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 50);
    let manifest = json_file(Path::new(&format!("{hist}.manifest.json")));
    assert_eq!(manifest["powers"].as_array().unwrap().len(), 2);

    let gap = path_str(&dir, "g.csv");
    ok(&["experiment", "gapcheck", "--samples", "20000", "--out", &gap]);
    assert_eq!(fs::read_to_string(&gap).unwrap().lines().count(), 10);

    let tol = path_str(&dir, "t.csv");
    ok(&[
        "experiment", "tolerance", "--key", KEY, "--n", "100", "--trials", "3", "--vocab", "50", "--out", &tol,
    ]);
    assert_eq!(fs::read_to_string(&tol).unwrap().lines().count(), 4);
}

#[test]
fn jobs_do_not_change_results() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path_str(&dir, "a.csv"), path_str(&dir, "b.csv"));
    ok(&["--jobs", "1", "experiment", "hist", "--n", "300", "--trials", "40", "--out", &a]);
    ok(&["--jobs", "3", "experiment", "hist", "--n", "300", "--trials", "40", "--out", &b]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
