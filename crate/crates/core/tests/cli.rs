use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
episodes = 2
steps = 3

[channel]
antennas = 2
elements = 4
users_t = 1
users_r = 1

[agent]
hidden = 16
batch_size = 4

[eval]
realizations = 2
steps = 3

[oracle]
grid = { phase_levels = 2, split_levels = 2, power_levels = 2, directions = 2 }
"#;

fn starris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starris"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn succeed(args: &[&str]) -> Output {
    let out = starris(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{SMALL}\n{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn train_writes_metrics_checkpoint_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("run");
    succeed(&["train", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);

    let rows = lines(&out.join("metrics.csv"));
    assert_eq!(rows[0], "episode,mean_scaled_reward,mean_ee,min_rate,mean_power,violations");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,") && rows[2].starts_with("1,"));
    assert!(rows.iter().all(|r| !r.contains('e') || r.starts_with("episode")));

    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 7);
    assert_eq!(echo["mode"], "train");
    assert_eq!(echo["config"]["channel"]["antennas"], 2);
    assert!(out.join("checkpoint.json").exists());

    // greedy evaluation of the checkpoint just written
    succeed(&["eval", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    let eval = lines(&out.join("eval.csv"));
    assert_eq!(eval.len(), 3);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    succeed(&[
        "train", "--config", &cfg, "--seed", "1", "--out", o, "--episodes", "3", "--steps", "2",
        "--pmax-dbm", "30", "--antennas", "3", "--elements", "5", "--users-t", "2", "--users-r", "1",
        "--rmin", "0.2",
    ]);
    assert_eq!(lines(&out.join("metrics.csv")).len(), 4);
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let c = &echo["config"];
    assert_eq!(c["system"]["p_max_dbm"], 30.0);
    assert_eq!(c["system"]["r_min"], 0.2);
    assert_eq!((c["channel"]["antennas"].as_u64(), c["channel"]["elements"].as_u64()), (Some(3), Some(5)));
    assert_eq!((c["channel"]["users_t"].as_u64(), c["channel"]["users_r"].as_u64()), (Some(2), Some(1)));
    assert!((echo["system"]["p_max"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn repeated_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let run = |name: &str| {
        let out = dir.path().join(name);
        succeed(&["train", "--config", &cfg, "--seed", "42", "--out", out.to_str().unwrap(), "--episodes", "4"]);
        (fs::read(out.join("metrics.csv")).unwrap(), fs::read(out.join("checkpoint.json")).unwrap())
    };
    let (m1, c1) = run("a");
    let (m2, c2) = run("b");
    assert_eq!(m1, m2);
    assert_eq!(c1, c2);

    let other = dir.path().join("c");
    succeed(&["train", "--config", &cfg, "--seed", "43", "--out", other.to_str().unwrap(), "--episodes", "4"]);
    assert_ne!(fs::read(other.join("metrics.csv")).unwrap(), m1);
}

#[test]
fn sweep_writes_one_summary_row_per_axis_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[sweep]\naxis = \"p_max_dbm\"\nvalues = [10, 20, 30, 40]\nseeds = [1, 2]\n",
    );
    let out = dir.path().join("sweep");
    succeed(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--episodes", "1"]);
    let rows = lines(&out.join("summary.csv"));
    assert_eq!(rows[0], "axis,value,seeds,mean_ee,std_ee,median_ee");
    assert_eq!(rows.len(), 5);
    for (row, p) in rows[1..].iter().zip(["10", "20", "30", "40"]) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!((f[0], f[1], f[2]), ("p_max_dbm", p, "1;2"));
        assert!(f[3].parse::<f64>().unwrap() > 0.0);
    }
    assert!(out.join("p_max_dbm_40/seed_2/metrics.csv").exists());
}

#[test]
fn baseline_and_oracle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("base");
    succeed(&["baseline", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(lines(&out.join("metrics.csv")).len(), 3);

    let out = dir.path().join("oracle");
    succeed(&["oracle", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    let rows = lines(&out.join("oracle.csv"));
    assert_eq!(rows[0], "points,feasible_points,best_feasible_ee,best_any_ee");
    // 2 phases² · 2 splits · (2 powers · 2 directions)² for two users
    assert!(rows[1].starts_with("128,"));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("nothing");
    let o = out.to_str().unwrap();

    let missing = starris(&["eval", "--config", &cfg, "--seed", "1", "--out", o]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("checkpoint.json"));

    let unseeded = starris(&["train", "--config", &cfg, "--out", o]);
    assert!(!unseeded.status.success());
    assert!(String::from_utf8_lossy(&unseeded.stderr).contains("seed"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[channel]\nantennas = 0\n").unwrap();
    let invalid = starris(&["train", "--config", bad.to_str().unwrap(), "--seed", "1", "--out", o]);
    assert!(!invalid.status.success());
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("`channel`"));

    let no_file = starris(&["train", "--config", "/definitely/not/here.toml", "--seed", "1"]);
    assert!(!no_file.status.success());
}
