use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workdir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn opwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opwlab")).args(args).output().expect("spawn opwlab")
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.cfg");
    fs::write(&p, body).unwrap();
    p
}

const T1: &str = "experiment = t1
grid.half_width = 8
grid.n = 1024
target.kind = sinusoid
target.beta = 0.5
target.window = 1
box.alpha = 1
box.gamma = 1
budget.epsilon = 0.1
";

#[test]
fn run_writes_report_traces_and_operator() {
    let d = workdir("run");
    let cfg = write_cfg(&d, T1);
    let out = opwlab(&["run", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.starts_with("t1 converged=true"), "{stdout}");
    for f in ["report.json", "input.txt", "output.txt", "target.txt", "m.txt", "smoothing.txt", "operator.json"] {
        assert!(d.join("out").join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert!(report["energy_ratio"].as_f64().unwrap() >= 1.0);
    assert!(report["hs_norm"].as_f64().unwrap().is_finite());

    let op = d.join("out/operator.json");
    let out = opwlab(&["inspect", op.to_str().unwrap(), "--hs-norm", "--check-involution", "--symbol"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("kind=separable"));
    let hs: f64 = stdout.lines().find_map(|l| l.strip_prefix("hs_norm=")).unwrap().parse().unwrap();
    assert!((hs - report["hs_norm"].as_f64().unwrap()).abs() <= 1e-12 * hs);
    let inv: f64 = stdout.lines().find_map(|l| l.strip_prefix("involution_error=")).unwrap().parse().unwrap();
    assert!(inv < 1e-10, "{inv}");
    assert!(d.join("out/operator.symbol.txt").exists());
}

#[test]
fn unreachable_epsilon_exits_two() {
    let d = workdir("miss");
    let cfg = write_cfg(&d, &format!("{T1}synth.lambda = 1\nsynth.b = 1\n").replace("budget.epsilon = 0.1", "budget.epsilon = 0.001"));
    let out = opwlab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=false"));
}

#[test]
fn bad_config_exits_one_with_line() {
    let d = workdir("bad");
    let cfg = write_cfg(&d, "experiment = t1\nbogus = 3\n");
    let out = opwlab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn sweep_writes_one_row_per_value_in_order() {
    let d = workdir("sweep");
    let cfg = write_cfg(&d, T1);
    let out = opwlab(&["sweep", cfg.to_str().unwrap(), "--param", "lambda", "--values", "1e-8,1e-4,1"]);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(d.join("out/sweep_lambda.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["value", "residual", "achieved_error", "energy_ratio", "hs_norm", "symbol_sup", "converged", "status"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    let values: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(values, [1e-8, 1e-4, 1.0]);
    // Stronger regularisation cannot fit better.
    let res: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(res[0] <= res[1] && res[1] <= res[2], "{res:?}");
    for i in 0..3 {
        assert!(d.join(format!("out/sweep_lambda/{i:03}/report.json")).exists());
    }
}

#[test]
fn sweep_rejects_empty_values_and_unknown_param() {
    let d = workdir("sweep_bad");
    let cfg = write_cfg(&d, T1);
    let c = cfg.to_str().unwrap();
    assert_eq!(opwlab(&["sweep", c, "--param", "B", "--values", ""]).status.code(), Some(1));
    assert_eq!(opwlab(&["sweep", c, "--param", "gamma", "--values", "1"]).status.code(), Some(1));
}

#[test]
fn obstruction_and_synth_runs() {
    let d = workdir("obstruction");
    let cfg = write_cfg(
        &d,
        "experiment = obstruction
grid.half_width = 4
grid.n = 256
grid.half_shift = true
box.alpha = 0.25
obstruction.shift = 2
seed = 3
",
    );
    let out = opwlab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/obstruction.json")).unwrap()).unwrap();
    assert!(r["min_error"].as_f64().unwrap() >= 1.0 - 1e-6);
    assert_eq!(r["seed"], 3);

    let d = workdir("synth");
    let cfg = write_cfg(
        &d,
        "experiment = synth
grid.half_width = 8
grid.n = 512
target.kind = sinusoid
target.beta = 1
target.window = 1
box.alpha = 1
synth.b = 1
",
    );
    let out = opwlab(&["run", cfg.to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(0 | 2)));
    for f in ["synthesis.json", "m.txt", "coefficients.txt"] {
        assert!(d.join("out").join(f).exists(), "missing {f}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "cfg") {
            opwlab::cli::ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
