use std::fs;
use std::process::{Command, Output};

fn qpwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpwalk")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

const SMALL: [&str; 6] = ["--trunc", "60", "--horizon", "600", "--constraint-window", "30"];

const MODEL: &str = "
[interior]
1,0 = 0.2
0,1 = 0.2
-1,-1 = 0.6
[horizontal]
1,0 = 0.2
0,1 = 0.2
-1,0 = 0.18
[vertical]
1,0 = 0.2
0,1 = 0.2
0,-1 = 0.18
[origin]
1,0 = 0.2
0,1 = 0.2
[pi]
term = 0.588748759667, 0.380246370823, 1
term = 0.380246370823, 0.588748759667, 1
[perturbation]
h_bar_10 = 0.2
v_bar_01 = 0.2
";

#[test]
fn curves_writes_files_and_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpwalk(&["curves", "--mu-star", "0.18", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("q_h,0.5887,0.3802"));
    for f in ["allcurves_data_int.csv", "allcurves_data_hor.csv", "allcurves_data_ver.csv", "points.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let int = fs::read_to_string(dir.path().join("allcurves_data_int.csv")).unwrap();
    assert!(int.starts_with("rho,sigma_q_branch1,sigma_q_branch2"));

    let o = qpwalk(&["curves", "--eta", "0.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "product_form,0.4574,0.4574");
}

#[test]
fn model_file_matches_builtin_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("jd.txt");
    fs::write(&path, MODEL).unwrap();
    let from_file = qpwalk(&["perturb", "--model", path.to_str().unwrap()]);
    let builtin = qpwalk(&["perturb", "--mu-star", "0.18"]);
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    let a = stdout(&from_file);
    let b = stdout(&builtin);
    for col in ["h_bar_10", "limit_h_down", "threshold"] {
        let (x, y) = (&column(&a, col)[0], &column(&b, col)[0]);
        match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(x), Ok(y)) => assert!((x - y).abs() < 1e-9, "{col}: {x} vs {y}"),
            _ => assert_eq!(x, y),
        }
    }
}

#[test]
fn bad_model_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "[interior]\n1,0 = 0.2\n[horizontal]\n0,-1 = 0.1\n").unwrap();
    let o = qpwalk(&["perturb", "--model", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}

#[test]
fn bound_with_constant_bias() {
    let o = qpwalk(&["bound", "--mu-star", "0.18", "--bias-constant", "5.5555555556"]);
    assert!(o.status.success());
    let total: f64 = column(&stdout(&o), "total")[0].parse().unwrap();
    assert!(total > 0.0 && total.is_finite());
}

#[test]
fn oracle_exit_codes() {
    let mut args = vec!["oracle", "--eta", "0.4"];
    args.extend(SMALL);
    let o = qpwalk(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(column(&stdout(&o), "passed")[0], "true");

    args.extend(["--bias-constant", "0"]);
    let o = qpwalk(&args);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(column(&stdout(&o), "passed")[0], "false");
}

#[test]
fn infeasible_configuration_exits_3() {
    let o = qpwalk(&["perturb", "--lambda", "0.2", "--mu", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
    let o = qpwalk(&["bound", "--eta", "1.5"]);
    assert_eq!(o.status.code(), Some(3));
    let o = qpwalk(&["bound", "--reward", "n2"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["sweep", "--mode", "eta", "--grid", "0.4,0.5,0.6", "--out", out.to_str().unwrap()];
        args.extend(SMALL);
        let o = qpwalk(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert_eq!(a.lines().count(), 7);
    assert_eq!(column(&a, "reward"), ["empty", "n1", "empty", "n1", "empty", "n1"]);
    assert!(column(&a, "status").iter().all(|s| s == "ok"));
    let x = column(&a, "x");
    assert_eq!(x, ["0.4", "0.4", "0.5", "0.5", "0.6", "0.6"]);
}
