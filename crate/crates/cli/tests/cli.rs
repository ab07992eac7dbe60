use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TWO_AGENT: &str = r#"{"n": 2, "p": [3, 1], "c": [2, 1], "a": [-10, -10], "gamma": 4, "p_ref": 2.8}"#;

fn binnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binnn")).args(args).output().expect("spawn binnn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{text}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_is_deterministic_and_echoes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = binnn(&["gen", "--n", "12", "--seed", "5", "--topology", "ring", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        assert!(text.contains("n = 12"));
        assert!(text.contains("P_r = 1500"));
        assert!(text.contains("|p| = "));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.json");
    binnn(&["gen", "--n", "12", "--seed", "6", "--out", c.to_str().unwrap()]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(binnn(&["gen", "--n", "0", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(binnn(&["solve", "--bogus"]).status.code(), Some(2));
    assert_eq!(binnn(&[]).status.code(), Some(2));
    assert_eq!(binnn(&["--help"]).status.code(), Some(0));
}

#[test]
fn two_agent_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "two.json", TWO_AGENT);
    for args in [
        vec!["--method", "brute"],
        vec!["--method", "greedy"],
        vec!["--method", "binnn-c", "--anneal", "--steps", "15", "--seed", "1"],
        vec!["--method", "binnn-d", "--anneal", "--steps", "15", "--seed", "1"],
    ] {
        let mut full = vec!["solve", "--instance", inst.as_str()];
        full.extend(args.iter());
        let o = binnn(&full);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        assert_eq!(field(&text, "bits"), "10", "{args:?}");
        let cost: f64 = field(&text, "cost").parse().unwrap();
        assert!((cost - 2.08).abs() < 1e-9, "{args:?}: {cost}");
        field(&text, "iterations");
        field(&text, "wall_time");
    }
}

#[test]
fn flow_solve_reports_diagnostics_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "two.json", TWO_AGENT);
    let traj = dir.path().join("traj.csv");
    let o = binnn(&[
        "solve",
        "--instance",
        &inst,
        "--method",
        "binnn-d",
        "--seed",
        "2",
        "--traj-out",
        traj.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    field(&text, "grad_norm");
    field(&text, "min_hessian_eigenvalue");
    field(&text, "local_min_certified");
    let csv = fs::read_to_string(&traj).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x_0,x_1,y_0,y_1,energy");
    assert!(csv.lines().count() > 2);
}

#[test]
fn round_uses_fractional_point() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "two.json", TWO_AGENT);
    let point = write(dir.path(), "x.csv", "0.9,0.2\n");
    let o = binnn(&["solve", "--instance", &inst, "--method", "round", "--frac-point", &point]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "bits"), "10");
    let o = binnn(&["solve", "--instance", &inst, "--method", "round"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let disconnected = write(
        dir.path(),
        "d.json",
        r#"{"n": 3, "p": [3, 1, 1], "c": [2, 1, 1], "gamma": 4, "p_ref": 2.8, "edges": [[0, 1]]}"#,
    );
    let o = binnn(&["solve", "--instance", &disconnected, "--method", "binnn-d"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("connected"));

    let big = dir.path().join("big.json");
    binnn(&["gen", "--n", "30", "--out", big.to_str().unwrap()]);
    let o = binnn(&["solve", "--instance", big.to_str().unwrap(), "--method", "brute"]);
    assert_eq!(o.status.code(), Some(1));

    let missing = dir.path().join("missing.json");
    let o = binnn(&["solve", "--instance", missing.to_str().unwrap(), "--method", "greedy"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_writes_reports_with_brute_on_top() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = binnn(&[
        "bench",
        "--n",
        "8",
        "--trials",
        "6",
        "--with-brute",
        "--t-max",
        "20",
        "--seed",
        "3",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let campaign = fs::read_to_string(dir.path().join("campaign.csv")).unwrap();
    assert_eq!(campaign.lines().count(), 1 + 6 * 7);
    let mut best = std::collections::BTreeMap::<usize, (f64, f64)>::new();
    for line in campaign.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let trial: usize = cols[0].parse().unwrap();
        let cost: f64 = cols[2].parse().unwrap();
        let e = best.entry(trial).or_insert((f64::INFINITY, f64::NAN));
        if cols[1] == "brute" {
            e.1 = cost;
        } else {
            e.0 = e.0.min(cost);
        }
    }
    for (trial, (others, brute)) in best {
        assert!(brute <= others + 1e-9 * others.abs(), "trial {trial}: brute {brute} > {others}");
    }
    let q = fs::read_to_string(dir.path().join("q.csv")).unwrap();
    let scores: Vec<(String, f64)> = q
        .lines()
        .skip(1)
        .map(|l| {
            let (m, v) = l.split_once(',').unwrap();
            (m.to_string(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(scores.len(), 7);
    let total: f64 = scores.iter().map(|s| s.1).sum();
    assert!((total - 3.5).abs() < 1e-9, "{total}");
    let brute = scores.iter().find(|s| s.0 == "brute").unwrap().1;
    assert!(scores.iter().all(|s| s.1 <= brute + 1e-12));
    assert!(stdout(&o).contains("brute"));
}

#[test]
fn sweep_covers_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = binnn(&[
        "sweep",
        "--grid",
        "10,20,40,80",
        "--methods",
        "greedy,binnn-d",
        "--trials",
        "2",
        "--max-steps",
        "50",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    for n in ["10", "20", "40", "80"] {
        for m in ["greedy", "binnn-d"] {
            assert!(rows.iter().any(|r| r.starts_with(&format!("{n},{m},"))), "missing {n} {m}");
        }
    }
}

#[test]
fn bench_rerun_reproduces_costs() {
    let costs = || {
        let dir = tempfile::tempdir().unwrap();
        let o = binnn(&[
            "bench",
            "--n",
            "6",
            "--trials",
            "3",
            "--t-max",
            "10",
            "--seed",
            "11",
            "--jobs",
            "2",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let csv = fs::read_to_string(dir.path().join("campaign.csv")).unwrap();
        csv.lines().map(|l| l.split(',').take(3).collect::<Vec<_>>().join(",")).collect::<Vec<_>>()
    };
    assert_eq!(costs(), costs());
}
