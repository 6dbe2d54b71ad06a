use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedmesh::net_model::load_network;
use fedmesh::ExperimentConfig;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn fedmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmesh"))
        .args(args)
        .env_remove("FEDMESH_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn inspect_triangle() {
    let out = tempfile::tempdir().unwrap();
    let tri = fixture("triangle.json");
    let o = fedmesh(&[
        "inspect",
        "--network",
        s(&tri),
        "--t",
        "5",
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for needle in ["n=1", "n=2", "n=5", "s_max=10", "isolated {2}"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    let schedule = fs::read_to_string(out.path().join("schedule.csv")).unwrap();
    // header plus one row per (state, edge)
    assert_eq!(schedule.lines().count(), 1 + 10 * 3);
}

#[test]
fn inspect_without_weak_edges() {
    let out = tempfile::tempdir().unwrap();
    let tri = fixture("triangle.json");
    let o = fedmesh(&[
        "inspect",
        "--network",
        s(&tri),
        "--t",
        "1",
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("s_max=1, no isolated nodes"));
}

#[test]
fn missing_network_is_a_validation_error() {
    let o = fedmesh(&["inspect", "--network", "/nonexistent/net.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
    let o = fedmesh(&["run", "--rounds", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_with_t1_matches_ring() {
    let out = tempfile::tempdir().unwrap();
    let net = fixture("hetero-11.json");
    let o = fedmesh(&[
        "run",
        "--network",
        s(&net),
        "--t",
        "1",
        "--rounds",
        "20",
        "--seed",
        "3",
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("reduction vs ring: 1.00"), "{text}");
    assert!(text.contains("mean cycle:") && text.contains("final loss:"));

    // one directory named by the config digest, holding a reloadable echo
    let dirs: Vec<PathBuf> = fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1);
    let cfg = ExperimentConfig::load(dirs[0].join("config.json")).unwrap();
    assert_eq!(dirs[0].file_name().unwrap().to_str().unwrap(), cfg.digest());
    assert_eq!((cfg.t, cfg.rounds, cfg.seed), (1, 20, 3));
    let result = fs::read_to_string(dirs[0].join("result.txt")).unwrap();
    assert!(result.starts_with("[config]"));
}

#[test]
fn runs_are_deterministic_and_seed_env_is_a_fallback() {
    let net = fixture("triangle.json");
    let run = |dir: &Path, env_seed: Option<&str>, flag_seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedmesh"));
        cmd.args([
            "run",
            "--network",
            s(&net),
            "--rounds",
            "15",
            "--out",
            s(dir),
        ]);
        cmd.env_remove("FEDMESH_SEED");
        if let Some(v) = env_seed {
            cmd.env("FEDMESH_SEED", v);
        }
        if let Some(v) = flag_seed {
            cmd.args(["--seed", v]);
        }
        assert!(cmd.status().unwrap().success());
        let entry = fs::read_dir(dir).unwrap().next().unwrap().unwrap().path();
        fs::read(entry.join("result.txt")).unwrap()
    };
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let from_env = run(a.path(), Some("9"), None);
    let from_flag = run(b.path(), None, Some("9"));
    let flag_wins = run(c.path(), Some("1"), Some("9"));
    assert_eq!(from_env, from_flag);
    assert_eq!(from_flag, flag_wins);
}

#[test]
fn diverging_run_exits_with_round_context() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let net = fixture("triangle.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"network": {:?}, "topology": "ring", "rounds": 50, "seed": 1,
               "task": {{"dim": 4, "samples_per_silo": 20, "skew": 0.5, "loss": "least-squares",
                         "batch": 5, "lr": {{"kind": "constant", "rate": 1e6}}, "noise": 0.1}}}}"#,
            net
        ),
    )
    .unwrap();
    let o = fedmesh(&["run", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("round "), "{}", stderr(&o));
}

#[test]
fn compare_reports_a_speedup() {
    let out = tempfile::tempdir().unwrap();
    let net = fixture("hetero-11.json");
    let o = fedmesh(&[
        "compare",
        "--network",
        s(&net),
        "--rounds",
        "60",
        "--topologies",
        "ring,multigraph",
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv_path = fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    let csv = fs::read_to_string(csv_path).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("ring,"));
    let factor: f64 = rows[1].rsplit(',').next().unwrap().parse().unwrap();
    assert!(factor > 1.0, "{csv}");
}

#[test]
fn compare_all_four() {
    let out = tempfile::tempdir().unwrap();
    let net = fixture("hetero-11.json");
    let o = fedmesh(&[
        "compare",
        "--network",
        s(&net),
        "--rounds",
        "10",
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for name in ["star", "mst", "ring", "multigraph(t=5)"] {
        assert!(text.contains(name));
    }
    assert!(!text.contains("NaN") && !text.contains("inf"));
}

#[test]
fn sweep_writes_one_row_per_t() {
    let out = tempfile::tempdir().unwrap();
    let net = fixture("hetero-11.json");
    let o = fedmesh(&[
        "sweep",
        "--network",
        s(&net),
        "--rounds",
        "30",
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv_path = fs::read_dir(out.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let csv = fs::read_to_string(csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn gen_network_files_reload() {
    let dir = tempfile::tempdir().unwrap();
    let exodus = dir.path().join("exodus.json");
    let o = fedmesh(&[
        "gen-network",
        "--preset",
        "exodus-like",
        "--seed",
        "4",
        "--out",
        s(&exodus),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spec = load_network(&exodus).unwrap();
    assert_eq!((spec.silo_count(), spec.link_count()), (79, 147));

    let tri = dir.path().join("tri.json");
    let o = fedmesh(&["gen-network", "--nodes", "3", "--out", s(&tri)]);
    assert!(o.status.success());
    assert_eq!(load_network(&tri).unwrap().link_count(), 3);

    let o = fedmesh(&[
        "gen-network",
        "--nodes",
        "10",
        "--density",
        "0.05",
        "--out",
        s(&tri),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot place"));
}

#[test]
fn sparse_network_cannot_host_a_ring() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("geant.json");
    assert!(
        fedmesh(&["gen-network", "--preset", "geant-like", "--out", s(&net)])
            .status
            .success()
    );
    let o = fedmesh(&[
        "run",
        "--network",
        s(&net),
        "--topology",
        "ring",
        "--rounds",
        "2",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = fedmesh(&[
        "run",
        "--network",
        s(&net),
        "--topology",
        "mst",
        "--rounds",
        "2",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("reduction vs ring: n/a"));
}
