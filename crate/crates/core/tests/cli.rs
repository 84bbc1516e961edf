//! End-to-end runs of the `sensnet` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use sensnet::experiments::{from_json, to_json, CoverageReport, Envelope, StretchReport};
use sensnet::lattice::ThresholdReport;
use sensnet::RouteTrace;

fn sensnet(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_sensnet"))
        .args(args)
        .arg(format!("out={}", out.display()))
        .output()
        .expect("binary runs");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

const RUNS: &[(&str, &[&str], &[&str])] = &[
    ("percolation", &["n=32", "p=0.6", "trials=20", "seed=4"], &["lattice.pbm", "percolation.json"]),
    ("generate", &["model=UDG", "lambda=3", "window=5", "seed=4"], &["points.csv", "base_edges.txt", "field.json"]),
    (
        "build-subnet",
        &["model=NN", "lambda=1", "k=188", "window=3", "seed=4"],
        &["subnet_nodes.csv", "subnet_edges.csv", "lattice.pbm", "subnet.json"],
    ),
    ("find-threshold", &["model=UDG", "trials=200", "tol=1", "bracket=2..14", "seed=4"], &["threshold.json"]),
    (
        "stretch",
        &["model=UDG", "lambda=14", "window=16", "pairs=20", "bins=2,4,8", "min_component=10", "seed=4"],
        &["stretch.csv", "stretch.json"],
    ),
    (
        "coverage",
        &["model=UDG", "lambdas=3,9", "window=10", "trials=20", "ell=1,2,3", "seed=4"],
        &["coverage.csv", "coverage.json"],
    ),
    ("route", &["model=UDG", "lambda=12", "window=8", "seed=4"], &["route.json"]),
    ("render", &["model=UDG", "lambda=9", "window=5", "seed=4"], &["subnet.svg", "regions.csv"]),
];

fn read_all(dir: &Path, files: &[&str]) -> Vec<Vec<u8>> {
    files.iter().map(|f| std::fs::read(dir.join(f)).expect(f)).collect()
}

#[test]
fn every_subcommand_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, args, files) in RUNS {
        let out: PathBuf = tmp.path().join(cmd);
        let mut full = vec![*cmd];
        full.extend_from_slice(args);
        let (code, err) = sensnet(&full, &out);
        assert_eq!(code, 0, "{cmd}: {err}");
        let first = read_all(&out, files);
        let (code, _) = sensnet(&full, &out);
        assert_eq!(code, 0);
        assert_eq!(first, read_all(&out, files), "{cmd} output changed between runs");
    }
}

fn json_round_trip<T>(path: &Path)
where
    T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug,
{
    let text = std::fs::read_to_string(path).unwrap();
    let env: Envelope<T> = from_json(&text).unwrap();
    assert_eq!(env.schema_version, 1);
    let again: Envelope<T> = from_json(&to_json(&env).unwrap()).unwrap();
    assert_eq!(env, again);
}

#[test]
fn reports_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path();
    assert_eq!(sensnet(&["find-threshold", "model=UDG", "trials=200", "tol=1", "bracket=2..14"], o).0, 0);
    json_round_trip::<ThresholdReport>(&o.join("threshold.json"));
    assert_eq!(sensnet(&["route", "model=UDG", "lambda=12", "window=8"], o).0, 0);
    json_round_trip::<RouteTrace>(&o.join("route.json"));
    let stretch = ["stretch", "model=UDG", "lambda=14", "window=16", "pairs=20", "bins=2,4,8", "min_component=10"];
    assert_eq!(sensnet(&stretch, o).0, 0);
    json_round_trip::<StretchReport>(&o.join("stretch.json"));
    assert_eq!(sensnet(&["coverage", "model=UDG", "lambdas=9", "window=10", "trials=20", "ell=1,2"], o).0, 0);
    json_round_trip::<CoverageReport>(&o.join("coverage.json"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = sensnet(&["generate", "lambda=2"], tmp.path());
    assert_eq!(code, 1);
    assert!(err.contains("model"), "{err}");

    let (code, err) = sensnet(&["generate", "model=UDG", "colour=red"], tmp.path());
    assert_eq!(code, 1);
    assert!(err.contains("colour"), "{err}");

    let (code, err) = sensnet(&["generate", "model=UDG", "lambda=-1"], tmp.path());
    assert_eq!(code, 1);
    assert!(err.contains("lambda"), "{err}");

    let (code, _) = sensnet(&["stretch", "model=UDG", "lambda=2", "window=8"], tmp.path());
    assert_eq!(code, 2);
}

#[test]
fn svg_draws_each_subnet_edge_once() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path();
    let args = ["model=UDG", "lambda=10", "window=5", "seed=9"];
    assert_eq!(sensnet(&[&["build-subnet"][..], &args].concat(), o).0, 0);
    assert_eq!(sensnet(&[&["render"][..], &args].concat(), o).0, 0);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("subnet.json")).unwrap()).unwrap();
    let edges = summary["subnet_edges"].as_u64().unwrap() as usize;
    let svg = std::fs::read_to_string(o.join("subnet.svg")).unwrap();
    assert!(edges > 0);
    assert_eq!(svg.matches("<polyline").count(), edges);
    let csv_edges = std::fs::read_to_string(o.join("subnet_edges.csv")).unwrap().lines().count() - 1;
    assert_eq!(csv_edges, edges);
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# small UDG field\nmodel = UDG\nlambda = 3 # sparse\nwindow = 4\nseed = 2\n").unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let cfg_s = cfg.to_str().unwrap();
    assert_eq!(sensnet(&["generate", "--config", cfg_s], &a).0, 0);
    assert_eq!(sensnet(&["generate", "--config", cfg_s, "--lambda", "6"], &b).0, 0);
    let field = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join("field.json")).unwrap()).unwrap()
    };
    let (fa, fb) = (field(&a), field(&b));
    assert_eq!(fa["density"], 3.0);
    assert_eq!(fb["density"], 6.0);
    assert_eq!(fa["provenance"]["config"]["window"], 4);
    assert!(fb["points"].as_u64() > fa["points"].as_u64());
}
