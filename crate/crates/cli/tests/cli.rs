use std::path::Path;
use std::process::{Command, Output};

fn supradiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supradiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const NETWORK: &str = r#"{
  "layers": [
    {"id": 1, "kind": "agent", "nodes": ["a", "b", "c"], "adjacency": {"triplets": [[0, 1, 1.0], [1, 2, 1.0]]}},
    {"id": 2, "kind": "information", "nodes": ["x", "y"], "adjacency": [[0, 1], [1, 0]]}
  ],
  "couplings": [{"from": 1, "to": 2, "matrix": [[0, 0, 1.0], [1, 1, 1.0], [2, 0, 1.0], [2, 1, 1.0]]}],
  "constants": {"intra": {"1": 1.0, "2": 0.5}, "inter": {"1,2": 0.25}}
}"#;

#[test]
fn build_writes_a_laplacian_with_zero_row_sums() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    std::fs::write(&net, NETWORK).unwrap();
    let out = dir.path().join("out");
    let o = supradiff(&["build", "--network", &path(&net), "--out", &path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("supra_laplacian.csv")).unwrap();
    let m = supradiff::io::parse_matrix_csv(&text).unwrap();
    assert_eq!(m.shape(), (5, 5));
    for row in m.row_iter() {
        assert!(row.sum().abs() < 1e-12);
    }
    assert_eq!(m[(0, 0)], 1.0 + 0.25);
}

#[test]
fn exit_codes_separate_io_and_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = supradiff(&["build", "--network", &path(&missing), "--out", &path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"layers": [], "couplings": []}"#).unwrap();
    let o = supradiff(&["build", "--network", &path(&bad), "--out", &path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));

    let o = supradiff(&["kalman", "--network", "x", "--states", "y"]);
    assert_eq!(o.status.code(), Some(2), "missing --fraction is a usage error");
}
