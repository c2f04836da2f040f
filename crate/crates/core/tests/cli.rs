use std::fs;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_minmax-fem");

const HYDROGEN: &str = "Z1 = 1\nZ2 = 0\nR = 2\nnu = 2\nD_max = 20\np = 4\nm_list = 2,3,4\n";

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

#[test]
fn ladder_report_is_written_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("h.cfg");
    fs::write(&cfg, HYDROGEN).unwrap();
    let outs: Vec<String> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("r{i}.csv"));
            let st = run(&["ladder", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
            fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    let mut lines = outs[0].lines();
    assert_eq!(lines.next(), Some("m,Ne,N,E_rel,E_nrel,shift,outer_iters"));
    let rows: Vec<Vec<&str>> = lines.clone().take(3).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["2", "3", "4"]);
    for r in &rows {
        let (rel, nrel, shift): (f64, f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap());
        assert!(rel < nrel && shift < 0.0);
        assert!((rel - nrel - shift).abs() < 1e-15);
    }
    assert!(outs[0].contains("# E_extrap,"));
}

#[test]
fn json_solve_and_rejected_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("h.cfg");
    fs::write(&cfg, HYDROGEN.replace("m_list = 2,3,4", "m = 2")).unwrap();
    let st = run(&["solve", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert!(st.status.success());
    let v: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert!(v["energy"].as_f64().unwrap() > -0.5000067);

    fs::write(&cfg, HYDROGEN.replace("nu = 2", "nu = 7")).unwrap();
    let st = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("nu must be even in 2..10"));
}
