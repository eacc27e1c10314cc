use std::path::Path;
use std::process::{Command, Output};

use bec_steering::bounds::BoundTable;

fn steerdepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steerdepth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_calibration(path: &Path) {
    let rows = [
        (21, 0.1952),
        (42, 0.1581),
        (87, 0.1262),
        (223, 0.0938),
        (456, 0.07459),
        (4772, 0.034776),
    ];
    let table = BoundTable::from_c_tilde(&rows, "calibration").unwrap();
    std::fs::write(path, table.to_csv_string(&[]).unwrap()).unwrap();
}

#[test]
fn depth_json_from_table_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cs.csv");
    write_calibration(&path);
    let out = steerdepth(&[
        "depth",
        "--ehz",
        "0.1572",
        "--r",
        "1.0",
        "--kind",
        "steering",
        "--bounds-table",
        path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["n_lower_bound"], 42);
    assert_eq!(v["provenance"]["tool"], "steerdepth");

    let out = steerdepth(&[
        "depth",
        "--ehz",
        "0.6",
        "--r",
        "1",
        "--bounds-table",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        text.lines().nth(2).unwrap().starts_with("steering,false,"),
        "{text}"
    );
}

#[test]
fn evolve_at_zero_matches_beam_splitter() {
    let out = steerdepth(&["evolve", "--n", "2", "--k", "-1", "--chi", "1", "--t", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "# steerdepth 0.1.0 evolve --n 2 --k -1 --chi 1 --t 0"
    );
    assert_eq!(lines.next().unwrap(), "r,m,re,im,prob");
    let probs: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 3);
    for (p, want) in probs.iter().zip([0.25, 0.5, 0.25]) {
        assert!((p - want).abs() < 1e-15);
    }
}

#[test]
fn scan_output_is_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, workers) in [(&a, "1"), (&b, "3")] {
        let out = steerdepth(&[
            "scan",
            "--n",
            "80",
            "--points",
            "300",
            "--workers",
            workers,
            "--output",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
    }
    let ta = std::fs::read_to_string(&a).unwrap();
    let tb = std::fs::read_to_string(&b).unwrap();
    // identical apart from the provenance line, which records the flags
    assert_eq!(
        ta.lines().skip(1).collect::<Vec<_>>(),
        tb.lines().skip(1).collect::<Vec<_>>()
    );
    assert_eq!(
        ta.lines().nth(1).unwrap(),
        "t,theta,var_sx,var_sy,var_sz,var_stheta,mean_sx,e_hz,e_hz_t,e_hz_theta,xi2,xi2_bar,r,r_parallel"
    );
    assert_eq!(ta.lines().count(), 302);

    // same flags, same bytes
    let once = steerdepth(&["scan", "--n", "80", "--points", "300", "--workers", "1"]);
    let twice = steerdepth(&["scan", "--n", "80", "--points", "300", "--workers", "1"]);
    assert_eq!(once.stdout, twice.stdout);
    assert_eq!(
        stdout(&once).lines().skip(1).collect::<Vec<_>>(),
        ta.lines().skip(1).collect::<Vec<_>>()
    );
}

#[test]
fn exit_codes_and_no_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let p = path.to_str().unwrap();
    assert_eq!(
        steerdepth(&["evolve", "--n", "0", "--output", p])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        steerdepth(&["scan", "--n", "10", "--points", "1", "--output", p])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(steerdepth(&["no-such-command"]).status.code(), Some(2));
    // optimum pinned at the end of a tiny horizon: non-convergence
    let out = steerdepth(&[
        "optimize", "--n", "100", "--t-max", "1e-4", "--points", "200", "--output", p,
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    assert_eq!(steerdepth(&["--help"]).status.code(), Some(0));
}

#[test]
fn bounds_output_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let out = steerdepth(&[
        "bounds",
        "--max-two-s",
        "12",
        "--zeta",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let table = BoundTable::read(&path).unwrap();
    assert_eq!(table.entries.len(), 12);
    assert!((table.entries[1].c_s - 7.0 / 16.0).abs() < 1e-10);
    assert!(table.has_zeta());

    let cache = dir.path().join("cache");
    std::fs::create_dir(&cache).unwrap();
    let c = cache.to_str().unwrap();
    let first = steerdepth(&["bounds", "--max-two-s", "12", "--cache-dir", c]);
    let second = steerdepth(&["bounds", "--max-two-s", "12", "--cache-dir", c]);
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn optimize_and_table1() {
    let out = steerdepth(&["--format", "json", "optimize", "--n", "100"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let ratio = v["result"]["value"].as_f64().unwrap() / v["result"]["r"].as_f64().unwrap();
    assert!((ratio - 0.1572).abs() / 0.1572 < 1e-3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cs.csv");
    write_calibration(&path);
    let out = steerdepth(&[
        "table1",
        "--n",
        "50,100",
        "--k",
        "-1",
        "--bounds-table",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "50");
    assert_eq!(rows[0][6], "21");
    assert_eq!(rows[1][6], "42");
}

#[test]
fn crosscheck_command() {
    let out = steerdepth(&["crosscheck", "--n", "100", "--k", "0", "--points", "20"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).lines().nth(2).unwrap().contains(",true,"));
}
