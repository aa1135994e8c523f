use std::path::Path;
use std::process::{Command, Output};

fn spheredec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spheredec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--tx", "3", "--rx", "4", "--mod", "qpsk", "--snr", "0:10:5", "--trials", "30",
        "--decoder", "mmse,sd:bestfs:1,kbest:4", "--seed", "5", "--out",
    ];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    spheredec(&args)
}

const TIME_COLUMN: usize = 9;

fn without_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            if cells.len() > TIME_COLUMN {
                cells.remove(TIME_COLUMN);
            }
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn simulate_writes_a_versioned_table_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let res = simulate(&out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# spheredec-metrics/1 tx=3 rx=4 mod=qpsk\n"));
    assert_eq!(csv.lines().count(), 2 + 3 * 3);
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("sd:bestfs:1"));
    assert!(stdout.contains("wrote"));
}

#[test]
fn reruns_match_except_timing() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(simulate(&a, &[]).status.success());
    assert!(simulate(&b, &[]).status.success());
    let (a, b) = (std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
    assert_eq!(without_timing(&a), without_timing(&b));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    let out = dir.path().join("c.csv");
    std::fs::write(&cfg, "# campaign\ntx = 2\nmod = bpsk\nsnr = 4\ntrials = 500\ndecoder = zf\n").unwrap();
    let res = spheredec(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--trials", "12", "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let row = csv.lines().nth(2).unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[1], "zf");
    assert_eq!(cells[10], "12");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let res = simulate(&out, &["--radius", "-3"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("radius"));

    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "tx = 2\nmod = qam16\nsnr = 0\nthreads = lots\n").unwrap();
    let res = spheredec(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 4") && err.contains("threads"), "{err}");

    let res = spheredec(&["simulate", "--tx", "4", "--mod", "qpsk", "--snr", "1", "--decoder", "sd"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(spheredec(&["simulate", "--bogus"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let res = spheredec(&["simulate", "--config", dir.path().join("missing.conf").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    let res = simulate(&dir.path().join("no/such/dir/out.csv"), &[]);
    assert_eq!(res.status.code(), Some(3));
    let res = spheredec(&["compare", "nope_a.csv", "nope_b.csv"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn compare_reports_deltas_and_rejects_mismatched_grids() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    assert!(simulate(&a, &[]).status.success());
    assert!(simulate(&b, &["--decoder", "zf,ml,kbest:1"]).status.success());
    assert!(simulate(&c, &["--snr", "0,5"]).status.success());
    let res = spheredec(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("mmse") && text.contains("ml") && text.contains("ser"));
    let res = spheredec(&["compare", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("grid mismatch"));
}

#[test]
fn trace_dump_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let (out, trace) = (dir.path().join("t.csv"), dir.path().join("t.trace"));
    let res = simulate(&out, &["--trace", trace.to_str().unwrap(), "--snr", "6"]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("## snr=6 decoder=sd:bestfs:1\n# trace v1 m=3 order=4"));
    assert!(text.contains("## snr=6 decoder=kbest:4\n"));
    assert!(String::from_utf8(res.stdout).unwrap().contains("clean"));
}
