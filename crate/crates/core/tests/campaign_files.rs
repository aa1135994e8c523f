use spheredec::harness::{compare, read_csv, run_campaign, write_csv, Dominance, Settings};
use spheredec::Error;

fn settings(decoders: &str) -> Settings {
    Settings::parse(&format!("tx = 3\nrx = 3\nmod = qpsk\nsnr = 0:12:6\ntrials = 60\nseed = 4\ndecoder = {decoders}\n"))
        .unwrap()
}

#[test]
fn tables_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let result = run_campaign(&settings("zf,sd:dfs:2").to_config().unwrap()).unwrap();
    write_csv(&path, &result.table()).unwrap();
    assert_eq!(read_csv(&path).unwrap(), result.table());
}

#[test]
fn ml_dominates_zero_forcing_on_errors() {
    let zf = run_campaign(&settings("zf").to_config().unwrap()).unwrap().table();
    let ml = run_campaign(&settings("ml").to_config().unwrap()).unwrap().table();
    let cmp = compare(&zf, &ml).unwrap();
    assert_eq!(cmp.overall("zf", "ser"), Dominance::B);
    assert_eq!(cmp.overall("zf", "mean_visited"), Dominance::Tie);
}

#[test]
fn unreadable_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_csv(&dir.path().join("absent.csv")), Err(Error::Io(_))));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "hello\n").unwrap();
    assert!(matches!(read_csv(&bad), Err(Error::InvalidParameter(_))));
    assert!(matches!(
        write_csv(&dir.path().join("missing/dir/x.csv"), &run_campaign(&settings("mrc").to_config().unwrap()).unwrap().table()),
        Err(Error::Io(_))
    ));
}

fn run(text: &str) -> spheredec::harness::MetricTable {
    run_campaign(&Settings::parse(text).unwrap().to_config().unwrap()).unwrap().table()
}

#[test]
fn ml_on_a_small_system_at_high_snr_rarely_errs() {
    let t = run("tx=2\nmod=bpsk\nsnr=30\ntrials=10000\ndecoder=ml");
    assert!(t.rows[0].ser < 1e-2, "{}", t.rows[0].ser);
}

#[test]
fn best_first_and_ml_have_identical_error_columns() {
    let t = run("tx=4\nmod=qam16\nsnr=0:20:10\ntrials=200\nradius=inf\ndecoder=sd:bestfs:1,ml,psd:3,plsd:2");
    for point in t.rows.chunks(4) {
        for r in &point[1..] {
            assert_eq!((r.ser, r.ber), (point[0].ser, point[0].ber), "{} at {}", r.decoder, r.snr_db);
        }
    }
}

#[test]
fn kbest_visited_column_is_constant_across_snr() {
    let t = run("tx=16\nmod=qam64\nsnr=10:30:5\ntrials=20\ndecoder=kbest:10");
    assert!(t.rows.iter().all(|r| r.mean_visited == t.rows[0].mean_visited && r.max_visited == t.rows[0].max_visited));
}

#[test]
fn identical_files_give_zero_deltas() {
    let t = run("tx=3\nmod=qpsk\nsnr=0:10:5\ntrials=30\ndecoder=mmse,sd");
    let cmp = compare(&t, &t).unwrap();
    assert!(cmp.rows.iter().all(|r| r.delta == 0.0 && r.better == Dominance::Tie));
}

#[test]
fn mmse_dominates_zero_forcing() {
    let zf = run("tx=8\nmod=qpsk\nsnr=12:20:4\ntrials=2000\ndecoder=zf");
    let mmse = run("tx=8\nmod=qpsk\nsnr=12:20:4\ntrials=2000\ndecoder=mmse");
    assert_eq!(compare(&zf, &mmse).unwrap().overall("zf", "ser"), Dominance::B);
}

#[test]
fn best_first_dominates_breadth_first_on_visited_nodes() {
    let bfs = run("tx=18\nmod=bpsk\nsnr=0\ntrials=100\ndecoder=sd:bfs:1");
    let best = run("tx=18\nmod=bpsk\nsnr=0\ntrials=100\ndecoder=sd:bestfs:1");
    let cmp = compare(&bfs, &best).unwrap();
    assert_eq!(cmp.overall("sd:bfs:1", "mean_visited"), Dominance::B);
    assert!(bfs.rows[0].mean_visited > 10.0 * best.rows[0].mean_visited);
}
