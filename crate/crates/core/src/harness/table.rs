use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use super::MetricRow;
use crate::error::{Error, Result};
use crate::model::ConstellationKind;

/// First token of the comment line that opens every metrics file.
pub const SCHEMA_TAG: &str = "spheredec-metrics/1";

const COLUMNS: [&str; 11] = [
    "snr_db",
    "decoder",
    "ser",
    "ber",
    "erasure_rate",
    "mean_visited",
    "max_visited",
    "mean_pd_calcs",
    "max_pd_calcs",
    "mean_time_s",
    "trials",
];

/// Metric rows of one campaign, with the system they were measured on.
///
/// On disk:
///
/// ```text
/// # spheredec-metrics/1 tx=4 rx=4 mod=qam16
/// snr_db,decoder,ser,ber,erasure_rate,mean_visited,max_visited,mean_pd_calcs,max_pd_calcs,mean_time_s,trials
/// 10,sd:bestfs:1,0.0125,0.0034,0,9.6,31,153.6,496,0.0000211,1000
/// ```
///
/// `mean_time_s` is the only column that differs between two runs of the
/// same configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub n_tx: usize,
    pub n_rx: usize,
    pub modulation: ConstellationKind,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# {SCHEMA_TAG} tx={} rx={} mod={}\n", self.n_tx, self.n_rx, self.modulation);
        let mut w = csv::Writer::from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
            w.write_record(COLUMNS)?;
            for r in &self.rows {
                w.write_record([
                    r.snr_db.to_string(),
                    r.decoder.clone(),
                    r.ser.to_string(),
                    r.ber.to_string(),
                    r.erasure_rate.to_string(),
                    r.mean_visited.to_string(),
                    r.max_visited.to_string(),
                    r.mean_pd_calcs.to_string(),
                    r.max_pd_calcs.to_string(),
                    r.mean_time_s.to_string(),
                    r.trials.to_string(),
                ])?;
            }
            Ok(())
        };
        write(&mut w).expect("writing csv to memory cannot fail");
        let bytes = w.into_inner().expect("flushing csv to memory cannot fail");
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        out
    }

    pub fn from_csv_str(text: &str) -> Result<MetricTable> {
        let bad = |msg: String| Error::InvalidParameter(msg);
        let first = text.lines().next().unwrap_or_default();
        let meta = first
            .strip_prefix('#')
            .map(str::trim)
            .and_then(|m| m.strip_prefix(SCHEMA_TAG))
            .ok_or_else(|| bad(format!("first line must start with `# {SCHEMA_TAG}`")))?;
        let fields: HashMap<&str, &str> = meta.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("schema line lacks `{k}`")));
        let int = |k: &str| get(k)?.parse::<usize>().map_err(|_| bad(format!("schema field `{k}` is not an integer")));
        let (n_tx, n_rx) = (int("tx")?, int("rx")?);
        let modulation: ConstellationKind = get("mod")?.parse()?;

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(format!("csv header: {e}")))?.clone();
        let index = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| bad(format!("missing column `{name}`")))
        };
        let idx: Vec<usize> = COLUMNS.iter().map(|c| index(c)).collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(format!("csv row {}: {e}", n + 1)))?;
            let cell = |i: usize| record.get(idx[i]).unwrap_or_default();
            let float = |i: usize| {
                cell(i)
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: `{}` is not a number", n + 1, COLUMNS[i])))
            };
            let int = |i: usize| {
                cell(i)
                    .parse::<u64>()
                    .map_err(|_| bad(format!("row {}: `{}` is not an integer", n + 1, COLUMNS[i])))
            };
            rows.push(MetricRow {
                snr_db: float(0)?,
                decoder: cell(1).to_string(),
                ser: float(2)?,
                ber: float(3)?,
                erasure_rate: float(4)?,
                mean_visited: float(5)?,
                max_visited: int(6)?,
                mean_pd_calcs: float(7)?,
                max_pd_calcs: int(8)?,
                mean_time_s: float(9)?,
                trials: int(10)?,
            });
        }
        Ok(MetricTable {
            n_tx,
            n_rx,
            modulation,
            rows,
        })
    }
}

pub fn write_csv(path: &Path, table: &MetricTable) -> Result<()> {
    std::fs::write(path, table.to_csv_string()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a metrics file. Unreadable files give [`Error::Io`]; malformed
/// content gives [`Error::InvalidParameter`].
pub fn read_csv(path: &Path) -> Result<MetricTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    MetricTable::from_csv_str(&text).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::InvalidParameter(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Which side of a comparison is better on a metric; lower is better for
/// every compared metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    A,
    B,
    Tie,
}

impl fmt::Display for Dominance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dominance::A => "A",
            Dominance::B => "B",
            Dominance::Tie => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub snr_db: f64,
    pub decoder_a: String,
    pub decoder_b: String,
    pub metric: &'static str,
    pub a: f64,
    pub b: f64,
    /// `b − a`.
    pub delta: f64,
    pub better: Dominance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

pub const COMPARED_METRICS: [&str; 5] = ["ser", "ber", "mean_visited", "mean_pd_calcs", "mean_time_s"];

fn metric(row: &MetricRow, name: &str) -> f64 {
    match name {
        "ser" => row.ser,
        "ber" => row.ber,
        "mean_visited" => row.mean_visited,
        "mean_pd_calcs" => row.mean_pd_calcs,
        _ => row.mean_time_s,
    }
}

impl Comparison {
    /// The side that is at least as good at every SNR point and strictly
    /// better at one, for each decoder pair and metric.
    pub fn overall(&self, decoder_a: &str, metric: &str) -> Dominance {
        let verdicts: Vec<Dominance> = self
            .rows
            .iter()
            .filter(|r| r.decoder_a == decoder_a && r.metric == metric)
            .map(|r| r.better)
            .collect();
        let no = |d: Dominance| !verdicts.contains(&d);
        match (no(Dominance::B), no(Dominance::A)) {
            (true, false) => Dominance::A,
            (false, true) => Dominance::B,
            _ => Dominance::Tie,
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8}  {:<20}  {:<20}  {:<14}  {:>12}  {:>12}  {:>12}  better",
            "snr_db", "A", "B", "metric", "A", "B", "B-A"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8.2}  {:<20}  {:<20}  {:<14}  {:>12.4e}  {:>12.4e}  {:>12.4e}  {}",
                r.snr_db, r.decoder_a, r.decoder_b, r.metric, r.a, r.b, r.delta, r.better
            )?;
        }
        let mut pairs: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !pairs.contains(&r.decoder_a.as_str()) {
                pairs.push(&r.decoder_a);
            }
        }
        for a in pairs {
            for m in COMPARED_METRICS {
                match self.overall(a, m) {
                    Dominance::Tie => {}
                    side => writeln!(f, "{side} dominates on {m} ({a} row)")?,
                }
            }
        }
        Ok(())
    }
}

fn by_snr(t: &MetricTable) -> Vec<(f64, Vec<&MetricRow>)> {
    let mut grid: Vec<(f64, Vec<&MetricRow>)> = Vec::new();
    for r in &t.rows {
        match grid.iter_mut().find(|(s, _)| *s == r.snr_db) {
            Some((_, rows)) => rows.push(r),
            None => grid.push((r.snr_db, vec![r])),
        }
    }
    grid
}

/// Contrasts two campaigns over the same grid.
///
/// The tables must share dimensions, modulation and SNR points, and hold the
/// same number of decoders at each point; decoders are paired by position.
pub fn compare(a: &MetricTable, b: &MetricTable) -> Result<Comparison> {
    let mismatch = |msg: String| Err(Error::InvalidParameter(format!("grid mismatch: {msg}")));
    if (a.n_tx, a.n_rx, a.modulation) != (b.n_tx, b.n_rx, b.modulation) {
        return mismatch(format!(
            "{}x{} {} against {}x{} {}",
            a.n_tx, a.n_rx, a.modulation, b.n_tx, b.n_rx, b.modulation
        ));
    }
    let (ga, gb) = (by_snr(a), by_snr(b));
    let snr_a: Vec<f64> = ga.iter().map(|g| g.0).collect();
    let snr_b: Vec<f64> = gb.iter().map(|g| g.0).collect();
    if snr_a != snr_b {
        return mismatch(format!("SNR points {snr_a:?} against {snr_b:?}"));
    }
    let mut rows = Vec::new();
    for ((snr, ra), (_, rb)) in ga.iter().zip(&gb) {
        if ra.len() != rb.len() {
            return mismatch(format!("{} decoders against {} at {snr} dB", ra.len(), rb.len()));
        }
        for (x, y) in ra.iter().zip(rb) {
            for m in COMPARED_METRICS {
                let (va, vb) = (metric(x, m), metric(y, m));
                let better = if va < vb {
                    Dominance::A
                } else if vb < va {
                    Dominance::B
                } else {
                    Dominance::Tie
                };
                rows.push(ComparisonRow {
                    snr_db: *snr,
                    decoder_a: x.decoder.clone(),
                    decoder_b: y.decoder.clone(),
                    metric: m,
                    a: va,
                    b: vb,
                    delta: vb - va,
                    better,
                });
            }
        }
    }
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(ser: [f64; 2]) -> MetricTable {
        let row = |snr_db: f64, ser: f64| MetricRow {
            snr_db,
            decoder: "sd:bestfs:1".into(),
            ser,
            ber: ser / 2.0,
            erasure_rate: 0.0,
            mean_visited: 12.5,
            max_visited: 40,
            mean_pd_calcs: 50.0,
            max_pd_calcs: 160,
            mean_time_s: 1.5e-5,
            trials: 100,
        };
        MetricTable {
            n_tx: 4,
            n_rx: 4,
            modulation: ConstellationKind::Qpsk,
            rows: vec![row(0.0, ser[0]), row(10.0, ser[1])],
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = table([0.25, 0.1 + 0.2]);
        let text = t.to_csv_string();
        assert!(text.starts_with("# spheredec-metrics/1 tx=4 rx=4 mod=qpsk\nsnr_db,decoder,ser,"));
        assert_eq!(MetricTable::from_csv_str(&text).unwrap(), t);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let good = table([0.1, 0.01]).to_csv_string();
        assert!(MetricTable::from_csv_str("snr_db,decoder\n").is_err());
        assert!(MetricTable::from_csv_str(&good.replace("mod=qpsk", "mod=qam8")).is_err());
        assert!(MetricTable::from_csv_str(&good.replace("tx=4 ", "")).is_err());
        assert!(MetricTable::from_csv_str(&good.replace(",40,", ",forty,")).is_err());
        assert!(MetricTable::from_csv_str(&good.replace("erasure_rate", "erasures")).is_err());
    }

    #[test]
    fn comparison_deltas_and_dominance() {
        let a = table([0.1, 0.01]);
        let b = table([0.05, 0.01]);
        let cmp = compare(&a, &b).unwrap();
        assert_eq!(cmp.rows.len(), 2 * COMPARED_METRICS.len());
        let ser0 = &cmp.rows[0];
        assert_eq!((ser0.metric, ser0.better), ("ser", Dominance::B));
        assert!((ser0.delta + 0.05).abs() < 1e-15);
        assert_eq!(cmp.overall("sd:bestfs:1", "ser"), Dominance::B);
        assert_eq!(cmp.overall("sd:bestfs:1", "mean_visited"), Dominance::Tie);
        assert!(cmp.to_string().contains("B dominates on ser"));
    }

    #[test]
    fn mismatched_grids_are_errors() {
        let a = table([0.1, 0.01]);
        let mut b = a.clone();
        b.rows[1].snr_db = 12.0;
        assert!(compare(&a, &b).unwrap_err().to_string().contains("SNR points"));
        let mut c = a.clone();
        c.modulation = ConstellationKind::Qam16;
        assert!(compare(&a, &c).is_err());
        let mut d = a.clone();
        d.rows.push(d.rows[0].clone());
        assert!(compare(&a, &d).is_err());
    }
}
