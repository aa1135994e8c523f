//! Monte Carlo campaigns.
//!
//! A campaign sweeps a grid of SNR points. At each point it draws `trials`
//! random instances from a seeded stream, where trial `t` at SNR index `i`
//! always uses [`trial_rng`]`(seed, i, t)`, and hands every instance to every
//! configured decoder. Error and complexity statistics are aggregated per
//! `(snr, decoder)` into [`MetricRow`]s, which [`write_csv`] stores as a
//! versioned table and [`compare`] contrasts between two runs.
//!
//! ```
//! use spheredec::harness::{run_campaign, Settings};
//!
//! let settings = Settings::parse("tx=2\nmod=qpsk\nsnr=10\ntrials=20\ndecoder=zf,sd").unwrap();
//! let result = run_campaign(&settings.to_config().unwrap()).unwrap();
//! assert_eq!(result.rows.len(), 2);
//! assert_eq!(result.rows[1].decoder, "sd:bestfs:1");
//! ```

mod settings;
mod spec;
mod table;

use std::fmt::Write as _;
use std::time::Instant;

pub use settings::{Settings, DEFAULT_TRIALS};
pub use spec::{
    parse_decoders, parse_radius, parse_snr_grid, radius_label, DecoderSpec, ErasurePolicy, DEFAULT_K,
    DEFAULT_PLSD_BATCH, DEFAULT_SLACK,
};
pub use table::{
    compare, read_csv, write_csv, Comparison, ComparisonRow, Dominance, MetricTable, SCHEMA_TAG,
};

use crate::audit::{verify_trace, AuditTrace, AuditVerdict};
use crate::error::{Error, Result};
use crate::kbest::{kbest_decode, kbest_decode_traced, sd_kbest_decode, sd_kbest_decode_traced, KbestConfig};
use crate::linalg::{preprocess, PreprocessedProblem, RadiusPolicy};
use crate::linear::{linear_decode, LinearKind};
use crate::model::{generate_instance, make_constellation, trial_rng, ConstellationKind, MimoInstance};
use crate::parallel::{pl_sd_decode, pl_sd_decode_traced, psd_decode, psd_decode_traced, PsdConfig};
use crate::sd::{ml_bruteforce, sd_decode_traced, sd_decode_with, DetectionReport, Evaluation, SdConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub modulation: ConstellationKind,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub decoders: Vec<DecoderSpec>,
    pub radius: RadiusPolicy,
    /// Thread cap: the default thread count of parallel decoders, and the
    /// number of trials run at once when every decoder is single-threaded.
    pub threads: usize,
    pub seed: u64,
    pub erasure: ErasurePolicy,
    /// Record and audit the search of the first trial at each SNR point.
    pub collect_traces: bool,
}

/// Aggregated statistics of one decoder at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub snr_db: f64,
    pub decoder: String,
    pub ser: f64,
    pub ber: f64,
    pub erasure_rate: f64,
    pub mean_visited: f64,
    pub max_visited: u64,
    pub mean_pd_calcs: f64,
    pub max_pd_calcs: u64,
    /// Mean wall-clock decode time, preprocessing included. Not reproducible
    /// between runs, unlike every other column.
    pub mean_time_s: f64,
    pub trials: u64,
}

/// A recorded search together with the outcome of auditing it.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub snr_db: f64,
    pub decoder: String,
    pub trace: AuditTrace,
    pub verdict: AuditVerdict,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub rows: Vec<MetricRow>,
    pub traces: Vec<TraceRecord>,
    pub elapsed_s: f64,
}

impl CampaignResult {
    pub fn table(&self) -> MetricTable {
        MetricTable {
            n_tx: self.config.n_tx,
            n_rx: self.config.n_rx,
            modulation: self.config.modulation,
            rows: self.rows.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    symbol_errors: u64,
    bit_errors: u64,
    erased: bool,
    visited: u64,
    pd_calcs: u64,
    time_s: f64,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    trials: u64,
    symbol_errors: u64,
    bit_errors: u64,
    erasures: u64,
    visited: u128,
    max_visited: u64,
    pd_calcs: u128,
    max_pd_calcs: u64,
    time_s: f64,
}

impl Tally {
    fn add(&mut self, o: &Outcome) {
        self.trials += 1;
        self.symbol_errors += o.symbol_errors;
        self.bit_errors += o.bit_errors;
        self.erasures += o.erased as u64;
        self.visited += o.visited as u128;
        self.max_visited = self.max_visited.max(o.visited);
        self.pd_calcs += o.pd_calcs as u128;
        self.max_pd_calcs = self.max_pd_calcs.max(o.pd_calcs);
        self.time_s += o.time_s;
    }

    fn merge(&mut self, other: &Tally) {
        self.trials += other.trials;
        self.symbol_errors += other.symbol_errors;
        self.bit_errors += other.bit_errors;
        self.erasures += other.erasures;
        self.visited += other.visited;
        self.max_visited = self.max_visited.max(other.max_visited);
        self.pd_calcs += other.pd_calcs;
        self.max_pd_calcs = self.max_pd_calcs.max(other.max_pd_calcs);
        self.time_s += other.time_s;
    }

    fn row(&self, snr_db: f64, decoder: String, m: usize, bits: usize) -> MetricRow {
        let n = self.trials.max(1) as f64;
        MetricRow {
            snr_db,
            decoder,
            ser: self.symbol_errors as f64 / (n * m as f64),
            ber: self.bit_errors as f64 / (n * (m * bits) as f64),
            erasure_rate: self.erasures as f64 / n,
            mean_visited: self.visited as f64 / n,
            max_visited: self.max_visited,
            mean_pd_calcs: self.pd_calcs as f64 / n,
            max_pd_calcs: self.max_pd_calcs,
            mean_time_s: self.time_s / n,
            trials: self.trials,
        }
    }
}

/// Runs one decoder on one instance. `problem` is the shared triangularised
/// form, present whenever a decoder needs it.
pub fn run_decoder(
    spec: &DecoderSpec,
    instance: &MimoInstance,
    problem: Option<&PreprocessedProblem>,
    traced: bool,
) -> Result<(DetectionReport, Option<AuditTrace>)> {
    let problem = || problem.ok_or_else(|| Error::InvalidParameter(format!("{spec} needs a preprocessed problem")));
    let spec = spec.resolve(1);
    Ok(match spec {
        DecoderSpec::Linear(kind) => match linear_decode(instance, kind) {
            Ok(report) => (report, None),
            Err(Error::Singular { .. }) => (erasure(), None),
            Err(e) => return Err(e),
        },
        DecoderSpec::Ml => (ml_bruteforce(problem()?)?, None),
        DecoderSpec::Sd { strategy, group } => {
            let config = SdConfig {
                strategy,
                group,
                evaluation: Evaluation::Incremental,
            };
            if traced {
                let (r, t) = sd_decode_traced(problem()?, &config);
                (r, Some(t))
            } else {
                (sd_decode_with(problem()?, &config), None)
            }
        }
        DecoderSpec::PlSd { threads, batch } => {
            let threads = threads.unwrap_or(1);
            if traced {
                let (r, t) = pl_sd_decode_traced(problem()?, threads, batch);
                (r, Some(t))
            } else {
                (pl_sd_decode(problem()?, threads, batch), None)
            }
        }
        DecoderSpec::Psd { workers, balancing, group } => {
            let config = PsdConfig {
                n_workers: workers.unwrap_or(1),
                balancing,
                group,
            };
            if traced {
                let (r, t) = psd_decode_traced(problem()?, &config);
                (r, Some(t))
            } else {
                (psd_decode(problem()?, &config), None)
            }
        }
        DecoderSpec::Kbest { k } => {
            if traced {
                let (r, t) = kbest_decode_traced(problem()?, k);
                (r, Some(t))
            } else {
                (kbest_decode(problem()?, k), None)
            }
        }
        DecoderSpec::SdKbest { k, workers, eps } => {
            let config = KbestConfig {
                closeness_eps: eps,
                ..KbestConfig::new(k, workers.unwrap_or(1))
            };
            if traced {
                let (r, t) = sd_kbest_decode_traced(problem()?, &config)?;
                (r, Some(t))
            } else {
                (sd_kbest_decode(problem()?, &config)?, None)
            }
        }
    })
}

fn erasure() -> DetectionReport {
    DetectionReport {
        decoded: None,
        dist: f64::INFINITY,
        visited_nodes: 0,
        pd_calcs: 0,
        elapsed_s: 0.0,
        final_radius_sq: f64::INFINITY,
        threads: 1,
        max_thread_visited: 0,
        max_thread_pd_calcs: 0,
    }
}

struct Trial<'a> {
    config: &'a CampaignConfig,
    decoders: &'a [DecoderSpec],
    labels: &'a [String],
}

impl Trial<'_> {
    fn run(
        &self,
        snr_index: usize,
        trial_index: usize,
        traces: Option<&mut Vec<TraceRecord>>,
    ) -> Result<Vec<Outcome>> {
        let c = self.config;
        let snr_db = c.snr_db[snr_index];
        let constellation = make_constellation(c.modulation);
        let mut rng = trial_rng(c.seed, snr_index as u64, trial_index as u64);
        let instance = generate_instance(c.n_tx, c.n_rx, &constellation, snr_db, &mut rng)?;

        let (problem, qr_time) = if self.decoders.iter().any(DecoderSpec::needs_qr) {
            let started = Instant::now();
            let p = preprocess(&instance, c.radius)?;
            (Some(p), started.elapsed().as_secs_f64())
        } else {
            (None, 0.0)
        };

        let mut traces = traces;
        let mut outcomes = Vec::with_capacity(self.decoders.len());
        for (spec, label) in self.decoders.iter().zip(self.labels) {
            let traced = traces.is_some() && spec.traceable();
            let started = Instant::now();
            let (report, trace) = run_decoder(spec, &instance, problem.as_ref(), traced)?;
            let mut time_s = started.elapsed().as_secs_f64();
            if spec.needs_qr() {
                time_s += qr_time;
            }
            if let (Some(records), Some(trace), Some(p)) = (traces.as_deref_mut(), trace, problem.as_ref()) {
                let verdict = verify_trace(&trace, p);
                records.push(TraceRecord {
                    snr_db,
                    decoder: label.clone(),
                    trace,
                    verdict,
                });
            }
            outcomes.push(self.score(&instance, &report, time_s)?);
        }
        Ok(outcomes)
    }

    fn score(&self, instance: &MimoInstance, report: &DetectionReport, time_s: f64) -> Result<Outcome> {
        let c = &instance.constellation;
        let m = instance.n_tx as u64;
        let fallback;
        let decided = match (&report.decoded, self.config.erasure) {
            (Some(d), _) => Some(d),
            (None, ErasurePolicy::Errors) => None,
            (None, ErasurePolicy::MmseFallback) => {
                fallback = linear_decode(instance, LinearKind::Mmse)?.decoded;
                fallback.as_ref()
            }
        };
        let (symbol_errors, bit_errors) = match decided {
            Some(d) => d.iter().zip(&instance.s_true).fold((0, 0), |(se, be), (&a, &b)| {
                (se + (a != b) as u64, be + c.bit_errors(a, b) as u64)
            }),
            None => (m, m * c.bits_per_symbol() as u64),
        };
        Ok(Outcome {
            symbol_errors,
            bit_errors,
            erased: report.decoded.is_none(),
            visited: report.visited_nodes,
            pd_calcs: report.pd_calcs,
            time_s,
        })
    }

    fn tally(&self, snr_index: usize, trials: std::ops::Range<usize>, traces: &mut Vec<TraceRecord>) -> Result<Vec<Tally>> {
        let mut tallies = vec![Tally::default(); self.decoders.len()];
        for t in trials {
            let record = self.config.collect_traces && t == 0;
            let outcomes = self.run(snr_index, t, record.then_some(&mut *traces))?;
            for (tally, o) in tallies.iter_mut().zip(&outcomes) {
                tally.add(o);
            }
        }
        Ok(tallies)
    }
}

/// Runs a whole campaign.
///
/// When the thread cap exceeds one and every decoder is single-threaded
/// (linear or plain K-best), trials are split into contiguous blocks that run
/// concurrently; all columns except timing are identical to a serial run.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult> {
    config.validate()?;
    let started = Instant::now();
    let decoders: Vec<DecoderSpec> = config.decoders.iter().map(|d| d.resolve(config.threads)).collect();
    let labels: Vec<String> = decoders.iter().map(ToString::to_string).collect();
    let trial = Trial {
        config,
        decoders: &decoders,
        labels: &labels,
    };
    let workers = if decoders.iter().all(DecoderSpec::trial_parallel) {
        config.threads.min(config.trials)
    } else {
        1
    };

    let bits = config.modulation.bits_per_symbol();
    let mut rows = Vec::with_capacity(config.snr_db.len() * decoders.len());
    let mut traces = Vec::new();
    for (si, &snr_db) in config.snr_db.iter().enumerate() {
        let tallies = if workers <= 1 {
            trial.tally(si, 0..config.trials, &mut traces)?
        } else {
            let block = config.trials.div_ceil(workers);
            let parts: Vec<Result<(Vec<Tally>, Vec<TraceRecord>)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|w| {
                        let trial = &trial;
                        let range = (w * block).min(config.trials)..((w + 1) * block).min(config.trials);
                        scope.spawn(move || {
                            let mut local = Vec::new();
                            trial.tally(si, range, &mut local).map(|t| (t, local))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("campaign worker panicked"))
                    .collect()
            });
            let mut merged = vec![Tally::default(); decoders.len()];
            for part in parts {
                let (tallies, local) = part?;
                for (acc, t) in merged.iter_mut().zip(&tallies) {
                    acc.merge(t);
                }
                traces.extend(local);
            }
            merged
        };
        for (tally, label) in tallies.iter().zip(&labels) {
            rows.push(tally.row(snr_db, label.clone(), config.n_tx, bits));
        }
    }
    Ok(CampaignResult {
        config: config.clone(),
        rows,
        traces,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

/// An SER increase between consecutive SNR points that is significant at
/// the 95% level (one-sided two-proportion z-test over symbol decisions).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityFlag {
    pub decoder: String,
    pub snr_low: f64,
    pub snr_high: f64,
    pub ser_low: f64,
    pub ser_high: f64,
    pub z: f64,
}

const Z_95_ONE_SIDED: f64 = 1.6449;

/// Checks that SER does not rise with SNR for any decoder. `m` is the number
/// of symbols per trial.
pub fn ser_monotonicity_flags(rows: &[MetricRow], m: usize) -> Vec<MonotonicityFlag> {
    let mut decoders: Vec<&str> = Vec::new();
    for r in rows {
        if !decoders.contains(&r.decoder.as_str()) {
            decoders.push(&r.decoder);
        }
    }
    let mut flags = Vec::new();
    for d in decoders {
        let mut points: Vec<&MetricRow> = rows.iter().filter(|r| r.decoder == d).collect();
        points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
        for pair in points.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let n1 = (lo.trials as usize * m) as f64;
            let n2 = (hi.trials as usize * m) as f64;
            let pooled = (lo.ser * n1 + hi.ser * n2) / (n1 + n2);
            let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
            if hi.ser > lo.ser && se > 0.0 {
                let z = (hi.ser - lo.ser) / se;
                if z > Z_95_ONE_SIDED {
                    flags.push(MonotonicityFlag {
                        decoder: d.to_string(),
                        snr_low: lo.snr_db,
                        snr_high: hi.snr_db,
                        ser_low: lo.ser,
                        ser_high: hi.ser,
                        z,
                    });
                }
            }
        }
    }
    flags
}

/// Human-readable report of a campaign: the metric table, SER monotonicity
/// warnings and audit verdicts.
pub fn summary(result: &CampaignResult) -> String {
    let c = &result.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}x{} {} | {} trials per point | radius {} | seed {} | {:.2} s",
        c.n_tx,
        c.n_rx,
        c.modulation,
        c.trials,
        radius_label(c.radius),
        c.seed,
        result.elapsed_s
    );
    let width = result.rows.iter().map(|r| r.decoder.len()).max().unwrap_or(7).max(7);
    let _ = writeln!(
        out,
        "{:>8}  {:<width$}  {:>10}  {:>10}  {:>8}  {:>12}  {:>12}  {:>11}",
        "snr_db", "decoder", "ser", "ber", "erasure", "mean_visited", "mean_pd", "mean_time_s"
    );
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{:>8.2}  {:<width$}  {:>10.3e}  {:>10.3e}  {:>8.4}  {:>12.1}  {:>12.1}  {:>11.3e}",
            r.snr_db, r.decoder, r.ser, r.ber, r.erasure_rate, r.mean_visited, r.mean_pd_calcs, r.mean_time_s
        );
    }
    for f in ser_monotonicity_flags(&result.rows, c.n_tx) {
        let _ = writeln!(
            out,
            "warning: {} SER rises from {:.3e} at {} dB to {:.3e} at {} dB (z = {:.2})",
            f.decoder, f.ser_low, f.snr_low, f.ser_high, f.snr_high, f.z
        );
    }
    for t in &result.traces {
        let status = if t.verdict.is_clean() {
            "clean".to_string()
        } else {
            format!("{} violation(s)", t.verdict.violations.len())
        };
        let _ = writeln!(
            out,
            "audit {} at {} dB: {} events, {status}",
            t.decoder,
            t.snr_db,
            t.trace.events.len()
        );
    }
    out
}

/// Concatenates trace dumps, each preceded by a `## snr=<dB> decoder=<label>`
/// line.
pub fn format_traces(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "## snr={} decoder={}", r.snr_db, r.decoder);
        out.push_str(&r.trace.dump());
    }
    out
}

/// Inverse of [`format_traces`]: `(snr, decoder, trace)` per block.
pub fn parse_traces(text: &str) -> Result<Vec<(f64, String, AuditTrace)>> {
    let mut blocks = Vec::new();
    let mut current: Option<(f64, String, String)> = None;
    for line in text.lines() {
        if let Some(head) = line.strip_prefix("## ") {
            if let Some((snr, dec, body)) = current.take() {
                blocks.push((snr, dec, AuditTrace::parse(&body)?));
            }
            let bad = || Error::InvalidParameter(format!("malformed trace block header `{line}`"));
            let (snr, dec) = head.split_once(' ').ok_or_else(bad)?;
            let snr = snr.strip_prefix("snr=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let dec = dec.strip_prefix("decoder=").ok_or_else(bad)?;
            current = Some((snr, dec.to_string(), String::new()));
        } else if let Some((_, _, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !line.trim().is_empty() {
            return Err(Error::InvalidParameter("trace text must start with a `## ` block header".into()));
        }
    }
    if let Some((snr, dec, body)) = current {
        blocks.push((snr, dec, AuditTrace::parse(&body)?));
    }
    Ok(blocks)
}
