//! Multi-threaded sphere decoding.
//!
//! Two schemes share the serial engine:
//!
//! * [`pl_sd_decode`] keeps a single best-first pool. Each iteration the
//!   coordinator hands a batch of nodes to every thread of a persistent pool,
//!   the threads branch on their nodes concurrently, and the children are
//!   merged back into the shared pool.
//! * [`psd_decode`] runs one best-first search per worker, each on its own
//!   subtree. A master expands the top of the tree, hands one node to every
//!   idle worker and, with [`Balancing::Dynamic`], takes over the pool of the
//!   most loaded worker whenever its own pool runs dry.
//!
//! The only state the searches share is the squared radius, a
//! [`SharedRadius`]. Whatever the schedule, the returned metric is the
//! serial optimum; only the explored set and the counters vary.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use crate::audit::{AuditTrace, TraceSink};
use crate::error::Error;
use crate::linalg::PreprocessedProblem;
use crate::sd::{self, DetectionReport, Evaluation, SdConfig, SearchNode, Searcher, Strategy, WorkPool};

/// A squared radius that only ever shrinks, shared between threads.
///
/// The value is stored as the bit pattern of a nonnegative `f64`. For such
/// values the unsigned integer order of the bits equals the numeric order, so
/// an atomic integer minimum is an atomic radius minimum.
#[derive(Debug)]
pub struct SharedRadius {
    bits: AtomicU64,
}

impl SharedRadius {
    pub fn new(radius_sq: f64) -> Self {
        SharedRadius {
            bits: AtomicU64::new(Self::encode(radius_sq)),
        }
    }

    fn encode(radius_sq: f64) -> u64 {
        assert!(radius_sq >= 0.0, "squared radius must be nonnegative, got {radius_sq}");
        // +0.0 and -0.0 compare equal but -0.0 has the sign bit set
        (radius_sq + 0.0).to_bits()
    }

    #[inline]
    pub fn get(&self) -> f64 {
        f64::from_bits(self.bits.load(Ordering::Acquire))
    }

    /// Lowers the radius to `min(current, radius_sq)` and returns the value
    /// it held just before; the radius changed iff the result is larger than
    /// `radius_sq`.
    #[inline]
    pub fn offer(&self, radius_sq: f64) -> f64 {
        f64::from_bits(self.bits.fetch_min(Self::encode(radius_sq), Ordering::AcqRel))
    }
}

/// Load balancing of the master/worker decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Balancing {
    /// Idle workers only receive nodes still held by the master.
    Static,
    /// When the master runs out of nodes it takes over the pool of the
    /// worker with the most unexplored nodes.
    Dynamic,
}

impl fmt::Display for Balancing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Balancing::Static => "static",
            Balancing::Dynamic => "dynamic",
        })
    }
}

impl FromStr for Balancing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static" | "s" => Ok(Balancing::Static),
            "dynamic" | "d" => Ok(Balancing::Dynamic),
            other => Err(Error::InvalidParameter(format!(
                "unknown balancing `{other}` (expected static or dynamic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsdConfig {
    pub n_workers: usize,
    pub balancing: Balancing,
    /// Symbols fixed per branching, for the master and the workers.
    pub group: usize,
}

impl PsdConfig {
    pub fn new(n_workers: usize, balancing: Balancing) -> Self {
        PsdConfig {
            n_workers,
            balancing,
            group: 1,
        }
    }
}

/// Shared-pool parallel sphere decoder.
///
/// Each iteration takes up to `batch_size` nodes per thread from a best-first
/// pool. With a single thread there is nothing to batch for, and the decoder
/// runs the serial best-first search.
pub fn pl_sd_decode(problem: &PreprocessedProblem, n_threads: usize, batch_size: usize) -> DetectionReport {
    run_pl(problem, n_threads, batch_size, false).0
}

pub fn pl_sd_decode_traced(
    problem: &PreprocessedProblem,
    n_threads: usize,
    batch_size: usize,
) -> (DetectionReport, AuditTrace) {
    let (report, sinks) = run_pl(problem, n_threads, batch_size, true);
    (report, merge_trace(problem, 1, sinks))
}

fn merge_trace(problem: &PreprocessedProblem, group: usize, sinks: Vec<TraceSink>) -> AuditTrace {
    let mut trace = AuditTrace::new(problem.m(), problem.constellation().len(), group, problem.radius_sq());
    for sink in sinks {
        trace.absorb(sink);
    }
    trace
}

struct Tally {
    visited: u64,
    pd_calcs: u64,
    best: Option<(f64, Vec<u8>)>,
    sink: TraceSink,
}

impl Tally {
    fn from_searcher(mut s: Searcher<'_>) -> Self {
        Tally {
            visited: s.visited,
            pd_calcs: s.pd_calcs,
            best: s.best.take(),
            sink: std::mem::take(&mut s.trace),
        }
    }
}

/// Combines per-thread results; `threads` is the divisor of per-thread means.
fn combine(
    tallies: Vec<Tally>,
    threads: usize,
    started: Instant,
    radius: &SharedRadius,
) -> (DetectionReport, Vec<TraceSink>) {
    let mut visited = 0;
    let mut pd_calcs = 0;
    let mut max_v = 0;
    let mut max_p = 0;
    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut sinks = Vec::with_capacity(tallies.len());
    for t in tallies {
        visited += t.visited;
        pd_calcs += t.pd_calcs;
        max_v = max_v.max(t.visited);
        max_p = max_p.max(t.pd_calcs);
        if let Some((d, s)) = t.best {
            if best.as_ref().is_none_or(|(b, _)| d < *b) {
                best = Some((d, s));
            }
        }
        sinks.push(t.sink);
    }
    let mut report = DetectionReport::from_best(best, visited, pd_calcs, started, radius.get());
    report.threads = threads;
    report.max_thread_visited = max_v;
    report.max_thread_pd_calcs = max_p;
    (report, sinks)
}

fn run_pl(
    problem: &PreprocessedProblem,
    n_threads: usize,
    batch_size: usize,
    traced: bool,
) -> (DetectionReport, Vec<TraceSink>) {
    assert!(n_threads >= 1 && batch_size >= 1, "need at least one thread and a batch of one");
    if n_threads == 1 {
        let (report, sink) = sd::run_serial(problem, &SdConfig::default(), traced);
        return (report, vec![sink]);
    }
    let started = Instant::now();
    let radius = SharedRadius::new(problem.radius_sq());
    let mut pool = WorkPool::new(Strategy::BestFs);
    pool.push(SearchNode::root(problem.m()));

    let tallies = thread::scope(|scope| {
        let (done_tx, done_rx) = mpsc::channel::<(usize, Vec<Vec<SearchNode>>)>();
        let mut job_txs = Vec::with_capacity(n_threads);
        let mut handles = Vec::with_capacity(n_threads);
        for t in 0..n_threads {
            let (job_tx, job_rx) = mpsc::channel::<Vec<SearchNode>>();
            job_txs.push(job_tx);
            let done_tx = done_tx.clone();
            let radius = &radius;
            handles.push(scope.spawn(move || {
                let mut searcher =
                    Searcher::new(problem, 1, Evaluation::Incremental, TraceSink::new(t as u32 + 1, traced));
                for batch in job_rx {
                    let mut out = Vec::with_capacity(batch.len());
                    for node in batch {
                        let mut children = Vec::new();
                        searcher.process(node, radius, &mut children);
                        out.push(children);
                    }
                    if done_tx.send((t, out)).is_err() {
                        break;
                    }
                }
                Tally::from_searcher(searcher)
            }));
        }
        drop(done_tx);

        let mut results: Vec<Vec<Vec<SearchNode>>> = vec![Vec::new(); n_threads];
        while !pool.is_empty() {
            let mut sent = 0;
            for job_tx in &job_txs {
                let batch: Vec<SearchNode> = std::iter::from_fn(|| pool.pop()).take(batch_size).collect();
                if batch.is_empty() {
                    break;
                }
                job_tx.send(batch).expect("expansion thread stopped early");
                sent += 1;
            }
            for _ in 0..sent {
                let (t, out) = done_rx.recv().expect("expansion thread stopped early");
                results[t] = out;
            }
            // The first node popped must end on top of the pool.
            for slot in results[..sent].iter_mut().rev() {
                for children in slot.iter_mut().rev() {
                    pool.push_children(children);
                }
                slot.clear();
            }
        }
        drop(job_txs);
        handles
            .into_iter()
            .map(|h| h.join().expect("expansion thread panicked"))
            .collect::<Vec<_>>()
    });
    combine(tallies, n_threads, started, &radius)
}

/// Master/worker parallel sphere decoder.
pub fn psd_decode(problem: &PreprocessedProblem, config: &PsdConfig) -> DetectionReport {
    run_psd(problem, config, false).0
}

pub fn psd_decode_traced(problem: &PreprocessedProblem, config: &PsdConfig) -> (DetectionReport, AuditTrace) {
    let (report, sinks) = run_psd(problem, config, true);
    (report, merge_trace(problem, config.group.max(1), sinks))
}

enum Order {
    Explore(SearchNode),
    Stop,
}

/// Fallback wake-up of the master when no worker reports.
const MASTER_POLL: Duration = Duration::from_millis(10);
/// Re-check interval while waiting for a worker pool to become worth taking.
const STEAL_POLL: Duration = Duration::from_micros(200);

fn run_psd(problem: &PreprocessedProblem, config: &PsdConfig, traced: bool) -> (DetectionReport, Vec<TraceSink>) {
    let n = config.n_workers;
    assert!(n >= 1, "at least one worker is required");
    let group = config.group.max(1);
    let started = Instant::now();
    let radius = SharedRadius::new(problem.radius_sq());
    let slots: Vec<Mutex<WorkPool>> = (0..n).map(|_| Mutex::new(WorkPool::new(Strategy::BestFs))).collect();

    let mut master = Searcher::new(problem, group, Evaluation::Incremental, TraceSink::new(0, traced));
    let mut pool = WorkPool::new(Strategy::BestFs);
    pool.push(SearchNode::root(problem.m()));
    let mut children = Vec::new();
    while pool.len() < n {
        let Some(node) = pool.pop() else { break };
        master.process(node, &radius, &mut children);
        pool.push_children(&mut children);
    }

    let tallies = thread::scope(|scope| {
        let (idle_tx, idle_rx) = mpsc::channel::<usize>();
        let mut order_txs = Vec::with_capacity(n);
        let mut handles = Vec::with_capacity(n);
        for (id, slot) in slots.iter().enumerate() {
            let (order_tx, order_rx) = mpsc::channel::<Order>();
            order_txs.push(order_tx);
            let idle_tx = idle_tx.clone();
            let radius = &radius;
            handles.push(scope.spawn(move || {
                let mut searcher =
                    Searcher::new(problem, group, Evaluation::Incremental, TraceSink::new(id as u32 + 1, traced));
                let mut children = Vec::new();
                while let Ok(Order::Explore(node)) = order_rx.recv() {
                    slot.lock().push(node);
                    loop {
                        let next = slot.lock().pop();
                        let Some(node) = next else { break };
                        searcher.process(node, radius, &mut children);
                        if !children.is_empty() {
                            slot.lock().push_children(&mut children);
                        }
                    }
                    if idle_tx.send(id).is_err() {
                        break;
                    }
                }
                Tally::from_searcher(searcher)
            }));
        }
        drop(idle_tx);

        let mut idle: BTreeSet<usize> = (0..n).collect();
        loop {
            while !idle.is_empty() {
                let Some(node) = next_live(&mut pool, &mut master, &radius) else { break };
                let w = idle.pop_first().expect("checked non-empty");
                order_txs[w].send(Order::Explore(node)).expect("worker stopped early");
            }
            if pool.is_empty() && idle.len() == n {
                break;
            }
            let mut wait = MASTER_POLL;
            if config.balancing == Balancing::Dynamic && pool.is_empty() && !idle.is_empty() {
                let victim = (0..n)
                    .filter(|w| !idle.contains(w))
                    .map(|w| (slots[w].lock().len(), w))
                    .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
                if let Some((len, w)) = victim {
                    if len > 0 {
                        let taken = slots[w].lock().take_all();
                        pool.extend(taken);
                        continue;
                    }
                }
                wait = STEAL_POLL;
            }
            match idle_rx.recv_timeout(wait) {
                Ok(w) => {
                    idle.insert(w);
                    idle.extend(idle_rx.try_iter());
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => unreachable!("workers outlive the master loop"),
            }
        }
        for tx in &order_txs {
            let _ = tx.send(Order::Stop);
        }
        let mut tallies = vec![Tally::from_searcher(master)];
        tallies.extend(handles.into_iter().map(|h| h.join().expect("worker panicked")));
        tallies
    });
    combine(tallies, n, started, &radius)
}

/// Pops the next node of the master pool that is still inside the sphere.
fn next_live(pool: &mut WorkPool, master: &mut Searcher<'_>, radius: &SharedRadius) -> Option<SearchNode> {
    while let Some(node) = pool.pop() {
        let r = radius.get();
        if node.pd() < r {
            return Some(node);
        }
        master.prune(&node, r);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::verify_trace;
    use crate::linalg::{preprocess, RadiusPolicy};
    use crate::model::{generate_instance, make_constellation, ConstellationKind};
    use crate::sd::{ml_bruteforce, sd_decode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn problem(m: usize, kind: ConstellationKind, snr: f64, seed: u64, policy: RadiusPolicy) -> PreprocessedProblem {
        let c = make_constellation(kind);
        let inst = generate_instance(m, m, &c, snr, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        preprocess(&inst, policy).unwrap()
    }

    #[test]
    fn shared_radius_only_shrinks() {
        let r = SharedRadius::new(10.0);
        assert_eq!(r.offer(12.0), 10.0);
        assert_eq!(r.get(), 10.0);
        assert_eq!(r.offer(3.5), 10.0);
        assert_eq!(r.get(), 3.5);
        assert_eq!(r.offer(3.5), 3.5);
        let inf = SharedRadius::new(f64::INFINITY);
        assert_eq!(inf.offer(1e300), f64::INFINITY);
        assert_eq!(inf.offer(-0.0), 1e300);
        assert_eq!(inf.get().to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn shared_radius_concurrent_minimum() {
        let r = SharedRadius::new(f64::INFINITY);
        thread::scope(|s| {
            for t in 0..4 {
                let r = &r;
                s.spawn(move || {
                    for i in 0..1000 {
                        r.offer(1.0 + ((i * 7 + t * 13) % 997) as f64);
                    }
                });
            }
        });
        assert_eq!(r.get(), 1.0);
    }

    #[test]
    fn single_thread_pl_sd_is_serial() {
        let p = problem(6, ConstellationKind::Qam16, 10.0, 6, RadiusPolicy::Formula);
        let serial = sd_decode(&p, Strategy::BestFs, 1);
        let pl = pl_sd_decode(&p, 1, 20);
        assert_eq!(pl.dist, serial.dist);
        assert_eq!(pl.visited_nodes, serial.visited_nodes);
    }

    #[test]
    fn pl_sd_reaches_the_optimum() {
        for seed in 0..4 {
            let p = problem(5, ConstellationKind::Qam16, 8.0, seed, RadiusPolicy::Infinite);
            let ml = ml_bruteforce(&p).unwrap();
            for threads in [2, 3, 8] {
                let rep = pl_sd_decode(&p, threads, 4);
                assert!((rep.dist - ml.dist).abs() <= 1e-9, "seed {seed} threads {threads}");
                assert_eq!(rep.threads, threads);
            }
        }
    }

    #[test]
    fn psd_reaches_the_optimum() {
        for seed in 0..4 {
            let p = problem(5, ConstellationKind::Qam16, 6.0, seed, RadiusPolicy::Infinite);
            let ml = ml_bruteforce(&p).unwrap();
            for workers in [1, 2, 5, 16] {
                for balancing in [Balancing::Static, Balancing::Dynamic] {
                    let rep = psd_decode(&p, &PsdConfig::new(workers, balancing));
                    assert!((rep.dist - ml.dist).abs() <= 1e-9, "seed {seed} {workers} {balancing}");
                }
            }
        }
    }

    #[test]
    fn noise_free_parallel_decoders_hit_zero() {
        let p = problem(6, ConstellationKind::Qpsk, f64::INFINITY, 1, RadiusPolicy::Infinite);
        for threads in [1, 2, 4] {
            assert!(pl_sd_decode(&p, threads, 3).dist < 1e-20);
            assert!(psd_decode(&p, &PsdConfig::new(threads, Balancing::Dynamic)).dist < 1e-20);
        }
    }

    #[test]
    fn parallel_traces_are_clean() {
        let p = problem(5, ConstellationKind::Qpsk, 2.0, 2, RadiusPolicy::Formula);
        let (_, trace) = pl_sd_decode_traced(&p, 3, 2);
        assert!(verify_trace(&trace, &p).is_clean());
        for balancing in [Balancing::Static, Balancing::Dynamic] {
            let cfg = PsdConfig { n_workers: 8, balancing, group: 2 };
            let (rep, trace) = psd_decode_traced(&p, &cfg);
            let verdict = verify_trace(&trace, &p);
            assert!(verdict.is_clean(), "{balancing}: {verdict}");
            assert_eq!(rep.threads, 8);
        }
    }

    #[test]
    fn balancing_parses() {
        assert_eq!("Dynamic".parse::<Balancing>().unwrap(), Balancing::Dynamic);
        assert_eq!("static".parse::<Balancing>().unwrap(), Balancing::Static);
        assert!("round-robin".parse::<Balancing>().is_err());
    }
}
