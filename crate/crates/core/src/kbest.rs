//! Fixed-complexity K-best detection and the hybrid SD/K-best detector.
//!
//! K-best walks the tree level by level and keeps only the `K` nodes with the
//! smallest partial distance at each level, so its cost depends on `(M, |Ω|,
//! K)` alone. The hybrid runs a best-first sphere-decoder master over the top
//! of the tree; worker threads take nodes from the head of the master pool
//! and finish each subtree with a K-best descent that also respects the
//! shared, shrinking radius.

use std::thread;
use std::time::Instant;

use parking_lot::Mutex;

use crate::audit::{AuditTrace, EventKind, TraceSink};
use crate::error::{Error, Result};
use crate::linalg::PreprocessedProblem;
use crate::parallel::SharedRadius;
use crate::sd::{make_child, DetectionReport, Evaluation, SearchNode, Searcher, Strategy, WorkPool};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KbestConfig {
    /// Nodes kept per level.
    pub k: usize,
    /// Relative slack: hybrid workers also keep nodes whose partial distance
    /// is within `(1 + closeness_eps)` of the K-th best.
    pub closeness_eps: f64,
    pub n_workers: usize,
    /// Pool size the master reaches before workers start; defaults to four
    /// nodes per worker.
    pub master_fill: Option<usize>,
}

impl KbestConfig {
    pub fn new(k: usize, n_workers: usize) -> Self {
        KbestConfig {
            k,
            closeness_eps: 0.05,
            n_workers,
            master_fill: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if self.n_workers == 0 {
            return Err(Error::InvalidParameter("at least one worker is required".into()));
        }
        if !(self.closeness_eps >= 0.0) || !self.closeness_eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "closeness slack must be a finite nonnegative number, got {}",
                self.closeness_eps
            )));
        }
        Ok(())
    }
}

/// Plain K-best. Ignores the problem's radius; exactly `K` nodes survive
/// each level (fewer only near the root).
pub fn kbest_decode(problem: &PreprocessedProblem, k: usize) -> DetectionReport {
    run_kbest(problem, k, false).0
}

pub fn kbest_decode_traced(problem: &PreprocessedProblem, k: usize) -> (DetectionReport, AuditTrace) {
    let (report, sink) = run_kbest(problem, k, true);
    let mut trace = AuditTrace::new(problem.m(), problem.constellation().len(), 1, f64::INFINITY);
    trace.absorb(sink);
    (report, trace)
}

fn run_kbest(problem: &PreprocessedProblem, k: usize, traced: bool) -> (DetectionReport, TraceSink) {
    assert!(k >= 1, "K must be at least 1");
    let started = Instant::now();
    let radius = SharedRadius::new(f64::INFINITY);
    let mut searcher = Searcher::new(problem, 1, Evaluation::Incremental, TraceSink::new(0, traced));
    descend(&mut searcher, SearchNode::root(problem.m()), k, None, &radius);
    let report = DetectionReport::from_best(
        searcher.best.take(),
        searcher.visited,
        searcher.pd_calcs,
        started,
        radius.get(),
    );
    (report, std::mem::take(&mut searcher.trace))
}

/// A successor that has been scored but not materialized.
#[derive(Clone, Copy)]
struct Candidate {
    pd: f64,
    parent: u32,
    symbol: u8,
}

impl Candidate {
    // generation order breaks distance ties
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.pd
            .total_cmp(&other.pd)
            .then(self.parent.cmp(&other.parent))
            .then(self.symbol.cmp(&other.symbol))
    }
}

/// Level-synchronous K-best search of the subtree below `start`.
///
/// Nodes at or beyond the shared radius are pruned. With `slack = Some(eps)`
/// nodes within `(1 + eps)` of the K-th best distance are kept as well.
fn descend(searcher: &mut Searcher<'_>, start: SearchNode, k: usize, slack: Option<f64>, radius: &SharedRadius) {
    let problem = searcher.problem();
    let m = problem.m();
    let q = problem.constellation().len();
    let mut kept = vec![start];
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut parents: Vec<SearchNode> = Vec::new();

    while !kept.is_empty() {
        let level = kept[0].level();
        let row = m - 1 - level;
        let leaf_level = level + 1 == m;
        let diag = problem.diag_points(row);
        candidates.clear();
        parents.clear();

        for node in kept.drain(..) {
            let r = radius.get();
            if node.pd() >= r {
                searcher.prune(&node, r);
                continue;
            }
            searcher.visited += 1;
            searcher.pd_calcs += q as u64;
            if searcher.trace.is_on() {
                searcher.trace.record(EventKind::Expand, node.fixed_symbols().to_vec(), node.pd(), r);
            }
            let z = problem.y_bar()[row] - node.residual_cache()[row];
            let parent = parents.len() as u32;
            for (a, p) in diag.iter().enumerate() {
                let pd = node.pd() + (z - p).norm_sqr();
                candidates.push(Candidate { pd, parent, symbol: a as u8 });
            }
            parents.push(node);
        }

        let suffix = |c: &Candidate| {
            let mut s = parents[c.parent as usize].fixed_symbols().to_vec();
            s.push(c.symbol);
            s
        };

        if leaf_level {
            for c in &candidates {
                let r = radius.get();
                if c.pd < r {
                    searcher.leaf(suffix(c), c.pd, r, radius);
                } else if searcher.trace.is_on() {
                    searcher.trace.record(EventKind::Prune, suffix(c), c.pd, r);
                }
            }
            return;
        }

        let r = radius.get();
        if searcher.trace.is_on() {
            for c in candidates.iter().filter(|c| c.pd >= r) {
                searcher.trace.record(EventKind::Prune, suffix(c), c.pd, r);
            }
        }
        candidates.retain(|c| c.pd < r);

        let mut keep = candidates.len();
        if candidates.len() > k {
            candidates.select_nth_unstable_by(k - 1, Candidate::cmp);
            let kth = candidates[k - 1].pd;
            keep = k;
            if let Some(eps) = slack {
                let limit = kth * (1.0 + eps);
                // move near-ties right after the K best
                let tail = &mut candidates[k..];
                let mut extra = 0;
                for i in 0..tail.len() {
                    if tail[i].pd <= limit {
                        tail.swap(extra, i);
                        extra += 1;
                    }
                }
                keep += extra;
            }
        }
        candidates[..keep].sort_unstable_by(Candidate::cmp);
        if searcher.trace.is_on() {
            for c in &candidates[keep..] {
                searcher.trace.record(EventKind::Cut, suffix(c), c.pd, r);
            }
        }
        for c in &candidates[..keep] {
            let parent = &parents[c.parent as usize];
            kept.push(make_child(problem, parent, &[c.symbol], c.pd));
        }
    }
}

/// Hybrid SD/K-best detection.
pub fn sd_kbest_decode(problem: &PreprocessedProblem, config: &KbestConfig) -> Result<DetectionReport> {
    config.validate()?;
    Ok(run_hybrid(problem, config, false).0)
}

pub fn sd_kbest_decode_traced(
    problem: &PreprocessedProblem,
    config: &KbestConfig,
) -> Result<(DetectionReport, AuditTrace)> {
    config.validate()?;
    let (report, sinks) = run_hybrid(problem, config, true);
    let mut trace = AuditTrace::new(problem.m(), problem.constellation().len(), 1, problem.radius_sq());
    for sink in sinks {
        trace.absorb(sink);
    }
    Ok((report, trace))
}

fn run_hybrid(problem: &PreprocessedProblem, config: &KbestConfig, traced: bool) -> (DetectionReport, Vec<TraceSink>) {
    let started = Instant::now();
    let radius = SharedRadius::new(problem.radius_sq());
    let fill = config.master_fill.unwrap_or(4 * config.n_workers).max(1);

    let mut master = Searcher::new(problem, 1, Evaluation::Incremental, TraceSink::new(0, traced));
    let mut pool = WorkPool::new(Strategy::BestFs);
    pool.push(SearchNode::root(problem.m()));
    let mut children = Vec::new();
    while pool.len() < fill {
        let Some(node) = pool.pop() else { break };
        master.process(node, &radius, &mut children);
        pool.push_children(&mut children);
    }
    let pool = Mutex::new(pool);

    let mut tallies: Vec<(u64, u64, Option<(f64, Vec<u8>)>, TraceSink)> = Vec::new();
    let take = |s: &mut Searcher<'_>| (s.visited, s.pd_calcs, s.best.take(), std::mem::take(&mut s.trace));
    tallies.push(take(&mut master));

    let workers: Vec<_> = thread::scope(|scope| {
        let handles: Vec<_> = (0..config.n_workers)
            .map(|id| {
                let (pool, radius) = (&pool, &radius);
                scope.spawn(move || {
                    let mut s = Searcher::new(problem, 1, Evaluation::Incremental, TraceSink::new(id as u32 + 1, traced));
                    loop {
                        let next = pool.lock().pop();
                        let Some(node) = next else { break };
                        descend(&mut s, node, config.k, Some(config.closeness_eps), radius);
                    }
                    (s.visited, s.pd_calcs, s.best.take(), std::mem::take(&mut s.trace))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("K-best worker panicked")).collect()
    });
    tallies.extend(workers);

    let mut best: Option<(f64, Vec<u8>)> = None;
    let (mut visited, mut pd_calcs, mut max_v, mut max_p) = (0, 0, 0, 0);
    let mut sinks = Vec::new();
    for (v, p, b, sink) in tallies {
        visited += v;
        pd_calcs += p;
        max_v = max_v.max(v);
        max_p = max_p.max(p);
        if let Some((d, s)) = b {
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, s));
            }
        }
        sinks.push(sink);
    }
    let mut report = DetectionReport::from_best(best, visited, pd_calcs, started, radius.get());
    report.threads = config.n_workers;
    report.max_thread_visited = max_v;
    report.max_thread_pd_calcs = max_p;
    (report, sinks)
}
