//! Search traces and the reference computations used to check decoders.
//!
//! Every decoder can record an [`AuditTrace`]: one [`TraceEvent`] per node
//! expansion, pruning, leaf, radius update, K-best cut, or node left pooled
//! at termination. [`verify_trace`] checks such a trace for radius
//! monotonicity, pruning soundness and node conservation.
//!
//! # Dump format
//!
//! [`AuditTrace::dump`] writes line-oriented text. The first line is a header:
//!
//! ```text
//! # trace v1 m=<M> order=<|Ω|> group=<J> radius0=<r²>
//! ```
//!
//! followed by one event per line, fields separated by single spaces:
//!
//! ```text
//! <worker> <seq> <kind> <pd> <radius_sq> <suffix>
//! ```
//!
//! `kind` is one of `expand`, `prune`, `leaf`, `radius_update`, `cut`,
//! `pooled`; numbers use Rust's shortest round-trip formatting (`inf` for
//! an unbounded radius); `suffix` lists the fixed symbol indices in fixing
//! order joined by `.`, or `-` for the root. For `radius_update`, `pd` is the
//! new squared radius and `radius_sq` the value it replaced.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, PreprocessedProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Branching was performed on the node.
    Expand,
    /// The node was discarded because its distance reached the radius.
    Prune,
    /// A complete vector inside the sphere.
    Leaf,
    /// The shared radius shrank.
    RadiusUpdate,
    /// Dropped by a K-best selection while still inside the sphere.
    Cut,
    /// Still pooled when the search stopped.
    Pooled,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Expand => "expand",
            EventKind::Prune => "prune",
            EventKind::Leaf => "leaf",
            EventKind::RadiusUpdate => "radius_update",
            EventKind::Cut => "cut",
            EventKind::Pooled => "pooled",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "expand" => EventKind::Expand,
            "prune" => EventKind::Prune,
            "leaf" => EventKind::Leaf,
            "radius_update" => EventKind::RadiusUpdate,
            "cut" => EventKind::Cut,
            "pooled" => EventKind::Pooled,
            other => {
                return Err(Error::InvalidParameter(format!("unknown trace event `{other}`")))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    /// 0 for a serial search or the coordinating thread.
    pub worker: u32,
    /// Per-worker sequence number.
    pub seq: u64,
    pub kind: EventKind,
    /// Fixed symbols in fixing order.
    pub suffix: Vec<u8>,
    pub pd: f64,
    /// Squared radius observed when the event happened.
    pub radius_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditTrace {
    pub m: usize,
    pub order: usize,
    pub group: usize,
    pub initial_radius_sq: f64,
    pub events: Vec<TraceEvent>,
}

impl AuditTrace {
    pub fn new(m: usize, order: usize, group: usize, initial_radius_sq: f64) -> Self {
        AuditTrace {
            m,
            order,
            group,
            initial_radius_sq,
            events: Vec::new(),
        }
    }

    /// Appends the events of per-worker buffers.
    pub(crate) fn absorb(&mut self, sink: TraceSink) {
        if let Some(events) = sink.events {
            self.events.extend(events);
        }
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn dump(&self) -> String {
        let mut out = format!(
            "# trace v1 m={} order={} group={} radius0={}\n",
            self.m, self.order, self.group, self.initial_radius_sq
        );
        for e in &self.events {
            let _ = write!(out, "{} {} {} {} {} ", e.worker, e.seq, e.kind, e.pd, e.radius_sq);
            if e.suffix.is_empty() {
                out.push('-');
            } else {
                for (i, s) in e.suffix.iter().enumerate() {
                    if i > 0 {
                        out.push('.');
                    }
                    let _ = write!(out, "{s}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| {
            Error::InvalidParameter(format!("trace line {}: {what}", line + 1))
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
        let rest = header
            .strip_prefix("# trace v1")
            .ok_or_else(|| bad(0, "expected `# trace v1` header"))?;
        let mut fields = HashMap::new();
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(0, "malformed header field"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(0, &format!("missing `{k}`")));
        let int = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| bad(0, &format!("bad `{k}`")))
        };
        let mut trace = AuditTrace::new(
            int("m")?,
            int("order")?,
            int("group")?,
            get("radius0")?.parse().map_err(|_| bad(0, "bad `radius0`"))?,
        );
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 6 {
                return Err(bad(no, "expected 6 fields"));
            }
            let suffix = if parts[5] == "-" {
                Vec::new()
            } else {
                parts[5]
                    .split('.')
                    .map(|s| s.parse::<u8>().map_err(|_| bad(no, "bad suffix")))
                    .collect::<Result<Vec<_>>>()?
            };
            trace.events.push(TraceEvent {
                worker: parts[0].parse().map_err(|_| bad(no, "bad worker"))?,
                seq: parts[1].parse().map_err(|_| bad(no, "bad seq"))?,
                kind: parts[2].parse().map_err(|_| bad(no, "bad kind"))?,
                pd: parts[3].parse().map_err(|_| bad(no, "bad pd"))?,
                radius_sq: parts[4].parse().map_err(|_| bad(no, "bad radius"))?,
                suffix,
            });
        }
        Ok(trace)
    }
}

/// Per-thread event buffer; a disabled sink records nothing.
#[derive(Debug, Default)]
pub(crate) struct TraceSink {
    worker: u32,
    seq: u64,
    events: Option<Vec<TraceEvent>>,
}

impl TraceSink {
    pub(crate) fn new(worker: u32, enabled: bool) -> Self {
        TraceSink {
            worker,
            seq: 0,
            events: enabled.then(Vec::new),
        }
    }

    #[inline]
    pub(crate) fn is_on(&self) -> bool {
        self.events.is_some()
    }

    pub(crate) fn record(&mut self, kind: EventKind, suffix: Vec<u8>, pd: f64, radius_sq: f64) {
        if let Some(events) = &mut self.events {
            events.push(TraceEvent {
                worker: self.worker,
                seq: self.seq,
                kind,
                suffix,
                pd,
                radius_sq,
            });
            self.seq += 1;
        }
    }
}

/// Reference partial distance, evaluated from scratch.
///
/// `suffix[k]` is the symbol value of antenna `M − 1 − k`; the result is
/// `Σ_{k=1..L} |ȳ_{M−k} − Σ_{i=M−k}^{M−1} r_{M−k,i} s_i|²` with `L = |suffix|`.
pub fn scratch_pd(suffix: &[Complex64], r: &CMatrix, y_bar: &[Complex64]) -> f64 {
    let m = y_bar.len();
    assert!(suffix.len() <= m, "suffix longer than the tree depth");
    let symbol = |i: usize| suffix[m - 1 - i];
    let mut total = 0.0;
    for k in 1..=suffix.len() {
        let row = m - k;
        let mut acc = y_bar[row];
        for i in row..m {
            acc -= r[(row, i)] * symbol(i);
        }
        total += acc.norm_sqr();
    }
    total
}

/// [`scratch_pd`] for a suffix given as constellation indices.
pub fn scratch_pd_indices(suffix: &[u8], problem: &PreprocessedProblem) -> f64 {
    let values: Vec<Complex64> = suffix
        .iter()
        .map(|&s| problem.constellation().point(s as usize))
        .collect();
    scratch_pd(&values, problem.r(), problem.y_bar())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index into `AuditTrace::events`, when one event is at fault.
    pub event: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditVerdict {
    pub violations: Vec<Violation>,
}

impl AuditVerdict {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, event: Option<usize>, message: String) {
        self.violations.push(Violation { event, message });
    }
}

impl fmt::Display for AuditVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "clean");
        }
        for v in &self.violations {
            match v.event {
                Some(i) => writeln!(f, "event {i}: {}", v.message)?,
                None => writeln!(f, "{}", v.message)?,
            }
        }
        Ok(())
    }
}

/// Checks a trace recorded against `problem`.
///
/// * Per worker, the observed radius never increases.
/// * Radius updates, ordered by value, form one chain starting at the
///   initial radius: each update replaced exactly the previous value.
/// * Pruned nodes had `pd ≥ r²`; expanded nodes and leaves had `pd < r²`.
/// * Recorded partial distances match [`scratch_pd`] (relative 1e-9).
/// * Conservation: every child of every expanded node appears exactly once
///   as expanded, pruned, leaf, cut or pooled, and nothing else appears.
pub fn verify_trace(trace: &AuditTrace, problem: &PreprocessedProblem) -> AuditVerdict {
    let mut verdict = AuditVerdict::default();
    let m = problem.m();
    let order = problem.constellation().len();
    if trace.m != m || trace.order != order {
        verdict.flag(
            None,
            format!(
                "trace is for m={} order={}, problem has m={m} order={order}",
                trace.m, trace.order
            ),
        );
        return verdict;
    }

    // radius monotonicity per worker, in sequence order
    let mut by_worker: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        by_worker.entry(e.worker).or_default().push(i);
    }
    let mut workers: Vec<_> = by_worker.into_iter().collect();
    workers.sort_by_key(|(w, _)| *w);
    for (worker, mut idx) in workers {
        idx.sort_by_key(|&i| trace.events[i].seq);
        for pair in idx.windows(2) {
            let (a, b) = (&trace.events[pair[0]], &trace.events[pair[1]]);
            if b.radius_sq > a.radius_sq {
                verdict.flag(
                    Some(pair[1]),
                    format!(
                        "worker {worker}: radius grew from {} to {}",
                        a.radius_sq, b.radius_sq
                    ),
                );
            }
        }
    }

    // radius publication chain
    let mut updates: Vec<usize> = (0..trace.events.len())
        .filter(|&i| trace.events[i].kind == EventKind::RadiusUpdate)
        .collect();
    updates.sort_by(|&a, &b| trace.events[b].pd.total_cmp(&trace.events[a].pd));
    let mut current = trace.initial_radius_sq;
    for &i in &updates {
        let e = &trace.events[i];
        if !(e.pd < e.radius_sq) || e.radius_sq != current {
            verdict.flag(
                Some(i),
                format!(
                    "radius update {} -> {} does not extend the chain at {current}",
                    e.radius_sq, e.pd
                ),
            );
        }
        current = e.pd;
    }

    // per-event soundness
    for (i, e) in trace.events.iter().enumerate() {
        match e.kind {
            EventKind::Prune if !(e.pd >= e.radius_sq) => verdict.flag(
                Some(i),
                format!("pruned node with pd {} inside radius {}", e.pd, e.radius_sq),
            ),
            EventKind::Expand | EventKind::Leaf if !(e.pd < e.radius_sq) => verdict.flag(
                Some(i),
                format!("{} node with pd {} outside radius {}", e.kind, e.pd, e.radius_sq),
            ),
            EventKind::Leaf if e.suffix.len() != m => verdict.flag(
                Some(i),
                format!("leaf with {} of {m} symbols fixed", e.suffix.len()),
            ),
            EventKind::Expand if e.suffix.len() >= m => {
                verdict.flag(Some(i), "expansion of a complete vector".into())
            }
            _ => {}
        }
        if e.kind != EventKind::RadiusUpdate {
            if e.suffix.iter().any(|&s| s as usize >= order) || e.suffix.len() > m {
                verdict.flag(Some(i), "suffix outside the search tree".into());
                continue;
            }
            let reference = scratch_pd_indices(&e.suffix, problem);
            let tol = 1e-9 * reference.abs().max(1e-300);
            if (e.pd - reference).abs() > tol.max(1e-12) {
                verdict.flag(
                    Some(i),
                    format!("recorded pd {} differs from reference {reference}", e.pd),
                );
            }
        }
    }

    // conservation
    let mut fate: HashMap<&[u8], Vec<usize>> = HashMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        if e.kind != EventKind::RadiusUpdate {
            fate.entry(e.suffix.as_slice()).or_default().push(i);
        }
    }
    let mut expected: HashSet<Vec<u8>> = HashSet::new();
    for (i, e) in trace.events.iter().enumerate() {
        if e.kind != EventKind::Expand {
            continue;
        }
        let width = trace.group.max(1).min(m - e.suffix.len());
        let mut digits = vec![0u8; width];
        let count = order.pow(width as u32);
        for _ in 0..count {
            let mut child = e.suffix.clone();
            child.extend_from_slice(&digits);
            if !fate.contains_key(child.as_slice()) {
                verdict.flag(Some(i), format!("child {child:?} vanished without an event"));
            }
            if !expected.insert(child) {
                verdict.flag(Some(i), "node generated twice".into());
            }
            for d in digits.iter_mut().rev() {
                *d += 1;
                if (*d as usize) < order {
                    break;
                }
                *d = 0;
            }
        }
    }
    for (suffix, events) in &fate {
        let is_root = suffix.is_empty();
        if !is_root && !expected.contains(*suffix) {
            verdict.flag(Some(events[0]), format!("node {suffix:?} was never generated"));
        }
        let terminal = events.len();
        if terminal != 1 {
            verdict.flag(
                Some(events[1.min(terminal - 1)]),
                format!("node {suffix:?} has {terminal} fates"),
            );
        }
    }
    verdict.violations.sort_by_key(|v| v.event);
    verdict
}
