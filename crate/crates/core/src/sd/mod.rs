//! Serial sphere decoding and the exhaustive maximum-likelihood oracle.
//!
//! The decoder keeps a pool of partially fixed symbol vectors. Each round
//! takes one node from the pool, discards it if its partial distance already
//! reaches the squared radius, and otherwise branches on the next `J`
//! antennas. Children inside the sphere go back into the pool; complete
//! vectors inside the sphere shrink the radius to their metric.
//!
//! ```
//! use rand::SeedableRng;
//! use spheredec::{generate_instance, preprocess, sd_decode, Constellation};
//! use spheredec::{ConstellationKind, RadiusPolicy, Strategy};
//!
//! let c = Constellation::new(ConstellationKind::Qpsk);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
//! let inst = generate_instance(4, 4, &c, f64::INFINITY, &mut rng).unwrap();
//! let problem = preprocess(&inst, RadiusPolicy::Infinite).unwrap();
//! let report = sd_decode(&problem, Strategy::BestFs, 1);
//! assert_eq!(report.decoded.as_deref(), Some(&inst.s_true[..]));
//! ```

mod ml;
mod node;
mod pool;
mod search;

use std::time::Instant;

pub use ml::{ml_bruteforce, ml_bruteforce_with_cap, DEFAULT_ML_CAP};
pub use node::{branch, evaluate_incremental, SearchNode};
pub use pool::{Strategy, WorkPool};
pub use search::Evaluation;

pub(crate) use node::{fixing_order_to_vector, make_child};
pub(crate) use search::Searcher;

use crate::audit::{AuditTrace, TraceSink};
use crate::linalg::PreprocessedProblem;
use crate::parallel::SharedRadius;

/// Outcome of one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Symbol indices in antenna order; `None` when no complete vector was
    /// found inside the sphere (an erasure).
    pub decoded: Option<Vec<usize>>,
    /// Metric of `decoded`: `‖ȳ − R s‖²` for tree decoders, `‖y − H s‖²` for
    /// linear ones; `+∞` on erasure.
    pub dist: f64,
    /// Nodes on which branching was performed, summed over threads.
    pub visited_nodes: u64,
    /// Successor partial distances evaluated, summed over threads.
    pub pd_calcs: u64,
    pub elapsed_s: f64,
    pub final_radius_sq: f64,
    /// Threads that took part in the search (workers, for master/worker
    /// decoders).
    pub threads: usize,
    pub max_thread_visited: u64,
    pub max_thread_pd_calcs: u64,
}

impl DetectionReport {
    pub fn is_erasure(&self) -> bool {
        self.decoded.is_none()
    }

    pub fn mean_thread_visited(&self) -> f64 {
        self.visited_nodes as f64 / self.threads.max(1) as f64
    }

    pub fn mean_thread_pd_calcs(&self) -> f64 {
        self.pd_calcs as f64 / self.threads.max(1) as f64
    }

    pub(crate) fn from_best(
        best: Option<(f64, Vec<u8>)>,
        visited: u64,
        pd_calcs: u64,
        started: Instant,
        final_radius_sq: f64,
    ) -> Self {
        let (decoded, dist) = match best {
            Some((d, symbols)) => (Some(fixing_order_to_vector(&symbols)), d),
            None => (None, f64::INFINITY),
        };
        DetectionReport {
            decoded,
            dist,
            visited_nodes: visited,
            pd_calcs,
            elapsed_s: started.elapsed().as_secs_f64(),
            final_radius_sq,
            threads: 1,
            max_thread_visited: visited,
            max_thread_pd_calcs: pd_calcs,
        }
    }
}

/// Serial decoder settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdConfig {
    pub strategy: Strategy,
    /// Symbols fixed per branching (`J`).
    pub group: usize,
    pub evaluation: Evaluation,
}

impl Default for SdConfig {
    fn default() -> Self {
        SdConfig {
            strategy: Strategy::BestFs,
            group: 1,
            evaluation: Evaluation::Incremental,
        }
    }
}

/// Sphere decoding with the given pool discipline and group size.
pub fn sd_decode(problem: &PreprocessedProblem, strategy: Strategy, group: usize) -> DetectionReport {
    sd_decode_with(
        problem,
        &SdConfig {
            strategy,
            group,
            ..SdConfig::default()
        },
    )
}

pub fn sd_decode_with(problem: &PreprocessedProblem, config: &SdConfig) -> DetectionReport {
    run_serial(problem, config, false).0
}

/// As [`sd_decode_with`], also returning the full search trace.
pub fn sd_decode_traced(problem: &PreprocessedProblem, config: &SdConfig) -> (DetectionReport, AuditTrace) {
    let (report, sink) = run_serial(problem, config, true);
    let mut trace = AuditTrace::new(
        problem.m(),
        problem.constellation().len(),
        config.group.max(1),
        problem.radius_sq(),
    );
    trace.absorb(sink);
    (report, trace)
}

pub(crate) fn run_serial(problem: &PreprocessedProblem, config: &SdConfig, traced: bool) -> (DetectionReport, TraceSink) {
    let started = Instant::now();
    let radius = SharedRadius::new(problem.radius_sq());
    let mut searcher = Searcher::new(problem, config.group, config.evaluation, TraceSink::new(0, traced));
    let mut pool = WorkPool::new(config.strategy);
    pool.push(SearchNode::root(problem.m()));
    let mut children = Vec::new();
    while let Some(node) = pool.pop() {
        searcher.process(node, &radius, &mut children);
        pool.push_children(&mut children);
    }
    let report = DetectionReport::from_best(
        searcher.best.take(),
        searcher.visited,
        searcher.pd_calcs,
        started,
        radius.get(),
    );
    (report, searcher.trace)
}
