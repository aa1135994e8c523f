use super::node::{child_pd, make_child, make_uncached_child, SearchNode};
use crate::audit::{EventKind, TraceSink};
use crate::linalg::{batch_evaluate, CMatrix, PreprocessedProblem};
use crate::parallel::SharedRadius;

/// How successor partial distances are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    /// Parent distance plus the new terms, from the residual cache.
    #[default]
    Incremental,
    /// All successors of a node at once, as column norms of `Y* − R'V`.
    Batch,
}

/// Branch-and-prune engine shared by every tree decoder.
///
/// A searcher owns its counters, its best leaf and its trace buffer; the
/// radius lives outside so several searchers can share it.
pub(crate) struct Searcher<'a> {
    problem: &'a PreprocessedProblem,
    group: usize,
    evaluation: Evaluation,
    pub(crate) visited: u64,
    pub(crate) pd_calcs: u64,
    pub(crate) best: Option<(f64, Vec<u8>)>,
    pub(crate) trace: TraceSink,
    digits: Vec<u8>,
}

impl<'a> Searcher<'a> {
    pub(crate) fn new(
        problem: &'a PreprocessedProblem,
        group: usize,
        evaluation: Evaluation,
        trace: TraceSink,
    ) -> Self {
        Searcher {
            problem,
            group: group.max(1),
            evaluation,
            visited: 0,
            pd_calcs: 0,
            best: None,
            trace,
            digits: Vec::with_capacity(group.max(1)),
        }
    }

    /// Handles a node taken from a pool: prunes it against the current
    /// radius or branches on it, appending surviving inner children to `out`
    /// in generation order. Returns whether the node was expanded.
    pub(crate) fn process(
        &mut self,
        node: SearchNode,
        radius: &SharedRadius,
        out: &mut Vec<SearchNode>,
    ) -> bool {
        let r = radius.get();
        if node.pd() >= r {
            self.prune(&node, r);
            return false;
        }
        self.expand(&node, r, radius, out);
        true
    }

    pub(crate) fn prune(&mut self, node: &SearchNode, r: f64) {
        if self.trace.is_on() {
            self.trace.record(EventKind::Prune, node.fixed_symbols().to_vec(), node.pd(), r);
        }
    }

    fn expand(&mut self, node: &SearchNode, r: f64, radius: &SharedRadius, out: &mut Vec<SearchNode>) {
        let problem = self.problem;
        let m = problem.m();
        let q = problem.constellation().len();
        let level = node.level();
        let width = self.group.min(m - level);
        debug_assert!(width > 0, "expanding a complete vector");

        self.visited += 1;
        self.pd_calcs += q.pow(width as u32) as u64;
        if self.trace.is_on() {
            self.trace.record(EventKind::Expand, node.fixed_symbols().to_vec(), node.pd(), r);
        }

        let leaf = level + width == m;
        let mut digits = std::mem::take(&mut self.digits);
        digits.clear();
        digits.resize(width, 0);

        match self.evaluation {
            Evaluation::Incremental if width == 1 => {
                let row = m - 1 - level;
                let z = problem.y_bar()[row] - node.residual_cache()[row];
                for (a, p) in problem.diag_points(row).iter().enumerate() {
                    let pd = node.pd() + (z - p).norm_sqr();
                    digits[0] = a as u8;
                    self.settle(node, &digits, pd, leaf, radius, out);
                }
            }
            Evaluation::Incremental => {
                for _ in 0..q.pow(width as u32) {
                    let pd = child_pd(problem, node, &digits);
                    self.settle(node, &digits, pd, leaf, radius, out);
                    advance(&mut digits, q);
                }
            }
            Evaluation::Batch => {
                let distances = batch_successors(problem, node, width);
                for pd in distances {
                    self.settle(node, &digits, pd, leaf, radius, out);
                    advance(&mut digits, q);
                }
            }
        }
        self.digits = digits;
    }

    fn settle(
        &mut self,
        parent: &SearchNode,
        digits: &[u8],
        pd: f64,
        leaf: bool,
        radius: &SharedRadius,
        out: &mut Vec<SearchNode>,
    ) {
        debug_assert!(pd >= parent.pd(), "partial distance decreased along a path");
        let r = radius.get();
        if pd >= r {
            if self.trace.is_on() {
                self.trace.record(EventKind::Prune, suffix(parent, digits), pd, r);
            }
        } else if leaf {
            self.leaf(suffix(parent, digits), pd, r, radius);
        } else if self.evaluation == Evaluation::Batch {
            out.push(make_uncached_child(parent, digits, pd));
        } else {
            out.push(make_child(self.problem, parent, digits, pd));
        }
    }

    /// A complete vector found inside the sphere: publish it and keep it if
    /// it beats this searcher's incumbent.
    pub(crate) fn leaf(&mut self, symbols: Vec<u8>, pd: f64, r: f64, radius: &SharedRadius) {
        let prev = radius.offer(pd);
        if self.trace.is_on() {
            self.trace.record(EventKind::Leaf, symbols.clone(), pd, r);
            if prev > pd {
                self.trace.record(EventKind::RadiusUpdate, symbols.clone(), pd, prev);
            }
        }
        if self.best.as_ref().is_none_or(|(d, _)| pd < *d) {
            self.best = Some((pd, symbols));
        }
    }

    pub(crate) fn problem(&self) -> &'a PreprocessedProblem {
        self.problem
    }
}

fn suffix(parent: &SearchNode, digits: &[u8]) -> Vec<u8> {
    let mut s = Vec::with_capacity(parent.level() + digits.len());
    s.extend_from_slice(parent.fixed_symbols());
    s.extend_from_slice(digits);
    s
}

/// Lexicographic odometer step, last digit fastest.
#[inline]
fn advance(digits: &mut [u8], q: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if (*d as usize) < q {
            return;
        }
        *d = 0;
    }
}

/// Distances of all successors of `node` over `width` new levels, computed as
/// one matrix product against the trailing block of R.
fn batch_successors(problem: &PreprocessedProblem, node: &SearchNode, width: usize) -> Vec<f64> {
    let m = problem.m();
    let q = problem.constellation().len();
    let points = problem.constellation().points();
    let level = node.level();
    let depth = level + width;
    let first = m - depth;
    let count = q.pow(width as u32);

    // Row i of V holds antenna `first + i`; fixing position k is row depth-1-k.
    let mut v = CMatrix::zeros(depth, count);
    for (k, &s) in node.fixed_symbols().iter().enumerate() {
        let row = depth - 1 - k;
        for col in 0..count {
            v[(row, col)] = points[s as usize];
        }
    }
    let mut digits = vec![0u8; width];
    for col in 0..count {
        for (t, &d) in digits.iter().enumerate() {
            v[(depth - 1 - level - t, col)] = points[d as usize];
        }
        advance(&mut digits, q);
    }
    let r_sub = problem.r().block(first, first, depth, depth);
    batch_evaluate(&r_sub, &problem.y_bar()[first..], &v)
        .expect("successor block shapes are consistent by construction")
}
