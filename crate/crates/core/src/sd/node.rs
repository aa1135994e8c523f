use num_complex::Complex64;
use smallvec::SmallVec;

use crate::linalg::PreprocessedProblem;

/// A partially decoded vector: the symbols fixed so far plus its partial distance.
///
/// Symbols are fixed from the last antenna down, so `fixed_symbols()[k]` is
/// the constellation index chosen for antenna `M − 1 − k`. The residual cache
/// holds, for every row `i < M − level`, the interference `Σ r_{i,j} s_j`
/// contributed by the fixed antennas; extending the node only adds the terms
/// of the newly fixed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    symbols: Symbols,
    pd: f64,
    cache: Cache,
}

// Deep nodes dominate every pool, and they have few free rows left.
type Symbols = SmallVec<[u8; 16]>;
type Cache = SmallVec<[Complex64; 2]>;

impl SearchNode {
    /// The root of an `m`-level tree: nothing fixed, zero distance.
    pub fn root(m: usize) -> Self {
        SearchNode {
            symbols: Symbols::new(),
            pd: 0.0,
            cache: smallvec::smallvec![Complex64::new(0.0, 0.0); m],
        }
    }

    /// Number of fixed symbols.
    pub fn level(&self) -> usize {
        self.symbols.len()
    }

    /// Partial distance `E(P)`.
    pub fn pd(&self) -> f64 {
        self.pd
    }

    pub fn fixed_symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// Interference terms for the rows that are still free. Empty for nodes
    /// built by the batched evaluation path, which recomputes from scratch.
    pub fn residual_cache(&self) -> &[Complex64] {
        &self.cache
    }

    pub fn is_root(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Symbol indices in antenna order; `None` unless every level is fixed.
    pub fn to_vector(&self, m: usize) -> Option<Vec<usize>> {
        (self.symbols.len() == m).then(|| fixing_order_to_vector(&self.symbols))
    }

    #[cfg(test)]
    pub(crate) fn from_raw(symbols: Vec<u8>, pd: f64, cache: Vec<Complex64>) -> Self {
        SearchNode {
            symbols: Symbols::from_vec(symbols),
            pd,
            cache: Cache::from_vec(cache),
        }
    }
}

pub(crate) fn fixing_order_to_vector(symbols: &[u8]) -> Vec<usize> {
    symbols.iter().rev().map(|&s| s as usize).collect()
}

/// Partial distance of a child obtained by fixing `digits` below `parent`.
///
/// Uses only the parent's cache: the cost is `O(J²)` for `J = digits.len()`.
#[inline]
pub(crate) fn child_pd(problem: &PreprocessedProblem, parent: &SearchNode, digits: &[u8]) -> f64 {
    let m = problem.m();
    let r = problem.r();
    let points = problem.constellation().points();
    let base_row = m - 1 - parent.level();
    let mut pd = parent.pd;
    for (t, &a) in digits.iter().enumerate() {
        let row = base_row - t;
        let mut z = problem.y_bar()[row] - parent.cache[row];
        for (u, &d) in digits[..t].iter().enumerate() {
            z -= r[(row, base_row - u)] * points[d as usize];
        }
        pd += (z - problem.diag_points(row)[a as usize]).norm_sqr();
    }
    pd
}

/// Materializes a child: appends `digits` and advances the residual cache for
/// the rows that remain free. `O(J · (M − level))`.
pub(crate) fn make_child(
    problem: &PreprocessedProblem,
    parent: &SearchNode,
    digits: &[u8],
    pd: f64,
) -> SearchNode {
    let m = problem.m();
    let r = problem.r();
    let points = problem.constellation().points();
    let level = parent.level();
    let new_level = level + digits.len();
    let base_row = m - 1 - level;

    let mut symbols = Symbols::from_slice(&parent.symbols);
    let free_rows = m - new_level;
    let mut cache = Cache::from_elem(Complex64::new(0.0, 0.0), free_rows);
    match *digits {
        [d] => {
            symbols.push(d);
            let p = points[d as usize];
            for (row, (c, &prev)) in cache.iter_mut().zip(&parent.cache[..free_rows]).enumerate() {
                *c = prev + r[(row, base_row)] * p;
            }
        }
        _ => {
            symbols.extend_from_slice(digits);
            for (row, (c, &prev)) in cache.iter_mut().zip(&parent.cache[..free_rows]).enumerate() {
                let mut acc = prev;
                for (u, &d) in digits.iter().enumerate() {
                    acc += r[(row, base_row - u)] * points[d as usize];
                }
                *c = acc;
            }
        }
    }
    SearchNode { symbols, pd, cache }
}

/// Child without a residual cache, for the batched evaluation path.
pub(crate) fn make_uncached_child(parent: &SearchNode, digits: &[u8], pd: f64) -> SearchNode {
    let mut symbols = Symbols::from_slice(&parent.symbols);
    symbols.insert_from_slice(symbols.len(), digits);
    SearchNode {
        symbols,
        pd,
        cache: Cache::new(),
    }
}

/// Extends `parent` by `new_symbols` (constellation indices for the next
/// levels, in fixing order), returning the child with its partial distance
/// `E(P) + Σ g_k` over the new levels and its advanced residual cache.
///
/// # Panics
///
/// If the parent has no residual cache, a symbol is out of range, or the
/// extension runs past the last level.
pub fn evaluate_incremental(
    parent: &SearchNode,
    new_symbols: &[usize],
    problem: &PreprocessedProblem,
) -> SearchNode {
    let m = problem.m();
    assert!(
        parent.level() + new_symbols.len() <= m,
        "extension of {} symbols overruns a tree of depth {m}",
        new_symbols.len()
    );
    assert_eq!(parent.cache.len(), m - parent.level(), "parent has no residual cache");
    let q = problem.constellation().len();
    let digits: Vec<u8> = new_symbols
        .iter()
        .map(|&s| {
            assert!(s < q, "symbol index {s} out of range");
            s as u8
        })
        .collect();
    let pd = child_pd(problem, parent, &digits);
    make_child(problem, parent, &digits, pd)
}

/// All `|Ω|^J'` children of `node`, `J' = min(J, M − level)`, in
/// lexicographic order of the appended index tuple.
pub fn branch(node: &SearchNode, problem: &PreprocessedProblem, group: usize) -> Vec<SearchNode> {
    let m = problem.m();
    let width = group.max(1).min(m - node.level());
    if width == 0 {
        return Vec::new();
    }
    let q = problem.constellation().len();
    let count = q.pow(width as u32);
    let mut digits = vec![0u8; width];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let pd = child_pd(problem, node, &digits);
        out.push(make_child(problem, node, &digits, pd));
        // odometer, last digit fastest
        for d in digits.iter_mut().rev() {
            *d += 1;
            if (*d as usize) < q {
                break;
            }
            *d = 0;
        }
    }
    out
}
