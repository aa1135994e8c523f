use std::time::Instant;

use num_complex::Complex64;

use super::DetectionReport;
use crate::error::{Error, Result};
use crate::linalg::PreprocessedProblem;

/// Largest search space [`ml_bruteforce`] will enumerate.
pub const DEFAULT_ML_CAP: u64 = 1 << 24;

/// Exhaustive minimisation of `‖ȳ − R s‖²` over every vector in `Ω^M`.
///
/// Vectors are enumerated with `s_0` varying fastest, so among exactly tied
/// metrics the lexicographically smallest `(s_{M−1}, …, s_0)` is returned.
/// `pd_calcs` reports the number of vectors scored.
pub fn ml_bruteforce(problem: &PreprocessedProblem) -> Result<DetectionReport> {
    ml_bruteforce_with_cap(problem, DEFAULT_ML_CAP)
}

pub fn ml_bruteforce_with_cap(problem: &PreprocessedProblem, cap: u64) -> Result<DetectionReport> {
    let started = Instant::now();
    let m = problem.m();
    let q = problem.constellation().len();
    let leaves = (q as f64).powi(m as i32);
    if leaves > cap as f64 {
        return Err(Error::CapExceeded { leaves, cap });
    }
    let r = problem.r();
    let y = problem.y_bar();
    let pts = problem.constellation().points();

    // scaled[(i·m + j)·q + a] = r_ij p_a
    let scaled: Vec<Complex64> = (0..m * m)
        .flat_map(|ij| pts.iter().map(move |&p| r[(ij / m, ij % m)] * p))
        .collect();
    let term = |i: usize, j: usize, a: usize| scaled[(i * m + j) * q + a];

    // off[i]   = ȳ_i − Σ_{j>i} r_ij s_j
    // upper[i] = Σ_{row>i} |off[row] − r_row,row s_row|²
    let mut s = vec![0usize; m];
    let mut off = vec![Complex64::new(0.0, 0.0); m];
    let mut upper = vec![0.0; m];
    let refresh = |below: usize, s: &[usize], off: &mut [Complex64], upper: &mut [f64]| {
        for i in (0..below).rev() {
            let mut acc = y[i];
            for (j, &sj) in s.iter().enumerate().skip(i + 1) {
                acc -= term(i, j, sj);
            }
            off[i] = acc;
            upper[i] = if i + 1 == m {
                0.0
            } else {
                upper[i + 1] + (off[i + 1] - term(i + 1, i + 1, s[i + 1])).norm_sqr()
            };
        }
    };
    refresh(m, &s, &mut off, &mut upper);

    let scaled0 = &scaled[..q];
    let mut best = f64::INFINITY;
    let mut best_s = s.clone();
    let mut scored = 0u64;
    loop {
        let base = off[0];
        let u = upper[0];
        for (a, sp) in scaled0.iter().enumerate() {
            let d = u + (base - sp).norm_sqr();
            if d < best {
                best = d;
                best_s.copy_from_slice(&s);
                best_s[0] = a;
            }
        }
        scored += q as u64;

        let mut k = 1;
        loop {
            if k == m {
                return Ok(DetectionReport {
                    decoded: Some(best_s),
                    dist: best,
                    visited_nodes: 0,
                    pd_calcs: scored,
                    elapsed_s: started.elapsed().as_secs_f64(),
                    final_radius_sq: best,
                    threads: 1,
                    max_thread_visited: 0,
                    max_thread_pd_calcs: scored,
                });
            }
            s[k] += 1;
            if s[k] < q {
                break;
            }
            s[k] = 0;
            k += 1;
        }
        refresh(k, &s, &mut off, &mut upper);
    }
}
