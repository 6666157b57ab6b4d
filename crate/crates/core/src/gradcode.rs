//! Gradient-coding algebra.
//!
//! Row `r` of the encoding matrix `B` (tasks x chunks) says which chunk
//! gradients task `r` combines and with what weights. The master can
//! rebuild `sum_j G_j` from any `K` finished tasks iff the all-ones vector
//! lies in the row span of every `K`-row submatrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::loadsplit::total_tasks;
use crate::stochastic::keyed_stream;

/// Rank / residual tolerance on unit-normalized rows.
pub const SPAN_TOLERANCE: f64 = 1e-9;
/// Default cap on the number of `K`-subsets `validate_code` will visit.
pub const DEFAULT_SUBSET_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCodeMatrix {
    b: DMatrix<f64>,
    k: usize,
}

impl GradientCodeMatrix {
    pub fn new(b: DMatrix<f64>, k: usize) -> Result<Self> {
        if b.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::InvalidArgument("empty encoding matrix".into()));
        }
        if k == 0 || k > b.nrows() {
            return Err(Error::InvalidArgument(format!(
                "decoding threshold K={k} must be in 1..={}",
                b.nrows()
            )));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        Ok(Self { b, k })
    }

    pub fn from_rows(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, actual: bad.len() });
        }
        let b = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(b, k)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tasks(&self) -> usize {
        self.b.nrows()
    }

    pub fn chunks(&self) -> usize {
        self.b.ncols()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.b
            .row_iter()
            .map(|r| r.iter().filter(|x| **x != 0.0).count())
            .collect()
    }

    /// Common number of nonzeros per row, if every row has the same count.
    pub fn d(&self) -> Option<usize> {
        let w = self.row_weights();
        w.iter().all(|x| *x == w[0]).then_some(w[0])
    }

    fn rows_of(&self, subset: &[usize]) -> Result<DMatrix<f64>> {
        let mut seen = vec![false; self.tasks()];
        for &r in subset {
            if r >= self.tasks() {
                return Err(Error::InvalidArgument(format!(
                    "row {r} out of range (matrix has {} rows)",
                    self.tasks()
                )));
            }
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidArgument(format!("row {r} repeated in subset")));
            }
        }
        Ok(DMatrix::from_fn(subset.len(), self.chunks(), |i, j| self.b[(subset[i], j)]))
    }
}

/// Dataset / workload description of a gradient-descent job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCodeParams {
    /// Samples in the dataset.
    pub n: f64,
    /// Chunks.
    pub m: f64,
    /// Chunks per task.
    pub d: f64,
    /// Operations per sample.
    pub alpha: f64,
}

/// `C ~ d * alpha * n / m`.
pub fn task_complexity(p: &GradientCodeParams) -> Result<f64> {
    if [p.n, p.m, p.d, p.alpha].iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("workload parameters must be > 0: {p:?}")));
    }
    Ok(p.d * p.alpha * p.n / p.m)
}

/// Row rank by Gaussian elimination with partial pivoting; rows are
/// normalized to unit length first.
fn elimination_rank(rows: &DMatrix<f64>) -> usize {
    let mut a = rows.clone();
    for mut r in a.row_iter_mut() {
        let n = r.norm();
        if n > 0.0 {
            r /= n;
        }
    }
    let (nr, nc) = a.shape();
    let mut rank = 0;
    for col in 0..nc {
        if rank == nr {
            break;
        }
        let (piv, val) = (rank..nr)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((rank, -1.0), |best, x| if x.1 > best.1 { x } else { best });
        if val <= SPAN_TOLERANCE {
            continue;
        }
        a.swap_rows(rank, piv);
        for i in 0..nr {
            if i != rank {
                let f = a[(i, col)] / a[(rank, col)];
                if f != 0.0 {
                    for j in col..nc {
                        a[(i, j)] -= f * a[(rank, j)];
                    }
                }
            }
        }
        rank += 1;
    }
    rank
}

/// `1^T` lies in the row span of `rows` iff appending it does not raise the rank.
pub fn rowspan_contains_ones(rows: &DMatrix<f64>) -> bool {
    let ones = DMatrix::from_element(1, rows.ncols(), 1.0 / (rows.ncols() as f64).sqrt());
    let mut augmented = rows.clone().insert_row(rows.nrows(), 0.0);
    augmented.row_mut(rows.nrows()).copy_from(&ones);
    elimination_rank(rows) == elimination_rank(&augmented)
}

/// Minimum-norm least-squares `lambda` for `rows^T lambda = 1` and the
/// residual norm relative to `|1| = sqrt(m)`.
pub fn least_squares_combination(rows: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let at = rows.transpose();
    let ones = DVector::from_element(rows.ncols(), 1.0);
    let svd = at.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let lambda = svd
        .solve(&ones, SPAN_TOLERANCE * max_sv.max(1.0))
        .map_err(|e| Error::DecodeFailure(e.to_string()))?;
    let residual = (&at * &lambda - &ones).norm() / (rows.ncols() as f64).sqrt();
    Ok((lambda, residual))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Lexicographic `k`-combinations of `0..n`.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeValidation {
    pub valid: bool,
    /// Lexicographically first undecodable subset (0-based row indices).
    pub failing_subset: Option<Vec<usize>>,
    pub subsets_checked: u128,
}

pub fn validate_code(code: &GradientCodeMatrix) -> Result<CodeValidation> {
    validate_code_with_cap(code, DEFAULT_SUBSET_CAP)
}

/// Checks every `K`-row subset.
pub fn validate_code_with_cap(code: &GradientCodeMatrix, cap: u128) -> Result<CodeValidation> {
    let n = code.tasks();
    let k = code.k();
    let subsets = binomial(n, k);
    if subsets > cap {
        return Err(Error::BudgetExceeded { subsets, cap });
    }
    let mut subset: Vec<usize> = (0..k).collect();
    let mut checked = 0;
    loop {
        checked += 1;
        if !rowspan_contains_ones(&code.rows_of(&subset)?) {
            return Ok(CodeValidation {
                valid: false,
                failing_subset: Some(subset),
                subsets_checked: checked,
            });
        }
        if !next_combination(&mut subset, n) {
            break;
        }
    }
    Ok(CodeValidation { valid: true, failing_subset: None, subsets_checked: checked })
}

/// Coefficients `lambda` with `sum_i lambda_i B[S_i, :] = 1^T`.
pub fn decode_coefficients(code: &GradientCodeMatrix, subset: &[usize]) -> Result<Vec<f64>> {
    if subset.len() != code.k() {
        return Err(Error::DimensionMismatch { expected: code.k(), actual: subset.len() });
    }
    let rows = code.rows_of(subset)?;
    let (lambda, residual) = least_squares_combination(&rows)?;
    if residual > SPAN_TOLERANCE {
        return Err(Error::DecodeFailure(format!(
            "all-ones vector not in the span of rows {subset:?} (residual {residual:e})"
        )));
    }
    Ok(lambda.iter().copied().collect())
}

/// Task results for every row: `result_r = sum_j B[r, j] G_j`.
pub fn encode_tasks(code: &GradientCodeMatrix, chunk_gradients: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if chunk_gradients.len() != code.chunks() {
        return Err(Error::DimensionMismatch {
            expected: code.chunks(),
            actual: chunk_gradients.len(),
        });
    }
    let dim = chunk_gradients[0].len();
    if let Some(g) = chunk_gradients.iter().find(|g| g.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: g.len() });
    }
    Ok((0..code.tasks())
        .map(|r| {
            let mut out = vec![0.0; dim];
            for (j, g) in chunk_gradients.iter().enumerate() {
                let w = code.matrix()[(r, j)];
                if w != 0.0 {
                    for (o, x) in out.iter_mut().zip(g) {
                        *o += w * x;
                    }
                }
            }
            out
        })
        .collect())
}

/// Rebuilds `sum_j G_j` from the results of the tasks in `subset`
/// (`task_results[i]` belongs to row `subset[i]`).
pub fn coded_aggregate(
    code: &GradientCodeMatrix,
    subset: &[usize],
    task_results: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if task_results.len() != subset.len() {
        return Err(Error::DimensionMismatch { expected: subset.len(), actual: task_results.len() });
    }
    let lambda = decode_coefficients(code, subset)?;
    let dim = task_results.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (l, res) in lambda.iter().zip(task_results) {
        if res.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: res.len() });
        }
        for (o, x) in out.iter_mut().zip(res) {
            *o += l * x;
        }
    }
    Ok(out)
}

/// Encoding matrix with `round(K * Omega)` rows, `m` columns and `d`
/// nonzeros per row.
///
/// When `d | m` and the number of chunk groups `m / d` divides the row
/// count, rows are grouped into identical unit-weight blocks (fractional
/// repetition): any `K` rows decode as long as `K > N - N d / m`.
/// Otherwise, when `N = m`, rows get a cyclic support with weights drawn
/// from the null space of a fixed pseudo-random `(d-1) x m` matrix whose
/// rows sum to zero, which decodes from any `N - d + 1` rows.
pub fn fractional_repetition_code(k: usize, omega: f64, m: usize, d: usize) -> Result<GradientCodeMatrix> {
    let n = total_tasks(k, omega);
    if n == 0 || m == 0 || d == 0 || d >= m {
        return Err(Error::Construction(format!(
            "need N >= 1 and 1 <= d < m (N={n}, m={m}, d={d})"
        )));
    }
    if (n * d) % m != 0 {
        return Err(Error::Construction(format!(
            "N * d = {} is not a multiple of m = {m}; chunks cannot be replicated evenly",
            n * d
        )));
    }
    let stragglers = n - k.min(n);
    // both layouts replicate each chunk n d / m times
    if stragglers >= n * d / m {
        return Err(Error::Construction(format!(
            "each chunk is held by {} tasks, too few to survive {stragglers} stragglers",
            n * d / m
        )));
    }
    if m % d == 0 && n % (m / d) == 0 {
        let groups = m / d;
        let per_group = n / groups;
        let b = DMatrix::from_fn(n, m, |r, j| if j / d == r / per_group { 1.0 } else { 0.0 });
        return GradientCodeMatrix::new(b, k.min(n));
    }
    if n == m {
        return cyclic_code(n, d, k.min(n));
    }
    Err(Error::Construction(format!(
        "no replication layout for N={n}, m={m}, d={d}: need d | m with (m/d) | N, or N = m"
    )))
}

fn cyclic_code(n: usize, d: usize, k: usize) -> Result<GradientCodeMatrix> {
    let s = d - 1;
    for attempt in 0..16u64 {
        let mut rng = keyed_stream(0x6772_6164, &[n as u64, d as u64, attempt]);
        // s x n matrix with zero row sums, so H 1 = 0
        let mut h = DMatrix::from_fn(s, n, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..s {
            let partial: f64 = (0..n - 1).map(|j| h[(i, j)]).sum();
            h[(i, n - 1)] = -partial;
        }
        let mut b = DMatrix::zeros(n, n);
        let mut ok = true;
        for r in 0..n {
            b[(r, r)] = 1.0;
            let others: Vec<usize> = (1..d).map(|j| (r + j) % n).collect();
            let sub = DMatrix::from_fn(s, s, |i, j| h[(i, others[j])]);
            let rhs = -h.column(r).clone_owned();
            match sub.lu().solve(&rhs) {
                Some(x) if x.iter().all(|v| v.abs() > SPAN_TOLERANCE && v.is_finite()) => {
                    for (j, &c) in others.iter().enumerate() {
                        b[(r, c)] = x[j];
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return GradientCodeMatrix::new(b, k);
        }
    }
    Err(Error::Construction(format!("cyclic layout for N={n}, d={d} kept degenerating")))
}
