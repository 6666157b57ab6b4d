//! Optimal load split across heterogeneous workers.
//!
//! Each worker's assignment time is summarized by its moment score
//! `E[T_{p,k}] + gamma * E[T_{p,k}^2] = a_p 1{k>0} + b_p k + gamma m_p^2 k^2`.
//! The optimal relaxed split gives every active worker the same score
//! `theta`; `theta` is found by bisection on the (strictly increasing)
//! total task count, and the relaxed split is then rounded with the
//! largest-remainder rule so that it sums to `N = round(K * Omega)`.

use crate::error::{Error, Result};
use crate::stochastic::{scale_moments, ScaledTaskMoments, WorkerProfile};

/// Default weight of the second moment in the score.
pub const DEFAULT_GAMMA: f64 = 1.0;

const BISECTION_REL_WIDTH: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 400;
const MAX_DOUBLINGS: usize = 2000;

/// `round(K * Omega)`, halves rounded up.
pub fn total_tasks(k: usize, omega: f64) -> usize {
    (k as f64 * omega + 0.5).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub gamma: f64,
    pub total_tasks: usize,
    pub tolerance: f64,
}

impl SplitConfig {
    pub fn new(gamma: f64, total_tasks: usize, tolerance: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
        }
        if total_tasks == 0 {
            return Err(Error::InvalidArgument("total task count must be >= 1".into()));
        }
        if !(tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be > 0, got {tolerance}"
            )));
        }
        Ok(Self { gamma, total_tasks, tolerance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerCoefficients {
    pub worker: usize,
    /// `c_p + gamma c_p^2`
    pub a: f64,
    /// `m_p + 2 gamma c_p m_p + gamma sigma_p^2`
    pub b: f64,
    /// `m_p = E[T_p]`
    pub m: f64,
}

impl WorkerCoefficients {
    /// Moment score of holding `kappa` tasks.
    pub fn score(&self, kappa: f64, gamma: f64) -> f64 {
        if kappa > 0.0 {
            self.a + self.b * kappa + gamma * self.m * self.m * kappa * kappa
        } else {
            0.0
        }
    }
}

pub fn worker_coefficients(
    worker: usize,
    moments: &ScaledTaskMoments,
    comm_delay: f64,
    gamma: f64,
) -> WorkerCoefficients {
    let m = moments.mean;
    WorkerCoefficients {
        worker,
        a: comm_delay + gamma * comm_delay * comm_delay,
        b: m + 2.0 * gamma * comm_delay * m + gamma * moments.variance,
        m,
    }
}

/// Relaxed task count giving the worker score `theta`, zero if `theta <= a`.
pub fn kappa_of_theta(coeff: &WorkerCoefficients, theta: f64, gamma: f64) -> Result<f64> {
    if !(coeff.m > 0.0) {
        return Err(Error::DegenerateWorker { worker: coeff.worker });
    }
    let excess = (theta - coeff.a).max(0.0);
    if excess == 0.0 {
        return Ok(0.0);
    }
    // Positive root of gamma m^2 k^2 + b k - excess = 0, written without
    // the `-1 + sqrt(1 + x)` cancellation.
    let disc = coeff.b * coeff.b + 4.0 * gamma * coeff.m * coeff.m * excess;
    Ok(2.0 * excess / (coeff.b + disc.sqrt()))
}

fn total_kappa(coeffs: &[WorkerCoefficients], theta: f64, gamma: f64) -> Result<f64> {
    coeffs.iter().map(|c| kappa_of_theta(c, theta, gamma)).sum()
}

/// Score `theta` at which the relaxed task counts sum to `total_tasks`.
pub fn solve_theta(
    coeffs: &[WorkerCoefficients],
    total_tasks: usize,
    gamma: f64,
    tolerance: f64,
) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::InvalidArgument("no workers".into()));
    }
    if total_tasks == 0 {
        return Err(Error::InvalidArgument("total task count must be >= 1".into()));
    }
    if let Some(bad) = coeffs.iter().find(|c| !(c.m > 0.0)) {
        return Err(Error::DegenerateWorker { worker: bad.worker });
    }
    let n = total_tasks as f64;
    let mut lo = 0.0_f64;
    let mut hi = coeffs
        .iter()
        .map(|c| c.a + c.b + gamma * c.m * c.m)
        .fold(0.0, f64::max);
    let mut doublings = 0;
    while total_kappa(coeffs, hi, gamma)? < n {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(Error::NumericalFailure("could not bracket theta".into()));
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_kappa(coeffs, mid, gamma)? < n {
            lo = mid;
        } else {
            hi = mid;
        }
        let narrow = hi - lo <= BISECTION_REL_WIDTH * hi;
        if narrow && (total_kappa(coeffs, hi, gamma)? - n).abs() <= tolerance * n {
            break;
        }
    }
    Ok(hi)
}

/// Largest-remainder rounding: floor everything, then hand the missing
/// units out in decreasing order of fractional part (lower index first on
/// ties).
pub fn quantize(kappa_real: &[f64], total_tasks: usize) -> Vec<usize> {
    let mut out: Vec<usize> = kappa_real.iter().map(|k| k.max(0.0).floor() as usize).collect();
    if out.is_empty() {
        return out;
    }
    let mut assigned: usize = out.iter().sum();
    // Rounding noise can push the floor sum above the target.
    while assigned > total_tasks {
        let (idx, _) = kappa_real
            .iter()
            .enumerate()
            .filter(|(i, _)| out[*i] > 0)
            .map(|(i, k)| (i, *k - out[i] as f64))
            .min_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .expect("some worker holds a task");
        out[idx] -= 1;
        assigned -= 1;
    }
    let mut order: Vec<usize> = (0..kappa_real.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = kappa_real[i] - kappa_real[i].floor();
        let fj = kappa_real[j] - kappa_real[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    let mut remaining = total_tasks - assigned;
    while remaining > 0 {
        for &i in &order {
            if remaining == 0 {
                break;
            }
            out[i] += 1;
            remaining -= 1;
        }
    }
    out
}

/// Even split of `total_tasks` over `workers`, rounded like `quantize`.
pub fn uniform_split(workers: usize, total_tasks: usize) -> Result<Vec<usize>> {
    if workers == 0 {
        return Err(Error::InvalidArgument("no workers".into()));
    }
    let share = total_tasks as f64 / workers as f64;
    Ok(quantize(&vec![share; workers], total_tasks))
}

/// A task assignment for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSplit {
    pub kappa_real: Vec<f64>,
    pub kappa_int: Vec<usize>,
    /// Matched score; `None` for splits not produced by the optimizer.
    pub theta: Option<f64>,
    /// Workers with a positive relaxed task count (`a_p < theta`).
    pub active: Vec<usize>,
}

impl LoadSplit {
    /// Wraps an explicit integer assignment.
    pub fn explicit(kappa_int: Vec<usize>) -> Self {
        let active = (0..kappa_int.len()).filter(|&p| kappa_int[p] > 0).collect();
        Self {
            kappa_real: kappa_int.iter().map(|&k| k as f64).collect(),
            kappa_int,
            theta: None,
            active,
        }
    }

    pub fn uniform(workers: usize, total_tasks: usize) -> Result<Self> {
        let kappa_int = uniform_split(workers, total_tasks)?;
        let share = total_tasks as f64 / workers as f64;
        Ok(Self {
            kappa_real: vec![share; workers],
            active: (0..workers).filter(|&p| kappa_int[p] > 0).collect(),
            kappa_int,
            theta: None,
        })
    }

    pub fn total(&self) -> usize {
        self.kappa_int.iter().sum()
    }

    pub fn workers(&self) -> usize {
        self.kappa_int.len()
    }

    /// Workers holding at least one task after rounding.
    pub fn assigned(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.kappa_int.len()).filter(|&p| self.kappa_int[p] > 0)
    }
}

/// Per-worker coefficients for tasks of complexity `complexity`.
pub fn coefficients_for(
    workers: &[WorkerProfile],
    complexity: f64,
    gamma: f64,
) -> Result<Vec<WorkerCoefficients>> {
    workers
        .iter()
        .enumerate()
        .map(|(p, w)| {
            let m = scale_moments(w, complexity)?;
            Ok(worker_coefficients(p, &m, w.comm_delay(), gamma))
        })
        .collect()
}

/// Optimal split of `config.total_tasks` tasks of complexity `complexity`.
pub fn optimal_split(
    workers: &[WorkerProfile],
    complexity: f64,
    config: &SplitConfig,
) -> Result<LoadSplit> {
    let coeffs = coefficients_for(workers, complexity, config.gamma)?;
    let theta = solve_theta(&coeffs, config.total_tasks, config.gamma, config.tolerance)?;
    let kappa_real = coeffs
        .iter()
        .map(|c| kappa_of_theta(c, theta, config.gamma))
        .collect::<Result<Vec<_>>>()?;
    let active = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.a < theta)
        .map(|(p, _)| p)
        .collect();
    let kappa_int = quantize(&kappa_real, config.total_tasks);
    Ok(LoadSplit { kappa_real, kappa_int, theta: Some(theta), active })
}
