//! Queueing predictions for the no-purging regime.
//!
//! With every dispatched task kept alive the iteration time is the maximum
//! of the workers' assignment times, so `F_itr(t) = prod_p F_p(t)` over the
//! workers that hold tasks. Its first two moments come from integrating
//! the survival function; jobs are `I` iid iterations and the master queue
//! is G/G/1 (Kingman) or M/G/1 (Pollaczek-Khinchin).

use crate::error::{Error, Result};
use crate::loadsplit::LoadSplit;
use crate::quadrature;
use crate::stochastic::{
    assignment_moments, scale_moments, ArrivalModel, AssignmentLaw, WorkerProfile,
};

/// Survival mass left beyond the integration horizon.
const TAIL_MASS: f64 = 1e-12;
const REL_TOL: f64 = 1e-8;
const MAX_SEGMENTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMoments {
    pub mean: f64,
    pub second_moment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceMoments {
    pub mean: f64,
    pub second_moment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueStats {
    pub service: ServiceMoments,
    pub rho: f64,
    pub stable: bool,
    pub ca2: f64,
    pub cs2: f64,
    /// `None` when unstable.
    pub delay_kingman: Option<f64>,
    /// Only for Poisson arrivals, and only when stable.
    pub delay_pk: Option<f64>,
}

fn laws(split: &LoadSplit, workers: &[WorkerProfile], complexity: f64) -> Result<Vec<AssignmentLaw>> {
    if split.workers() != workers.len() {
        return Err(Error::DimensionMismatch {
            expected: workers.len(),
            actual: split.workers(),
        });
    }
    Ok(split
        .assigned()
        .map(|p| {
            let w = &workers[p];
            AssignmentLaw::new(&w.task_distribution(complexity), w.comm_delay(), split.kappa_int[p])
        })
        .collect())
}

/// `P[T_itr <= t]` for the integer split.
pub fn iteration_cdf(
    split: &LoadSplit,
    workers: &[WorkerProfile],
    complexity: f64,
    t: f64,
) -> Result<f64> {
    if t < 0.0 {
        return Ok(0.0);
    }
    let mut prod = 1.0;
    for law in laws(split, workers, complexity)? {
        prod *= law.cdf(t)?;
        if prod == 0.0 {
            break;
        }
    }
    Ok(prod.clamp(0.0, 1.0))
}

/// `1 - prod_p (1 - S_p(t))`, accurate when the product is close to one.
fn joint_survival(laws: &[AssignmentLaw], t: f64) -> Result<f64> {
    let mut log_cdf = 0.0;
    for law in laws {
        let s = law.survival(t)?;
        if s >= 1.0 {
            return Ok(1.0);
        }
        log_cdf += (-s).ln_1p();
    }
    Ok((-log_cdf.exp_m1()).clamp(0.0, 1.0))
}

/// `E[T_itr]` and `E[T_itr^2]` by adaptive quadrature of the survival function.
pub fn iteration_moments(
    split: &LoadSplit,
    workers: &[WorkerProfile],
    complexity: f64,
) -> Result<IterationMoments> {
    let laws = laws(split, workers, complexity)?;
    if laws.is_empty() {
        return Err(Error::InvalidArgument(
            "split assigns no tasks; iteration time is undefined".into(),
        ));
    }
    // Below every worker's support start the survival is exactly one.
    let start = laws.iter().map(|l| l.support_start()).fold(0.0, f64::max);

    let mut horizon = laws
        .iter()
        .map(|l| l.mean() + 12.0 * l.std_dev())
        .fold(start, f64::max);
    let mut doublings = 0;
    while joint_survival(&laws, horizon)? > TAIL_MASS {
        horizon = start + 2.0 * (horizon - start).max(f64::MIN_POSITIVE);
        doublings += 1;
        if doublings > 200 || !horizon.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "iteration survival does not reach {TAIL_MASS} (horizon {horizon})"
            )));
        }
    }

    let survival = |t: f64| joint_survival(&laws, t).unwrap_or(f64::NAN);
    let first = quadrature::integrate(survival, start, horizon, &[], REL_TOL, 0.0, MAX_SEGMENTS)?;
    let second = quadrature::integrate(
        |t| 2.0 * t * survival(t),
        start,
        horizon,
        &[],
        REL_TOL,
        0.0,
        MAX_SEGMENTS,
    )?;
    if !first.value.is_finite() || !second.value.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "non-finite iteration moments on [{start}, {horizon}]: {} / {}",
            first.value, second.value
        )));
    }
    Ok(IterationMoments {
        mean: start + first.value,
        second_moment: start * start + second.value,
    })
}

/// A job is `iterations` iid iterations.
pub fn service_moments(itr: &IterationMoments, iterations: usize) -> Result<ServiceMoments> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations per job must be >= 1".into()));
    }
    let n = iterations as f64;
    Ok(ServiceMoments {
        mean: n * itr.mean,
        second_moment: n * itr.second_moment + n * (n - 1.0) * itr.mean * itr.mean,
    })
}

/// Rate stability: `E[T_s] < E[T_a]`.
pub fn check_stability(service_mean: f64, arrival: &ArrivalModel) -> bool {
    service_mean < arrival.mean()
}

/// Kingman's G/G/1 approximation of the mean sojourn time.
pub fn delay_kingman(service_mean: f64, service_second: f64, arrival: &ArrivalModel) -> Result<f64> {
    let rho = service_mean / arrival.mean();
    if !(rho < 1.0) {
        return Err(Error::UnstableSystem { rho });
    }
    let cs2 = (service_second - service_mean * service_mean) / (service_mean * service_mean);
    let ca2 = arrival.scv();
    Ok(service_mean * (1.0 + rho / (1.0 - rho) * (ca2 + cs2) / 2.0))
}

/// Pollaczek-Khinchin mean sojourn time for Poisson arrivals of rate `lambda`.
pub fn delay_pk(service_mean: f64, service_second: f64, lambda: f64) -> Result<f64> {
    let rho = lambda * service_mean;
    if !(rho < 1.0) {
        return Err(Error::UnstableSystem { rho });
    }
    Ok(service_mean + lambda * service_second / (2.0 * (1.0 - rho)))
}

pub fn queue_stats(
    itr: &IterationMoments,
    iterations: usize,
    arrival: &ArrivalModel,
) -> Result<QueueStats> {
    let service = service_moments(itr, iterations)?;
    let rho = service.mean / arrival.mean();
    let stable = check_stability(service.mean, arrival);
    let cs2 = (service.second_moment - service.mean * service.mean) / (service.mean * service.mean);
    let delay_kingman = if stable {
        Some(delay_kingman(service.mean, service.second_moment, arrival)?)
    } else {
        None
    };
    let delay_pk = match arrival {
        ArrivalModel::Poisson { rate } if stable => {
            Some(delay_pk(service.mean, service.second_moment, *rate)?)
        }
        _ => None,
    };
    Ok(QueueStats {
        service,
        rho,
        stable,
        ca2: arrival.scv(),
        cs2: cs2.max(0.0),
        delay_kingman,
        delay_pk,
    })
}

/// Delay of a single pooled worker with the summed task rate and the mean
/// communication delay: `I * (K / sum_p 1/E[T_p] + mean_p c_p)`.
pub fn lower_bound(
    workers: &[WorkerProfile],
    complexity: f64,
    critical_tasks: usize,
    iterations: usize,
) -> Result<f64> {
    if workers.is_empty() {
        return Err(Error::InvalidArgument("no workers".into()));
    }
    if critical_tasks == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let mut rate = 0.0;
    for w in workers {
        rate += 1.0 / scale_moments(w, complexity)?.mean;
    }
    let mean_comm = workers.iter().map(|w| w.comm_delay()).sum::<f64>() / workers.len() as f64;
    Ok(iterations as f64 * (critical_tasks as f64 / rate + mean_comm))
}

/// Moment scores `E[T_{p,k}] + gamma E[T_{p,k}^2]` for every worker.
pub fn scores(
    kappa: &[f64],
    workers: &[WorkerProfile],
    complexity: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if kappa.len() != workers.len() {
        return Err(Error::DimensionMismatch { expected: workers.len(), actual: kappa.len() });
    }
    workers
        .iter()
        .zip(kappa)
        .map(|(w, &k)| {
            let m = scale_moments(w, complexity)?;
            let (e1, e2) = assignment_moments(&m, w.comm_delay(), k)?;
            Ok(e1 + gamma * e2)
        })
        .collect()
}

/// Population variance.
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Variance of the moment scores over all workers for arbitrary task counts.
pub fn mismatch_of(
    kappa: &[f64],
    workers: &[WorkerProfile],
    complexity: f64,
    gamma: f64,
) -> Result<f64> {
    Ok(population_variance(&scores(kappa, workers, complexity, gamma)?))
}

/// Mismatch of the integer split; idle workers score zero.
pub fn mismatch(
    split: &LoadSplit,
    workers: &[WorkerProfile],
    complexity: f64,
    gamma: f64,
) -> Result<f64> {
    let kappa: Vec<f64> = split.kappa_int.iter().map(|&k| k as f64).collect();
    mismatch_of(&kappa, workers, complexity, gamma)
}
