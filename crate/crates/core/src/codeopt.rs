//! Brute-force choice of code parameters `{K, C, Omega}`.
//!
//! Every candidate is scored by the mismatch of its rounded optimal split;
//! the first candidate reaching the smallest mismatch wins.

use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::error::{Error, Result};
use crate::loadsplit::{optimal_split, total_tasks, LoadSplit, SplitConfig};
use crate::stochastic::WorkerProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    /// Critical tasks per iteration.
    pub k: usize,
    /// Operations per task.
    pub complexity: f64,
    /// Redundancy ratio.
    pub omega: f64,
    /// Fixed `K * C` product, when the candidate was derived from one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<f64>,
}

impl CodeParams {
    pub fn new(k: usize, complexity: f64, omega: f64) -> Result<Self> {
        let p = Self { k, complexity, omega, product: None };
        p.validate()?;
        Ok(p)
    }

    /// `C = Z / K`.
    pub fn with_product(k: usize, product: f64, omega: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        let p = Self { k, complexity: product / k as f64, omega, product: Some(product) };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        if !(self.complexity > 0.0) || !self.complexity.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "task complexity must be > 0, got {}",
                self.complexity
            )));
        }
        if !(self.omega >= 1.0) || !self.omega.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "redundancy ratio must be >= 1, got {}",
                self.omega
            )));
        }
        if let Some(z) = self.product {
            if (self.k as f64 * self.complexity - z).abs() > 1e-9 * z.abs() {
                return Err(Error::InvalidArgument(format!(
                    "K * C = {} does not match the fixed product {z}",
                    self.k as f64 * self.complexity
                )));
            }
        }
        Ok(())
    }

    /// `round(K * Omega)`
    pub fn total_tasks(&self) -> usize {
        total_tasks(self.k, self.omega)
    }
}

/// Finite description of the candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateSpec {
    Explicit { candidates: Vec<CodeParams> },
    FixedProduct { ks: Vec<usize>, product: f64, omega: f64 },
    ProductRange { k_min: usize, k_max: usize, step: usize, product: f64, omega: f64 },
}

pub fn enumerate_candidates(spec: &CandidateSpec) -> Result<Vec<CodeParams>> {
    let out: Vec<CodeParams> = match spec {
        CandidateSpec::Explicit { candidates } => {
            for c in candidates {
                c.validate()?;
            }
            candidates.clone()
        }
        CandidateSpec::FixedProduct { ks, product, omega } => ks
            .iter()
            .map(|&k| CodeParams::with_product(k, *product, *omega))
            .collect::<Result<_>>()?,
        CandidateSpec::ProductRange { k_min, k_max, step, product, omega } => {
            if *step == 0 {
                return Err(Error::InvalidArgument("K step must be >= 1".into()));
            }
            (*k_min..=*k_max)
                .step_by(*step)
                .map(|k| CodeParams::with_product(k, *product, *omega))
                .collect::<Result<_>>()?
        }
    };
    if out.is_empty() {
        return Err(Error::InvalidArgument("candidate set is empty".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub params: CodeParams,
    pub theta: f64,
    pub active_workers: usize,
    pub mismatch: f64,
    pub split: LoadSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeSearchResult {
    pub best: CodeParams,
    pub best_split: LoadSplit,
    pub best_mismatch: f64,
    /// Index of the winner in `table`.
    pub best_index: usize,
    pub table: Vec<CandidateRow>,
    /// Candidates that failed to evaluate, with the reason.
    pub excluded: Vec<(CodeParams, String)>,
}

fn evaluate(
    workers: &[WorkerProfile],
    params: &CodeParams,
    gamma: f64,
    tolerance: f64,
) -> Result<CandidateRow> {
    params.validate()?;
    let cfg = SplitConfig::new(gamma, params.total_tasks(), tolerance)?;
    let split = optimal_split(workers, params.complexity, &cfg)?;
    let mismatch = analytics::mismatch(&split, workers, params.complexity, gamma)?;
    if !mismatch.is_finite() {
        return Err(Error::NumericalFailure(format!("non-finite mismatch for {params:?}")));
    }
    Ok(CandidateRow {
        params: *params,
        theta: split.theta.unwrap_or(f64::NAN),
        active_workers: split.active.len(),
        mismatch,
        split,
    })
}

pub fn optimize_code(
    workers: &[WorkerProfile],
    candidates: &[CodeParams],
    gamma: f64,
    tolerance: f64,
) -> Result<CodeSearchResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate set is empty".into()));
    }
    if workers.is_empty() {
        return Err(Error::InvalidArgument("no workers".into()));
    }
    let mut table: Vec<CandidateRow> = Vec::with_capacity(candidates.len());
    let mut excluded = Vec::new();
    let mut best: Option<usize> = None;
    for params in candidates {
        match evaluate(workers, params, gamma, tolerance) {
            Ok(row) => {
                if best.map_or(true, |b| row.mismatch < table[b].mismatch) {
                    best = Some(table.len());
                }
                table.push(row);
            }
            Err(Error::DegenerateWorker { worker }) => {
                return Err(Error::DegenerateWorker { worker });
            }
            Err(e) => excluded.push((*params, e.to_string())),
        }
    }
    let best_index = best.ok_or_else(|| {
        Error::NumericalFailure(format!("all {} candidates failed", candidates.len()))
    })?;
    let row = &table[best_index];
    Ok(CodeSearchResult {
        best: row.params,
        best_split: row.split.clone(),
        best_mismatch: row.mismatch,
        best_index,
        table,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hetero_workers() -> Vec<WorkerProfile> {
        vec![
            WorkerProfile::exponential(0, 3.0, 0.05).unwrap(),
            WorkerProfile::exponential(1, 1.0, 0.10).unwrap(),
            WorkerProfile::exponential(2, 0.5, 0.02).unwrap(),
        ]
    }

    #[test]
    fn enumerate_fixed_product() {
        let spec = CandidateSpec::FixedProduct { ks: vec![110, 200, 350, 510], product: 1e5, omega: 1.0 };
        let cs = enumerate_candidates(&spec).unwrap();
        assert_eq!(cs.len(), 4);
        for c in &cs {
            assert!((c.k as f64 * c.complexity - 1e5).abs() < 1e-6);
        }
    }

    #[test]
    fn enumerate_range_and_single() {
        let spec = CandidateSpec::ProductRange { k_min: 100, k_max: 600, step: 10, product: 5e5, omega: 1.0 };
        assert_eq!(enumerate_candidates(&spec).unwrap().len(), 51);
        let one = CodeParams::new(10, 2.0, 1.2).unwrap();
        let spec = CandidateSpec::Explicit { candidates: vec![one] };
        assert_eq!(enumerate_candidates(&spec).unwrap(), vec![one]);
        let spec = CandidateSpec::Explicit { candidates: vec![] };
        assert!(enumerate_candidates(&spec).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(CodeParams::new(0, 1.0, 1.0).is_err());
        assert!(CodeParams::new(1, 0.0, 1.0).is_err());
        assert!(CodeParams::new(1, 1.0, 0.9).is_err());
        let bad = CodeParams { k: 3, complexity: 2.0, omega: 1.0, product: Some(7.0) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_candidate_is_best() {
        let c = CodeParams::new(20, 1.0, 1.1).unwrap();
        let r = optimize_code(&hetero_workers(), &[c], 1.0, 1e-10).unwrap();
        assert_eq!(r.best, c);
        assert_eq!(r.best_split.total(), 22);
        assert_eq!(r.table.len(), 1);
    }

    #[test]
    fn zero_mismatch_candidate_wins() {
        let workers: Vec<_> = (0..4).map(|p| WorkerProfile::exponential(p, 1.0, 0.1).unwrap()).collect();
        let odd = CodeParams::new(10, 1.0, 1.0).unwrap();
        let even = CodeParams::new(12, 1.0, 1.0).unwrap();
        let r = optimize_code(&workers, &[odd, even], 1.0, 1e-10).unwrap();
        assert_eq!(r.best, even);
        assert_eq!(r.best_mismatch, 0.0);
        assert!(r.table[0].mismatch > 0.0);
    }

    #[test]
    fn argmin_matches_rescan_and_ties_keep_first() {
        let spec = CandidateSpec::ProductRange { k_min: 5, k_max: 60, step: 5, product: 60.0, omega: 1.0 };
        let mut cs = enumerate_candidates(&spec).unwrap();
        cs.push(cs[0]);
        let r = optimize_code(&hetero_workers(), &cs, 1.0, 1e-10).unwrap();
        let min = r.table.iter().map(|row| row.mismatch).fold(f64::INFINITY, f64::min);
        let first = r.table.iter().position(|row| row.mismatch == min).unwrap();
        assert_eq!(r.best_index, first);
        assert_eq!(r.best_mismatch, min);
    }

    #[test]
    fn invalid_candidate_is_excluded() {
        let w = vec![WorkerProfile::exponential(0, 1.0, 0.0).unwrap()];
        let bad = CodeParams { k: 2, complexity: -1.0, omega: 1.0, product: None };
        let good = CodeParams::new(2, 1.0, 1.0).unwrap();
        let r = optimize_code(&w, &[bad, good], 1.0, 1e-10).unwrap();
        assert_eq!(r.excluded.len(), 1);
        assert_eq!(r.best, good);
    }
}
