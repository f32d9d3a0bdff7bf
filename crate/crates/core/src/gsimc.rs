//! Closed-form reconstruction `y = U diag(H(lambda)) U^T s` and top-N ranking.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::spectral::SpectralBasis;

/// Default bandwidth: number of leading eigenpairs kept.
pub const DEFAULT_BANDWIDTH: usize = 1000;

/// A fitted low-pass graph filter.
#[derive(Debug, Clone)]
pub struct GsImcModel {
    basis: SpectralBasis,
    kernel: KernelSpec,
    gains: DVector<f64>,
}

/// Scores for every item, plus the items already observed for this user.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: DVector<f64>,
    pub observed: BTreeSet<usize>,
}

impl GsImcModel {
    pub fn fit(basis: SpectralBasis, kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        let gains = kernel.h_diagonal(basis.eigenvalues().as_slice())?;
        Ok(Self {
            gains: DVector::from_vec(gains),
            basis,
            kernel,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn gains(&self) -> &DVector<f64> {
        &self.gains
    }

    /// Number of items (graph vertices).
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    /// The dense filter `U diag(gains) U^T`; for small graphs and tests.
    pub fn filter_matrix(&self) -> DMatrix<f64> {
        let u = self.basis.eigenvectors();
        u * DMatrix::from_diagonal(&self.gains) * u.transpose()
    }

    /// Fourier-domain prediction `gains .* (U^T s)` for an indicator signal.
    pub fn fourier_scores(&self, items: &[usize]) -> Result<DVector<f64>> {
        Ok(self.basis.gft_indicator(items)?.component_mul(&self.gains))
    }

    /// `gains .* (U^T s)` for an arbitrary signal.
    pub fn filter_coefficients(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.basis.gft(s)?.component_mul(&self.gains))
    }

    /// Reconstructs from a binary observation vector.
    pub fn reconstruct(&self, s: &DVector<f64>) -> Result<Prediction> {
        if s.len() != self.n() {
            return Err(Error::dim(self.n(), s.len()));
        }
        if s.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("observations must be 0 or 1".into()));
        }
        let observed = s
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect();
        let scores = self.basis.igft(&self.filter_coefficients(s)?)?;
        Ok(Prediction { scores, observed })
    }

    /// Reconstructs from the set of observed items.
    pub fn reconstruct_items(&self, items: &[usize]) -> Result<Prediction> {
        let observed: BTreeSet<usize> = items.iter().copied().collect();
        let distinct: Vec<usize> = observed.iter().copied().collect();
        let scores = self.basis.igft(&self.fourier_scores(&distinct)?)?;
        Ok(Prediction { scores, observed })
    }

    /// Applies the filter to any real signal (no binary check).
    pub fn apply(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.basis.igft(&self.filter_coefficients(f)?)
    }

    /// Adds `H delta` for newly observed items. Items already in
    /// `prior.observed` are skipped so no observation counts twice.
    pub fn incremental_update(&self, prior: &Prediction, delta_items: &[usize]) -> Result<Prediction> {
        let fresh: BTreeSet<usize> = delta_items
            .iter()
            .copied()
            .filter(|i| !prior.observed.contains(i))
            .collect();
        let mut next = prior.clone();
        if fresh.is_empty() {
            return Ok(next);
        }
        let fresh_vec: Vec<usize> = fresh.iter().copied().collect();
        next.scores += self.basis.igft(&self.fourier_scores(&fresh_vec)?)?;
        next.observed.extend(fresh);
        Ok(next)
    }
}

/// Ranks unobserved items by score, highest first; ties go to the lower index.
pub fn recommend_topn(pred: &Prediction, n_rec: usize) -> Vec<usize> {
    rank_excluding(&pred.scores, &pred.observed, n_rec)
}

pub(crate) fn rank_excluding(scores: &DVector<f64>, exclude: &BTreeSet<usize>, n_rec: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    let by_score = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if n_rec < candidates.len() {
        candidates.select_nth_unstable_by(n_rec, by_score);
        candidates.truncate(n_rec);
    }
    candidates.sort_by(by_score);
    candidates
}
