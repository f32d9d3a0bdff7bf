//! Numerical checks of the recovery guarantees.
//!
//! Two bounds are exercised on small graphs:
//!
//! - Noiseless interpolation: for `y` band-limited to `omega` and observed on
//!   `Omega`, the minimizer of `||R(L)^k f||` subject to `f = y` on `Omega`
//!   satisfies `||y - f_k|| <= 2 (Lambda R(omega))^k ||y||`. Here `Lambda` is
//!   the Poincaré constant of the unobserved set.
//! - Flip noise: with each 1 of a binary `y` flipped to 0 with probability
//!   `rho`, the filtered estimate `H s` has expected MSE at most
//!   `C^2 / n * (rho / (R1 (1 + R1/phi)^2) + 1 / (4 phi))`, where
//!   `C^2 = R(omega) ||y||^2` and `R1` is `R` at the smallest eigenvalue where
//!   it is positive.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::kernels::KernelSpec;
use crate::spectral::SpectralBasis;

/// Eigenvalues below this count as zero.
const ZERO_EIGENVALUE: f64 = 1e-10;
/// Floor on the spectral weights of the interpolation objective.
pub const INTERPOLATION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSignal {
    pub y: DVector<f64>,
    pub omega: f64,
    pub seed: u64,
}

/// A unit-norm signal with seeded Gaussian coefficients on the band
/// `lambda <= omega`.
pub fn synth_bandlimited(basis: &SpectralBasis, omega: f64, seed: u64) -> Result<SyntheticSignal> {
    let band = basis.band(omega)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = DVector::from_fn(band.k(), |_, _| StandardNormal.sample(&mut rng));
    let y = band.igft(&coeffs)?;
    let norm = y.norm();
    if norm == 0.0 {
        return Err(Error::Numeric("synthetic signal vanished".into()));
    }
    Ok(SyntheticSignal {
        y: y / norm,
        omega,
        seed,
    })
}

/// 1 on the `ones` largest entries of `y`, 0 elsewhere (ties to lower index).
pub fn binarize_top(y: &DVector<f64>, ones: usize) -> DVector<f64> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let mut out = DVector::zeros(y.len());
    for &i in order.iter().take(ones) {
        out[i] = 1.0;
    }
    out
}

/// A binary observation corrupted by one-sided flips.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySample {
    pub s: DVector<f64>,
    pub flip_rate: f64,
    /// `s - y`; entries are 0 or -1.
    pub xi: DVector<f64>,
}

/// Flips each 1 of `y` to 0 independently with probability `rho`.
pub fn flip_noise(y: &DVector<f64>, rho: f64, seed: u64) -> Result<NoisySample> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("flip rate {rho} outside [0, 1]")));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("signal must be binary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = y.map(|v| if v == 1.0 && rng.random::<f64>() < rho { -1.0 } else { 0.0 });
    Ok(NoisySample {
        s: y + &xi,
        flip_rate: rho,
        xi,
    })
}

/// `R` at the smallest eigenvalue where it is strictly positive.
pub fn smallest_positive_penalty(kernel: &KernelSpec, eigenvalues: &[f64]) -> Result<(f64, f64)> {
    for &l in eigenvalues {
        let l = l.max(0.0);
        let r = kernel.r_finite(l)?;
        if r > ZERO_EIGENVALUE {
            return Ok((l, r));
        }
    }
    Err(Error::BoundUndefined(
        "R vanishes on the whole spectrum".into(),
    ))
}

/// Expected-MSE bound under flip noise. `kernel.phi` may be infinite.
pub fn theorem2_bound(kernel: &KernelSpec, rho: f64, lambda1: f64, omega: f64, y_norm: f64, n: usize) -> Result<f64> {
    let r1 = kernel.r_finite(lambda1)?;
    if r1 <= 0.0 {
        return Err(Error::BoundUndefined(format!(
            "R(lambda1) = {r1} at lambda1 = {lambda1}; use the smallest positive eigenvalue"
        )));
    }
    let c2 = kernel.r_finite(omega)? * y_norm * y_norm;
    let phi = kernel.phi;
    let noise_term = rho / (r1 * (1.0 + r1 / phi).powi(2));
    let bias_term = 1.0 / (4.0 * phi);
    Ok(c2 / n as f64 * (noise_term + bias_term))
}

/// The `phi` minimizing the bound: infinite below a flip rate of 1/8,
/// otherwise the solution of `1 + R1 / phi = 2 rho^(1/3)`.
pub fn optimal_phi(r1: f64, rho: f64) -> f64 {
    let t = 2.0 * rho.cbrt() - 1.0;
    if t <= 0.0 {
        f64::INFINITY
    } else {
        r1 / t
    }
}

/// The bound evaluated at [`optimal_phi`]:
/// `C^2 rho / (R1 n)` below 1/8 and `C^2 (3 rho^(1/3) - 1) / (4 R1 n)` above.
pub fn optimal_bound(c2: f64, r1: f64, rho: f64, n: usize) -> f64 {
    let n = n as f64;
    if rho < 0.125 {
        c2 * rho / (r1 * n)
    } else {
        c2 * (3.0 * rho.cbrt() - 1.0) / (4.0 * r1 * n)
    }
}

/// Exact `E ||y - H (y + xi)||^2 / n` under one-sided flips at rate `rho`:
/// `(||(I - H) y + rho H y||^2 + rho (1 - rho) sum_{y_v = 1} ||H e_v||^2) / n`.
pub fn expected_flip_mse(h: &DMatrix<f64>, y: &DVector<f64>, rho: f64) -> f64 {
    let hy = h * y;
    let mean_residual = (y - &hy) + hy * rho;
    let column_energy: f64 = (0..y.len())
        .filter(|&v| y[v] == 1.0)
        .map(|v| h.column(v).norm_squared())
        .sum();
    (mean_residual.norm_squared() + rho * (1.0 - rho) * column_energy) / y.len() as f64
}

/// Signal used for the flip-noise experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarySignalConfig {
    /// Bandlimit of the continuous draw and of `C^2`.
    pub omega: f64,
    /// Fraction of entries set to 1 after thresholding.
    pub ones_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Row {
    pub kernel: String,
    pub rho: f64,
    pub phi: f64,
    pub empirical_mse: f64,
    pub mse_stderr: f64,
    /// Closed-form expectation of the MSE under the flip model.
    pub exact_mse: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    /// `||y - P_omega y|| / ||y||` of the binary signal.
    pub projection_residual: f64,
    /// `||R^{1/2} y||^2 / C^2`; the proof needs this to be at most 1.
    pub energy_ratio: f64,
}

/// Monte-Carlo estimate of the expected MSE of `H s` against the bound.
///
/// Each row also carries the exact expectation from [`expected_flip_mse`].
///
/// `basis` must be the full eigenbasis. Trial `t` at grid point `g` draws
/// its noise from the seed `(seed, g, t)`, so results do not depend on
/// scheduling.
pub fn verify_theorem2(
    basis: &SpectralBasis,
    kernel: &KernelSpec,
    rho_grid: &[f64],
    phi_grid: &[f64],
    trials: usize,
    signal: BinarySignalConfig,
) -> Result<Vec<Theorem2Row>> {
    let n = basis.n();
    if basis.k() != n {
        return Err(Error::InvalidArgument("flip-noise check needs the full basis".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let draw = synth_bandlimited(basis, signal.omega, signal.seed)?;
    let ones = ((n as f64 * signal.ones_fraction).round() as usize).clamp(1, n);
    let y = binarize_top(&draw.y, ones);
    let y_norm = y.norm();
    let band = basis.band(signal.omega)?;
    let projection_residual = (&y - band.project(&y)?).norm() / y_norm;
    let support: Vec<usize> = (0..n).filter(|&i| y[i] == 1.0).collect();

    let eigenvalues: Vec<f64> = basis.eigenvalues().iter().map(|&l| l.max(0.0)).collect();
    let (lambda1, _) = smallest_positive_penalty(kernel, &eigenvalues)?;
    let coeffs = basis.gft(&y)?;
    let smoothness: f64 = eigenvalues
        .iter()
        .zip(coeffs.iter())
        .map(|(&l, c)| kernel.r_finite(l).map(|r| r * c * c))
        .sum::<Result<f64>>()?;

    let mut rows = Vec::new();
    for (pi, &phi) in phi_grid.iter().enumerate() {
        let spec = kernel.with_phi(phi)?;
        let gains = DVector::from_vec(spec.h_diagonal(&eigenvalues)?);
        let u = basis.eigenvectors();
        let h: DMatrix<f64> = u * DMatrix::from_diagonal(&gains) * u.transpose();
        let clean_residual = &y - &h * &y;
        let c2 = spec.r_finite(signal.omega)? * y_norm * y_norm;
        for (ri, &rho) in rho_grid.iter().enumerate() {
            let grid_seed = signal
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((pi * rho_grid.len() + ri) as u64);
            let mses: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(grid_seed);
                    rng.set_stream(t as u64);
                    // y - H(y + xi) = (y - Hy) + sum over flipped v of H[:, v]
                    let mut err = clean_residual.clone();
                    for &v in &support {
                        if rng.random::<f64>() < rho {
                            err += h.column(v);
                        }
                    }
                    err.norm_squared() / n as f64
                })
                .collect();
            let mean = mses.iter().sum::<f64>() / trials as f64;
            let var = if trials > 1 {
                mses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0)
            } else {
                0.0
            };
            let bound = theorem2_bound(&spec, rho, lambda1, signal.omega, y_norm, n)?;
            let exact_mse = expected_flip_mse(&h, &y, rho);
            rows.push(Theorem2Row {
                kernel: spec.to_string(),
                rho,
                phi,
                empirical_mse: mean,
                mse_stderr: (var / trials as f64).sqrt(),
                exact_mse,
                bound,
                margin: bound - mean,
                pass: mean <= bound,
                projection_residual,
                energy_ratio: smoothness / c2,
            });
        }
    }
    Ok(rows)
}

/// `1 / sigma_min(L[:, omega_c])`; infinite when the columns are dependent.
pub fn poincare_constant(laplacian: &Laplacian, omega_c: &[usize]) -> Result<f64> {
    let n = laplacian.n();
    if omega_c.is_empty() || omega_c.len() >= n {
        return Err(Error::InvalidArgument(
            "the unobserved set must be a non-empty proper subset".into(),
        ));
    }
    if let Some(&bad) = omega_c.iter().find(|&&v| v >= n) {
        return Err(Error::dim(n, bad + 1));
    }
    let cols = laplacian.matrix().select_columns(omega_c);
    let sv = cols.singular_values();
    let smallest = sv.min();
    if smallest <= 1e-12 * sv.max().max(1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / smallest)
}

/// Minimizes `||R(L)^k f||` subject to `f = y` on `omega`.
///
/// `basis` must be the full eigenbasis of `L`. Spectral weights
/// `R(lambda)^(2k)` are floored at [`INTERPOLATION_FLOOR`] so that a
/// vanishing `R(0)` does not make the objective singular.
pub fn variational_interpolate(
    basis: &SpectralBasis,
    kernel: &KernelSpec,
    k_power: u32,
    y: &DVector<f64>,
    omega: &[usize],
) -> Result<DVector<f64>> {
    let n = basis.n();
    if basis.k() != n {
        return Err(Error::InvalidArgument("interpolation needs the full basis".into()));
    }
    if y.len() != n {
        return Err(Error::dim(n, y.len()));
    }
    if omega.is_empty() {
        return Err(Error::InvalidArgument("observed set is empty".into()));
    }
    if k_power == 0 {
        return Err(Error::InvalidArgument("k_power must be >= 1".into()));
    }
    let mut observed = vec![false; n];
    for &v in omega {
        if v >= n {
            return Err(Error::dim(n, v + 1));
        }
        observed[v] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&v| !observed[v]).collect();
    let fixed: Vec<usize> = (0..n).filter(|&v| observed[v]).collect();
    if free.is_empty() {
        return Ok(y.clone());
    }
    let weights = basis
        .eigenvalues()
        .iter()
        .map(|&l| {
            kernel
                .r_finite(l.max(0.0))
                .map(|r| r.powi(2 * k_power as i32).max(INTERPOLATION_FLOOR))
        })
        .collect::<Result<Vec<f64>>>()?;
    let u = basis.eigenvectors();
    let m = u * DMatrix::from_diagonal(&DVector::from_vec(weights)) * u.transpose();
    let m_ff = m.select_rows(&free).select_columns(&free);
    let m_fo = m.select_rows(&free).select_columns(&fixed);
    let y_o = DVector::from_iterator(fixed.len(), fixed.iter().map(|&v| y[v]));
    let chol = m_ff
        .cholesky()
        .ok_or_else(|| Error::Interpolation("constraint system is singular".into()))?;
    let f_free = -chol.solve(&(m_fo * y_o));
    let mut out = y.clone();
    for (i, &v) in free.iter().enumerate() {
        out[v] = f_free[i];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Row {
    pub k: u32,
    pub error: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub poincare: f64,
    pub r_omega: f64,
    /// `Lambda * R(omega)`; the bound applies when this is below 1.
    pub rate: f64,
    pub applicable: bool,
    pub rows: Vec<Theorem1Row>,
    /// Errors never increase along the tested ladder.
    pub monotone: bool,
}

/// Interpolates `y` from `omega` for each power in `k_powers` and compares
/// the error with `2 (Lambda R(omega))^k ||y||`.
pub fn verify_theorem1(
    laplacian: &Laplacian,
    basis: &SpectralBasis,
    kernel: &KernelSpec,
    omega_band: f64,
    y: &DVector<f64>,
    omega: &[usize],
    k_powers: &[u32],
) -> Result<Theorem1Report> {
    let n = laplacian.n();
    let observed: std::collections::HashSet<usize> = omega.iter().copied().collect();
    let complement: Vec<usize> = (0..n).filter(|v| !observed.contains(v)).collect();
    let poincare = poincare_constant(laplacian, &complement)?;
    let r_omega = kernel.r_finite(omega_band)?;
    let rate = poincare * r_omega;
    let applicable = rate < 1.0 && omega_band > 0.0 && omega_band <= r_omega;
    if !applicable {
        return Ok(Theorem1Report {
            poincare,
            r_omega,
            rate,
            applicable,
            rows: Vec::new(),
            monotone: true,
        });
    }
    let y_norm = y.norm();
    let mut rows = Vec::new();
    for &k in k_powers {
        let f = variational_interpolate(basis, kernel, k, y, omega)?;
        let error = (y - f).norm();
        let bound = 2.0 * rate.powi(k as i32) * y_norm;
        rows.push(Theorem1Row {
            k,
            error,
            bound,
            pass: error <= bound,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].error <= w[0].error + 1e-12);
    Ok(Theorem1Report {
        poincare,
        r_omega,
        rate,
        applicable,
        rows,
        monotone,
    })
}

/// Checks `||L^s y|| <= omega^s ||y||` for a band-limited `y`.
pub fn bernstein_holds(laplacian: &Laplacian, y: &DVector<f64>, omega: f64, power: u32, tol: f64) -> bool {
    let mut v = y.clone();
    for _ in 0..power {
        v = laplacian.matrix() * v;
    }
    v.norm() <= omega.powi(power as i32) * y.norm() + tol
}
