//! Online Bayesian refinement of the closed-form filter.
//!
//! Each user carries a Fourier-domain state `x` of length `k` with diagonal
//! covariance `P`. A newly observed item `delta` moves the state by the
//! filtered increment `F delta = gains .* (U^T delta)`; the measurement is the
//! plain transform of everything observed so far, `z = U^T (s + delta)`.
//!
//! ```text
//! predict:  x_bar = x_hat + F delta          P_bar = P + sigma_eta
//! correct:  K = P_bar / (P_bar + sigma_nu)
//!           x_hat' = x_bar + K (z - x_bar)
//!           P' = (1 - K)^2 P_bar + K^2 sigma_nu
//! ```
//!
//! All covariances are diagonal, so one update costs `O(nk + k^2)` at most.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsimc::{GsImcModel, Prediction};

/// Isotropic noise level used by default for both covariances.
pub const DEFAULT_NOISE: f64 = 1e-4;
/// Lower bound applied to estimated initial covariances.
pub const P_FLOOR: f64 = 1e-8;

/// Diagonal process (`eta`) and measurement (`nu`) noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub sigma_eta: DVector<f64>,
    pub sigma_nu: DVector<f64>,
}

impl NoiseConfig {
    pub fn new(sigma_eta: DVector<f64>, sigma_nu: DVector<f64>) -> Result<Self> {
        if sigma_eta.len() != sigma_nu.len() {
            return Err(Error::dim(sigma_eta.len(), sigma_nu.len()));
        }
        let bad = |v: &DVector<f64>| v.iter().any(|x| !(x.is_finite() && *x >= 0.0));
        if bad(&sigma_eta) || bad(&sigma_nu) {
            return Err(Error::InvalidArgument(
                "noise variances must be finite and non-negative".into(),
            ));
        }
        Ok(Self { sigma_eta, sigma_nu })
    }

    pub fn isotropic(k: usize, eta: f64, nu: f64) -> Result<Self> {
        Self::new(DVector::from_element(k, eta), DVector::from_element(k, nu))
    }

    pub fn k(&self) -> usize {
        self.sigma_eta.len()
    }
}

/// Per-user filter state.
#[derive(Debug, Clone, PartialEq)]
pub struct BgsUserState {
    pub x_hat: DVector<f64>,
    pub p_diag: DVector<f64>,
    /// Item rows observed so far.
    pub s_accum: BTreeSet<usize>,
}

/// Scalar multiply-add counts per stage of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub predict: u64,
    pub correct: u64,
    pub synthesis: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.predict + self.correct + self.synthesis
    }
}

fn check_k(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::dim(expected, actual));
    }
    Ok(())
}

/// Initial state from a user's earlier items: the closed-form Fourier
/// prediction on the prefix, with covariance `p0`.
pub fn init_state(model: &GsImcModel, prefix_items: &[usize], p0: &DVector<f64>) -> Result<BgsUserState> {
    check_k(model.k(), p0.len())?;
    if p0.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("initial covariance must be positive".into()));
    }
    let s_accum: BTreeSet<usize> = prefix_items.iter().copied().collect();
    let distinct: Vec<usize> = s_accum.iter().copied().collect();
    Ok(BgsUserState {
        x_hat: model.fourier_scores(&distinct)?,
        p_diag: p0.clone(),
        s_accum,
    })
}

/// Extrapolates state and covariance through the new observation.
pub fn predict_step(
    model: &GsImcModel,
    state: &BgsUserState,
    delta_items: &[usize],
    noise: &NoiseConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_k(model.k(), state.x_hat.len())?;
    check_k(model.k(), noise.k())?;
    let x_bar = &state.x_hat + model.fourier_scores(delta_items)?;
    let p_bar = &state.p_diag + &noise.sigma_eta;
    Ok((x_bar, p_bar))
}

/// Diagonal Kalman gain `P_bar / (P_bar + sigma_nu)`.
pub fn kalman_gain(p_bar: &DVector<f64>, sigma_nu: &DVector<f64>) -> Result<DVector<f64>> {
    check_k(p_bar.len(), sigma_nu.len())?;
    let innovation = p_bar + sigma_nu;
    if innovation.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::Numeric("innovation covariance is not positive".into()));
    }
    Ok(p_bar.component_div(&innovation))
}

/// Joseph-form posterior covariance for an arbitrary diagonal gain.
pub fn joseph_covariance(p_bar: &DVector<f64>, sigma_nu: &DVector<f64>, gain: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        p_bar.len(),
        p_bar
            .iter()
            .zip(sigma_nu.iter())
            .zip(gain.iter())
            .map(|((p, s), k)| (1.0 - k).powi(2) * p + k * k * s),
    )
}

/// Blends the extrapolated state with the measurement.
pub fn correct_step(
    x_bar: &DVector<f64>,
    p_bar: &DVector<f64>,
    z_new: &DVector<f64>,
    noise: &NoiseConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_k(x_bar.len(), p_bar.len())?;
    check_k(x_bar.len(), z_new.len())?;
    let gain = kalman_gain(p_bar, &noise.sigma_nu)?;
    let x_new = x_bar + gain.component_mul(&(z_new - x_bar));
    let p_new = joseph_covariance(p_bar, &noise.sigma_nu, &gain);
    Ok((x_new, p_new))
}

/// One prediction-correction step; returns the new state and its scores.
pub fn update(
    model: &GsImcModel,
    state: &BgsUserState,
    delta_items: &[usize],
    noise: &NoiseConfig,
) -> Result<(BgsUserState, Prediction)> {
    update_counted(model, state, delta_items, noise).map(|(s, p, _)| (s, p))
}

/// [`update`], also reporting how many scalar multiply-adds each stage did.
pub fn update_counted(
    model: &GsImcModel,
    state: &BgsUserState,
    delta_items: &[usize],
    noise: &NoiseConfig,
) -> Result<(BgsUserState, Prediction, OpCount)> {
    let delta: BTreeSet<usize> = delta_items.iter().copied().collect();
    if let Some(dup) = delta.iter().find(|i| state.s_accum.contains(i)) {
        return Err(Error::InvalidArgument(format!(
            "item {dup} is already part of the user's observations"
        )));
    }
    let delta: Vec<usize> = delta.into_iter().collect();
    let (n, k) = (model.n() as u64, model.k() as u64);
    let mut ops = OpCount::default();

    let (x_bar, p_bar) = predict_step(model, state, &delta, noise)?;
    ops.predict = delta.len() as u64 * k + 3 * k;

    let mut s_accum = state.s_accum.clone();
    s_accum.extend(delta.iter().copied());
    let all: Vec<usize> = s_accum.iter().copied().collect();
    let z_new = model.basis().gft_indicator(&all)?;
    let (x_hat, p_diag) = correct_step(&x_bar, &p_bar, &z_new, noise)?;
    ops.correct = all.len() as u64 * k + 8 * k;

    let scores = model.basis().igft(&x_hat)?;
    ops.synthesis = n * k;

    let next = BgsUserState {
        x_hat,
        p_diag,
        s_accum: s_accum.clone(),
    };
    Ok((
        next,
        Prediction {
            scores,
            observed: s_accum,
        },
        ops,
    ))
}

/// Initial covariance from validation histories (chronological item rows).
///
/// For each user with at least two items, the residual between the measured
/// transform of the full history and the state extrapolated from the prefix
/// through the last item is `r = z_full - x_bar`. The estimate is the mean
/// of `r^2` per frequency, floored at [`P_FLOOR`].
pub fn estimate_p0(model: &GsImcModel, validation: &[Vec<usize>]) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(model.k());
    let mut users = 0usize;
    for items in validation.iter().filter(|h| h.len() >= 2) {
        let (last, prefix) = items.split_last().expect("len >= 2");
        let x_bar = model.fourier_scores(prefix)? + model.fourier_scores(std::slice::from_ref(last))?;
        let z_full = model.basis().gft_indicator(items)?;
        let r = z_full - x_bar;
        acc += r.component_mul(&r);
        users += 1;
    }
    if users == 0 {
        return Err(Error::Estimation(
            "no validation user with at least two items".into(),
        ));
    }
    Ok((acc / users as f64).map(|v| v.max(P_FLOOR)))
}

/// Serialized per-user state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub version: u32,
    pub user: String,
    pub k: usize,
    pub x_hat: Vec<f64>,
    pub p: Vec<f64>,
    /// Observed item ids.
    pub items: Vec<String>,
}

pub const STATE_FILE_VERSION: u32 = 1;

impl StateFile {
    pub fn from_state(user: &str, state: &BgsUserState, item_ids: &[String]) -> Self {
        Self {
            version: STATE_FILE_VERSION,
            user: user.to_owned(),
            k: state.x_hat.len(),
            x_hat: state.x_hat.iter().copied().collect(),
            p: state.p_diag.iter().copied().collect(),
            items: state.s_accum.iter().map(|&i| item_ids[i].clone()).collect(),
        }
    }

    /// Rebuilds the state; `lookup` maps item ids to rows.
    pub fn to_state(&self, lookup: impl Fn(&str) -> Option<usize>) -> Result<BgsUserState> {
        if self.version != STATE_FILE_VERSION {
            return Err(Error::Format(format!(
                "unsupported state file version {}",
                self.version
            )));
        }
        check_k(self.k, self.x_hat.len())?;
        check_k(self.k, self.p.len())?;
        let s_accum = self
            .items
            .iter()
            .map(|id| lookup(id).ok_or_else(|| Error::Format(format!("unknown item {id:?}"))))
            .collect::<Result<_>>()?;
        Ok(BgsUserState {
            x_hat: DVector::from_vec(self.x_hat.clone()),
            p_diag: DVector::from_vec(self.p.clone()),
            s_accum,
        })
    }
}

/// Monte-Carlo summary of the corrected estimate under a simulated
/// linear-Gaussian state-space model.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStudy {
    pub trials: usize,
    /// Mean of `x_hat_new - x_new` per coordinate.
    pub mean_error: DVector<f64>,
    /// Standard error of that mean per coordinate.
    pub std_error: DVector<f64>,
    /// Empirical variance of `x_hat_new - x_new` per coordinate.
    pub error_variance: DVector<f64>,
    /// Predicted posterior covariance from the Joseph form.
    pub predicted_variance: DVector<f64>,
}

/// Simulates `x ~ N(x_hat, P)`, `x_new = x + F delta + eta`,
/// `z = x_new + nu`, and runs the correction with the given `gain` (or the
/// Kalman gain when `None`).
pub fn simulate_estimator(
    x_hat: &DVector<f64>,
    p: &DVector<f64>,
    f_delta: &DVector<f64>,
    noise: &NoiseConfig,
    gain: Option<&DVector<f64>>,
    trials: usize,
    seed: u64,
) -> Result<EstimatorStudy> {
    let k = x_hat.len();
    check_k(k, p.len())?;
    check_k(k, f_delta.len())?;
    check_k(k, noise.k())?;
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    let p_bar = p + &noise.sigma_eta;
    let gain = match gain {
        Some(g) => g.clone(),
        None => kalman_gain(&p_bar, &noise.sigma_nu)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut sum = DVector::<f64>::zeros(k);
    let mut sum_sq = DVector::<f64>::zeros(k);
    for _ in 0..trials {
        for j in 0..k {
            let x = x_hat[j] + p[j].sqrt() * normal();
            let x_new = x + f_delta[j] + noise.sigma_eta[j].sqrt() * normal();
            let z = x_new + noise.sigma_nu[j].sqrt() * normal();
            let x_bar = x_hat[j] + f_delta[j];
            let est = x_bar + gain[j] * (z - x_bar);
            let err = est - x_new;
            sum[j] += err;
            sum_sq[j] += err * err;
        }
    }
    let t = trials as f64;
    let mean = &sum / t;
    let var: DVector<f64> = DVector::from_iterator(k, (0..k).map(|j| (sum_sq[j] - t * mean[j] * mean[j]) / (t - 1.0)));
    let std_error = var.map(|v: f64| (v / t).sqrt());
    Ok(EstimatorStudy {
        trials,
        mean_error: mean,
        std_error,
        error_variance: var,
        predicted_variance: joseph_covariance(&p_bar, &noise.sigma_nu, &gain),
    })
}
