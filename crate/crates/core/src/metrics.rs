//! Inductive top-N evaluation: hit rate, NDCG, and spectral energy profiles.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bgsimc::{init_state, update, NoiseConfig};
use crate::data::{chronological_items, group_by_user, Interaction, ItemIndex};
use crate::error::{Error, Result};
use crate::gsimc::{rank_excluding, GsImcModel};
use crate::spectral::SpectralBasis;

pub const DEFAULT_CUTOFFS: [usize; 3] = [10, 50, 100];

/// Item-degree class boundaries used for the optional breakdown.
pub const DEFAULT_DEGREE_THRESHOLDS: [usize; 3] = [100, 2000, 5000];

/// 1 if any of the first `n` recommendations is relevant.
pub fn hit_rate<T: Eq + std::hash::Hash>(recs: &[T], truth: &HashSet<T>, n: usize) -> f64 {
    if recs.iter().take(n).any(|r| truth.contains(r)) {
        1.0
    } else {
        0.0
    }
}

/// DCG of the first `n` recommendations over the ideal DCG of `truth`.
///
/// The gain of a hit at 1-based rank `j` is `1 / log2(j + 1)`. The ideal
/// places `min(|truth|, n)` hits at the top, which is 1 for a single target.
pub fn ndcg<T: Eq + std::hash::Hash>(recs: &[T], truth: &HashSet<T>, n: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = recs
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, r)| truth.contains(r))
        .map(|(j, _)| discount(j + 1))
        .sum();
    let ideal: f64 = (1..=truth.len().min(n)).map(discount).sum();
    dcg / ideal
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub hr: f64,
    pub hr_stderr: f64,
    pub ndcg: f64,
    pub ndcg_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cutoffs: BTreeMap<usize, CutoffMetrics>,
    /// Users scored (including automatic misses).
    pub user_count: usize,
    /// Users with too short a history.
    pub skipped_count: usize,
    /// Users whose held-out item never occurs in training; scored as misses.
    pub unseen_target_count: usize,
    /// History items absent from training, dropped from the observations.
    pub dropped_history_items: usize,
    /// Per item-degree class of the held-out item, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub by_degree: Option<BTreeMap<String, BTreeMap<usize, CutoffMetrics>>>,
}

/// A user's distinct items in chronological order, mapped to matrix rows.
/// `None` marks an item that never occurs in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub user: String,
    pub items: Vec<Option<usize>>,
}

/// Builds chronological sequences for `users`, in the given order.
pub fn user_sequences(log: &[Interaction], users: &[String], index: &ItemIndex) -> Vec<UserSequence> {
    let grouped = group_by_user(log);
    users
        .iter()
        .map(|u| {
            let items = grouped
                .get(u.as_str())
                .map(|ev| chronological_items(ev).into_iter().map(|i| index.row(i)).collect())
                .unwrap_or_default();
            UserSequence {
                user: u.clone(),
                items,
            }
        })
        .collect()
}

/// Evaluation settings shared by both protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    /// Item degrees and class thresholds for the optional breakdown.
    pub degree_classes: Option<(Vec<usize>, Vec<usize>)>,
}

impl EvalOptions {
    pub fn new(cutoffs: &[usize]) -> Self {
        Self {
            cutoffs: cutoffs.to_vec(),
            degree_classes: None,
        }
    }

    pub fn with_degree_classes(mut self, degrees: Vec<usize>, thresholds: Vec<usize>) -> Self {
        self.degree_classes = Some((degrees, thresholds));
        self
    }

    fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            return Err(Error::InvalidArgument("cutoffs must be positive".into()));
        }
        Ok(())
    }
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self::new(&DEFAULT_CUTOFFS)
    }
}

#[derive(Debug, Clone)]
enum Outcome {
    Skipped,
    Scored {
        hits: Vec<(f64, f64)>,
        target: Option<usize>,
        dropped: usize,
    },
}

fn score_ranking(ranked: &[usize], target: Option<usize>, cutoffs: &[usize]) -> Vec<(f64, f64)> {
    let truth: HashSet<usize> = target.into_iter().collect();
    cutoffs
        .iter()
        .map(|&n| (hit_rate(ranked, &truth, n), ndcg(ranked, &truth, n)))
        .collect()
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(rows: &[&Vec<(f64, f64)>], cutoffs: &[usize]) -> BTreeMap<usize, CutoffMetrics> {
    cutoffs
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let hr: Vec<f64> = rows.iter().map(|r| r[c].0).collect();
            let nd: Vec<f64> = rows.iter().map(|r| r[c].1).collect();
            let (hr, hr_stderr) = mean_stderr(&hr);
            let (ndcg, ndcg_stderr) = mean_stderr(&nd);
            (
                n,
                CutoffMetrics {
                    hr,
                    hr_stderr,
                    ndcg,
                    ndcg_stderr,
                },
            )
        })
        .collect()
}

fn degree_class(degree: usize, thresholds: &[usize]) -> String {
    let mut sorted = thresholds.to_vec();
    sorted.sort_unstable();
    match sorted.iter().rposition(|&t| degree > t) {
        Some(i) => format!(">{}", sorted[i]),
        None => format!("<={}", sorted.first().copied().unwrap_or(0)),
    }
}

fn aggregate(outcomes: Vec<Outcome>, options: &EvalOptions) -> Result<MetricsReport> {
    let mut skipped = 0;
    let mut unseen = 0;
    let mut dropped = 0;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for o in &outcomes {
        match o {
            Outcome::Skipped => skipped += 1,
            Outcome::Scored {
                hits,
                target,
                dropped: d,
            } => {
                dropped += d;
                if target.is_none() {
                    unseen += 1;
                }
                rows.push(hits);
                targets.push(*target);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Protocol(format!(
            "no eligible users ({skipped} skipped)"
        )));
    }
    let by_degree = options.degree_classes.as_ref().map(|(degrees, thresholds)| {
        let mut classes: BTreeMap<String, Vec<&Vec<(f64, f64)>>> = BTreeMap::new();
        for (row, target) in rows.iter().zip(&targets) {
            if let Some(t) = target {
                classes
                    .entry(degree_class(degrees[*t], thresholds))
                    .or_default()
                    .push(row);
            }
        }
        classes
            .into_iter()
            .map(|(k, v)| (k, summarize(&v, &options.cutoffs)))
            .collect()
    });
    Ok(MetricsReport {
        cutoffs: summarize(&rows, &options.cutoffs),
        user_count: rows.len(),
        skipped_count: skipped,
        unseen_target_count: unseen,
        dropped_history_items: dropped,
        by_degree,
    })
}

fn known(items: &[Option<usize>]) -> (Vec<usize>, usize) {
    let rows: Vec<usize> = items.iter().flatten().copied().collect();
    let dropped = items.len() - rows.len();
    (rows, dropped)
}

/// Holds out each user's last item, reconstructs from the rest, and ranks
/// the unobserved items. Users with fewer than two items are skipped.
pub fn evaluate_gsimc(
    model: &GsImcModel,
    users: &[UserSequence],
    options: &EvalOptions,
) -> Result<MetricsReport> {
    options.validate()?;
    let depth = *options.cutoffs.iter().max().expect("validated");
    let outcomes = users
        .par_iter()
        .map(|u| -> Result<Outcome> {
            let Some((target, history)) = u.items.split_last().filter(|(_, h)| !h.is_empty()) else {
                return Ok(Outcome::Skipped);
            };
            let (prefix, dropped) = known(history);
            let pred = model.reconstruct_items(&prefix)?;
            let ranked = rank_excluding(&pred.scores, &pred.observed, depth);
            Ok(Outcome::Scored {
                hits: score_ranking(&ranked, *target, &options.cutoffs),
                target: *target,
                dropped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(outcomes, options)
}

/// Initializes each user's state from all but the last two items, feeds the
/// second-to-last item as the online update, and scores against the last.
/// Users with fewer than three items are skipped.
pub fn evaluate_bgsimc(
    model: &GsImcModel,
    noise: &NoiseConfig,
    p0: &DVector<f64>,
    users: &[UserSequence],
    options: &EvalOptions,
) -> Result<MetricsReport> {
    options.validate()?;
    let depth = *options.cutoffs.iter().max().expect("validated");
    let outcomes = users
        .par_iter()
        .map(|u| -> Result<Outcome> {
            if u.items.len() < 3 {
                return Ok(Outcome::Skipped);
            }
            let t = u.items.len();
            let (prefix, dropped_prefix) = known(&u.items[..t - 2]);
            let fed: Vec<usize> = u.items[t - 2].into_iter().filter(|i| !prefix.contains(i)).collect();
            let state = init_state(model, &prefix, p0)?;
            let (_, pred) = update(model, &state, &fed, noise)?;
            let ranked = rank_excluding(&pred.scores, &pred.observed, depth);
            let target = u.items[t - 1];
            Ok(Outcome::Scored {
                hits: score_ranking(&ranked, target, &options.cutoffs),
                target,
                dropped: dropped_prefix + usize::from(u.items[t - 2].is_none()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(outcomes, options)
}

/// Average normalized spectral energy per frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub eigenvalues: Vec<f64>,
    /// Mean of each user's squared unit-norm Fourier coefficients.
    pub energy: Vec<f64>,
    pub users: usize,
    /// All-zero signals, left out of the average.
    pub skipped: usize,
}

impl SpectrumProfile {
    /// Energy in the first `count` frequencies.
    pub fn cumulative(&self, count: usize) -> f64 {
        self.energy.iter().take(count).sum()
    }

    /// CSV with header `frequency_index,eigenvalue,mean_energy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency_index,eigenvalue,mean_energy\n");
        for (i, (l, e)) in self.eigenvalues.iter().zip(&self.energy).enumerate() {
            out.push_str(&format!("{i},{l},{e}\n"));
        }
        out
    }
}

pub fn spectrum_profile(basis: &SpectralBasis, signals: &[DVector<f64>]) -> Result<SpectrumProfile> {
    let mut acc = DVector::zeros(basis.k());
    let mut users = 0;
    let mut skipped = 0;
    for f in signals {
        let c = basis.gft(f)?;
        let norm = c.norm();
        if norm == 0.0 {
            skipped += 1;
            continue;
        }
        acc += (c / norm).map(|x| x * x);
        users += 1;
    }
    if users == 0 {
        return Err(Error::InvalidArgument("every signal is zero".into()));
    }
    Ok(SpectrumProfile {
        eigenvalues: basis.eigenvalues().iter().copied().collect(),
        energy: (acc / users as f64).iter().copied().collect(),
        users,
        skipped,
    })
}

/// Indicator vector of an item set.
pub fn indicator(n: usize, items: &BTreeSet<usize>) -> DVector<f64> {
    DVector::from_fn(n, |i, _| if items.contains(&i) { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::spectral::exact_eigs;
    use crate::spectral::tests::random_laplacian;

    fn set(xs: &[u32]) -> HashSet<u32> {
        xs.iter().copied().collect()
    }

    #[test]
    fn hit_rate_examples() {
        assert_eq!(hit_rate(&[2, 5, 9], &set(&[5]), 3), 1.0);
        assert_eq!(hit_rate(&[2, 9, 7], &set(&[5]), 3), 0.0);
        assert_eq!(hit_rate(&[5], &set(&[5]), 1), 1.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg(&[5, 1], &set(&[5]), 10), 1.0);
        assert!((ndcg(&[1, 5], &set(&[5]), 10) - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert_eq!(ndcg(&[1, 2, 5], &set(&[5]), 2), 0.0);
    }

    #[test]
    fn metrics_grow_with_cutoff() {
        let recs = [4u32, 8, 15, 16, 23, 42];
        let truth = set(&[16]);
        let mut prev = (0.0, 0.0);
        for n in 1..=6 {
            let cur = (hit_rate(&recs, &truth, n), ndcg(&recs, &truth, n));
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1);
            assert!(cur.1 <= cur.0);
            prev = cur;
        }
    }

    fn model() -> GsImcModel {
        let l = random_laplacian(30, 20, 0.15, 4);
        GsImcModel::fit(exact_eigs(&l, 15).unwrap(), KernelSpec::tikhonov(1.0, 10.0).unwrap()).unwrap()
    }

    fn seq(items: &[usize]) -> UserSequence {
        UserSequence {
            user: "u".into(),
            items: items.iter().map(|&i| Some(i)).collect(),
        }
    }

    #[test]
    fn single_user_top_hit() {
        let m = model();
        let pred = m.reconstruct_items(&[3]).unwrap();
        let best = rank_excluding(&pred.scores, &pred.observed, 1)[0];
        let report = evaluate_gsimc(&m, &[seq(&[3, best])], &EvalOptions::new(&[10])).unwrap();
        assert_eq!(report.cutoffs[&10].hr, 1.0);
        assert_eq!(report.cutoffs[&10].ndcg, 1.0);
        assert_eq!(report.user_count, 1);
    }

    #[test]
    fn unseen_targets_and_skips_are_counted() {
        let m = model();
        let users = vec![
            UserSequence {
                user: "a".into(),
                items: vec![Some(1), None, None],
            },
            seq(&[4]),
        ];
        let report = evaluate_gsimc(&m, &users, &EvalOptions::new(&[5])).unwrap();
        assert_eq!(report.user_count, 1);
        assert_eq!(report.skipped_count, 1);
        assert_eq!(report.unseen_target_count, 1);
        assert_eq!(report.dropped_history_items, 1);
        assert_eq!(report.cutoffs[&5].hr, 0.0);
        assert!(matches!(
            evaluate_gsimc(&m, &[seq(&[1])], &EvalOptions::new(&[5])),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn bgsimc_requires_three_items() {
        let m = model();
        let noise = NoiseConfig::isotropic(15, 1e-4, 1e-4).unwrap();
        let p0 = DVector::from_element(15, 0.01);
        assert!(matches!(
            evaluate_bgsimc(&m, &noise, &p0, &[seq(&[1, 2])], &EvalOptions::new(&[5])),
            Err(Error::Protocol(_))
        ));
        let r = evaluate_bgsimc(&m, &noise, &p0, &[seq(&[1, 2]), seq(&[1, 2, 3])], &EvalOptions::new(&[5])).unwrap();
        assert_eq!((r.user_count, r.skipped_count), (1, 1));
    }

    #[test]
    fn stderr_uses_sample_deviation() {
        let (m, se) = mean_stderr(&[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(m, 0.5);
        // sample sd = sqrt(1/3); se = sd / 2
        assert!((se - (1.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn degree_classes() {
        let t = DEFAULT_DEGREE_THRESHOLDS.to_vec();
        assert_eq!(degree_class(50, &t), "<=100");
        assert_eq!(degree_class(101, &t), ">100");
        assert_eq!(degree_class(2500, &t), ">2000");
        assert_eq!(degree_class(9000, &t), ">5000");
    }

    #[test]
    fn spectrum_examples() {
        let l = random_laplacian(12, 8, 0.3, 6);
        let basis = exact_eigs(&l, 12).unwrap();
        let u = basis.eigenvectors();
        let one = spectrum_profile(&basis, &[u.column(0).into_owned()]).unwrap();
        assert!((one.energy[0] - 1.0).abs() < 1e-12);
        let two = spectrum_profile(
            &basis,
            &[u.column(0).into_owned(), u.column(1).into_owned() * 3.0, DVector::zeros(12)],
        )
        .unwrap();
        assert!((two.energy[0] - 0.5).abs() < 1e-12 && (two.energy[1] - 0.5).abs() < 1e-12);
        assert_eq!(two.skipped, 1);
        assert!((two.energy.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(two.to_csv().starts_with("frequency_index,eigenvalue,mean_energy\n0,"));
    }
}
