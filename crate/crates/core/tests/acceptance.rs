//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 11 needs the Koubei interaction log; point `GSIMC_KOUBEI` at a
//! `user<TAB>item<TAB>timestamp` file to enable it.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::FRAC_PI_4;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsimc_core::bgsimc::{estimate_p0, joseph_covariance, kalman_gain, simulate_estimator};
use gsimc_core::data::{
    build_matrix, load_interactions, prune, split_users, DatasetSplit, Interaction, PruneConfig,
    RatingMatrix, SplitRatios,
};
use gsimc_core::graph::{hypergraph_laplacian, HypergraphOperator, Laplacian};
use gsimc_core::kernels::KernelSpec;
use gsimc_core::metrics::{
    evaluate_bgsimc, evaluate_gsimc, hit_rate, indicator, ndcg, spectrum_profile, user_sequences,
    EvalOptions, MetricsReport, UserSequence,
};
use gsimc_core::spectral::{exact_eigs, nystrom_eigs, NystromParams, SpectralBasis};
use gsimc_core::synthetic::{planted_cohort, CohortConfig};
use gsimc_core::theory::{
    synth_bandlimited, verify_theorem1, verify_theorem2, BinarySignalConfig,
};
use gsimc_core::{GsImcModel, NoiseConfig};

const SEED: u64 = 9876;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn random_ratings(rng: &mut ChaCha8Rng, n: usize, m: usize, density: f64) -> RatingMatrix {
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i % m)).collect();
    pairs.extend((0..m).map(|j| (j % n, j)));
    for i in 0..n {
        for j in 0..m {
            if rng.random::<f64>() < density {
                pairs.push((i, j));
            }
        }
    }
    RatingMatrix::from_pairs(n, m, pairs).unwrap()
}

fn random_binary(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let mut s = DVector::from_fn(n, |_, _| if rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 });
    s[rng.random_range(0..n)] = 1.0;
    s
}

/// `f(L)` through an independent dense eigendecomposition.
fn spectral_function(l: &Laplacian, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(l.matrix().clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn matrix_cos(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let x2 = x * x;
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = -(&term * &x2) / ((2 * k - 1) * (2 * k)) as f64;
        sum += &term;
    }
    sum
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut fits = 0;
    for _ in 0..20 {
        let n = rng.random_range(10..=60);
        let m = rng.random_range(5..=40);
        let density = rng.random_range(0.05..0.3);
        let r = random_ratings(&mut rng, n, m, density);
        let l = hypergraph_laplacian(&r).unwrap();
        let basis = exact_eigs(&l, n).unwrap();
        let phi = rng.random_range(0.5..20.0);
        let gamma = rng.random_range(0.5..2.0);
        let a = [2.5, 4.0, 6.0][rng.random_range(0..3)];
        let s = random_binary(&mut rng, n);
        let eye = DMatrix::<f64>::identity(n, n);
        let lm = l.matrix();
        let penalties: Vec<(KernelSpec, DMatrix<f64>)> = vec![
            (KernelSpec::tikhonov(gamma, phi).unwrap(), lm * gamma),
            (KernelSpec::diffusion(gamma, phi).unwrap(), (lm * (gamma / 2.0)).exp()),
            (
                KernelSpec::random_walk(a, phi).unwrap(),
                (&eye * a - lm).try_inverse().unwrap(),
            ),
            (
                KernelSpec::inverse_cosine(phi).unwrap(),
                matrix_cos(&(lm * FRAC_PI_4)).try_inverse().unwrap(),
            ),
        ];
        for (kernel, penalty) in penalties {
            let dense = (&eye + penalty / phi).lu().solve(&s).unwrap();
            let model = GsImcModel::fit(basis.clone(), kernel).unwrap();
            worst = worst.max((model.reconstruct(&s).unwrap().scores - dense).amax());
            fits += 1;
        }
        // cutoff between two well-separated eigenvalues
        let ev = basis.eigenvalues();
        let j = (1..n - 1)
            .max_by(|&x, &y| (ev[x + 1] - ev[x]).total_cmp(&(ev[y + 1] - ev[y])))
            .unwrap();
        let omega = 0.5 * (ev[j] + ev[j + 1]);
        let projector = spectral_function(&l, |v| if v <= omega { 1.0 } else { 0.0 });
        let model = GsImcModel::fit(basis.clone(), KernelSpec::cutoff(omega, phi).unwrap()).unwrap();
        worst = worst.max((model.reconstruct(&s).unwrap().scores - projector * &s).amax());
        fits += 1;
    }
    verdict(
        worst <= 1e-8,
        format!("max |diff| {worst:.2e} over {fits} fits on 20 graphs"),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut sgmc: f64 = 0.0;
    let mut mrfcf: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(20..=60);
        let m = rng.random_range(10..=40);
        let r = random_ratings(&mut rng, n, m, 0.15);
        let l = hypergraph_laplacian(&r).unwrap();
        let full = exact_eigs(&l, n).unwrap();
        let s = random_binary(&mut rng, n);

        let ev = full.eigenvalues();
        let k = (n / 4..3 * n / 4)
            .max_by(|&x, &y| (ev[x] - ev[x - 1]).total_cmp(&(ev[y] - ev[y - 1])))
            .unwrap();
        let omega = 0.5 * (ev[k - 1] + ev[k]);
        let lead = exact_eigs(&l, k).unwrap();
        let uk = lead.eigenvectors();
        let cutoff = GsImcModel::fit(full.clone(), KernelSpec::cutoff(omega, f64::INFINITY).unwrap()).unwrap();
        let diff = cutoff.reconstruct(&s).unwrap().scores - uk * (uk.transpose() * &s);
        sgmc = sgmc.max(diff.amax());

        let a = 4.0;
        let rw = GsImcModel::fit(full, KernelSpec::random_walk(a, 1.0).unwrap()).unwrap();
        let eye = DMatrix::<f64>::identity(n, n);
        let dense = &eye - (&eye * (a + 1.0) - l.matrix()).try_inverse().unwrap();
        mrfcf = mrfcf.max((rw.reconstruct(&s).unwrap().scores - dense * &s).amax());
    }
    verdict(
        sgmc <= 1e-10 && mrfcf <= 1e-8,
        format!("cutoff vs U_k U_k^T s {sgmc:.2e}; random walk vs I - ((a+1)I - L)^-1 {mrfcf:.2e}"),
    )
}

fn criterion_3() -> Verdict {
    let r = RatingMatrix::from_dense(&[vec![1, 0], vec![1, 1], vec![0, 1]]).unwrap();
    let l = hypergraph_laplacian(&r).unwrap();
    let basis = exact_eigs(&l, 3).unwrap();
    let ev_err = (basis.eigenvalues() - DVector::from_vec(vec![0.0, 0.5, 1.0])).amax();
    let model = GsImcModel::fit(basis, KernelSpec::tikhonov(1.0, 1.0).unwrap()).unwrap();
    let pred = model.reconstruct(&DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
    let golden = DVector::from_vec(vec![17.0 / 24.0, 1.0 / (4.0 * 2f64.sqrt()), 1.0 / 24.0]);
    let rec_err = (pred.scores - golden).amax();
    verdict(
        ev_err <= 1e-10 && rec_err <= 1e-10,
        format!("eigenvalue error {ev_err:.1e}, reconstruction error {rec_err:.1e}"),
    )
}

struct Cohort {
    log: Vec<Interaction>,
    split: DatasetSplit,
    ratings: RatingMatrix,
}

fn cohort(cfg: &CohortConfig, ratios: SplitRatios) -> Cohort {
    let log = planted_cohort(cfg).unwrap();
    let split = split_users(&log, ratios, SEED).unwrap();
    let ratings = build_matrix(&log, &split);
    Cohort { log, split, ratings }
}

impl Cohort {
    fn sequences(&self, users: &[String]) -> Vec<UserSequence> {
        user_sequences(&self.log, users, &self.split.item_index)
    }

    fn validation_histories(&self) -> Vec<Vec<usize>> {
        self.sequences(&self.split.val_users)
            .into_iter()
            .map(|u| u.items.into_iter().flatten().collect())
            .collect()
    }
}

fn criterion_4() -> Verdict {
    let cfg = CohortConfig {
        items: 200,
        users: 600,
        ..CohortConfig::default()
    };
    let c = cohort(&cfg, SplitRatios::default());
    let l = hypergraph_laplacian(&c.ratings).unwrap();
    let n = l.n();
    if n != 200 {
        return Verdict::Fail(format!("synthetic graph has {n} vertices, expected 200"));
    }
    let basis = exact_eigs(&l, n).unwrap();
    let rhos = [0.0, 0.05, 0.125, 0.3];
    let phis = [1.0, 10.0, 100.0];
    let kernels = [
        KernelSpec::tikhonov(1.0, 1.0).unwrap(),
        KernelSpec::random_walk(4.0, 1.0).unwrap(),
    ];
    // Any binary signal lies in PW_omega at omega = lambda_max, so the
    // hypothesis holds exactly; a low band is reported alongside, where the
    // thresholded signal is only approximately band-limited.
    let exact_band = BinarySignalConfig {
        omega: basis.eigenvalues()[n - 1],
        ones_fraction: 0.5,
        seed: SEED,
    };
    let low_band = BinarySignalConfig {
        omega: basis.eigenvalues()[n / 10],
        ..exact_band
    };
    let mut failures = Vec::new();
    let mut min_margin = f64::INFINITY;
    let mut low_failures = Vec::new();
    let mut low_residual: f64 = 0.0;
    for kernel in kernels {
        for row in verify_theorem2(&basis, &kernel, &rhos, &phis, 2000, exact_band).unwrap() {
            min_margin = min_margin.min(row.margin / row.bound.max(f64::MIN_POSITIVE));
            if !row.pass {
                failures.push(format!("{} rho={} mse={:.4e} bound={:.4e}", row.kernel, row.rho, row.empirical_mse, row.bound));
            }
        }
        for row in verify_theorem2(&basis, &kernel, &rhos, &phis, 2000, low_band).unwrap() {
            low_residual = low_residual.max(row.projection_residual);
            if !row.pass {
                low_failures.push(format!(
                    "{} rho={} mse={:.4e} exact={:.4e} bound={:.4e}",
                    row.kernel, row.rho, row.empirical_mse, row.exact_mse, row.bound
                ));
            }
        }
    }
    let note = format!(
        "low band (index {}) with projection residual {low_residual:.2}: {} of 24 points above the bound{}",
        n / 10,
        low_failures.len(),
        if low_failures.is_empty() {
            String::new()
        } else {
            format!(" [{}]", low_failures.join("; "))
        }
    );
    verdict(
        failures.is_empty(),
        format!(
            "omega = lambda_max: {} of 24 grid points above the bound, min relative margin {min_margin:.3}{}; {note}",
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(" [{}]", failures.join("; ")) }
        ),
    )
}

fn criterion_5() -> Verdict {
    let cfg = CohortConfig {
        items: 60,
        users: 200,
        clusters: 2,
        affinity: 0.95,
        max_events: 10,
        ..CohortConfig::default()
    };
    let c = cohort(&cfg, SplitRatios::default());
    let l = hypergraph_laplacian(&c.ratings).unwrap();
    let n = l.n();
    let basis = exact_eigs(&l, n).unwrap();
    let omega = basis.eigenvalues()[1];
    let y = synth_bandlimited(&basis, omega, SEED).unwrap().y;
    let unobserved = [5, 17, 33];
    let observed: Vec<usize> = (0..n).filter(|v| !unobserved.contains(v)).collect();
    let kernel = KernelSpec::tikhonov(1.0, 1.0).unwrap();
    let report = verify_theorem1(&l, &basis, &kernel, omega, &y, &observed, &[1, 2, 4]).unwrap();
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("k={} err={:.2e} bound={:.2e}", r.k, r.error, r.bound))
        .collect();
    verdict(
        report.applicable && report.rate < 0.9 && report.rows.iter().all(|r| r.pass) && report.monotone,
        format!(
            "n={n}, Lambda R(omega) = {:.3}, {}, nonincreasing: {}",
            report.rate,
            rows.join(", "),
            report.monotone
        ),
    )
}

fn criterion_6() -> Verdict {
    // scalar model
    let x_hat = DVector::from_element(1, 0.3);
    let p = DVector::from_element(1, 0.5);
    let f_delta = DVector::from_element(1, 0.2);
    let noise = NoiseConfig::isotropic(1, 0.1, 0.4).unwrap();
    let study = simulate_estimator(&x_hat, &p, &f_delta, &noise, None, 20_000, SEED).unwrap();
    let z_score = study.mean_error[0].abs() / study.std_error[0];

    // a five-dimensional diagonal model
    let k = 5;
    let x5 = DVector::from_fn(k, |i, _| i as f64 * 0.1);
    let p5 = DVector::from_fn(k, |i, _| 0.1 + 0.2 * i as f64);
    let d5 = DVector::from_element(k, -0.05);
    let n5 = NoiseConfig::new(DVector::from_element(k, 0.05), DVector::from_fn(k, |i, _| 0.3 / (i + 1) as f64)).unwrap();
    let s5 = simulate_estimator(&x5, &p5, &d5, &n5, None, 20_000, SEED + 1).unwrap();
    let worst5 = s5
        .mean_error
        .iter()
        .zip(s5.std_error.iter())
        .map(|(m, s)| m.abs() / s)
        .fold(0.0, f64::max);

    let p_bar = &p + &noise.sigma_eta;
    let k_star = kalman_gain(&p_bar, &noise.sigma_nu).unwrap();
    let trace = |g: f64| joseph_covariance(&p_bar, &noise.sigma_nu, &DVector::from_element(1, g)).sum();
    let best = trace(k_star[0]);
    let perturbed_ok = [-0.1, -0.01, 0.01, 0.1].iter().all(|d| trace(k_star[0] + d) > best);
    verdict(
        z_score <= 3.0 && worst5 <= 3.0 && perturbed_ok,
        format!(
            "scalar bias {:.1} se, 5-dim worst bias {worst5:.1} se, trace(P) at K*={:.4} is {best:.5}, minimal vs +-0.1/+-0.01: {perturbed_ok}",
            z_score, k_star[0]
        ),
    )
}

fn compare_reports(a: &MetricsReport, b: &MetricsReport) -> f64 {
    let mut worst: f64 = 0.0;
    for (cut, x) in &a.cutoffs {
        let y = &b.cutoffs[cut];
        for (u, v) in [(x.hr, y.hr), (x.hr_stderr, y.hr_stderr), (x.ndcg, y.ndcg), (x.ndcg_stderr, y.ndcg_stderr)] {
            worst = worst.max((u - v).abs());
        }
    }
    worst
}

fn criterion_7() -> Verdict {
    let cfg = CohortConfig {
        users: 1000,
        ..CohortConfig::default()
    };
    let c = cohort(&cfg, SplitRatios::default());
    let l = hypergraph_laplacian(&c.ratings).unwrap();
    let basis = exact_eigs(&l, l.n()).unwrap();
    let model = GsImcModel::fit(basis, KernelSpec::tikhonov(1.0, 10.0).unwrap()).unwrap();
    let test: Vec<String> = c.split.test_users.iter().take(100).cloned().collect();
    let users = c.sequences(&test);
    let p0 = estimate_p0(&model, &c.validation_histories()).unwrap();
    let noise = NoiseConfig::isotropic(model.k(), 1e-4, 1e6).unwrap();
    let opts = EvalOptions::default();
    let gs = evaluate_gsimc(&model, &users, &opts).unwrap();
    let bgs = evaluate_bgsimc(&model, &noise, &p0, &users, &opts).unwrap();
    let diff = compare_reports(&gs, &bgs);
    verdict(
        diff <= 1e-9 && gs.user_count == 100 && bgs.user_count == 100,
        format!(
            "{} users, max metric difference {diff:.1e}, HR@50 {:.4} vs {:.4}",
            gs.user_count, gs.cutoffs[&50].hr, bgs.cutoffs[&50].hr
        ),
    )
}

fn eigen_relative_error(exact: &SpectralBasis, approx: &SpectralBasis) -> f64 {
    exact
        .eigenvalues()
        .iter()
        .zip(approx.eigenvalues().iter())
        .map(|(a, b)| if *a > 1e-8 { (a - b).abs() / a } else { (a - b).abs() })
        .fold(0.0, f64::max)
}

fn criterion_8() -> Verdict {
    // 60 training users give a similarity of rank at most 60 < l, the regime
    // the sampled approximation is built for.
    let cfg = CohortConfig {
        items: 500,
        users: 300,
        clusters: 4,
        min_events: 50,
        max_events: 100,
        popularity: 0.0,
        ..CohortConfig::default()
    };
    let c = cohort(&cfg, SplitRatios { train: 1, val: 1, test: 3 });
    let l = hypergraph_laplacian(&c.ratings).unwrap();
    if l.n() != 500 {
        return Verdict::Fail(format!("synthetic graph has {} vertices, expected 500", l.n()));
    }
    let exact = exact_eigs(&l, 50).unwrap();
    let approx = nystrom_eigs(&l, NystromParams::new(100, 50, 10, 2, SEED)).unwrap();
    let rel = eigen_relative_error(&exact, &approx);
    let kernel = KernelSpec::tikhonov(1.0, 10.0).unwrap();
    let users = c.sequences(&c.split.test_users);
    let opts = EvalOptions::new(&[10]);
    let hr = |basis: SpectralBasis| {
        let model = GsImcModel::fit(basis, kernel).unwrap();
        evaluate_gsimc(&model, &users, &opts).unwrap().cutoffs[&10].hr
    };
    let (hr_exact, hr_approx) = (hr(exact), hr(approx));

    // for contrast: a full-rank graph with a flat spectrum
    let dense_cfg = CohortConfig {
        items: 500,
        users: 1000,
        clusters: 10,
        max_events: 20,
        ..CohortConfig::default()
    };
    let d = cohort(&dense_cfg, SplitRatios::default());
    let dl = hypergraph_laplacian(&d.ratings).unwrap();
    let dense_rel = eigen_relative_error(
        &exact_eigs(&dl, 50).unwrap(),
        &nystrom_eigs(&dl, NystromParams::new(100, 50, 10, 2, SEED)).unwrap(),
    );
    verdict(
        rel <= 0.05 && (hr_exact - hr_approx).abs() <= 0.02,
        format!(
            "rank {} similarity: max relative eigenvalue error {rel:.1e}, HR@10 exact {hr_exact:.4} vs approx {hr_approx:.4} over {} users (a rank-{} graph gives {:.0}%)",
            c.ratings.m(),
            users.len(),
            d.ratings.m(),
            dense_rel * 100.0
        ),
    )
}

fn reference_hr(recs: &[usize], truth: &HashSet<usize>, n: usize) -> f64 {
    let mut hit = 0.0;
    for r in recs.iter().take(n) {
        if truth.contains(r) {
            hit = 1.0;
        }
    }
    hit
}

fn reference_ndcg(recs: &[usize], truth: &HashSet<usize>, n: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (j, r) in recs.iter().enumerate() {
        if j >= n {
            break;
        }
        if truth.contains(r) {
            dcg += 1.0 / ((j + 2) as f64).log2();
        }
    }
    let mut ideal = 0.0;
    for j in 0..truth.len().min(n) {
        ideal += 1.0 / ((j + 2) as f64).log2();
    }
    dcg / ideal
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut pool: Vec<usize> = (0..40).collect();
        pool.shuffle(&mut rng);
        let recs: Vec<usize> = pool[..rng.random_range(0..=30)].to_vec();
        let truth: HashSet<usize> = (0..rng.random_range(0..=4)).map(|_| rng.random_range(0..40)).collect();
        let n = rng.random_range(1..=35);
        if hit_rate(&recs, &truth, n) != reference_hr(&recs, &truth, n)
            || ndcg(&recs, &truth, n) != reference_ndcg(&recs, &truth, n)
        {
            mismatches += 1;
        }
    }
    let rank2 = ndcg(&[7usize, 3], &HashSet::from([3usize]), 10);
    let rank2_err = (rank2 - 1.0 / 3f64.log2()).abs();
    verdict(
        mismatches == 0 && rank2_err <= 1e-12,
        format!("{mismatches} mismatches in 1000 cases; rank-2 NDCG error {rank2_err:.1e}"),
    )
}

fn criterion_10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let r = random_ratings(&mut rng, 60, 40, 0.1);
    let l = hypergraph_laplacian(&r).unwrap();
    let model = GsImcModel::fit(exact_eigs(&l, 40).unwrap(), KernelSpec::random_walk(4.0, 10.0).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(1..=12);
        let mut pred = model.reconstruct_items(&[]).unwrap();
        let mut seen = Vec::new();
        for _ in 0..len {
            let item = rng.random_range(0..60);
            seen.push(item);
            pred = model.incremental_update(&pred, &[item]).unwrap();
            let full = model.reconstruct_items(&seen).unwrap();
            worst = worst.max((&pred.scores - &full.scores).amax());
        }
    }
    verdict(worst <= 1e-12, format!("max |incremental - full| {worst:.1e} over 100 sequences"))
}

fn criterion_11() -> Verdict {
    let Ok(path) = std::env::var("GSIMC_KOUBEI") else {
        return Verdict::Skip("set GSIMC_KOUBEI to the Koubei interaction log to run".into());
    };
    let landmarks: usize = std::env::var("GSIMC_KOUBEI_L")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(3000);
    let report = match load_interactions(&path, false) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(format!("cannot load {path}: {e}")),
    };
    let (log, _) = prune(
        &report.interactions,
        PruneConfig {
            min_user_events: 5,
            min_item_users: 100,
        },
    );
    let split = split_users(&log, SplitRatios::default(), SEED).unwrap();
    let ratings = build_matrix(&log, &split);
    let op = HypergraphOperator::new(&ratings).unwrap();
    let k = 1000.min(ratings.n());
    let basis = nystrom_eigs(&op, NystromParams::new(landmarks.min(ratings.n()), k, 10, 2, SEED)).unwrap();
    let test = user_sequences(&log, &split.test_users, &split.item_index);
    let opts = EvalOptions::default();
    let gs_model = GsImcModel::fit(basis.clone(), KernelSpec::tikhonov(1.0, 10.0).unwrap()).unwrap();
    let gs = evaluate_gsimc(&gs_model, &test, &opts).unwrap().cutoffs[&50].hr;
    let bgs_model = GsImcModel::fit(basis, KernelSpec::random_walk(4.0, 10.0).unwrap()).unwrap();
    let val: Vec<Vec<usize>> = user_sequences(&log, &split.val_users, &split.item_index)
        .into_iter()
        .map(|u| u.items.into_iter().flatten().collect())
        .collect();
    let p0 = estimate_p0(&bgs_model, &val).unwrap();
    let noise = NoiseConfig::isotropic(k, 1e-4, 1e-4).unwrap();
    let bgs = evaluate_bgsimc(&bgs_model, &noise, &p0, &test, &opts).unwrap().cutoffs[&50].hr;
    verdict(
        (gs - 0.31995).abs() <= 0.01 && (bgs - 0.32545).abs() <= 0.01,
        format!("HR@50 GS-IMC {gs:.5} (target 0.31995), BGS-IMC {bgs:.5} (target 0.32545), n={}, l={landmarks}", ratings.n()),
    )
}

fn criterion_12() -> Verdict {
    let c = cohort(&CohortConfig::default(), SplitRatios::default());
    let l = hypergraph_laplacian(&c.ratings).unwrap();
    let k = l.n().min(100);
    let basis = exact_eigs(&l, k).unwrap();
    let model = GsImcModel::fit(basis.clone(), KernelSpec::tikhonov(1.0, 10.0).unwrap()).unwrap();
    let mut raw = Vec::new();
    let mut filtered = Vec::new();
    for u in c.sequences(&c.split.test_users) {
        let Some((_, history)) = u.items.split_last() else { continue };
        let items: BTreeSet<usize> = history.iter().flatten().copied().collect();
        if items.is_empty() {
            continue;
        }
        let prefix: Vec<usize> = items.iter().copied().collect();
        raw.push(indicator(model.n(), &items));
        filtered.push(model.reconstruct_items(&prefix).unwrap().scores);
    }
    let at = k.div_ceil(4);
    let raw_mass = spectrum_profile(&basis, &raw).unwrap().cumulative(at);
    let out_mass = spectrum_profile(&basis, &filtered).unwrap().cumulative(at);
    verdict(
        out_mass > raw_mass,
        format!("cumulative energy in the first {at} of {k} frequencies: output {out_mass:.4} vs observations {raw_mass:.4}"),
    )
}

fn main() {
    let checks: [(u32, &str, Check, Option<Duration>); 12] = [
        (1, "closed-form oracle equivalence", criterion_1, Some(Duration::from_secs(10))),
        (2, "special-case equivalences", criterion_2, Some(Duration::from_secs(5))),
        (3, "fixture regression", criterion_3, None),
        (4, "flip-noise MSE bound", criterion_4, Some(Duration::from_secs(60))),
        (5, "noiseless interpolation bound", criterion_5, Some(Duration::from_secs(30))),
        (6, "Kalman correction optimality", criterion_6, Some(Duration::from_secs(20))),
        (7, "Bayesian to closed-form reduction", criterion_7, None),
        (8, "Nystrom fidelity", criterion_8, Some(Duration::from_secs(60))),
        (9, "metric correctness", criterion_9, None),
        (10, "incremental linearity", criterion_10, None),
        (11, "Koubei HR@50 reproduction", criterion_11, None),
        (12, "spectrum low-pass property", criterion_12, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check, limit) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Verdict::Pass(d), Some(limit)) if elapsed > limit => {
                Verdict::Fail(format!("{d}; took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
            }
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {id:>2} {tag} {name}: {detail} ({:.2}s)", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
