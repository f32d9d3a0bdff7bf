use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use nalgebra::DVector;
use serde::Serialize;

use gsimc_core::bgsimc::{estimate_p0, init_state, update, StateFile};
use gsimc_core::data::{
    build_matrix, load_interactions, prune, split_users, DatasetSplit, ItemIndex, PruneConfig,
    PruneStats,
};
use gsimc_core::graph::{build_laplacian, HypergraphOperator};
use gsimc_core::gsimc::recommend_topn;
use gsimc_core::io::{load_basis, save_basis};
use gsimc_core::metrics::{
    evaluate_bgsimc, evaluate_gsimc, indicator, spectrum_profile, user_sequences, CutoffMetrics,
    EvalOptions, MetricsReport, DEFAULT_DEGREE_THRESHOLDS,
};
use gsimc_core::spectral::{exact_eigs, nystrom_eigs, NystromParams};
use gsimc_core::synthetic::{planted_cohort, CohortConfig};
use gsimc_core::theory::{synth_bandlimited, verify_theorem1, verify_theorem2, BinarySignalConfig};
use gsimc_core::{GsImcModel, Interaction, KernelSpec, LaplacianKind, NoiseConfig, SpectralBasis};

use crate::artifacts::{
    read_items, read_json, read_split, record_run, require, sha256_file, write_items, write_json,
    ModelFile, MissingInput, BASIS_FILE, EIGENVALUES_FILE, ITEMS_FILE, MODEL_FILE,
    MODEL_FORMAT_VERSION, SPLIT_FILE,
};
use crate::config::{BasisChoice, RunConfig};

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))
}

fn load_log(cfg: &RunConfig) -> Result<(Vec<Interaction>, usize, PruneStats)> {
    let path = cfg.data_path()?;
    let report = load_interactions(path, cfg.strict)?;
    let (log, stats) = prune(
        &report.interactions,
        PruneConfig {
            min_user_events: cfg.min_user_events,
            min_item_users: cfg.min_item_users,
        },
    );
    Ok((log, report.malformed, stats))
}

fn load_split(cfg: &RunConfig, log: &[Interaction]) -> Result<DatasetSplit> {
    let split = read_split(&cfg.out)?.into_split(log)?;
    Ok(split)
}

struct LoadedModel {
    file: ModelFile,
    model: GsImcModel,
    items: ItemIndex,
}

fn load_model(cfg: &RunConfig) -> Result<LoadedModel> {
    let file = ModelFile::load(&cfg.out)?;
    let basis_path = file.basis_path(&cfg.out);
    require(&basis_path)?;
    if sha256_file(&basis_path)? != file.basis_sha256 {
        bail!(
            "{} changed since the model was fitted; rerun fit",
            basis_path.display()
        );
    }
    let basis = load_basis(&basis_path)?;
    let items = read_items(&file.items_path(&cfg.out))?;
    if items.len() != basis.n() {
        bail!("{} lists {} items but the basis has n = {}", file.items, items.len(), basis.n());
    }
    let model = GsImcModel::fit(basis, file.kernel)?;
    Ok(LoadedModel { file, model, items })
}

/// Fails when the dataset no longer yields the item order the basis was built on.
fn check_items(split: &DatasetSplit, items: &ItemIndex) -> Result<()> {
    if split.item_index != *items {
        bail!("the dataset's training items differ from {ITEMS_FILE}; rerun ingest and eigen");
    }
    Ok(())
}

fn histories(log: &[Interaction], users: &[String], index: &ItemIndex) -> Vec<Vec<usize>> {
    user_sequences(log, users, index)
        .into_iter()
        .map(|u| u.items.into_iter().flatten().collect())
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes to stdout; a reader that has gone away is not an error.
fn emit(text: &str) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub struct SyntheticOptions {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
}

#[derive(Serialize)]
struct IngestSummary {
    events: usize,
    malformed_lines: usize,
    pruned: PruneStats,
    train_users: usize,
    val_users: usize,
    test_users: usize,
    items: usize,
}

pub fn ingest(cfg: &RunConfig, synthetic: Option<SyntheticOptions>) -> Result<()> {
    if let Some(opts) = synthetic {
        let Some(path) = cfg.data.as_deref() else {
            bail!(crate::UsageError("--synthetic needs a data path to write to".into()));
        };
        let cohort = CohortConfig {
            users: opts.users,
            items: opts.items,
            clusters: opts.clusters,
            seed: cfg.seed,
            ..CohortConfig::default()
        };
        let log = planted_cohort(&cohort)?;
        let mut text = String::new();
        for it in &log {
            let _ = writeln!(text, "{}\t{}\t{}", it.user, it.item, it.timestamp);
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_text(path, &text)?;
        info!("wrote {} synthetic events to {}", log.len(), path.display());
    }
    let (log, malformed, pruned) = load_log(cfg)?;
    let split = split_users(&log, cfg.split, cfg.seed)?;
    ensure_out(cfg)?;
    write_json(&cfg.out.join(SPLIT_FILE), &split.manifest())?;
    write_items(&cfg.out.join(ITEMS_FILE), &split.item_index)?;
    let summary = IngestSummary {
        events: log.len(),
        malformed_lines: malformed,
        pruned,
        train_users: split.train_users.len(),
        val_users: split.val_users.len(),
        test_users: split.test_users.len(),
        items: split.item_index.len(),
    };
    write_json(&cfg.out.join("ingest.json"), &summary)?;
    emit(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
    record_run(cfg, "ingest", &[SPLIT_FILE, ITEMS_FILE, "ingest.json"])
}

pub fn eigen(cfg: &RunConfig) -> Result<()> {
    let (log, _, _) = load_log(cfg)?;
    let split = load_split(cfg, &log)?;
    let ratings = build_matrix(&log, &split);
    let n = ratings.n();
    let k = cfg.k.min(n);
    if k < cfg.k {
        warn!("k = {} exceeds the {n} training items; using k = {k}", cfg.k);
    }
    let basis: SpectralBasis = match cfg.basis {
        BasisChoice::Exact => {
            let laplacian = build_laplacian(&ratings, cfg.graph)?;
            exact_eigs(&laplacian, k)?.with_laplacian_hash(laplacian.content_hash())
        }
        BasisChoice::Nystrom => {
            let l = cfg.l.unwrap_or(2 * k + cfg.p).min(n);
            let params = NystromParams::new(l, k, cfg.p, cfg.q, cfg.seed);
            match cfg.graph {
                LaplacianKind::Hypergraph => nystrom_eigs(&HypergraphOperator::new(&ratings)?, params)?,
                LaplacianKind::Covariance => nystrom_eigs(&build_laplacian(&ratings, cfg.graph)?, params)?,
            }
        }
    };
    ensure_out(cfg)?;
    save_basis(&basis, cfg.out.join(BASIS_FILE))?;
    write_items(&cfg.out.join(ITEMS_FILE), &split.item_index)?;
    let mut csv = String::from("index,eigenvalue\n");
    for (i, v) in basis.eigenvalues().iter().enumerate() {
        let _ = writeln!(csv, "{i},{v}");
    }
    write_text(&cfg.out.join(EIGENVALUES_FILE), &csv)?;
    emit(&format!(
        "n = {n}, k = {}, eigenvalues {:.6} .. {:.6}, orthonormality error {:.1e}\n",
        basis.k(),
        basis.eigenvalues()[0],
        basis.eigenvalues()[basis.k() - 1],
        basis.orthonormality_error()
    ))?;
    record_run(cfg, "eigen", &[BASIS_FILE, ITEMS_FILE, EIGENVALUES_FILE])
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let basis_path = cfg.out.join(BASIS_FILE);
    let basis = load_basis(require(&basis_path)?)?;
    let items = read_items(&cfg.out.join(ITEMS_FILE))?;
    let model = GsImcModel::fit(basis, cfg.kernel_spec()?)?;
    let (log, _, _) = load_log(cfg)?;
    let split = load_split(cfg, &log)?;
    check_items(&split, &items)?;
    let p0 = estimate_p0(&model, &histories(&log, &split.val_users, &items))?;
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        basis: BASIS_FILE.into(),
        basis_sha256: sha256_file(&basis_path)?,
        items: ITEMS_FILE.into(),
        kernel: *model.kernel(),
        p0: p0.iter().copied().collect(),
    };
    write_json(&cfg.out.join(MODEL_FILE), &file)?;
    emit(&format!("fitted {} on n = {}, k = {}\n", model.kernel(), model.n(), model.k()))?;
    record_run(cfg, "fit", &[MODEL_FILE])
}

fn rows_of(ids: &[String], items: &ItemIndex) -> Vec<usize> {
    let mut rows = Vec::new();
    for id in ids {
        match items.row(id) {
            Some(r) if !rows.contains(&r) => rows.push(r),
            Some(_) => {}
            None => warn!("item {id:?} is not in the training graph; ignored"),
        }
    }
    rows
}

fn print_ids(rows: &[usize], items: &ItemIndex) -> Result<()> {
    let mut text = String::new();
    for &r in rows {
        let _ = writeln!(text, "{}", items.id(r));
    }
    emit(&text)
}

/// Reads the user's item ids from `input`, whitespace separated.
pub fn recommend(cfg: &RunConfig, input: impl BufRead) -> Result<()> {
    let loaded = load_model(cfg)?;
    let mut ids = Vec::new();
    for line in input.lines() {
        ids.extend(line?.split_whitespace().map(str::to_owned));
    }
    let rows = rows_of(&ids, &loaded.items);
    let pred = loaded.model.reconstruct_items(&rows)?;
    print_ids(&recommend_topn(&pred, cfg.top_n), &loaded.items)
}

pub struct UpdateOptions {
    pub state: PathBuf,
    pub item: String,
    pub new_user: Option<String>,
}

pub fn update_state(cfg: &RunConfig, opts: UpdateOptions) -> Result<()> {
    let loaded = load_model(cfg)?;
    let items = &loaded.items;
    let p0 = DVector::from_vec(loaded.file.p0.clone());
    let (user, state) = match (&opts.new_user, opts.state.is_file()) {
        (Some(_), true) => bail!(crate::UsageError(format!(
            "{} already exists; drop --new-user to continue it",
            opts.state.display()
        ))),
        (Some(user), false) => (user.clone(), init_state(&loaded.model, &[], &p0)?),
        (None, true) => {
            let file: StateFile = read_json(&opts.state)?;
            let state = file.to_state(|id| items.row(id))?;
            (file.user, state)
        }
        (None, false) => return Err(MissingInput(opts.state).into()),
    };
    let Some(row) = items.row(&opts.item) else {
        bail!("item {:?} is not in the training graph", opts.item);
    };
    let delta: Vec<usize> = Some(row).filter(|r| !state.s_accum.contains(r)).into_iter().collect();
    let noise = NoiseConfig::isotropic(loaded.model.k(), cfg.sigma_eta, cfg.sigma_nu)?;
    let (next, pred) = update(&loaded.model, &state, &delta, &noise)?;
    write_json(&opts.state, &StateFile::from_state(&user, &next, items.ids()))?;
    print_ids(&recommend_topn(&pred, cfg.top_n), items)
}

#[derive(Serialize)]
struct Counts {
    users: usize,
    skipped: usize,
    unseen_targets: usize,
    dropped_history_items: usize,
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    model: &'a str,
    kernel: String,
    kernel_spec: KernelSpec,
    cutoffs: &'a [usize],
    metrics: &'a std::collections::BTreeMap<usize, CutoffMetrics>,
    counts: Counts,
    #[serde(skip_serializing_if = "Option::is_none")]
    by_degree: Option<&'a std::collections::BTreeMap<String, std::collections::BTreeMap<usize, CutoffMetrics>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    /// Closed-form reconstruction.
    Gs,
    /// Closed-form start plus one online correction.
    Bgs,
}

pub fn evaluate(cfg: &RunConfig, kind: ModelKind, by_degree: bool) -> Result<()> {
    let loaded = load_model(cfg)?;
    let (log, _, _) = load_log(cfg)?;
    let split = load_split(cfg, &log)?;
    check_items(&split, &loaded.items)?;
    let users = user_sequences(&log, &split.test_users, &loaded.items);
    let mut opts = EvalOptions::new(&cfg.cutoffs);
    if by_degree {
        let ratings = build_matrix(&log, &split);
        opts = opts.with_degree_classes(ratings.row_degrees(), DEFAULT_DEGREE_THRESHOLDS.to_vec());
    }
    let (name, report): (&str, MetricsReport) = match kind {
        ModelKind::Gs => ("gs-imc", evaluate_gsimc(&loaded.model, &users, &opts)?),
        ModelKind::Bgs => {
            let noise = NoiseConfig::isotropic(loaded.model.k(), cfg.sigma_eta, cfg.sigma_nu)?;
            let p0 = DVector::from_vec(loaded.file.p0.clone());
            ("bgs-imc", evaluate_bgsimc(&loaded.model, &noise, &p0, &users, &opts)?)
        }
    };
    let out = EvaluationReport {
        model: name,
        kernel: loaded.model.kernel().to_string(),
        kernel_spec: *loaded.model.kernel(),
        cutoffs: &cfg.cutoffs,
        metrics: &report.cutoffs,
        counts: Counts {
            users: report.user_count,
            skipped: report.skipped_count,
            unseen_targets: report.unseen_target_count,
            dropped_history_items: report.dropped_history_items,
        },
        by_degree: report.by_degree.as_ref(),
    };
    let file = format!("metrics-{name}.json");
    ensure_out(cfg)?;
    write_json(&cfg.out.join(&file), &out)?;
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))?;
    record_run(cfg, &format!("evaluate-{name}"), &[&file])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SignalKind {
    /// Raw indicator of each test user's items.
    Observed,
    /// The model's reconstruction from those items.
    Filtered,
}

pub fn spectrum(cfg: &RunConfig, signal: SignalKind) -> Result<()> {
    let loaded = load_model(cfg)?;
    let (log, _, _) = load_log(cfg)?;
    let split = load_split(cfg, &log)?;
    check_items(&split, &loaded.items)?;
    let n = loaded.model.n();
    let signals = histories(&log, &split.test_users, &loaded.items)
        .into_iter()
        .filter(|h| !h.is_empty())
        .map(|h| match signal {
            SignalKind::Observed => Ok(indicator(n, &h.into_iter().collect::<BTreeSet<_>>())),
            SignalKind::Filtered => Ok(loaded.model.reconstruct_items(&h)?.scores),
        })
        .collect::<Result<Vec<_>>>()?;
    let profile = spectrum_profile(loaded.model.basis(), &signals)?;
    let name = match signal {
        SignalKind::Observed => "spectrum-observed.csv",
        SignalKind::Filtered => "spectrum-filtered.csv",
    };
    ensure_out(cfg)?;
    write_text(&cfg.out.join(name), &profile.to_csv())?;
    let quarter = profile.energy.len().div_ceil(4);
    emit(&format!(
        "{} users, energy in the first {quarter} of {} frequencies: {:.4}\n",
        profile.users,
        profile.energy.len(),
        profile.cumulative(quarter)
    ))?;
    record_run(cfg, name.trim_end_matches(".csv"), &[name])
}

pub struct VerifyOptions {
    pub theorem: u8,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    pub trials: usize,
    pub ones_fraction: f64,
    pub band_index: Option<usize>,
    pub unobserved: Option<Vec<usize>>,
    pub powers: Vec<u32>,
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn verify(cfg: &RunConfig, opts: VerifyOptions) -> Result<()> {
    let (log, _, _) = load_log(cfg)?;
    let split = load_split(cfg, &log)?;
    let ratings = build_matrix(&log, &split);
    let laplacian = build_laplacian(&ratings, cfg.graph)?;
    let n = laplacian.n();
    let basis = exact_eigs(&laplacian, n)?;
    let kernel = cfg.kernel_spec()?;
    let mut csv = String::new();
    let name = match opts.theorem {
        1 => {
            let index = opts.band_index.unwrap_or(1).min(n - 1);
            let omega = basis.eigenvalues()[index];
            let unobserved = opts.unobserved.unwrap_or_else(|| (0..n).step_by(20).collect());
            if let Some(&bad) = unobserved.iter().find(|&&v| v >= n) {
                bail!(crate::UsageError(format!("unobserved vertex {bad} out of range (n = {n})")));
            }
            let observed: Vec<usize> = (0..n).filter(|v| !unobserved.contains(v)).collect();
            let y = synth_bandlimited(&basis, omega, cfg.seed)?.y;
            let report = verify_theorem1(&laplacian, &basis, &kernel, omega, &y, &observed, &opts.powers)?;
            csv.push_str("kernel,band_index,omega,poincare,rate,applicable,k,error,bound,pass\n");
            for row in &report.rows {
                let _ = writeln!(
                    csv,
                    "{},{index},{omega},{},{},{},{},{},{},{}",
                    csv_quote(&kernel.to_string()),
                    report.poincare,
                    report.rate,
                    report.applicable,
                    row.k,
                    row.error,
                    row.bound,
                    row.pass
                );
            }
            "verify-theorem1.csv"
        }
        2 => {
            let index = opts.band_index.unwrap_or(n - 1).min(n - 1);
            let signal = BinarySignalConfig {
                omega: basis.eigenvalues()[index],
                ones_fraction: opts.ones_fraction,
                seed: cfg.seed,
            };
            let rows = verify_theorem2(&basis, &kernel, &opts.rho, &opts.phi, opts.trials, signal)?;
            csv.push_str("kernel,band_index,rho,phi,empirical_mse,mse_stderr,exact_mse,bound,margin,pass,projection_residual,energy_ratio\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{index},{},{},{},{},{},{},{},{},{},{}",
                    csv_quote(&r.kernel),
                    r.rho,
                    r.phi,
                    r.empirical_mse,
                    r.mse_stderr,
                    r.exact_mse,
                    r.bound,
                    r.margin,
                    r.pass,
                    r.projection_residual,
                    r.energy_ratio
                );
            }
            "verify-theorem2.csv"
        }
        other => bail!(crate::UsageError(format!("unknown theorem {other}; expected 1 or 2"))),
    };
    ensure_out(cfg)?;
    write_text(&cfg.out.join(name), &csv)?;
    emit(&csv)?;
    record_run(cfg, name.trim_end_matches(".csv"), &[name])
}
