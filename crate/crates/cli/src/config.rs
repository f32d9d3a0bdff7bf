//! Run configuration: built-in defaults, then a `key = value` file, then
//! command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use gsimc_core::bgsimc::DEFAULT_NOISE;
use gsimc_core::kernels::{DEFAULT_A, DEFAULT_GAMMA, DEFAULT_PHI};
use gsimc_core::metrics::DEFAULT_CUTOFFS;
use gsimc_core::{KernelSpec, LaplacianKind, SplitRatios};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisChoice {
    Exact,
    Nystrom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelName {
    Tikhonov,
    Diffusion,
    RandomWalk,
    InverseCosine,
    Cutoff,
}

impl KernelName {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "tikhonov" => Self::Tikhonov,
            "diffusion" => Self::Diffusion,
            "random-walk" => Self::RandomWalk,
            "inverse-cosine" => Self::InverseCosine,
            "cutoff" => Self::Cutoff,
            other => bail!(
                "unknown kernel {other:?} (expected tikhonov, diffusion, random-walk, inverse-cosine or cutoff)"
            ),
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Tikhonov => "tikhonov",
            Self::Diffusion => "diffusion",
            Self::RandomWalk => "random-walk",
            Self::InverseCosine => "inverse-cosine",
            Self::Cutoff => "cutoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub strict: bool,
    pub min_user_events: usize,
    pub min_item_users: usize,
    pub split: SplitRatios,
    pub seed: u64,
    pub graph: LaplacianKind,
    pub basis: BasisChoice,
    pub k: usize,
    /// Sampled columns; defaults to `min(n, 2k + p)`.
    pub l: Option<usize>,
    pub p: usize,
    pub q: usize,
    pub kernel: KernelName,
    pub gamma: f64,
    pub a: f64,
    pub omega: Option<f64>,
    pub phi: f64,
    pub sigma_eta: f64,
    pub sigma_nu: f64,
    pub cutoffs: Vec<usize>,
    pub top_n: usize,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: PathBuf::from("gsimc-out"),
            strict: false,
            min_user_events: 0,
            min_item_users: 0,
            split: SplitRatios::default(),
            seed: 9876,
            graph: LaplacianKind::Hypergraph,
            basis: BasisChoice::Exact,
            k: 1000,
            l: None,
            p: 10,
            q: 2,
            kernel: KernelName::Tikhonov,
            gamma: DEFAULT_GAMMA,
            a: DEFAULT_A,
            omega: None,
            phi: DEFAULT_PHI,
            sigma_eta: DEFAULT_NOISE,
            sigma_nu: DEFAULT_NOISE,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            top_n: 50,
            threads: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("{key}: cannot parse {value:?}: {e}"))
}

fn bool_value(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("{key}: expected true or false, got {value:?}"),
    }
}

fn list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn ratios(value: &str) -> Result<SplitRatios> {
    let parts: Vec<u32> = value
        .split(':')
        .map(|v| num("split", v.trim()))
        .collect::<Result<_>>()?;
    let [train, val, test] = parts[..] else {
        bail!("split: expected train:val:test, got {value:?}");
    };
    Ok(SplitRatios { train, val, test })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "strict" => self.strict = bool_value(key, value)?,
            "min_user_events" => self.min_user_events = num(key, value)?,
            "min_item_users" => self.min_item_users = num(key, value)?,
            "split" => self.split = ratios(value)?,
            "seed" => self.seed = num(key, value)?,
            "graph" => self.graph = value.parse().map_err(|e| anyhow::anyhow!("graph: {e}"))?,
            "basis" => {
                self.basis = match value {
                    "exact" => BasisChoice::Exact,
                    "nystrom" => BasisChoice::Nystrom,
                    _ => bail!("basis: expected exact or nystrom, got {value:?}"),
                }
            }
            "k" => self.k = num(key, value)?,
            "l" => self.l = Some(num(key, value)?),
            "p" => self.p = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "kernel" => self.kernel = KernelName::parse(value)?,
            "gamma" => self.gamma = num(key, value)?,
            "a" => self.a = num(key, value)?,
            "omega" => self.omega = Some(num(key, value)?),
            "phi" => self.phi = num(key, value)?,
            "sigma_eta" => self.sigma_eta = num(key, value)?,
            "sigma_nu" => self.sigma_nu = num(key, value)?,
            "cutoffs" => self.cutoffs = list(key, value)?,
            "top_n" => self.top_n = num(key, value)?,
            "threads" => self.threads = Some(num(key, value)?),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", path.display(), no + 1);
            };
            self.set(key.trim(), value)
                .with_context(|| format!("{}:{}", path.display(), no + 1))?;
        }
        Ok(())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let spec = match self.kernel {
            KernelName::Tikhonov => KernelSpec::tikhonov(self.gamma, self.phi),
            KernelName::Diffusion => KernelSpec::diffusion(self.gamma, self.phi),
            KernelName::RandomWalk => KernelSpec::random_walk(self.a, self.phi),
            KernelName::InverseCosine => KernelSpec::inverse_cosine(self.phi),
            KernelName::Cutoff => {
                let Some(omega) = self.omega else {
                    bail!("the cutoff kernel needs omega");
                };
                KernelSpec::cutoff(omega, self.phi)
            }
        };
        Ok(spec?)
    }

    /// Checks everything that can be checked without running a pipeline.
    pub fn validate(&self) -> Result<()> {
        self.kernel_spec()?;
        let SplitRatios { train, val, test } = self.split;
        if train == 0 || val == 0 || test == 0 {
            bail!("split ratios must all be positive");
        }
        if self.k == 0 {
            bail!("k must be positive");
        }
        if matches!(self.l, Some(0)) {
            bail!("l must be positive");
        }
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            bail!("cutoffs must be positive");
        }
        if self.top_n == 0 {
            bail!("top_n must be positive");
        }
        for (name, v) in [("sigma_eta", self.sigma_eta), ("sigma_nu", self.sigma_nu)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive and finite");
            }
        }
        if matches!(self.threads, Some(0)) {
            bail!("threads must be positive");
        }
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path> {
        let Some(path) = self.data.as_deref() else {
            bail!(crate::UsageError(
                "no dataset given (set data in the config or pass --data)".into()
            ));
        };
        if !path.is_file() {
            return Err(crate::artifacts::MissingInput(path.to_owned()).into());
        }
        Ok(path)
    }

    /// Canonical `key = value` text with every key, in a fixed order.
    /// Thread count is left out: it never changes results.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        put("out", self.out.display().to_string());
        put("strict", self.strict.to_string());
        put("min_user_events", self.min_user_events.to_string());
        put("min_item_users", self.min_item_users.to_string());
        put("split", format!("{}:{}:{}", self.split.train, self.split.val, self.split.test));
        put("seed", self.seed.to_string());
        put("graph", self.graph.to_string());
        put("basis", match self.basis {
            BasisChoice::Exact => "exact".into(),
            BasisChoice::Nystrom => "nystrom".into(),
        });
        put("k", self.k.to_string());
        if let Some(l) = self.l {
            put("l", l.to_string());
        }
        put("p", self.p.to_string());
        put("q", self.q.to_string());
        put("kernel", self.kernel.as_str().into());
        put("gamma", self.gamma.to_string());
        put("a", self.a.to_string());
        if let Some(omega) = self.omega {
            put("omega", omega.to_string());
        }
        put("phi", self.phi.to_string());
        put("sigma_eta", self.sigma_eta.to_string());
        put("sigma_nu", self.sigma_nu.to_string());
        let cutoffs: Vec<String> = self.cutoffs.iter().map(usize::to_string).collect();
        put("cutoffs", cutoffs.join(","));
        put("top_n", self.top_n.to_string());
        out
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("kernel", "cutoff").unwrap();
        cfg.set("omega", "0.25").unwrap();
        cfg.set("split", "3:1:1").unwrap();
        cfg.set("cutoffs", "5, 20").unwrap();
        cfg.set("data", "x.tsv").unwrap();
        cfg.set("l", "40").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, cfg.canonical()).unwrap();
        let mut back = RunConfig::default();
        back.apply_file(&path).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("kernel", "gaussian").is_err());
        assert!(cfg.set("split", "8:1").is_err());
        assert!(cfg.set("phi", "ten").is_err());
        assert!(cfg.set("colour", "red").is_err());
        cfg.set("kernel", "cutoff").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("omega", "0.5").unwrap();
        cfg.validate().unwrap();
        cfg.set("phi", "-1").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# defaults\n\nphi = 1   # override\nkernel=random-walk\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.phi, 1.0);
        assert_eq!(cfg.kernel, KernelName::RandomWalk);
        std::fs::write(&path, "phi 1\n").unwrap();
        let err = cfg.apply_file(&path).unwrap_err();
        assert!(format!("{err:#}").contains(":1"));
    }
}
