//! Files shared between subcommands, all kept in the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gsimc_core::bgsimc::STATE_FILE_VERSION;
use gsimc_core::data::{ItemIndex, SplitManifest};
use gsimc_core::io::BASIS_FORMAT_VERSION;
use gsimc_core::KernelSpec;

use crate::config::{hex, RunConfig};

pub const SPLIT_FILE: &str = "split.json";
pub const ITEMS_FILE: &str = "items.txt";
pub const BASIS_FILE: &str = "basis.bin";
pub const EIGENVALUES_FILE: &str = "eigenvalues.csv";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A missing input file. Reported as a usage error rather than a failure.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "required file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

pub fn require(path: &Path) -> Result<&Path> {
    if !path.is_file() {
        return Err(MissingInput(path.to_owned()).into());
    }
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(require(path)?)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn read_split(out: &Path) -> Result<SplitManifest> {
    read_json(&out.join(SPLIT_FILE))
}

pub fn write_items(path: &Path, index: &ItemIndex) -> Result<()> {
    let mut text = index.ids().join("\n");
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_items(path: &Path) -> Result<ItemIndex> {
    let text = fs::read_to_string(require(path)?)?;
    let ids: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect();
    Ok(ItemIndex::from_ids(ids)?)
}

/// What `fit` persists: a reference to the basis plus the filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub basis: String,
    pub basis_sha256: String,
    pub items: String,
    pub kernel: KernelSpec,
    /// Initial frequency-domain variances estimated on validation users.
    pub p0: Vec<f64>,
}

impl ModelFile {
    pub fn load(out: &Path) -> Result<Self> {
        let model: ModelFile = read_json(&out.join(MODEL_FILE))?;
        if model.version != MODEL_FORMAT_VERSION {
            bail!("unsupported model file version {}", model.version);
        }
        Ok(model)
    }

    pub fn basis_path(&self, out: &Path) -> PathBuf {
        out.join(&self.basis)
    }

    pub fn items_path(&self, out: &Path) -> PathBuf {
        out.join(&self.items)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub runs: BTreeMap<String, RunRecord>,
}

/// Records the run of `command` in the output directory's manifest, keeping
/// entries written by other subcommands.
pub fn record_run(cfg: &RunConfig, command: &str, outputs: &[&str]) -> Result<()> {
    let path = cfg.out.join(MANIFEST_FILE);
    let mut manifest: Manifest = if path.is_file() {
        read_json(&path)?
    } else {
        Manifest::default()
    };
    let versions = BTreeMap::from([
        ("gsimc".to_owned(), env!("CARGO_PKG_VERSION").to_owned()),
        ("basis_format".to_owned(), BASIS_FORMAT_VERSION.to_string()),
        ("model_format".to_owned(), MODEL_FORMAT_VERSION.to_string()),
        ("state_format".to_owned(), STATE_FILE_VERSION.to_string()),
    ]);
    manifest.runs.insert(
        command.to_owned(),
        RunRecord {
            config: cfg.canonical(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            versions,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        },
    );
    write_json(&path, &manifest)
}
