//! Run configuration: TOML file, dotted `key=value` overrides, validation.

use std::path::{Path, PathBuf};

use advmap_core::attacks::{AttackConfig, AttackKind};
use advmap_core::geometry::SnnConfig;
use advmap_core::nn::{Architecture, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`, `t10k-*` in `dir`.
    Mnist,
    /// `data_batch_1.bin` .. `data_batch_5.bin` and `test_batch.bin` in `dir`.
    Cifar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub format: DataFormat,
    pub dir: PathBuf,
    /// Training images used for fitting; 0 keeps all.
    pub train_limit: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            format: DataFormat::Mnist,
            dir: PathBuf::from("data/mnist"),
            train_limit: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub kinds: Vec<AttackKind>,
    /// Correctly classified test inputs attacked per norm attack.
    pub inputs: usize,
    /// Rubbish examples generated per variant.
    pub rubbish: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            kinds: AttackKind::ALL.to_vec(),
            inputs: 2000,
            rubbish: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Training rows indexed for every neighbour query.
    pub reference_limit: usize,
    pub knn_k: usize,
    pub hull_k: usize,
    pub min_pair_count: u32,
    /// Most frequent confusions analysed per attack.
    pub max_pairs: usize,
    /// Records per class pair entering the profile, ratio, and manifold analyses.
    pub queries_per_pair: usize,
    /// Clean test rows offered to the entanglement batches.
    pub clean_limit: usize,
    pub snn: SnnConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            reference_limit: 10000,
            knn_k: 75,
            hull_k: 50,
            min_pair_count: 50,
            max_pairs: 3,
            queries_per_pair: 100,
            clean_limit: 1000,
            snn: SnnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedMethod {
    Pca,
    /// Reads `layer<l>.csv` files (`id,x,y`) from `embed.import_dir`.
    Import,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub method: EmbedMethod,
    pub import_dir: Option<PathBuf>,
    /// Points per source tag (test set, each corpus).
    pub per_source: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            method: EmbedMethod::Pca,
            import_dir: None,
            per_source: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub network: Architecture,
    pub out: PathBuf,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub corpus: CorpusConfig,
    pub attacks: AttackConfig,
    pub analysis: AnalysisConfig,
    pub embed: EmbedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            network: Architecture::MnistFc,
            out: PathBuf::from("runs/mnist-fc"),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            attacks: AttackConfig::default(),
            analysis: AnalysisConfig::default(),
            embed: EmbedConfig::default(),
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

/// Applies `a.b.c=value` to `root`, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(key, "empty key segment"));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(key, format!("`{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

/// Deserialises with the dotted path of the failing key in the error.
pub fn from_table(table: toml::Table) -> Result<RunConfig, CliError> {
    let value = toml::Value::Table(table);
    serde_path_to_error::deserialize::<_, RunConfig>(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let key = match unknown_field(&inner) {
            Some(f) if path == "." || path.is_empty() => f.to_string(),
            Some(f) => format!("{path}.{f}"),
            None => path,
        };
        CliError::config(key, inner.trim())
    })
}

fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.split("unknown field `").nth(1)?;
    rest.split('`').next()
}

/// Loads `path` (or defaults), applies overrides in order, then validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::missing(p, e.to_string()))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::config("<file>", e.to_string().trim()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg = from_table(table)?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Value checks; existence of input paths is checked by the stages that read them.
pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.train.seed != 0 {
        return Err(CliError::config("train.seed", "set the global `seed`; stage seeds derive from it"));
    }
    if cfg.attacks.seed != 0 {
        return Err(CliError::config("attacks.seed", "set the global `seed`; stage seeds derive from it"));
    }
    cfg.train
        .validate()
        .map_err(|e| CliError::config("train", e.to_string()))?;
    cfg.attacks
        .validate()
        .map_err(|e| CliError::config("attacks", e.to_string()))?;
    cfg.analysis
        .snn
        .validate()
        .map_err(|e| CliError::config("analysis.snn", e.to_string()))?;
    let a = &cfg.analysis;
    for (key, v) in [
        ("analysis.knn_k", a.knn_k),
        ("analysis.hull_k", a.hull_k),
        ("analysis.reference_limit", a.reference_limit),
        ("analysis.queries_per_pair", a.queries_per_pair),
        ("analysis.clean_limit", a.clean_limit),
    ] {
        if v == 0 {
            return Err(CliError::config(key, "must be >= 1"));
        }
    }
    if a.reference_limit < a.knn_k.max(a.hull_k) {
        return Err(CliError::config("analysis.reference_limit", "must be at least the larger k"));
    }
    if cfg.embed.per_source == 0 {
        return Err(CliError::config("embed.per_source", "must be >= 1"));
    }
    if cfg.embed.method == EmbedMethod::Import && cfg.embed.import_dir.is_none() {
        return Err(CliError::config("embed.import_dir", "required when embed.method = \"import\""));
    }
    let wants_cifar = cfg.network == Architecture::CifarVgg;
    if wants_cifar != (cfg.data.format == DataFormat::Cifar) {
        return Err(CliError::config("data.format", "does not match the network's input shape"));
    }
    let mut kinds = cfg.corpus.kinds.clone();
    kinds.sort();
    kinds.dedup();
    if kinds.len() != cfg.corpus.kinds.len() {
        return Err(CliError::config("corpus.kinds", "duplicate attack kind"));
    }
    Ok(())
}
