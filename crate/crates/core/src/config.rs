//! Pipeline configuration, read from a single JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_PERMUTATIONS;
use crate::generation::DEFAULT_PER_ARG_LIMIT;
use crate::ordinal::{OrdinalConfig, SvmConfig};
use crate::properties::{DtParams, Strategy};
use crate::seq2seq::Seq2SeqConfig;

pub const SEED_ENV: &str = "JOCI_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    /// Templates seen fewer times are pruned before derivation.
    pub min_count: u64,
    pub cut_depth: usize,
    pub strategies: Vec<Strategy>,
    pub per_arg_limit: usize,
    pub dt: DtParams,
    pub freq_k: usize,
    /// Person names mapped to "person" during extraction, beyond honorifics.
    pub person_names: Vec<String>,
    pub seq2seq: Seq2SeqConfig,
    pub ordinal: OrdinalConfig,
    pub svm: SvmConfig,
    pub permutations: usize,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            min_count: 1,
            cut_depth: 4,
            strategies: Strategy::ALL.to_vec(),
            per_arg_limit: DEFAULT_PER_ARG_LIMIT,
            dt: DtParams::default(),
            freq_k: 10,
            person_names: Vec::new(),
            seq2seq: Seq2SeqConfig::default(),
            ordinal: OrdinalConfig::default(),
            svm: SvmConfig::default(),
            permutations: DEFAULT_PERMUTATIONS,
            seed: None,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::parse(&path.display().to_string(), e.line(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_arg_limit == 0 {
            return Err(Error::invalid("per_arg_limit must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid("at least one derivation strategy is required"));
        }
        self.seq2seq.validate()
    }

    /// Checks that every configured input path exists.
    pub fn validate_paths(&self) -> Result<()> {
        for p in [&self.paths.corpus, &self.paths.taxonomy, &self.paths.embeddings].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::invalid(format!("configured path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Explicit seed, else `JOCI_SEED`, else 0.
    pub fn resolve_seed(&self, explicit: Option<u64>) -> Result<u64> {
        if let Some(s) = explicit.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"cut_depth": 3, "seq2seq": {"hidden_size": 8}}"#).unwrap();
        assert_eq!(cfg.cut_depth, 3);
        assert_eq!(cfg.seq2seq.hidden_size, 8);
        assert_eq!(cfg.seq2seq.num_layers, 1);
        assert_eq!(cfg.per_arg_limit, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"cut_dept": 3}"#).is_err());
    }

    #[test]
    fn explicit_seed_wins() {
        let cfg = PipelineConfig { seed: Some(5), ..Default::default() };
        assert_eq!(cfg.resolve_seed(Some(9)).unwrap(), 9);
        assert_eq!(cfg.resolve_seed(None).unwrap(), 5);
    }
}
