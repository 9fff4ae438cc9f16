//! Pipeline configuration, loaded from a JSON file. Relative paths inside
//! the file resolve against the file's own directory, so a config can move
//! together with its inputs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("namespace {namespace:?} must end with '/' or '#'")]
    BadNamespace { namespace: String },
    #[error("vocabulary {name:?} declared twice")]
    DuplicateVocabulary { name: String },
    #[error("vocabulary_order names unknown vocabulary {name:?}")]
    UnknownVocabularyInOrder { name: String },
    #[error("vocabulary_order must list every vocabulary exactly once")]
    IncompleteVocabularyOrder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub foods: PathBuf,
    pub contents: PathBuf,
    pub associations: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drugs: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularySource {
    pub name: String,
    pub path: PathBuf,
}

fn default_review_max_distance() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    #[serde(default)]
    pub vocabularies: Vec<VocabularySource>,
    /// Overrides the declaration order used when several vocabularies could
    /// supply an identifier. Must list every vocabulary exactly once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary_order: Option<Vec<String>>,
    pub namespace: String,
    /// TSV file of `prefix TAB iri` declarations.
    pub prefixes: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curation_overrides: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plural_exceptions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_extension: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "HashMap::is_empty")]
    pub column_renames: HashMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_subclasses: Vec<String>,
    #[serde(default = "default_review_max_distance")]
    pub review_max_distance: usize,
}

impl PipelineConfig {
    /// Reads and validates a config file; every relative path inside it is
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.inputs.foods);
        resolve(&mut self.inputs.contents);
        resolve(&mut self.inputs.associations);
        if let Some(drugs) = &mut self.inputs.drugs {
            resolve(drugs);
        }
        for vocabulary in &mut self.vocabularies {
            resolve(&mut vocabulary.path);
        }
        resolve(&mut self.prefixes);
        if let Some(p) = &mut self.curation_overrides {
            resolve(p);
        }
        if let Some(p) = &mut self.plural_exceptions {
            resolve(p);
        }
        if let Some(p) = &mut self.schema_extension {
            resolve(p);
        }
        resolve(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.namespace.ends_with('/') && !self.namespace.ends_with('#') {
            return Err(ConfigError::BadNamespace { namespace: self.namespace.clone() });
        }
        let mut seen = std::collections::BTreeSet::new();
        for vocabulary in &self.vocabularies {
            if !seen.insert(vocabulary.name.as_str()) {
                return Err(ConfigError::DuplicateVocabulary { name: vocabulary.name.clone() });
            }
        }
        if let Some(order) = &self.vocabulary_order {
            let mut ordered = std::collections::BTreeSet::new();
            for name in order {
                if !seen.contains(name.as_str()) {
                    return Err(ConfigError::UnknownVocabularyInOrder { name: name.clone() });
                }
                if !ordered.insert(name.as_str()) {
                    return Err(ConfigError::IncompleteVocabularyOrder);
                }
            }
            if ordered.len() != seen.len() {
                return Err(ConfigError::IncompleteVocabularyOrder);
            }
        }
        Ok(())
    }
}
