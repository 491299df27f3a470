//! Run configuration: sectioned key = value text. Unknown sections or keys
//! are errors so typos cannot silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mvae_core::vae::{ArchSpec, TrainConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("config line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("config line {line}: unknown key {key:?} in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("config line {line}: key {key:?} appears before any section header")]
    KeyOutsideSection { line: usize, key: String },
    #[error("[{section}] {key}: cannot parse {value:?} as {expected}")]
    BadValue {
        section: String,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("missing required key [{section}] {key}")]
    MissingKey { section: String, key: String },
    #[error("referenced path does not exist: {0}")]
    MissingPath(String),
}

/// Everything a pipeline run needs, resolved against the config file's
/// directory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub reference: String,
    pub labels: Option<PathBuf>,
    pub levels: usize,
    pub lambda: f64,
    pub normalize_lambda: bool,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn reference_path(&self) -> PathBuf {
        self.dataset_dir.join(&self.reference)
    }

    pub fn hierarchy_dir(&self) -> PathBuf {
        self.out_dir.join("hierarchy")
    }

    pub fn features_path(&self) -> PathBuf {
        self.out_dir.join("features.bin")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join("checkpoint.bin")
    }

    pub fn loss_log_path(&self) -> PathBuf {
        self.out_dir.join("loss_log.tsv")
    }
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        }
        .trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: body.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(section) = &current else {
            return Err(ConfigError::KeyOutsideSection { line, key });
        };
        sections
            .get_mut(section)
            .expect("section registered")
            .insert(key, (line, value));
    }
    Ok(sections)
}

struct SectionReader<'a> {
    name: &'a str,
    entries: BTreeMap<String, (usize, String)>,
}

impl<'a> SectionReader<'a> {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        key: &str,
        expected: &'static str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                section: self.name.to_string(),
                key: key.to_string(),
                value: v,
                expected,
            }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(ConfigError::UnknownKey {
                line,
                section: self.name.to_string(),
                key,
            });
        }
        Ok(())
    }
}

/// Parses and validates a config file. Input paths must exist.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut sections = parse_sections(&text)?;
    for name in sections.keys() {
        if !["data", "hierarchy", "arch", "train", "output"].contains(&name.as_str()) {
            return Err(ConfigError::UnknownSection {
                line: 0,
                section: name.clone(),
            });
        }
    }
    let mut section = |name: &'static str| SectionReader {
        name,
        entries: sections.remove(name).unwrap_or_default(),
    };

    let mut data = section("data");
    let dataset_dir = data.take("dataset_dir").ok_or(ConfigError::MissingKey {
        section: "data".into(),
        key: "dataset_dir".into(),
    })?;
    let reference = data.take("reference").ok_or(ConfigError::MissingKey {
        section: "data".into(),
        key: "reference".into(),
    })?;
    let labels = data.take("labels");
    data.finish()?;

    let mut hier = section("hierarchy");
    let levels = hier.parse("levels", "positive integer", 1usize)?;
    let lambda = hier.parse("lambda", "real number", 0.001f64)?;
    let normalize_lambda = hier.parse("normalize_lambda", "true/false", false)?;
    hier.finish()?;

    let mut arch_s = section("arch");
    let arch = ArchSpec {
        layers: arch_s.take("layers").unwrap_or_else(|| "CCPC".to_string()),
        width: arch_s.parse("width", "positive integer", 9usize)?,
        latent: arch_s.parse("latent", "positive integer", 128usize)?,
        order: arch_s.parse("order", "positive integer", 3usize)?,
        condition: arch_s.parse("condition", "non-negative integer", 0usize)?,
    };
    arch_s.finish()?;

    let mut train_s = section("train");
    let train = TrainConfig {
        alpha: train_s.parse("alpha", "real number", 0.3f64)?,
        learning_rate: train_s.parse("learning_rate", "real number", 0.001f64)?,
        l2: train_s.parse("l2", "real number", 1e-5f64)?,
        epochs: train_s.parse("epochs", "non-negative integer", 100usize)?,
        batch_size: train_s.parse("batch_size", "non-negative integer", 0usize)?,
        seed: train_s.parse("seed", "unsigned integer", 0u64)?,
        ..TrainConfig::default()
    };
    train_s.finish()?;

    let mut output = section("output");
    let out_dir = output.take("dir").ok_or(ConfigError::MissingKey {
        section: "output".into(),
        key: "dir".into(),
    })?;
    output.finish()?;

    let resolve = |p: &str| -> PathBuf {
        let pb = PathBuf::from(p);
        if pb.is_absolute() {
            pb
        } else {
            base.join(pb)
        }
    };
    let dataset_dir = resolve(&dataset_dir);
    if !dataset_dir.is_dir() {
        return Err(ConfigError::MissingPath(dataset_dir.display().to_string()));
    }
    let reference_path = dataset_dir.join(&reference);
    if !reference_path.is_file() {
        return Err(ConfigError::MissingPath(reference_path.display().to_string()));
    }
    let labels = match labels {
        None => None,
        Some(l) => {
            let p = resolve(&l);
            if !p.is_file() {
                return Err(ConfigError::MissingPath(p.display().to_string()));
            }
            Some(p)
        }
    };
    Ok(RunConfig {
        dataset_dir,
        reference,
        labels,
        levels,
        lambda,
        normalize_lambda,
        arch,
        train,
        out_dir: resolve(&out_dir),
    })
}
