//! Experiment configuration file (TOML).
//!
//! Every section is optional and falls back to defaults; unknown keys are
//! rejected. `schema_version` is mandatory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentRanges, FrameTransformConfig};
use crate::compose::{ComposeConfig, GenConfig};
use crate::error::{Error, Result};
use crate::ingest::{CatalogLayout, ChromaParams};
use crate::sample::ScheduleConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub catalog: CatalogLayout,
    #[serde(default)]
    pub chroma: ChromaParams,
    #[serde(default)]
    pub augment: AugmentRanges,
    #[serde(default)]
    pub generation: GenConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub frame_transform: FrameTransformConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema_version: SCHEMA_VERSION,
            catalog: CatalogLayout::default(),
            chroma: ChromaParams::default(),
            augment: AugmentRanges::default(),
            generation: GenConfig::default(),
            schedule: ScheduleConfig::default(),
            frame_transform: FrameTransformConfig::default(),
        }
    }
}

/// 1-based line of `key` inside `[section]` (or of the section header when
/// the key is not written out).
fn locate(source: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut in_section = false;
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            let top = name.split('.').next().unwrap_or("");
            in_section = top == section;
            if in_section && header_line.is_none() {
                header_line = Some(i + 1);
            }
            if in_section {
                if let Some(k) = key {
                    if name.split('.').nth(1) == Some(k) {
                        return Some(i + 1);
                    }
                }
            }
            continue;
        }
        if in_section {
            if let Some(k) = key {
                let lhs = line.split('=').next().unwrap_or("").trim();
                if lhs == k {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

/// Line of `key` inside `[section]`, only if it is written out.
fn locate_key(source: &str, section: &str, key: &str) -> Option<usize> {
    let header = locate(source, section, None);
    locate(source, section, Some(key)).filter(|&l| Some(l) != header || header_names_key(source, l, key))
}

fn header_names_key(source: &str, line: usize, key: &str) -> bool {
    source
        .lines()
        .nth(line - 1)
        .is_some_and(|l| l.trim().trim_matches(|c| c == '[' || c == ']').split('.').nth(1) == Some(key))
}

impl Config {
    pub fn parse(source: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(source).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            let line = source
                .lines()
                .position(|l| l.trim_start().starts_with("schema_version"))
                .map_or(1, |i| i + 1);
            return Err(Error::Config(format!(
                "line {line}: unsupported schema_version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        if let Err(Error::Config(msg)) = cfg.validate() {
            let path = msg.split(':').next().unwrap_or("");
            let mut parts = path.splitn(2, '.');
            let section = parts.next().unwrap_or("");
            let key = parts.next();
            // The named key may be at its default; fall back to other keys the message mentions.
            let mentioned = msg[path.len()..]
                .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .filter(|w| w.contains('_'));
            let line = key
                .into_iter()
                .chain(mentioned)
                .find_map(|k| locate_key(source, section, k))
                .or_else(|| locate(source, section, None));
            return Err(Error::Config(match line {
                Some(line) => format!("line {line}: {msg}"),
                None => msg,
            }));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.chroma.validate()?;
        if self.catalog.max_face_side < 16 {
            return Err(Error::Config("catalog.max_face_side: must be at least 16".into()));
        }
        if self.catalog.faces.is_empty() {
            return Err(Error::Config("catalog.faces: at least one face source is required".into()));
        }
        self.augment.validate()?;
        self.generation.validate()?;
        self.schedule.validate()?;
        self.frame_transform.validate()
    }

    pub fn compose(&self) -> ComposeConfig {
        ComposeConfig {
            generation: self.generation.clone(),
            augment: self.augment.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}
