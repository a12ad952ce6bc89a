//! TOML session manifest.
//!
//! ```toml
//! seed = 0
//!
//! [[session]]
//! id = "s0"
//! path = "s0.ply"
//! role = "reference"
//!
//! [[session]]
//! id = "s1"
//! path = "s1.ply"
//!
//! [labelling]
//! lambda = 0.5
//! ```
//!
//! Parameter tables (`csf`, `sor`, `normals`, `icp`, `labelling`, `tiling`,
//! `weights`, `evaluation`) are optional and default field by field. Relative
//! paths are resolved against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud::{NormalParams, Vec3};
use crate::error::{Error, Result};
use crate::labelling::LabellingParams;
use crate::metrics::WeightParams;
use crate::preprocess::{CsfParams, SorParams};
use crate::registration::IcpParams;
use crate::tiling::TilingParams;

use super::{read_text, write_text};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionRole {
    Reference,
    #[default]
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub role: SessionRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalSettings {
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viewpoint: Option<[f64; 3]>,
}

impl Default for NormalSettings {
    fn default() -> Self {
        let d = NormalParams::default();
        NormalSettings { k: d.k, viewpoint: None }
    }
}

impl NormalSettings {
    pub fn params(&self) -> NormalParams {
        NormalParams { k: self.k, viewpoint: self.viewpoint.map(Vec3::from) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LabellingSection {
    lambda: f64,
}

impl Default for LabellingSection {
    fn default() -> Self {
        LabellingSection { lambda: LabellingParams::default().lambda }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, rename = "session")]
    sessions: Vec<SessionEntry>,
    #[serde(default)]
    csf: CsfParams,
    #[serde(default)]
    sor: SorParams,
    #[serde(default)]
    normals: NormalSettings,
    #[serde(default)]
    icp: IcpParams,
    #[serde(default)]
    labelling: LabellingSection,
    #[serde(default)]
    tiling: TilingParams,
    #[serde(default)]
    weights: WeightParams,
    #[serde(default)]
    evaluation: EvaluationSection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionManifest {
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
    /// Seed for every random choice downstream; also the tiling seed.
    pub seed: u64,
    pub sessions: Vec<SessionEntry>,
    pub csf: CsfParams,
    pub sor: SorParams,
    pub normals: NormalSettings,
    pub icp: IcpParams,
    pub lambda: f64,
    pub tiling: TilingParams,
    pub weights: WeightParams,
    /// Predictions file to evaluate against the reference map.
    pub predictions: Option<PathBuf>,
}

impl SessionManifest {
    /// Manifest with default parameters for the given sessions.
    pub fn new(base_dir: impl Into<PathBuf>, sessions: Vec<SessionEntry>, seed: u64) -> Self {
        SessionManifest {
            base_dir: base_dir.into(),
            seed,
            sessions,
            csf: CsfParams::default(),
            sor: SorParams::default(),
            normals: NormalSettings::default(),
            icp: IcpParams::default(),
            lambda: LabellingParams::default().lambda,
            tiling: TilingParams { seed, ..TilingParams::default() },
            weights: WeightParams::default(),
            predictions: None,
        }
    }

    /// Reads and validates a manifest, including that every path exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::from_toml_str(&read_text(path)?, base).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::parse(path, line, message),
            other => other,
        })?;
        manifest.check_paths()?;
        Ok(manifest)
    }

    /// Like [`load`](Self::load), with `section.key=value` overrides applied
    /// to the TOML before validation, e.g. `icp.max_correspondence_dist=1.5`.
    /// Values are read as TOML and fall back to plain strings. A `seed`
    /// override also replaces any tiling seed.
    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let mut table: toml::Table = read_text(path)?
            .parse()
            .map_err(|e: toml::de::Error| Error::parse(path, 0, e.message().to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let text = toml::to_string(&table).map_err(|e| Error::param(e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::from_toml_str(&text, base)?;
        manifest.check_paths()?;
        Ok(manifest)
    }

    /// Parses and validates everything except file existence.
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let raw: ManifestFile = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::parse("manifest", line, e.message().to_string())
        })?;
        let seed = match (raw.seed, raw.tiling.seed) {
            (Some(top), tile) if tile != 0 && tile != top => {
                return Err(Error::param(format!("seed {top} conflicts with tiling seed {tile}")))
            }
            (Some(top), _) => top,
            (None, tile) => tile,
        };
        let manifest = SessionManifest {
            base_dir: base_dir.into(),
            seed,
            sessions: raw.sessions,
            csf: raw.csf,
            sor: raw.sor,
            normals: raw.normals,
            icp: raw.icp,
            lambda: raw.labelling.lambda,
            tiling: TilingParams { seed, ..raw.tiling },
            weights: raw.weights,
            predictions: raw.evaluation.predictions,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let raw = ManifestFile {
            seed: Some(self.seed),
            sessions: self.sessions.clone(),
            csf: self.csf.clone(),
            sor: self.sor.clone(),
            normals: self.normals.clone(),
            icp: self.icp.clone(),
            labelling: LabellingSection { lambda: self.lambda },
            tiling: TilingParams { seed: self.seed, ..self.tiling.clone() },
            weights: self.weights.clone(),
            evaluation: EvaluationSection { predictions: self.predictions.clone() },
        };
        toml::to_string(&raw).map_err(|e| Error::param(format!("cannot serialise manifest: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_toml_string()?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sessions.len() < 2 {
            return Err(Error::NeedTwoObservations);
        }
        let references = self.sessions.iter().filter(|s| s.role == SessionRole::Reference).count();
        if references != 1 {
            return Err(Error::param(format!("manifest needs exactly one reference session, found {references}")));
        }
        let mut ids = BTreeSet::new();
        for s in &self.sessions {
            let safe = !s.id.is_empty()
                && s.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                && !s.id.starts_with('.');
            if !safe {
                return Err(Error::param(format!("session id \"{}\" must be a plain file-name word", s.id)));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::param(format!("duplicate session id \"{}\"", s.id)));
            }
        }
        self.csf.validate()?;
        self.sor.validate()?;
        if self.normals.k < 3 {
            return Err(Error::param("normals k must be >= 3"));
        }
        self.icp.validate()?;
        LabellingParams { lambda: self.lambda, reference_index: 0 }.validate()?;
        self.tiling.validate()?;
        self.weights.validate()
    }

    pub fn check_paths(&self) -> Result<()> {
        let missing = self
            .sessions
            .iter()
            .map(|s| self.resolve(&s.path))
            .chain(self.predictions.iter().map(|p| self.resolve(p)))
            .find(|p| !p.is_file());
        match missing {
            Some(p) => Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            )),
            None => Ok(()),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn reference_index(&self) -> usize {
        self.sessions
            .iter()
            .position(|s| s.role == SessionRole::Reference)
            .expect("validated manifest has a reference session")
    }

    pub fn labelling(&self) -> LabellingParams {
        LabellingParams { lambda: self.lambda, reference_index: self.reference_index() }
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::param(format!("override \"{item}\" is not key=value")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::param(format!("invalid override key \"{key}\"")));
    }
    if parts == ["seed"] {
        if let Some(toml::Value::Table(tiling)) = table.get_mut("tiling") {
            tiling.remove("seed");
        }
    }
    let (last, sections) = parts.split_last().expect("non-empty key");
    let mut current = table;
    for section in sections {
        let entry = current
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| Error::param(format!("override key \"{key}\" goes through a non-table value")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "seed = 3\n[[session]]\nid = \"a\"\npath = \"a.ply\"\nrole = \"reference\"\n[[session]]\nid = \"b\"\npath = \"b.ply\"\n";

    #[test]
    fn defaults_and_round_trip() {
        let m = SessionManifest::from_toml_str(TWO, "/data").unwrap();
        assert_eq!(m.reference_index(), 0);
        assert_eq!(m.tiling.seed, 3);
        assert_eq!(m.lambda, 0.5);
        assert_eq!(m.resolve(&m.sessions[1].path), PathBuf::from("/data/b.ply"));
        let text = m.to_toml_string().unwrap();
        assert_eq!(SessionManifest::from_toml_str(&text, "/data").unwrap(), m);
    }

    #[test]
    fn one_session_is_rejected() {
        let one = "[[session]]\nid = \"a\"\npath = \"a.ply\"\nrole = \"reference\"\n";
        let e = SessionManifest::from_toml_str(one, ".").unwrap_err();
        assert_eq!(e.to_string(), "need at least two observations");
    }

    #[test]
    fn invalid_manifests() {
        let no_ref = TWO.replace("role = \"reference\"", "");
        assert!(SessionManifest::from_toml_str(&no_ref, ".").is_err());
        let dup = TWO.replace("id = \"b\"", "id = \"a\"");
        assert!(SessionManifest::from_toml_str(&dup, ".").is_err());
        let bad_param = format!("{TWO}[labelling]\nlambda = -1.0\n");
        assert!(SessionManifest::from_toml_str(&bad_param, ".").is_err());
        let unknown = format!("{TWO}[tiling]\nsubmap = 3\n");
        assert!(matches!(SessionManifest::from_toml_str(&unknown, "."), Err(Error::Parse { .. })));
        let seeds = format!("{TWO}[tiling]\nseed = 4\n");
        assert!(SessionManifest::from_toml_str(&seeds, ".").is_err());
    }

    #[test]
    fn overrides_reach_nested_params() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(&path, format!("{TWO}[tiling]\nseed = 3\n")).unwrap();
        std::fs::write(dir.path().join("a.ply"), "").unwrap();
        std::fs::write(dir.path().join("b.ply"), "").unwrap();
        let over = ["seed=11".to_string(), "icp.max_correspondence_dist=1.5".into(), "weights.density_estimator.kind=kernel".into(), "weights.density_estimator.bandwidth=0.1".into()];
        let m = SessionManifest::load_with_overrides(&path, &over).unwrap();
        assert_eq!((m.seed, m.tiling.seed), (11, 11));
        assert_eq!(m.icp.max_correspondence_dist, 1.5);
        assert_eq!(m.weights.density_estimator, crate::metrics::DensityEstimator::Kernel { bandwidth: 0.1 });
        assert!(SessionManifest::load_with_overrides(&path, &["icp.nope=1".into()]).is_err());
        assert!(SessionManifest::load_with_overrides(&path, &["novalue".into()]).is_err());
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(&path, TWO).unwrap();
        assert!(matches!(SessionManifest::load(&path), Err(Error::Io { .. })));
        std::fs::write(dir.path().join("a.ply"), "").unwrap();
        std::fs::write(dir.path().join("b.ply"), "").unwrap();
        assert!(SessionManifest::load(&path).is_ok());
    }
}
