//! Stage-by-stage driver over a manifest and an output directory.
//!
//! Each stage reads what the previous one wrote, so running the stages one
//! at a time produces the same files as [`run_pipeline`]:
//!
//! | stage        | reads                          | writes                          |
//! |--------------|--------------------------------|---------------------------------|
//! | `preprocess` | session clouds                 | `filtered/<id>.ply`             |
//! | `register`   | `filtered/`                    | `registered/<id>.ply`, `registration.json` |
//! | `label`      | `registered/`, `registration.json` | `labelled/<id>.ply`         |
//! | `tile`       | `labelled/<reference>.ply`     | `batch.txt`                     |
//! | `evaluate`   | `labelled/`, optional predictions and `batch.txt` | `report.txt`, `report.json` |

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{estimate_normals, PointCloud};
use crate::error::{Error, Result};
use crate::io::{
    read_batch, read_labelled_ply, read_ply, read_predictions, write_batch, write_ply, write_report, BatchFile,
    BatchHeader, NormalSettings, Report, SessionEntry, SessionManifest, SessionRole,
};
use crate::labelling::{label_all, LabelledCloud};
use crate::metrics::{evaluate, EvaluationInput, EvaluationReport};
use crate::preprocess::{filter_observation, CsfParams, SorParams};
use crate::registration::{IcpResult, RegisteredMap, RigidTransform};
use crate::synth::SessionBundle;
use crate::tiling::tile_submaps;

pub const STAGES: [&str; 5] = ["preprocess", "register", "label", "tile", "evaluate"];

/// File locations inside an output directory.
#[derive(Clone, Debug)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }
    pub fn filtered(&self, id: &str) -> PathBuf {
        self.root.join("filtered").join(format!("{id}.ply"))
    }
    pub fn registered(&self, id: &str) -> PathBuf {
        self.root.join("registered").join(format!("{id}.ply"))
    }
    pub fn registration(&self) -> PathBuf {
        self.root.join("registration.json")
    }
    pub fn labelled(&self, id: &str) -> PathBuf {
        self.root.join("labelled").join(format!("{id}.ply"))
    }
    pub fn batch(&self) -> PathBuf {
        self.root.join("batch.txt")
    }
    /// Report stem; the files are `report.txt` and `report.json`.
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub session: String,
    pub role: SessionRole,
    /// Session frame to reference frame.
    pub transform: RigidTransform,
    /// Absent for the reference session.
    pub icp: Option<IcpResult>,
}

/// Ground removal, outlier removal and normal estimation for one session.
pub fn preprocess_cloud(cloud: &PointCloud, csf: &CsfParams, sor: &SorParams, normals: &NormalSettings) -> Result<PointCloud> {
    let filtered = filter_observation(cloud, csf, sor)?;
    Ok(estimate_normals(&filtered, &normals.params())?.cloud)
}

pub fn stage_preprocess(manifest: &SessionManifest, out: &OutputLayout) -> Result<()> {
    // collect everything first so the reported error is always the first session's
    let results: Vec<Result<()>> = manifest
        .sessions
        .par_iter()
        .map(|s| {
            read_ply(manifest.resolve(&s.path))
                .and_then(|cloud| preprocess_cloud(&cloud, &manifest.csf, &manifest.sor, &manifest.normals))
                .and_then(|cloud| write_ply(out.filtered(&s.id), &cloud))
                .map_err(|e| e.in_stage("preprocess", &s.id))
        })
        .collect();
    results.into_iter().collect()
}

pub fn stage_register(manifest: &SessionManifest, out: &OutputLayout) -> Result<Vec<RegistrationRecord>> {
    let ref_entry = &manifest.sessions[manifest.reference_index()];
    let reference = read_ply(out.filtered(&ref_entry.id))
        .map(RegisteredMap::reference)
        .map_err(|e| e.in_stage("register", &ref_entry.id))?;

    let mut records = Vec::with_capacity(manifest.sessions.len());
    for s in &manifest.sessions {
        let record = if s.role == SessionRole::Reference {
            write_ply(out.registered(&s.id), reference.cloud())?;
            RegistrationRecord { session: s.id.clone(), role: s.role, transform: RigidTransform::identity(), icp: None }
        } else {
            let (map, icp) = read_ply(out.filtered(&s.id))
                .and_then(|obs| RegisteredMap::align(&obs, &reference, &manifest.icp))
                .map_err(|e| e.in_stage("register", &s.id))?;
            write_ply(out.registered(&s.id), map.cloud())?;
            RegistrationRecord { session: s.id.clone(), role: s.role, transform: *map.transform(), icp: Some(icp) }
        };
        records.push(record);
    }
    let mut json = serde_json::to_string_pretty(&records).map_err(|e| Error::param(e.to_string()))?;
    json.push('\n');
    crate::io::write_text(&out.registration(), &json)?;
    Ok(records)
}

fn read_registration(out: &OutputLayout) -> Result<Vec<RegistrationRecord>> {
    let path = out.registration();
    let text = crate::io::read_text(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))
}

pub fn stage_label(manifest: &SessionManifest, out: &OutputLayout) -> Result<Vec<LabelledCloud>> {
    let records = read_registration(out).map_err(|e| e.in_stage("label", "all"))?;
    let maps = manifest
        .sessions
        .iter()
        .map(|s| {
            let record = records
                .iter()
                .find(|r| r.session == s.id)
                .ok_or_else(|| Error::param(format!("registration.json has no entry for session {}", s.id)))
                .map_err(|e| e.in_stage("label", &s.id))?;
            let cloud = read_ply(out.registered(&s.id)).map_err(|e| e.in_stage("label", &s.id))?;
            Ok(RegisteredMap::from_registered(cloud, record.transform))
        })
        .collect::<Result<Vec<_>>>()?;
    let labelled = label_all(&maps, manifest.lambda).map_err(|e| e.in_stage("label", "all"))?;
    for (s, l) in manifest.sessions.iter().zip(&labelled) {
        write_ply(out.labelled(&s.id), l)?;
    }
    Ok(labelled)
}

pub fn stage_tile(manifest: &SessionManifest, out: &OutputLayout) -> Result<BatchFile> {
    let id = &manifest.sessions[manifest.reference_index()].id;
    let batch = read_labelled_ply(out.labelled(id))
        .and_then(|map| {
            Ok(BatchFile {
                header: BatchHeader {
                    map: id.clone(),
                    map_points: map.len(),
                    tiling: manifest.tiling.clone(),
                    lambda: manifest.lambda,
                    weights: manifest.weights.clone(),
                },
                submaps: tile_submaps(&map, &manifest.tiling)?,
            })
        })
        .map_err(|e| e.in_stage("tile", id))?;
    write_batch(out.batch(), &batch)?;
    Ok(batch)
}

/// Scores every labelled map whose ground truth has both classes and, when a
/// predictions file is given, the voted predictions on the reference map.
/// Writes nothing and returns `None` when there is nothing to score.
pub fn stage_evaluate(
    manifest: &SessionManifest,
    out: &OutputLayout,
    predictions: Option<&Path>,
) -> Result<Option<Report>> {
    let mut labelling = Vec::new();
    let mut reference: Option<(LabelledCloud, Option<EvaluationReport>)> = None;
    for (i, s) in manifest.sessions.iter().enumerate() {
        let map = read_labelled_ply(out.labelled(&s.id)).map_err(|e| e.in_stage("evaluate", &s.id))?;
        let row = match map.ground_truth() {
            Some(truth) => match evaluate(&EvaluationInput {
                map: &s.id,
                scores: &map.labels,
                truth,
                lambda: manifest.lambda,
                ..EvaluationInput::default()
            }) {
                Ok(row) => Some(row),
                // a map whose truth has one class has no ROC to report
                Err(Error::DegenerateRoc) => None,
                Err(e) => return Err(e.in_stage("evaluate", &s.id)),
            },
            None => None,
        };
        if i == manifest.reference_index() {
            reference = Some((map, row.clone()));
        }
        labelling.extend(row);
    }

    let predictions = match predictions {
        Some(path) => {
            let (map, row) = reference.expect("manifest has a reference session");
            let id = &manifest.sessions[manifest.reference_index()].id;
            Some(evaluate_predictions(manifest, out, path, &map, row.as_ref()).map_err(|e| e.in_stage("evaluate", id))?)
        }
        None => None,
    };

    if labelling.is_empty() && predictions.is_none() {
        return Ok(None);
    }
    let report = Report { lambda: manifest.lambda, labelling, predictions };
    write_report(out.report(), &report)?;
    Ok(Some(report))
}

fn evaluate_predictions(
    manifest: &SessionManifest,
    out: &OutputLayout,
    path: &Path,
    map: &LabelledCloud,
    labels_row: Option<&EvaluationReport>,
) -> Result<EvaluationReport> {
    let truth = map
        .ground_truth()
        .ok_or_else(|| Error::param("predictions need ground truth on the reference map"))?;
    let labels_row = labels_row.expect("ground truth implies a labelling row");
    let batch = read_batch(out.batch())?;
    if batch.header.lambda != manifest.lambda || batch.header.weights.alpha != manifest.weights.alpha {
        return Err(Error::param("batch header lambda/alpha differ from the manifest"));
    }
    if batch.header.map_points != map.len() {
        return Err(Error::LengthMismatch { left: map.len(), right: batch.header.map_points });
    }
    let preds = read_predictions(path)?;
    preds.check_against(&batch)?;
    let resolved = preds.resolve()?;
    let covered = resolved.covered_indices();
    let scores: Vec<f64> = covered.iter().map(|&i| resolved.scores[i].expect("covered")).collect();
    let truth: Vec<_> = covered.iter().map(|&i| truth[i]).collect();
    let reference_labels: Vec<f64> = covered.iter().map(|&i| map.labels[i]).collect();
    evaluate(&EvaluationInput {
        map: &labels_row.map,
        scores: &scores,
        truth: &truth,
        reference_labels: Some(&reference_labels),
        fixed_threshold: Some(labels_row.optimal_threshold),
        lambda: manifest.lambda,
    })
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub registration: Vec<RegistrationRecord>,
    pub labelled: Vec<LabelledCloud>,
    pub batch: BatchFile,
    pub report: Option<Report>,
}

/// Runs every stage in order, writing all intermediate artifacts under `out`.
pub fn run_pipeline(manifest: &SessionManifest, out: impl Into<PathBuf>) -> Result<PipelineOutput> {
    manifest.validate()?;
    let out = OutputLayout::new(out);
    stage_preprocess(manifest, &out)?;
    let registration = stage_register(manifest, &out)?;
    let labelled = stage_label(manifest, &out)?;
    let batch = stage_tile(manifest, &out)?;
    let predictions = manifest.predictions.as_ref().map(|p| manifest.resolve(p));
    let report = stage_evaluate(manifest, &out, predictions.as_deref())?;
    Ok(PipelineOutput { registration, labelled, batch, report })
}

/// Writes each session as `<id>.ply` plus `manifest.toml` and `scene.json`
/// (layout and world-to-session transforms) into `dir`. Session 0 is the
/// reference.
pub fn write_scene(bundle: &SessionBundle, dir: impl AsRef<Path>) -> Result<SessionManifest> {
    let dir = dir.as_ref();
    let sessions: Vec<SessionEntry> = (0..bundle.sessions.len())
        .map(|k| SessionEntry {
            id: format!("s{k}"),
            path: PathBuf::from(format!("s{k}.ply")),
            role: if k == 0 { SessionRole::Reference } else { SessionRole::Other },
        })
        .collect();
    for (entry, session) in sessions.iter().zip(&bundle.sessions) {
        write_ply(dir.join(&entry.path), &session.cloud)?;
    }
    #[derive(Serialize)]
    struct SceneRecord<'a> {
        spec: &'a crate::synth::SceneSpec,
        layout: &'a crate::synth::SceneLayout,
        world_to_session: Vec<RigidTransform>,
    }
    let record = SceneRecord {
        spec: &bundle.spec,
        layout: &bundle.layout,
        world_to_session: bundle.sessions.iter().map(|s| s.world_to_session).collect(),
    };
    let mut json = serde_json::to_string_pretty(&record).map_err(|e| Error::param(e.to_string()))?;
    json.push('\n');
    crate::io::write_text(&dir.join("scene.json"), &json)?;
    let manifest = SessionManifest::new(dir, sessions, bundle.spec.seed);
    manifest.save(dir.join("manifest.toml"))?;
    Ok(manifest)
}
