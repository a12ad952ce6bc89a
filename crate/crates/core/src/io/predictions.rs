//! Per-submap predictions written by the trainer's inference step.
//!
//! ```text
//! stablemap-predictions 1
//! map_points <points in the source map>
//! submaps <count>
//! end_header
//! submap <i> <points>
//! <source index> <prediction>
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tiling::{resolve_votes, ResolvedScores, VoteAccumulator};

use super::batch::BatchFile;
use super::header::{parse_record, Header};
use super::{read_text, write_text};

pub const PREDICTIONS_VERSION: u32 = 1;
const MAGIC: &str = "stablemap-predictions";

#[derive(Clone, Debug, PartialEq)]
pub struct SubmapPredictions {
    pub source_indices: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub map_points: usize,
    pub submaps: Vec<SubmapPredictions>,
}

impl Predictions {
    /// Uses one value per batch record, e.g. the batch labels themselves.
    pub fn from_batch(batch: &BatchFile, mut predict: impl FnMut(usize, usize) -> f64) -> Self {
        Predictions {
            map_points: batch.header.map_points,
            submaps: batch
                .submaps
                .iter()
                .enumerate()
                .map(|(i, s)| SubmapPredictions {
                    source_indices: s.source_indices.clone(),
                    values: (0..s.points.len()).map(|k| predict(i, k)).collect(),
                })
                .collect(),
        }
    }

    /// Checks that the predictions line up record by record with `batch`.
    pub fn check_against(&self, batch: &BatchFile) -> Result<()> {
        if self.map_points != batch.header.map_points || self.submaps.len() != batch.submaps.len() {
            return Err(Error::param(format!(
                "predictions cover {} submaps of a {}-point map, batch has {} submaps of a {}-point map",
                self.submaps.len(),
                self.map_points,
                batch.submaps.len(),
                batch.header.map_points
            )));
        }
        for (i, (p, s)) in self.submaps.iter().zip(&batch.submaps).enumerate() {
            if p.source_indices != s.source_indices {
                return Err(Error::param(format!("predictions for submap {i} do not match the batch source indices")));
            }
        }
        Ok(())
    }

    /// Mean prediction per map point over all submaps that sampled it.
    pub fn resolve(&self) -> Result<ResolvedScores> {
        let mut acc = VoteAccumulator::new(self.map_points);
        for s in &self.submaps {
            acc.add(&s.source_indices, &s.values)?;
        }
        resolve_votes(&acc, self.map_points)
    }
}

pub fn write_predictions(path: impl AsRef<Path>, predictions: &Predictions) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {PREDICTIONS_VERSION}").unwrap();
    writeln!(out, "map_points {}", predictions.map_points).unwrap();
    writeln!(out, "submaps {}", predictions.submaps.len()).unwrap();
    out.push_str("end_header\n");
    for (i, s) in predictions.submaps.iter().enumerate() {
        if s.source_indices.len() != s.values.len() {
            return Err(Error::LengthMismatch { left: s.source_indices.len(), right: s.values.len() });
        }
        writeln!(out, "submap {i} {}", s.values.len()).unwrap();
        for (idx, v) in s.source_indices.iter().zip(&s.values) {
            writeln!(out, "{idx} {v}").unwrap();
        }
    }
    write_text(path.as_ref(), &out)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    let path = path.as_ref();
    parse_predictions(path, &read_text(path)?)
}

pub(crate) fn parse_predictions(path: &Path, text: &str) -> Result<Predictions> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let h = Header::parse(path, &mut lines, MAGIC, PREDICTIONS_VERSION)?;
    let map_points: usize = h.value("map_points")?;
    let count: usize = h.value("submaps")?;
    let mut submaps = Vec::with_capacity(count);
    for i in 0..count {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, format!("expected {count} submaps, found {i}")))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let n: usize = match tokens.as_slice() {
            ["submap", idx, n] if idx.parse() == Ok(i) => {
                n.parse().map_err(|_| Error::parse(path, no, format!("invalid point count \"{n}\"")))?
            }
            _ => return Err(Error::parse(path, no, format!("expected \"submap {i} <points>\""))),
        };
        let mut sub = SubmapPredictions { source_indices: Vec::with_capacity(n), values: Vec::with_capacity(n) };
        for _ in 0..n {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("submap {i} has fewer than {n} records")))?;
            let (idx, [v]) = parse_record::<1>(path, no, line)?;
            if idx >= map_points {
                return Err(Error::parse(path, no, format!("source index {idx} outside map of {map_points}")));
            }
            sub.source_indices.push(idx);
            sub.values.push(v);
        }
        submaps.push(sub);
    }
    if let Some((no, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(path, no, "unexpected data after the last submap"));
    }
    Ok(Predictions { map_points, submaps })
}
