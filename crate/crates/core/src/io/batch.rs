//! Submap batch file read by the trainer.
//!
//! ```text
//! stablemap-batch 1
//! map <name>
//! map_points <points in the source map>
//! seed <u64>
//! submap_size_xy <m>
//! stride_fraction <f>
//! points_per_submap <n>
//! min_points <n>
//! cover_all <bool>
//! lambda <f>
//! alpha <f>
//! density histogram <bins> | density kernel <bandwidth>
//! epsilon <f>
//! layout x y z nx ny nz label
//! submaps <count>
//! end_header
//! submap <i> <origin x> <origin y> <center x> <center y>
//! <source index> x y z nx ny nz label      (points_per_submap lines)
//! ...
//! ```
//!
//! Positions are relative to the submap center. Weights are not stored: the
//! header carries the weighting parameters and the trainer recomputes them
//! over all label values in the file.

use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::Vec3;
use crate::error::{Error, Result};
use crate::metrics::{DensityEstimator, WeightParams};
use crate::tiling::{Submap, SubmapPoint, TilingParams};

use super::header::{parse_record, Header};
use super::{read_text, write_text};

pub const BATCH_VERSION: u32 = 1;
pub const BATCH_LAYOUT: &str = "x y z nx ny nz label";
const MAGIC: &str = "stablemap-batch";

#[derive(Clone, Debug, PartialEq)]
pub struct BatchHeader {
    pub map: String,
    pub map_points: usize,
    pub tiling: TilingParams,
    pub lambda: f64,
    pub weights: WeightParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchFile {
    pub header: BatchHeader,
    pub submaps: Vec<Submap>,
}

impl BatchFile {
    pub fn validate(&self) -> Result<()> {
        let n = self.header.tiling.points_per_submap;
        for (i, s) in self.submaps.iter().enumerate() {
            if s.points.len() != n || s.source_indices.len() != n {
                return Err(Error::param(format!("submap {i} has {} points, header says {n}", s.points.len())));
            }
            if let Some(&bad) = s.source_indices.iter().find(|&&j| j >= self.header.map_points) {
                return Err(Error::param(format!("submap {i} references point {bad} of {}", self.header.map_points)));
            }
        }
        Ok(())
    }

    /// Every label value in the file, in record order.
    pub fn labels(&self) -> Vec<f64> {
        self.submaps.iter().flat_map(|s| s.points.iter().map(|p| p.label)).collect()
    }
}

fn render(batch: &BatchFile) -> Result<String> {
    batch.validate()?;
    let h = &batch.header;
    if h.map.split_whitespace().count() != 1 {
        return Err(Error::param("batch map name must be a single word"));
    }
    let t = &h.tiling;
    let density = match h.weights.density_estimator {
        DensityEstimator::Histogram { bins } => format!("histogram {bins}"),
        DensityEstimator::Kernel { bandwidth } => format!("kernel {bandwidth}"),
    };
    let mut out = String::new();
    writeln!(out, "{MAGIC} {BATCH_VERSION}").unwrap();
    writeln!(out, "map {}", h.map).unwrap();
    writeln!(out, "map_points {}", h.map_points).unwrap();
    writeln!(out, "seed {}", t.seed).unwrap();
    writeln!(out, "submap_size_xy {}", t.submap_size_xy).unwrap();
    writeln!(out, "stride_fraction {}", t.stride_fraction).unwrap();
    writeln!(out, "points_per_submap {}", t.points_per_submap).unwrap();
    writeln!(out, "min_points {}", t.min_points).unwrap();
    writeln!(out, "cover_all {}", t.cover_all).unwrap();
    writeln!(out, "lambda {}", h.lambda).unwrap();
    writeln!(out, "alpha {}", h.weights.alpha).unwrap();
    writeln!(out, "density {density}").unwrap();
    writeln!(out, "epsilon {}", h.weights.epsilon).unwrap();
    writeln!(out, "layout {BATCH_LAYOUT}").unwrap();
    writeln!(out, "submaps {}", batch.submaps.len()).unwrap();
    out.push_str("end_header\n");
    for (i, s) in batch.submaps.iter().enumerate() {
        writeln!(out, "submap {i} {} {} {} {}", s.tile_origin[0], s.tile_origin[1], s.center[0], s.center[1]).unwrap();
        for (p, idx) in s.points.iter().zip(&s.source_indices) {
            let (v, n) = (p.position, p.normal);
            writeln!(out, "{idx} {} {} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z, p.label).unwrap();
        }
    }
    Ok(out)
}

pub fn write_batch(path: impl AsRef<Path>, batch: &BatchFile) -> Result<()> {
    write_text(path.as_ref(), &render(batch)?)
}

pub fn read_batch(path: impl AsRef<Path>) -> Result<BatchFile> {
    let path = path.as_ref();
    parse_batch(path, &read_text(path)?)
}

pub(crate) fn parse_batch(path: &Path, text: &str) -> Result<BatchFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let h = Header::parse(path, &mut lines, MAGIC, BATCH_VERSION)?;
    let (no, layout) = h.tokens("layout")?;
    if layout.join(" ") != BATCH_LAYOUT {
        return Err(Error::parse(path, no, format!("unsupported layout \"{}\"", layout.join(" "))));
    }
    let (no, density) = h.tokens("density")?;
    let density_estimator = match density {
        ["histogram", bins] => DensityEstimator::Histogram {
            bins: bins.parse().map_err(|_| Error::parse(path, no, "invalid histogram bin count"))?,
        },
        ["kernel", bw] => DensityEstimator::Kernel {
            bandwidth: bw.parse().map_err(|_| Error::parse(path, no, "invalid kernel bandwidth"))?,
        },
        _ => return Err(Error::parse(path, no, "density must be \"histogram <bins>\" or \"kernel <bandwidth>\"")),
    };
    let header = BatchHeader {
        map: h.value("map")?,
        map_points: h.value("map_points")?,
        tiling: TilingParams {
            submap_size_xy: h.finite("submap_size_xy")?,
            stride_fraction: h.finite("stride_fraction")?,
            points_per_submap: h.value("points_per_submap")?,
            min_points: h.value("min_points")?,
            seed: h.value("seed")?,
            cover_all: h.value("cover_all")?,
        },
        lambda: h.finite("lambda")?,
        weights: WeightParams {
            alpha: h.finite("alpha")?,
            epsilon: h.finite("epsilon")?,
            density_estimator,
        },
    };
    header
        .tiling
        .validate()
        .and_then(|_| header.weights.validate())
        .map_err(|e| Error::parse(path, h.end_line, e.to_string()))?;
    let count: usize = h.value("submaps")?;
    let per = header.tiling.points_per_submap;

    let mut submaps = Vec::with_capacity(count);
    for i in 0..count {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, format!("expected {count} submaps, found {i}")))?;
        let rest = line
            .strip_prefix("submap ")
            .ok_or_else(|| Error::parse(path, no, "expected a \"submap\" line"))?;
        let (index, [ox, oy, cx, cy]) = parse_record::<4>(path, no, rest)?;
        if index != i {
            return Err(Error::parse(path, no, format!("submap {index} out of order, expected {i}")));
        }
        let mut points = Vec::with_capacity(per);
        let mut source_indices = Vec::with_capacity(per);
        for _ in 0..per {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("submap {i} has fewer than {per} records")))?;
            let (idx, [x, y, z, nx, ny, nz, label]) = parse_record::<7>(path, no, line)?;
            if idx >= header.map_points {
                return Err(Error::parse(path, no, format!("source index {idx} outside map of {}", header.map_points)));
            }
            if !(0.0..=1.0).contains(&label) {
                return Err(Error::parse(path, no, format!("label {label} outside [0, 1]")));
            }
            source_indices.push(idx);
            points.push(SubmapPoint {
                position: Vec3::new(x, y, z),
                normal: Vec3::new(nx, ny, nz),
                label,
            });
        }
        submaps.push(Submap {
            tile_origin: [ox, oy],
            center: [cx, cy],
            points,
            source_indices,
        });
    }
    if let Some((no, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(path, no, "unexpected data after the last submap"));
    }
    Ok(BatchFile { header, submaps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BatchFile {
        let tiling = TilingParams { points_per_submap: 3, min_points: 1, seed: 9, ..TilingParams::default() };
        let sub = |o: f64| Submap {
            tile_origin: [o, -o],
            center: [o + 5.0, 0.25],
            points: (0..3)
                .map(|k| SubmapPoint {
                    position: Vec3::new(k as f64 / 3.0, -0.1, 1e-300),
                    normal: Vec3::z(),
                    label: k as f64 / 7.0,
                })
                .collect(),
            source_indices: vec![0, 4, 4],
        };
        BatchFile {
            header: BatchHeader {
                map: "ref".into(),
                map_points: 5,
                tiling,
                lambda: 0.5,
                weights: WeightParams { density_estimator: DensityEstimator::Kernel { bandwidth: 0.05 }, ..WeightParams::default() },
            },
            submaps: vec![sub(0.0), sub(5.0)],
        }
    }

    #[test]
    fn round_trip() {
        let b = sample();
        let text = render(&b).unwrap();
        assert_eq!(parse_batch(Path::new("b"), &text).unwrap(), b);
    }

    #[test]
    fn record_length_checked() {
        let text = render(&sample()).unwrap();
        let broken: String = text.lines().map(|l| if l.starts_with("4 0.3333") { format!("{l} 1\n") } else { format!("{l}\n") }).collect();
        assert!(parse_batch(Path::new("b"), &broken).is_err());
        let wrong_layout = text.replace("layout x y z nx ny nz label", "layout x y z label");
        assert!(parse_batch(Path::new("b"), &wrong_layout).is_err());
        let truncated: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(parse_batch(Path::new("b"), &truncated).is_err());
    }
}
