//! ASCII PLY with double-precision positions.
//!
//! Recognised vertex properties: `x y z` (required), `nx ny nz`, `label`,
//! `dmax` and `gt` (0 stable, 1 dynamic). Other properties are skipped.
//! Floats are written with the shortest decimal text that reads back to the
//! same value, so round trips are exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::{Point, PointCloud, StabilityClass, Vec3};
use crate::error::{Error, Result};
use crate::labelling::LabelledCloud;

use super::{read_text, write_text};

/// Everything a PLY file can carry.
#[derive(Clone, Debug, PartialEq)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub labels: Option<Vec<f64>>,
    pub d_max: Option<Vec<f64>>,
}

/// Anything that can be written as a PLY vertex list.
pub trait PlySource {
    fn cloud(&self) -> &PointCloud;
    fn labels(&self) -> Option<&[f64]> {
        None
    }
    fn d_max(&self) -> Option<&[f64]> {
        None
    }
}

impl PlySource for PointCloud {
    fn cloud(&self) -> &PointCloud {
        self
    }
}

impl PlySource for LabelledCloud {
    fn cloud(&self) -> &PointCloud {
        &self.cloud
    }
    fn labels(&self) -> Option<&[f64]> {
        Some(&self.labels)
    }
    fn d_max(&self) -> Option<&[f64]> {
        Some(&self.d_max)
    }
}

impl PlySource for PlyData {
    fn cloud(&self) -> &PointCloud {
        &self.cloud
    }
    fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }
    fn d_max(&self) -> Option<&[f64]> {
        self.d_max.as_deref()
    }
}

pub fn ply_to_string<S: PlySource + ?Sized>(source: &S) -> Result<String> {
    let cloud = source.cloud();
    let n = cloud.len();
    let normals = cloud.has_normals();
    if !normals && cloud.points().iter().any(|p| p.normal.is_some()) {
        return Err(Error::param("cannot write a cloud where only some points have normals"));
    }
    for extra in [source.labels(), source.d_max()].into_iter().flatten() {
        if extra.len() != n {
            return Err(Error::LengthMismatch { left: n, right: extra.len() });
        }
    }

    let mut out = String::with_capacity(64 * n + 256);
    out.push_str("ply\nformat ascii 1.0\n");
    if !cloud.frame_id().is_empty() {
        writeln!(out, "comment frame_id {}", cloud.frame_id()).unwrap();
    }
    writeln!(out, "element vertex {n}").unwrap();
    let mut names: Vec<(&str, &str)> = vec![("double", "x"), ("double", "y"), ("double", "z")];
    if normals {
        names.extend([("double", "nx"), ("double", "ny"), ("double", "nz")]);
    }
    if source.labels().is_some() {
        names.push(("double", "label"));
    }
    if source.d_max().is_some() {
        names.push(("double", "dmax"));
    }
    if cloud.ground_truth().is_some() {
        names.push(("uchar", "gt"));
    }
    for (ty, name) in &names {
        writeln!(out, "property {ty} {name}").unwrap();
    }
    out.push_str("end_header\n");

    for (i, p) in cloud.points().iter().enumerate() {
        let v = p.position;
        write!(out, "{} {} {}", v.x, v.y, v.z).unwrap();
        if let Some(nrm) = p.normal {
            write!(out, " {} {} {}", nrm.x, nrm.y, nrm.z).unwrap();
        }
        if let Some(labels) = source.labels() {
            write!(out, " {}", labels[i]).unwrap();
        }
        if let Some(d) = source.d_max() {
            write!(out, " {}", d[i]).unwrap();
        }
        if let Some(gt) = cloud.ground_truth() {
            write!(out, " {}", gt[i].as_u8()).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_ply<S: PlySource + ?Sized>(path: impl AsRef<Path>, source: &S) -> Result<()> {
    write_text(path.as_ref(), &ply_to_string(source)?)
}

pub fn read_ply_data(path: impl AsRef<Path>) -> Result<PlyData> {
    let path = path.as_ref();
    parse_ply(path, &read_text(path)?)
}

/// Reads positions, normals and ground truth; labels are dropped.
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    Ok(read_ply_data(path)?.cloud)
}

/// Reads a labelled map; the file must carry `label` and `dmax`.
pub fn read_labelled_ply(path: impl AsRef<Path>) -> Result<LabelledCloud> {
    let path = path.as_ref();
    let data = read_ply_data(path)?;
    let labels = data
        .labels
        .ok_or_else(|| Error::parse(path, 0, "missing required property \"label\""))?;
    let d_max = data
        .d_max
        .ok_or_else(|| Error::parse(path, 0, "missing required property \"dmax\""))?;
    LabelledCloud::new(data.cloud, labels, d_max)
}

pub fn parse_ply(path: &Path, text: &str) -> Result<PlyData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, msg: String| Error::parse(path, line, msg);

    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "not a PLY file".into())),
    }

    let mut frame_id = String::new();
    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut properties: Vec<String> = Vec::new();
    let mut header_end = None;
    for (no, line) in lines.by_ref() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["format", "ascii", "1.0"] => {}
            ["format", ..] => return Err(err(no, format!("unsupported format \"{}\"", line.trim()))),
            ["comment", "frame_id", rest @ ..] => frame_id = rest.join(" "),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(no, format!("invalid vertex count \"{count}\"")))?;
                vertex_count = Some(count);
                in_vertex = true;
            }
            ["element", name, count] => {
                if *count != "0" {
                    return Err(err(no, format!("unsupported element \"{name}\"")));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(err(no, "list properties are not supported on vertices".into()))
            }
            ["property", _ty, name] => {
                if in_vertex {
                    properties.push(name.to_string());
                }
            }
            ["end_header"] => {
                header_end = Some(no);
                break;
            }
            _ => return Err(err(no, format!("malformed header line \"{}\"", line.trim()))),
        }
    }
    let header_end = header_end.ok_or_else(|| err(0, "missing end_header".into()))?;
    let count = vertex_count.ok_or_else(|| err(header_end, "missing vertex element".into()))?;

    let find = |name: &str| properties.iter().position(|p| p == name);
    let required = |name: &str| find(name).ok_or_else(|| err(header_end, format!("missing required property \"{name}\"")));
    let (ix, iy, iz) = (required("x")?, required("y")?, required("z")?);
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        (None, None, None) => None,
        _ => return Err(err(header_end, "normals need all of \"nx\", \"ny\", \"nz\"".into())),
    };
    let label_idx = find("label");
    let dmax_idx = find("dmax");
    let gt_idx = find("gt");

    let mut points = Vec::with_capacity(count);
    let mut labels = label_idx.map(|_| Vec::with_capacity(count));
    let mut d_max = dmax_idx.map(|_| Vec::with_capacity(count));
    let mut gt = gt_idx.map(|_| Vec::with_capacity(count));
    let mut values = vec![0.0; properties.len()];
    for _ in 0..count {
        let (no, line) = lines
            .next()
            .ok_or_else(|| err(0, format!("expected {count} vertices, file ended after {}", points.len())))?;
        let mut tokens = line.split_whitespace();
        for (slot, name) in values.iter_mut().zip(&properties) {
            let token = tokens
                .next()
                .ok_or_else(|| err(no, format!("expected {} values", properties.len())))?;
            let v: f64 = token
                .parse()
                .map_err(|_| err(no, format!("invalid value \"{token}\" for \"{name}\"")))?;
            if !v.is_finite() {
                return Err(err(no, format!("non-finite value \"{token}\" for \"{name}\"")));
            }
            *slot = v;
        }
        if tokens.next().is_some() {
            return Err(err(no, format!("expected {} values", properties.len())));
        }
        let mut point = Point::new(values[ix], values[iy], values[iz]);
        if let Some([a, b, c]) = normal_idx {
            point.normal = Some(Vec3::new(values[a], values[b], values[c]));
        }
        points.push(point);
        if let (Some(i), Some(out)) = (label_idx, labels.as_mut()) {
            out.push(values[i]);
        }
        if let (Some(i), Some(out)) = (dmax_idx, d_max.as_mut()) {
            out.push(values[i]);
        }
        if let (Some(i), Some(out)) = (gt_idx, gt.as_mut()) {
            let v = values[i];
            let class = if v == 0.0 || v == 1.0 { StabilityClass::from_u8(v as u8) } else { None };
            out.push(class.ok_or_else(|| err(no, format!("invalid ground-truth class {v}")))?);
        }
    }
    if let Some((no, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(no, format!("unexpected data after {count} vertices: \"{}\"", line.trim())));
    }

    let mut cloud = PointCloud::new(frame_id, points).map_err(|e| err(header_end, e.to_string()))?;
    if let Some(gt) = gt {
        cloud = cloud.with_ground_truth(gt)?;
    }
    Ok(PlyData { cloud, labels, d_max })
}
