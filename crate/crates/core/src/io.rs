//! File formats shared by every tool.
//!
//! * Binary container: magic `CSTK`, `u8` version, `u8` rank, `u64` LE dims,
//!   then the LE `f64` payload in row-major order.
//! * Plane files (scenes, depth maps): one line of compact JSON describing the
//!   planes, a newline, then each plane as raw LE `f64` in the listed order.
//! * 16-bit binary PGM previews of depth maps.
//! * Dense CSV matrices (`#` comments and blank lines ignored).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lidar::{DepthMap, Scene};
use crate::quantuminfo::Distribution;

pub const MAGIC: &[u8; 4] = b"CSTK";
pub const CONTAINER_VERSION: u8 = 1;
const PLANE_FORMAT: &str = "cstk-planes";

/// N-dimensional array with row-major payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > u8::MAX as usize {
            return Err(Error::Format(format!("rank {} outside 1..=255", dims.len())));
        }
        let len = element_count(&dims)?;
        check_len("container payload", len, data.len())?;
        Ok(Self { dims, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        let (r, c) = a.shape();
        let data = (0..r).flat_map(|i| (0..c).map(move |j| a[(i, j)])).collect();
        Self { dims: vec![r, c], data }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn into_vector(self) -> Result<Vec<f64>> {
        if self.rank() != 1 {
            return Err(Error::Format(format!("expected a rank-1 container, got rank {}", self.rank())));
        }
        Ok(self.data)
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rank() != 2 {
            return Err(Error::Format(format!("expected a rank-2 container, got rank {}", self.rank())));
        }
        Ok(DMatrix::from_row_slice(self.dims[0], self.dims[1], &self.data))
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::Format(format!("dimensions {dims:?} overflow")))
}

pub fn write_container<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    if t.dims.is_empty() || t.dims.len() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} outside 1..=255", t.dims.len())));
    }
    check_len("container payload", element_count(&t.dims)?, t.data.len())?;
    w.write_all(MAGIC)?;
    w.write_all(&[CONTAINER_VERSION, t.dims.len() as u8])?;
    for d in &t.dims {
        w.write_all(&(*d as u64).to_le_bytes())?;
    }
    write_f64s(&mut w, &t.data)?;
    w.flush()?;
    Ok(())
}

/// Reads one container and rejects trailing bytes.
pub fn read_container<R: Read>(mut r: R) -> Result<Tensor> {
    let mut head = [0u8; 6];
    read_exact(&mut r, &mut head, "container header")?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("missing CSTK magic".into()));
    }
    if head[4] != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported container version {}", head[4])));
    }
    let rank = head[5] as usize;
    if rank == 0 {
        return Err(Error::Format("container rank is 0".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 8];
        read_exact(&mut r, &mut b, "container dimensions")?;
        let d = usize::try_from(u64::from_le_bytes(b))
            .map_err(|_| Error::Format("dimension does not fit in memory".into()))?;
        dims.push(d);
    }
    let len = element_count(&dims)?;
    let data = read_f64s(&mut r, len, "container payload")?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after container payload".into()));
    }
    Tensor::new(dims, data)
}

pub fn save_container(path: &Path, t: &Tensor) -> Result<()> {
    write_container(BufWriter::new(File::create(path)?), t)
}

pub fn load_container(path: &Path) -> Result<Tensor> {
    read_container(BufReader::new(File::open(path)?))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<f64>> {
    // Grows with the data actually present, so a corrupt header cannot force
    // a huge allocation.
    let mut buf = Vec::new();
    r.take((len * 8) as u64).read_to_end(&mut buf)?;
    if buf.len() != len * 8 {
        return Err(Error::Format(format!("truncated {what}")));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Header line of a plane file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneHeader {
    pub format: String,
    pub version: u8,
    /// `scene` or `depth-map`.
    pub kind: String,
    pub nx: usize,
    pub ny: usize,
    /// Unit per plane, parallel to `planes`.
    pub units: Vec<String>,
    pub planes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_amplitude: Option<f64>,
}

fn write_planes<W: Write>(mut w: W, header: &PlaneHeader, planes: &[&[f64]]) -> Result<()> {
    let n = header.nx * header.ny;
    check_len("plane count", header.planes.len(), planes.len())?;
    for p in planes {
        check_len("plane length", n, p.len())?;
    }
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for p in planes {
        write_f64s(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

fn read_planes<R: BufRead>(mut r: R, kind: &str) -> Result<(PlaneHeader, Vec<Vec<f64>>)> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("plane file header is not newline terminated".into()));
    }
    let header: PlaneHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::Format(format!("plane file header: {e}")))?;
    if header.format != PLANE_FORMAT || header.version != 1 {
        return Err(Error::Format(format!(
            "unsupported plane file {} v{}",
            header.format, header.version
        )));
    }
    if header.kind != kind {
        return Err(Error::Format(format!("expected a {kind} file, found {}", header.kind)));
    }
    if header.units.len() != header.planes.len() {
        return Err(Error::Format("units and planes differ in length".into()));
    }
    let n = header
        .nx
        .checked_mul(header.ny)
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Format(format!("bad plane shape {}x{}", header.nx, header.ny)))?;
    let planes = header
        .planes
        .iter()
        .map(|name| read_f64s(&mut r, n, &format!("plane {name}")))
        .collect::<Result<Vec<_>>>()?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after planes".into()));
    }
    Ok((header, planes))
}

fn take_plane(header: &PlaneHeader, planes: &mut [Vec<f64>], name: &str) -> Option<Vec<f64>> {
    header
        .planes
        .iter()
        .position(|p| p == name)
        .map(|i| std::mem::take(&mut planes[i]))
}

pub fn write_scene<W: Write>(w: W, scene: &Scene) -> Result<()> {
    let header = PlaneHeader {
        format: PLANE_FORMAT.into(),
        version: 1,
        kind: "scene".into(),
        nx: scene.nx,
        ny: scene.ny,
        units: vec!["m".into(), "1".into(), "1".into()],
        planes: vec!["depth".into(), "reflectivity".into(), "illumination".into()],
        lo_amplitude: Some(scene.lo_amplitude),
    };
    write_planes(w, &header, &[&scene.depth, &scene.reflectivity, &scene.illumination])
}

/// Depth and reflectivity planes are required; illumination defaults to 1.
pub fn read_scene<R: BufRead>(r: R) -> Result<Scene> {
    let (header, mut planes) = read_planes(r, "scene")?;
    let missing = |p: &str| Error::Format(format!("scene file lacks a {p} plane"));
    let depth = take_plane(&header, &mut planes, "depth").ok_or_else(|| missing("depth"))?;
    let refl = take_plane(&header, &mut planes, "reflectivity").ok_or_else(|| missing("reflectivity"))?;
    let mut scene = Scene::new(header.nx, header.ny, depth, refl)?;
    if let Some(illum) = take_plane(&header, &mut planes, "illumination") {
        scene.illumination = illum;
    }
    if let Some(lo) = header.lo_amplitude {
        scene.lo_amplitude = lo;
    }
    Ok(scene)
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_scene(BufWriter::new(File::create(path)?), scene)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    read_scene(BufReader::new(File::open(path)?))
}

/// Depth plane plus a 0/1 validity plane.
pub fn write_depth_map<W: Write>(w: W, map: &DepthMap) -> Result<()> {
    let header = PlaneHeader {
        format: PLANE_FORMAT.into(),
        version: 1,
        kind: "depth-map".into(),
        nx: map.nx,
        ny: map.ny,
        units: vec!["m".into(), "1".into()],
        planes: vec!["depth".into(), "valid".into()],
        lo_amplitude: None,
    };
    let valid: Vec<f64> = map.valid.iter().map(|v| f64::from(u8::from(*v))).collect();
    write_planes(w, &header, &[&map.depth, &valid])
}

pub fn read_depth_map<R: BufRead>(r: R) -> Result<DepthMap> {
    let (header, mut planes) = read_planes(r, "depth-map")?;
    let depth = take_plane(&header, &mut planes, "depth")
        .ok_or_else(|| Error::Format("depth map lacks a depth plane".into()))?;
    let valid = match take_plane(&header, &mut planes, "valid") {
        Some(v) => v.iter().map(|x| *x != 0.0).collect(),
        None => vec![true; depth.len()],
    };
    Ok(DepthMap {
        nx: header.nx,
        ny: header.ny,
        depth,
        valid,
    })
}

pub fn save_depth_map(path: &Path, map: &DepthMap) -> Result<()> {
    write_depth_map(BufWriter::new(File::create(path)?), map)
}

pub fn load_depth_map(path: &Path) -> Result<DepthMap> {
    read_depth_map(BufReader::new(File::open(path)?))
}

/// 16-bit binary PGM. Valid depths map linearly from their minimum (0) to
/// their maximum (65535); invalid pixels are 0. A constant map is all 65535.
pub fn write_pgm16<W: Write>(mut w: W, map: &DepthMap) -> Result<()> {
    let n = map.nx * map.ny;
    check_len("depth map", n, map.depth.len())?;
    check_len("validity mask", n, map.valid.len())?;
    let (lo, hi) = map
        .depth
        .iter()
        .zip(&map.valid)
        .filter(|(_, v)| **v)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (d, _)| (lo.min(*d), hi.max(*d)));
    write!(w, "P5\n{} {}\n65535\n", map.nx, map.ny)?;
    let mut buf = Vec::with_capacity(2 * n);
    for (d, v) in map.depth.iter().zip(&map.valid) {
        let level = if !*v {
            0
        } else if hi > lo {
            ((d - lo) / (hi - lo) * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            u16::MAX
        };
        buf.extend_from_slice(&level.to_be_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn save_pgm16(path: &Path, map: &DepthMap) -> Result<()> {
    write_pgm16(BufWriter::new(File::create(path)?), map)
}

/// Dense numeric CSV; every row must have the same number of fields.
pub fn read_csv_matrix<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: not a number: {:?}", lineno + 1, f.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("CSV has no data rows".into()));
    }
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

/// Loads a matrix from a rank-2 container or, failing the magic check, CSV.
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(MAGIC) {
        read_container(bytes.as_slice())?.to_matrix()
    } else {
        read_csv_matrix(bytes.as_slice())
    }
}

/// Joint distribution from a matrix file; entries are normalized counts.
pub fn load_distribution(path: &Path) -> Result<Distribution> {
    let m = load_matrix(path)?;
    let t = Tensor::from_matrix(&m);
    Distribution::from_counts(m.nrows(), m.ncols(), &t.data)
}
