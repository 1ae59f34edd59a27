//! On-disk formats. Every file is one line of JSON header terminated by `\n`,
//! followed by raw little-endian blocks whose sizes the header determines.
//!
//! - `.btrace`: a [`BoundaryDataset`]; Dirichlet then Neumann block, each
//!   `f64[nodes][n_time]`.
//! - `.fsamp`: [`FourierSamples`] (`"dim": "3d"`) or [`PlanarSamples`]
//!   (`"dim": "planar"`), one fixed-width `f64` record per entry.
//! - `.fsamp4`: [`Grid4Samples`]; interleaved `(re, im)` `f64` block followed
//!   by one coverage byte per grid point, both in C order over `[p₁, p₂, p₃, q]`.
//! - `.rgrid`: a real array on a tensor grid (reconstructions), C order.
//! - sweep manifest: JSON listing `λ` values and the `.btrace` file of each.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4, ArrayD, IxDyn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::forward::{BoundaryDataset, SphereQuadrature};
use crate::multiparam::{Grid4Samples, LambdaSweep};
use crate::planar::{PlanarEntry, PlanarSamples};
use crate::probe::{FourierEntry, FourierSamples};
use crate::spectral::Axis;
use crate::{Complex64, Error, Result};

const ENDIANNESS: &str = "little";

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn write_container(path: &Path, header: &impl Serialize, payload: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = serde_json::to_vec(header)?;
    line.push(b'\n');
    w.write_all(&line)
        .and_then(|_| w.write_all(payload))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_container<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| format_error(path, "missing header line"))?;
    let header = serde_json::from_slice(&bytes[..split])
        .map_err(|e| format_error(path, format!("bad header: {e}")))?;
    Ok((header, bytes[split + 1..].to_vec()))
}

fn push_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn take_f64s(path: &Path, bytes: &[u8], n: usize) -> Result<Vec<f64>> {
    if bytes.len() < 8 * n {
        return Err(format_error(
            path,
            format!("payload holds {} bytes, expected at least {}", bytes.len(), 8 * n),
        ));
    }
    Ok(bytes[..8 * n]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() != expected {
        return Err(format_error(
            path,
            format!("payload holds {} bytes, expected {expected}", bytes.len()),
        ));
    }
    Ok(())
}

fn check_tag(path: &Path, what: &str, format: &str, endianness: &str, expected: &str) -> Result<()> {
    if format != expected {
        return Err(format_error(path, format!("expected a {expected} file, found {what} {format:?}")));
    }
    if endianness != ENDIANNESS {
        return Err(format_error(path, format!("unsupported endianness {endianness:?}")));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadratureSpec {
    rule: String,
    n_theta: usize,
    n_phi: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BtraceHeader {
    format: String,
    version: u32,
    endianness: String,
    radius: f64,
    lambda: f64,
    dt: f64,
    n_time: usize,
    n_nodes: usize,
    source_duration: f64,
    noise_level: f64,
    quadrature: QuadratureSpec,
    layout: String,
    blocks: Vec<String>,
}

pub fn write_btrace(path: impl AsRef<Path>, ds: &BoundaryDataset) -> Result<()> {
    let path = path.as_ref();
    let header = BtraceHeader {
        format: "btrace".into(),
        version: 1,
        endianness: ENDIANNESS.into(),
        radius: ds.radius,
        lambda: ds.lambda,
        dt: ds.dt,
        n_time: ds.n_time,
        n_nodes: ds.sphere.len(),
        source_duration: ds.source_duration,
        noise_level: ds.noise_level,
        quadrature: QuadratureSpec {
            rule: "gauss_legendre_x_trapezoid".into(),
            n_theta: ds.sphere.n_theta(),
            n_phi: ds.sphere.n_phi(),
        },
        layout: "node_major_time_minor".into(),
        blocks: vec!["dirichlet".into(), "neumann".into()],
    };
    let mut payload = Vec::with_capacity(16 * ds.dirichlet.len());
    push_f64s(&mut payload, ds.dirichlet.iter().copied());
    push_f64s(&mut payload, ds.neumann.iter().copied());
    write_container(path, &header, &payload)
}

pub fn read_btrace(path: impl AsRef<Path>) -> Result<BoundaryDataset> {
    let path = path.as_ref();
    let (h, bytes): (BtraceHeader, _) = read_container(path)?;
    check_tag(path, "format", &h.format, &h.endianness, "btrace")?;
    let sphere = SphereQuadrature::new(h.radius, h.quadrature.n_theta, h.quadrature.n_phi)?;
    if sphere.len() != h.n_nodes {
        return Err(format_error(path, "node count does not match the quadrature"));
    }
    let n = h.n_nodes * h.n_time;
    check_len(path, &bytes, 16 * n)?;
    let d = take_f64s(path, &bytes, n)?;
    let nn = take_f64s(path, &bytes[8 * n..], n)?;
    let shape = (h.n_nodes, h.n_time);
    let mut ds = BoundaryDataset::zeros(sphere, h.lambda, h.dt, h.n_time, h.source_duration);
    ds.dirichlet = Array2::from_shape_vec(shape, d).expect("length checked");
    ds.neumann = Array2::from_shape_vec(shape, nn).expect("length checked");
    ds.noise_level = h.noise_level;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleDim {
    #[serde(rename = "3d")]
    Spatial3,
    #[serde(rename = "planar")]
    Planar,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FsampHeader {
    format: String,
    version: u32,
    endianness: String,
    dim: SampleDim,
    band_b: f64,
    /// Spatial axis (3d) or in-plane axis (planar).
    axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time: Option<Axis>,
    n_entries: usize,
    record: Vec<String>,
}

const RECORD_3D: [&str; 11] = [
    "k1", "k2", "k3", "xi1", "xi2", "xi3", "omega", "re", "im", "divisor_mag", "valid",
];
const RECORD_PLANAR: [&str; 12] = [
    "k1", "k2", "k_omega", "xi1", "xi2", "omega", "re", "im", "xi3", "divisor_mag", "valid",
    "extrapolated",
];

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn record_3d(e: &FourierEntry) -> [f64; 11] {
    [
        e.index[0] as f64,
        e.index[1] as f64,
        e.index[2] as f64,
        e.xi[0],
        e.xi[1],
        e.xi[2],
        e.omega,
        e.value.re,
        e.value.im,
        e.divisor_mag,
        bit(e.valid),
    ]
}

fn record_planar(e: &PlanarEntry) -> [f64; 12] {
    [
        e.index[0] as f64,
        e.index[1] as f64,
        e.index[2] as f64,
        e.xi1,
        e.xi2,
        e.omega,
        e.value.re,
        e.value.im,
        e.xi3,
        e.divisor_mag,
        bit(e.valid),
        bit(e.extrapolated),
    ]
}

fn record_names(dim: SampleDim) -> Vec<String> {
    match dim {
        SampleDim::Spatial3 => RECORD_3D.iter().map(|s| s.to_string()).collect(),
        SampleDim::Planar => RECORD_PLANAR.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn write_fsamp(path: impl AsRef<Path>, samples: &FourierSamples) -> Result<()> {
    let header = FsampHeader {
        format: "fsamp".into(),
        version: 1,
        endianness: ENDIANNESS.into(),
        dim: SampleDim::Spatial3,
        band_b: samples.band_b,
        axis: samples.axis,
        time: None,
        n_entries: samples.entries.len(),
        record: record_names(SampleDim::Spatial3),
    };
    let mut payload = Vec::new();
    push_f64s(&mut payload, samples.entries.iter().flat_map(record_3d));
    write_container(path.as_ref(), &header, &payload)
}

pub fn write_fsamp_planar(path: impl AsRef<Path>, samples: &PlanarSamples) -> Result<()> {
    let header = FsampHeader {
        format: "fsamp".into(),
        version: 1,
        endianness: ENDIANNESS.into(),
        dim: SampleDim::Planar,
        band_b: samples.band_b,
        axis: samples.inplane,
        time: Some(samples.time),
        n_entries: samples.entries.len(),
        record: record_names(SampleDim::Planar),
    };
    let mut payload = Vec::new();
    push_f64s(&mut payload, samples.entries.iter().flat_map(record_planar));
    write_container(path.as_ref(), &header, &payload)
}

/// Contents of an `.fsamp` file, whichever dimension tag it carries.
#[derive(Debug, Clone, PartialEq)]
pub enum Fsamp {
    Spatial3(FourierSamples),
    Planar(PlanarSamples),
}

pub fn read_fsamp(path: impl AsRef<Path>) -> Result<Fsamp> {
    let path = path.as_ref();
    let (h, bytes): (FsampHeader, _) = read_container(path)?;
    check_tag(path, "format", &h.format, &h.endianness, "fsamp")?;
    let width = record_names(h.dim).len();
    if h.record != record_names(h.dim) {
        return Err(format_error(path, "unexpected record layout"));
    }
    check_len(path, &bytes, 8 * width * h.n_entries)?;
    let values = take_f64s(path, &bytes, width * h.n_entries)?;
    let records = values.chunks_exact(width);
    match h.dim {
        SampleDim::Spatial3 => {
            let entries = records
                .map(|r| FourierEntry {
                    index: [r[0] as i64, r[1] as i64, r[2] as i64],
                    xi: [r[3], r[4], r[5]],
                    omega: r[6],
                    value: Complex64::new(r[7], r[8]),
                    divisor_mag: r[9],
                    valid: r[10] != 0.0,
                })
                .collect();
            Ok(Fsamp::Spatial3(FourierSamples {
                entries,
                band_b: h.band_b,
                axis: h.axis,
            }))
        }
        SampleDim::Planar => {
            let time = h
                .time
                .ok_or_else(|| format_error(path, "planar samples need a time axis"))?;
            let entries = records
                .map(|r| PlanarEntry {
                    index: [r[0] as i64, r[1] as i64, r[2] as i64],
                    xi1: r[3],
                    xi2: r[4],
                    omega: r[5],
                    value: Complex64::new(r[6], r[7]),
                    xi3: r[8],
                    divisor_mag: r[9],
                    valid: r[10] != 0.0,
                    extrapolated: r[11] != 0.0,
                })
                .collect();
            Ok(Fsamp::Planar(PlanarSamples {
                entries,
                band_b: h.band_b,
                inplane: h.axis,
                time,
            }))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Fsamp4Header {
    format: String,
    version: u32,
    endianness: String,
    space: Axis,
    time: Axis,
    big_lambda: f64,
    shape: [usize; 4],
    warnings: Vec<String>,
    blocks: Vec<String>,
}

pub fn write_fsamp4(path: impl AsRef<Path>, samples: &Grid4Samples) -> Result<()> {
    let shape = samples.values.shape();
    let header = Fsamp4Header {
        format: "fsamp4".into(),
        version: 1,
        endianness: ENDIANNESS.into(),
        space: samples.space,
        time: samples.time,
        big_lambda: samples.big_lambda,
        shape: [shape[0], shape[1], shape[2], shape[3]],
        warnings: samples.warnings.clone(),
        blocks: vec!["values_re_im_f64".into(), "covered_u8".into()],
    };
    let n = samples.values.len();
    let mut payload = Vec::with_capacity(17 * n);
    push_f64s(&mut payload, samples.values.iter().flat_map(|v| [v.re, v.im]));
    payload.extend(samples.covered.iter().map(|c| *c as u8));
    write_container(path.as_ref(), &header, &payload)
}

pub fn read_fsamp4(path: impl AsRef<Path>) -> Result<Grid4Samples> {
    let path = path.as_ref();
    let (h, bytes): (Fsamp4Header, _) = read_container(path)?;
    check_tag(path, "format", &h.format, &h.endianness, "fsamp4")?;
    let [a, b, c, d] = h.shape;
    if a != h.space.n || b != h.space.n || c != h.space.n || d != h.time.n {
        return Err(format_error(path, "shape does not match the axes"));
    }
    let n = a * b * c * d;
    check_len(path, &bytes, 17 * n)?;
    let flat = take_f64s(path, &bytes, 2 * n)?;
    let values: Vec<Complex64> = flat
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    let covered: Vec<bool> = bytes[16 * n..].iter().map(|b| *b != 0).collect();
    Ok(Grid4Samples {
        space: h.space,
        time: h.time,
        big_lambda: h.big_lambda,
        values: Array4::from_shape_vec(h.shape, values).expect("length checked"),
        covered: Array4::from_shape_vec(h.shape, covered).expect("length checked"),
        warnings: h.warnings,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RgridHeader {
    format: String,
    version: u32,
    endianness: String,
    axes: Vec<Axis>,
}

pub fn write_rgrid(path: impl AsRef<Path>, values: &ArrayD<f64>, axes: &[Axis]) -> Result<()> {
    let path = path.as_ref();
    if values.shape() != axes.iter().map(|a| a.n).collect::<Vec<_>>().as_slice() {
        return Err(Error::InvalidInput(format!(
            "array shape {:?} does not match the axes",
            values.shape()
        )));
    }
    let header = RgridHeader {
        format: "rgrid".into(),
        version: 1,
        endianness: ENDIANNESS.into(),
        axes: axes.to_vec(),
    };
    let mut payload = Vec::with_capacity(8 * values.len());
    push_f64s(&mut payload, values.iter().copied());
    write_container(path, &header, &payload)
}

pub fn read_rgrid(path: impl AsRef<Path>) -> Result<(ArrayD<f64>, Vec<Axis>)> {
    let path = path.as_ref();
    let (h, bytes): (RgridHeader, _) = read_container(path)?;
    check_tag(path, "format", &h.format, &h.endianness, "rgrid")?;
    let shape: Vec<usize> = h.axes.iter().map(|a| a.n).collect();
    let n: usize = shape.iter().product();
    check_len(path, &bytes, 8 * n)?;
    let v = take_f64s(path, &bytes, n)?;
    Ok((
        ArrayD::from_shape_vec(IxDyn(&shape), v).expect("length checked"),
        h.axes,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub big_lambda: f64,
    pub lambdas: Vec<f64>,
    /// `.btrace` paths, relative to the manifest's directory.
    pub traces: Vec<PathBuf>,
}

/// Writes one `.btrace` per `λ` next to `manifest_path` and the manifest itself.
pub fn write_sweep(manifest_path: impl AsRef<Path>, sweep: &LambdaSweep) -> Result<SweepManifest> {
    let manifest_path = manifest_path.as_ref();
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sweep");
    let mut traces = Vec::with_capacity(sweep.lambdas.len());
    for (j, ds) in sweep.datasets.iter().enumerate() {
        let name = PathBuf::from(format!("{stem}_{j:03}.btrace"));
        write_btrace(dir.join(&name), ds)?;
        traces.push(name);
    }
    let manifest = SweepManifest {
        big_lambda: sweep.big_lambda,
        lambdas: sweep.lambdas.clone(),
        traces,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

pub fn read_sweep(manifest_path: impl AsRef<Path>) -> Result<LambdaSweep> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m: SweepManifest = serde_json::from_str(&text)
        .map_err(|e| format_error(manifest_path, format!("bad manifest: {e}")))?;
    if m.lambdas.len() != m.traces.len() {
        return Err(format_error(manifest_path, "one trace file per lambda expected"));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let datasets = m
        .traces
        .iter()
        .map(|p| read_btrace(dir.join(p)))
        .collect::<Result<Vec<_>>>()?;
    LambdaSweep::new(m.lambdas, datasets)
}
