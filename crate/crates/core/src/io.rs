//! NIfTI-1 volumes, timing sidecars and lesion annotation files.
//!
//! Intensities and maps are stored as 32-bit floats, label volumes as
//! unsigned bytes. 4D files hold either a DCE series (4th axis = time) or
//! a channel stack (4th axis = channel).

use std::fs;
use std::path::{Path, PathBuf};

use bytemuck::Pod;
use ndarray::{Array, IxDyn, ShapeBuilder};
use nifti::writer::WriterOptions;
use nifti::{DataElement, IntoNdArray, NiftiHeader, NiftiObject, ReaderOptions};

use crate::error::{Error, Result};
use crate::volume::{
    DceSeries, Grid3, LabelVolume, LesionAnnotation, ProbabilityMap, TimeUnit, Volume3, N_CLASSES,
};

const UNITS_MM: u8 = 2;
const UNITS_SEC: u8 = 8;

/// Contents of a NIfTI file: a single volume or a DCE series.
#[derive(Clone, Debug, PartialEq)]
pub enum NiftiData {
    Volume(Volume3),
    Series(DceSeries),
}

/// Raw image: grid, optional 4th extent and x-fastest values.
struct RawImage {
    grid: Grid3,
    extent4: Option<usize>,
    data: Vec<f64>,
}

fn read_raw(path: &Path) -> Result<RawImage> {
    let obj = ReaderOptions::new().read_file(path)?;
    let header = obj.header().clone();
    let rank = header.dim[0] as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::malformed(
            path,
            format!("unsupported dimensionality {rank}"),
        ));
    }
    let dim = |a: usize| -> usize {
        if a <= rank {
            header.dim[a] as usize
        } else {
            1
        }
    };
    let dims = [dim(1), dim(2), dim(3)];
    let extent4 = (rank == 4).then(|| dim(4));
    let spacing = [
        header.pixdim[1].abs() as f64,
        header.pixdim[2].abs() as f64,
        header.pixdim[3].abs() as f64,
    ];
    let origin = if header.sform_code > 0 {
        [
            header.srow_x[3] as f64,
            header.srow_y[3] as f64,
            header.srow_z[3] as f64,
        ]
    } else if header.qform_code > 0 {
        [
            header.quatern_x as f64,
            header.quatern_y as f64,
            header.quatern_z as f64,
        ]
    } else {
        [0.0; 3]
    };
    let grid =
        Grid3::new(dims, spacing, origin).map_err(|e| Error::malformed(path, e.to_string()))?;
    let array = obj.into_volume().into_ndarray::<f64>()?;
    let expected = grid.len() * extent4.unwrap_or(1);
    if array.len() != expected {
        return Err(Error::malformed(
            path,
            format!(
                "volume holds {} values, header implies {expected}",
                array.len()
            ),
        ));
    }
    // reversed axes iterate with x fastest
    let data: Vec<f64> = array.t().iter().copied().collect();
    if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::malformed(
            path,
            format!("non-finite value at index {bad}"),
        ));
    }
    Ok(RawImage {
        grid,
        extent4,
        data,
    })
}

fn split_volumes(grid: &Grid3, data: Vec<f64>) -> Result<Vec<Volume3>> {
    let n = grid.len();
    data.chunks(n)
        .map(|c| Volume3::new(grid.clone(), c.to_vec()))
        .collect()
}

/// `scan.nii.gz` -> `scan_timing.txt`.
pub fn timing_sidecar_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = strip_nifti_ext(&name);
    path.with_file_name(format!("{stem}_timing.txt"))
}

/// File name without `.nii` / `.nii.gz`.
pub fn strip_nifti_ext(name: &str) -> &str {
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(name)
}

/// Read a 3D volume or a 4D DCE series.
///
/// For 4D input, times come from `timing` when given, else from the
/// default sidecar next to the file when it exists, else frame indices.
pub fn read_nifti(path: &Path, timing: Option<&Path>) -> Result<NiftiData> {
    let raw = read_raw(path)?;
    match raw.extent4 {
        None => Ok(NiftiData::Volume(Volume3::new(raw.grid, raw.data)?)),
        Some(t) => {
            if t < 3 {
                return Err(Error::malformed(
                    path,
                    format!("4D series needs at least 3 frames, got {t}"),
                ));
            }
            let frames = split_volumes(&raw.grid, raw.data)?;
            let sidecar = match timing {
                Some(p) => Some(p.to_path_buf()),
                None => Some(timing_sidecar_path(path)).filter(|p| p.is_file()),
            };
            let series = match sidecar {
                Some(p) => {
                    let times = read_timing(&p)?;
                    if times.len() != t {
                        return Err(Error::malformed(
                            &p,
                            format!("{} timestamps for {t} frames", times.len()),
                        ));
                    }
                    DceSeries::new(frames, times, TimeUnit::Seconds)
                        .map_err(|e| Error::malformed(&p, e.to_string()))?
                }
                None => DceSeries::with_frame_indices(frames)?,
            };
            Ok(NiftiData::Series(series))
        }
    }
}

pub fn read_volume(path: &Path) -> Result<Volume3> {
    match read_nifti(path, None)? {
        NiftiData::Volume(v) => Ok(v),
        NiftiData::Series(_) => Err(Error::malformed(path, "expected 3D volume, found 4D")),
    }
}

pub fn read_series(path: &Path, timing: Option<&Path>) -> Result<DceSeries> {
    match read_nifti(path, timing)? {
        NiftiData::Series(s) => Ok(s),
        NiftiData::Volume(_) => Err(Error::malformed(
            path,
            "expected 4D series, found 3D volume",
        )),
    }
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    let raw = read_raw(path)?;
    if raw.extent4.is_some() {
        return Err(Error::malformed(path, "expected 3D label volume"));
    }
    let mut labels = Vec::with_capacity(raw.data.len());
    for (i, &v) in raw.data.iter().enumerate() {
        if v.fract() != 0.0 || !(0.0..N_CLASSES as f64).contains(&v) {
            return Err(Error::malformed(
                path,
                format!("label {v} at voxel {i} not in 0..=5"),
            ));
        }
        labels.push(v as u8);
    }
    LabelVolume::new(raw.grid, labels)
}

/// 4D file whose 4th axis holds channels.
pub fn read_channels(path: &Path) -> Result<Vec<Volume3>> {
    let raw = read_raw(path)?;
    if raw.extent4.is_none() {
        return Err(Error::malformed(path, "expected 4D channel stack"));
    }
    split_volumes(&raw.grid, raw.data)
}

pub fn read_probability_map(path: &Path) -> Result<ProbabilityMap> {
    let channels = read_channels(path)?;
    ProbabilityMap::from_channels(&channels).map_err(|e| Error::malformed(path, e.to_string()))
}

/// Header carrying spacing and origin; dims and datatype are filled in by
/// the writer.
fn reference_header(grid: &Grid3, time_step: Option<f64>) -> NiftiHeader {
    let [sx, sy, sz] = grid.spacing();
    let [ox, oy, oz] = grid.origin();
    let mut h = NiftiHeader {
        pixdim: [
            1.0,
            sx as f32,
            sy as f32,
            sz as f32,
            time_step.unwrap_or(1.0) as f32,
            1.0,
            1.0,
            1.0,
        ],
        xyzt_units: UNITS_MM | if time_step.is_some() { UNITS_SEC } else { 0 },
        qform_code: 1,
        sform_code: 1,
        quatern_b: 0.0,
        quatern_c: 0.0,
        quatern_d: 0.0,
        quatern_x: ox as f32,
        quatern_y: oy as f32,
        quatern_z: oz as f32,
        srow_x: [sx as f32, 0.0, 0.0, ox as f32],
        srow_y: [0.0, sy as f32, 0.0, oy as f32],
        srow_z: [0.0, 0.0, sz as f32, oz as f32],
        ..NiftiHeader::default()
    };
    let _ = h.set_description_str("perfkit");
    h
}

fn write_raw<T>(
    path: &Path,
    grid: &Grid3,
    extent4: Option<usize>,
    data: Vec<T>,
    time_step: Option<f64>,
) -> Result<()>
where
    T: DataElement + Pod,
{
    let [nx, ny, nz] = grid.dims();
    let shape: Vec<usize> = match extent4 {
        Some(t) => vec![nx, ny, nz, t],
        None => vec![nx, ny, nz],
    };
    let array = Array::from_shape_vec(IxDyn(&shape).f(), data)
        .map_err(|e| Error::Invalid(format!("cannot shape volume: {e}")))?;
    let header = reference_header(grid, time_step);
    WriterOptions::new(path)
        .reference_header(&header)
        .write_nifti(&array)?;
    Ok(())
}

pub fn write_volume(v: &Volume3, path: &Path) -> Result<()> {
    let data: Vec<f32> = v.data().iter().map(|&x| x as f32).collect();
    write_raw(path, v.grid(), None, data, None)
}

pub fn write_labels(v: &LabelVolume, path: &Path) -> Result<()> {
    write_raw(path, v.grid(), None, v.labels().to_vec(), None)
}

/// Write a series as a 4D float file. Uniformly spaced second timestamps
/// are recorded as the time step; the full timing lives in the sidecar.
pub fn write_series(s: &DceSeries, path: &Path) -> Result<()> {
    let data: Vec<f32> = s
        .frames()
        .iter()
        .flat_map(|f| f.data().iter().map(|&x| x as f32))
        .collect();
    let step =
        (s.time_unit() == TimeUnit::Seconds && s.is_uniform()).then(|| s.times()[1] - s.times()[0]);
    write_raw(path, s.grid(), Some(s.n_frames()), data, step)
}

/// Write same-grid volumes as the channels of a 4D float file.
pub fn write_channels(channels: &[Volume3], path: &Path) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| Error::Invalid("no channels to write".into()))?;
    for (c, ch) in channels.iter().enumerate() {
        first
            .grid()
            .ensure_compatible(ch.grid(), &format!("channel {c}"))?;
    }
    let data: Vec<f32> = channels
        .iter()
        .flat_map(|c| c.data().iter().map(|&x| x as f32))
        .collect();
    write_raw(path, first.grid(), Some(channels.len()), data, None)
}

pub fn write_probability_map(p: &ProbabilityMap, path: &Path) -> Result<()> {
    write_channels(&p.to_channels(), path)
}

/// One acquisition time in seconds per non-empty line.
pub fn read_timing(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(n, l)| {
            l.parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| Error::malformed(path, format!("line {}: bad time {l:?}", n + 1)))
        })
        .collect()
}

pub fn write_timing(times: &[f64], path: &Path) -> Result<()> {
    let mut text = String::new();
    for t in times {
        text.push_str(&format!("{t}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_annotations(path: &Path) -> Result<Vec<LesionAnnotation>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))
}

pub fn write_annotations(lesions: &[LesionAnnotation], path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(lesions)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
