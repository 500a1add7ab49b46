//! Grids, scalar volumes, DCE series and the label types shared by the
//! kinetics, preprocessing and evaluation modules.
//!
//! Voxel storage is always x-fastest: the flat index of `(i, j, k)` is
//! `i + nx * (j + ny * k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling;

/// Tolerance in millimetres used when comparing spacing and origin.
pub const GRID_TOLERANCE_MM: f64 = 1e-6;

/// Number of segmentation classes: background, prostate and four GS groups.
pub const N_CLASSES: usize = 6;

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_PROSTATE: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid3 {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GridRepr {
    dims: [usize; 3],
    spacing: [f64; 3],
    #[serde(default)]
    origin: [f64; 3],
}

impl TryFrom<GridRepr> for Grid3 {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        Grid3::new(r.dims, r.spacing, r.origin)
    }
}

impl From<Grid3> for GridRepr {
    fn from(g: Grid3) -> Self {
        GridRepr {
            dims: g.dims,
            spacing: g.spacing,
            origin: g.origin,
        }
    }
}

impl Grid3 {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!(
                "dims must be >= 1, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite origin {origin:?}")));
        }
        Ok(Grid3 {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit-spaced grid at the origin.
    pub fn with_dims(dims: [usize; 3]) -> Result<Self> {
        Grid3::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, [i, j, k]: [usize; 3]) -> bool {
        i < self.dims[0] && j < self.dims[1] && k < self.dims[2]
    }

    #[inline]
    pub fn flat_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn checked_index(&self, ijk: [usize; 3]) -> Result<usize> {
        if self.contains(ijk) {
            Ok(self.flat_index(ijk))
        } else {
            Err(Error::OutOfBounds {
                index: ijk,
                dims: self.dims,
            })
        }
    }

    #[inline]
    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [flat % nx, (flat / nx) % ny, flat / (nx * ny)]
    }

    /// Physical position (mm) of a voxel centre.
    pub fn voxel_center(&self, [i, j, k]: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    pub fn is_compatible(&self, other: &Grid3) -> bool {
        self.dims == other.dims
            && close3(self.spacing, other.spacing)
            && close3(self.origin, other.origin)
    }

    pub fn ensure_compatible(&self, other: &Grid3, what: &str) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                self.dims, self.spacing, self.origin, other.dims, other.spacing, other.origin
            )))
        }
    }
}

fn close3(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter()
        .zip(b.iter())
        .all(|(x, y)| (x - y).abs() <= GRID_TOLERANCE_MM)
}

/// A 3D scalar volume with finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3 {
    grid: Grid3,
    data: Vec<f64>,
}

impl Volume3 {
    pub fn new(grid: Grid3, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "volume has {} voxels, grid {:?} needs {}",
                data.len(),
                grid.dims(),
                grid.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(Volume3 { grid, data })
    }

    pub fn constant(grid: Grid3, value: f64) -> Result<Self> {
        let n = grid.len();
        Volume3::new(grid, vec![value; n])
    }

    pub fn from_fn(grid: Grid3, mut f: impl FnMut([usize; 3]) -> f64) -> Result<Self> {
        let data = (0..grid.len()).map(|idx| f(grid.coords(idx))).collect();
        Volume3::new(grid, data)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, ijk: [usize; 3]) -> f64 {
        self.data[self.grid.flat_index(ijk)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnit {
    Seconds,
    FrameIndex,
}

/// A 4D DCE acquisition: `T >= 3` frames on one grid with strictly
/// increasing acquisition times.
#[derive(Clone, Debug, PartialEq)]
pub struct DceSeries {
    grid: Grid3,
    frames: Vec<Volume3>,
    times: Vec<f64>,
    time_unit: TimeUnit,
    uniform: bool,
}

impl DceSeries {
    pub fn new(frames: Vec<Volume3>, times: Vec<f64>, time_unit: TimeUnit) -> Result<Self> {
        if frames.len() < 3 {
            return Err(Error::InvalidSeries(format!(
                "need at least 3 frames, got {}",
                frames.len()
            )));
        }
        if times.len() != frames.len() {
            return Err(Error::InvalidSeries(format!(
                "{} frames but {} timestamps",
                frames.len(),
                times.len()
            )));
        }
        validate_times(&times).map_err(Error::InvalidSeries)?;
        let grid = frames[0].grid().clone();
        for (t, f) in frames.iter().enumerate() {
            grid.ensure_compatible(f.grid(), &format!("frame {t}"))?;
        }
        let uniform = is_uniform(&times);
        Ok(DceSeries {
            grid,
            frames,
            times,
            time_unit,
            uniform,
        })
    }

    /// Series without known acquisition times: frames are stamped 0..T-1.
    pub fn with_frame_indices(frames: Vec<Volume3>) -> Result<Self> {
        let times = (0..frames.len()).map(|t| t as f64).collect();
        DceSeries::new(frames, times, TimeUnit::FrameIndex)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn frames(&self) -> &[Volume3] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Volume3 {
        &self.frames[t]
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    /// Whether consecutive acquisition times are equally spaced.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Replace the timestamps, keeping the frames.
    pub fn retimed(self, times: Vec<f64>, time_unit: TimeUnit) -> Result<Self> {
        DceSeries::new(self.frames, times, time_unit)
    }

    pub fn curve(&self, ijk: [usize; 3]) -> Result<TimeIntensityCurve> {
        let idx = self.grid.checked_index(ijk)?;
        Ok(self.curve_at(idx))
    }

    /// Curve at a flat voxel index. Panics when out of range.
    pub fn curve_at(&self, flat: usize) -> TimeIntensityCurve {
        TimeIntensityCurve {
            samples: self.frames.iter().map(|f| f.data[flat]).collect(),
            times: self.times.clone(),
            uniform: self.uniform,
        }
    }

    pub(crate) fn gather_into(&self, flat: usize, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.frames) {
            *o = f.data[flat];
        }
    }
}

fn validate_times(times: &[f64]) -> std::result::Result<(), String> {
    if let Some(t) = times.iter().position(|t| !t.is_finite()) {
        return Err(format!("timestamp {t} is not finite"));
    }
    if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(format!(
            "timestamps must be strictly increasing (frame {} -> {})",
            w,
            w + 1
        ));
    }
    Ok(())
}

pub(crate) fn is_uniform(times: &[f64]) -> bool {
    if times.len() < 3 {
        return true;
    }
    let d0 = times[1] - times[0];
    times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - d0).abs() <= 1e-9 * d0.abs())
}

/// One voxel's intensity samples over the acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeIntensityCurve {
    samples: Vec<f64>,
    times: Vec<f64>,
    uniform: bool,
}

impl TimeIntensityCurve {
    pub fn new(samples: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        if samples.len() != times.len() {
            return Err(Error::Invalid(format!(
                "{} samples but {} timestamps",
                samples.len(),
                times.len()
            )));
        }
        if samples.len() < 3 {
            return Err(Error::Invalid(format!(
                "curve needs at least 3 samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        validate_times(&times).map_err(Error::Invalid)?;
        let uniform = is_uniform(&times);
        Ok(TimeIntensityCurve {
            samples,
            times,
            uniform,
        })
    }

    /// Curve stamped with frame indices 0..T-1.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        let times = (0..samples.len()).map(|t| t as f64).collect();
        TimeIntensityCurve::new(samples, times)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }
}

/// Ordinal Gleason-score group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum GsGroup {
    None = 0,
    Gs3Plus3 = 1,
    Gs3Plus4 = 2,
    Gs4Plus3 = 3,
    Gs8Plus = 4,
}

impl GsGroup {
    pub const ALL: [GsGroup; 5] = [
        GsGroup::None,
        GsGroup::Gs3Plus3,
        GsGroup::Gs3Plus4,
        GsGroup::Gs4Plus3,
        GsGroup::Gs8Plus,
    ];

    pub fn from_code(code: u8) -> Result<Self> {
        GsGroup::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("GS group code {code} not in 0..=4")))
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Segmentation class carrying this group (2..=5); `None` maps to background.
    pub fn label(self) -> u8 {
        match self {
            GsGroup::None => LABEL_BACKGROUND,
            g => g.code() + 1,
        }
    }

    /// GS group of a segmentation class; background and prostate give `None`.
    pub fn from_label(label: u8) -> GsGroup {
        match label {
            2..=5 => GsGroup::ALL[(label - 1) as usize],
            _ => GsGroup::None,
        }
    }

    /// GS > 6.
    pub fn is_clinically_significant(self) -> bool {
        self >= GsGroup::Gs3Plus4
    }
}

impl TryFrom<u8> for GsGroup {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        GsGroup::from_code(code)
    }
}

impl From<GsGroup> for u8 {
    fn from(g: GsGroup) -> u8 {
        g.code()
    }
}

/// Per-voxel class codes in `0..=5`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    grid: Grid3,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(grid: Grid3, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "label volume has {} voxels, grid needs {}",
                labels.len(),
                grid.len()
            )));
        }
        if let Some(bad) = labels.iter().position(|&l| l as usize >= N_CLASSES) {
            return Err(Error::Invalid(format!(
                "label {} at voxel {bad} outside 0..=5",
                labels[bad]
            )));
        }
        Ok(LabelVolume { grid, labels })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Whole gland: prostate plus every lesion class.
    pub fn prostate_mask(&self) -> Mask {
        Mask::from_fn_flat(self.grid.clone(), |i| self.labels[i] >= LABEL_PROSTATE)
    }

    /// Connected lesion regions as annotations, one per 26-connected
    /// component of each lesion class.
    pub fn lesions(&self, patient_id: &str) -> Vec<LesionAnnotation> {
        let mut out = Vec::new();
        for label in 2..N_CLASSES as u8 {
            let fg: Vec<bool> = self.labels.iter().map(|&l| l == label).collect();
            let comps = labeling::components(&self.grid, &fg);
            for comp in comps {
                out.push(LesionAnnotation {
                    id: 0,
                    patient_id: patient_id.to_string(),
                    gs: GsGroup::from_label(label),
                    voxels: comp.iter().map(|&f| self.grid.coords(f)).collect(),
                });
            }
        }
        // ids follow the scan order of each component's first voxel
        out.sort_by_key(|a| {
            let first = a.voxels[0];
            (self.grid.flat_index(first), a.gs)
        });
        for (n, a) in out.iter_mut().enumerate() {
            a.id = n as u32 + 1;
        }
        out
    }
}

/// Boolean voxel mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    grid: Grid3,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid3, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "mask has {} voxels, grid needs {}",
                bits.len(),
                grid.len()
            )));
        }
        Ok(Mask { grid, bits })
    }

    pub fn from_fn_flat(grid: Grid3, f: impl Fn(usize) -> bool) -> Self {
        let bits = (0..grid.len()).map(f).collect();
        Mask { grid, bits }
    }

    /// Non-zero voxels of a volume.
    pub fn from_volume(v: &Volume3) -> Self {
        Mask::from_fn_flat(v.grid().clone(), |i| v.data()[i] != 0.0)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

/// Per-voxel class distribution over the six segmentation classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    grid: Grid3,
    probs: Vec<[f64; N_CLASSES]>,
}

pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-5;

impl ProbabilityMap {
    pub fn new(grid: Grid3, probs: Vec<[f64; N_CLASSES]>) -> Result<Self> {
        if probs.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "probability map has {} voxels, grid needs {}",
                probs.len(),
                grid.len()
            )));
        }
        for (i, p) in probs.iter().enumerate() {
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Invalid(format!(
                    "voxel {i}: probabilities {p:?} outside [0, 1]"
                )));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "voxel {i}: probabilities sum to {sum}"
                )));
            }
        }
        Ok(ProbabilityMap { grid, probs })
    }

    /// One-hot map of a label volume.
    pub fn one_hot(labels: &LabelVolume) -> Self {
        let probs = labels
            .labels()
            .iter()
            .map(|&l| {
                let mut p = [0.0; N_CLASSES];
                p[l as usize] = 1.0;
                p
            })
            .collect();
        ProbabilityMap {
            grid: labels.grid().clone(),
            probs,
        }
    }

    /// Build from six channel volumes, channel `c` holding class `c`.
    pub fn from_channels(channels: &[Volume3]) -> Result<Self> {
        if channels.len() != N_CLASSES {
            return Err(Error::Invalid(format!(
                "probability map needs {N_CLASSES} channels, got {}",
                channels.len()
            )));
        }
        let grid = channels[0].grid().clone();
        for (c, ch) in channels.iter().enumerate() {
            grid.ensure_compatible(ch.grid(), &format!("channel {c}"))?;
        }
        let probs = (0..grid.len())
            .map(|i| std::array::from_fn(|c| channels[c].data()[i]))
            .collect();
        ProbabilityMap::new(grid, probs)
    }

    pub fn to_channels(&self) -> Vec<Volume3> {
        (0..N_CLASSES)
            .map(|c| Volume3 {
                grid: self.grid.clone(),
                data: self.probs.iter().map(|p| p[c]).collect(),
            })
            .collect()
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn probs(&self) -> &[[f64; N_CLASSES]] {
        &self.probs
    }

    /// Most probable class per voxel; ties go to the higher class.
    pub fn argmax_labels(&self) -> LabelVolume {
        let labels = self.probs.iter().map(|p| argmax_high(p) as u8).collect();
        LabelVolume {
            grid: self.grid.clone(),
            labels,
        }
    }
}

pub(crate) fn argmax_high(p: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in p.iter().enumerate() {
        if v >= p[best] {
            best = c;
        }
    }
    best
}

/// A ground-truth lesion: a 26-connected voxel set with a GS group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnnotationRepr", into = "AnnotationRepr")]
pub struct LesionAnnotation {
    id: u32,
    patient_id: String,
    gs: GsGroup,
    voxels: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AnnotationRepr {
    id: u32,
    patient_id: String,
    gs_code: u8,
    voxels: Vec<[usize; 3]>,
}

impl TryFrom<AnnotationRepr> for LesionAnnotation {
    type Error = Error;

    fn try_from(r: AnnotationRepr) -> Result<Self> {
        LesionAnnotation::new(r.id, r.patient_id, GsGroup::from_code(r.gs_code)?, r.voxels)
    }
}

impl From<LesionAnnotation> for AnnotationRepr {
    fn from(a: LesionAnnotation) -> Self {
        AnnotationRepr {
            id: a.id,
            patient_id: a.patient_id,
            gs_code: a.gs.code(),
            voxels: a.voxels,
        }
    }
}

impl LesionAnnotation {
    pub fn new(
        id: u32,
        patient_id: impl Into<String>,
        gs: GsGroup,
        mut voxels: Vec<[usize; 3]>,
    ) -> Result<Self> {
        if gs == GsGroup::None {
            return Err(Error::Invalid(format!(
                "lesion {id}: GS group must be >= 1"
            )));
        }
        voxels.sort_by_key(|&[i, j, k]| (k, j, i));
        voxels.dedup();
        if voxels.is_empty() {
            return Err(Error::Invalid(format!("lesion {id}: empty voxel set")));
        }
        if !labeling::is_connected_26(&voxels) {
            return Err(Error::Invalid(format!(
                "lesion {id}: voxel set is not 26-connected"
            )));
        }
        Ok(LesionAnnotation {
            id,
            patient_id: patient_id.into(),
            gs,
            voxels,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn gs(&self) -> GsGroup {
        self.gs
    }

    pub fn voxels(&self) -> &[[usize; 3]] {
        &self.voxels
    }

    /// Sorted flat indices on `grid`.
    pub fn flat_indices(&self, grid: &Grid3) -> Result<Vec<usize>> {
        let mut idx = self
            .voxels
            .iter()
            .map(|&v| grid.checked_index(v))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        Ok(idx)
    }
}
