//! Semi-quantitative analysis of time-intensity curves.
//!
//! Every voxel's curve yields the time of peak (`tmax`), the onset of the
//! wash-in period (maximum acceleration before the peak), the wash-in and
//! wash-out chord slopes and the maximum percentage of enhancement. The
//! series as a whole yields one "maximum slope" frame, the frame that
//! ends the steepest rise of the mean curve.
//!
//! All argmax searches break ties towards the smallest index, so results
//! never depend on evaluation order.

use std::path::Path;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::volume::{DceSeries, Mask, TimeIntensityCurve, TimeUnit, Volume3};

/// A feature value with a flag set when the curve shape made it undefined
/// (the value is then 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub degenerate: bool,
}

impl Measured {
    fn ok(value: f64) -> Self {
        Measured {
            value,
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        Measured {
            value: 0.0,
            degenerate: true,
        }
    }
}

/// Features of one time-intensity curve. Slopes are in intensity per
/// time unit of the curve's timestamps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveFeatures {
    pub onset: usize,
    pub tmax: usize,
    pub wash_in_slope: f64,
    pub wash_out_slope: f64,
    pub percent_enhancement: f64,
    pub degenerate: bool,
}

impl CurveFeatures {
    pub fn of(c: &TimeIntensityCurve) -> Self {
        features(c.samples(), c.times(), c.is_uniform())
    }
}

pub fn tmax(c: &TimeIntensityCurve) -> usize {
    argmax_first(c.samples())
}

pub fn detect_onset(c: &TimeIntensityCurve) -> usize {
    let m = tmax(c);
    onset(c.samples(), c.times(), c.is_uniform(), m)
}

pub fn wash_in_slope(c: &TimeIntensityCurve) -> Measured {
    let m = tmax(c);
    let o = onset(c.samples(), c.times(), c.is_uniform(), m);
    wash_in(c.samples(), c.times(), o, m)
}

pub fn wash_out_slope(c: &TimeIntensityCurve) -> Measured {
    wash_out(c.samples(), c.times(), tmax(c))
}

pub fn percent_enhancement(c: &TimeIntensityCurve) -> Measured {
    enhancement(c.samples(), tmax(c))
}

fn argmax_first(s: &[f64]) -> usize {
    let mut best = 0;
    for (t, &v) in s.iter().enumerate().skip(1) {
        if v > s[best] {
            best = t;
        }
    }
    best
}

/// Second difference at `k`; divided differences when the sampling is not
/// uniform.
#[inline]
fn acceleration(s: &[f64], t: &[f64], uniform: bool, k: usize) -> f64 {
    if uniform {
        s[k + 1] - 2.0 * s[k] + s[k - 1]
    } else {
        let right = (s[k + 1] - s[k]) / (t[k + 1] - t[k]);
        let left = (s[k] - s[k - 1]) / (t[k] - t[k - 1]);
        2.0 * (right - left) / (t[k + 1] - t[k - 1])
    }
}

fn onset(s: &[f64], t: &[f64], uniform: bool, m: usize) -> usize {
    if m < 2 {
        return 0;
    }
    let last = m.min(s.len() - 2);
    let mut best = 1;
    let mut best_acc = acceleration(s, t, uniform, 1);
    for k in 2..=last {
        let a = acceleration(s, t, uniform, k);
        if a > best_acc {
            best = k;
            best_acc = a;
        }
    }
    best
}

fn wash_in(s: &[f64], t: &[f64], o: usize, m: usize) -> Measured {
    if m == o {
        Measured::degenerate()
    } else {
        Measured::ok((s[m] - s[o]) / (t[m] - t[o]))
    }
}

fn wash_out(s: &[f64], t: &[f64], m: usize) -> Measured {
    let last = s.len() - 1;
    if m == last {
        Measured::degenerate()
    } else {
        Measured::ok((s[last] - s[m]) / (t[last] - t[m]))
    }
}

fn enhancement(s: &[f64], m: usize) -> Measured {
    let peak_abs = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let eps = if peak_abs == 0.0 {
        1e-12
    } else {
        1e-6 * peak_abs
    };
    if s[0] < eps {
        Measured::degenerate()
    } else {
        Measured::ok(100.0 * (s[m] - s[0]) / s[0])
    }
}

fn features(s: &[f64], t: &[f64], uniform: bool) -> CurveFeatures {
    let m = argmax_first(s);
    let o = onset(s, t, uniform, m);
    let wi = wash_in(s, t, o, m);
    let wo = wash_out(s, t, m);
    let pe = enhancement(s, m);
    CurveFeatures {
        onset: o,
        tmax: m,
        wash_in_slope: wi.value,
        wash_out_slope: wo.value,
        percent_enhancement: pe.value,
        degenerate: wi.degenerate || wo.degenerate || pe.degenerate,
    }
}

/// Mean intensity over the mask (all voxels by default) per frame.
pub fn mean_curve(s: &DceSeries, mask: Option<&Mask>) -> Result<Vec<f64>> {
    let selected: Vec<usize> = match mask {
        Some(m) => {
            s.grid().ensure_compatible(m.grid(), "mask")?;
            if m.is_empty() {
                return Err(Error::Invalid("mask selects no voxels".into()));
            }
            (0..m.bits().len()).filter(|&i| m.bits()[i]).collect()
        }
        None => (0..s.grid().len()).collect(),
    };
    let n = selected.len() as f64;
    Ok(s.frames()
        .iter()
        .map(|f| selected.iter().map(|&i| f.data()[i]).sum::<f64>() / n)
        .collect())
}

/// Frame ending the first interval of steepest mean-curve rise.
pub fn max_slope_frame(s: &DceSeries, mask: Option<&Mask>) -> Result<usize> {
    let mean = mean_curve(s, mask)?;
    let times = s.times();
    let mut best = 0;
    let mut best_slope = f64::NEG_INFINITY;
    for t in 0..mean.len() - 1 {
        let slope = (mean[t + 1] - mean[t]) / (times[t + 1] - times[t]);
        if slope > best_slope {
            best = t;
            best_slope = slope;
        }
    }
    Ok(best + 1)
}

/// The five perfusion maps of one DCE exam.
#[derive(Clone, Debug, PartialEq)]
pub struct PerfusionMapSet {
    pub tmax_map: Volume3,
    pub wash_in_map: Volume3,
    pub wash_out_map: Volume3,
    pub percent_enhancement_map: Volume3,
    pub max_slope_volume: Volume3,
    pub max_slope_frame_index: usize,
    pub degenerate_voxels: usize,
    pub time_unit: TimeUnit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub time_unit: TimeUnit,
    pub max_slope_frame_index: usize,
    pub degenerate_voxels: usize,
}

/// File suffixes of the written maps, in output order.
pub const MAP_SUFFIXES: [&str; 5] = ["tmax", "washin", "washout", "pctenh", "maxslope"];

impl PerfusionMapSet {
    pub fn metadata(&self) -> MapMetadata {
        MapMetadata {
            time_unit: self.time_unit,
            max_slope_frame_index: self.max_slope_frame_index,
            degenerate_voxels: self.degenerate_voxels,
        }
    }

    /// Tmax expressed in the series' timestamps instead of frame indices.
    pub fn tmax_in_time_units(&self, series: &DceSeries) -> Volume3 {
        let data = self
            .tmax_map
            .data()
            .iter()
            .map(|&t| series.times()[t as usize])
            .collect();
        Volume3::new(self.tmax_map.grid().clone(), data).expect("timestamps are finite")
    }

    fn maps(&self) -> [&Volume3; 5] {
        [
            &self.tmax_map,
            &self.wash_in_map,
            &self.wash_out_map,
            &self.percent_enhancement_map,
            &self.max_slope_volume,
        ]
    }

    /// Writes `<stem>_<suffix>.nii.gz` for each map plus `<stem>_maps.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        for (suffix, map) in MAP_SUFFIXES.iter().zip(self.maps()) {
            io::write_volume(map, &dir.join(format!("{stem}_{suffix}.nii.gz")))?;
        }
        let mut json = serde_json::to_string_pretty(&self.metadata())?;
        json.push('\n');
        std::fs::write(dir.join(format!("{stem}_maps.json")), json)?;
        Ok(())
    }
}

/// Compute all maps on the global rayon pool.
pub fn compute_perfusion_maps(s: &DceSeries, mask: Option<&Mask>) -> Result<PerfusionMapSet> {
    let frame = max_slope_frame(s, mask)?;
    let feats: Vec<CurveFeatures> = (0..s.grid().len())
        .into_par_iter()
        .map_init(
            || vec![0.0; s.n_frames()],
            |buf, idx| {
                s.gather_into(idx, buf);
                features(buf, s.times(), s.is_uniform())
            },
        )
        .collect();
    assemble(s, feats, frame)
}

/// Compute all maps on a dedicated pool of `workers` threads.
pub fn compute_perfusion_maps_with_workers(
    s: &DceSeries,
    mask: Option<&Mask>,
    workers: usize,
) -> Result<PerfusionMapSet> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| compute_perfusion_maps(s, mask))
}

fn assemble(s: &DceSeries, feats: Vec<CurveFeatures>, frame: usize) -> Result<PerfusionMapSet> {
    let grid = s.grid().clone();
    let map =
        |f: fn(&CurveFeatures) -> f64| Volume3::new(grid.clone(), feats.iter().map(f).collect());
    let degenerate_voxels = feats.iter().filter(|f| f.degenerate).count();
    debug!(
        "perfusion maps: {} voxels, {} degenerate, max slope frame {}",
        feats.len(),
        degenerate_voxels,
        frame
    );
    Ok(PerfusionMapSet {
        tmax_map: map(|f| f.tmax as f64)?,
        wash_in_map: map(|f| f.wash_in_slope)?,
        wash_out_map: map(|f| f.wash_out_slope)?,
        percent_enhancement_map: map(|f| f.percent_enhancement)?,
        max_slope_volume: s.frame(frame).clone(),
        max_slope_frame_index: frame,
        degenerate_voxels,
        time_unit: s.time_unit(),
    })
}
