//! Network input preparation: resampling to a target voxel size, in-plane
//! center cropping, per-volume min-max normalization and channel stacking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Grid3, Volume3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_spacing: [f64; 3],
    pub crop_size: [usize; 2],
    pub normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_spacing: [1.0, 1.0, 3.0],
            crop_size: [96, 96],
            normalize: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self
            .target_spacing
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::Invalid(format!(
                "target spacing must be > 0, got {:?}",
                self.target_spacing
            )));
        }
        if self.crop_size.contains(&0) {
            return Err(Error::Invalid(format!(
                "crop size must be >= 1, got {:?}",
                self.crop_size
            )));
        }
        Ok(())
    }
}

/// Linear interpolation kept inside `[min(a, b), max(a, b)]`.
#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 || a == b {
        return a;
    }
    let v = a + w * (b - a);
    v.clamp(a.min(b), a.max(b))
}

/// Continuous input index of each output voxel along one axis, with the
/// lower neighbour and weight, clamped to the input extent.
fn axis_samples(n_in: usize, sp_in: f64, n_out: usize, sp_out: f64) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|j| {
            let x = ((j as f64 + 0.5) * sp_out) / sp_in - 0.5;
            let x = x.clamp(0.0, (n_in - 1) as f64);
            let lo = x.floor() as usize;
            let w = x - lo as f64;
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, w)
        })
        .collect()
}

fn output_len(n: usize, sp_in: f64, sp_out: f64) -> usize {
    let extent = n as f64 * sp_in;
    // guard against 24.000000001 -> 25
    ((extent / sp_out) - 1e-9).ceil().max(1.0) as usize
}

/// Resample onto `target_spacing` covering the same physical extent.
///
/// Output voxel centres map back to continuous input indices; points
/// outside the input clamp to the nearest edge voxel.
pub fn resample_trilinear(v: &Volume3, target_spacing: [f64; 3]) -> Result<Volume3> {
    let g = v.grid();
    let dims_in = g.dims();
    let sp_in = g.spacing();
    let dims_out: [usize; 3] =
        std::array::from_fn(|a| output_len(dims_in[a], sp_in[a], target_spacing[a]));
    let origin_out: [f64; 3] =
        std::array::from_fn(|a| g.origin()[a] - 0.5 * sp_in[a] + 0.5 * target_spacing[a]);
    let grid_out = Grid3::new(dims_out, target_spacing, origin_out)?;
    let ax: [Vec<(usize, usize, f64)>; 3] =
        std::array::from_fn(|a| axis_samples(dims_in[a], sp_in[a], dims_out[a], target_spacing[a]));
    let src = v.data();
    let at = |i: usize, j: usize, k: usize| src[g.flat_index([i, j, k])];
    let mut out = Vec::with_capacity(grid_out.len());
    for &(z0, z1, wz) in &ax[2] {
        for &(y0, y1, wy) in &ax[1] {
            for &(x0, x1, wx) in &ax[0] {
                let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), wx);
                let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), wx);
                let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), wx);
                let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), wx);
                let c0 = lerp(c00, c10, wy);
                let c1 = lerp(c01, c11, wy);
                out.push(lerp(c0, c1, wz));
            }
        }
    }
    Volume3::new(grid_out, out)
}

/// In-plane window of `crop` voxels around the image centre; undersized
/// axes are zero-padded, the odd voxel going to the high side.
pub fn center_crop(v: &Volume3, crop: [usize; 2]) -> Result<Volume3> {
    let g = v.grid();
    let [nx, ny, nz] = g.dims();
    // signed offset of output index 0 in input coordinates
    let offset = |n: usize, c: usize| -> i64 {
        if n >= c {
            ((n - c) / 2) as i64
        } else {
            -(((c - n) / 2) as i64)
        }
    };
    let (ox, oy) = (offset(nx, crop[0]), offset(ny, crop[1]));
    let sp = g.spacing();
    let origin = g.origin();
    let grid_out = Grid3::new(
        [crop[0], crop[1], nz],
        sp,
        [
            origin[0] + ox as f64 * sp[0],
            origin[1] + oy as f64 * sp[1],
            origin[2],
        ],
    )?;
    let mut out = vec![0.0; grid_out.len()];
    for k in 0..nz {
        for j in 0..crop[1] {
            let y = j as i64 + oy;
            if y < 0 || y >= ny as i64 {
                continue;
            }
            for i in 0..crop[0] {
                let x = i as i64 + ox;
                if x < 0 || x >= nx as i64 {
                    continue;
                }
                out[grid_out.flat_index([i, j, k])] = v.get([x as usize, y as usize, k]);
            }
        }
    }
    Volume3::new(grid_out, out)
}

/// Min-max normalized volume; `degenerate` is set for constant input,
/// which maps to all zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub volume: Volume3,
    pub degenerate: bool,
}

pub fn normalize_minmax(v: &Volume3) -> Normalized {
    let (lo, hi) = v.min_max();
    let grid = v.grid().clone();
    if hi == lo {
        return Normalized {
            volume: Volume3::constant(grid, 0.0).expect("grid already validated"),
            degenerate: true,
        };
    }
    let range = hi - lo;
    let data = v.data().iter().map(|&x| (x - lo) / range).collect();
    Normalized {
        volume: Volume3::new(grid, data).expect("finite by construction"),
        degenerate: false,
    }
}

/// Same-grid volumes stacked channel-major in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    channels: Vec<Volume3>,
}

impl ChannelStack {
    pub fn channels(&self) -> &[Volume3] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn grid(&self) -> &Grid3 {
        self.channels[0].grid()
    }

    /// Channel-major flat buffer: channel, then z, y, x.
    pub fn to_flat(&self) -> Vec<f64> {
        self.channels
            .iter()
            .flat_map(|c| c.data().iter().copied())
            .collect()
    }
}

/// Stack modalities for early fusion, conventionally T2w, ADC, then any
/// perfusion maps.
pub fn assemble_channels(mods: Vec<Volume3>) -> Result<ChannelStack> {
    if mods.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 modalities, got {}",
            mods.len()
        )));
    }
    let first = mods[0].grid().clone();
    for (c, m) in mods.iter().enumerate().skip(1) {
        first.ensure_compatible(m.grid(), &format!("modality {c}"))?;
    }
    Ok(ChannelStack { channels: mods })
}

/// Resample, crop, then (optionally) normalize one volume.
pub fn preprocess_volume(v: &Volume3, cfg: &PreprocessConfig) -> Result<Volume3> {
    cfg.validate()?;
    let resampled = resample_trilinear(v, cfg.target_spacing)?;
    let cropped = center_crop(&resampled, cfg.crop_size)?;
    Ok(if cfg.normalize {
        normalize_minmax(&cropped).volume
    } else {
        cropped
    })
}
