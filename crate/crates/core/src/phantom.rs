//! Synthetic DCE exams with analytically known kinetics.
//!
//! Each region follows a gamma-variate bolus curve, which peaks at
//! `onset_time + time_to_peak` with value `baseline + amplitude`, so every
//! perfusion feature has a closed-form reference. Noise is additive
//! Gaussian drawn from ChaCha8 with the generator seeded by `seed` and the
//! stream selected by the voxel's flat index; frame `t` of a voxel uses the
//! `t`-th standard normal draw (rand_distr's ziggurat) of that stream.

use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::kinetics;
use crate::volume::{
    DceSeries, Grid3, GsGroup, LabelVolume, LesionAnnotation, TimeIntensityCurve, TimeUnit,
    Volume3, LABEL_BACKGROUND, LABEL_PROSTATE,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    pub baseline: f64,
    pub amplitude: f64,
    pub onset_time: f64,
    pub time_to_peak: f64,
    /// Gamma-variate shape exponent.
    pub alpha: f64,
    #[serde(default)]
    pub region_id: u32,
}

impl KineticParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.baseline.is_finite()
            && self.baseline >= 0.0
            && self.amplitude.is_finite()
            && self.amplitude > 0.0
            && self.onset_time.is_finite()
            && self.onset_time >= 0.0
            && self.time_to_peak.is_finite()
            && self.time_to_peak > 0.0
            && self.alpha.is_finite()
            && self.alpha > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "region {}: invalid kinetic parameters {self:?}",
                self.region_id
            )))
        }
    }

    pub fn peak_time(&self) -> f64 {
        self.onset_time + self.time_to_peak
    }

    pub fn peak_value(&self) -> f64 {
        self.baseline + self.amplitude
    }
}

/// Gamma-variate bolus curve at time `t` (seconds).
pub fn gamma_variate(t: f64, p: &KineticParams) -> f64 {
    if t < p.onset_time {
        return p.baseline;
    }
    let u = (t - p.onset_time) / p.time_to_peak;
    p.baseline + p.amplitude * u.powf(p.alpha) * (p.alpha * (1.0 - u)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    /// Half-open voxel box `[min, max)`.
    Box {
        min: [usize; 3],
        max: [usize; 3],
    },
    /// Voxels whose index-space offset from `center` is inside the radii.
    Ellipsoid {
        center: [f64; 3],
        radii: [f64; 3],
    },
    Voxels(Vec<[usize; 3]>),
}

impl RegionShape {
    /// Flat indices on `grid`, sorted.
    pub fn voxels(&self, grid: &Grid3) -> Result<Vec<usize>> {
        let mut out = match self {
            RegionShape::Box { min, max } => {
                if (0..3).any(|a| min[a] >= max[a] || max[a] > grid.dims()[a]) {
                    return Err(Error::Invalid(format!(
                        "box {min:?}..{max:?} empty or outside dims {:?}",
                        grid.dims()
                    )));
                }
                let mut v = Vec::new();
                for k in min[2]..max[2] {
                    for j in min[1]..max[1] {
                        for i in min[0]..max[0] {
                            v.push(grid.flat_index([i, j, k]));
                        }
                    }
                }
                v
            }
            RegionShape::Ellipsoid { center, radii } => {
                if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(Error::Invalid(format!(
                        "ellipsoid radii {radii:?} must be > 0"
                    )));
                }
                (0..grid.len())
                    .filter(|&f| {
                        let c = grid.coords(f);
                        (0..3)
                            .map(|a| ((c[a] as f64 - center[a]) / radii[a]).powi(2))
                            .sum::<f64>()
                            <= 1.0
                    })
                    .collect()
            }
            RegionShape::Voxels(v) => v
                .iter()
                .map(|&ijk| grid.checked_index(ijk))
                .collect::<Result<Vec<_>>>()?,
        };
        out.sort_unstable();
        out.dedup();
        if out.is_empty() {
            return Err(Error::Invalid("region selects no voxels".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomRegion {
    pub shape: RegionShape,
    pub kinetics: KineticParams,
    /// GS group code; 0 marks enhancing tissue that is not a lesion.
    #[serde(default)]
    pub gs_code: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: Grid3,
    pub n_frames: usize,
    /// Seconds between frames; frame `t` is acquired at `t * frame_interval`.
    pub frame_interval: f64,
    #[serde(default)]
    pub regions: Vec<PhantomRegion>,
    /// Constant intensity of voxels outside every region.
    #[serde(default)]
    pub background: f64,
    /// Gland outline labelled as prostate beneath any lesion.
    #[serde(default)]
    pub prostate: Option<RegionShape>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_patient")]
    pub patient_id: String,
}

fn default_patient() -> String {
    "phantom".to_string()
}

impl PhantomSpec {
    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.n_frames)
            .map(|t| t as f64 * self.frame_interval)
            .collect()
    }

    /// Validate the phantom and resolve every region's voxels.
    pub fn resolve(&self) -> Result<Vec<Vec<usize>>> {
        if self.n_frames < 3 {
            return Err(Error::Invalid(format!(
                "need at least 3 frames, got {}",
                self.n_frames
            )));
        }
        if !(self.frame_interval.is_finite() && self.frame_interval > 0.0) {
            return Err(Error::Invalid("frame interval must be > 0".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Invalid("noise sigma must be >= 0".into()));
        }
        if !self.background.is_finite() {
            return Err(Error::Invalid("background must be finite".into()));
        }
        let last = (self.n_frames - 1) as f64 * self.frame_interval;
        let mut taken = HashSet::new();
        let mut resolved = Vec::with_capacity(self.regions.len());
        for r in &self.regions {
            r.kinetics.validate()?;
            GsGroup::from_code(r.gs_code)?;
            if r.kinetics.peak_time() > last {
                return Err(Error::Invalid(format!(
                    "region {}: peak at {} s after the last frame ({last} s)",
                    r.kinetics.region_id,
                    r.kinetics.peak_time()
                )));
            }
            let vox = r.shape.voxels(&self.grid)?;
            if vox.iter().any(|v| !taken.insert(*v)) {
                return Err(Error::Invalid(format!(
                    "region {} overlaps another region",
                    r.kinetics.region_id
                )));
            }
            resolved.push(vox);
        }
        if let Some(p) = &self.prostate {
            p.voxels(&self.grid)?;
        }
        Ok(resolved)
    }
}

/// Analytic reference features of one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionTruth {
    pub region_id: u32,
    pub gs_code: u8,
    pub n_voxels: usize,
    pub peak_time: f64,
    pub peak_value: f64,
    /// Frame nearest to the analytic peak.
    pub tmax_frame: usize,
    /// Onset detected on the noise-free sampled curve.
    pub onset_frame: usize,
    /// Chord from the sampled onset to the analytic peak, per second.
    pub wash_in_slope: f64,
    /// Chord from the analytic peak to the last frame, per second.
    pub wash_out_slope: f64,
    /// `100 * amplitude / baseline`; absent for a zero baseline.
    pub percent_enhancement: Option<f64>,
}

impl RegionTruth {
    fn of(params: &KineticParams, gs_code: u8, n_voxels: usize, times: &[f64]) -> Self {
        let dt = times[1] - times[0];
        let peak_time = params.peak_time();
        let peak_value = params.peak_value();
        let tmax_frame = ((peak_time / dt).round() as usize).min(times.len() - 1);
        let clean: Vec<f64> = times.iter().map(|&t| gamma_variate(t, params)).collect();
        let curve = TimeIntensityCurve::new(clean.clone(), times.to_vec())
            .expect("gamma-variate samples are finite");
        let onset_frame = kinetics::detect_onset(&curve);
        let wash_in_slope = if peak_time > times[onset_frame] {
            (peak_value - clean[onset_frame]) / (peak_time - times[onset_frame])
        } else {
            0.0
        };
        let last = times.len() - 1;
        let wash_out_slope = if times[last] > peak_time {
            (clean[last] - peak_value) / (times[last] - peak_time)
        } else {
            0.0
        };
        let percent_enhancement =
            (params.baseline > 0.0).then(|| 100.0 * params.amplitude / params.baseline);
        RegionTruth {
            region_id: params.region_id,
            gs_code,
            n_voxels,
            peak_time,
            peak_value,
            tmax_frame,
            onset_frame,
            wash_in_slope,
            wash_out_slope,
            percent_enhancement,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub series: DceSeries,
    pub truth: Vec<RegionTruth>,
    pub labels: LabelVolume,
    pub lesions: Vec<LesionAnnotation>,
}

fn noise_stream(seed: u64, voxel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(voxel as u64);
    rng
}

pub fn synth_dce(spec: &PhantomSpec) -> Result<Phantom> {
    let regions = spec.resolve()?;
    let grid = &spec.grid;
    let times = spec.frame_times();
    let n = grid.len();
    let t_len = spec.n_frames;

    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (r, vox) in regions.iter().enumerate() {
        for &v in vox {
            owner[v] = Some(r);
        }
    }

    // voxel-major curves, built in parallel
    let curves: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut c: Vec<f64> = match owner[v] {
                Some(r) => times
                    .iter()
                    .map(|&t| gamma_variate(t, &spec.regions[r].kinetics))
                    .collect(),
                None => vec![spec.background; t_len],
            };
            if spec.noise_sigma > 0.0 {
                let mut rng = noise_stream(spec.seed, v);
                for x in &mut c {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x += spec.noise_sigma * z;
                }
            }
            c
        })
        .collect();

    let frames = (0..t_len)
        .map(|t| Volume3::new(grid.clone(), curves.iter().map(|c| c[t]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let series = DceSeries::new(frames, times.clone(), TimeUnit::Seconds)?;

    let mut labels = vec![LABEL_BACKGROUND; n];
    if let Some(p) = &spec.prostate {
        for v in p.voxels(grid)? {
            labels[v] = LABEL_PROSTATE;
        }
    }
    let mut lesions = Vec::new();
    let mut truth = Vec::with_capacity(regions.len());
    for (r, vox) in regions.iter().enumerate() {
        let region = &spec.regions[r];
        let gs = GsGroup::from_code(region.gs_code)?;
        truth.push(RegionTruth::of(
            &region.kinetics,
            region.gs_code,
            vox.len(),
            &times,
        ));
        if gs != GsGroup::None {
            for &v in vox {
                labels[v] = gs.label();
            }
            lesions.push(LesionAnnotation::new(
                region.kinetics.region_id,
                spec.patient_id.clone(),
                gs,
                vox.iter().map(|&v| grid.coords(v)).collect(),
            )?);
        }
    }
    Ok(Phantom {
        series,
        truth,
        labels: LabelVolume::new(grid.clone(), labels)?,
        lesions,
    })
}

impl Phantom {
    /// Writes `<stem>.nii.gz`, `<stem>_timing.txt`, `<stem>_labels.nii.gz`,
    /// `<stem>_lesions.json` and `<stem>_truth.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let series_path = dir.join(format!("{stem}.nii.gz"));
        io::write_series(&self.series, &series_path)?;
        io::write_timing(self.series.times(), &io::timing_sidecar_path(&series_path))?;
        io::write_labels(&self.labels, &dir.join(format!("{stem}_labels.nii.gz")))?;
        io::write_annotations(&self.lesions, &dir.join(format!("{stem}_lesions.json")))?;
        let mut json = serde_json::to_string_pretty(&self.truth)?;
        json.push('\n');
        std::fs::write(dir.join(format!("{stem}_truth.json")), json)?;
        Ok(())
    }
}
