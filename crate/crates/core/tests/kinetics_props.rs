use perfkit_core::kinetics::{
    self, compute_perfusion_maps, compute_perfusion_maps_with_workers, CurveFeatures,
};
use perfkit_core::{DceSeries, Grid3, Mask, TimeIntensityCurve, TimeUnit, Volume3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

fn magnitude(s: &[f64]) -> f64 {
    s.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-500.0f64..500.0, 3..40)
}

/// Strictly increasing times with random gaps.
fn irregular(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..10.0, n).prop_map(|gaps| {
        gaps.iter()
            .scan(0.0, |t, g| {
                let now = *t;
                *t += g;
                Some(now)
            })
            .collect()
    })
}

fn curve_with_times() -> impl Strategy<Value = TimeIntensityCurve> {
    samples().prop_flat_map(|s| {
        let n = s.len();
        (Just(s), irregular(n)).prop_map(|(s, t)| TimeIntensityCurve::new(s, t).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn ordering_and_sign(c in curve_with_times()) {
        let f = CurveFeatures::of(&c);
        prop_assert!(f.onset <= f.tmax);
        prop_assert!(f.tmax < c.len());
        prop_assert!(f.wash_in_slope >= 0.0);
        prop_assert!(f.wash_out_slope <= 0.0);
    }

    #[test]
    fn plateaus_keep_ordering(raw in prop::collection::vec(0u8..4, 3..30)) {
        let c = TimeIntensityCurve::from_samples(raw.iter().map(|&v| v as f64).collect()).unwrap();
        let f = CurveFeatures::of(&c);
        prop_assert!(f.onset <= f.tmax);
        prop_assert!(f.wash_in_slope >= 0.0 && f.wash_out_slope <= 0.0);
        // first occurrence of the maximum
        let max = raw.iter().copied().max().unwrap();
        prop_assert_eq!(f.tmax, raw.iter().position(|&v| v == max).unwrap());
    }

    #[test]
    fn shift_invariance(c in curve_with_times(), shift in -1000.0f64..1000.0) {
        let shifted: Vec<f64> = c.samples().iter().map(|v| v + shift).collect();
        let scale = magnitude(c.samples()) + shift.abs();
        let d = TimeIntensityCurve::new(shifted, c.times().to_vec()).unwrap();
        let (f, g) = (CurveFeatures::of(&c), CurveFeatures::of(&d));
        prop_assert_eq!(f.tmax, g.tmax);
        prop_assert_eq!(f.onset, g.onset);
        let dt = c.times()[c.len() - 1] - c.times()[0];
        let min_gap = c.times().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let slope_scale = scale / min_gap.min(dt);
        prop_assert!(close(f.wash_in_slope, g.wash_in_slope, slope_scale));
        prop_assert!(close(f.wash_out_slope, g.wash_out_slope, slope_scale));
    }

    #[test]
    fn scale_equivariance(c in curve_with_times(), alpha in 0.01f64..100.0) {
        let scaled: Vec<f64> = c.samples().iter().map(|v| v * alpha).collect();
        let d = TimeIntensityCurve::new(scaled, c.times().to_vec()).unwrap();
        let (f, g) = (CurveFeatures::of(&c), CurveFeatures::of(&d));
        prop_assert_eq!(f.tmax, g.tmax);
        prop_assert_eq!(f.onset, g.onset);
        prop_assert!((g.wash_in_slope - alpha * f.wash_in_slope).abs()
            <= 1e-12 * (alpha * f.wash_in_slope).abs().max(1e-300));
        prop_assert!((g.wash_out_slope - alpha * f.wash_out_slope).abs()
            <= 1e-12 * (alpha * f.wash_out_slope).abs().max(1e-300));
        prop_assert!((g.percent_enhancement - f.percent_enhancement).abs()
            <= 1e-12 * f.percent_enhancement.abs().max(1e-300));
    }

    #[test]
    fn time_unit_equivariance(s in samples(), delta in 0.01f64..60.0) {
        let n = s.len();
        let frames = TimeIntensityCurve::from_samples(s.clone()).unwrap();
        let secs = TimeIntensityCurve::new(s, (0..n).map(|k| k as f64 * delta).collect()).unwrap();
        let (f, g) = (CurveFeatures::of(&frames), CurveFeatures::of(&secs));
        prop_assert_eq!(f.tmax, g.tmax);
        prop_assert_eq!(f.onset, g.onset);
        prop_assert_eq!(f.percent_enhancement, g.percent_enhancement);
        prop_assert_eq!(f.degenerate, g.degenerate);
        prop_assert!((g.wash_in_slope - f.wash_in_slope / delta).abs()
            <= 1e-12 * (f.wash_in_slope / delta).abs().max(1e-300));
        prop_assert!((g.wash_out_slope - f.wash_out_slope / delta).abs()
            <= 1e-12 * (f.wash_out_slope / delta).abs().max(1e-300));
    }

    #[test]
    fn curve_extraction_restacks_exactly(seed in any::<u64>(), dims in (1usize..5, 1usize..5, 1usize..4), t in 3usize..8) {
        let s = random_series([dims.0, dims.1, dims.2], t, seed);
        let g = s.grid().clone();
        let curves: Vec<TimeIntensityCurve> = (0..g.len()).map(|i| s.curve_at(i)).collect();
        let frames = (0..t)
            .map(|k| Volume3::new(g.clone(), curves.iter().map(|c| c.samples()[k]).collect()).unwrap())
            .collect();
        let back = DceSeries::new(frames, s.times().to_vec(), s.time_unit()).unwrap();
        prop_assert_eq!(back, s);
    }
}

/// Straightforward reading of the feature definitions, kept independent of
/// the library code.
fn oracle(s: &[f64], t: &[f64]) -> (usize, usize, f64, f64) {
    let n = s.len();
    let mut m = 0;
    for k in 0..n {
        if s[k] > s[m] {
            m = k;
        }
    }
    let uniform = t
        .windows(2)
        .all(|w| ((w[1] - w[0]) - (t[1] - t[0])).abs() <= 1e-9 * (t[1] - t[0]).abs());
    let mut o = 0;
    if m >= 2 {
        let acc = |k: usize| {
            if uniform {
                s[k + 1] - 2.0 * s[k] + s[k - 1]
            } else {
                2.0 * ((s[k + 1] - s[k]) / (t[k + 1] - t[k])
                    - (s[k] - s[k - 1]) / (t[k] - t[k - 1]))
                    / (t[k + 1] - t[k - 1])
            }
        };
        let hi = m.min(n - 2);
        let best = (1..=hi).map(acc).fold(f64::NEG_INFINITY, f64::max);
        o = (1..=hi).find(|&k| acc(k) == best).unwrap();
    }
    let wi = if m == o {
        0.0
    } else {
        (s[m] - s[o]) / (t[m] - t[o])
    };
    let wo = if m == n - 1 {
        0.0
    } else {
        (s[n - 1] - s[m]) / (t[n - 1] - t[m])
    };
    (m, o, wi, wo)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_independent_reading(c in curve_with_times()) {
        let f = CurveFeatures::of(&c);
        let (m, o, wi, wo) = oracle(c.samples(), c.times());
        prop_assert_eq!((f.tmax, f.onset), (m, o));
        prop_assert_eq!(f.wash_in_slope, wi);
        prop_assert_eq!(f.wash_out_slope, wo);
    }
}

fn random_series(dims: [usize; 3], t: usize, seed: u64) -> DceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid3::new(dims, [1.0, 1.0, 3.0], [0.0; 3]).unwrap();
    let frames = (0..t)
        .map(|_| {
            Volume3::new(
                grid.clone(),
                (0..grid.len())
                    .map(|_| rng.random_range(0.0..1000.0))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let times = (0..t).map(|k| k as f64 * 4.5).collect();
    DceSeries::new(frames, times, TimeUnit::Seconds).unwrap()
}

#[test]
fn maps_equal_per_voxel_scalar_ops() {
    let s = random_series([8, 8, 4], 20, 11);
    let reference = compute_perfusion_maps_with_workers(&s, None, 1).unwrap();
    for workers in [1, 2, 8] {
        let maps = compute_perfusion_maps_with_workers(&s, None, workers).unwrap();
        assert_eq!(maps, reference);
        for idx in 0..s.grid().len() {
            let c = s.curve_at(idx);
            assert_eq!(maps.tmax_map.data()[idx], kinetics::tmax(&c) as f64);
            assert_eq!(
                maps.wash_in_map.data()[idx],
                kinetics::wash_in_slope(&c).value
            );
            assert_eq!(
                maps.wash_out_map.data()[idx],
                kinetics::wash_out_slope(&c).value
            );
            assert_eq!(
                maps.percent_enhancement_map.data()[idx],
                kinetics::percent_enhancement(&c).value
            );
            assert_eq!(
                maps.max_slope_volume.data()[idx],
                c.samples()[maps.max_slope_frame_index]
            );
        }
    }
}

#[test]
fn constant_series_gives_zero_maps() {
    let g = Grid3::with_dims([3, 3, 2]).unwrap();
    let frames = (0..6)
        .map(|_| Volume3::constant(g.clone(), 12.0).unwrap())
        .collect();
    let s = DceSeries::with_frame_indices(frames).unwrap();
    let maps = compute_perfusion_maps(&s, None).unwrap();
    for v in [
        &maps.tmax_map,
        &maps.wash_in_map,
        &maps.wash_out_map,
        &maps.percent_enhancement_map,
    ] {
        assert!(v.data().iter().all(|&x| x == 0.0));
    }
    assert_eq!(maps.degenerate_voxels, g.len());
}

#[test]
fn max_slope_frame_follows_mask() {
    let g = Grid3::with_dims([2, 1, 1]).unwrap();
    // voxel 0 rises between frames 1 and 2, voxel 1 between 3 and 4
    let a = [0.0, 0.0, 10.0, 10.0, 10.0];
    let b = [0.0, 0.0, 0.0, 0.0, 30.0];
    let frames = (0..5)
        .map(|t| Volume3::new(g.clone(), vec![a[t], b[t]]).unwrap())
        .collect();
    let s = DceSeries::with_frame_indices(frames).unwrap();
    assert_eq!(kinetics::max_slope_frame(&s, None).unwrap(), 4);
    let only_a = Mask::new(g.clone(), vec![true, false]).unwrap();
    assert_eq!(kinetics::max_slope_frame(&s, Some(&only_a)).unwrap(), 2);
    let empty = Mask::new(g, vec![false, false]).unwrap();
    assert!(kinetics::max_slope_frame(&s, Some(&empty)).is_err());
}
