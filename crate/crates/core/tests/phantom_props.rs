use perfkit_core::io;
use perfkit_core::phantom::{
    gamma_variate, synth_dce, KineticParams, PhantomRegion, PhantomSpec, RegionShape,
};
use perfkit_core::{Grid3, GsGroup};
use proptest::prelude::*;

fn spec(noise: f64, seed: u64) -> PhantomSpec {
    let kin = |id, t0, tp| KineticParams {
        baseline: 120.0,
        amplitude: 90.0,
        onset_time: t0,
        time_to_peak: tp,
        alpha: 1.5,
        region_id: id,
    };
    PhantomSpec {
        grid: Grid3::new([16, 16, 4], [1.0, 1.0, 3.0], [0.0; 3]).unwrap(),
        n_frames: 30,
        frame_interval: 4.0,
        regions: vec![
            PhantomRegion {
                shape: RegionShape::Ellipsoid {
                    center: [4.0, 4.0, 1.5],
                    radii: [2.5, 2.5, 1.5],
                },
                kinetics: kin(1, 10.0, 40.0),
                gs_code: 1,
            },
            PhantomRegion {
                shape: RegionShape::Box {
                    min: [10, 10, 0],
                    max: [14, 13, 3],
                },
                kinetics: kin(2, 12.0, 60.0),
                gs_code: 4,
            },
            PhantomRegion {
                shape: RegionShape::Voxels(vec![[0, 15, 0], [1, 15, 0]]),
                kinetics: kin(3, 0.0, 20.0),
                gs_code: 0,
            },
        ],
        background: 30.0,
        prostate: Some(RegionShape::Box {
            min: [1, 1, 0],
            max: [15, 15, 4],
        }),
        noise_sigma: noise,
        seed,
        patient_id: "case01".into(),
    }
}

#[test]
fn labels_and_annotations_agree() {
    let ph = synth_dce(&spec(0.0, 1)).unwrap();
    assert_eq!(ph.lesions.len(), 2);
    let from_labels = ph.labels.lesions("case01");
    assert_eq!(from_labels.len(), 2);
    for a in &ph.lesions {
        let twin = from_labels
            .iter()
            .find(|b| b.voxels() == a.voxels())
            .unwrap();
        assert_eq!(twin.gs(), a.gs());
    }
    assert_eq!(ph.lesions[1].gs(), GsGroup::Gs8Plus);
    assert_eq!(ph.truth.len(), 3);
    assert_eq!(ph.truth[2].gs_code, 0);
}

#[test]
fn written_files_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let ph = synth_dce(&spec(2.0, 3)).unwrap();
    ph.write(dir.path(), "case01").unwrap();
    let s = io::read_series(&dir.path().join("case01.nii.gz"), None).unwrap();
    assert_eq!(s.times(), ph.series.times());
    for (a, b) in s.frames().iter().zip(ph.series.frames()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
    assert_eq!(
        io::read_labels(&dir.path().join("case01_labels.nii.gz")).unwrap(),
        ph.labels
    );
    assert_eq!(
        io::read_annotations(&dir.path().join("case01_lesions.json")).unwrap(),
        ph.lesions
    );
    let truth: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("case01_truth.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(truth.as_array().unwrap().len(), 3);
}

#[test]
fn noise_has_requested_spread() {
    let mut s = spec(5.0, 11);
    s.regions.clear();
    s.prostate = None;
    let ph = synth_dce(&s).unwrap();
    let vals: Vec<f64> = ph
        .series
        .frames()
        .iter()
        .flat_map(|f| f.data().iter().map(|v| v - 30.0))
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 0.1, "mean {mean}");
    assert!((sd - 5.0).abs() < 0.1, "sd {sd}");
}

#[test]
fn noise_streams_do_not_depend_on_other_voxels() {
    let a = synth_dce(&spec(1.0, 9)).unwrap();
    let mut bigger = spec(1.0, 9);
    bigger.regions.pop();
    let b = synth_dce(&bigger).unwrap();
    // the noise realisation of a background voxel is unchanged
    let v = a.series.grid().flat_index([8, 2, 3]);
    assert_eq!(a.series.curve_at(v), b.series.curve_at(v));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gamma_variate_peaks_at_onset_plus_ttp(
        baseline in 0.0f64..500.0,
        amplitude in 1.0f64..500.0,
        t0 in 0.0f64..60.0,
        tp in 1.0f64..120.0,
        alpha in 0.5f64..6.0,
    ) {
        let p = KineticParams { baseline, amplitude, onset_time: t0, time_to_peak: tp, alpha, region_id: 1 };
        let peak = gamma_variate(t0 + tp, &p);
        prop_assert!((peak - (baseline + amplitude)).abs() <= 1e-9 * (baseline + amplitude));
        for k in 0..200 {
            let t = k as f64 * (t0 + 3.0 * tp) / 200.0;
            prop_assert!(gamma_variate(t, &p) <= peak * (1.0 + 1e-12));
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn same_seed_same_series(seed in any::<u64>()) {
        let a = synth_dce(&spec(3.0, seed)).unwrap();
        let b = synth_dce(&spec(3.0, seed)).unwrap();
        prop_assert_eq!(a.series, b.series);
    }
}
