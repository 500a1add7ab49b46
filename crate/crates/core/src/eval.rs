//! Lesion-level evaluation of multiclass segmentations.
//!
//! Predicted probability maps are turned into scored lesion candidates,
//! candidates are matched to ground-truth lesions by overlap, and the
//! matches feed an FROC curve, a lesion-level grading confusion matrix
//! (scored with quadratic weighted kappa) and the prostate Dice.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling;
use crate::volume::{
    argmax_high, Grid3, GsGroup, LabelVolume, LesionAnnotation, Mask, ProbabilityMap, N_CLASSES,
};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_HIT_RATIO: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Lesion-mass threshold for candidate voxels.
    pub theta: f64,
    /// Minimum fraction of a ground-truth lesion a candidate must cover.
    pub hit_ratio: f64,
    /// Restrict the FROC analysis to clinically significant lesions.
    pub cs_only: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            theta: DEFAULT_THETA,
            hit_ratio: DEFAULT_HIT_RATIO,
            cs_only: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Invalid(format!(
                "theta {} not in (0, 1)",
                self.theta
            )));
        }
        if !(self.hit_ratio > 0.0 && self.hit_ratio <= 1.0) {
            return Err(Error::Invalid(format!(
                "hit ratio {} not in (0, 1]",
                self.hit_ratio
            )));
        }
        Ok(())
    }
}

/// A predicted lesion: one connected component of high lesion mass.
#[derive(Clone, Debug, PartialEq)]
pub struct LesionCandidate {
    voxels: Vec<usize>,
    score: f64,
    predicted_gs: GsGroup,
    patient_id: String,
}

impl LesionCandidate {
    /// `voxels` are flat indices on `grid`; they must form one 26-connected
    /// component.
    pub fn new(
        grid: &Grid3,
        mut voxels: Vec<usize>,
        score: f64,
        predicted_gs: GsGroup,
        patient_id: impl Into<String>,
    ) -> Result<Self> {
        voxels.sort_unstable();
        voxels.dedup();
        if voxels.is_empty() {
            return Err(Error::Invalid("candidate has no voxels".into()));
        }
        if voxels.iter().any(|&v| v >= grid.len()) {
            return Err(Error::Invalid("candidate voxel outside grid".into()));
        }
        let coords: Vec<[usize; 3]> = voxels.iter().map(|&v| grid.coords(v)).collect();
        if !labeling::is_connected_26(&coords) {
            return Err(Error::Invalid("candidate is not 26-connected".into()));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Invalid(format!(
                "candidate score {score} not in [0, 1]"
            )));
        }
        Ok(LesionCandidate {
            voxels,
            score,
            predicted_gs,
            patient_id: patient_id.into(),
        })
    }

    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn predicted_gs(&self) -> GsGroup {
        self.predicted_gs
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }
}

fn lesion_classes(cs_only: bool) -> std::ops::Range<usize> {
    if cs_only {
        3..N_CLASSES
    } else {
        2..N_CLASSES
    }
}

/// Connected components of voxels whose lesion probability mass exceeds
/// `theta`, scored by their mean lesion mass.
pub fn extract_candidates(
    p: &ProbabilityMap,
    cs_only: bool,
    theta: f64,
    patient_id: &str,
) -> Vec<LesionCandidate> {
    let classes = lesion_classes(cs_only);
    let mass: Vec<f64> = p
        .probs()
        .iter()
        .map(|v| v[classes.clone()].iter().sum())
        .collect();
    let fg: Vec<bool> = mass.iter().map(|&m| m > theta).collect();
    labeling::components(p.grid(), &fg)
        .into_iter()
        .map(|voxels| {
            let score = voxels.iter().map(|&v| mass[v]).sum::<f64>() / voxels.len() as f64;
            let mut votes = [0usize; N_CLASSES];
            for &v in &voxels {
                let probs = &p.probs()[v];
                let local = argmax_high(&probs[classes.clone()]);
                votes[classes.start + local] += 1;
            }
            let winner = argmax_high(&votes.map(|n| n as f64)[classes.clone()]) + classes.start;
            LesionCandidate {
                voxels,
                score: score.clamp(0.0, 1.0),
                predicted_gs: GsGroup::from_label(winner as u8),
                patient_id: patient_id.to_string(),
            }
        })
        .collect()
}

fn intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// A ground-truth lesion resolved to sorted flat indices on a grid.
#[derive(Clone, Debug)]
pub struct GroundTruthLesion {
    pub id: u32,
    pub gs: GsGroup,
    pub voxels: Vec<usize>,
}

impl GroundTruthLesion {
    pub fn resolve(a: &LesionAnnotation, grid: &Grid3) -> Result<Self> {
        Ok(GroundTruthLesion {
            id: a.id(),
            gs: a.gs(),
            voxels: a.flat_indices(grid)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    /// Position of the hit lesion in the list passed to [`match_candidate`].
    pub lesion: usize,
    /// `|candidate ∩ lesion| / |lesion|`.
    pub ratio: f64,
}

/// The lesion with the largest covered fraction, if that fraction reaches
/// `hit_ratio`. Equal fractions resolve to the smaller lesion id.
pub fn match_candidate(
    cand: &LesionCandidate,
    gts: &[GroundTruthLesion],
    hit_ratio: f64,
) -> Option<Match> {
    let mut best: Option<Match> = None;
    for (n, gt) in gts.iter().enumerate() {
        let ratio = intersection_len(&cand.voxels, &gt.voxels) as f64 / gt.voxels.len() as f64;
        if ratio < hit_ratio {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => ratio > b.ratio || (ratio == b.ratio && gt.id < gts[b.lesion].id),
        };
        if better {
            best = Some(Match { lesion: n, ratio });
        }
    }
    best
}

/// Candidates and ground truth of one patient, with matches resolved.
#[derive(Clone, Debug)]
pub struct PatientDetections {
    pub patient_id: String,
    pub candidates: Vec<LesionCandidate>,
    pub lesions: Vec<GroundTruthLesion>,
    pub matches: Vec<Option<Match>>,
}

impl PatientDetections {
    pub fn new(
        patient_id: impl Into<String>,
        candidates: Vec<LesionCandidate>,
        lesions: Vec<GroundTruthLesion>,
        hit_ratio: f64,
    ) -> Self {
        let matches = candidates
            .iter()
            .map(|c| match_candidate(c, &lesions, hit_ratio))
            .collect();
        PatientDetections {
            patient_id: patient_id.into(),
            candidates,
            lesions,
            matches,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrocPoint {
    /// Score threshold; `f64::INFINITY` for the empty operating point.
    pub threshold: f64,
    pub fp_per_patient: f64,
    pub sensitivity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
    pub n_patients: usize,
    pub n_lesions: usize,
}

impl FrocCurve {
    pub fn max_fp(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.fp_per_patient)
    }

    pub fn max_sensitivity(&self) -> f64 {
        self.points
            .iter()
            .fold(0.0f64, |acc, p| acc.max(p.sensitivity))
    }
}

/// Sweep the score threshold from +inf down through every distinct
/// candidate score.
pub fn froc(patients: &[PatientDetections]) -> Result<FrocCurve> {
    if patients.is_empty() {
        return Err(Error::Invalid("FROC needs at least one patient".into()));
    }
    let n_lesions: usize = patients.iter().map(|p| p.lesions.len()).sum();
    if n_lesions == 0 {
        return Err(Error::Invalid(
            "FROC needs at least one ground-truth lesion".into(),
        ));
    }
    let n_patients = patients.len();

    // (score, patient, matched lesion)
    let mut kept: Vec<(f64, usize, Option<usize>)> = patients
        .iter()
        .enumerate()
        .flat_map(|(p, d)| {
            d.candidates
                .iter()
                .zip(&d.matches)
                .map(move |(c, m)| (c.score, p, m.map(|m| m.lesion)))
        })
        .collect();
    kept.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![FrocPoint {
        threshold: f64::INFINITY,
        fp_per_patient: 0.0,
        sensitivity: 0.0,
    }];
    let mut hit: HashSet<(usize, usize)> = HashSet::new();
    let mut fp = 0usize;
    let mut i = 0;
    while i < kept.len() {
        let tau = kept[i].0;
        while i < kept.len() && kept[i].0 == tau {
            match kept[i].2 {
                Some(l) => {
                    hit.insert((kept[i].1, l));
                }
                None => fp += 1,
            }
            i += 1;
        }
        points.push(FrocPoint {
            threshold: tau,
            fp_per_patient: fp as f64 / n_patients as f64,
            sensitivity: hit.len() as f64 / n_lesions as f64,
        });
    }
    Ok(FrocCurve {
        points,
        n_patients,
        n_lesions,
    })
}

/// Sensitivity at an average number of false positives per patient, by
/// linear interpolation along the curve.
pub fn sensitivity_at_fp(c: &FrocCurve, fp_target: f64) -> f64 {
    let pts = &c.points;
    let Some(last) = pts.last() else {
        return 0.0;
    };
    if fp_target > last.fp_per_patient {
        return c.max_sensitivity();
    }
    let exact = pts
        .iter()
        .filter(|p| p.fp_per_patient == fp_target)
        .map(|p| p.sensitivity)
        .fold(None, |acc: Option<f64>, s| {
            Some(acc.map_or(s, |a| a.max(s)))
        });
    if let Some(s) = exact {
        return s;
    }
    let first = pts[0];
    if fp_target < first.fp_per_patient {
        return first.sensitivity * fp_target / first.fp_per_patient;
    }
    // last point strictly left of the target, then its successor
    let k = pts
        .iter()
        .rposition(|p| p.fp_per_patient < fp_target)
        .expect("target lies inside the curve");
    let (a, b) = (pts[k], pts[k + 1]);
    let w = (fp_target - a.fp_per_patient) / (b.fp_per_patient - a.fp_per_patient);
    a.sensitivity + w * (b.sensitivity - a.sensitivity)
}

/// Square count matrix; rows are ground truth, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n: usize) -> Self {
        ConfusionMatrix {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n,
            counts: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.n + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = ConfusionMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.counts[j * self.n + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n).map(<[u64]>::to_vec).collect()
    }
}

/// Cohen's kappa with quadratic weights `(i - j)^2 / (C - 1)^2`.
///
/// Returns 0 when the expected weighted disagreement vanishes (both
/// marginals concentrated on one category).
pub fn quadratic_weighted_kappa(m: &ConfusionMatrix) -> Result<f64> {
    let c = m.size();
    if c < 2 {
        return Err(Error::Invalid(format!(
            "kappa needs >= 2 categories, got {c}"
        )));
    }
    let total = m.total();
    if total == 0 {
        return Err(Error::Invalid("kappa of an empty confusion matrix".into()));
    }
    let total = total as f64;
    let row: Vec<f64> = (0..c)
        .map(|i| (0..c).map(|j| m.get(i, j)).sum::<u64>() as f64 / total)
        .collect();
    let col: Vec<f64> = (0..c)
        .map(|j| (0..c).map(|i| m.get(i, j)).sum::<u64>() as f64 / total)
        .collect();
    let denom = ((c - 1) * (c - 1)) as f64;
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..c {
        for j in 0..c {
            let d = i.abs_diff(j);
            if d == 0 {
                continue;
            }
            let w = (d * d) as f64 / denom;
            observed += w * m.get(i, j) as f64 / total;
            expected += w * row[i] * col[j];
        }
    }
    if expected == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - observed / expected)
}

/// 5x5 lesion-level grading matrix over GS codes with a "none" category:
/// each lesion is graded by its best-overlapping matched candidate (or
/// "none" when missed), each unmatched candidate counts as (none, predicted).
pub fn lesion_grading_confusion(patients: &[PatientDetections]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::zeros(GsGroup::ALL.len());
    for p in patients {
        for (l, gt) in p.lesions.iter().enumerate() {
            // best candidate: covered fraction, then score, then first voxel
            let best = p
                .candidates
                .iter()
                .zip(&p.matches)
                .filter_map(|(c, mt)| mt.filter(|mt| mt.lesion == l).map(|mt| (c, mt.ratio)))
                .max_by(|(a, ra), (b, rb)| {
                    ra.total_cmp(rb)
                        .then(a.score.total_cmp(&b.score))
                        .then(b.voxels[0].cmp(&a.voxels[0]))
                });
            let pred = best.map_or(GsGroup::None, |(c, _)| c.predicted_gs);
            m.add(gt.gs.code() as usize, pred.code() as usize);
        }
        for (c, mt) in p.candidates.iter().zip(&p.matches) {
            if mt.is_none() {
                m.add(
                    GsGroup::None.code() as usize,
                    c.predicted_gs.code() as usize,
                );
            }
        }
    }
    m
}

/// `2|a ∩ b| / (|a| + |b|)`, 1 when both masks are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    a.grid().ensure_compatible(b.grid(), "dice masks")?;
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Ok(1.0);
    }
    let both = a
        .bits()
        .iter()
        .zip(b.bits())
        .filter(|(&x, &y)| x && y)
        .count();
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Everything known about one patient before evaluation.
#[derive(Clone, Debug)]
pub struct PatientInput {
    pub patient_id: String,
    pub prediction: ProbabilityMap,
    pub labels: LabelVolume,
    pub lesions: Vec<LesionAnnotation>,
}

/// Headline metrics, one field per reported column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub kappa: f64,
    pub sensi_1fp: f64,
    pub sensi_2fp: f64,
    pub sensi_max: f64,
    pub max_fp: f64,
    pub dice_prostate: f64,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub froc: FrocCurve,
    pub confusion: ConfusionMatrix,
    pub summary: EvalSummary,
}

struct PatientEval {
    froc: PatientDetections,
    grading: PatientDetections,
    dice: f64,
}

fn evaluate_patient(p: &PatientInput, cfg: &EvalConfig) -> Result<PatientEval> {
    let grid = p.prediction.grid();
    grid.ensure_compatible(p.labels.grid(), &format!("patient {}", p.patient_id))?;
    let all: Vec<GroundTruthLesion> = p
        .lesions
        .iter()
        .map(|a| GroundTruthLesion::resolve(a, grid))
        .collect::<Result<_>>()?;
    let candidates = extract_candidates(&p.prediction, false, cfg.theta, &p.patient_id);
    let grading = PatientDetections::new(
        &p.patient_id,
        candidates.clone(),
        all.clone(),
        cfg.hit_ratio,
    );
    let froc = if cfg.cs_only {
        let cs: Vec<_> = all
            .into_iter()
            .filter(|l| l.gs.is_clinically_significant())
            .collect();
        let cand = extract_candidates(&p.prediction, true, cfg.theta, &p.patient_id);
        PatientDetections::new(&p.patient_id, cand, cs, cfg.hit_ratio)
    } else {
        grading.clone()
    };
    let predicted_gland =
        Mask::from_fn_flat(grid.clone(), |i| argmax_high(&p.prediction.probs()[i]) >= 1);
    let dice = dice(&predicted_gland, &p.labels.prostate_mask())?;
    Ok(PatientEval {
        froc,
        grading,
        dice,
    })
}

/// Full lesion-level evaluation across patients. Patients are processed
/// in parallel; the reductions run in input order.
pub fn evaluate(patients: &[PatientInput], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if patients.is_empty() {
        return Err(Error::Invalid("no patients to evaluate".into()));
    }
    let per: Vec<PatientEval> = patients
        .par_iter()
        .map(|p| evaluate_patient(p, cfg))
        .collect::<Result<_>>()?;
    let (froc_sets, grading_sets): (Vec<_>, Vec<_>) = per
        .iter()
        .map(|p| (p.froc.clone(), p.grading.clone()))
        .unzip();
    let curve = froc(&froc_sets)?;
    let confusion = lesion_grading_confusion(&grading_sets);
    let kappa = quadratic_weighted_kappa(&confusion)?;
    let dice_prostate = per.iter().map(|p| p.dice).sum::<f64>() / per.len() as f64;
    let summary = EvalSummary {
        kappa,
        sensi_1fp: sensitivity_at_fp(&curve, 1.0),
        sensi_2fp: sensitivity_at_fp(&curve, 2.0),
        sensi_max: curve.max_sensitivity(),
        max_fp: curve.max_fp(),
        dice_prostate,
    };
    Ok(EvalReport {
        froc: curve,
        confusion,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: [usize; 3]) -> Grid3 {
        Grid3::with_dims(d).unwrap()
    }

    fn one_hot(c: usize) -> [f64; N_CLASSES] {
        let mut p = [0.0; N_CLASSES];
        p[c] = 1.0;
        p
    }

    fn lesion_probs(mass: f64, class: usize) -> [f64; N_CLASSES] {
        let mut p = [0.0; N_CLASSES];
        p[class] = mass;
        p[1] = 1.0 - mass;
        p
    }

    #[test]
    fn no_lesion_mass_no_candidates() {
        let g = grid([4, 4, 2]);
        let p = ProbabilityMap::new(g.clone(), vec![one_hot(1); g.len()]).unwrap();
        assert!(extract_candidates(&p, false, 0.5, "p").is_empty());
    }

    #[test]
    fn single_blob_candidate() {
        let g = grid([6, 6, 2]);
        let mut probs = vec![one_hot(0); g.len()];
        let blob: Vec<usize> = (0..10).map(|n| g.flat_index([n % 5, n / 5, 0])).collect();
        for &v in &blob {
            probs[v] = lesion_probs(0.9, 3);
        }
        let p = ProbabilityMap::new(g, probs).unwrap();
        let c = extract_candidates(&p, false, 0.5, "p");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].voxels().len(), 10);
        assert!((c[0].score() - 0.9).abs() < 1e-12);
        assert_eq!(c[0].predicted_gs(), GsGroup::Gs3Plus4);
    }

    #[test]
    fn vote_tie_goes_to_higher_gs() {
        let g = grid([4, 1, 1]);
        let probs = vec![
            lesion_probs(0.8, 2),
            lesion_probs(0.8, 4),
            one_hot(0),
            one_hot(0),
        ];
        let p = ProbabilityMap::new(g, probs).unwrap();
        let c = extract_candidates(&p, false, 0.5, "p");
        assert_eq!(c[0].predicted_gs(), GsGroup::Gs4Plus3);
    }

    #[test]
    fn cs_only_ignores_gs6_mass() {
        let g = grid([3, 1, 1]);
        let probs = vec![lesion_probs(0.9, 2), one_hot(0), lesion_probs(0.9, 5)];
        let p = ProbabilityMap::new(g, probs).unwrap();
        assert_eq!(extract_candidates(&p, false, 0.5, "p").len(), 2);
        let cs = extract_candidates(&p, true, 0.5, "p");
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].predicted_gs(), GsGroup::Gs8Plus);
    }

    fn gt(id: u32, gs: GsGroup, voxels: Vec<usize>) -> GroundTruthLesion {
        GroundTruthLesion { id, gs, voxels }
    }

    #[test]
    fn matching_rules() {
        let g = grid([40, 1, 1]);
        let a = gt(1, GsGroup::Gs3Plus4, (0..20).collect());
        let b = gt(2, GsGroup::Gs4Plus3, (20..40).collect());
        let gts = vec![a.clone(), b.clone()];

        let same =
            LesionCandidate::new(&g, (0..20).collect(), 1.0, GsGroup::Gs3Plus4, "p").unwrap();
        assert_eq!(
            match_candidate(&same, &gts, 0.1),
            Some(Match {
                lesion: 0,
                ratio: 1.0
            })
        );

        // 15% of A (3 voxels), 5% of B (1 voxel)
        let straddle =
            LesionCandidate::new(&g, (17..21).collect(), 0.5, GsGroup::Gs3Plus4, "p").unwrap();
        let m = match_candidate(&straddle, &gts, 0.1).unwrap();
        assert_eq!(m.lesion, 0);
        assert!((m.ratio - 0.15).abs() < 1e-12);

        let far = grid([50, 1, 1]);
        let gts_far = vec![gt(1, GsGroup::Gs3Plus4, (0..10).collect())];
        let disjoint =
            LesionCandidate::new(&far, (30..35).collect(), 0.5, GsGroup::Gs3Plus4, "p").unwrap();
        assert_eq!(match_candidate(&disjoint, &gts_far, 0.1), None);
    }

    fn curve(points: &[(f64, f64)]) -> FrocCurve {
        FrocCurve {
            points: points
                .iter()
                .map(|&(fp, s)| FrocPoint {
                    threshold: 0.0,
                    fp_per_patient: fp,
                    sensitivity: s,
                })
                .collect(),
            n_patients: 1,
            n_lesions: 1,
        }
    }

    #[test]
    fn sensitivity_interpolation() {
        let c = curve(&[(0.0, 0.0), (2.0, 0.8)]);
        assert!((sensitivity_at_fp(&c, 1.0) - 0.4).abs() < 1e-12);
        assert_eq!(sensitivity_at_fp(&c, 2.0), 0.8);
        assert_eq!(sensitivity_at_fp(&c, 5.0), 0.8);
        let c = curve(&[(0.5, 0.5), (1.0, 0.6)]);
        assert!((sensitivity_at_fp(&c, 0.25) - 0.25).abs() < 1e-12);
        let c = curve(&[(0.0, 0.0), (0.0, 1.0)]);
        assert_eq!(sensitivity_at_fp(&c, 0.0), 1.0);
        assert_eq!(sensitivity_at_fp(&c, 1.0), 1.0);
    }

    #[test]
    fn froc_without_candidates() {
        let d = PatientDetections::new("p", vec![], vec![gt(1, GsGroup::Gs8Plus, vec![0])], 0.1);
        let c = froc(&[d]).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(
            (c.points[0].fp_per_patient, c.points[0].sensitivity),
            (0.0, 0.0)
        );
        assert!(froc(&[PatientDetections::new("p", vec![], vec![], 0.1)]).is_err());
    }

    #[test]
    fn kappa_basics() {
        let diag =
            ConfusionMatrix::from_rows(&[vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 5]]).unwrap();
        assert_eq!(quadratic_weighted_kappa(&diag).unwrap(), 1.0);
        let single = ConfusionMatrix::from_rows(&[vec![0, 0], vec![0, 7]]).unwrap();
        assert_eq!(quadratic_weighted_kappa(&single).unwrap(), 0.0);
        assert!(quadratic_weighted_kappa(&ConfusionMatrix::zeros(3)).is_err());
        assert!(quadratic_weighted_kappa(&ConfusionMatrix::zeros(1)).is_err());
        // complete disagreement on two categories
        let anti = ConfusionMatrix::from_rows(&[vec![0, 4], vec![4, 0]]).unwrap();
        assert_eq!(quadratic_weighted_kappa(&anti).unwrap(), -1.0);
    }

    #[test]
    fn dice_examples() {
        let g = grid([300, 1, 1]);
        let a = Mask::from_fn_flat(g.clone(), |i| i < 100);
        let b = Mask::from_fn_flat(g.clone(), |i| (40..140).contains(&i));
        assert!((dice(&a, &b).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let c = Mask::from_fn_flat(g.clone(), |i| i >= 200);
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
        let empty = Mask::from_fn_flat(g.clone(), |_| false);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        assert_eq!(dice(&a, &empty).unwrap(), 0.0);
        let other = Mask::from_fn_flat(grid([10, 1, 1]), |_| true);
        assert!(dice(&a, &other).is_err());
    }

    #[test]
    fn config_ranges() {
        assert!(EvalConfig::default().validate().is_ok());
        for (theta, hit) in [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0), (0.5, 1.5)] {
            let c = EvalConfig {
                theta,
                hit_ratio: hit,
                cs_only: false,
            };
            assert!(c.validate().is_err());
        }
        let c = EvalConfig {
            hit_ratio: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
    }
}
