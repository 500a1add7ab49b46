//! `perfkit` subcommands: perfusion maps, preprocessing, lesion-level
//! evaluation and phantom generation.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on invalid input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use perfkit_core::eval::{self, EvalConfig, EvalReport, PatientInput};
use perfkit_core::io;
use perfkit_core::kinetics;
use perfkit_core::phantom::{self, PhantomSpec};
use perfkit_core::preprocess::{self, PreprocessConfig};
use perfkit_core::{LesionAnnotation, Mask, ProbabilityMap};
use serde::de::DeserializeOwned;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] perfkit_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => EXIT_IO,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(_) | CliError::Invalid(_) => EXIT_INVALID,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "perfkit",
    version,
    about = "DCE-MRI perfusion maps and lesion-level evaluation"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute Tmax, wash-in, wash-out, enhancement and max-slope maps.
    Maps(MapsArgs),
    /// Resample, crop and normalize volumes; optionally stack them.
    Preprocess(PreprocessArgs),
    /// Score predicted probability maps against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic DCE exam from a JSON description.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct MapsArgs {
    /// 4D DCE series.
    pub dce: PathBuf,
    /// Acquisition times in seconds, one per line.
    #[arg(long)]
    pub timing: Option<PathBuf>,
    /// Volume whose nonzero voxels select the max-slope region.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Output file prefix (default: input file name).
    #[arg(long)]
    pub stem: Option<String>,
    /// Also write Tmax in acquisition time units.
    #[arg(long)]
    pub tmax_time: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// JSON preprocessing config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write all outputs as channels of `stack.nii.gz`.
    #[arg(long)]
    pub stack: bool,
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    pub spacing: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    pub crop: Option<Vec<usize>>,
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted 6-channel probability maps.
    #[arg(long, required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth label volumes.
    #[arg(long, required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    /// Lesion annotations JSON; lesions come from the label volumes if absent.
    #[arg(long, num_args = 1..)]
    pub annotations: Vec<PathBuf>,
    /// JSON eval config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub hit_ratio: Option<f64>,
    /// FROC over clinically significant lesions only.
    #[arg(long)]
    pub cs_only: bool,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Phantom description JSON.
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the phantom's noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file prefix (default: the phantom's patient id).
    #[arg(long)]
    pub stem: Option<String>,
    /// Also write a one-hot probability map of the labels.
    #[arg(long)]
    pub perfect_prediction: bool,
}

/// Run a parsed command on a pool of `cli.jobs` workers.
pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Invalid("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Maps(a) => cmd_maps(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Phantom(a) => cmd_phantom(&a),
    })
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Io {
            path: p.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|source| CliError::Io {
        path: p.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn file_stem(p: &Path) -> String {
    let name = p
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    io::strip_nifti_ext(&name).to_string()
}

const ID_SUFFIXES: [&str; 7] = [
    "_prob", "_probs", "_pred", "_labels", "_label", "_gt", "_seg",
];

/// Patient id of an eval input: file name without extension and without
/// one trailing role suffix such as `_prob` or `_labels`.
pub fn patient_id(p: &Path) -> String {
    let stem = file_stem(p);
    ID_SUFFIXES
        .iter()
        .find_map(|s| stem.strip_suffix(s).filter(|rest| !rest.is_empty()))
        .unwrap_or(&stem)
        .to_string()
}

pub fn cmd_maps(a: &MapsArgs) -> Result<()> {
    require_file(&a.dce)?;
    for p in a.timing.iter().chain(&a.mask) {
        require_file(p)?;
    }
    ensure_dir(&a.out)?;
    let series = io::read_series(&a.dce, a.timing.as_deref())?;
    let mask = match &a.mask {
        Some(p) => Some(Mask::from_volume(&io::read_volume(p)?)),
        None => None,
    };
    info!(
        "{}: {} frames on {:?}",
        a.dce.display(),
        series.n_frames(),
        series.grid().dims()
    );
    let maps = kinetics::compute_perfusion_maps(&series, mask.as_ref())?;
    let stem = a.stem.clone().unwrap_or_else(|| file_stem(&a.dce));
    maps.write(&a.out, &stem)?;
    if a.tmax_time {
        io::write_volume(
            &maps.tmax_in_time_units(&series),
            &a.out.join(format!("{stem}_tmaxtime.nii.gz")),
        )?;
    }
    info!(
        "max-slope frame {}, {} degenerate voxels",
        maps.max_slope_frame_index, maps.degenerate_voxels
    );
    Ok(())
}

fn preprocess_config(a: &PreprocessArgs) -> Result<PreprocessConfig> {
    let mut cfg: PreprocessConfig = match &a.config {
        Some(p) => {
            require_file(p)?;
            read_json(p)?
        }
        None => PreprocessConfig::default(),
    };
    if let Some(s) = &a.spacing {
        cfg.target_spacing = [s[0], s[1], s[2]];
    }
    if let Some(c) = &a.crop {
        cfg.crop_size = [c[0], c[1]];
    }
    if a.no_normalize {
        cfg.normalize = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    for p in &a.inputs {
        require_file(p)?;
    }
    let cfg = preprocess_config(a)?;
    let volumes = a
        .inputs
        .iter()
        .map(|p| io::read_volume(p))
        .collect::<perfkit_core::Result<Vec<_>>>()?;
    if a.stack {
        if volumes.len() < 2 {
            return Err(CliError::Invalid("--stack needs at least 2 inputs".into()));
        }
        for (v, p) in volumes.iter().zip(&a.inputs).skip(1) {
            volumes[0]
                .grid()
                .ensure_compatible(v.grid(), &p.display().to_string())?;
        }
    }
    ensure_dir(&a.out)?;
    let mut outputs = Vec::with_capacity(volumes.len());
    for (v, p) in volumes.iter().zip(&a.inputs) {
        let out = preprocess::preprocess_volume(v, &cfg)?;
        io::write_volume(&out, &a.out.join(format!("{}_pre.nii.gz", file_stem(p))))?;
        outputs.push(out);
    }
    if a.stack {
        let stack = preprocess::assemble_channels(outputs)?;
        io::write_channels(stack.channels(), &a.out.join("stack.nii.gz"))?;
        info!("stacked {} channels", stack.n_channels());
    }
    Ok(())
}

fn eval_config(a: &EvalArgs) -> Result<EvalConfig> {
    let mut cfg: EvalConfig = match &a.config {
        Some(p) => {
            require_file(p)?;
            read_json(p)?
        }
        None => EvalConfig::default(),
    };
    if let Some(t) = a.theta {
        cfg.theta = t;
    }
    if let Some(h) = a.hit_ratio {
        cfg.hit_ratio = h;
    }
    if a.cs_only {
        cfg.cs_only = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn by_patient(paths: &[PathBuf], what: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for p in paths {
        if out.insert(patient_id(p), p.clone()).is_some() {
            return Err(CliError::Invalid(format!(
                "duplicate {what} for patient {}",
                patient_id(p)
            )));
        }
    }
    Ok(out)
}

fn load_patients(a: &EvalArgs) -> Result<Vec<PatientInput>> {
    let preds = by_patient(&a.pred, "prediction")?;
    let gts = by_patient(&a.gt, "ground truth")?;
    if preds.len() != gts.len() || preds.keys().ne(gts.keys()) {
        let p: Vec<&String> = preds.keys().collect();
        let g: Vec<&String> = gts.keys().collect();
        return Err(CliError::Invalid(format!(
            "prediction patients {p:?} do not match ground-truth patients {g:?}"
        )));
    }
    let mut annotated: Option<BTreeMap<String, Vec<LesionAnnotation>>> = None;
    for path in &a.annotations {
        let map = annotated.get_or_insert_with(BTreeMap::new);
        for l in io::read_annotations(path)? {
            map.entry(l.patient_id().to_string()).or_default().push(l);
        }
    }
    if let Some(map) = &annotated {
        if let Some(stray) = map.keys().find(|k| !gts.contains_key(*k)) {
            return Err(CliError::Invalid(format!(
                "annotations name unknown patient {stray}"
            )));
        }
    }
    preds
        .iter()
        .zip(&gts)
        .map(|((id, pred), (_, gt))| {
            let prediction: ProbabilityMap = io::read_probability_map(pred)?;
            let labels = io::read_labels(gt)?;
            let lesions = match &annotated {
                Some(map) => map.get(id).cloned().unwrap_or_default(),
                None => labels.lesions(id),
            };
            Ok(PatientInput {
                patient_id: id.clone(),
                prediction,
                labels,
                lesions,
            })
        })
        .collect()
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Invalid(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `froc.csv`, `confusion.csv` and `summary.json` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    let froc_path = dir.join("froc.csv");
    let mut w = csv::Writer::from_path(&froc_path).map_err(|e| csv_error(&froc_path, e))?;
    w.write_record(["threshold", "fp_per_patient", "sensitivity"])
        .map_err(|e| csv_error(&froc_path, e))?;
    for p in &report.froc.points {
        w.write_record([
            fmt_f64(p.threshold),
            fmt_f64(p.fp_per_patient),
            fmt_f64(p.sensitivity),
        ])
        .map_err(|e| csv_error(&froc_path, e))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: froc_path.clone(),
        source,
    })?;

    let conf_path = dir.join("confusion.csv");
    let mut w = csv::Writer::from_path(&conf_path).map_err(|e| csv_error(&conf_path, e))?;
    w.write_record(["none", "gs_3+3", "gs_3+4", "gs_4+3", "gs_8+"])
        .map_err(|e| csv_error(&conf_path, e))?;
    for row in report.confusion.rows() {
        w.write_record(row.iter().map(u64::to_string))
            .map_err(|e| csv_error(&conf_path, e))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: conf_path.clone(),
        source,
    })?;

    let mut json = serde_json::to_string_pretty(&report.summary)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    json.push('\n');
    write_text(&dir.join("summary.json"), &json)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    for p in a.pred.iter().chain(&a.gt).chain(&a.annotations) {
        require_file(p)?;
    }
    let cfg = eval_config(a)?;
    let patients = load_patients(a)?;
    info!("evaluating {} patients", patients.len());
    let report = eval::evaluate(&patients, &cfg)?;
    ensure_dir(&a.out)?;
    write_report(&report, &a.out)
}

pub fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    require_file(&a.spec)?;
    let mut spec: PhantomSpec = read_json(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let ph = phantom::synth_dce(&spec)?;
    ensure_dir(&a.out)?;
    let stem = a.stem.clone().unwrap_or_else(|| spec.patient_id.clone());
    ph.write(&a.out, &stem)?;
    if a.perfect_prediction {
        io::write_probability_map(
            &ProbabilityMap::one_hot(&ph.labels),
            &a.out.join(format!("{stem}_prob.nii.gz")),
        )?;
    }
    info!(
        "phantom {stem}: {} regions, {} lesions",
        ph.truth.len(),
        ph.lesions.len()
    );
    Ok(())
}
