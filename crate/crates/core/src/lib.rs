//! Perfusion feature extraction, preprocessing and detection evaluation for
//! prostate DCE-MRI.

pub mod error;
pub mod eval;
pub mod io;
pub mod kinetics;
pub mod labeling;
pub mod phantom;
pub mod preprocess;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{
    DceSeries, Grid3, GsGroup, LabelVolume, LesionAnnotation, Mask, ProbabilityMap,
    TimeIntensityCurve, TimeUnit, Volume3,
};
