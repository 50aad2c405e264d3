//! Refinement of 3D lesion detections from instance-level saliency maps.
//!
//! The pipeline: a differentiable voxel scorer ([`tinynet`]) produces
//! lesion-specific SmoothGrad maps ([`saliency`]); radiomic features are
//! extracted from each map inside a dilated lesion ROI ([`radiomics`]); an
//! L1-penalized logistic regression separates true from false positive
//! candidates ([`refine`]); detection metrics with bootstrap intervals and
//! cohort shift statistics live in [`eval`]. [`synth`] generates phantoms
//! so the whole chain runs without clinical data.

pub mod error;
pub mod eval;
pub mod instances;
pub mod radiomics;
pub mod refine;
pub mod saliency;
pub mod synth;
pub mod tinynet;
pub mod volume;

pub use error::{Error, Result};
pub use eval::{bootstrap_ci, f1, mann_whitney_u, ppv, BootstrapConfig, LesionRecord, MetricReport, Outcome, ShiftReport};
pub use instances::{connected_components, dilate, match_lesions, Connectivity, LesionInstance, MatchResult, Structuring};
pub use radiomics::{extract_all, feature_names, FeatureVector, Group, RadiomicsConfig};
pub use refine::{feature_importance, refine_predictions, train_lr, LrConfig, LrModel, RefinedConfusion, Standardizer};
pub use saliency::{instance_saliency, saliency_batch, SaliencyConfig, SaliencyMap};
pub use synth::{generate_candidates, generate_phantom, CandidateSet, Phantom, PhantomSpec};
pub use tinynet::{GradientTarget, Scorer, TinyNet, TrainConfig};
pub use volume::{zscore, BinaryMask, Dims, LabelMap, Volume3D, VolumeStack, Voxel};
