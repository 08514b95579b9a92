//! Persona-conditioned multi-label routing of notes into kinds.

pub mod backbone;
pub mod calibrate;
pub mod features;
pub mod model;
pub mod train;

pub use backbone::{BackboneOutput, BackboneProvider, ExternalProbabilities, NativeBackbone};
pub use calibrate::{calibrate_scores, calibrate_thresholds, CalibrationReport};
pub use features::{featurize, FeatureSpec, FeatureVector};
pub use model::{load_model, save_model, FormatError, RouterModel};
pub use train::{train, HyperParams, TrainReport};
