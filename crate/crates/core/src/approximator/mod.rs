//! State-action value networks.
//!
//! A network maps `(state, action)` (and for the implicit-quantile head a
//! vector of probabilities) to a vector of values squashed into the
//! configured value range. Parameters live in a flat [`ParamSnapshot`] whose
//! layout is fixed by the [`NetworkSpec`]; gradients come back in the same
//! layout as a [`GradVector`].

mod adam;
mod layers;
mod network;
mod params;
mod spec;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{layer_normalize, LAYER_NORM_EPS};
pub use network::{CosineEmbedding, Network};
pub use params::{GradVector, ParamSnapshot};
pub use spec::{Head, NetworkSpec, Normalization, ValueRange};
