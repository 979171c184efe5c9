//! The hybrid explicit/implicit video field: tri-plane and lattice features
//! decoded by a small MLP.

pub mod adam;
pub mod config;
pub mod coord;
pub mod engine;
pub mod interp;
pub mod params;
pub mod serialize;

pub use adam::{AdamConfig, AdamState};
pub use config::{FieldConfig, HiddenActivation, LatticeShape, OutputActivation};
pub use coord::{axis_coord, frame_grid, NormalizedCoord};
pub use engine::{backward, backward_cached, decode, forward, forward_cached, sample_features, Workspace};
pub use params::{Decoder, DenseLayer, FieldParams, GradientBuffer, LatticeSet, ParamGroup, TriPlane};
pub use serialize::{load_params, read_params, save_params, write_params};
