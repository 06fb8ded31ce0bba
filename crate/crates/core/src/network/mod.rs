//! Model specifications, weighted models and layer export.

pub mod model;
pub mod spec;

pub use model::{export_layers, init_weights, LayerParams, Provenance, Trace, WeightedModel};
pub use spec::{build_submodel, LayerKind, ModelSpec, ParamShape, SubModelSpec, FC_DROPOUT, TAIL_KERNEL};
