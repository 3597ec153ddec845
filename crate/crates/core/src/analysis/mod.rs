//! Probes of trained models and checks of the binding mechanism.

mod binding;
mod compression;
mod export;
mod kmeans;
mod probe;
mod traces;

pub use binding::{binding_ambiguity_demo, BindingReport, Linear, Scenario};
pub use compression::{
    diag_of_bound_product, hadamard_compression_check, hadamard_of_maps, CompressionReport,
};
pub use export::{attention_maps, export_attention_maps, read_attention_maps, AttentionMapRecord};
pub use kmeans::{kmeans, ClusterAssignment, MAX_ITERS, REL_TOL};
pub use probe::{
    final_encoder_states, fit_affine, head_values, reconstruction_probe, AffineFit, ProbeResult,
    REFERENCE_MSE_BASELINE, REFERENCE_MSE_TP, RIDGE,
};
pub use traces::{collect_traces, RoleRecord, TraceSet};
