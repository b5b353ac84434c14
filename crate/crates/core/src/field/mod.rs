//! Electrostatic participation ratios of thin lossy interface layers.
//!
//! Cross-sections are solved with linear triangles on graded rectilinear
//! meshes, either per unit length (CPW) or per revolution (spiral modeled as
//! concentric rings). The 3 nm interface layers are resolved explicitly
//! within 100 nm of conductor edges and handled by field rescaling
//! elsewhere.

mod domain;
mod mesh;
mod participation;
mod solve;

pub use domain::{
    build_mesh, ring_spans, DomainOptions, Edge, Interface, LayerCell, LayerMap, LossyLayerSpec, SolverDomain, Strip,
};
pub use mesh::{graded_axis, Half, Material, Mesh, MeshOptions, Symmetry};
pub use participation::{
    asr_participation, cpw_participation, participation, participation_edge, participation_internal,
    participation_report, Diagnostics, InterfaceParticipation, ParticipationReport, ReportOptions,
};
pub use solve::{solve, solve_asr_axisymmetric, solve_cpw_cross_section, solve_mesh, FieldSolution, Potential};
