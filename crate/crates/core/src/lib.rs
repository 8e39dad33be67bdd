//! Sticky-particle simulation of the one-dimensional adhesion model with
//! exact checks of its cluster, martingale and dissipation identities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod events;
pub mod fixtures;
pub mod flow;
pub mod model;
pub mod turbulence;
pub mod verify;

pub use error::{Error, Result};
pub use events::{event_driven_oracle, run_events, EventLog, MergeEvent};
pub use flow::{
    bounds_in, cluster_at, cluster_bounds, flow_between, flow_map, safe_lagrangian_range,
    safe_window, velocity_field, velocity_in, BiasedFlow, Block, ClusterState, SafeWindow,
    StateProvider, VelocitySample,
};
pub use model::{
    discretize, stieltjes_distribution_from, validate_njc, Affine, Atom, DensityPiece,
    MassDistribution, NjcViolation, ParticleSystem, Provenance, ValidationReport, VelocityProfile,
    ViolationSite,
};
pub use turbulence::{
    build_bundle, classify_entry_side, cross_check_shock_times, delta_shock_geometry,
    f_g_values, first_shock_times, states_on, turbulent_intervals, EntrySide, IntervalKind, Leg,
    Polyline, Process, ProcessBundle, ShockLegs, TurbulenceReport, TurbulentInterval,
};
pub use verify::{
    burgers_atom, burgers_consistency, check_bundle, check_martingale_iff_degenerate,
    check_martingale_x, check_oracle_equivalence, check_semimartingale_z,
    check_velocity_conditional, dissipation_profile, lax_oleinik_bracket, lax_oleinik_oracle,
    stieltjes_case_consistency, CheckReport, ConvexTestFunction, EmpiricalMeasure, IffReport,
    PsiKind,
};
