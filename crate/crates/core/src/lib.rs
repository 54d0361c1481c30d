//! pqlab: a numerical laboratory for nonlinear `L^p`-projections, monotone
//! `(p,q)`-systems, and Marcinkiewicz-type interpolation audits on finite
//! weighted measure spaces.
//!
//! The crate solves the system `A(x, a + alpha) = b + beta` over a chosen
//! subspace decomposition, exposes the nonlinear solution operator, and
//! measures every constant of the surrounding inequality chain (weak and
//! strong type bounds, energy estimates, power commutators) on seeded
//! instance batteries.

pub mod battery;
pub mod error;
pub mod instance;
pub mod interp;
pub mod io;
pub mod map;
pub mod measure;
pub mod rng;
pub mod solver;
pub mod subspace;

pub use error::{Error, Result};
pub use interp::{
    energy, energy_estimate_audit, levelset_integral_audit, marcinkiewicz_split, pointwise_audit,
    strong_type_ratio, strong_type_sweep, truncated_solutions, weak_type_constant,
    weak_type_ratio, EnergyReport, PointwiseAudit, Side, SplitPair, StrongTypeRow,
    TruncatedSolutions, TypeConstants,
};
pub use map::{
    apply_field, audit_axioms, comparability_spread, invert_field, AxiomReport, MonotoneMap,
    NegatedPPowerMap, PPowerMap,
};
pub use measure::{
    bracket, bracket_power_integral, conjugate_exponent, distribution, inner, norm_s, s_power,
    weak_quasinorm, DataPair, ExponentPair, Field, MeasureSpace, ScalarField,
};
pub use rng::SplitMix64;
pub use solver::{
    basic_estimate_ratio, lp_projection, lp_projection_report, pair_distance, residual_scale,
    riesz_apply, solve_dual, solve_system, solved_pair, SolveOptions, SolveReport,
};
pub use subspace::{
    build_subspace, commutator_defect, grid_hodge, random_subspace, Sign, SubspacePair,
};
