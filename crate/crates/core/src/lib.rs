//! Equilibrium states of suspension semiflows over full-branch
//! expanding Markov interval maps.
//!
//! A model is a base interval tiled by the images of finitely or
//! countably many affine inverse branches, a positive roof function
//! giving flight times, and a potential on the flow. The crate computes
//! the pressure P(beta) as the unique root of the leading eigenvalue
//! condition lambda_Z = 1 for the weighted transfer operator
//!
//! ```text
//! (L_Z phi)(x) = sum_k exp(beta W_k(x) - Z r_k(x)) phi(h_k x)
//! ```
//!
//! together with the equilibrium measure materialized on cylinder sets,
//! its entropy and Abramov lift to the flow, measures of maximal
//! entropy, certified phase classification along beta with the critical
//! parameter bracketed, periodic-orbit lower bounds, and coboundary
//! verification for potentials on the skew extension.
//!
//! Branch-constant data takes an exact scalar route; everything else is
//! discretized on a uniform grid with certified truncation tails for
//! countable branch families.

pub mod coboundary;
pub mod cylinder;
pub mod error;
pub mod model;
pub mod modelfile;
pub mod operator;
pub mod potential;
pub mod quad;
pub mod report;
pub mod thermo;

pub use coboundary::{coboundary_b, verify_coboundary_identity, CoboundaryData, CoboundaryReport};
pub use cylinder::{
    enumerate_cylinders, holder_certificate, periodic_point, word_data, Cylinder,
    HolderCertificate, WordData,
};
pub use error::{Error, Result};
pub use model::{
    flow_advance, BaseInterval, Branch, BranchCount, BranchSpec, GeometricFamily, LorenzFamily,
    Roof, SuspensionPoint, SuspensionSystem,
};
pub use modelfile::{load_model, parse_model, SCHEMA_VERSION};
pub use operator::{
    apply_operator, distortion_check, eigen_bounds, estimate_zc, leading_eigen,
    scalar_route_applicable, ApplyOutcome, DistortionReport, Grid, GridFn, Interp, MeanValue,
    Route, SolverOptions, SpectralSolution, ZcEstimate, ZcMethod,
};
pub use potential::{integrate_potential, Potential, PotentialKind};
pub use quad::{integrate, Quadrature};
pub use thermo::{
    abramov_lift, bernoulli_free_energy, entropy_induced, gibbs_measure, maximizing_value_a,
    mme, periodic_lower_bound, periodic_orbit_free_energy, pressure_curve, solve_pressure,
    CurvePoint, EntropyEstimate, FlowMeasure, GibbsMeasure, MaxSource, MaximizingValue,
    MeasuredCylinder, MmeSolution, PeriodicBound, PressureCurve, PressureSolution, Regime,
};
