//! Analytic 2D/3D registration of a circular implant rim from a single
//! cone-beam projection.
//!
//! A circle of known radius, tilted and shifted in front of a point
//! source, projects to an ellipse on the detector. This crate walks that
//! map in both directions: the forward model discretizes the ring,
//! applies the rigid pose (anteversion theta, inclination phi, in-plane
//! offset k and l, depth h), projects through the source, and fits an
//! implicit conic whose standard parameters (center, semi-axes,
//! orientation) are compared to the observed ellipse. Every step is
//! generic over a dual-number scalar, so the optimizer consumes exact
//! derivatives of the fit rather than finite differences.
//!
//! The inverse map is not quite injective: an oblique circular cone
//! contains two families of circular sections, so a second, conjugate
//! pose reproduces the same ellipse at the same radius. `register`
//! resolves the ambiguity with a mirrored second start and a
//! nearest-to-start rule; see the module documentation in
//! [`registration`].
//!
//! A simulation harness samples poses, synthesizes (optionally noisy)
//! observations, and aggregates accuracy tables for the registration and
//! for a closed-form parallel-projection baseline that ignores
//! magnification.

pub mod dual;
pub mod ellipse;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod orthographic;
pub mod registration;

pub use dual::{Dual, Real};
pub use ellipse::{fit_ellipse, fit_implicit, implicit_to_standard, sample_ellipse, EllipseParams, ImplicitConic};
pub use error::{Error, Result};
pub use geometry::{
    apply_pose, canonical_landmarks, half_turn_distance, project_orthographic,
    project_perspective, rotation_matrix, wrap_half_turn, LandmarkSet2D, LandmarkSet3D, Pose,
    RotationMatrix, ScannerGeometry,
};
pub use harness::{
    distance_sweep, perturb_landmarks, record_rerun_key, records_from_jsonl, records_to_jsonl,
    run_batch, run_trial, sample_pose, summarize, summary_to_csv, sweep_to_csv, BatchSummary,
    ExperimentSpec, MethodSet, MethodSummary, OrientationSummary, OrthographicOutcome,
    ProposedOutcome, SweepRow, TrialRecord,
};
pub use metrics::{hausdorff_distance, pose_error, PoseError};
pub use orthographic::estimate_orientation_orthographic;
pub use registration::{
    ellipse_loss, forward_ellipse, initial_guess, pose_gradient, register, Optimizer,
    RegistrationConfig, RegistrationResult,
};
