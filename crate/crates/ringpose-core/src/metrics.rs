//! Error measures used by the simulation harness and the command line:
//! componentwise pose errors and a discrete Hausdorff distance between
//! ellipse outlines.

use serde::{Deserialize, Serialize};

use crate::ellipse::{sample_ellipse, EllipseParams};
use crate::geometry::{half_turn_distance, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    #[serde(rename = "theta_err_deg")]
    pub theta_err: f64,
    /// Compared modulo 180 on the smaller branch, so never above 90.
    #[serde(rename = "phi_err_deg")]
    pub phi_err: f64,
    #[serde(rename = "inplane_err_mm")]
    pub inplane_err: f64,
    #[serde(rename = "h_err_mm")]
    pub h_err: f64,
}

pub fn pose_error(truth: &Pose, estimate: &Pose) -> PoseError {
    PoseError {
        theta_err: (estimate.theta - truth.theta).abs(),
        phi_err: half_turn_distance(estimate.phi, truth.phi),
        inplane_err: ((estimate.k - truth.k).powi(2) + (estimate.l - truth.l).powi(2)).sqrt(),
        h_err: (estimate.h - truth.h).abs(),
    }
}

/// Symmetric discrete Hausdorff distance between the two outlines, each
/// sampled at m parametric angles. Discretization error is at most about
/// pi * max(a, b) / m.
pub fn hausdorff_distance(e1: &EllipseParams, e2: &EllipseParams, m: usize) -> f64 {
    assert!(m >= 64, "hausdorff_distance needs m >= 64, got {m}");
    let p1 = sample_ellipse(e1, m).points;
    let p2 = sample_ellipse(e2, m).points;
    directed_sq(&p1, &p2).max(directed_sq(&p2, &p1)).sqrt()
}

fn directed_sq(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
    let mut worst = 0.0f64;
    for p in from {
        let mut nearest = f64::INFINITY;
        for q in to {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d < nearest {
                nearest = d;
            }
        }
        if nearest > worst {
            worst = nearest;
        }
    }
    worst
}
