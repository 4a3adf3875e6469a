//! Ring landmark generation, the rigid pose transform, and the two
//! projection models: point-source perspective and parallel orthographic.
//!
//! Frame convention: the detector is the z = 0 plane, the source sits at
//! (0, 0, H), and image axes coincide with world x/y. All distances in mm,
//! all angles in degrees.

use serde::{Deserialize, Serialize};

use crate::dual::Real;
use crate::error::{Error, Result};

/// Five pose parameters of the rim circle. `theta` tilts the ring out of
/// the detector plane (0 = edge-on, the projection collapses to a line;
/// 90 = parallel to the detector, the projection is a circle). `phi`
/// rotates it within the plane. `(k, l)` shift the center laterally and
/// `h` is the center's height above the detector, which must stay strictly
/// below the source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "theta_deg")]
    pub theta: f64,
    #[serde(rename = "phi_deg")]
    pub phi: f64,
    #[serde(rename = "k_mm")]
    pub k: f64,
    #[serde(rename = "l_mm")]
    pub l: f64,
    #[serde(rename = "h_mm")]
    pub h: f64,
}

/// Fixed scanner parameters. `pixel_pitch` only converts reported
/// distances to pixels; the geometry itself is metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScannerGeometry {
    #[serde(rename = "source_distance_mm")]
    pub source_distance: f64,
    #[serde(rename = "pixel_pitch_mm")]
    pub pixel_pitch: f64,
}

impl ScannerGeometry {
    pub fn new(source_distance: f64) -> Self {
        Self {
            source_distance,
            pixel_pitch: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet3D {
    pub points: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet2D {
    pub points: Vec<[f64; 2]>,
}

/// Row-major 3x3 rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }
}

/// Wraps an in-plane angle onto the canonical (-90, 90] degree branch.
pub fn wrap_half_turn(angle_deg: f64) -> f64 {
    let a = angle_deg.rem_euclid(180.0);
    if a > 90.0 {
        a - 180.0
    } else {
        a
    }
}

/// Distance between two in-plane angles under the 180 degree period.
pub fn half_turn_distance(a_deg: f64, b_deg: f64) -> f64 {
    let d = (a_deg - b_deg).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Ring of `n` points of radius `r` in the y = 0 plane, centered at the
/// origin: (r cos t, 0, r sin t). Pose offsets are applied by
/// [`apply_pose`], never baked into the canonical set.
pub fn canonical_landmarks(r: f64, n: usize) -> Result<LandmarkSet3D> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ring radius must be positive, got {r}"
        )));
    }
    if n < 6 {
        return Err(Error::InvalidArgument(format!(
            "a conic fit needs at least 6 landmarks, got {n}"
        )));
    }
    let points = (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            [r * t.cos(), 0.0, r * t.sin()]
        })
        .collect();
    Ok(LandmarkSet3D { points })
}

/// R = Rz(phi) * Rx(theta): tilt out of plane first, then rotate in plane.
pub fn rotation_matrix(theta_deg: f64, phi_deg: f64) -> RotationMatrix {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    RotationMatrix([
        [cp, -sp * ct, sp * st],
        [sp, cp * ct, -cp * st],
        [0.0, st, ct],
    ])
}

/// Rotates about the landmark-set center (canonical sets are
/// origin-centered) and then translates the center to (k, l, h).
pub fn apply_pose(landmarks: &LandmarkSet3D, pose: &Pose) -> LandmarkSet3D {
    let rot = rotation_matrix(pose.theta, pose.phi);
    let points = landmarks
        .points
        .iter()
        .map(|p| {
            let q = rot.apply(*p);
            [q[0] + pose.k, q[1] + pose.l, q[2] + pose.h]
        })
        .collect();
    LandmarkSet3D { points }
}

/// Central projection from the source (0, 0, H) onto the detector plane:
/// (x, y, z) -> (x, y) * H / (H - z).
pub fn project_perspective(
    points: &LandmarkSet3D,
    geom: &ScannerGeometry,
) -> Result<LandmarkSet2D> {
    let h = geom.source_distance;
    let mut out = Vec::with_capacity(points.points.len());
    for (i, p) in points.points.iter().enumerate() {
        if p[2] >= h {
            return Err(Error::DegenerateProjection(format!(
                "point {i} has z = {} at or behind the source (H = {h})",
                p[2]
            )));
        }
        let m = h / (h - p[2]);
        out.push([p[0] * m, p[1] * m]);
    }
    Ok(LandmarkSet2D { points: out })
}

/// Parallel projection: drop z.
pub fn project_orthographic(points: &LandmarkSet3D) -> LandmarkSet2D {
    LandmarkSet2D {
        points: points.points.iter().map(|p| [p[0], p[1]]).collect(),
    }
}

/// Differentiable spine of the forward model: the perspective-projected
/// ring for any scalar type. Ring coordinates are constants; the pose
/// entries carry the derivative lanes.
pub(crate) fn projected_ring<R: Real>(
    pose: &[R; 5],
    r: f64,
    n: usize,
    source_distance: f64,
) -> Result<Vec<[R; 2]>> {
    let st = pose[0].to_radians().sin();
    let ct = pose[0].to_radians().cos();
    let sp = pose[1].to_radians().sin();
    let cp = pose[1].to_radians().cos();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = std::f64::consts::TAU * i as f64 / n as f64;
        let x = R::cst(r * t.cos());
        let z = R::cst(r * t.sin());
        let px = cp * x + sp * st * z + pose[2];
        let py = sp * x - cp * st * z + pose[3];
        let pz = ct * z + pose[4];
        if pz.value() >= source_distance {
            return Err(Error::DegenerateProjection(format!(
                "ring reaches z = {} at or behind the source (H = {source_distance})",
                pz.value()
            )));
        }
        let m = R::cst(source_distance) / (R::cst(source_distance) - pz);
        out.push([px * m, py * m]);
    }
    Ok(out)
}
