//! Closed-form orientation from ellipse shape alone, valid when rays are
//! parallel: a circle of radius r tilted by theta projects to an ellipse
//! with b = a sin(theta) and major axis along the tilt azimuth.

use crate::ellipse::EllipseParams;
use crate::error::{Error, Result};

/// (theta_deg, phi_deg) from the axis ratio and orientation. Ignores
/// magnification, so under a cone beam the depth-dependent distortion
/// lands directly in the angle estimates.
pub fn estimate_orientation_orthographic(observed: &EllipseParams) -> Result<(f64, f64)> {
    if !(observed.b > 0.0) || observed.b > observed.a {
        return Err(Error::InvalidArgument(format!(
            "need semi-axes a >= b > 0, got a = {}, b = {}",
            observed.a, observed.b
        )));
    }
    let theta = (observed.b / observed.a).asin().to_degrees();
    Ok((theta, observed.alpha))
}
