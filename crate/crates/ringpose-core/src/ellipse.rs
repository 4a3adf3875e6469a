//! Least-squares conic fitting and conversion to center/axes/orientation
//! form. Both steps are generic over the scalar type so the entire map
//! from point coordinates to ellipse parameters stays differentiable.

use serde::{Deserialize, Serialize};

use crate::dual::Real;
use crate::error::{Error, Result};
use crate::geometry::LandmarkSet2D;

/// Coefficients of A x^2 + B xy + C y^2 + D x + E y + F = 0, normalized to
/// unit Euclidean length with the sign fixed so A + C > 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitConic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

/// Center, semi-axes (a >= b > 0), and major-axis orientation in
/// (-90, 90] degrees. Circles carry alpha = 0 by convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    #[serde(rename = "x_mm")]
    pub x: f64,
    #[serde(rename = "y_mm")]
    pub y: f64,
    #[serde(rename = "a_mm")]
    pub a: f64,
    #[serde(rename = "b_mm")]
    pub b: f64,
    #[serde(rename = "alpha_deg")]
    pub alpha: f64,
}

/// Conic fitted in coordinates centered on the point cloud and scaled to
/// unit rms radius, together with that frame.
struct NormalizedConic<R: Real> {
    mx: R,
    my: R,
    s: R,
    /// Unit-norm coefficients with A + C > 0, in the normalized frame.
    coeffs: [R; 6],
}

/// Minimizes the algebraic residual over unit-norm coefficient vectors:
/// the eigenvector of the scatter matrix M = X^T X with the smallest
/// eigenvalue, where X has rows [u^2, uw, w^2, u, w, 1]. The normalization
/// keeps the scatter matrix well conditioned at detector scales and makes
/// the degeneracy test independent of units.
fn fit_conic_normalized<R: Real>(points: &[[R; 2]]) -> Result<NormalizedConic<R>> {
    if points.len() < 6 {
        return Err(Error::InvalidArgument(format!(
            "conic fit needs at least 6 points, got {}",
            points.len()
        )));
    }
    let n = R::cst(points.len() as f64);
    let mut sx = R::cst(0.0);
    let mut sy = R::cst(0.0);
    for p in points {
        sx = sx + p[0];
        sy = sy + p[1];
    }
    let mx = sx / n;
    let my = sy / n;
    let mut spread = R::cst(0.0);
    for p in points {
        let u = p[0] - mx;
        let w = p[1] - my;
        spread = spread + u * u + w * w;
    }
    let s = (spread / (n + n)).sqrt();
    if !(s.value() > 0.0) || !s.value().is_finite() {
        return Err(Error::DegenerateFit(
            "landmarks coincide at a single point".into(),
        ));
    }
    let inv_s = R::cst(1.0) / s;
    let mut m = [[R::cst(0.0); 6]; 6];
    for p in points {
        let u = (p[0] - mx) * inv_s;
        let w = (p[1] - my) * inv_s;
        let row = [u * u, u * w, w * w, u, w, R::cst(1.0)];
        for i in 0..6 {
            for j in i..6 {
                m[i][j] = m[i][j] + row[i] * row[j];
            }
        }
    }
    for i in 0..6 {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    let mut v = R::smallest_eigvec_sym6(&m)?;
    if (v[0] + v[2]).value() < 0.0 {
        for c in v.iter_mut() {
            *c = -*c;
        }
    }
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3] + v[4] * v[4] + v[5] * v[5])
        .sqrt();
    for c in v.iter_mut() {
        *c = *c / norm;
    }
    let disc = v[1].value() * v[1].value() - 4.0 * v[0].value() * v[2].value();
    if !(disc < 0.0) {
        return Err(Error::DegenerateFit(format!(
            "least-squares conic is not an ellipse (B^2 - 4AC = {disc:e})"
        )));
    }
    Ok(NormalizedConic { mx, my, s, coeffs: v })
}

/// Fitted coefficients mapped back to the input frame. The substitution
/// u = (x - mx)/s, w = (y - my)/s expands into differences of large
/// products, so these coefficients carry more rounding than the fit
/// itself; prefer [`fit_standard`] when only center/axes/angle are needed.
pub(crate) fn fit_conic<R: Real>(points: &[[R; 2]]) -> Result<[R; 6]> {
    let fit = fit_conic_normalized(points)?;
    let (mx, my, s) = (fit.mx, fit.my, fit.s);
    let s2 = s * s;
    let two = R::cst(2.0);
    let (na, nb, nc, nd, ne, nf) = (
        fit.coeffs[0],
        fit.coeffs[1],
        fit.coeffs[2],
        fit.coeffs[3],
        fit.coeffs[4],
        fit.coeffs[5],
    );
    let mut v = [
        na / s2,
        nb / s2,
        nc / s2,
        nd / s - (two * na * mx + nb * my) / s2,
        ne / s - (nb * mx + two * nc * my) / s2,
        nf - (nd * mx + ne * my) / s + (na * mx * mx + nb * mx * my + nc * my * my) / s2,
    ];
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3] + v[4] * v[4] + v[5] * v[5])
        .sqrt();
    for c in v.iter_mut() {
        *c = *c / norm;
    }
    Ok(v)
}

/// Center, axes, and orientation in the input frame: converts inside the
/// normalized frame, where every quantity is O(1), then scales the center
/// and axes back. The orientation is invariant under the frame change.
/// Skipping the coefficient back-transform keeps the cancellation noise of
/// large center offsets out of the recovered parameters.
pub(crate) fn fit_standard<R: Real>(points: &[[R; 2]]) -> Result<[R; 5]> {
    let fit = fit_conic_normalized(points)?;
    let p = conic_to_standard(&fit.coeffs)?;
    Ok([
        fit.mx + fit.s * p[0],
        fit.my + fit.s * p[1],
        fit.s * p[2],
        fit.s * p[3],
        p[4],
    ])
}

/// Implicit coefficients to [x, y, a, b, alpha_deg]. The center solves the
/// gradient system of the quadratic; the axes are reciprocal square roots
/// of the eigenvalues of the normalized quadratic part; the orientation is
/// half the atan2 of the mixed term, which lands on the major axis for the
/// lambda-min/lambda-max assignment used here.
pub(crate) fn conic_to_standard<R: Real>(c: &[R; 6]) -> Result<[R; 5]> {
    let half = R::cst(0.5);
    let (a, b, cc, d, e, f) = (c[0], c[1], c[2], c[3], c[4], c[5]);
    let b2 = b * half;
    let det = b2 * b2 - a * cc;
    if !(det.value() < 0.0) {
        return Err(Error::NotAnEllipse(format!(
            "quadratic part has (B/2)^2 - AC = {:e} >= 0",
            det.value()
        )));
    }
    let den = R::cst(2.0) * det;
    let cx = (cc * d - b2 * e) / den;
    let cy = (a * e - b2 * d) / den;
    let mu_den = a * cx * cx + b * cx * cy + cc * cy * cy - f;
    if !(mu_den.value() > 0.0) || !mu_den.value().is_finite() {
        return Err(Error::DegenerateConic(format!(
            "imaginary or flat ellipse (1/mu = {:e})",
            mu_den.value()
        )));
    }
    let mu = R::cst(1.0) / mu_den;
    let m11 = mu * a;
    let m12 = mu * b2;
    let m22 = mu * cc;
    let diff = m11 - m22;
    let spread = (diff * diff + R::cst(4.0) * m12 * m12).sqrt();
    let lmax = (m11 + m22 + spread) * half;
    let lmin = (m11 + m22 - spread) * half;
    if !(lmin.value() > 0.0) {
        return Err(Error::DegenerateConic(format!(
            "nonpositive axis eigenvalue {:e}",
            lmin.value()
        )));
    }
    let semi_major = R::cst(1.0) / lmin.sqrt();
    let semi_minor = R::cst(1.0) / lmax.sqrt();
    let mut alpha = if spread.value() <= 1e-12 * (m11.value() + m22.value()) {
        R::cst(0.0)
    } else {
        ((-b).atan2(cc - a) * half).to_degrees()
    };
    // atan2 can return exactly -pi, putting alpha on the excluded -90 branch
    if alpha.value() <= -90.0 {
        alpha = alpha + R::cst(180.0);
    }
    Ok([cx, cy, semi_major, semi_minor, alpha])
}

pub fn fit_implicit(points: &LandmarkSet2D) -> Result<ImplicitConic> {
    let v = fit_conic(&points.points)?;
    Ok(ImplicitConic {
        a: v[0],
        b: v[1],
        c: v[2],
        d: v[3],
        e: v[4],
        f: v[5],
    })
}

pub fn implicit_to_standard(conic: &ImplicitConic) -> Result<EllipseParams> {
    let v = conic_to_standard(&[conic.a, conic.b, conic.c, conic.d, conic.e, conic.f])?;
    Ok(EllipseParams {
        x: v[0],
        y: v[1],
        a: v[2],
        b: v[3],
        alpha: v[4],
    })
}

pub fn fit_ellipse(points: &LandmarkSet2D) -> Result<EllipseParams> {
    let s = fit_standard(&points.points)?;
    Ok(EllipseParams {
        x: s[0],
        y: s[1],
        a: s[2],
        b: s[3],
        alpha: s[4],
    })
}

/// `m` points at uniformly spaced parametric angles:
/// center + Rot(alpha) * (a cos t, b sin t).
pub fn sample_ellipse(params: &EllipseParams, m: usize) -> LandmarkSet2D {
    let (sa, ca) = params.alpha.to_radians().sin_cos();
    let points = (0..m)
        .map(|j| {
            let t = std::f64::consts::TAU * j as f64 / m as f64;
            let u = params.a * t.cos();
            let w = params.b * t.sin();
            [params.x + u * ca - w * sa, params.y + u * sa + w * ca]
        })
        .collect();
    LandmarkSet2D { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn circle_points(cx: f64, cy: f64, r: f64, n: usize) -> LandmarkSet2D {
        sample_ellipse(
            &EllipseParams { x: cx, y: cy, a: r, b: r, alpha: 0.0 },
            n,
        )
    }

    #[test]
    fn unit_circle_coefficients() {
        let conic = fit_implicit(&circle_points(0.0, 0.0, 1.0, 8)).unwrap();
        let s = 1.0 / 3.0f64.sqrt();
        assert_abs_diff_eq!(conic.a, s, epsilon = 1e-12);
        assert_abs_diff_eq!(conic.b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(conic.c, s, epsilon = 1e-12);
        assert_abs_diff_eq!(conic.d, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(conic.e, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(conic.f, -s, epsilon = 1e-12);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts = LandmarkSet2D {
            points: (0..6).map(|i| [i as f64, 0.0]).collect(),
        };
        match fit_implicit(&pts) {
            Err(Error::DegenerateFit(_)) => {}
            other => panic!("expected degenerate fit, got {other:?}"),
        }
    }

    #[test]
    fn too_few_points_is_invalid() {
        let pts = LandmarkSet2D {
            points: (0..5).map(|i| [i as f64, (i * i) as f64]).collect(),
        };
        assert!(matches!(fit_ellipse(&pts), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fitted_conic_contains_its_generating_points() {
        let truth = EllipseParams { x: 1.0, y: -2.0, a: 4.0, b: 2.0, alpha: 30.0 };
        let pts = sample_ellipse(&truth, 32);
        let c = fit_implicit(&pts).unwrap();
        for p in &pts.points {
            let (x, y) = (p[0], p[1]);
            let residual = c.a * x * x + c.b * x * y + c.c * y * y + c.d * x + c.e * y + c.f;
            assert!(residual.abs() < 1e-9, "residual {residual:e}");
        }
    }

    #[test]
    fn unit_circle_standard_form() {
        let s = 1.0 / 3.0f64.sqrt();
        let conic = ImplicitConic { a: s, b: 0.0, c: s, d: 0.0, e: 0.0, f: -s };
        let e = implicit_to_standard(&conic).unwrap();
        assert_abs_diff_eq!(e.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.b, 1.0, epsilon = 1e-12);
        assert_eq!(e.alpha, 0.0);
    }

    #[test]
    fn circle_radius_two_keeps_its_radius() {
        // guards the square root in the axis formula: without it the
        // recovered axis would come out as 4
        let e = fit_ellipse(&circle_points(0.0, 0.0, 2.0, 16)).unwrap();
        assert_abs_diff_eq!(e.a, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.b, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn round_trip_recovers_parameters() {
        let truth = EllipseParams { x: 1.0, y: -2.0, a: 4.0, b: 2.0, alpha: 30.0 };
        let e = fit_ellipse(&sample_ellipse(&truth, 32)).unwrap();
        assert_abs_diff_eq!(e.x, truth.x, epsilon = 1e-6);
        assert_abs_diff_eq!(e.y, truth.y, epsilon = 1e-6);
        assert_abs_diff_eq!(e.a, truth.a, epsilon = 1e-6);
        assert_abs_diff_eq!(e.b, truth.b, epsilon = 1e-6);
        assert_abs_diff_eq!(e.alpha, truth.alpha, epsilon = 1e-6);
    }

    #[test]
    fn offset_circle_fit() {
        let e = fit_ellipse(&circle_points(2.0, 3.0, 5.0, 100)).unwrap();
        assert_abs_diff_eq!(e.x, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.y, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.a, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.b, 5.0, epsilon = 1e-9);
        assert_eq!(e.alpha, 0.0);
    }

    #[test]
    fn sample_ellipse_cardinal_points() {
        let pts = sample_ellipse(
            &EllipseParams { x: 0.0, y: 0.0, a: 1.0, b: 1.0, alpha: 0.0 },
            4,
        )
        .points;
        let want = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, w) in pts.iter().zip(want) {
            assert_abs_diff_eq!(p[0], w[0], epsilon = 1e-15);
            assert_abs_diff_eq!(p[1], w[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn sample_ellipse_circle_distances() {
        let pts = sample_ellipse(
            &EllipseParams { x: 2.0, y: 3.0, a: 5.0, b: 5.0, alpha: 0.0 },
            100,
        )
        .points;
        for p in pts {
            let d = ((p[0] - 2.0).powi(2) + (p[1] - 3.0).powi(2)).sqrt();
            assert_abs_diff_eq!(d, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tight_round_trip_on_64_samples() {
        let truth = EllipseParams { x: 1.0, y: -2.0, a: 4.0, b: 2.0, alpha: 30.0 };
        let e = fit_ellipse(&sample_ellipse(&truth, 64)).unwrap();
        assert_abs_diff_eq!(e.x, truth.x, epsilon = 1e-9);
        assert_abs_diff_eq!(e.y, truth.y, epsilon = 1e-9);
        assert_abs_diff_eq!(e.a, truth.a, epsilon = 1e-9);
        assert_abs_diff_eq!(e.b, truth.b, epsilon = 1e-9);
        assert_abs_diff_eq!(e.alpha, truth.alpha, epsilon = 1e-9);
    }

    #[test]
    fn orientation_convention_covers_both_axis_orders() {
        // a tall ellipse (major axis along y) must still report a >= b
        // with alpha rotated into (-90, 90]
        let truth = EllipseParams { x: 0.0, y: 0.0, a: 5.0, b: 1.0, alpha: 90.0 };
        let e = fit_ellipse(&sample_ellipse(&truth, 32)).unwrap();
        assert!(e.a >= e.b);
        assert_abs_diff_eq!(e.a, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.b, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.alpha.abs(), 90.0, epsilon = 1e-9);
    }
}
