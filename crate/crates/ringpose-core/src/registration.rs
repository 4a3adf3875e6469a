//! Pose recovery from a single projected ellipse: the initialization
//! heuristic, the parameter-space loss, exact gradients through the whole
//! projection-and-fit pipeline, and the iterative minimizers.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::ellipse::{fit_ellipse, fit_standard, EllipseParams};
use crate::error::{Error, Result};
use crate::geometry::{
    half_turn_distance, projected_ring, wrap_half_turn, LandmarkSet2D, Pose, ScannerGeometry,
};
use crate::linalg::solve_spd5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    GradientDescent,
    LevenbergMarquardt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    /// Ring discretization for the forward model.
    pub n_model_landmarks: usize,
    pub max_iterations: usize,
    pub loss_tolerance: f64,
    pub step_tolerance: f64,
    /// Gradient-descent scaling per parameter; degrees and millimeters sit
    /// on different scales and a single shared rate stalls.
    pub per_parameter_step_sizes: [f64; 5],
    pub parameter_weights: [f64; 5],
    pub theta_bounds: (f64, f64),
    pub phi_bounds: Option<(f64, f64)>,
    /// None derives (1, H - 1.05 r) from the scene at registration time,
    /// which keeps the whole ring strictly in front of the source.
    pub h_bounds: Option<(f64, f64)>,
    /// Reserved for stochastic optimizer variants; both current optimizers
    /// are deterministic and ignore it.
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Rerun from the mirrored start angle when the first run strays far
    /// from its own start; see `register`.
    pub second_start: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            n_model_landmarks: 100,
            max_iterations: 5000,
            loss_tolerance: 1e-10,
            step_tolerance: 1e-10,
            per_parameter_step_sizes: [2.0, 1.0, 1.0, 1.0, 20.0],
            parameter_weights: [1.0; 5],
            theta_bounds: (0.5, 89.5),
            phi_bounds: None,
            h_bounds: None,
            seed: 0,
            optimizer: Optimizer::LevenbergMarquardt,
            second_start: true,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_model_landmarks < 6 {
            return Err(Error::InvalidArgument(format!(
                "n_model_landmarks must be at least 6, got {}",
                self.n_model_landmarks
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        for (i, s) in self.per_parameter_step_sizes.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "per_parameter_step_sizes[{i}] must be positive and finite, got {s}"
                )));
            }
        }
        for (i, w) in self.parameter_weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "parameter_weights[{i}] must be nonnegative and finite, got {w}"
                )));
            }
        }
        if !(self.loss_tolerance >= 0.0 && self.step_tolerance >= 0.0) {
            return Err(Error::InvalidArgument(
                "tolerances must be nonnegative".into(),
            ));
        }
        let (lo, hi) = self.theta_bounds;
        if !(0.0 < lo && lo < hi && hi < 90.0) {
            return Err(Error::InvalidArgument(format!(
                "theta_bounds must satisfy 0 < low < high < 90, got ({lo}, {hi})"
            )));
        }
        if let Some((lo, hi)) = self.phi_bounds {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "phi_bounds must be an increasing interval, got ({lo}, {hi})"
                )));
            }
        }
        if let Some((lo, hi)) = self.h_bounds {
            if !(0.0 < lo && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "h_bounds must satisfy 0 < low < high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub observed_ellipse: EllipseParams,
    pub fitted_ellipse: EllipseParams,
    #[serde(rename = "wall_time_s")]
    pub wall_time: f64,
}

/// First guess (25 deg, 40 deg, beta x, beta y, (1 - beta) H) with
/// beta = r / a: under pure magnification an implant at depth h projects
/// its center by H / (H - h) and its radius to r H / (H - h).
pub fn initial_guess(observed: &EllipseParams, r: f64, geom: &ScannerGeometry) -> Result<Pose> {
    if !(observed.a > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "major semi-axis and radius must be positive, got a = {}, r = {r}",
            observed.a
        )));
    }
    let beta = r / observed.a;
    if beta >= 1.0 {
        return Err(Error::ImplausibleGeometry(format!(
            "projected major semi-axis {} does not exceed the physical radius {r}",
            observed.a
        )));
    }
    Ok(Pose {
        theta: 25.0,
        phi: 40.0,
        k: beta * observed.x,
        l: beta * observed.y,
        h: (1.0 - beta) * geom.source_distance,
    })
}

fn params_array(e: &EllipseParams) -> [f64; 5] {
    [e.x, e.y, e.a, e.b, e.alpha]
}

fn dual_params(p: &[f64; 5]) -> [Dual<5>; 5] {
    std::array::from_fn(|i| Dual::variable(p[i], i))
}

fn forward_params<R: Real>(pose: &[R; 5], r: f64, n: usize, source_distance: f64) -> Result<[R; 5]> {
    let pts = projected_ring(pose, r, n, source_distance)?;
    fit_standard(&pts)
}

/// Ellipse parameters of the ring at `pose` seen through `geom`:
/// ring discretization, rigid transform, central projection, conic fit.
pub fn forward_ellipse(pose: &Pose, r: f64, n: usize, geom: &ScannerGeometry) -> Result<EllipseParams> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    if !(pose.h > 0.0 && pose.h < geom.source_distance) {
        return Err(Error::InvalidArgument(format!(
            "depth h = {} must lie in (0, {})",
            pose.h, geom.source_distance
        )));
    }
    let p = [pose.theta, pose.phi, pose.k, pose.l, pose.h];
    let v = forward_params(&p, r, n, geom.source_distance)?;
    Ok(EllipseParams { x: v[0], y: v[1], a: v[2], b: v[3], alpha: v[4] })
}

/// Signed angular difference folded to the nearest multiple of 180. The
/// fold count comes from the value lane, so derivatives pass through.
fn fold_half_turn<R: Real>(d: R) -> R {
    let n = (d.value() / 180.0).round();
    d - R::cst(180.0 * n)
}

fn loss_generic<R: Real>(observed: &[f64; 5], estimated: &[R; 5], weights: &[f64; 5]) -> R {
    let mut sum = R::cst(0.0);
    for i in 0..4 {
        let d = estimated[i] - R::cst(observed[i]);
        sum = sum + R::cst(weights[i]) * d * d;
    }
    let d = fold_half_turn(estimated[4] - R::cst(observed[4]));
    sum = sum + R::cst(weights[4]) * d * d;
    sum / R::cst(5.0)
}

/// Mean of weighted squared parameter differences over (x, y, a, b, alpha).
/// The alpha term uses the 180-periodic distance, so orientations such as
/// 89 and -89 degrees count as 2 degrees apart.
pub fn ellipse_loss(observed: &EllipseParams, estimated: &EllipseParams, weights: &[f64; 5]) -> f64 {
    loss_generic(&params_array(observed), &params_array(estimated), weights)
}

/// Gradient of `ellipse_loss(observed, forward_ellipse(pose))` with respect
/// to (theta, phi, k, l, h), differentiated exactly through projection,
/// scatter matrix, eigenvector extraction, and parameter conversion.
pub fn pose_gradient(
    pose: &Pose,
    observed: &EllipseParams,
    r: f64,
    n: usize,
    geom: &ScannerGeometry,
    weights: &[f64; 5],
) -> Result<[f64; 5]> {
    let params = [pose.theta, pose.phi, pose.k, pose.l, pose.h];
    let est = forward_params(&dual_params(&params), r, n, geom.source_distance)?;
    Ok(loss_generic(&params_array(observed), &est, weights).d)
}

struct Bounds {
    theta: (f64, f64),
    phi: Option<(f64, f64)>,
    h: (f64, f64),
}

impl Bounds {
    fn from_config(config: &RegistrationConfig, r: f64, geom: &ScannerGeometry) -> Result<Self> {
        let h = match config.h_bounds {
            Some((lo, hi)) => {
                if !(hi < geom.source_distance) {
                    return Err(Error::InvalidArgument(format!(
                        "h_bounds upper end {hi} must stay below the source distance {}",
                        geom.source_distance
                    )));
                }
                (lo, hi)
            }
            None => {
                let hi = geom.source_distance - 1.05 * r;
                if !(hi > 1.0) {
                    return Err(Error::ImplausibleGeometry(format!(
                        "source distance {} leaves no room for a radius {r} implant",
                        geom.source_distance
                    )));
                }
                (1.0, hi)
            }
        };
        Ok(Self {
            theta: config.theta_bounds,
            phi: config.phi_bounds,
            h,
        })
    }

    fn clamp(&self, p: &mut [f64; 5]) {
        p[0] = p[0].clamp(self.theta.0, self.theta.1);
        if let Some((lo, hi)) = self.phi {
            p[1] = p[1].clamp(lo, hi);
        }
        p[4] = p[4].clamp(self.h.0, self.h.1);
    }
}

struct RunOutcome {
    params: [f64; 5],
    loss: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

struct Problem<'a> {
    observed: [f64; 5],
    r: f64,
    n: usize,
    source_distance: f64,
    weights: [f64; 5],
    weight_sqrt: [f64; 5],
    bounds: Bounds,
    config: &'a RegistrationConfig,
}

impl Problem<'_> {
    /// Residual vector (sqrt-weighted parameter differences, alpha folded)
    /// and its mean square, which equals the loss for the default weights.
    fn residuals(&self, params: &[f64; 5]) -> Result<([f64; 5], f64)> {
        let est = forward_params(params, self.r, self.n, self.source_distance)?;
        let mut res = [0.0; 5];
        for i in 0..4 {
            res[i] = self.weight_sqrt[i] * (est[i] - self.observed[i]);
        }
        res[4] = self.weight_sqrt[4] * fold_half_turn(est[4] - self.observed[4]);
        let mut sum = 0.0;
        for v in res {
            sum += v * v;
        }
        Ok((res, sum / 5.0))
    }

    fn residual_jacobian(&self, params: &[f64; 5]) -> Result<[[f64; 5]; 5]> {
        let est = forward_params(&dual_params(params), self.r, self.n, self.source_distance)?;
        let mut jac = [[0.0; 5]; 5];
        for i in 0..5 {
            let d = if i == 4 {
                fold_half_turn(est[4] - Dual::constant(self.observed[4]))
            } else {
                est[i] - Dual::constant(self.observed[i])
            };
            jac[i] = (Dual::constant(self.weight_sqrt[i]) * d).d;
        }
        Ok(jac)
    }

    fn loss_value(&self, params: &[f64; 5]) -> Result<f64> {
        let est = forward_params(params, self.r, self.n, self.source_distance)?;
        Ok(loss_generic(&self.observed, &est, &self.weights))
    }

    fn loss_gradient(&self, params: &[f64; 5]) -> Result<[f64; 5]> {
        let est = forward_params(&dual_params(params), self.r, self.n, self.source_distance)?;
        Ok(loss_generic(&self.observed, &est, &self.weights).d)
    }

    fn run(&self, mut init: [f64; 5], phi0: f64) -> Result<RunOutcome> {
        init[1] = phi0;
        match self.config.optimizer {
            Optimizer::GradientDescent => self.run_gd(init),
            Optimizer::LevenbergMarquardt => self.run_lm(init),
        }
    }

    /// Damped least squares on the residual vector. Damping scales the
    /// normal-matrix diagonal, so steps stay sane across the mixed
    /// degree/millimeter parameter scales.
    fn run_lm(&self, init: [f64; 5]) -> Result<RunOutcome> {
        let mut params = init;
        self.bounds.clamp(&mut params);
        let (mut resid, mut loss) = self.residuals(&params)?;
        let mut trace = vec![loss];
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..self.config.max_iterations {
            iterations += 1;
            let jac = match self.residual_jacobian(&params) {
                Ok(j) => j,
                Err(_) => {
                    // gradient unavailable at this iterate; keep best-so-far
                    trace.push(loss);
                    break;
                }
            };
            let mut normal = [[0.0; 5]; 5];
            let mut grad = [0.0; 5];
            for i in 0..5 {
                for j in 0..5 {
                    for k in 0..5 {
                        normal[j][k] += jac[i][j] * jac[i][k];
                    }
                    grad[j] += jac[i][j] * resid[i];
                }
            }
            for row in normal.iter_mut() {
                for v in row.iter_mut() {
                    *v /= 5.0;
                }
            }
            for v in grad.iter_mut() {
                *v /= 5.0;
            }
            let mut accepted = false;
            let mut step_norm = 0.0;
            for _ in 0..16 {
                let mut damped = normal;
                for i in 0..5 {
                    damped[i][i] += lambda * normal[i][i] + 1e-14;
                }
                let rhs = [-grad[0], -grad[1], -grad[2], -grad[3], -grad[4]];
                let Some(step) = solve_spd5(&damped, &rhs) else {
                    lambda *= 5.0;
                    continue;
                };
                let mut cand = params;
                for i in 0..5 {
                    cand[i] += step[i];
                }
                self.bounds.clamp(&mut cand);
                let Ok((cand_resid, cand_loss)) = self.residuals(&cand) else {
                    lambda *= 5.0;
                    continue;
                };
                if cand_loss < loss {
                    params = cand;
                    resid = cand_resid;
                    loss = cand_loss;
                    lambda = (lambda / 3.0).max(1e-12);
                    step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                    accepted = true;
                    break;
                }
                lambda *= 5.0;
            }
            trace.push(loss);
            if loss < self.config.loss_tolerance
                || (accepted && step_norm < self.config.step_tolerance)
            {
                converged = true;
                break;
            }
            if !accepted {
                break;
            }
        }
        Ok(RunOutcome { params, loss, trace, iterations, converged })
    }

    fn run_gd(&self, init: [f64; 5]) -> Result<RunOutcome> {
        let mut params = init;
        self.bounds.clamp(&mut params);
        let mut loss = self.loss_value(&params)?;
        let mut best = params;
        let mut best_loss = loss;
        let mut trace = vec![loss];
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..self.config.max_iterations {
            iterations += 1;
            let Ok(grad) = self.loss_gradient(&params) else {
                break;
            };
            let mut step_norm2 = 0.0;
            for j in 0..5 {
                let s = self.config.per_parameter_step_sizes[j] * grad[j];
                params[j] -= s;
                step_norm2 += s * s;
            }
            self.bounds.clamp(&mut params);
            let Ok(l) = self.loss_value(&params) else {
                break;
            };
            loss = l;
            trace.push(loss);
            if loss < best_loss {
                best_loss = loss;
                best = params;
            }
            if loss < self.config.loss_tolerance
                || step_norm2.sqrt() < self.config.step_tolerance
            {
                converged = true;
                break;
            }
        }
        // fixed steps can overshoot near the minimum; report the best visited
        if best_loss < *trace.last().expect("trace starts non-empty") {
            trace.push(best_loss);
        }
        Ok(RunOutcome { params: best, loss: best_loss, trace, iterations, converged })
    }
}

/// Full registration: fit the observed ellipse, initialize, minimize.
///
/// An oblique circular cone admits two families of circular sections, so a
/// second pose with the same radius reproduces the observed ellipse
/// exactly. A run that ends far from its start angle has usually crossed
/// into that conjugate basin. When that happens (and `second_start` is on),
/// the minimizer reruns from the mirrored start angle and the run that
/// stayed nearer its own start wins; ties go to the lower loss.
pub fn register(
    observed_landmarks: &LandmarkSet2D,
    r: f64,
    geom: &ScannerGeometry,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    config.validate()?;
    let start = Instant::now();
    let observed = fit_ellipse(observed_landmarks)?;
    let init_pose = initial_guess(&observed, r, geom)?;
    let bounds = Bounds::from_config(config, r, geom)?;
    let problem = Problem {
        observed: params_array(&observed),
        r,
        n: config.n_model_landmarks,
        source_distance: geom.source_distance,
        weights: config.parameter_weights,
        weight_sqrt: config.parameter_weights.map(f64::sqrt),
        bounds,
        config,
    };
    let init = [init_pose.theta, init_pose.phi, init_pose.k, init_pose.l, init_pose.h];
    let phi0 = init_pose.phi;

    let first = problem.run(init, phi0)?;
    let chosen = if !config.second_start || half_turn_distance(first.params[1], phi0) <= 45.0 {
        first
    } else {
        let second = problem.run(init, -phi0)?;
        let agree = (first.params[0] - second.params[0]).abs()
            + half_turn_distance(first.params[1], second.params[1])
            <= 0.5;
        let first_closer = half_turn_distance(first.params[1], phi0)
            < half_turn_distance(second.params[1], -phi0);
        let second_closer = half_turn_distance(second.params[1], -phi0)
            < half_turn_distance(first.params[1], phi0);
        if agree || (!first_closer && !second_closer) {
            if first.loss <= second.loss {
                first
            } else {
                second
            }
        } else if first_closer {
            first
        } else {
            second
        }
    };

    // evaluated at the raw unwrapped parameters so the reported loss is
    // exactly the last trace entry; wrapping phi first would reorder the
    // scatter sums and shift the value by rounding noise
    let v = forward_params(&chosen.params, r, config.n_model_landmarks, geom.source_distance)?;
    let fitted = EllipseParams { x: v[0], y: v[1], a: v[2], b: v[3], alpha: v[4] };
    let pose = Pose {
        theta: chosen.params[0],
        phi: wrap_half_turn(chosen.params[1]),
        k: chosen.params[2],
        l: chosen.params[3],
        h: chosen.params[4],
    };
    Ok(RegistrationResult {
        pose,
        final_loss: chosen.loss,
        loss_trace: chosen.trace,
        iterations: chosen.iterations,
        converged: chosen.converged,
        observed_ellipse: observed,
        fitted_ellipse: fitted,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
