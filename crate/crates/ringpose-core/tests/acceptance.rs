//! Acceptance gate. Each test covers one numbered criterion, prints a
//! single PASS or FAIL line with the measured values, and asserts. The
//! tolerances are pinned here and nowhere else.

use std::sync::LazyLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringpose_core::{
    apply_pose, canonical_landmarks, distance_sweep, ellipse_loss, fit_ellipse, forward_ellipse,
    half_turn_distance, pose_gradient, project_orthographic, project_perspective, record_rerun_key,
    run_batch, sample_ellipse, BatchSummary, EllipseParams, ExperimentSpec, Pose,
    RegistrationConfig, ScannerGeometry, TrialRecord,
};

const H: f64 = 1040.0;
const R: f64 = 25.0;

struct NoiseFreeBatch {
    records: Vec<TrialRecord>,
    summary: BatchSummary,
    wall_s: f64,
}

/// One 200-trial noise-free batch shared by the accuracy criteria.
static NOISE_FREE: LazyLock<NoiseFreeBatch> = LazyLock::new(|| {
    let start = Instant::now();
    let (records, summary) =
        run_batch(&ExperimentSpec::default(), &RegistrationConfig::default()).unwrap();
    NoiseFreeBatch { records, summary, wall_s: start.elapsed().as_secs_f64() }
});

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion} ({name}): {verdict} [{detail}]");
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn random_pose(rng: &mut impl Rng) -> Pose {
    Pose {
        theta: rng.random_range(1.0..50.0),
        phi: rng.random_range(-90.0..90.0),
        k: rng.random_range(-100.0..100.0),
        l: rng.random_range(-100.0..100.0),
        h: rng.random_range(100.0..520.0),
    }
}

#[test]
fn criterion_1_noise_free_accuracy() {
    let batch = &*NOISE_FREE;
    let p = batch.summary.proposed.as_ref().unwrap();
    let pass = p.mae_theta_deg <= 0.5
        && p.mae_phi_deg <= 1.0
        && p.mae_inplane_mm <= 1.0
        && p.mae_h_mm <= 3.0
        && batch.wall_s <= 300.0;
    let soft = if batch.summary.mean_time_s <= 2.0 { "" } else { ", mean time above soft 2 s bound" };
    report(
        1,
        "noise-free accuracy",
        pass,
        &format!(
            "mae theta {:.4} deg <= 0.5, phi {:.4} deg <= 1.0, in-plane {:.4} mm <= 1.0, \
             h {:.4} mm <= 3.0, batch {:.1} s <= 300, mean {:.4} s{soft}",
            p.mae_theta_deg, p.mae_phi_deg, p.mae_inplane_mm, p.mae_h_mm, batch.wall_s,
            batch.summary.mean_time_s
        ),
    );
}

#[test]
fn criterion_2_orthographic_baseline_gap() {
    let batch = &*NOISE_FREE;
    let p = batch.summary.proposed.as_ref().unwrap();
    let o = batch.summary.orthographic.as_ref().unwrap();
    let ratio = o.mae_theta_deg / p.mae_theta_deg;
    let pass = o.mae_theta_deg > 3.0
        && o.mae_theta_deg < 9.0
        && o.mae_phi_deg > 1.0
        && o.mae_phi_deg < 4.0
        && ratio >= 5.0;
    report(
        2,
        "orthographic baseline gap",
        pass,
        &format!(
            "orthographic mae theta {:.3} deg in (3, 9), phi {:.3} deg in (1, 4), \
             theta ratio {:.1}x >= 5x",
            o.mae_theta_deg, o.mae_phi_deg, ratio
        ),
    );
}

#[test]
fn criterion_3_error_vs_distance_trend() {
    let distances = [0.0, 50.0, 100.0];
    let rows = distance_sweep(&distances, &ExperimentSpec::default(), &RegistrationConfig::default())
        .unwrap();
    let take = |method: &str| -> Vec<f64> {
        distances
            .iter()
            .map(|&d| {
                rows.iter()
                    .find(|r| r.method == method && r.distance_mm == d)
                    .unwrap()
                    .mae_theta_deg
            })
            .collect()
    };
    let ortho = take("orthographic");
    let proposed = take("proposed");
    let spread = proposed.iter().cloned().fold(f64::MIN, f64::max)
        - proposed.iter().cloned().fold(f64::MAX, f64::min);
    let pass = ortho[0] < ortho[1] && ortho[1] < ortho[2] && spread < 0.5;
    report(
        3,
        "error versus offset distance",
        pass,
        &format!(
            "orthographic mae theta {:.3} < {:.3} < {:.3} deg, proposed spread {:.4} deg < 0.5",
            ortho[0], ortho[1], ortho[2], spread
        ),
    );
}

#[test]
fn criterion_4_gradient_matches_finite_differences() {
    let geom = ScannerGeometry::new(H);
    let weights = [1.0; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let at = random_pose(&mut rng);
        let observed = forward_ellipse(&random_pose(&mut rng), R, 100, &geom).unwrap();
        let analytic = pose_gradient(&at, &observed, R, 100, &geom, &weights).unwrap();
        let mut fd = [0.0; 5];
        let step = 1e-5;
        let mut params = [at.theta, at.phi, at.k, at.l, at.h];
        for i in 0..5 {
            let saved = params[i];
            params[i] = saved + step;
            let up = eval_loss(&params, &observed, &geom, &weights);
            params[i] = saved - step;
            let down = eval_loss(&params, &observed, &geom, &weights);
            params[i] = saved;
            fd[i] = (up - down) / (2.0 * step);
        }
        let diff = norm5(&sub5(&analytic, &fd));
        let rel = diff / norm5(&fd).max(1e-12);
        worst = worst.max(rel);
    }
    let pass = worst <= 1e-4;
    report(
        4,
        "gradient versus finite differences",
        pass,
        &format!("worst relative difference {worst:.3e} <= 1e-4 over 100 configurations"),
    );
}

#[test]
fn criterion_5_ellipse_fit_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let mut worst = 0.0f64;
    let mut worst_alpha = 0.0f64;
    for _ in 0..1000 {
        let a: f64 = rng.random_range(1.0..300.0);
        let ratio: f64 = rng.random_range(1.0..20.0);
        let truth = EllipseParams {
            x: rng.random_range(-200.0..200.0),
            y: rng.random_range(-200.0..200.0),
            a,
            b: a / ratio,
            alpha: rng.random_range(-90.0..90.0),
        };
        let fitted = fit_ellipse(&sample_ellipse(&truth, 64)).unwrap();
        for (est, tru) in [
            (fitted.x, truth.x),
            (fitted.y, truth.y),
            (fitted.a, truth.a),
            (fitted.b, truth.b),
        ] {
            worst = worst.max((est - tru).abs() / tru.abs().max(1e-9));
        }
        // a circle carries no orientation; just inside one it carries
        // very little, so the angle check starts above the knee
        if ratio > 1.0 + 1e-4 {
            worst_alpha = worst_alpha.max(half_turn_distance(fitted.alpha, truth.alpha));
        }
    }
    let pass = worst <= 1e-6 && worst_alpha <= 1.8e-4;
    report(
        5,
        "ellipse fit round trip",
        pass,
        &format!(
            "worst relative parameter error {worst:.3e} <= 1e-6, \
             worst orientation error {worst_alpha:.3e} deg <= 1.8e-4 over 1000 ellipses"
        ),
    );
}

#[test]
fn criterion_6_projection_limit() {
    let far = ScannerGeometry::new(1e9);
    let mut rng = ChaCha8Rng::seed_from_u64(660);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pose = random_pose(&mut rng);
        let ring = apply_pose(&canonical_landmarks(R, 100).unwrap(), &pose);
        let persp = project_perspective(&ring, &far).unwrap();
        let ortho = project_orthographic(&ring);
        for (p, o) in persp.points.iter().zip(&ortho.points) {
            worst = worst.max((p[0] - o[0]).abs()).max((p[1] - o[1]).abs());
        }
    }
    let pass = worst <= 1e-3;
    report(
        6,
        "perspective approaches orthographic at range",
        pass,
        &format!("worst coordinate gap {worst:.3e} mm <= 1e-3 at source distance 1e9"),
    );
}

#[test]
fn criterion_7_loss_vanishes_at_the_generating_pose() {
    let geom = ScannerGeometry::new(H);
    let weights = [1.0; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_loss = 0.0f64;
    let mut worst_grad = 0.0f64;
    for _ in 0..100 {
        let pose = random_pose(&mut rng);
        let observed = forward_ellipse(&pose, R, 100, &geom).unwrap();
        let loss = ellipse_loss(&observed, &forward_ellipse(&pose, R, 100, &geom).unwrap(), &weights);
        let grad = pose_gradient(&pose, &observed, R, 100, &geom, &weights).unwrap();
        worst_loss = worst_loss.max(loss);
        worst_grad = worst_grad.max(norm5(&grad));
    }
    let pass = worst_loss < 1e-12 && worst_grad < 1e-8;
    report(
        7,
        "loss optimal at the generating pose",
        pass,
        &format!("worst loss {worst_loss:.3e} < 1e-12, worst gradient norm {worst_grad:.3e} < 1e-8"),
    );
}

#[test]
fn criterion_8_noisy_convergence() {
    let spec = ExperimentSpec {
        noise_sigma: 0.5,
        n_landmarks: 64,
        ..ExperimentSpec::default()
    };
    let (_, summary) = run_batch(&spec, &RegistrationConfig::default()).unwrap();
    let p = summary.proposed.unwrap();
    let pass = summary.convergence_rate >= 0.95 && p.mae_theta_deg <= 5.0;
    report(
        8,
        "noisy convergence",
        pass,
        &format!(
            "{}/{} trials converged ({:.1}% >= 95%), mae theta {:.3} deg <= 5",
            summary.converged_trials,
            summary.trials,
            100.0 * summary.convergence_rate,
            p.mae_theta_deg
        ),
    );
}

#[test]
fn criterion_9_reruns_are_bitwise_identical() {
    let spec = ExperimentSpec {
        trials: 60,
        noise_sigma: 0.5,
        n_landmarks: 64,
        seed: 4242,
        ..ExperimentSpec::default()
    };
    let config = RegistrationConfig::default();
    let (first, _) = run_batch(&spec, &config).unwrap();
    let (second, _) = run_batch(&spec, &config).unwrap();
    let identical = first.len() == second.len()
        && first
            .iter()
            .zip(&second)
            .all(|(a, b)| record_rerun_key(a) == record_rerun_key(b));
    // the shared batch must agree with a fresh run of the same spec too
    let (third, _) = run_batch(&ExperimentSpec::default(), &config).unwrap();
    let shared_identical = NOISE_FREE.records.len() == third.len()
        && NOISE_FREE
            .records
            .iter()
            .zip(&third)
            .all(|(a, b)| record_rerun_key(a) == record_rerun_key(b));
    let pass = identical && shared_identical;
    report(
        9,
        "bitwise reproducible reruns",
        pass,
        &format!(
            "noisy rerun identical: {identical}, noise-free rerun identical: {shared_identical} \
             (timing fields excluded)"
        ),
    );
}

fn eval_loss(
    params: &[f64; 5],
    observed: &EllipseParams,
    geom: &ScannerGeometry,
    weights: &[f64; 5],
) -> f64 {
    let pose = Pose { theta: params[0], phi: params[1], k: params[2], l: params[3], h: params[4] };
    let est = forward_ellipse(&pose, R, 100, geom).unwrap();
    ellipse_loss(observed, &est, weights)
}

fn sub5(a: &[f64; 5], b: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|i| a[i] - b[i])
}

fn norm5(v: &[f64; 5]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
