//! Simulation experiments: sample ground-truth poses, synthesize projected
//! landmarks (optionally noisy), run the estimators, and aggregate error
//! tables. Every trial seeds its own generator from the batch seed, so
//! batches are reproducible and trials can run in parallel in any order.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipse::fit_ellipse;
use crate::error::{Error, Result};
use crate::geometry::{
    apply_pose, canonical_landmarks, half_turn_distance, project_perspective, LandmarkSet2D,
    Pose, ScannerGeometry,
};
use crate::metrics::{hausdorff_distance, pose_error, PoseError};
use crate::orthographic::estimate_orientation_orthographic;
use crate::registration::{register, RegistrationConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSet {
    pub proposed: bool,
    pub orthographic: bool,
}

impl Default for MethodSet {
    fn default() -> Self {
        Self { proposed: true, orthographic: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub trials: usize,
    pub theta_range: (f64, f64),
    pub phi_range: (f64, f64),
    pub k_range: (f64, f64),
    pub l_range: (f64, f64),
    pub h_range: (f64, f64),
    #[serde(rename = "source_distance_mm")]
    pub source_distance: f64,
    #[serde(rename = "r_mm")]
    pub r: f64,
    pub n_landmarks: usize,
    #[serde(rename = "noise_sigma_mm")]
    pub noise_sigma: f64,
    pub seed: u64,
    pub methods: MethodSet,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            trials: 200,
            // lower edge at 1 degree keeps sampled rings clear of the
            // collapse instability; exact-zero tilts only appear in
            // degeneracy tests
            theta_range: (1.0, 50.0),
            phi_range: (-90.0, 90.0),
            k_range: (-100.0, 100.0),
            l_range: (-100.0, 100.0),
            h_range: (100.0, 520.0),
            source_distance: 1040.0,
            r: 25.0,
            n_landmarks: 100,
            noise_sigma: 0.0,
            seed: 11,
            methods: MethodSet::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.source_distance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "source distance must be positive, got {}",
                self.source_distance
            )));
        }
        if !(self.r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive, got {}",
                self.r
            )));
        }
        if self.n_landmarks < 6 {
            return Err(Error::InvalidArgument(format!(
                "n_landmarks must be at least 6, got {}",
                self.n_landmarks
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be a finite interval with low <= high, got ({lo}, {hi})"
                )))
            }
        };
        ordered("theta_range", self.theta_range)?;
        ordered("phi_range", self.phi_range)?;
        ordered("k_range", self.k_range)?;
        ordered("l_range", self.l_range)?;
        ordered("h_range", self.h_range)?;
        if !(self.theta_range.0 >= 0.0 && self.theta_range.1 <= 90.0) {
            return Err(Error::InvalidArgument(format!(
                "theta_range must lie within [0, 90], got ({}, {})",
                self.theta_range.0, self.theta_range.1
            )));
        }
        if !(self.h_range.0 > 0.0 && self.h_range.1 < self.source_distance) {
            return Err(Error::InvalidArgument(format!(
                "h_range must lie within (0, {}), got ({}, {})",
                self.source_distance, self.h_range.0, self.h_range.1
            )));
        }
        if !self.methods.proposed && !self.methods.orthographic {
            return Err(Error::InvalidArgument(
                "at least one method must be enabled".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposedOutcome {
    pub estimate: Pose,
    pub errors: PoseError,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthographicOutcome {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub theta_err_deg: f64,
    pub phi_err_deg: f64,
}

/// One simulated registration. Estimator failures (near-collapse tilts)
/// leave the method outcome empty and the record non-converged; the record
/// itself is always kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub truth: Pose,
    pub proposed: Option<ProposedOutcome>,
    pub orthographic: Option<OrthographicOutcome>,
    pub hd_mm: Option<f64>,
    pub time_s: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub count: usize,
    pub mae_theta_deg: f64,
    pub mae_phi_deg: f64,
    pub mae_inplane_mm: f64,
    pub mae_h_mm: f64,
    pub mean_final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationSummary {
    pub count: usize,
    pub mae_theta_deg: f64,
    pub mae_phi_deg: f64,
}

/// Aggregates of one batch. `proposed` averages every trial that produced
/// an estimate, converged or not; `proposed_converged_only` restricts to
/// converged trials, so both readings of the error are available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub trials: usize,
    pub converged_trials: usize,
    pub convergence_rate: f64,
    pub proposed: Option<MethodSummary>,
    pub proposed_converged_only: Option<MethodSummary>,
    pub orthographic: Option<OrientationSummary>,
    pub mean_hd_mm: Option<f64>,
    pub mean_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_mm: f64,
    pub method: String,
    pub mae_theta_deg: f64,
    pub mae_phi_deg: f64,
}

const POSE_SALT: u64 = 0x706f_7365;
const NOISE_SALT: u64 = 0x6e6f_6973;
const SWEEP_SALT: u64 = 0x7377_6565;

/// splitmix64 finalizer over seed, stream salt, and index: decorrelates
/// per-trial generators without any sequential draw dependency.
fn mix(seed: u64, salt: u64, index: u64) -> u64 {
    let mut z = seed
        ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Componentwise uniform sample in the draw order theta, phi, k, l, h.
pub fn sample_pose(rng: &mut impl Rng, spec: &ExperimentSpec) -> Pose {
    Pose {
        theta: draw(rng, spec.theta_range),
        phi: draw(rng, spec.phi_range),
        k: draw(rng, spec.k_range),
        l: draw(rng, spec.l_range),
        h: draw(rng, spec.h_range),
    }
}

pub fn perturb_landmarks(points: &LandmarkSet2D, sigma: f64, rng: &mut impl Rng) -> LandmarkSet2D {
    if sigma == 0.0 {
        return points.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked nonnegative");
    let points = points
        .points
        .iter()
        .map(|p| [p[0] + normal.sample(rng), p[1] + normal.sample(rng)])
        .collect();
    LandmarkSet2D { points }
}

pub fn run_trial(
    truth: &Pose,
    trial_index: usize,
    spec: &ExperimentSpec,
    config: &RegistrationConfig,
) -> TrialRecord {
    let noise_seed = mix(spec.seed, NOISE_SALT, trial_index as u64);
    let geom = ScannerGeometry::new(spec.source_distance);
    let observed = canonical_landmarks(spec.r, spec.n_landmarks)
        .and_then(|ring| project_perspective(&apply_pose(&ring, truth), &geom))
        .map(|projected| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            perturb_landmarks(&projected, spec.noise_sigma, &mut rng)
        });

    let start = Instant::now();
    let mut proposed = None;
    let mut orthographic = None;
    let mut hd_mm = None;
    if let Ok(observed) = &observed {
        if spec.methods.proposed {
            if let Ok(res) = register(observed, spec.r, &geom, config) {
                hd_mm = Some(hausdorff_distance(
                    &res.observed_ellipse,
                    &res.fitted_ellipse,
                    360,
                ));
                proposed = Some(ProposedOutcome {
                    estimate: res.pose,
                    errors: pose_error(truth, &res.pose),
                    final_loss: res.final_loss,
                    iterations: res.iterations,
                    converged: res.converged,
                });
            }
        }
        if spec.methods.orthographic {
            if let Ok((theta, phi)) =
                fit_ellipse(observed).and_then(|e| estimate_orientation_orthographic(&e))
            {
                orthographic = Some(OrthographicOutcome {
                    theta_deg: theta,
                    phi_deg: phi,
                    theta_err_deg: (theta - truth.theta).abs(),
                    phi_err_deg: half_turn_distance(phi, truth.phi),
                });
            }
        }
    }
    let time_s = start.elapsed().as_secs_f64();

    let mut converged = true;
    if spec.methods.proposed {
        converged &= proposed.as_ref().is_some_and(|p| p.converged);
    }
    if spec.methods.orthographic {
        converged &= orthographic.is_some();
    }

    TrialRecord {
        trial: trial_index,
        seed: noise_seed,
        truth: *truth,
        proposed,
        orthographic,
        hd_mm,
        time_s,
        converged,
    }
}

pub fn run_batch(
    spec: &ExperimentSpec,
    config: &RegistrationConfig,
) -> Result<(Vec<TrialRecord>, BatchSummary)> {
    spec.validate()?;
    config.validate()?;
    let records: Vec<TrialRecord> = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, POSE_SALT, i as u64));
            let truth = sample_pose(&mut rng, spec);
            run_trial(&truth, i, spec, config)
        })
        .collect();
    let summary = summarize(&records);
    Ok((records, summary))
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn proposed_summary<'a>(
    outcomes: impl Iterator<Item = &'a ProposedOutcome>,
) -> Option<MethodSummary> {
    let outcomes: Vec<_> = outcomes.collect();
    if outcomes.is_empty() {
        return None;
    }
    let avg = |f: fn(&ProposedOutcome) -> f64| {
        outcomes.iter().map(|o| f(o)).sum::<f64>() / outcomes.len() as f64
    };
    Some(MethodSummary {
        count: outcomes.len(),
        mae_theta_deg: avg(|o| o.errors.theta_err),
        mae_phi_deg: avg(|o| o.errors.phi_err),
        mae_inplane_mm: avg(|o| o.errors.inplane_err),
        mae_h_mm: avg(|o| o.errors.h_err),
        mean_final_loss: avg(|o| o.final_loss),
    })
}

pub fn summarize(records: &[TrialRecord]) -> BatchSummary {
    let converged_trials = records.iter().filter(|r| r.converged).count();
    let ortho: Vec<_> = records.iter().filter_map(|r| r.orthographic.as_ref()).collect();
    let orthographic = if ortho.is_empty() {
        None
    } else {
        Some(OrientationSummary {
            count: ortho.len(),
            mae_theta_deg: ortho.iter().map(|o| o.theta_err_deg).sum::<f64>() / ortho.len() as f64,
            mae_phi_deg: ortho.iter().map(|o| o.phi_err_deg).sum::<f64>() / ortho.len() as f64,
        })
    };
    let hd: Vec<f64> = records.iter().filter_map(|r| r.hd_mm).collect();
    BatchSummary {
        trials: records.len(),
        converged_trials,
        convergence_rate: if records.is_empty() {
            0.0
        } else {
            converged_trials as f64 / records.len() as f64
        },
        proposed: proposed_summary(records.iter().filter_map(|r| r.proposed.as_ref())),
        proposed_converged_only: proposed_summary(
            records
                .iter()
                .filter_map(|r| r.proposed.as_ref())
                .filter(|p| p.converged),
        ),
        orthographic,
        mean_hd_mm: mean(&hd),
        mean_time_s: mean(&records.iter().map(|r| r.time_s).collect::<Vec<_>>()).unwrap_or(0.0),
    }
}

/// For each distance d the in-plane offset is pinned to the circle of
/// radius d (direction drawn per trial) while the remaining parameters
/// sweep their configured ranges; rows report per-distance MAE per method.
pub fn distance_sweep(
    distances: &[f64],
    spec: &ExperimentSpec,
    config: &RegistrationConfig,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    config.validate()?;
    if distances.is_empty() {
        return Err(Error::InvalidArgument("no distances given".into()));
    }
    let reach = (-spec.k_range.0)
        .min(spec.k_range.1)
        .min(-spec.l_range.0)
        .min(spec.l_range.1);
    for &d in distances {
        if !(d.is_finite() && d >= 0.0 && d <= reach) {
            return Err(Error::InvalidArgument(format!(
                "distance {d} must lie within the in-plane ranges (reach {reach})"
            )));
        }
    }
    let mut rows = Vec::new();
    for (di, &distance) in distances.iter().enumerate() {
        let dspec = ExperimentSpec {
            seed: mix(spec.seed, SWEEP_SALT, di as u64),
            ..spec.clone()
        };
        let records: Vec<TrialRecord> = (0..dspec.trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(dspec.seed, POSE_SALT, i as u64));
                let mut truth = sample_pose(&mut rng, &dspec);
                let direction = rng.random_range(0.0..std::f64::consts::TAU);
                truth.k = distance * direction.cos();
                truth.l = distance * direction.sin();
                run_trial(&truth, i, &dspec, config)
            })
            .collect();
        let summary = summarize(&records);
        if let Some(p) = &summary.proposed {
            rows.push(SweepRow {
                distance_mm: distance,
                method: "proposed".into(),
                mae_theta_deg: p.mae_theta_deg,
                mae_phi_deg: p.mae_phi_deg,
            });
        }
        if let Some(o) = &summary.orthographic {
            rows.push(SweepRow {
                distance_mm: distance,
                method: "orthographic".into(),
                mae_theta_deg: o.mae_theta_deg,
                mae_phi_deg: o.mae_phi_deg,
            });
        }
    }
    Ok(rows)
}

pub fn records_to_jsonl(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| {
            Error::InvalidArgument(format!("record line {}: {e}", i + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serialized record with the wall time zeroed: the comparison key for
/// rerun-determinism checks, since timing is the one nondeterministic field.
pub fn record_rerun_key(record: &TrialRecord) -> String {
    let mut r = record.clone();
    r.time_s = 0.0;
    serde_json::to_string(&r).expect("records serialize")
}

pub fn summary_to_csv(summary: &BatchSummary) -> String {
    let num = |v: f64| format!("{v}");
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut out = String::from(
        "method,mae_theta_deg,mae_phi_deg,mae_kl_mm,mae_h_mm,mean_hd_mm,mean_time_s,convergence_rate\n",
    );
    if let Some(p) = &summary.proposed {
        out.push_str(&format!(
            "proposed,{},{},{},{},{},{},{}\n",
            num(p.mae_theta_deg),
            num(p.mae_phi_deg),
            num(p.mae_inplane_mm),
            num(p.mae_h_mm),
            opt(summary.mean_hd_mm),
            num(summary.mean_time_s),
            num(summary.convergence_rate),
        ));
    }
    if let Some(p) = &summary.proposed_converged_only {
        out.push_str(&format!(
            "proposed_converged_only,{},{},{},{},,,\n",
            num(p.mae_theta_deg),
            num(p.mae_phi_deg),
            num(p.mae_inplane_mm),
            num(p.mae_h_mm),
        ));
    }
    if let Some(o) = &summary.orthographic {
        out.push_str(&format!(
            "orthographic,{},{},,,,,\n",
            num(o.mae_theta_deg),
            num(o.mae_phi_deg),
        ));
    }
    out
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("distance_mm,method,mae_theta_deg,mae_phi_deg\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.distance_mm, r.method, r.mae_theta_deg, r.mae_phi_deg
        ));
    }
    out
}
