//! Shared fixtures for the pipeline benchmarks: one representative
//! off-center scene at the default scanner geometry.

use ringpose_core::{
    apply_pose, canonical_landmarks, project_perspective, LandmarkSet2D, Pose, ScannerGeometry,
};

pub const RADIUS_MM: f64 = 25.0;

pub fn scanner() -> ScannerGeometry {
    ScannerGeometry::new(1040.0)
}

pub fn benchmark_pose() -> Pose {
    Pose {
        theta: 30.0,
        phi: 40.0,
        k: 50.0,
        l: 50.0,
        h: 400.0,
    }
}

pub fn observed_landmarks(n: usize) -> LandmarkSet2D {
    let ring = canonical_landmarks(RADIUS_MM, n).expect("valid ring");
    project_perspective(&apply_pose(&ring, &benchmark_pose()), &scanner()).expect("valid scene")
}
