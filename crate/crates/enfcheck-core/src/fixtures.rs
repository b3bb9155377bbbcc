//! Bundled fixtures: the camera enforcer, its policy monitor, and two
//! variants of a miniature camera app.
//!
//! The two app specs share one GUI. In the compliant variant every path out
//! of the main screen releases the camera before pausing; in the leaky
//! variant the Back-key handler forgets the release (the in-app Exit button
//! remains correct), so the enforcer's insertion behavior is exercisable.

use crate::appsim::{AppSpec, SimDriver};
use crate::model::{EnforcementModel, PolicyMonitor};

/// Enforcer that inserts `camera.release` before a pause while the camera is
/// held.
pub const CAMERA_MODEL_TEXT: &str = include_str!("../fixtures/camera-enforcer.model");

/// Safety monitor for "the camera is released before the activity pauses".
pub const CAMERA_POLICY_TEXT: &str = include_str!("../fixtures/camera-policy.monitor");

/// Camera app whose Back handler correctly releases the camera.
pub const FOOCAM_COMPLIANT_TEXT: &str = include_str!("../fixtures/foocam-mini-compliant.app.json");

/// Same GUI, but the Back handler omits `camera.release`.
pub const FOOCAM_LEAKY_TEXT: &str = include_str!("../fixtures/foocam-mini-leaky.app.json");

pub fn camera_model() -> EnforcementModel {
    EnforcementModel::parse(CAMERA_MODEL_TEXT).expect("bundled camera model is valid")
}

pub fn camera_policy() -> PolicyMonitor {
    PolicyMonitor::parse(CAMERA_POLICY_TEXT).expect("bundled camera policy is valid")
}

pub fn foocam_compliant() -> AppSpec {
    AppSpec::parse(FOOCAM_COMPLIANT_TEXT).expect("bundled compliant app spec is valid")
}

pub fn foocam_leaky() -> AppSpec {
    AppSpec::parse(FOOCAM_LEAKY_TEXT).expect("bundled leaky app spec is valid")
}

pub fn compliant_driver() -> SimDriver {
    SimDriver::new(foocam_compliant())
}

pub fn leaky_driver() -> SimDriver {
    SimDriver::new(foocam_leaky())
}
