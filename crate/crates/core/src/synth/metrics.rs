use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::scope::PlanarGraspPose;

/// Planar translation error (cm) and wrapped rotation error (deg).
pub fn pose_errors(estimate: &PlanarGraspPose, truth: &PlanarGraspPose) -> (f64, f64) {
    let trans = (estimate.x - truth.x).hypot(estimate.z - truth.z) * 100.0;
    (trans, wrap_angle(estimate.theta - truth.theta).abs().to_degrees())
}

/// Angle mapped to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Translation errors plus rotation errors scaled by each object's radius of
/// gyration. Translations and radii in cm, rotations in radians.
pub fn aggregate_error(trans_p: f64, trans_t: f64, rot_p_rad: f64, rot_t_rad: f64, r_g_p: f64, r_g_t: f64) -> f64 {
    trans_p + trans_t + r_g_p * rot_p_rad + r_g_t * rot_t_rad
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub trans_error_p: f64,
    pub trans_error_t: f64,
    pub rot_error_p_deg: f64,
    pub rot_error_t_deg: f64,
    pub rot_error_p_rad: f64,
    pub rot_error_t_rad: f64,
    pub e_agg: f64,
}

impl ErrorReport {
    /// Errors of one (poker, tool) estimate; radii of gyration in metres.
    pub fn new(
        estimate: &(PlanarGraspPose, PlanarGraspPose),
        truth: &(PlanarGraspPose, PlanarGraspPose),
        r_g_p: f64,
        r_g_t: f64,
    ) -> Self {
        let (tp, rp) = pose_errors(&estimate.0, &truth.0);
        let (tt, rt) = pose_errors(&estimate.1, &truth.1);
        Self::from_components(tp, tt, rp, rt, r_g_p, r_g_t)
    }

    fn from_components(tp: f64, tt: f64, rp_deg: f64, rt_deg: f64, r_g_p: f64, r_g_t: f64) -> Self {
        let (rp, rt) = (rp_deg.to_radians(), rt_deg.to_radians());
        Self {
            trans_error_p: tp,
            trans_error_t: tt,
            rot_error_p_deg: rp_deg,
            rot_error_t_deg: rt_deg,
            rot_error_p_rad: rp,
            rot_error_t_rad: rt,
            e_agg: aggregate_error(tp, tt, rp, rt, r_g_p * 100.0, r_g_t * 100.0),
        }
    }

    /// Mean of the per-particle errors over a set of pose pairs.
    pub fn mean_over(
        estimates: &[(PlanarGraspPose, PlanarGraspPose)],
        truth: &(PlanarGraspPose, PlanarGraspPose),
        r_g_p: f64,
        r_g_t: f64,
    ) -> Self {
        let n = estimates.len() as f64;
        let mut acc = [0.0; 4];
        for e in estimates {
            let (tp, rp) = pose_errors(&e.0, &truth.0);
            let (tt, rt) = pose_errors(&e.1, &truth.1);
            for (a, v) in acc.iter_mut().zip([tp, tt, rp, rt]) {
                *a += v / n;
            }
        }
        Self::from_components(acc[0], acc[1], acc[2], acc[3], r_g_p, r_g_t)
    }

    /// Rotation errors weighted by radius of gyration (cm).
    pub fn weighted_rotation(&self, r_g_p: f64, r_g_t: f64) -> f64 {
        100.0 * (r_g_p * self.rot_error_p_rad + r_g_t * self.rot_error_t_rad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_error_cases() {
        let a = PlanarGraspPose::new(0.01, -0.02, 0.3);
        assert_eq!(pose_errors(&a, &a), (0.0, 0.0));
        let (t, _) = pose_errors(&PlanarGraspPose::new(0.003, 0.004, 0.0), &PlanarGraspPose::default());
        assert!((t - 0.5).abs() < 1e-12);
        let (_, r) = pose_errors(&PlanarGraspPose::new(0.0, 0.0, 350f64.to_radians()), &PlanarGraspPose::default());
        assert!((r - 10.0).abs() < 1e-9);
        let (_, r) = pose_errors(&PlanarGraspPose::new(0.0, 0.0, PI), &PlanarGraspPose::new(0.0, 0.0, -PI));
        assert!(r.abs() < 1e-9);
    }

    #[test]
    fn aggregate_closed_forms() {
        assert_eq!(aggregate_error(0.0, 0.0, 0.0, 0.0, 5.25, 5.0), 0.0);
        let e = aggregate_error(1.0, 2.0, 0.1, 0.2, 5.0, 10.0);
        assert!((e - 5.5).abs() < 1e-12);
    }

    #[test]
    fn mean_over_matches_single() {
        let truth = (PlanarGraspPose::default(), PlanarGraspPose::new(0.01, 0.0, 0.1));
        let est = (PlanarGraspPose::new(0.003, 0.004, 0.05), PlanarGraspPose::new(0.0, 0.0, 0.0));
        let one = ErrorReport::new(&est, &truth, 0.0525, 0.05);
        let many = ErrorReport::mean_over(&[est, est, est], &truth, 0.0525, 0.05);
        assert!((one.e_agg - many.e_agg).abs() < 1e-12);
        assert!((one.trans_error_t - 1.0).abs() < 1e-12);
    }
}
