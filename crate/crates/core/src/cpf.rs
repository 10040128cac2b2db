//! Contact particle filter over the surface of a grasped object with a known
//! in-hand pose.

use std::io::Write;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::SurfaceModel;
use crate::mechanics::{frame_with_z, ContactAdjoint, FrictionCone, MechanicsError, RigidTransform, Wrench};
use crate::qp::{solve_contact_qp, ContactQpResult, QpError, SensorNoise};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpfError {
    #[error("surface model has no points")]
    EmptySurface,
    #[error("invalid filter parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpfParams {
    pub n_clp: usize,
    pub n_cs: usize,
    pub n_f: usize,
    pub mu: f64,
    /// Initial motion-noise standard deviation (m).
    pub motion_sigma: f64,
    /// Per-iteration multiplier on `motion_sigma`.
    pub sigma_decay: f64,
    /// Resample when the effective sample size falls below this fraction of
    /// `n_clp`; 1.0 resamples every iteration.
    pub resample_threshold: f64,
}

impl Default for CpfParams {
    fn default() -> Self {
        Self::table_one()
    }
}

impl CpfParams {
    /// Standalone contact-localisation parameters: 40 particles, 10 steps,
    /// 8 cone edges.
    pub fn table_one() -> Self {
        Self {
            n_clp: 40,
            n_cs: 10,
            n_f: 8,
            mu: 0.5,
            motion_sigma: 0.005,
            sigma_decay: 0.8,
            resample_threshold: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), CpfError> {
        let bad = |m: String| Err(CpfError::Params(m));
        if self.n_clp < 1 {
            return bad("n_clp must be at least 1".into());
        }
        if self.n_f < 3 {
            return bad(format!("n_f must be at least 3, got {}", self.n_f));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad(format!("mu must be a finite nonnegative number, got {}", self.mu));
        }
        if !(self.motion_sigma >= 0.0) || !self.motion_sigma.is_finite() {
            return bad(format!("motion_sigma must be nonnegative, got {}", self.motion_sigma));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return bad(format!("sigma_decay must lie in (0, 1], got {}", self.sigma_decay));
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return bad(format!("resample_threshold must lie in [0, 1], got {}", self.resample_threshold));
        }
        Ok(())
    }

    /// Motion-noise standard deviation used at iteration `it`.
    pub fn sigma_at(&self, it: usize) -> f64 {
        self.motion_sigma * self.sigma_decay.powi(it as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactParticle {
    /// Object-frame location on the surface model.
    pub location: Point3<f64>,
    /// Outward unit surface normal at `location`, object frame.
    pub normal: Vector3<f64>,
    pub surface_index: usize,
    /// Normalised over the set.
    pub likelihood: f64,
    pub qp: Option<ContactQpResult>,
}

impl ContactParticle {
    fn at(surface: &SurfaceModel, idx: usize, likelihood: f64) -> Self {
        Self {
            location: surface.points[idx],
            normal: surface.normals[idx],
            surface_index: idx,
            likelihood,
            qp: None,
        }
    }

    pub fn residual(&self) -> Option<f64> {
        self.qp.as_ref().map(|q| q.residual)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactParticleSet {
    pub particles: Vec<ContactParticle>,
    pub iteration: usize,
}

impl ContactParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn likelihoods(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.likelihood).collect()
    }

    /// Likelihood-weighted mean location, object frame.
    pub fn weighted_mean(&self) -> Point3<f64> {
        let total: f64 = self.particles.iter().map(|p| p.likelihood).sum();
        let sum = self
            .particles
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.location.coords * p.likelihood);
        Point3::from(sum / total)
    }

    /// Index of the most likely particle (first on ties).
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.likelihood > self.particles[best].likelihood {
                best = i;
            }
        }
        best
    }

    pub fn effective_sample_size(&self) -> f64 {
        let s2: f64 = self.particles.iter().map(|p| p.likelihood * p.likelihood).sum();
        if s2 > 0.0 {
            1.0 / s2
        } else {
            0.0
        }
    }

    /// One JSON object per particle: location, normal, likelihood, residual.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.particles {
            let line = serde_json::json!({
                "iteration": self.iteration,
                "location": [p.location.x, p.location.y, p.location.z],
                "normal": [p.normal.x, p.normal.y, p.normal.z],
                "likelihood": p.likelihood,
                "residual": p.residual(),
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// `n_clp` particles drawn uniformly from the surface, without replacement
/// when the surface is large enough.
pub fn init_contact_particles<R: Rng + ?Sized>(
    surface: &SurfaceModel,
    n_clp: usize,
    rng: &mut R,
) -> Result<ContactParticleSet, CpfError> {
    if surface.is_empty() {
        return Err(CpfError::EmptySurface);
    }
    if n_clp == 0 {
        return Err(CpfError::Params("n_clp must be at least 1".into()));
    }
    let w = 1.0 / n_clp as f64;
    let indices: Vec<usize> = if surface.len() >= n_clp {
        rand::seq::index::sample(rng, surface.len(), n_clp).into_vec()
    } else {
        (0..n_clp).map(|_| rng.random_range(0..surface.len())).collect()
    };
    let particles = indices.into_iter().map(|i| ContactParticle::at(surface, i, w)).collect();
    Ok(ContactParticleSet { particles, iteration: 0 })
}

/// Isotropic Gaussian step followed by projection onto the nearest surface
/// point. Scores are cleared; likelihoods are kept.
pub fn motion_model<R: Rng + ?Sized>(
    set: &ContactParticleSet,
    surface: &SurfaceModel,
    sigma: f64,
    rng: &mut R,
) -> ContactParticleSet {
    let particles = set
        .particles
        .iter()
        .map(|p| {
            let idx = if sigma > 0.0 {
                let step = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
                surface.nearest(&(p.location + step))
            } else {
                p.surface_index
            };
            ContactParticle::at(surface, idx, p.likelihood)
        })
        .collect();
    ContactParticleSet { particles, iteration: set.iteration }
}

/// Cone of contact-frame push directions: the contact frame's +z is the
/// inward normal.
pub fn contact_frame_cone(mu: f64, n_f: usize) -> Result<FrictionCone, CpfError> {
    Ok(FrictionCone::new(Point3::origin(), &-Vector3::z(), mu, n_f)?)
}

/// Pose of the contact frame in the end-effector frame for a surface point
/// of an object held at `object_in_ee`.
pub fn contact_frame(object_in_ee: &RigidTransform, location: &Point3<f64>, normal: &Vector3<f64>) -> RigidTransform {
    let inward = -(object_in_ee.rotation * normal);
    RigidTransform {
        rotation: frame_with_z(&inward.normalize()),
        translation: object_in_ee.transform_point(location).coords,
    }
}

/// Solve the contact program at every particle and store normalised
/// likelihoods `∝ exp(−r/2)`, normalised in log space.
pub fn score_contact_particles(
    set: &ContactParticleSet,
    object_in_ee: &RigidTransform,
    gamma_e: &Wrench,
    noise: &SensorNoise,
    params: &CpfParams,
) -> Result<ContactParticleSet, CpfError> {
    let cone = contact_frame_cone(params.mu, params.n_f)?;
    let mut particles = set.particles.clone();
    for p in particles.iter_mut() {
        let frame = contact_frame(object_in_ee, &p.location, &p.normal);
        let adj = ContactAdjoint::from_contact_frame(&frame)?;
        p.qp = Some(solve_contact_qp(gamma_e, &adj, &cone, noise)?);
    }
    let logs: Vec<f64> = particles.iter().map(|p| -0.5 * p.residual().unwrap_or(f64::INFINITY)).collect();
    let weights = normalize_log_weights(&logs);
    for (p, w) in particles.iter_mut().zip(weights) {
        p.likelihood = w;
    }
    Ok(ContactParticleSet { particles, iteration: set.iteration })
}

/// `exp(l_i) / Σ exp(l_j)` computed stably; uniform when every entry is
/// `-∞` or the input is non-finite.
pub fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let n = logs.len();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![1.0 / n as f64; n];
    }
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Systematic resampling indices for `weights` with offset `u ∈ [0, 1/n)`.
/// Zero-sum or non-finite weights fall back to uniform.
pub fn systematic_indices(weights: &[f64], n: usize, u: f64) -> Vec<usize> {
    let m = weights.len();
    let total: f64 = weights.iter().sum();
    let uniform;
    let w: &[f64] = if total > 0.0 && total.is_finite() && weights.iter().all(|w| *w >= 0.0) {
        weights
    } else {
        uniform = vec![1.0; m];
        &uniform
    };
    let total: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cum = w[0] / total;
    for k in 0..n {
        let target = u + k as f64 / n as f64;
        while target >= cum && i + 1 < m {
            i += 1;
            cum += w[i] / total;
        }
        out.push(i);
    }
    out
}

/// Low-variance resampling; output likelihoods are uniform.
pub fn low_variance_resample<R: Rng + ?Sized>(set: &ContactParticleSet, rng: &mut R) -> ContactParticleSet {
    let n = set.len();
    let u = rng.random::<f64>() / n as f64;
    let idx = systematic_indices(&set.likelihoods(), n, u);
    let w = 1.0 / n as f64;
    let particles = idx
        .into_iter()
        .map(|i| ContactParticle { likelihood: w, ..set.particles[i].clone() })
        .collect();
    ContactParticleSet { particles, iteration: set.iteration }
}

/// Full filter: initialise, then `n_cs` rounds of motion, scoring and
/// resampling, then a final scoring pass.
pub fn cpfgrasp<R: Rng + ?Sized>(
    gamma_e: &Wrench,
    object_in_ee: &RigidTransform,
    surface: &SurfaceModel,
    noise: &SensorNoise,
    params: &CpfParams,
    rng: &mut R,
) -> Result<ContactParticleSet, CpfError> {
    cpfgrasp_observed(gamma_e, object_in_ee, surface, noise, params, rng, |_| {})
}

/// [`cpfgrasp`] with a callback on every scored set, before resampling.
pub fn cpfgrasp_observed<R: Rng + ?Sized, F: FnMut(&ContactParticleSet)>(
    gamma_e: &Wrench,
    object_in_ee: &RigidTransform,
    surface: &SurfaceModel,
    noise: &SensorNoise,
    params: &CpfParams,
    rng: &mut R,
    mut observe: F,
) -> Result<ContactParticleSet, CpfError> {
    params.validate()?;
    let mut set = init_contact_particles(surface, params.n_clp, rng)?;
    for it in 0..params.n_cs {
        set = motion_model(&set, surface, params.sigma_at(it), rng);
        set = score_contact_particles(&set, object_in_ee, gamma_e, noise, params)?;
        set.iteration = it + 1;
        observe(&set);
        if set.effective_sample_size() < params.resample_threshold * set.len() as f64
            || params.resample_threshold >= 1.0
        {
            set = low_variance_resample(&set, rng);
        }
    }
    let mut set = score_contact_particles(&set, object_in_ee, gamma_e, noise, params)?;
    set.iteration = params.n_cs;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::cuboid;
    use crate::geometry::{compute_sdf, default_eps_s, extract_surface, voxelize, SignedDistanceField};
    use crate::mechanics::Frame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(size: f64, voxel: f64) -> (SignedDistanceField, SurfaceModel) {
        let mesh = cuboid(Point3::origin(), Point3::new(size, size, size));
        let sdf = compute_sdf(&voxelize(&mesh, voxel).unwrap()).unwrap();
        let surface = extract_surface(&sdf, default_eps_s(voxel)).unwrap();
        (sdf, surface)
    }

    /// Noiseless end-effector wrench from a push at surface point `idx`.
    fn push_at(surface: &SurfaceModel, pose: &RigidTransform, idx: usize, alpha: [f64; 8], mu: f64) -> Wrench {
        let frame = contact_frame(pose, &surface.points[idx], &surface.normals[idx]);
        let cone = contact_frame_cone(mu, 8).unwrap();
        let f: Vector3<f64> = cone.edges.iter().zip(alpha).map(|(e, a)| e * a).sum();
        ContactAdjoint::from_contact_frame(&frame)
            .unwrap()
            .apply(&Wrench::new(f, Vector3::zeros(), Frame::Contact))
            .unwrap()
    }

    fn held_pose() -> RigidTransform {
        RigidTransform::from_rotation(
            nalgebra::Rotation3::from_euler_angles(0.3, -0.4, 0.2),
            Vector3::new(0.01, -0.02, 0.05),
        )
    }

    #[test]
    fn init_sampling() {
        let (_, surface) = cube(0.02, 0.005);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = init_contact_particles(&surface, 1, &mut rng).unwrap();
        assert_eq!(one.particles[0].likelihood, 1.0);

        let all = init_contact_particles(&surface, 56, &mut rng).unwrap();
        let mut idx: Vec<usize> = all.particles.iter().map(|p| p.surface_index).collect();
        idx.sort();
        assert_eq!(idx, (0..56).collect::<Vec<_>>());

        let more = init_contact_particles(&surface, 100, &mut rng).unwrap();
        assert_eq!(more.len(), 100);

        let a = init_contact_particles(&surface, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_contact_particles(&surface, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn motion_stays_on_surface() {
        let (sdf, surface) = cube(0.03, 0.002);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = init_contact_particles(&surface, 30, &mut rng).unwrap();
        assert_eq!(motion_model(&set, &surface, 0.0, &mut rng), set);
        let moved = motion_model(&set, &surface, 0.004, &mut rng);
        assert_ne!(moved, set);
        for p in &moved.particles {
            assert!(sdf.sample(&p.location).unwrap().abs() <= surface.eps_s);
            assert_eq!(p.location, surface.points[p.surface_index]);
        }
    }

    #[test]
    fn motion_displacement_matches_projected_gaussian() {
        let (_, surface) = cube(0.03, 0.002);
        let start = surface.nearest(&Point3::new(0.015, 0.015, 0.0));
        let sigma = 0.004;
        let n = 10_000;
        let set = ContactParticleSet {
            particles: (0..n).map(|_| ContactParticle::at(&surface, start, 1.0 / n as f64)).collect(),
            iteration: 0,
        };
        let moved = motion_model(&set, &surface, sigma, &mut ChaCha8Rng::seed_from_u64(11));
        let origin = surface.points[start];
        let rms = (moved.particles.iter().map(|p| (p.location - origin).norm_squared()).sum::<f64>() / n as f64).sqrt();

        // brute force: own Gaussian draws and a linear nearest-point scan
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut acc = 0.0;
        for _ in 0..n {
            let q = origin + Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
            let nearest = surface
                .points
                .iter()
                .min_by(|a, b| (*a - q).norm_squared().total_cmp(&(*b - q).norm_squared()))
                .unwrap();
            acc += (nearest - origin).norm_squared();
        }
        let oracle = (acc / n as f64).sqrt();
        assert!((rms - oracle).abs() <= 0.2 * oracle, "{rms} vs {oracle}");
    }

    #[test]
    fn systematic_resampling_cases() {
        assert_eq!(systematic_indices(&[0.0, 1.0, 0.0], 3, 0.2), vec![1, 1, 1]);
        assert_eq!(systematic_indices(&[0.25; 4], 4, 0.1), vec![0, 1, 2, 3]);
        for u in [0.0, 0.1, 0.2499] {
            let idx = systematic_indices(&[0.5, 0.25, 0.25], 4, u);
            let counts = [0, 1, 2].map(|k| idx.iter().filter(|&&i| i == k).count());
            assert_eq!(counts, [2, 1, 1], "u = {u}");
        }
        assert_eq!(systematic_indices(&[0.0, 0.0], 2, 0.3), vec![0, 1]);
    }

    #[test]
    fn true_contact_scores_highest() {
        let (_, surface) = cube(0.03, 0.002);
        let pose = held_pose();
        let truth = surface.nearest(&Point3::new(0.03, 0.011, 0.017));
        let gamma = push_at(&surface, &pose, truth, [1.0, 0.0, 2.0, 0.0, 0.5, 0.0, 0.0, 0.0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = init_contact_particles(&surface, 25, &mut rng).unwrap();
        set.particles[7] = ContactParticle::at(&surface, truth, 0.04);
        let noise = SensorNoise::from_std(0.1, 0.005).unwrap();
        let scored = score_contact_particles(&set, &pose, &gamma, &noise, &CpfParams::table_one()).unwrap();
        assert_eq!(scored.best(), 7);
        let total: f64 = scored.likelihoods().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(scored.particles[7].residual().unwrap() <= 1e-12);
    }

    #[test]
    fn larger_noise_flattens_likelihoods() {
        let (_, surface) = cube(0.03, 0.002);
        let pose = held_pose();
        let truth = surface.nearest(&Point3::new(0.0, 0.02, 0.01));
        let gamma = push_at(&surface, &pose, truth, [0.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.2], 0.5);
        let set = init_contact_particles(&surface, 30, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let params = CpfParams::table_one();
        let noise = SensorNoise::from_std(1.0, 0.05).unwrap();
        let a = score_contact_particles(&set, &pose, &gamma, &noise, &params).unwrap();
        let b = score_contact_particles(&set, &pose, &gamma, &noise.scaled(2.0).unwrap(), &params).unwrap();
        let entropy = |s: &ContactParticleSet| -> f64 {
            s.likelihoods().iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
        };
        for (pa, pb) in a.particles.iter().zip(&b.particles) {
            let (ra, rb) = (pa.residual().unwrap(), pb.residual().unwrap());
            assert!((rb - ra / 2.0).abs() <= 1e-8 * (1.0 + ra));
        }
        assert!(entropy(&b) > entropy(&a));
    }

    #[test]
    fn pulling_wrench_leaves_likelihoods_near_uniform() {
        // every particle on the +z face; the wrench pulls along +z
        let (_, surface) = cube(0.03, 0.002);
        let face: Vec<usize> = (0..surface.len())
            .filter(|&i| surface.normals[i].z > 0.99)
            .take(20)
            .collect();
        let set = ContactParticleSet {
            particles: face.iter().map(|&i| ContactParticle::at(&surface, i, 0.05)).collect(),
            iteration: 0,
        };
        let id = RigidTransform::identity();
        let f = Vector3::new(0.0, 0.0, 5.0);
        let c = set.particles[0].location.coords;
        let gamma = Wrench::new(f, c.cross(&f), Frame::EndEffector);
        let noise = SensorNoise::from_std(1.0, 1.0).unwrap();
        let scored = score_contact_particles(&set, &id, &gamma, &noise, &CpfParams::table_one()).unwrap();
        for p in &scored.particles {
            assert!(p.residual().unwrap() >= 24.9, "pulling force cannot be explained");
            assert!((p.likelihood - 0.05).abs() < 0.05);
        }
    }

    #[test]
    fn zero_iterations_returns_scored_initial_set() {
        let (_, surface) = cube(0.03, 0.002);
        let pose = held_pose();
        let gamma = push_at(&surface, &pose, 10, [1.0; 8], 0.5);
        let noise = SensorNoise::from_std(0.1, 0.005).unwrap();
        let params = CpfParams { n_cs: 0, ..CpfParams::table_one() };
        let out = cpfgrasp(&gamma, &pose, &surface, &noise, &params, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let init = init_contact_particles(&surface, 40, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let locs: Vec<_> = out.particles.iter().map(|p| p.location).collect();
        assert_eq!(locs, init.particles.iter().map(|p| p.location).collect::<Vec<_>>());
        assert!(out.particles.iter().all(|p| p.qp.is_some()));
    }

    #[test]
    fn filter_is_deterministic_and_localises() {
        let (_, surface) = cube(0.03, 0.002);
        let pose = held_pose();
        let truth = surface.nearest(&Point3::new(0.012, 0.0, 0.02));
        let gamma = push_at(&surface, &pose, truth, [0.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 0.5);
        let noise = SensorNoise::from_std(0.1, 0.005).unwrap();
        let params = CpfParams::table_one();
        let a = cpfgrasp(&gamma, &pose, &surface, &noise, &params, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = cpfgrasp(&gamma, &pose, &surface, &noise, &params, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        assert!((a.weighted_mean() - surface.points[truth]).norm() < 0.005);
        let mut buf = Vec::new();
        a.write_json_lines(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 40);
    }
}
