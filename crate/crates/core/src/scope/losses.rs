use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::ScopeError;
use crate::cpf::{contact_frame, ContactParticleSet};
use crate::geometry::{count_penetrating, SignedDistanceField, SurfaceModel};
use crate::mechanics::RigidTransform;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    /// Penetrating points beyond the allowance.
    pub penetration: f64,
    /// Expected contact distance (m).
    pub consistency: f64,
    /// Expected deviation from equal and opposite forces (N).
    pub force: f64,
}

/// Which losses enter the pair score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LossMask {
    pub penetration: bool,
    pub consistency: bool,
    pub force: bool,
}

impl LossMask {
    pub const ALL: Self = Self { penetration: true, consistency: true, force: true };

    /// The seven non-empty subsets, singletons first.
    pub fn subsets() -> [Self; 7] {
        let m = |p, c, f| Self { penetration: p, consistency: c, force: f };
        [
            m(true, false, false),
            m(false, true, false),
            m(false, false, true),
            m(true, true, false),
            m(true, false, true),
            m(false, true, true),
            m(true, true, true),
        ]
    }

    pub fn is_empty(&self) -> bool {
        !(self.penetration || self.consistency || self.force)
    }
}

impl Default for LossMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for LossMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        if self.penetration {
            s.push('P');
        }
        if self.consistency {
            s.push('C');
        }
        if self.force {
            s.push('F');
        }
        f.write_str(&s)
    }
}

impl FromStr for LossMask {
    type Err = ScopeError;

    /// Letters from `{P, C, F}`, optionally comma separated: `"PCF"`, `"C"`,
    /// `"P,F"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut mask = Self { penetration: false, consistency: false, force: false };
        for ch in s.chars().filter(|c| !c.is_whitespace() && *c != ',' && *c != '+') {
            match ch.to_ascii_uppercase() {
                'P' => mask.penetration = true,
                'C' => mask.consistency = true,
                'F' => mask.force = true,
                _ => return Err(ScopeError::Params(format!("unknown loss {ch:?} in mask {s:?}"))),
            }
        }
        if mask.is_empty() {
            return Err(ScopeError::Params(format!("loss mask {s:?} selects nothing")));
        }
        Ok(mask)
    }
}

impl Serialize for LossMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LossMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// World-frame contact hypotheses of one arm: location, force on the object
/// and normalised weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldContacts {
    pub points: Vec<Point3<f64>>,
    pub forces: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl WorldContacts {
    /// Map a scored particle set of an object held at `object_in_ee` by an end
    /// effector at `ee_in_world`.
    pub fn from_set(set: &ContactParticleSet, ee_in_world: &RigidTransform, object_in_ee: &RigidTransform) -> Self {
        let object_in_world = ee_in_world.compose(object_in_ee);
        let mut points = Vec::with_capacity(set.len());
        let mut forces = Vec::with_capacity(set.len());
        let mut weights = Vec::with_capacity(set.len());
        for p in &set.particles {
            points.push(object_in_world.transform_point(&p.location));
            let frame = contact_frame(object_in_ee, &p.location, &p.normal);
            let f_c = p.qp.as_ref().map(|q| q.gamma_c.force).unwrap_or_else(Vector3::zeros);
            forces.push(ee_in_world.rotation * (frame.rotation * f_c));
            weights.push(p.likelihood);
        }
        Self { points, forces, weights }
    }
}

/// `max(0, N_PP − ε_PP)` with `N_PP` the poker surface points inside the tool.
pub fn penetration_loss(
    tool_sdf: &SignedDistanceField,
    tool_in_world: &RigidTransform,
    poker_surface: &SurfaceModel,
    poker_in_world: &RigidTransform,
    eps_pp: usize,
) -> f64 {
    let n = count_penetrating(tool_sdf, tool_in_world, poker_surface, poker_in_world);
    n.saturating_sub(eps_pp) as f64
}

/// `Σ_ij p_i t_j ‖p_i − t_j‖` over world-frame contact locations.
pub fn contact_consistency_loss(poker: &WorldContacts, tool: &WorldContacts) -> f64 {
    let mut total = 0.0;
    for (pp, pw) in poker.points.iter().zip(&poker.weights) {
        let mut row = 0.0;
        for (tp, tw) in tool.points.iter().zip(&tool.weights) {
            row += tw * (pp - tp).norm();
        }
        total += pw * row;
    }
    total
}

/// `Σ_ij p_i t_j ‖−p_F,i − t_F,j‖` over world-frame contact forces.
pub fn force_alignment_loss(poker: &WorldContacts, tool: &WorldContacts) -> f64 {
    let mut total = 0.0;
    for (pf, pw) in poker.forces.iter().zip(&poker.weights) {
        let mut row = 0.0;
        for (tf, tw) in tool.forces.iter().zip(&tool.weights) {
            row += tw * (pf + tf).norm();
        }
        total += pw * row;
    }
    total
}

/// `η_P L_P + η_C L_C + L_F` restricted to the masked losses.
pub fn score_opp(losses: &Losses, eta_p: f64, eta_c: f64, mask: &LossMask) -> f64 {
    let mut s = 0.0;
    if mask.penetration {
        s += eta_p * losses.penetration;
    }
    if mask.consistency {
        s += eta_c * losses.consistency;
    }
    if mask.force {
        s += losses.force;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn singleton(p: [f64; 3], f: [f64; 3]) -> WorldContacts {
        WorldContacts { points: vec![Point3::from(p)], forces: vec![Vector3::from(f)], weights: vec![1.0] }
    }

    fn random_set(data: &[([f64; 3], [f64; 3], f64)]) -> WorldContacts {
        let total: f64 = data.iter().map(|d| d.2).sum();
        WorldContacts {
            points: data.iter().map(|d| Point3::from(d.0)).collect(),
            forces: data.iter().map(|d| Vector3::from(d.1)).collect(),
            weights: data.iter().map(|d| d.2 / total).collect(),
        }
    }

    #[test]
    fn closed_forms() {
        let a = singleton([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let b = singleton([0.03, 0.0, 0.0], [0.0, 0.0, -1.0]);
        assert!((contact_consistency_loss(&a, &b) - 0.03).abs() < 1e-15);
        assert_eq!(force_alignment_loss(&a, &b), 0.0);
        assert_eq!(force_alignment_loss(&a, &a), 2.0);
        assert_eq!(contact_consistency_loss(&a, &a), 0.0);
    }

    #[test]
    fn score_weights_and_masks() {
        let l = Losses { penetration: 200.0, consistency: 0.01, force: 0.5 };
        assert!((score_opp(&l, 0.005, 20.0, &LossMask::ALL) - 1.7).abs() < 1e-12);
        assert_eq!(score_opp(&Losses::default(), 0.005, 20.0, &LossMask::ALL), 0.0);
        let c_only: LossMask = "C".parse().unwrap();
        assert!((score_opp(&l, 0.005, 20.0, &c_only) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mask_parsing() {
        assert_eq!("PCF".parse::<LossMask>().unwrap(), LossMask::ALL);
        assert_eq!("p,f".parse::<LossMask>().unwrap().to_string(), "PF");
        assert!("".parse::<LossMask>().is_err());
        assert!("PX".parse::<LossMask>().is_err());
        let names: Vec<String> = LossMask::subsets().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["P", "C", "F", "PC", "PF", "CF", "PCF"]);
    }

    proptest! {
        #[test]
        fn losses_match_naive_sums_and_are_symmetric(
            p in prop::collection::vec((prop::array::uniform3(-0.1f64..0.1), prop::array::uniform3(-10.0f64..10.0), 0.01f64..1.0), 1..12),
            t in prop::collection::vec((prop::array::uniform3(-0.1f64..0.1), prop::array::uniform3(-10.0f64..10.0), 0.01f64..1.0), 1..12),
        ) {
            let (a, b) = (random_set(&p), random_set(&t));
            let mut lc = 0.0;
            let mut lf = 0.0;
            for i in 0..a.points.len() {
                for j in 0..b.points.len() {
                    let w = a.weights[i] * b.weights[j];
                    let d = a.points[i] - b.points[j];
                    lc += w * (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
                    let s = -a.forces[i] - b.forces[j];
                    lf += w * (s.x * s.x + s.y * s.y + s.z * s.z).sqrt();
                }
            }
            let c = contact_consistency_loss(&a, &b);
            let f = force_alignment_loss(&a, &b);
            prop_assert!((c - lc).abs() <= 1e-12 * (1.0 + lc));
            prop_assert!((f - lf).abs() <= 1e-12 * (1.0 + lf));
            prop_assert!((contact_consistency_loss(&b, &a) - c).abs() <= 1e-12);
            prop_assert!((force_alignment_loss(&b, &a) - f).abs() <= 1e-12 * (1.0 + f));
        }

        #[test]
        fn score_is_monotone(
            base in prop::array::uniform3(0.0f64..100.0), bump in 0.0f64..10.0, which in 0usize..3,
        ) {
            let l = Losses { penetration: base[0], consistency: base[1], force: base[2] };
            let mut m = l;
            match which {
                0 => m.penetration += bump,
                1 => m.consistency += bump,
                _ => m.force += bump,
            }
            for mask in LossMask::subsets() {
                prop_assert!(score_opp(&m, 0.005, 20.0, &mask) >= score_opp(&l, 0.005, 20.0, &mask));
            }
        }
    }
}
