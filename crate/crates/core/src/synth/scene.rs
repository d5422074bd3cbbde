//! Random axis-aligned rooms with boxes on the floor.
//!
//! World frame: origin at the room center, z up. Every room plane therefore
//! has a non-zero offset and fits the `p = n·d` encoding.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{PlaneParams, RigidTransform};
use crate::error::{invalid, Result};

pub const CLASS_FLOOR: u32 = 0;
pub const CLASS_CEILING: u32 = 1;
pub const CLASS_WALL: u32 = 2;
/// Box classes are drawn from `CLASS_BOX_FIRST..CLASS_BOX_FIRST + BOX_CLASSES`.
pub const CLASS_BOX_FIRST: u32 = 3;
pub const BOX_CLASSES: u32 = 3;
pub const N_CLASSES: usize = (CLASS_BOX_FIRST + BOX_CLASSES) as usize;

/// Instance ids `1..=ROOM_INSTANCES` are the room shell (floor, ceiling, walls).
pub const ROOM_INSTANCES: u16 = 6;

const MIN_ALBEDO_DIST: f64 = 0.1;
const MAX_BOX_HEIGHT: f64 = 1.0;
const CAMERA_HEIGHT: (f64, f64) = (1.2, 1.8);
const WALL_MARGIN: f64 = 0.6;

/// Planar rectangle with corners `a, b, c, d` in order around the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneRect {
    pub plane: PlaneParams,
    pub corners: [[f64; 3]; 4],
    pub class_id: u32,
    pub instance_id: u16,
    pub albedo: [f64; 3],
}

impl PlaneRect {
    fn new(corners: [Vector3<f64>; 4], class_id: u32, instance_id: u16, albedo: [f64; 3]) -> Result<Self> {
        let n = (corners[1] - corners[0]).cross(&(corners[3] - corners[0]));
        let plane = PlaneParams::from_signed(&n, n.normalize().dot(&corners[0]))?;
        Ok(Self { plane, corners: corners.map(|c| [c.x, c.y, c.z]), class_id, instance_id, albedo })
    }

    pub fn corner(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.corners[i])
    }

    /// Whether a point on the plane lies inside the rectangle (edges included).
    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        const TOL: f64 = 1e-9;
        let a = self.corner(0);
        let e1 = self.corner(1) - a;
        let e2 = self.corner(3) - a;
        let r = x - a;
        let s1 = r.dot(&e1) / e1.norm_squared();
        let s2 = r.dot(&e2) / e2.norm_squared();
        (-TOL..=1.0 + TOL).contains(&s1) && (-TOL..=1.0 + TOL).contains(&s2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarScene {
    pub rects: Vec<PlaneRect>,
    pub seed: u64,
    /// Room extents along x, y, z (meters).
    pub room: [f64; 3],
    /// Boxes as `(min corner, max corner)`.
    pub boxes: Vec<([f64; 3], [f64; 3])>,
}

impl PlanarScene {
    pub fn class_of(&self, instance: u16) -> Option<u32> {
        self.rects.iter().find(|r| r.instance_id == instance).map(|r| r.class_id)
    }

    fn floor_z(&self) -> f64 {
        -self.room[2] / 2.0
    }

    /// Whether a point is strictly inside the room and outside every box.
    pub fn is_free(&self, x: &Vector3<f64>) -> bool {
        let half = Vector3::from(self.room) / 2.0;
        let in_room = (0..3).all(|i| x[i].abs() < half[i]);
        in_room && !self.boxes.iter().any(|(lo, hi)| (0..3).all(|i| x[i] >= lo[i] && x[i] <= hi[i]))
    }

    /// Random world→camera pose inside the room, looking at a box when there is
    /// one (so boxes are usually on screen) and otherwise at a floor point.
    pub fn random_pose(&self, seed: u64) -> Result<RigidTransform> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let half = Vector3::from(self.room) / 2.0;
        for _ in 0..100 {
            let center = Vector3::new(
                rng.random_range(-half.x + WALL_MARGIN..half.x - WALL_MARGIN),
                rng.random_range(-half.y + WALL_MARGIN..half.y - WALL_MARGIN),
                self.floor_z() + rng.random_range(CAMERA_HEIGHT.0..CAMERA_HEIGHT.1),
            );
            let target = if self.boxes.is_empty() {
                Vector3::new(
                    rng.random_range(-half.x + 0.5..half.x - 0.5),
                    rng.random_range(-half.y + 0.5..half.y - 0.5),
                    self.floor_z(),
                )
            } else {
                let (lo, hi) = self.boxes[rng.random_range(0..self.boxes.len())];
                (Vector3::from(lo) + Vector3::from(hi)) / 2.0
            };
            let forward = target - center;
            let horizontal = (forward.x * forward.x + forward.y * forward.y).sqrt();
            // Keep the view mostly horizontal so walls and floor both show.
            if horizontal < 1.0 || -forward.z > horizontal {
                continue;
            }
            return RigidTransform::look_at(&center, &forward, &Vector3::z());
        }
        Err(invalid("could not place a camera in the room"))
    }
}

fn random_albedo(rng: &mut ChaCha8Rng, taken: &[[f64; 3]]) -> [f64; 3] {
    loop {
        let c = [rng.random_range(0.15..0.95), rng.random_range(0.15..0.95), rng.random_range(0.15..0.95)];
        let far = taken
            .iter()
            .all(|t| t.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) >= MIN_ALBEDO_DIST);
        if far {
            return c;
        }
    }
}

/// Faces of the axis-aligned box `[lo, hi]`, each as 4 ordered corners.
fn box_faces(lo: &Vector3<f64>, hi: &Vector3<f64>) -> [[Vector3<f64>; 4]; 6] {
    let p = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
    let (a, b) = (lo, hi);
    [
        [p(a.x, a.y, a.z), p(b.x, a.y, a.z), p(b.x, b.y, a.z), p(a.x, b.y, a.z)],
        [p(a.x, a.y, b.z), p(b.x, a.y, b.z), p(b.x, b.y, b.z), p(a.x, b.y, b.z)],
        [p(a.x, a.y, a.z), p(b.x, a.y, a.z), p(b.x, a.y, b.z), p(a.x, a.y, b.z)],
        [p(a.x, b.y, a.z), p(b.x, b.y, a.z), p(b.x, b.y, b.z), p(a.x, b.y, b.z)],
        [p(a.x, a.y, a.z), p(a.x, b.y, a.z), p(a.x, b.y, b.z), p(a.x, a.y, b.z)],
        [p(b.x, a.y, a.z), p(b.x, b.y, a.z), p(b.x, b.y, b.z), p(b.x, a.y, b.z)],
    ]
}

/// Deterministic room of random size plus `n_boxes` non-overlapping boxes.
pub fn generate_scene(seed: u64, n_boxes: usize) -> PlanarScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = [rng.random_range(4.0..6.0), rng.random_range(4.0..6.0), rng.random_range(2.6..3.0)];
    let half = Vector3::from(room) / 2.0;
    let mut albedos: Vec<[f64; 3]> = Vec::new();
    let mut rects = Vec::new();
    let mut next_id = 1u16;
    let mut push = |corners, class, rng: &mut ChaCha8Rng, rects: &mut Vec<PlaneRect>| {
        let albedo = random_albedo(rng, &albedos);
        albedos.push(albedo);
        // Room and box planes never pass through the world origin by construction.
        rects.push(PlaneRect::new(corners, class, next_id, albedo).expect("plane off the origin"));
        next_id += 1;
    };

    let shell = box_faces(&-half, &half);
    push(shell[0], CLASS_FLOOR, &mut rng, &mut rects);
    push(shell[1], CLASS_CEILING, &mut rng, &mut rects);
    for face in &shell[2..] {
        push(*face, CLASS_WALL, &mut rng, &mut rects);
    }

    let mut boxes: Vec<([f64; 3], [f64; 3])> = Vec::new();
    while boxes.len() < n_boxes {
        let size = Vector3::new(
            rng.random_range(0.4..1.0),
            rng.random_range(0.4..1.0),
            rng.random_range(0.3..MAX_BOX_HEIGHT),
        );
        let x = rng.random_range(-half.x + 0.3..half.x - 0.3 - size.x);
        let y = rng.random_range(-half.y + 0.3..half.y - 0.3 - size.y);
        let lo = Vector3::new(x, y, -half.z);
        let hi = lo + size;
        // Side planes through the world origin cannot be encoded; keep them off it.
        let near_origin = [lo.x, lo.y, hi.x, hi.y].iter().any(|v| v.abs() < 0.02);
        let overlaps = boxes.iter().any(|(blo, bhi)| {
            lo.x < bhi[0] + 0.1 && blo[0] < hi.x + 0.1 && lo.y < bhi[1] + 0.1 && blo[1] < hi.y + 0.1
        });
        if near_origin || overlaps {
            continue;
        }
        let class = CLASS_BOX_FIRST + rng.random_range(0..BOX_CLASSES);
        for face in box_faces(&lo, &hi) {
            push(face, class, &mut rng, &mut rects);
        }
        boxes.push(([lo.x, lo.y, lo.z], [hi.x, hi.y, hi.z]));
    }
    PlanarScene { rects, seed, room, boxes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_determinism() {
        assert_eq!(generate_scene(1, 0).rects.len(), 6);
        assert_eq!(generate_scene(1, 2).rects.len(), 18);
        assert_eq!(generate_scene(1, 3), generate_scene(1, 3));
        assert_ne!(generate_scene(1, 3), generate_scene(2, 3));
    }

    #[test]
    fn corners_lie_on_their_plane() {
        for seed in 0..10 {
            for r in generate_scene(seed, 3).rects {
                for i in 0..4 {
                    assert!(r.plane.residual(&r.corner(i)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ids_unique_and_albedos_separated() {
        let s = generate_scene(4, 4);
        for (i, a) in s.rects.iter().enumerate() {
            assert_eq!(a.instance_id as usize, i + 1);
            for b in &s.rects[i + 1..] {
                let d = a.albedo.iter().zip(&b.albedo).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(d >= MIN_ALBEDO_DIST);
            }
        }
        let classes: Vec<u32> = s.rects[..6].iter().map(|r| r.class_id).collect();
        assert_eq!(classes, vec![0, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn cameras_sit_above_boxes_inside_the_room() {
        let s = generate_scene(7, 3);
        for k in 0..20 {
            let c = s.random_pose(k).unwrap().center();
            assert!(s.is_free(&c));
            assert!(c.z > s.floor_z() + MAX_BOX_HEIGHT);
        }
    }
}
