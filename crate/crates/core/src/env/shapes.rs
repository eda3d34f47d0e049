use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{centroid, convex_hull, is_convex_ccw, signed_area, Vec2};

pub const MIN_VERTICES: usize = 3;
pub const MAX_VERTICES: usize = 8;
pub const MIN_AREA: f64 = 1e-4;

/// Number of procedural shapes and the size of the training split.
pub const SHAPE_BANK_SIZE: u64 = 1000;
pub const SHAPE_TRAIN_SPLIT: u64 = 800;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDescriptor {
    /// Counter-clockwise convex polygon centred on its centroid (m).
    pub vertices: Vec<Vec2>,
    pub mass: f64,
    pub friction: f64,
}

impl ShapeDescriptor {
    /// Axis-aligned square with side `side`.
    pub fn cube(side: f64, mass: f64, friction: f64) -> Self {
        let h = side / 2.0;
        Self {
            vertices: vec![
                Vec2::new(-h, -h),
                Vec2::new(h, -h),
                Vec2::new(h, h),
                Vec2::new(-h, h),
            ],
            mass,
            friction,
        }
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Convex, counter-clockwise, 3..=8 vertices, area above `MIN_AREA`.
    pub fn is_valid(&self) -> bool {
        (MIN_VERTICES..=MAX_VERTICES).contains(&self.vertices.len())
            && is_convex_ccw(&self.vertices)
            && self.area() > MIN_AREA
            && self.mass > 0.0
    }

    /// Largest vertex distance from the centroid.
    pub fn radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.length())
            .fold(0.0, f64::max)
    }
}

/// Draws a random convex polygon: jittered angles around a circle, jittered
/// radii, then the convex hull re-centred on its centroid.
pub fn sample_shape<R: Rng + ?Sized>(rng: &mut R) -> ShapeDescriptor {
    loop {
        let n = rng.random_range(MIN_VERTICES..=MAX_VERTICES);
        let scale = rng.random_range(0.025..0.045);
        let step = std::f64::consts::TAU / n as f64;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let pts: Vec<Vec2> = (0..n)
            .map(|k| {
                let a = phase + step * k as f64 + rng.random_range(-0.3..0.3) * step;
                Vec2::from_polar(scale * rng.random_range(0.75..1.0), a)
            })
            .collect();
        let hull = convex_hull(&pts);
        if hull.len() < MIN_VERTICES {
            continue;
        }
        let c = centroid(&hull);
        let vertices: Vec<Vec2> = hull.into_iter().map(|v| v - c).collect();
        let shape = ShapeDescriptor {
            vertices,
            mass: rng.random_range(0.1..0.5),
            friction: 0.5,
        };
        if shape.is_valid() {
            return shape;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeSplit {
    Train,
    Eval,
}

impl ShapeSplit {
    pub fn range(self) -> std::ops::Range<u64> {
        match self {
            ShapeSplit::Train => 0..SHAPE_TRAIN_SPLIT,
            ShapeSplit::Eval => SHAPE_TRAIN_SPLIT..SHAPE_BANK_SIZE,
        }
    }
}

/// Shape `index` of the bank generated from `master_seed`. Each index has
/// its own ChaCha stream, so shapes can be drawn without materialising the
/// whole bank.
pub fn bank_shape(master_seed: u64, index: u64) -> ShapeDescriptor {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    sample_shape(&mut rng)
}
