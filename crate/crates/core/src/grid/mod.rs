//! World model, world/pixel transforms, binary-grid scene encoding and the
//! evaluation metrics.
//!
//! Axis convention: grid index `i` runs along world `x` and `j` along world
//! `y`, both 1-based in the public contract. Dense buffers are laid out
//! `[i][j]` (i major), 0-based.

mod baselines;
mod encode;
mod metrics;

pub use baselines::{baseline_center, baseline_random};
pub use encode::{encode_grid, GridEncoding};
pub use metrics::{compute_mse, compute_ta, MetricsReport, SampleOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 32;

/// A point in world units; the table spans [-1, 1] on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const ORIGIN: WorldPoint = WorldPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        WorldPoint { x, y }
    }

    pub fn in_bounds(&self) -> bool {
        (-1.0..=1.0).contains(&self.x) && (-1.0..=1.0).contains(&self.y)
    }

    pub fn dist_sq(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).powi(2) + (self.y - other.y).powi(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub type_id: usize,
    pub position: WorldPoint,
    pub size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub catalog_size: usize,
    pub objects: Vec<ObjectInstance>,
}

impl Scene {
    pub fn new(catalog_size: usize, objects: Vec<ObjectInstance>) -> Result<Self> {
        let scene = Scene { catalog_size, objects };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, o) in self.objects.iter().enumerate() {
            if o.type_id >= self.catalog_size {
                return Err(Error::Range(format!(
                    "object {k} has type {} but the catalog has {} types",
                    o.type_id, self.catalog_size
                )));
            }
            if !o.position.in_bounds() || !o.position.x.is_finite() || !o.position.y.is_finite() {
                return Err(Error::Range(format!("object {k} at {:?} is off the table", o.position)));
            }
            if !(o.size > 0.0 && o.size.is_finite()) {
                return Err(Error::Range(format!("object {k} has size {}", o.size)));
            }
        }
        Ok(())
    }

    pub fn count_of(&self, type_id: usize) -> usize {
        self.objects.iter().filter(|o| o.type_id == type_id).count()
    }
}

/// 1-based cell `(i, j)` containing a world point:
/// `i = min(W, floor((x + 1) / 2 · W) + 1)`, likewise `j` with `y` and `H`.
pub fn world_to_pixel(p: WorldPoint, w: usize, h: usize) -> Result<(usize, usize)> {
    if !p.in_bounds() {
        return Err(Error::Range(format!("point ({}, {}) outside [-1, 1]²", p.x, p.y)));
    }
    let cell = |v: f64, n: usize| (((v + 1.0) / 2.0 * n as f64).floor() as usize + 1).min(n);
    Ok((cell(p.x, w), cell(p.y, h)))
}

/// World coordinates of a real-valued 1-based cell position, mapping integer
/// indices to cell centers: `x = 2 (i - 0.5) / W - 1`.
pub fn pixel_to_world(i: f64, j: f64, w: usize, h: usize) -> WorldPoint {
    WorldPoint {
        x: 2.0 * (i - 0.5) / w as f64 - 1.0,
        y: 2.0 * (j - 0.5) / h as f64 - 1.0,
    }
}

/// Width of one grid cell in world units.
pub fn cell_width(cells: usize) -> f64 {
    2.0 / cells as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn world_to_pixel_examples() {
        assert_eq!(world_to_pixel(WorldPoint::new(-1.0, -1.0), 4, 4).unwrap(), (1, 1));
        assert_eq!(world_to_pixel(WorldPoint::new(0.0, 0.0), 4, 4).unwrap(), (3, 3));
        assert_eq!(world_to_pixel(WorldPoint::new(1.0, 1.0), 4, 4).unwrap(), (4, 4));
        assert!(matches!(world_to_pixel(WorldPoint::new(1.01, 0.0), 4, 4), Err(Error::Range(_))));
    }

    #[test]
    fn axes_are_not_swapped() {
        // x picks i, y picks j.
        assert_eq!(world_to_pixel(WorldPoint::new(-0.9, 0.9), 4, 8).unwrap(), (1, 8));
        let p = pixel_to_world(1.0, 8.0, 4, 8);
        assert!(p.x < 0.0 && p.y > 0.0);
    }

    #[test]
    fn pixel_to_world_examples() {
        assert_eq!(pixel_to_world(2.5, 2.5, 4, 4), WorldPoint::new(0.0, 0.0));
        assert_eq!(pixel_to_world(16.5, 16.5, 32, 32), WorldPoint::new(0.0, 0.0));
        assert_eq!(pixel_to_world(1.0, 1.0, 4, 4).x, -0.75);
    }

    #[test]
    fn round_trip_within_one_cell_sweep() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(99);
        for &w in &[4usize, 16, 32] {
            for _ in 0..1000 {
                let p = WorldPoint::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                let (i, j) = world_to_pixel(p, w, w).unwrap();
                let q = pixel_to_world(i as f64, j as f64, w, w);
                assert!((q.x - p.x).abs() <= 1.0 / w as f64 + 1e-12);
                assert!((q.y - p.y).abs() <= 1.0 / w as f64 + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn shifting_by_whole_cells_shifts_the_index(
            cell in 2usize..=20,
            frac in 0.05f64..0.95,
            k in 1usize..=8,
        ) {
            let w = 32;
            let cw = cell_width(w);
            let x = -1.0 + (cell as f64 - 1.0 + frac) * cw;
            let (i0, _) = world_to_pixel(WorldPoint::new(x, 0.0), w, w).unwrap();
            let (i1, _) = world_to_pixel(WorldPoint::new(x + k as f64 * cw, 0.0), w, w).unwrap();
            prop_assert_eq!(i0, cell);
            prop_assert_eq!(i1, cell + k);
        }
    }
}
