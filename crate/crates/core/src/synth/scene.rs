use rand::Rng as _;

use super::{DataConfig, CATALOG, MIN_SEPARATION};
use crate::error::{Error, Result};
use crate::grid::{ObjectInstance, Scene, WorldPoint};
use crate::rng::Rng;

fn sample_size(rng: &mut Rng) -> f64 {
    rng.gen_range(1.0..=3.0)
}

fn separated(objects: &[ObjectInstance], p: WorldPoint, min_dist: f64) -> bool {
    objects.iter().all(|o| o.position.dist_sq(&p) >= min_dist * min_dist)
}

/// Adds random objects to `objects` until there are `total`, respecting
/// the separation rule and the per-type cap.
fn fill(cfg: &DataConfig, rng: &mut Rng, mut objects: Vec<ObjectInstance>, total: usize, seed: u64) -> Result<Scene> {
    let min_dist = MIN_SEPARATION * cfg.cell();
    let r = cfg.region;
    let mut counts = [0usize; CATALOG.len()];
    for o in &objects {
        counts[o.type_id] += 1;
    }
    let mut budget = 1000usize;
    while objects.len() < total {
        let open: Vec<usize> = (0..CATALOG.len()).filter(|&t| counts[t] < cfg.max_per_type).collect();
        let type_id = open[rng.gen_range(0..open.len())];
        let position = loop {
            if budget == 0 {
                return Err(Error::Generation {
                    seed,
                    message: "placement budget exhausted".into(),
                });
            }
            budget -= 1;
            let p = WorldPoint::new(rng.gen_range(r.x_min..=r.x_max), rng.gen_range(r.y_min..=r.y_max));
            if separated(&objects, p, min_dist) {
                break p;
            }
        };
        counts[type_id] += 1;
        objects.push(ObjectInstance {
            type_id,
            position,
            size: sample_size(rng),
        });
    }
    Scene::new(CATALOG.len(), objects)
}

/// Random scene: object count uniform in the configured range, positions
/// uniform in the region with minimum separation, sizes uniform in [1, 3].
pub fn sample_scene(cfg: &DataConfig, rng: &mut Rng, seed: u64) -> Result<Scene> {
    let total = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    fill(cfg, rng, Vec::new(), total, seed)
}

/// Scene containing a planted row of 3 to 5 objects of `type_id`, filled up
/// with random objects. The caller still has to detect rows; other objects
/// may extend or duplicate the planted one.
pub fn plant_row(cfg: &DataConfig, rng: &mut Rng, type_id: usize, seed: u64) -> Result<Scene> {
    let cw = cfg.cell();
    let r = cfg.region;
    let n = rng.gen_range(3..=5usize.min(cfg.max_per_type));
    if n < 3 {
        return Err(Error::Generation {
            seed,
            message: "per-type cap too small for a row".into(),
        });
    }
    let gaps: Vec<f64> = (1..n).map(|_| rng.gen_range(1.7..=3.8) * cw).collect();
    let length: f64 = gaps.iter().sum();
    let jitter = 0.2 * cw;
    if length > r.x_max - r.x_min || 2.0 * jitter > r.y_max - r.y_min {
        return Err(Error::Generation {
            seed,
            message: "row does not fit the region".into(),
        });
    }
    let x0 = rng.gen_range(r.x_min..=r.x_max - length);
    let y0 = rng.gen_range(r.y_min + jitter..=r.y_max - jitter);
    let mut x = x0;
    let mut objects = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            x += gaps[k - 1];
        }
        objects.push(ObjectInstance {
            type_id,
            position: WorldPoint::new(x.min(r.x_max), y0 + rng.gen_range(-jitter..=jitter)),
            size: sample_size(rng),
        });
    }
    let total = rng.gen_range(cfg.min_objects.max(n)..=cfg.max_objects.max(n));
    fill(cfg, rng, objects, total, seed)
}
