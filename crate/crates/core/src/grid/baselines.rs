use rand::Rng as _;

use super::WorldPoint;
use crate::rng::Rng;

/// Always the middle of the table.
pub fn baseline_center() -> WorldPoint {
    WorldPoint::ORIGIN
}

/// Uniform on [-1, 1]².
pub fn baseline_random(rng: &mut Rng) -> WorldPoint {
    WorldPoint::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
}
