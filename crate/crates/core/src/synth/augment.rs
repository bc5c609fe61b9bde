//! Label-preserving variants of generated records for training.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{oracle_gold, oracle_rows, Direction, Record, Region, RowEnd, Semantics, ORDINALS};
use crate::error::Result;
use crate::grid::{Scene, WorldPoint};
use crate::rng::Rng;

fn mirror_semantics(sem: Semantics, scene: &Scene, gold: WorldPoint, cell: f64) -> Result<Option<Semantics>> {
    Ok(Some(match sem {
        Semantics::SuperlativeSize { .. } => sem,
        Semantics::RowExtreme { target, end } => Semantics::RowExtreme {
            target,
            end: match end {
                RowEnd::Leftmost => RowEnd::Rightmost,
                RowEnd::Rightmost => RowEnd::Leftmost,
            },
        },
        Semantics::RowOrdinal { target, ordinal } => {
            let rows = oracle_rows(scene, target, cell)?;
            let Some(row) = rows.iter().find(|r| r.iter().any(|&k| scene.objects[k].position == gold)) else {
                return Ok(None);
            };
            let flipped = row.len() + 1 - ordinal;
            if flipped == 0 || flipped > ORDINALS.len() {
                return Ok(None);
            }
            Semantics::RowOrdinal {
                target,
                ordinal: flipped,
            }
        }
        Semantics::RelativeDir {
            target,
            anchor,
            direction,
        } => Semantics::RelativeDir {
            target,
            anchor,
            direction: match direction {
                Direction::Left => Direction::Right,
                Direction::Right => Direction::Left,
                d => d,
            },
        },
    }))
}

fn relabel(sem: Semantics, perm: &[usize]) -> Semantics {
    match sem {
        Semantics::SuperlativeSize { target, extreme } => Semantics::SuperlativeSize {
            target: perm[target],
            extreme,
        },
        Semantics::RowExtreme { target, end } => Semantics::RowExtreme {
            target: perm[target],
            end,
        },
        Semantics::RowOrdinal { target, ordinal } => Semantics::RowOrdinal {
            target: perm[target],
            ordinal,
        },
        Semantics::RelativeDir {
            target,
            anchor,
            direction,
        } => Semantics::RelativeDir {
            target: perm[target],
            anchor: perm[anchor],
            direction,
        },
    }
}

/// Whole-cell offsets in `lo..=hi` keeping `[min, max]` inside `[r_min, r_max]`.
fn cell_shift(rng: &mut Rng, min: f64, max: f64, r_min: f64, r_max: f64, cell: f64) -> f64 {
    let lo = ((r_min - min) / cell).ceil() as i64;
    let hi = ((r_max - max) / cell).floor() as i64;
    if lo > hi {
        return 0.0;
    }
    rng.gen_range(lo..=hi) as f64 * cell
}

/// A random relabeling of object types, optional left-right mirror about the
/// region center, and whole-cell translation within `region`, applied to
/// scene, instruction and gold together. `None` when the record carries no
/// semantics or the variant does not reproduce its gold under the oracle.
pub fn augment_record(record: &Record, region: &Region, cell: f64, rng: &mut Rng) -> Result<Option<Record>> {
    let Some(sem) = record.semantics else {
        return Ok(None);
    };
    let scene = record.scene()?;
    let n = record.catalog.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);

    let mut sem = relabel(sem, &perm);
    let mut mirror = rng.gen_bool(0.5);
    if mirror {
        match mirror_semantics(sem, &scene, record.gold_start, cell)? {
            Some(s) => sem = s,
            None => mirror = false,
        }
    }
    let center = region.x_min + region.x_max;
    let flip = |p: WorldPoint| if mirror { WorldPoint::new(center - p.x, p.y) } else { p };

    let flipped: Vec<WorldPoint> = scene.objects.iter().map(|o| flip(o.position)).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &flipped {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let dx = cell_shift(rng, x0, x1, region.x_min, region.x_max, cell);
    let dy = cell_shift(rng, y0, y1, region.y_min, region.y_max, cell);
    let map = |p: WorldPoint| {
        let f = flip(p);
        WorldPoint::new(f.x + dx, f.y + dy)
    };

    let mut out = record.clone();
    for o in &mut out.objects {
        o.type_id = perm[o.type_id];
        o.position = map(o.position);
    }
    out.gold_start = map(record.gold_start);
    out.gold_end = record.gold_end.map(map);
    out.semantics = Some(sem);
    out.instruction = sem.render(&record.catalog)?;
    let new_scene = out.scene()?;
    if !new_scene.objects.iter().all(|o| o.position.in_bounds()) {
        return Ok(None);
    }
    match oracle_gold(&sem, &new_scene, cell) {
        Ok(g) if g == out.gold_start => Ok(Some(out)),
        _ => Ok(None),
    }
}
