//! Brute-force evaluation of template semantics over every scene object,
//! written separately from the generator.

use super::{Direction, RowEnd, Semantics, SizeExtreme, CONE_HALF_ANGLE, ROW_GAP, ROW_MIN_LEN, ROW_Y_TOLERANCE, SUPERLATIVE_MARGIN, TOP_ROW_MARGIN};
use crate::error::{Error, Result};
use crate::grid::{Scene, WorldPoint};

/// All maximal rows of `type_id`, by exhaustive enumeration of subsets of
/// that type. Each row is a list of scene indices in ascending x.
pub fn oracle_rows(scene: &Scene, type_id: usize, cell: f64) -> Result<Vec<Vec<usize>>> {
    let members: Vec<usize> = (0..scene.objects.len())
        .filter(|&k| scene.objects[k].type_id == type_id)
        .collect();
    if members.len() > 16 {
        return Err(Error::Range(format!("{} objects of one type is too many to enumerate", members.len())));
    }
    let n = members.len();
    let mut valid: Vec<u32> = Vec::new();
    for mask in 0u32..(1 << n) {
        if (mask.count_ones() as usize) < ROW_MIN_LEN {
            continue;
        }
        let mut idx: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| members[b]).collect();
        idx.sort_by(|&a, &b| scene.objects[a].position.x.total_cmp(&scene.objects[b].position.x));
        let xs: Vec<f64> = idx.iter().map(|&k| scene.objects[k].position.x).collect();
        let gaps_ok = xs.windows(2).all(|w| {
            let gap = w[1] - w[0];
            gap >= ROW_GAP.0 * cell && gap <= ROW_GAP.1 * cell
        });
        if !gaps_ok {
            continue;
        }
        let ys: Vec<f64> = idx.iter().map(|&k| scene.objects[k].position.y).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        if ys.iter().all(|y| (y - mean).abs() <= ROW_Y_TOLERANCE * cell) {
            valid.push(mask);
        }
    }
    let maximal: Vec<u32> = valid
        .iter()
        .copied()
        .filter(|&m| !valid.iter().any(|&o| o != m && o & m == m))
        .collect();
    let mut rows: Vec<Vec<usize>> = maximal
        .iter()
        .map(|&mask| {
            let mut idx: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).map(|b| members[b]).collect();
            idx.sort_by(|&a, &b| scene.objects[a].position.x.total_cmp(&scene.objects[b].position.x));
            idx
        })
        .collect();
    rows.sort();
    Ok(rows)
}

fn unsatisfied(what: &str) -> Error {
    Error::Ambiguous(format!("no object satisfies {what}"))
}

/// Gold start location for `semantics` on `scene`, checking every object.
/// Errors when no object or more than one object qualifies.
pub fn oracle_gold(semantics: &Semantics, scene: &Scene, cell: f64) -> Result<WorldPoint> {
    scene.validate()?;
    let objs = &scene.objects;
    match *semantics {
        Semantics::SuperlativeSize { target, extreme } => {
            let better = |a: f64, b: f64| match extreme {
                SizeExtreme::Largest => a > b,
                SizeExtreme::Smallest => a < b,
            };
            let mut best: Option<usize> = None;
            for (k, o) in objs.iter().enumerate() {
                if o.type_id == target && best.map_or(true, |b| better(o.size, objs[b].size)) {
                    best = Some(k);
                }
            }
            let b = best.ok_or_else(|| unsatisfied("superlative"))?;
            for (k, o) in objs.iter().enumerate() {
                if k != b && o.type_id == target && (o.size - objs[b].size).abs() < SUPERLATIVE_MARGIN {
                    return Err(Error::Ambiguous(format!("sizes {} and {} are too close", o.size, objs[b].size)));
                }
            }
            Ok(objs[b].position)
        }
        Semantics::RowExtreme { target, end } => {
            let rows = oracle_rows(scene, target, cell)?;
            match rows.as_slice() {
                [] => Err(unsatisfied("row")),
                [row] => Ok(objs[match end {
                    RowEnd::Leftmost => row[0],
                    RowEnd::Rightmost => *row.last().unwrap(),
                }]
                .position),
                _ => Err(Error::Ambiguous(format!("{} rows of the target type", rows.len()))),
            }
        }
        Semantics::RowOrdinal { target, ordinal } => {
            let rows = oracle_rows(scene, target, cell)?;
            let mean = |r: &Vec<usize>| r.iter().map(|&k| objs[k].position.y).sum::<f64>() / r.len() as f64;
            let mut top: Option<usize> = None;
            for (i, r) in rows.iter().enumerate() {
                if top.map_or(true, |t| mean(r) > mean(&rows[t])) {
                    top = Some(i);
                }
            }
            let t = top.ok_or_else(|| unsatisfied("top row"))?;
            for (i, r) in rows.iter().enumerate() {
                if i != t && mean(&rows[t]) - mean(r) < TOP_ROW_MARGIN * cell {
                    return Err(Error::Ambiguous("two rows compete for top".into()));
                }
            }
            let row = &rows[t];
            if ordinal == 0 || ordinal > row.len() {
                return Err(unsatisfied("ordinal"));
            }
            Ok(objs[row[ordinal - 1]].position)
        }
        Semantics::RelativeDir { target, anchor, direction } => {
            let anchors: Vec<usize> = (0..objs.len()).filter(|&k| objs[k].type_id == anchor).collect();
            let [a] = anchors[..] else {
                return Err(Error::Ambiguous(format!("{} anchor objects", anchors.len())));
            };
            let axis_angle = match direction {
                Direction::Right => 0.0f64,
                Direction::Above => 90.0,
                Direction::Left => 180.0,
                Direction::Below => -90.0,
            };
            let origin = objs[a].position;
            let in_cone: Vec<usize> = (0..objs.len())
                .filter(|&k| objs[k].type_id == target && k != a)
                .filter(|&k| {
                    let p = objs[k].position;
                    let angle = (p.y - origin.y).atan2(p.x - origin.x).to_degrees();
                    let diff = (angle - axis_angle + 540.0).rem_euclid(360.0) - 180.0;
                    diff.abs() <= CONE_HALF_ANGLE
                })
                .collect();
            match in_cone[..] {
                [] => Err(unsatisfied("direction")),
                [k] => Ok(objs[k].position),
                _ => Err(Error::Ambiguous(format!("{} candidates in the cone", in_cone.len()))),
            }
        }
    }
}
