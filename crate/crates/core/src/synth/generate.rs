use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{
    catalog_names, plant_row, sample_scene, DataConfig, Direction, Record, RowEnd, Semantics, SizeExtreme, Split,
    TemplateId, CATALOG, CONE_HALF_ANGLE, ORDINALS, ROW_GAP, ROW_MIN_LEN, ROW_Y_TOLERANCE, SUPERLATIVE_MARGIN,
    TOP_ROW_MARGIN,
};
use crate::error::{Error, Result};
use crate::grid::{ObjectInstance, Scene, WorldPoint};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Cone classification margin, degrees. Objects this close to the cone
/// boundary make a record ambiguous to a reader, so the generator rejects.
const CONE_MARGIN: f64 = 5.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Record>,
    pub dev: Vec<Record>,
    pub test: Vec<Record>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Record] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Rows of `type_id` found by growing x-ordered chains: every chain whose
/// consecutive gaps are legal is a candidate, the y rule is checked on each,
/// and candidates contained in a larger row are dropped. Each row is a list
/// of scene indices in ascending x.
pub fn rows_by_chains(objects: &[ObjectInstance], type_id: usize, cell: f64) -> Vec<Vec<usize>> {
    let mut members: Vec<usize> = (0..objects.len()).filter(|&k| objects[k].type_id == type_id).collect();
    members.sort_by(|&a, &b| objects[a].position.x.total_cmp(&objects[b].position.x).then(a.cmp(&b)));
    let (lo, hi) = (ROW_GAP.0 * cell, ROW_GAP.1 * cell);
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..members.len()).map(|p| vec![p]).collect();
    while let Some(chain) = stack.pop() {
        let last = *chain.last().unwrap();
        let last_x = objects[members[last]].position.x;
        for next in last + 1..members.len() {
            let gap = objects[members[next]].position.x - last_x;
            if gap >= lo && gap <= hi {
                let mut longer = chain.clone();
                longer.push(next);
                stack.push(longer);
            }
        }
        if chain.len() >= ROW_MIN_LEN {
            let ys: Vec<f64> = chain.iter().map(|&p| objects[members[p]].position.y).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            if ys.iter().all(|y| (y - mean).abs() <= ROW_Y_TOLERANCE * cell) {
                found.push(chain.iter().map(|&p| members[p]).collect());
            }
        }
    }
    let contains = |big: &[usize], small: &[usize]| small.iter().all(|s| big.contains(s));
    let mut rows: Vec<Vec<usize>> = found
        .iter()
        .filter(|r| !found.iter().any(|o| o.len() > r.len() && contains(o, r)))
        .cloned()
        .collect();
    rows.sort();
    rows
}

fn mean_y(objects: &[ObjectInstance], row: &[usize]) -> f64 {
    row.iter().map(|&k| objects[k].position.y).sum::<f64>() / row.len() as f64
}

enum Cone {
    Inside,
    Outside,
    Border,
}

fn cone_class(anchor: WorldPoint, p: WorldPoint, direction: Direction) -> Cone {
    let (ax, ay) = direction.axis();
    let (dx, dy) = (p.x - anchor.x, p.y - anchor.y);
    let along = dx * ax + dy * ay;
    let across = (dx * ay - dy * ax).abs();
    let inner = (CONE_HALF_ANGLE - CONE_MARGIN).to_radians().tan();
    let outer = (CONE_HALF_ANGLE + CONE_MARGIN).to_radians().tan();
    if along > 0.0 && across < along * inner {
        Cone::Inside
    } else if along <= 0.0 || across > along * outer {
        Cone::Outside
    } else {
        Cone::Border
    }
}

fn counts(objects: &[ObjectInstance]) -> [usize; CATALOG.len()] {
    let mut c = [0; CATALOG.len()];
    for o in objects {
        c[o.type_id] += 1;
    }
    c
}

/// Fills a template on a fresh scene drawn from `seed`. `Ok(None)` means the
/// draw was rejected as unsatisfiable or ambiguous.
fn instantiate(cfg: &DataConfig, template: TemplateId, rng: &mut Rng, seed: u64) -> Result<Option<(Scene, Semantics, WorldPoint)>> {
    let cell = cfg.cell();
    match template {
        TemplateId::SuperlativeSize => {
            let scene = sample_scene(cfg, rng, seed)?;
            let c = counts(&scene.objects);
            let mut types: Vec<usize> = (0..CATALOG.len()).filter(|&t| c[t] >= 2).collect();
            if types.is_empty() {
                types = (0..CATALOG.len()).filter(|&t| c[t] >= 1).collect();
            }
            let Some(&target) = types.choose(rng) else {
                return Ok(None);
            };
            let extreme = if rng.gen_bool(0.5) { SizeExtreme::Largest } else { SizeExtreme::Smallest };
            let mut cands: Vec<&ObjectInstance> = scene.objects.iter().filter(|o| o.type_id == target).collect();
            cands.sort_by(|a, b| match extreme {
                SizeExtreme::Largest => b.size.total_cmp(&a.size),
                SizeExtreme::Smallest => a.size.total_cmp(&b.size),
            });
            if cands.len() >= 2 && (cands[0].size - cands[1].size).abs() < SUPERLATIVE_MARGIN {
                return Ok(None);
            }
            let gold = cands[0].position;
            Ok(Some((scene, Semantics::SuperlativeSize { target, extreme }, gold)))
        }
        TemplateId::RowExtreme | TemplateId::RowOrdinal => {
            let target = rng.gen_range(0..CATALOG.len());
            let scene = plant_row(cfg, rng, target, seed)?;
            let mut rows = rows_by_chains(&scene.objects, target, cell);
            if rows.is_empty() {
                return Ok(None);
            }
            if template == TemplateId::RowExtreme {
                if rows.len() != 1 {
                    return Ok(None);
                }
                let end = if rng.gen_bool(0.5) { RowEnd::Leftmost } else { RowEnd::Rightmost };
                let row = &rows[0];
                let k = match end {
                    RowEnd::Leftmost => row[0],
                    RowEnd::Rightmost => row[row.len() - 1],
                };
                return Ok(Some((scene.clone(), Semantics::RowExtreme { target, end }, scene.objects[k].position)));
            }
            rows.sort_by(|a, b| mean_y(&scene.objects, b).total_cmp(&mean_y(&scene.objects, a)));
            if rows.len() >= 2 && mean_y(&scene.objects, &rows[0]) - mean_y(&scene.objects, &rows[1]) < TOP_ROW_MARGIN * cell {
                return Ok(None);
            }
            let top = &rows[0];
            let ordinal = rng.gen_range(1..=top.len().min(ORDINALS.len()));
            let gold = scene.objects[top[ordinal - 1]].position;
            Ok(Some((scene, Semantics::RowOrdinal { target, ordinal }, gold)))
        }
        TemplateId::RelativeDir => {
            let scene = sample_scene(cfg, rng, seed)?;
            let c = counts(&scene.objects);
            let anchors: Vec<usize> = (0..CATALOG.len()).filter(|&t| c[t] == 1).collect();
            let Some(&anchor) = anchors.choose(rng) else {
                return Ok(None);
            };
            let direction = *Direction::ALL.choose(rng).unwrap();
            let anchor_pos = scene.objects.iter().find(|o| o.type_id == anchor).unwrap().position;
            let mut eligible: Vec<(usize, WorldPoint)> = Vec::new();
            for t in (0..CATALOG.len()).filter(|&t| t != anchor && c[t] > 0) {
                let mut inside = Vec::new();
                let mut border = false;
                for o in scene.objects.iter().filter(|o| o.type_id == t) {
                    match cone_class(anchor_pos, o.position, direction) {
                        Cone::Inside => inside.push(o.position),
                        Cone::Border => border = true,
                        Cone::Outside => {}
                    }
                }
                if inside.len() == 1 && !border {
                    eligible.push((t, inside[0]));
                }
            }
            let Some(&(target, gold)) = eligible.choose(rng) else {
                return Ok(None);
            };
            Ok(Some((scene, Semantics::RelativeDir { target, anchor, direction }, gold)))
        }
    }
}

/// One record for `template` from `seed`, or `None` on rejection. Test-split
/// records are translated by the configured test shift.
pub fn generate_record(cfg: &DataConfig, split: Split, template: TemplateId, seed: u64) -> Result<Option<Record>> {
    let mut rng = rng_from_seed(seed);
    let Some((scene, semantics, gold)) = instantiate(cfg, template, &mut rng, seed)? else {
        return Ok(None);
    };
    let shift = if split == Split::Test { cfg.test_shift } else { WorldPoint::ORIGIN };
    let moved = |p: WorldPoint| WorldPoint::new(p.x + shift.x, p.y + shift.y);
    let catalog = catalog_names();
    Ok(Some(Record {
        instruction: semantics.render(&catalog)?,
        catalog,
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectInstance {
                position: moved(o.position),
                ..*o
            })
            .collect(),
        gold_start: moved(gold),
        gold_end: None,
        template_id: Some(template),
        semantics: Some(semantics),
        seed,
    }))
}

/// `count` records for a split. Record `n` derives its template choice and
/// attempt seeds from (run seed, split, n), so any generation order gives
/// the same file.
pub fn generate_split(cfg: &DataConfig, split: Split, count: usize) -> Result<Vec<Record>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(count);
    for n in 0..count as u64 {
        let mut pick = rng_from_seed(derive_seed(cfg.seed, &[split.tag(), n]));
        let template = *cfg.templates.choose(&mut pick).unwrap();
        let mut record = None;
        let mut last_seed = 0;
        for attempt in 0..cfg.max_attempts as u64 {
            let seed = derive_seed(cfg.seed, &[split.tag(), n, attempt + 1]);
            last_seed = seed;
            match generate_record(cfg, split, template, seed) {
                Ok(Some(r)) => {
                    record = Some(r);
                    break;
                }
                Ok(None) | Err(Error::Generation { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        out.push(record.ok_or_else(|| Error::Generation {
            seed: last_seed,
            message: format!("no valid {template:?} record for {} #{n}", split.name()),
        })?);
    }
    Ok(out)
}

pub fn generate_dataset(cfg: &DataConfig) -> Result<Dataset> {
    Ok(Dataset {
        train: generate_split(cfg, Split::Train, cfg.train)?,
        dev: generate_split(cfg, Split::Dev, cfg.dev)?,
        test: generate_split(cfg, Split::Test, cfg.test)?,
    })
}
