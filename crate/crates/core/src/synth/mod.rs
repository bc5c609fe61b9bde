//! Synthetic tabletop dataset: scene sampling, the four instruction
//! templates, an independent gold oracle, and record files.

mod augment;
mod generate;
mod oracle;
mod records;
mod scene;

pub use augment::augment_record;
pub use generate::{generate_dataset, generate_record, generate_split, rows_by_chains, Dataset};
pub use oracle::{oracle_gold, oracle_rows};
pub use records::{
    read_dataset, read_records, write_dataset, write_records, DatasetManifest, Record, SplitEntry, DATASET_FORMAT,
    DATASET_VERSION,
};
pub use scene::{plant_row, sample_scene};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_width, WorldPoint};

pub const CATALOG: [&str; 12] = [
    "apple", "banana", "orange", "pear", "lemon", "cucumber", "carrot", "onion", "potato", "mango", "plum", "kiwi",
];

pub fn plural(name: &str) -> String {
    if name.ends_with('o') {
        format!("{name}es")
    } else {
        format!("{name}s")
    }
}

pub fn catalog_names() -> Vec<String> {
    CATALOG.iter().map(|s| s.to_string()).collect()
}

/// Minimum size gap between the extreme object and the runner-up.
pub const SUPERLATIVE_MARGIN: f64 = 0.3;
/// Row members lie within this many cell widths of the row's mean y.
pub const ROW_Y_TOLERANCE: f64 = 0.5;
/// Allowed consecutive x gap inside a row, in cell widths.
pub const ROW_GAP: (f64, f64) = (1.5, 4.0);
pub const ROW_MIN_LEN: usize = 3;
/// The top row must beat the next row's mean y by this many cell widths.
pub const TOP_ROW_MARGIN: f64 = 1.0;
/// Half-angle of the direction cone, degrees.
pub const CONE_HALF_ANGLE: f64 = 45.0;
/// Minimum object separation, in cell widths.
pub const MIN_SEPARATION: f64 = 1.5;
pub const ORDINALS: [&str; 5] = ["first", "second", "third", "fourth", "fifth"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateId {
    SuperlativeSize,
    RowExtreme,
    RowOrdinal,
    RelativeDir,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::SuperlativeSize,
        TemplateId::RowExtreme,
        TemplateId::RowOrdinal,
        TemplateId::RelativeDir,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeExtreme {
    Largest,
    Smallest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowEnd {
    Leftmost,
    Rightmost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Above,
    Below,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Above, Direction::Below, Direction::Left, Direction::Right];

    /// Unit axis vector in world coordinates (y points up).
    pub fn axis(self) -> (f64, f64) {
        match self {
            Direction::Above => (0.0, 1.0),
            Direction::Below => (0.0, -1.0),
            Direction::Left => (-1.0, 0.0),
            Direction::Right => (1.0, 0.0),
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Direction::Above => "above",
            Direction::Below => "below",
            Direction::Left => "to the left of",
            Direction::Right => "to the right of",
        }
    }
}

/// Parsed meaning of an instruction, with object types as catalog indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Semantics {
    SuperlativeSize { target: usize, extreme: SizeExtreme },
    RowExtreme { target: usize, end: RowEnd },
    /// `ordinal` is 1-based, counted left to right.
    RowOrdinal { target: usize, ordinal: usize },
    RelativeDir { target: usize, anchor: usize, direction: Direction },
}

impl Semantics {
    pub fn template_id(&self) -> TemplateId {
        match self {
            Semantics::SuperlativeSize { .. } => TemplateId::SuperlativeSize,
            Semantics::RowExtreme { .. } => TemplateId::RowExtreme,
            Semantics::RowOrdinal { .. } => TemplateId::RowOrdinal,
            Semantics::RelativeDir { .. } => TemplateId::RelativeDir,
        }
    }

    /// Instruction text for this meaning.
    pub fn render(&self, catalog: &[String]) -> Result<String> {
        let name = |t: usize| {
            catalog
                .get(t)
                .map(String::as_str)
                .ok_or_else(|| Error::Range(format!("type {t} outside a catalog of {}", catalog.len())))
        };
        Ok(match *self {
            Semantics::SuperlativeSize { target, extreme } => {
                let adj = match extreme {
                    SizeExtreme::Largest => "largest",
                    SizeExtreme::Smallest => "smallest",
                };
                format!("pick the {adj} {}", name(target)?)
            }
            Semantics::RowExtreme { target, end } => {
                let adj = match end {
                    RowEnd::Leftmost => "leftmost",
                    RowEnd::Rightmost => "rightmost",
                };
                let obj = name(target)?;
                format!("pick the {adj} {obj} from the row of {}", plural(obj))
            }
            Semantics::RowOrdinal { target, ordinal } => {
                let ord = ORDINALS
                    .get(ordinal.wrapping_sub(1))
                    .ok_or_else(|| Error::Range(format!("ordinal {ordinal} not supported")))?;
                format!("pick the {ord} {} from top row", name(target)?)
            }
            Semantics::RelativeDir { target, anchor, direction } => {
                format!("pick the {} {} the {}", name(target)?, direction.phrase(), name(anchor)?)
            }
        })
    }
}

/// Axis-aligned box in world units where scene objects are placed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            x_min: -0.9,
            x_max: 0.9,
            y_min: -0.9,
            y_max: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub seed: u64,
    /// Grid resolution the separation rule is measured against.
    pub grid: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub max_per_type: usize,
    pub region: Region,
    /// Translation applied to every test-split scene.
    pub test_shift: WorldPoint,
    pub templates: Vec<TemplateId>,
    /// Attempts per record before generation fails.
    pub max_attempts: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            seed: 7,
            grid: 32,
            train: 3000,
            dev: 500,
            test: 500,
            min_objects: 2,
            max_objects: 24,
            max_per_type: 8,
            region: Region::default(),
            test_shift: WorldPoint::ORIGIN,
            templates: TemplateId::ALL.to_vec(),
            max_attempts: 1000,
        }
    }
}

impl DataConfig {
    pub fn cell(&self) -> f64 {
        cell_width(self.grid)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.region;
        if self.grid == 0 {
            return Err(Error::Config("grid must be positive".into()));
        }
        if !(r.x_min < r.x_max && r.y_min < r.y_max) {
            return Err(Error::Config(format!("empty region {r:?}")));
        }
        let s = self.test_shift;
        let inside = |lo: f64, hi: f64| (-1.0..=1.0).contains(&lo) && (-1.0..=1.0).contains(&hi);
        if !inside(r.x_min, r.x_max) || !inside(r.y_min, r.y_max) {
            return Err(Error::Config("region leaves the table".into()));
        }
        if !inside(r.x_min + s.x, r.x_max + s.x) || !inside(r.y_min + s.y, r.y_max + s.y) {
            return Err(Error::Config("test shift moves the region off the table".into()));
        }
        if self.min_objects < 1 || self.min_objects > self.max_objects {
            return Err(Error::Config("object count range is empty".into()));
        }
        if self.max_per_type == 0 || self.max_per_type > 16 {
            return Err(Error::Config("max_per_type must be in 1..=16".into()));
        }
        if self.max_objects > self.max_per_type * CATALOG.len() {
            return Err(Error::Config("max_objects cannot be reached under the per-type cap".into()));
        }
        if self.templates.is_empty() {
            return Err(Error::Config("no templates enabled".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Dev => 2,
            Split::Test => 3,
        }
    }
}
