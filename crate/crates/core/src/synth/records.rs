use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, DataConfig, Semantics, Split, TemplateId};
use crate::error::{Error, Result};
use crate::grid::{ObjectInstance, Scene, WorldPoint};

pub const DATASET_FORMAT: &str = "langgrid-dataset";
pub const DATASET_VERSION: u32 = 1;

/// One instruction over one scene with its gold locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub instruction: String,
    pub catalog: Vec<String>,
    pub objects: Vec<ObjectInstance>,
    pub gold_start: WorldPoint,
    #[serde(default)]
    pub gold_end: Option<WorldPoint>,
    #[serde(default)]
    pub template_id: Option<TemplateId>,
    #[serde(default)]
    pub semantics: Option<Semantics>,
    #[serde(default)]
    pub seed: u64,
}

impl Record {
    pub fn scene(&self) -> Result<Scene> {
        Scene::new(self.catalog.len(), self.objects.clone())
    }
}

fn encode_records(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

fn decode_records(text: &str) -> Result<Vec<Record>> {
    text.lines()
        .enumerate()
        .map(|(k, line)| {
            let r: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: k + 1,
                message: e.to_string(),
            })?;
            r.scene().map_err(|e| Error::Parse {
                line: k + 1,
                message: e.to_string(),
            })?;
            Ok(r)
        })
        .collect()
}

/// One JSON object per line.
pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    std::fs::write(path, encode_records(records)).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_records(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    pub file: String,
    pub count: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub config: DataConfig,
    pub splits: Vec<SplitEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `manifest.json`.
pub fn write_dataset(dir: &Path, cfg: &DataConfig, data: &Dataset) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut splits = Vec::new();
    for split in Split::ALL {
        let records = data.split(split);
        let bytes = encode_records(records);
        let file = format!("{}.jsonl", split.name());
        let path = dir.join(&file);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        splits.push(SplitEntry {
            split,
            file,
            count: records.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        config: cfg.clone(),
        splits,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| Error::io(&path, e.into()))?;
    f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a dataset directory, checking counts and digests against the
/// manifest.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Dataset)> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })?;
    if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
        return Err(Error::Config(format!(
            "unsupported dataset format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let mut data = Dataset::default();
    for entry in &manifest.splits {
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        if digest != entry.sha256 {
            return Err(Error::Config(format!("{} does not match its manifest digest", path.display())));
        }
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        let records = decode_records(&text)?;
        if records.len() != entry.count {
            return Err(Error::Config(format!(
                "{} has {} records, manifest says {}",
                path.display(),
                records.len(),
                entry.count
            )));
        }
        match entry.split {
            Split::Train => data.train = records,
            Split::Dev => data.dev = records,
            Split::Test => data.test = records,
        }
    }
    Ok((manifest, data))
}
