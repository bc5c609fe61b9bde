use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::render::{attention_table, heatmap_image, pgm_bytes};
use super::{evaluate, evaluate_baseline, train_model, EpochLog, ModelChoice, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{MetricsReport, Scene};
use crate::model::{Model, Prediction};
use crate::rng::derive_seed;
use crate::synth::{generate_dataset, read_dataset, write_dataset, Dataset, DatasetManifest, Split};
use crate::text::tokenize;

pub const FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT: &str = "langgrid-report";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_LOG_FILE: &str = "train.log";

const BASELINE_SEED_TAG: u64 = 0x6261_7365;

fn run_header(cfg: &RunConfig) -> serde_json::Value {
    json!({ "version": FORMAT_VERSION, "run": cfg })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join(CHECKPOINT_FILE)
}

/// Generates all three splits and writes them under `cfg.data`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let dc = cfg.data_config();
    let data = generate_dataset(&dc)?;
    write_dataset(&cfg.data, &dc, &data)
}

/// Reads the dataset under `cfg.data`, checking it was generated for the
/// configured grid.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (manifest, data) = read_dataset(&cfg.data)?;
    if manifest.config.grid != cfg.grid {
        return Err(Error::Config(format!(
            "dataset was generated for grid {} but the run uses grid {}",
            manifest.config.grid, cfg.grid
        )));
    }
    Ok(data)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub model: Model,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Metrics of the saved parameters on the training split.
    pub train: MetricsReport,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.9}"))
}

/// Final log line: the saved model evaluated on the training split.
pub fn final_line(best_epoch: usize, r: &MetricsReport) -> String {
    format!(
        "final best_epoch={best_epoch} train_mse_start={:.9} train_ta_start={:.9} train_mse_end={} train_ta_end={}",
        r.mse_start,
        r.ta_start,
        fmt_opt(r.mse_end),
        fmt_opt(r.ta_end)
    )
}

/// Trains on the stored dataset and writes the checkpoint, vocabulary and
/// log under `cfg.out`.
pub fn cmd_train(cfg: &RunConfig, on_epoch: &mut dyn FnMut(&EpochLog)) -> Result<TrainSummary> {
    cfg.validate()?;
    if cfg.model.trainable().is_none() {
        return Err(Error::Config(format!(
            "model {} has no parameters to train",
            cfg.model.as_str()
        )));
    }
    let data = load_dataset(cfg)?;
    create_dir(&cfg.out)?;
    let log_path = cfg.out.join(TRAIN_LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "# langgrid-train {}", run_header(cfg)).map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let outcome = train_model(cfg, &data.train, &data.dev, &mut |l| {
        if let Err(e) = writeln!(log, "{}", l.line()) {
            log_err.get_or_insert(e);
        }
        on_epoch(l);
    })?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    let mut model = outcome.model;
    model.set_run_info(run_header(cfg));
    model.save(&checkpoint_path(cfg))?;
    model.vocab().save(&cfg.out.join(VOCAB_FILE))?;
    let train = evaluate(&model, &data.train, cfg.tol)?;
    writeln!(log, "{}", final_line(outcome.best_epoch, &train)).map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainSummary {
        model,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        train,
    })
}

/// Loads the checkpoint under `cfg.out`, checking it matches the run.
pub fn load_model(cfg: &RunConfig) -> Result<Model> {
    let kind = cfg
        .model
        .trainable()
        .ok_or_else(|| Error::Config(format!("model {} has no checkpoint", cfg.model.as_str())))?;
    let model = Model::load(&checkpoint_path(cfg))?;
    if model.kind() != kind {
        return Err(Error::Config(format!(
            "checkpoint holds a {} model, the run asks for {}",
            model.kind().as_str(),
            kind.as_str()
        )));
    }
    if model.config().grid_w != cfg.grid || model.config().grid_h != cfg.grid {
        return Err(Error::Config(format!(
            "checkpoint grid {}×{} does not match run grid {}",
            model.config().grid_w,
            model.config().grid_h,
            cfg.grid
        )));
    }
    Ok(model)
}

#[derive(Serialize)]
struct Summary<'a> {
    n: usize,
    tol: f64,
    mse_start: f64,
    ta_start: f64,
    n_end: usize,
    mse_end: Option<f64>,
    ta_end: Option<f64>,
    model: &'a str,
    split: &'a str,
}

/// Human-readable block for a report.
pub fn summary_text(model: ModelChoice, split: Split, r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model       {}", model.as_str());
    let _ = writeln!(s, "split       {}", split.name());
    let _ = writeln!(s, "samples     {}", r.n);
    let _ = writeln!(s, "tol         {}", r.tol);
    let _ = writeln!(s, "mse_start   {:.9}", r.mse_start);
    let _ = writeln!(s, "ta_start    {:.9}", r.ta_start);
    let _ = writeln!(s, "samples_end {}", r.n_end);
    let _ = writeln!(s, "mse_end     {}", fmt_opt(r.mse_end));
    let _ = writeln!(s, "ta_end      {}", fmt_opt(r.ta_end));
    s
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub report: MetricsReport,
    pub summary: String,
    /// Path of the line-delimited report.
    pub path: PathBuf,
}

/// Evaluates the configured model on one split and writes
/// `eval_<split>.jsonl` and `eval_<split>.txt` under `cfg.out`.
pub fn cmd_eval(cfg: &RunConfig, split: Split) -> Result<EvalOutput> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let records = data.split(split);
    let report = match cfg.model {
        ModelChoice::Center => evaluate_baseline(false, records, cfg.seed, cfg.tol)?,
        ModelChoice::Random => evaluate_baseline(
            true,
            records,
            derive_seed(cfg.seed, &[BASELINE_SEED_TAG, split.tag()]),
            cfg.tol,
        )?,
        ModelChoice::Langunet | ModelChoice::Langfcnet => evaluate(&load_model(cfg)?, records, cfg.tol)?,
    };

    let mut body = String::new();
    let mut header = run_header(cfg);
    header["format"] = json!(REPORT_FORMAT);
    header["split"] = json!(split.name());
    let _ = writeln!(body, "{header}");
    for (k, (s, r)) in report.samples.iter().zip(records).enumerate() {
        let hit = (s.pred_start.x - s.gold_start.x).abs() < report.tol && (s.pred_start.y - s.gold_start.y).abs() < report.tol;
        let line = json!({
            "index": k,
            "seed": r.seed,
            "template": r.template_id,
            "pred_start": s.pred_start,
            "gold_start": s.gold_start,
            "pred_end": s.pred_end,
            "gold_end": s.gold_end,
            "hit_start": hit,
        });
        let _ = writeln!(body, "{line}");
    }
    let summary = Summary {
        n: report.n,
        tol: report.tol,
        mse_start: report.mse_start,
        ta_start: report.ta_start,
        n_end: report.n_end,
        mse_end: report.mse_end,
        ta_end: report.ta_end,
        model: cfg.model.as_str(),
        split: split.name(),
    };
    let _ = writeln!(body, "{}", json!({ "summary": summary }));

    create_dir(&cfg.out)?;
    let path = cfg.out.join(format!("eval_{}.jsonl", split.name()));
    write_file(&path, body.as_bytes())?;
    let text = summary_text(cfg.model, split, &report);
    write_file(&cfg.out.join(format!("eval_{}.txt", split.name())), text.as_bytes())?;
    Ok(EvalOutput {
        report,
        summary: text,
        path,
    })
}

/// Parses a scene from its JSON form.
pub fn parse_scene(text: &str) -> Result<Scene> {
    let scene: Scene = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("scene: {e}"),
    })?;
    scene.validate()?;
    Ok(scene)
}

#[derive(Clone, Debug)]
pub struct PredictOutput {
    pub prediction: Prediction,
    pub tokens: Vec<String>,
    /// Start/end coordinates and the attention table.
    pub text: String,
    /// Images written, in order: start heatmap, end heatmap, attention.
    pub images: Vec<PathBuf>,
}

/// Runs the trained model on one instruction. With `images`, writes
/// `heatmap_start.pgm`, `heatmap_end.pgm`, `attention.pgm` and
/// `attention.txt` under `cfg.out`.
pub fn cmd_predict(cfg: &RunConfig, scene: &Scene, instruction: &str, images: bool) -> Result<PredictOutput> {
    let model = load_model(cfg)?;
    let tokens = tokenize(instruction);
    if tokens.is_empty() {
        return Err(Error::EmptyInput("instruction has no tokens".into()));
    }
    let input = model.input(instruction, scene)?;
    let p = model.predict(&input)?;
    let table = attention_table(&tokens, &p.attention)?;
    let mut text = String::new();
    let _ = writeln!(text, "start {:.6} {:.6}", p.start.x, p.start.y);
    let _ = writeln!(text, "end {:.6} {:.6}", p.end.x, p.end.y);
    text.push_str(&table);

    let mut written = Vec::new();
    if images {
        create_dir(&cfg.out)?;
        let comments = vec![format!("langgrid-predict {}", run_header(cfg)), format!("instruction {instruction}")];
        let (w, h) = (model.config().grid_w, model.config().grid_h);
        if let Some(heat) = &p.heatmaps {
            for (k, name) in ["heatmap_start.pgm", "heatmap_end.pgm"].iter().enumerate() {
                let rows = heatmap_image(&heat[k * w * h..(k + 1) * w * h], w, h)?;
                let path = cfg.out.join(name);
                write_file(&path, &pgm_bytes(w, h, &rows, &comments)?)?;
                written.push(path);
            }
        }
        let path = cfg.out.join("attention.pgm");
        write_file(&path, &pgm_bytes(tokens.len(), 4, &p.attention, &comments)?)?;
        written.push(path);
        write_file(&cfg.out.join("attention.txt"), table.as_bytes())?;
    }
    Ok(PredictOutput {
        prediction: p,
        tokens,
        text,
        images: written,
    })
}
