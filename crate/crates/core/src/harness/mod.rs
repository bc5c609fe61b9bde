//! Dataset generation, training, evaluation and prediction entry points
//! used by the command-line tool.

mod commands;
mod config;
mod render;
mod train;

pub use commands::{
    checkpoint_path, cmd_eval, cmd_generate, cmd_predict, cmd_train, final_line, load_dataset, load_model, parse_scene,
    summary_text, EvalOutput, PredictOutput, TrainSummary, CHECKPOINT_FILE, FORMAT_VERSION, REPORT_FORMAT,
    TRAIN_LOG_FILE, VOCAB_FILE,
};
pub use config::{ModelChoice, RunConfig};
pub use render::{attention_table, heatmap_image, pgm_bytes};
pub use train::{evaluate, evaluate_baseline, init_model, model_inputs, train_model, EpochLog, TrainOutcome};
