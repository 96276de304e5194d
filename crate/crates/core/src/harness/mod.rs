//! Experiment execution: config parsing, seeded multi-run training loops,
//! CSV logs, statistics and SVG learning curves.

mod config;
mod csv;
mod plot;
mod run;
mod stats;

pub use config::{parse_window, AdvisorId, EnvId, ExperimentConfig, ExperimentKind, CONFIG_KEYS};
pub use csv::{format_g6, parse_csv, read_csv, records_to_csv, round_sig6, write_csv, EpisodeRecord, CSV_HEADER};
pub use plot::{emit_curve_svg, Curve};
pub use run::{
    episode_range, learning_curve, load_builtin_world, run_experiment, run_experiment_with_source, run_window_means,
    transfer_source, window_returns, TransferSource,
};
pub use stats::{mean, midranks, moving_average, stderr, variance, welch_t_test, wilcoxon_rank_sum, TestResult, EXACT_LIMIT};
