//! The five-condition comparison on a small synthetic corpus.
//!
//! Pass a TOML experiment config to override the built-in one:
//!
//! ```bash
//! cargo run --release --example compare_conditions -- my_experiment.toml
//! ```

use std::error::Error;

use rirfield::nafield::FieldConfig;
use rirfield::training::{run_experiment, Condition, ExperimentConfig};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.recipe.rooms = 10;
    cfg.corpus.recipe.pairs_per_room = 15;
    cfg.corpus.recipe.length_s = 0.3;
    cfg.corpus.enrollment = 5;
    cfg.corpus.evaluation = 10;
    cfg.retrieval.limit = 3;
    cfg.model = FieldConfig {
        num_bounce_points: 16,
        encoding_levels: 4,
        hidden_width: 32,
        hidden_layers: 2,
        rir_samples: 4800,
        ..FieldConfig::default()
    };
    cfg.train.pretrain_epochs = 10;
    cfg.train.finetune_epochs = 40;
    cfg.train.synthesis_iterations = 16;
    cfg
}

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => small(),
    };
    let report = run_experiment(&cfg, &Condition::standard(), cfg.seed)?;
    println!(
        "target {} (geometry from {}), retrieved {:?}, random {:?}\n",
        report.target_room, report.geometry_room, report.retrieved_rooms, report.random_rooms
    );
    println!(
        "{:<30} {:>8} {:>9} {:>9}",
        "condition", "RT60", "EDF dB", "DRR dB"
    );
    for row in &report.rows {
        println!(
            "{:<30} {:>8.3} {:>9.3} {:>9.3}",
            row.condition.to_string(),
            row.mean.rt60_err_pct,
            row.mean.edf_err_db,
            row.mean.drr_err_db
        );
    }
    Ok(())
}
