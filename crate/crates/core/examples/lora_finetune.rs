//! Pre-train a field model on a few rooms, then adapt it to an unseen room
//! with rank-1 adapters and compare against tuning every weight.

use std::error::Error;

use rirfield::nafield::{read_checkpoint, write_checkpoint, Checkpoint, FieldConfig};
use rirfield::rir::{metric_errors, BandSpec};
use rirfield::simulator::{generate_room, CorpusRecipe};
use rirfield::training::{
    finetune, infer, pretrain, recordings_loss, split_target, TrainMode, TrainRecipe,
    TrainingCorpus,
};

fn main() -> Result<(), Box<dyn Error>> {
    let recipe = CorpusRecipe {
        rooms: 5,
        pairs_per_room: 12,
        length_s: 0.25,
        ..CorpusRecipe::default()
    };
    let rooms = (0..recipe.rooms)
        .map(|i| generate_room(&recipe, 3, i))
        .collect::<Result<_, _>>()?;
    let corpus = TrainingCorpus::from_generated(rooms)?;
    let split = split_target(&corpus, "room000", 4, 8)?;
    let geometry = split
        .geometry
        .clone()
        .expect("simulated rooms carry their box");

    let config = FieldConfig {
        num_bounce_points: 16,
        encoding_levels: 4,
        hidden_width: 32,
        hidden_layers: 2,
        rir_samples: 4000,
        ..FieldConfig::default()
    };
    let sources: Vec<String> = corpus
        .rooms
        .keys()
        .filter(|r| *r != "room000")
        .cloned()
        .collect();
    let base = pretrain(
        &sources,
        &corpus,
        config,
        &TrainRecipe {
            epochs: 80,
            seed: 1,
            ..TrainRecipe::default()
        },
    )?;
    let losses = &base.epoch_losses;
    println!(
        "pre-training loss {:.3} -> {:.3}",
        losses[0],
        losses[losses.len() - 1]
    );

    let before = recordings_loss(&base.params, None, &split.evaluation, &geometry)?;
    println!("held-out loss before adaptation {before:.4}");

    let lora = TrainRecipe {
        mode: TrainMode::FinetuneLora,
        epochs: 150,
        batch_size: 4,
        lora_rank: Some(1),
        seed: 2,
        ..TrainRecipe::default()
    };
    let full = TrainRecipe {
        mode: TrainMode::FinetuneFull,
        lora_rank: None,
        ..lora.clone()
    };
    let adapted = finetune(&base.params, &split.enrollment, &geometry, &lora)?;
    let tuned = finetune(&base.params, &split.enrollment, &geometry, &full)?;
    let adapters = adapted
        .adapters
        .as_ref()
        .expect("LoRA mode returns adapters");
    println!(
        "LoRA-1: {} trainable values, held-out loss {:.4}",
        adapters.values.len(),
        recordings_loss(&base.params, Some(adapters), &split.evaluation, &geometry)?
    );
    println!(
        "all parameters: {} trainable values, held-out loss {:.4}",
        tuned.params.len(),
        recordings_loss(&tuned.params, None, &split.evaluation, &geometry)?
    );

    // Adapters ship separately from the base weights.
    let path = std::env::temp_dir().join("room000_adapters.nafc");
    write_checkpoint(
        &path,
        &Checkpoint {
            config,
            base: None,
            lora: Some(adapters.clone()),
        },
    )?;
    let restored = read_checkpoint(&path)?.lora.expect("adapter checkpoint");
    println!(
        "adapter checkpoint: {} bytes",
        std::fs::metadata(&path)?.len()
    );

    let pairs: Vec<_> = split.evaluation.iter().map(|r| (r.src, r.rcv)).collect();
    let predicted = infer(&base.params, Some(&restored), &pairs, &geometry, 32)?;
    let bands = BandSpec::default();
    for (rec, ir) in split.evaluation.iter().zip(&predicted).take(3) {
        let e = metric_errors(ir, &rec.ir, &bands)?;
        println!(
            "{}: RT60 {:.1}%  EDF {:.2} dB  DRR {:.2} dB",
            rec.rir_id,
            100.0 * e.rt60_err_pct,
            e.edf_err_db,
            e.drr_err_db
        );
    }
    Ok(())
}
