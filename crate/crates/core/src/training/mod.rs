//! Pre-training, fine-tuning and inference for the neural field.

mod corpus;
mod experiment;

pub use corpus::{room_seed, Recording, RoomData, RoomGeometry, TrainingCorpus};
pub use experiment::{
    evaluate_conditions, experiment_corpus, run_experiment, split_target, Condition,
    ConditionResult, ExperimentConfig, ExperimentReport, FinetuneMethod, GeometrySource,
    PretrainingSet, TargetSplit,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point3};
use crate::manifest::ManifestError;
use crate::nafield::{
    forward, gradients, lora_init, loss, spectrogram, synthesize_waveform, Example, FieldConfig,
    FieldError, LoraAdapters, ModelParams, RoomContext, SpectrogramTarget,
};
use crate::retrieval::RetrievalError;
use crate::rir::{ImpulseResponse, RirError};
use crate::seed_for;
use crate::simulator::SimulatorError;

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const ADAPTER_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("room '{0}' has no usable geometry")]
    MissingGeometry(String),
    #[error("room '{0}' has no recordings")]
    NoRecordings(String),
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Rir(#[from] RirError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Pretrain,
    FinetuneLora,
    FinetuneFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRecipe {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub lora_rank: Option<usize>,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        Self {
            mode: TrainMode::Pretrain,
            epochs: 10,
            batch_size: 8,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            lora_rank: None,
        }
    }
}

impl TrainRecipe {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidRecipe(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("moment smoothing must lie in [0, 1)");
        }
        match (self.mode, self.lora_rank) {
            (TrainMode::FinetuneLora, None) => bad("finetune_lora needs lora_rank"),
            (_, Some(0)) => bad("lora_rank must be at least 1"),
            _ => Ok(()),
        }
    }
}

/// Adaptive-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, recipe: &TrainRecipe) -> Self {
        Self {
            step_size: recipe.step_size,
            beta1: recipe.beta1,
            beta2: recipe.beta2,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((xi, &g), m), v) in x.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *xi -= self.step_size * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Training output plus the mean loss of every epoch.
#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ModelParams,
    pub adapters: Option<LoraAdapters>,
    pub epoch_losses: Vec<f64>,
}

/// Log-magnitude target for `ir`, zero padded or truncated to the configured length.
pub fn target_spectrogram(
    ir: &ImpulseResponse,
    config: &FieldConfig,
) -> Result<SpectrogramTarget, TrainingError> {
    if ir.sample_rate() != config.sample_rate {
        return Err(RirError::RateMismatch(ir.sample_rate(), config.sample_rate).into());
    }
    let mut s = ir.samples().to_vec();
    s.resize(config.rir_samples, 0.0);
    let fitted = ImpulseResponse::new(s, ir.sample_rate())?;
    Ok(spectrogram(&fitted, config.stft, config.frames()))
}

struct Prepared {
    room: usize,
    src: Point3,
    rcv: Point3,
    target: SpectrogramTarget,
}

fn prepare<'a>(
    rooms: impl IntoIterator<Item = (RoomContext, &'a [Recording])>,
    config: &FieldConfig,
) -> Result<(Vec<RoomContext>, Vec<Prepared>), TrainingError> {
    let mut contexts = Vec::new();
    let mut items = Vec::new();
    for (ctx, recs) in rooms {
        for r in recs {
            items.push(Prepared {
                room: contexts.len(),
                src: r.src,
                rcv: r.rcv,
                target: target_spectrogram(&r.ir, config)?,
            });
        }
        contexts.push(ctx);
    }
    Ok((contexts, items))
}

fn examples<'a>(contexts: &'a [RoomContext], items: &'a [Prepared]) -> Vec<Example<'a>> {
    items
        .iter()
        .map(|p| Example {
            room: &contexts[p.room],
            src: p.src,
            rcv: p.rcv,
            target: &p.target,
        })
        .collect()
}

/// Mean loss of `model` over `batch`.
pub fn mean_loss(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    batch: &[Example<'_>],
) -> Result<f64, TrainingError> {
    let mut total = 0.0;
    for e in batch {
        total += loss(&forward(params, adapters, e.room, e.src, e.rcv)?, e.target)?;
    }
    Ok(total / batch.len().max(1) as f64)
}

fn optimize(
    data: &[Example<'_>],
    recipe: &TrainRecipe,
    params: &mut ModelParams,
    mut adapters: Option<&mut LoraAdapters>,
) -> Result<Vec<f64>, TrainingError> {
    let trainable = adapters.as_ref().map_or(params.len(), |a| a.len());
    let mut adam = Adam::new(trainable, recipe);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(recipe.epochs);
    for epoch in 0..recipe.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed_for(recipe.seed, &[SHUFFLE_STREAM, epoch as u64]));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(recipe.batch_size) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| data[i]).collect();
            let g = gradients(params, adapters.as_deref(), &batch)?;
            if !g.loss.is_finite() {
                return Err(FieldError::NumericalError(format!("loss in epoch {epoch}")).into());
            }
            sum += g.loss * chunk.len() as f64;
            match (adapters.as_deref_mut(), g.lora, g.base) {
                (Some(a), Some(grad), _) => adam.step(&mut a.values, &grad),
                (None, _, Some(grad)) => adam.step(params.values_mut(), &grad),
                _ => unreachable!("gradient set matches the trainable values"),
            }
        }
        let epoch_loss = sum / data.len() as f64;
        log::info!("epoch {epoch}: loss {epoch_loss:.6}");
        losses.push(epoch_loss);
    }
    Ok(losses)
}

/// Starting point of pre-training: seeded weights, head bias at the mean target.
pub fn initial_params(
    config: FieldConfig,
    seed: u64,
    targets: &[&SpectrogramTarget],
) -> Result<ModelParams, TrainingError> {
    let mut params = ModelParams::init(config, seed_for(seed, &[INIT_STREAM]))?;
    if !targets.is_empty() {
        let mut mean = vec![0.0; config.output_len()];
        for t in targets {
            for (m, v) in mean.iter_mut().zip(&t.values) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= targets.len() as f64);
        params.set_head_bias(&mean)?;
    }
    Ok(params)
}

/// Trains base parameters on every recording of `room_ids`.
pub fn pretrain(
    room_ids: &[String],
    corpus: &TrainingCorpus,
    config: FieldConfig,
    recipe: &TrainRecipe,
) -> Result<Trained, TrainingError> {
    recipe.validate()?;
    config.validate()?;
    let mut rooms = Vec::with_capacity(room_ids.len());
    for id in room_ids {
        let room = corpus
            .rooms
            .get(id)
            .ok_or_else(|| TrainingError::MissingGeometry(id.clone()))?;
        let geometry = room
            .geometry
            .as_ref()
            .ok_or_else(|| TrainingError::MissingGeometry(id.clone()))?;
        if room.recordings.is_empty() {
            return Err(TrainingError::NoRecordings(id.clone()));
        }
        rooms.push((
            geometry.context(config.num_bounce_points)?,
            room.recordings.as_slice(),
        ));
    }
    let (contexts, items) = prepare(rooms, &config)?;
    let targets: Vec<&SpectrogramTarget> = items.iter().map(|p| &p.target).collect();
    let mut params = initial_params(config, recipe.seed, &targets)?;
    let data = examples(&contexts, &items);
    let epoch_losses = optimize(&data, recipe, &mut params, None)?;
    Ok(Trained {
        params,
        adapters: None,
        epoch_losses,
    })
}

/// Adapts `base` to a room from a handful of enrollment recordings.
pub fn finetune(
    base: &ModelParams,
    enrollment: &[Recording],
    geometry: &RoomGeometry,
    recipe: &TrainRecipe,
) -> Result<Trained, TrainingError> {
    recipe.validate()?;
    if enrollment.is_empty() {
        return Err(TrainingError::NoRecordings(geometry.room_id.clone()));
    }
    let config = *base.config();
    let ctx = geometry.context(config.num_bounce_points)?;
    let (contexts, items) = prepare([(ctx, enrollment)], &config)?;
    let data = examples(&contexts, &items);
    let mut params = base.clone();
    match recipe.mode {
        TrainMode::FinetuneLora => {
            let rank = recipe.lora_rank.unwrap_or(1);
            let mut adapters = lora_init(base, rank, seed_for(recipe.seed, &[ADAPTER_STREAM]))?;
            let epoch_losses = optimize(&data, recipe, &mut params, Some(&mut adapters))?;
            Ok(Trained {
                params,
                adapters: Some(adapters),
                epoch_losses,
            })
        }
        TrainMode::FinetuneFull | TrainMode::Pretrain => {
            let epoch_losses = optimize(&data, recipe, &mut params, None)?;
            Ok(Trained {
                params,
                adapters: None,
                epoch_losses,
            })
        }
    }
}

/// Predicted spectrograms turned into waveforms, one per source/receiver pair.
pub fn infer(
    base: &ModelParams,
    adapters: Option<&LoraAdapters>,
    pairs: &[(Point3, Point3)],
    geometry: &RoomGeometry,
    iterations: usize,
) -> Result<Vec<ImpulseResponse>, TrainingError> {
    let config = base.config();
    let ctx = geometry.context(config.num_bounce_points)?;
    pairs
        .iter()
        .map(|&(s, r)| {
            let spec = forward(base, adapters, &ctx, s, r)?;
            Ok(synthesize_waveform(
                &spec,
                config.stft,
                config.rir_samples,
                config.sample_rate,
                iterations,
            )?)
        })
        .collect()
}

/// Mean loss of a model on a set of recordings from one room.
pub fn recordings_loss(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    recordings: &[Recording],
    geometry: &RoomGeometry,
) -> Result<f64, TrainingError> {
    let config = *params.config();
    let ctx = geometry.context(config.num_bounce_points)?;
    let (contexts, items) = prepare([(ctx, recordings)], &config)?;
    mean_loss(params, adapters, &examples(&contexts, &items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nafield::{encode_checkpoint, Checkpoint, StftConfig};
    use crate::rir::{metric_errors, BandSpec};
    use crate::simulator::{generate_room, CorpusRecipe};

    pub(crate) fn small_recipe() -> CorpusRecipe {
        CorpusRecipe {
            rooms: 4,
            pairs_per_room: 8,
            dims_min: [3.0, 3.0, 2.5],
            dims_max: [4.5, 4.0, 3.0],
            absorption_min: 0.4,
            absorption_max: 0.7,
            length_s: 0.1,
            max_order: 60,
            bands: BandSpec::new(vec![500.0, 1000.0, 2000.0]).unwrap(),
            ..CorpusRecipe::default()
        }
    }

    pub(crate) fn small_config() -> FieldConfig {
        FieldConfig {
            num_bounce_points: 8,
            encoding_levels: 3,
            hidden_width: 16,
            hidden_layers: 2,
            stft: StftConfig::default(),
            rir_samples: 1600,
            sample_rate: 16000,
        }
    }

    pub(crate) fn small_corpus() -> TrainingCorpus {
        let recipe = small_recipe();
        let rooms = (0..recipe.rooms)
            .map(|i| generate_room(&recipe, 7, i).unwrap())
            .collect();
        TrainingCorpus::from_generated(rooms).unwrap()
    }

    fn recipe(mode: TrainMode, epochs: usize) -> TrainRecipe {
        TrainRecipe {
            mode,
            epochs,
            batch_size: 4,
            lora_rank: (mode == TrainMode::FinetuneLora).then_some(1),
            seed: 3,
            ..TrainRecipe::default()
        }
    }

    fn bytes(p: &ModelParams) -> Vec<u8> {
        let mut buf = Vec::new();
        let ckpt = Checkpoint {
            config: *p.config(),
            base: Some(p.clone()),
            lora: None,
        };
        encode_checkpoint(&mut buf, &ckpt).unwrap();
        buf
    }

    #[test]
    fn adam_first_step_is_step_size() {
        let r = TrainRecipe::default();
        let mut adam = Adam::new(2, &r);
        let mut x = [1.0, 1.0];
        adam.step(&mut x, &[3.0, -0.5]);
        assert!((x[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((x[1] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn recipe_validation() {
        assert!(TrainRecipe::default().validate().is_ok());
        let lora = TrainRecipe {
            mode: TrainMode::FinetuneLora,
            ..TrainRecipe::default()
        };
        assert!(lora.validate().is_err());
        assert!(TrainRecipe {
            batch_size: 0,
            ..TrainRecipe::default()
        }
        .validate()
        .is_err());
        assert!(TrainRecipe {
            step_size: -1.0,
            ..TrainRecipe::default()
        }
        .validate()
        .is_err());
        assert!(TrainRecipe {
            lora_rank: Some(0),
            ..lora
        }
        .validate()
        .is_err());
    }

    #[test]
    fn target_spectrogram_shape() {
        let c = small_corpus();
        let rec = &c.rooms["room000"].recordings[0];
        let t = target_spectrogram(&rec.ir, &small_config()).unwrap();
        assert_eq!((t.frames, t.bins), (13, 129));
        let wrong = FieldConfig {
            sample_rate: 8000,
            ..small_config()
        };
        assert!(target_spectrogram(&rec.ir, &wrong).is_err());
    }

    #[test]
    fn memorizes_one_recording() {
        let mut corpus = small_corpus();
        let room = corpus.rooms.get_mut("room000").unwrap();
        room.recordings.truncate(1);
        let run = pretrain(
            &["room000".into()],
            &corpus,
            small_config(),
            &recipe(TrainMode::Pretrain, 200),
        )
        .unwrap();
        let (first, last) = (run.epoch_losses[0], *run.epoch_losses.last().unwrap());
        assert!(last < 0.2 * first, "{first} -> {last}");
        assert!(run.epoch_losses.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = small_corpus();
        let rooms = vec!["room000".to_string(), "room001".to_string()];
        let run = pretrain(
            &rooms,
            &corpus,
            small_config(),
            &recipe(TrainMode::Pretrain, 0),
        )
        .unwrap();
        let targets: Vec<SpectrogramTarget> = rooms
            .iter()
            .flat_map(|r| corpus.rooms[r].recordings.iter())
            .map(|r| target_spectrogram(&r.ir, &small_config()).unwrap())
            .collect();
        let refs: Vec<&SpectrogramTarget> = targets.iter().collect();
        assert_eq!(
            run.params,
            initial_params(small_config(), 3, &refs).unwrap()
        );
        assert!(run.epoch_losses.is_empty());
    }

    #[test]
    fn pretraining_is_deterministic() {
        let corpus = small_corpus();
        let rooms = vec!["room001".to_string(), "room002".to_string()];
        let r = recipe(TrainMode::Pretrain, 3);
        let a = pretrain(&rooms, &corpus, small_config(), &r).unwrap();
        let b = pretrain(&rooms, &corpus, small_config(), &r).unwrap();
        assert_eq!(bytes(&a.params), bytes(&b.params));
        let c = pretrain(
            &rooms,
            &corpus,
            small_config(),
            &TrainRecipe { seed: 4, ..r },
        )
        .unwrap();
        assert_ne!(bytes(&a.params), bytes(&c.params));
    }

    #[test]
    fn missing_geometry_is_reported() {
        let mut corpus = small_corpus();
        corpus.rooms.get_mut("room000").unwrap().geometry = None;
        let r = recipe(TrainMode::Pretrain, 1);
        for id in ["room000", "nowhere"] {
            assert!(matches!(
                pretrain(&[id.to_string()], &corpus, small_config(), &r),
                Err(TrainingError::MissingGeometry(_))
            ));
        }
    }

    fn base_and_room() -> (ModelParams, TrainingCorpus) {
        let corpus = small_corpus();
        let rooms = vec!["room000".to_string(), "room001".to_string()];
        let base = pretrain(
            &rooms,
            &corpus,
            small_config(),
            &recipe(TrainMode::Pretrain, 5),
        )
        .unwrap()
        .params;
        (base, corpus)
    }

    #[test]
    fn zero_epoch_finetuning_changes_nothing() {
        let (base, corpus) = base_and_room();
        let room = &corpus.rooms["room003"];
        let geom = room.geometry.as_ref().unwrap();
        let enroll = &room.recordings[..5];
        let lora = finetune(&base, enroll, geom, &recipe(TrainMode::FinetuneLora, 0)).unwrap();
        let adapters = lora.adapters.unwrap();
        for s in &adapters.shapes {
            assert!(adapters.values[s.b()].iter().all(|&b| b == 0.0));
        }
        let pairs = [(enroll[0].src, enroll[0].rcv)];
        assert_eq!(
            infer(&base, Some(&adapters), &pairs, geom, 4).unwrap(),
            infer(&base, None, &pairs, geom, 4).unwrap()
        );
        let full = finetune(&base, enroll, geom, &recipe(TrainMode::FinetuneFull, 0)).unwrap();
        assert_eq!(full.params, base);
    }

    #[test]
    fn finetuning_lowers_enrollment_loss() {
        let (base, corpus) = base_and_room();
        let room = &corpus.rooms["room003"];
        let geom = room.geometry.as_ref().unwrap();
        let enroll = &room.recordings[..5];
        let before = recordings_loss(&base, None, enroll, geom).unwrap();
        for mode in [TrainMode::FinetuneLora, TrainMode::FinetuneFull] {
            let mut r = recipe(mode, 30);
            r.batch_size = 5;
            let run = finetune(&base, enroll, geom, &r).unwrap();
            if mode == TrainMode::FinetuneLora {
                assert_eq!(run.params, base);
            }
            let after = recordings_loss(&run.params, run.adapters.as_ref(), enroll, geom).unwrap();
            assert!(after < before, "{mode:?}: {before} -> {after}");
        }
    }

    #[test]
    fn inference_shape_and_determinism() {
        let (base, corpus) = base_and_room();
        let room = &corpus.rooms["room002"];
        let geom = room.geometry.as_ref().unwrap();
        let p = (room.recordings[0].src, room.recordings[0].rcv);
        let out = infer(&base, None, &[p, p], geom, 8).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), small_config().rir_samples);
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn finetuning_improves_edf_at_enrollment_positions() {
        let (base, corpus) = base_and_room();
        let room = &corpus.rooms["room003"];
        let geom = room.geometry.as_ref().unwrap();
        let enroll = &room.recordings[..5];
        let pairs: Vec<_> = enroll.iter().map(|r| (r.src, r.rcv)).collect();
        let bands = small_recipe().bands;
        let edf = |irs: Vec<ImpulseResponse>| {
            irs.iter()
                .zip(enroll)
                .map(|(p, r)| metric_errors(p, &r.ir, &bands).unwrap().edf_err_db)
                .sum::<f64>()
                / enroll.len() as f64
        };
        let before = edf(infer(&base, None, &pairs, geom, 16).unwrap());
        let mut r = recipe(TrainMode::FinetuneFull, 60);
        r.batch_size = 5;
        let run = finetune(&base, enroll, geom, &r).unwrap();
        let after = edf(infer(&run.params, None, &pairs, geom, 16).unwrap());
        assert!(after < before, "{before} -> {after}");
    }
}
