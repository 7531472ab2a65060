use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    finetune, infer, pretrain, Recording, RoomGeometry, TrainMode, TrainRecipe, Trained,
    TrainingCorpus, TrainingError,
};
use crate::manifest::Manifest;
use crate::nafield::{FieldConfig, LoraAdapters, ModelParams};
use crate::retrieval::{
    rank_rooms, retrieve_geometry, select_pretraining_rooms, select_random_rooms, RetrievalIndex,
    RirRecord, RoomRanking,
};
use crate::rir::{metric_errors, multiband_rt60, ImpulseResponse, MetricErrors, Rt60Fingerprint};
use crate::seed_for;
use crate::simulator::{generate_room, CorpusRecipe};

const CORPUS_STREAM: u64 = 10;
const RANDOM_STREAM: u64 = 11;
const PRETRAIN_STREAM: u64 = 12;
const FINETUNE_STREAM: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PretrainingSet {
    Retrieved,
    Random,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinetuneMethod {
    Lora {
        rank: usize,
    },
    All,
    /// Debug condition: predictions are the ground truth itself.
    GroundTruth,
}

/// One row of the comparison: where the base model comes from and how it is adapted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub pretraining: PretrainingSet,
    pub method: FinetuneMethod,
}

impl Condition {
    pub const fn new(pretraining: PretrainingSet, method: FinetuneMethod) -> Self {
        Self {
            pretraining,
            method,
        }
    }

    /// Retrieved, Random and None pre-training with LoRA-1 or full tuning.
    pub fn standard() -> Vec<Condition> {
        use FinetuneMethod::*;
        use PretrainingSet::*;
        vec![
            Self::new(Retrieved, Lora { rank: 1 }),
            Self::new(Retrieved, All),
            Self::new(Random, Lora { rank: 1 }),
            Self::new(Random, All),
            Self::new(None, All),
        ]
    }

    pub fn set_label(&self) -> &'static str {
        match self.pretraining {
            PretrainingSet::Retrieved => "Retrieved",
            PretrainingSet::Random => "Random",
            PretrainingSet::None => "None",
        }
    }

    pub fn method_label(&self) -> String {
        match self.method {
            FinetuneMethod::Lora { rank } => format!("LoRA-{rank}"),
            FinetuneMethod::All => "All Parameters".into(),
            FinetuneMethod::GroundTruth => "Ground Truth".into(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}", self.set_label(), self.method_label())
    }
}

/// Parses `retrieved+lora-1`, `random+all`, `none+all` or `truth`.
impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "truth" {
            return Ok(Self::new(PretrainingSet::None, FinetuneMethod::GroundTruth));
        }
        let (set, method) = s
            .split_once('+')
            .ok_or_else(|| format!("condition '{s}' is not SET+METHOD"))?;
        let pretraining = match set {
            "retrieved" => PretrainingSet::Retrieved,
            "random" => PretrainingSet::Random,
            "none" => PretrainingSet::None,
            _ => return Err(format!("unknown pre-training set '{set}'")),
        };
        let method = match method {
            "all" => FinetuneMethod::All,
            m => match m.strip_prefix("lora-").map(str::parse) {
                Some(Ok(rank)) if rank > 0 => FinetuneMethod::Lora { rank },
                _ => return Err(format!("unknown fine-tuning method '{m}'")),
            },
        };
        Ok(Self::new(pretraining, method))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometrySource {
    /// Borrow the top-ranked retrieved room's geometry.
    Retrieved,
    /// Use the target room's own geometry.
    Provided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    #[serde(flatten)]
    pub recipe: CorpusRecipe,
    /// Load this manifest instead of simulating a corpus.
    pub manifest: Option<PathBuf>,
    /// Defaults to the last room.
    pub target_room: Option<String>,
    pub enrollment: usize,
    pub evaluation: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            recipe: CorpusRecipe {
                rooms: 30,
                pairs_per_room: 25,
                ..CorpusRecipe::default()
            },
            manifest: None,
            target_room: None,
            enrollment: 5,
            evaluation: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSection {
    pub m: usize,
    pub limit: usize,
    pub geometry: GeometrySource,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            m: 5,
            limit: 100,
            geometry: GeometrySource::Retrieved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub finetune_step_size: f64,
    pub synthesis_iterations: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            pretrain_epochs: 20,
            finetune_epochs: 50,
            batch_size: 8,
            step_size: 1e-3,
            finetune_step_size: 1e-3,
            synthesis_iterations: 32,
        }
    }
}

/// Experiment config file: `[corpus]`, `[retrieval]`, `[model]`, `[train]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusSection,
    pub retrieval: RetrievalSection,
    pub model: FieldConfig,
    pub train: TrainSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainingError> {
        toml::from_str(text).map_err(|e| TrainingError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn pretrain_recipe(&self, seed: u64) -> TrainRecipe {
        TrainRecipe {
            mode: TrainMode::Pretrain,
            epochs: self.train.pretrain_epochs,
            batch_size: self.train.batch_size,
            step_size: self.train.step_size,
            seed,
            ..TrainRecipe::default()
        }
    }

    pub fn finetune_recipe(&self, method: FinetuneMethod, seed: u64) -> TrainRecipe {
        let (mode, lora_rank) = match method {
            FinetuneMethod::Lora { rank } => (TrainMode::FinetuneLora, Some(rank)),
            _ => (TrainMode::FinetuneFull, None),
        };
        TrainRecipe {
            mode,
            epochs: self.train.finetune_epochs,
            batch_size: self.train.batch_size,
            step_size: self.train.finetune_step_size,
            seed,
            lora_rank,
            ..TrainRecipe::default()
        }
    }
}

/// Held-out target room: enrollment recordings and evaluation recordings.
#[derive(Debug, Clone)]
pub struct TargetSplit {
    pub room_id: String,
    pub geometry: Option<RoomGeometry>,
    pub enrollment: Vec<Recording>,
    pub evaluation: Vec<Recording>,
}

/// The first `enrollment` recordings of the room (by id) enroll, the next `evaluation` are held out.
pub fn split_target(
    corpus: &TrainingCorpus,
    room_id: &str,
    enrollment: usize,
    evaluation: usize,
) -> Result<TargetSplit, TrainingError> {
    let room = corpus.rooms.get(room_id).ok_or_else(|| {
        TrainingError::InvalidExperiment(format!("unknown target room '{room_id}'"))
    })?;
    let mut recs = room.recordings.clone();
    recs.sort_by(|a, b| a.rir_id.cmp(&b.rir_id));
    if enrollment == 0 || evaluation == 0 || recs.len() < enrollment + evaluation {
        return Err(TrainingError::InvalidExperiment(format!(
            "room '{room_id}' has {} recordings, need {enrollment} + {evaluation}",
            recs.len()
        )));
    }
    let evaluation = recs[enrollment..enrollment + evaluation].to_vec();
    recs.truncate(enrollment);
    Ok(TargetSplit {
        room_id: room_id.to_string(),
        geometry: room.geometry.clone(),
        enrollment: recs,
        evaluation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub condition: Condition,
    pub mean: MetricErrors,
    /// Errors at each evaluation position, in evaluation order.
    pub per_position: Vec<MetricErrors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub target_room: String,
    pub geometry_room: String,
    pub retrieved_rooms: Vec<String>,
    pub random_rooms: Vec<String>,
    pub rows: Vec<ConditionResult>,
}

impl ExperimentReport {
    pub fn row(&self, condition: Condition) -> Option<&ConditionResult> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "pretraining_set,finetune_method,rt60_err_pct,edf_err_db,drr_err_db"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6}",
                r.condition.set_label(),
                r.condition.method_label(),
                r.mean.rt60_err_pct,
                r.mean.edf_err_db,
                r.mean.drr_err_db
            )?;
        }
        Ok(())
    }

    /// Per-position errors of every condition.
    pub fn write_detail_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "pretraining_set,finetune_method,position,rt60_err_pct,edf_err_db,drr_err_db"
        )?;
        for r in &self.rows {
            for (i, e) in r.per_position.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{i},{:.6},{:.6},{:.6}",
                    r.condition.set_label(),
                    r.condition.method_label(),
                    e.rt60_err_pct,
                    e.edf_err_db,
                    e.drr_err_db
                )?;
            }
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn fingerprint_index(
    corpus: &TrainingCorpus,
    exclude: &str,
    cfg: &ExperimentConfig,
) -> Result<RetrievalIndex, TrainingError> {
    let bands = &cfg.corpus.recipe.bands;
    let mut records = Vec::new();
    for (room_id, room) in corpus.rooms.iter().filter(|(id, _)| id.as_str() != exclude) {
        for r in &room.recordings {
            match multiband_rt60(&r.ir, bands) {
                Ok(fingerprint) => records.push(RirRecord {
                    rir_id: r.rir_id.clone(),
                    room_id: room_id.clone(),
                    src: r.src,
                    rcv: r.rcv,
                    fingerprint,
                }),
                Err(e) => log::warn!("not indexing {}: {e}", r.rir_id),
            }
        }
    }
    Ok(RetrievalIndex::new(records, bands.clone())?)
}

fn rank_for_target(
    index: &RetrievalIndex,
    split: &TargetSplit,
    cfg: &ExperimentConfig,
) -> Result<RoomRanking, TrainingError> {
    let bands = &cfg.corpus.recipe.bands;
    let prints = split
        .enrollment
        .iter()
        .map(|r| multiband_rt60(&r.ir, bands))
        .collect::<Result<Vec<Rt60Fingerprint>, _>>()?;
    Ok(rank_rooms(index, &prints, cfg.retrieval.m)?)
}

/// Runs every condition for one target room and reports mean errors over
/// the held-out positions.
pub fn evaluate_conditions(
    corpus: &TrainingCorpus,
    split: &TargetSplit,
    conditions: &[Condition],
    cfg: &ExperimentConfig,
    master_seed: u64,
) -> Result<ExperimentReport, TrainingError> {
    let index = fingerprint_index(corpus, &split.room_id, cfg)?;
    let ranking = rank_for_target(&index, split, cfg)?;
    let retrieved_rooms = select_pretraining_rooms(&ranking, cfg.retrieval.limit);
    let random_rooms = select_random_rooms(
        &index,
        retrieved_rooms.len(),
        seed_for(master_seed, &[RANDOM_STREAM]),
    )?;
    log::info!("retrieved rooms: {retrieved_rooms:?}");
    log::info!("random rooms: {random_rooms:?}");

    let geometry = match (cfg.retrieval.geometry, &split.geometry) {
        (GeometrySource::Provided, Some(g)) => g.clone(),
        (GeometrySource::Provided, None) => {
            return Err(TrainingError::MissingGeometry(split.room_id.clone()))
        }
        (GeometrySource::Retrieved, _) => {
            let entries: Vec<_> = corpus
                .room_entries()
                .into_iter()
                .filter(|e| e.room_id != split.room_id)
                .collect();
            let found = retrieve_geometry(&ranking, &entries)?;
            corpus
                .rooms
                .get(&found.room_id)
                .and_then(|r| r.geometry.clone())
                .ok_or(TrainingError::MissingGeometry(found.room_id))?
        }
    };

    let pretrain_seed = seed_for(master_seed, &[PRETRAIN_STREAM]);
    let finetune_seed = seed_for(master_seed, &[FINETUNE_STREAM]);
    let pairs: Vec<_> = split.evaluation.iter().map(|r| (r.src, r.rcv)).collect();
    let mut bases: BTreeMap<PretrainingSet, ModelParams> = BTreeMap::new();
    let mut rows = Vec::with_capacity(conditions.len());
    for &condition in conditions {
        let predictions: Vec<ImpulseResponse> = if condition.method == FinetuneMethod::GroundTruth {
            split.evaluation.iter().map(|r| r.ir.clone()).collect()
        } else {
            let base = match bases.entry(condition.pretraining) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(match condition.pretraining {
                    PretrainingSet::Retrieved => {
                        pretrain(
                            &retrieved_rooms,
                            corpus,
                            cfg.model,
                            &cfg.pretrain_recipe(pretrain_seed),
                        )?
                        .params
                    }
                    PretrainingSet::Random => {
                        pretrain(
                            &random_rooms,
                            corpus,
                            cfg.model,
                            &cfg.pretrain_recipe(pretrain_seed),
                        )?
                        .params
                    }
                    PretrainingSet::None => super::initial_params(cfg.model, pretrain_seed, &[])?,
                }),
            };
            let recipe = cfg.finetune_recipe(condition.method, finetune_seed);
            let Trained {
                params, adapters, ..
            } = finetune(base, &split.enrollment, &geometry, &recipe)?;
            predict(&params, adapters.as_ref(), &pairs, &geometry, cfg)?
        };
        let per_position = predictions
            .iter()
            .zip(&split.evaluation)
            .map(|(p, r)| {
                metric_errors(p, &r.ir, &cfg.corpus.recipe.bands).map_err(|e| {
                    TrainingError::InvalidExperiment(format!("{condition} at {}: {e}", r.rir_id))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mean = MetricErrors::mean(&per_position);
        log::info!("{condition}: edf {:.4} dB", mean.edf_err_db);
        rows.push(ConditionResult {
            condition,
            mean,
            per_position,
        });
    }
    Ok(ExperimentReport {
        target_room: split.room_id.clone(),
        geometry_room: geometry.room_id,
        retrieved_rooms,
        random_rooms,
        rows,
    })
}

fn predict(
    params: &ModelParams,
    adapters: Option<&LoraAdapters>,
    pairs: &[([f64; 3], [f64; 3])],
    geometry: &RoomGeometry,
    cfg: &ExperimentConfig,
) -> Result<Vec<ImpulseResponse>, TrainingError> {
    infer(
        params,
        adapters,
        pairs,
        geometry,
        cfg.train.synthesis_iterations,
    )
}

/// Loads or simulates the corpus described by `cfg` under `master_seed`.
pub fn experiment_corpus(
    cfg: &ExperimentConfig,
    master_seed: u64,
) -> Result<TrainingCorpus, TrainingError> {
    match &cfg.corpus.manifest {
        Some(path) => TrainingCorpus::from_manifest(&Manifest::load(path)?),
        None => {
            let seed = seed_for(master_seed, &[CORPUS_STREAM]);
            let rooms = (0..cfg.corpus.recipe.rooms)
                .map(|i| generate_room(&cfg.corpus.recipe, seed, i))
                .collect::<Result<Vec<_>, _>>()?;
            TrainingCorpus::from_generated(rooms)
        }
    }
}

/// Full pipeline: corpus, target split, retrieval, training and evaluation.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    conditions: &[Condition],
    master_seed: u64,
) -> Result<ExperimentReport, TrainingError> {
    let corpus = experiment_corpus(cfg, master_seed)?;
    let target = match &cfg.corpus.target_room {
        Some(t) => t.clone(),
        None => corpus
            .rooms
            .keys()
            .next_back()
            .cloned()
            .ok_or_else(|| TrainingError::InvalidExperiment("empty corpus".into()))?,
    };
    let split = split_target(
        &corpus,
        &target,
        cfg.corpus.enrollment,
        cfg.corpus.evaluation,
    )?;
    evaluate_conditions(&corpus, &split, conditions, cfg, master_seed)
}
