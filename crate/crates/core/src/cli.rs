//! Command-line front end. `run` parses arguments, executes one subcommand and
//! returns the process exit code: 0 on success, 1 on a pipeline error, 2 on a
//! usage error.

use std::error::Error as StdError;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::geometry::{load_obj, BoundingBox, Point3};
use crate::manifest::{read_jsonl, Manifest};
use crate::nafield::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::retrieval::{
    build_index, rank_rooms, read_sidecar, retrieve_geometry, select_pretraining_rooms,
    select_random_rooms, write_sidecar,
};
use crate::rir::{drr, multiband_rt60, read_wav, rt60_single, schroeder_edc, write_wav, BandSpec};
use crate::simulator::{generate_corpus, CorpusRecipe};
use crate::training::{
    experiment_corpus, finetune, infer, pretrain, split_target, Condition, ExperimentConfig,
    Recording, RoomGeometry, TrainMode, TrainingCorpus,
};

type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug)]
struct CliError {
    context: String,
    source: BoxError,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.context, self.source)
    }
}

trait Context<T> {
    fn ctx(self, context: impl Into<String>) -> Result<T, CliError>;
}

impl<T, E: Into<BoxError>> Context<T> for Result<T, E> {
    fn ctx(self, context: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            context: context.into(),
            source: e.into(),
        })
    }
}

fn fail(context: impl Into<String>, msg: impl Into<String>) -> CliError {
    CliError {
        context: context.into(),
        source: msg.into().into(),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rirfield",
    version,
    about = "Room impulse response fields from few measurements"
)]
struct Cli {
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config seed.
    #[arg(long, global = true, env = "AFK_SEED")]
    seed: Option<u64>,
    /// Print the resolved plan and exit without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Simulate a shoebox corpus: WAVs, manifest.jsonl and rooms.jsonl.
    Simulate(SimulateArgs),
    /// Print per-band RT60 and DRR of one RIR.
    Analyze(AnalyzeArgs),
    /// Fingerprint a manifest into an index sidecar.
    BuildIndex(BuildIndexArgs),
    /// Rank corpus rooms by similarity to enrollment RIRs.
    Retrieve(RetrieveArgs),
    /// Train a base model on a set of rooms.
    Pretrain(PretrainArgs),
    /// Adapt a base model to one room.
    Finetune(FinetuneArgs),
    /// Synthesize RIRs at requested source/receiver pairs.
    Generate(GenerateArgs),
    /// Run the comparison of pre-training sets and fine-tuning methods.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// TOML corpus recipe.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rooms: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    rir: PathBuf,
    /// `default` or comma separated center frequencies in Hz.
    #[arg(long, default_value = "default")]
    bands: String,
}

#[derive(Debug, Args, Serialize)]
struct BuildIndexArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "default")]
    bands: String,
}

#[derive(Debug, Args, Serialize)]
struct RetrieveArgs {
    /// JSON Lines manifest of the enrollment RIRs.
    #[arg(long)]
    enrollment: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Neighbors per enrollment RIR.
    #[arg(short = 'M', long = "neighbors", default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    limit: usize,
    /// Also draw this many random rooms (defaults to the selected count).
    #[arg(long)]
    random: Option<usize>,
    /// Room table used to pick geometry for the target room.
    #[arg(long)]
    rooms: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GeometryArgs {
    /// OBJ mesh of the room.
    #[arg(long, group = "geom")]
    mesh: Option<PathBuf>,
    /// Box room as `x0,y0,z0,x1,y1,z1`.
    #[arg(long, group = "geom")]
    bbox: Option<String>,
    /// geometry.json written by `retrieve`.
    #[arg(long, group = "geom")]
    geometry: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PretrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Experiment TOML; its [model] and [train] sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// File with one room id per line, e.g. `selected_rooms.txt`.
    #[arg(long)]
    rooms_file: Option<PathBuf>,
    #[arg(long = "room")]
    room: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Lora,
    Full,
}

#[derive(Debug, Args, Serialize)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    enrollment: PathBuf,
    #[arg(long, value_enum, default_value = "lora")]
    method: Method,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    geometry: GeometryArgs,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    adapters: Option<PathBuf>,
    /// JSON Lines of `{"pair_id", "src", "rcv"}`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 32)]
    iterations: usize,
    #[command(flatten)]
    geometry: GeometryArgs,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma separated conditions such as `retrieved+lora-1,none+all`.
    #[arg(long)]
    conditions: Option<String>,
}

/// One requested source/receiver pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub pair_id: String,
    pub src: Point3,
    pub rcv: Point3,
}

#[derive(Debug, Serialize, Deserialize)]
struct GeometryFile {
    room_id: String,
    mesh_path: Option<PathBuf>,
    bbox: BoundingBox,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a Command,
    seed: u64,
    dry_run: bool,
}

/// Executes the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).ctx(format!("reading {}", path.display()))
}

fn experiment_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            ExperimentConfig::from_toml(&read_text(p)?).ctx(format!("parsing {}", p.display()))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn resolve_seed(cli: &Cli, config_seed: u64) -> u64 {
    cli.seed.unwrap_or(config_seed)
}

fn prepare_out(cli: &Cli, seed: u64) -> Result<(), CliError> {
    fs::create_dir_all(&cli.out).ctx(format!("creating {}", cli.out.display()))?;
    let record = RunRecord {
        command: &cli.command,
        seed,
        dry_run: cli.dry_run,
    };
    let text = serde_json::to_string_pretty(&record).ctx("encoding run record")?;
    write_file(&cli.out.join("run.json"), (text + "\n").as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).ctx(format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>, CliError> {
    Ok(std::io::BufWriter::new(
        fs::File::create(path).ctx(format!("creating {}", path.display()))?,
    ))
}

fn load_recordings(manifest_path: &Path) -> Result<Vec<Recording>, CliError> {
    let m = Manifest::load(manifest_path).ctx(format!("loading {}", manifest_path.display()))?;
    m.rirs
        .iter()
        .map(|e| {
            let path = m.resolve(&e.wav_path);
            Ok(Recording {
                rir_id: e.rir_id.clone(),
                src: e.src,
                rcv: e.rcv,
                ir: read_wav(&path).ctx(format!("reading {}", path.display()))?,
            })
        })
        .collect()
}

fn parse_bbox(s: &str) -> Result<BoundingBox, CliError> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .ctx("parsing --bbox")?;
    if v.len() != 6 {
        return Err(fail(
            "parsing --bbox",
            "expected six comma separated numbers",
        ));
    }
    BoundingBox::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]).ctx("parsing --bbox")
}

fn load_geometry(args: &GeometryArgs) -> Result<RoomGeometry, CliError> {
    if let Some(mesh) = &args.mesh {
        let m = load_obj(mesh).ctx(format!("loading {}", mesh.display()))?;
        let id = mesh
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(RoomGeometry {
            room_id: id,
            bbox: m.bounding_box(),
            mesh: m,
        });
    }
    if let Some(b) = &args.bbox {
        return RoomGeometry::from_box("target", parse_bbox(b)?).ctx("building box geometry");
    }
    if let Some(path) = &args.geometry {
        let g: GeometryFile =
            serde_json::from_str(&read_text(path)?).ctx(format!("parsing {}", path.display()))?;
        return match g.mesh_path {
            Some(mesh) => {
                let m = load_obj(&mesh).ctx(format!("loading {}", mesh.display()))?;
                Ok(RoomGeometry {
                    room_id: g.room_id,
                    bbox: m.bounding_box(),
                    mesh: m,
                })
            }
            None => RoomGeometry::from_box(&g.room_id, g.bbox).ctx("building box geometry"),
        };
    }
    Err(fail(
        "geometry",
        "one of --mesh, --bbox or --geometry is required",
    ))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Analyze(a) => analyze(cli, a),
        Command::BuildIndex(a) => build(cli, a),
        Command::Retrieve(a) => retrieve(cli, a),
        Command::Pretrain(a) => pretrain_cmd(cli, a),
        Command::Finetune(a) => finetune_cmd(cli, a),
        Command::Generate(a) => generate(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), CliError> {
    let mut recipe: CorpusRecipe = match &a.config {
        Some(p) => toml::from_str(&read_text(p)?).ctx(format!("parsing {}", p.display()))?,
        None => CorpusRecipe::default(),
    };
    if let Some(r) = a.rooms {
        recipe.rooms = r;
    }
    if let Some(p) = a.pairs {
        recipe.pairs_per_room = p;
    }
    let seed = resolve_seed(cli, 0);
    if cli.dry_run {
        println!(
            "simulate {} rooms x {} pairs ({} RIRs, {:.2} s at {} Hz) into {}",
            recipe.rooms,
            recipe.pairs_per_room,
            recipe.rooms * recipe.pairs_per_room,
            recipe.length_s,
            recipe.sample_rate,
            cli.out.display()
        );
        return Ok(());
    }
    prepare_out(cli, seed)?;
    let text = toml::to_string(&recipe).ctx("encoding recipe")?;
    write_file(&cli.out.join("recipe.toml"), text.as_bytes())?;
    let m = generate_corpus(&recipe, seed, &cli.out).ctx("simulating corpus")?;
    println!("wrote {} RIRs in {} rooms", m.rirs.len(), m.rooms.len());
    Ok(())
}

fn analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<(), CliError> {
    let bands = BandSpec::parse(&a.bands).ctx("parsing --bands")?;
    if cli.dry_run {
        println!("analyze {} over {} bands", a.rir.display(), bands.len());
        return Ok(());
    }
    let ir = read_wav(&a.rir).ctx(format!("reading {}", a.rir.display()))?;
    let fp = multiband_rt60(&ir, &bands).ctx("estimating RT60")?;
    let broadband = schroeder_edc(&ir)
        .and_then(|e| rt60_single(&e))
        .ctx("estimating RT60")?;
    println!("{:>10}  {:>8}", "band_hz", "rt60_s");
    for (c, v) in bands.centers().iter().zip(fp.as_slice()) {
        println!("{c:>10}  {v:>8.4}");
    }
    println!("{:>10}  {broadband:>8.4}", "broadband");
    println!("{:>10}  {:>8.3}", "drr_db", drr(&ir));
    Ok(())
}

fn build(cli: &Cli, a: &BuildIndexArgs) -> Result<(), CliError> {
    let bands = BandSpec::parse(&a.bands).ctx("parsing --bands")?;
    let m = Manifest::load(&a.manifest).ctx(format!("loading {}", a.manifest.display()))?;
    if cli.dry_run {
        println!("index {} RIRs over {} bands", m.rirs.len(), bands.len());
        return Ok(());
    }
    prepare_out(cli, resolve_seed(cli, 0))?;
    let (index, report) = build_index(&m, &bands).ctx("building index")?;
    let mut w = create(&cli.out.join("index.rtix"))?;
    write_sidecar(&mut w, &index).ctx("writing index")?;
    w.flush().ctx("writing index")?;
    let mut s = create(&cli.out.join("skipped.csv"))?;
    writeln!(s, "rir_id,reason").ctx("writing skipped.csv")?;
    for (id, reason) in &report.skipped {
        writeln!(s, "{id},\"{}\"", reason.replace('"', "'")).ctx("writing skipped.csv")?;
    }
    s.flush().ctx("writing skipped.csv")?;
    println!(
        "indexed {} RIRs, skipped {}",
        index.len(),
        report.skipped.len()
    );
    Ok(())
}

fn retrieve(cli: &Cli, a: &RetrieveArgs) -> Result<(), CliError> {
    let index = read_sidecar(std::io::BufReader::new(
        fs::File::open(&a.index).ctx(format!("opening {}", a.index.display()))?,
    ))
    .ctx(format!("reading {}", a.index.display()))?;
    let enrollment = load_recordings(&a.enrollment)?;
    if cli.dry_run {
        println!(
            "rank {} rooms from {} enrollment RIRs, M = {}, limit {}",
            index.room_ids().len(),
            enrollment.len(),
            a.m,
            a.limit
        );
        return Ok(());
    }
    let seed = resolve_seed(cli, 0);
    prepare_out(cli, seed)?;
    let prints = enrollment
        .iter()
        .map(|r| multiband_rt60(&r.ir, index.bands()).ctx(format!("fingerprinting {}", r.rir_id)))
        .collect::<Result<Vec<_>, _>>()?;
    let ranking = rank_rooms(&index, &prints, a.m).ctx("ranking rooms")?;
    let mut w = create(&cli.out.join("ranking.csv"))?;
    ranking.write_csv(&mut w).ctx("writing ranking.csv")?;
    w.flush().ctx("writing ranking.csv")?;
    let selected = select_pretraining_rooms(&ranking, a.limit);
    write_file(
        &cli.out.join("selected_rooms.txt"),
        lines(&selected).as_bytes(),
    )?;
    let count = a.random.unwrap_or(selected.len());
    let random = select_random_rooms(&index, count, seed).ctx("drawing random rooms")?;
    write_file(&cli.out.join("random_rooms.txt"), lines(&random).as_bytes())?;
    if let Some(rooms_path) = &a.rooms {
        let rooms = read_jsonl(rooms_path).ctx(format!("reading {}", rooms_path.display()))?;
        let g = retrieve_geometry(&ranking, &rooms).ctx("retrieving geometry")?;
        let base = rooms_path.parent().unwrap_or(Path::new(""));
        let file = GeometryFile {
            room_id: g.room_id,
            mesh_path: g.mesh_path.map(|p| base.join(p)),
            bbox: g.bbox,
        };
        let text = serde_json::to_string_pretty(&file).ctx("encoding geometry")?;
        write_file(&cli.out.join("geometry.json"), (text + "\n").as_bytes())?;
    }
    println!(
        "{} rooms ranked, {} selected",
        ranking.entries().len(),
        selected.len()
    );
    Ok(())
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

fn pretrain_cmd(cli: &Cli, a: &PretrainArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.train.pretrain_epochs = e;
    }
    let seed = resolve_seed(cli, cfg.seed);
    cfg.seed = seed;
    let mut manifest =
        Manifest::load(&a.manifest).ctx(format!("loading {}", a.manifest.display()))?;
    let mut rooms = a.room.clone();
    if let Some(f) = &a.rooms_file {
        rooms.extend(
            read_text(f)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from),
        );
    }
    if rooms.is_empty() {
        rooms = manifest.room_ids();
    }
    manifest.rirs.retain(|r| rooms.contains(&r.room_id));
    manifest.rooms.retain(|r| rooms.contains(&r.room_id));
    if cli.dry_run {
        println!(
            "pretrain on {} rooms ({} RIRs) for {} epochs: {}",
            rooms.len(),
            manifest.rirs.len(),
            cfg.train.pretrain_epochs,
            rooms.join(" ")
        );
        return Ok(());
    }
    prepare_out(cli, seed)?;
    write_file(&cli.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let corpus = TrainingCorpus::from_manifest(&manifest).ctx("loading corpus")?;
    let run =
        pretrain(&rooms, &corpus, cfg.model, &cfg.pretrain_recipe(seed)).ctx("pre-training")?;
    write_losses(&cli.out.join("losses.csv"), &run.epoch_losses)?;
    let ckpt = Checkpoint {
        config: cfg.model,
        base: Some(run.params),
        lora: None,
    };
    write_checkpoint(&cli.out.join("base.nafc"), &ckpt).ctx("writing base.nafc")?;
    println!("trained on {} rooms", rooms.len());
    Ok(())
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<(), CliError> {
    let mut text = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&format!("{i},{l:.9}\n"));
    }
    write_file(path, text.as_bytes())
}

fn load_base(path: &Path) -> Result<Checkpoint, CliError> {
    let ckpt = read_checkpoint(path).ctx(format!("reading {}", path.display()))?;
    if ckpt.base.is_none() {
        return Err(fail(
            format!("reading {}", path.display()),
            "checkpoint holds no base weights",
        ));
    }
    Ok(ckpt)
}

fn finetune_cmd(cli: &Cli, a: &FinetuneArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.train.finetune_epochs = e;
    }
    let seed = resolve_seed(cli, cfg.seed);
    cfg.seed = seed;
    let enrollment = load_recordings(&a.enrollment)?;
    let geometry = load_geometry(&a.geometry)?;
    if cli.dry_run {
        println!(
            "fine-tune ({:?}) on {} enrollment RIRs with geometry '{}' for {} epochs",
            a.method,
            enrollment.len(),
            geometry.room_id,
            cfg.train.finetune_epochs
        );
        return Ok(());
    }
    let base = load_base(&a.checkpoint)?;
    prepare_out(cli, seed)?;
    write_file(&cli.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let method = match a.method {
        Method::Lora => crate::training::FinetuneMethod::Lora { rank: a.rank },
        Method::Full => crate::training::FinetuneMethod::All,
    };
    let recipe = cfg.finetune_recipe(method, seed);
    let params = base.base.as_ref().expect("checked by load_base");
    let run = finetune(params, &enrollment, &geometry, &recipe).ctx("fine-tuning")?;
    write_losses(&cli.out.join("losses.csv"), &run.epoch_losses)?;
    let (name, ckpt) = match recipe.mode {
        TrainMode::FinetuneLora => (
            "adapters.nafc",
            Checkpoint {
                config: base.config,
                base: None,
                lora: run.adapters,
            },
        ),
        _ => (
            "finetuned.nafc",
            Checkpoint {
                config: base.config,
                base: Some(run.params),
                lora: None,
            },
        ),
    };
    write_checkpoint(&cli.out.join(name), &ckpt).ctx(format!("writing {name}"))?;
    println!("wrote {}", cli.out.join(name).display());
    Ok(())
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<(), CliError> {
    let pairs: Vec<PairEntry> =
        read_jsonl(&a.pairs).ctx(format!("reading {}", a.pairs.display()))?;
    let geometry = load_geometry(&a.geometry)?;
    if cli.dry_run {
        println!(
            "generate {} RIRs with geometry '{}'",
            pairs.len(),
            geometry.room_id
        );
        return Ok(());
    }
    let base = load_base(&a.checkpoint)?;
    let adapters =
        match &a.adapters {
            Some(p) => {
                let c = read_checkpoint(p).ctx(format!("reading {}", p.display()))?;
                if c.config != base.config {
                    return Err(fail(
                        format!("reading {}", p.display()),
                        "adapters were trained for another config",
                    ));
                }
                Some(c.lora.ok_or_else(|| {
                    fail(format!("reading {}", p.display()), "no adapter section")
                })?)
            }
            None => None,
        };
    prepare_out(cli, resolve_seed(cli, 0))?;
    let params = base.base.as_ref().expect("checked by load_base");
    let endpoints: Vec<_> = pairs.iter().map(|p| (p.src, p.rcv)).collect();
    let irs = infer(
        params,
        adapters.as_ref(),
        &endpoints,
        &geometry,
        a.iterations,
    )
    .ctx("generating")?;
    let dir = cli.out.join("wav");
    fs::create_dir_all(&dir).ctx(format!("creating {}", dir.display()))?;
    for (p, ir) in pairs.iter().zip(&irs) {
        let path = dir.join(format!("{}.wav", p.pair_id));
        write_wav(&path, ir).ctx(format!("writing {}", path.display()))?;
    }
    println!("wrote {} RIRs", irs.len());
    Ok(())
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = experiment_config(a.config.as_deref())?;
    let seed = resolve_seed(cli, cfg.seed);
    cfg.seed = seed;
    let conditions = match &a.conditions {
        Some(s) => s
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<Condition>, _>>()
            .map_err(|e| fail("parsing --conditions", e))?,
        None => Condition::standard(),
    };
    if cli.dry_run {
        let source = cfg.corpus.manifest.as_ref().map_or_else(
            || format!("{} simulated rooms", cfg.corpus.recipe.rooms),
            |m| m.display().to_string(),
        );
        println!("evaluate {} conditions on {source}", conditions.len());
        for c in &conditions {
            println!("  {c}");
        }
        return Ok(());
    }
    prepare_out(cli, seed)?;
    write_file(&cli.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let corpus = experiment_corpus(&cfg, seed).ctx("preparing corpus")?;
    let target = match &cfg.corpus.target_room {
        Some(t) => t.clone(),
        None => corpus
            .rooms
            .keys()
            .next_back()
            .cloned()
            .ok_or_else(|| fail("preparing corpus", "corpus is empty"))?,
    };
    let split = split_target(
        &corpus,
        &target,
        cfg.corpus.enrollment,
        cfg.corpus.evaluation,
    )
    .ctx("splitting target room")?;
    let report = crate::training::evaluate_conditions(&corpus, &split, &conditions, &cfg, seed)
        .ctx("evaluating")?;
    let mut w = create(&cli.out.join("report.csv"))?;
    report.write_csv(&mut w).ctx("writing report.csv")?;
    w.flush().ctx("writing report.csv")?;
    let mut d = create(&cli.out.join("report_detail.csv"))?;
    report
        .write_detail_csv(&mut d)
        .ctx("writing report_detail.csv")?;
    d.flush().ctx("writing report_detail.csv")?;
    let rooms = format!(
        "target {}\ngeometry {}\nretrieved {}\nrandom {}\n",
        report.target_room,
        report.geometry_room,
        report.retrieved_rooms.join(" "),
        report.random_rooms.join(" ")
    );
    write_file(&cli.out.join("rooms.txt"), rooms.as_bytes())?;
    print!("{}", report.csv_string());
    Ok(())
}
