//! Acceptance criteria, run in order with one PASS/FAIL line each.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rirfield::geometry::{poisson_disk_sample, BoundingBox, TriangleMesh};
use rirfield::nafield::{
    forward, gradients, lora_init, loss, Example, FieldConfig, LoraAdapters, ModelParams,
    RoomContext, SpectrogramTarget, StftConfig,
};
use rirfield::retrieval::{rank_rooms, RetrievalIndex, RirRecord};
use rirfield::rir::{rt60_single, schroeder_edc, BandSpec, ImpulseResponse, Rt60Fingerprint};
use rirfield::simulator::{image_source_rir, ShoeboxRoom};
use rirfield::training::{run_experiment, Condition, ExperimentConfig, ExperimentReport};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_budget(o: Outcome, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    match budget {
        Some(b) if elapsed > b => outcome(
            false,
            format!("{}; took {:.1?}, budget {:.0?}", o.detail, elapsed, b),
        ),
        _ => outcome(o.pass, format!("{} ({:.1?})", o.detail, elapsed)),
    }
}

// 1
fn metric_oracle() -> Outcome {
    let fs = 16_000u32;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for tau in [0.05, 0.1, 0.3, 1.0] {
        let n = (8.0 * tau * fs as f64) as usize;
        let samples = (0..n)
            .map(|k| (-(k as f64) / fs as f64 / tau).exp())
            .collect();
        let ir = ImpulseResponse::new(samples, fs).unwrap();
        let est = rt60_single(&schroeder_edc(&ir).unwrap()).unwrap();
        let want = 3.0 * tau * 10f64.ln();
        let rel = (est - want).abs() / want;
        worst = worst.max(rel);
        notes.push(format!("tau {tau}: {est:.4} s vs {want:.4} s"));
    }
    outcome(
        worst <= 0.02,
        format!("{}; worst {:.2}%", notes.join(", "), 100.0 * worst),
    )
}

// 2
fn retrieval_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fp =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..6).map(|_| rng.gen_range(0.1..2.0)).collect() };
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(10_000);
    for i in 0..10_000 {
        // every 50th record duplicates an earlier fingerprint so ties occur
        let v = if i % 50 == 49 {
            raw[i - 7].clone()
        } else {
            fp(&mut rng)
        };
        raw.push(v);
    }
    let records: Vec<RirRecord> = raw
        .iter()
        .enumerate()
        .map(|(i, v)| RirRecord {
            rir_id: format!("r{i:05}"),
            room_id: format!("room{:03}", i % 300),
            src: [0.0; 3],
            rcv: [1.0; 3],
            fingerprint: Rt60Fingerprint::new(v.clone()).unwrap(),
        })
        .collect();
    let index = RetrievalIndex::new(records, BandSpec::default()).unwrap();
    let m = 10;
    for qi in 0..1000 {
        let q = if qi % 10 == 0 {
            raw[qi * 7].clone()
        } else {
            fp(&mut rng)
        };
        let got = index
            .query_nearest(&Rt60Fingerprint::new(q.clone()).unwrap(), m)
            .unwrap();
        let mut all: Vec<(f64, usize)> = raw
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut s: f64 = 0.0;
                for k in 0..6 {
                    s += (q[k] - v[k]).powi(2);
                }
                (s.sqrt(), i)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for (j, ((rec, d), (od, oi))) in got.iter().zip(&all[..m]).enumerate() {
            if rec.rir_id != format!("r{oi:05}") || (d - od).abs() > 1e-12 {
                return outcome(
                    false,
                    format!(
                        "query {qi}, rank {j}: {} at {d} vs r{oi:05} at {od}",
                        rec.rir_id
                    ),
                );
            }
        }
        if got.len() != m {
            return outcome(false, format!("query {qi} returned {} records", got.len()));
        }
    }
    outcome(
        true,
        "1000 queries, M = 10, ids and distances match the full scan",
    )
}

// 3
fn ranking_arithmetic() -> Outcome {
    let rec = |id: &str, room: &str, v: [f64; 2]| RirRecord {
        rir_id: id.into(),
        room_id: room.into(),
        src: [0.0; 3],
        rcv: [1.0; 3],
        fingerprint: Rt60Fingerprint::new(v.to_vec()).unwrap(),
    };
    let bands = BandSpec::new(vec![500.0, 1000.0]).unwrap();
    let fp = |v: [f64; 2]| Rt60Fingerprint::new(v.to_vec()).unwrap();
    let summary = |idx: &RetrievalIndex, qs: &[[f64; 2]], m: usize| -> Vec<(String, usize)> {
        let prints: Vec<_> = qs.iter().map(|&q| fp(q)).collect();
        rank_rooms(idx, &prints, m)
            .unwrap()
            .entries()
            .iter()
            .map(|r| (r.room_id.clone(), r.count))
            .collect()
    };
    let owned = |v: &[(&str, usize)]| -> Vec<(String, usize)> {
        v.iter().map(|(s, c)| (s.to_string(), *c)).collect()
    };

    // N = 1, m = 3 -> X, X, Y
    let idx = RetrievalIndex::new(
        vec![
            rec("x1", "X", [0.50, 0.50]),
            rec("x2", "X", [0.52, 0.50]),
            rec("y1", "Y", [0.55, 0.50]),
            rec("z1", "Z", [2.00, 2.00]),
        ],
        bands.clone(),
    )
    .unwrap();
    let one = summary(&idx, &[[0.5, 0.5]], 3);
    let one_ok = one == owned(&[("X", 2), ("Y", 1)]);

    // N = 2, m = 2 -> [X, Y] and [Y, Z]; X's best distance decides X against Z
    let fixture = |x: f64, z: f64| {
        RetrievalIndex::new(
            vec![
                rec("x1", "X", [1.0 + x, 1.0]),
                rec("y1", "Y", [1.03, 1.0]),
                rec("y2", "Y", [3.02, 3.0]),
                rec("z1", "Z", [3.0 + z, 3.0]),
            ],
            bands.clone(),
        )
        .unwrap()
    };
    let x_closer = summary(&fixture(0.01, 0.025), &[[1.0, 1.0], [3.0, 3.0]], 2);
    let z_closer = summary(&fixture(0.02, 0.005), &[[1.0, 1.0], [3.0, 3.0]], 2);
    let two_ok = x_closer == owned(&[("Y", 2), ("X", 1), ("Z", 1)])
        && z_closer == owned(&[("Y", 2), ("Z", 1), ("X", 1)]);
    outcome(
        one_ok && two_ok,
        format!("[X,X,Y] -> {one:?}; [X,Y]+[Y,Z] -> {x_closer:?} / {z_closer:?}"),
    )
}

fn context(k: usize, seed: u64, dims: [f64; 3]) -> RoomContext {
    let bbox = BoundingBox::new([0.0; 3], dims).unwrap();
    let mesh = TriangleMesh::from_box(&bbox).unwrap();
    RoomContext::new(bbox, &poisson_disk_sample(&mesh, "box", k, seed).unwrap())
}

fn randomize(a: &mut LoraAdapters, rng: &mut ChaCha8Rng, scale: f64) {
    a.values
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-scale..scale));
}

// 4
fn lora_identity_and_merge() -> Outcome {
    let cfg = FieldConfig {
        num_bounce_points: 8,
        encoding_levels: 4,
        hidden_width: 32,
        hidden_layers: 3,
        stft: StftConfig {
            window: 32,
            hop: 16,
            fft: 32,
        },
        rir_samples: 320,
        sample_rate: 16000,
    };
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(cfg, seed).unwrap();
        let rank = 1 + (seed as usize % 4);
        let dims = [
            rng.gen_range(3.0..8.0),
            rng.gen_range(3.0..7.0),
            rng.gen_range(2.5..4.0),
        ];
        let room = context(cfg.num_bounce_points, seed, dims);
        let src = dims.map(|d| rng.gen_range(0.3..d - 0.3));
        let rcv = dims.map(|d| rng.gen_range(0.3..d - 0.3));
        let base = forward(&params, None, &room, src, rcv).unwrap();
        let fresh = lora_init(&params, rank, seed).unwrap();
        let ident = forward(&params, Some(&fresh), &room, src, rcv).unwrap();
        if ident.values != base.values {
            return outcome(false, format!("seed {seed}: B = 0 changed the output"));
        }
        let mut adapters = fresh;
        randomize(&mut adapters, &mut rng, 0.3);
        let adapted = forward(&params, Some(&adapters), &room, src, rcv).unwrap();
        let merged = forward(&params.merged(&adapters).unwrap(), None, &room, src, rcv).unwrap();
        for (u, v) in adapted.values.iter().zip(&merged.values) {
            let scale = u.abs().max(v.abs());
            if scale > 0.0 {
                worst = worst.max((u - v).abs() / scale);
            }
        }
        if adapted.values == base.values {
            return outcome(false, format!("seed {seed}: random adapters had no effect"));
        }
    }
    outcome(
        worst <= 1e-10,
        format!("100 seeds, bitwise identity, worst merge error {worst:.2e}"),
    )
}

// 5
fn gradient_correctness() -> Outcome {
    let cfg = FieldConfig {
        num_bounce_points: 4,
        encoding_levels: 2,
        hidden_width: 16,
        hidden_layers: 2,
        stft: StftConfig {
            window: 16,
            hop: 8,
            fft: 16,
        },
        rir_samples: 56,
        sample_rate: 16000,
    };
    assert_eq!((cfg.frames(), cfg.bins()), (8, 9));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParams::init(cfg, 0).unwrap();
    let room = context(4, 0, [4.0, 3.0, 2.5]);
    let targets: Vec<SpectrogramTarget> = (0..2)
        .map(|_| {
            let v = (0..cfg.output_len())
                .map(|i| -0.4 * (i / cfg.bins()) as f64 + rng.gen_range(-1.0..1.0))
                .collect();
            SpectrogramTarget::new(cfg.frames(), cfg.bins(), v).unwrap()
        })
        .collect();
    let batch = [
        Example {
            room: &room,
            src: [1.0, 0.6, 0.8],
            rcv: [3.1, 2.2, 1.9],
            target: &targets[0],
        },
        Example {
            room: &room,
            src: [0.4, 2.5, 1.1],
            rcv: [2.0, 0.7, 0.3],
            target: &targets[1],
        },
    ];
    let batch_loss = |p: &ModelParams, a: Option<&LoraAdapters>| {
        batch
            .iter()
            .map(|e| loss(&forward(p, a, e.room, e.src, e.rcv).unwrap(), e.target).unwrap())
            .sum::<f64>()
            / batch.len() as f64
    };
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-8 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    };

    let full = gradients(&params, None, &batch).unwrap().base.unwrap();
    for i in 0..params.len() {
        let mut p = params.clone();
        p.values_mut()[i] += h;
        let plus = batch_loss(&p, None);
        p.values_mut()[i] -= 2.0 * h;
        check(full[i], plus, batch_loss(&p, None));
    }
    let mut adapters = lora_init(&params, 2, 0).unwrap();
    randomize(&mut adapters, &mut rng, 0.1);
    let lora = gradients(&params, Some(&adapters), &batch).unwrap();
    if lora.base.is_some() {
        return outcome(false, "LoRA mode produced base gradients");
    }
    let lora = lora.lora.unwrap();
    for i in 0..adapters.len() {
        let mut a = adapters.clone();
        a.values[i] += h;
        let plus = batch_loss(&params, Some(&a));
        a.values[i] -= 2.0 * h;
        check(lora[i], plus, batch_loss(&params, Some(&a)));
    }
    outcome(
        worst <= 1e-4,
        format!(
            "{} base and {} adapter values, worst relative error {worst:.2e}",
            params.len(),
            adapters.len()
        ),
    )
}

fn comparison_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.recipe.rooms = 30;
    cfg.corpus.recipe.pairs_per_room = 25;
    cfg.corpus.recipe.absorption_min = 0.2;
    cfg.corpus.enrollment = 5;
    cfg.corpus.evaluation = 20;
    cfg.retrieval.m = 5;
    cfg.retrieval.limit = 5;
    cfg.model = FieldConfig {
        num_bounce_points: 32,
        encoding_levels: 6,
        hidden_width: 64,
        hidden_layers: 3,
        ..FieldConfig::default()
    };
    cfg.train.pretrain_epochs = 30;
    cfg.train.finetune_epochs = 100;
    cfg.train.batch_size = 8;
    cfg
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn detail(r: &ExperimentReport) -> String {
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    r.write_detail_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

// 6
fn end_to_end_ordering(reports: &[ExperimentReport]) -> Outcome {
    let conditions = Condition::standard();
    let none = conditions[4];
    let ours = conditions[0];
    let mut notes = Vec::new();
    let mut beats_none = true;
    for (seed, r) in SEEDS.iter().zip(reports) {
        println!(
            "  seed {seed}: retrieved {:?}, random {:?}, geometry {}",
            r.retrieved_rooms, r.random_rooms, r.geometry_room
        );
        for row in &r.rows {
            println!(
                "    {:<28} rt60 {:.4}  edf {:.4} dB  drr {:.4} dB",
                row.condition.to_string(),
                row.mean.rt60_err_pct,
                row.mean.edf_err_db,
                row.mean.drr_err_db
            );
        }
        let none_edf = r.row(none).unwrap().mean.edf_err_db;
        for c in &conditions[..4] {
            if r.row(*c).unwrap().mean.edf_err_db >= none_edf {
                beats_none = false;
                notes.push(format!("seed {seed}: {c} does not beat {none}"));
            }
        }
    }

    // pooled per-position EDF errors over all seeds
    let pooled = |c: Condition| -> Vec<f64> {
        reports
            .iter()
            .flat_map(|r| r.row(c).unwrap().per_position.iter().map(|e| e.edf_err_db))
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (best, best_mean) = conditions
        .iter()
        .map(|&c| (c, mean(&pooled(c))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let ours_errs = pooled(ours);
    let ours_mean = mean(&ours_errs);
    let tied = if best == ours {
        notes.push(format!("{ours} is best at {ours_mean:.4} dB"));
        true
    } else {
        let d: Vec<f64> = ours_errs
            .iter()
            .zip(pooled(best))
            .map(|(a, b)| a - b)
            .collect();
        let dm = mean(&d);
        let sd = (d.iter().map(|x| (x - dm).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        let margin = 1.96 * sd / (d.len() as f64).sqrt();
        notes.push(format!(
            "best {best} at {best_mean:.4} dB; {ours} at {ours_mean:.4} dB, paired gap {dm:.4} dB vs tie margin {margin:.4} dB"
        ));
        dm <= margin
    };
    notes.insert(
        0,
        format!(
            "(a) {}, (b) {}",
            if beats_none { "holds" } else { "fails" },
            if tied { "holds" } else { "fails" }
        ),
    );
    outcome(beats_none && tied, notes.join("; "))
}

// 7
fn simulator_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let dims = [
            rng.gen_range(3.0..8.0),
            rng.gen_range(3.0..7.0),
            rng.gen_range(2.5..4.0),
        ];
        let alpha = rng.gen_range(0.1..0.3);
        let mut room = ShoeboxRoom::uniform(dims, alpha, 16_000);
        let bands = BandSpec::default();
        room.absorption = vec![[alpha; 6]; bands.len()];
        room.bands = Some(bands);
        let sabine = room.sabine_rt60();
        let src = dims.map(|d| rng.gen_range(0.5..d - 0.5));
        let rcv = dims.map(|d| rng.gen_range(0.5..d - 0.5));
        let ir = image_source_rir(&room, src, rcv, 10_000, sabine.max(0.3)).unwrap();
        let est = rt60_single(&schroeder_edc(&ir).unwrap()).unwrap();
        let rel = (est - sabine).abs() / sabine;
        if rel > worst {
            worst = rel;
        }
        if rel > 0.25 {
            return outcome(
                false,
                format!("room {i}: {est:.3} s vs Sabine {sabine:.3} s"),
            );
        }
    }
    outcome(
        true,
        format!("20 rooms, worst deviation {:.1}%", 100.0 * worst),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut timed =
        |n: usize, name: &'static str, budget: Option<u64>, f: &mut dyn FnMut() -> Outcome| {
            let t = Instant::now();
            let o = f();
            let o = within_budget(o, t.elapsed(), budget.map(Duration::from_secs));
            println!(
                "criterion {n} {}: {name}: {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
            results.push((n, name, o));
        };
    timed(1, "metric oracle", Some(5), &mut metric_oracle);
    timed(2, "retrieval exactness", Some(10), &mut retrieval_exactness);
    timed(3, "ranking arithmetic", None, &mut ranking_arithmetic);
    timed(
        4,
        "LoRA identity and merge",
        Some(10),
        &mut lora_identity_and_merge,
    );
    timed(
        5,
        "gradient correctness",
        Some(30),
        &mut gradient_correctness,
    );

    let cfg = comparison_config();
    let mut first = Vec::new();
    timed(6, "end-to-end ordering", Some(30 * 60), &mut || {
        first = SEEDS
            .iter()
            .map(|&s| run_experiment(&cfg, &Condition::standard(), s).unwrap())
            .collect();
        end_to_end_ordering(&first)
    });
    timed(7, "simulator oracle", None, &mut simulator_oracle);
    timed(8, "determinism", None, &mut || {
        for (&s, r) in SEEDS.iter().zip(&first) {
            let again = run_experiment(&cfg, &Condition::standard(), s).unwrap();
            if detail(&again) != detail(r) {
                return outcome(false, format!("seed {s}: reports differ"));
            }
        }
        outcome(true, "three seeds rerun, reports byte-identical")
    });

    let failed: Vec<_> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
