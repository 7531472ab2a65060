use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{image_source_rir, ShoeboxRoom, SimulatorError, WallCoefficients};
use crate::geometry::{distance, write_obj, BoundingBox, Point3, TriangleMesh};
use crate::manifest::{Manifest, RirEntry, RoomEntry};
use crate::rir::{write_wav, BandSpec, ImpulseResponse};
use crate::seed_for;

/// Recipe for a synthetic shoebox corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusRecipe {
    pub rooms: usize,
    pub pairs_per_room: usize,
    pub dims_min: Point3,
    pub dims_max: Point3,
    /// Range of each room's base absorption.
    pub absorption_min: f64,
    pub absorption_max: f64,
    /// Per-band multiplier drawn from `1 +/- band_variation` (room-wide tilt).
    pub band_variation: f64,
    /// Per-wall multiplier drawn from `1 +/- wall_variation`.
    pub wall_variation: f64,
    pub bands: BandSpec,
    pub sample_rate: u32,
    pub length_s: f64,
    pub max_order: usize,
    /// Minimum distance from any wall for sources and receivers.
    pub wall_margin: f64,
    pub min_pair_distance: f64,
    pub write_meshes: bool,
    pub room_prefix: String,
}

impl Default for CorpusRecipe {
    fn default() -> Self {
        Self {
            rooms: 20,
            pairs_per_room: 10,
            dims_min: [3.0, 3.0, 2.5],
            dims_max: [8.0, 7.0, 4.0],
            absorption_min: 0.15,
            absorption_max: 0.6,
            band_variation: 0.4,
            wall_variation: 0.15,
            bands: BandSpec::default(),
            sample_rate: 16000,
            length_s: 0.5,
            max_order: 1000,
            wall_margin: 0.5,
            min_pair_distance: 0.75,
            write_meshes: false,
            room_prefix: "room".into(),
        }
    }
}

/// One simulated room with its RIRs held in memory.
#[derive(Debug, Clone)]
pub struct GeneratedRoom {
    pub room: RoomEntry,
    pub shoebox: ShoeboxRoom,
    pub rirs: Vec<(RirEntry, ImpulseResponse)>,
}

impl CorpusRecipe {
    pub fn room_id(&self, index: usize) -> String {
        format!("{}{index:03}", self.room_prefix)
    }

    fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |m: &str| Err(SimulatorError::InvalidRoom(m.to_string()));
        if (0..3).any(|i| self.dims_min[i] > self.dims_max[i]) {
            return bad("dims_min exceeds dims_max");
        }
        if (0..3).any(|i| self.dims_min[i] <= 2.0 * self.wall_margin) {
            return bad("rooms must be wider than twice the wall margin");
        }
        if !(0.0 < self.absorption_min
            && self.absorption_min <= self.absorption_max
            && self.absorption_max <= 1.0)
        {
            return bad("absorption range must lie in (0, 1]");
        }
        if self.pairs_per_room == 0 {
            return bad("pairs_per_room must be positive");
        }
        Ok(())
    }
}

fn point_in<R: Rng>(rng: &mut R, dims: Point3, margin: f64) -> Point3 {
    [0, 1, 2].map(|i| rng.gen_range(margin..dims[i] - margin))
}

/// Simulates room `index` of the recipe. Depends only on `(recipe, seed, index)`.
pub fn generate_room(
    recipe: &CorpusRecipe,
    seed: u64,
    index: usize,
) -> Result<GeneratedRoom, SimulatorError> {
    recipe.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &[index as u64]));
    let dims = [0, 1, 2].map(|i| {
        if recipe.dims_max[i] > recipe.dims_min[i] {
            rng.gen_range(recipe.dims_min[i]..recipe.dims_max[i])
        } else {
            recipe.dims_min[i]
        }
    });
    let base = if recipe.absorption_max > recipe.absorption_min {
        rng.gen_range(recipe.absorption_min..recipe.absorption_max)
    } else {
        recipe.absorption_min
    };
    let jitter = |rng: &mut ChaCha8Rng, v: f64| {
        if v > 0.0 {
            rng.gen_range(1.0 - v..1.0 + v)
        } else {
            1.0
        }
    };
    let band_gain: Vec<f64> = (0..recipe.bands.len())
        .map(|_| jitter(&mut rng, recipe.band_variation))
        .collect();
    let wall_gain: [f64; 6] = [(); 6].map(|_| jitter(&mut rng, recipe.wall_variation));
    let absorption: Vec<WallCoefficients> = band_gain
        .iter()
        .map(|g| wall_gain.map(|w| (base * g * w).clamp(0.01, 1.0)))
        .collect();
    let shoebox = ShoeboxRoom {
        dims,
        absorption,
        bands: Some(recipe.bands.clone()),
        sample_rate: recipe.sample_rate,
        speed_of_sound: ShoeboxRoom::SPEED_OF_SOUND,
    };

    let room_id = recipe.room_id(index);
    let mut rirs = Vec::with_capacity(recipe.pairs_per_room);
    for pair in 0..recipe.pairs_per_room {
        let mut prng = ChaCha8Rng::seed_from_u64(seed_for(seed, &[index as u64, pair as u64 + 1]));
        let (src, rcv) = loop {
            let s = point_in(&mut prng, dims, recipe.wall_margin);
            let r = point_in(&mut prng, dims, recipe.wall_margin);
            if distance(s, r) >= recipe.min_pair_distance {
                break (s, r);
            }
        };
        let ir = image_source_rir(&shoebox, src, rcv, recipe.max_order, recipe.length_s)?;
        let rir_id = format!("{room_id}_p{pair:03}");
        rirs.push((
            RirEntry {
                wav_path: format!("wav/{rir_id}.wav"),
                rir_id,
                room_id: room_id.clone(),
                src,
                rcv,
                sample_rate: recipe.sample_rate,
            },
            ir,
        ));
    }
    let room = RoomEntry {
        mesh_path: recipe.write_meshes.then(|| format!("meshes/{room_id}.obj")),
        room_id,
        bbox: [[0.0; 3], dims],
        dims: Some(dims),
    };
    Ok(GeneratedRoom {
        room,
        shoebox,
        rirs,
    })
}

/// Simulates every room and writes WAVs, optional box meshes, `manifest.jsonl`
/// and `rooms.jsonl` under `out_dir`.
pub fn generate_corpus(
    recipe: &CorpusRecipe,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest, SimulatorError> {
    let io = |path: &Path, source| SimulatorError::Io {
        path: path.display().to_string(),
        source,
    };
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| io(&wav_dir, e))?;
    if recipe.write_meshes {
        let mesh_dir = out_dir.join("meshes");
        std::fs::create_dir_all(&mesh_dir).map_err(|e| io(&mesh_dir, e))?;
    }
    let mut manifest = Manifest {
        base_dir: out_dir.to_path_buf(),
        ..Default::default()
    };
    for index in 0..recipe.rooms {
        let generated = generate_room(recipe, seed, index)?;
        if let Some(mesh_path) = &generated.room.mesh_path {
            let bbox = BoundingBox::new(generated.room.bbox[0], generated.room.bbox[1])
                .map_err(|e| SimulatorError::InvalidRoom(e.to_string()))?;
            let mesh = TriangleMesh::from_box(&bbox)
                .map_err(|e| SimulatorError::InvalidRoom(e.to_string()))?;
            let path = out_dir.join(mesh_path);
            write_obj(&path, &mesh).map_err(|e| io(&path, e))?;
        }
        for (entry, ir) in &generated.rirs {
            write_wav(&out_dir.join(&entry.wav_path), ir)?;
        }
        manifest
            .rirs
            .extend(generated.rirs.into_iter().map(|(e, _)| e));
        manifest.rooms.push(generated.room);
    }
    manifest.save(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rir::{read_wav, rt60_single, schroeder_edc};

    fn small() -> CorpusRecipe {
        CorpusRecipe {
            rooms: 3,
            pairs_per_room: 2,
            length_s: 0.1,
            ..Default::default()
        }
    }

    #[test]
    fn counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&small(), 4, dir.path()).unwrap();
        assert_eq!(m.rirs.len(), 6);
        assert_eq!(m.rooms.len(), 3);
        let first = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
        let wav = std::fs::read(dir.path().join("wav/room001_p001.wav")).unwrap();

        let dir2 = tempfile::tempdir().unwrap();
        generate_corpus(&small(), 4, dir2.path()).unwrap();
        assert_eq!(
            first,
            std::fs::read(dir2.path().join("manifest.jsonl")).unwrap()
        );
        assert_eq!(
            wav,
            std::fs::read(dir2.path().join("wav/room001_p001.wav")).unwrap()
        );

        let loaded = Manifest::load(&dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(loaded.rirs, m.rirs);
        assert_eq!(loaded.rooms, m.rooms);
        let ir = read_wav(&loaded.resolve(&loaded.rirs[0].wav_path)).unwrap();
        assert_eq!(ir.len(), 1600);
    }

    #[test]
    fn twenty_by_ten() {
        let recipe = CorpusRecipe {
            rooms: 20,
            pairs_per_room: 10,
            length_s: 0.02,
            write_meshes: true,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&recipe, 0, dir.path()).unwrap();
        assert_eq!(m.rirs.len(), 200);
        let wavs = std::fs::read_dir(dir.path().join("wav")).unwrap().count();
        assert_eq!(wavs, 200);
        let mesh = crate::geometry::load_obj(&dir.path().join("meshes/room000.obj")).unwrap();
        assert_eq!(mesh.bounding_box().max, m.rooms[0].bbox[1]);
    }

    #[test]
    fn record_depends_only_on_its_index() {
        let a = generate_room(&small(), 9, 2).unwrap();
        let bigger = CorpusRecipe {
            rooms: 10,
            ..small()
        };
        let b = generate_room(&bigger, 9, 2).unwrap();
        assert_eq!(a.rirs[1].1, b.rirs[1].1);
        assert_eq!(a.room, b.room);
    }

    #[test]
    fn absorption_orders_decay() {
        let dims = [5.0, 4.0, 3.0];
        let s = [1.2, 1.3, 1.1];
        let r = [3.6, 2.7, 1.9];
        let rt = |a: f64| {
            let room = ShoeboxRoom::uniform(dims, a, 16000);
            let ir = image_source_rir(&room, s, r, 1000, 1.5).unwrap();
            rt60_single(&schroeder_edc(&ir).unwrap()).unwrap()
        };
        assert!(rt(0.05) > rt(0.5));
    }

    #[test]
    fn unwritable_output() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        assert!(matches!(
            generate_corpus(&small(), 0, &blocker.join("sub")),
            Err(SimulatorError::Io { .. })
        ));
    }
}
