use std::collections::BTreeMap;

use super::TrainingError;
use crate::geometry::{load_obj, poisson_disk_sample, BoundingBox, Point3, TriangleMesh};
use crate::manifest::{Manifest, RoomEntry};
use crate::nafield::RoomContext;
use crate::rir::{read_wav, ImpulseResponse};
use crate::seed_for;
use crate::simulator::GeneratedRoom;

/// Bounce-point seed of a room, fixed by its id so every stage sees the same points.
pub fn room_seed(room_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in room_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed_for(h, &[])
}

/// Surface geometry of a room.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomGeometry {
    pub room_id: String,
    pub bbox: BoundingBox,
    pub mesh: TriangleMesh,
}

impl RoomGeometry {
    pub fn from_box(room_id: &str, bbox: BoundingBox) -> Result<Self, TrainingError> {
        Ok(Self {
            room_id: room_id.to_string(),
            mesh: TriangleMesh::from_box(&bbox)?,
            bbox,
        })
    }

    /// The room's mesh when it has one, otherwise its bounding box as a box mesh.
    pub fn from_entry(entry: &RoomEntry, manifest: &Manifest) -> Result<Self, TrainingError> {
        match &entry.mesh_path {
            Some(path) => {
                let mesh = load_obj(&manifest.resolve(path))?;
                Ok(Self {
                    room_id: entry.room_id.clone(),
                    bbox: mesh.bounding_box(),
                    mesh,
                })
            }
            None => Self::from_box(&entry.room_id, entry.bounding_box()?),
        }
    }

    /// Normalised bounce points for a model expecting `k` of them.
    pub fn context(&self, k: usize) -> Result<RoomContext, TrainingError> {
        let bounce = poisson_disk_sample(&self.mesh, &self.room_id, k, room_seed(&self.room_id))?;
        Ok(RoomContext::new(self.bbox, &bounce))
    }
}

/// One measured or simulated RIR with its endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub rir_id: String,
    pub src: Point3,
    pub rcv: Point3,
    pub ir: ImpulseResponse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomData {
    pub entry: Option<RoomEntry>,
    pub geometry: Option<RoomGeometry>,
    pub recordings: Vec<Recording>,
}

/// Rooms keyed by id, with audio held in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCorpus {
    pub rooms: BTreeMap<String, RoomData>,
}

impl TrainingCorpus {
    pub fn from_generated(rooms: Vec<GeneratedRoom>) -> Result<Self, TrainingError> {
        let mut out = Self::default();
        for g in rooms {
            let geometry = RoomGeometry::from_box(&g.room.room_id, g.room.bounding_box()?)?;
            let recordings = g
                .rirs
                .into_iter()
                .map(|(e, ir)| Recording {
                    rir_id: e.rir_id,
                    src: e.src,
                    rcv: e.rcv,
                    ir,
                })
                .collect();
            out.rooms.insert(
                g.room.room_id.clone(),
                RoomData {
                    entry: Some(g.room),
                    geometry: Some(geometry),
                    recordings,
                },
            );
        }
        Ok(out)
    }

    /// Reads every WAV of the manifest. Rooms missing from the room table get no geometry.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self, TrainingError> {
        let mut out = Self::default();
        for entry in &manifest.rooms {
            out.rooms.insert(
                entry.room_id.clone(),
                RoomData {
                    entry: Some(entry.clone()),
                    geometry: Some(RoomGeometry::from_entry(entry, manifest)?),
                    recordings: Vec::new(),
                },
            );
        }
        for r in &manifest.rirs {
            let ir = read_wav(&manifest.resolve(&r.wav_path))?;
            out.rooms
                .entry(r.room_id.clone())
                .or_insert_with(|| RoomData {
                    entry: None,
                    geometry: None,
                    recordings: Vec::new(),
                })
                .recordings
                .push(Recording {
                    rir_id: r.rir_id.clone(),
                    src: r.src,
                    rcv: r.rcv,
                    ir,
                });
        }
        for room in out.rooms.values_mut() {
            room.recordings.sort_by(|a, b| a.rir_id.cmp(&b.rir_id));
        }
        Ok(out)
    }

    pub fn room_entries(&self) -> Vec<RoomEntry> {
        self.rooms
            .values()
            .filter_map(|r| r.entry.clone())
            .collect()
    }

    /// Copy without the given room.
    pub fn without(&self, room_id: &str) -> Self {
        let mut c = self.clone();
        c.rooms.remove(room_id);
        c
    }
}
