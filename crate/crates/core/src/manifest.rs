//! Corpus manifests: JSON Lines records binding RIR files to rooms.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point3};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
}

/// One RIR in a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirEntry {
    pub rir_id: String,
    pub room_id: String,
    pub wav_path: String,
    pub src: Point3,
    pub rcv: Point3,
    pub sample_rate: u32,
}

/// One room of a corpus. `dims` is set for simulated shoebox rooms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomEntry {
    pub room_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<String>,
    pub bbox: [Point3; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Point3>,
}

impl RoomEntry {
    pub fn bounding_box(&self) -> Result<BoundingBox, crate::geometry::GeometryError> {
        BoundingBox::new(self.bbox[0], self.bbox[1])
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ManifestError> {
    let file = File::open(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| ManifestError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ManifestError> {
    let io = |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in rows {
        let line = serde_json::to_string(r).expect("manifest rows serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// RIR records plus the room table, with paths resolved against `base_dir`.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub rirs: Vec<RirEntry>,
    pub rooms: Vec<RoomEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub const RIR_FILE: &'static str = "manifest.jsonl";
    pub const ROOM_FILE: &'static str = "rooms.jsonl";

    /// Loads a RIR manifest and, when present, the `rooms.jsonl` next to it.
    pub fn load(manifest_path: &Path) -> Result<Self, ManifestError> {
        let base_dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let rirs: Vec<RirEntry> = read_jsonl(manifest_path)?;
        let room_path = base_dir.join(Self::ROOM_FILE);
        let rooms = if room_path.exists() {
            read_jsonl(&room_path)?
        } else {
            Vec::new()
        };
        let m = Self {
            rirs,
            rooms,
            base_dir,
        };
        m.check_unique()?;
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ManifestError> {
        write_jsonl(&dir.join(Self::RIR_FILE), &self.rirs)?;
        write_jsonl(&dir.join(Self::ROOM_FILE), &self.rooms)
    }

    fn check_unique(&self) -> Result<(), ManifestError> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.rirs {
            if !seen.insert(r.rir_id.as_str()) {
                return Err(ManifestError::DuplicateId(r.rir_id.clone()));
            }
        }
        seen.clear();
        for r in &self.rooms {
            if !seen.insert(r.room_id.as_str()) {
                return Err(ManifestError::DuplicateId(r.room_id.clone()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn room(&self, room_id: &str) -> Option<&RoomEntry> {
        self.rooms.iter().find(|r| r.room_id == room_id)
    }

    pub fn rirs_in<'a>(&'a self, room_id: &'a str) -> impl Iterator<Item = &'a RirEntry> + 'a {
        self.rirs.iter().filter(move |r| r.room_id == room_id)
    }

    /// Distinct room ids in first-appearance order.
    pub fn room_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rirs {
            if !ids.iter().any(|x| x == &r.room_id) {
                ids.push(r.room_id.clone());
            }
        }
        ids
    }
}
