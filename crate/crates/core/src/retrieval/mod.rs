//! Acoustic-similarity retrieval over a corpus of RT60 fingerprints.
//!
//! Every enrollment RIR queries its `m` nearest corpus RIRs by Euclidean
//! distance between multi-band RT60 fingerprints. The rooms owning the
//! retrieved RIRs are counted (with multiplicity across queries) and ranked;
//! the top of that ranking is the room-specific pre-training set, and its
//! first room with usable geometry stands in for a room without a mesh.

mod sidecar;

pub use sidecar::{read_sidecar, write_sidecar, SIDECAR_MAGIC, SIDECAR_VERSION};

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point3};
use crate::manifest::{Manifest, RirEntry, RoomEntry};
use crate::rir::{multiband_rt60, read_wav, BandSpec, ImpulseResponse, RirError, Rt60Fingerprint};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("fingerprint has {got} bands, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("requested {requested} rooms but only {available} are indexed")]
    NotEnoughRooms { requested: usize, available: usize },
    #[error("no ranked room has usable geometry")]
    NoGeometryAvailable,
    #[error("duplicate rir id '{0}'")]
    DuplicateId(String),
    #[error("reading {rir_id}: {source}")]
    Io {
        rir_id: String,
        #[source]
        source: RirError,
    },
    #[error("sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    SidecarIo(#[from] std::io::Error),
    #[error("m and limit must be at least 1")]
    InvalidCount,
}

/// An indexed corpus RIR.
#[derive(Debug, Clone, PartialEq)]
pub struct RirRecord {
    pub rir_id: String,
    pub room_id: String,
    pub src: Point3,
    pub rcv: Point3,
    pub fingerprint: Rt60Fingerprint,
}

/// Immutable fingerprint index with exact linear-scan search.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    records: Vec<RirRecord>,
    bands: BandSpec,
}

/// Rows dropped while building an index, with the reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub skipped: Vec<(String, String)>,
}

impl RetrievalIndex {
    pub fn new(records: Vec<RirRecord>, bands: BandSpec) -> Result<Self, RetrievalError> {
        if records.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let mut ids = HashSet::new();
        for r in &records {
            if r.fingerprint.len() != bands.len() {
                return Err(RetrievalError::DimensionMismatch {
                    expected: bands.len(),
                    got: r.fingerprint.len(),
                });
            }
            if !ids.insert(r.rir_id.as_str()) {
                return Err(RetrievalError::DuplicateId(r.rir_id.clone()));
            }
        }
        Ok(Self { records, bands })
    }

    pub fn records(&self) -> &[RirRecord] {
        &self.records
    }

    pub fn bands(&self) -> &BandSpec {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct room ids, sorted.
    pub fn room_ids(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.room_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The `min(m, len)` nearest records, by ascending distance then `rir_id`.
    pub fn query_nearest(
        &self,
        q: &Rt60Fingerprint,
        m: usize,
    ) -> Result<Vec<(&RirRecord, f64)>, RetrievalError> {
        if q.len() != self.bands.len() {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.bands.len(),
                got: q.len(),
            });
        }
        if m == 0 {
            return Err(RetrievalError::InvalidCount);
        }
        let mut scored: Vec<(&RirRecord, f64)> = self
            .records
            .iter()
            .map(|r| (r, q.distance(&r.fingerprint)))
            .collect();
        let order = |a: &(&RirRecord, f64), b: &(&RirRecord, f64)| -> Ordering {
            a.1.total_cmp(&b.1)
                .then_with(|| a.0.rir_id.cmp(&b.0.rir_id))
        };
        let keep = m.min(scored.len());
        if keep < scored.len() {
            scored.select_nth_unstable_by(keep - 1, order);
            scored.truncate(keep);
        }
        scored.sort_unstable_by(order);
        Ok(scored)
    }
}

/// Fingerprints every manifest row, loading audio through `load`.
///
/// Rows whose fingerprint cannot be computed are skipped and listed in the
/// report; a load failure aborts the build.
pub fn build_index_with<F>(
    rirs: &[RirEntry],
    bands: &BandSpec,
    mut load: F,
) -> Result<(RetrievalIndex, BuildReport), RetrievalError>
where
    F: FnMut(&RirEntry) -> Result<ImpulseResponse, RirError>,
{
    if rirs.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let mut report = BuildReport::default();
    let mut records = Vec::with_capacity(rirs.len());
    for entry in rirs {
        let ir = load(entry).map_err(|source| RetrievalError::Io {
            rir_id: entry.rir_id.clone(),
            source,
        })?;
        match multiband_rt60(&ir, bands) {
            Ok(fingerprint) => records.push(RirRecord {
                rir_id: entry.rir_id.clone(),
                room_id: entry.room_id.clone(),
                src: entry.src,
                rcv: entry.rcv,
                fingerprint,
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", entry.rir_id);
                report.skipped.push((entry.rir_id.clone(), e.to_string()));
            }
        }
    }
    Ok((RetrievalIndex::new(records, bands.clone())?, report))
}

/// Builds an index from a manifest, reading each WAV from disk.
pub fn build_index(
    manifest: &Manifest,
    bands: &BandSpec,
) -> Result<(RetrievalIndex, BuildReport), RetrievalError> {
    build_index_with(&manifest.rirs, bands, |e| {
        read_wav(&manifest.resolve(&e.wav_path))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomRank {
    pub room_id: String,
    pub count: usize,
    pub best_distance: f64,
}

/// Rooms ordered by retrieval frequency (desc), then best distance (asc), then id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoomRanking(pub Vec<RoomRank>);

impl RoomRanking {
    pub fn entries(&self) -> &[RoomRank] {
        &self.0
    }

    pub fn total_count(&self) -> usize {
        self.0.iter().map(|r| r.count).sum()
    }

    pub fn room_ids(&self) -> Vec<String> {
        self.0.iter().map(|r| r.room_id.clone()).collect()
    }

    /// Aggregates retrieved `(room_id, distance)` hits.
    pub fn from_hits<'a>(hits: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut agg: HashMap<&str, (usize, f64)> = HashMap::new();
        for (room, d) in hits {
            let e = agg.entry(room).or_insert((0, f64::INFINITY));
            e.0 += 1;
            e.1 = e.1.min(d);
        }
        let mut rows: Vec<RoomRank> = agg
            .into_iter()
            .map(|(room_id, (count, best_distance))| RoomRank {
                room_id: room_id.to_string(),
                count,
                best_distance,
            })
            .collect();
        rows.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.best_distance.total_cmp(&b.best_distance))
                .then_with(|| a.room_id.cmp(&b.room_id))
        });
        Self(rows)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rank,room_id,count,best_distance")?;
        for (i, r) in self.0.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{:.9}",
                i + 1,
                r.room_id,
                r.count,
                r.best_distance
            )?;
        }
        Ok(())
    }
}

/// Counts the rooms of the `m` nearest RIRs for every enrollment fingerprint.
pub fn rank_rooms(
    index: &RetrievalIndex,
    enrollment: &[Rt60Fingerprint],
    m: usize,
) -> Result<RoomRanking, RetrievalError> {
    if enrollment.is_empty() {
        return Err(RetrievalError::InvalidCount);
    }
    let mut hits = Vec::with_capacity(enrollment.len() * m);
    for q in enrollment {
        for (rec, d) in index.query_nearest(q, m)? {
            hits.push((rec.room_id.as_str(), d));
        }
    }
    Ok(RoomRanking::from_hits(hits))
}

/// The first `min(limit, len)` rooms of the ranking.
pub fn select_pretraining_rooms(ranking: &RoomRanking, limit: usize) -> Vec<String> {
    ranking
        .0
        .iter()
        .take(limit)
        .map(|r| r.room_id.clone())
        .collect()
}

/// `count` distinct indexed rooms drawn uniformly without replacement.
pub fn select_random_rooms(
    index: &RetrievalIndex,
    count: usize,
    seed: u64,
) -> Result<Vec<String>, RetrievalError> {
    let mut rooms = index.room_ids();
    if count > rooms.len() {
        return Err(RetrievalError::NotEnoughRooms {
            requested: count,
            available: rooms.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rooms.shuffle(&mut rng);
    rooms.truncate(count);
    Ok(rooms)
}

/// Geometry borrowed from a retrieved room.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedGeometry {
    pub room_id: String,
    pub mesh_path: Option<String>,
    pub bbox: BoundingBox,
}

/// Walks the ranking and returns the first room with declared geometry: a
/// mesh file, or exact shoebox dimensions.
pub fn retrieve_geometry(
    ranking: &RoomRanking,
    rooms: &[RoomEntry],
) -> Result<RetrievedGeometry, RetrievalError> {
    for rank in ranking.entries() {
        let Some(room) = rooms.iter().find(|r| r.room_id == rank.room_id) else {
            continue;
        };
        if room.mesh_path.is_none() && room.dims.is_none() {
            continue;
        }
        let Ok(bbox) = room.bounding_box() else {
            continue;
        };
        return Ok(RetrievedGeometry {
            room_id: room.room_id.clone(),
            mesh_path: room.mesh_path.clone(),
            bbox,
        });
    }
    Err(RetrievalError::NoGeometryAvailable)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(v: &[f64]) -> Rt60Fingerprint {
        Rt60Fingerprint::new(v.to_vec()).unwrap()
    }

    fn rec(id: &str, room: &str, v: &[f64]) -> RirRecord {
        RirRecord {
            rir_id: id.into(),
            room_id: room.into(),
            src: [0.0; 3],
            rcv: [1.0; 3],
            fingerprint: fp(v),
        }
    }

    fn two_bands() -> BandSpec {
        BandSpec::new(vec![500.0, 1000.0]).unwrap()
    }

    #[test]
    fn nearest_hand_computed() {
        let idx = RetrievalIndex::new(
            vec![rec("a", "X", &[0.3, 0.3]), rec("b", "Y", &[0.5, 0.5])],
            two_bands(),
        )
        .unwrap();
        let hits = idx.query_nearest(&fp(&[0.35, 0.35]), 2).unwrap();
        assert_eq!(hits[0].0.rir_id, "a");
        assert!((hits[0].1 - 0.05 * 2f64.sqrt()).abs() < 1e-12);
        assert!((hits[0].1 - 0.0707).abs() < 1e-4);
        assert_eq!(hits[1].0.rir_id, "b");
        assert!((hits[1].1 - 0.2121).abs() < 1e-4);

        let self_hit = idx.query_nearest(&fp(&[0.5, 0.5]), 1).unwrap();
        assert_eq!(self_hit.len(), 1);
        assert_eq!(self_hit[0].0.rir_id, "b");
        assert_eq!(self_hit[0].1, 0.0);
    }

    #[test]
    fn ties_break_by_id_and_m_is_capped() {
        let idx = RetrievalIndex::new(
            vec![
                rec("c", "X", &[1.0, 1.0]),
                rec("a", "X", &[1.0, 1.0]),
                rec("b", "Y", &[1.0, 1.0]),
            ],
            two_bands(),
        )
        .unwrap();
        let hits = idx.query_nearest(&fp(&[0.5, 0.5]), 10).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.0.rir_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let two = idx.query_nearest(&fp(&[0.5, 0.5]), 2).unwrap();
        assert_eq!(
            two.iter().map(|h| h.0.rir_id.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
    }

    #[test]
    fn dimension_mismatch_and_empty() {
        let idx = RetrievalIndex::new(vec![rec("a", "X", &[0.3, 0.3])], two_bands()).unwrap();
        assert!(matches!(
            idx.query_nearest(&fp(&[0.3]), 1),
            Err(RetrievalError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            RetrievalIndex::new(vec![], two_bands()),
            Err(RetrievalError::EmptyIndex)
        ));
        assert!(matches!(
            build_index_with(&[], &two_bands(), |_| unreachable!()),
            Err(RetrievalError::EmptyIndex)
        ));
    }

    #[test]
    fn ranking_single_query() {
        let r = RoomRanking::from_hits([("X", 0.1), ("X", 0.2), ("Y", 0.15)]);
        assert_eq!(
            r.entries()
                .iter()
                .map(|e| (e.room_id.as_str(), e.count))
                .collect::<Vec<_>>(),
            [("X", 2), ("Y", 1)]
        );
    }

    #[test]
    fn ranking_tie_uses_best_distance() {
        let idx = RetrievalIndex::new(
            vec![
                rec("x1", "X", &[0.10, 0.10]),
                rec("y1", "Y", &[0.20, 0.20]),
                rec("y2", "Y", &[0.80, 0.80]),
                rec("z1", "Z", &[0.95, 0.95]),
            ],
            two_bands(),
        )
        .unwrap();
        let q1 = fp(&[0.12, 0.12]);
        let q2 = fp(&[0.86, 0.86]);
        let r = rank_rooms(&idx, &[q1, q2], 2).unwrap();
        let order: Vec<_> = r
            .entries()
            .iter()
            .map(|e| (e.room_id.as_str(), e.count))
            .collect();
        // X is closer to its query (0.02*sqrt2) than Z (0.09*sqrt2)
        assert_eq!(order, [("Y", 2), ("X", 1), ("Z", 1)]);
        assert_eq!(r.total_count(), 4);
    }

    #[test]
    fn single_room_collects_everything() {
        let idx = RetrievalIndex::new(
            (0..5)
                .map(|i| rec(&format!("r{i}"), "only", &[0.1 * (i + 1) as f64, 0.2]))
                .collect(),
            two_bands(),
        )
        .unwrap();
        let r = rank_rooms(
            &idx,
            &[fp(&[0.2, 0.2]), fp(&[0.3, 0.3]), fp(&[0.1, 0.2])],
            4,
        )
        .unwrap();
        assert_eq!(r.entries().len(), 1);
        assert_eq!(r.entries()[0].count, 12);
    }

    #[test]
    fn pretraining_prefix() {
        let hits: Vec<(String, f64)> = (0..150)
            .flat_map(|i| std::iter::repeat((format!("room{i:03}"), i as f64)).take(150 - i))
            .collect();
        let r = RoomRanking::from_hits(hits.iter().map(|(s, d)| (s.as_str(), *d)));
        let top = select_pretraining_rooms(&r, 100);
        assert_eq!(top.len(), 100);
        assert_eq!(top[..], r.room_ids()[..100]);
        assert_eq!(select_pretraining_rooms(&r, 1), ["room000"]);
        let small = RoomRanking::from_hits([("a", 0.0), ("b", 1.0), ("c", 2.0)]);
        assert_eq!(select_pretraining_rooms(&small, 100).len(), 3);
    }

    #[test]
    fn random_rooms() {
        let records = (0..25)
            .map(|i| rec(&format!("r{i}"), &format!("room{i:02}"), &[0.5, 0.5]))
            .collect();
        let idx = RetrievalIndex::new(records, two_bands()).unwrap();
        let all = select_random_rooms(&idx, 25, 1).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, idx.room_ids());
        assert_eq!(
            select_random_rooms(&idx, 10, 5).unwrap(),
            select_random_rooms(&idx, 10, 5).unwrap()
        );
        assert_ne!(
            select_random_rooms(&idx, 20, 5).unwrap(),
            select_random_rooms(&idx, 20, 6).unwrap()
        );
        assert!(matches!(
            select_random_rooms(&idx, 26, 0),
            Err(RetrievalError::NotEnoughRooms {
                requested: 26,
                available: 25
            })
        ));
    }

    #[test]
    fn geometry_fallback() {
        let room = |id: &str, mesh: Option<&str>| RoomEntry {
            room_id: id.into(),
            mesh_path: mesh.map(String::from),
            bbox: [[0.0; 3], [1.0; 3]],
            dims: None,
        };
        let ranking = RoomRanking(vec![
            RoomRank {
                room_id: "X".into(),
                count: 5,
                best_distance: 0.1,
            },
            RoomRank {
                room_id: "Y".into(),
                count: 2,
                best_distance: 0.2,
            },
        ]);
        let g = retrieve_geometry(
            &ranking,
            &[room("X", Some("x.obj")), room("Y", Some("y.obj"))],
        )
        .unwrap();
        assert_eq!(g.room_id, "X");
        let g = retrieve_geometry(&ranking, &[room("X", None), room("Y", Some("y.obj"))]).unwrap();
        assert_eq!(g.mesh_path.as_deref(), Some("y.obj"));
        assert!(matches!(
            retrieve_geometry(&RoomRanking::default(), &[]),
            Err(RetrievalError::NoGeometryAvailable)
        ));
        assert!(matches!(
            retrieve_geometry(&ranking, &[room("X", None)]),
            Err(RetrievalError::NoGeometryAvailable)
        ));
    }

    #[test]
    fn build_skips_unfittable_rows() {
        let entry = |id: &str| RirEntry {
            rir_id: id.into(),
            room_id: "r".into(),
            wav_path: String::new(),
            src: [0.0; 3],
            rcv: [1.0; 3],
            sample_rate: 16000,
        };
        let bands = BandSpec::default();
        let (idx, report) = build_index_with(&[entry("good"), entry("silent")], &bands, |e| {
            let s = if e.rir_id == "good" {
                (0..16000)
                    .map(|i| {
                        if i % 320 == 0 {
                            (-(i as f64) / 1600.0).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            } else {
                vec![0.0; 16000]
            };
            ImpulseResponse::new(s, 16000)
        })
        .unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].0, "silent");

        let err = build_index_with(&[entry("bad")], &bands, |_| {
            Err(RirError::Invalid("unreadable".into()))
        })
        .unwrap_err();
        assert!(matches!(err, RetrievalError::Io { ref rir_id, .. } if rir_id == "bad"));
    }
}
