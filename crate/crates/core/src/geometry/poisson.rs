use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{distance, GeometryError, Point3, TriangleMesh};

/// Candidate pool size relative to the requested point count.
pub const CANDIDATE_FACTOR: usize = 8;

// Sample-elimination weight shape (Yuksel-style): w = (1 - d / 2r)^ALPHA,
// with distances below the limited radius clamped.
const ALPHA: i32 = 8;
const LIMIT_GAMMA: f64 = 1.5;
const LIMIT_BETA: f64 = 0.65;

/// K surface points that condition the field on room geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct BouncePointSet {
    pub points: Vec<Point3>,
    pub source_mesh_id: String,
    pub seed: u64,
    /// Minimum pairwise distance of `points` (0 for a single point).
    pub radius: f64,
}

impl BouncePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# k={} seed={}", self.points.len(), self.seed)?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p[0], p[1], p[2])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, source_mesh_id: &str) -> Result<Self, GeometryError> {
        let bad = |m: String| GeometryError::BadPointFile(m);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let mut k = None;
        let mut seed = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("k=") {
                k = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse::<u64>().ok();
            }
        }
        let (k, seed) = k
            .zip(seed)
            .ok_or_else(|| bad(format!("bad header '{header}'")))?;
        let mut points = Vec::with_capacity(k);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad(format!("bad row '{line}'")))?;
            if v.len() != 3 {
                return Err(bad(format!("row '{line}' needs x,y,z")));
            }
            points.push([v[0], v[1], v[2]]);
        }
        if points.len() != k {
            return Err(bad(format!(
                "header says {k} points, found {}",
                points.len()
            )));
        }
        Ok(Self {
            radius: min_pairwise_distance(&points),
            points,
            source_mesh_id: source_mesh_id.to_string(),
            seed,
        })
    }
}

fn min_pairwise_distance(points: &[Point3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(distance(points[i], points[j]));
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// Draws `n` area-uniform points on the mesh surface.
pub fn sample_surface<R: Rng>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Vec<Point3> {
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut acc = 0.0;
    for i in 0..mesh.triangles().len() {
        acc += mesh.triangle_area(i);
        cumulative.push(acc);
    }
    (0..n)
        .map(|_| {
            let target = rng.gen::<f64>() * acc;
            let tri = cumulative
                .partition_point(|&c| c <= target)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(tri);
            let r1 = rng.gen::<f64>().sqrt();
            let r2 = rng.gen::<f64>();
            let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
            [
                wa * a[0] + wb * b[0] + wc * c[0],
                wa * a[1] + wb * b[1] + wc * c[1],
                wa * a[2] + wb * b[2] + wc * c[2],
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Weight(f64);

impl Eq for Weight {}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Poisson-disk sampling by weighted sample elimination.
///
/// Draws `CANDIDATE_FACTOR * k` area-uniform candidates, then repeatedly
/// removes the candidate with the largest neighbourhood density until `k`
/// remain. Equal densities remove the lowest candidate index first.
pub fn poisson_disk_sample(
    mesh: &TriangleMesh,
    mesh_id: &str,
    k: usize,
    seed: u64,
) -> Result<BouncePointSet, GeometryError> {
    let pool = k.saturating_mul(CANDIDATE_FACTOR);
    if k == 0 || pool < k {
        return Err(GeometryError::InfeasibleSampleCount {
            requested: k,
            available: pool,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = sample_surface(mesh, pool, &mut rng);

    let area = mesh.surface_area();
    let r_max = (area / (2.0 * 3f64.sqrt() * k as f64)).sqrt();
    let r_min = r_max * (1.0 - (k as f64 / pool as f64).powf(LIMIT_GAMMA)) * LIMIT_BETA;
    let reach = 2.0 * r_max;
    let weight = |d: f64| (1.0 - d.max(r_min) / reach).powi(ALPHA);

    let n = candidates.len();
    let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(candidates[i], candidates[j]);
            if d < reach {
                let w = weight(d);
                neighbours[i].push((j, w));
                neighbours[j].push((i, w));
            }
        }
    }
    let mut density: Vec<f64> = neighbours
        .iter()
        .map(|nb| nb.iter().map(|&(_, w)| w).sum())
        .collect();

    // Ordered so that the last element is the next one to eliminate.
    let mut queue: BTreeSet<(Weight, std::cmp::Reverse<usize>)> = density
        .iter()
        .enumerate()
        .map(|(i, &w)| (Weight(w), std::cmp::Reverse(i)))
        .collect();
    let mut alive = vec![true; n];
    let mut remaining = n;
    while remaining > k {
        let (_, std::cmp::Reverse(victim)) = queue.pop_last().expect("queue holds live points");
        alive[victim] = false;
        remaining -= 1;
        for &(j, w) in &neighbours[victim] {
            if alive[j] {
                queue.remove(&(Weight(density[j]), std::cmp::Reverse(j)));
                density[j] -= w;
                queue.insert((Weight(density[j]), std::cmp::Reverse(j)));
            }
        }
    }

    let points: Vec<Point3> = candidates
        .into_iter()
        .zip(alive)
        .filter_map(|(p, keep)| keep.then_some(p))
        .collect();
    Ok(BouncePointSet {
        radius: min_pairwise_distance(&points),
        points,
        source_mesh_id: mesh_id.to_string(),
        seed,
    })
}
