//! Blue-noise bounce points on a room mesh.

use std::error::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rirfield::geometry::{distance, parse_obj, poisson_disk_sample, sample_surface};

// An L-shaped floor plan, 3 m high.
const ROOM: &str = "\
v 0 0 0
v 6 0 0
v 6 3 0
v 3 3 0
v 3 5 0
v 0 5 0
v 0 0 3
v 6 0 3
v 6 3 3
v 3 3 3
v 3 5 3
v 0 5 3
f 1 2 3 4 5 6
f 7 12 11 10 9 8
f 1 7 8 2
f 2 8 9 3
f 3 9 10 4
f 4 10 11 5
f 5 11 12 6
f 6 12 7 1
";

fn min_spacing(points: &[[f64; 3]]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.min(distance(*a, *b));
        }
    }
    best
}

fn main() -> Result<(), Box<dyn Error>> {
    let mesh = parse_obj(ROOM)?;
    println!(
        "{} triangles, {:.1} m2, bbox {:?}",
        mesh.triangles().len(),
        mesh.surface_area(),
        mesh.bounding_box()
    );

    let k = 64;
    let set = poisson_disk_sample(&mesh, "l-room", k, 42)?;
    let uniform = sample_surface(&mesh, k, &mut ChaCha8Rng::seed_from_u64(42));
    println!(
        "min spacing: eliminated {:.3} m, plain uniform {:.3} m",
        set.radius,
        min_spacing(&uniform)
    );

    set.write_csv(std::io::stdout().lock())?;
    Ok(())
}
