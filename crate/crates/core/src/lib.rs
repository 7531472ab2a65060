pub mod cli;
pub mod geometry;
pub mod manifest;
pub mod nafield;
pub mod retrieval;
pub mod rir;
pub mod simulator;
pub mod training;

/// Derives an independent generator seed from a master seed and a path of indices.
pub fn seed_for(master: u64, path: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter()
        .fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}
