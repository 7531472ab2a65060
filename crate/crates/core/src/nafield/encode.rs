use std::f64::consts::PI;

use super::FieldError;
use crate::geometry::Point3;

/// `[sin(2^l pi x), cos(2^l pi x)]` for each axis, then each level `l < levels`.
pub fn sinusoidal_encode(p: Point3, levels: usize) -> Result<Vec<f64>, FieldError> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(FieldError::InvalidInput(format!("non-finite point {p:?}")));
    }
    let mut out = Vec::with_capacity(6 * levels);
    encode_into(p, levels, &mut out);
    Ok(out)
}

pub(crate) fn encode_into(p: Point3, levels: usize, out: &mut Vec<f64>) {
    for x in p {
        let mut freq = PI;
        for _ in 0..levels {
            let (s, c) = (freq * x).sin_cos();
            out.push(s);
            out.push(c);
            freq *= 2.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin() {
        let e = sinusoidal_encode([0.0; 3], 5).unwrap();
        for pair in e.chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
    }

    #[test]
    fn unit_x_single_level() {
        let e = sinusoidal_encode([1.0, 0.0, 0.0], 1).unwrap();
        assert!(e[0].abs() < 1e-15);
        assert_eq!(e[1], -1.0);
        assert_eq!(&e[2..], [0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn lengths() {
        for l in [1, 4, 8] {
            assert_eq!(sinusoidal_encode([0.3, -0.2, 0.9], l).unwrap().len(), 6 * l);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            sinusoidal_encode([f64::NAN, 0.0, 0.0], 2),
            Err(FieldError::InvalidInput(_))
        ));
    }

    #[test]
    fn level_frequencies_double() {
        let x: f64 = 0.13;
        let e = sinusoidal_encode([x, 0.0, 0.0], 4).unwrap();
        for l in 0..4 {
            let f = PI * 2f64.powi(l as i32);
            assert!((e[2 * l] - (f * x).sin()).abs() < 1e-12);
            assert!((e[2 * l + 1] - (f * x).cos()).abs() < 1e-12);
        }
    }
}
