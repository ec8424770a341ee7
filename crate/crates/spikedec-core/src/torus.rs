//! Arithmetic on the unit torus `[-1/2, 1/2)`.

/// Wrap a real number into the canonical interval `[-1/2, 1/2)`.
pub fn wrap(t: f64) -> f64 {
    let w = t - t.round();
    // `round` ties away from zero, so w lands in [-0.5, 0.5]; fold the
    // closed endpoint back onto the half-open interval.
    if w >= 0.5 {
        w - 1.0
    } else if w < -0.5 {
        w + 1.0
    } else {
        w
    }
}

/// Wrap-around distance between two points, in `[0, 1/2]`.
pub fn distance(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

/// Minimal pairwise wrap-around distance of a location set.
///
/// Returns `None` when fewer than two locations are given (the separation is
/// undefined for a single spike).
pub fn min_separation(locations: &[f64]) -> Option<f64> {
    if locations.len() < 2 {
        return None;
    }
    let mut best = f64::INFINITY;
    for (i, &a) in locations.iter().enumerate() {
        for &b in &locations[i + 1..] {
            best = best.min(distance(a, b));
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_canonical() {
        assert_eq!(wrap(0.5), -0.5);
        assert_eq!(wrap(-0.5), -0.5);
        assert_eq!(wrap(1.25), 0.25);
        assert_eq!(wrap(-0.75), 0.25);
        assert_eq!(wrap(3.0), 0.0);
    }

    #[test]
    fn antipodal_distance() {
        assert_eq!(distance(0.0, -0.5), 0.5);
        assert!((distance(-0.45, 0.45) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn separation_requires_two_points() {
        assert!(min_separation(&[0.3]).is_none());
        let s = min_separation(&[-0.45, 0.0, 0.45]).unwrap();
        assert!((s - 0.1).abs() < 1e-15);
    }
}
