use core::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut r = (theta + PI) % TWO_PI;
    if r < 0.0 {
        r += TWO_PI;
    }
    if r >= TWO_PI {
        r -= TWO_PI;
    }
    let w = r - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

pub(crate) fn powi(base: f64, n: usize) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_keeps_range() {
        for &t in &[0.0, PI, -PI, 3.0 * PI, -3.0 * PI, 7.5, -7.5, 1e6, -1e-300] {
            let w = wrap_angle(t);
            assert!((-PI..PI).contains(&w), "{t} -> {w}");
        }
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn powi_matches_repeated_product() {
        assert_eq!(powi(0.5, 0), 1.0);
        assert_eq!(powi(0.5, 3), 0.125);
        assert!((powi(0.99, 500) - libm::pow(0.99, 500.0)).abs() < 1e-15);
    }
}
