//! Scalar math on top of `libm`, plus the Bernoulli function used by the
//! exponentially fitted fluxes.

/// `e^x`.
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// `e^x - 1`, accurate near zero.
#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

/// Natural logarithm.
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// Square root.
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Sine.
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

/// Cosine.
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

/// Absolute value.
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `x^y` for real exponents.
#[inline]
pub fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Integer power by repeated squaring.
#[inline]
pub fn powi(mut x: f64, mut n: u32) -> f64 {
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= x;
        }
        x *= x;
        n >>= 1;
    }
    acc
}

/// Below this magnitude the Bernoulli function switches to its series.
pub const BERNOULLI_SERIES_CUTOFF: f64 = 1e-8;

/// Bernoulli function `B(s) = s / (e^s - 1)` with `B(0) = 1`.
///
/// Satisfies `B(-s) = B(s) + s`, which the flux kernels rely on.
#[inline]
pub fn bernoulli(s: f64) -> f64 {
    if abs(s) < BERNOULLI_SERIES_CUTOFF {
        1.0 - 0.5 * s
    } else {
        s / expm1(s)
    }
}

/// `(B(s), B(-s))` from a single exponential.
///
/// The larger value is formed as `B(|s|) + |s|`, a sum of nonnegative terms.
#[inline]
pub fn bernoulli_pair(s: f64) -> (f64, f64) {
    let a = abs(s);
    let small = bernoulli(a);
    let large = small + a;
    if s >= 0.0 {
        (small, large)
    } else {
        (large, small)
    }
}

/// Even part of the Bernoulli function, `(s/2) coth(s/2) = B(s) + s/2`.
#[inline]
pub fn bernoulli_even(s: f64) -> f64 {
    bernoulli(s) + 0.5 * s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_at_zero_is_one() {
        assert_eq!(bernoulli(0.0), 1.0);
        assert!((bernoulli(1e-9) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bernoulli_reflection() {
        for &s in &[-30.0, -2.5, -1e-3, 1e-7, 0.3, 4.0, 40.0] {
            let lhs = bernoulli(-s);
            let rhs = bernoulli(s) + s;
            assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0), "s={s}");
        }
    }

    #[test]
    fn bernoulli_branches_agree_near_cutoff() {
        for f in [0.99, 1.01, -0.99, -1.01] {
            let s = f * BERNOULLI_SERIES_CUTOFF;
            assert!((bernoulli(s) - (1.0 - 0.5 * s + s * s / 12.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn pair_matches_two_calls() {
        for &s in &[-700.0, -3.0, -1e-9, 0.0, 2e-9, 0.7, 35.0, 710.0] {
            let (a, b) = bernoulli_pair(s);
            assert!((a - bernoulli(s)).abs() <= 1e-14 * a.max(1.0), "s={s}");
            assert!((b - bernoulli(-s)).abs() <= 1e-14 * b.max(1.0), "s={s}");
        }
    }

    #[test]
    fn bernoulli_extremes() {
        assert_eq!(bernoulli(800.0), 0.0);
        assert!((bernoulli(-800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn powi_matches_pow() {
        for n in 0..9 {
            assert!((powi(-1.3, n) - pow(-1.3, n as f64)).abs() < 1e-12);
        }
    }
}
