//! Conversions between human units and the internal convention
//! (μs, rad/μs, nm).

use std::f64::consts::PI;

/// `f` in MHz to angular frequency in rad/μs.
#[inline]
pub fn mhz(f: f64) -> f64 {
    2.0 * PI * f
}

/// Angular frequency in rad/μs back to MHz.
#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Nanoseconds to microseconds.
#[inline]
pub fn ns(t: f64) -> f64 {
    t * 1e-3
}

/// Microseconds to nanoseconds.
#[inline]
pub fn to_ns(t: f64) -> f64 {
    t * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((to_mhz(mhz(0.35)) - 0.35).abs() < 1e-15);
        assert!((to_ns(ns(425.0)) - 425.0).abs() < 1e-12);
        assert!((mhz(1.0) - 2.0 * PI).abs() < 1e-15);
    }
}
