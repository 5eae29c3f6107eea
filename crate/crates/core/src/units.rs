//! Unit helpers. Frequencies are stored internally as angular frequencies
//! (rad/s) and times in seconds; these helpers accept the "(2π)·MHz" style
//! used when quoting sensor and drive parameters.

use std::f64::consts::TAU;

/// (2π)·`f` MHz as rad/s.
pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e6
}

/// (2π)·`f` kHz as rad/s.
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e3
}

/// (2π)·`f` GHz as rad/s.
pub fn ghz(f: f64) -> f64 {
    TAU * f * 1e9
}

/// Angular frequency back to "(2π)·MHz".
pub fn to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e6)
}

pub fn us(t: f64) -> f64 {
    t * 1e-6
}

pub fn ns(t: f64) -> f64 {
    t * 1e-9
}

pub fn to_us(t: f64) -> f64 {
    t * 1e6
}
