//! Counter-based random numbers: a pure function of `(seed, stream, index)`
//! with no sequential state, so parallel Monte-Carlo sampling is bit
//! reproducible regardless of thread scheduling.
//!
//! The mixer is the splitmix64 finalizer applied to an absorbed key; each
//! standard-normal draw consumes two derived uniforms through a Box-Muller
//! transform.

const PHI: u64 = 0x9e3779b97f4a7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[inline]
fn key(seed: u64, stream: u64, index: u64, salt: u64) -> u64 {
    let mut h = seed ^ 0x243f6a8885a308d3;
    for part in [stream, index, salt] {
        h = mix64(h.wrapping_add(PHI).wrapping_add(part));
    }
    mix64(h)
}

/// Uniform draw in (0, 1] keyed by `(seed, stream, index)`.
pub fn uniform(seed: u64, stream: u64, index: u64) -> f64 {
    bits_to_unit(key(seed, stream, index, 0))
}

#[inline]
fn bits_to_unit(bits: u64) -> f64 {
    // 53 high bits, shifted into (0, 1]; never zero, so ln() is safe.
    ((bits >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
}

/// Standard normal draw keyed by `(seed, stream, index)`.
pub fn standard_normal(seed: u64, stream: u64, index: u64) -> f64 {
    let u1 = bits_to_unit(key(seed, stream, index, 1));
    let u2 = bits_to_unit(key(seed, stream, index, 2));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
