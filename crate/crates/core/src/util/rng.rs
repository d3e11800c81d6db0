//! Counter-based random number generation.
//!
//! Every draw is a pure function of a `(seed, stream, a, b, c)` key, so
//! trajectories are reproducible regardless of thread count or scheduling.
//! Streams partition consumers: the particle OU substep owns
//! [`Stream::OuNoise`] exclusively and nothing else may draw from it.

/// Logical sub-streams of the generator. Keeping consumers on disjoint
/// streams guarantees that adding a diagnostic never shifts the noise seen
/// by the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Shared Gaussian increments of the stiff OU substep. One draw per
    /// particle per step, consumed by primary and companion alike.
    OuNoise = 0,
    /// Initial sampling of the voltage coordinate.
    InitV = 1,
    /// Initial sampling of the adaptation coordinate.
    InitW = 2,
    /// Mixture-component selection during initial sampling.
    InitMix = 3,
    /// Inverse-CDF sampling of grid densities (with in-cell jitter).
    GridSample = 4,
    /// Bootstrap resampling in diagnostics and tests.
    Bootstrap = 5,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mixes a key into a single 64-bit word.
#[inline]
pub fn mix_key(seed: u64, stream: Stream, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x243f6a8885a308d3);
    h = splitmix64(h ^ (stream as u64).wrapping_mul(0x9e3779b97f4a7c15));
    h = splitmix64(h ^ a.wrapping_mul(0xc2b2ae3d27d4eb4f));
    h = splitmix64(h ^ b.wrapping_mul(0x165667b19e3779f9));
    splitmix64(h ^ c.wrapping_mul(0x27d4eb2f165667c5))
}

/// Uniform draw in `(0, 1]`.
#[inline]
pub fn uniform(seed: u64, stream: Stream, a: u64, b: u64, c: u64) -> f64 {
    let x = mix_key(seed, stream, a, b, c);
    ((x >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
}

/// One standard Gaussian draw per key (Box-Muller, cosine branch).
#[inline]
pub fn normal(seed: u64, stream: Stream, a: u64, b: u64, c: u64) -> f64 {
    let u1 = uniform(seed, stream, a, b, c);
    let u2 = uniform(seed ^ 0x5851f42d4c957f2d, stream, a, b, c);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
