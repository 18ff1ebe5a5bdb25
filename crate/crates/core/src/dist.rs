//! Amplitude and phase variates for the channel components.
//!
//! Three amplitude families are supported, all supported on the unit
//! interval so that no interaction can amplify the propagating signal:
//!
//! * `beta:A,B`: beta distribution with shapes `A`, `B`.
//! * `r:B`: `Y = 1/(1+X)` with `X` Rayleigh of scale `B`.
//! * `l:mu,sigma`: `Y = 1/(1+X)` with `X` log-normal of natural-log
//!   mean `mu` and std `sigma`.
//!
//! Phases are uniform on `[0, 2π)` and drawn independently of amplitudes.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_distr::{Beta, Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

/// Errors raised when a distribution is constructed with invalid parameters.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistError {
    #[error("parameter `{name}` must be strictly positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("cannot parse distribution `{0}`: expected `beta:A,B`, `r:B` or `l:mu,sigma`")]
    Syntax(String),
}

fn positive(name: &'static str, value: f64) -> Result<f64, DistError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(DistError::NonPositive { name, value })
    }
}

/// Amplitude distribution of one channel component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistSpec {
    Beta { a: f64, b: f64 },
    #[serde(rename = "r")]
    RInv { scale: f64 },
    #[serde(rename = "l")]
    LInv { mu: f64, sigma: f64 },
}

impl DistSpec {
    pub fn beta(a: f64, b: f64) -> Result<Self, DistError> {
        let spec = DistSpec::Beta { a, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn r_inv(scale: f64) -> Result<Self, DistError> {
        let spec = DistSpec::RInv { scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn l_inv(mu: f64, sigma: f64) -> Result<Self, DistError> {
        let spec = DistSpec::LInv { mu, sigma };
        spec.validate()?;
        Ok(spec)
    }

    /// The uniform amplitude, `beta:1,1`.
    pub fn uniform() -> Self {
        DistSpec::Beta { a: 1.0, b: 1.0 }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match *self {
            DistSpec::Beta { a, b } => {
                positive("A", a)?;
                positive("B", b)?;
            }
            DistSpec::RInv { scale } => {
                positive("B", scale)?;
            }
            DistSpec::LInv { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(DistError::NotFinite { name: "mu", value: mu });
                }
                positive("sigma", sigma)?;
            }
        }
        Ok(())
    }

    /// Short family tag used in reports: `beta`, `r` or `l`.
    pub fn family(&self) -> &'static str {
        match self {
            DistSpec::Beta { .. } => "beta",
            DistSpec::RInv { .. } => "r",
            DistSpec::LInv { .. } => "l",
        }
    }

    /// Builds a reusable sampler, validating the parameters once.
    pub fn sampler(&self) -> Result<AmplitudeSampler, DistError> {
        self.validate()?;
        Ok(match *self {
            DistSpec::Beta { a, b } => {
                if a == 1.0 && b == 1.0 {
                    AmplitudeSampler::Uniform
                } else if a == 1.0 {
                    AmplitudeSampler::BetaUnitA { inv_b: 1.0 / b }
                } else if b == 1.0 {
                    AmplitudeSampler::BetaUnitB { inv_a: 1.0 / a }
                } else {
                    let beta = Beta::new(a, b).map_err(|_| DistError::NonPositive {
                        name: "A",
                        value: a,
                    })?;
                    AmplitudeSampler::Beta(beta)
                }
            }
            DistSpec::RInv { scale } => AmplitudeSampler::RInv { scale },
            DistSpec::LInv { mu, sigma } => AmplitudeSampler::LInv { mu, sigma },
        })
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistSpec::Beta { a, b } => write!(f, "beta:{a},{b}"),
            DistSpec::RInv { scale } => write!(f, "r:{scale}"),
            DistSpec::LInv { mu, sigma } => write!(f, "l:{mu},{sigma}"),
        }
    }
}

impl FromStr for DistSpec {
    type Err = DistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || DistError::Syntax(s.to_string());
        let (family, params) = s.trim().split_once(':').ok_or_else(syntax)?;
        let values = params
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| syntax()))
            .collect::<Result<Vec<_>, _>>()?;
        match (family.trim().to_ascii_lowercase().as_str(), values.as_slice()) {
            ("beta", &[a, b]) => DistSpec::beta(a, b),
            ("r", &[scale]) => DistSpec::r_inv(scale),
            ("l", &[mu, sigma]) => DistSpec::l_inv(mu, sigma),
            _ => Err(syntax()),
        }
    }
}

/// A validated, ready-to-draw amplitude distribution.
///
/// Beta shapes with a unit parameter have closed-form inverse CDFs and are
/// drawn by inversion; the general case goes through the gamma-ratio
/// sampler of `rand_distr`.
#[derive(Debug, Clone, Copy)]
pub enum AmplitudeSampler {
    Uniform,
    BetaUnitA { inv_b: f64 },
    BetaUnitB { inv_a: f64 },
    Beta(Beta<f64>),
    RInv { scale: f64 },
    LInv { mu: f64, sigma: f64 },
}

impl AmplitudeSampler {
    #[inline]
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match *self {
            AmplitudeSampler::Uniform => stream.uniform(),
            // Beta(1, B): F(y) = 1 - (1-y)^B.
            AmplitudeSampler::BetaUnitA { inv_b } => 1.0 - (1.0 - stream.uniform()).powf(inv_b),
            // Beta(A, 1): F(y) = y^A.
            AmplitudeSampler::BetaUnitB { inv_a } => stream.uniform().powf(inv_a),
            AmplitudeSampler::Beta(beta) => beta.sample(stream),
            AmplitudeSampler::RInv { scale } => r_inv_from_uniform(scale, stream.uniform()),
            AmplitudeSampler::LInv { mu, sigma } => {
                let z: f64 = StandardNormal.sample(stream);
                l_inv_from_normal(mu, sigma, z)
            }
        }
    }

    /// Amplitude times a uniform phasor; consumes the amplitude first.
    #[inline]
    pub fn sample_complex(&self, stream: &mut RandomStream) -> Complex64 {
        let amplitude = self.sample(stream);
        let p = sample_unit_phasor(stream);
        Complex64::new(p.re * amplitude, p.im * amplitude)
    }
}

/// Deterministic pseudo-random stream identified by `(seed, index)`.
///
/// The generator is xoshiro256++. Its 256-bit state is obtained by mixing
/// the seed and the substream index with the SplitMix64 finalizer and then
/// expanding the mixed word with SplitMix64 (the `seed_from_u64` contract of
/// `rand_xoshiro`). Nothing depends on the platform, so a given
/// `(seed, index)` yields the same variates everywhere.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: Xoshiro256PlusPlus,
    seed: u64,
    index: u64,
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let key = mix64(mix64(seed) ^ index);
        RandomStream { rng: Xoshiro256PlusPlus::seed_from_u64(key), seed, index }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A standard normal variate.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// `Y = 1/(1+X)`, `X = B·√(−2 ln(1−U))` (Rayleigh by inversion).
#[inline]
pub fn r_inv_from_uniform(scale: f64, u: f64) -> f64 {
    // 1 − u is exact for the 53-bit grid of `RandomStream::uniform`.
    let x = scale * (-2.0 * (1.0 - u).ln()).sqrt();
    1.0 / (1.0 + x)
}

/// `Y = 1/(1+X)`, `X = exp(mu + sigma·z)`.
#[inline]
pub fn l_inv_from_normal(mu: f64, sigma: f64, z: f64) -> f64 {
    1.0 / (1.0 + (mu + sigma * z).exp())
}

pub fn sample_beta(a: f64, b: f64, stream: &mut RandomStream) -> Result<f64, DistError> {
    Ok(DistSpec::beta(a, b)?.sampler()?.sample(stream))
}

pub fn sample_r_inv(scale: f64, stream: &mut RandomStream) -> Result<f64, DistError> {
    positive("B", scale)?;
    Ok(r_inv_from_uniform(scale, stream.uniform()))
}

pub fn sample_l_inv(mu: f64, sigma: f64, stream: &mut RandomStream) -> Result<f64, DistError> {
    DistSpec::l_inv(mu, sigma)?;
    Ok(l_inv_from_normal(mu, sigma, stream.standard_normal()))
}

/// Uniform angle on `[0, 2π)`.
#[inline]
pub fn sample_phase(stream: &mut RandomStream) -> f64 {
    let theta = TAU * stream.uniform();
    // 2π·(1 − 2⁻⁵³) can round up to 2π.
    if theta >= TAU {
        0.0
    } else {
        theta
    }
}

/// `e^{iθ}` with `θ` uniform on `[0, 2π)`, without trigonometric calls.
///
/// A point `(x, y)` uniform in the unit disk has a uniform angle `φ`;
/// `((x² − y²)/r², 2xy/r²)` is `(cos 2φ, sin 2φ)`, whose angle is uniform
/// as well. Each attempt splits one 64-bit word into two 32-bit
/// coordinates and succeeds with probability π/4.
#[inline]
pub fn sample_unit_phasor(stream: &mut RandomStream) -> Complex64 {
    const SCALE: f64 = 1.0 / (1u64 << 31) as f64;
    loop {
        let word = stream.next_u64();
        // Odd integers in (−2³², 2³²), an unbiased grid symmetric about 0.
        let x = (((word >> 32) as i64) * 2 - 0xFFFF_FFFF) as f64 * 0.5 * SCALE;
        let y = (((word & 0xFFFF_FFFF) as i64) * 2 - 0xFFFF_FFFF) as f64 * 0.5 * SCALE;
        let (xx, yy) = (x * x, y * y);
        let r2 = xx + yy;
        if r2 <= 1.0 {
            let inv = 1.0 / r2;
            return Complex64::new((xx - yy) * inv, 2.0 * x * y * inv);
        }
    }
}

pub fn sample_complex(spec: &DistSpec, stream: &mut RandomStream) -> Result<Complex64, DistError> {
    Ok(spec.sampler()?.sample_complex(stream))
}
