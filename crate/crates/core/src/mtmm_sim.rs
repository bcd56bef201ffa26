//! Seeded generator of synthetic p-value corpora.
//!
//! Four regimes: independent nulls, genuine effects, p-hacked studies that
//! report the smallest of `m` null p-values, and a mixture of hacked and null
//! studies. The min-of-`m` model is an idealization: real analyses share data
//! across tests, so their p-values are correlated.
//!
//! Randomness comes from a counter-based SplitMix64 stream. Draw `k` of seed
//! `s` is `mix(s + (k + 1)·0x9E3779B97F4A7C15)`; nothing depends on the host
//! platform or on an external RNG crate's version.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::effect_stats::two_sided_p;
use crate::error::{Error, Result};

/// Identifier of the random stream, embedded in every [`SimResult`].
pub const GENERATOR_ID: &str = "splitmix64-counter/v1";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Illustrative extreme-hacking preset: one test per cell of the median
/// search space of the nineteen asthma cohort studies.
pub const MEDIAN_SEARCH_SPACE_M: u32 = 13_824;

/// Counter-based SplitMix64.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    seed: u64,
    counter: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { seed, counter: 0 }
    }

    /// Output for an arbitrary counter value, without touching the stream.
    pub fn at(seed: u64, counter: u64) -> u64 {
        let mut z = seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = Self::at(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform on `(0, 1]` with 53 random bits.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box–Muller (cosine branch only; two uniforms per draw).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    Null,
    Effect,
    PHacked,
    Mixture,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Null => "Null",
            Scenario::Effect => "Effect",
            Scenario::PHacked => "PHacked",
            Scenario::Mixture => "Mixture",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "null" => Ok(Scenario::Null),
            "effect" => Ok(Scenario::Effect),
            "phacked" | "p-hacked" | "hacked" => Ok(Scenario::PHacked),
            "mixture" | "mix" => Ok(Scenario::Mixture),
            other => Err(Error::domain(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n_studies: usize,
    /// Tests per hacked study (PHacked and Mixture only).
    pub m_tests: u32,
    /// Mean of the study z-statistic (Effect only).
    pub effect_mean_z: f64,
    /// Probability that a study is hacked (Mixture only).
    pub mixture_fraction: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(scenario: Scenario, n_studies: usize, seed: u64) -> Self {
        SimConfig {
            scenario,
            n_studies,
            m_tests: 1,
            effect_mean_z: 0.0,
            mixture_fraction: 0.0,
            seed,
        }
    }

    pub fn with_m_tests(mut self, m: u32) -> Self {
        self.m_tests = m;
        self
    }

    pub fn with_effect_z(mut self, z: f64) -> Self {
        self.effect_mean_z = z;
        self
    }

    pub fn with_fraction(mut self, f: f64) -> Self {
        self.mixture_fraction = f;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_studies < 1 {
            return Err(Error::domain("n_studies must be ≥ 1"));
        }
        if self.m_tests < 1 {
            return Err(Error::domain("m_tests must be ≥ 1"));
        }
        if !(self.effect_mean_z >= 0.0 && self.effect_mean_z.is_finite()) {
            return Err(Error::domain("effect_mean_z must be finite and ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.mixture_fraction) {
            return Err(Error::domain("mixture_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyTruth {
    Null,
    Effect,
    Hacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub generator: String,
    pub config: SimConfig,
    pub pvalues: Vec<f64>,
    pub labels: Vec<StudyTruth>,
}

fn min_of_uniforms(rng: &mut SplitMix64, m: u32) -> f64 {
    (0..m).map(|_| rng.next_uniform()).fold(1.0, f64::min)
}

/// Draws one corpus. Output depends only on `config`.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let mut pvalues = Vec::with_capacity(config.n_studies);
    let mut labels = Vec::with_capacity(config.n_studies);
    for _ in 0..config.n_studies {
        let (p, truth) = match config.scenario {
            Scenario::Null => (rng.next_uniform(), StudyTruth::Null),
            Scenario::Effect => {
                let z = config.effect_mean_z + rng.next_normal();
                (two_sided_p(z), StudyTruth::Effect)
            }
            Scenario::PHacked => (min_of_uniforms(&mut rng, config.m_tests), StudyTruth::Hacked),
            Scenario::Mixture => {
                if rng.next_uniform() <= config.mixture_fraction {
                    (min_of_uniforms(&mut rng, config.m_tests), StudyTruth::Hacked)
                } else {
                    (rng.next_uniform(), StudyTruth::Null)
                }
            }
        };
        pvalues.push(p);
        labels.push(truth);
    }
    Ok(SimResult {
        generator: GENERATOR_ID.to_string(),
        config: config.clone(),
        pvalues,
        labels,
    })
}

/// CDF of the minimum of `m` independent Uniform(0, 1) draws: `1 − (1 − p)^m`.
pub fn min_p_cdf(p: f64, m: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
    }
    if m < 1 {
        return Err(Error::domain("m must be ≥ 1"));
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    Ok(-libm::expm1(m as f64 * libm::log1p(-p)))
}

/// Median of the minimum of `m` uniforms, `1 − 0.5^(1/m)`.
pub fn min_p_median(m: u32) -> f64 {
    -libm::expm1(-std::f64::consts::LN_2 / m as f64)
}
