//! Inverse-variance fixed-effect and DerSimonian–Laird random-effects pooling
//! of log ratio estimates, with Cochran's Q, tau² and I².
//!
//! All pooling happens on the natural-log scale. Confidence bounds use the
//! fixed multiplier 1.96 and are back-transformed by exponentiation.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::effect_stats::{EffectEstimate, Z_CRIT_95};
use crate::error::{Error, Result};

/// Caveat attached to pooled output: ratio measures of different kinds are
/// pooled together without distinction.
pub const MIXED_MEASURES_CAVEAT: &str =
    "odds ratios, relative risks and hazard ratios are pooled interchangeably on the log scale";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolInput {
    pub study_id: String,
    pub log_ee: f64,
    pub se_log: f64,
}

impl PoolInput {
    pub fn new(study_id: &str, log_ee: f64, se_log: f64) -> Result<Self> {
        if !log_ee.is_finite() {
            return Err(Error::domain(format!("{study_id}: log_ee must be finite")));
        }
        if !(se_log > 0.0 && se_log.is_finite()) {
            return Err(Error::domain(format!(
                "{study_id}: se_log must be positive, got {se_log}"
            )));
        }
        Ok(PoolInput {
            study_id: study_id.to_string(),
            log_ee,
            se_log,
        })
    }

    /// Log-scale input from an estimate, with the SE taken from a symmetric
    /// log-scale interval at the estimate's confidence level.
    pub fn from_estimate(est: &EffectEstimate) -> Result<Self> {
        est.validate()?;
        if est.cl_high == est.cl_low {
            return Err(Error::DegenerateInterval(est.cl_low));
        }
        let zc = crate::effect_stats::z_crit(est.confidence_level)?;
        let se = (est.cl_high.ln() - est.cl_low.ln()) / (2.0 * zc);
        PoolInput::new(&est.study_id, est.ee.ln(), se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolModel {
    FixedEffect,
    RandomEffects,
}

impl fmt::Display for PoolModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolModel::FixedEffect => "FixedEffect",
            PoolModel::RandomEffects => "RandomEffects",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledResult {
    pub model: PoolModel,
    pub pooled_log_ee: f64,
    pub pooled_ee: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub tau2: f64,
    pub q: f64,
    pub df: usize,
    pub q_pvalue: f64,
    pub i2_percent: f64,
    /// Normalized weights, in input order.
    pub weights: Vec<f64>,
}

/// Q, its degrees of freedom and its chi-square p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heterogeneity {
    pub q: f64,
    pub df: usize,
    pub q_pvalue: f64,
}

struct WeightedMean {
    mean: f64,
    sum_w: f64,
    weights: Vec<f64>,
}

fn weighted_mean(inputs: &[PoolInput], tau2: f64) -> WeightedMean {
    let raw: Vec<f64> = inputs.iter().map(|s| 1.0 / (s.se_log * s.se_log + tau2)).collect();
    let sum_w: f64 = raw.iter().sum();
    let mean = inputs.iter().zip(&raw).map(|(s, w)| w * s.log_ee).sum::<f64>() / sum_w;
    WeightedMean {
        mean,
        sum_w,
        weights: raw.iter().map(|w| w / sum_w).collect(),
    }
}

fn check_inputs(inputs: &[PoolInput]) -> Result<()> {
    for s in inputs {
        if !s.log_ee.is_finite() || !(s.se_log > 0.0 && s.se_log.is_finite()) {
            return Err(Error::domain(format!(
                "{}: needs finite log_ee and positive se_log",
                s.study_id
            )));
        }
    }
    Ok(())
}

fn assemble(model: PoolModel, wm: WeightedMean, tau2: f64, het: Heterogeneity) -> PooledResult {
    let half = Z_CRIT_95 * (1.0 / wm.sum_w).sqrt();
    PooledResult {
        model,
        pooled_log_ee: wm.mean,
        pooled_ee: wm.mean.exp(),
        ci_low: (wm.mean - half).exp(),
        ci_high: (wm.mean + half).exp(),
        tau2,
        q: het.q,
        df: het.df,
        q_pvalue: het.q_pvalue,
        i2_percent: if het.df >= 1 {
            i_squared_unchecked(het.q, het.df)
        } else {
            0.0
        },
        weights: wm.weights,
    }
}

/// Inverse-variance fixed-effect pool. A single study is returned unchanged.
pub fn fixed_effect_pool(inputs: &[PoolInput]) -> Result<PooledResult> {
    if inputs.is_empty() {
        return Err(Error::domain("fixed-effect pooling needs at least one study"));
    }
    check_inputs(inputs)?;
    let het = if inputs.len() >= 2 {
        cochran_q(inputs)?
    } else {
        Heterogeneity {
            q: 0.0,
            df: 0,
            q_pvalue: 1.0,
        }
    };
    Ok(assemble(PoolModel::FixedEffect, weighted_mean(inputs, 0.0), 0.0, het))
}

pub fn cochran_q(inputs: &[PoolInput]) -> Result<Heterogeneity> {
    if inputs.len() < 2 {
        return Err(Error::InsufficientData {
            op: "cochran_q",
            needed: 2,
            got: inputs.len(),
        });
    }
    check_inputs(inputs)?;
    let fixed = weighted_mean(inputs, 0.0);
    let q = inputs
        .iter()
        .map(|s| {
            let d = s.log_ee - fixed.mean;
            d * d / (s.se_log * s.se_log)
        })
        .sum::<f64>();
    let df = inputs.len() - 1;
    Ok(Heterogeneity {
        q,
        df,
        q_pvalue: chi2_sf(q, df)?,
    })
}

/// `I² = max(0, (Q − df)/Q)·100`, zero when `Q = 0`.
pub fn i_squared(q: f64, df: usize) -> Result<f64> {
    if df < 1 {
        return Err(Error::domain("I² needs df ≥ 1"));
    }
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::domain(format!("Q must be finite and nonnegative, got {q}")));
    }
    Ok(i_squared_unchecked(q, df))
}

fn i_squared_unchecked(q: f64, df: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    ((q - df as f64) / q).max(0.0) * 100.0
}

/// DerSimonian–Laird random-effects pool with the moment estimator of tau²
/// clamped at zero.
pub fn dersimonian_laird(inputs: &[PoolInput]) -> Result<PooledResult> {
    let het = cochran_q(inputs)?;
    let w: Vec<f64> = inputs.iter().map(|s| 1.0 / (s.se_log * s.se_log)).collect();
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|x| x * x).sum();
    let denom = sum_w - sum_w2 / sum_w;
    if !(denom > 0.0) || denom <= sum_w * 1e-14 {
        return Err(Error::DegenerateWeights);
    }
    let tau2 = ((het.q - het.df as f64) / denom).max(0.0);
    Ok(assemble(
        PoolModel::RandomEffects,
        weighted_mean(inputs, tau2),
        tau2,
        het,
    ))
}

/// Survival function of the chi-square distribution.
pub fn chi2_sf(x: f64, df: usize) -> Result<f64> {
    if df < 1 {
        return Err(Error::domain("chi-square needs df ≥ 1"));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!(
            "chi-square statistic must be nonnegative, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HigginsBand {
    Low,
    Moderate,
    High,
}

impl HigginsBand {
    fn severity(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HigginsBand::Low => "low",
            HigginsBand::Moderate => "moderate",
            HigginsBand::High => "high",
        }
    }
}

/// Descriptive ranges of the Cochrane handbook; they overlap on purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeterogeneityRange {
    MightNotBeImportant,
    Moderate,
    Substantial,
    Considerable,
}

impl HeterogeneityRange {
    const ALL: [(HeterogeneityRange, f64, f64); 4] = [
        (HeterogeneityRange::MightNotBeImportant, 0.0, 40.0),
        (HeterogeneityRange::Moderate, 30.0, 60.0),
        (HeterogeneityRange::Substantial, 50.0, 90.0),
        (HeterogeneityRange::Considerable, 75.0, 100.0),
    ];

    fn severity(self) -> u8 {
        match self {
            HeterogeneityRange::MightNotBeImportant => 0,
            HeterogeneityRange::Moderate => 1,
            HeterogeneityRange::Substantial => 2,
            HeterogeneityRange::Considerable => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeterogeneityRange::MightNotBeImportant => "might not be important",
            HeterogeneityRange::Moderate => "moderate",
            HeterogeneityRange::Substantial => "substantial",
            HeterogeneityRange::Considerable => "considerable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct I2Interpretation {
    /// Band reached on the 25/50/75 scale.
    pub band: HigginsBand,
    /// Every descriptive range that contains the value.
    pub ranges: Vec<HeterogeneityRange>,
    /// Most severe applicable descriptive range.
    pub summary: String,
    /// Set when the two scales disagree, e.g. "moderate-to-substantial".
    pub note: Option<String>,
}

/// Reads I² on both interpretation scales.
///
/// The 25/50/75 scale is applied as thresholds (a value belongs to the
/// highest anchor it has reached, values under 50 count as low). Range
/// bounds of the descriptive scale are inclusive.
pub fn interpret_i2(i2_percent: f64) -> Result<I2Interpretation> {
    if !(0.0..=100.0).contains(&i2_percent) {
        return Err(Error::domain(format!("I² must lie in [0, 100], got {i2_percent}")));
    }
    let band = if i2_percent >= 75.0 {
        HigginsBand::High
    } else if i2_percent >= 50.0 {
        HigginsBand::Moderate
    } else {
        HigginsBand::Low
    };
    let ranges: Vec<HeterogeneityRange> = HeterogeneityRange::ALL
        .iter()
        .filter(|(_, lo, hi)| (*lo..=*hi).contains(&i2_percent))
        .map(|(r, _, _)| *r)
        .collect();
    let top = *ranges.last().expect("ranges cover [0, 100]");
    let note = (band.severity() < top.severity()).then(|| format!("{}-to-{}", band.as_str(), top.as_str()));
    Ok(I2Interpretation {
        band,
        ranges,
        summary: top.as_str().to_string(),
        note,
    })
}
