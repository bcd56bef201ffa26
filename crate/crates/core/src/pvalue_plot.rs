//! Rank-ordered p-value plots and a shape classifier.
//!
//! Sorted p-values are regressed on `rank / (n + 1)`, so a sample of
//! independent uniform p-values lies on a line of slope 1 whatever `n` is.
//! The classifier combines that slope with a Kolmogorov–Smirnov test against
//! Uniform(0, 1) and an exhaustive two-segment least-squares fit.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub rank: usize,
    pub p: f64,
}

/// Sorted p-values with ranks `1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValuePlot {
    points: Vec<PlotPoint>,
}

impl PValuePlot {
    pub fn points(&self) -> &[PlotPoint] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn pvalues(&self) -> Vec<f64> {
        self.points.iter().map(|pt| pt.p).collect()
    }

    fn xs(&self) -> Vec<f64> {
        let denom = (self.n() + 1) as f64;
        self.points.iter().map(|pt| pt.rank as f64 / denom).collect()
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("p-value must lie in (0, 1], got {p}")))
    }
}

/// Sorts ascending (stable, so ties keep input order) and assigns ranks.
pub fn build_plot(pvalues: &[f64]) -> Result<PValuePlot> {
    if pvalues.is_empty() {
        return Err(Error::domain("a p-value plot needs at least one value"));
    }
    for &p in pvalues {
        check_p(p)?;
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(PValuePlot {
        points: sorted
            .into_iter()
            .enumerate()
            .map(|(i, p)| PlotPoint { rank: i + 1, p })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub sse: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    LineFit { slope, intercept, sse }
}

/// Least-squares line of p on `rank / (n + 1)`.
pub fn fit_single_line(plot: &PValuePlot) -> Result<LineFit> {
    if plot.n() < 2 {
        return Err(Error::InsufficientData {
            op: "fit_single_line",
            needed: 2,
            got: plot.n(),
        });
    }
    Ok(ols(&plot.xs(), &plot.pvalues()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d_stat: f64,
    pub p_value: f64,
}

/// Two-sided one-sample KS test against Uniform(0, 1).
///
/// The p-value uses the asymptotic Kolmogorov distribution evaluated at
/// `(sqrt(n) + 0.12 + 0.11/sqrt(n))·D`.
pub fn ks_uniform_test(pvalues: &[f64]) -> Result<KsResult> {
    if pvalues.is_empty() {
        return Err(Error::domain("KS test needs at least one value"));
    }
    let mut xs = pvalues.to_vec();
    for &x in &xs {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!(
                "KS uniformity test needs values in [0, 1], got {x}"
            )));
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = xs.len() as f64;
    let d_stat = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i + 1) as f64 / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let root = n.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * d_stat;
    Ok(KsResult {
        d_stat,
        p_value: kolmogorov_sf(lambda).clamp(crate::effect_stats::P_MIN, 1.0),
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form, fast for small lambda.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut s = 0.0;
        for j in 1..=50 {
            let k = (2 * j - 1) as f64;
            let term = (-(k * k) * pi2 / (8.0 * lambda * lambda)).exp();
            s += term;
            if term < 1e-17 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            s += sign * term;
            if term < 1e-17 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSegmentFit {
    /// Rank of the last point in the left segment.
    pub breakpoint: usize,
    pub sse: f64,
    pub left: LineFit,
    pub right: LineFit,
}

/// Exhaustive search for the breakpoint `b` in `2..=n-2` minimizing the
/// total SSE of separate lines on ranks `≤ b` and `> b`. Ties go to the
/// smaller `b`.
pub fn fit_two_segment(plot: &PValuePlot) -> Result<TwoSegmentFit> {
    let n = plot.n();
    if n < 4 {
        return Err(Error::InsufficientData {
            op: "fit_two_segment",
            needed: 4,
            got: n,
        });
    }
    let xs = plot.xs();
    let ys = plot.pvalues();
    let mut best: Option<TwoSegmentFit> = None;
    for b in 2..=n - 2 {
        let left = ols(&xs[..b], &ys[..b]);
        let right = ols(&xs[b..], &ys[b..]);
        let sse = left.sse + right.sse;
        if best.is_none_or(|cur| sse < cur.sse) {
            best = Some(TwoSegmentFit {
                breakpoint: b,
                sse,
                left,
                right,
            });
        }
    }
    Ok(best.expect("n >= 4 gives at least one candidate"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub alpha: f64,
    pub slope_band: (f64, f64),
    pub ks_alpha: f64,
    /// Minimum fraction of p ≤ alpha for a true-effect verdict.
    pub effect_fraction: f64,
    pub min_n_for_verdict: usize,
    /// Required relative SSE reduction of the two-segment fit.
    pub bilinear_gain: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            alpha: 0.05,
            slope_band: (0.8, 1.2),
            ks_alpha: 0.05,
            effect_fraction: 0.5,
            min_n_for_verdict: 4,
            bilinear_gain: 0.5,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.alpha) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.slope_band.0 < self.slope_band.1) {
            return Err(Error::domain("slope_band must satisfy lo < hi"));
        }
        if !unit(self.bilinear_gain) {
            return Err(Error::domain("bilinear_gain must lie in (0, 1)"));
        }
        if !unit(self.ks_alpha) {
            return Err(Error::domain("ks_alpha must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.effect_fraction) {
            return Err(Error::domain("effect_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlotLabel {
    UniformNull,
    TrueEffect,
    BilinearMixture,
    Indeterminate,
}

impl PlotLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PlotLabel::UniformNull => "UniformNull",
            PlotLabel::TrueEffect => "TrueEffect",
            PlotLabel::BilinearMixture => "BilinearMixture",
            PlotLabel::Indeterminate => "Indeterminate",
        }
    }
}

impl fmt::Display for PlotLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shape verdict plus every diagnostic that was computable for the plot.
/// Fits that need more points than the plot has are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotClassification {
    pub label: PlotLabel,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    /// Present iff the label is `BilinearMixture`.
    pub breakpoint: Option<usize>,
    pub sse_one_segment: Option<f64>,
    pub sse_two_segment: Option<f64>,
    /// Best breakpoint of the two-segment fit, whatever the label.
    pub candidate_breakpoint: Option<usize>,
    pub left_mean_p: Option<f64>,
    pub right_ks_pvalue: Option<f64>,
    pub frac_below_alpha: f64,
}

/// KS p-value of a segment rescaled to `[0, 1]`; a zero-width segment fails.
fn segment_uniformity(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return 0.0;
    }
    let scaled: Vec<f64> = values.iter().map(|v| (v - lo) / (hi - lo)).collect();
    ks_uniform_test(&scaled).map(|r| r.p_value).unwrap_or(0.0)
}

/// Applies the decision rules in order:
///
/// 1. fewer than `min_n_for_verdict` points: `Indeterminate`;
/// 2. at least `effect_fraction` of p ≤ alpha and slope below the band: `TrueEffect`;
/// 3. KS uniformity not rejected and slope inside the band: `UniformNull`;
/// 4. two-segment SSE at most `(1 − bilinear_gain)` of the single-line SSE,
///    left segment mean p ≤ alpha and the rescaled right segment passing KS
///    uniformity: `BilinearMixture`;
/// 5. otherwise `Indeterminate`.
pub fn classify(plot: &PValuePlot, config: &ClassifierConfig) -> Result<PlotClassification> {
    config.validate()?;
    let n = plot.n();
    let ps = plot.pvalues();
    let ks = ks_uniform_test(&ps)?;
    let frac_below_alpha = ps.iter().filter(|&&p| p <= config.alpha).count() as f64 / n as f64;
    let single = if n >= 2 { Some(fit_single_line(plot)?) } else { None };
    let two = if n >= 4 { Some(fit_two_segment(plot)?) } else { None };

    let (left_mean_p, right_ks_pvalue) = match two {
        Some(t) => {
            let b = t.breakpoint;
            let left_mean = ps[..b].iter().sum::<f64>() / b as f64;
            (Some(left_mean), Some(segment_uniformity(&ps[b..])))
        }
        None => (None, None),
    };

    let (lo, hi) = config.slope_band;
    let label = match (single, two) {
        _ if n < config.min_n_for_verdict => PlotLabel::Indeterminate,
        (Some(line), _) if frac_below_alpha >= config.effect_fraction && line.slope < lo => PlotLabel::TrueEffect,
        (Some(line), _) if ks.p_value >= config.ks_alpha && line.slope >= lo && line.slope <= hi => {
            PlotLabel::UniformNull
        }
        (Some(line), Some(t))
            if t.sse <= (1.0 - config.bilinear_gain) * line.sse
                && left_mean_p.is_some_and(|m| m <= config.alpha)
                && right_ks_pvalue.is_some_and(|p| p >= config.ks_alpha) =>
        {
            PlotLabel::BilinearMixture
        }
        _ => PlotLabel::Indeterminate,
    };

    Ok(PlotClassification {
        label,
        slope: single.map(|l| l.slope),
        intercept: single.map(|l| l.intercept),
        ks_stat: ks.d_stat,
        ks_pvalue: ks.p_value,
        breakpoint: two
            .filter(|_| label == PlotLabel::BilinearMixture)
            .map(|t| t.breakpoint),
        sse_one_segment: single.map(|l| l.sse),
        sse_two_segment: two.map(|t| t.sse),
        candidate_breakpoint: two.map(|t| t.breakpoint),
        left_mean_p,
        right_ks_pvalue,
        frac_below_alpha,
    })
}

/// Builds the plot and classifies it in one step.
pub fn classify_pvalues(pvalues: &[f64], config: &ClassifierConfig) -> Result<(PValuePlot, PlotClassification)> {
    let plot = build_plot(pvalues)?;
    let class = classify(&plot, config)?;
    Ok((plot, class))
}
