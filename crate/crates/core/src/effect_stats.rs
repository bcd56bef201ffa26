//! Standard errors, z-scores and two-sided p-values recovered from a ratio
//! effect estimate and its confidence interval.
//!
//! Two conventions are supported because published audit tables use both:
//! a symmetric interval on the natural scale (`LinearExact`) and a symmetric
//! interval on the log scale, evaluated either with the exact normal tail
//! (`LogExact`) or with the Altman–Bland closed-form approximation
//! (`LogAltmanBland`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Critical value used for 95% intervals. Fixed at the literal 1.96 so that
/// published tables computed by hand are reproduced digit for digit.
pub const Z_CRIT_95: f64 = 1.96;

/// Smallest p-value ever reported; keeps `p > 0` for far tails.
pub const P_MIN: f64 = 1e-300;

/// Default reporting floor: values at or below it are recorded as the floor.
pub const DEFAULT_P_FLOOR: f64 = 0.0001;

/// How a p-value was (or would have been) published for an estimate that is
/// loaded from a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ReportedP {
    /// The source has no p-value column.
    #[default]
    NotSupplied,
    /// The source has a p-value column but this cell is blank.
    Missing,
    Value(f64),
}

/// One base-study result: a ratio estimate (OR/RR/HR) with its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub study_id: String,
    pub label: String,
    pub ee: f64,
    pub cl_low: f64,
    pub cl_high: f64,
    pub confidence_level: f64,
    pub group: Option<String>,
    #[serde(default)]
    pub reported_p: ReportedP,
}

impl EffectEstimate {
    /// Builds an estimate at the default 95% level and validates it.
    pub fn new(study_id: &str, label: &str, ee: f64, cl_low: f64, cl_high: f64) -> Result<Self> {
        let est = EffectEstimate {
            study_id: study_id.to_string(),
            label: label.to_string(),
            ee,
            cl_low,
            cl_high,
            confidence_level: 0.95,
            group: None,
            reported_p: ReportedP::NotSupplied,
        };
        est.validate()?;
        Ok(est)
    }

    pub fn with_group(mut self, group: &str) -> Self {
        self.group = Some(group.to_string());
        self
    }

    pub fn with_confidence_level(mut self, level: f64) -> Result<Self> {
        self.confidence_level = level;
        self.validate()?;
        Ok(self)
    }

    /// Checks `0 < cl_low <= ee <= cl_high` and `0 < confidence_level < 1`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ee", self.ee), ("cl_low", self.cl_low), ("cl_high", self.cl_high)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::domain(format!(
                    "{name} must be a positive finite number, got {v}"
                )));
            }
        }
        if self.cl_low > self.ee {
            return Err(Error::domain(format!(
                "cl_low ≤ ee violated: cl_low {} > ee {}",
                self.cl_low, self.ee
            )));
        }
        if self.ee > self.cl_high {
            return Err(Error::domain(format!(
                "ee ≤ cl_high violated: ee {} > cl_high {}",
                self.ee, self.cl_high
            )));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::domain(format!(
                "confidence_level must lie strictly between 0 and 1, got {}",
                self.confidence_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PValueMethod {
    /// Symmetric interval on the natural scale, exact normal tail.
    LinearExact,
    /// Symmetric interval on the log scale, exact normal tail.
    LogExact,
    /// Log scale, `p = exp(-0.717|z| - 0.416 z²)`.
    LogAltmanBland,
}

impl PValueMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PValueMethod::LinearExact => "LinearExact",
            PValueMethod::LogExact => "LogExact",
            PValueMethod::LogAltmanBland => "LogAltmanBland",
        }
    }
}

impl fmt::Display for PValueMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PValueMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "linearexact" | "linear-exact" => Ok(PValueMethod::LinearExact),
            "log" | "logexact" | "log-exact" => Ok(PValueMethod::LogExact),
            "altman-bland" | "altmanbland" | "logaltmanbland" | "log-altman-bland" => Ok(PValueMethod::LogAltmanBland),
            other => Err(Error::domain(format!("unknown p-value method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueResult {
    /// Standard error on the method's working scale.
    pub se: f64,
    pub z: f64,
    pub p: f64,
    pub method: PValueMethod,
    pub floored: bool,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("normal_cdf needs a finite argument, got {x}")));
    }
    Ok(phi(x))
}

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided normal tail probability `2·(1 − Φ(|z|))`, evaluated on the
/// lower tail so that large |z| keeps its precision.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * phi(-z.abs())).clamp(P_MIN, 1.0)
}

/// Critical value for a two-sided interval at `confidence_level`.
///
/// 0.95 maps to the literal 1.96; other levels are solved by bisection on
/// [`normal_cdf`] to 1e-10.
pub fn z_crit(confidence_level: f64) -> Result<f64> {
    if !(confidence_level > 0.0 && confidence_level < 1.0) {
        return Err(Error::domain(format!(
            "confidence_level must lie strictly between 0 and 1, got {confidence_level}"
        )));
    }
    if confidence_level == 0.95 {
        return Ok(Z_CRIT_95);
    }
    let target = 1.0 - (1.0 - confidence_level) / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Recovers `se`, `z` and the two-sided p-value of `est` under `method`.
pub fn compute_p(est: &EffectEstimate, method: PValueMethod) -> Result<PValueResult> {
    est.validate()?;
    if est.cl_high == est.cl_low {
        return Err(Error::DegenerateInterval(est.cl_low));
    }
    let zc = z_crit(est.confidence_level)?;
    let (se, z) = match method {
        PValueMethod::LinearExact => {
            let se = (est.cl_high - est.cl_low) / (2.0 * zc);
            (se, (est.ee - 1.0) / se)
        }
        PValueMethod::LogExact | PValueMethod::LogAltmanBland => {
            let se = (est.cl_high.ln() - est.cl_low.ln()) / (2.0 * zc);
            (se, est.ee.ln() / se)
        }
    };
    let p = match method {
        PValueMethod::LinearExact | PValueMethod::LogExact => two_sided_p(z),
        PValueMethod::LogAltmanBland => altman_bland_p(z),
    };
    Ok(PValueResult {
        se,
        z,
        p,
        method,
        floored: false,
    })
}

fn altman_bland_p(z: f64) -> f64 {
    (-0.717 * z.abs() - 0.416 * z * z).exp().clamp(P_MIN, 1.0)
}

/// Records any p at or below `floor` as `floor`. Returns the value and
/// whether the floor was applied.
pub fn floor_p(p: f64, floor: f64) -> Result<(f64, bool)> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::domain(format!("floor must lie in (0, 1), got {floor}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("p-value must lie in (0, 1], got {p}")));
    }
    if p <= floor {
        Ok((floor, true))
    } else {
        Ok((p, false))
    }
}

/// [`compute_p`] followed by [`floor_p`].
pub fn compute_p_floored(est: &EffectEstimate, method: PValueMethod, floor: f64) -> Result<PValueResult> {
    let mut res = compute_p(est, method)?;
    let (p, floored) = floor_p(res.p, floor)?;
    res.p = p;
    res.floored = floored;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn est(ee: f64, lo: f64, hi: f64) -> EffectEstimate {
        EffectEstimate::new("s", "", ee, lo, hi).unwrap()
    }

    #[test]
    fn cdf_anchor_values() {
        assert_eq!(normal_cdf(0.0).unwrap(), 0.5);
        // mpmath at 30 digits
        assert_abs_diff_eq!(normal_cdf(1.96).unwrap(), 0.975_002_104_851_779_6, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-2.682).unwrap(), 0.003_659_172_988_928_699, epsilon = 1e-12);
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(normal_cdf(f64::NAN).is_err());
        assert!(normal_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn table_rows_linear() {
        let bc = compute_p(&est(1.13, 1.04, 1.23), PValueMethod::LinearExact).unwrap();
        assert_abs_diff_eq!(bc.p, 0.0073, epsilon = 2e-4);
        assert_abs_diff_eq!(bc.z, 2.682, epsilon = 1e-3);

        let olin = compute_p(&est(1.00, 0.35, 2.87), PValueMethod::LinearExact).unwrap();
        assert_eq!(olin.z, 0.0);
        assert_eq!(olin.p, 1.0);

        let bamse = compute_p(&est(1.01, 0.98, 1.04), PValueMethod::LinearExact).unwrap();
        assert_abs_diff_eq!(bamse.p, 0.5135, epsilon = 2e-4);
    }

    #[test]
    fn altman_bland_rows() {
        let r = compute_p(&est(0.53, 0.07, 3.74), PValueMethod::LogAltmanBland).unwrap();
        assert_abs_diff_eq!(r.p, 0.54263, epsilon = 5e-4);
        let r = compute_p(&est(0.38, 0.13, 1.15), PValueMethod::LogAltmanBland).unwrap();
        assert_abs_diff_eq!(r.p, 0.08153, epsilon = 5e-4);
        assert!(!r.floored);
    }

    #[test]
    fn null_effect_on_log_scale() {
        for m in [PValueMethod::LogExact, PValueMethod::LogAltmanBland] {
            let r = compute_p(&est(1.0, 0.5, 2.0), m).unwrap();
            assert_eq!(r.p, 1.0);
        }
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let flat = EffectEstimate {
            cl_low: 1.2,
            cl_high: 1.2,
            ..est(1.2, 1.0, 1.4)
        };
        assert!(matches!(
            compute_p(&flat, PValueMethod::LinearExact),
            Err(Error::DegenerateInterval(_))
        ));
        assert!(EffectEstimate::new("s", "", 0.0, 0.0, 1.0).is_err());
        assert!(EffectEstimate::new("s", "", 1.1, 1.2, 1.5).is_err());
        // ee on a bound is allowed
        assert!(compute_p(&est(1.2, 1.2, 1.5), PValueMethod::LinearExact).is_ok());
    }

    #[test]
    fn floor_rule() {
        assert_eq!(floor_p(0.00003, 0.0001).unwrap(), (0.0001, true));
        assert_eq!(floor_p(0.5, 0.0001).unwrap(), (0.5, false));
        assert_eq!(floor_p(0.0001, 0.0001).unwrap(), (0.0001, true));
        assert!(floor_p(0.0, 0.0001).is_err());
        assert!(floor_p(1.5, 0.0001).is_err());
        assert!(floor_p(0.5, 1.0).is_err());
    }

    #[test]
    fn z_crit_other_levels() {
        assert_eq!(z_crit(0.95).unwrap(), 1.96);
        assert_abs_diff_eq!(z_crit(0.90).unwrap(), 1.644_853_626_951_472_7, epsilon = 1e-9);
        assert_abs_diff_eq!(z_crit(0.99).unwrap(), 2.575_829_303_548_900_4, epsilon = 1e-9);
        assert!(z_crit(1.0).is_err());
    }

    #[test]
    fn far_tail_never_zero() {
        let r = compute_p(&est(50.0, 49.99, 50.01), PValueMethod::LogExact).unwrap();
        assert!(r.p > 0.0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("linear".parse::<PValueMethod>().unwrap(), PValueMethod::LinearExact);
        assert_eq!("log".parse::<PValueMethod>().unwrap(), PValueMethod::LogExact);
        assert_eq!(
            "altman-bland".parse::<PValueMethod>().unwrap(),
            PValueMethod::LogAltmanBland
        );
        assert!("wald".parse::<PValueMethod>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn methods() -> impl Strategy<Value = PValueMethod> {
            prop_oneof![
                Just(PValueMethod::LinearExact),
                Just(PValueMethod::LogExact),
                Just(PValueMethod::LogAltmanBland)
            ]
        }

        proptest! {
            #[test]
            fn log_methods_invariant_under_reciprocal(
                ee in 0.2f64..5.0, lo_f in 0.3f64..0.99, hi_f in 1.01f64..3.0,
                m in prop_oneof![Just(PValueMethod::LogExact), Just(PValueMethod::LogAltmanBland)],
            ) {
                let a = est(ee, ee * lo_f, ee * hi_f);
                let b = est(1.0 / ee, 1.0 / (ee * hi_f), 1.0 / (ee * lo_f));
                let pa = compute_p(&a, m).unwrap().p;
                let pb = compute_p(&b, m).unwrap().p;
                prop_assert!((pa - pb).abs() < 1e-12);
            }

            #[test]
            fn linear_depends_only_on_distance_from_one(
                d in -0.5f64..0.5, half in 0.01f64..0.4,
            ) {
                let ee = 1.0 + d;
                let a = est(ee, ee - half, ee + half);
                let mirrored = 1.0 - d;
                let b = est(mirrored, mirrored - half, mirrored + half);
                let pa = compute_p(&a, PValueMethod::LinearExact).unwrap().p;
                let pb = compute_p(&b, PValueMethod::LinearExact).unwrap().p;
                prop_assert!((pa - pb).abs() < 1e-12);
            }

            #[test]
            fn widening_interval_raises_p(
                ee in 1.05f64..3.0, lo_f in 0.5f64..0.99, widen in 1.05f64..2.0, m in methods(),
            ) {
                // tail probabilities must stay above 1e-300 for the comparison to be strict
                let hi_f = 1.0 / lo_f;
                let narrow = est(ee, ee * lo_f, ee * hi_f);
                let wide = est(ee, ee * lo_f / widen, ee * hi_f * widen);
                let pn = compute_p(&narrow, m).unwrap();
                let pw = compute_p(&wide, m).unwrap();
                prop_assume!(pn.p > 1e-290);
                prop_assert!(pw.p > pn.p);
            }

            #[test]
            fn p_decreases_with_abs_z(a in 0.0f64..8.0, b in 0.0f64..8.0) {
                prop_assume!((a - b).abs() > 1e-6);
                let (small, large) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(two_sided_p(large) < two_sided_p(small));
                prop_assert!(altman_bland_p(large) < altman_bland_p(small));
            }
        }
    }
}
