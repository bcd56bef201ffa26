//! Analysis search-space counts for observational studies.
//!
//! A study that looks at `outcomes × predictors × lags` questions and may
//! adjust for any subset of `k` covariates could have run
//! `questions × 2^k` tests. Counts are exact: `2^k` is unbounded in `k`, so
//! products are kept as big integers.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyCounts {
    pub study_id: String,
    pub outcomes: u64,
    pub predictors: u64,
    pub lags: u64,
    pub covariates: u32,
}

impl StudyCounts {
    pub fn new(study_id: &str, outcomes: u64, predictors: u64, lags: u64, covariates: u32) -> Result<Self> {
        let c = StudyCounts {
            study_id: study_id.to_string(),
            outcomes,
            predictors,
            lags,
            covariates,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("outcomes", self.outcomes),
            ("predictors", self.predictors),
            ("lags", self.lags),
        ] {
            if v < 1 {
                return Err(Error::domain(format!("{}: {name} must be ≥ 1", self.study_id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchSpaceResult {
    pub study_id: String,
    #[serde(serialize_with = "ser_big")]
    pub questions: BigUint,
    #[serde(serialize_with = "ser_big")]
    pub models: BigUint,
    #[serde(serialize_with = "ser_big")]
    pub search_space: BigUint,
}

pub fn evaluate_counts(c: &StudyCounts) -> Result<SearchSpaceResult> {
    c.validate()?;
    let questions = BigUint::from(c.outcomes) * BigUint::from(c.predictors) * BigUint::from(c.lags);
    let models = BigUint::one() << c.covariates;
    let search_space = &questions * &models;
    Ok(SearchSpaceResult {
        study_id: c.study_id.clone(),
        questions,
        models,
        search_space,
    })
}

/// A nonnegative value that is an integer or an integer plus one half,
/// stored as twice its value. Medians and hinges of integer data are always
/// of this form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInteger {
    twice: BigUint,
}

impl HalfInteger {
    pub fn from_int(v: BigUint) -> Self {
        HalfInteger { twice: v << 1 }
    }

    pub fn mean_of(a: &BigUint, b: &BigUint) -> Self {
        HalfInteger { twice: a + b }
    }

    pub fn is_integer(&self) -> bool {
        !self.twice.bit(0)
    }

    /// Integer part (the value rounded down).
    pub fn floor(&self) -> BigUint {
        &self.twice >> 1
    }

    pub fn to_f64(&self) -> f64 {
        self.twice.to_f64().unwrap_or(f64::INFINITY) / 2.0
    }
}

impl fmt::Display for HalfInteger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.floor())
        } else {
            write!(f, "{}.5", self.floor())
        }
    }
}

/// Emitted as a JSON integer when it fits in `u64`, as a float when it is a
/// half-integer exactly representable in `f64`, and as a decimal string otherwise.
impl Serialize for HalfInteger {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_integer() {
            return ser_big(&self.floor(), s);
        }
        match self.twice.to_u64() {
            Some(t) if t < (1u64 << 53) => s.serialize_f64(t as f64 / 2.0),
            _ => s.serialize_str(&self.to_string()),
        }
    }
}

fn ser_big<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v.to_u64() {
        Some(x) => s.serialize_u64(x),
        None => s.serialize_str(&v.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiveNumber {
    pub minimum: HalfInteger,
    pub lower_hinge: HalfInteger,
    pub median: HalfInteger,
    pub upper_hinge: HalfInteger,
    pub maximum: HalfInteger,
}

fn median_sorted(v: &[BigUint]) -> HalfInteger {
    let n = v.len();
    if n % 2 == 1 {
        HalfInteger::from_int(v[n / 2].clone())
    } else {
        HalfInteger::mean_of(&v[n / 2 - 1], &v[n / 2])
    }
}

/// Tukey five-number summary. For odd `n` both halves include the median.
pub fn five_number(values: &[BigUint]) -> Result<FiveNumber> {
    if values.is_empty() {
        return Err(Error::domain("five-number summary of an empty column"));
    }
    let mut v = values.to_vec();
    v.sort();
    let n = v.len();
    let half = n.div_ceil(2);
    Ok(FiveNumber {
        minimum: HalfInteger::from_int(v[0].clone()),
        lower_hinge: median_sorted(&v[..half]),
        median: median_sorted(&v),
        upper_hinge: median_sorted(&v[n - half..]),
        maximum: HalfInteger::from_int(v[n - 1].clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub n_studies: usize,
    pub outcomes: FiveNumber,
    pub predictors: FiveNumber,
    pub covariates: FiveNumber,
    pub lags: FiveNumber,
    pub questions: FiveNumber,
    pub models: FiveNumber,
    pub search_space: FiveNumber,
}

pub fn corpus_summary(studies: &[StudyCounts]) -> Result<CorpusSummary> {
    if studies.is_empty() {
        return Err(Error::domain("corpus summary needs at least one study"));
    }
    let evaluated = studies.iter().map(evaluate_counts).collect::<Result<Vec<_>>>()?;
    let col = |f: &dyn Fn(usize) -> BigUint| -> Result<FiveNumber> {
        five_number(&(0..studies.len()).map(f).collect::<Vec<_>>())
    };
    Ok(CorpusSummary {
        n_studies: studies.len(),
        outcomes: col(&|i| BigUint::from(studies[i].outcomes))?,
        predictors: col(&|i| BigUint::from(studies[i].predictors))?,
        covariates: col(&|i| BigUint::from(studies[i].covariates))?,
        lags: col(&|i| BigUint::from(studies[i].lags))?,
        questions: col(&|i| evaluated[i].questions.clone())?,
        models: col(&|i| evaluated[i].models.clone())?,
        search_space: col(&|i| evaluated[i].search_space.clone())?,
    })
}

/// Compact display for large counts: values above 10^7 are shown to two
/// significant figures with an `M` suffix, smaller ones with thousands
/// separators.
pub fn display_count(v: &BigUint) -> String {
    let ten_million = BigUint::from(10_000_000u64);
    if *v > ten_million {
        let digits = v.to_string();
        let mut lead: u64 = digits[..2].parse().expect("at least eight digits");
        let third = digits.as_bytes()[2] - b'0';
        let rest_nonzero = digits[3..].bytes().any(|b| b != b'0');
        // round half to even on the third digit
        if third > 5 || (third == 5 && (rest_nonzero || lead % 2 == 1)) {
            lead += 1;
        }
        let exponent = digits.len() - 2;
        let mut scaled = BigUint::from(lead) * BigUint::from(10u32).pow(exponent as u32);
        scaled /= BigUint::from(1_000_000u32);
        return format!("{scaled}M");
    }
    let digits = v.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(o: u64, p: u64, l: u64, k: u32) -> StudyCounts {
        StudyCounts::new("s", o, p, l, k).unwrap()
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn evaluate_examples() {
        let r = evaluate_counts(&counts(7, 3, 4, 6)).unwrap();
        assert_eq!((r.questions, r.models, r.search_space), (big(84), big(64), big(5376)));
        let r = evaluate_counts(&counts(1, 2, 8, 15)).unwrap();
        assert_eq!(
            (r.questions, r.models, r.search_space),
            (big(16), big(32768), big(524288))
        );
        let r = evaluate_counts(&counts(1, 3, 8, 6)).unwrap();
        assert_eq!((r.questions, r.models, r.search_space), (big(24), big(64), big(1536)));
        let r = evaluate_counts(&counts(1, 1, 1, 0)).unwrap();
        assert_eq!((r.questions, r.models, r.search_space), (big(1), big(1), big(1)));
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(StudyCounts::new("x", 0, 1, 1, 1).is_err());
        assert!(StudyCounts::new("x", 1, 0, 1, 1).is_err());
        assert!(StudyCounts::new("x", 1, 1, 0, 1).is_err());
    }

    #[test]
    fn beyond_sixty_four_bits() {
        let r = evaluate_counts(&counts(3, 1, 1, 100)).unwrap();
        assert_eq!(r.search_space, big(3) << 100u32);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(&format!("\"{}\"", big(3) << 100u32)));
    }

    #[test]
    fn single_study_summary() {
        let s = corpus_summary(&[counts(2, 3, 4, 5)]).unwrap();
        let v = HalfInteger::from_int(big(24 * 32));
        assert_eq!(s.search_space.minimum, v);
        assert_eq!(s.search_space.lower_hinge, v);
        assert_eq!(s.search_space.median, v);
        assert_eq!(s.search_space.upper_hinge, v);
        assert_eq!(s.search_space.maximum, v);
        assert!(corpus_summary(&[]).is_err());
    }

    #[test]
    fn hinges_small_cases() {
        let col = |xs: &[u64]| five_number(&xs.iter().map(|&x| big(x)).collect::<Vec<_>>()).unwrap();
        let f = col(&[1, 2, 3, 4, 5]);
        assert_eq!(f.lower_hinge.to_string(), "2");
        assert_eq!(f.median.to_string(), "3");
        assert_eq!(f.upper_hinge.to_string(), "4");
        let f = col(&[1, 2, 3, 4]);
        assert_eq!(f.lower_hinge.to_string(), "1.5");
        assert_eq!(f.median.to_string(), "2.5");
        assert_eq!(f.upper_hinge.to_string(), "3.5");
    }

    #[test]
    fn half_integer_json() {
        let h = HalfInteger::mean_of(&big(14), &big(15));
        assert_eq!(serde_json::to_string(&h).unwrap(), "14.5");
        assert_eq!(serde_json::to_string(&HalfInteger::from_int(big(96))).unwrap(), "96");
    }

    #[test]
    fn display_rounding() {
        assert_eq!(display_count(&big(33_554_432)), "34M");
        assert_eq!(display_count(&big(41_943_040)), "42M");
        assert_eq!(display_count(&big(221_184)), "221,184");
        assert_eq!(display_count(&big(96)), "96");
        assert_eq!(display_count(&big(10_000_000)), "10,000,000");
        assert_eq!(display_count(&big(125_000_000)), "120M");
        assert_eq!(display_count(&big(135_000_000)), "140M");
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        fn study() -> impl Strategy<Value = StudyCounts> {
            (1u64..10, 1u64..10, 1u64..10, 0u32..30).prop_map(|(o, p, l, k)| StudyCounts::new("s", o, p, l, k).unwrap())
        }

        proptest! {
            #[test]
            fn extra_covariate_doubles(c in study()) {
                let a = evaluate_counts(&c).unwrap();
                let mut more = c.clone();
                more.covariates += 1;
                let b = evaluate_counts(&more).unwrap();
                prop_assert_eq!(b.models, &a.models * 2u32);
                prop_assert_eq!(b.search_space, &a.search_space * 2u32);
            }

            #[test]
            fn summary_ordered_and_permutation_invariant(mut cs in vec(study(), 1..25), rot in 0usize..25) {
                let a = corpus_summary(&cs).unwrap();
                let k = rot % cs.len();
                cs.rotate_left(k);
                let b = corpus_summary(&cs).unwrap();
                prop_assert_eq!(&a, &b);
                for f in [&a.outcomes, &a.predictors, &a.covariates, &a.lags, &a.questions, &a.models, &a.search_space] {
                    prop_assert!(f.minimum <= f.lower_hinge);
                    prop_assert!(f.lower_hinge <= f.median);
                    prop_assert!(f.median <= f.upper_hinge);
                    prop_assert!(f.upper_hinge <= f.maximum);
                }
            }
        }
    }
}
