//! Bundled read-only datasets.
//!
//! * `table5_no2`, `table5_pm25`: cohort estimates behind a published
//!   NO₂/PM₂.₅ asthma meta-analysis, p-values computed on the natural scale.
//! * `table3_counts`: outcome/predictor/lag/covariate counts of its 19 base studies.
//! * `si3_cml`, `si3_meso`, `si3_exercise`, `si3_smoking`: reference corpora
//!   with p-values computed by the log-scale Altman–Bland approximation and
//!   floored at 0.0001.
//!
//! Rows whose published p-value cell is blank carry `reported_p = Missing`
//! and are flagged reconstructed. Transcription fixes are described in the
//! row's `note`.

use num_bigint::BigUint;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::effect_stats::{EffectEstimate, PValueMethod, ReportedP, DEFAULT_P_FLOOR};
use crate::error::{Error, Result};
use crate::search_space::StudyCounts;

pub struct Fixture {
    pub name: &'static str,
    pub contents: &'static str,
    pub sha256: &'static str,
    pub rows: usize,
}

macro_rules! fixture {
    ($name:literal, $sha:literal, $rows:literal) => {
        Fixture {
            name: $name,
            contents: include_str!(concat!("../../fixtures/", $name, ".csv")),
            sha256: $sha,
            rows: $rows,
        }
    };
}

pub const TABLE5_NO2: Fixture = fixture!(
    "table5_no2",
    "20d9b7c0faf8fcf59db48365fbb1b29e3e43322328460501c1ec53aff15aca7a",
    13
);
pub const TABLE5_PM25: Fixture = fixture!(
    "table5_pm25",
    "98d9b6a8f5af1edd787340659a1ec72cdb6e860dbd1c659397759ad96abca52c",
    5
);
pub const TABLE3_COUNTS: Fixture = fixture!(
    "table3_counts",
    "8ff6b5b1144605fd04616f8f9b230371e09054c2abf672e51e082ed1873bc41a",
    19
);
pub const SI3_CML: Fixture = fixture!(
    "si3_cml",
    "935e389b485292eb14cdbbc627d98a04efd2efce90a8437af2c2af86d90a768d",
    12
);
pub const SI3_MESO: Fixture = fixture!(
    "si3_meso",
    "0a6fc60dd36603f2f5d8e22f428bd2875c9d1cda131df9cc7cdeb02e85554294",
    10
);
pub const SI3_EXERCISE: Fixture = fixture!(
    "si3_exercise",
    "cde59d13a9aa7cf19828a92c9b6af951e264091b28b792d1ebfffd1c8f2b7792",
    69
);
pub const SI3_SMOKING: Fixture = fixture!(
    "si3_smoking",
    "ccfd06a2106e42c036f319576a6eb9b409b80beeb0e18ddaa9b46a86388233a2",
    102
);

pub const ALL: [&Fixture; 7] = [
    &TABLE5_NO2,
    &TABLE5_PM25,
    &TABLE3_COUNTS,
    &SI3_CML,
    &SI3_MESO,
    &SI3_EXERCISE,
    &SI3_SMOKING,
];

/// p-value convention of the asthma cohort columns.
pub const TABLE5_METHOD: PValueMethod = PValueMethod::LinearExact;
/// p-value convention and floor of the reference corpora.
pub const SI3_METHOD: PValueMethod = PValueMethod::LogAltmanBland;
pub const SI3_FLOOR: f64 = DEFAULT_P_FLOOR;

impl Fixture {
    pub fn checksum(&self) -> String {
        Sha256::digest(self.contents.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn verify(&self) -> Result<()> {
        let got = self.checksum();
        if got != self.sha256 {
            return Err(Error::Internal(format!(
                "fixture {} checksum mismatch: {got}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn by_name(name: &str) -> Option<&'static Fixture> {
        ALL.into_iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureEstimate {
    pub estimate: EffectEstimate,
    pub note: Option<String>,
}

impl FixtureEstimate {
    pub fn reported_p(&self) -> Option<f64> {
        match self.estimate.reported_p {
            ReportedP::Value(p) => Some(p),
            _ => None,
        }
    }

    pub fn reconstructed(&self) -> bool {
        self.estimate.reported_p == ReportedP::Missing
    }
}

#[derive(Deserialize)]
struct NoteRow {
    note: Option<String>,
}

/// Parses an estimates fixture, keeping each row's note.
pub fn estimates(fixture: &Fixture) -> Result<Vec<FixtureEstimate>> {
    let rows = super::csv_input::read_estimates(fixture.contents.as_bytes())?;
    let mut rdr = csv::Reader::from_reader(fixture.contents.as_bytes());
    let notes: Vec<NoteRow> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Internal(format!("fixture {}: {e}", fixture.name)))?;
    Ok(rows
        .into_iter()
        .zip(notes)
        .map(|(estimate, n)| FixtureEstimate {
            estimate,
            note: n.note.filter(|s| !s.is_empty()),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCounts {
    pub counts: StudyCounts,
    pub cohort: String,
    pub printed_questions: BigUint,
    pub printed_models: BigUint,
    pub printed_search_space: BigUint,
    pub note: Option<String>,
}

#[derive(Deserialize)]
struct CountsRow {
    cohort: String,
    printed_questions: u64,
    printed_models: u64,
    printed_search_space: u64,
    note: Option<String>,
}

pub fn table3_counts() -> Result<Vec<FixtureCounts>> {
    let counts = super::csv_input::read_counts(TABLE3_COUNTS.contents.as_bytes())?;
    let mut rdr = csv::Reader::from_reader(TABLE3_COUNTS.contents.as_bytes());
    let extra: Vec<CountsRow> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Internal(format!("fixture table3_counts: {e}")))?;
    Ok(counts
        .into_iter()
        .zip(extra)
        .map(|(counts, r)| FixtureCounts {
            counts,
            cohort: r.cohort,
            printed_questions: r.printed_questions.into(),
            printed_models: r.printed_models.into(),
            printed_search_space: r.printed_search_space.into(),
            note: r.note.filter(|s| !s.is_empty()),
        })
        .collect())
}

/// Five-number summaries as printed in the published counts summary table,
/// ordered minimum, lower quartile, median, upper quartile, maximum.
pub mod table4 {
    pub const SEARCH_SPACE: [u64; 5] = [96, 1_536, 13_824, 221_184, 42_000_000];
    pub const MODELS: [u64; 5] = [32, 96, 256, 3_072, 262_144];
    pub const QUESTIONS: [u64; 5] = [2, 15, 24, 84, 160];
    /// The printed lower quartile of Questions (15) is not reproduced by
    /// median-inclusive hinges, which give 14.5.
    pub const QUESTIONS_LOWER_HINGE_DISCREPANCY: bool = true;
    pub const QUESTIONS_LOWER_HINGE_COMPUTED: f64 = 14.5;
}

/// Pooled values published for the two asthma meta-analyses.
pub mod published_pooling {
    pub const NO2_POOLED_EE: f64 = 1.15;
    pub const NO2_CI: (f64, f64) = (1.06, 1.26);
    pub const NO2_I2: f64 = 64.1;
    pub const PM25_POOLED_EE: f64 = 1.16;
    pub const PM25_I2: f64 = 7.4;
}
