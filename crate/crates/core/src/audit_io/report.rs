//! End-to-end audit: estimates (and optionally study counts) in, a JSON
//! report and one plot per group out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv_input::{load_counts_csv, load_estimates_csv};
use super::format::{sig6, sig6_opt};
use super::render::{render_plot, PlotFormat, RenderOptions};
use crate::effect_stats::{compute_p, floor_p, EffectEstimate, PValueMethod, ReportedP};
use crate::error::{Error, Result};
use crate::meta_pool::{dersimonian_laird, interpret_i2, I2Interpretation, PoolInput, MIXED_MEASURES_CAVEAT};
use crate::pvalue_plot::{build_plot, classify, ClassifierConfig, PValuePlot, PlotClassification, PlotLabel};
use crate::search_space::{corpus_summary, evaluate_counts, CorpusSummary, SearchSpaceResult, StudyCounts};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GENERATOR: &str = concat!("metaaudit ", env!("CARGO_PKG_VERSION"));

/// Interpretation factors for a bilinear p-value plot: evidence for the
/// small p-values being real against evidence for them being artifacts.
pub const BILINEAR_RUBRIC: &str = "\
Factors to consider when a meta-analysis presents as a bilinear p-value plot.

Possibility 1: Small p-values true
  - Most of the studies show a small p-value
  - There will be supporting literature
  - There will be a reasonable etiology
  - No evidence of MTMM (p-hacking)
  - Most Bradford Hill criteria met
  Large p-values false
  - Poor research technique
  - Underpowered studies
  - Masking covariates hide real effect
  - Role of chance

Possibility 2: Small p-values false
  - Evidence of MTMM (p-hacking) including lags
  - Covariates correlated with outcome, bias
  - Very large sample size elevates small bias to cause
  - A number of Bradford Hill criteria not met
  Large p-values true
  - Distribution of large p-values is uniform
  - Good negative effect studies
  - No clear etiology
";

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub dataset_id: String,
    pub config: ClassifierConfig,
    pub method: PValueMethod,
    /// Reporting floor for p-values; `None` reports them unfloored.
    pub floor: Option<f64>,
}

impl AuditOptions {
    pub fn new(dataset_id: &str, method: PValueMethod) -> Self {
        AuditOptions {
            dataset_id: dataset_id.to_string(),
            config: ClassifierConfig::default(),
            method,
            floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEcho {
    pub study_id: String,
    pub label: String,
    pub ee: f64,
    pub cl_low: f64,
    pub cl_high: f64,
    pub confidence_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueEntry {
    pub study_id: String,
    pub p: f64,
    pub method: PValueMethod,
    pub floored: bool,
    pub reconstructed: bool,
    pub se: f64,
    pub z: f64,
    pub reported_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyWeight {
    pub study_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSection {
    pub model: String,
    pub pooled_ee: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub tau2: f64,
    pub q: f64,
    pub df: usize,
    pub q_pvalue: f64,
    pub i2_percent: f64,
    pub i2_interpretation: I2Interpretation,
    pub weights: Vec<StudyWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSection {
    pub label: PlotLabel,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    pub breakpoint: Option<usize>,
    pub frac_below_alpha: f64,
    pub sse_one_segment: Option<f64>,
    pub sse_two_segment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSection {
    /// `[rank, p]` pairs in rank order.
    pub points: Vec<(usize, f64)>,
    pub classification: ClassificationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSection {
    pub group: String,
    pub estimates: Vec<EstimateEcho>,
    pub pvalues: Vec<PValueEntry>,
    pub pooled: Option<PooledSection>,
    /// Why `pooled` is absent.
    pub pooling_note: Option<String>,
    pub caveats: Vec<String>,
    pub plot: PlotSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpaceSection {
    pub per_study: serde_json::Value,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub dataset_id: String,
    pub toolkit_version: String,
    pub generator: String,
    pub pvalue_method: PValueMethod,
    pub p_floor: Option<f64>,
    pub classifier: ClassifierConfig,
    pub groups: Vec<GroupSection>,
    pub search_space: Option<SearchSpaceSection>,
    pub rubric: Option<String>,
}

impl AuditReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("report does not parse: {e}")))
    }

    pub fn group(&self, name: &str) -> Option<&GroupSection> {
        self.groups.iter().find(|g| g.group == name)
    }
}

/// Plot and classification of one group, kept at full precision for rendering.
#[derive(Debug, Clone)]
pub struct GroupPlot {
    pub group: String,
    pub plot: PValuePlot,
    pub classification: PlotClassification,
}

#[derive(Debug, Clone)]
pub struct AuditOutput {
    pub report: AuditReport,
    pub plots: Vec<GroupPlot>,
}

/// Splits estimates by `group`, keeping first-appearance order.
fn group_estimates(estimates: &[EffectEstimate]) -> Vec<(String, Vec<&EffectEstimate>)> {
    let mut order: Vec<(String, Vec<&EffectEstimate>)> = Vec::new();
    for est in estimates {
        let key = est.group.clone().unwrap_or_default();
        match order.iter_mut().find(|(g, _)| *g == key) {
            Some((_, rows)) => rows.push(est),
            None => order.push((key, vec![est])),
        }
    }
    order
}

fn audit_group(name: &str, rows: &[&EffectEstimate], opts: &AuditOptions) -> Result<(GroupSection, GroupPlot)> {
    let mut pvalues = Vec::with_capacity(rows.len());
    for est in rows {
        let mut r = compute_p(est, opts.method).map_err(|e| e.in_stage(name, "p-values"))?;
        if let Some(floor) = opts.floor {
            let (p, floored) = floor_p(r.p, floor).map_err(|e| e.in_stage(name, "p-values"))?;
            r.p = p;
            r.floored = floored;
        }
        pvalues.push((est, r));
    }

    let (pooled, pooling_note) = if rows.len() < 2 {
        (
            None,
            Some(format!(
                "insufficient data: random-effects pooling needs at least 2 studies, got {}",
                rows.len()
            )),
        )
    } else {
        let inputs = rows
            .iter()
            .map(|e| PoolInput::from_estimate(e))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage(name, "pooling"))?;
        let res = dersimonian_laird(&inputs).map_err(|e| e.in_stage(name, "pooling"))?;
        let interp = interpret_i2(res.i2_percent).map_err(|e| e.in_stage(name, "pooling"))?;
        let section = PooledSection {
            model: res.model.to_string(),
            pooled_ee: sig6(res.pooled_ee),
            ci_low: sig6(res.ci_low),
            ci_high: sig6(res.ci_high),
            tau2: sig6(res.tau2),
            q: sig6(res.q),
            df: res.df,
            q_pvalue: sig6(res.q_pvalue),
            i2_percent: sig6(res.i2_percent),
            i2_interpretation: interp,
            weights: inputs
                .iter()
                .zip(&res.weights)
                .map(|(i, w)| StudyWeight {
                    study_id: i.study_id.clone(),
                    weight: sig6(*w),
                })
                .collect(),
        };
        (Some(section), None)
    };

    let raw: Vec<f64> = pvalues.iter().map(|(_, r)| r.p).collect();
    let plot = build_plot(&raw).map_err(|e| e.in_stage(name, "plot"))?;
    let class = classify(&plot, &opts.config).map_err(|e| e.in_stage(name, "plot"))?;

    let section = GroupSection {
        group: name.to_string(),
        estimates: rows
            .iter()
            .map(|e| EstimateEcho {
                study_id: e.study_id.clone(),
                label: e.label.clone(),
                ee: e.ee,
                cl_low: e.cl_low,
                cl_high: e.cl_high,
                confidence_level: e.confidence_level,
            })
            .collect(),
        pvalues: pvalues
            .iter()
            .map(|(e, r)| PValueEntry {
                study_id: e.study_id.clone(),
                p: sig6(r.p),
                method: r.method,
                floored: r.floored,
                reconstructed: e.reported_p == ReportedP::Missing,
                se: sig6(r.se),
                z: sig6(r.z),
                reported_p: match e.reported_p {
                    ReportedP::Value(p) => Some(p),
                    _ => None,
                },
            })
            .collect(),
        pooled,
        pooling_note,
        caveats: vec![MIXED_MEASURES_CAVEAT.to_string()],
        plot: PlotSection {
            points: plot.points().iter().map(|pt| (pt.rank, sig6(pt.p))).collect(),
            classification: ClassificationSection {
                label: class.label,
                slope: sig6_opt(class.slope),
                intercept: sig6_opt(class.intercept),
                ks_stat: sig6(class.ks_stat),
                ks_pvalue: sig6(class.ks_pvalue),
                breakpoint: class.breakpoint,
                frac_below_alpha: sig6(class.frac_below_alpha),
                sse_one_segment: sig6_opt(class.sse_one_segment),
                sse_two_segment: sig6_opt(class.sse_two_segment),
            },
        },
    };
    Ok((
        section,
        GroupPlot {
            group: name.to_string(),
            plot,
            classification: class,
        },
    ))
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Internal(e.to_string()))
}

fn search_space_section(counts: &[StudyCounts]) -> Result<SearchSpaceSection> {
    let per_study: Vec<SearchSpaceResult> = counts.iter().map(evaluate_counts).collect::<Result<_>>()?;
    let summary: Option<CorpusSummary> = if counts.is_empty() {
        None
    } else {
        Some(corpus_summary(counts)?)
    };
    Ok(SearchSpaceSection {
        per_study: to_value(&per_study)?,
        summary: to_value(&summary)?,
    })
}

/// Audits already-loaded inputs.
pub fn audit(estimates: &[EffectEstimate], counts: Option<&[StudyCounts]>, opts: &AuditOptions) -> Result<AuditOutput> {
    opts.config.validate()?;
    let mut groups = Vec::new();
    let mut plots = Vec::new();
    for (name, rows) in group_estimates(estimates) {
        let (section, plot) = audit_group(&name, &rows, opts)?;
        groups.push(section);
        plots.push(plot);
    }
    let search_space = counts
        .map(search_space_section)
        .transpose()
        .map_err(|e| e.in_stage("<counts>", "search space"))?;
    let rubric = groups
        .iter()
        .any(|g| g.plot.classification.label == PlotLabel::BilinearMixture)
        .then(|| BILINEAR_RUBRIC.to_string());
    Ok(AuditOutput {
        report: AuditReport {
            dataset_id: opts.dataset_id.clone(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            generator: GENERATOR.to_string(),
            pvalue_method: opts.method,
            p_floor: opts.floor,
            classifier: opts.config,
            groups,
            search_space,
            rubric,
        },
        plots,
    })
}

/// Loads the files and audits them.
pub fn run_audit(
    estimates_path: impl AsRef<Path>,
    counts_path: Option<&Path>,
    opts: &AuditOptions,
) -> Result<AuditOutput> {
    let estimates = load_estimates_csv(estimates_path)?;
    let counts = counts_path.map(load_counts_csv).transpose()?;
    audit(&estimates, counts.as_deref(), opts)
}

/// File-name-safe form of a group name.
pub fn plot_file_stem(group: &str) -> String {
    let stem: String = group
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() {
        "group".into()
    } else {
        stem
    }
}

/// Writes one SVG per group into `dir` and returns the paths in group order.
pub fn write_plots(output: &AuditOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut paths = Vec::new();
    for gp in &output.plots {
        let stem = plot_file_stem(&gp.group);
        let k = seen.entry(stem.clone()).or_insert(0);
        *k += 1;
        let name = if *k == 1 {
            format!("{stem}.svg")
        } else {
            format!("{stem}-{k}.svg")
        };
        let mut opts = RenderOptions::new(PlotFormat::Svg, output.report.classifier.alpha);
        opts.title = Some(format!("{}: {}", output.report.dataset_id, gp.group));
        let bytes = render_plot(&gp.plot, &gp.classification, &opts)?;
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
