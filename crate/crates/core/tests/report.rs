use std::fs;

use metaaudit::audit_io::fixtures::{self, SI3_FLOOR, SI3_METHOD, TABLE5_METHOD};
use metaaudit::audit_io::render::{layout, svg_point};
use metaaudit::audit_io::report::{audit, write_plots, AuditOptions, AuditReport, BILINEAR_RUBRIC};
use metaaudit::audit_io::{render_plot, run_audit, PlotFormat, RenderOptions};
use metaaudit::effect_stats::{EffectEstimate, PValueMethod};
use metaaudit::pvalue_plot::{build_plot, classify, ClassifierConfig, PlotLabel};
use metaaudit::search_space::StudyCounts;
use metaaudit::Error;
use serde_json::Value;

fn table5() -> Vec<EffectEstimate> {
    [&fixtures::TABLE5_NO2, &fixtures::TABLE5_PM25]
        .into_iter()
        .flat_map(|f| fixtures::estimates(f).unwrap())
        .map(|r| r.estimate)
        .collect()
}

fn counts() -> Vec<StudyCounts> {
    fixtures::table3_counts()
        .unwrap()
        .into_iter()
        .map(|r| r.counts)
        .collect()
}

fn table5_report() -> AuditReport {
    let c = counts();
    audit(&table5(), Some(&c), &AuditOptions::new("table5", TABLE5_METHOD))
        .unwrap()
        .report
}

#[test]
fn asthma_audit_sections() {
    let r = table5_report();
    assert_eq!(r.groups.len(), 2);
    let no2 = r.group("NO2").unwrap();
    assert_eq!(no2.plot.classification.label, PlotLabel::BilinearMixture);
    assert!(no2.plot.classification.breakpoint.is_some());
    assert_eq!(no2.plot.points.len(), 13);
    // Smallest p is the CHS 2003 row, printed as 0.0033.
    assert_eq!(no2.plot.points[0].0, 1);
    assert!((no2.plot.points[0].1 - 0.0033).abs() < 1e-4);
    let pm = r.group("PM2.5").unwrap();
    assert!(matches!(
        pm.plot.classification.label,
        PlotLabel::UniformNull | PlotLabel::Indeterminate
    ));
    let ahsmog = pm.pvalues.iter().find(|p| p.study_id == "ahsmog").unwrap();
    assert!(ahsmog.reconstructed);
    assert_eq!(ahsmog.reported_p, None);
    assert!(pm
        .pvalues
        .iter()
        .filter(|p| p.study_id != "ahsmog")
        .all(|p| !p.reconstructed));
    assert!(r
        .groups
        .iter()
        .flat_map(|g| &g.pvalues)
        .all(|p| p.method == TABLE5_METHOD));

    let ss = r.search_space.as_ref().unwrap();
    assert_eq!(ss.per_study.as_array().unwrap().len(), 19);
    assert_eq!(ss.summary["search_space"]["median"], 13824);
    assert_eq!(r.rubric.as_deref(), Some(BILINEAR_RUBRIC));
    assert!(BILINEAR_RUBRIC.contains("Small p-values true") && BILINEAR_RUBRIC.contains("Small p-values false"));
}

#[test]
fn pooled_section_is_log_scale_random_effects() {
    let r = table5_report();
    let no2 = r.group("NO2").unwrap().pooled.as_ref().unwrap();
    assert_eq!(no2.model, "RandomEffects");
    assert_eq!(no2.df, 12);
    assert!(no2.ci_low < no2.pooled_ee && no2.pooled_ee < no2.ci_high);
    let total: f64 = no2.weights.iter().map(|w| w.weight).sum();
    assert!((total - 1.0).abs() < 1e-4);
}

#[test]
fn json_schema_keys() {
    let v: Value = serde_json::from_str(&table5_report().to_json().unwrap()).unwrap();
    for key in ["dataset_id", "toolkit_version", "groups", "search_space", "rubric"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let g = &v["groups"][0];
    for key in ["group", "estimates", "pvalues", "pooled", "plot"] {
        assert!(g.get(key).is_some(), "missing groups[].{key}");
    }
    for key in ["study_id", "p", "method", "floored", "reconstructed"] {
        assert!(g["pvalues"][0].get(key).is_some(), "missing pvalues[].{key}");
    }
    for key in [
        "model",
        "pooled_ee",
        "ci_low",
        "ci_high",
        "tau2",
        "q",
        "df",
        "q_pvalue",
        "i2_percent",
    ] {
        assert!(g["pooled"].get(key).is_some(), "missing pooled.{key}");
    }
    for key in [
        "label",
        "slope",
        "ks_stat",
        "ks_pvalue",
        "breakpoint",
        "frac_below_alpha",
    ] {
        assert!(
            g["plot"]["classification"].get(key).is_some(),
            "missing classification.{key}"
        );
    }
    assert!(v["search_space"].get("per_study").is_some() && v["search_space"].get("summary").is_some());
}

#[test]
fn round_trip() {
    let r = table5_report();
    let json = r.to_json().unwrap();
    let back = AuditReport::from_json(&json).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json().unwrap(), json);
}

#[test]
fn floats_carry_six_significant_digits() {
    let r = table5_report();
    for p in r.groups.iter().flat_map(|g| &g.pvalues) {
        let s = format!("{:e}", p.p);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert!(mantissa.len() <= 6, "{} → {s}", p.study_id);
    }
}

#[test]
fn estimates_only_report() {
    let r = audit(&table5(), None, &AuditOptions::new("t", TABLE5_METHOD))
        .unwrap()
        .report;
    assert!(r.search_space.is_none());
    let v: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(v["search_space"], Value::Null);
}

#[test]
fn reference_corpora_audit() {
    let mut opts = AuditOptions::new("si3", SI3_METHOD);
    opts.floor = Some(SI3_FLOOR);
    let rows: Vec<EffectEstimate> = [&fixtures::SI3_MESO, &fixtures::SI3_SMOKING]
        .into_iter()
        .flat_map(|f| fixtures::estimates(f).unwrap())
        .map(|r| r.estimate)
        .collect();
    let r = audit(&rows, None, &opts).unwrap().report;
    for g in &r.groups {
        assert_eq!(g.plot.classification.label, PlotLabel::TrueEffect, "{}", g.group);
        assert!(g.pvalues.iter().any(|p| p.floored && p.p == SI3_FLOOR));
    }
    assert!(r.rubric.is_none());
}

#[test]
fn errors_name_group_and_stage() {
    let bad = [EffectEstimate {
        study_id: "x".into(),
        label: String::new(),
        ee: 1.1,
        cl_low: 1.2,
        cl_high: 1.3,
        confidence_level: 0.95,
        group: Some("G".into()),
        reported_p: Default::default(),
    }];
    let err = audit(&bad, None, &AuditOptions::new("t", PValueMethod::LinearExact)).unwrap_err();
    assert!(matches!(err, Error::Stage { ref group, stage: "p-values", .. } if group == "G"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn run_audit_from_files_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let est = dir.path().join("est.csv");
    let mut text = fixtures::TABLE5_NO2.contents.to_string();
    text.extend(fixtures::TABLE5_PM25.contents.lines().skip(1).map(|l| format!("{l}\n")));
    fs::write(&est, text).unwrap();
    let cnt = dir.path().join("counts.csv");
    fs::write(&cnt, fixtures::TABLE3_COUNTS.contents).unwrap();

    let out = run_audit(&est, Some(&cnt), &AuditOptions::new("files", TABLE5_METHOD)).unwrap();
    assert_eq!(out.report, table5_report_named("files"));
    let paths = write_plots(&out, &dir.path().join("plots")).unwrap();
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["NO2.svg", "PM2.5.svg"]);
    let svg = fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(svg.matches("class=\"point\"").count(), 13);
    assert!(svg.contains("BilinearMixture"));

    let err = run_audit(
        dir.path().join("missing.csv"),
        None,
        &AuditOptions::new("x", TABLE5_METHOD),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

fn table5_report_named(id: &str) -> AuditReport {
    let mut r = table5_report();
    r.dataset_id = id.to_string();
    r
}

#[test]
fn single_point_svg() {
    let plot = build_plot(&[0.3]).unwrap();
    let class = classify(&plot, &ClassifierConfig::default()).unwrap();
    let svg =
        String::from_utf8(render_plot(&plot, &class, &RenderOptions::new(PlotFormat::Svg, 0.05)).unwrap()).unwrap();
    assert_eq!(svg.matches("class=\"point\"").count(), 1);
    assert!(svg.contains("Indeterminate"));
    for needle in [
        "class=\"reference\"",
        "stroke-dasharray",
        "class=\"alpha-rule\"",
        ">rank<",
        ">p-value<",
    ] {
        assert!(svg.contains(needle), "{needle}");
    }
}

#[test]
fn uniform_quantiles_sit_on_reference_line() {
    // The reference line runs from (0, 0) to (n, n/(n+1)); at rank i its
    // height is i/(n+1), which is exactly the i-th uniform quantile.
    let n = 20;
    let ps: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
    let plot = build_plot(&ps).unwrap();
    let (x0, y0) = svg_point(n, 0.0, 0.0);
    let (x1, y1) = svg_point(n, n as f64, n as f64 / (n + 1) as f64);
    for pt in plot.points() {
        let (x, y) = svg_point(n, pt.rank as f64, pt.p);
        let line_y = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        assert!((y - line_y).abs() < layout::MARKER_RADIUS, "rank {}", pt.rank);
    }
}

#[test]
fn ascii_plot_grid() {
    let ps: Vec<f64> = fixtures::estimates(&fixtures::TABLE5_NO2)
        .unwrap()
        .iter()
        .map(|r| {
            metaaudit::effect_stats::compute_p(&r.estimate, TABLE5_METHOD)
                .unwrap()
                .p
        })
        .collect();
    let plot = build_plot(&ps).unwrap();
    let class = classify(&plot, &ClassifierConfig::default()).unwrap();
    let text =
        String::from_utf8(render_plot(&plot, &class, &RenderOptions::new(PlotFormat::Ascii, 0.05)).unwrap()).unwrap();
    assert!(!text.contains('\u{1b}'));
    assert!(text.contains("classification: BilinearMixture"));
    assert!(text.contains("rank") && text.contains("p-value"));
    let grid_rows = text.lines().filter(|l| l.contains('|')).count();
    assert!(grid_rows >= layout::ASCII_ROWS);
    let a = render_plot(&plot, &class, &RenderOptions::new(PlotFormat::Ascii, 0.05)).unwrap();
    assert_eq!(a, text.into_bytes());
}
