use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use metaaudit::audit_io::fixtures;
use metaaudit::audit_io::report::{plot_file_stem, write_plots, AuditOptions};
use metaaudit::audit_io::{
    load_counts_csv, load_estimates_csv, render_plot, run_audit, sig6, PlotFormat, RenderOptions,
};
use metaaudit::effect_stats::{compute_p, floor_p, EffectEstimate, PValueMethod};
use metaaudit::meta_pool::{dersimonian_laird, fixed_effect_pool, PoolInput};
use metaaudit::mtmm_sim::{simulate, Scenario, SimConfig};
use metaaudit::pvalue_plot::{build_plot, classify, ClassifierConfig};
use metaaudit::search_space::{corpus_summary, display_count, evaluate_counts};
use metaaudit::{Error, Result};

#[derive(Parser)]
#[command(name = "metaaudit", version, about = "Audit observational-study meta-analyses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Fixed,
    Dl,
}

#[derive(Subcommand)]
enum Command {
    /// Recover p-values from effect estimates and confidence limits (CSV to stdout).
    Pvalues {
        estimates: PathBuf,
        #[arg(long, default_value = "linear")]
        method: PValueMethod,
        /// Report p-values at or below this value as the value itself.
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Pool each group on the log scale (JSON to stdout).
    Pool {
        estimates: PathBuf,
        #[arg(long, value_enum, default_value = "dl")]
        model: ModelArg,
    },
    /// Draw the p-value plot of one group.
    Plot {
        estimates: PathBuf,
        #[arg(long, default_value = "svg")]
        format: PlotFormat,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Group to plot; required when the file holds more than one.
        #[arg(long)]
        group: Option<String>,
        #[arg(long, default_value = "linear")]
        method: PValueMethod,
        #[arg(long)]
        floor: Option<f64>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search-space counts per study and their five-number summaries.
    Searchspace {
        counts: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Draw a synthetic p-value corpus (JSON to stdout).
    Simulate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long = "effect-z", default_value_t = 0.0)]
        effect_z: f64,
        #[arg(long, default_value_t = 0.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full pipeline: p-values, pooling, plots, classification, search space.
    Audit {
        estimates: PathBuf,
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "plots-dir")]
        plots_dir: Option<PathBuf>,
        #[arg(long, default_value = "linear")]
        method: PValueMethod,
        #[arg(long)]
        floor: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Defaults to the estimates file stem.
        #[arg(long = "dataset-id")]
        dataset_id: Option<String>,
    },
    /// Write the bundled datasets as CSV files.
    Fixtures {
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("metaaudit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => io::stdout().write_all(bytes).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn groups_of(estimates: &[EffectEstimate]) -> Vec<(String, Vec<&EffectEstimate>)> {
    let mut out: Vec<(String, Vec<&EffectEstimate>)> = Vec::new();
    for e in estimates {
        let g = e.group.clone().unwrap_or_default();
        match out.iter_mut().find(|(k, _)| *k == g) {
            Some((_, v)) => v.push(e),
            None => out.push((g, vec![e])),
        }
    }
    out
}

fn pvalues_of(rows: &[&EffectEstimate], method: PValueMethod, floor: Option<f64>) -> Result<Vec<(f64, bool)>> {
    rows.iter()
        .map(|e| {
            let r = compute_p(e, method)?;
            match floor {
                Some(f) => floor_p(r.p, f),
                None => Ok((r.p, false)),
            }
        })
        .collect()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Pvalues {
            estimates,
            method,
            floor,
        } => {
            let rows = load_estimates_csv(&estimates)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::Internal(e.to_string());
            w.write_record([
                "study_id", "group", "ee", "cl_low", "cl_high", "se", "z", "p", "floored", "method",
            ])
            .map_err(csv_err)?;
            for e in &rows {
                let mut r = compute_p(e, method)?;
                if let Some(f) = floor {
                    (r.p, r.floored) = floor_p(r.p, f)?;
                }
                w.write_record([
                    e.study_id.clone(),
                    e.group.clone().unwrap_or_default(),
                    e.ee.to_string(),
                    e.cl_low.to_string(),
                    e.cl_high.to_string(),
                    sig6(r.se).to_string(),
                    sig6(r.z).to_string(),
                    sig6(r.p).to_string(),
                    r.floored.to_string(),
                    method.to_string(),
                ])
                .map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
            write_out(None, &bytes)
        }
        Command::Pool { estimates, model } => {
            #[derive(Serialize)]
            struct Pooled {
                group: String,
                model: String,
                pooled_ee: f64,
                ci_low: f64,
                ci_high: f64,
                tau2: f64,
                q: f64,
                df: usize,
                q_pvalue: f64,
                i2_percent: f64,
            }
            let rows = load_estimates_csv(&estimates)?;
            let mut out = Vec::new();
            for (g, members) in groups_of(&rows) {
                let inputs = members
                    .iter()
                    .map(|e| PoolInput::from_estimate(e))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.in_stage(&g, "pooling"))?;
                let r = match model {
                    ModelArg::Fixed => fixed_effect_pool(&inputs),
                    ModelArg::Dl => dersimonian_laird(&inputs),
                }
                .map_err(|e| e.in_stage(&g, "pooling"))?;
                out.push(Pooled {
                    group: g,
                    model: r.model.to_string(),
                    pooled_ee: sig6(r.pooled_ee),
                    ci_low: sig6(r.ci_low),
                    ci_high: sig6(r.ci_high),
                    tau2: sig6(r.tau2),
                    q: sig6(r.q),
                    df: r.df,
                    q_pvalue: sig6(r.q_pvalue),
                    i2_percent: sig6(r.i2_percent),
                });
            }
            write_out(None, &json(&out)?)
        }
        Command::Plot {
            estimates,
            format,
            alpha,
            group,
            method,
            floor,
            out,
        } => {
            let rows = load_estimates_csv(&estimates)?;
            let groups = groups_of(&rows);
            let (name, members) = match &group {
                Some(g) => groups
                    .into_iter()
                    .find(|(k, _)| k == g)
                    .ok_or_else(|| Error::Schema(format!("no group named {g:?}")))?,
                None if groups.len() == 1 => groups.into_iter().next().unwrap(),
                None if groups.is_empty() => return Err(Error::Schema("no estimates to plot".into())),
                None => {
                    let names: Vec<&str> = groups.iter().map(|(k, _)| k.as_str()).collect();
                    return Err(Error::Schema(format!(
                        "several groups ({}); pick one with --group",
                        names.join(", ")
                    )));
                }
            };
            let ps: Vec<f64> = pvalues_of(&members, method, floor)?
                .into_iter()
                .map(|(p, _)| p)
                .collect();
            let plot = build_plot(&ps)?;
            let config = ClassifierConfig {
                alpha,
                ..ClassifierConfig::default()
            };
            let class = classify(&plot, &config)?;
            let mut opts = RenderOptions::new(format, alpha);
            opts.title = Some(name);
            opts.color =
                format == PlotFormat::Ascii && out.is_none() && std::env::var_os("METAAUDIT_NO_COLOR").is_none();
            write_out(out.as_deref(), &render_plot(&plot, &class, &opts)?)
        }
        Command::Searchspace { counts, json: as_json } => {
            let studies = load_counts_csv(&counts)?;
            let per_study = studies.iter().map(evaluate_counts).collect::<Result<Vec<_>>>()?;
            let summary = if studies.is_empty() {
                None
            } else {
                Some(corpus_summary(&studies)?)
            };
            if as_json {
                #[derive(Serialize)]
                struct Out<'a, A: Serialize, B: Serialize> {
                    per_study: &'a A,
                    summary: &'a B,
                }
                return write_out(
                    None,
                    &json(&Out {
                        per_study: &per_study,
                        summary: &summary,
                    })?,
                );
            }
            let mut s = String::new();
            s.push_str(&format!(
                "{:<24} {:>12} {:>14} {:>16}\n",
                "study", "questions", "models", "search space"
            ));
            for r in &per_study {
                s.push_str(&format!(
                    "{:<24} {:>12} {:>14} {:>16}\n",
                    r.study_id,
                    display_count(&r.questions),
                    display_count(&r.models),
                    display_count(&r.search_space)
                ));
            }
            if let Some(sum) = &summary {
                s.push_str(&format!("\n{} studies\n", sum.n_studies));
                s.push_str(&format!(
                    "{:<14} {:>10} {:>12} {:>12} {:>12} {:>14}\n",
                    "", "min", "lower hinge", "median", "upper hinge", "max"
                ));
                for (label, f) in [
                    ("outcomes", &sum.outcomes),
                    ("predictors", &sum.predictors),
                    ("covariates", &sum.covariates),
                    ("lags", &sum.lags),
                    ("questions", &sum.questions),
                    ("models", &sum.models),
                    ("search space", &sum.search_space),
                ] {
                    s.push_str(&format!(
                        "{:<14} {:>10} {:>12} {:>12} {:>12} {:>14}\n",
                        label,
                        f.minimum.to_string(),
                        f.lower_hinge.to_string(),
                        f.median.to_string(),
                        f.upper_hinge.to_string(),
                        f.maximum.to_string()
                    ));
                }
            }
            write_out(None, s.as_bytes())
        }
        Command::Simulate {
            scenario,
            n,
            m,
            effect_z,
            fraction,
            seed,
        } => {
            let cfg = SimConfig::new(scenario, n, seed)
                .with_m_tests(m)
                .with_effect_z(effect_z)
                .with_fraction(fraction);
            let result = simulate(&cfg)?;
            #[derive(Serialize)]
            struct Out<'a> {
                #[serde(flatten)]
                result: &'a metaaudit::mtmm_sim::SimResult,
                note: &'static str,
            }
            write_out(
                None,
                &json(&Out {
                    result: &result,
                    note: "hacked studies report the minimum of m independent null p-values; \
                           real analyses share data across tests, so this is an idealization",
                })?,
            )
        }
        Command::Audit {
            estimates,
            counts,
            out,
            plots_dir,
            method,
            floor,
            alpha,
            dataset_id,
        } => {
            let id = dataset_id.unwrap_or_else(|| {
                estimates
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "dataset".into())
            });
            let mut opts = AuditOptions::new(&id, method);
            opts.floor = floor;
            opts.config.alpha = alpha;
            let output = run_audit(&estimates, counts.as_deref(), &opts)?;
            if let Some(dir) = &plots_dir {
                write_plots(&output, dir)?;
            }
            write_out(out.as_deref(), output.report.to_json()?.as_bytes())
        }
        Command::Fixtures { out_dir } => {
            fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            for f in fixtures::ALL {
                f.verify()?;
                let path = out_dir.join(format!("{}.csv", plot_file_stem(f.name)));
                fs::write(&path, f.contents).map_err(|e| Error::Io { path, source: e })?;
            }
            // Both asthma groups in one file, ready for `audit`.
            let mut combined = fixtures::TABLE5_NO2.contents.to_string();
            combined.extend(fixtures::TABLE5_PM25.contents.lines().skip(1).map(|l| format!("{l}\n")));
            let path = out_dir.join("table5.csv");
            fs::write(&path, combined).map_err(|e| Error::Io { path, source: e })
        }
    }
}
