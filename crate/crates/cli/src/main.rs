mod fixtures;
mod output;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use permsense::calibration::{self, CalibrationModel};
use permsense::circuitfit::{fit_netlist, Channels, FitOptions, FitProblem};
use permsense::network::{simulate, Netlist, NetlistTemplate, DEFAULT_SWEEP_POINTS};
use permsense::resonance::{
    find_notches_with_q, DEFAULT_MIN_SEPARATION_HZ, DEFAULT_Q_OFFSET_DB, DEFAULT_THRESHOLD_DB,
};
use permsense::response::linear_sweep;
use permsense::sensitivity::{self, sensitivity_report, thickness_saturation, Control};
use permsense::touchstone::{read_response, write_csv, write_touchstone, DataFormat, FreqUnit, OptionLine};
use permsense::{FrequencyResponse, Mode};
use serde::Serialize;

use output::{csv_table, json, opt, Format};

const GHZ: f64 = 1e9;

#[derive(Debug, Parser)]
#[command(name = "permsense", version, about = "Resonant permittivity sensor analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelArg {
    S11,
    S21,
}

impl From<ChannelArg> for Mode {
    fn from(c: ChannelArg) -> Mode {
        match c {
            ChannelArg::S11 => Mode::Reflection,
            ChannelArg::S21 => Mode::Transmission,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitChannels {
    S11,
    S21,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimFormat {
    Touchstone,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DataFormatArg {
    Ri,
    Ma,
    Db,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Summarise a .s2p or CSV response file.
    Inspect {
        file: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Detect notches in one channel of a response file.
    Resonances {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "s21")]
        mode: ChannelArg,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_DB, allow_negative_numbers = true)]
        threshold_db: f64,
        /// Minimum notch separation in GHz.
        #[arg(long, conflicts_with = "min_sep_hz")]
        min_sep_ghz: Option<f64>,
        /// Minimum notch separation in Hz.
        #[arg(long)]
        min_sep_hz: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_Q_OFFSET_DB)]
        q_offset_db: f64,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Fit calibration constants to a sample file
    /// (`name,permittivity,resonance_ghz,mode`).
    Calibrate {
        samples: PathBuf,
        /// Pin x1 to the air sample's resonance.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        anchor_air: bool,
        /// Write the model file here.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Convert notch frequencies to permittivity.
    Extract {
        /// Model file; defaults to the reference S21 preset.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "freq-ghz", required_unless_present = "file", conflicts_with = "file")]
        freq_ghz: Vec<f64>,
        /// Response file; its deepest notch is used.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "s21")]
        mode: ChannelArg,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Recompute the published calculated peaks, relative errors and
    /// sensitivities.
    Report {
        /// Comma-separated selection of 5, 6 and sensitivity.
        #[arg(long, default_value = "5,6,sensitivity")]
        tables: String,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Sweep a netlist and write its S-parameters.
    Simulate {
        netlist: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        fmin: f64,
        #[arg(long, default_value_t = 10.0)]
        fmax: f64,
        #[arg(long, default_value_t = DEFAULT_SWEEP_POINTS)]
        points: usize,
        #[arg(long, value_enum, default_value = "ri")]
        data_format: DataFormatArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "touchstone")]
        format: SimFormat,
    },
    /// Fit the free parameters of a netlist template to a target response.
    FitCircuit {
        template: PathBuf,
        target: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = FitOptions::default().max_iters)]
        max_iters: usize,
        #[arg(long, value_enum, default_value = "s21")]
        channels: FitChannels,
        /// Write the fitted netlist here.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Sensitivity of a permittivity sweep or saturation of a thickness
    /// sweep (`control_kind,control_value,resonance_ghz,depth_db`).
    Sensitivity {
        sweep: PathBuf,
        /// Saturation tolerance for thickness sweeps.
        #[arg(long, default_value_t = 0.02)]
        tol_ghz: f64,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ChannelSummary {
    channel: &'static str,
    min_db: f64,
    min_freq_hz: f64,
}

#[derive(Serialize)]
struct InspectSummary {
    points: usize,
    fmin_hz: f64,
    fmax_hz: f64,
    z0_ohm: f64,
    channels: Vec<ChannelSummary>,
}

fn inspect(file: &Path, format: Format) -> Result<String> {
    let resp = read_response(file)?;
    if resp.is_empty() {
        bail!("{}: no data points", file.display());
    }
    let f = resp.freqs();
    let channels = [("s11", 0), ("s21", 1), ("s12", 2), ("s22", 3)]
        .into_iter()
        .map(|(name, k)| {
            let (i, min_db) = resp
                .s()
                .iter()
                .map(|sp| permsense::response::magnitude_db_floored([sp.s11, sp.s21, sp.s12, sp.s22][k]))
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, d)| if d < acc.1 { (i, d) } else { acc },
                );
            ChannelSummary {
                channel: name,
                min_db,
                min_freq_hz: f[i],
            }
        })
        .collect();
    let summary = InspectSummary {
        points: resp.len(),
        fmin_hz: f[0],
        fmax_hz: f[f.len() - 1],
        z0_ohm: resp.z0(),
        channels,
    };
    match format {
        Format::Json => json(&summary),
        Format::Csv => {
            let rows: Vec<Vec<String>> = summary
                .channels
                .iter()
                .map(|c| {
                    vec![
                        c.channel.to_string(),
                        summary.points.to_string(),
                        summary.fmin_hz.to_string(),
                        summary.fmax_hz.to_string(),
                        summary.z0_ohm.to_string(),
                        c.min_db.to_string(),
                        c.min_freq_hz.to_string(),
                    ]
                })
                .collect();
            csv_table(
                &[
                    "channel",
                    "points",
                    "fmin_hz",
                    "fmax_hz",
                    "z0_ohm",
                    "min_db",
                    "min_freq_hz",
                ],
                &rows,
            )
        }
    }
}

#[derive(Serialize)]
struct NotchRow {
    frequency_hz: f64,
    frequency_ghz: f64,
    depth_db: f64,
    q: Option<f64>,
    mode: Mode,
    grid_index: usize,
}

fn resonances(
    file: &Path,
    mode: Mode,
    threshold: f64,
    min_sep_hz: f64,
    q_offset: f64,
    format: Format,
) -> Result<String> {
    let resp = read_response(file)?;
    let rows: Vec<NotchRow> = find_notches_with_q(&resp, mode, threshold, min_sep_hz, q_offset)?
        .into_iter()
        .map(|r| NotchRow {
            frequency_hz: r.frequency,
            frequency_ghz: r.frequency / GHZ,
            depth_db: r.depth,
            q: r.q,
            mode: r.mode,
            grid_index: r.grid_index,
        })
        .collect();
    match format {
        Format::Json => json(&rows),
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.frequency_hz.to_string(),
                        r.frequency_ghz.to_string(),
                        r.depth_db.to_string(),
                        opt(r.q),
                        r.mode.to_string(),
                        r.grid_index.to_string(),
                    ]
                })
                .collect();
            csv_table(
                &[
                    "frequency_hz",
                    "frequency_ghz",
                    "depth_db",
                    "q",
                    "mode",
                    "grid_index",
                ],
                &table,
            )
        }
    }
}

#[derive(Serialize)]
struct CalibrationSummary<'a> {
    x1: f64,
    x2: f64,
    x3: f64,
    eps_min: f64,
    eps_max: f64,
    anchored: bool,
    samples: usize,
    sum_squared_residuals: f64,
    model: &'a CalibrationModel,
}

fn calibrate(samples: &Path, anchor: bool, out: Option<&Path>, format: Format) -> Result<String> {
    let samples = calibration::parse_samples_csv(&read_text(samples)?)?;
    let model = calibration::fit(&samples, anchor)?;
    if let Some(p) = out {
        write_or_print(Some(p), &model.to_toml())?;
    }
    let summary = CalibrationSummary {
        x1: model.x1,
        x2: model.x2,
        x3: model.x3,
        eps_min: model.eps_min,
        eps_max: model.eps_max,
        anchored: anchor,
        samples: samples.len(),
        sum_squared_residuals: calibration::sum_squared_residuals(&model, &samples),
        model: &model,
    };
    match format {
        Format::Json => json(&summary),
        Format::Csv => csv_table(
            &[
                "x1",
                "x2",
                "x3",
                "eps_min",
                "eps_max",
                "anchored",
                "samples",
                "sum_squared_residuals",
            ],
            &[vec![
                summary.x1.to_string(),
                summary.x2.to_string(),
                summary.x3.to_string(),
                summary.eps_min.to_string(),
                summary.eps_max.to_string(),
                summary.anchored.to_string(),
                summary.samples.to_string(),
                summary.sum_squared_residuals.to_string(),
            ]],
        ),
    }
}

#[derive(Serialize)]
struct Extraction {
    frequency_ghz: f64,
    permittivity: f64,
}

fn deepest_notch_ghz(resp: &FrequencyResponse, mode: Mode) -> Result<f64> {
    let notches = find_notches_with_q(
        resp,
        mode,
        DEFAULT_THRESHOLD_DB,
        DEFAULT_MIN_SEPARATION_HZ,
        DEFAULT_Q_OFFSET_DB,
    )?;
    notches
        .iter()
        .min_by(|a, b| a.depth.total_cmp(&b.depth))
        .map(|r| r.frequency / GHZ)
        .context("no notch below the detection threshold")
}

fn extract(
    model: Option<&Path>,
    freqs: &[f64],
    file: Option<&Path>,
    mode: Mode,
    format: Format,
) -> Result<String> {
    let model = match model {
        Some(p) => CalibrationModel::from_toml(&read_text(p)?)?,
        None => CalibrationModel::reference_s21(),
    };
    let freqs = match file {
        Some(p) => vec![deepest_notch_ghz(&read_response(p)?, mode)?],
        None => freqs.to_vec(),
    };
    let rows = freqs
        .iter()
        .map(|&f| {
            let eps = model.invert(f)?;
            Ok(Extraction {
                frequency_ghz: f,
                permittivity: eps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match format {
        Format::Json => json(&rows),
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.frequency_ghz.to_string(), r.permittivity.to_string()])
                .collect();
            csv_table(&["frequency_ghz", "permittivity"], &table)
        }
    }
}

#[derive(Serialize)]
struct JsonPoint {
    freq_hz: f64,
    s11: [f64; 2],
    s21: [f64; 2],
    s12: [f64; 2],
    s22: [f64; 2],
}

#[derive(Serialize)]
struct JsonResponse {
    z0_ohm: f64,
    points: Vec<JsonPoint>,
}

#[allow(clippy::too_many_arguments)]
fn simulate_cmd(
    netlist: &Path,
    fmin: f64,
    fmax: f64,
    points: usize,
    data_format: DataFormatArg,
    out: Option<&Path>,
    format: SimFormat,
) -> Result<()> {
    if !(fmin > 0.0 && fmax > fmin) {
        bail!("need 0 < fmin < fmax, got {fmin} and {fmax} GHz");
    }
    if points < 2 {
        bail!("need at least 2 points, got {points}");
    }
    let n = Netlist::parse(&read_text(netlist)?).with_context(|| format!("netlist {}", netlist.display()))?;
    let resp = simulate(&n, &linear_sweep(fmin * GHZ, fmax * GHZ, points))?;
    let text = match format {
        SimFormat::Touchstone => {
            let df = match data_format {
                DataFormatArg::Ri => DataFormat::Ri,
                DataFormatArg::Ma => DataFormat::Ma,
                DataFormatArg::Db => DataFormat::Db,
            };
            write_touchstone(&resp, &OptionLine::new(FreqUnit::GHz, df))
        }
        SimFormat::Csv => write_csv(&resp),
        SimFormat::Json => {
            let c = |z: permsense::Complex64| [z.re, z.im];
            json(&JsonResponse {
                z0_ohm: resp.z0(),
                points: resp
                    .freqs()
                    .iter()
                    .zip(resp.s())
                    .map(|(&f, s)| JsonPoint {
                        freq_hz: f,
                        s11: c(s.s11),
                        s21: c(s.s21),
                        s12: c(s.s12),
                        s22: c(s.s22),
                    })
                    .collect(),
            })?
        }
    };
    write_or_print(out, &text)
}

#[derive(Serialize)]
struct FittedValue {
    element: usize,
    field: &'static str,
    value: f64,
    initial: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct FitSummary {
    values: Vec<FittedValue>,
    residual_db_rms: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    restart: usize,
    seed: u64,
    netlist: String,
}

#[allow(clippy::too_many_arguments)]
fn fit_circuit(
    template: &Path,
    target: &Path,
    seed: u64,
    restarts: usize,
    max_iters: usize,
    channels: FitChannels,
    out: Option<&Path>,
    format: Format,
) -> Result<String> {
    let t = NetlistTemplate::parse(&read_text(template)?)
        .with_context(|| format!("template {}", template.display()))?;
    let target = read_response(target)?;
    let channels = match channels {
        FitChannels::S11 => Channels {
            s11: true,
            s21: false,
        },
        FitChannels::S21 => Channels::S21,
        FitChannels::Both => Channels::BOTH,
    };
    let problem = FitProblem::new(t, target, channels)?;
    let opts = FitOptions {
        max_iters,
        restarts,
        seed,
        ..FitOptions::default()
    };
    let r = fit_netlist(&problem, &opts)?;
    let fitted = problem.netlist_at(&r.values)?.to_toml();
    if let Some(p) = out {
        write_or_print(Some(p), &fitted)?;
    }
    let summary = FitSummary {
        values: problem
            .template
            .free
            .iter()
            .zip(&r.values)
            .map(|(p, &v)| FittedValue {
                element: p.element,
                field: p.field.key(),
                value: v,
                initial: p.initial,
                lower: p.lower,
                upper: p.upper,
            })
            .collect(),
        residual_db_rms: r.residual,
        objective: r.objective,
        iterations: r.iterations,
        converged: r.converged,
        restart: r.restart,
        seed,
        netlist: fitted,
    };
    match format {
        Format::Json => json(&summary),
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = summary
                .values
                .iter()
                .map(|v| {
                    vec![
                        format!("element{}.{}", v.element, v.field),
                        format!("{:e}", v.value),
                    ]
                })
                .collect();
            rows.push(vec![
                "residual_db_rms".into(),
                format!("{:e}", summary.residual_db_rms),
            ]);
            rows.push(vec!["objective".into(), format!("{:e}", summary.objective)]);
            rows.push(vec!["iterations".into(), summary.iterations.to_string()]);
            rows.push(vec!["converged".into(), summary.converged.to_string()]);
            rows.push(vec!["restart".into(), summary.restart.to_string()]);
            rows.push(vec!["seed".into(), summary.seed.to_string()]);
            csv_table(&["quantity", "value"], &rows)
        }
    }
}

#[derive(Serialize)]
struct SaturationSummary {
    tol_ghz: f64,
    saturation_mm: f64,
    reference_ghz: f64,
}

fn sensitivity_cmd(sweep: &Path, tol: f64, format: Format) -> Result<String> {
    let points = sensitivity::parse_sweep_csv(&read_text(sweep)?)
        .map_err(anyhow::Error::msg)
        .with_context(|| format!("sweep {}", sweep.display()))?;
    let Some(first) = points.first() else {
        bail!("{}: sweep has no rows", sweep.display());
    };
    match first.control {
        Control::Permittivity(_) => {
            let r = sensitivity_report(&points)?;
            match format {
                Format::Json => json(&r),
                Format::Csv => {
                    let row = |span: &str, p: &sensitivity::PairSensitivity| {
                        vec![
                            span.to_string(),
                            p.eps_low.to_string(),
                            p.eps_high.to_string(),
                            p.f_low_ghz.to_string(),
                            p.f_high_ghz.to_string(),
                            p.s_av_pct.to_string(),
                        ]
                    };
                    let mut rows: Vec<Vec<String>> = r.pairs.iter().map(|p| row("pair", p)).collect();
                    rows.push(row("endpoint", &r.endpoint));
                    csv_table(
                        &[
                            "span",
                            "eps_low",
                            "eps_high",
                            "f_low_ghz",
                            "f_high_ghz",
                            "s_av_pct",
                        ],
                        &rows,
                    )
                }
            }
        }
        Control::ThicknessMm(_) => {
            let s = SaturationSummary {
                tol_ghz: tol,
                saturation_mm: thickness_saturation(&points, tol)?,
                reference_ghz: points[points.len() - 1].resonance,
            };
            match format {
                Format::Json => json(&s),
                Format::Csv => csv_table(
                    &["tol_ghz", "saturation_mm", "reference_ghz"],
                    &[vec![
                        s.tol_ghz.to_string(),
                        s.saturation_mm.to_string(),
                        s.reference_ghz.to_string(),
                    ]],
                ),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let text = match cli.command {
        Command::Inspect { file, format } => inspect(&file, format)?,
        Command::Resonances {
            file,
            mode,
            threshold_db,
            min_sep_ghz,
            min_sep_hz,
            q_offset_db,
            format,
        } => {
            let sep = min_sep_hz
                .or(min_sep_ghz.map(|g| g * GHZ))
                .unwrap_or(DEFAULT_MIN_SEPARATION_HZ);
            resonances(&file, mode.into(), threshold_db, sep, q_offset_db, format)?
        }
        Command::Calibrate {
            samples,
            anchor_air,
            output,
            format,
        } => calibrate(&samples, anchor_air, output.as_deref(), format)?,
        Command::Extract {
            model,
            freq_ghz,
            file,
            mode,
            format,
        } => extract(model.as_deref(), &freq_ghz, file.as_deref(), mode.into(), format)?,
        Command::Report { tables, format } => {
            let sections = report::Section::parse_list(&tables)?;
            report::render(&report::build(&sections)?, &sections, format)?
        }
        Command::Simulate {
            netlist,
            fmin,
            fmax,
            points,
            data_format,
            output,
            format,
        } => {
            return simulate_cmd(
                &netlist,
                fmin,
                fmax,
                points,
                data_format,
                output.as_deref(),
                format,
            );
        }
        Command::FitCircuit {
            template,
            target,
            seed,
            restarts,
            max_iters,
            channels,
            output,
            format,
        } => fit_circuit(
            &template,
            &target,
            seed,
            restarts,
            max_iters,
            channels,
            output.as_deref(),
            format,
        )?,
        Command::Sensitivity {
            sweep,
            tol_ghz,
            format,
        } => sensitivity_cmd(&sweep, tol_ghz, format)?,
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
