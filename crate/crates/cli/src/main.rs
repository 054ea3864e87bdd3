use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use plotters::prelude::*;

use nullpulse::harness::{self, RunConfig, SweepResult};
use nullpulse::verify;

#[derive(Parser)]
#[command(name = "nullpulse", version, about = "Short-pulse wave evolution on Schwarzschild and its diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration and write its reports.
    Run {
        config: PathBuf,
        /// Overrides [output] dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configuration at several δ and fit power laws.
    Sweep {
        config: PathBuf,
        /// Comma-separated, geometrically spaced.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        deltas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the commutator identities and the Sobolev probes.
    Verify {
        #[arg(long, default_value_t = 0.1)]
        h0: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        seed: u64,
        /// Exit non-zero when any check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Fit log y against log x from a two-column CSV with a header.
    Fit { input: PathBuf },
    /// Refinement study of a configuration.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Evolve with the configured null form and with (Lφ)², then compare.
    Compare { config: PathBuf },
    /// Render SVG figures from sweep or run outputs.
    Plot {
        #[command(subcommand)]
        what: PlotCommand,
    },
}

#[derive(Subcommand)]
enum PlotCommand {
    /// Log-log figure of every tracked quantity against δ from sweep.csv.
    Sweep {
        input: PathBuf,
        #[arg(long, default_value = "sweep.svg")]
        out: PathBuf,
    },
    /// Energy against u from a run's energies.csv.
    Energy {
        input: PathBuf,
        #[arg(long, default_value = "E")]
        kind: String,
        #[arg(long, default_value = "energy.svg")]
        out: PathBuf,
    },
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut c = RunConfig::from_path(config).with_context(|| format!("reading {}", config.display()))?;
    if out.is_some() {
        c.output.dir = out;
    }
    Ok(c)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

const SWEEP_SCALARS: [&str; 4] = ["sup_l", "sup_dbar", "last_cone_l2", "e_mid"];

fn write_sweep_csv(res: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["delta", "quantity", "value"])?;
    for m in &res.members {
        let Some(t) = &m.tracked else { continue };
        let values = [t.sup_l, t.sup_dbar, t.last_cone_l2, t.e_mid];
        for (q, v) in SWEEP_SCALARS.iter().zip(values) {
            w.write_record([m.delta.to_string(), q.to_string(), format!("{v:e}")])?;
        }
        for (name, k, v) in &t.last_cone {
            w.write_record([m.delta.to_string(), format!("last_cone_{name}_{k}"), format!("{v:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_xy(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut pts = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 2 {
            bail!("expected two columns, got {}", rec.len());
        }
        pts.push((rec[0].trim().parse()?, rec[1].trim().parse()?));
    }
    Ok(pts)
}

/// Groups `(x, series, y)` rows by series name, keeping first-seen order.
fn group(rows: Vec<(f64, String, f64)>) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (x, s, y) in rows {
        match out.iter_mut().find(|(n, _)| *n == s) {
            Some((_, v)) => v.push((x, y)),
            None => out.push((s, vec![(x, y)])),
        }
    }
    out
}

fn line_chart(path: &Path, title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)], log_x: bool) -> Result<()> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|p| p.1 > 0.0 && (!log_x || p.0 > 0.0))
        .collect();
    if pts.is_empty() {
        bail!("nothing positive to plot");
    }
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut builder = ChartBuilder::on(&root);
    builder.caption(title, ("sans-serif", 22)).margin(12).x_label_area_size(40).y_label_area_size(70);
    let palette = [&BLUE, &RED, &GREEN, &MAGENTA, &CYAN, &BLACK];
    // plotters needs distinct chart types for log and linear x axes
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart.configure_mesh().x_desc(x_label).y_desc("value").draw()?;
            for (k, (name, v)) in series.iter().enumerate() {
                let color = palette[k % palette.len()];
                let v: Vec<(f64, f64)> = v.iter().copied().filter(|p| p.1 > 0.0).collect();
                chart
                    .draw_series(LineSeries::new(v.clone(), color))?
                    .label(name.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
                chart.draw_series(v.iter().map(|p| Circle::new(*p, 3, color.filled())))?;
            }
            chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        }};
    }
    if log_x {
        draw!(builder.build_cartesian_2d((x0 * 0.9..x1 * 1.1).log_scale(), (y0 * 0.8..y1 * 1.25).log_scale())?);
    } else {
        draw!(builder.build_cartesian_2d(x0..x1, (y0 * 0.8..y1 * 1.25).log_scale())?);
    }
    root.present()?;
    Ok(())
}

fn plot(what: PlotCommand) -> Result<()> {
    match what {
        PlotCommand::Sweep { input, out } => {
            let mut r = csv::Reader::from_path(&input)?;
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                rows.push((rec[0].parse()?, rec[1].to_string(), rec[2].parse()?));
            }
            line_chart(&out, "tracked quantities against delta", "delta", &group(rows), true)?;
        }
        PlotCommand::Energy { input, kind, out } => {
            let mut r = csv::Reader::from_path(&input)?;
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                if rec[1].eq_ignore_ascii_case(&kind) {
                    rows.push((rec[0].parse()?, format!("{} (order {})", &rec[1], &rec[2]), rec[3].parse()?));
                }
            }
            if rows.is_empty() {
                bail!("no rows of kind {kind} in {}", input.display());
            }
            line_chart(&out, &format!("{kind} per cone"), "cone coordinate", &group(rows), false)?;
        }
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => {
            let c = load(&config, out)?;
            let o = harness::run(&c)?;
            print_json(&serde_json::json!({
                "status": o.status,
                "config_hash": o.config_hash,
                "sup_phi": o.sup_phi,
                "scalars": o.report.scalars,
                "failure": o.failure,
                "output": c.output.dir,
            }))?;
            if !o.is_completed() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep { config, deltas, out } => {
            let c = load(&config, out)?;
            let res = harness::sweep(&c, &deltas)?;
            if let Some(dir) = &c.output.dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&res)?)?;
                write_sweep_csv(&res, &dir.join("sweep.csv"))?;
            }
            print_json(&res.fits)?;
        }
        Command::Verify { h0, samples, seed, strict } => {
            let rep = verify::standard_suite(h0, samples, seed)?;
            print_json(&rep)?;
            if strict && !rep.pass {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Fit { input } => print_json(&harness::fit_powerlaw(&read_xy(&input)?)?)?,
        Command::Converge { config, levels } => print_json(&harness::convergence(&load(&config, None)?, levels)?)?,
        Command::Compare { config } => print_json(&harness::compare_null(&load(&config, None)?)?)?,
        Command::Plot { what } => plot(what)?,
    }
    Ok(ExitCode::SUCCESS)
}
