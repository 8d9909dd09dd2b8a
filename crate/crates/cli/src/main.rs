use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use splatlab_core::codec::{self, QuantizationSpec};
use splatlab_core::experiment::{self, ExperimentPlan, SweepAxis};
use splatlab_core::model::SplatCloud;
use splatlab_core::render::{self, View};
use splatlab_core::schedules::ScheduleSpec;
use splatlab_core::sphharm::{self, ShIndex};

#[derive(Parser)]
#[command(name = "splatlab", version, about = "Gaussian splat training experiments on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a ground-truth checkpoint, camera list and target images.
    GenScene {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Run a sweep and write report.csv, loss curves and test renders.
    Run {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        /// Run rows one at a time so timing columns are comparable.
        #[arg(long)]
        timed: bool,
    },
    /// Encode a CSV matrix of non-negative numbers as a codec blob.
    Encode {
        /// Input CSV; stdin when omitted.
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        places: u32,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 2.0)]
        hi: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a codec matrix blob back to CSV.
    Decode {
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate a learning-rate schedule as `iteration,rate`.
    ScheduleDump {
        /// e.g. `rw0-2-4`, `sine:1e-2,1`, `exp:1.6e-4,1.6e-6`, `const:1e-3`.
        spec: String,
        #[arg(long, default_value_t = 1.6e-4)]
        base_rate: f64,
        #[arg(long, default_value_t = 30_000)]
        iterations: u64,
        #[arg(long, default_value_t = 100)]
        every: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate real spherical-harmonic basis values over a direction grid.
    ShTable {
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 9)]
        theta_steps: usize,
        #[arg(long, default_value_t = 16)]
        phi_steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a checkpoint from one camera to PPM (or PGM for one channel).
    Render {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 0.0)]
        phi: f64,
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// World units per pixel; defaults to framing a unit-extent scene.
        #[arg(long)]
        pixel_size: Option<f64>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// Experiment plan (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

impl PlanArgs {
    fn load(&self) -> Result<ExperimentPlan> {
        match &self.config {
            Some(path) => ExperimentPlan::load(path).with_context(|| format!("loading {}", path.display())),
            None => Ok(ExperimentPlan::default()),
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenScene { plan } => {
            let mut p = plan.load()?;
            if let Some(seed) = plan.seed {
                p.scene.seed = seed;
            }
            let scene = experiment::gen_scene(&p.scene)?;
            experiment::write_scene(&scene, &plan.out)?;
            println!(
                "wrote {} points, {} views to {}",
                scene.truth.len(),
                scene.views.len(),
                plan.out.display()
            );
        }
        Command::Run {
            plan,
            repeats,
            axis,
            values,
            timed,
        } => {
            let mut p = plan.load()?;
            if let Some(seed) = plan.seed {
                p.train.seed = seed;
            }
            if let Some(r) = repeats {
                p.sweep.repeats = r;
            }
            if let Some(a) = axis {
                p.sweep.axis = SweepAxis::parse(&a).with_context(|| format!("unknown sweep axis {a:?}"))?;
            }
            if let Some(v) = values {
                p.sweep.values = v.into_iter().map(toml::Value::String).collect();
            }
            p.sweep.timed |= timed;
            let table = experiment::run_plan(&p, &plan.out)?;
            println!("{:<16} {:>9} {:>9} {:>9} {:>9} {:>9}", table.axis, "l1", "l2", "p1", "p2", "pc");
            for a in table.averages() {
                println!(
                    "{:<16} {:>9.5} {:>9.5} {:>9.3} {:>9.3} {:>9.3}",
                    a.value, a.l1, a.l2, a.p1, a.p2, a.pc
                );
            }
            println!("report: {}", plan.out.join("report.csv").display());
        }
        Command::Encode {
            input,
            places,
            lo,
            hi,
            out,
        } => {
            let text = read_input(input.as_deref())?;
            let (values, rows, cols) = parse_csv_matrix(&text)?;
            let spec = QuantizationSpec::new(places, lo, hi)?;
            let blob = codec::encode_matrix(&values, rows, cols, &spec)?;
            write_output(out.as_deref(), &blob)?;
        }
        Command::Decode { input, out } => {
            let m = codec::decode_matrix(&read_input(input.as_deref())?)?;
            let mut csv = String::new();
            for row in m.values.chunks(m.cols.max(1)).take(m.rows) {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                csv.push_str(&cells.join(","));
                csv.push('\n');
            }
            write_output(out.as_deref(), &csv)?;
        }
        Command::ScheduleDump {
            spec,
            base_rate,
            iterations,
            every,
            out,
        } => {
            if every == 0 {
                bail!("--every must be positive");
            }
            let schedule = ScheduleSpec::parse(&spec, base_rate)?;
            let mut csv = String::from("iteration,rate\n");
            let mut ts: Vec<u64> = (1..=iterations).step_by(every as usize).collect();
            if ts.last() != Some(&iterations) {
                ts.push(iterations);
            }
            for t in ts {
                csv.push_str(&format!("{t},{:e}\n", schedule.eval(t, iterations)?));
            }
            write_output(out.as_deref(), &csv)?;
        }
        Command::ShTable {
            degree,
            theta_steps,
            phi_steps,
            out,
        } => {
            if theta_steps < 2 || phi_steps < 1 {
                bail!("need at least 2 theta steps and 1 phi step");
            }
            let n = sphharm::basis_len(degree);
            let mut csv = String::from("theta,phi");
            for i in 0..n {
                let idx = ShIndex::from_flat(i);
                csv.push_str(&format!(",y_{}_{}", idx.l, idx.m));
            }
            csv.push('\n');
            for i in 0..theta_steps {
                let theta = std::f64::consts::PI * i as f64 / (theta_steps - 1) as f64;
                for j in 0..phi_steps {
                    let phi = std::f64::consts::TAU * j as f64 / phi_steps as f64;
                    let basis = sphharm::sh_basis(degree, theta, phi)?;
                    csv.push_str(&format!("{theta:.6},{phi:.6}"));
                    for b in basis {
                        csv.push_str(&format!(",{b:.10}"));
                    }
                    csv.push('\n');
                }
            }
            write_output(out.as_deref(), &csv)?;
        }
        Command::Render {
            checkpoint,
            theta,
            phi,
            size,
            pixel_size,
            degree,
            out,
        } => {
            let cloud = SplatCloud::load_checkpoint(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let px = pixel_size.unwrap_or(3.6 / size as f64);
            let view = View::new(theta, phi, size, size, px)?;
            let image = render::render(&cloud, &view, degree.unwrap_or(cloud.sh_degree().unwrap_or(0)))?;
            image.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

/// Rows of comma-separated numbers; every row must have the same width.
fn parse_csv_matrix(text: &str) -> Result<(Vec<f64>, usize, usize)> {
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("line {}: not a number", ln + 1))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => bail!("line {}: expected {c} columns, found {}", ln + 1, row.len()),
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    Ok((values, rows, cols.unwrap_or(0)))
}
