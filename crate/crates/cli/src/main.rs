use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affinedim::furstenberg::Action;
use affinedim::pipeline::{self, Options, Theorem, Verdict};
use affinedim::separation::AxisBox;
use affinedim::{AffineIfs, EmpiricalMeasure, Error};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Dimension estimates and diagnostics for self-affine measures.
///
/// Exit codes: 0 success, 2 invalid spec, 3 theorem hypotheses not verified,
/// 4 budget exceeded, 1 any other error. The environment variable
/// AFFINEDIM_THREADS caps the worker threads.
#[derive(Parser)]
#[command(name = "affinedim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// IFS spec file (JSON with `dim`, `maps: [{A, a}]`, `p`).
    spec: PathBuf,
    /// Master seed; every random quantity is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Steps of the Lyapunov exponent chain.
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
}

#[derive(Args)]
struct Sampling {
    /// Number of sample points of the measure.
    #[arg(long, default_value_t = 1_000_000)]
    points: usize,
    /// Largest accepted number of sample points.
    #[arg(long, default_value_t = pipeline::DEFAULT_POINT_BUDGET)]
    max_points: usize,
    /// Coding depth per sample point (default: until the attractor radius shrinks below 2^-40).
    #[arg(long)]
    depth: Option<usize>,
    /// First dyadic scale of the entropy slope (default: three levels below the largest side of the bounding box).
    #[arg(long, requires = "hi")]
    lo: Option<i32>,
    /// Last dyadic scale of the entropy slope; sparse scales are dropped.
    #[arg(long, requires = "lo")]
    hi: Option<i32>,
}

#[derive(Subcommand)]
enum Command {
    /// Lyapunov spectrum, Lyapunov dimension and the thresholds ϱ_m.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Entropy slopes of the measure and of projections onto sampled subspaces.
    Dimension {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        /// Subspaces drawn per grade from the adjoint Furstenberg measure.
        #[arg(long, default_value_t = 4)]
        projections: usize,
        /// Write the sampled point cloud to this file.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Write the entropy table of the measure as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sample of a Furstenberg measure on the Grassmannian of m-planes.
    Furstenberg {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        /// Use the transposed linear parts.
        #[arg(long)]
        adjoint: bool,
        /// Write Plücker coordinates as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Diophantine gaps, freeness, SSC/OSC certificates and proximality evidence.
    Separation {
        #[command(flatten)]
        common: Common,
        /// Word length for the enumerative checks.
        #[arg(long, default_value_t = 8)]
        depth: usize,
        /// Largest number of enumerated words.
        #[arg(long, default_value_t = affinedim::separation::DEFAULT_WORD_BUDGET)]
        budget: usize,
        /// Lower corner of the open box for the open set condition (default: unit cube).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "box_hi")]
        box_lo: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "box_lo")]
        box_hi: Option<Vec<f64>>,
        /// Write the gap table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// The stopping-time cut-set of words whose m-th singular value first drops below 2^-n.
    Cutset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: u32,
        /// Largest accepted number of words.
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Checks the hypotheses of a dimension theorem and compares its prediction with estimates.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        /// One of d3-sosc, low-dim-projections, full-dim-rho, lyapunov-upper-bound.
        #[arg(long)]
        theorem: String,
        #[arg(long, default_value_t = pipeline::DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value_t = 4)]
        projections: usize,
        #[arg(long, default_value_t = 8)]
        depth_words: usize,
        #[arg(long, default_value_t = affinedim::separation::DEFAULT_WORD_BUDGET)]
        budget: usize,
    },
    /// Log-density raster (PGM) and point cloud CSV of the measure or a projection.
    Render {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        /// Basis vectors of the target subspace, e.g. `1,0,0;0,1,0`.
        #[arg(long)]
        project: Option<String>,
        #[arg(long, default_value_t = 512)]
        resolution: usize,
        /// Raster output path.
        #[arg(long)]
        raster: Option<PathBuf>,
        /// Point cloud CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn options(common: &Common, sampling: Option<&Sampling>) -> Options {
    let mut opts = Options {
        seed: common.seed,
        steps: common.steps,
        ..Options::default()
    };
    if let Some(s) = sampling {
        opts.points = s.points;
        opts.max_points = s.max_points;
        opts.depth = s.depth;
        opts.window = s.lo.zip(s.hi);
    }
    opts
}

fn load(path: &Path) -> Result<AffineIfs, Error> {
    AffineIfs::from_spec_file(path)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn print_json(value: &impl Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn parse_basis(text: &str) -> Result<Vec<Vec<f64>>, Error> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Precondition(format!("bad basis entry `{v}`: {e}")))
                })
                .collect()
        })
        .collect()
}

fn write_cloud_outputs(cloud: &EmpiricalMeasure, resolution: usize, raster: Option<&Path>, csv: Option<&Path>) -> Result<(), Error> {
    if let Some(p) = raster {
        let img = pipeline::render_raster(cloud, resolution)?;
        let mut w = create(p)?;
        w.write_all(&img)?;
        w.flush()?;
    }
    if let Some(p) = csv {
        let mut w = create(p)?;
        pipeline::write_points_csv(cloud, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Returns whether the theorem hypotheses were verified.
fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Spectrum { common } => {
            let ifs = load(&common.spec)?;
            let s = pipeline::spectrum(&ifs, &options(&common, None))?;
            print_json(&s)?;
            let mut out = io::stdout().lock();
            writeln!(out)?;
            s.write_csv(&mut out)?;
        }
        Command::Dimension {
            common,
            sampling,
            projections,
            cache,
            csv,
        } => {
            let ifs = load(&common.spec)?;
            let mut opts = options(&common, Some(&sampling));
            opts.projections = projections;
            let (summary, cloud) = pipeline::dimension(&ifs, &opts)?;
            if let Some(p) = cache {
                cloud.write_cache(&p)?;
            }
            if let Some(p) = csv {
                let mut w = create(&p)?;
                summary.measure.write_csv(&mut w)?;
                w.flush()?;
            }
            print_json(&summary)?;
        }
        Command::Furstenberg {
            common,
            m,
            count,
            adjoint,
            csv,
        } => {
            let ifs = load(&common.spec)?;
            let action = if adjoint { Action::Adjoint } else { Action::Direct };
            let (summary, sample) = pipeline::furstenberg(&ifs, action, m, count, &options(&common, None))?;
            if let Some(p) = csv {
                let mut w = create(&p)?;
                sample.write_csv(&mut w)?;
                w.flush()?;
            }
            print_json(&summary)?;
        }
        Command::Separation {
            common,
            depth,
            budget,
            box_lo,
            box_hi,
            csv,
        } => {
            let ifs = load(&common.spec)?;
            let mut opts = options(&common, None);
            opts.separation_depth = depth;
            opts.word_budget = budget;
            if let (Some(lo), Some(hi)) = (box_lo, box_hi) {
                opts.osc_box = Some(AxisBox::new(lo, hi)?);
            }
            let s = pipeline::separation(&ifs, &opts)?;
            if let Some(p) = csv {
                let mut w = create(&p)?;
                s.diophantine.write_csv(&mut w)?;
                w.flush()?;
            }
            print_json(&s)?;
        }
        Command::Cutset { common, m, n, cap, csv } => {
            let ifs = load(&common.spec)?;
            let summary = match csv {
                Some(p) => {
                    let mut w = create(&p)?;
                    let s = pipeline::cutset(&ifs, m, n, cap, Some(&mut w))?;
                    w.flush()?;
                    s
                }
                None => pipeline::cutset(&ifs, m, n, cap, None)?,
            };
            print_json(&summary)?;
        }
        Command::Verify {
            common,
            sampling,
            theorem,
            tolerance,
            projections,
            depth_words,
            budget,
        } => {
            let theorem: Theorem = theorem.parse()?;
            let ifs = load(&common.spec)?;
            let mut opts = options(&common, Some(&sampling));
            opts.tolerance = tolerance;
            opts.projections = projections;
            opts.separation_depth = depth_words;
            opts.word_budget = budget;
            let rep = pipeline::verify(&ifs, theorem, &opts)?;
            print_json(&rep)?;
            return Ok(rep.verdict != Verdict::HypothesesUnverified);
        }
        Command::Render {
            common,
            sampling,
            project,
            resolution,
            raster,
            csv,
        } => {
            let ifs = load(&common.spec)?;
            let basis = project.as_deref().map(parse_basis).transpose()?;
            let cloud = pipeline::render_cloud(&ifs, basis.as_deref(), &options(&common, Some(&sampling)))?;
            write_cloud_outputs(&cloud, resolution, raster.as_deref(), csv.as_deref())?;
        }
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SpecParse { .. } | Error::InvariantViolation { .. } => 2,
        Error::BudgetExceeded { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("AFFINEDIM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
