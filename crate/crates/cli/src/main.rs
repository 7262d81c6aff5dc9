mod render;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forge_core::labeling::CInit;
use forge_core::pipeline::PipelineConfig;
use forge_core::schedule::{check_exact_rules, check_scaled, exact_schedule, required_window, scaled_schedule};
use forge_core::{parse_group, ForgeError, ScaledConfig};

/// Exit codes: 0 pass, 1 certificate failure, 2 usage or feasibility error.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error("{0} certificate(s) failed")]
    Failed(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "forge", version, about = "Free minimal subshift labelings on Cayley-graph windows")]
struct Cli {
    /// Worker threads for parallel scans.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Scaled,
}

#[derive(Args, Clone)]
struct ScaledArgs {
    /// Radius s_1 of the first stage.
    #[arg(long, default_value_t = 1)]
    s1: u64,
    /// Site spacing multiplier (at least 20).
    #[arg(long, default_value_t = 20)]
    spacing: u64,
    /// Radius growth multiplier.
    #[arg(long, default_value_t = 2)]
    growth: u64,
}

impl ScaledArgs {
    fn config(&self) -> ScaledConfig {
        ScaledConfig { s1: self.s1, c: self.spacing, growth: self.growth, ..ScaledConfig::default() }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the radius schedule.
    Schedule {
        #[arg(long, default_value = "z")]
        group: String,
        #[arg(long, default_value_t = 2)]
        stages: usize,
        #[arg(long, value_enum, default_value = "scaled")]
        mode: Mode,
        #[command(flatten)]
        scaled: ScaledArgs,
        /// Also write the schedule as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Build stages from scratch into the output directory.
    Build {
        #[arg(long, default_value = "z")]
        group: String,
        /// Stages to compute now.
        #[arg(long)]
        stages: usize,
        /// Stages the window and schedule are sized for (defaults to `--stages`).
        #[arg(long)]
        target: Option<usize>,
        /// Window radius; sized from the schedule when omitted.
        #[arg(long)]
        radius: Option<u64>,
        /// Number of C bits kept.
        #[arg(long)]
        c_depth: Option<u32>,
        /// Initial C bits: `zero`, `hash` or `spread:SEED`.
        #[arg(long, default_value = "zero")]
        c_init: String,
        #[command(flatten)]
        scaled: ScaledArgs,
        #[arg(long, env = "FORGE_OUT", default_value = "forge-out")]
        out: PathBuf,
        /// Rewrite artifacts even when the directory is up to date.
        #[arg(long)]
        force: bool,
    },
    /// Continue a run in the output directory from its last snapshot.
    Evolve {
        #[arg(long)]
        stages: usize,
        #[arg(long, env = "FORGE_OUT", default_value = "forge-out")]
        out: PathBuf,
    },
    /// Check every certificate on a run directory or labeling snapshots.
    Verify {
        /// A run directory, or stage snapshots in stage order.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Largest radius for freeness and the Bernoulli witness.
        #[arg(long, default_value_t = 3)]
        r_max: u64,
        /// Minimality: largest truncation depth checked on the limit.
        #[arg(long, default_value_t = 1)]
        max_j: usize,
        /// Minimality: largest ball radius checked on the limit.
        #[arg(long, default_value_t = 0)]
        max_t: u64,
        /// Where to write the certificate bundle.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a snapshot: a text strip on ℤ, a PPM image on ℤ², a census CSV anywhere.
    Render {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 1)]
        layer: usize,
        #[arg(long, value_enum, default_value = "strip")]
        format: render::Format,
        /// First and last coordinate of a strip.
        #[arg(long, allow_hyphen_values = true)]
        from: Option<i64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<i64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ball-type census of a snapshot as CSV.
    Census {
        snapshot: PathBuf,
        /// Truncation depth.
        #[arg(long, default_value_t = 1)]
        j: usize,
        /// Ball radius.
        #[arg(long)]
        radius: u64,
        /// Graph level; defaults to f(j).
        #[arg(long)]
        level: Option<usize>,
        /// Centers within this distance of e; defaults to the snapshot core minus the radius.
        #[arg(long)]
        core: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_c_init(s: &str) -> CliResult<CInit> {
    match s {
        "zero" => Ok(CInit::Zero),
        "hash" => Ok(CInit::ElementHash),
        _ => match s.strip_prefix("spread:").and_then(|v| v.parse().ok()) {
            Some(seed) => Ok(CInit::DigitSpread { seed }),
            None => Err(CliError::Usage(format!("unknown C policy `{s}`"))),
        },
    }
}

fn cmd_schedule(group: &str, stages: usize, mode: Mode, scaled: &ScaledArgs, json: Option<PathBuf>) -> CliResult<()> {
    let gs = parse_group(group)?;
    let value = match mode {
        Mode::Exact => {
            let sch = exact_schedule(&gs, stages)?;
            let cert = check_exact_rules(&gs, &sch)?;
            println!("{:>3} {:>6} {:>4} {:>10} {:>10}  kappa", "m", "s", "f", "r", "|F|");
            for (i, st) in sch.stages.iter().enumerate() {
                let k = match &st.kappa.value {
                    Some(v) if v.to_string().len() <= 40 => v.to_string(),
                    _ => format!("{}^{}", st.kappa.base, st.kappa.exponent),
                };
                println!("{:>3} {:>6} {:>4} {:>10} {:>10}  {k}", i + 1, st.s, st.f, st.r, st.card_f);
                for n in &st.notes {
                    println!("      {n}");
                }
            }
            println!("exact rules: {}", if cert.pass { "hold" } else { "VIOLATED" });
            if !cert.pass {
                return Err(CliError::Failed(cert.failures().len()));
            }
            sch.to_json()
        }
        Mode::Scaled => {
            let cfg = scaled.config();
            cfg.validate()?;
            let sch = scaled_schedule(&gs, stages, &cfg, &[])?;
            let cert = check_scaled(&gs, &sch)?;
            println!("{:>3} {:>10} {:>4} {:>10} {:>10}", "m", "s", "f", "r", "|F|");
            for m in 1..=sch.len() {
                println!("{:>3} {:>10} {:>4} {:>10} {:>10}", m, sch.s(m), sch.f(m), sch.r(m), sch.card_f(m));
            }
            if stages >= 2 {
                println!("window radius R = {}", required_window(&sch, stages));
            }
            println!("scaled feasibility: {}", if cert.pass { "holds" } else { "VIOLATED" });
            if !cert.pass {
                return Err(CliError::Usage("scaled schedule is infeasible".into()));
            }
            sch.to_json()
        }
    };
    if let Some(path) = json {
        forge_core::snapshot::save_json(&path, &value)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.cmd {
        Cmd::Schedule { group, stages, mode, scaled, json } => cmd_schedule(&group, stages, mode, &scaled, json),
        Cmd::Build { group, stages, target, radius, c_depth, c_init, scaled, out, force } => {
            let target = target.unwrap_or(stages);
            if stages == 0 || stages > target {
                return Err(CliError::Usage(format!("cannot build {stages} of {target} stages")));
            }
            let cfg = scaled.config();
            cfg.validate()?;
            let mut pc = PipelineConfig::new(target);
            pc.scaled = cfg;
            pc.radius = radius;
            pc.c_init = parse_c_init(&c_init)?;
            if let Some(d) = c_depth {
                pc.c_depth = d;
            }
            if (pc.c_depth as usize) < target {
                return Err(CliError::Usage(format!("C depth {} is below the stage count {target}", pc.c_depth)));
            }
            rundir::build(&out, &group, pc, stages, force)
        }
        Cmd::Evolve { stages, out } => rundir::evolve(&out, stages),
        Cmd::Verify { paths, r_max, max_j, max_t, out } => {
            let opts = forge_core::verify::VerifyOptions { r_max, max_j, max_t };
            rundir::verify(&paths, &opts, out)
        }
        Cmd::Render { snapshot, layer, format, from, to, out } => {
            render::render(&snapshot, layer, format, from, to, out)
        }
        Cmd::Census { snapshot, j, radius, level, core, out } => render::census(&snapshot, j, radius, level, core, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("forge: {e}");
            ExitCode::from(e.code())
        }
    }
}
