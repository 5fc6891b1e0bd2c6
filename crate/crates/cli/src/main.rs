use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsrl::config::{self, preset, ConfigError, EnvConfig, RunConfig};
use qsrl::envs::Domain;
use qsrl::harness::report::read_report;
use qsrl::harness::{compare, export_trace, HarnessError};

#[derive(Parser)]
#[command(
    name = "qsrl",
    version,
    about = "Run and compare tabular RL agents with similarity, shaping and abstraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evaluation protocol for a config file or a preset name.
    Run {
        config: String,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for repeats.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two or more run reports (report.toml or a run directory).
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Also write the pairwise flags as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a similarity spec on random reachable state-action pairs.
    ValidateSim {
        domain: String,
        /// A TOML file with `[[similarity]]` tables, or a comma-separated list of notions.
        spec: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a per-step trace of the first training episodes.
    Trace {
        config: String,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets, or print one as TOML.
    Presets { name: Option<String> },
}

fn load_config(arg: &str) -> Result<RunConfig, ConfigError> {
    let path = Path::new(arg);
    if path.exists() {
        RunConfig::load(path)
    } else if preset::ALL.contains(&arg) {
        RunConfig::from_preset(arg)
    } else {
        Err(ConfigError::Io {
            path: arg.into(),
            source: io::Error::new(io::ErrorKind::NotFound, "no such file or preset"),
        })
    }
}

fn parse_domain(name: &str) -> Result<Domain, String> {
    match name {
        "soccer" => Ok(Domain::Soccer),
        "pursuit" => Ok(Domain::Pursuit),
        "oracle_grid" | "grid" => Ok(Domain::OracleGrid),
        other => Err(format!(
            "unknown domain `{other}` (soccer, pursuit, oracle_grid)"
        )),
    }
}

fn cmd_run(
    config: &str,
    seed: Option<u64>,
    parallel: usize,
    out: Option<PathBuf>,
) -> Result<(), String> {
    let mut cfg = load_config(config).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    let (report, dir) = cfg.execute(parallel.max(1)).map_err(|e| e.to_string())?;
    println!(
        "{} {}: avg_training {} (se {}), asymptotic {} (se {}), {} batches, {:.2} updates/step -> {}",
        report.domain,
        report.agent,
        report.avg_training,
        report.avg_training_se,
        report.asymptotic,
        report.asymptotic_se,
        report.curve.len(),
        report.mean_update_targets,
        dir.display()
    );
    Ok(())
}

fn cmd_compare(paths: &[PathBuf], out: Option<PathBuf>) -> Result<(), String> {
    let reports = paths
        .iter()
        .map(|p| read_report(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let cmp = compare(&reports).map_err(|e| e.to_string())?;
    print!("{}", cmp.render());
    if let Some(path) = out {
        fs::write(&path, cmp.to_csv()).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn cmd_validate_sim(domain: &str, spec: &str, samples: usize, seed: u64) -> Result<bool, String> {
    let domain = parse_domain(domain)?;
    let text = if Path::new(spec).is_file() {
        fs::read_to_string(spec).map_err(|e| format!("{spec}: {e}"))?
    } else {
        spec.to_string()
    };
    let specs = config::parse_similarity_specs(&text).map_err(|e| e.to_string())?;
    let report =
        config::validate_similarity_specs(&specs, domain, &EnvConfig::default(), samples, seed)
            .map_err(|e| e.to_string())?;
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "{verdict}: {} pairs checked, {} violations, {:.3} neighbors per pair",
        report.checked,
        report.violations.len(),
        report.mean_neighbors()
    );
    for v in report.violations.iter().take(50) {
        println!("  state {} action {}: {}", v.state, v.action, v.kind);
    }
    if report.violations.len() > 50 {
        println!("  ... {} more", report.violations.len() - 50);
    }
    Ok(report.passed())
}

fn cmd_trace(
    config: &str,
    episodes: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), String> {
    let mut cfg = load_config(config).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let setup = cfg.agent_setup().map_err(|e| e.to_string())?;
    let repeat_seed = qsrl::harness::repeat_seed(cfg.seed, 0);
    let result = match out {
        Some(path) => {
            let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            export_trace(
                &cfg.protocol,
                &setup,
                repeat_seed,
                episodes,
                BufWriter::new(file),
            )
        }
        None => export_trace(
            &cfg.protocol,
            &setup,
            repeat_seed,
            episodes,
            BufWriter::new(io::stdout().lock()),
        ),
    };
    match result {
        Err(HarnessError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(|e| e.to_string()),
    }
}

fn cmd_presets(name: Option<String>) -> Result<(), String> {
    match name {
        None => {
            for p in preset::ALL {
                println!("{p}");
            }
        }
        Some(n) => {
            let cfg = RunConfig::from_preset(&n).map_err(|e| e.to_string())?;
            print!("{}", cfg.effective().to_toml().map_err(|e| e.to_string())?);
        }
    }
    io::stdout().flush().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            parallel,
            out,
        } => cmd_run(&config, seed, parallel, out),
        Command::Compare { reports, out } => cmd_compare(&reports, out),
        Command::ValidateSim {
            domain,
            spec,
            samples,
            seed,
        } => match cmd_validate_sim(&domain, &spec, samples, seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
        Command::Trace {
            config,
            episodes,
            seed,
            out,
        } => cmd_trace(&config, episodes, seed, out),
        Command::Presets { name } => cmd_presets(name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
