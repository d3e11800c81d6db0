use clap::{Parser, Subcommand};
use fhn_meso::harness::{
    self, config_to_json, default_config, emit_report, run_convergence_study, run_coupling_study,
    solve_kinetic_with_snapshots, solve_macro_path, ExperimentPlan, HarnessError, MetricKind,
    SolverMode,
};
use fhn_meso::kinetic::snapshot_csv;
use fhn_meso::metrics::{w2_2d, Coords, SampleSet};
use fhn_meso::model::{config_from_toml_str, validate_config, ModelConfig};
use fhn_meso::particles::{init_particles, samples_csv, step_particles};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_GATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fhn-meso",
    about = "Multiscale FitzHugh-Nagumo network solvers and convergence harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, clap::ValueEnum)]
enum ModeArg {
    Kinetic,
    Particle,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration against the structural assumptions.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve the phase-space density and dump per-node snapshots.
    SimulateKinetic {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated snapshot times (defaults to t_end).
        #[arg(long)]
        times: Option<String>,
    },
    /// Simulate the interacting particle system and dump samples.
    SimulateParticles {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        times: Option<String>,
    },
    /// Solve the limiting system; write trajectory and quantile dumps.
    SimulateMacro {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Epsilon sweep with distance metrics and log-log slope fits.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated decreasing epsilon list.
        #[arg(long, default_value = "0.2,0.1,0.05,0.025")]
        eps: String,
        #[arg(long, default_value = "0.5,1.0")]
        times: String,
        #[arg(long, value_enum, default_value = "kinetic")]
        mode: ModeArg,
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail (exit 4) unless the fitted orders match the expansion.
        #[arg(long)]
        gate: bool,
        /// Initial macroscopic offset injected into the limit system.
        #[arg(long, default_value_t = 0.0)]
        offset_mac: f64,
        /// Initial marginal translation injected into the limit system.
        #[arg(long, default_value_t = 0.0)]
        offset_mes: f64,
    },
    /// Common-noise coupling study (particles with companions).
    Couple {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "0.1,0.05,0.025")]
        eps: String,
        #[arg(long, default_value = "0.5,1.0")]
        times: String,
        #[arg(long, default_value_t = 50_000)]
        particles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact transport distance between two dump files.
    Metrics {
        #[arg(long)]
        file_a: PathBuf,
        #[arg(long)]
        file_b: PathBuf,
    },
}

fn main() -> ExitCode {
    harness::init_thread_pool_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("validation failure:\n{msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(CliError::Gate(msg)) => {
            eprintln!("acceptance gate failed:\n{msg}");
            ExitCode::from(EXIT_GATE)
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

enum CliError {
    Validation(String),
    Solver(String),
    Gate(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Validation(errs) => CliError::Validation(
                errs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n"),
            ),
            other => CliError::Solver(other.to_string()),
        }
    }
}

macro_rules! solver_err {
    ($t:ty) => {
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Solver(e.to_string())
            }
        }
    };
}
solver_err!(fhn_meso::kinetic::KineticError);
solver_err!(fhn_meso::particles::ParticleError);
solver_err!(fhn_meso::macroscopic::MacroError);
solver_err!(fhn_meso::metrics::MetricsError);
solver_err!(std::io::Error);

fn load_config(path: &Option<PathBuf>) -> Result<ModelConfig, CliError> {
    match path {
        None => Ok(default_config()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Solver(format!("cannot read {}: {e}", p.display())))?;
            config_from_toml_str(&text).map_err(|e| CliError::Validation(e.to_string()))
        }
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::Validation(format!("bad numeric list `{text}`: {e}")))
}

fn validated(cfg: &ModelConfig) -> Result<fhn_meso::model::ValidatedModel, CliError> {
    validate_config(cfg).map_err(|errs| {
        CliError::Validation(errs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n"))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            validated(&cfg)?;
            println!("configuration is valid");
            Ok(())
        }
        Command::SimulateKinetic { config, out, times } => {
            let cfg = load_config(&config)?;
            validated(&cfg)?;
            let times = match times {
                Some(t) => parse_list(&t)?,
                None => vec![cfg.t_end],
            };
            let (model, run) = solve_kinetic_with_snapshots(&cfg, &times)?;
            std::fs::create_dir_all(&out)?;
            for (t, state) in &run.snapshots {
                for node in 0..model.n_nodes() {
                    let path = out.join(format!("snapshot_t{t:.4}_node{node}.csv"));
                    std::fs::write(&path, snapshot_csv(state, &model, node))?;
                }
            }
            println!("wrote {} snapshot times to {}", run.snapshots.len(), out.display());
            Ok(())
        }
        Command::SimulateParticles { config, out, particles, seed, times } => {
            let cfg = load_config(&config)?;
            let model = validated(&cfg)?;
            let times = match times {
                Some(t) => parse_list(&t)?,
                None => vec![cfg.t_end],
            };
            let t_max = times.iter().cloned().fold(0.0, f64::max);
            let n_steps = (t_max / cfg.dt).round() as usize;
            let mut want: Vec<usize> =
                times.iter().map(|&t| (t / cfg.dt).round() as usize).collect();
            want.sort_unstable();
            want.dedup();
            std::fs::create_dir_all(&out)?;
            let mut ens = init_particles(&model, particles, seed)?;
            let dump = |ens: &fhn_meso::particles::ParticleEnsemble| -> Result<(), CliError> {
                for node in 0..model.n_nodes() {
                    let path = out.join(format!("samples_t{:.4}_node{node}.csv", ens.t));
                    std::fs::write(&path, samples_csv(ens, node))?;
                }
                Ok(())
            };
            if want.first() == Some(&0) {
                dump(&ens)?;
            }
            for step in 1..=n_steps {
                ens = step_particles(&ens, &model, cfg.dt)?;
                if want.binary_search(&step).is_ok() {
                    dump(&ens)?;
                }
            }
            println!("wrote particle dumps to {}", out.display());
            Ok(())
        }
        Command::SimulateMacro { config, out } => {
            let cfg = load_config(&config)?;
            let model = validated(&cfg)?;
            let n_steps = (cfg.t_end / cfg.dt).round() as usize;
            let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * cfg.dt).collect();
            let (snaps, last) = solve_macro_path(&model, &times, None, None, 0.0, None)?;
            std::fs::create_dir_all(&out)?;
            let states: Vec<fhn_meso::macroscopic::MacroState> =
                snaps.into_iter().map(|(_, s)| s).collect();
            std::fs::write(
                out.join("trajectory.csv"),
                fhn_meso::macroscopic::trajectory_csv(&states),
            )?;
            std::fs::write(out.join("quantiles.csv"), fhn_meso::macroscopic::quantile_csv(&last))?;
            println!("wrote macroscopic dumps to {}", out.display());
            Ok(())
        }
        Command::Converge {
            config,
            out,
            eps,
            times,
            mode,
            particles,
            seed,
            gate,
            offset_mac,
            offset_mes,
        } => {
            let cfg = load_config(&config)?;
            validated(&cfg)?;
            let mut plan = ExperimentPlan::new(cfg.clone(), parse_list(&eps)?);
            plan.times = parse_list(&times)?;
            plan.n_particles = particles;
            plan.seed = seed;
            plan.output_dir = out.clone();
            plan.initial_offset_mac = offset_mac;
            plan.initial_offset_mes = offset_mes;
            plan.metrics = [
                MetricKind::Order1W2,
                MetricKind::Order0W2,
                MetricKind::D2,
                MetricKind::M2,
                MetricKind::Dq,
                MetricKind::ErrorE,
                MetricKind::Entropy,
            ]
            .into_iter()
            .collect();
            let mode = match mode {
                ModeArg::Kinetic => SolverMode::Kinetic,
                ModeArg::Particle => SolverMode::Particle,
            };
            let report = run_convergence_study(&plan, mode)?;
            let manifest = serde_json::json!({
                "command": "converge",
                "seed": seed,
                "epsilons": plan.epsilons,
                "times": plan.times,
                "mode": if mode == SolverMode::Kinetic { "kinetic" } else { "particle" },
                "config": config_to_json(&cfg),
            });
            emit_report(&report, &out, manifest)?;
            for (name, fit) in &report.fitted_slopes {
                println!(
                    "{name}: slope {:.4} (r2 {:.4}, {} points{})",
                    fit.slope,
                    fit.r2,
                    fit.n_points,
                    if fit.saturated { ", saturated" } else { "" }
                );
            }
            if gate {
                let t_gate = plan.times.iter().cloned().fold(0.0, f64::max);
                let mut failures = Vec::new();
                let k1 = format!("order1_w2_t{t_gate:.3}");
                match report.fitted_slopes.get(&k1) {
                    Some(f) if (0.8..=1.2).contains(&f.slope) && f.r2 >= 0.98 => {}
                    Some(f) => failures.push(format!(
                        "{k1}: slope {:.4} r2 {:.4} outside [0.8, 1.2] with r2 >= 0.98",
                        f.slope, f.r2
                    )),
                    None => failures.push(format!("{k1}: missing")),
                }
                let k0 = format!("order0_w2_t{t_gate:.3}");
                match report.fitted_slopes.get(&k0) {
                    Some(f) if (0.4..=0.6).contains(&f.slope) => {}
                    Some(f) => {
                        failures.push(format!("{k0}: slope {:.4} outside [0.4, 0.6]", f.slope))
                    }
                    None => failures.push(format!("{k0}: missing")),
                }
                if !failures.is_empty() {
                    return Err(CliError::Gate(failures.join("\n")));
                }
                println!("gate passed");
            }
            Ok(())
        }
        Command::Couple { config, out, eps, times, particles, seed } => {
            let cfg = load_config(&config)?;
            validated(&cfg)?;
            let mut plan = ExperimentPlan::new(cfg.clone(), parse_list(&eps)?);
            plan.times = parse_list(&times)?;
            plan.n_particles = particles;
            plan.seed = seed;
            plan.output_dir = out.clone();
            plan.metrics = [MetricKind::Coupling].into_iter().collect();
            let report = run_coupling_study(&plan)?;
            let manifest = serde_json::json!({
                "command": "couple",
                "seed": seed,
                "epsilons": plan.epsilons,
                "times": plan.times,
                "n_particles": particles,
                "config": config_to_json(&cfg),
            });
            emit_report(&report, &out, manifest)?;
            for (name, fit) in &report.fitted_slopes {
                println!("{name}: slope {:.4} (r2 {:.4})", fit.slope, fit.r2);
            }
            Ok(())
        }
        Command::Metrics { file_a, file_b } => {
            let a = load_dump(&file_a)?;
            let b = load_dump(&file_b)?;
            let d = w2_2d(&a, &b)?;
            let n = a.len().min(b.len());
            println!("W2 = {d:.10}");
            println!(
                "sampling noise floor ~ {:.3e} (n = {n})",
                harness::sampling_noise_floor(n, 16.0)
            );
            Ok(())
        }
    }
}

/// Reads a dump file: `v,w` sample dumps become uniform sample sets
/// (capped by stride subsampling), `v,w,density` snapshots become
/// truncated weighted supports.
fn load_dump(path: &PathBuf) -> Result<SampleSet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Solver(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let cols: Vec<&str> = header.split(',').collect();
    let parse_row = |line: &str| -> Result<Vec<f64>, CliError> {
        line.split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Solver(format!("bad row `{line}` in {}: {e}", path.display())))
    };
    if cols.starts_with(&["v", "w", "density"]) {
        let mut pts = Vec::new();
        let mut mass = Vec::new();
        for line in lines {
            let row = parse_row(line)?;
            if row[2] > 0.0 {
                pts.push([row[0], row[1]]);
                mass.push(row[2]);
            }
        }
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&i, &j| mass[j].partial_cmp(&mass[i]).unwrap().then(i.cmp(&j)));
        order.truncate(fhn_meso::metrics::OT_SUPPORT_CAP / 2);
        let total: f64 = order.iter().map(|&i| mass[i]).sum();
        let pts: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
        let mut weights: Vec<f64> = order.iter().map(|&i| mass[i] / total).collect();
        let drift: f64 = 1.0 - weights.iter().sum::<f64>();
        if let Some(w0) = weights.first_mut() {
            *w0 += drift;
        }
        Ok(SampleSet::new(Coords::Two(pts), Some(weights))?)
    } else if cols.first() == Some(&"v") && cols.get(1) == Some(&"w") {
        let mut pts = Vec::new();
        for line in lines {
            let row = parse_row(line)?;
            pts.push([row[0], row[1]]);
        }
        let cap = fhn_meso::metrics::OT_SUPPORT_CAP / 2;
        if pts.len() > cap {
            let stride = pts.len() as f64 / cap as f64;
            pts = (0..cap).map(|k| pts[(k as f64 * stride) as usize]).collect();
        }
        Ok(SampleSet::from_pairs(pts)?)
    } else {
        Err(CliError::Solver(format!(
            "unrecognized dump header `{header}` in {}",
            path.display()
        )))
    }
}
