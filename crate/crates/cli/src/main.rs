use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinepi::abm::{init_population, run_abm};
use kinepi::closure::{averaged_rates, closure_coefficients, DiffusionReading, SolvePath};
use kinepi::config::{parse_config, RunConfig};
use kinepi::domain::{Class, PhaseField};
use kinepi::kinetic::run_kinetic;
use kinepi::meso::run_meso;
use kinepi::output;
use kinepi::sirs::run_sirs;
use kinepi::validation::{abm_spreading, Study};

/// Kinetic, mesoscopic, compartmental and agent-based epidemic models.
#[derive(Parser)]
#[command(name = "kinepi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the kinetic solver.
    Kinetic(Common),
    /// Run the drift-diffusion solver.
    Meso(Common),
    /// Integrate the SIRS ODE.
    Sirs(Common),
    /// Run the agent-based model.
    Abm(Common),
    /// Run the validation studies listed in the config.
    Validate(Common),
    /// Print diffusion and drift coefficients and averaged rates.
    Closure(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed for stochastic runs; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Validation,
    Run(String),
}

impl From<kinepi::Error> for Failure {
    fn from(e: kinepi::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn load(args: &Common) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(format!("{}:\n{e}", args.config.display())))
}

fn out_dir(args: &Common, cfg: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&cfg.scenario))
}

fn kinetic(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let grid = cfg.grid()?;
    let vs = cfg.velocity_set()?;
    let params = cfg.param_fields(&grid, &vs)?;
    let rho0 = cfg.initial_field(&grid)?;
    let run_cfg = cfg.kinetic_config()?;
    let f0 = PhaseField::equilibrium(&rho0, &vs);
    let run = run_kinetic(&f0, &run_cfg, &params, &vs, &grid, &mut |_, _| Ok(()))?;
    let dir = out_dir(args, &cfg);
    output::write_timeseries(&dir.join("timeseries.csv"), &run.series)?;
    output::write_meso_snapshot(&dir, "final", &run.final_state.to_meso(&vs), &grid)?;
    let last = run.series.rows.last().map(|r| r.totals).unwrap_or_default();
    println!(
        "kinetic run to t = {} (eps = {}): S = {:.6}, I = {:.6}, R = {:.6}; max clipped {:.1e}",
        run_cfg.t_end, run_cfg.eps, last[0], last[1], last[2], run.max_clipped
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn meso(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let grid = cfg.grid()?;
    let vs = cfg.velocity_set()?;
    let params = cfg.param_fields(&grid, &vs)?;
    let rho0 = cfg.initial_field(&grid)?;
    let (run_cfg, reading) = cfg.meso_config()?;
    let coeffs = closure_coefficients(&params, &vs, &grid, reading, SolvePath::Analytic)?;
    let run = run_meso(&rho0, &run_cfg, &coeffs, &grid, &mut |_, _| Ok(()))?;
    let dir = out_dir(args, &cfg);
    output::write_timeseries(&dir.join("timeseries.csv"), &run.series)?;
    output::write_meso_snapshot(&dir, "final", &run.final_state, &grid)?;
    let last = run.series.rows.last().map(|r| r.totals).unwrap_or_default();
    println!(
        "meso run to t = {}: S = {:.6}, I = {:.6}, R = {:.6}",
        run_cfg.t_end, last[0], last[1], last[2]
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn sirs(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let (state, dt, t_end) = cfg.sirs_run()?;
    let traj = run_sirs(&state, dt, t_end)?;
    let dir = out_dir(args, &cfg);
    output::write_timeseries(&dir.join("timeseries.csv"), &output::sirs_series(&traj))?;
    if let Some(peak) = traj.iter().max_by(|a, b| a.i.total_cmp(&b.i)) {
        println!("peak I = {:.6} at t = {:.3}", peak.i, peak.t);
    }
    if let Some(last) = traj.last() {
        println!("t = {}: S = {:.6}, I = {:.6}, R = {:.6}", last.t, last.s, last.i, last.r);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn abm(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let (params, world, spec) = cfg.abm_setup()?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let mut w = init_population(spec.counts, &world, seed)?;
    let run = run_abm(&mut w, &params, spec.steps, &spec.snapshots)?;
    let dir = out_dir(args, &cfg);
    fs::create_dir_all(&dir).map_err(|e| kinepi::Error::io(&dir, e))?;
    let counts = dir.join("counts.csv");
    fs::write(&counts, output::abm_csv(&run)).map_err(|e| kinepi::Error::io(&counts, e))?;
    for (step, occ) in &run.snapshots {
        output::write_occupancy_snapshot(&dir, &format!("step{step:02}"), occ)?;
    }
    let last = run.counts.last().copied().unwrap_or_default();
    println!("seed {seed}, {} steps: S = {}, I = {}, R = {}", spec.steps, last[0], last[1], last[2]);
    println!("wrote {}", dir.display());
    Ok(())
}

fn validate(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    if cfg.validation.is_empty() {
        return Err(Failure::Config("the config lists no validation studies".into()));
    }
    let dir = out_dir(args, &cfg);
    fs::create_dir_all(&dir).map_err(|e| kinepi::Error::io(&dir, e))?;
    let mut all_gate = true;
    for (k, study) in cfg.validation.iter().enumerate() {
        let study = match (study, args.seed) {
            (Study::AbmVsOde(s), Some(seed)) => Study::AbmVsOde(kinepi::validation::AbmOdeStudy {
                base_seed: seed,
                ..s.clone()
            }),
            (Study::AbmSpreading(s), Some(seed)) => Study::AbmSpreading(kinepi::validation::SpreadingStudy {
                base_seed: seed,
                ..s.clone()
            }),
            (Study::AbmMicro(s), Some(seed)) => Study::AbmMicro(kinepi::validation::MicroStudy {
                base_seed: seed,
                ..s.clone()
            }),
            (s, _) => s.clone(),
        };
        let report = match &study {
            Study::AbmSpreading(s) => {
                let (report, panels) = abm_spreading(s)?;
                for (step, occ) in &panels {
                    output::write_occupancy_snapshot(&dir, &format!("{k}_step{step:02}"), occ)?;
                }
                report
            }
            s => s.run()?,
        };
        print!("{}", report.summary());
        let stem = format!("{k}_{}", report.scenario);
        let write = |name: String, text: String| -> Result<(), Failure> {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Failure::from(kinepi::Error::io(&p, e)))
        };
        write(format!("{stem}_summary.txt"), report.summary())?;
        write(format!("{stem}_checks.csv"), report.checks_csv())?;
        if !report.eps_table.is_empty() {
            write(format!("{stem}_eps.csv"), report.eps_csv())?;
        }
        all_gate &= report.gates();
    }
    if all_gate {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn closure(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let vs = cfg.velocity_set()?;
    let grid = cfg.grid_or_cell(&vs)?;
    let params = cfg.param_fields(&grid, &vs)?;
    let describe = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            format!("{lo:.12}")
        } else {
            format!("{lo:.12} .. {hi:.12}")
        }
    };
    for (reading, label) in [
        (DiffusionReading::Trace, "trace"),
        (DiffusionReading::PerAxis, "per-axis (divided by d)"),
    ] {
        let c = closure_coefficients(&params, &vs, &grid, reading, SolvePath::Analytic)?;
        println!("{label}:");
        for class in Class::ALL {
            println!("  D_{} = {}", class.name(), describe(&c.d[class]));
        }
        println!("  Gamma = {}", describe(&c.gamma_drift));
    }
    let rates = averaged_rates(&params, &vs, &grid)?;
    println!("averaged rates:");
    println!("  alpha0 = {}", describe(&rates.alpha0));
    println!("  beta0 = {}", describe(&rates.beta0));
    println!("  gamma0 = {}", describe(&rates.gamma0));
    println!(
        "  domain means: alpha = {:.12}, beta = {:.12}, gamma = {:.12}",
        rates.alpha_bar, rates.beta_bar, rates.gamma_bar
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Kinetic(a) => kinetic(a),
        Command::Meso(a) => meso(a),
        Command::Sirs(a) => sirs(a),
        Command::Abm(a) => abm(a),
        Command::Validate(a) => validate(a),
        Command::Closure(a) => closure(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
