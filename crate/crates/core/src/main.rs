//! Command-line entry points.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration/validation error,
//! 3 numerical failure. `NEUROPERF_THREADS` caps the worker count of the
//! linear algebra backend.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use neuroperf::config::parse_config;
use neuroperf::error::Error;
use neuroperf::model::nondimensionalize;
use neuroperf::output;
use neuroperf::stepper::{run_simulation, solve_healthy_baseline, SolverWorkspace};
use neuroperf::verify;

#[derive(Parser)]
#[command(name = "neuroperf", version, about = "Coupled protein/perfusion dG solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a configuration file and print derived quantities.
    Check { config: PathBuf },
    /// Solve the healthy perfusion baseline and write it as VTK.
    Baseline {
        config: PathBuf,
        /// Output directory (defaults to the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full simulation: VTK snapshots plus a diagnostics CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study (CSV).
    Convergence {
        /// Comma-separated polynomial degrees.
        #[arg(long, default_value = "1,2")]
        degrees: String,
        #[arg(long, default_value_t = 3)]
        refinements: usize,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// 0D kinetics oracle: RK4 trajectory with perfusion feedback and the
    /// bistability bracket for the config's parameters (CSV).
    Ode {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes, everything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("NEUROPERF_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => {
                eprintln!("warning: ignoring invalid NEUROPERF_THREADS value `{v}`");
            }
            Ok(1) => faer::set_global_parallelism(faer::Par::Seq),
            Ok(n) => faer::set_global_parallelism(faer::Par::rayon(n)),
        }
    }
}

fn dispatch(cmd: Command) -> neuroperf::Result<()> {
    match cmd {
        Command::Check { config } => check(&config),
        Command::Baseline { config, out } => baseline(&config, out),
        Command::Run { config, out } => run(&config, out),
        Command::Convergence {
            degrees,
            refinements,
            out,
        } => convergence(&degrees, refinements, out),
        Command::Ode { config, out } => ode(&config, out),
    }
}

fn check(path: &Path) -> neuroperf::Result<()> {
    let cfg = parse_config(path)?;
    let mesh = cfg.build_mesh()?;
    let d = nondimensionalize(&cfg.params);
    println!("configuration ok: {}", path.display());
    println!(
        "mesh: {} elements, {} interior faces, h_max = {:.4e} m",
        mesh.num_elements(),
        mesh.interior_faces.len(),
        mesh.h_max()
    );
    println!(
        "steps: {} of dt = {} yr to t = {} yr",
        (cfg.t_end / cfg.dt).round(),
        cfg.dt,
        cfg.t_end
    );
    println!("dimensionless groups:");
    println!("  epsilon      = {:.6}", d.epsilon);
    println!("  R0           = {:.6}", d.r0);
    println!("  delta_axn    = {:.6}", d.delta_axn);
    println!("  sigma_A      = {:.6e}", d.sigma_a);
    println!("  sigma_C      = {:.6e}", d.sigma_c);
    println!("  sigma_V      = {:.6e}", d.sigma_v);
    println!("  B            = {:.6}", d.b_ratio);
    println!("  gamma_AC     = {:.6}", d.gamma_ac);
    println!("  gamma_CV     = {:.6}", d.gamma_cv);
    println!("  lambda1_B    = {:.6}  (at r = 0.2)", d.lambda1);
    println!("  lambda1t_B   = {:.6}  (at r = 0.2)", d.lambda1_tilde);
    println!("  mu0_B        = {:.6}  (at r = 0.2)", d.mu0);
    Ok(())
}

fn baseline(path: &Path, out: Option<PathBuf>) -> neuroperf::Result<()> {
    let cfg = parse_config(path)?;
    let problem = cfg.build_problem()?;
    let mut ws = SolverWorkspace::new();
    let base = solve_healthy_baseline(&problem, &mut ws)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let file = dir.join("baseline.vtk");
    output::write_vtk_baseline(&base, &file)?;
    println!(
        "healthy baseline written to {} (min Q_H = {:.4e})",
        file.display(),
        base.q_h_min
    );
    Ok(())
}

fn run(path: &Path, out: Option<PathBuf>) -> neuroperf::Result<()> {
    let cfg = parse_config(path)?;
    let problem = cfg.build_problem()?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let csv = std::io::BufWriter::new(std::fs::File::create(dir.join("diagnostics.csv"))?);
    let mut log = output::CsvLog::new(csv)?;

    let outcome = run_simulation(
        &problem,
        &cfg.initial,
        &cfg.run_settings(),
        |state, idx| {
            let file = dir.join(format!("snapshot_{idx:05}.vtk"));
            output::write_vtk_snapshot(state, &file)
        },
        |row| {
            if row.step > 0 && row.max_util < 0.0 {
                eprintln!(
                    "warning: misfolded concentration undershoot at step {} (max {:+.3e})",
                    row.step, row.max_util
                );
            }
            log.write_row(row)
        },
    )?;
    println!(
        "run finished: {} steps, classification {}, max CBF reduction {:.4}",
        outcome.steps, outcome.classification, outcome.r_max_observed
    );
    println!(
        "final fields: max u_tilde = {:.6}, min u = {:.6}",
        outcome.final_state.diagnostics.max_util, outcome.final_state.diagnostics.min_u
    );
    Ok(())
}

fn convergence(degrees: &str, refinements: usize, out: Option<PathBuf>) -> neuroperf::Result<()> {
    let degrees: Vec<usize> = degrees
        .split(',')
        .map(|d| {
            d.trim()
                .parse()
                .map_err(|_| Error::invalid_argument(format!("bad degree `{d}`")))
        })
        .collect::<neuroperf::Result<_>>()?;
    let rows = verify::poisson_convergence_study(&degrees, refinements)?;
    let mut text = String::from("degree,subdivisions,h,l2_error,observed_order\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{:.9e},{:.9e},{}\n",
            r.degree,
            r.subdivisions,
            r.h,
            r.l2_error,
            r.observed_order
                .map(|o| format!("{o:.4}"))
                .unwrap_or_default()
        ));
    }
    emit(out, &text)
}

fn ode(path: &Path, out: Option<PathBuf>) -> neuroperf::Result<()> {
    let cfg = parse_config(path)?;
    let p = &cfg.params;
    let amplitude = cfg
        .initial
        .seeds
        .iter()
        .map(|s| s.amplitude)
        .fold(cfg.initial.util0, f64::max);

    let mut text = String::new();
    match verify::bistability_bracket(p, 0.0, amplitude.max(0.6), 1e-3) {
        Ok((lo, hi)) => {
            text.push_str(&format!(
                "# separatrix seed amplitude in [{lo:.4}, {hi:.4}]\n"
            ));
        }
        Err(e) => text.push_str(&format!("# no bistability bracket: {e}\n")),
    }
    text.push_str("time_yr,u,u_tilde,hypoperfusion\n");
    let traj = verify::coupled_0d_oracle(p, p.k0 / p.k1, amplitude, cfg.t_end, 1e-3);
    let lumped = verify::LumpedPerfusion::new(p);
    let stride = (traj.times.len() / 2000).max(1);
    for (i, (t, y)) in traj.times.iter().zip(&traj.states).enumerate() {
        if i % stride == 0 || i + 1 == traj.times.len() {
            text.push_str(&format!(
                "{:.6},{:.9e},{:.9e},{:.9e}\n",
                t,
                y[0],
                y[1],
                lumped.hypoperfusion(y[1])
            ));
        }
    }
    emit(out, &text)
}

fn emit(out: Option<PathBuf>, text: &str) -> neuroperf::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(&path, text)?;
            println!("written to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
