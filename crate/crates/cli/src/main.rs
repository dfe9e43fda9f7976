//! `ecgf`: command-line pipelines over the forward-ECG toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ecg_forward::activation::{compute_activation, DEFAULT_THRESHOLD};
use ecg_forward::config::{MeshSource, RunConfig};
use ecg_forward::experiments::{
    epsilon_sweep, front_f1_rhs, noise_study, verification_study, NoiseCase, NoiseStudyParams,
};
use ecg_forward::formulations::{f1_rhs_from_run, DerivativeScheme, RhsRecipe};
use ecg_forward::fronts::{build_vtilde, build_vtilde_rate};
use ecg_forward::io::{
    load_run, ms0d_to_csv, psi_to_csv, read_text, save_run, write_output, FieldTable,
};
use ecg_forward::ionic::solve_ms_0d;
use ecg_forward::mesh::{generate_disk_in_disk, write_mesh};
use ecg_forward::pipeline::{parse_grid, simulate, Prepared};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Parser)]
#[command(name = "ecgf", version, about = "Forward ECG: bidomain reference runs and static potential formulations")]
struct Cli {
    /// Run configuration (INI sections, see README)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the ionic-fit sampling and the noise study
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Overwrite existing outputs
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the concentric heart/torso mesh
    MeshGen {
        /// heart radius (overrides [mesh])
        #[arg(long)]
        r_heart: Option<f64>,
        /// torso radius (overrides [mesh])
        #[arg(long)]
        r_torso: Option<f64>,
        /// radial layers in the heart disk
        #[arg(long)]
        rings: Option<usize>,
        /// angular divisions of the outer circle
        #[arg(long)]
        sectors: Option<usize>,
        /// mesh file to write
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-cell Mitchell-Schaeffer trace (t,v,h)
    Ms0d {
        /// time step (defaults to [front] ms0d_dt)
        #[arg(long)]
        dt: Option<f64>,
        /// final time (defaults to [front] ms0d_t_end)
        #[arg(long = "T")]
        t_end: Option<f64>,
        /// CSV with columns t,v,h
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Reference bidomain run written to a run directory
    RunBidomain {
        /// directory for the run's field CSVs and metadata
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Activation times from a voltage field CSV
    Activation {
        /// voltage field CSV (`time,<vertex ids>`), e.g. fields_v.csv of a run
        #[arg(long)]
        v: PathBuf,
        /// voltage level defining activation
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// CSV with columns vertex_id,psi
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Source formulation over the run's time steps
    SolveF1 {
        #[command(flatten)]
        src: RunSource,
        /// recipe such as `recorded`, `sbdf2+f_int` or `analytic+f_int`
        #[arg(long)]
        recipe: RhsRecipe,
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Balance formulation over the run's time steps
    SolveF2 {
        #[command(flatten)]
        src: RunSource,
        /// voltage fed to the balance formulation
        #[arg(long, value_enum, default_value_t = Voltage::Front)]
        voltage: Voltage,
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Substitute v_ref in both formulations and compare with u_ref
    Verify {
        #[command(flatten)]
        src: RunSource,
        /// comma-separated recipes; defaults to the verification set
        #[arg(long, value_delimiter = ',')]
        recipes: Vec<RhsRecipe>,
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Front-duration sweep of both formulations
    SweepEps {
        #[command(flatten)]
        src: RunSource,
        /// `start:stop:step` or a comma-separated list
        #[arg(long, default_value = "0.5:5:0.5")]
        eps: String,
        /// leave out the single-cell (MS0D) front
        #[arg(long)]
        no_ms0d: bool,
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Sensitivity of the balance formulation to perturbed inputs
    NoiseStudy {
        #[command(flatten)]
        src: RunSource,
        /// front duration of the synthetic voltage
        #[arg(long, default_value_t = 2.5)]
        eps: f64,
        /// realisations per case and amplitude
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// evaluation time
        #[arg(long, default_value_t = 35.0)]
        t: f64,
        /// noise amplitudes, relative to the plateau (voltage) or to the front transit time (activation)
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
        amplitudes: Vec<f64>,
        /// subset of VREF_PLUS_W, VEPS_PLUS_W, PSI_FIELD_NOISE, PSI_SCALAR_SHIFT
        #[arg(long, value_delimiter = ',')]
        cases: Vec<String>,
        /// report or field CSV to write
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunSource {
    /// Reuse a saved run instead of simulating from --config
    #[arg(long, conflicts_with = "config")]
    run_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Voltage {
    /// configured front applied to the run's activation map
    Front,
    /// the reference transmembrane voltage itself
    Vref,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(cfg)
}

fn prepare(cli: &Cli, src: &RunSource) -> Result<Prepared> {
    let p = match &src.run_dir {
        Some(dir) => {
            let loaded = load_run(dir)?;
            Prepared::new(loaded.config, loaded.mesh, loaded.run, cli.seed)?
        }
        None => Prepared::from_config(load_config(cli)?, cli.seed)?,
    };
    eprintln!("effective configuration:\n{}", p.config.echo());
    Ok(p)
}

fn fields_csv(p: &Prepared, steps: &[usize], fields: Vec<Vec<f64>>) -> String {
    let times: Vec<f64> = steps.iter().map(|&k| p.run.times[k]).collect();
    let all: Vec<usize> = (0..p.mesh.num_vertices()).collect();
    FieldTable::from_nodal(&times, &fields, &all).to_csv()
}

fn collect_steps(
    steps: &[usize],
    solve: impl Fn(usize) -> std::result::Result<Vec<f64>, String> + Sync,
) -> Result<Vec<Vec<f64>>> {
    let solved: Vec<_> = steps.par_iter().map(|&k| solve(k)).collect();
    steps
        .iter()
        .zip(solved)
        .map(|(k, r)| r.map_err(|e| format!("step {k}: {e}").into()))
        .collect()
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::MeshGen {
            r_heart,
            r_torso,
            rings,
            sectors,
            out,
        } => {
            let cfg = load_config(cli)?;
            let (h, t, r, s) = match cfg.mesh {
                MeshSource::Generated {
                    r_heart,
                    r_torso,
                    n_rings,
                    n_sectors,
                } => (r_heart, r_torso, n_rings, n_sectors),
                MeshSource::File(_) => (18.0, 36.0, 16, 96),
            };
            let mesh = generate_disk_in_disk(
                r_heart.unwrap_or(h),
                r_torso.unwrap_or(t),
                rings.unwrap_or(r),
                sectors.unwrap_or(s),
            )?;
            write_output(out, &write_mesh(&mesh), cli.force)?;
            println!(
                "{} vertices, {} triangles, {} heart vertices",
                mesh.num_vertices(),
                mesh.triangles().len(),
                mesh.heart_vertices().len()
            );
        }
        Command::Ms0d { dt, t_end, out } => {
            // a standalone trace may be shorter than the one a front needs
            let cfg = load_config(cli)?;
            let trace = solve_ms_0d(
                &cfg.ionic,
                &cfg.stimulus.pulse,
                dt.unwrap_or(cfg.front.ms0d_dt),
                t_end.unwrap_or(cfg.front.ms0d_t_end),
            )?;
            write_output(out, &ms0d_to_csv(&trace), cli.force)?;
        }
        Command::RunBidomain { out_dir } => {
            let cfg = load_config(cli)?;
            eprintln!("effective configuration:\n{}", cfg.echo());
            let (mesh, run) = simulate(&cfg)?;
            save_run(out_dir, &mesh, &cfg, &run, cli.force)?;
            println!("{} steps written to {}", run.num_steps(), out_dir.display());
        }
        Command::Activation { v, threshold, out } => {
            let name = v.display().to_string();
            let table = FieldTable::parse(&read_text(v)?, &name)?;
            let n = table.columns.iter().max().map_or(0, |m| m + 1);
            let fields = table.to_nodal(n)?;
            let psi = compute_activation(&table.times, &fields, &table.columns, n, *threshold)?;
            write_output(out, &psi_to_csv(&psi), cli.force)?;
            println!("{} of {} vertices activated", psi.activated().count(), table.columns.len());
        }
        Command::SolveF1 { src, recipe, out } => {
            let p = prepare(cli, src)?;
            let ctx = p.context();
            let last = p.run.num_steps() - 1;
            let csv = if recipe.derivative == DerivativeScheme::Analytic {
                let shape = p.config.front_shape()?;
                let steps: Vec<usize> = (1..=last).collect();
                let fields = collect_steps(&steps, |k| {
                    let t = p.run.times[k];
                    let vt = build_vtilde(&shape, &p.psi, t);
                    let rate = build_vtilde_rate(&shape, &p.psi, t);
                    let rhs = front_f1_rhs(&ctx, *recipe, &vt, &rate, k).map_err(|e| e.to_string())?;
                    p.solver.solve_f1(&rhs, Some(*recipe)).map(|s| s.u).map_err(|e| e.to_string())
                })?;
                fields_csv(&p, &steps, fields)
            } else {
                let steps: Vec<usize> = if *recipe == RhsRecipe::RECORDED {
                    (1..=last).collect()
                } else {
                    (2..last).collect()
                };
                let fields = collect_steps(&steps, |k| {
                    let rhs = f1_rhs_from_run(*recipe, &p.run, k, p.solver.heart(), &p.config.ionic, Some(&p.fit))
                        .map_err(|e| e.to_string())?;
                    p.solver.solve_f1(&rhs, Some(*recipe)).map(|s| s.u).map_err(|e| e.to_string())
                })?;
                fields_csv(&p, &steps, fields)
            };
            write_output(out, &csv, cli.force)?;
        }
        Command::SolveF2 { src, voltage, out } => {
            let p = prepare(cli, src)?;
            let shape = p.config.front_shape()?;
            let steps: Vec<usize> = (1..p.run.num_steps()).collect();
            let fields = collect_steps(&steps, |k| {
                let vt = match voltage {
                    Voltage::Front => build_vtilde(&shape, &p.psi, p.run.times[k]),
                    Voltage::Vref => p.run.v[k].clone(),
                };
                p.solver.solve_f2(&vt).map(|s| s.u).map_err(|e| e.to_string())
            })?;
            write_output(out, &fields_csv(&p, &steps, fields), cli.force)?;
        }
        Command::Verify { src, recipes, out } => {
            let p = prepare(cli, src)?;
            let recipes = if recipes.is_empty() {
                RhsRecipe::verification_set()
            } else {
                recipes.clone()
            };
            let report = verification_study(&p.context(), &recipes);
            write_output(out, &report.to_csv(), cli.force)?;
            for r in report.select(|r| r.metric == "rel_l2_torso_max") {
                let name = if r.recipe.is_empty() { &r.formulation } else { &r.recipe };
                println!("{name:>24}  max rel L2(torso) {:?}", r.value);
            }
        }
        Command::SweepEps {
            src,
            eps,
            no_ms0d,
            out,
        } => {
            let grid = parse_grid(eps)?;
            let p = prepare(cli, src)?;
            let fronts = p.sweep_fronts(&grid, !no_ms0d)?;
            let res = epsilon_sweep(&p.context(), &p.psi, &fronts)?;
            write_output(out, &res.report.to_csv(), cli.force)?;
            for f in &res.fronts {
                println!(
                    "{:>9} eps={:<4} F1 L1 {:?}  F2 L1 {:?}",
                    f.label,
                    f.eps.map_or_else(|| "-".into(), |e| e.to_string()),
                    f.f1_l1_spacetime,
                    f.f2_l1_spacetime
                );
            }
            println!("eps0 = {:?}", res.eps0);
        }
        Command::NoiseStudy {
            src,
            eps,
            n,
            t,
            amplitudes,
            cases,
            out,
        } => {
            let cases = if cases.is_empty() {
                NoiseCase::ALL.to_vec()
            } else {
                cases
                    .iter()
                    .map(|c| NoiseCase::parse(c).ok_or_else(|| format!("unknown noise case {c:?}")))
                    .collect::<std::result::Result<_, _>>()?
            };
            let p = prepare(cli, src)?;
            let params = NoiseStudyParams {
                eps: *eps,
                cases,
                amplitudes: amplitudes.clone(),
                n_realisations: *n,
                base_seed: cli.seed,
                t_eval: *t,
            };
            let res = noise_study(&p.context(), &p.mesh, &p.psi, &p.config.stimulus, &params)?;
            write_output(out, &res.report.to_csv(), cli.force)?;
            for s in &res.summaries {
                println!(
                    "{:>16} amp {:<5} median {:.4e} (q1 {:.4e}, q3 {:.4e}, failed {})",
                    s.case.name(),
                    s.amplitude,
                    s.median,
                    s.q1,
                    s.q3,
                    s.failed
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(e.into()),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ecgf: error: {e}");
            ExitCode::FAILURE
        }
    }
}
