use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use curvedfem::analysis::{run_case, run_convergence, vertex_values, ConvergenceRow, ConvergenceTable, RunOptions};
use curvedfem::assembly::AssemblyMode;
use curvedfem::checks::run_checks;
use curvedfem::io::{write_mesh_text, write_vtk};
use curvedfem::mesh::classify_mesh;

mod config;

use config::{RawConfig, RunConfig};

#[derive(Parser)]
#[command(name = "curvedfem", version, about = "Finite elements for Dirichlet problems on curved 3D domains")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the meshes of a case and write VTK and text dumps.
    Mesh(Common),
    /// Solve one case on one mesh and report the errors.
    Solve(Common),
    /// Solve on a sequence of meshes and tabulate convergence orders.
    Convergence(Common),
    /// Run the built-in property suite.
    Check,
}

#[derive(Args, Default)]
struct Common {
    /// key = value file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// quadratic-ellipsoid, tp1, tp2 or tp3.
    #[arg(long)]
    case: Option<String>,
    /// new, polyhedral or nonconforming.
    #[arg(long)]
    method: Option<String>,
    /// Polynomial degree (2 or 3).
    #[arg(long)]
    k: Option<usize>,
    /// Mesh parameters, J for octants and I for the torus, e.g. 4,8,16.
    #[arg(long, value_delimiter = ',')]
    refine: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Assemble on one thread; CSV output is then byte-reproducible.
    #[arg(long)]
    sequential: bool,
    /// Also write VTK files of the solution.
    #[arg(long)]
    vtk: bool,
    /// Relative residual required from the linear solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Write the system matrix in MatrixMarket format.
    #[arg(long)]
    dump_matrix: bool,
    /// direct or gmres.
    #[arg(long)]
    solver: Option<String>,
}

impl Common {
    fn resolve(self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        let flags = RawConfig {
            case: self.case,
            method: self.method,
            k: self.k,
            refine: self.refine,
            out: self.out,
            sequential: self.sequential.then_some(true),
            vtk: self.vtk.then_some(true),
            tol: self.tol,
            dump_matrix: self.dump_matrix.then_some(true),
            solver: self.solver,
        };
        file.merge(flags).validate()
    }
}

fn options(cfg: &RunConfig) -> RunOptions {
    RunOptions {
        mode: if cfg.sequential {
            AssemblyMode::Sequential
        } else {
            AssemblyMode::Parallel
        },
        tol: cfg.tol,
        solver: cfg.solver,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_mesh(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    for &p in &cfg.refine {
        let mesh = cfg.case.mesh(p)?;
        let c = classify_mesh(&mesh)?;
        println!(
            "{} param={}: {} tets, {} vertices, {} faces on the curved boundary, S_h={}, R_h={}, h={:.4}",
            cfg.case.name,
            p,
            mesh.n_tets(),
            mesh.vertices.len(),
            c.gamma_faces.len(),
            c.s_h.len(),
            c.r_h.len(),
            mesh.h
        );
        if !c.violations.is_empty() {
            println!("  warning: {} elements touch the boundary in more than one face or edge", c.violations.len());
        }
        let stem = cfg.out.join(format!("{}_{}_mesh", cfg.case.name, p));
        write_vtk(&mesh, cfg.case.name, &[], create(&stem.with_extension("vtk"))?)?;
        write_mesh_text(&mesh, create(&stem.with_extension("txt"))?)?;
    }
    Ok(())
}

fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let [param] = cfg.refine[..] else {
        bail!("solve takes a single refinement value, got {:?}", cfg.refine);
    };
    fs::create_dir_all(&cfg.out)?;
    let opts = options(cfg);
    let run = run_case(&cfg.case, cfg.method, cfg.k, param, &opts)?;
    let r = &run.report;
    println!(
        "{} method={} k={} param={} dofs={} residual={:.2e}",
        cfg.case.name,
        cfg.method.name(),
        cfg.k,
        param,
        r.n_dofs,
        run.solve.relative_residual
    );
    println!("  broken H1 error {:.6e}", r.err_h1_broken);
    println!("  L2 error        {:.6e}", r.err_l2);
    println!("  nodal max error {:.6e}", r.err_nodal_max);

    let stem = cfg.out.join(format!("{}_{}_k{}_{}", cfg.case.name, cfg.method.name(), cfg.k, param));
    let table = ConvergenceTable {
        case: cfg.case.name.to_string(),
        method: cfg.method,
        k: cfg.k,
        rows: vec![ConvergenceRow {
            param,
            report: run.report,
            solve_seconds: run.solve_seconds,
        }],
        record_timing: !cfg.sequential,
    };
    fs::write(stem.with_extension("csv"), table.to_csv())?;
    if cfg.vtk {
        let uh = vertex_values(&run.mesh, &run.solution);
        let u: Vec<f64> = run.mesh.vertices.iter().map(|p| cfg.case.u(p)).collect();
        let err: Vec<f64> = uh.iter().zip(&u).map(|(a, b)| a - b).collect();
        write_vtk(
            &run.mesh,
            cfg.case.name,
            &[("u_h", &uh), ("u", &u), ("error", &err)],
            create(&stem.with_extension("vtk"))?,
        )?;
    }
    if cfg.dump_matrix {
        run.system.matrix.write_matrix_market(create(&stem.with_extension("mtx"))?)?;
    }
    Ok(())
}

fn cmd_convergence(cfg: &RunConfig) -> Result<()> {
    if cfg.refine.len() < 2 {
        bail!("convergence needs at least two refinement values");
    }
    if cfg.vtk || cfg.dump_matrix {
        log::warn!("--vtk and --dump-matrix apply to 'solve' only");
    }
    fs::create_dir_all(&cfg.out)?;
    let table = run_convergence(&cfg.case, cfg.method, cfg.k, &cfg.refine, &options(cfg))?;
    let text = table.to_text();
    print!("{text}");
    let stem = cfg.out.join(format!("{}_{}_k{}", cfg.case.name, cfg.method.name(), cfg.k));
    fs::write(stem.with_extension("csv"), table.to_csv())?;
    fs::write(stem.with_extension("txt"), text)?;
    Ok(())
}

fn cmd_check() -> Result<bool> {
    let mut ok = true;
    for c in run_checks() {
        ok &= c.passed;
        println!(
            "{} {:<45} {:.3e} (tol {:.0e}, {:.2}s)",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.seconds
        );
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Mesh(c) => cmd_mesh(&c.resolve()?).map(|_| true),
        Command::Solve(c) => cmd_solve(&c.resolve()?).map(|_| true),
        Command::Convergence(c) => cmd_convergence(&c.resolve()?).map(|_| true),
        Command::Check => cmd_check(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
