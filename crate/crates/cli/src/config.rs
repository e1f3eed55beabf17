//! Run configuration: a `key = value` file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use curvedfem::analysis::{ExactCase, Method};
use curvedfem::solver::{SolverMethod, DEFAULT_TOL};

pub const KEYS: [&str; 10] = [
    "case",
    "method",
    "k",
    "refine",
    "out",
    "sequential",
    "vtk",
    "tol",
    "dump_matrix",
    "solver",
];

/// Settings before validation; every field may come from the file or a flag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub case: Option<String>,
    pub method: Option<String>,
    pub k: Option<usize>,
    pub refine: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub sequential: Option<bool>,
    pub vtk: Option<bool>,
    pub tol: Option<f64>,
    pub dump_matrix: Option<bool>,
    pub solver: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: ExactCase,
    pub method: Method,
    pub k: usize,
    pub refine: Vec<usize>,
    pub out: PathBuf,
    pub sequential: bool,
    pub vtk: bool,
    pub tol: f64,
    pub dump_matrix: bool,
    pub solver: SolverMethod,
}

pub fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad refinement value '{p}'")))
        .collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("{key}: expected a boolean, got '{s}'"),
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RawConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("line {}: key '{key}'", n + 1);
            match key {
                "case" => c.case = Some(value.to_string()),
                "method" => c.method = Some(value.to_string()),
                "k" => c.k = Some(value.parse().with_context(ctx)?),
                "refine" => c.refine = Some(parse_list(value).with_context(ctx)?),
                "out" => c.out = Some(PathBuf::from(value)),
                "sequential" => c.sequential = Some(parse_bool(key, value)?),
                "vtk" => c.vtk = Some(parse_bool(key, value)?),
                "tol" => c.tol = Some(value.parse().with_context(ctx)?),
                "dump_matrix" => c.dump_matrix = Some(parse_bool(key, value)?),
                "solver" => c.solver = Some(value.to_string()),
                _ => bail!("line {}: unknown key '{key}' (known: {})", n + 1, KEYS.join(", ")),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: RawConfig) -> Self {
        RawConfig {
            case: other.case.or(self.case),
            method: other.method.or(self.method),
            k: other.k.or(self.k),
            refine: other.refine.or(self.refine),
            out: other.out.or(self.out),
            sequential: other.sequential.or(self.sequential),
            vtk: other.vtk.or(self.vtk),
            tol: other.tol.or(self.tol),
            dump_matrix: other.dump_matrix.or(self.dump_matrix),
            solver: other.solver.or(self.solver),
        }
    }

    pub fn validate(self) -> Result<RunConfig> {
        let case = ExactCase::by_name(self.case.as_deref().context("no case given (--case)")?)?;
        let method = Method::parse(self.method.as_deref().unwrap_or("new"))?;
        let k = self.k.unwrap_or(2);
        method.validate_degree(k)?;
        let refine = self.refine.context("no refinement values given (--refine)")?;
        if refine.is_empty() {
            bail!("empty refinement list");
        }
        for &p in &refine {
            case.validate_param(p)?;
        }
        let tol = self.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol <= 1e-6) {
            bail!("tolerance {tol} outside (0, 1e-6]");
        }
        let solver = match self.solver.as_deref().unwrap_or("direct") {
            "direct" | "lu" => SolverMethod::Direct,
            "gmres" => SolverMethod::Gmres {
                restart: 50,
                max_iter: 5000,
            },
            other => bail!("unknown solver '{other}' (direct, gmres)"),
        };
        Ok(RunConfig {
            case,
            method,
            k,
            refine,
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            sequential: self.sequential.unwrap_or(false),
            vtk: self.vtk.unwrap_or(false),
            tol,
            dump_matrix: self.dump_matrix.unwrap_or(false),
            solver,
        })
    }
}
