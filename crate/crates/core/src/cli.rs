//! Command-line front end: flag/config merging, experiment drivers and output files.
//!
//! Every CSV starts with `#` comment lines carrying the command, the SHA-256 of the
//! resolved configuration, the seed and the configuration itself as JSON. Numeric
//! columns depend only on the configuration, so re-runs are byte-identical unless
//! `--wall-time` adds the timing column.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::{build_cost_matrices, load_hamiltonian, CostMatrices, SecondQuantizedHamiltonian};
use crate::error::{Error, Result};
use crate::hinf::{self, DisturbanceModel, GammaChoice, SweepConfig};
use crate::linalg::{c, CMat};
use crate::optimizers::{self, GradientOptions, OptimizerTrace, SpsaSchedule};
use crate::qsys::{self, BasisKind, ParamSystem, QuantumPlant, SystemDims};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "qsdevar", version, about = "Steady-state ground-state synthesis with linear quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a plant for the cost Hamiltonian and write its trace and matrices.
    Solve(Options),
    /// Open- versus closed-loop energy over a disturbance grid.
    Sweep(Options),
    /// QAOA depth sweep on the Jordan–Wigner mapped Hamiltonian.
    Qaoa(Options),
    /// Wick, Fock and finite-difference consistency checks.
    OracleCheck(Options),
    /// Synthesize H∞ controllers for a plant and report residuals and norms.
    Hinf(Options),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Solve(_) => "solve",
            Self::Sweep(_) => "sweep",
            Self::Qaoa(_) => "qaoa",
            Self::OracleCheck(_) => "oracle-check",
            Self::Hinf(_) => "hinf",
        }
    }

    pub fn options(&self) -> &Options {
        match self {
            Self::Solve(o) | Self::Sweep(o) | Self::Qaoa(o) | Self::OracleCheck(o) | Self::Hinf(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grad,
    Spsa,
}

/// Flags shared by every subcommand. A TOML file given with `--config` may set any
/// of them under the same snake_case name; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// TOML file with default values for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Hamiltonian TOML file, or `h2_truncated` for the bundled model.
    #[arg(long)]
    pub hamiltonian: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// `n,m,d`: modes, input channels, basis size.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random starts for gradient descent.
    #[arg(long)]
    pub starts: Option<usize>,
    /// `standard` or `active` generator basis.
    #[arg(long)]
    pub basis: Option<String>,
    /// Basis scale `λ` (`Y·λ`, `B·√λ`).
    #[arg(long)]
    pub basis_scale: Option<f64>,
    /// Fixed attenuation level; omitted means `gamma_margin × γ*` per α.
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub gamma_margin: Option<f64>,
    /// `LO:HI:STEPS` grid or a single value.
    #[arg(long)]
    pub alpha: Option<String>,
    /// `vacuum` or `classical` disturbance statistics.
    #[arg(long)]
    pub disturbance: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub fully_quantum: bool,
    /// Plant JSON written by `solve`; omitted means a fresh gradient solve.
    #[arg(long)]
    pub plant: Option<PathBuf>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Random plants per oracle suite.
    #[arg(long)]
    pub oracle_plants: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Physical-realizability residual bound on output plants.
    #[arg(long)]
    pub tol_pr: Option<f64>,
    /// Append wall-clock milliseconds to trace files (breaks byte-identical re-runs).
    #[arg(long)]
    #[serde(default)]
    pub wall_time: bool,
}

impl Options {
    fn merged_with(self, file: Options) -> Options {
        Options {
            config: self.config,
            hamiltonian: self.hamiltonian.or(file.hamiltonian),
            method: self.method.or(file.method),
            dims: self.dims.or(file.dims),
            iters: self.iters.or(file.iters),
            seed: self.seed.or(file.seed),
            starts: self.starts.or(file.starts),
            basis: self.basis.or(file.basis),
            basis_scale: self.basis_scale.or(file.basis_scale),
            g: self.g.or(file.g),
            gamma_margin: self.gamma_margin.or(file.gamma_margin),
            alpha: self.alpha.or(file.alpha),
            disturbance: self.disturbance.or(file.disturbance),
            fully_quantum: self.fully_quantum || file.fully_quantum,
            plant: self.plant.or(file.plant),
            max_depth: self.max_depth.or(file.max_depth),
            restarts: self.restarts.or(file.restarts),
            oracle_plants: self.oracle_plants.or(file.oracle_plants),
            out: self.out.or(file.out),
            tol_pr: self.tol_pr.or(file.tol_pr),
            wall_time: self.wall_time || file.wall_time,
        }
    }
}

/// Fully resolved configuration, validated before any computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub hamiltonian: String,
    pub method: Method,
    pub n_modes: usize,
    pub n_inputs: usize,
    pub n_params: usize,
    pub iters: usize,
    pub seed: u64,
    pub starts: usize,
    pub basis: BasisKind,
    pub basis_scale: f64,
    pub g: Option<f64>,
    pub gamma_margin: f64,
    pub alphas: Vec<f64>,
    pub disturbance: DisturbanceModel,
    pub fully_quantum: bool,
    pub plant: Option<String>,
    pub max_depth: usize,
    pub restarts: usize,
    pub oracle_plants: usize,
    pub out: String,
    pub tol_pr: f64,
    pub wall_time: bool,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Configuration(msg.into())
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|_| config_error(format!("--dims expects n,m,d, got {s:?}"))))
        .collect::<Result<_>>()?;
    match nums[..] {
        [n, m, d] => Ok((n, m, d)),
        _ => Err(config_error(format!("--dims expects three integers, got {s:?}"))),
    }
}

/// `LO:HI:STEPS` (inclusive, evenly spaced) or a single value.
pub fn parse_alpha_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || config_error(format!("--alpha expects LO:HI:STEPS or a number, got {s:?}"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts[..] {
        [one] => Ok(vec![one.parse().map_err(|_| bad())?]),
        [lo, hi, steps] => {
            let lo: f64 = lo.parse().map_err(|_| bad())?;
            let hi: f64 = hi.parse().map_err(|_| bad())?;
            let steps: usize = steps.parse().map_err(|_| bad())?;
            if steps == 0 || hi < lo {
                return Err(bad());
            }
            if steps == 1 {
                return Ok(vec![lo]);
            }
            Ok((0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect())
        }
        _ => Err(bad()),
    }
}

fn parse_basis(s: &str) -> Result<BasisKind> {
    match s {
        "standard" => Ok(BasisKind::Standard),
        "active" => Ok(BasisKind::Active),
        _ => Err(config_error(format!("unknown basis {s:?} (standard|active)"))),
    }
}

fn parse_disturbance(s: &str) -> Result<DisturbanceModel> {
    match s {
        "vacuum" => Ok(DisturbanceModel::Vacuum),
        "classical" => Ok(DisturbanceModel::Classical),
        _ => Err(config_error(format!("unknown disturbance model {s:?} (vacuum|classical)"))),
    }
}

fn read_config_file(path: &Path) -> Result<Options> {
    let text = crate::error::read_input(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })
}

impl RunConfig {
    pub fn resolve(command: &Command) -> Result<(Self, SecondQuantizedHamiltonian)> {
        let flags = command.options().clone();
        let opts = match &flags.config {
            Some(path) => {
                let file = read_config_file(path)?;
                flags.merged_with(file)
            }
            None => flags,
        };
        let hamiltonian = opts.hamiltonian.clone().unwrap_or_else(|| "h2_truncated".into());
        let ham = load_hamiltonian(&hamiltonian)?;
        let method = opts.method.unwrap_or(Method::Grad);
        let basis = match &opts.basis {
            Some(b) => parse_basis(b)?,
            None if method == Method::Spsa => BasisKind::Active,
            None => BasisKind::Standard,
        };
        let (n, m, d) = match &opts.dims {
            Some(s) => parse_dims(s)?,
            None => {
                // SPSA keeps the standard generator count, trading squeezers for gain channels
                let n = ham.n_modes;
                let d = match method {
                    Method::Grad => basis.capacity(n, n),
                    Method::Spsa => qsys::basis_capacity(n, n),
                };
                (n, n, d)
            }
        };
        let alphas = match (&opts.alpha, command) {
            (Some(s), _) => parse_alpha_grid(s)?,
            (None, Command::Hinf(_)) => vec![1.0],
            (None, _) => parse_alpha_grid("1:10:10")?,
        };
        let cfg = RunConfig {
            command: command.name().into(),
            hamiltonian,
            method,
            n_modes: n,
            n_inputs: m,
            n_params: d,
            iters: opts.iters.unwrap_or(match method {
                Method::Grad => GradientOptions::default().max_iters,
                Method::Spsa => 5000,
            }),
            seed: opts.seed.unwrap_or(0),
            starts: opts.starts.unwrap_or(5),
            basis,
            basis_scale: opts.basis_scale.unwrap_or(match method {
                Method::Grad => 1.0,
                Method::Spsa => 50.0,
            }),
            g: opts.g,
            gamma_margin: opts.gamma_margin.unwrap_or(1.1),
            alphas,
            disturbance: opts.disturbance.as_deref().map(parse_disturbance).transpose()?.unwrap_or_default(),
            fully_quantum: opts.fully_quantum,
            plant: opts.plant.as_ref().map(|p| p.display().to_string()),
            max_depth: opts.max_depth.unwrap_or(6),
            restarts: opts.restarts.unwrap_or(10),
            oracle_plants: opts.oracle_plants.unwrap_or(20),
            out: opts.out.as_ref().map_or_else(|| ".".into(), |p| p.display().to_string()),
            tol_pr: opts.tol_pr.unwrap_or(qsys::Tolerances::default().pr),
            wall_time: opts.wall_time,
        };
        cfg.validate(&ham)?;
        Ok((cfg, ham))
    }

    pub fn validate(&self, ham: &SecondQuantizedHamiltonian) -> Result<()> {
        SystemDims::new(self.n_modes, self.n_inputs, self.n_params)?;
        ham.check_modes(self.n_modes)?;
        let cap = self.basis.capacity(self.n_modes, self.n_inputs);
        if self.n_params > cap {
            return Err(config_error(format!("d = {} exceeds the {cap} generators of the {:?} basis", self.n_params, self.basis)));
        }
        let positive = [("iters", self.iters), ("starts", self.starts), ("max_depth", self.max_depth), ("restarts", self.restarts)];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(config_error(format!("{name} must be at least 1")));
        }
        if !(self.basis_scale > 0.0 && self.basis_scale.is_finite()) {
            return Err(config_error("basis_scale must be positive"));
        }
        if !(self.tol_pr > 0.0) {
            return Err(config_error("tol_pr must be positive"));
        }
        self.sweep_config().validate()
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            alphas: self.alphas.clone(),
            gamma: match self.g {
                Some(g) => GammaChoice::Fixed(g),
                None => GammaChoice::Auto { margin: self.gamma_margin },
            },
            disturbance: self.disturbance,
            fully_quantum: self.fully_quantum,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Comment lines opening every output file.
    pub fn header(&self) -> String {
        format!(
            "# qsdevar {}\n# config_sha256={}\n# seed={}\n# config={}\n",
            self.command,
            self.hash(),
            self.seed,
            self.to_json()
        )
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = PathBuf::from(&self.out);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out_dir()?.join(name);
        fs::write(&path, format!("{}{}", self.header(), body))?;
        Ok(path)
    }
}

/// Plant file schema: row-major matrices of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_cmat(m: &CMat) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| [m[(i, j)].re, m[(i, j)].im]).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_cmat(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension(format!("{} entries for a {}×{} matrix", self.data.len(), self.rows, self.cols)));
        }
        Ok(CMat::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.data[i * self.cols + j];
            c(re, im)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantJson {
    pub schema: String,
    pub config_sha256: String,
    pub n_modes: usize,
    pub n_inputs: usize,
    pub cost: f64,
    pub pr_residual: f64,
    pub a: MatrixJson,
    pub b: MatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

pub const PLANT_SCHEMA: &str = "qsdevar-plant/1";

impl PlantJson {
    pub fn new(p: &QuantumPlant, cost: f64, theta: Option<Vec<f64>>, cfg: &RunConfig) -> Self {
        Self {
            schema: PLANT_SCHEMA.into(),
            config_sha256: cfg.hash(),
            n_modes: p.n_modes(),
            n_inputs: p.n_inputs(),
            cost,
            pr_residual: qsys::pr_residual(p),
            a: MatrixJson::from_cmat(&p.a),
            b: MatrixJson::from_cmat(&p.b),
            theta,
        }
    }

    pub fn plant(&self) -> Result<QuantumPlant> {
        if self.schema != PLANT_SCHEMA {
            return Err(config_error(format!("unsupported plant schema {:?}", self.schema)));
        }
        QuantumPlant::new(self.a.to_cmat()?, self.b.to_cmat()?)
    }
}

pub fn read_plant(path: &Path) -> Result<QuantumPlant> {
    let text = crate::error::read_input(path)?;
    let pj: PlantJson =
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
    pj.plant()
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Configuration(_) | Error::Parse { .. } | Error::Validation(_) | Error::Dimension(_) | Error::Domain(_) => EXIT_CONFIG,
        Error::InfeasibleGamma { .. } | Error::SynthesisRejected(_) | Error::Coupling(_) => EXIT_INFEASIBLE,
        _ => EXIT_FAILURE,
    }
}

/// Reference energies for the bundled H₂ model (Hartree).
pub const FCI_ENERGY: f64 = -1.1373;
pub const TRUNCATED_MINIMUM: f64 = -1.1168;

#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    pub start: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: &'static str,
}

#[derive(Debug, Clone)]
pub struct GradSolve {
    pub best: optimizers::GradientResult,
    pub starts: Vec<StartSummary>,
}

/// Gradient descent from `cfg.starts` seeded random stable plants; keeps the lowest cost.
pub fn solve_grad(cfg: &RunConfig, cm: &CostMatrices) -> Result<GradSolve> {
    let dims = SystemDims::new(cfg.n_modes, cfg.n_inputs, cfg.n_params)?;
    let basis = qsys::basis_for(cfg.basis, &dims)?.scaled(cfg.basis_scale);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opts = GradientOptions { max_iters: cfg.iters, ..Default::default() };
    let mut best: Option<optimizers::GradientResult> = None;
    let mut starts = Vec::with_capacity(cfg.starts);
    for s in 0..cfg.starts {
        let ps = optimizers::random_stable_theta(&mut rng, &basis)?;
        let (y, b) = qsys::param_matrices(&ps)?;
        let res = optimizers::run_gradient_descent(&y, &b, cm, &opts)?;
        starts.push(StartSummary {
            start: s,
            cost: res.cost,
            grad_norm: res.gradient.norm(),
            iterations: res.trace.records.len().saturating_sub(1),
            status: res.trace.status.as_str(),
        });
        if best.as_ref().map_or(true, |b| res.cost < b.cost) {
            best = Some(res);
        }
    }
    Ok(GradSolve { best: best.expect("at least one start"), starts })
}

/// SPSA from the default starting point of the configured basis.
pub fn solve_spsa(cfg: &RunConfig, cm: &CostMatrices) -> Result<(ParamSystem, OptimizerTrace)> {
    let dims = SystemDims::new(cfg.n_modes, cfg.n_inputs, cfg.n_params)?;
    let basis = qsys::basis_for(cfg.basis, &dims)?.scaled(cfg.basis_scale);
    let ps = ParamSystem::new(optimizers::initial_theta(&basis, cfg.basis_scale), basis)?;
    let (theta, trace) = optimizers::run_spsa(&ps, cm, &SpsaSchedule::new(cfg.iters, cfg.seed))?;
    Ok((ps.with_theta(theta)?, trace))
}

fn check_pr(p: &QuantumPlant, tol: f64) -> Result<std::result::Result<(), String>> {
    let r = qsys::pr_residual(p);
    Ok(if r <= tol { Ok(()) } else { Err(format!("PR residual {r:.3e} exceeds {tol:.1e}")) })
}

fn cmd_solve(cfg: &RunConfig, cm: &CostMatrices) -> Result<i32> {
    let (plant, cost, theta, trace) = match cfg.method {
        Method::Grad => {
            let sol = solve_grad(cfg, cm)?;
            let mut body = String::from("start,cost,grad_norm,iterations,status\n");
            for s in &sol.starts {
                body.push_str(&format!("{},{:.17e},{:.17e},{},{}\n", s.start, s.cost, s.grad_norm, s.iterations, s.status));
                println!("start {}: J = {:.6} after {} iterations ({})", s.start, s.cost, s.iterations, s.status);
            }
            cfg.write("solve_starts.csv", &body)?;
            let p = qsys::plant_from_yb(&sol.best.y, &sol.best.b)?;
            (p, sol.best.cost, None, sol.best.trace)
        }
        Method::Spsa => {
            let (ps, trace) = solve_spsa(cfg, cm)?;
            let p = qsys::build_plant(&ps)?;
            let cost = crate::cost::evaluate_cost(&p, cm)?;
            println!("SPSA: {} iterations, {} skipped, status {}", cfg.iters, trace.skipped_iterations, trace.status.as_str());
            (p, cost, Some(ps.theta), trace)
        }
    };
    cfg.write("solve_trace.csv", &trace.to_csv(cfg.wall_time))?;
    let json = serde_json::to_string_pretty(&PlantJson::new(&plant, cost, theta, cfg)).expect("plant serializes");
    fs::write(cfg.out_dir()?.join("plant.json"), json + "\n")?;
    println!("final J = {cost:.6} Ha");
    println!("distance to FCI {FCI_ENERGY}: {:+.6}", cost - FCI_ENERGY);
    println!("distance to truncated-model minimum {TRUNCATED_MINIMUM}: {:+.6}", cost - TRUNCATED_MINIMUM);
    if let Err(msg) = check_pr(&plant, cfg.tol_pr)? {
        eprintln!("tolerance breach: {msg}");
        return Ok(EXIT_TOLERANCE);
    }
    Ok(EXIT_OK)
}

fn plant_for(cfg: &RunConfig, cm: &CostMatrices) -> Result<QuantumPlant> {
    match &cfg.plant {
        Some(path) => read_plant(Path::new(path)),
        None => {
            let sol = solve_grad(cfg, cm)?;
            println!("plant: gradient solve, J = {:.6}", sol.best.cost);
            qsys::plant_from_yb(&sol.best.y, &sol.best.b)
        }
    }
}

/// Relative span `(max − min)/|min|`.
pub fn relative_span(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / min.abs()
}

fn cmd_sweep(cfg: &RunConfig, cm: &CostMatrices) -> Result<i32> {
    let plant = plant_for(cfg, cm)?;
    let rows = hinf::disturbance_sweep(&plant, cm, &cfg.sweep_config())?;
    let mut body = format!("{}\n", hinf::SWEEP_CSV_HEADER);
    for r in &rows {
        body.push_str(&r.to_csv());
        body.push('\n');
        if let Some(f) = &r.failure {
            println!("α = {}: {f}", r.alpha);
        }
    }
    let path = cfg.write("sweep.csv", &body)?;
    let open: Vec<f64> = rows.iter().filter_map(|r| r.cost_open).collect();
    let closed: Vec<f64> = rows.iter().filter_map(|r| r.cost_closed).collect();
    if !open.is_empty() {
        println!("open loop: {:.6} → {:.6}", open[0], open[open.len() - 1]);
    }
    if !closed.is_empty() {
        println!("closed loop: {:.6} → {:.6}, relative span {:.4}", closed[0], closed[closed.len() - 1], relative_span(&closed));
    }
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_qaoa(cfg: &RunConfig, ham: &SecondQuantizedHamiltonian) -> Result<i32> {
    let h = crate::qaoa::jordan_wigner_diagonal(ham)?;
    let qcfg = crate::qaoa::QaoaConfig { restarts: cfg.restarts, seed: cfg.seed, ..Default::default() };
    let results = crate::qaoa::depth_sweep(&h, cfg.max_depth, &qcfg)?;
    let (k, exact) = crate::qaoa::exact_min(&h);
    for r in &results {
        println!("p = {}: best {:.8} ({} evaluations)", r.p, r.best_energy, r.evals);
    }
    println!("exact minimum {exact:.8} at |{}⟩", crate::qaoa::bitstring(k, h.n_qubits));
    let path = cfg.write("qaoa.csv", &crate::qaoa::sweep_csv(&h, &results))?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_hinf(cfg: &RunConfig, cm: &CostMatrices) -> Result<i32> {
    let plant = plant_for(cfg, cm)?;
    let mut body = String::from("alpha,gamma,residual_x,residual_y,hinf_norm,closed_loop_abscissa,controller_pr_residual\n");
    let mut infeasible = None;
    for &alpha in &cfg.alphas {
        let base = hinf::AugmentedPlant::disturbance_setup(&plant, alpha, 1.0, cfg.disturbance);
        let attempt = (|| -> Result<(f64, hinf::Synthesis)> {
            let g = match cfg.g {
                Some(g) => g,
                None => cfg.gamma_margin * hinf::minimal_gamma(&base, 1e-6, 1e6, 1e-6)?,
            };
            Ok((g, hinf::synthesize(&base.with_gamma(g), cfg.fully_quantum)?))
        })();
        match attempt {
            Ok((g, s)) => {
                let abscissa = crate::linalg::spectral_abscissa(&s.closed_loop.a)?;
                let pr = s.controller.pr_residual()?;
                println!(
                    "α = {alpha}: g = {g:.6}, residuals {:.2e}/{:.2e}, ‖T‖∞ = {:.6}, max Re λ = {abscissa:.3e}",
                    s.pair.residual_x, s.pair.residual_y, s.norm
                );
                body.push_str(&format!(
                    "{alpha:.17e},{g:.17e},{:.17e},{:.17e},{:.17e},{abscissa:.17e},{pr:.17e}\n",
                    s.pair.residual_x, s.pair.residual_y, s.norm
                ));
            }
            Err(e) => {
                println!("α = {alpha}: {e}");
                body.push_str(&format!("{alpha:.17e},nan,nan,nan,nan,nan,nan\n"));
                infeasible.get_or_insert(e);
            }
        }
    }
    cfg.write("hinf.csv", &body)?;
    Ok(match infeasible {
        Some(e) => exit_code(&e).max(EXIT_INFEASIBLE),
        None => EXIT_OK,
    })
}

/// One line of an oracle suite.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub suite: &'static str,
    pub index: usize,
    pub n_modes: usize,
    pub error: f64,
    pub tolerance: f64,
}

impl OracleRecord {
    pub fn pass(&self) -> bool {
        self.error <= self.tolerance
    }
}

/// Wick, Fock and finite-difference gradient agreement on `count` random plants per suite.
pub fn oracle_suites(seed: u64, count: usize, ham: &SecondQuantizedHamiltonian) -> Result<Vec<OracleRecord>> {
    use crate::moments::{self, testing::random_stable_plant};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..count {
        let n = 1 + i % 2;
        let p = random_stable_plant(&mut rng, n, n, 0.3);
        let mp = moments::steady_moments(&p)?;
        let wick = moments::wick_oracle(&mp.s1)?;
        out.push(OracleRecord {
            suite: "wick",
            index: i,
            n_modes: n,
            error: (&mp.s2 - wick).norm(),
            tolerance: 1e-8 * (1.0 + mp.s2.norm()),
        });
    }
    let one_mode = SecondQuantizedHamiltonian::new(ham.c, vec![ham.h[0]], vec![ham.g_at(0, 0)])?;
    for i in 0..count {
        let n = 1 + i % 2;
        let p = random_stable_plant(&mut rng, n, n, crate::fock::ORACLE_SCALE);
        let h = if n == ham.n_modes { ham } else { &one_mode };
        let cmp = crate::fock::compare_plant(&p, h, if n == 1 { 30 } else { 12 })?;
        out.push(OracleRecord { suite: "fock", index: i, n_modes: n, error: cmp.s1_max_diff.max(cmp.energy_diff()), tolerance: 1e-4 });
    }
    let cm = build_cost_matrices(ham)?;
    for i in 0..count {
        let ps = moments::testing::random_stable_params(&mut rng, ham.n_modes, ham.n_modes, 0.6);
        let (y, b) = qsys::param_matrices(&ps)?;
        out.push(OracleRecord {
            suite: "gradient",
            index: i,
            n_modes: ham.n_modes,
            error: crate::gradients::relative_fd_error(&y, &b, &cm)?,
            tolerance: 1e-5,
        });
    }
    Ok(out)
}

fn cmd_oracle_check(cfg: &RunConfig, ham: &SecondQuantizedHamiltonian) -> Result<i32> {
    let records = oracle_suites(cfg.seed, cfg.oracle_plants, ham)?;
    let mut body = String::from("suite,index,n_modes,error,tolerance,pass\n");
    for r in &records {
        body.push_str(&format!("{},{},{},{:.17e},{:.17e},{}\n", r.suite, r.index, r.n_modes, r.error, r.tolerance, r.pass()));
    }
    cfg.write("oracle.csv", &body)?;
    let mut failed = false;
    for suite in ["wick", "fock", "gradient"] {
        let of: Vec<&OracleRecord> = records.iter().filter(|r| r.suite == suite).collect();
        let worst = of.iter().map(|r| r.error / r.tolerance).fold(0.0, f64::max);
        let pass = of.iter().all(|r| r.pass());
        failed |= !pass;
        println!("{suite:>8}: {} plants, worst error/tolerance {worst:.3e} {}", of.len(), if pass { "PASS" } else { "FAIL" });
    }
    Ok(if failed { EXIT_TOLERANCE } else { EXIT_OK })
}

pub fn run_command(command: &Command) -> Result<i32> {
    let (cfg, ham) = RunConfig::resolve(command)?;
    let cm = build_cost_matrices(&ham)?;
    match command {
        Command::Solve(_) => cmd_solve(&cfg, &cm),
        Command::Sweep(_) => cmd_sweep(&cfg, &cm),
        Command::Qaoa(_) => cmd_qaoa(&cfg, &ham),
        Command::OracleCheck(_) => cmd_oracle_check(&cfg, &ham),
        Command::Hinf(_) => cmd_hinf(&cfg, &cm),
    }
}

/// Parses `args` (program name first) and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run_command(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
