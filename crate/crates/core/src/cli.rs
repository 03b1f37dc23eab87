//! Batch driver: single solves, single optimizations and convergence studies
//! configured from a TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{apply_b, Atom, MeasureControl};
use crate::error::{Error, Result};
use crate::experiments::{self, g, PhiVariant, ReferenceContext};
use crate::fem::{assemble_load, l2_error};
use crate::mesh::{build_uniform_mesh, MAX_LEVEL, MIN_LEVEL};
use crate::pdap::{run_pdap, ControlProblem, PdapConfig, PdapResult};
use crate::quadrature::QuadratureRule;
use crate::subproblem::SubproblemConfig;
use crate::time::TimeGrid;
use crate::wave::{
    stability_gate, stability_norm_check, DataNorms, Discretization, InitialData, SchemeParams, SpaceTimeField,
    StabilityMonitor, StabilityReport, TimeLoad, WaveSolver,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GATE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidControl(_) | Error::NonNested(_) | Error::SizeGuard(_) => EXIT_CONFIG,
        Error::StabilityGate(_) => EXIT_GATE,
        Error::Numerical(_) | Error::Io(_) => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Subcommand)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Forward solve of one scenario; writes the field and the stability report
    Solve,
    /// One optimization run; writes the control summary and the iteration history
    Pdap,
    /// Simultaneous refinement study against a fine reference
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Manufactured problem with jumps at 1/3, 1, 5/3
    Reference,
    /// Control given in the `[control]` section
    Custom,
    /// Control with random atoms drawn from `seed`
    Random,
    /// Analytic standing wave `cos(pi t / sqrt 2) g` (solve only)
    StandingWave,
    /// All data zero
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Discretisation {
    /// Mesh and time level for `solve` / `pdap`
    pub level: u32,
    /// Reference level for the manufactured problem
    pub k_ref: u32,
    /// Study levels for `convergence`
    pub levels: Vec<u32>,
    pub sigma: f64,
    pub eps0: f64,
    pub c2: f64,
}

impl Default for Discretisation {
    fn default() -> Self {
        Self { level: 5, k_ref: 7, levels: vec![3, 4, 5, 6], sigma: 0.25, eps0: 0.1, c2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_bound: Option<f64>,
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub merge_tol: f64,
    pub gamma_min_factor: f64,
    pub gamma_decrease: f64,
    pub subproblem_kkt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let pdap = PdapConfig::default();
        Self {
            gap_tol: None,
            tv_bound: None,
            tol_kkt: pdap.tol_kkt,
            max_iter: pdap.max_iter,
            merge_tol: pdap.merge_tol,
            gamma_min_factor: pdap.subproblem.gamma_min_factor,
            gamma_decrease: pdap.subproblem.gamma_decrease,
            subproblem_kkt: pdap.subproblem.kkt_tol,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    /// `[time, weight]` pairs
    pub atoms: Vec<[f64; 2]>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Command,
    pub scenario: Scenario,
    pub phi: PhiVariant,
    pub seed: u64,
    pub output: PathBuf,
    pub discretization: Discretisation,
    pub tolerances: Tolerances,
    pub control: ControlSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Pdap,
            scenario: Scenario::Reference,
            phi: PhiVariant::Corrected,
            seed: 0,
            output: PathBuf::from("out"),
            discretization: Discretisation::default(),
            tolerances: Tolerances::default(),
            control: ControlSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.discretization;
        let in_range = |k: u32| (MIN_LEVEL..=MAX_LEVEL).contains(&k);
        if !in_range(d.level) || !in_range(d.k_ref) || d.levels.iter().any(|&k| !in_range(k)) {
            return Err(Error::Config(format!("levels must lie in [{MIN_LEVEL}, {MAX_LEVEL}]")));
        }
        if !d.sigma.is_finite() || !(d.eps0 > 0.0 && d.eps0 <= 1.0) || !(d.c2 > 0.0) {
            return Err(Error::Config("sigma must be finite, eps0 in (0, 1], c2 > 0".into()));
        }
        let t = &self.tolerances;
        let positive = [t.tol_kkt, t.merge_tol, t.gamma_min_factor, t.subproblem_kkt];
        if positive.iter().any(|v| !(*v > 0.0)) || t.gap_tol.is_some_and(|v| !(v > 0.0)) || !(t.gamma_decrease > 1.0) {
            return Err(Error::Config("tolerances must be positive and gamma_decrease > 1".into()));
        }
        if t.tv_bound.is_some_and(|v| !(v > 0.0)) {
            return Err(Error::Config("tv_bound must be positive".into()));
        }
        Ok(())
    }

    pub fn scheme(&self) -> SchemeParams {
        let d = &self.discretization;
        SchemeParams { sigma: d.sigma, eps0: d.eps0, c2: d.c2 }
    }

    pub fn pdap(&self) -> PdapConfig {
        let t = &self.tolerances;
        PdapConfig {
            max_iter: t.max_iter,
            gap_tol: t.gap_tol,
            tv_bound: t.tv_bound,
            merge_tol: t.merge_tol,
            tol_kkt: t.tol_kkt,
            subproblem: SubproblemConfig {
                gamma_min_factor: t.gamma_min_factor,
                gamma_decrease: t.gamma_decrease,
                kkt_tol: t.subproblem_kkt,
                ..SubproblemConfig::default()
            },
        }
    }

    /// Control prescribed by the scenario (reference, custom, random or zero).
    pub fn scenario_control(&self) -> Result<MeasureControl> {
        let horizon = experiments::HORIZON;
        match self.scenario {
            Scenario::Reference => Ok(experiments::reference_control()),
            Scenario::Custom => {
                let atoms = self.control.atoms.iter().map(|&[time, weight]| Atom { time, weight }).collect();
                MeasureControl::new(horizon, vec![atoms], vec![self.control.offset])
            }
            Scenario::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let n = rng.gen_range(1..=4);
                let mut atoms: Vec<Atom> = (0..n)
                    .map(|_| Atom { time: rng.gen_range(0.1..1.9), weight: rng.gen_range(-1.0..1.0) })
                    .collect();
                atoms.sort_by(|a, b| a.time.total_cmp(&b.time));
                atoms.dedup_by(|a, b| a.time == b.time);
                MeasureControl::new(horizon, vec![atoms], vec![rng.gen_range(-0.5..0.5)])
            }
            Scenario::StandingWave | Scenario::Zero => Ok(MeasureControl::zero(horizon, 1)),
        }
    }
}

/// Inclusive level range from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRange(pub Vec<u32>);

/// Parses `a..b` or `a..=b` (inclusive) or a single level.
pub fn parse_levels(text: &str) -> std::result::Result<LevelRange, String> {
    let parse = |s: &str| s.trim().parse::<u32>().map_err(|e| format!("bad level '{s}': {e}"));
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let k = parse(text)?;
            (k, k)
        }
    };
    if hi < lo {
        return Err(format!("empty level range {text}"));
    }
    Ok(LevelRange((lo..=hi).collect()))
}

#[derive(Debug, Parser)]
#[command(name = "bvwave", version, about = "BV optimal control of the wave equation")]
pub struct Cli {
    /// Overrides `command` from the configuration file
    #[command(subcommand)]
    pub command: Option<Command>,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Level range `a..b`; a single level sets `level` for solve/pdap
    #[arg(long, global = true, value_parser = parse_levels)]
    pub levels: Option<LevelRange>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub phi: Option<PhiVariant>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub scenario: Option<Scenario>,
    #[arg(long, global = true)]
    pub k_ref: Option<u32>,
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(c) = self.command {
            cfg.command = c;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(LevelRange(levels)) = &self.levels {
            cfg.discretization.levels = levels.clone();
            cfg.discretization.level = *levels.last().expect("non-empty range");
        }
        if let Some(s) = self.sigma {
            cfg.discretization.sigma = s;
        }
        if let Some(p) = self.phi {
            cfg.phi = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        if let Some(k) = self.k_ref {
            cfg.discretization.k_ref = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// `m,t,dof,value` rows for every node of the field.
pub fn field_csv(field: &SpaceTimeField) -> String {
    let mut out = String::from("m,t,dof,value\n");
    for m in 0..field.grid().n_nodes() {
        let t = field.grid().node(m);
        for (i, v) in field.slice(m).iter().enumerate() {
            out.push_str(&format!("{m},{t},{i},{v}\n"));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub scenario: Scenario,
    pub level: u32,
    pub sigma: f64,
    pub gate: Option<StabilityReport>,
    pub monitor: StabilityMonitor,
    /// `max_m ||y(t_m) - y_h(t_m)||_{L^2}` for the standing wave
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_error: Option<f64>,
}

/// Analytic standing wave `cos(omega t) g(x)` with `omega = pi / sqrt(2)`.
pub fn standing_wave(t: f64, x: [f64; 2]) -> f64 {
    (std::f64::consts::PI / 2f64.sqrt() * t).cos() * g(x)
}

fn g_gradient(x: [f64; 2]) -> [f64; 2] {
    use std::f64::consts::PI;
    let (c1, c2) = ((PI * x[0] / 2.0).cos(), (PI * x[1] / 2.0).cos());
    let (s1, s2) = ((PI * x[0] / 2.0).sin(), (PI * x[1] / 2.0).sin());
    [-PI / 2.0 * s1 * c2, -PI / 2.0 * c1 * s2]
}

/// C(I; L^2) error of the standing wave measured at the time nodes.
pub fn standing_wave_error(level: u32, params: SchemeParams) -> Result<f64> {
    let (field, disc) = standing_wave_solution(level, params)?;
    let rule = QuadratureRule::seven_point();
    let grid = *field.grid();
    Ok((0..grid.n_nodes())
        .map(|m| {
            let t = grid.node(m);
            l2_error(disc.mesh(), field.slice(m), |x| standing_wave(t, x), &rule)
        })
        .fold(0.0, f64::max))
}

fn standing_wave_solution(level: u32, params: SchemeParams) -> Result<(SpaceTimeField, Arc<Discretization>)> {
    let disc = Arc::new(Discretization::new(build_uniform_mesh(level)?));
    let grid = TimeGrid::with_level(experiments::HORIZON, level)?;
    let solver = WaveSolver::new(disc.clone(), grid, params)?;
    let init = InitialData::from_functions(disc.mesh(), g_gradient, |_| 0.0, &QuadratureRule::seven_point())?;
    let field = solver.solve_forward(&TimeLoad::zeros(grid, disc.n_dofs()), &init)?;
    Ok((field, disc))
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveSummary> {
    let k = cfg.discretization.level;
    let params = cfg.scheme();
    let disc = Arc::new(Discretization::new(build_uniform_mesh(k)?));
    let grid = TimeGrid::with_level(experiments::HORIZON, k)?;
    let gate = if params.is_unconditional() { None } else { Some(stability_gate(&params, &grid, &disc)?) };
    if let Some(report) = &gate {
        write(&cfg.output, "stability.json", &json(report))?;
    }
    let solver = WaveSolver::new(disc.clone(), grid, params)?;
    let (field, data, analytic_error) = match cfg.scenario {
        Scenario::StandingWave => {
            let init = InitialData::from_functions(disc.mesh(), g_gradient, |_| 0.0, &QuadratureRule::seven_point())?;
            let field = solver.solve_forward(&TimeLoad::zeros(grid, disc.n_dofs()), &init)?;
            let rule = QuadratureRule::seven_point();
            let err = (0..grid.n_nodes())
                .map(|m| l2_error(disc.mesh(), field.slice(m), |x| standing_wave(grid.node(m), x), &rule))
                .fold(0.0, f64::max);
            // ||g||_{H^1} with ||g||_{L^2} = 1 and ||grad g||^2 = pi^2 / 2
            let h1 = (1.0 + std::f64::consts::PI.powi(2) / 2.0).sqrt();
            (field, DataNorms { y0_h1: h1, y1_l2: 0.0, f_l1_l2: 0.0 }, Some(err))
        }
        _ => {
            let control = cfg.scenario_control()?;
            let g_load = assemble_load(disc.mesh(), g, &QuadratureRule::three_point());
            let u = apply_b(&control).remove(0);
            let field = solver.solve_source(&TimeLoad::separable(grid, &u.hat_moments(&grid), &g_load))?;
            // ||u g||_{L^1(L^2)} = ||u||_{L^1} ||g||_{L^2}
            let l1: f64 = u.pieces().map(|(a, b, v)| v.abs() * (b - a)).sum();
            (field, DataNorms { y0_h1: 0.0, y1_l2: 0.0, f_l1_l2: l1 }, None)
        }
    };
    let monitor = stability_norm_check(&field, disc.mass(), data);
    write(&cfg.output, "field.csv", &field_csv(&field))?;
    let summary = SolveSummary { scenario: cfg.scenario, level: k, sigma: params.sigma, gate, monitor, analytic_error };
    write(&cfg.output, "solve_summary.json", &json(&summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct AtomSummary {
    pub component: usize,
    pub t: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PdapSummary {
    pub scenario: Scenario,
    pub level: u32,
    pub atoms: Vec<AtomSummary>,
    pub offsets: Vec<f64>,
    pub cost: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_max_ratio: Vec<f64>,
    pub kkt_origin_ratio: Vec<f64>,
    pub signs_aligned: bool,
    /// Present only for the reference scenario with the corrected profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_scenario: Option<bool>,
}

impl PdapSummary {
    fn new(cfg: &RunConfig, result: &PdapResult) -> Self {
        let atoms = (0..result.control.n_components())
            .flat_map(|i| result.control.atoms(i).iter().map(move |a| AtomSummary { component: i, t: a.time, weight: a.weight }))
            .collect();
        let reference = cfg.scenario == Scenario::Reference && cfg.phi == PhiVariant::Corrected;
        Self {
            scenario: cfg.scenario,
            level: cfg.discretization.level,
            atoms,
            offsets: result.control.offsets().to_vec(),
            cost: result.cost,
            gap: result.gap,
            iterations: result.iterations(),
            converged: result.converged,
            kkt_max_ratio: result.certificate.max_ratio.clone(),
            kkt_origin_ratio: result.certificate.origin_ratio.clone(),
            signs_aligned: result.certificate.signs_aligned,
            acceptance_scenario: reference.then_some(true),
        }
    }
}

pub fn history_csv(result: &PdapResult) -> String {
    let mut out = String::from("iter,cost,kkt_violation,active,gap\n");
    for r in &result.history.records {
        let active: Vec<String> = r.active.iter().map(usize::to_string).collect();
        out.push_str(&format!("{},{},{},{},{}\n", r.iter, r.cost, r.kkt_violation, active.join(";"), r.gap));
    }
    out
}

/// Problem whose target is the discrete state of the scenario control on the
/// same level, so the data are exactly attainable.
pub fn attainable_problem(cfg: &RunConfig, control: &MeasureControl) -> Result<ControlProblem> {
    let k = cfg.discretization.level;
    let disc = Arc::new(Discretization::new(build_uniform_mesh(k)?));
    let grid = TimeGrid::with_level(experiments::HORIZON, k)?;
    let solver = Arc::new(WaveSolver::new(disc.clone(), grid, cfg.scheme())?);
    let g_load = assemble_load(disc.mesh(), g, &QuadratureRule::three_point());
    let mut problem = ControlProblem {
        solver,
        g_loads: vec![g_load],
        alpha: vec![experiments::ALPHA],
        target: TimeLoad::zeros(grid, disc.n_dofs()),
        target_norm_sq: 0.0,
    };
    let y = problem.state(control)?;
    problem.target = y.moments(disc.mass());
    problem.target_norm_sq = problem.target.pair(&y);
    Ok(problem)
}

pub fn cmd_pdap(cfg: &RunConfig) -> Result<(PdapSummary, PdapResult)> {
    let params = cfg.scheme();
    let problem = match cfg.scenario {
        Scenario::Reference => {
            let reference = ReferenceContext::build(cfg.phi, cfg.discretization.k_ref, params, false)?;
            reference.problem(cfg.discretization.level, params)?
        }
        Scenario::StandingWave => {
            return Err(Error::Config("the standing-wave scenario has no control problem".into()));
        }
        _ => attainable_problem(cfg, &cfg.scenario_control()?)?,
    };
    let result = run_pdap(&problem, &cfg.pdap())?;
    let summary = PdapSummary::new(cfg, &result);
    write(&cfg.output, "summary.json", &json(&summary))?;
    write(&cfg.output, "history.csv", &history_csv(&result))?;
    Ok((summary, result))
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSummary {
    pub reference_level: u32,
    pub richardson_error: Option<f64>,
    pub fitted: Vec<(String, f64)>,
    pub pairwise: Vec<(String, Vec<f64>)>,
    pub failed_levels: Vec<(u32, String)>,
}

pub fn cmd_convergence(cfg: &RunConfig) -> Result<(experiments::RateTable, RateSummary)> {
    if cfg.scenario != Scenario::Reference {
        return Err(Error::Config("convergence studies need the reference scenario".into()));
    }
    let d = &cfg.discretization;
    let study = experiments::convergence_study(&d.levels, d.k_ref, cfg.phi, cfg.scheme(), &cfg.pdap())?;
    let table = study.table;
    let names = ["state_l2", "control_l1", "jump_pos_max", "jump_amp_max", "offset_err", "cost_err", "tv_err"];
    let failed_levels = d
        .levels
        .iter()
        .zip(&study.runs)
        .filter_map(|(&k, r)| r.as_ref().err().map(|e| (k, e.to_string())))
        .collect();
    let summary = RateSummary {
        reference_level: table.reference_level,
        richardson_error: table.richardson_error,
        fitted: names.iter().enumerate().map(|(i, n)| (n.to_string(), table.fitted_rate(i))).collect(),
        pairwise: names.iter().enumerate().map(|(i, n)| (n.to_string(), table.pair_rates(i))).collect(),
        failed_levels,
    };
    write(&cfg.output, "rates.csv", &table.to_csv())?;
    write(&cfg.output, "rates.gp", &table.gnuplot_script())?;
    write(&cfg.output, "rates_summary.json", &json(&summary))?;
    if let Some(Err(e)) = study.runs.into_iter().find(|r| r.is_err()) {
        return Err(e);
    }
    Ok((table, summary))
}

/// Stdout writes that tolerate a closed pipe (`bvwave ... | head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Runs the configured command and maps the outcome to an exit status.
pub fn run(cfg: &RunConfig) -> i32 {
    let outcome = match cfg.command {
        Command::Solve => cmd_solve(cfg).map(|s| {
            out!("{}", json(&s).trim_end());
            EXIT_OK
        }),
        Command::Pdap => cmd_pdap(cfg).map(|(s, _)| {
            out!("{}", json(&s).trim_end());
            if s.converged {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }),
        Command::Convergence => cmd_convergence(cfg).map(|(table, summary)| {
            out!("{}", table.to_csv().trim_end());
            for (name, rate) in &summary.fitted {
                out!("rate {name}: {rate:.3}");
            }
            if table.rows.iter().all(|r| r.converged) {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
