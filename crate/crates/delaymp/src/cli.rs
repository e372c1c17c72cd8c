//! Subcommand front-end: configuration resolution, pipeline orchestration,
//! and CSV/report emission.
//!
//! Exit codes: 0 on success (or advisory results), 1 when a check fails or a
//! computation breaks down, 2 on usage or configuration errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::absde::{martingale_residual, solve_absde, AbsdeSpec, RegressionBasis};
use crate::adjoint::AdjointBundle;
use crate::brownian::BrownianEnsemble;
use crate::config::{ProblemKind, RunConfig};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lq::{self, LqParams};
use crate::mp;
use crate::report::{fmt, write_csv, write_report, Provenance};
use crate::sdde::{
    coeff, simulate, terminal, ControlProcess, ControlSet, DelayProblem, InitialData, StatePaths,
};
use crate::stats;
use crate::variation::{self, SpikeReplacement, SpikeSpec};

#[derive(Parser)]
#[command(
    name = "delaymp",
    version,
    about = "Numerical toolkit for stochastic optimal control with delay"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Configuration file (flat key/value, sectioned); defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV file (directory for lq-demo).
    #[arg(long)]
    out: PathBuf,
    /// Seed override (wins over config and DELAYMP_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count override; results must not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the configured problem and write per-path trajectories.
    Simulate(Common),
    /// Solve the benchmark anticipated BSDE on the configured forward paths.
    SolveAbsde(Common),
    /// Solve the three adjoint equations along the configured candidate.
    Adjoints(Common),
    /// Run the spike-variation order study.
    OrderStudy(Common),
    /// Check the delayed maximum condition.
    CheckMp(Common),
    /// Run the linear-quadratic benchmark end to end.
    LqDemo(Common),
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (common, runner): (&Common, fn(&RunConfig, &Path) -> Result<i32>) = match &cli.cmd {
        Cmd::Simulate(c) => (c, cmd_simulate),
        Cmd::SolveAbsde(c) => (c, cmd_solve_absde),
        Cmd::Adjoints(c) => (c, cmd_adjoints),
        Cmd::OrderStudy(c) => (c, cmd_order_study),
        Cmd::CheckMp(c) => (c, cmd_check_mp),
        Cmd::LqDemo(c) => (c, cmd_lq_demo),
    };
    match execute(common, runner) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn execute(common: &Common, runner: fn(&RunConfig, &Path) -> Result<i32>) -> Result<i32> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::from_str_with_seed("", env_seed()?)?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| runner(&cfg, &common.out))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("DELAYMP_SEED") {
        Ok(s) => s
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("DELAYMP_SEED must be a 64-bit integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

/// Usage and precondition problems exit 2; runtime breakdowns exit 1.
fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::NonPositiveDelay(_)
        | Error::NonDivisibleHorizon { .. }
        | Error::InsufficientEpsilons(_)
        | Error::InadmissibleAlternative(_)
        | Error::SpikeOutOfRange { .. }
        | Error::EmptyGrid => 2,
        _ => 1,
    }
}

/// Shared forward setup built from the configuration.
struct Pipeline {
    grid: TimeGrid<f64>,
    problem: DelayProblem<f64>,
    init: InitialData<f64>,
    control: ControlProcess<f64>,
    ens: BrownianEnsemble<f64>,
    basis: RegressionBasis<f64>,
}

/// The LQ parameters the config describes, with the grid taken from the
/// core section so one grid governs every subcommand.
fn lq_params(cfg: &RunConfig) -> LqParams<f64> {
    let mut p = cfg.lq;
    p.horizon = cfg.horizon;
    p.delta = cfg.delta;
    p
}

fn smooth_problem() -> DelayProblem<f64> {
    let mut p = DelayProblem::new(
        coeff(|_, x: f64, xd, v, _| x.sin() + 0.5 * xd + v),
        coeff(|_, x, xd, v, vd| 0.3 * x + 0.2 * xd + 0.5 * v + 0.2 * vd),
        coeff(|_, _, _, v, _| v * v),
        terminal(|x| x),
        ControlSet::finite(vec![-1.0, 1.0]),
    );
    p.b_x = coeff(|_, x: f64, _, _, _| x.cos());
    p.b_xd = coeff(|_, _, _, _, _| 0.5);
    p.b_xx = coeff(|_, x: f64, _, _, _| -x.sin());
    p.sigma_x = coeff(|_, _, _, _, _| 0.3);
    p.sigma_xd = coeff(|_, _, _, _, _| 0.2);
    p.h_x = terminal(|_| 1.0);
    p
}

fn exp_martingale_problem() -> DelayProblem<f64> {
    let mut p = DelayProblem::new(
        coeff(|_, _, _, _, _| 0.0),
        coeff(|_, x, _, _, _| x),
        coeff(|_, _, _, _, _| 0.0),
        terminal(|x| x),
        ControlSet::all(),
    );
    p.sigma_x = coeff(|_, _, _, _, _| 1.0);
    p.h_x = terminal(|_| 1.0);
    p
}

impl Pipeline {
    fn build(cfg: &RunConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let (problem, init) = match cfg.problem {
            ProblemKind::Lq => {
                let params = lq_params(cfg);
                params.validate()?;
                (params.to_problem(), params.initial_data(&grid))
            }
            ProblemKind::Smooth => (
                smooth_problem(),
                InitialData::constant(&grid, cfg.phi0, cfg.eta),
            ),
            ProblemKind::ExpMartingale => (
                exp_martingale_problem(),
                InitialData::constant(&grid, cfg.phi0, cfg.eta),
            ),
        };
        let control = ControlProcess::constant(&grid, &init, cfg.control);
        if let Some(bad) = control.admissible(&problem.control_set) {
            return Err(Error::InadmissibleAlternative(bad));
        }
        let ens = BrownianEnsemble::sample(&grid, cfg.n_paths, cfg.seed);
        Ok(Self {
            grid,
            problem,
            init,
            control,
            ens,
            basis: RegressionBasis::polynomial(cfg.basis_degree),
        })
    }

    fn simulate(&self) -> Result<StatePaths<f64>> {
        simulate(&self.problem, &self.control, &self.init, &self.grid, &self.ens)
    }
}

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance {
        seed: cfg.seed,
        grid: cfg.grid_label(),
        n_paths: cfg.n_paths,
    }
}

fn column_mean_sd(values: impl Iterator<Item = f64>, n: usize) -> (f64, f64) {
    let vals: Vec<f64> = values.collect();
    let (mean, stderr) = stats::mean_stderr(&vals);
    (mean, stderr * (n as f64).sqrt())
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let pipe = Pipeline::build(cfg)?;
    let paths = pipe.simulate()?;
    let m = pipe.grid.delay_shift() as isize;
    let n = pipe.grid.n_steps() as isize;
    let mut rows = Vec::new();
    for p in 0..paths.n_paths() {
        for i in -m..=n {
            rows.push(vec![
                p.to_string(),
                fmt(pipe.grid.time(i)),
                fmt(paths.x(p, i)),
            ]);
        }
    }
    write_csv(out, &provenance(cfg), &["path", "t", "x"], &rows)?;
    println!(
        "simulated {} paths on {} ({} nodes each)",
        paths.n_paths(),
        cfg.grid_label(),
        pipe.grid.n_state_nodes()
    );
    Ok(0)
}

/// The benchmark ABSDE: generator `f = E[Y(t+delta) | F_t]`, terminal
/// `Y = 1` on `[T, T+delta]`, `Z = 0`.
fn cmd_solve_absde(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let pipe = Pipeline::build(cfg)?;
    let paths = pipe.simulate()?;
    let spec = AbsdeSpec::new(
        |g: &crate::absde::GenArgs<f64>| g.y_adv,
        |_, _| 1.0,
        |_, _| 0.0,
    );
    let sol = solve_absde(&spec, &pipe.grid, &paths, &pipe.ens, &pipe.basis)?;
    let residual = martingale_residual(&sol, &spec, &pipe.grid, &paths, &pipe.ens, &pipe.basis)?;
    let n_paths = sol.n_paths();
    let mut rows = Vec::new();
    for node in 0..pipe.grid.n_backward_nodes() {
        let (my, sy) = column_mean_sd((0..n_paths).map(|p| sol.y(p, node)), n_paths);
        let (mz, sz) = column_mean_sd((0..n_paths).map(|p| sol.z(p, node)), n_paths);
        rows.push(vec![
            fmt(pipe.grid.time(node as isize)),
            fmt(my),
            fmt(sy),
            fmt(mz),
            fmt(sz),
            fmt(residual),
        ]);
    }
    write_csv(
        out,
        &provenance(cfg),
        &["t", "mean_y", "sd_y", "mean_z", "sd_z", "residual"],
        &rows,
    )?;
    println!(
        "ABSDE solved: Y(0) mean = {}, martingale residual = {residual:.3e}",
        sol.mean_y(0)
    );
    Ok(0)
}

fn adjoint_rows(grid: &TimeGrid<f64>, bundle: &AdjointBundle<f64>) -> Vec<Vec<String>> {
    (0..grid.n_backward_nodes())
        .map(|node| {
            let (p, q, big_p, big_q, k) = bundle.means(node);
            vec![
                fmt(grid.time(node as isize)),
                fmt(p),
                fmt(q),
                fmt(big_p),
                fmt(big_q),
                fmt(k),
            ]
        })
        .collect()
}

const ADJOINT_COLUMNS: [&str; 6] = ["t", "mean_p", "mean_q", "mean_P", "mean_Q", "mean_K"];

fn cmd_adjoints(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let pipe = Pipeline::build(cfg)?;
    let paths = pipe.simulate()?;
    let bundle = AdjointBundle::solve(&pipe.problem, &paths, &pipe.control, &pipe.ens, &pipe.basis)?;
    write_csv(
        out,
        &provenance(cfg),
        &ADJOINT_COLUMNS,
        &adjoint_rows(&pipe.grid, &bundle),
    )?;
    println!("{}", bundle.check_k(cfg.k_tol).summary());
    Ok(0)
}

fn cmd_order_study(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let pipe = Pipeline::build(cfg)?;
    let study = variation::order_study(
        &pipe.problem,
        &pipe.control,
        &pipe.init,
        cfg.tau,
        SpikeReplacement::Constant(cfg.spike_value),
        &cfg.eps_steps,
        &pipe.grid,
        cfg.n_paths,
        cfg.seed,
    )?;
    let mut rows: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.eps),
                fmt(r.m1),
                fmt(r.m2),
                fmt(r.m3),
                fmt(r.m4),
                fmt(r.m5),
            ]
        })
        .collect();
    let mut slope_row = vec!["slopes".to_string()];
    slope_row.extend(study.slopes.iter().map(|&s| fmt(s)));
    rows.push(slope_row);
    write_csv(
        out,
        &provenance(cfg),
        &["eps", "m1", "m2", "m3", "m4", "m5"],
        &rows,
    )?;
    println!(
        "order study: slopes m1..m5 = {:?} over {} spike widths",
        study.slopes,
        study.rows.len()
    );
    Ok(0)
}

fn cmd_check_mp(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let pipe = Pipeline::build(cfg)?;
    let paths = pipe.simulate()?;
    let bundle = AdjointBundle::solve(&pipe.problem, &paths, &pipe.control, &pipe.ens, &pipe.basis)?;
    let taus: Vec<f64> = if cfg.taus.is_empty() {
        (0..=pipe.grid.n_steps() as isize)
            .map(|i| pipe.grid.time(i))
            .collect()
    } else {
        cfg.taus.clone()
    };
    let alternatives: Vec<f64> = if cfg.alternatives.is_empty() {
        pipe.problem.control_set.representatives().to_vec()
    } else {
        cfg.alternatives.clone()
    };
    let tol = if cfg.margin_tol > 0.0 {
        Some(cfg.margin_tol)
    } else {
        None
    };
    let report = mp::scan_max_condition(
        &pipe.problem,
        &paths,
        &pipe.control,
        &bundle,
        &pipe.basis,
        &taus,
        &alternatives,
        tol,
        cfg.k_tol,
    )?;
    let rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|c| {
            vec![
                fmt(c.tau),
                fmt(c.v),
                fmt(c.margin),
                fmt(c.stderr),
                c.pass.to_string(),
            ]
        })
        .collect();
    write_csv(
        out,
        &provenance(cfg),
        &["tau", "v", "margin", "stderr", "pass"],
        &rows,
    )?;
    println!("{}", report.summary());
    if !report.k_report.pass {
        println!(
            "WARNING: K != 0, so Theorem-level conclusions are NOT drawn from these margins; \
             result is advisory only"
        );
        return Ok(0);
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_lq_demo(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let params = lq_params(cfg);
    params.validate()?;
    let grid = params.grid(cfg.steps_per_delay)?;
    let problem = params.to_problem();
    let init = params.initial_data(&grid);
    let control = params.candidate(&grid);
    let ens = BrownianEnsemble::sample(&grid, cfg.n_paths, cfg.seed);
    let basis = RegressionBasis::polynomial(cfg.basis_degree);
    let paths = simulate(&problem, &control, &init, &grid, &ens)?;
    let prov = provenance(cfg);

    // regression-solved adjoints, to be compared against p = 1, q = P = Q = K = 0
    let bundle = AdjointBundle::solve(&problem, &paths, &control, &ens, &basis)?;
    write_csv(
        &out.join("adjoints.csv"),
        &prov,
        &ADJOINT_COLUMNS,
        &adjoint_rows(&grid, &bundle),
    )?;

    // margins with the solved adjoints over both rays of U
    let taus = vec![grid.step(), 0.5 * (grid.horizon() - params.delta), grid.horizon() - grid.step()];
    let alternatives = vec![-2.0, -1.5, -1.0, 1.0, 1.5, 2.0];
    let scan = mp::scan_max_condition(
        &problem,
        &paths,
        &control,
        &bundle,
        &basis,
        &taus,
        &alternatives,
        Some(cfg.k_tol.max(cfg.margin_tol)),
        cfg.k_tol,
    )?;
    let rows: Vec<Vec<String>> = scan
        .cells
        .iter()
        .map(|c| {
            vec![
                fmt(c.tau),
                fmt(c.v),
                fmt(c.margin),
                fmt(c.stderr),
                c.pass.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("margins.csv"),
        &prov,
        &["tau", "v", "margin", "stderr", "pass"],
        &rows,
    )?;

    // optimality by simulation against both rays plus a spiked control
    let mut alts = lq::constant_alternatives(&params, &grid, &[1.0, -1.5, 2.0]);
    let spike_tau = grid.time((grid.n_steps() / 4) as isize);
    let spiked = variation::spike(
        &control,
        &SpikeSpec::constant(spike_tau, grid.delay_shift() / 2, 1.0),
    )?;
    alts.push((format!("spike to 1 at {spike_tau}"), spiked));
    let optimality = lq::verify_optimality(&params, &grid, &alts, cfg.n_paths, cfg.seed)?;

    let mut body = String::new();
    body.push_str("LQ benchmark report\n");
    body.push_str(&format!(
        "closed-form optimal control: u = {} on [0, T-delta), u = {} on [T-delta, T]\n",
        params.closed_form_control(0.0),
        params.closed_form_control(params.horizon)
    ));
    body.push_str(&format!("{}\n", bundle.check_k(cfg.k_tol).summary()));
    body.push_str(&format!("{}\n", scan.summary()));
    body.push_str(&optimality.summary());
    write_report(&out.join("optimality.txt"), &prov, &body)?;
    println!("{body}");

    Ok(if optimality.pass && (scan.pass || !scan.k_report.pass) {
        0
    } else {
        1
    })
}
