//! The delayed maximum condition.
//!
//! The Hamiltonian is
//!
//! ```text
//! H(t, x, xd, v, vd, p, q, P) = l + p b + q sigma + P sigma^2 / 2 - P sigma(Theta(t)) sigma
//! ```
//!
//! with every coefficient at `(t, x, xd, v, vd)` and the anchor
//! `sigma(Theta(t))` at the candidate pair. The maximum condition compares,
//! for each alternative `v`, the Hamiltonian with `v` in the current slot
//! plus — only while `t < T - d`, when the echo interval still fits in the
//! horizon — the conditional expectation of the time-`t+d` Hamiltonian with
//! `v` in the delayed slot, against the same bracket along the candidate.
//! The margin (alternative minus candidate) must be nonnegative at an
//! optimal candidate.
//!
//! The condition is only asserted when the auxiliary adjoint `K` vanishes on
//! `[0, T]`; the report carries that hypothesis check alongside the margins.

use crate::absde::{project_on_basis, RegressionBasis};
use crate::adjoint::{AdjointBundle, KReport};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::sdde::{ControlProcess, DelayProblem, StatePaths};
use crate::stats::{self, par_map_paths};

/// The Hamiltonian at one evaluation point. `sigma_anchor` is
/// `sigma(t, Theta(t))` along the candidate pair.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian<F: Real>(
    problem: &DelayProblem<F>,
    t: F,
    x: F,
    xd: F,
    v: F,
    vd: F,
    p: F,
    q: F,
    big_p: F,
    sigma_anchor: F,
) -> F {
    let s = (problem.sigma)(t, x, xd, v, vd);
    (problem.l)(t, x, xd, v, vd) + p * (problem.b)(t, x, xd, v, vd) + q * s
        + F::of(0.5) * big_p * s * s
        - big_p * sigma_anchor * s
}

/// Monte Carlo estimate `(margin, stderr)` of
///
/// ```text
/// E[ H(tau, ..., v, u(tau-d)) - H(tau, Theta(tau))
///    + E^{F_tau}[H(tau+d, ..., u(tau+d), v) - H(tau+d, Theta(tau+d))] 1_{tau < T-d} ]
/// ```
///
/// The inner conditional expectation is the cross-sectional projection of
/// the time-`tau+d` difference onto the basis in `(x(tau), x(tau-d))`.
pub fn mp_margin<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
    adjoints: &AdjointBundle<F>,
    basis: &RegressionBasis<F>,
    tau: F,
    v: F,
) -> Result<(F, F)> {
    let grid = paths.grid();
    if !adjoints.grid().same_as(grid) || !control.grid().same_as(grid) {
        return Err(Error::GridMismatch("inputs on different grids".into()));
    }
    if !problem.control_set.contains(v) {
        return Err(Error::InadmissibleAlternative(v.as_f64()));
    }
    let n = grid.n_steps() as isize;
    let m = grid.delay_shift() as isize;
    let i = grid.index_of(tau);
    if i < 0 || i > n {
        return Err(Error::Config(format!(
            "tau = {tau} is outside the control horizon [0, {}]",
            grid.horizon()
        )));
    }
    // half-open indicator: the echo term is present only on [0, T - d)
    let indicator = i < n - m;
    let n_paths = paths.n_paths();
    let node = i as usize;

    let base: Vec<F> = par_map_paths(n_paths, |pth| {
        let t = grid.time(i);
        let x = paths.x(pth, i);
        let xd = paths.x(pth, i - m);
        let u = control.v(pth, i);
        let ud = control.v(pth, i - m);
        let p = adjoints.p(pth, node);
        let q = adjoints.q(pth, node);
        let big_p = adjoints.big_p(pth, node);
        let anchor = (problem.sigma)(t, x, xd, u, ud);
        hamiltonian(problem, t, x, xd, v, ud, p, q, big_p, anchor)
            - hamiltonian(problem, t, x, xd, u, ud, p, q, big_p, anchor)
    });

    let margins: Vec<F> = if indicator {
        let future: Vec<F> = par_map_paths(n_paths, |pth| {
            let j = i + m;
            let node_j = j as usize;
            let t = grid.time(j);
            let x = paths.x(pth, j);
            let xd = paths.x(pth, i);
            let u = control.v(pth, j);
            let ud = control.v(pth, i);
            let p = adjoints.p(pth, node_j);
            let q = adjoints.q(pth, node_j);
            let big_p = adjoints.big_p(pth, node_j);
            let anchor = (problem.sigma)(t, x, xd, u, ud);
            hamiltonian(problem, t, x, xd, u, v, p, q, big_p, anchor)
                - hamiltonian(problem, t, x, xd, u, ud, p, q, big_p, anchor)
        });
        let xs: Vec<(F, F)> = (0..n_paths)
            .map(|pth| (paths.x(pth, i), paths.x(pth, i - m)))
            .collect();
        let conditional = project_on_basis(basis, &xs, &future)?;
        base.iter()
            .zip(&conditional)
            .map(|(a, c)| *a + *c)
            .collect()
    } else {
        base
    };
    Ok(stats::mean_stderr(&margins))
}

/// One `(tau, v)` cell of a maximum-condition scan.
#[derive(Debug, Clone)]
pub struct MpCell<F: Real> {
    pub tau: F,
    pub v: F,
    pub margin: F,
    pub stderr: F,
    pub pass: bool,
}

/// Scan result: all cells plus the `K = 0` hypothesis check that gates
/// whether a failing margin actually contradicts optimality.
#[derive(Debug, Clone)]
pub struct MpReport<F: Real> {
    pub cells: Vec<MpCell<F>>,
    pub min_margin: F,
    /// All margins nonnegative within tolerance.
    pub pass: bool,
    pub k_report: KReport<F>,
}

impl<F: Real> MpReport<F> {
    pub fn summary(&self) -> String {
        let verdict = if self.pass {
            "maximum condition holds on the scanned cells"
        } else {
            "maximum condition VIOLATED on the scanned cells"
        };
        format!(
            "{verdict}: min margin {:.6e} over {} cells; {}",
            self.min_margin.as_f64(),
            self.cells.len(),
            self.k_report.summary()
        )
    }
}

/// Evaluates the margin on a grid of spike times and alternatives. A cell
/// passes when its margin is at least `-tol`; with `tol = None` each cell
/// uses three standard errors of its own estimate.
#[allow(clippy::too_many_arguments)]
pub fn scan_max_condition<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
    adjoints: &AdjointBundle<F>,
    basis: &RegressionBasis<F>,
    taus: &[F],
    alternatives: &[F],
    tol: Option<F>,
    k_tol: F,
) -> Result<MpReport<F>> {
    if taus.is_empty() || alternatives.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut cells = Vec::with_capacity(taus.len() * alternatives.len());
    let mut min_margin = F::infinity();
    let mut pass = true;
    for &tau in taus {
        for &v in alternatives {
            let (margin, stderr) = mp_margin(problem, paths, control, adjoints, basis, tau, v)?;
            let cell_tol = tol.unwrap_or(F::of(3.0) * stderr);
            let cell_pass = margin >= -cell_tol;
            pass &= cell_pass;
            min_margin = min_margin.min(margin);
            cells.push(MpCell {
                tau,
                v,
                margin,
                stderr,
                pass: cell_pass,
            });
        }
    }
    Ok(MpReport {
        cells,
        min_margin,
        pass,
        k_report: adjoints.check_k(k_tol),
    })
}
