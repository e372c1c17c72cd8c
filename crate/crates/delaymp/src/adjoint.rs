//! The three adjoint equations of the delayed maximum principle.
//!
//! For a candidate optimal pair `(u, x)` this module builds and solves
//!
//! * the first-order adjoint ABSDE for `(p, q)`,
//! * the second-order adjoint ABSDE for `(P, Q)`,
//! * the backward random differential equation (BRDE) for `K`, a pathwise
//!   backward quadrature with no martingale term,
//!
//! and checks the `K = 0` hypothesis under which the maximum condition is
//! asserted. Anticipated products such as `E[b_xd(t+d) p(t+d) | F_t]` are
//! regressed as whole products before conditioning; factor-by-factor
//! conditioning would be wrong when the factors correlate.

use std::sync::Arc;

use crate::absde::{AbsdeSolution, AbsdeSpec, AntArgs, GenArgs, RegressionBasis};
use crate::brownian::BrownianEnsemble;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::real::Real;
use crate::sdde::{ControlProcess, DelayProblem, StatePaths};
use crate::stats::{self, par_map_paths, KahanSum};

/// Partial-derivative evaluations along the optimal pair: entry `[path][i]`
/// is the partial at `Theta(t_i) = (x(t_i), x(t_i - d), u(t_i), u(t_i - d))`
/// for node `i` of `[0, n_steps]`.
pub struct ThetaCoeffs<F: Real> {
    pub b_x: Vec<Vec<F>>,
    pub b_xd: Vec<Vec<F>>,
    pub sigma_x: Vec<Vec<F>>,
    pub sigma_xd: Vec<Vec<F>>,
    pub l_x: Vec<Vec<F>>,
    pub l_xd: Vec<Vec<F>>,
    pub b_xx: Vec<Vec<F>>,
    pub b_xdxd: Vec<Vec<F>>,
    pub b_xxd: Vec<Vec<F>>,
    pub sigma_xx: Vec<Vec<F>>,
    pub sigma_xdxd: Vec<Vec<F>>,
    pub sigma_xxd: Vec<Vec<F>>,
    pub l_xx: Vec<Vec<F>>,
    pub l_xdxd: Vec<Vec<F>>,
    pub l_xxd: Vec<Vec<F>>,
}

impl<F: Real> ThetaCoeffs<F> {
    pub fn evaluate(
        problem: &DelayProblem<F>,
        paths: &StatePaths<F>,
        control: &ControlProcess<F>,
    ) -> Result<Arc<Self>> {
        let grid = paths.grid();
        if !control.grid().same_as(grid) {
            return Err(Error::GridMismatch("control grid differs from state grid".into()));
        }
        let n = grid.n_steps();
        let m = grid.delay_shift() as isize;
        let n_paths = paths.n_paths();
        let eval = |f: &crate::sdde::Coeff<F>| -> Vec<Vec<F>> {
            let f = f.clone();
            par_map_paths(n_paths, |p| {
                (0..=n as isize)
                    .map(|i| {
                        f(
                            grid.time(i),
                            paths.x(p, i),
                            paths.x(p, i - m),
                            control.v(p, i),
                            control.v(p, i - m),
                        )
                    })
                    .collect()
            })
        };
        Ok(Arc::new(Self {
            b_x: eval(&problem.b_x),
            b_xd: eval(&problem.b_xd),
            sigma_x: eval(&problem.sigma_x),
            sigma_xd: eval(&problem.sigma_xd),
            l_x: eval(&problem.l_x),
            l_xd: eval(&problem.l_xd),
            b_xx: eval(&problem.b_xx),
            b_xdxd: eval(&problem.b_xdxd),
            b_xxd: eval(&problem.b_xxd),
            sigma_xx: eval(&problem.sigma_xx),
            sigma_xdxd: eval(&problem.sigma_xdxd),
            sigma_xxd: eval(&problem.sigma_xxd),
            l_xx: eval(&problem.l_xx),
            l_xdxd: eval(&problem.l_xdxd),
            l_xxd: eval(&problem.l_xxd),
        }))
    }
}

/// First-order adjoint ABSDE:
///
/// ```text
/// -dp = [b_x p + sigma_x q + l_x + E[b_xd(t+d) p(t+d) + sigma_xd(t+d) q(t+d) + l_xd(t+d) | F_t]] dt - q dB
/// p(T) = h_x(x(T)), p = 0 on (T, T+d], q = 0 on [T, T+d]
/// ```
///
/// Cost partials are extended by zero past `T`, which is the standing
/// assumption of the maximum condition.
pub fn build_first_adjoint<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
) -> Result<AbsdeSpec<F>> {
    let coeffs = ThetaCoeffs::evaluate(problem, paths, control)?;
    let grid = paths.grid();
    let n = grid.n_steps();
    let horizon_gate = grid.horizon() + grid.step() * F::of(0.5);
    let h_x = problem.h_x.clone();

    let gen_coeffs = coeffs.clone();
    let ant_coeffs = coeffs;
    Ok(AbsdeSpec {
        generator: Arc::new(move |g: &GenArgs<F>| {
            gen_coeffs.b_x[g.path][g.step] * g.y
                + gen_coeffs.sigma_x[g.path][g.step] * g.z
                + gen_coeffs.l_x[g.path][g.step]
                + g.y_adv
        }),
        terminal_y: Arc::new(move |t: F, x_t: F| {
            if t < horizon_gate {
                h_x(x_t)
            } else {
                F::zero()
            }
        }),
        terminal_z: Arc::new(|_, _| F::zero()),
        ant_y: Arc::new(move |a: &AntArgs<F>| {
            if a.step > n {
                F::zero()
            } else {
                ant_coeffs.b_xd[a.path][a.step] * a.y
                    + ant_coeffs.sigma_xd[a.path][a.step] * a.z
                    + ant_coeffs.l_xd[a.path][a.step]
            }
        }),
        ant_z: Arc::new(|_| F::zero()),
    })
}

/// Second-order adjoint ABSDE for `(P, Q)`; reads the solved first pair.
pub fn build_second_adjoint<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
    first: &AbsdeSolution<F>,
) -> Result<AbsdeSpec<F>> {
    if !first.grid().same_as(paths.grid()) {
        return Err(Error::GridMismatch("first adjoint on a different grid".into()));
    }
    let coeffs = ThetaCoeffs::evaluate(problem, paths, control)?;
    let grid = paths.grid();
    let n = grid.n_steps();
    let horizon_gate = grid.horizon() + grid.step() * F::of(0.5);
    let h_xx = problem.h_xx.clone();
    let two = F::of(2.0);

    let gen_coeffs = coeffs.clone();
    let gen_first = first.clone();
    let ant_coeffs = coeffs;
    let ant_first = first.clone();
    Ok(AbsdeSpec {
        generator: Arc::new(move |g: &GenArgs<F>| {
            let sx = gen_coeffs.sigma_x[g.path][g.step];
            two * gen_coeffs.b_x[g.path][g.step] * g.y
                + sx * sx * g.y
                + two * sx * g.z
                + gen_coeffs.b_xx[g.path][g.step] * gen_first.y(g.path, g.step)
                + gen_coeffs.sigma_xx[g.path][g.step] * gen_first.z(g.path, g.step)
                + gen_coeffs.l_xx[g.path][g.step]
                + g.y_adv
        }),
        terminal_y: Arc::new(move |t: F, x_t: F| {
            if t < horizon_gate {
                h_xx(x_t)
            } else {
                F::zero()
            }
        }),
        terminal_z: Arc::new(|_, _| F::zero()),
        ant_y: Arc::new(move |a: &AntArgs<F>| {
            if a.step > n {
                F::zero()
            } else {
                let sxd = ant_coeffs.sigma_xd[a.path][a.step];
                sxd * sxd * a.y
                    + ant_coeffs.b_xdxd[a.path][a.step] * ant_first.y(a.path, a.step)
                    + ant_coeffs.sigma_xdxd[a.path][a.step] * ant_first.z(a.path, a.step)
                    + ant_coeffs.l_xdxd[a.path][a.step]
            }
        }),
        ant_z: Arc::new(|_| F::zero()),
    })
}

/// The BRDE integrand at one node: the cross-term coefficient
/// `b_xd P + sigma_x sigma_xd P + sigma_xd Q + b_xxd p + sigma_xxd q + l_xxd`.
pub fn brde_integrand<F: Real>(
    coeffs: &ThetaCoeffs<F>,
    first: &AbsdeSolution<F>,
    second: &AbsdeSolution<F>,
    path: usize,
    node: usize,
) -> F {
    coeffs.b_xd[path][node] * second.y(path, node)
        + coeffs.sigma_x[path][node] * coeffs.sigma_xd[path][node] * second.y(path, node)
        + coeffs.sigma_xd[path][node] * second.z(path, node)
        + coeffs.b_xxd[path][node] * first.y(path, node)
        + coeffs.sigma_xxd[path][node] * first.z(path, node)
        + coeffs.l_xxd[path][node]
}

/// Solves the BRDE pathwise by left-endpoint backward quadrature:
/// `K_i = K_{i+1} + h * integrand(t_i)`, `K = 0` on `[T, T+d]`.
pub fn solve_brde<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
    first: &AbsdeSolution<F>,
    second: &AbsdeSolution<F>,
) -> Result<Vec<Vec<F>>> {
    let grid = paths.grid();
    if !first.grid().same_as(grid) || !second.grid().same_as(grid) {
        return Err(Error::GridMismatch("adjoints on a different grid".into()));
    }
    let coeffs = ThetaCoeffs::evaluate(problem, paths, control)?;
    let n = grid.n_steps();
    let m = grid.delay_shift();
    let h = grid.step();
    Ok(par_map_paths(paths.n_paths(), |p| {
        let mut row = vec![F::zero(); n + m + 1];
        for i in (0..n).rev() {
            row[i] = row[i + 1] + h * brde_integrand(&coeffs, first, second, p, i);
        }
        row
    }))
}

/// Hypothesis gate for the maximum condition.
#[derive(Debug, Clone)]
pub struct KReport<F: Real> {
    /// `sup_i mean_paths |K(t_i)|` over nodes of `[0, T]`.
    pub sup_mean_abs: F,
    pub tol: F,
    pub pass: bool,
}

impl<F: Real> KReport<F> {
    pub fn summary(&self) -> String {
        if self.pass {
            format!(
                "K-hypothesis holds: sup mean |K| = {:.3e} < tol {:.1e}; the maximum condition is asserted",
                self.sup_mean_abs.as_f64(),
                self.tol.as_f64()
            )
        } else {
            format!(
                "K-hypothesis FAILS: sup mean |K| = {:.3e} >= tol {:.1e}; the maximum condition is NOT asserted for this problem (the theorem is silent when K != 0)",
                self.sup_mean_abs.as_f64(),
                self.tol.as_f64()
            )
        }
    }
}

/// Checks `K = 0` on `[0, T]`. This gates, rather than asserts, the maximum
/// condition: for general problems `K` need not vanish.
pub fn check_k_vanishes<F: Real>(k: &[Vec<F>], grid: &TimeGrid<F>, tol: F) -> KReport<F> {
    let n = grid.n_steps();
    let n_paths = k.len();
    let mut sup = F::zero();
    for i in 0..=n {
        let mut acc = KahanSum::new();
        for row in k {
            acc.add(row[i].abs());
        }
        sup = sup.max(acc.value() / F::from_index(n_paths));
    }
    KReport {
        sup_mean_abs: sup,
        tol,
        pass: sup < tol,
    }
}

/// All adjoint trajectories for one candidate pair, on grid nodes of
/// `[0, T + d]`.
pub struct AdjointBundle<F: Real> {
    grid: TimeGrid<F>,
    first: AbsdeSolution<F>,
    second: AbsdeSolution<F>,
    k: Vec<Vec<F>>,
}

impl<F: Real> AdjointBundle<F> {
    /// Solves the two ABSDEs and the BRDE for the given pair.
    pub fn solve(
        problem: &DelayProblem<F>,
        paths: &StatePaths<F>,
        control: &ControlProcess<F>,
        ens: &BrownianEnsemble<F>,
        basis: &RegressionBasis<F>,
    ) -> Result<Self> {
        let grid = paths.grid().clone();
        let first_spec = build_first_adjoint(problem, paths, control)?;
        let first = crate::absde::solve_absde(&first_spec, &grid, paths, ens, basis)?;
        let second_spec = build_second_adjoint(problem, paths, control, &first)?;
        let second = crate::absde::solve_absde(&second_spec, &grid, paths, ens, basis)?;
        let k = solve_brde(problem, paths, control, &first, &second)?;
        Ok(Self {
            grid,
            first,
            second,
            k,
        })
    }

    /// Closed-form bundle from constant values on `[0, T + d]`.
    pub fn from_constants(
        grid: &TimeGrid<F>,
        n_paths: usize,
        p: F,
        q: F,
        big_p: F,
        big_q: F,
        k: F,
    ) -> Self {
        let n_nodes = grid.n_backward_nodes();
        let constant = |v: F| vec![vec![v; n_nodes]; n_paths];
        Self {
            grid: grid.clone(),
            first: AbsdeSolution::from_values(grid, constant(p), constant(q)),
            second: AbsdeSolution::from_values(grid, constant(big_p), constant(big_q)),
            k: constant(k),
        }
    }

    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.k.len()
    }

    pub fn first(&self) -> &AbsdeSolution<F> {
        &self.first
    }

    pub fn second(&self) -> &AbsdeSolution<F> {
        &self.second
    }

    #[inline]
    pub fn p(&self, path: usize, node: usize) -> F {
        self.first.y(path, node)
    }

    #[inline]
    pub fn q(&self, path: usize, node: usize) -> F {
        self.first.z(path, node)
    }

    #[inline]
    pub fn big_p(&self, path: usize, node: usize) -> F {
        self.second.y(path, node)
    }

    #[inline]
    pub fn big_q(&self, path: usize, node: usize) -> F {
        self.second.z(path, node)
    }

    #[inline]
    pub fn k(&self, path: usize, node: usize) -> F {
        self.k[path][node]
    }

    pub fn k_paths(&self) -> &[Vec<F>] {
        &self.k
    }

    /// Cross-path means `(p, q, P, Q, K)` at a node.
    pub fn means(&self, node: usize) -> (F, F, F, F, F) {
        let col = |f: &dyn Fn(usize) -> F| {
            let vals: Vec<F> = (0..self.n_paths()).map(f).collect();
            stats::mean(&vals)
        };
        (
            col(&|p| self.p(p, node)),
            col(&|p| self.q(p, node)),
            col(&|p| self.big_p(p, node)),
            col(&|p| self.big_q(p, node)),
            col(&|p| self.k(p, node)),
        )
    }

    pub fn check_k(&self, tol: F) -> KReport<F> {
        check_k_vanishes(&self.k, &self.grid, tol)
    }
}
