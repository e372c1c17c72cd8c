//! Spike perturbations, variational equations, and order studies.
//!
//! A spike replaces the candidate control on `[tau, tau + eps)`; its effect
//! echoes through the delayed control argument on `[tau + d, tau + d + eps)`.
//! Both intervals are unions of whole grid cells because `eps` is restricted
//! to integer multiples of `h`. The first and second variational equations
//! are simulated directly on the same Brownian ensemble as the base pair
//! (common random numbers), and the spike-size scaling of
//!
//! ```text
//! m1 = E sup |x_eps - x|^2      m2 = E sup |x1|^2      m3 = E sup |x2|
//! m4 = E sup |x_eps - x - x1|^2 m5 = E sup |x_eps - x - x1 - x2|
//! ```
//!
//! is summarized by log-log least-squares slopes: m1-m3 scale like eps,
//! m4 and m5 decay faster than eps.

use crate::adjoint::{AdjointBundle, ThetaCoeffs};
use crate::brownian::BrownianEnsemble;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::real::Real;
use crate::sdde::{
    cost_paths, simulate, ControlProcess, DelayProblem, InitialData, StatePaths,
};
use crate::stats::{self, par_map_paths, KahanSum};

/// Replacement values inside the spike window.
#[derive(Debug, Clone)]
pub enum SpikeReplacement<F: Real> {
    Constant(F),
    /// A control whose values on the window are substituted node-by-node.
    Process(ControlProcess<F>),
}

/// A needle perturbation on `[tau, tau + eps)`.
#[derive(Debug, Clone)]
pub struct SpikeSpec<F: Real> {
    /// Spike start; must be a grid node in `[0, T]`.
    pub tau: F,
    /// Spike width in whole grid steps.
    pub eps_steps: usize,
    pub replacement: SpikeReplacement<F>,
}

impl<F: Real> SpikeSpec<F> {
    pub fn constant(tau: F, eps_steps: usize, value: F) -> Self {
        Self {
            tau,
            eps_steps,
            replacement: SpikeReplacement::Constant(value),
        }
    }

    pub fn eps(&self, grid: &TimeGrid<F>) -> F {
        grid.step() * F::from_index(self.eps_steps)
    }

    /// Start node index; errors when the window leaves `[0, T]`.
    pub fn start_index(&self, grid: &TimeGrid<F>) -> Result<isize> {
        let i = grid.index_of(self.tau);
        let end = i + self.eps_steps as isize;
        if i < 0 || end > grid.n_steps() as isize {
            return Err(Error::SpikeOutOfRange {
                tau: self.tau.as_f64(),
                tau_end: (self.tau + self.eps(grid)).as_f64(),
                horizon: grid.horizon().as_f64(),
            });
        }
        Ok(i)
    }
}

/// Applies a spike: equal to `base` outside `[tau, tau + eps)` bit-exactly.
pub fn spike<F: Real>(base: &ControlProcess<F>, s: &SpikeSpec<F>) -> Result<ControlProcess<F>> {
    let grid = base.grid().clone();
    let start = s.start_index(&grid)?;
    let mut out = base.clone();
    let shared = out.is_shared();
    match (&s.replacement, shared) {
        (SpikeReplacement::Constant(v), _) => {
            for row in out.rows_mut() {
                for i in start..start + s.eps_steps as isize {
                    row[grid.slot(i)] = *v;
                }
            }
        }
        (SpikeReplacement::Process(repl), _) => {
            if !repl.grid().same_as(&grid) {
                return Err(Error::GridMismatch("replacement control grid differs".into()));
            }
            // a per-path replacement forces per-path storage
            if shared && !repl.is_shared() {
                let row = out.rows()[0].clone();
                *out.rows_mut() = vec![row; repl.rows().len()];
            }
            let n_rows = out.rows().len();
            for path in 0..n_rows {
                for i in start..start + s.eps_steps as isize {
                    let v = repl.v(path, i);
                    out.rows_mut()[path][grid.slot(i)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// First- and second-order variational trajectories on `[-d, T]`.
#[derive(Debug, Clone)]
pub struct VariationPaths<F: Real> {
    grid: TimeGrid<F>,
    x1: Vec<Vec<F>>,
    x2: Vec<Vec<F>>,
}

impl<F: Real> VariationPaths<F> {
    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.x1.len()
    }

    #[inline]
    pub fn x1(&self, path: usize, index: isize) -> F {
        self.x1[path][self.grid.slot(index)]
    }

    #[inline]
    pub fn x2(&self, path: usize, index: isize) -> F {
        self.x2[path][self.grid.slot(index)]
    }
}

/// Euler discretization of the two variational equations along the base
/// pair, driven by the coefficient differences `Delta b`, `Delta sigma`,
/// `Delta sigma_x`, `Delta sigma_xd` of the spiked control.
pub fn simulate_variational<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
    spiked: &ControlProcess<F>,
    ens: &BrownianEnsemble<F>,
) -> Result<VariationPaths<F>> {
    let grid = paths.grid().clone();
    ens.check_grid(&grid)?;
    if !control.grid().same_as(&grid) || !spiked.grid().same_as(&grid) {
        return Err(Error::GridMismatch("controls on a different grid".into()));
    }
    let n = grid.n_steps() as isize;
    let m = grid.delay_shift() as isize;
    let h = grid.step();
    let half = F::of(0.5);

    let out: Vec<(Vec<F>, Vec<F>)> = par_map_paths(paths.n_paths(), |p| {
        let mut x1 = vec![F::zero(); grid.n_state_nodes()];
        let mut x2 = vec![F::zero(); grid.n_state_nodes()];
        for i in 0..n {
            let t = grid.time(i);
            let x = paths.x(p, i);
            let xd = paths.x(p, i - m);
            let u = control.v(p, i);
            let ud = control.v(p, i - m);
            let ue = spiked.v(p, i);
            let ued = spiked.v(p, i - m);

            let b_x = (problem.b_x)(t, x, xd, u, ud);
            let b_xd = (problem.b_xd)(t, x, xd, u, ud);
            let s_x = (problem.sigma_x)(t, x, xd, u, ud);
            let s_xd = (problem.sigma_xd)(t, x, xd, u, ud);
            let db = (problem.b)(t, x, xd, ue, ued) - (problem.b)(t, x, xd, u, ud);
            let ds = (problem.sigma)(t, x, xd, ue, ued) - (problem.sigma)(t, x, xd, u, ud);
            let ds_x = (problem.sigma_x)(t, x, xd, ue, ued) - s_x;
            let ds_xd = (problem.sigma_xd)(t, x, xd, ue, ued) - s_xd;

            let v1 = x1[grid.slot(i)];
            let v1d = x1[grid.slot(i - m)];
            let v2 = x2[grid.slot(i)];
            let v2d = x2[grid.slot(i - m)];
            let noise = ens.db(p, i);

            x1[grid.slot(i + 1)] =
                v1 + (b_x * v1 + b_xd * v1d + db) * h + (s_x * v1 + s_xd * v1d + ds) * noise;

            let b_xx = (problem.b_xx)(t, x, xd, u, ud);
            let b_xdxd = (problem.b_xdxd)(t, x, xd, u, ud);
            let b_xxd = (problem.b_xxd)(t, x, xd, u, ud);
            let s_xx = (problem.sigma_xx)(t, x, xd, u, ud);
            let s_xdxd = (problem.sigma_xdxd)(t, x, xd, u, ud);
            let s_xxd = (problem.sigma_xxd)(t, x, xd, u, ud);

            let drift2 = b_x * v2
                + b_xd * v2d
                + half * b_xx * v1 * v1
                + half * b_xdxd * v1d * v1d
                + b_xxd * v1 * v1d;
            let diff2 = s_x * v2
                + s_xd * v2d
                + half * s_xx * v1 * v1
                + half * s_xdxd * v1d * v1d
                + s_xxd * v1 * v1d
                + ds_x * v1
                + ds_xd * v1d;
            x2[grid.slot(i + 1)] = v2 + drift2 * h + diff2 * noise;
        }
        (x1, x2)
    });
    let (x1, x2) = out.into_iter().unzip();
    Ok(VariationPaths { grid, x1, x2 })
}

/// One row of the order study.
#[derive(Debug, Clone)]
pub struct OrderRow<F: Real> {
    pub eps: F,
    /// `E sup |x_eps - x|^2`
    pub m1: F,
    /// `E sup |x1|^2`
    pub m2: F,
    /// `E sup |x2|`
    pub m3: F,
    /// `E sup |x_eps - x - x1|^2`
    pub m4: F,
    /// `E sup |x_eps - x - x1 - x2|`
    pub m5: F,
}

#[derive(Debug, Clone)]
pub struct OrderStudy<F: Real> {
    pub rows: Vec<OrderRow<F>>,
    /// Log-log OLS slopes of (m1, ..., m5) against eps.
    pub slopes: [F; 5],
}

/// Runs the spike family over a list of widths and fits the scaling slopes.
/// Each width uses a seed derived from the base seed and the width, so the
/// sweep is reproducible and widths are independent.
pub fn order_study<F: Real>(
    problem: &DelayProblem<F>,
    control: &ControlProcess<F>,
    init: &InitialData<F>,
    tau: F,
    replacement: SpikeReplacement<F>,
    eps_steps_list: &[usize],
    grid: &TimeGrid<F>,
    n_paths: usize,
    seed: u64,
) -> Result<OrderStudy<F>> {
    if eps_steps_list.len() < 3 {
        return Err(Error::InsufficientEpsilons(eps_steps_list.len()));
    }
    let max = *eps_steps_list.iter().max().unwrap();
    let min = *eps_steps_list.iter().min().unwrap();
    if max < 4 * min {
        return Err(Error::InsufficientEpsilons(eps_steps_list.len()));
    }

    let mut rows = Vec::with_capacity(eps_steps_list.len());
    for (idx, &eps_steps) in eps_steps_list.iter().enumerate() {
        let derived_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(idx as u64 + 1));
        let ens = BrownianEnsemble::sample(grid, n_paths, derived_seed);
        let base = simulate(problem, control, init, grid, &ens)?;
        let s = SpikeSpec {
            tau,
            eps_steps,
            replacement: replacement.clone(),
        };
        let spiked_ctrl = spike(control, &s)?;
        let perturbed = simulate(problem, &spiked_ctrl, init, grid, &ens)?;
        let var = simulate_variational(problem, &base, control, &spiked_ctrl, &ens)?;

        let n = grid.n_steps() as isize;
        let sups: Vec<[F; 5]> = par_map_paths(n_paths, |p| {
            let mut s1 = F::zero();
            let mut s2 = F::zero();
            let mut s3 = F::zero();
            let mut s4 = F::zero();
            let mut s5 = F::zero();
            for i in 0..=n {
                let d = perturbed.x(p, i) - base.x(p, i);
                let x1 = var.x1(p, i);
                let x2 = var.x2(p, i);
                s1 = s1.max(d.abs());
                s2 = s2.max(x1.abs());
                s3 = s3.max(x2.abs());
                s4 = s4.max((d - x1).abs());
                s5 = s5.max((d - x1 - x2).abs());
            }
            [s1 * s1, s2 * s2, s3, s4 * s4, s5]
        });
        let col = |k: usize| {
            let vals: Vec<F> = sups.iter().map(|row| row[k]).collect();
            stats::mean(&vals)
        };
        rows.push(OrderRow {
            eps: F::from_index(eps_steps) * grid.step(),
            m1: col(0),
            m2: col(1),
            m3: col(2),
            m4: col(3),
            m5: col(4),
        });
    }

    let log_eps: Vec<F> = rows.iter().map(|r| r.eps.ln()).collect();
    let fit = |f: &dyn Fn(&OrderRow<F>) -> F| {
        let ys: Vec<F> = rows.iter().map(|r| f(r).ln()).collect();
        stats::ols_slope(&log_eps, &ys)
    };
    let slopes = [
        fit(&|r| r.m1),
        fit(&|r| r.m2),
        fit(&|r| r.m3),
        fit(&|r| r.m4),
        fit(&|r| r.m5),
    ];
    Ok(OrderStudy { rows, slopes })
}

/// Monte Carlo estimates of the two sides of the variational inequality and
/// the realized cost gap, all on common random numbers.
#[derive(Debug, Clone)]
pub struct VariationalGap<F: Real> {
    /// Full bracket: cost expansion through the variational processes.
    pub lhs_full: (F, F),
    /// Reduced bracket `E int [Delta l + p Delta b + q Delta sigma + P |Delta sigma|^2 / 2] dt`.
    pub lhs_reduced: (F, F),
    /// `J(u_eps) - J(u)` on the same ensemble.
    pub cost_gap: (F, F),
}

pub fn variational_gap<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
    s: &SpikeSpec<F>,
    adjoints: &AdjointBundle<F>,
    init: &InitialData<F>,
    ens: &BrownianEnsemble<F>,
) -> Result<VariationalGap<F>> {
    let grid = paths.grid().clone();
    if !adjoints.grid().same_as(&grid) {
        return Err(Error::GridMismatch("adjoints on a different grid".into()));
    }
    let spiked_ctrl = spike(control, s)?;
    let perturbed = simulate(problem, &spiked_ctrl, init, &grid, ens)?;
    let var = simulate_variational(problem, paths, control, &spiked_ctrl, ens)?;

    let n = grid.n_steps() as isize;
    let m = grid.delay_shift() as isize;
    let h = grid.step();
    let half = F::of(0.5);

    let per_path: Vec<(F, F)> = par_map_paths(paths.n_paths(), |p| {
        let mut full = KahanSum::new();
        let mut reduced = KahanSum::new();
        for i in 0..n {
            let t = grid.time(i);
            let x = paths.x(p, i);
            let xd = paths.x(p, i - m);
            let u = control.v(p, i);
            let ud = control.v(p, i - m);
            let ue = spiked_ctrl.v(p, i);
            let ued = spiked_ctrl.v(p, i - m);
            let dl = (problem.l)(t, x, xd, ue, ued) - (problem.l)(t, x, xd, u, ud);
            let db = (problem.b)(t, x, xd, ue, ued) - (problem.b)(t, x, xd, u, ud);
            let ds = (problem.sigma)(t, x, xd, ue, ued) - (problem.sigma)(t, x, xd, u, ud);
            let x1 = var.x1(p, i);
            let x1d = var.x1(p, i - m);
            let x2 = var.x2(p, i);
            let x2d = var.x2(p, i - m);
            full.add(
                (dl + (problem.l_x)(t, x, xd, u, ud) * (x1 + x2)
                    + (problem.l_xd)(t, x, xd, u, ud) * (x1d + x2d)
                    + half * (problem.l_xx)(t, x, xd, u, ud) * x1 * x1
                    + half * (problem.l_xdxd)(t, x, xd, u, ud) * x1d * x1d
                    + (problem.l_xxd)(t, x, xd, u, ud) * x1 * x1d)
                    * h,
            );
            let node = i as usize;
            reduced.add(
                (dl + adjoints.p(p, node) * db
                    + adjoints.q(p, node) * ds
                    + half * adjoints.big_p(p, node) * ds * ds)
                    * h,
            );
        }
        let x_t = paths.terminal(p);
        let x1_t = var.x1(p, n);
        let x2_t = var.x2(p, n);
        let full_val = full.value()
            + (problem.h_x)(x_t) * (x1_t + x2_t)
            + half * (problem.h_xx)(x_t) * x1_t * x1_t;
        (full_val, reduced.value())
    });

    let full: Vec<F> = per_path.iter().map(|v| v.0).collect();
    let reduced: Vec<F> = per_path.iter().map(|v| v.1).collect();
    let base_cost = cost_paths(problem, paths, control);
    let spiked_cost = cost_paths(problem, &perturbed, &spiked_ctrl);
    let gap: Vec<F> = spiked_cost
        .iter()
        .zip(&base_cost)
        .map(|(a, b)| *a - *b)
        .collect();

    Ok(VariationalGap {
        lhs_full: stats::mean_stderr(&full),
        lhs_reduced: stats::mean_stderr(&reduced),
        cost_gap: stats::mean_stderr(&gap),
    })
}

/// Monte Carlo estimate (mean, stderr) of the cross term
/// `E int_0^T x1(t) x1(t-d) [BRDE integrand](t) dt`, which vanishes under
/// the `K = 0` hypothesis.
pub fn cross_term_estimate<F: Real>(
    problem: &DelayProblem<F>,
    paths: &StatePaths<F>,
    control: &ControlProcess<F>,
    adjoints: &AdjointBundle<F>,
    var: &VariationPaths<F>,
) -> Result<(F, F)> {
    let grid = paths.grid();
    if !var.grid().same_as(grid) || !adjoints.grid().same_as(grid) {
        return Err(Error::GridMismatch("variational paths on a different grid".into()));
    }
    let coeffs = ThetaCoeffs::evaluate(problem, paths, control)?;
    let n = grid.n_steps() as isize;
    let m = grid.delay_shift() as isize;
    let h = grid.step();
    let vals: Vec<F> = par_map_paths(paths.n_paths(), |p| {
        let mut acc = KahanSum::new();
        for i in 0..n {
            let node = i as usize;
            let integrand = crate::adjoint::brde_integrand(
                &coeffs,
                adjoints.first(),
                adjoints.second(),
                p,
                node,
            );
            acc.add(var.x1(p, i) * var.x1(p, i - m) * integrand * h);
        }
        acc.value()
    });
    Ok(stats::mean_stderr(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absde::RegressionBasis;
    use crate::sdde::{coeff, terminal, ControlSet};

    fn grid() -> TimeGrid<f64> {
        TimeGrid::new(1.0, 0.25, 16).unwrap()
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

    #[test]
    fn empty_and_noop_spikes_are_identity() {
        let g = grid();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let base = ControlProcess::constant(&g, &init, -1.0);
        let empty = spike(&base, &SpikeSpec::constant(0.25, 0, 1.0)).unwrap();
        for i in -(g.delay_shift() as isize)..=g.n_steps() as isize {
            assert_eq!(empty.v(0, i), base.v(0, i));
        }
        let noop = spike(&base, &SpikeSpec::constant(0.25, 4, -1.0)).unwrap();
        for i in -(g.delay_shift() as isize)..=g.n_steps() as isize {
            assert_eq!(noop.v(0, i), base.v(0, i));
        }
    }

    #[test]
    fn spike_changes_exactly_the_window() {
        // tau = 0.2, eps = 0.1, h = 0.05 changes exactly two nodes
        let g = TimeGrid::new(1.0, 0.25, 5).unwrap();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let base = ControlProcess::constant(&g, &init, -1.0);
        let s = SpikeSpec::constant(0.2, 2, 1.0);
        let spiked = spike(&base, &s).unwrap();
        let mut changed = 0;
        for i in -(g.delay_shift() as isize)..=g.n_steps() as isize {
            if spiked.v(0, i) != base.v(0, i) {
                changed += 1;
                assert_eq!(spiked.v(0, i), 1.0);
            }
        }
        assert_eq!(changed, 2);
    }

    #[test]
    fn spike_out_of_range_is_rejected() {
        let g = grid();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let base = ControlProcess::constant(&g, &init, -1.0);
        assert!(matches!(
            spike(&base, &SpikeSpec::constant(0.9375, 5, 1.0)),
            Err(Error::SpikeOutOfRange { .. })
        ));
    }

    #[test]
    fn noop_spike_gives_zero_variation() {
        let g = grid();
        let prob = smooth_problem();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        let ens = BrownianEnsemble::sample(&g, 32, 3);
        let paths = simulate(&prob, &ctrl, &init, &g, &ens).unwrap();
        let var = simulate_variational(&prob, &paths, &ctrl, &ctrl, &ens).unwrap();
        for p in 0..32 {
            for i in 0..=g.n_steps() as isize {
                assert_eq!(var.x1(p, i), 0.0);
                assert_eq!(var.x2(p, i), 0.0);
            }
        }
    }

    #[test]
    fn spike_locality_no_backward_influence() {
        let g = grid();
        let prob = smooth_problem();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        let s = SpikeSpec::constant(0.5, 4, 1.0);
        let spiked_ctrl = spike(&ctrl, &s).unwrap();
        let ens = BrownianEnsemble::sample(&g, 16, 5);
        let base = simulate(&prob, &ctrl, &init, &g, &ens).unwrap();
        let pert = simulate(&prob, &spiked_ctrl, &init, &g, &ens).unwrap();
        let i_tau = g.index_of(0.5);
        for p in 0..16 {
            for i in -(g.delay_shift() as isize)..=i_tau {
                assert_eq!(base.x(p, i), pert.x(p, i), "backward influence at {i}");
            }
        }
    }

    #[test]
    fn lq_drift_only_first_variation_is_exact() {
        // b = M v + Mbar v_delta with no state dependence and sigma without
        // controls: x1 integrates Delta b exactly, so x1(T) is
        // (M + Mbar) (v - u) eps when both windows fit in [0, T].
        let g = grid();
        let (m_lin, m_bar) = (2.0, 2.0);
        let mut prob = DelayProblem::new(
            coeff(move |_, _, _, v, vd| m_lin * v + m_bar * vd),
            coeff(|_, _, _, _, _| 0.0),
            coeff(|_, _, _, v, _| v * v),
            terminal(|x| x),
            ControlSet::two_rays(1.0),
        );
        prob.h_x = terminal(|_| 1.0);
        let init = InitialData::constant(&g, 0.0, -1.0);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        let eps_steps = 4;
        let s = SpikeSpec::constant(0.25, eps_steps, 1.0);
        let spiked_ctrl = spike(&ctrl, &s).unwrap();
        let ens = BrownianEnsemble::sample(&g, 4, 7);
        let paths = simulate(&prob, &ctrl, &init, &g, &ens).unwrap();
        let var = simulate_variational(&prob, &paths, &ctrl, &spiked_ctrl, &ens).unwrap();
        let eps = s.eps(&g);
        let expected = (m_lin + m_bar) * 2.0 * eps;
        for p in 0..4 {
            assert!(
                (var.x1(p, g.n_steps() as isize) - expected).abs() < 1e-12,
                "x1(T) = {}",
                var.x1(p, g.n_steps() as isize)
            );
            assert_eq!(var.x1(p, 0), 0.0);
        }
    }

    #[test]
    fn drift_only_spike_scales_quadratically() {
        // With b = v and sigma = 0 the spike displaces the path by exactly
        // (v - u) * eps, so m1 = ((v - u) eps)^2 and the slope is 2.
        let g = grid();
        let prob = DelayProblem::new(
            coeff(|_, _, _, v, _| v),
            coeff(|_, _, _, _, _| 0.0),
            coeff(|_, _, _, _, _| 0.0),
            terminal(|x| x),
            ControlSet::two_rays(1.0),
        );
        let init = InitialData::constant(&g, 0.0, -1.0);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        let study = order_study(
            &prob,
            &ctrl,
            &init,
            0.25,
            SpikeReplacement::Constant(1.0),
            &[2, 4, 8, 16],
            &g,
            64,
            11,
        )
        .unwrap();
        assert!(
            (study.slopes[0] - 2.0).abs() < 1e-9,
            "m1 slope {}",
            study.slopes[0]
        );
    }

    #[test]
    fn order_separation_on_smooth_problem() {
        let g = TimeGrid::new(1.0, 0.25, 16).unwrap();
        let prob = smooth_problem();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        let study = order_study(
            &prob,
            &ctrl,
            &init,
            0.25,
            SpikeReplacement::Constant(1.0),
            &[2, 4, 8, 16],
            &g,
            2000,
            13,
        )
        .unwrap();
        assert!(
            study.slopes[0] > 0.7 && study.slopes[0] < 1.3,
            "m1 slope {}",
            study.slopes[0]
        );
        assert!(
            study.slopes[3] - study.slopes[0] >= 0.3,
            "m4 slope {} vs m1 slope {}",
            study.slopes[3],
            study.slopes[0]
        );
    }

    #[test]
    fn too_few_epsilons_is_an_error() {
        let g = grid();
        let prob = smooth_problem();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        assert!(matches!(
            order_study(
                &prob,
                &ctrl,
                &init,
                0.25,
                SpikeReplacement::Constant(1.0),
                &[4, 8],
                &g,
                64,
                1
            ),
            Err(Error::InsufficientEpsilons(2))
        ));
    }

    #[test]
    fn noop_spike_gap_is_zero() {
        let g = grid();
        let prob = smooth_problem();
        let init = InitialData::constant(&g, 0.0, -1.0);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        let ens = BrownianEnsemble::sample(&g, 64, 9);
        let paths = simulate(&prob, &ctrl, &init, &g, &ens).unwrap();
        let adjoints = AdjointBundle::solve(
            &prob,
            &paths,
            &ctrl,
            &ens,
            &RegressionBasis::polynomial(2),
        )
        .unwrap();
        let s = SpikeSpec::constant(0.25, 4, -1.0);
        let gap = variational_gap(&prob, &paths, &ctrl, &s, &adjoints, &init, &ens).unwrap();
        assert!(gap.lhs_full.0.abs() < 1e-12);
        assert!(gap.lhs_reduced.0.abs() < 1e-12);
        assert!(gap.cost_gap.0.abs() < 1e-12);
    }
}
