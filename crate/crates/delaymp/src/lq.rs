//! A linear-quadratic benchmark with delayed state and control that is
//! solvable in closed form.
//!
//! ```text
//! dX(t) = [M v(t) + Mbar v(t-d)] dt + [C X(t-d) + D v(t) + Dbar v(t-d)] dB(t)
//! J(v)  = E[ int_0^T (N v(t)^2 + Nbar v(t-d)^2) dt + X(T) ]
//! U     = (-inf, -1] U [1, inf)
//! ```
//!
//! The adjoints are `p = 1` and `q = P = Q = K = 0` identically, and the
//! maximum condition yields the deterministic optimal control
//! `u(t) = -(M + Mbar 1_{t < T-d}) / (2 (N + Nbar 1_{t < T-d}))`. With
//! `M = Mbar = 2`, `N = Nbar = 1` this is `u = -1`, which sits on the
//! boundary of the nonconvex control set.

use crate::adjoint::AdjointBundle;
use crate::brownian::BrownianEnsemble;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::real::Real;
use crate::sdde::{
    coeff, cost_paths, simulate, terminal, ControlProcess, ControlSet, DelayProblem, InitialData,
};
use crate::stats::{self, KahanSum};

/// Coefficients of the benchmark. `eta` is the constant control history on
/// `[-d, 0)` and `phi0` the constant initial state.
#[derive(Debug, Clone, Copy)]
pub struct LqParams<F: Real> {
    pub m_lin: F,
    pub m_bar: F,
    pub c: F,
    pub d: F,
    pub d_bar: F,
    pub n_lin: F,
    pub n_bar: F,
    pub phi0: F,
    pub eta: F,
    pub horizon: F,
    pub delta: F,
}

impl<F: Real> LqParams<F> {
    /// The worked example: `M = Mbar = 2`, `N = Nbar = 1`, optimal control
    /// `u = -1`, plus a small delayed diffusion so the state is genuinely
    /// stochastic.
    pub fn example() -> Self {
        Self {
            m_lin: F::of(2.0),
            m_bar: F::of(2.0),
            c: F::of(0.2),
            d: F::of(0.1),
            d_bar: F::of(0.1),
            n_lin: F::one(),
            n_bar: F::one(),
            phi0: F::zero(),
            eta: F::of(-1.0),
            horizon: F::one(),
            delta: F::of(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lin <= F::zero() || self.n_bar <= F::zero() {
            return Err(Error::Config("LQ weights N and Nbar must be positive".into()));
        }
        if self.delta <= F::zero() || self.delta > self.horizon {
            return Err(Error::Config("LQ delay must lie in (0, T]".into()));
        }
        Ok(())
    }

    /// The controlled problem with all partials filled in.
    pub fn to_problem(&self) -> DelayProblem<F> {
        let (m_lin, m_bar) = (self.m_lin, self.m_bar);
        let (c, d, d_bar) = (self.c, self.d, self.d_bar);
        let (n_lin, n_bar) = (self.n_lin, self.n_bar);
        let mut p = DelayProblem::new(
            coeff(move |_, _, _, v, vd| m_lin * v + m_bar * vd),
            coeff(move |_, _, xd, v, vd| c * xd + d * v + d_bar * vd),
            coeff(move |_, _, _, v, vd| n_lin * v * v + n_bar * vd * vd),
            terminal(|x| x),
            ControlSet::two_rays(F::one()),
        );
        p.sigma_xd = coeff(move |_, _, _, _, _| c);
        p.h_x = terminal(|_| F::one());
        p
    }

    pub fn grid(&self, steps_per_delay: usize) -> Result<TimeGrid<F>> {
        TimeGrid::new(self.horizon, self.delta, steps_per_delay)
    }

    pub fn initial_data(&self, grid: &TimeGrid<F>) -> InitialData<F> {
        InitialData::constant(grid, self.phi0, self.eta)
    }

    /// The closed-form optimal control at time `tau`, from the maximum
    /// condition: `-(M + Mbar I) / (2 (N + Nbar I))` with the half-open
    /// indicator of `[0, T - d)`.
    pub fn closed_form_control(&self, tau: F) -> F {
        let two = F::of(2.0);
        if tau < self.horizon - self.delta {
            -(self.m_lin + self.m_bar) / (two * (self.n_lin + self.n_bar))
        } else {
            -self.m_lin / (two * self.n_lin)
        }
    }

    /// Whether the closed-form control lies in the control set on both
    /// regimes; the maximum condition only selects it when it is admissible.
    pub fn optimum_admissible(&self) -> bool {
        let set = ControlSet::two_rays(F::one());
        set.contains(self.closed_form_control(F::zero()))
            && set.contains(self.closed_form_control(self.horizon))
    }

    /// The candidate control on a grid: the closed-form optimum with `eta`
    /// history.
    pub fn candidate(&self, grid: &TimeGrid<F>) -> ControlProcess<F> {
        let init = self.initial_data(grid);
        let this = *self;
        ControlProcess::deterministic(grid, &init, move |t| this.closed_form_control(t))
    }

    /// Exact cost of a constant control `v` on `[0, T]` (with the `eta`
    /// history): the diffusion is mean-zero, so
    ///
    /// ```text
    /// J(v) = N T v^2 + Nbar (d eta^2 + (T-d) v^2) + phi0
    ///        + M T v + Mbar (d eta + (T-d) v)
    /// ```
    pub fn cost_exact_constant(&self, v: F) -> F {
        let t = self.horizon;
        let d = self.delta;
        let e = self.eta;
        self.n_lin * t * v * v
            + self.n_bar * (d * e * e + (t - d) * v * v)
            + self.phi0
            + self.m_lin * t * v
            + self.m_bar * (d * e + (t - d) * v)
    }

    /// Exact cost of any deterministic control, by the same left-endpoint
    /// quadrature the simulator uses; for piecewise-constant controls whose
    /// jumps sit on grid nodes this equals the continuous-time value.
    pub fn cost_exact_control(&self, ctrl: &ControlProcess<F>) -> F {
        let grid = ctrl.grid();
        let m = grid.delay_shift() as isize;
        let h = grid.step();
        let mut acc = KahanSum::new();
        acc.add(self.phi0);
        for i in 0..grid.n_steps() as isize {
            let v = ctrl.v(0, i);
            let vd = ctrl.v(0, i - m);
            acc.add((self.n_lin * v * v + self.n_bar * vd * vd) * h);
            acc.add((self.m_lin * v + self.m_bar * vd) * h);
        }
        acc.value()
    }

    /// Monte Carlo cost `(estimate, stderr)` of a control.
    pub fn cost_mc(
        &self,
        ctrl: &ControlProcess<F>,
        grid: &TimeGrid<F>,
        ens: &BrownianEnsemble<F>,
    ) -> Result<(F, F)> {
        let problem = self.to_problem();
        let init = self.initial_data(grid);
        let paths = simulate(&problem, ctrl, &init, grid, ens)?;
        Ok(stats::mean_stderr(&cost_paths(&problem, &paths, ctrl)))
    }
}

/// The closed-form adjoints `p = 1`, `q = P = Q = K = 0` on `[0, T + d]`.
pub fn lq_exact_adjoints<F: Real>(grid: &TimeGrid<F>, n_paths: usize) -> AdjointBundle<F> {
    AdjointBundle::from_constants(
        grid,
        n_paths,
        F::one(),
        F::zero(),
        F::zero(),
        F::zero(),
        F::zero(),
    )
}

/// One alternative in an optimality comparison.
#[derive(Debug, Clone)]
pub struct LqGap<F: Real> {
    pub label: String,
    /// Monte Carlo `J(alt) - J(u)` on common random numbers, with stderr.
    pub gap_mc: F,
    pub stderr: F,
    /// The deterministic value of the same gap.
    pub gap_exact: F,
    pub pass: bool,
}

/// Cost-gap comparison of the closed-form candidate against constant
/// alternatives.
#[derive(Debug, Clone)]
pub struct OptimalityReport<F: Real> {
    pub candidate_early: F,
    pub candidate_late: F,
    pub candidate_cost: F,
    pub gaps: Vec<LqGap<F>>,
    pub pass: bool,
}

impl<F: Real> OptimalityReport<F> {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "candidate u = {} on [0, T-d), u = {} on [T-d, T]; J(u) = {:.6}\n",
            self.candidate_early, self.candidate_late, self.candidate_cost.as_f64()
        );
        for g in &self.gaps {
            s.push_str(&format!(
                "  {:>16}: J(v) - J(u) = {:.4} +/- {:.4} (exact {:.4}) {}\n",
                g.label,
                g.gap_mc.as_f64(),
                g.stderr.as_f64(),
                g.gap_exact.as_f64(),
                if g.pass { "ok" } else { "FAIL" }
            ));
        }
        s.push_str(if self.pass {
            "all alternatives cost at least as much as the candidate"
        } else {
            "OPTIMALITY CHECK FAILED"
        });
        s
    }
}

/// Labeled constant alternatives on a grid.
pub fn constant_alternatives<F: Real>(
    params: &LqParams<F>,
    grid: &TimeGrid<F>,
    values: &[F],
) -> Vec<(String, ControlProcess<F>)> {
    let init = params.initial_data(grid);
    values
        .iter()
        .map(|&v| (format!("v = {v}"), ControlProcess::constant(grid, &init, v)))
        .collect()
}

/// Simulates the candidate and each deterministic alternative on the same
/// Brownian ensemble and checks that every cost gap is nonnegative and
/// agrees with its deterministic value within three standard errors.
pub fn verify_optimality<F: Real>(
    params: &LqParams<F>,
    grid: &TimeGrid<F>,
    alternatives: &[(String, ControlProcess<F>)],
    n_paths: usize,
    seed: u64,
) -> Result<OptimalityReport<F>> {
    params.validate()?;
    let problem = params.to_problem();
    for (_, alt) in alternatives {
        if let Some(bad) = alt.admissible(&problem.control_set) {
            return Err(Error::InadmissibleAlternative(bad.as_f64()));
        }
    }
    let init = params.initial_data(grid);
    let ens = BrownianEnsemble::sample(grid, n_paths, seed);
    let candidate = params.candidate(grid);
    let base = simulate(&problem, &candidate, &init, grid, &ens)?;
    let base_costs = cost_paths(&problem, &base, &candidate);
    let (base_cost, _) = stats::mean_stderr(&base_costs);
    let candidate_exact = params.cost_exact_control(&candidate);

    let three = F::of(3.0);
    let mut gaps = Vec::with_capacity(alternatives.len());
    let mut pass = true;
    for (label, alt) in alternatives {
        let alt_paths = simulate(&problem, alt, &init, grid, &ens)?;
        let alt_costs = cost_paths(&problem, &alt_paths, alt);
        let diffs: Vec<F> = alt_costs
            .iter()
            .zip(&base_costs)
            .map(|(a, b)| *a - *b)
            .collect();
        let (gap_mc, stderr) = stats::mean_stderr(&diffs);
        let gap_exact = params.cost_exact_control(alt) - candidate_exact;
        let ok = gap_mc >= -three * stderr && (gap_mc - gap_exact).abs() <= three * stderr;
        pass &= ok;
        gaps.push(LqGap {
            label: label.clone(),
            gap_mc,
            stderr,
            gap_exact,
            pass: ok,
        });
    }
    Ok(OptimalityReport {
        candidate_early: params.closed_form_control(F::zero()),
        candidate_late: params.closed_form_control(grid.horizon()),
        candidate_cost: base_cost,
        gaps,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absde::RegressionBasis;

    #[test]
    fn example_optimal_control_is_minus_one() {
        let p = LqParams::<f64>::example();
        assert_eq!(p.closed_form_control(0.0), -1.0);
        assert_eq!(p.closed_form_control(0.25), -1.0);
        assert_eq!(p.closed_form_control(0.75), -1.0);
        assert!(p.optimum_admissible());
    }

    #[test]
    fn exact_cost_matches_closed_form() {
        // With eta = -1 fixed: J(v) = 1.5 v^2 + 3 v - 0.5.
        let p = LqParams::<f64>::example();
        for v in [-2.0, -1.0, 1.0, 3.0] {
            let expected = 1.5 * v * v + 3.0 * v - 0.5;
            assert!((p.cost_exact_constant(v) - expected).abs() < 1e-12);
        }
        // candidate gap against v = 1 is J(1) - J(-1) = 4 - (-2) = 6
        assert!((p.cost_exact_constant(1.0) - p.cost_exact_constant(-1.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_cost_matches_continuous_value() {
        // Constant controls with jumps on grid nodes: left-endpoint
        // quadrature is exact.
        let p = LqParams::<f64>::example();
        let g = p.grid(8).unwrap();
        let init = p.initial_data(&g);
        for v in [-1.0, 1.0] {
            let ctrl = ControlProcess::constant(&g, &init, v);
            assert!((p.cost_exact_control(&ctrl) - p.cost_exact_constant(v)).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_cost_agrees_with_exact() {
        let p = LqParams::<f64>::example();
        let g = p.grid(8).unwrap();
        let init = p.initial_data(&g);
        let ctrl = ControlProcess::constant(&g, &init, -1.0);
        let ens = BrownianEnsemble::sample(&g, 4000, 23);
        let (est, se) = p.cost_mc(&ctrl, &g, &ens).unwrap();
        let exact = p.cost_exact_constant(-1.0);
        assert!(
            (est - exact).abs() <= 3.0 * se.max(1e-6),
            "MC {est} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn solved_adjoints_approach_closed_form() {
        let params = LqParams::<f64>::example();
        let g = params.grid(8).unwrap();
        let prob = params.to_problem();
        let init = params.initial_data(&g);
        let ctrl = params.candidate(&g);
        let ens = BrownianEnsemble::sample(&g, 2000, 29);
        let paths = simulate(&prob, &ctrl, &init, &g, &ens).unwrap();
        let bundle = AdjointBundle::solve(
            &prob,
            &paths,
            &ctrl,
            &ens,
            &RegressionBasis::polynomial(2),
        )
        .unwrap();
        for node in 0..=g.n_steps() {
            let (p, q, big_p, big_q, _) = bundle.means(node);
            assert!((p - 1.0).abs() < 5e-2, "p({node}) = {p}");
            assert!(q.abs() < 5e-2, "q({node}) = {q}");
            assert!(big_p.abs() < 5e-2, "P({node}) = {big_p}");
            assert!(big_q.abs() < 5e-2, "Q({node}) = {big_q}");
        }
        assert!(bundle.check_k(1e-2).pass);
    }

    #[test]
    fn optimality_holds_against_admissible_alternatives() {
        let p = LqParams::<f64>::example();
        let g = p.grid(8).unwrap();
        let alts = constant_alternatives(&p, &g, &[1.0, -2.0, 2.0]);
        let report = verify_optimality(&p, &g, &alts, 2000, 41).unwrap();
        assert!(report.pass, "{}", report.summary());
        assert_eq!(report.candidate_early, -1.0);
        assert!((report.gaps[0].gap_exact - 6.0).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_alternative_is_rejected() {
        let p = LqParams::<f64>::example();
        let g = p.grid(8).unwrap();
        let alts = constant_alternatives(&p, &g, &[0.5]);
        assert!(matches!(
            verify_optimality(&p, &g, &alts, 64, 1),
            Err(Error::InadmissibleAlternative(_))
        ));
    }

    #[test]
    fn bad_params_are_rejected() {
        let mut p = LqParams::<f64>::example();
        p.n_lin = 0.0;
        assert!(p.validate().is_err());
        let mut p2 = LqParams::<f64>::example();
        p2.delta = 2.0;
        assert!(p2.validate().is_err());
    }
}
