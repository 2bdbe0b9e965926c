//! Return-constrained diversification-ratio maximization and the
//! minimum-risk baselines.
//!
//! Maximizing `DR(x) = sum_i x_i rho_i / rho(x)` over the simplex is a
//! concave-convex fractional program. Substituting `y = t x` with
//! `t = 1 / sum_i x_i rho_i` turns it into
//!
//! ```text
//!     minimize    rho(y)
//!     subject to  sum_i rho_i y_i = 1
//!                 sum_i mu_i y_i >= eta * sum_i y_i
//!                 y >= 0
//! ```
//!
//! whose optimal value is `1 / DR*`; the portfolio is `y* / sum_k y*_k`.
//! This needs every `rho_i > 0`. For each measure `rho(y)` is written as a
//! QP (volatility) or an LP with auxiliary scenario variables (MAD, CVaR,
//! expectile). The minimum-risk programs reuse the same encodings with
//! `sum_i x_i = 1` in place of the normalization row.

use ndarray::Array1;
use rayon::prelude::*;
use thiserror::Error;

use crate::diversification::{ratio_from_parts, DrError};
use crate::risk::{asset_risks, risk, Portfolio, RiskError, RiskKind, RiskSpec};
use crate::scalar::{numerically_zero, tail_count, Scalar};
use crate::scenarios::ScenarioMatrix;
use crate::solver::{InteriorPoint, MathProgram, ProgramError, SolveStatus, SolverBackend};

/// Absolute slack on the return constraint, absorbing solver round-off at
/// `eta = eta_max`.
pub const RETURN_RELAXATION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("Schaible transform requires positive asset risks: asset {asset} has risk {value}")]
    NonPositiveAssetRisk { asset: usize, value: f64 },
    #[error("target return unattainable: eta {eta} exceeds eta_max {eta_max}")]
    TargetUnattainable { eta: f64, eta_max: f64 },
    #[error("solver failed ({status:?}): {detail}")]
    Solver { status: SolveStatus, detail: String },
    #[error("invalid target policy: {0}")]
    InvalidPolicy(String),
    #[error("frontier needs at least 2 grid points, got {0}")]
    GridTooSmall(usize),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Dr(#[from] DrError),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

impl OptimizerError {
    pub fn is_infeasible_target(&self) -> bool {
        matches!(self, OptimizerError::TargetUnattainable { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemFamily {
    /// Maximize the diversification ratio.
    MaxDiversification,
    /// Minimize the risk measure.
    MinRisk,
}

/// How the target return `eta` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetPolicy<T> {
    Unconstrained,
    /// `eta = eta_min + f (eta_max - eta_min)` with `f` in [0, 1].
    Fraction(T),
    Absolute(T),
}

/// Column layout of a built program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgramLayout {
    pub kind: RiskKind,
    pub n_assets: usize,
    pub n_scenarios: usize,
}

impl ProgramLayout {
    fn aux(&self) -> usize {
        self.n_assets
    }

    pub fn weights(&self) -> std::ops::Range<usize> {
        0..self.n_assets
    }

    /// `d` for MAD and CVaR, `d+` for the expectile.
    pub fn deviations(&self) -> Option<std::ops::Range<usize>> {
        match self.kind {
            RiskKind::Volatility => None,
            _ => Some(self.aux()..self.aux() + self.n_scenarios),
        }
    }

    /// `d-` for the expectile.
    pub fn negative_parts(&self) -> Option<std::ops::Range<usize>> {
        match self.kind {
            RiskKind::Expectile => {
                let s = self.aux() + self.n_scenarios;
                Some(s..s + self.n_scenarios)
            }
            _ => None,
        }
    }

    /// Index of the free threshold variable (CVaR `zeta`, expectile `zeta_alpha`).
    pub fn threshold(&self) -> Option<usize> {
        match self.kind {
            RiskKind::Cvar => Some(self.aux() + self.n_scenarios),
            RiskKind::Expectile => Some(self.aux() + 2 * self.n_scenarios),
            _ => None,
        }
    }

    pub fn n_vars(&self) -> usize {
        match self.kind {
            RiskKind::Volatility => self.n_assets,
            RiskKind::Mad => self.n_assets + self.n_scenarios,
            RiskKind::Cvar => self.n_assets + self.n_scenarios + 1,
            RiskKind::Expectile => self.n_assets + 2 * self.n_scenarios + 1,
        }
    }
}

/// A built program plus what is needed to interpret its solution.
#[derive(Debug, Clone)]
pub struct BuiltProgram<T> {
    pub program: MathProgram<T>,
    pub layout: ProgramLayout,
    pub family: ProblemFamily,
    pub eta: Option<T>,
}

impl<T: Scalar> BuiltProgram<T> {
    /// Risk value implied by an objective value: the QP reports variance.
    pub fn risk_from_objective(&self, objective: T) -> T {
        match self.layout.kind {
            RiskKind::Volatility => objective.max(T::zero()).sqrt(),
            _ => objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSummary<T> {
    pub status: SolveStatus,
    pub objective: T,
    pub kkt_residual: T,
    pub primal_residual: T,
    pub iterations: u32,
}

#[derive(Debug, Clone)]
pub struct OptimizationOutcome<T> {
    pub family: ProblemFamily,
    pub eta: Option<T>,
    pub portfolio: Portfolio<T>,
    /// Transformed weights `y` (DR programs) or `x` (min-risk programs).
    pub raw_solution: Array1<T>,
    /// Full solver vector, auxiliary variables included.
    pub program_solution: Array1<T>,
    pub layout: ProgramLayout,
    /// `rho(x)` evaluated directly on the portfolio.
    pub achieved_risk: T,
    pub achieved_return: T,
    /// Present whenever the ratio is defined for the portfolio.
    pub achieved_dr: Option<T>,
    /// Risk of `raw_solution` as implied by the solver objective.
    pub objective_risk: T,
    pub solver: SolverSummary<T>,
}

fn check_schaible<T: Scalar>(s: &ScenarioMatrix<T>, rho: &Array1<T>) -> Result<(), OptimizerError> {
    for (i, &r) in rho.iter().enumerate() {
        let col = s.asset(i).to_vec();
        if !(r > T::zero()) || numerically_zero(r, &col) {
            return Err(OptimizerError::NonPositiveAssetRisk { asset: i, value: r.to_f64_lossy() });
        }
    }
    Ok(())
}

fn build<T: Scalar>(
    s: &ScenarioMatrix<T>,
    spec: &RiskSpec<T>,
    family: ProblemFamily,
    eta: Option<T>,
    rho: Option<&Array1<T>>,
) -> Result<BuiltProgram<T>, OptimizerError> {
    let n = s.n_assets();
    let t = s.n_scenarios();
    let layout = ProgramLayout { kind: spec.kind(), n_assets: n, n_scenarios: t };
    let mut p = MathProgram::new(layout.n_vars());
    let r = s.returns();
    let mu = s.mean_returns();
    let tt = T::from_count(t);

    match *spec {
        RiskSpec::Volatility => {
            p.set_quad(s.covariance().clone());
        }
        RiskSpec::Mad => {
            let d = layout.deviations().expect("mad layout");
            for k in 0..t {
                let dk = d.start + k;
                p.set_cost(dk, T::one() / tt);
                let centred: Vec<(usize, T)> = (0..n).map(|i| (i, r[[k, i]] - mu[i])).collect();
                let mut up = vec![(dk, T::one())];
                up.extend(centred.iter().map(|&(i, c)| (i, -c)));
                p.add_ineq(up, T::zero());
                let mut down = vec![(dk, T::one())];
                down.extend(centred.iter().copied());
                p.add_ineq(down, T::zero());
            }
        }
        RiskSpec::Cvar { epsilon } => {
            let j = tail_count(epsilon, t);
            if j == 0 {
                return Err(RiskError::EpsilonTooSmall { epsilon: epsilon.to_f64_lossy(), scenarios: t }.into());
            }
            let d = layout.deviations().expect("cvar layout");
            let z = layout.threshold().expect("cvar layout");
            p.set_free(z).set_cost(z, T::one());
            // 1/(eps T) with eps T replaced by its rounded value j, so the LP
            // value is the mean of the j worst scenarios.
            let w = T::one() / T::from_count(j);
            for k in 0..t {
                let dk = d.start + k;
                p.set_cost(dk, w);
                let mut row = vec![(dk, T::one()), (z, T::one())];
                row.extend((0..n).map(|i| (i, r[[k, i]])));
                p.add_ineq(row, T::zero());
            }
        }
        RiskSpec::Expectile { alpha } => {
            let dp = layout.deviations().expect("expectile layout");
            let dm = layout.negative_parts().expect("expectile layout");
            let z = layout.threshold().expect("expectile layout");
            p.set_free(z).set_cost(z, T::one());
            let mut balance = Vec::with_capacity(2 * t);
            for k in 0..t {
                balance.push((dp.start + k, alpha));
                balance.push((dm.start + k, -(T::one() - alpha)));
            }
            p.add_eq(balance, T::zero());
            // -sum_i r_i y_i - zeta = d+ - d-
            for k in 0..t {
                let mut row: Vec<(usize, T)> = (0..n).map(|i| (i, r[[k, i]])).collect();
                row.push((z, T::one()));
                row.push((dp.start + k, T::one()));
                row.push((dm.start + k, -T::one()));
                p.add_eq(row, T::zero());
            }
        }
    }

    let relax = T::lit(RETURN_RELAXATION);
    match family {
        ProblemFamily::MaxDiversification => {
            let rho = rho.expect("asset risks for DR program");
            p.add_eq((0..n).map(|i| (i, rho[i])).collect(), T::one());
            if let Some(eta) = eta {
                let target = eta - relax;
                p.add_ineq((0..n).map(|i| (i, mu[i] - target)).collect(), T::zero());
            }
        }
        ProblemFamily::MinRisk => {
            p.add_eq((0..n).map(|i| (i, T::one())).collect(), T::one());
            if let Some(eta) = eta {
                p.add_ineq((0..n).map(|i| (i, mu[i])).collect(), eta - relax);
            }
        }
    }
    Ok(BuiltProgram { program: p, layout, family, eta })
}

/// The transformed DR program for `spec`, with the return row when `eta` is given.
pub fn build_dr_problem<T: Scalar>(
    s: &ScenarioMatrix<T>,
    spec: &RiskSpec<T>,
    eta: Option<T>,
) -> Result<BuiltProgram<T>, OptimizerError> {
    let rho = asset_risks(s, spec)?;
    check_schaible(s, &rho)?;
    build(s, spec, ProblemFamily::MaxDiversification, eta, Some(&rho))
}

/// The direct minimum-risk program on the simplex.
pub fn build_minrisk_problem<T: Scalar>(
    s: &ScenarioMatrix<T>,
    spec: &RiskSpec<T>,
    eta: Option<T>,
) -> Result<BuiltProgram<T>, OptimizerError> {
    build(s, spec, ProblemFamily::MinRisk, eta, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaBounds<T> {
    pub eta_min: T,
    pub eta_max: T,
}

impl<T: Scalar> EtaBounds<T> {
    pub fn at_fraction(&self, f: T) -> T {
        self.eta_min + f * (self.eta_max - self.eta_min)
    }
}

/// Solves programs for one scenario set and one measure.
#[derive(Debug, Clone, Default)]
pub struct Optimizer<B = InteriorPoint> {
    backend: B,
}

impl<B: SolverBackend> Optimizer<B> {
    pub fn with_backend(backend: B) -> Self {
        Self { backend }
    }

    fn run<T: Scalar>(
        &self,
        s: &ScenarioMatrix<T>,
        spec: &RiskSpec<T>,
        built: BuiltProgram<T>,
    ) -> Result<OptimizationOutcome<T>, OptimizerError> {
        let res = self.backend.solve(&built.program);
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible if built.eta.is_some() => {
                let eta_max = s.mean_returns().iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                return Err(OptimizerError::TargetUnattainable {
                    eta: built.eta.unwrap().to_f64_lossy(),
                    eta_max: eta_max.to_f64_lossy(),
                });
            }
            status => return Err(OptimizerError::Solver { status, detail: res.diagnostics.unwrap_or_default() }),
        }
        let raw = res.v.slice(ndarray::s![built.layout.weights()]).to_owned();
        let portfolio = Portfolio::normalized(raw.view())?;
        let achieved_risk = risk(s, portfolio.view(), spec)?;
        let achieved_return = s.mean_returns().dot(portfolio.weights());
        let rho = asset_risks(s, spec)?;
        let achieved_dr = ratio_from_parts(rho.view(), portfolio.view(), achieved_risk).ok().map(|d| d.ratio);
        Ok(OptimizationOutcome {
            family: built.family,
            eta: built.eta,
            portfolio,
            raw_solution: raw,
            objective_risk: built.risk_from_objective(res.objective),
            program_solution: res.v,
            layout: built.layout,
            achieved_risk,
            achieved_return,
            achieved_dr,
            solver: SolverSummary {
                status: res.status,
                objective: res.objective,
                kkt_residual: res.kkt_residual,
                primal_residual: res.primal_residual,
                iterations: res.iterations,
            },
        })
    }

    fn solve_at<T: Scalar>(
        &self,
        s: &ScenarioMatrix<T>,
        spec: &RiskSpec<T>,
        family: ProblemFamily,
        eta: Option<T>,
    ) -> Result<OptimizationOutcome<T>, OptimizerError> {
        if let Some(eta) = eta {
            let eta_max = eta_max(s);
            if eta > eta_max + T::lit(RETURN_RELAXATION) {
                return Err(OptimizerError::TargetUnattainable {
                    eta: eta.to_f64_lossy(),
                    eta_max: eta_max.to_f64_lossy(),
                });
            }
        }
        let built = match family {
            ProblemFamily::MaxDiversification => build_dr_problem(s, spec, eta)?,
            ProblemFamily::MinRisk => build_minrisk_problem(s, spec, eta)?,
        };
        self.run(s, spec, built)
    }

    /// Solves `family` under `policy`. Fraction policies first solve the
    /// unconstrained program to locate `eta_min`.
    pub fn solve<T: Scalar>(
        &self,
        s: &ScenarioMatrix<T>,
        spec: &RiskSpec<T>,
        family: ProblemFamily,
        policy: TargetPolicy<T>,
    ) -> Result<OptimizationOutcome<T>, OptimizerError> {
        match policy {
            TargetPolicy::Unconstrained => self.solve_at(s, spec, family, None),
            TargetPolicy::Absolute(eta) => self.solve_at(s, spec, family, Some(eta)),
            TargetPolicy::Fraction(f) => {
                if !(f >= T::zero() && f <= T::one()) {
                    return Err(OptimizerError::InvalidPolicy(format!("fraction {f} not in [0,1]")));
                }
                let base = self.solve_at(s, spec, family, None)?;
                if f == T::zero() {
                    return Ok(base);
                }
                let bounds = EtaBounds { eta_min: base.achieved_return, eta_max: eta_max(s) };
                self.solve_at(s, spec, family, Some(bounds.at_fraction(f)))
            }
        }
    }

    pub fn eta_bounds<T: Scalar>(
        &self,
        s: &ScenarioMatrix<T>,
        spec: &RiskSpec<T>,
        family: ProblemFamily,
    ) -> Result<EtaBounds<T>, OptimizerError> {
        let base = self.solve_at(s, spec, family, None)?;
        Ok(EtaBounds { eta_min: base.achieved_return, eta_max: eta_max(s) })
    }

    /// `k` equally spaced targets over `[eta_min, eta_max]`. The first point
    /// is the unconstrained solution itself; infeasible points are kept as
    /// errors rather than dropped.
    pub fn frontier<T: Scalar>(
        &self,
        s: &ScenarioMatrix<T>,
        spec: &RiskSpec<T>,
        family: ProblemFamily,
        k: usize,
    ) -> Result<Vec<FrontierPoint<T>>, OptimizerError> {
        if k < 2 {
            return Err(OptimizerError::GridTooSmall(k));
        }
        let base = self.solve_at(s, spec, family, None)?;
        let bounds = EtaBounds { eta_min: base.achieved_return, eta_max: eta_max(s) };
        let step = T::one() / T::from_count(k - 1);
        let rest: Vec<FrontierPoint<T>> = (1..k)
            .into_par_iter()
            .map(|i| {
                let eta = if i == k - 1 { bounds.eta_max } else { bounds.at_fraction(T::from_count(i) * step) };
                FrontierPoint { eta, outcome: self.solve_at(s, spec, family, Some(eta)) }
            })
            .collect();
        let mut points = Vec::with_capacity(k);
        points.push(FrontierPoint { eta: bounds.eta_min, outcome: Ok(base) });
        points.extend(rest);
        Ok(points)
    }
}

#[derive(Debug, Clone)]
pub struct FrontierPoint<T> {
    pub eta: T,
    pub outcome: Result<OptimizationOutcome<T>, OptimizerError>,
}

impl<T: Scalar> FrontierPoint<T> {
    /// DR for DR frontiers, risk for min-risk frontiers.
    pub fn value(&self) -> Option<T> {
        let o = self.outcome.as_ref().ok()?;
        match o.family {
            ProblemFamily::MaxDiversification => o.achieved_dr,
            ProblemFamily::MinRisk => Some(o.achieved_risk),
        }
    }
}

/// `max_i mu_i`.
pub fn eta_max<T: Scalar>(s: &ScenarioMatrix<T>) -> T {
    s.mean_returns().iter().fold(T::neg_infinity(), |m, &v| m.max(v))
}

pub fn solve_dr<T: Scalar>(
    s: &ScenarioMatrix<T>,
    spec: &RiskSpec<T>,
    policy: TargetPolicy<T>,
) -> Result<OptimizationOutcome<T>, OptimizerError> {
    Optimizer::<InteriorPoint>::default().solve(s, spec, ProblemFamily::MaxDiversification, policy)
}

pub fn solve_minrisk<T: Scalar>(
    s: &ScenarioMatrix<T>,
    spec: &RiskSpec<T>,
    policy: TargetPolicy<T>,
) -> Result<OptimizationOutcome<T>, OptimizerError> {
    Optimizer::<InteriorPoint>::default().solve(s, spec, ProblemFamily::MinRisk, policy)
}

pub fn eta_bounds<T: Scalar>(
    s: &ScenarioMatrix<T>,
    spec: &RiskSpec<T>,
    family: ProblemFamily,
) -> Result<EtaBounds<T>, OptimizerError> {
    Optimizer::<InteriorPoint>::default().eta_bounds(s, spec, family)
}

pub fn frontier<T: Scalar>(
    s: &ScenarioMatrix<T>,
    spec: &RiskSpec<T>,
    family: ProblemFamily,
    k: usize,
) -> Result<Vec<FrontierPoint<T>>, OptimizerError> {
    Optimizer::<InteriorPoint>::default().frontier(s, spec, family, k)
}
