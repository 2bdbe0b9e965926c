//! The strategy catalog: minimum-risk and maximum-DR portfolios for each
//! measure, with and without the common return target, plus risk parity,
//! equal weights and the index passthrough.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::optimizer::{eta_max, OptimizationOutcome, Optimizer, OptimizerError, ProblemFamily, TargetPolicy};
use crate::risk::{Portfolio, RiskError, RiskKind, RiskSpec};
use crate::scalar::Scalar;
use crate::scenarios::ScenarioMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("unknown strategy {0:?}")]
    Unknown(String),
    #[error("risk parity undefined: covariance matrix is singular")]
    RiskParityUndefined,
    #[error("risk parity did not converge: residual {0}")]
    RiskParityNoConvergence(f64),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyId {
    MV0,
    MAD0,
    CVaR0,
    Expe0,
    MV1,
    MAD1,
    CVaR1,
    Expe1,
    DRvol0,
    DRMAD0,
    DRCVaR0,
    DRExpe0,
    DRvol1,
    DRMAD1,
    DRCVaR1,
    DRExpe1,
    RP,
    EW,
    Index,
}

impl StrategyId {
    pub const ALL: [StrategyId; 19] = [
        StrategyId::MV0,
        StrategyId::MAD0,
        StrategyId::CVaR0,
        StrategyId::Expe0,
        StrategyId::MV1,
        StrategyId::MAD1,
        StrategyId::CVaR1,
        StrategyId::Expe1,
        StrategyId::DRvol0,
        StrategyId::DRMAD0,
        StrategyId::DRCVaR0,
        StrategyId::DRExpe0,
        StrategyId::DRvol1,
        StrategyId::DRMAD1,
        StrategyId::DRCVaR1,
        StrategyId::DRExpe1,
        StrategyId::RP,
        StrategyId::EW,
        StrategyId::Index,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyId::MV0 => "MV0",
            StrategyId::MAD0 => "MAD0",
            StrategyId::CVaR0 => "CVaR0",
            StrategyId::Expe0 => "Expe0",
            StrategyId::MV1 => "MV1",
            StrategyId::MAD1 => "MAD1",
            StrategyId::CVaR1 => "CVaR1",
            StrategyId::Expe1 => "Expe1",
            StrategyId::DRvol0 => "DRvol0",
            StrategyId::DRMAD0 => "DRMAD0",
            StrategyId::DRCVaR0 => "DRCVaR0",
            StrategyId::DRExpe0 => "DRExpe0",
            StrategyId::DRvol1 => "DRvol1",
            StrategyId::DRMAD1 => "DRMAD1",
            StrategyId::DRCVaR1 => "DRCVaR1",
            StrategyId::DRExpe1 => "DRExpe1",
            StrategyId::RP => "RP",
            StrategyId::EW => "EW",
            StrategyId::Index => "Index",
        }
    }

    /// Family, measure and whether the common target applies, for the
    /// sixteen optimization strategies.
    pub fn program(self) -> Option<(ProblemFamily, RiskKind, bool)> {
        use ProblemFamily::*;
        use RiskKind::*;
        use StrategyId::*;
        Some(match self {
            MV0 => (MinRisk, Volatility, false),
            MAD0 => (MinRisk, Mad, false),
            CVaR0 => (MinRisk, Cvar, false),
            Expe0 => (MinRisk, Expectile, false),
            MV1 => (MinRisk, Volatility, true),
            MAD1 => (MinRisk, Mad, true),
            CVaR1 => (MinRisk, Cvar, true),
            Expe1 => (MinRisk, Expectile, true),
            DRvol0 => (MaxDiversification, Volatility, false),
            DRMAD0 => (MaxDiversification, Mad, false),
            DRCVaR0 => (MaxDiversification, Cvar, false),
            DRExpe0 => (MaxDiversification, Expectile, false),
            DRvol1 => (MaxDiversification, Volatility, true),
            DRMAD1 => (MaxDiversification, Mad, true),
            DRCVaR1 => (MaxDiversification, Cvar, true),
            DRExpe1 => (MaxDiversification, Expectile, true),
            RP | EW | Index => return None,
        })
    }

    /// Parses a comma-separated list; `all` expands to the full catalog.
    pub fn parse_list(list: &str) -> Result<Vec<StrategyId>, StrategyError> {
        let mut out = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if item.eq_ignore_ascii_case("all") {
                out.extend(StrategyId::ALL);
            } else {
                out.push(item.parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyId {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL
            .iter()
            .copied()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StrategyError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig<T> {
    pub epsilon: T,
    pub alpha: T,
    /// Replaces the common target for suffix-1 strategies.
    pub eta_override: Option<T>,
}

impl<T: Scalar> Default for StrategyConfig<T> {
    fn default() -> Self {
        Self { epsilon: T::lit(0.05), alpha: T::lit(0.9), eta_override: None }
    }
}

impl<T: Scalar> StrategyConfig<T> {
    pub fn spec(&self, kind: RiskKind) -> Result<RiskSpec<T>, RiskError> {
        RiskSpec::from_kind(kind, self.epsilon, self.alpha)
    }
}

/// Result of one strategy on one in-sample window.
#[derive(Debug, Clone)]
pub enum StrategyPortfolio<T> {
    Weights(Portfolio<T>),
    /// Marker for the market index; the backtester reads index returns.
    Index,
}

impl<T> StrategyPortfolio<T> {
    pub fn weights(&self) -> Option<&Portfolio<T>> {
        match self {
            StrategyPortfolio::Weights(p) => Some(p),
            StrategyPortfolio::Index => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommonTarget<T> {
    pub eta: T,
    /// `eta_{1/3}` of each family that entered the max.
    pub per_family: Vec<(StrategyId, T)>,
    pub warnings: Vec<String>,
}

const FAMILIES: [StrategyId; 8] = [
    StrategyId::MV0,
    StrategyId::MAD0,
    StrategyId::CVaR0,
    StrategyId::Expe0,
    StrategyId::DRvol0,
    StrategyId::DRMAD0,
    StrategyId::DRCVaR0,
    StrategyId::DRExpe0,
];

type Cached<T> = OnceLock<Result<OptimizationOutcome<T>, OptimizerError>>;

/// Per-window state shared by all strategies fitted on the same in-sample
/// slice. Unconstrained solves are computed once and reused both as the
/// suffix-0 portfolios and for the common target.
pub struct StrategyContext<'a, T> {
    s: &'a ScenarioMatrix<T>,
    config: StrategyConfig<T>,
    optimizer: Optimizer,
    unconstrained: [Cached<T>; 8],
    target: OnceLock<Result<CommonTarget<T>, StrategyError>>,
}

impl<'a, T: Scalar> StrategyContext<'a, T> {
    pub fn new(s: &'a ScenarioMatrix<T>, config: StrategyConfig<T>) -> Self {
        Self { s, config, optimizer: Optimizer::default(), unconstrained: Default::default(), target: OnceLock::new() }
    }

    pub fn scenarios(&self) -> &ScenarioMatrix<T> {
        self.s
    }

    fn slot(id: StrategyId) -> usize {
        FAMILIES.iter().position(|&f| f == id).expect("suffix-0 strategy")
    }

    fn base(id: StrategyId) -> StrategyId {
        use StrategyId::*;
        match id {
            MV1 => MV0,
            MAD1 => MAD0,
            CVaR1 => CVaR0,
            Expe1 => Expe0,
            DRvol1 => DRvol0,
            DRMAD1 => DRMAD0,
            DRCVaR1 => DRCVaR0,
            DRExpe1 => DRExpe0,
            other => other,
        }
    }

    /// Unconstrained outcome of a suffix-0 strategy.
    pub fn unconstrained(&self, id: StrategyId) -> Result<&OptimizationOutcome<T>, OptimizerError> {
        let id = Self::base(id);
        let (family, kind, _) = id.program().expect("optimization strategy");
        self.unconstrained[Self::slot(id)]
            .get_or_init(|| {
                let spec = self.config.spec(kind)?;
                self.optimizer.solve(self.s, &spec, family, TargetPolicy::Unconstrained)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `max` over the eight families of `eta_min + (eta_max - eta_min) / 3`.
    /// DR families whose asset risks are not all positive are left out.
    pub fn common_target(&self) -> Result<&CommonTarget<T>, StrategyError> {
        self.target
            .get_or_init(|| {
                let top = eta_max(self.s);
                let third = T::one() / T::lit(3.0);
                let mut per_family = Vec::new();
                let mut warnings = Vec::new();
                for id in FAMILIES {
                    match self.unconstrained(id) {
                        Ok(o) => {
                            let lo = o.achieved_return;
                            per_family.push((id, lo + third * (top - lo)));
                        }
                        Err(e @ OptimizerError::NonPositiveAssetRisk { .. }) => {
                            warnings.push(format!("{id} excluded from common target: {e}"));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                let eta = per_family.iter().map(|&(_, v)| v).fold(T::neg_infinity(), T::max);
                Ok(CommonTarget { eta, per_family, warnings })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Full optimizer outcome for an optimization strategy.
    pub fn outcome(&self, id: StrategyId) -> Result<OptimizationOutcome<T>, StrategyError> {
        let (family, kind, constrained) =
            id.program().ok_or_else(|| StrategyError::Unknown(format!("{id} is not an optimization strategy")))?;
        if !constrained {
            return Ok(self.unconstrained(id)?.clone());
        }
        let eta = match self.config.eta_override {
            Some(eta) => eta,
            None => self.common_target()?.eta,
        };
        let spec = self.config.spec(kind)?;
        Ok(self.optimizer.solve(self.s, &spec, family, TargetPolicy::Absolute(eta))?)
    }

    pub fn run(&self, id: StrategyId) -> Result<StrategyPortfolio<T>, StrategyError> {
        match id {
            StrategyId::Index => Ok(StrategyPortfolio::Index),
            StrategyId::EW => Ok(StrategyPortfolio::Weights(equally_weighted(self.s.n_assets()))),
            StrategyId::RP => Ok(StrategyPortfolio::Weights(risk_parity_vol(self.s.covariance())?)),
            _ => Ok(StrategyPortfolio::Weights(self.outcome(id)?.portfolio)),
        }
    }
}

/// Runs one strategy on an in-sample window without sharing state.
pub fn run_strategy<T: Scalar>(
    id: StrategyId,
    in_sample: &ScenarioMatrix<T>,
    config: &StrategyConfig<T>,
) -> Result<StrategyPortfolio<T>, StrategyError> {
    StrategyContext::new(in_sample, *config).run(id)
}

pub fn equally_weighted<T: Scalar>(n: usize) -> Portfolio<T> {
    Portfolio::equal(n)
}

/// Lower-triangular Cholesky factor, or `None` when a pivot falls below
/// `tol` times the largest diagonal entry.
fn cholesky<T: Scalar>(a: &Array2<T>, tol: T) -> Option<Array2<T>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(T::zero(), T::max);
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol * scale) {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / djj;
        }
    }
    Some(l)
}

fn cholesky_solve<T: Scalar>(l: &Array2<T>, b: &Array1<T>) -> Array1<T> {
    let n = b.len();
    let mut z = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = l[[i, k]] * z[k];
            z[i] -= v;
        }
        z[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let v = l[[k, i]] * z[k];
            z[i] -= v;
        }
        z[i] /= l[[i, i]];
    }
    z
}

/// Equal-risk-contribution portfolio for volatility.
///
/// Minimizes `x' S x / 2 - sum_i ln x_i` by damped Newton, where `S` is the
/// covariance divided by its mean diagonal. At the optimum
/// `x_i (S x)_i = 1` for every `i`, so the normalized minimizer equalizes
/// total risk contributions.
pub fn risk_parity_vol<T: Scalar>(cov: &Array2<T>) -> Result<Portfolio<T>, StrategyError> {
    let n = cov.nrows();
    if n == 0 || cov.ncols() != n {
        return Err(RiskError::Dimension { weights: cov.ncols(), assets: n }.into());
    }
    if n == 1 {
        return Ok(Portfolio::unit(1, 0));
    }
    let mean_diag = (0..n).map(|i| cov[[i, i]]).sum::<T>() / T::from_count(n);
    if !(mean_diag > T::zero()) {
        return Err(StrategyError::RiskParityUndefined);
    }
    let s = cov / mean_diag;
    let eps = T::epsilon();
    if cholesky(&s, T::lit(1e3) * eps).is_none() {
        return Err(StrategyError::RiskParityUndefined);
    }
    let tol = T::lit(1e-12).max(T::lit(100.0) * eps);

    let objective = |x: &Array1<T>| -> T { T::lit(0.5) * x.dot(&s.dot(x)) - x.iter().map(|v| v.ln()).sum::<T>() };
    let residual = |x: &Array1<T>, sx: &Array1<T>| -> T {
        x.iter().zip(sx.iter()).map(|(&a, &b)| (a * b - T::one()).abs()).fold(T::zero(), T::max)
    };

    let mut x = Array1::from_shape_fn(n, |i| T::one() / s[[i, i]].sqrt());
    let mut sx = s.dot(&x);
    let mut res = residual(&x, &sx);
    for _ in 0..200 {
        if res <= tol {
            break;
        }
        let grad = Array1::from_shape_fn(n, |i| sx[i] - T::one() / x[i]);
        let mut h = s.clone();
        for i in 0..n {
            h[[i, i]] += T::one() / (x[i] * x[i]);
        }
        let l = match cholesky(&h, T::zero()) {
            Some(l) => l,
            None => return Err(StrategyError::RiskParityUndefined),
        };
        let step = cholesky_solve(&l, &grad.mapv(|g| -g));
        let slope = grad.dot(&step);
        let f0 = objective(&x);
        let mut t = T::one();
        let mut accepted = false;
        while t > T::lit(1e-12) {
            let cand = &x + &(&step * t);
            if cand.iter().all(|&v| v > T::zero()) {
                let f1 = objective(&cand);
                if f1 <= f0 + T::lit(0.25) * t * slope + eps * T::lit(16.0) * f0.abs() {
                    x = cand;
                    accepted = true;
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        sx = s.dot(&x);
        let next = residual(&x, &sx);
        if !accepted || next >= res {
            res = next.min(res);
            break;
        }
        res = next;
    }
    if !(res <= T::lit(1e-9).max(T::lit(1e4) * eps)) {
        return Err(StrategyError::RiskParityNoConvergence(res.to_f64_lossy()));
    }
    Ok(Portfolio::normalized(x.view())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::total_risk_contributions_vol;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn names_round_trip() {
        for id in StrategyId::ALL {
            assert_eq!(id.name().parse::<StrategyId>().unwrap(), id);
        }
        assert!("DRfoo".parse::<StrategyId>().is_err());
        assert_eq!(StrategyId::parse_list("all").unwrap().len(), 19);
        assert_eq!(StrategyId::parse_list("EW, RP,EW").unwrap(), vec![StrategyId::RP, StrategyId::EW]);
    }

    #[test]
    fn sixteen_programs() {
        let n = StrategyId::ALL.iter().filter(|id| id.program().is_some()).count();
        assert_eq!(n, 16);
    }

    #[test]
    fn rp_diagonal() {
        let x = risk_parity_vol(&array![[0.01, 0.0], [0.0, 0.04]]).unwrap();
        assert_abs_diff_eq!(x.weights()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.weights()[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rp_equicorrelated() {
        let sig = [0.1, 0.2, 0.4];
        let cov = Array2::from_shape_fn((3, 3), |(i, j)| sig[i] * sig[j] * if i == j { 1.0 } else { 0.5 });
        let x = risk_parity_vol(&cov).unwrap();
        for (w, e) in x.weights().iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
            assert_abs_diff_eq!(*w, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn rp_general_equalizes_contributions() {
        let cov = array![[0.04, 0.006, -0.002], [0.006, 0.09, 0.01], [-0.002, 0.01, 0.0225]];
        let x = risk_parity_vol(&cov).unwrap();
        let trc = total_risk_contributions_vol(&cov, x.view()).unwrap();
        let vol = trc.sum();
        let spread = trc.iter().cloned().fold(f64::MIN, f64::max) - trc.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 1e-8 * vol, "spread {spread}");
    }

    #[test]
    fn rp_single_and_singular() {
        assert_eq!(risk_parity_vol(&array![[0.04]]).unwrap().weights()[0], 1.0);
        let e = risk_parity_vol(&array![[0.04, 0.04], [0.04, 0.04]]).unwrap_err();
        assert!(e.to_string().contains("risk parity undefined"));
    }

    #[test]
    fn equal_weights() {
        let p: Portfolio<f64> = equally_weighted(4);
        assert!(p.weights().iter().all(|&w| w == 0.25));
        let p: Portfolio<f64> = equally_weighted(82);
        assert!((p.weights().sum() - 1.0).abs() < 1e-12);
    }

    fn small() -> ScenarioMatrix<f64> {
        ScenarioMatrix::new(array![
            [0.010, 0.020, -0.004],
            [-0.012, 0.001, 0.006],
            [0.030, -0.020, 0.002],
            [0.004, 0.011, -0.007],
            [-0.006, 0.017, 0.009],
            [0.015, -0.008, 0.001],
            [0.002, 0.004, -0.003],
            [-0.020, 0.006, 0.012],
            [0.007, -0.013, 0.004],
            [0.011, 0.009, -0.001],
        ])
        .unwrap()
    }

    #[test]
    fn suffix_one_meets_common_target() {
        let s = small();
        let ctx = StrategyContext::new(&s, StrategyConfig { epsilon: 0.2, ..Default::default() });
        let target = ctx.common_target().unwrap();
        assert_eq!(target.per_family.len(), 8);
        for id in StrategyId::ALL.iter().filter(|id| matches!(id.program(), Some((_, _, true)))) {
            let o = ctx.outcome(*id).unwrap();
            assert!(o.achieved_return >= target.eta - 1e-8, "{id}");
        }
    }

    #[test]
    fn index_and_ew_dispatch() {
        let s = small();
        let cfg = StrategyConfig::default();
        assert!(matches!(run_strategy(StrategyId::Index, &s, &cfg).unwrap(), StrategyPortfolio::Index));
        let ew = run_strategy(StrategyId::EW, &s, &cfg).unwrap();
        assert_abs_diff_eq!(ew.weights().unwrap().weights()[1], 1.0 / 3.0);
    }

    #[test]
    fn eta_override_above_max_is_unattainable() {
        let s = small();
        let cfg = StrategyConfig { eta_override: Some(0.5), ..Default::default() };
        let e = run_strategy(StrategyId::DRCVaR1, &s, &cfg).unwrap_err();
        assert!(matches!(e, StrategyError::Optimizer(OptimizerError::TargetUnattainable { .. })));
    }
}
