//! Asset- and portfolio-level risk measures.
//!
//! All four measures are convex and positively homogeneous in the weight
//! vector, which is what lets the diversification ratio be maximized
//! through a linear change of variables (see [`crate::optimizer`]).
//! Functions here accept any nonnegative weight vector, not only points
//! of the simplex, so the same code evaluates transformed solutions.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{tail_count, Scalar};
use crate::scenarios::ScenarioMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("dimension mismatch: {weights} weights for {assets} assets")]
    Dimension { weights: usize, assets: usize },
    #[error("epsilon too small for sample: round({epsilon} * {scenarios}) = 0")]
    EpsilonTooSmall { epsilon: f64, scenarios: usize },
    #[error("undefined gradient: portfolio volatility is zero")]
    UndefinedGradient,
    #[error("invalid risk parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiskKind {
    Volatility,
    Mad,
    Cvar,
    Expectile,
}

impl RiskKind {
    pub const ALL: [RiskKind; 4] = [RiskKind::Volatility, RiskKind::Mad, RiskKind::Cvar, RiskKind::Expectile];
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskKind::Volatility => "vol",
            RiskKind::Mad => "mad",
            RiskKind::Cvar => "cvar",
            RiskKind::Expectile => "expectile",
        })
    }
}

impl std::str::FromStr for RiskKind {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vol" | "volatility" | "variance" => Ok(RiskKind::Volatility),
            "mad" => Ok(RiskKind::Mad),
            "cvar" => Ok(RiskKind::Cvar),
            "expectile" | "expe" => Ok(RiskKind::Expectile),
            other => Err(RiskError::InvalidParameter(format!("unknown measure {other:?}"))),
        }
    }
}

/// A risk measure together with its parameter.
///
/// `Cvar` carries the tail probability `epsilon` in (0, 1); `Expectile`
/// carries the level `alpha` in [1/2, 1), the range where the expectile of
/// the loss is coherent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskSpec<T> {
    Volatility,
    Mad,
    Cvar { epsilon: T },
    Expectile { alpha: T },
}

impl<T: Scalar> RiskSpec<T> {
    pub fn cvar(epsilon: T) -> Result<Self, RiskError> {
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(RiskError::InvalidParameter(format!("epsilon {epsilon} not in (0,1)")));
        }
        Ok(RiskSpec::Cvar { epsilon })
    }

    pub fn expectile(alpha: T) -> Result<Self, RiskError> {
        if !(alpha >= T::lit(0.5) && alpha < T::one()) {
            return Err(RiskError::InvalidParameter(format!("alpha {alpha} not in [1/2,1)")));
        }
        Ok(RiskSpec::Expectile { alpha })
    }

    /// Builds the spec for `kind`, taking whichever of `epsilon`/`alpha` applies.
    pub fn from_kind(kind: RiskKind, epsilon: T, alpha: T) -> Result<Self, RiskError> {
        match kind {
            RiskKind::Volatility => Ok(RiskSpec::Volatility),
            RiskKind::Mad => Ok(RiskSpec::Mad),
            RiskKind::Cvar => Self::cvar(epsilon),
            RiskKind::Expectile => Self::expectile(alpha),
        }
    }

    pub fn kind(&self) -> RiskKind {
        match self {
            RiskSpec::Volatility => RiskKind::Volatility,
            RiskSpec::Mad => RiskKind::Mad,
            RiskSpec::Cvar { .. } => RiskKind::Cvar,
            RiskSpec::Expectile { .. } => RiskKind::Expectile,
        }
    }
}

/// Long-only weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio<T> {
    weights: Array1<T>,
}

impl<T: Scalar> Portfolio<T> {
    /// Validates `sum = 1` (within 1e-9) and clamps entries in `[-1e-12, 0)` to zero.
    pub fn new(weights: Array1<T>) -> Result<Self, RiskError> {
        if weights.is_empty() {
            return Err(RiskError::InvalidPortfolio("empty weight vector".into()));
        }
        let mut w = weights;
        for v in w.iter_mut() {
            if !v.is_finite() {
                return Err(RiskError::InvalidPortfolio("non-finite weight".into()));
            }
            if *v < T::zero() {
                if *v < -T::lit(1e-12) {
                    return Err(RiskError::InvalidPortfolio(format!("negative weight {v}")));
                }
                *v = T::zero();
            }
        }
        let sum = w.sum();
        if (sum - T::one()).abs() > T::lit(1e-9) {
            return Err(RiskError::InvalidPortfolio(format!("weights sum to {sum}")));
        }
        Ok(Self { weights: w })
    }

    /// Scales a nonnegative, nonzero vector onto the simplex.
    pub fn normalized(raw: ArrayView1<'_, T>) -> Result<Self, RiskError> {
        let clipped = raw.mapv(|v| v.max(T::zero()));
        let sum = clipped.sum();
        if !(sum > T::zero()) {
            return Err(RiskError::InvalidPortfolio("cannot normalize a zero vector".into()));
        }
        Self::new(clipped / sum)
    }

    pub fn equal(n: usize) -> Self {
        let w = T::one() / T::from_count(n.max(1));
        Self { weights: Array1::from_elem(n.max(1), w) }
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut w = Array1::zeros(n);
        w[i] = T::one();
        Self { weights: w }
    }

    pub fn weights(&self) -> &Array1<T> {
        &self.weights
    }

    pub fn view(&self) -> ArrayView1<'_, T> {
        self.weights.view()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of weights strictly above `threshold`.
    pub fn count_above(&self, threshold: T) -> usize {
        self.weights.iter().filter(|&&w| w > threshold).count()
    }
}

fn check_dims<T: Scalar>(s: &ScenarioMatrix<T>, x: ArrayView1<'_, T>) -> Result<(), RiskError> {
    if x.len() != s.n_assets() {
        return Err(RiskError::Dimension { weights: x.len(), assets: s.n_assets() });
    }
    Ok(())
}

/// Scenario returns of the portfolio, `R_t = sum_i x_i r_{i,t}`.
pub fn portfolio_returns<T: Scalar>(s: &ScenarioMatrix<T>, x: ArrayView1<'_, T>) -> Result<Array1<T>, RiskError> {
    check_dims(s, x)?;
    Ok(s.returns().dot(&x))
}

/// `sqrt(x' Sigma x)` from the `1/T` sample covariance.
pub fn volatility<T: Scalar>(s: &ScenarioMatrix<T>, x: ArrayView1<'_, T>) -> Result<T, RiskError> {
    check_dims(s, x)?;
    Ok(quadratic_form(s.covariance(), x).max(T::zero()).sqrt())
}

pub(crate) fn quadratic_form<T: Scalar>(q: &Array2<T>, x: ArrayView1<'_, T>) -> T {
    x.dot(&q.dot(&x))
}

/// Mean absolute deviation of the portfolio return from its mean.
pub fn mad<T: Scalar>(s: &ScenarioMatrix<T>, x: ArrayView1<'_, T>) -> Result<T, RiskError> {
    check_dims(s, x)?;
    let mu = s.mean_returns().dot(&x);
    let r = s.returns().dot(&x);
    let t = T::from_count(r.len());
    Ok(r.iter().map(|&v| (v - mu).abs()).sum::<T>() / t)
}

/// Negative mean of the `round(epsilon * T)` smallest values of `sample`.
pub fn cvar_of_sample<T: Scalar>(sample: &[T], epsilon: T) -> Result<T, RiskError> {
    let j = tail_count(epsilon, sample.len());
    if j == 0 {
        return Err(RiskError::EpsilonTooSmall { epsilon: epsilon.to_f64_lossy(), scenarios: sample.len() });
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite returns"));
    Ok(-sorted[..j].iter().copied().sum::<T>() / T::from_count(j))
}

/// Conditional value-at-risk of the portfolio return at tail level `epsilon`.
pub fn cvar<T: Scalar>(s: &ScenarioMatrix<T>, x: ArrayView1<'_, T>, epsilon: T) -> Result<T, RiskError> {
    let r = portfolio_returns(s, x)?;
    cvar_of_sample(r.as_slice().expect("contiguous"), epsilon)
}

/// First-order-condition residual `alpha E[(L - z)+] - (1 - alpha) E[(L - z)-]`,
/// summed over the sample (not averaged). Strictly decreasing in `z` on the
/// sample range.
pub fn expectile_residual<T: Scalar>(losses: &[T], alpha: T, z: T) -> T {
    let (mut up, mut down) = (T::zero(), T::zero());
    for &l in losses {
        let d = l - z;
        if d > T::zero() {
            up += d;
        } else {
            down -= d;
        }
    }
    alpha * up - (T::one() - alpha) * down
}

/// The `alpha`-expectile of a sample.
///
/// Bisects over the sorted sample points to find the linear piece of the
/// residual that changes sign, then solves that piece exactly.
pub fn expectile_of_sample<T: Scalar>(sample: &[T], alpha: T) -> T {
    assert!(!sample.is_empty(), "expectile of empty sample");
    let mut l = sample.to_vec();
    l.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    let n = l.len();
    if l[0] == l[n - 1] {
        return l[0];
    }
    // suffix[k] = sum of l[k..]
    let mut suffix = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + l[k];
    }
    // On [l[k-1], l[k]] exactly k points lie at or below z:
    //   f(z) = alpha (suffix[k] - (n-k) z) - (1-alpha) (k z - prefix_k).
    let piece_root = |k: usize| -> T {
        let prefix = suffix[0] - suffix[k];
        let nk = T::from_count(n - k);
        let kk = T::from_count(k);
        (alpha * suffix[k] + (T::one() - alpha) * prefix) / (alpha * nk + (T::one() - alpha) * kk)
    };
    // f(l[0]) >= 0 >= f(l[n-1]); find the first breakpoint with f <= 0.
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if expectile_residual(&l, alpha, l[mid]) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if expectile_residual(&l, alpha, l[hi]) == T::zero() {
        return l[hi];
    }
    piece_root(hi).max(l[lo]).min(l[hi])
}

/// `zeta_alpha(x)`: the alpha-expectile of the portfolio loss `-R_P(x)`.
pub fn expectile_loss<T: Scalar>(s: &ScenarioMatrix<T>, x: ArrayView1<'_, T>, alpha: T) -> Result<T, RiskError> {
    let losses = portfolio_returns(s, x)?.mapv(|v| -v);
    Ok(expectile_of_sample(losses.as_slice().expect("contiguous"), alpha))
}

/// `rho(x)` for the given measure.
pub fn risk<T: Scalar>(s: &ScenarioMatrix<T>, x: ArrayView1<'_, T>, spec: &RiskSpec<T>) -> Result<T, RiskError> {
    match *spec {
        RiskSpec::Volatility => volatility(s, x),
        RiskSpec::Mad => mad(s, x),
        RiskSpec::Cvar { epsilon } => cvar(s, x, epsilon),
        RiskSpec::Expectile { alpha } => expectile_loss(s, x, alpha),
    }
}

/// `rho_i = rho(R_i)` for every asset.
pub fn asset_risks<T: Scalar>(s: &ScenarioMatrix<T>, spec: &RiskSpec<T>) -> Result<Array1<T>, RiskError> {
    let n = s.n_assets();
    match *spec {
        RiskSpec::Volatility => Ok(s.volatilities()),
        _ => (0..n)
            .map(|i| risk(s, Portfolio::<T>::unit(n, i).view(), spec))
            .collect::<Result<Vec<_>, _>>()
            .map(Array1::from),
    }
}

/// Euler decomposition of volatility: `TRC_i = x_i (Sigma x)_i / sqrt(x' Sigma x)`.
pub fn total_risk_contributions_vol<T: Scalar>(cov: &Array2<T>, x: ArrayView1<'_, T>) -> Result<Array1<T>, RiskError> {
    if cov.nrows() != x.len() || cov.ncols() != x.len() {
        return Err(RiskError::Dimension { weights: x.len(), assets: cov.nrows() });
    }
    let sx = cov.dot(&x);
    let var = x.dot(&sx);
    if !(var > T::zero()) {
        return Err(RiskError::UndefinedGradient);
    }
    let vol = var.sqrt();
    Ok(Array1::from_shape_fn(x.len(), |i| x[i] * sx[i] / vol))
}
