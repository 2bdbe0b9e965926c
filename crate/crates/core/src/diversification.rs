use ndarray::ArrayView1;
use thiserror::Error;

use crate::risk::{asset_risks, risk, RiskError, RiskSpec};
use crate::scalar::Scalar;
use crate::scenarios::ScenarioMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrError {
    #[error("ratio undefined: nonpositive portfolio risk {0}")]
    NonPositiveRisk(f64),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Diversification ratio `sum_i x_i rho_i / rho(x)`, kept as numerator and
/// denominator so callers can check normalization identities exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DrValue<T> {
    pub numerator: T,
    pub denominator: T,
    pub ratio: T,
    /// Set when some asset risk is `<= 0`; the `ratio >= 1` bound does not
    /// hold in that case.
    pub nonpositive_asset_risk: bool,
}

/// DR from precomputed asset risks and a portfolio risk.
pub fn ratio_from_parts<T: Scalar>(
    asset_risks: ArrayView1<'_, T>,
    x: ArrayView1<'_, T>,
    portfolio_risk: T,
) -> Result<DrValue<T>, DrError> {
    if !(portfolio_risk > T::zero()) {
        return Err(DrError::NonPositiveRisk(portfolio_risk.to_f64_lossy()));
    }
    let numerator = x.dot(&asset_risks);
    Ok(DrValue {
        numerator,
        denominator: portfolio_risk,
        ratio: numerator / portfolio_risk,
        nonpositive_asset_risk: asset_risks.iter().any(|&r| r <= T::zero()),
    })
}

pub fn diversification_ratio<T: Scalar>(
    s: &ScenarioMatrix<T>,
    x: ArrayView1<'_, T>,
    spec: &RiskSpec<T>,
) -> Result<DrValue<T>, DrError> {
    let rho = asset_risks(s, spec)?;
    let px = risk(s, x, spec)?;
    ratio_from_parts(rho.view(), x, px)
}
