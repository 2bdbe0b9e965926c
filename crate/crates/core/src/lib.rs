//! Maximum-diversification-ratio portfolio construction.
//!
//! The crate evaluates four risk measures (volatility, MAD, CVaR and the
//! expectile of the loss), maximizes the diversification ratio
//! `sum_i x_i rho_i / rho(x)` under a target-return constraint by solving an
//! equivalent convex program, and runs rolling-window backtests of the
//! resulting strategies against minimum-risk, risk-parity and
//! equally-weighted baselines.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64` aliases below fix the usual double-precision instantiation.

// Negated comparisons are deliberate: `!(x > 0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod diversification;
pub mod metrics;
pub mod optimizer;
pub mod risk;
pub mod scalar;
pub mod scenarios;
pub mod solver;
pub mod strategies;

pub use diversification::{diversification_ratio, DrError, DrValue};
pub use optimizer::{OptimizationOutcome, OptimizerError, ProblemFamily, TargetPolicy};
pub use risk::{Portfolio, RiskError, RiskKind, RiskSpec};
pub use scalar::Scalar;
pub use scenarios::{PriceSeries, ScenarioError, ScenarioMatrix, WindowPlan};
pub use solver::{MathProgram, SolveResult, SolveStatus};
pub use strategies::StrategyId;

pub type PriceSeriesF64 = PriceSeries<f64>;
pub type ScenarioMatrixF64 = ScenarioMatrix<f64>;
pub type PortfolioF64 = Portfolio<f64>;
pub type RiskSpecF64 = RiskSpec<f64>;
pub type MathProgramF64 = MathProgram<f64>;
pub type OutcomeF64 = OptimizationOutcome<f64>;
pub type BacktestResultF64 = backtest::BacktestResult<f64>;
pub type MetricTableF64 = metrics::MetricTable<f64>;
