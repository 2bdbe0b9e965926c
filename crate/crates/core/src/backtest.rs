//! Rolling-window out-of-sample evaluation.
//!
//! Each window fits every strategy on `in_len` in-sample scenarios and holds
//! the weights fixed for the next `hold_len` observations.

use std::io::{self, Write};

use chrono::NaiveDate;
use ndarray::Array1;
use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::fmt_value;
use crate::scalar::Scalar;
use crate::scenarios::{plan_windows, ScenarioError, ScenarioMatrix, WindowPlan};
use crate::strategies::{StrategyConfig, StrategyContext, StrategyId, StrategyPortfolio};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("in-sample length must be at least 2, got {0}")]
    InLength(usize),
    #[error("index series has {have} observations, scenarios have {want}")]
    IndexLength { have: usize, want: usize },
    #[error("no strategies requested")]
    NoStrategies,
}

/// How the first rebalance enters the turnover average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TurnoverConvention {
    /// The first rebalance is the inception trade and is not counted; the
    /// remaining `S - 1` transitions are averaged (0 when `S = 1`).
    #[default]
    InceptionFree,
    /// `x_0 = 0`, all `S` rebalances counted, divided by `S`.
    FromCash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig<T> {
    pub in_len: usize,
    pub hold_len: usize,
    pub strategies: Vec<StrategyId>,
    pub strategy: StrategyConfig<T>,
    pub turnover: TurnoverConvention,
}

impl<T: Scalar> Default for BacktestConfig<T> {
    fn default() -> Self {
        Self {
            in_len: 500,
            hold_len: 20,
            strategies: StrategyId::ALL.to_vec(),
            strategy: StrategyConfig::default(),
            turnover: TurnoverConvention::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rebalance<T> {
    pub window: usize,
    /// `None` for the index passthrough.
    pub weights: Option<Array1<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun<T> {
    pub id: StrategyId,
    pub out_returns: Vec<T>,
    /// `W_0 = 1` followed by one value per out-of-sample observation.
    pub wealth: Vec<T>,
    pub rebalances: Vec<Rebalance<T>>,
    pub turnover: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyFailure {
    pub id: StrategyId,
    pub window: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct BacktestResult<T> {
    pub plan: WindowPlan,
    pub asset_ids: Vec<String>,
    /// Dates of the out-of-sample observations, when the scenarios carry dates.
    pub out_dates: Option<Vec<NaiveDate>>,
    /// Out-of-sample index returns, when an index series was supplied.
    pub index_returns: Option<Vec<T>>,
    /// Completed strategies in catalog order.
    pub runs: Vec<StrategyRun<T>>,
    pub failures: Vec<StrategyFailure>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> BacktestResult<T> {
    pub fn run(&self, id: StrategyId) -> Option<&StrategyRun<T>> {
        self.runs.iter().find(|r| r.id == id)
    }
}

/// Average l1 change of weights between consecutive rebalances.
pub fn turnover<T: Scalar>(weights: &[&Array1<T>], convention: TurnoverConvention) -> T {
    let l1 = |a: &Array1<T>, b: &Array1<T>| a.iter().zip(b.iter()).map(|(&x, &y)| (x - y).abs()).sum::<T>();
    let s = weights.len();
    let transitions: T = weights.windows(2).map(|w| l1(w[0], w[1])).sum();
    match convention {
        TurnoverConvention::InceptionFree => {
            if s <= 1 {
                T::zero()
            } else {
                transitions / T::from_count(s - 1)
            }
        }
        TurnoverConvention::FromCash => {
            if s == 0 {
                return T::zero();
            }
            let first: T = weights[0].iter().map(|v| v.abs()).sum();
            (first + transitions) / T::from_count(s)
        }
    }
}

/// Wealth path `W_0 = 1`, `W_t = W_{t-1} (1 + R_t)`.
pub fn wealth_path<T: Scalar>(returns: &[T]) -> Vec<T> {
    let mut w = Vec::with_capacity(returns.len() + 1);
    let mut cur = T::one();
    w.push(cur);
    for &r in returns {
        cur *= T::one() + r;
        w.push(cur);
    }
    w
}

type WindowResult<T> = Vec<Result<StrategyPortfolio<T>, String>>;

/// Runs the rolling backtest. `index` holds the market index return for
/// every scenario row and is required by the `Index` strategy, which is
/// otherwise skipped with a warning.
pub fn run_backtest<T: Scalar>(
    s: &ScenarioMatrix<T>,
    index: Option<&[T]>,
    cfg: &BacktestConfig<T>,
) -> Result<BacktestResult<T>, BacktestError> {
    if cfg.in_len < 2 {
        return Err(BacktestError::InLength(cfg.in_len));
    }
    if let Some(ix) = index {
        if ix.len() != s.n_scenarios() {
            return Err(BacktestError::IndexLength { have: ix.len(), want: s.n_scenarios() });
        }
    }
    let plan = plan_windows(s.n_scenarios(), cfg.in_len, cfg.hold_len)?;
    let mut warnings = Vec::new();
    let mut ids: Vec<StrategyId> = cfg.strategies.clone();
    ids.sort();
    ids.dedup();
    if index.is_none() && ids.contains(&StrategyId::Index) {
        ids.retain(|&id| id != StrategyId::Index);
        warnings.push("Index skipped: no index column supplied".to_string());
    }
    if ids.is_empty() {
        return Err(BacktestError::NoStrategies);
    }

    let fitted: Vec<(WindowResult<T>, Vec<String>)> = plan
        .windows
        .par_iter()
        .map(|w| {
            let in_sample = match s.slice_rows(w.in_range.clone()) {
                Ok(m) => m,
                Err(e) => return (ids.iter().map(|_| Err(e.to_string())).collect(), Vec::new()),
            };
            let ctx = StrategyContext::new(&in_sample, cfg.strategy);
            let res = ids.iter().map(|&id| ctx.run(id).map_err(|e| e.to_string())).collect();
            let notes = if ids.iter().any(|id| matches!(id.program(), Some((_, _, true)))) {
                ctx.common_target().ok().map(|t| t.warnings.clone()).unwrap_or_default()
            } else {
                Vec::new()
            };
            (res, notes)
        })
        .collect();

    for (k, (_, notes)) in fitted.iter().enumerate() {
        for n in notes {
            warnings.push(format!("window {k}: {n}"));
        }
    }

    let r = s.returns();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    'strategy: for (j, &id) in ids.iter().enumerate() {
        let mut out_returns = Vec::with_capacity(plan.out_len());
        let mut rebalances = Vec::with_capacity(plan.len());
        for (k, w) in plan.windows.iter().enumerate() {
            match &fitted[k].0[j] {
                Err(message) => {
                    failures.push(StrategyFailure { id, window: k, message: message.clone() });
                    continue 'strategy;
                }
                Ok(StrategyPortfolio::Index) => {
                    let ix = index.expect("index checked above");
                    out_returns.extend_from_slice(&ix[w.out_range.clone()]);
                    rebalances.push(Rebalance { window: k, weights: None });
                }
                Ok(StrategyPortfolio::Weights(p)) => {
                    let x = p.weights();
                    for t in w.out_range.clone() {
                        out_returns.push(r.row(t).dot(x));
                    }
                    rebalances.push(Rebalance { window: k, weights: Some(x.clone()) });
                }
            }
        }
        let held: Vec<&Array1<T>> = rebalances.iter().filter_map(|r| r.weights.as_ref()).collect();
        let turnover = (!held.is_empty()).then(|| turnover(&held, cfg.turnover));
        let wealth = wealth_path(&out_returns);
        runs.push(StrategyRun { id, out_returns, wealth, rebalances, turnover });
    }

    let out_range = plan.in_len..s.n_scenarios();
    Ok(BacktestResult {
        asset_ids: s.asset_ids().to_vec(),
        out_dates: s.dates().map(|d| d[out_range.clone()].to_vec()),
        index_returns: index.map(|ix| ix[out_range].to_vec()),
        plan,
        runs,
        failures,
        warnings,
    })
}

impl<T: Scalar> BacktestResult<T> {
    fn row_label(&self, t: usize) -> String {
        match &self.out_dates {
            Some(d) => d[t].format("%Y-%m-%d").to_string(),
            None => (self.plan.in_len + t).to_string(),
        }
    }

    fn header<W: Write>(&self, out: &mut W, first: &str) -> io::Result<()> {
        write!(out, "{first}")?;
        for run in &self.runs {
            write!(out, ",{}", run.id)?;
        }
        writeln!(out)
    }

    /// Out-of-sample returns, one column per strategy.
    pub fn write_returns_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        self.header(&mut out, "date")?;
        for t in 0..self.plan.out_len() {
            write!(out, "{}", self.row_label(t))?;
            for run in &self.runs {
                write!(out, ",{}", fmt_value(Some(run.out_returns[t])))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Wealth paths; the first row is the initial wealth.
    pub fn write_wealth_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        self.header(&mut out, "date")?;
        for t in 0..=self.plan.out_len() {
            let label = if t == 0 { "start".to_string() } else { self.row_label(t - 1) };
            write!(out, "{label}")?;
            for run in &self.runs {
                write!(out, ",{}", fmt_value(Some(run.wealth[t])))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// One line per (window, strategy) with the held weights.
    pub fn write_rebalance_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "window,start,strategy,{}", self.asset_ids.join(","))?;
        for (k, w) in self.plan.windows.iter().enumerate() {
            let start = w.out_range.start - self.plan.in_len;
            for run in &self.runs {
                let Some(x) = run.rebalances[k].weights.as_ref() else { continue };
                let cells: Vec<String> = x.iter().map(|&v| fmt_value(Some(v))).collect();
                writeln!(out, "{k},{},{},{}", self.row_label(start), run.id, cells.join(","))?;
            }
        }
        Ok(())
    }
}
