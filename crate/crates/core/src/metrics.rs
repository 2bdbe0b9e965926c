//! Out-of-sample performance measures.
//!
//! Every statistic returns `Option`: `None` marks a value that is undefined
//! for the sample (zero spread, empty tail) and is printed as `NA`.
//! Standard deviations use `1/N`; tail sizes use [`tail_count`].

use std::io::{self, Write};

use crate::backtest::BacktestResult;
use crate::scalar::{mean, numerically_zero, pop_std, tail_count, Scalar};

/// Rolling horizon of the ROI statistics, in observations.
pub const ROI_HORIZON: usize = 250;
/// Weight threshold for counting an asset as selected.
pub const SELECTION_THRESHOLD: f64 = 1e-5;

/// `mu / sigma` of a return series.
pub fn sharpe<T: Scalar>(returns: &[T]) -> Option<T> {
    if returns.is_empty() {
        return None;
    }
    let sd = pop_std(returns);
    if numerically_zero(sd, returns) {
        return None;
    }
    Some(mean(returns) / sd)
}

/// `DD_t = (W_t - max_{s<=t} W_s) / max_{s<=t} W_s` over the whole path.
pub fn drawdowns<T: Scalar>(wealth: &[T]) -> Vec<T> {
    let mut peak = T::neg_infinity();
    wealth
        .iter()
        .map(|&w| {
            peak = peak.max(w);
            (w - peak) / peak
        })
        .collect()
}

/// Maximum drawdown and Ulcer index of a wealth path.
pub fn drawdown_stats<T: Scalar>(wealth: &[T]) -> (T, T) {
    let dd = drawdowns(wealth);
    summarize_drawdowns(&dd)
}

fn summarize_drawdowns<T: Scalar>(dd: &[T]) -> (T, T) {
    if dd.is_empty() {
        return (T::zero(), T::zero());
    }
    let mdd = dd.iter().copied().fold(T::zero(), T::min);
    let ss: T = dd.iter().map(|&d| d * d).sum();
    (mdd, (ss / T::from_count(dd.len())).sqrt())
}

/// Drawdown statistics of a path that starts at the initial wealth `W_0`.
/// `W_0` takes part in the running peak but not in the Ulcer average.
pub fn path_drawdown_stats<T: Scalar>(wealth_from_origin: &[T]) -> (T, T) {
    let dd = drawdowns(wealth_from_origin);
    summarize_drawdowns(dd.get(1..).unwrap_or(&[]))
}

fn sorted<T: Scalar>(returns: &[T]) -> Vec<T> {
    let mut v = returns.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite returns"));
    v
}

/// Mean of the best 10% over minus the mean of the worst 10%. The sign is
/// kept, so a sample with no losses in its worst tail gives a negative value.
pub fn rachev10<T: Scalar>(returns: &[T]) -> Option<T> {
    let j = tail_count(T::lit(0.1), returns.len());
    if j == 0 {
        return None;
    }
    let v = sorted(returns);
    let worst = mean(&v[..j]);
    let best = mean(&v[v.len() - j..]);
    if worst == T::zero() {
        return None;
    }
    Some(best / -worst)
}

/// Minus the `j`-th smallest return, `j = round(0.05 N)`.
pub fn var5<T: Scalar>(returns: &[T]) -> Option<T> {
    let j = tail_count(T::lit(0.05), returns.len());
    if j == 0 {
        return None;
    }
    Some(-sorted(returns)[j - 1])
}

/// `E[max(0, R)] / |E[min(0, R)]|`.
pub fn omega<T: Scalar>(returns: &[T]) -> Option<T> {
    if returns.is_empty() {
        return None;
    }
    let n = T::from_count(returns.len());
    let gains: T = returns.iter().map(|&r| r.max(T::zero())).sum::<T>() / n;
    let losses: T = returns.iter().map(|&r| r.min(T::zero())).sum::<T>() / n;
    if losses == T::zero() {
        return None;
    }
    Some(gains / losses.abs())
}

/// Jensen's alpha `E[R] - beta E[R_I]` and the information ratio
/// `E[R - R_I] / sigma(R - R_I)`.
pub fn jensen_alpha_info<T: Scalar>(returns: &[T], index: &[T]) -> (Option<T>, Option<T>) {
    if returns.is_empty() || returns.len() != index.len() {
        return (None, None);
    }
    let mr = mean(returns);
    let mi = mean(index);
    let n = T::from_count(returns.len());
    let cov: T = returns.iter().zip(index).map(|(&r, &i)| (r - mr) * (i - mi)).sum::<T>() / n;
    let sd_i = pop_std(index);
    let alpha = if numerically_zero(sd_i, index) { None } else { Some(mr - cov / (sd_i * sd_i) * mi) };
    let diff: Vec<T> = returns.iter().zip(index).map(|(&r, &i)| r - i).collect();
    let sd_d = pop_std(&diff);
    let scale: Vec<T> = returns.iter().chain(index).copied().collect();
    let info = if numerically_zero(sd_d, &scale) { None } else { Some(mean(&diff) / sd_d) };
    (alpha, info)
}

/// Rolling compounded returns over `horizon` observations; `None` unless
/// the series is longer than the horizon.
pub fn roi_series<T: Scalar>(returns: &[T], horizon: usize) -> Option<Vec<T>> {
    if horizon == 0 || returns.len() <= horizon {
        return None;
    }
    Some(returns.windows(horizon).map(|w| w.iter().fold(T::one(), |acc, &r| acc * (T::one() + r)) - T::one()).collect())
}

/// Percentile with linear interpolation between order statistics,
/// `h = (N - 1) p`.
pub fn percentile<T: Scalar>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = T::from_count(n - 1) * p;
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - T::from_count(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiSummary<T> {
    pub mean: T,
    pub vol: T,
    pub p5: T,
    pub p25: T,
    pub p50: T,
    pub p75: T,
    pub p95: T,
}

impl<T: Scalar> RoiSummary<T> {
    pub fn of(roi: &[T]) -> Option<Self> {
        if roi.is_empty() {
            return None;
        }
        let s = sorted(roi);
        let q = |p: f64| percentile(&s, T::lit(p));
        Some(Self {
            mean: mean(roi),
            vol: pop_std(roi),
            p5: q(0.05),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
        })
    }

    pub fn values(&self) -> [T; 7] {
        [self.mean, self.vol, self.p5, self.p25, self.p50, self.p75, self.p95]
    }
}

/// Mean number of weights above `threshold` across rebalances.
pub fn ave_count<T: Scalar>(rebalances: &[&[T]], threshold: T) -> Option<T> {
    if rebalances.is_empty() {
        return None;
    }
    let total: usize = rebalances.iter().map(|w| w.iter().filter(|&&v| v > threshold).count()).sum();
    Some(T::from_count(total) / T::from_count(rebalances.len()))
}

/// Column names of the metric table, in order.
pub const METRIC_COLUMNS: [&str; 12] = [
    "mu_out",
    "sigma_out",
    "sharpe",
    "mdd",
    "ulcer",
    "rachev10",
    "turnover",
    "alpha_j",
    "info_ratio",
    "var5",
    "omega",
    "ave_count",
];

pub const ROI_COLUMNS: [&str; 7] = ["mean", "vol", "p5", "p25", "p50", "p75", "p95"];

/// `Some(true)` when larger is better, `None` when the column is not ranked.
const HIGHER_IS_BETTER: [Option<bool>; 12] = [
    Some(true),
    Some(false),
    Some(true),
    Some(true),
    Some(false),
    Some(true),
    Some(false),
    Some(true),
    Some(true),
    Some(false),
    Some(true),
    None,
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow<T> {
    pub strategy: String,
    pub mu_out: Option<T>,
    pub sigma_out: Option<T>,
    pub sharpe: Option<T>,
    pub mdd: Option<T>,
    pub ulcer: Option<T>,
    pub rachev10: Option<T>,
    pub turnover: Option<T>,
    pub alpha_j: Option<T>,
    pub info_ratio: Option<T>,
    pub var5: Option<T>,
    pub omega: Option<T>,
    pub ave_count: Option<T>,
    pub roi: Option<RoiSummary<T>>,
}

impl<T: Scalar> MetricRow<T> {
    pub fn values(&self) -> [Option<T>; 12] {
        [
            self.mu_out,
            self.sigma_out,
            self.sharpe,
            self.mdd,
            self.ulcer,
            self.rachev10,
            self.turnover,
            self.alpha_j,
            self.info_ratio,
            self.var5,
            self.omega,
            self.ave_count,
        ]
    }
}

/// Metric for one strategy's out-of-sample record.
pub fn metric_row<T: Scalar>(
    strategy: &str,
    returns: &[T],
    wealth_from_origin: &[T],
    index: Option<&[T]>,
    turnover: Option<T>,
    ave_count: Option<T>,
) -> MetricRow<T> {
    let (mdd, ulcer) = path_drawdown_stats(wealth_from_origin);
    let (alpha_j, info_ratio) = index.map_or((None, None), |i| jensen_alpha_info(returns, i));
    let nonempty = !returns.is_empty();
    MetricRow {
        strategy: strategy.to_string(),
        mu_out: nonempty.then(|| mean(returns)),
        sigma_out: nonempty.then(|| pop_std(returns)),
        sharpe: sharpe(returns),
        mdd: nonempty.then_some(mdd),
        ulcer: nonempty.then_some(ulcer),
        rachev10: rachev10(returns),
        turnover,
        alpha_j,
        info_ratio,
        var5: var5(returns),
        omega: omega(returns),
        ave_count,
        roi: roi_series(returns, ROI_HORIZON).and_then(|r| RoiSummary::of(&r)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable<T> {
    pub rows: Vec<MetricRow<T>>,
}

/// Formats a value with the shortest round-trip representation, or `NA`.
pub fn fmt_value<T: Scalar>(v: Option<T>) -> String {
    match v {
        Some(x) if x.is_finite() => {
            let s = format!("{x}");
            if s == "-0" {
                "0".to_string()
            } else {
                s
            }
        }
        _ => "NA".to_string(),
    }
}

fn fmt_fixed<T: Scalar>(v: Option<T>) -> String {
    match v {
        Some(x) if x.is_finite() => {
            let s = format!("{:.6}", x.to_f64_lossy());
            if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                s.trim_start_matches('-').to_string()
            } else {
                s
            }
        }
        _ => "NA".to_string(),
    }
}

impl<T: Scalar> MetricTable<T> {
    /// One row per strategy that completed every window.
    pub fn from_backtest(result: &BacktestResult<T>) -> Self {
        let index = result.index_returns.as_deref();
        let rows = result
            .runs
            .iter()
            .map(|run| {
                let weights: Vec<&[T]> = run
                    .rebalances
                    .iter()
                    .filter_map(|r| r.weights.as_ref().map(|w| w.as_slice().expect("contiguous")))
                    .collect();
                let ave = if weights.is_empty() { None } else { ave_count(&weights, T::lit(SELECTION_THRESHOLD)) };
                metric_row(run.id.name(), &run.out_returns, &run.wealth, index, run.turnover, ave)
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, strategy: &str) -> Option<&MetricRow<T>> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "strategy,{}", METRIC_COLUMNS.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.values().iter().map(|&v| fmt_value(v)).collect();
            writeln!(out, "{},{}", r.strategy, cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_roi_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "strategy,{}", ROI_COLUMNS.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = match &r.roi {
                Some(s) => s.values().iter().map(|&v| fmt_value(Some(v))).collect(),
                None => vec!["NA".to_string(); ROI_COLUMNS.len()],
            };
            writeln!(out, "{},{}", r.strategy, cells.join(","))?;
        }
        Ok(())
    }

    /// Right-aligned fixed-point table for terminals.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut grid: Vec<Vec<String>> = Vec::with_capacity(self.rows.len() + 1);
        let mut head = vec!["strategy".to_string()];
        head.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
        grid.push(head);
        for r in &self.rows {
            let mut line = vec![r.strategy.clone()];
            line.extend(r.values().iter().map(|&v| fmt_fixed(v)));
            grid.push(line);
        }
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|c| grid.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        for line in &grid {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(
                    |(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) },
                )
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end())?;
        }
        Ok(())
    }

    /// Rank of each strategy per column, 1 = best, ties share the lower rank.
    pub fn ranks(&self) -> Vec<Vec<Option<usize>>> {
        let mut out = vec![vec![None; METRIC_COLUMNS.len()]; self.rows.len()];
        for (c, dir) in HIGHER_IS_BETTER.iter().enumerate() {
            let Some(higher) = *dir else { continue };
            let vals: Vec<Option<T>> = self.rows.iter().map(|r| r.values()[c]).collect();
            for (i, v) in vals.iter().enumerate() {
                let Some(v) = *v else { continue };
                let better = vals.iter().flatten().filter(|&&w| if higher { w > v } else { w < v }).count();
                out[i][c] = Some(better + 1);
            }
        }
        out
    }

    pub fn write_ranks_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "strategy,{}", METRIC_COLUMNS.join(","))?;
        for (r, ranks) in self.rows.iter().zip(self.ranks()) {
            let cells: Vec<String> = ranks.iter().map(|v| v.map_or("NA".to_string(), |k| k.to_string())).collect();
            writeln!(out, "{},{}", r.strategy, cells.join(","))?;
        }
        Ok(())
    }
}
