//! Price ingestion, return scenarios, sample moments and rolling windows.
//!
//! Returns are simple (linear) returns `P_t / P_{t-1} - 1`; every scenario
//! row carries the same probability `1/T`, so moments use `1/T`
//! normalization throughout.

use std::io::{Read, Write};
use std::ops::Range;
use std::sync::OnceLock;

use chrono::NaiveDate;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("csv error at row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: missing value")]
    MissingCell { row: usize, column: String },
    #[error("row {row}, column {column}: non-positive price {value}")]
    NonPositivePrice { row: usize, column: String, value: String },
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    BadNumber { row: usize, column: String, value: String },
    #[error("row {row}: cannot parse date {value:?} (expected YYYY-MM-DD)")]
    BadDate { row: usize, value: String },
    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: NaiveDate },
    #[error("row {row}: non-increasing date {date}")]
    NonIncreasingDate { row: usize, date: NaiveDate },
    #[error("header must contain a date column and at least one asset")]
    EmptyHeader,
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("insufficient history: need at least {needed} rows, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("scenario matrix must have at least one row and one column")]
    EmptyScenarios,
    #[error("non-finite return at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("no out-of-sample period: {total} observations with in-sample length {in_len}")]
    NoOutOfSample { total: usize, in_len: usize },
    #[error("holding length must be at least 1")]
    ZeroHold,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("io: {0}")]
    Io(String),
}

/// Adjusted close prices, one row per date and one column per asset.
#[derive(Debug, Clone)]
pub struct PriceSeries<T> {
    dates: Vec<NaiveDate>,
    prices: Array2<T>,
    asset_ids: Vec<String>,
}

impl<T: Scalar> PriceSeries<T> {
    pub fn new(dates: Vec<NaiveDate>, prices: Array2<T>, asset_ids: Vec<String>) -> Result<Self, ScenarioError> {
        if prices.nrows() != dates.len() || prices.ncols() != asset_ids.len() {
            return Err(ScenarioError::Dimension(format!(
                "{} dates and {} ids for a {}x{} price matrix",
                dates.len(),
                asset_ids.len(),
                prices.nrows(),
                prices.ncols()
            )));
        }
        if asset_ids.is_empty() {
            return Err(ScenarioError::EmptyHeader);
        }
        for (r, w) in dates.windows(2).enumerate() {
            if w[1] == w[0] {
                return Err(ScenarioError::DuplicateDate { row: r + 2, date: w[1] });
            }
            if w[1] < w[0] {
                return Err(ScenarioError::NonIncreasingDate { row: r + 2, date: w[1] });
            }
        }
        for ((r, c), &p) in prices.indexed_iter() {
            if !(p > T::zero()) || !p.is_finite() {
                return Err(ScenarioError::NonPositivePrice {
                    row: r + 1,
                    column: asset_ids[c].clone(),
                    value: p.to_string(),
                });
            }
        }
        Ok(Self { dates, prices, asset_ids })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &Array2<T> {
        &self.prices
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Removes the named column (typically a market index) and returns it
    /// alongside the remaining assets.
    pub fn split_column(&self, name: &str) -> Result<(PriceSeries<T>, Vec<T>), ScenarioError> {
        let idx = self
            .asset_ids
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| ScenarioError::UnknownColumn(name.to_string()))?;
        let keep: Vec<usize> = (0..self.asset_ids.len()).filter(|&c| c != idx).collect();
        if keep.is_empty() {
            return Err(ScenarioError::EmptyHeader);
        }
        let prices = self.prices.select(Axis(1), &keep);
        let ids = keep.iter().map(|&c| self.asset_ids[c].clone()).collect();
        let column = self.prices.column(idx).to_vec();
        Ok((PriceSeries { dates: self.dates.clone(), prices, asset_ids: ids }, column))
    }
}

/// Parses a header-bearing price CSV: `date,<asset1>,...,<assetN>`.
///
/// Row numbers in errors count the header as row 0, so the first data row
/// is row 1.
pub fn load_prices<T: Scalar, R: Read>(source: R) -> Result<PriceSeries<T>, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers().map_err(|e| ScenarioError::Malformed { row: 0, message: e.to_string() })?.clone();
    if header.len() < 2 {
        return Err(ScenarioError::EmptyHeader);
    }
    let asset_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = asset_ids.len();

    let mut dates = Vec::new();
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ScenarioError::Malformed { row, message: e.to_string() })?;
        if rec.len() != n + 1 {
            return Err(ScenarioError::Ragged { row, expected: n + 1, found: rec.len() });
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|_| ScenarioError::BadDate { row, value: rec[0].to_string() })?;
        if let Some(&prev) = dates.last() {
            if date == prev {
                return Err(ScenarioError::DuplicateDate { row, date });
            }
            if date < prev {
                return Err(ScenarioError::NonIncreasingDate { row, date });
            }
        }
        dates.push(date);
        for (c, raw) in rec.iter().skip(1).enumerate() {
            if raw.is_empty() {
                return Err(ScenarioError::MissingCell { row, column: asset_ids[c].clone() });
            }
            let v: f64 = raw.parse().map_err(|_| ScenarioError::BadNumber {
                row,
                column: asset_ids[c].clone(),
                value: raw.to_string(),
            })?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(ScenarioError::NonPositivePrice {
                    row,
                    column: asset_ids[c].clone(),
                    value: raw.to_string(),
                });
            }
            cells.push(T::lit(v));
        }
    }
    let prices =
        Array2::from_shape_vec((dates.len(), n), cells).map_err(|e| ScenarioError::Dimension(e.to_string()))?;
    Ok(PriceSeries { dates, prices, asset_ids })
}

/// `T x n` return realizations, each row an equally likely scenario.
#[derive(Debug, Clone)]
pub struct ScenarioMatrix<T> {
    returns: Array2<T>,
    asset_ids: Vec<String>,
    dates: Option<Vec<NaiveDate>>,
    mean: OnceLock<Array1<T>>,
    cov: OnceLock<Array2<T>>,
}

impl<T: Scalar> ScenarioMatrix<T> {
    /// Wraps a return matrix. Assets get positional ids `A1..An`.
    pub fn new(returns: Array2<T>) -> Result<Self, ScenarioError> {
        let ids = (1..=returns.ncols()).map(|i| format!("A{i}")).collect();
        Self::with_ids(returns, ids)
    }

    pub fn with_ids(returns: Array2<T>, asset_ids: Vec<String>) -> Result<Self, ScenarioError> {
        if returns.nrows() == 0 || returns.ncols() == 0 {
            return Err(ScenarioError::EmptyScenarios);
        }
        if asset_ids.len() != returns.ncols() {
            return Err(ScenarioError::Dimension(format!("{} ids for {} columns", asset_ids.len(), returns.ncols())));
        }
        if let Some(((r, c), _)) = returns.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(ScenarioError::NonFinite { row: r, column: c });
        }
        Ok(Self { returns, asset_ids, dates: None, mean: OnceLock::new(), cov: OnceLock::new() })
    }

    /// Builds from column vectors, one per asset.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self, ScenarioError> {
        let n = columns.len();
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(ScenarioError::Dimension("columns of unequal length".into()));
        }
        let m = Array2::from_shape_fn((t, n), |(r, c)| columns[c][r]);
        Self::new(m)
    }

    pub fn with_dates(mut self, dates: Vec<NaiveDate>) -> Result<Self, ScenarioError> {
        if dates.len() != self.returns.nrows() {
            return Err(ScenarioError::Dimension("one date per scenario row".into()));
        }
        self.dates = Some(dates);
        Ok(self)
    }

    pub fn returns(&self) -> &Array2<T> {
        &self.returns
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> Option<&[NaiveDate]> {
        self.dates.as_deref()
    }

    /// Number of scenarios `T`.
    pub fn n_scenarios(&self) -> usize {
        self.returns.nrows()
    }

    /// Number of assets `n`.
    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn asset(&self, i: usize) -> ArrayView1<'_, T> {
        self.returns.column(i)
    }

    /// Scenario rows `range` as a new matrix (moments are recomputed).
    pub fn slice_rows(&self, range: Range<usize>) -> Result<Self, ScenarioError> {
        if range.end > self.n_scenarios() || range.start >= range.end {
            return Err(ScenarioError::Dimension(format!("row range {range:?} outside 0..{}", self.n_scenarios())));
        }
        let mut out = Self::with_ids(self.returns.slice(s![range.clone(), ..]).to_owned(), self.asset_ids.clone())?;
        out.dates = self.dates.as_ref().map(|d| d[range].to_vec());
        Ok(out)
    }

    /// Expected returns `mu_i = (1/T) sum_t r_{i,t}`.
    pub fn mean_returns(&self) -> &Array1<T> {
        self.mean.get_or_init(|| {
            let t = T::from_count(self.n_scenarios());
            self.returns.sum_axis(Axis(0)) / t
        })
    }

    /// Covariance with `1/T` normalization.
    pub fn covariance(&self) -> &Array2<T> {
        self.cov.get_or_init(|| {
            let mu = self.mean_returns();
            let centered = &self.returns - &mu.view().insert_axis(Axis(0));
            let t = T::from_count(self.n_scenarios());
            let mut c = centered.t().dot(&centered) / t;
            let n = c.nrows();
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = c[[j, i]];
                    c[[i, j]] = v;
                }
            }
            c
        })
    }

    /// Per-asset standard deviations `sigma_i`.
    pub fn volatilities(&self) -> Array1<T> {
        self.covariance().diag().mapv(|v| v.max(T::zero()).sqrt())
    }
}

/// Simple returns from consecutive prices; `T = T_p - 1`.
pub fn to_returns<T: Scalar>(prices: &PriceSeries<T>) -> Result<ScenarioMatrix<T>, ScenarioError> {
    let tp = prices.len();
    if tp < 2 {
        return Err(ScenarioError::InsufficientHistory { needed: 2, have: tp });
    }
    let p = prices.prices();
    let r = Array2::from_shape_fn((tp - 1, p.ncols()), |(t, i)| p[[t + 1, i]] / p[[t, i]] - T::one());
    ScenarioMatrix::with_ids(r, prices.asset_ids().to_vec())?.with_dates(prices.dates()[1..].to_vec())
}

/// Simple returns of a single price column.
pub fn column_returns<T: Scalar>(prices: &[T]) -> Vec<T> {
    prices.windows(2).map(|w| w[1] / w[0] - T::one()).collect()
}

/// One rebalance: fit on `in_range`, hold over `out_range`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub in_range: Range<usize>,
    pub out_range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub in_len: usize,
    pub hold_len: usize,
    pub windows: Vec<Window>,
}

impl WindowPlan {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Total number of out-of-sample observations.
    pub fn out_len(&self) -> usize {
        self.windows.iter().map(|w| w.out_range.len()).sum()
    }
}

/// Rolling windows: the in-sample block of `in_len` rows slides forward by
/// `hold_len` each rebalance; the last holding period is truncated at `total`.
pub fn plan_windows(total: usize, in_len: usize, hold_len: usize) -> Result<WindowPlan, ScenarioError> {
    if hold_len == 0 {
        return Err(ScenarioError::ZeroHold);
    }
    if total <= in_len {
        return Err(ScenarioError::NoOutOfSample { total, in_len });
    }
    let mut windows = Vec::new();
    let mut start = in_len;
    while start < total {
        let end = (start + hold_len).min(total);
        windows.push(Window { in_range: start - in_len..start, out_range: start..end });
        start = end;
    }
    Ok(WindowPlan { in_len, hold_len, windows })
}

/// Writes a matrix as CSV with a header row; `row_labels` become the first column.
pub fn write_matrix_csv<T: Scalar, W: Write>(
    mut out: W,
    label_header: &str,
    col_ids: &[String],
    row_labels: &[String],
    m: &Array2<T>,
) -> Result<(), ScenarioError> {
    let io = |e: std::io::Error| ScenarioError::Io(e.to_string());
    write!(out, "{label_header}").map_err(io)?;
    for id in col_ids {
        write!(out, ",{id}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (r, row) in m.rows().into_iter().enumerate() {
        write!(out, "{}", row_labels.get(r).map_or_else(|| r.to_string(), Clone::clone)).map_err(io)?;
        for v in row {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}
