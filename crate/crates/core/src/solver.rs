//! LP/QP model container and the interior-point backend that solves it.
//!
//! Programs have the form
//!
//! ```text
//!     minimize    v' Q v + c' v
//!     subject to  A_eq v  = b_eq
//!                 A_in v >= b_in
//!                 v_j >= l_j      for every j not in free_vars
//! ```
//!
//! Note the objective has no `1/2` factor: `min v'v` over the unit simplex
//! line reports `0.5`, not `0.25`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, SupportedConeT, ZeroConeT,
};
use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("variable index {index} out of range for {n_vars} variables")]
    VarOutOfRange { index: usize, n_vars: usize },
    #[error("quadratic term must be {n}x{n}, got {rows}x{cols}")]
    QuadShape { n: usize, rows: usize, cols: usize },
    #[error("quadratic term not symmetric at ({i},{j})")]
    QuadAsymmetric { i: usize, j: usize },
    #[error("linear cost has {got} entries, expected {n}")]
    LinearShape { got: usize, n: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
}

/// A sparse constraint row: `(variable index, coefficient)` pairs.
pub type Row<T> = Vec<(usize, T)>;

#[derive(Debug, Clone)]
pub struct MathProgram<T> {
    n_vars: usize,
    quad: Option<Array2<T>>,
    linear: Array1<T>,
    eq_rows: Vec<Row<T>>,
    eq_rhs: Vec<T>,
    ineq_rows: Vec<Row<T>>,
    ineq_rhs: Vec<T>,
    lower_bounds: Vec<T>,
    free_vars: BTreeSet<usize>,
}

impl<T: Scalar> MathProgram<T> {
    /// A program over `n_vars` variables, zero cost, all bounded below by 0.
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            quad: None,
            linear: Array1::zeros(n_vars),
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ineq_rows: Vec::new(),
            ineq_rhs: Vec::new(),
            lower_bounds: vec![T::zero(); n_vars],
            free_vars: BTreeSet::new(),
        }
    }

    pub fn set_quad(&mut self, q: Array2<T>) -> &mut Self {
        self.quad = Some(q);
        self
    }

    pub fn set_linear(&mut self, c: Array1<T>) -> &mut Self {
        self.linear = c;
        self
    }

    pub fn set_cost(&mut self, j: usize, c: T) -> &mut Self {
        self.linear[j] = c;
        self
    }

    /// Adds `row . v = rhs`.
    pub fn add_eq(&mut self, row: Row<T>, rhs: T) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    /// Adds `row . v >= rhs`.
    pub fn add_ineq(&mut self, row: Row<T>, rhs: T) -> &mut Self {
        self.ineq_rows.push(row);
        self.ineq_rhs.push(rhs);
        self
    }

    pub fn set_free(&mut self, j: usize) -> &mut Self {
        self.free_vars.insert(j);
        self
    }

    pub fn set_lower_bound(&mut self, j: usize, l: T) -> &mut Self {
        self.lower_bounds[j] = l;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_rows.len()
    }

    pub fn quad(&self) -> Option<&Array2<T>> {
        self.quad.as_ref()
    }

    pub fn linear(&self) -> &Array1<T> {
        &self.linear
    }

    pub fn eq_rows(&self) -> impl Iterator<Item = (&Row<T>, T)> {
        self.eq_rows.iter().zip(self.eq_rhs.iter().copied())
    }

    pub fn ineq_rows(&self) -> impl Iterator<Item = (&Row<T>, T)> {
        self.ineq_rows.iter().zip(self.ineq_rhs.iter().copied())
    }

    pub fn free_vars(&self) -> &BTreeSet<usize> {
        &self.free_vars
    }

    pub fn is_free(&self, j: usize) -> bool {
        self.free_vars.contains(&j)
    }

    pub fn lower_bound(&self, j: usize) -> T {
        self.lower_bounds[j]
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let n = self.n_vars;
        if self.linear.len() != n {
            return Err(ProgramError::LinearShape { got: self.linear.len(), n });
        }
        if self.linear.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("linear cost"));
        }
        if let Some(q) = &self.quad {
            if q.nrows() != n || q.ncols() != n {
                return Err(ProgramError::QuadShape { n, rows: q.nrows(), cols: q.ncols() });
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    if (q[[i, j]] - q[[j, i]]).abs() > T::lit(1e-12) {
                        return Err(ProgramError::QuadAsymmetric { i, j });
                    }
                }
            }
            if q.iter().any(|v| !v.is_finite()) {
                return Err(ProgramError::NonFinite("quadratic term"));
            }
        }
        for (row, rhs) in self.eq_rows().chain(self.ineq_rows()) {
            if !rhs.is_finite() {
                return Err(ProgramError::NonFinite("right-hand side"));
            }
            for &(j, a) in row {
                if j >= n {
                    return Err(ProgramError::VarOutOfRange { index: j, n_vars: n });
                }
                if !a.is_finite() {
                    return Err(ProgramError::NonFinite("constraint row"));
                }
            }
        }
        if let Some(&j) = self.free_vars.iter().find(|&&j| j >= n) {
            return Err(ProgramError::VarOutOfRange { index: j, n_vars: n });
        }
        Ok(())
    }

    /// `v' Q v + c' v`.
    pub fn objective_value(&self, v: &Array1<T>) -> T {
        let lin = self.linear.dot(v);
        match &self.quad {
            Some(q) => lin + v.dot(&q.dot(v)),
            None => lin,
        }
    }

    /// Largest absolute violation of any equality, inequality or bound.
    pub fn primal_residual(&self, v: &Array1<T>) -> T {
        let dot = |row: &Row<T>| row.iter().map(|&(j, a)| a * v[j]).sum::<T>();
        let mut worst = T::zero();
        for (row, b) in self.eq_rows() {
            worst = worst.max((dot(row) - b).abs());
        }
        for (row, b) in self.ineq_rows() {
            worst = worst.max(b - dot(row));
        }
        for j in 0..self.n_vars {
            if !self.is_free(j) {
                worst = worst.max(self.lower_bounds[j] - v[j]);
            }
        }
        worst
    }

    /// Plain-text dump for cross-checking with external solvers.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vars={} eq={} ineq={}", self.n_vars, self.n_eq(), self.n_ineq());
        let _ = writeln!(out, "minimize");
        if let Some(q) = &self.quad {
            for i in 0..self.n_vars {
                for j in i..self.n_vars {
                    if q[[i, j]] != T::zero() {
                        let _ = writeln!(out, "  quad v{i} v{j} {}", q[[i, j]]);
                    }
                }
            }
        }
        for (j, c) in self.linear.iter().enumerate() {
            if *c != T::zero() {
                let _ = writeln!(out, "  lin v{j} {c}");
            }
        }
        let _ = writeln!(out, "subject to");
        let fmt_row = |row: &Row<T>| row.iter().map(|(j, a)| format!("{a} v{j}")).collect::<Vec<_>>().join(" + ");
        for (k, (row, b)) in self.eq_rows().enumerate() {
            let _ = writeln!(out, "  e{k}: {} = {b}", fmt_row(row));
        }
        for (k, (row, b)) in self.ineq_rows().enumerate() {
            let _ = writeln!(out, "  i{k}: {} >= {b}", fmt_row(row));
        }
        let _ = writeln!(out, "bounds");
        for j in 0..self.n_vars {
            if self.is_free(j) {
                let _ = writeln!(out, "  v{j} free");
            } else {
                let _ = writeln!(out, "  v{j} >= {}", self.lower_bounds[j]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub status: SolveStatus,
    pub v: Array1<T>,
    pub objective: T,
    /// Scaled stationarity and complementarity violation at `v`.
    pub kkt_residual: T,
    pub primal_residual: T,
    pub iterations: u32,
    pub diagnostics: Option<String>,
}

impl<T: Scalar> SolveResult<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn failed(n: usize, status: SolveStatus, iterations: u32, why: String) -> Self {
        Self {
            status,
            v: Array1::from_elem(n, T::nan()),
            objective: T::nan(),
            kkt_residual: T::nan(),
            primal_residual: T::nan(),
            iterations,
            diagnostics: Some(why),
        }
    }
}

/// Anything that can solve a [`MathProgram`].
pub trait SolverBackend: Send + Sync {
    fn solve<T: Scalar>(&self, p: &MathProgram<T>) -> SolveResult<T>;
}

/// Primal feasibility bound required for an `Optimal` status.
pub const PRIMAL_TOL: f64 = 1e-8;
/// KKT bound required for an `Optimal` status.
pub const KKT_TOL: f64 = 1e-7;

/// Primal-dual interior-point method (Clarabel) in double precision.
#[derive(Debug, Clone)]
pub struct InteriorPoint {
    pub max_iter: u32,
    pub gap_tol: f64,
    pub feas_tol: f64,
}

impl Default for InteriorPoint {
    fn default() -> Self {
        Self { max_iter: 200, gap_tol: 1e-11, feas_tol: 1e-12 }
    }
}

/// Constraint rows in cone form `a . v + s = b`, `s` in K, plus their kind.
struct ConeRows {
    rows: Vec<Row<f64>>,
    rhs: Vec<f64>,
    n_zero: usize,
}

fn cone_rows<T: Scalar>(p: &MathProgram<T>) -> ConeRows {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (row, b) in p.eq_rows() {
        rows.push(row.iter().map(|&(j, a)| (j, a.to_f64_lossy())).collect());
        rhs.push(b.to_f64_lossy());
    }
    let n_zero = rows.len();
    for (row, b) in p.ineq_rows() {
        rows.push(row.iter().map(|&(j, a)| (j, -a.to_f64_lossy())).collect());
        rhs.push(-b.to_f64_lossy());
    }
    for j in 0..p.n_vars() {
        if !p.is_free(j) {
            rows.push(vec![(j, -1.0)]);
            rhs.push(-p.lower_bound(j).to_f64_lossy());
        }
    }
    ConeRows { rows, rhs, n_zero }
}

fn to_csc(n_rows: usize, n_cols: usize, rows: &[Row<f64>]) -> CscMatrix<f64> {
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    for (r, row) in rows.iter().enumerate() {
        for &(j, a) in row {
            if a != 0.0 {
                ii.push(r);
                jj.push(j);
                vv.push(a);
            }
        }
    }
    CscMatrix::new_from_triplets(n_rows, n_cols, ii, jj, vv)
}

impl SolverBackend for InteriorPoint {
    fn solve<T: Scalar>(&self, p: &MathProgram<T>) -> SolveResult<T> {
        let n = p.n_vars();
        if let Err(e) = p.validate() {
            return SolveResult::failed(n, SolveStatus::NumericalFailure, 0, format!("invalid program: {e}"));
        }
        let cr = cone_rows(p);
        let m = cr.rows.len();

        // P = 2Q, upper triangle.
        let mut ptrip = Vec::new();
        if let Some(q) = p.quad() {
            for i in 0..n {
                for j in i..n {
                    let v = 2.0 * q[[i, j]].to_f64_lossy();
                    if v != 0.0 {
                        ptrip.push((i, j, v));
                    }
                }
            }
        }
        let pmat = CscMatrix::new_from_triplets(
            n,
            n,
            ptrip.iter().map(|t| t.0).collect(),
            ptrip.iter().map(|t| t.1).collect(),
            ptrip.iter().map(|t| t.2).collect(),
        );
        let q: Vec<f64> = p.linear().iter().map(|v| v.to_f64_lossy()).collect();
        let amat = to_csc(m, n, &cr.rows);
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if cr.n_zero > 0 {
            cones.push(ZeroConeT(cr.n_zero));
        }
        if m > cr.n_zero {
            cones.push(NonnegativeConeT(m - cr.n_zero));
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .max_threads(1)
            .tol_gap_abs(self.gap_tol * 1e-3)
            .tol_gap_rel(self.gap_tol)
            .tol_feas(self.feas_tol)
            .tol_infeas_abs(1e-9)
            .tol_infeas_rel(1e-9)
            .build()
            .expect("static solver settings");
        let mut solver = match DefaultSolver::new(&pmat, &q, &amat, &cr.rhs, &cones, settings) {
            Ok(s) => s,
            Err(e) => return SolveResult::failed(n, SolveStatus::NumericalFailure, 0, format!("backend setup: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let iterations = sol.iterations;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            other => {
                return SolveResult::failed(
                    n,
                    SolveStatus::NumericalFailure,
                    iterations,
                    format!("backend status {other:?}"),
                )
            }
        };
        if status != SolveStatus::Optimal {
            return SolveResult::failed(n, status, iterations, format!("backend status {:?}", sol.status));
        }

        let v64 = Array1::from(sol.x.clone());
        let kkt = kkt_residual(p, &cr, &v64, &sol.z);
        let primal = cone_primal_residual(&cr, &v64);
        let v: Array1<T> = v64.mapv(T::lit);
        let objective = p.objective_value(&v);
        let mut diagnostics = (sol.status == SolverStatus::AlmostSolved).then(|| "reduced accuracy".to_string());
        let mut status = status;
        if !(primal <= PRIMAL_TOL) || !(kkt <= KKT_TOL) {
            status = SolveStatus::NumericalFailure;
            diagnostics =
                Some(format!("residual check failed: primal {primal:e}, kkt {kkt:e} (backend {:?})", sol.status));
        }
        SolveResult {
            status,
            v,
            objective,
            kkt_residual: T::lit(kkt),
            primal_residual: T::lit(primal),
            iterations,
            diagnostics,
        }
    }
}

fn cone_primal_residual(cr: &ConeRows, v: &Array1<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for (r, (row, b)) in cr.rows.iter().zip(&cr.rhs).enumerate() {
        let av: f64 = row.iter().map(|&(j, a)| a * v[j]).sum();
        let viol = if r < cr.n_zero { (av - b).abs() } else { av - b };
        worst = worst.max(viol);
    }
    worst
}

/// max(relative stationarity residual, largest |z_r s_r|).
fn kkt_residual<T: Scalar>(p: &MathProgram<T>, cr: &ConeRows, v: &Array1<f64>, z: &[f64]) -> f64 {
    let n = p.n_vars();
    let mut grad: Vec<f64> = p.linear().iter().map(|c| c.to_f64_lossy()).collect();
    let mut scale = grad.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if let Some(q) = p.quad() {
        for i in 0..n {
            let qv: f64 = (0..n).map(|j| q[[i, j]].to_f64_lossy() * v[j]).sum();
            grad[i] += 2.0 * qv;
            scale = scale.max((2.0 * qv).abs());
        }
    }
    let mut comp = 0.0_f64;
    for (r, (row, b)) in cr.rows.iter().zip(&cr.rhs).enumerate() {
        let mut av = 0.0;
        for &(j, a) in row {
            grad[j] += a * z[r];
            av += a * v[j];
        }
        if r >= cr.n_zero {
            comp = comp.max((z[r] * (b - av)).abs());
        }
    }
    let stat = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs())) / (1.0 + scale);
    stat.max(comp)
}

/// Solves with the default backend.
pub fn solve<T: Scalar>(p: &MathProgram<T>) -> SolveResult<T> {
    InteriorPoint::default().solve(p)
}
