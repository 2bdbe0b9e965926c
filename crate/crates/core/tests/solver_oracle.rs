mod common;

use common::rng;
use divfolio::solver::{solve, MathProgram, SolveStatus};
use ndarray::{Array1, Array2};
use rand::Rng;

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[piv, col]].abs() < 1e-12 {
            return None;
        }
        for k in 0..n {
            a.swap([col, k], [piv, k]);
        }
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            for k in col..n {
                a[[r, k]] -= f * a[[col, k]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[[r, k]] * x[k]).sum();
        x[r] = (b[r] - s) / a[[r, r]];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Minimum of `c'v` over `{G v >= h}` by enumerating every basic solution.
fn vertex_min(c: &Array1<f64>, g: &Array2<f64>, h: &Array1<f64>) -> Option<f64> {
    let n = c.len();
    let mut best: Option<f64> = None;
    for set in combinations(g.nrows(), n) {
        let a = Array2::from_shape_fn((n, n), |(i, j)| g[[set[i], j]]);
        let b = Array1::from_shape_fn(n, |i| h[set[i]]);
        let Some(v) = solve_dense(a, b) else { continue };
        let feasible = (0..g.nrows()).all(|r| g.row(r).dot(&v) >= h[r] - 1e-9);
        if feasible {
            let obj = c.dot(&v);
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = rng(101);
    let mut checked = 0;
    while checked < 200 {
        // enumeration cost is C(n + m + 1, m + 1), so wide programs get few rows
        let n = rng.gen_range(2..=20);
        let m = rng.gen_range(1..=if n > 8 { 2 } else { 5 });
        let center = Array1::from_shape_fn(n, |_| rng.gen_range(0.1..2.0));
        let a = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
        let slack = Array1::from_shape_fn(m, |_| rng.gen_range(0.0..1.0));
        let b = a.dot(&center) - &slack;
        let c = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));

        let mut p = MathProgram::new(n);
        p.set_linear(c.clone());
        for r in 0..m {
            p.add_ineq((0..n).map(|j| (j, a[[r, j]])).collect(), b[r]);
        }
        // box the feasible set so the LP is bounded: sum v <= 10
        p.add_ineq((0..n).map(|j| (j, -1.0)).collect(), -10.0);

        // the same polyhedron as G v >= h, bounds included
        let rows = m + 1 + n;
        let mut g = Array2::zeros((rows, n));
        let mut h = Array1::zeros(rows);
        for r in 0..m {
            g.row_mut(r).assign(&a.row(r));
            h[r] = b[r];
        }
        g.row_mut(m).fill(-1.0);
        h[m] = -10.0;
        for j in 0..n {
            g[[m + 1 + j, j]] = 1.0;
        }

        let oracle = vertex_min(&c, &g, &h).expect("feasible by construction");
        let res = solve(&p);
        assert_eq!(res.status, SolveStatus::Optimal, "{}", p.to_text());
        let rel = (res.objective - oracle).abs() / oracle.abs().max(1.0);
        assert!(rel <= 1e-6, "objective {} vs oracle {oracle}", res.objective);
        checked += 1;
    }
}

#[test]
fn equality_qp_matches_kkt_solve() {
    let mut rng = rng(102);
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let m = rng.gen_range(1..n);
        let f = Array2::from_shape_fn((n, n + 2), |_| rng.gen_range(-1.0..1.0));
        let mut q = f.dot(&f.t()) / (n + 2) as f64;
        for i in 0..n {
            q[[i, i]] += 0.05;
        }
        let a = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
        let b = Array1::from_shape_fn(m, |_| rng.gen_range(-1.0..1.0));
        let c = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));

        // [2Q A'; A 0] [v; -lambda] = [-c; b]
        let k = n + m;
        let mut kkt = Array2::zeros((k, k));
        let mut rhs = Array1::zeros(k);
        for i in 0..n {
            for j in 0..n {
                kkt[[i, j]] = 2.0 * q[[i, j]];
            }
            for r in 0..m {
                kkt[[i, n + r]] = a[[r, i]];
                kkt[[n + r, i]] = a[[r, i]];
            }
            rhs[i] = -c[i];
        }
        for r in 0..m {
            rhs[n + r] = b[r];
        }
        let Some(exact) = solve_dense(kkt, rhs) else { continue };

        let mut p = MathProgram::new(n);
        p.set_quad(q).set_linear(c);
        for j in 0..n {
            p.set_free(j);
        }
        for r in 0..m {
            p.add_eq((0..n).map(|j| (j, a[[r, j]])).collect(), b[r]);
        }
        let res = solve(&p);
        assert_eq!(res.status, SolveStatus::Optimal);
        for j in 0..n {
            assert!((res.v[j] - exact[j]).abs() <= 1e-8, "v[{j}] = {} vs {}", res.v[j], exact[j]);
        }
    }
}

#[test]
fn free_and_bounded_variables_coexist() {
    // min (v0 - 1)^2 + (v1 + 2)^2 with v1 free and v0 >= 0: (1, -2)
    let mut p: MathProgram<f64> = MathProgram::new(2);
    p.set_quad(ndarray::array![[1.0, 0.0], [0.0, 1.0]]).set_linear(ndarray::array![-2.0, 4.0]).set_free(1);
    let res = solve(&p);
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!((res.v[0] - 1.0).abs() < 1e-8);
    assert!((res.v[1] + 2.0).abs() < 1e-8);
}
