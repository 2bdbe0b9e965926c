#![allow(dead_code)]

use divfolio::scenarios::ScenarioMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn hadamard(t: usize) -> Array2<f64> {
    let mut h = Array2::from_elem((1, 1), 1.0);
    while h.nrows() < t {
        let k = h.nrows();
        let mut g = Array2::zeros((2 * k, 2 * k));
        for i in 0..k {
            for j in 0..k {
                let v = h[[i, j]];
                g[[i, j]] = v;
                g[[i, j + k]] = v;
                g[[i + k, j]] = v;
                g[[i + k, j + k]] = -v;
            }
        }
        h = g;
    }
    h
}

/// Scenarios whose population covariance is exactly
/// `sigma_i sigma_j (c + (1 - c) [i == j])`, built from orthogonal +-1
/// columns so that sample moments carry no estimation noise.
pub fn equicorrelated(sigma: &[f64], c: f64, mu: &[f64]) -> ScenarioMatrix<f64> {
    let n = sigma.len();
    let t = (n + 2).next_power_of_two();
    let h = hadamard(t);
    let m = Array2::from_shape_fn((t, n), |(k, i)| {
        mu[i] + sigma[i] * (c.sqrt() * h[[k, 1]] + (1.0 - c).sqrt() * h[[k, i + 2]])
    });
    ScenarioMatrix::new(m).unwrap()
}

/// Fat-tailed one-factor returns with asset-specific loadings and drifts.
pub fn random_scenarios(rng: &mut ChaCha8Rng, n: usize, t: usize) -> ScenarioMatrix<f64> {
    let student = StudentT::new(4.0).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.2)).collect();
    let idio: Vec<f64> = (0..n).map(|_| rng.gen_range(0.005..0.03)).collect();
    let drift: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.001..0.002)).collect();
    let mut m = Array2::zeros((t, n));
    for k in 0..t {
        let f = 0.01 * student.sample(rng) / 2.0_f64.sqrt();
        for i in 0..n {
            m[[k, i]] = drift[i] + beta[i] * f + idio[i] * normal.sample(rng);
        }
    }
    ScenarioMatrix::new(m).unwrap()
}

/// Random long-only portfolio; roughly a third of draws are sparse.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let sparse = rng.gen_bool(0.3);
    let mut w =
        Array1::from_shape_fn(n, |_| if sparse && rng.gen_bool(0.5) { 0.0 } else { -(1.0 - rng.gen::<f64>()).ln() });
    if w.sum() == 0.0 {
        let i = rng.gen_range(0..n);
        w[i] = 1.0;
    }
    let s = w.sum();
    w / s
}

/// Random positive definite covariance `A A' / k + d I`.
pub fn random_covariance(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let k = n + 2;
    let a = Array2::from_shape_fn((n, k), |_| rng.gen_range(-0.1..0.1));
    let mut c = a.dot(&a.t()) / k as f64;
    for i in 0..n {
        c[[i, i]] += rng.gen_range(1e-4..4e-3);
    }
    c
}

/// Every point of the simplex in 3 dimensions with the given grid step.
pub fn simplex_grid3(steps: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for a in 0..=steps {
        for b in 0..=(steps - a) {
            let c = steps - a - b;
            out.push([a as f64 / steps as f64, b as f64 / steps as f64, c as f64 / steps as f64]);
        }
    }
    out
}

/// Comonotone scenarios: every asset is an increasing function of one factor.
/// With `affine` the functions are `a_i + b_i f`.
pub fn comonotone(rng: &mut ChaCha8Rng, n: usize, t: usize, affine: bool) -> ScenarioMatrix<f64> {
    let normal = Normal::new(0.0, 0.01).unwrap();
    let f: Vec<f64> = (0..t).map(|_| normal.sample(rng)).collect();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a = rng.gen_range(-0.0005..0.0005);
            let b = rng.gen_range(0.5..2.0);
            let k = rng.gen_range(0.0..40.0);
            f.iter()
                .map(|&v| if affine { a + b * v } else { a + b * v + k * v * v * v + (v * 50.0).tanh() * 0.002 })
                .collect()
        })
        .collect();
    ScenarioMatrix::from_columns(&cols).unwrap()
}
