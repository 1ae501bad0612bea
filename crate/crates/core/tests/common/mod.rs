//! Shared helpers for the integration suites: an independent
//! characteristic-polynomial eigenvalue oracle and scenario loading.
#![allow(dead_code)] // each test binary uses a subset

use byzsync::linalg::{identity, mat_mul, Mat};
use byzsync::scenario::ScenarioConfig;
use std::path::PathBuf;

/// Coefficients of det(xI - A) via the Faddeev-LeVerrier recursion.
pub fn charpoly(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = identity(n);
    for k in 1..=n {
        let am = mat_mul(a, &m);
        let trace: f64 = (0..n).map(|i| am[i][i]).sum();
        let c = -trace / k as f64;
        coeffs[n - k] = c;
        m = am;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += c;
        }
    }
    coeffs
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// All real eigenvalues of a symmetric matrix from characteristic-polynomial
/// sign changes plus bisection; independent of the Jacobi code path.
pub fn charpoly_eigenvalues(s: &Mat) -> Vec<f64> {
    let n = s.len();
    let coeffs = charpoly(s);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r: f64 = (0..n).filter(|&j| j != i).map(|j| s[i][j].abs()).sum();
        lo = lo.min(s[i][i] - r);
        hi = hi.max(s[i][i] + r);
    }
    let grid = 200_000;
    let mut roots = Vec::new();
    let mut prev_x = lo - 1e-9;
    let mut prev_f = poly_eval(&coeffs, prev_x);
    for g in 1..=grid {
        let x = lo - 1e-9 + (hi - lo + 2e-9) * g as f64 / grid as f64;
        let f = poly_eval(&coeffs, x);
        if prev_f == 0.0 {
            roots.push(prev_x);
        } else if prev_f * f < 0.0 {
            let (mut a, mut b) = (prev_x, x);
            let mut fa = prev_f;
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = poly_eval(&coeffs, mid);
                if fa * fm <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev_f = f;
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn load_scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_path(&scenario_path(name)).expect("bundled scenario parses")
}
