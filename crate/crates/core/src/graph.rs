//! Weighted directed communication graphs: Laplacian construction,
//! balancedness, algebraic connectivity and the projection matrix used to
//! measure synchronization.

use crate::linalg::{self, Mat};
use thiserror::Error;

/// Default absolute tolerance for the balancedness test. Weights are exact
/// config inputs, so only rounding noise has to be absorbed.
pub const BALANCE_TOL: f64 = 1e-9;

/// Off-diagonal tolerance / sweep cap for the Jacobi eigensolver.
pub const EIG_TOL: f64 = 1e-12;
pub const EIG_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("eigensolver failed: {0}")]
    NonConvergence(#[from] linalg::LinalgError),
}

/// Communication topology with nonnegative edge weights; `weight(i, j)` is
/// the control gain on the arc i -> j.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: Mat,
}

impl WeightedDigraph {
    /// Build from a square weight matrix (row i = out-edges of agent i).
    /// Rejects loops, negative weights and fewer than two agents.
    pub fn from_weights(weights: Mat) -> Result<Self, GraphError> {
        let n = weights.len();
        if n < 2 {
            return Err(GraphError::InvalidGraph(format!(
                "need at least 2 agents, got {n}"
            )));
        }
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::InvalidGraph(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                if i == j && w != 0.0 {
                    return Err(GraphError::InvalidGraph(format!("loop at vertex {i}")));
                }
                if w < 0.0 || !w.is_finite() {
                    return Err(GraphError::InvalidGraph(format!(
                        "weight ({i},{j}) = {w} is not a finite nonnegative number"
                    )));
                }
            }
        }
        Ok(WeightedDigraph { weights })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from][to]
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    /// Vertices with an arc into `j`, together with the arc gains.
    pub fn in_neighbors(&self, j: usize) -> Vec<(usize, f64)> {
        (0..self.n())
            .filter(|&k| self.weights[k][j] != 0.0)
            .map(|k| (k, self.weights[k][j]))
            .collect()
    }

    /// Vertices `j` sends to, together with the arc gains.
    pub fn out_neighbors(&self, j: usize) -> Vec<(usize, f64)> {
        (0..self.n())
            .filter(|&k| self.weights[j][k] != 0.0)
            .map(|k| (k, self.weights[j][k]))
            .collect()
    }

    /// Number of in-edges of `j`, ignoring weights.
    pub fn in_neighbor_count(&self, j: usize) -> usize {
        (0..self.n()).filter(|&k| self.weights[k][j] != 0.0).count()
    }
}

/// Spectral and degree facts about a graph, bundled for reporting.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub laplacian: Mat,
    pub lambda_g: f64,
    pub balanced: bool,
    pub in_degree: Vec<f64>,
    pub out_degree: Vec<f64>,
}

/// Laplacian L = D_out - A. Every row sums to zero by construction.
pub fn laplacian(g: &WeightedDigraph) -> Mat {
    let n = g.n();
    let mut l = linalg::zeros(n, n);
    for i in 0..n {
        let mut deg = 0.0;
        for j in 0..n {
            if i != j {
                l[i][j] = -g.weight(i, j);
                deg += g.weight(i, j);
            }
        }
        l[i][i] = deg;
    }
    l
}

/// Weighted in- and out-degree vectors.
pub fn degrees(g: &WeightedDigraph) -> (Vec<f64>, Vec<f64>) {
    let n = g.n();
    let mut din = vec![0.0; n];
    let mut dout = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j);
            dout[i] += w;
            din[j] += w;
        }
    }
    (din, dout)
}

/// A graph is balanced when every vertex has equal weighted in- and
/// out-degree; then both row and column sums of L vanish.
pub fn is_balanced(g: &WeightedDigraph, tol: f64) -> bool {
    let (din, dout) = degrees(g);
    din.iter()
        .zip(&dout)
        .all(|(i, o)| (i - o).abs() <= tol)
}

/// Algebraic connectivity: second-smallest eigenvalue of (L + L^T) / 2,
/// computed with the Jacobi eigensolver. For a balanced connected graph the
/// smallest eigenvalue is ~0 and the returned value is positive.
pub fn algebraic_connectivity(g: &WeightedDigraph) -> Result<f64, GraphError> {
    let l = laplacian(g);
    let s = linalg::symmetric_part(&l);
    let eig = linalg::jacobi_eigenvalues(&s, EIG_TOL, EIG_MAX_SWEEPS)?;
    Ok(eig[1])
}

pub fn spectral_summary(g: &WeightedDigraph, balance_tol: f64) -> Result<SpectralSummary, GraphError> {
    let (in_degree, out_degree) = degrees(g);
    Ok(SpectralSummary {
        laplacian: laplacian(g),
        lambda_g: algebraic_connectivity(g)?,
        balanced: is_balanced(g, balance_tol),
        in_degree,
        out_degree,
    })
}

/// The (N-1) x N projection matrix with Phi 1 = 0, Phi Phi^T = I and
/// Phi^T Phi = I - (1/N) 1 1^T, used to express the synchronization error
/// quadratic form.
pub fn phi_matrix(n: usize) -> Mat {
    assert!(n >= 2, "phi_matrix needs n >= 2");
    let nf = n as f64;
    let nu = (nf - nf.sqrt()) / (nf * (nf - 1.0));
    let mut phi = linalg::zeros(n - 1, n);
    for i in 0..n - 1 {
        phi[i][0] = -1.0 + (nf - 1.0) * nu;
        for j in 1..n {
            phi[i][j] = if j == i + 1 { 1.0 - nu } else { -nu };
        }
    }
    phi
}

/// Mean output and the deviation vector from it; the deviation is zero
/// exactly when all outputs agree.
pub fn sync_measure(y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let y_bar = y.iter().sum::<f64>() / n as f64;
    let y_delta = y.iter().map(|v| v - y_bar).collect();
    (y_bar, y_delta)
}

/// Max-norm of the deviation vector, the scalar synchronization measure
/// used for thresholds and plots.
pub fn sync_error_inf(y: &[f64]) -> f64 {
    let (_, yd) = sync_measure(y);
    yd.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// The five-node example graph used throughout the worked examples.
pub fn example_five_node() -> WeightedDigraph {
    WeightedDigraph::from_weights(vec![
        vec![0.0, 1.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 2.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0, 0.0, 3.0],
        vec![0.0, 1.0, 0.0, 0.0, 0.0],
        vec![2.0, 1.0, 0.0, 1.0, 0.0],
    ])
    .expect("static example graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat_mul, mat_vec, transpose};
    use proptest::prelude::*;

    #[test]
    fn laplacian_five_node_matches_reference() {
        let g = example_five_node();
        let l = laplacian(&g);
        let expected = vec![
            vec![2.0, -1.0, -1.0, 0.0, 0.0],
            vec![0.0, 3.0, -2.0, 0.0, -1.0],
            vec![0.0, 0.0, 3.0, 0.0, -3.0],
            vec![0.0, -1.0, 0.0, 1.0, 0.0],
            vec![-2.0, -1.0, 0.0, -1.0, 4.0],
        ];
        assert_eq!(l, expected);
    }

    #[test]
    fn laplacian_single_edge() {
        let g = WeightedDigraph::from_weights(vec![vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(laplacian(&g), vec![vec![3.0, -3.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn laplacian_zero_graph() {
        let g = WeightedDigraph::from_weights(vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(laplacian(&g), vec![vec![0.0; 3]; 3]);
    }

    #[test]
    fn degrees_five_node() {
        let g = example_five_node();
        let (din, dout) = degrees(&g);
        assert_eq!(din[4], 4.0); // node 5 weighted in-degree
        assert_eq!(dout[0], 2.0); // node 1 out-degree
        assert_eq!(din, dout); // balanced graph
    }

    #[test]
    fn degrees_empty_graph() {
        let g = WeightedDigraph::from_weights(vec![vec![0.0; 2]; 2]).unwrap();
        let (din, dout) = degrees(&g);
        assert_eq!(din, vec![0.0, 0.0]);
        assert_eq!(dout, vec![0.0, 0.0]);
    }

    #[test]
    fn balancedness_cases() {
        assert!(is_balanced(&example_five_node(), BALANCE_TOL));
        let single =
            WeightedDigraph::from_weights(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(!is_balanced(&single, BALANCE_TOL));
        let symmetric = WeightedDigraph::from_weights(vec![
            vec![0.0, 2.0, 0.5],
            vec![2.0, 0.0, 1.0],
            vec![0.5, 1.0, 0.0],
        ])
        .unwrap();
        assert!(is_balanced(&symmetric, BALANCE_TOL));
    }

    #[test]
    fn connectivity_two_cycle() {
        let g = WeightedDigraph::from_weights(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let lam = algebraic_connectivity(&g).unwrap();
        assert!((lam - 2.0).abs() < 1e-12);
    }

    #[test]
    fn connectivity_five_node_matches_charpoly_oracle() {
        let g = example_five_node();
        let lam = algebraic_connectivity(&g).unwrap();
        let s = linalg::symmetric_part(&laplacian(&g));
        let oracle = charpoly_eigenvalues(&s);
        assert!(
            (lam - oracle[1]).abs() < 1e-9,
            "jacobi {lam} vs oracle {}",
            oracle[1]
        );
    }

    #[test]
    fn connectivity_example5_graph_oracle() {
        // four-node cycle-like graph from the data-falsification example
        let g = WeightedDigraph::from_weights(vec![
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ])
        .unwrap();
        let lam = algebraic_connectivity(&g).unwrap();
        let s = linalg::symmetric_part(&laplacian(&g));
        let oracle = charpoly_eigenvalues(&s);
        assert!((lam - oracle[1]).abs() < 1e-9);
        // Rayleigh quotient with (1,-1,0,0)/sqrt(2) equals 1, so lambda <= 1 < 2.
        assert!(lam <= 1.0 + 1e-12);
    }

    #[test]
    fn phi_small_cases() {
        let phi2 = phi_matrix(2);
        let nu = (2.0 - 2.0_f64.sqrt()) / 2.0;
        assert!((phi2[0][0] - (-1.0 + nu)).abs() < 1e-15);
        let ones = vec![1.0, 1.0];
        assert!(mat_vec(&phi2, &ones)[0].abs() < 1e-12);

        let phi5 = phi_matrix(5);
        let gram = mat_mul(&phi5, &transpose(&phi5));
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[i][j] - expect).abs() < 1e-12,
                    "PhiPhi^T ({i},{j}) = {}",
                    gram[i][j]
                );
            }
        }
    }

    #[test]
    fn phi_identities_up_to_64() {
        for n in [2usize, 3, 5, 8, 17, 33, 64] {
            let phi = phi_matrix(n);
            let ones = vec![1.0; n];
            for v in mat_vec(&phi, &ones) {
                assert!(v.abs() < 1e-12, "Phi 1 != 0 for n={n}");
            }
            let gram = mat_mul(&transpose(&phi), &phi);
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j {
                        1.0 - 1.0 / n as f64
                    } else {
                        -1.0 / n as f64
                    };
                    assert!(
                        (gram[i][j] - expect).abs() < 1e-12,
                        "Phi^T Phi ({i},{j}) off for n={n}"
                    );
                }
            }
        }
    }

    #[test]
    fn sync_measure_cases() {
        let (yb, yd) = sync_measure(&[3.0, 3.0, 3.0]);
        assert_eq!(yb, 3.0);
        assert!(yd.iter().all(|v| *v == 0.0));

        let (yb, _) = sync_measure(&[5.0, 10.0, -5.0, 1.0, -3.0]);
        assert!((yb - 1.6).abs() < 1e-15);
    }

    #[test]
    fn invalid_graphs_rejected() {
        assert!(WeightedDigraph::from_weights(vec![vec![0.0]]).is_err());
        assert!(
            WeightedDigraph::from_weights(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err(),
            "loop"
        );
        assert!(
            WeightedDigraph::from_weights(vec![vec![0.0, -1.0], vec![0.0, 0.0]]).is_err(),
            "negative weight"
        );
    }

    // --- characteristic-polynomial oracle (test-only, independent of Jacobi) ---

    /// Coefficients of det(xI - A) by the Faddeev-LeVerrier recursion.
    fn charpoly(a: &Mat) -> Vec<f64> {
        let n = a.len();
        let mut coeffs = vec![0.0; n + 1];
        coeffs[n] = 1.0;
        let mut m = linalg::identity(n);
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

    /// All real roots of the characteristic polynomial of a symmetric matrix
    /// by sign-change scanning plus bisection. Symmetric matrices have only
    /// real roots, so this recovers the full spectrum.
    fn charpoly_eigenvalues(s: &Mat) -> Vec<f64> {
        let n = s.len();
        let coeffs = charpoly(s);
        // Gershgorin bound
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
                let (mut fa, _) = (prev_f, f);
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

    #[test]
    fn jacobi_matches_oracle_on_all_example_graphs() {
        let graphs = vec![
            example_five_node(),
            // weight-manipulation example graph
            WeightedDigraph::from_weights(vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 2.0, 0.0],
                vec![0.0, 0.0, 0.0, 2.0],
                vec![1.0, 1.0, 0.0, 0.0],
            ])
            .unwrap(),
            // data-falsification example graph
            WeightedDigraph::from_weights(vec![
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0, 0.0],
            ])
            .unwrap(),
            WeightedDigraph::from_weights(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        ];
        for g in graphs {
            let s = linalg::symmetric_part(&laplacian(&g));
            let jac = linalg::jacobi_eigenvalues(&s, EIG_TOL, EIG_MAX_SWEEPS).unwrap();
            let oracle = charpoly_eigenvalues(&s);
            assert_eq!(jac.len(), oracle.len());
            for (a, b) in jac.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "jacobi {a} vs oracle {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn laplacian_rows_sum_to_zero(weights in proptest::collection::vec(
            proptest::collection::vec(0.0f64..5.0, 4), 4)) {
            let mut w = weights;
            for (i, row) in w.iter_mut().enumerate() { row[i] = 0.0; }
            let g = WeightedDigraph::from_weights(w).unwrap();
            let l = laplacian(&g);
            for row in &l {
                let s: f64 = row.iter().sum();
                prop_assert!(s.abs() < 1e-12);
            }
        }

        #[test]
        fn quadratic_form_lower_bound(y in proptest::collection::vec(-10.0f64..10.0, 5)) {
            // y^T L^T y >= lambda(G) * y_delta^T y_delta on the balanced example graph
            let g = example_five_node();
            let l = laplacian(&g);
            let lam = algebraic_connectivity(&g).unwrap();
            let lt_y = mat_vec(&transpose(&l), &y);
            let quad = dot_slice(&y, &lt_y);
            let (_, yd) = sync_measure(&y);
            let ydn = dot_slice(&yd, &yd);
            prop_assert!(quad >= lam * ydn - 1e-9 * (1.0 + ydn));
        }

        #[test]
        fn phi_projects_to_deviation(y in proptest::collection::vec(-100.0f64..100.0, 6)) {
            let phi = phi_matrix(6);
            let p = mat_mul(&transpose(&phi), &phi);
            let proj = mat_vec(&p, &y);
            let (_, yd) = sync_measure(&y);
            for (a, b) in proj.iter().zip(&yd) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    fn dot_slice(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
