//! Preconditioned conjugate gradients on a masked grid Laplacian.
//!
//! Unknowns are numbered in row-major pixel order. Each row stores its
//! degree (number of edges, including edges to pinned nodes) and the
//! indices of its free neighbors; all off-diagonal entries are `-1`.

/// Symmetric positive definite graph Laplacian with pinned nodes removed.
pub(crate) struct GridLaplacian {
    pub degree: Vec<f64>,
    /// Free neighbors with a smaller index.
    pub lower: Vec<Vec<usize>>,
    /// Free neighbors with a larger index.
    pub upper: Vec<Vec<usize>>,
}

impl GridLaplacian {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.len() {
            let mut acc = self.degree[i] * x[i];
            for &j in &self.lower[i] {
                acc -= x[j];
            }
            for &j in &self.upper[i] {
                acc -= x[j];
            }
            out[i] = acc;
        }
    }
}

/// Zero-fill incomplete Cholesky factor `L` with `A ≈ L Lᵀ`.
struct IncompleteCholesky {
    diag: Vec<f64>,
    /// `lower_values[i][k]` is `L[i, lower[i][k]]`.
    lower_values: Vec<Vec<f64>>,
}

impl IncompleteCholesky {
    /// `None` on a non-positive pivot.
    fn new(a: &GridLaplacian) -> Option<Self> {
        let n = a.len();
        let mut diag = vec![0.0; n];
        let mut lower_values = Vec::with_capacity(n);
        for i in 0..n {
            // the stencil has no common lower neighbor between i and its own
            // lower neighbors, so each off-diagonal is a_ij / l_jj
            let vals: Vec<f64> = a.lower[i].iter().map(|&j| -1.0 / diag[j]).collect();
            let pivot = a.degree[i] - vals.iter().map(|v| v * v).sum::<f64>();
            if !(pivot > 0.0) {
                return None;
            }
            diag[i] = pivot.sqrt();
            lower_values.push(vals);
        }
        Some(Self { diag, lower_values })
    }

    fn solve(&self, a: &GridLaplacian, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut acc = r[i];
            for (&j, &v) in a.lower[i].iter().zip(&self.lower_values[i]) {
                acc -= v * z[j];
            }
            z[i] = acc / self.diag[i];
        }
        for i in (0..n).rev() {
            z[i] /= self.diag[i];
            let zi = z[i];
            for (&j, &v) in a.lower[i].iter().zip(&self.lower_values[i]) {
                z[j] -= v * zi;
            }
        }
    }
}

pub(crate) struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` from `x = 0`, stopping when `|b - A x| / |b| < tolerance`.
pub(crate) fn conjugate_gradient(
    a: &GridLaplacian,
    b: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> CgOutcome {
    let n = a.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if n == 0 || b_norm == 0.0 {
        return CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }

    let precond = IncompleteCholesky::new(a);
    if precond.is_none() {
        log::warn!("incomplete Cholesky broke down; using Jacobi preconditioning");
    }
    let apply_precond = |r: &[f64], z: &mut [f64]| match &precond {
        Some(ic) => ic.solve(a, r, z),
        None => {
            for i in 0..n {
                z[i] = r[i] / a.degree[i];
            }
        }
    };

    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    apply_precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;

    for it in 1..=max_iterations {
        a.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual < tolerance {
            return CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: residual,
                converged: true,
            };
        }
        apply_precond(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        solution: x,
        iterations: max_iterations,
        relative_residual: residual,
        converged: false,
    }
}
