//! Minimal-norm least squares via Householder QR followed by a one-sided
//! Jacobi SVD of the triangular factor.
//!
//! Only `min(rows, cols)`-sized square work is ever formed, so wide
//! activation matrices (`K ≪ D`) never produce a `D × D` product.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Householder QR of a tall matrix (`rows ≥ cols`), stored compactly.
struct Qr {
    /// Reflector vectors; reflector `k` acts on entries `k..rows`.
    reflectors: Vec<Vec<f64>>,
    /// Upper-triangular `cols × cols` factor.
    r: Matrix,
    rows: usize,
}

impl Qr {
    fn new(a: &Matrix) -> Qr {
        let (m, n) = (a.rows(), a.cols());
        debug_assert!(m >= n);
        // column-major working copy
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..m).map(|i| a.get(i, j)).collect())
            .collect();
        let mut reflectors = Vec::with_capacity(n);
        for k in 0..n {
            let x = &cols[k][k..];
            let alpha = norm(x);
            let mut v = x.to_vec();
            if alpha == 0.0 {
                reflectors.push(v.iter().map(|_| 0.0).collect());
                continue;
            }
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vnorm = norm(&v);
            v.iter_mut().for_each(|e| *e /= vnorm);
            for col in cols.iter_mut().skip(k) {
                let tail = &mut col[k..];
                let proj = 2.0 * dot(&v, tail);
                tail.iter_mut().zip(&v).for_each(|(t, vi)| *t -= proj * vi);
            }
            reflectors.push(v);
        }
        let mut r = Matrix::zeros(n, n);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate().take(j + 1) {
                r.set(i, j, v);
            }
        }
        Qr {
            reflectors,
            r,
            rows: m,
        }
    }

    /// `Qᵀ y`, truncated to the first `cols` entries.
    fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut y = y.to_vec();
        for (k, v) in self.reflectors.iter().enumerate() {
            let tail = &mut y[k..];
            let proj = 2.0 * dot(v, tail);
            tail.iter_mut().zip(v).for_each(|(t, vi)| *t -= proj * vi);
        }
        y.truncate(self.r.rows());
        y
    }

    /// `Q z` for a `cols`-vector `z` (thin Q).
    fn q_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut y = z.to_vec();
        y.resize(self.rows, 0.0);
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let tail = &mut y[k..];
            let proj = 2.0 * dot(v, tail);
            tail.iter_mut().zip(v).for_each(|(t, vi)| *t -= proj * vi);
        }
        y
    }
}

/// Diagnostics of a minimal-norm solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct SolveInfo {
    pub rank: usize,
    pub max_singular_value: f64,
    pub min_retained_singular_value: f64,
    pub jacobi_sweeps: usize,
}

const MAX_SWEEPS: usize = 80;

/// Minimal-norm solution of the square system `m x ≈ y` by one-sided Jacobi
/// on the rows of `m`. Singular values `≤ rtol · σ_max` are treated as zero.
fn jacobi_pinv_solve(m: &Matrix, y: &[f64], rtol: f64) -> (Vec<f64>, SolveInfo) {
    let n = m.rows();
    let mut w = m.clone();
    let mut rot = Matrix::zeros(n, n);
    for i in 0..n {
        rot.set(i, i, 1.0);
    }
    let mut sq: Vec<f64> = (0..n).map(|i| dot(w.row(i), w.row(i))).collect();

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (sq[p], sq[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(w.row(p), w.row(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut rot, p, q, c, s);
                sq[p] = dot(w.row(p), w.row(p));
                sq[q] = dot(w.row(q), w.row(q));
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = sq.iter().map(|s| s.sqrt()).collect();
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = rtol * smax;
    let mut x = vec![0.0; m.cols()];
    let mut info = SolveInfo {
        max_singular_value: smax,
        min_retained_singular_value: f64::INFINITY,
        jacobi_sweeps: sweeps,
        ..SolveInfo::default()
    };
    // fixed order of accumulation
    for i in 0..n {
        if smax == 0.0 || sigma[i] <= cutoff {
            continue;
        }
        info.rank += 1;
        info.min_retained_singular_value = info.min_retained_singular_value.min(sigma[i]);
        let coef = dot(rot.row(i), y) / sq[i];
        x.iter_mut()
            .zip(w.row(i))
            .for_each(|(xe, we)| *xe += coef * we);
    }
    if info.rank == 0 {
        info.min_retained_singular_value = 0.0;
    }
    (x, info)
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let (head, tail) = m.data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Minimal-Euclidean-norm least-squares solution `x = A⁺ y`.
pub fn lstsq_min_norm(a: &Matrix, y: &[f64], rtol: f64) -> (Vec<f64>, SolveInfo) {
    assert_eq!(a.rows(), y.len(), "lstsq rhs length");
    if a.rows() == 0 || a.cols() == 0 {
        return (vec![0.0; a.cols()], SolveInfo::default());
    }
    if a.rows() >= a.cols() {
        // A = Q R  ⇒  A⁺ y = R⁺ (Qᵀ y)
        let qr = Qr::new(a);
        let qty = qr.qt_mul(y);
        jacobi_pinv_solve(&qr.r, &qty, rtol)
    } else {
        // Aᵀ = Q R  ⇒  A = Rᵀ Qᵀ  ⇒  A⁺ y = Q (Rᵀ)⁺ y
        let qr = Qr::new(&a.transpose());
        let rt = qr.r.transpose();
        let (z, info) = jacobi_pinv_solve(&rt, y, rtol);
        (qr.q_mul(&z), info)
    }
}
