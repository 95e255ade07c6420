//! Block-tridiagonal operators and their direct solution.
//!
//! Discrete operators on `M - 1` interior points with `n` unknowns per point
//! couple each block row only to its two neighbours. They are stored as three
//! lists of `n x n` blocks and solved by banded Gaussian elimination with
//! partial pivoting across the whole band, which also handles operators whose
//! diagonal blocks are singular on their own (central differencing of
//! algebraic rows produces those).

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// Square block-tridiagonal matrix with `nb` block rows of size `n`.
///
/// `lower[j]` couples block row `j` to block column `j - 1` and is unused for
/// `j = 0`; `upper[j]` couples to `j + 1` and is unused for the last row.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTridiag {
    n: usize,
    lower: Vec<DMatrix<f64>>,
    diag: Vec<DMatrix<f64>>,
    upper: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    pub fn zeros(n: usize, nb: usize) -> Self {
        let z = || vec![DMatrix::zeros(n, n); nb];
        Self {
            n,
            lower: z(),
            diag: z(),
            upper: z(),
        }
    }

    /// Block size.
    pub fn block_size(&self) -> usize {
        self.n
    }
    /// Number of block rows.
    pub fn blocks(&self) -> usize {
        self.diag.len()
    }
    /// Scalar dimension `n * nb`.
    pub fn dim(&self) -> usize {
        self.n * self.diag.len()
    }

    pub fn lower(&self, j: usize) -> &DMatrix<f64> {
        &self.lower[j]
    }
    pub fn diag(&self, j: usize) -> &DMatrix<f64> {
        &self.diag[j]
    }
    pub fn upper(&self, j: usize) -> &DMatrix<f64> {
        &self.upper[j]
    }
    pub fn lower_mut(&mut self, j: usize) -> &mut DMatrix<f64> {
        &mut self.lower[j]
    }
    pub fn diag_mut(&mut self, j: usize) -> &mut DMatrix<f64> {
        &mut self.diag[j]
    }
    pub fn upper_mut(&mut self, j: usize) -> &mut DMatrix<f64> {
        &mut self.upper[j]
    }

    /// Block at block position `(j, k)` with `|j - k| <= 1`.
    pub fn block(&self, j: usize, k: usize) -> Option<&DMatrix<f64>> {
        if k == j {
            Some(&self.diag[j])
        } else if k + 1 == j {
            Some(&self.lower[j])
        } else if k == j + 1 && k < self.blocks() {
            Some(&self.upper[j])
        } else {
            None
        }
    }

    /// Scalar entry `(r, c)`; zero outside the band.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (j, i) = (r / self.n, r % self.n);
        let (k, l) = (c / self.n, c % self.n);
        self.block(j, k).map_or(0.0, |b| b[(i, l)])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let nb = self.blocks();
        let mut out = DMatrix::zeros(n * nb, n * nb);
        for j in 0..nb {
            out.view_mut((j * n, j * n), (n, n)).copy_from(&self.diag[j]);
            if j > 0 {
                out.view_mut((j * n, (j - 1) * n), (n, n))
                    .copy_from(&self.lower[j]);
            }
            if j + 1 < nb {
                out.view_mut((j * n, (j + 1) * n), (n, n))
                    .copy_from(&self.upper[j]);
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let n = self.n;
        let nb = self.blocks();
        let mut y = vec![0.0; x.len()];
        for j in 0..nb {
            let yj = &mut y[j * n..(j + 1) * n];
            gemv_add(&self.diag[j], &x[j * n..(j + 1) * n], yj);
            if j > 0 {
                gemv_add(&self.lower[j], &x[(j - 1) * n..j * n], yj);
            }
            if j + 1 < nb {
                gemv_add(&self.upper[j], &x[(j + 1) * n..(j + 2) * n], yj);
            }
        }
        Ok(y)
    }

    /// `self + alpha * other`, block by block.
    pub fn add_scaled(&self, alpha: f64, other: &BlockTridiag) -> Result<BlockTridiag> {
        check_len(self.dim(), other.dim())?;
        let mut out = self.clone();
        for j in 0..self.blocks() {
            out.lower[j] += &other.lower[j] * alpha;
            out.diag[j] += &other.diag[j] * alpha;
            out.upper[j] += &other.upper[j] * alpha;
        }
        Ok(out)
    }

    /// `self * alpha`.
    pub fn scaled(&self, alpha: f64) -> BlockTridiag {
        let mut out = self.clone();
        for j in 0..self.blocks() {
            out.lower[j] *= alpha;
            out.diag[j] *= alpha;
            out.upper[j] *= alpha;
        }
        out
    }

    /// Adds the same `n x n` matrix to every diagonal block (`I (x) m`).
    pub fn add_to_diagonal(&mut self, m: &DMatrix<f64>) {
        for d in &mut self.diag {
            *d += m;
        }
    }

    /// Keeps the rows of each block selected by `keep`, zeroing the rest.
    pub fn select_rows(&self, keep: impl Fn(usize) -> bool) -> BlockTridiag {
        let mut out = self.clone();
        for list in [&mut out.lower, &mut out.diag, &mut out.upper] {
            for b in list.iter_mut() {
                for i in 0..self.n {
                    if !keep(i) {
                        b.row_mut(i).fill(0.0);
                    }
                }
            }
        }
        out
    }

    /// Sub-operator on the components `idx` of every block (rows and columns).
    pub fn restrict(&self, idx: &[usize]) -> BlockTridiag {
        let m = idx.len();
        let pick = |b: &DMatrix<f64>| DMatrix::from_fn(m, m, |r, c| b[(idx[r], idx[c])]);
        BlockTridiag {
            n: m,
            lower: self.lower.iter().map(pick).collect(),
            diag: self.diag.iter().map(pick).collect(),
            upper: self.upper.iter().map(pick).collect(),
        }
    }

    /// Applies the coupling from components `cols` into components `rows`
    /// (`y_rows += A[rows, cols] x_cols`), with `x` laid out block-wise over
    /// `cols` only.
    pub fn coupling_mul_add(&self, rows: &[usize], cols: &[usize], x: &[f64], y: &mut [f64]) {
        let nb = self.blocks();
        let (p, q) = (rows.len(), cols.len());
        for j in 0..nb {
            for (r, &i) in rows.iter().enumerate() {
                let mut s = 0.0;
                for (c, &l) in cols.iter().enumerate() {
                    s += self.diag[j][(i, l)] * x[j * q + c];
                    if j > 0 {
                        s += self.lower[j][(i, l)] * x[(j - 1) * q + c];
                    }
                    if j + 1 < nb {
                        s += self.upper[j][(i, l)] * x[(j + 1) * q + c];
                    }
                }
                y[j * p + r] += s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .flat_map(|b| b.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn factor(&self) -> Result<BandedLu> {
        BandedLu::factor(self)
    }
}

fn gemv_add(a: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for (k, xk) in x.iter().enumerate() {
            s += a[(i, k)] * xk;
        }
        *yi += s;
    }
}

/// Relative pivot threshold below which a matrix is declared singular.
pub const PIVOT_TOL: f64 = 1e-12;
/// Condition estimates above this are treated as numerically singular.
pub const CONDITION_LIMIT: f64 = 1e14;

/// LU factorization `P A = L U` of a banded matrix with partial pivoting.
///
/// Storage follows the usual band layout with room for the fill-in that row
/// interchanges create: row `i` keeps columns `i - kl ..= i + kl + ku`.
#[derive(Clone, Debug)]
pub struct BandedLu {
    dim: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
    norm1: f64,
}

impl BandedLu {
    pub fn factor(a: &BlockTridiag) -> Result<Self> {
        let dim = a.dim();
        let bw = 2 * a.block_size() - 1;
        let (kl, ku) = (bw, bw);
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            dim,
            kl,
            ku,
            width,
            data: vec![0.0; dim * width],
            piv: vec![0; dim],
            norm1: 0.0,
        };
        let mut colsum = vec![0.0; dim];
        let mut rowscale = vec![0.0_f64; dim];
        for r in 0..dim {
            let lo = r.saturating_sub(kl);
            let hi = (r + ku).min(dim - 1);
            for c in lo..=hi {
                let v = a.get(r, c);
                if v != 0.0 {
                    *lu.at_mut(r, c) = v;
                    colsum[c] += v.abs();
                    rowscale[r] = rowscale[r].max(v.abs());
                }
            }
        }
        lu.norm1 = colsum.iter().fold(0.0_f64, |m, v| m.max(*v));

        for c in 0..dim {
            let last = (c + kl).min(dim - 1);
            let mut p = c;
            let mut best = lu.at(c, c).abs();
            for r in c + 1..=last {
                let v = lu.at(r, c).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            lu.piv[c] = p;
            let scale = rowscale[p];
            if best == 0.0 || best < PIVOT_TOL * scale || scale == 0.0 {
                return Err(Error::Singular {
                    context: format!("pivot {c} of {dim}"),
                    condition: f64::INFINITY,
                });
            }
            let cend = (c + kl + ku).min(dim - 1);
            if p != c {
                rowscale.swap(p, c);
                for k in c..=cend {
                    let t = lu.at(c, k);
                    *lu.at_mut(c, k) = lu.at(p, k);
                    *lu.at_mut(p, k) = t;
                }
            }
            let pivot = lu.at(c, c);
            for r in c + 1..=last {
                let l = lu.at(r, c) / pivot;
                if l == 0.0 {
                    continue;
                }
                *lu.at_mut(r, c) = l;
                for k in c + 1..=cend {
                    let u = lu.at(c, k);
                    if u != 0.0 {
                        *lu.at_mut(r, k) -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.kl + self.ku);
        r * self.width + (c + self.kl - r)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[self.idx(r, c)]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let i = self.idx(r, c);
        &mut self.data[i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        for c in 0..n {
            let p = self.piv[c];
            if p != c {
                b.swap(c, p);
            }
            let bc = b[c];
            if bc != 0.0 {
                for r in c + 1..=(c + self.kl).min(n - 1) {
                    b[r] -= self.at(r, c) * bc;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..=(i + self.kl + self.ku).min(n - 1) {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, b.len())?;
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        // U^T y = b
        for i in 0..n {
            let mut s = b[i];
            let lo = i.saturating_sub(self.kl + self.ku);
            for k in lo..i {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
        // L^T with the interleaved interchanges, in reverse order.
        for c in (0..n).rev() {
            let mut s = b[c];
            for r in c + 1..=(c + self.kl).min(n - 1) {
                s -= self.at(r, c) * b[r];
            }
            b[c] = s;
            let p = self.piv[c];
            if p != c {
                b.swap(c, p);
            }
        }
    }

    /// 1-norm condition estimate `||A||_1 * est(||A^-1||_1)` (Hager/Higham).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            self.solve_in_place(&mut x);
            let norm: f64 = x.iter().map(|v| v.abs()).sum();
            if norm <= est && last_j != usize::MAX {
                break;
            }
            est = norm;
            let mut z: Vec<f64> = x.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            self.solve_transpose_in_place(&mut z);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(bj, bm), (j, v)| if v.abs() > bm { (j, v.abs()) } else { (bj, bm) });
            if j == last_j || zmax <= z.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() {
                break;
            }
            last_j = j;
            x.fill(0.0);
            x[j] = 1.0;
        }
        // Alternating-sign probe guards against the power-method underestimate.
        let mut alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        self.solve_in_place(&mut alt);
        let alt_est = 2.0 * alt.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        self.norm1 * est.max(alt_est)
    }
}

/// Factors `a` and rejects it when the condition estimate exceeds
/// [`CONDITION_LIMIT`].
pub fn factor_checked(a: &BlockTridiag, context: &str) -> Result<BandedLu> {
    let lu = a.factor().map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            context: context.to_string(),
            condition,
        },
        other => other,
    })?;
    let cond = lu.condition_estimate();
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::Singular {
            context: context.to_string(),
            condition: cond,
        });
    }
    Ok(lu)
}

/// Largest singular value of a dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |a, v| a.max(*v))
}

/// Smallest singular value of a dense square matrix.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, v| a.min(*v))
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}
