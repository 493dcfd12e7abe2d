//! Dense Hermitian linear algebra for the small matrices that live at each
//! grid point: Cholesky factors of the metric, generalized eigenvalues of
//! `(A, g)`, and the two matrix inequalities the estimates lean on.
//!
//! Matrices are stored row-major. The eigensolver is cyclic complex Jacobi
//! with closed forms for `n = 1, 2`, which is all the desk-scale grids need.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub type C64 = Complex64;

/// Definiteness threshold on the smallest eigenvalue.
pub const PD_THRESHOLD: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A Hermitian `n x n` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermMatrix {
    n: usize,
    entries: Vec<C64>,
}

/// Generalized eigenvalues sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.total_cmp(b));
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A general complex square matrix; used for Cholesky factors and
/// eigenvector bases.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub n: usize,
    pub data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> C64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = ONE;
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[r * n + col].norm() > a[piv * n + col].norm() {
                    piv = r;
                }
            }
            if a[piv * n + col] == ZERO {
                return ZERO;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(piv * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
            }
        }
        det
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl HermMatrix {
    /// Builds a Hermitian matrix from row-major entries. Asymmetry up to
    /// `1e-8` relative is tolerated and removed by averaging with the
    /// adjoint.
    pub fn new(n: usize, entries: Vec<C64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(LabError::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((entries[i * n + j] - entries[j * n + i].conj()).norm());
            }
        }
        if asym > 1e-8 * scale {
            return Err(LabError::NotHermitian { asymmetry: asym });
        }
        let mut m = Self { n, entries };
        m.symmetrize();
        Ok(m)
    }

    pub(crate) fn from_raw(n: usize, entries: Vec<C64>) -> Self {
        let mut m = Self { n, entries };
        m.symmetrize();
        m
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(LabError::DimensionMismatch { expected: n, found: r.len() });
            }
            entries.extend(r.iter().map(|&x| C64::new(x, 0.0)));
        }
        Self::new(n, entries)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut entries = vec![ZERO; n * n];
        for (i, &x) in d.iter().enumerate() {
            entries[i * n + i] = C64::new(x, 0.0);
        }
        Self { n, entries }
    }

    fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.entries[i * n + i].im = 0.0;
            for j in i + 1..n {
                let avg = (self.entries[i * n + j] + self.entries[j * n + i].conj()) * 0.5;
                self.entries[i * n + j] = avg;
                self.entries[j * n + i] = avg.conj();
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix { n: self.n, data: self.entries.clone() }
    }

    pub fn add(&self, other: &HermMatrix) -> Result<HermMatrix> {
        check_dims(self.n, other.n)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Ok(Self { n: self.n, entries })
    }

    pub fn scale(&self, s: f64) -> HermMatrix {
        Self { n: self.n, entries: self.entries.iter().map(|a| a * s).collect() }
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &HermMatrix, s: f64) -> Result<HermMatrix> {
        check_dims(self.n, other.n)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b * s).collect();
        Ok(Self { n: self.n, entries })
    }

    /// `Q A Q^*` for an arbitrary square `Q`.
    pub fn congruence(&self, q: &CMatrix) -> Result<HermMatrix> {
        check_dims(self.n, q.n)?;
        let out = q.mul(&self.to_cmatrix()).mul(&q.adjoint());
        Ok(Self::from_raw(self.n, out.data))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.entries[i * self.n + i].re).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Standard eigen-decomposition: ascending eigenvalues and the unitary
    /// matrix whose columns are the eigenvectors.
    pub fn eigh(&self) -> (Spectrum, CMatrix) {
        let n = self.n;
        let mut a = self.entries.clone();
        let mut v = vec![ZERO; n * n];
        let mut w = vec![0.0; n];
        eigh_in_place(n, &mut a, &mut v, &mut w);
        (Spectrum { values: w }, CMatrix { n, data: v })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0.values[0]
    }

    pub fn det(&self) -> f64 {
        self.eigh().0.values.iter().product()
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(LabError::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Lower-triangular `P` with `g = P P^*` and positive real diagonal.
pub fn cholesky_factor(g: &HermMatrix) -> Result<CMatrix> {
    let min_eig = g.min_eigenvalue();
    if !(min_eig > PD_THRESHOLD) {
        return Err(LabError::NonPositiveMetric { min_eigenvalue: min_eig });
    }
    let n = g.n;
    let mut l = vec![ZERO; n * n];
    cholesky_in_place(n, &g.entries, &mut l)
        .map_err(|_| LabError::NonPositiveMetric { min_eigenvalue: min_eig })?;
    Ok(CMatrix { n, data: l })
}

/// Generalized eigenvalues of the pencil `(a, g)`: the roots of
/// `det(lambda g - a) = 0`, ascending.
pub fn generalized_eigenvalues(a: &HermMatrix, g: &HermMatrix) -> Result<Spectrum> {
    check_dims(g.n, a.n)?;
    let p = cholesky_factor(g)?;
    Ok(generalized_eigen_with_factor(a, &p).spectrum)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(p: &CMatrix) -> CMatrix {
    let n = p.n;
    let mut inv = CMatrix::identity(n);
    for c in 0..n {
        for i in 0..n {
            let mut s = inv.get(i, c);
            for k in 0..i {
                s -= p.get(i, k) * inv.get(k, c);
            }
            inv.set(i, c, s / p.get(i, i));
        }
    }
    inv
}

/// Eigen-data of the reduced matrix `P^{-1} A P^{-*}`.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen {
    pub spectrum: Spectrum,
    /// Columns are the eigenvectors of the reduced matrix.
    pub vectors: CMatrix,
}

pub fn generalized_eigen_with_factor(a: &HermMatrix, p: &CMatrix) -> GeneralizedEigen {
    let n = a.n;
    let mut red = vec![ZERO; n * n];
    let mut tmp = vec![ZERO; n * n];
    reduce_congruence(n, &a.entries, &p.data, &mut tmp, &mut red);
    let mut v = vec![ZERO; n * n];
    let mut w = vec![0.0; n];
    eigh_in_place(n, &mut red, &mut v, &mut w);
    GeneralizedEigen { spectrum: Spectrum { values: w }, vectors: CMatrix { n, data: v } }
}

/// Result of the trace AM-GM inequality check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmGmCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `(1/n) tr(conj(A)^T B) >= (det A det B)^{1/n}` for positive definite `A`, `B`.
pub fn amgm_trace_check(a: &HermMatrix, b: &HermMatrix) -> Result<AmGmCheck> {
    check_dims(a.n, b.n)?;
    for m in [a, b] {
        let e = m.min_eigenvalue();
        if !(e > PD_THRESHOLD) {
            return Err(LabError::NonPositiveInput { min_eigenvalue: e });
        }
    }
    let n = a.n;
    let mut tr = ZERO;
    for i in 0..n {
        for j in 0..n {
            tr += a.get(i, j).conj() * b.get(i, j);
        }
    }
    let lhs = tr.re / n as f64;
    let rhs = (a.det() * b.det()).powf(1.0 / n as f64);
    let holds = lhs >= rhs * (1.0 - 1e-12) - 1e-14;
    Ok(AmGmCheck { lhs, rhs, holds })
}

/// The contraction `sum_{j,k} dF/dh_{j kbar}(A) B_{j kbar}`, given the
/// operator gradient as a Hermitian matrix `D` with `dF[B] = tr(D B)`.
pub fn directional_positivity(grad: &HermMatrix, b: &HermMatrix, g: &HermMatrix) -> Result<f64> {
    check_dims(grad.n, b.n)?;
    check_dims(grad.n, g.n)?;
    let n = grad.n;
    let mut acc = ZERO;
    for j in 0..n {
        for k in 0..n {
            acc += grad.get(k, j) * b.get(j, k);
        }
    }
    Ok(acc.re)
}

// ---- slice kernels used by the per-point loops ----

/// Complex Cholesky of row-major `g` into lower-triangular `l`.
/// Fails with the offending pivot when it is not above [`PD_THRESHOLD`].
pub(crate) fn cholesky_in_place(n: usize, g: &[C64], l: &mut [C64]) -> std::result::Result<(), f64> {
    l.iter_mut().for_each(|z| *z = ZERO);
    for j in 0..n {
        let mut d = g[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > PD_THRESHOLD) {
            return Err(d);
        }
        let ljj = d.sqrt();
        l[j * n + j] = C64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(())
}

/// Forward substitution `x = L^{-1} b` for one column stored with stride `n`.
fn lower_solve_col(n: usize, l: &[C64], b: &mut [C64], col: usize) {
    for i in 0..n {
        let mut s = b[i * n + col];
        for k in 0..i {
            s -= l[i * n + k] * b[k * n + col];
        }
        b[i * n + col] = s / l[i * n + i];
    }
}

/// `out = L^{-1} A L^{-*}` (Hermitian), using `tmp` as scratch.
pub(crate) fn reduce_congruence(n: usize, a: &[C64], l: &[C64], tmp: &mut [C64], out: &mut [C64]) {
    if n == 1 {
        out[0] = C64::new(a[0].re / l[0].norm_sqr(), 0.0);
        return;
    }
    tmp.copy_from_slice(a);
    for c in 0..n {
        lower_solve_col(n, l, tmp, c);
    }
    // out = L^{-1} (tmp)^*
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = tmp[j * n + i].conj();
        }
    }
    for c in 0..n {
        lower_solve_col(n, l, out, c);
    }
    for i in 0..n {
        out[i * n + i].im = 0.0;
        for j in i + 1..n {
            let avg = (out[i * n + j] + out[j * n + i].conj()) * 0.5;
            out[i * n + j] = avg;
            out[j * n + i] = avg.conj();
        }
    }
}

/// Hermitian eigen-decomposition. `a` is destroyed; `v` receives the
/// eigenvectors as columns and `w` the ascending eigenvalues.
pub(crate) fn eigh_in_place(n: usize, a: &mut [C64], v: &mut [C64], w: &mut [f64]) {
    match n {
        1 => {
            w[0] = a[0].re;
            v[0] = ONE;
        }
        2 => eigh_2x2(a, v, w),
        _ => jacobi(n, a, v, w),
    }
}

fn eigh_2x2(a: &[C64], v: &mut [C64], w: &mut [f64]) {
    let (p, d, b) = (a[0].re, a[3].re, a[1]);
    let nb2 = b.norm_sqr();
    let nb = nb2.sqrt();
    if nb == 0.0 {
        if p <= d {
            w[0] = p;
            w[1] = d;
            v.copy_from_slice(&[ONE, ZERO, ZERO, ONE]);
        } else {
            w[0] = d;
            w[1] = p;
            v.copy_from_slice(&[ZERO, ONE, ONE, ZERO]);
        }
        return;
    }
    let mean = 0.5 * (p + d);
    let half = 0.5 * (p - d);
    let rad = (half * half + nb2).sqrt();
    let det = p * d - nb2;
    let (lo, hi) = if mean > 0.0 {
        let hi = mean + rad;
        (det / hi, hi)
    } else if mean < 0.0 {
        let lo = mean - rad;
        (lo, det / lo)
    } else {
        (-rad, rad)
    };
    w[0] = lo;
    w[1] = hi;
    // two null vectors of (A - lo I); keep the better conditioned one
    let c1 = (b, C64::new(lo - p, 0.0));
    let c2 = (C64::new(lo - d, 0.0), b.conj());
    let n1 = c1.0.norm_sqr() + c1.1.norm_sqr();
    let n2 = c2.0.norm_sqr() + c2.1.norm_sqr();
    let (x, y, nn) = if n1 >= n2 { (c1.0, c1.1, n1) } else { (c2.0, c2.1, n2) };
    let s = 1.0 / nn.sqrt();
    let (x, y) = (x * s, y * s);
    v[0] = x;
    v[2] = y;
    v[1] = -y.conj();
    v[3] = x.conj();
}

fn jacobi(n: usize, a: &mut [C64], v: &mut [C64], w: &mut [f64]) {
    v.iter_mut().for_each(|z| *z = ZERO);
    for i in 0..n {
        v[i * n + i] = ONE;
    }
    let fro: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off <= 1e-32 * fro || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let r = apq.norm();
                if r == 0.0 || r < 1e-300 {
                    continue;
                }
                let phase = apq / r;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let vpp = C64::new(c, 0.0);
                let vpq = C64::new(s, 0.0);
                let vqp = -phase.conj() * s;
                let vqq = phase.conj() * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * vpp + akq * vqp;
                    a[k * n + q] = akp * vpq + akq * vqq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[q * n + k] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[p * n + q] = ZERO;
                a[q * n + p] = ZERO;
                a[p * n + p].im = 0.0;
                a[q * n + q].im = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * vpp + vkq * vqp;
                    v[k * n + q] = vkp * vpq + vkq * vqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let vv = v.to_vec();
    for (dst, &src) in order.iter().enumerate() {
        w[dst] = a[src * n + src].re;
        for k in 0..n {
            v[k * n + dst] = vv[k * n + src];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_herm(rng: &mut ChaCha8Rng, n: usize) -> HermMatrix {
        let mut e = vec![ZERO; n * n];
        for i in 0..n {
            e[i * n + i] = C64::new(rng.gen_range(-2.0..2.0), 0.0);
            for j in i + 1..n {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                e[i * n + j] = z;
                e[j * n + i] = z.conj();
            }
        }
        HermMatrix::new(n, e).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> HermMatrix {
        let mut q = CMatrix::zeros(n);
        for x in q.data.iter_mut() {
            *x = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let qq = q.mul(&q.adjoint());
        HermMatrix::from_raw(n, qq.data).add(&HermMatrix::identity(n).scale(0.5)).unwrap()
    }

    #[test]
    fn identity_pencil() {
        let s = generalized_eigenvalues(&HermMatrix::identity(3), &HermMatrix::identity(3)).unwrap();
        for v in s.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_ratio() {
        let a = HermMatrix::diagonal(&[4.0]);
        let g = HermMatrix::diagonal(&[2.0]);
        let v = generalized_eigenvalues(&a, &g).unwrap().values;
        assert!((v[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cholesky_diagonal_and_identity() {
        let p = cholesky_factor(&HermMatrix::identity(3)).unwrap();
        assert!(p.max_abs_diff(&CMatrix::identity(3)) < 1e-15);
        let p = cholesky_factor(&HermMatrix::diagonal(&[4.0, 9.0])).unwrap();
        assert!((p.get(0, 0).re - 2.0).abs() < 1e-15);
        assert!((p.get(1, 1).re - 3.0).abs() < 1e-15);
        assert_eq!(p.get(1, 0), ZERO);
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=5 {
            let g = random_spd(&mut rng, n);
            let p = cholesky_factor(&g).unwrap();
            let back = p.mul(&p.adjoint());
            assert!(back.max_abs_diff(&g.to_cmatrix()) < 1e-12);
        }
    }

    #[test]
    fn non_positive_metric_rejected() {
        let g = HermMatrix::diagonal(&[1.0, 0.0]);
        assert!(matches!(cholesky_factor(&g), Err(LabError::NonPositiveMetric { .. })));
        let a = HermMatrix::identity(2);
        assert!(matches!(generalized_eigenvalues(&a, &g), Err(LabError::NonPositiveMetric { .. })));
        assert!(matches!(
            generalized_eigenvalues(&HermMatrix::identity(3), &HermMatrix::identity(2)),
            Err(LabError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_hermitian_rejected() {
        let e = vec![ONE, C64::new(0.0, 1.0), C64::new(0.0, 1.0), ONE];
        assert!(matches!(HermMatrix::new(2, e), Err(LabError::NotHermitian { .. })));
    }

    #[test]
    fn jacobi_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=6 {
            let a = random_herm(&mut rng, n);
            let (s, u) = a.eigh();
            // A U = U diag(w)
            let au = a.to_cmatrix().mul(&u);
            for j in 0..n {
                for i in 0..n {
                    assert!((au.get(i, j) - u.get(i, j) * s.values[j]).norm() < 1e-12);
                }
            }
            let uu = u.adjoint().mul(&u);
            assert!(uu.max_abs_diff(&CMatrix::identity(n)) < 1e-12);
            assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn two_by_two_quadratic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = random_herm(&mut rng, 2);
            let g = random_spd(&mut rng, 2);
            let s = generalized_eigenvalues(&a, &g).unwrap();
            // det(l g - a) = qa l^2 + qb l + qc
            let (g11, g22, g12) = (g.get(0, 0).re, g.get(1, 1).re, g.get(0, 1));
            let (a11, a22, a12) = (a.get(0, 0).re, a.get(1, 1).re, a.get(0, 1));
            let qa = g11 * g22 - g12.norm_sqr();
            let qb = -(g11 * a22 + g22 * a11) + 2.0 * (g12 * a12.conj()).re;
            let qc = a11 * a22 - a12.norm_sqr();
            let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
            let mut r = [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)];
            r.sort_by(f64::total_cmp);
            assert!((s.values[0] - r[0]).abs() < 1e-10, "{:?} vs {:?}", s.values, r);
            assert!((s.values[1] - r[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn amgm_examples() {
        let c = amgm_trace_check(&HermMatrix::identity(2), &HermMatrix::identity(2)).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-15 && (c.rhs - 1.0).abs() < 1e-15 && c.holds);
        let c = amgm_trace_check(&HermMatrix::diagonal(&[1.0, 4.0]), &HermMatrix::identity(2)).unwrap();
        assert!((c.lhs - 2.5).abs() < 1e-15 && (c.rhs - 2.0).abs() < 1e-14 && c.holds);
        let bad = HermMatrix::diagonal(&[1.0, -1.0]);
        assert!(matches!(
            amgm_trace_check(&bad, &HermMatrix::identity(2)),
            Err(LabError::NonPositiveInput { .. })
        ));
    }

    #[test]
    fn amgm_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.gen_range(1..=4);
            let a = random_spd(&mut rng, n);
            let b = random_spd(&mut rng, n);
            assert!(amgm_trace_check(&a, &b).unwrap().holds);
        }
    }

    #[test]
    fn directional_trace_of_gradient() {
        let d = HermMatrix::diagonal(&[0.5, 0.25, 0.125]);
        let g = HermMatrix::identity(3);
        let v = directional_positivity(&d, &g, &g).unwrap();
        assert!((v - 0.875).abs() < 1e-15);
    }
}
