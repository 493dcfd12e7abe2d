//! Right-preconditioned BiCGSTAB and the Fourier preconditioner built from
//! the grid-averaged linearization.

use crate::ddc::Backend;
use crate::fft::{wave_number, RealFftNd};
use crate::field::TorusGrid;
use crate::herm::C64;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Statistics of one linear solve.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LinearStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` from `x = 0` with right preconditioner `M^{-1}`.
pub(crate) fn bicgstab(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    precond: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> LinearStats {
    let len = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return LinearStats { iterations: 0, relative_residual: 0.0 };
    }
    let mut r = b.to_vec();
    let r0 = b.to_vec();
    let mut p = vec![0.0; len];
    let mut v = vec![0.0; len];
    let mut ph = vec![0.0; len];
    let mut sh = vec![0.0; len];
    let mut t = vec![0.0; len];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return LinearStats { iterations: it - 1, relative_residual: rel };
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..len {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut ph);
        apply(&ph, &mut v);
        let rv = dot(&r0, &v);
        if rv == 0.0 {
            return LinearStats { iterations: it, relative_residual: rel };
        }
        alpha = rho / rv;
        // r becomes s
        for i in 0..len {
            r[i] -= alpha * v[i];
            x[i] += alpha * ph[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= rel_tol {
            return LinearStats { iterations: it, relative_residual: rel };
        }
        precond(&r, &mut sh);
        apply(&sh, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        for i in 0..len {
            x[i] += omega * sh[i];
            r[i] -= omega * t[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= rel_tol {
            return LinearStats { iterations: it, relative_residual: rel };
        }
    }
    LinearStats { iterations: max_iter, relative_residual: rel }
}

/// Inverse of a constant-coefficient operator `L0 - w0` by FFT.
pub(crate) struct FourierPrecond {
    fft: RealFftNd,
    /// Reciprocal symbol on the half spectrum; zero on the kernel.
    inv_symbol: Vec<f64>,
    spec: Vec<C64>,
    work: Vec<f64>,
}

impl FourierPrecond {
    /// `coef` holds the averaged per-point coefficients in the layout of
    /// the linearization; `shift` is `w0 >= 0`.
    pub(crate) fn new(grid: TorusGrid, backend: Backend, coef: &[f64], shift: f64) -> Self {
        let n = grid.n;
        let m = grid.m;
        let dims = grid.dims();
        let fft = RealFftNd::new(m, dims);
        let theta: Vec<f64> = (0..m).map(|i| 2.0 * std::f64::consts::PI * wave_number(i, m) as f64 / m as f64).collect();
        let mf = m as f64;
        // per-axis second and first derivative symbols
        let (second, first): (Vec<f64>, Vec<f64>) = match backend {
            Backend::Fd => (
                theta.iter().map(|t| (2.0 * t.cos() - 2.0) * mf * mf).collect(),
                theta.iter().map(|t| t.sin() * mf).collect(),
            ),
            Backend::Spectral => (
                theta.iter().map(|t| -(t * mf).powi(2)).collect(),
                (0..m).map(|i| if m % 2 == 0 && i == m / 2 { 0.0 } else { theta[i] * mf }).collect(),
            ),
        };
        let hm = fft.half();
        let mut inv_symbol = vec![0.0; fft.half_len()];
        let mut c = vec![0usize; dims];
        for (idx, s) in inv_symbol.iter_mut().enumerate() {
            // half-spectrum coordinates, last axis fastest
            let mut rest = idx;
            c[dims - 1] = rest % hm;
            rest /= hm;
            for a in (0..dims - 1).rev() {
                c[a] = rest % m;
                rest /= m;
            }
            let mut sym = -shift;
            for j in 0..n {
                sym += coef[j] * 0.25 * (second[c[2 * j]] + second[c[2 * j + 1]]);
            }
            let mut p = n;
            for j in 0..n {
                let (xj, yj) = (first[c[2 * j]], first[c[2 * j + 1]]);
                for k in j + 1..n {
                    let (xk, yk) = (first[c[2 * k]], first[c[2 * k + 1]]);
                    // mixed symbol of d_a d_b is -s_a s_b
                    let re = -0.25 * (xj * xk + yj * yk);
                    let im = -0.25 * (xj * yk - yj * xk);
                    sym += coef[p] * re + coef[p + 1] * im;
                    p += 2;
                }
            }
            *s = if sym.abs() > 1e-12 { 1.0 / sym } else { 0.0 };
        }
        let spec = vec![C64::new(0.0, 0.0); fft.half_len()];
        let work = vec![0.0; fft.real_len()];
        Self { fft, inv_symbol, spec, work }
    }

    /// `out = L0^{-1} r` on the complement of the kernel.
    pub(crate) fn solve(&mut self, r: &[f64], out: &mut [f64]) {
        self.work.copy_from_slice(r);
        self.fft.forward(&mut self.work, &mut self.spec);
        for (b, &s) in self.spec.iter_mut().zip(&self.inv_symbol) {
            *b *= s;
        }
        self.fft.inverse(&mut self.spec, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bicgstab_solves_small_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, 1.0, 3.0]];
        let b = [1.0, 2.0, 3.0];
        let mut apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..3 {
                y[i] = (0..3).map(|j| a[i][j] * x[j]).sum();
            }
        };
        let mut id = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let mut x = [0.0; 3];
        let st = bicgstab(&mut apply, &mut id, &b, &mut x, 1e-14, 50);
        assert!(st.relative_residual <= 1e-14);
        let mut y = [0.0; 3];
        apply(&x, &mut y);
        for i in 0..3 {
            assert!((y[i] - b[i]).abs() < 1e-12);
        }
    }
}
