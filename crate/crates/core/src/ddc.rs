//! Discrete `dd^c`: entry `(j, k)` approximates
//! `1/4 [(d_xj d_xk + d_yj d_yk) + i (d_xj d_yk - d_yj d_xk)] phi`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fft::{wave_number, FftNd};
use crate::field::{TorusField, TorusGrid};
use crate::herm::{HermMatrix, C64};

/// Differentiation backend.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Second-order central differences.
    #[default]
    Fd,
    /// Trigonometric interpolation.
    Spectral,
}

/// Hermitian matrix per grid point, stored row-major `n x n` per point.
#[derive(Clone, Debug, PartialEq)]
pub struct DdcField {
    pub grid: TorusGrid,
    pub entries: Vec<C64>,
}

impl DdcField {
    pub fn at(&self, idx: usize) -> HermMatrix {
        let n = self.grid.n;
        HermMatrix::from_raw(n, self.entries[idx * n * n..(idx + 1) * n * n].to_vec())
    }

    pub fn slice(&self, idx: usize) -> &[C64] {
        let nn = self.grid.n * self.grid.n;
        &self.entries[idx * nn..(idx + 1) * nn]
    }

    /// Field of traces `sum_j B_jj`.
    pub fn trace(&self) -> TorusField {
        let n = self.grid.n;
        let values = (0..self.grid.len()).map(|i| (0..n).map(|j| self.slice(i)[j * n + j].re).sum()).collect();
        TorusField { grid: self.grid, values }
    }
}

#[inline]
fn mixed(v: &[f64], i: isize, pa: isize, ma: isize, pb: isize, mb: isize) -> f64 {
    v[(i + pa + pb) as usize] - v[(i + pa + mb) as usize] - v[(i + ma + pb) as usize] + v[(i + ma + mb) as usize]
}

/// Finite-difference `dd^c` at one point given the neighbour offsets.
#[inline]
pub(crate) fn fd_point(v: &[f64], idx: usize, plus: &[isize], minus: &[isize], n: usize, inv_h2: f64, out: &mut [C64]) {
    let i = idx as isize;
    let c = v[idx];
    for j in 0..n {
        let (x, y) = (2 * j, 2 * j + 1);
        let dxx = v[(i + plus[x]) as usize] - 2.0 * c + v[(i + minus[x]) as usize];
        let dyy = v[(i + plus[y]) as usize] - 2.0 * c + v[(i + minus[y]) as usize];
        out[j * n + j] = C64::new(0.25 * inv_h2 * (dxx + dyy), 0.0);
    }
    let q = 0.0625 * inv_h2;
    for j in 0..n {
        let (xj, yj) = (2 * j, 2 * j + 1);
        for k in j + 1..n {
            let (xk, yk) = (2 * k, 2 * k + 1);
            let re = mixed(v, i, plus[xj], minus[xj], plus[xk], minus[xk])
                + mixed(v, i, plus[yj], minus[yj], plus[yk], minus[yk]);
            let im = mixed(v, i, plus[xj], minus[xj], plus[yk], minus[yk])
                - mixed(v, i, plus[yj], minus[yj], plus[xk], minus[xk]);
            let z = C64::new(q * re, q * im);
            out[j * n + k] = z;
            out[k * n + j] = z.conj();
        }
    }
}

pub fn ddc(phi: &TorusField, backend: Backend) -> Result<DdcField> {
    let grid = phi.grid;
    if grid.m < 8 {
        return Err(LabError::GridTooCoarse { m: grid.m });
    }
    match backend {
        Backend::Fd => Ok(ddc_fd(phi)),
        Backend::Spectral => Ok(ddc_spectral(phi)),
    }
}

fn ddc_fd(phi: &TorusField) -> DdcField {
    let grid = phi.grid;
    let n = grid.n;
    let dims = grid.dims();
    let inv_h2 = (grid.m * grid.m) as f64;
    let mut entries = vec![C64::new(0.0, 0.0); grid.len() * n * n];
    let mut c = vec![0usize; dims];
    let mut plus = vec![0isize; dims];
    let mut minus = vec![0isize; dims];
    for (idx, out) in entries.chunks_exact_mut(n * n).enumerate() {
        grid.neighbor_offsets(&c, &mut plus, &mut minus);
        fd_point(&phi.values, idx, &plus, &minus, n, inv_h2, out);
        grid.advance(&mut c);
    }
    DdcField { grid, entries }
}

/// Per-point wave vectors: full wave numbers and Nyquist-zeroed ones.
fn wave_vectors(grid: TorusGrid) -> (Vec<f64>, Vec<f64>) {
    let m = grid.m;
    let full: Vec<f64> = (0..m).map(|i| 2.0 * PI * wave_number(i, m) as f64).collect();
    let first: Vec<f64> = (0..m)
        .map(|i| if m % 2 == 0 && i == m / 2 { 0.0 } else { full[i] })
        .collect();
    (full, first)
}

fn ddc_spectral(phi: &TorusField) -> DdcField {
    let grid = phi.grid;
    let n = grid.n;
    let dims = grid.dims();
    let len = grid.len();
    let fft = FftNd::new(grid.m, dims);
    let mut hat: Vec<C64> = phi.values.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft.forward(&mut hat);
    let (full, first) = wave_vectors(grid);
    let mut entries = vec![C64::new(0.0, 0.0); len * n * n];
    let mut work = vec![C64::new(0.0, 0.0); len];
    let mut c = vec![0usize; dims];

    // diagonal entries, two per complex transform
    let mut j = 0;
    while j < n {
        let pair = j + 1 < n;
        c.iter_mut().for_each(|x| *x = 0);
        for (w, h) in work.iter_mut().zip(&hat) {
            let s0 = -0.25 * (full[c[2 * j]].powi(2) + full[c[2 * j + 1]].powi(2));
            let mut z = *h * s0;
            if pair {
                let s1 = -0.25 * (full[c[2 * j + 2]].powi(2) + full[c[2 * j + 3]].powi(2));
                z += *h * C64::new(0.0, s1);
            }
            *w = z;
            grid.advance(&mut c);
        }
        fft.inverse(&mut work);
        for (p, w) in work.iter().enumerate() {
            entries[p * n * n + j * n + j] = C64::new(w.re, 0.0);
            if pair {
                entries[p * n * n + (j + 1) * n + j + 1] = C64::new(w.im, 0.0);
            }
        }
        j += 2;
    }

    for j in 0..n {
        for k in j + 1..n {
            c.iter_mut().for_each(|x| *x = 0);
            for (w, h) in work.iter_mut().zip(&hat) {
                let (xj, yj, xk, yk) = (first[c[2 * j]], first[c[2 * j + 1]], first[c[2 * k]], first[c[2 * k + 1]]);
                let sym = C64::new(-(xj * xk + yj * yk), -(xj * yk - yj * xk)) * 0.25;
                *w = *h * sym;
                grid.advance(&mut c);
            }
            fft.inverse(&mut work);
            for (p, w) in work.iter().enumerate() {
                entries[p * n * n + j * n + k] = *w;
                entries[p * n * n + k * n + j] = w.conj();
            }
        }
    }
    DdcField { grid, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gives_zero() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = TorusField::constant(g, 4.2);
        for b in [Backend::Fd, Backend::Spectral] {
            let d = ddc(&f, b).unwrap();
            assert!(d.entries.iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn cosine_one_dimensional() {
        for m in [16, 32] {
            let g = TorusGrid::new(1, m).unwrap();
            let f = TorusField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
            let exact: Vec<f64> = (0..g.len()).map(|i| -PI * PI * (2.0 * PI * g.position(i)[0]).cos()).collect();
            let s = ddc(&f, Backend::Spectral).unwrap();
            let d = ddc(&f, Backend::Fd).unwrap();
            let mut es: f64 = 0.0;
            let mut ed: f64 = 0.0;
            for i in 0..g.len() {
                es = es.max((s.entries[i].re - exact[i]).abs());
                ed = ed.max((d.entries[i].re - exact[i]).abs());
            }
            assert!(es < 1e-12, "{es}");
            // O(h^2): pi^2 * (2 pi h)^2 / 12
            assert!(ed < PI * PI * (2.0 * PI / m as f64).powi(2) / 12.0 * 1.01, "{ed}");
        }
    }

    #[test]
    fn cross_entries_match_analytic() {
        // phi = cos(2 pi x1) cos(2 pi y2); the (1,2) entry is (i/4) phi_{x1 y2}
        let g = TorusGrid::new(2, 16).unwrap();
        let f = TorusField::from_fn(g, |x| (2.0 * PI * x[0]).cos() * (2.0 * PI * x[3]).cos());
        let s = ddc(&f, Backend::Spectral).unwrap();
        for i in 0..g.len() {
            let x = g.position(i);
            let pxy = 4.0 * PI * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[3]).sin();
            let e = s.at(i);
            assert!((e.get(0, 1) - C64::new(0.0, 0.25 * pxy)).norm() < 1e-11);
            assert!((e.get(1, 0) - C64::new(0.0, -0.25 * pxy)).norm() < 1e-11);
            let d00 = -PI * PI * f.values[i];
            assert!((e.get(0, 0).re - d00).abs() < 1e-11);
        }
    }
}
