//! Pointwise evaluation of `log f(lambda[chi + dd^c phi])` and of the
//! linearization coefficients, plus the linearized operator itself.

use rayon::prelude::*;

use crate::background::BackgroundData;
use crate::cone::{ConeSpec, OperatorSpec};
use crate::ddc::{ddc, fd_point, Backend};
use crate::error::{LabError, Result};
use crate::field::TorusGrid;
use crate::herm::{eigh_in_place, C64};

const CHUNK: usize = 1 << 12;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Failure at a single grid point during evaluation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PointFailure {
    pub index: usize,
    pub slack: f64,
}

/// Discretized operator `phi -> log F(chi + dd^c phi)` on a fixed background.
pub struct Discretization<'a> {
    pub op: &'a OperatorSpec,
    pub bg: &'a BackgroundData,
    pub backend: Backend,
    pub grid: TorusGrid,
    cone: ConeSpec,
}

impl<'a> Discretization<'a> {
    pub fn new(op: &'a OperatorSpec, bg: &'a BackgroundData, backend: Backend) -> Result<Self> {
        if op.dim() != bg.n() {
            return Err(LabError::DimensionMismatch { expected: bg.n(), found: op.dim() });
        }
        Ok(Self { op, bg, backend, grid: bg.grid, cone: op.cone() })
    }

    /// Reals stored per point for the linearization: the diagonal `C_jj`
    /// followed by `(2 Re C_kj, -2 Im C_kj)` for each `j < k`.
    pub fn coef_len(&self) -> usize {
        self.grid.n * self.grid.n
    }

    /// Per-point kernel: `b` is `dd^c phi` at `idx`.
    #[inline]
    fn point(&self, idx: usize, b: &[C64], coef: Option<&mut [f64]>) -> std::result::Result<(f64, f64), f64> {
        if self.grid.n == 2 {
            return self.point2(idx, b, coef);
        }
        self.point_general(idx, b, coef)
    }

    #[inline]
    fn point2(&self, idx: usize, b: &[C64], coef: Option<&mut [f64]>) -> std::result::Result<(f64, f64), f64> {
        let chi = self.bg.chi.at(idx).entries();
        let q = &self.bg.factor_inverse_at(idx).data;
        let a = [chi[0] + b[0], chi[1] + b[1], chi[2] + b[2], chi[3] + b[3]];
        let (q00, q10, q11) = (q[0], q[2], q[3]);
        // Q A Q^* with Q = [[q00, 0], [q10, q11]]
        let t0 = [q00 * a[0], q00 * a[1]];
        let t1 = [q10 * a[0] + q11 * a[2], q10 * a[1] + q11 * a[3]];
        let r00 = (t0[0] * q00.conj()).re;
        let r10 = t1[0] * q00.conj();
        let r11 = (t1[0] * q10.conj() + t1[1] * q11.conj()).re;
        let mut red = [C64::new(r00, 0.0), r10.conj(), r10, C64::new(r11, 0.0)];
        let mut v = [ZERO; 4];
        let mut w = [0.0; 2];
        eigh_in_place(2, &mut red, &mut v, &mut w);
        let slack = self.cone.slack(&w);
        if !(slack > 0.0) {
            return Err(slack);
        }
        let Some(out) = coef else {
            let f = self.op.eval_unchecked(&w);
            if !(f > 0.0) {
                return Err(slack);
            }
            return Ok((f.ln(), slack));
        };
        let mut g = [0.0; 2];
        let f = self.op.grad_unchecked(&w, &mut g);
        if !(f > 0.0) || !g[0].is_finite() || !g[1].is_finite() {
            return Err(slack);
        }
        // W = V^* Q
        let w00 = v[0].conj() * q00 + v[2].conj() * q10;
        let w01 = v[2].conj() * q11;
        let w10 = v[1].conj() * q00 + v[3].conj() * q10;
        let w11 = v[3].conj() * q11;
        let inv_f = 1.0 / f;
        out[0] = (g[0] * w00.norm_sqr() + g[1] * w10.norm_sqr()) * inv_f;
        out[1] = (g[0] * w01.norm_sqr() + g[1] * w11.norm_sqr()) * inv_f;
        let c10 = (w01.conj() * w00 * g[0] + w11.conj() * w10 * g[1]) * inv_f;
        out[2] = 2.0 * c10.re;
        out[3] = -2.0 * c10.im;
        Ok((f.ln(), slack))
    }

    fn point_general(&self, idx: usize, b: &[C64], coef: Option<&mut [f64]>) -> std::result::Result<(f64, f64), f64> {
        let n = self.grid.n;
        let nn = n * n;
        let chi = self.bg.chi.at(idx).entries();
        let q = &self.bg.factor_inverse_at(idx).data;
        let mut a = [ZERO; 16];
        for i in 0..nn {
            a[i] = chi[i] + b[i];
        }
        // red = Q A Q^*, Q lower triangular
        let mut tmp = [ZERO; 16];
        for i in 0..n {
            for j in 0..n {
                let mut s = ZERO;
                for k in 0..=i {
                    s += q[i * n + k] * a[k * n + j];
                }
                tmp[i * n + j] = s;
            }
        }
        let mut red = [ZERO; 16];
        for i in 0..n {
            for j in 0..=i {
                let mut s = ZERO;
                for k in 0..=j {
                    s += tmp[i * n + k] * q[j * n + k].conj();
                }
                red[i * n + j] = s;
                red[j * n + i] = s.conj();
            }
            red[i * n + i].im = 0.0;
        }
        let mut v = [ZERO; 16];
        let mut w = [0.0; 4];
        eigh_in_place(n, &mut red[..nn], &mut v[..nn], &mut w[..n]);
        let slack = self.cone.slack(&w[..n]);
        if !(slack > 0.0) {
            return Err(slack);
        }
        match coef {
            None => {
                let f = self.op.eval_unchecked(&w[..n]);
                if !(f > 0.0) {
                    return Err(slack);
                }
                Ok((f.ln(), slack))
            }
            Some(out) => {
                let mut g = [0.0; 4];
                let f = self.op.grad_unchecked(&w[..n], &mut g[..n]);
                if !(f > 0.0) || g[..n].iter().any(|x| !x.is_finite()) {
                    return Err(slack);
                }
                // W = V^* Q, C = W^* diag(g / f) W
                let mut wm = [ZERO; 16];
                for r in 0..n {
                    for i in 0..n {
                        let mut s = ZERO;
                        for k in i..n {
                            s += v[k * n + r].conj() * q[k * n + i];
                        }
                        wm[r * n + i] = s;
                    }
                }
                let inv_f = 1.0 / f;
                for j in 0..n {
                    let mut s = 0.0;
                    for r in 0..n {
                        s += g[r] * wm[r * n + j].norm_sqr();
                    }
                    out[j] = s * inv_f;
                }
                let mut p = n;
                for j in 0..n {
                    for k in j + 1..n {
                        // C_kj = sum_r conj(W_rk) g_r W_rj
                        let mut s = ZERO;
                        for r in 0..n {
                            s += wm[r * n + k].conj() * wm[r * n + j] * g[r];
                        }
                        s *= inv_f;
                        out[p] = 2.0 * s.re;
                        out[p + 1] = -2.0 * s.im;
                        p += 2;
                    }
                }
                Ok((f.ln(), slack))
            }
        }
    }

    /// Fills `logf` (and `coef` when given); returns the minimal cone slack,
    /// or the lowest-index failing point.
    pub(crate) fn evaluate(
        &self,
        phi: &[f64],
        logf: &mut [f64],
        coef: Option<&mut [f64]>,
    ) -> std::result::Result<f64, PointFailure> {
        let n = self.grid.n;
        let nn = n * n;
        let cl = self.coef_len();
        let spectral = match self.backend {
            Backend::Spectral => Some(
                ddc(&crate::field::TorusField { grid: self.grid, values: phi.to_vec() }, Backend::Spectral)
                    .expect("grid validated"),
            ),
            Backend::Fd => None,
        };
        let inv_h2 = (self.grid.m * self.grid.m) as f64;
        let dims = self.grid.dims();
        let mut dummy = Vec::new();
        let (coef, with_coef) = match coef {
            Some(c) => (c, true),
            None => (&mut dummy[..], false),
        };
        let coef_chunks: Vec<&mut [f64]> = if with_coef {
            coef.chunks_mut(CHUNK * cl).collect()
        } else {
            (0..logf.len().div_ceil(CHUNK)).map(|_| &mut [][..]).collect()
        };
        let results: Vec<std::result::Result<f64, PointFailure>> = logf
            .par_chunks_mut(CHUNK)
            .zip(coef_chunks.into_par_iter())
            .enumerate()
            .map(|(ci, (lchunk, cchunk))| {
                let start = ci * CHUNK;
                let mut c = vec![0usize; dims];
                self.grid.coords(start, &mut c);
                let mut plus = vec![0isize; dims];
                let mut minus = vec![0isize; dims];
                let mut b = [ZERO; 16];
                let mut min_slack = f64::INFINITY;
                for (off, lf) in lchunk.iter_mut().enumerate() {
                    let idx = start + off;
                    let bs: &[C64] = match &spectral {
                        Some(d) => d.slice(idx),
                        None => {
                            self.grid.neighbor_offsets(&c, &mut plus, &mut minus);
                            fd_point(phi, idx, &plus, &minus, n, inv_h2, &mut b[..nn]);
                            self.grid.advance(&mut c);
                            &b[..nn]
                        }
                    };
                    let co = if with_coef { Some(&mut cchunk[off * cl..(off + 1) * cl]) } else { None };
                    match self.point(idx, bs, co) {
                        Ok((l, s)) => {
                            *lf = l;
                            min_slack = min_slack.min(s);
                        }
                        Err(slack) => return Err(PointFailure { index: idx, slack }),
                    }
                }
                Ok(min_slack)
            })
            .collect();
        let mut min_slack = f64::INFINITY;
        for r in results {
            min_slack = min_slack.min(r?);
        }
        Ok(min_slack)
    }

    /// `out = L psi - w psi` where `L psi = tr(C dd^c psi)` pointwise.
    pub(crate) fn apply(&self, coef: &[f64], weight: Option<&[f64]>, psi: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let nn = n * n;
        let cl = self.coef_len();
        let dims = self.grid.dims();
        let inv_h2 = (self.grid.m * self.grid.m) as f64;
        let spectral = match self.backend {
            Backend::Spectral => Some(
                ddc(&crate::field::TorusField { grid: self.grid, values: psi.to_vec() }, Backend::Spectral)
                    .expect("grid validated"),
            ),
            Backend::Fd => None,
        };
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, ochunk)| {
            let start = ci * CHUNK;
            let mut c = vec![0usize; dims];
            self.grid.coords(start, &mut c);
            let mut plus = vec![0isize; dims];
            let mut minus = vec![0isize; dims];
            let mut b = [ZERO; 16];
            for (off, o) in ochunk.iter_mut().enumerate() {
                let idx = start + off;
                let bs: &[C64] = match &spectral {
                    Some(d) => d.slice(idx),
                    None => {
                        self.grid.neighbor_offsets(&c, &mut plus, &mut minus);
                        fd_point(psi, idx, &plus, &minus, n, inv_h2, &mut b[..nn]);
                        self.grid.advance(&mut c);
                        &b[..nn]
                    }
                };
                let co = &coef[idx * cl..(idx + 1) * cl];
                let mut s = 0.0;
                for j in 0..n {
                    s += co[j] * bs[j * n + j].re;
                }
                let mut p = n;
                for j in 0..n {
                    for k in j + 1..n {
                        let z = bs[j * n + k];
                        s += co[p] * z.re + co[p + 1] * z.im;
                        p += 2;
                    }
                }
                if let Some(w) = weight {
                    s -= w[idx] * psi[idx];
                }
                *o = s;
            }
        });
    }
}
