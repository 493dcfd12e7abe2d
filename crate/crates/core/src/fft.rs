//! Multi-dimensional FFT on the periodic lattice `(Z/m)^d`, axis 0 slowest.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::herm::C64;

pub struct FftNd {
    m: usize,
    dims: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("m", &self.m).field("dims", &self.dims).finish()
    }
}

impl FftNd {
    pub fn new(m: usize, dims: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { m, dims, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.fwd);
    }

    /// Inverse transform including the `1/len` normalization.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|x| *x *= s);
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.dims {
            let stride = self.m.pow((self.dims - 1 - axis) as u32);
            transform_axis(data, self.m, stride, plan, &mut scratch);
        }
    }
}

/// Transforms every line of length `m` with the given stride.
fn transform_axis(data: &mut [C64], m: usize, stride: usize, plan: &Arc<dyn Fft<f64>>, scratch: &mut [C64]) {
    if stride == 1 {
        plan.process_with_scratch(data, scratch);
        return;
    }
    // each block is an m x stride matrix whose columns are the lines;
    // columns are gathered in batches of `width`
    let width = stride.min(BATCH);
    let mut buf = vec![C64::new(0.0, 0.0); m * width];
    for chunk in data.chunks_exact_mut(m * stride) {
        let mut c0 = 0;
        while c0 < stride {
            let w = width.min(stride - c0);
            for r in 0..m {
                let row = &chunk[r * stride + c0..r * stride + c0 + w];
                for (c, &z) in row.iter().enumerate() {
                    buf[c * m + r] = z;
                }
            }
            plan.process_with_scratch(&mut buf[..w * m], scratch);
            for r in 0..m {
                let row = &mut chunk[r * stride + c0..r * stride + c0 + w];
                for (c, z) in row.iter_mut().enumerate() {
                    *z = buf[c * m + r];
                }
            }
            c0 += w;
        }
    }
}

/// Real-input transform on `(Z/m)^d` keeping the half spectrum
/// `0..=m/2` along the last axis.
pub struct RealFftNd {
    m: usize,
    dims: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RealFftNd {
    pub fn new(m: usize, dims: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::new();
        Self {
            m,
            dims,
            r2c: rp.plan_fft_forward(m),
            c2r: rp.plan_fft_inverse(m),
            fwd: cp.plan_fft_forward(m),
            inv: cp.plan_fft_inverse(m),
        }
    }

    pub fn half(&self) -> usize {
        self.m / 2 + 1
    }

    pub fn real_len(&self) -> usize {
        self.m.pow(self.dims as u32)
    }

    pub fn half_len(&self) -> usize {
        self.m.pow(self.dims as u32 - 1) * self.half()
    }

    /// Unnormalized forward transform; `input` is used as scratch.
    pub fn forward(&self, input: &mut [f64], out: &mut [C64]) {
        let (m, hm) = (self.m, self.half());
        let mut scratch = self.r2c.make_scratch_vec();
        for (row, o) in input.chunks_exact_mut(m).zip(out.chunks_exact_mut(hm)) {
            self.r2c.process_with_scratch(row, o, &mut scratch).expect("lengths match");
        }
        let mut cs = vec![C64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        for axis in 0..self.dims - 1 {
            let stride = m.pow((self.dims - 2 - axis) as u32) * hm;
            transform_axis(out, m, stride, &self.fwd, &mut cs);
        }
    }

    /// Inverse transform including normalization; `spec` is used as scratch.
    pub fn inverse(&self, spec: &mut [C64], out: &mut [f64]) {
        let (m, hm) = (self.m, self.half());
        let mut cs = vec![C64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        for axis in 0..self.dims - 1 {
            let stride = m.pow((self.dims - 2 - axis) as u32) * hm;
            transform_axis(spec, m, stride, &self.inv, &mut cs);
        }
        let mut scratch = self.c2r.make_scratch_vec();
        for (row, o) in spec.chunks_exact_mut(hm).zip(out.chunks_exact_mut(m)) {
            // the imaginary parts of the self-conjugate bins carry roundoff only
            row[0].im = 0.0;
            if m % 2 == 0 {
                row[hm - 1].im = 0.0;
            }
            self.c2r.process_with_scratch(row, o, &mut scratch).expect("lengths match");
        }
        let s = 1.0 / self.real_len() as f64;
        out.iter_mut().for_each(|x| *x *= s);
    }
}

const BATCH: usize = 16;

/// Signed wave number of FFT bin `i` on `m` points; the Nyquist bin maps to `-m/2`.
pub fn wave_number(i: usize, m: usize) -> i64 {
    if i < m.div_ceil(2) {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_single_mode() {
        let m = 8;
        let f = FftNd::new(m, 2);
        let mut data: Vec<C64> = (0..64).map(|i| C64::new((i as f64).sin(), 0.0)).collect();
        let orig = data.clone();
        f.forward(&mut data);
        f.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
        // e^{2 pi i (x0 + 2 x1)}: single nonzero bin at (1, 2)
        let mut data: Vec<C64> = (0..64)
            .map(|i| {
                let (a, b) = (i / m, i % m);
                let t = 2.0 * std::f64::consts::PI * (a as f64 + 2.0 * b as f64) / m as f64;
                C64::new(t.cos(), t.sin())
            })
            .collect();
        f.forward(&mut data);
        for (i, v) in data.iter().enumerate() {
            let expect = if i == m + 2 { 64.0 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-11 && v.im.abs() < 1e-11);
        }
    }

    #[test]
    fn real_transform_matches_complex() {
        let (m, d) = (8, 3);
        let real: Vec<f64> = (0..512).map(|i| ((i * 37 % 101) as f64).cos()).collect();
        let rf = RealFftNd::new(m, d);
        let mut half = vec![C64::new(0.0, 0.0); rf.half_len()];
        rf.forward(&mut real.clone(), &mut half);
        let cf = FftNd::new(m, d);
        let mut full: Vec<C64> = real.iter().map(|&v| C64::new(v, 0.0)).collect();
        cf.forward(&mut full);
        for i in 0..m * m {
            for k in 0..=m / 2 {
                assert!((half[i * (m / 2 + 1) + k] - full[i * m + k]).norm() < 1e-10);
            }
        }
        let mut back = vec![0.0; 512];
        rf.inverse(&mut half, &mut back);
        for (a, b) in back.iter().zip(&real) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn wave_numbers() {
        let k: Vec<i64> = (0..8).map(|i| wave_number(i, 8)).collect();
        assert_eq!(k, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }
}
