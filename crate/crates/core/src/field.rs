//! Periodic lattice on the flat torus `C^n / (Z^n + i Z^n)` and scalar fields on it.
//!
//! Real axes are ordered `x1, y1, x2, y2, ...` and axis 0 varies slowest.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fft::{wave_number, RealFftNd};
use crate::herm::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    pub n: usize,
    pub m: usize,
}

impl TorusGrid {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m < 8 {
            return Err(LabError::GridTooCoarse { m });
        }
        if n == 0 || n > 4 {
            return Err(LabError::ConfigInvalid(format!("complex dimension {n} outside 1..=4")));
        }
        Ok(Self { n, m })
    }

    /// Number of real axes.
    pub fn dims(&self) -> usize {
        2 * self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Cell volume `h^{2n}`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dims() as i32)
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.dims() - 1 - axis) as u32)
    }

    pub fn coords(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.dims()).rev() {
            out[a] = idx % self.m;
            idx /= self.m;
        }
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.m + c % self.m)
    }

    /// Physical position of a grid point.
    pub fn position(&self, idx: usize) -> Vec<f64> {
        let mut c = vec![0; self.dims()];
        self.coords(idx, &mut c);
        c.iter().map(|&i| i as f64 * self.h()).collect()
    }

    /// Index offsets of the `+1` and `-1` neighbours along each axis at `coords`.
    pub fn neighbor_offsets(&self, coords: &[usize], plus: &mut [isize], minus: &mut [isize]) {
        let m = self.m;
        let mut s = 1isize;
        for a in (0..self.dims()).rev() {
            plus[a] = if coords[a] + 1 == m { -(m as isize - 1) * s } else { s };
            minus[a] = if coords[a] == 0 { (m as isize - 1) * s } else { -s };
            s *= m as isize;
        }
    }

    /// Index reached from `idx` by the integer displacement `d` (periodic).
    pub fn translate(&self, idx: usize, d: &[i64]) -> usize {
        let mut c = vec![0; self.dims()];
        self.coords(idx, &mut c);
        let m = self.m as i64;
        for a in 0..self.dims() {
            c[a] = (c[a] as i64 + d[a]).rem_euclid(m) as usize;
        }
        self.index(&c)
    }

    /// Advances a coordinate odometer, axis `dims-1` fastest.
    pub fn advance(&self, coords: &mut [usize]) {
        for a in (0..self.dims()).rev() {
            coords[a] += 1;
            if coords[a] < self.m {
                return;
            }
            coords[a] = 0;
        }
    }
}

/// Scalar field sampled on a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct TorusField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

/// Discrete norms of a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub sup: f64,
    pub l1: f64,
    pub l2: f64,
    pub gradient_l2: f64,
}

impl TorusField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::ConfigInvalid(format!("non-finite field value at point {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, k: f64) -> Self {
        Self { grid, values: vec![k; grid.len()] }
    }

    /// Samples `f(x1, y1, ..., xn, yn)` at every grid point.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let h = grid.h();
        let mut c = vec![0usize; grid.dims()];
        let mut x = vec![0.0; grid.dims()];
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            for (xi, &ci) in x.iter_mut().zip(&c) {
                *xi = ci as f64 * h;
            }
            values.push(f(&x));
            grid.advance(&mut c);
        }
        Self { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_grid(&self, other: &TorusField) -> Result<()> {
        if self.grid != other.grid {
            return Err(LabError::DimensionMismatch { expected: self.grid.len(), found: other.grid.len() });
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &TorusField, f: impl Fn(f64, f64) -> f64) -> Result<TorusField> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(TorusField { grid: self.grid, values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TorusField {
        TorusField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, other: &TorusField) -> Result<TorusField> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &TorusField) -> Result<TorusField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn shift(&self, c: f64) -> TorusField {
        self.map(|v| v + c)
    }

    pub fn scale(&self, s: f64) -> TorusField {
        self.map(|v| v * s)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Oscillation `max - min`.
    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn positive_part(&self) -> TorusField {
        self.map(|v| v.max(0.0))
    }

    /// Trigonometric interpolation onto `m_new` points per axis; modes at
    /// or beyond the smaller Nyquist frequency are dropped.
    pub fn resample(&self, m_new: usize) -> Result<TorusField> {
        let grid = TorusGrid::new(self.grid.n, m_new)?;
        let m = self.grid.m;
        if m_new == m {
            return Ok(self.clone());
        }
        let dims = grid.dims();
        let src = RealFftNd::new(m, dims);
        let dst = RealFftNd::new(m_new, dims);
        let mut spec = vec![C64::new(0.0, 0.0); src.half_len()];
        src.forward(&mut self.values.clone(), &mut spec);
        let limit = (m.min(m_new) as i64 + 1) / 2;
        let (hs, hd) = (src.half(), dst.half());
        let scale = (m_new as f64 / m as f64).powi(dims as i32);
        let mut out = vec![C64::new(0.0, 0.0); dst.half_len()];
        let mut c = vec![0usize; dims];
        'modes: for (idx, z) in spec.iter().enumerate() {
            let mut rest = idx;
            c[dims - 1] = rest % hs;
            rest /= hs;
            for a in (0..dims - 1).rev() {
                c[a] = rest % m;
                rest /= m;
            }
            let mut target = 0usize;
            for (a, &ca) in c.iter().enumerate() {
                let w = if a == dims - 1 { ca as i64 } else { wave_number(ca, m) };
                if w.abs() >= limit {
                    continue 'modes;
                }
                let slot = if a == dims - 1 { w as usize } else { w.rem_euclid(m_new as i64) as usize };
                target = target * if a == dims - 1 { hd } else { m_new } + slot;
            }
            out[target] = z * scale;
        }
        let mut values = vec![0.0; grid.len()];
        dst.inverse(&mut out, &mut values);
        TorusField::new(grid, values)
    }

    pub fn norms(&self) -> FieldNorms {
        let w = self.grid.cell_volume();
        let h = self.grid.h();
        let dims = self.grid.dims();
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut grad = 0.0;
        let mut c = vec![0usize; dims];
        let mut plus = vec![0isize; dims];
        let mut minus = vec![0isize; dims];
        for (i, &v) in self.values.iter().enumerate() {
            l1 += v.abs();
            l2 += v * v;
            self.grid.neighbor_offsets(&c, &mut plus, &mut minus);
            for &p in &plus {
                let d = (self.values[(i as isize + p) as usize] - v) / h;
                grad += d * d;
            }
            self.grid.advance(&mut c);
        }
        FieldNorms { sup: self.sup_norm(), l1: l1 * w, l2: (l2 * w).sqrt(), gradient_l2: (grad * w).sqrt() }
    }

    /// Binary format: `u64` LE `n`, `u64` LE `m`, then `m^{2n}` LE `f64` values.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&(self.grid.m as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let n = u64::from_le_bytes(b) as usize;
        r.read_exact(&mut b)?;
        let m = u64::from_le_bytes(b) as usize;
        let grid = TorusGrid::new(n, m)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        Self::new(grid, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(&mut BufReader::new(std::fs::File::open(path)?))
    }

    /// `index,value` lines after a header row.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v:e}")?;
        }
        Ok(())
    }

    pub fn read_csv(grid: TorusGrid, r: impl Read) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        for (ln, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if ln == 0 || line.trim().is_empty() {
                continue;
            }
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| LabError::ConfigInvalid(format!("csv line {} malformed", ln + 1)))?;
            let i: usize = i.trim().parse().map_err(|_| LabError::ConfigInvalid(format!("bad index on line {}", ln + 1)))?;
            let v: f64 = v.trim().parse().map_err(|_| LabError::ConfigInvalid(format!("bad value on line {}", ln + 1)))?;
            if i >= values.len() {
                return Err(LabError::DimensionMismatch { expected: values.len(), found: i + 1 });
            }
            values[i] = v;
        }
        Self::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn resample_is_exact_for_band_limited_fields() {
        use std::f64::consts::PI;
        let f = |x: &[f64]| (2.0 * PI * x[0]).cos() * (4.0 * PI * x[1]).sin() + 0.3 * (2.0 * PI * (x[0] - 3.0 * x[1])).cos();
        let coarse = TorusField::from_fn(TorusGrid::new(1, 8).unwrap(), f);
        let fine = TorusField::from_fn(TorusGrid::new(1, 24).unwrap(), f);
        let up = coarse.resample(24).unwrap();
        assert!(up.sub(&fine).unwrap().sup_norm() < 1e-13);
        let down = fine.resample(8).unwrap();
        assert!(down.sub(&coarse).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn grid_rejects_coarse() {
        assert!(matches!(TorusGrid::new(1, 4), Err(LabError::GridTooCoarse { m: 4 })));
    }

    #[test]
    fn indexing_roundtrip() {
        let g = TorusGrid::new(2, 8).unwrap();
        let mut c = vec![0; 4];
        let mut walk = vec![0; 4];
        for i in 0..g.len() {
            g.coords(i, &mut c);
            assert_eq!(c, walk);
            assert_eq!(g.index(&c), i);
            g.advance(&mut walk);
        }
        assert_eq!(g.translate(0, &[-1, 0, 0, 1]), g.index(&[7, 0, 0, 1]));
    }

    #[test]
    fn constant_norms() {
        let g = TorusGrid::new(1, 8).unwrap();
        let n = TorusField::constant(g, -3.0).norms();
        assert_eq!(n.sup, 3.0);
        assert!((n.l1 - 3.0).abs() < 1e-14);
        assert_eq!(n.gradient_l2, 0.0);
    }

    #[test]
    fn cosine_l2() {
        let g = TorusGrid::new(1, 16).unwrap();
        let f = TorusField::from_fn(g, |x| (2.0 * PI * x[0]).cos());
        assert!((f.norms().l2 - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn io_roundtrip() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = TorusField::from_fn(g, |x| x[0] * 3.0 - x[1]);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 64);
        assert_eq!(TorusField::read_binary(&mut buf.as_slice()).unwrap(), f);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        assert_eq!(TorusField::read_csv(g, csv.as_slice()).unwrap(), f);
    }
}
