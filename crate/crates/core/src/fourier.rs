//! Periodic grids and FFT helpers shared by the transport solver and the simulator.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Uniform periodic grid on `[0, length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicGrid {
    pub length: f64,
    pub points: usize,
}

impl PeriodicGrid {
    pub fn new(length: f64, points: usize) -> Result<Self> {
        if !(length > 0.0) || points < 2 {
            return Err(Error::Input("grid needs positive length and at least 2 points".into()));
        }
        Ok(PeriodicGrid { length, points })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    /// Angular wavenumbers in FFT order; the Nyquist entry is set to zero.
    pub fn wavenumbers(&self) -> Vec<f64> {
        wavenumbers(self.points, self.length)
    }
}

pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|m| {
            if 2 * m == n {
                0.0
            } else if m < n.div_ceil(2) {
                base * m as f64
            } else {
                base * (m as f64 - n as f64)
            }
        })
        .collect()
}

/// Forward and inverse transforms of one length, unnormalized like FFTW.
#[derive(Clone)]
pub struct FftPair {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
    pub n: usize,
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FftPair({})", self.n)
    }
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n), n }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.forward.process(data);
    }

    /// Inverse transform including the `1/n` factor.
    pub fn inverse(&self, data: &mut [C64]) {
        self.inverse.process(data);
        let s = 1.0 / self.n as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Spectral derivative of periodic samples.
pub fn derivative(values: &[C64], length: f64) -> Vec<C64> {
    let n = values.len();
    let fft = FftPair::new(n);
    let mut buf = values.to_vec();
    fft.forward(&mut buf);
    for (z, k) in buf.iter_mut().zip(wavenumbers(n, length)) {
        *z *= C64::new(0.0, k);
    }
    fft.inverse(&mut buf);
    buf
}

/// Band-limited interpolation of periodic samples onto `m >= n` points.
pub fn interpolate(values: &[C64], m: usize) -> Vec<C64> {
    let n = values.len();
    if m == n {
        return values.to_vec();
    }
    assert!(m > n, "interpolation target must be finer");
    let mut buf = values.to_vec();
    FftPair::new(n).forward(&mut buf);
    let mut out = vec![C64::new(0.0, 0.0); m];
    let half = n / 2;
    for j in 0..n {
        if 2 * j == n {
            // split the Nyquist coefficient symmetrically
            out[half] += buf[j] * 0.5;
            out[m - half] += buf[j] * 0.5;
        } else if j < half + n % 2 {
            out[j] = buf[j];
        } else {
            out[m - (n - j)] = buf[j];
        }
    }
    let fft = FftPair::new(m);
    fft.inverse.process(&mut out);
    let s = 1.0 / n as f64;
    out.iter_mut().for_each(|z| *z *= s);
    out
}

/// Shifts periodic samples by `shift` (values at `x - shift`), exactly for band-limited data.
pub fn translate(values: &[C64], length: f64, shift: f64) -> Vec<C64> {
    let n = values.len();
    let fft = FftPair::new(n);
    let mut buf = values.to_vec();
    fft.forward(&mut buf);
    for (z, k) in buf.iter_mut().zip(wavenumbers(n, length)) {
        *z *= C64::new(0.0, -k * shift).exp();
    }
    fft.inverse(&mut buf);
    buf
}

/// `sum |FFT(a)_m / n|`, the discrete L1 norm of the Fourier coefficients.
pub fn fourier_l1(values: &[C64]) -> f64 {
    let n = values.len();
    let mut buf = values.to_vec();
    FftPair::new(n).forward(&mut buf);
    buf.iter().map(|z| z.norm()).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(grid: &PeriodicGrid) -> Vec<C64> {
        grid.xs().iter().map(|&x| C64::new((-(x - 10.0).powi(2)).exp(), 0.0)).collect()
    }

    #[test]
    fn derivative_of_gaussian() {
        let g = PeriodicGrid::new(20.0, 256).unwrap();
        let d = derivative(&gauss(&g), g.length);
        for (i, &x) in g.xs().iter().enumerate() {
            let exact = -2.0 * (x - 10.0) * (-(x - 10.0).powi(2)).exp();
            assert!((d[i].re - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_is_exact_for_band_limited() {
        let g = PeriodicGrid::new(20.0, 128).unwrap();
        let fine = interpolate(&gauss(&g), 512);
        let gf = PeriodicGrid::new(20.0, 512).unwrap();
        for (a, b) in fine.iter().zip(gauss(&gf)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn translation_matches_shifted_samples() {
        let g = PeriodicGrid::new(20.0, 256).unwrap();
        let t = translate(&gauss(&g), g.length, 1.5);
        for (i, &x) in g.xs().iter().enumerate() {
            assert!((t[i].re - (-(x - 11.5).powi(2)).exp()).abs() < 1e-12);
        }
    }
}
