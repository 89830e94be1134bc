//! Trigonometric interpolation of samples on the unit parameter torus.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Fourier series of a periodic function sampled on the node-major grid of [0,1)^m with
/// `res` points per axis. Nyquist modes are dropped so that the series is real for real data.
#[derive(Clone, Debug)]
pub struct TrigSeries {
    m: usize,
    modes: Vec<(Vec<f64>, Complex<f64>)>,
}

impl TrigSeries {
    pub fn from_samples(samples: &[f64], m: usize, res: usize) -> Self {
        Self::from_samples_with(samples, m, res, |_, c| Some(c))
    }

    /// Builds the series after applying `map(k, coefficient)` to each mode; returning None
    /// drops the mode.
    pub fn from_samples_with(
        samples: &[f64],
        m: usize,
        res: usize,
        map: impl Fn(&[f64], Complex<f64>) -> Option<Complex<f64>>,
    ) -> Self {
        let total = samples.len();
        assert_eq!(total, res.pow(m as u32), "sample count must be res^m");
        let mut data: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(res);
        let mut line = vec![Complex::new(0.0, 0.0); res];
        for axis in 0..m {
            let stride = res.pow((m - 1 - axis) as u32);
            for start in 0..total {
                if !(start / stride).is_multiple_of(res) {
                    continue;
                }
                for j in 0..res {
                    line[j] = data[start + j * stride];
                }
                fft.process(&mut line);
                for j in 0..res {
                    data[start + j * stride] = line[j];
                }
            }
        }
        let peak = data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut modes = Vec::new();
        for (i, c) in data.iter().enumerate() {
            if c.norm() <= 1e-16 * peak {
                continue;
            }
            let mut t = i;
            let mut k = vec![0.0; m];
            let mut nyquist = false;
            for a in (0..m).rev() {
                let j = t % res;
                t /= res;
                if res.is_multiple_of(2) && j == res / 2 {
                    nyquist = true;
                }
                k[a] = if j < res.div_ceil(2) { j as f64 } else { j as f64 - res as f64 };
            }
            if nyquist {
                continue;
            }
            if let Some(v) = map(&k, *c / total as f64) {
                modes.push((k, v));
            }
        }
        Self { m, modes }
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|(k, c)| {
                let phase = 2.0 * PI * k.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
                c.re * phase.cos() - c.im * phase.sin()
            })
            .sum()
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.m];
        for (k, c) in &self.modes {
            let phase = 2.0 * PI * k.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
            // derivative of Re(c e^{i phase}) along u_a is -2 pi k_a Im(c e^{i phase})
            let im = c.re * phase.sin() + c.im * phase.cos();
            for a in 0..self.m {
                g[a] -= 2.0 * PI * k[a] * im;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_a_band_limited_function() {
        let res = 16;
        let f = |u: &[f64]| (2.0 * PI * u[0]).sin() * (4.0 * PI * u[1]).cos() + 0.5;
        let samples: Vec<f64> =
            (0..res * res).map(|i| f(&[(i / res) as f64 / res as f64, (i % res) as f64 / res as f64])).collect();
        let s = TrigSeries::from_samples(&samples, 2, res);
        let u = [0.123, 0.777];
        assert!((s.value(&u) - f(&u)).abs() < 1e-13);
        let g = s.gradient(&u);
        let gx = 2.0 * PI * (2.0 * PI * u[0]).cos() * (4.0 * PI * u[1]).cos();
        assert!((g[0] - gx).abs() < 1e-12);
    }
}
