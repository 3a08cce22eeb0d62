//! Butterworth low-pass design (bilinear transform with pre-warping) and
//! second-order-section filtering, single pass or forward-backward.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub order: usize,
    pub cutoff_hz: f64,
    pub zero_phase: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            order: 2,
            cutoff_hz: 0.5,
            zero_phase: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self, fs_hz: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("filter order must be at least 1".into()));
        }
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::Config(format!("sampling rate must be positive, got {fs_hz}")));
        }
        let nyquist = fs_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::Config(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }
}

/// One normalized biquad: `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// State of the transposed direct form II after an infinitely long
    /// constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let gain = self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>();
        let y0 = gain * x0;
        let z2 = self.b[2] * x0 - self.a[2] * y0;
        let z1 = self.b[1] * x0 - self.a[1] * y0 + z2;
        [z1, z2]
    }

    #[inline]
    fn tick(&self, x: f64, z: &mut [f64; 2]) -> f64 {
        let y = self.b[0] * x + z[0];
        z[0] = self.b[1] * x - self.a[1] * y + z[1];
        z[1] = self.b[2] * x - self.a[2] * y;
        y
    }
}

/// A designed low-pass as a cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
}

impl Butterworth {
    /// Digital low-pass of the given order via the bilinear transform, with the
    /// analog cutoff pre-warped so the -3 dB point lands on `cutoff_hz`.
    pub fn lowpass(order: usize, cutoff_hz: f64, fs_hz: f64) -> Result<Self> {
        FilterConfig {
            order,
            cutoff_hz,
            zero_phase: false,
        }
        .validate(fs_hz)?;
        let k = libm::tan(PI * cutoff_hz / fs_hz);
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            // damping of the i-th conjugate pole pair of the analog prototype
            let zeta = libm::sin(PI * (2 * i + 1) as f64 / (2 * order) as f64);
            let a0 = 1.0 + 2.0 * zeta * k + k2;
            sections.push(Biquad {
                b: [k2 / a0, 2.0 * k2 / a0, k2 / a0],
                a: [1.0, (2.0 * k2 - 2.0) / a0, (1.0 - 2.0 * zeta * k + k2) / a0],
            });
        }
        if order % 2 == 1 {
            let a0 = 1.0 + k;
            sections.push(Biquad {
                b: [k / a0, k / a0, 0.0],
                a: [1.0, (k - 1.0) / a0, 0.0],
            });
        }
        Ok(Butterworth { sections })
    }

    /// Numerator and denominator polynomials (in powers of `z^-1`) of the full cascade.
    pub fn transfer_polynomials(&self) -> (Vec<f64>, Vec<f64>) {
        let mut b = alloc::vec![1.0];
        let mut a = alloc::vec![1.0];
        for s in &self.sections {
            b = convolve(&b, &s.b);
            a = convolve(&a, &s.a);
        }
        (b, a)
    }

    /// Causal filtering, state initialized to the steady state of `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let Some(&first) = y.first() else { break };
            let mut z = s.steady_state(first);
            for v in y.iter_mut() {
                *v = s.tick(*v, &mut z);
            }
        }
        y
    }

    /// Forward-backward filtering with mirror padding of `padlen` samples on each
    /// side. The padding is shortened to `x.len() - 1` when the input is short.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| x[n - 1 - i]));
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y.drain(..pad);
        y.truncate(n);
        y
    }
}

fn convolve(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Result of [`butterworth_lowpass`].
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub values: Vec<f64>,
    /// Set when the series was too short (fewer than `3 * order` samples)
    /// and was returned unfiltered.
    pub unfiltered: bool,
}

/// Low-pass `series` sampled at `fs_hz`. Zero-phase mode pads by `3 * order`
/// mirrored samples on both ends.
pub fn butterworth_lowpass(series: &[f64], cfg: &FilterConfig, fs_hz: f64) -> Result<Filtered> {
    let design = Butterworth::lowpass(cfg.order, cfg.cutoff_hz, fs_hz)?;
    let padlen = 3 * cfg.order;
    if series.len() < padlen || series.len() < 2 {
        return Ok(Filtered {
            values: series.to_vec(),
            unfiltered: true,
        });
    }
    let values = if cfg.zero_phase {
        design.filtfilt(series, padlen)
    } else {
        design.filter(series)
    };
    Ok(Filtered {
        values,
        unfiltered: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Reference second-order-section coefficients produced once with
    // scipy.signal.butter(2, 0.5, fs=50, output="sos").
    #[test]
    #[allow(clippy::excessive_precision)]
    fn second_order_design_matches_reference_coefficients() {
        let d = Butterworth::lowpass(2, 0.5, 50.0).unwrap();
        let s = d.sections[0];
        let b = [9.4469184384015075e-04, 1.8893836876803015e-03, 9.4469184384015075e-04];
        let a = [1.0, -1.9111970674260730e+00, 9.1497583480143363e-01];
        for i in 0..3 {
            assert!(close(s.b[i], b[i], 1e-15), "b{i}");
            assert!(close(s.a[i], a[i], 1e-14), "a{i}");
        }
    }

    // scipy.signal.sosfiltfilt(butter(3, 2.0, fs=50, output="sos"), x,
    // padtype="even", padlen=9), frozen.
    #[test]
    fn third_order_zero_phase_matches_reference_output() {
        let x = [
            0.0, 0.0, 1.0, 0.2, 0.9, 0.5, 0.5, 0.1, 0.0, 0.0, 0.3, 0.8, 0.8, 0.8, 0.1, 0.0, 0.0,
            0.6, 0.2, 0.4,
        ];
        let expected = [
            0.4128807304176018, 0.42179959931239824, 0.42684989103796067, 0.42836527649443756,
            0.42675586540680804, 0.42252653925907085, 0.4162597853185552, 0.408556207233828,
            0.39994716857158435, 0.39081544716675515, 0.3813663012464429, 0.37167157567627745,
            0.36176988209675537, 0.351769605065569, 0.341896538457059, 0.3324632762846087,
            0.32378950364790066, 0.3161292081242119, 0.30964021811240816, 0.3043893886349309,
        ];
        let cfg = FilterConfig {
            order: 3,
            cutoff_hz: 2.0,
            zero_phase: true,
        };
        let y = butterworth_lowpass(&x, &cfg, 50.0).unwrap();
        assert!(!y.unfiltered);
        for (a, b) in y.values.iter().zip(expected) {
            assert!(close(*a, b, 1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn third_order_single_pass_matches_reference_output() {
        let x = [0.0, 0.0, 1.0, 0.2, 0.9, 0.5, 0.5, 0.1, 0.0, 0.0];
        let expected = [
            0.0, 0.0, 0.00156701035058827, 0.00892977826007975, 0.02604893994338585,
            0.05466564422988877, 0.09456082350066075, 0.14264319180109689, 0.19301746690045762,
            0.23892717227307853,
        ];
        let d = Butterworth::lowpass(3, 2.0, 50.0).unwrap();
        for (a, b) in d.filter(&x).iter().zip(expected) {
            assert!(close(*a, b, 1e-14), "{a} vs {b}");
        }
    }

    #[test]
    fn constant_series_passes_unchanged() {
        let x = vec![5.0; 200];
        for zero_phase in [true, false] {
            let cfg = FilterConfig {
                zero_phase,
                ..FilterConfig::default()
            };
            let y = butterworth_lowpass(&x, &cfg, 50.0).unwrap();
            assert!(y.values.iter().all(|v| close(*v, 5.0, 1e-9)));
        }
    }

    #[test]
    fn short_series_is_flagged_and_returned_unchanged() {
        let x = [0.1, 0.9, 0.3];
        let y = butterworth_lowpass(&x, &FilterConfig::default(), 50.0).unwrap();
        assert!(y.unfiltered);
        assert_eq!(y.values, x);
    }

    #[test]
    fn cutoff_at_or_above_nyquist_is_rejected() {
        let cfg = FilterConfig {
            cutoff_hz: 25.0,
            ..FilterConfig::default()
        };
        assert!(matches!(
            butterworth_lowpass(&[0.0; 10], &cfg, 50.0),
            Err(Error::Config(_))
        ));
        assert!(Butterworth::lowpass(0, 1.0, 50.0).is_err());
    }
}
