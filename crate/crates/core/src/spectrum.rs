//! Single-sided amplitude spectra.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{PcacError, Result};

/// One spectral line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    pub frequency: f64,
    pub amplitude: f64,
}

/// Rectangular-window amplitude spectrum of `signal` sampled every `ts` seconds.
///
/// Bins run from 0 Hz to the Nyquist frequency. Interior bins are doubled so
/// that a sinusoid of amplitude `A` sitting exactly on a bin reads `A`.
pub fn amplitude_spectrum(signal: &[f64], ts: f64) -> Result<Vec<SpectralLine>> {
    if signal.is_empty() {
        return Err(PcacError::EmptySignal);
    }
    if !(ts > 0.0) {
        return Err(PcacError::InvalidConfig(
            "sample time must be positive".into(),
        ));
    }
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let df = 1.0 / (n as f64 * ts);
    Ok((0..=n / 2)
        .map(|k| {
            let mag = buf[k].norm() / n as f64;
            let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
            SpectralLine {
                frequency: k as f64 * df,
                amplitude: if edge { mag } else { 2.0 * mag },
            }
        })
        .collect())
}

/// Largest line above `min_freq` Hz.
pub fn dominant_peak(spectrum: &[SpectralLine], min_freq: f64) -> Option<SpectralLine> {
    spectrum
        .iter()
        .filter(|l| l.frequency > min_freq)
        .copied()
        .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
}
