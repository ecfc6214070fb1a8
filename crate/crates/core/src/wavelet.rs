//! Multi-level discrete wavelet transform of packet-size signals.
//!
//! The cascade convolves the signal with an orthonormal low/high-pass
//! filter pair and downsamples by two at each level; the level-j input is
//! the level-(j-1) approximation. Signals are zero-extended on the right to
//! the next power of two >= max(n, 2^J) so every requested level exists and
//! coefficient array lengths halve exactly. Filters wrap periodically at
//! the padded boundary, which keeps the transform orthogonal (for Haar the
//! wrap never engages).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormal wavelet family used for the filter cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    #[default]
    Haar,
    /// Daubechies 4-tap wavelet.
    Db2,
}

impl WaveletFamily {
    /// Low-pass (scaling) and high-pass (wavelet) analysis filters.
    pub fn filters(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            WaveletFamily::Haar => {
                let c = std::f64::consts::FRAC_1_SQRT_2;
                (vec![c, c], vec![c, -c])
            }
            WaveletFamily::Db2 => {
                let s3 = 3.0_f64.sqrt();
                let denom = 4.0 * std::f64::consts::SQRT_2;
                let g = vec![
                    (1.0 + s3) / denom,
                    (3.0 + s3) / denom,
                    (3.0 - s3) / denom,
                    (1.0 - s3) / denom,
                ];
                // Quadrature mirror: h[i] = (-1)^i g[L-1-i]
                let h = vec![g[3], -g[2], g[1], -g[0]];
                (g, h)
            }
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "haar" => Ok(WaveletFamily::Haar),
            "db2" => Ok(WaveletFamily::Db2),
            other => Err(Error::Config(format!("unknown wavelet family `{other}`"))),
        }
    }
}

impl std::fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WaveletFamily::Haar => write!(f, "haar"),
            WaveletFamily::Db2 => write!(f, "db2"),
        }
    }
}

/// Detail coefficients D_1..D_J plus the final approximation A_J for one
/// directional signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub levels: usize,
    /// `details[j-1]` holds D_j; every array is non-empty.
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
    pub family: WaveletFamily,
    /// Length the signal was zero-extended to before decomposition.
    pub padded_len: usize,
}

impl WaveletDecomposition {
    /// All coefficient arrays in feature order: D_1..D_J, then A_J.
    pub fn coefficient_arrays(&self) -> impl Iterator<Item = &[f64]> {
        self.details
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.approx.as_slice()))
    }

    /// Sum of squared coefficients over every array.
    pub fn total_energy(&self) -> f64 {
        self.coefficient_arrays()
            .map(|arr| arr.iter().map(|c| c * c).sum::<f64>())
            .sum()
    }
}

/// `floor(log2 n)` decomposition depth, lifted to a minimum of 1 so a
/// decomposition always exists (n = 1 would otherwise give 0).
pub fn optimal_levels(n: usize) -> Result<usize> {
    if n < 1 {
        return Err(Error::Argument("sequence length must be >= 1".into()));
    }
    Ok((n.ilog2() as usize).max(1))
}

/// Decompose `signal` into `levels` detail arrays plus a final approximation.
pub fn dwt(signal: &[f64], levels: usize, family: WaveletFamily) -> Result<WaveletDecomposition> {
    if levels < 1 {
        return Err(Error::Argument("decomposition depth must be >= 1".into()));
    }
    if levels > 32 {
        return Err(Error::Argument(format!(
            "decomposition depth {levels} too large (max 32)"
        )));
    }
    if signal.is_empty() {
        return Err(Error::Argument("signal must be non-empty".into()));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("signal contains non-finite values".into()));
    }

    let padded_len = signal.len().max(1usize << levels).next_power_of_two();
    let mut current = Vec::with_capacity(padded_len);
    current.extend_from_slice(signal);
    current.resize(padded_len, 0.0);

    let (g, h) = family.filters();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (approx, detail) = analyze_level(&current, &g, &h);
        details.push(detail);
        current = approx;
    }

    Ok(WaveletDecomposition {
        levels,
        details,
        approx: current,
        family,
        padded_len,
    })
}

/// One filter-bank step: convolve with both filters and keep every second
/// output sample. Input length is a power of two >= 2.
fn analyze_level(input: &[f64], g: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = input.len();
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for i in 0..g.len() {
            let v = input[(2 * k + i) % n];
            a += g[i] * v;
            d += h[i] * v;
        }
        approx[k] = a;
        detail[k] = d;
    }
    (approx, detail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn assert_close(got: f64, want: f64, tol: f64) {
        let scale = want.abs().max(1.0);
        assert!(
            (got - want).abs() <= tol * scale,
            "got {got}, want {want} (tol {tol})"
        );
    }

    #[test]
    fn haar_constant_four() {
        let dec = dwt(&[1.0, 1.0, 1.0, 1.0], 1, WaveletFamily::Haar).unwrap();
        assert_eq!(dec.approx.len(), 2);
        assert_eq!(dec.details[0].len(), 2);
        for &a in &dec.approx {
            assert_close(a, SQRT2, 1e-12);
        }
        for &d in &dec.details[0] {
            assert_close(d, 0.0, 1e-12);
        }
    }

    #[test]
    fn haar_two_zero() {
        let dec = dwt(&[2.0, 0.0], 1, WaveletFamily::Haar).unwrap();
        assert_eq!(dec.approx, vec![SQRT2]);
        assert_close(dec.details[0][0], SQRT2, 1e-12);
    }

    #[test]
    fn haar_constant_any_depth_has_zero_details() {
        // Power-of-two length: no padding boundary, details exactly zero.
        let signal = vec![7.5; 16];
        let dec = dwt(&signal, 4, WaveletFamily::Haar).unwrap();
        for d in &dec.details {
            assert!(d.iter().all(|&c| c == 0.0), "details {d:?}");
        }
    }

    #[test]
    fn haar_constant_padded_details_zero_in_interior() {
        // n = 6 pads to 8; only entries touching the pad boundary may be
        // nonzero at each level.
        let signal = vec![3.0; 6];
        let dec = dwt(&signal, 3, WaveletFamily::Haar).unwrap();
        for d in &dec.details {
            let nonzero = d.iter().filter(|&&c| c != 0.0).count();
            assert!(nonzero <= 1, "more than one boundary entry in {d:?}");
        }
    }

    #[test]
    fn short_signal_padded_to_depth() {
        let dec = dwt(&[5.0], 3, WaveletFamily::Haar).unwrap();
        assert_eq!(dec.padded_len, 8);
        assert_eq!(dec.details[0].len(), 4);
        assert_eq!(dec.details[1].len(), 2);
        assert_eq!(dec.details[2].len(), 1);
        assert_eq!(dec.approx.len(), 1);
    }

    #[test]
    fn optimal_levels_matches_floor_log2() {
        assert_eq!(optimal_levels(56).unwrap(), 5);
        assert_eq!(optimal_levels(4096).unwrap(), 12);
        assert_eq!(optimal_levels(1).unwrap(), 1);
        assert_eq!(optimal_levels(63).unwrap(), 5);
        assert_eq!(optimal_levels(64).unwrap(), 6);
        assert!(optimal_levels(0).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(dwt(&[1.0], 0, WaveletFamily::Haar).is_err());
        assert!(dwt(&[], 1, WaveletFamily::Haar).is_err());
        assert!(dwt(&[f64::NAN], 1, WaveletFamily::Haar).is_err());
        assert!(dwt(&[1.0], 40, WaveletFamily::Haar).is_err());
    }

    #[test]
    fn db2_filters_orthonormal() {
        let (g, h) = WaveletFamily::Db2.filters();
        let gg: f64 = g.iter().map(|c| c * c).sum();
        let hh: f64 = h.iter().map(|c| c * c).sum();
        let gh: f64 = g.iter().zip(&h).map(|(a, b)| a * b).sum();
        assert_close(gg, 1.0, 1e-15);
        assert_close(hh, 1.0, 1e-15);
        assert!(gh.abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn parseval_energy_conserved(
            signal in proptest::collection::vec(-1500.0f64..1500.0, 1..512),
            family in prop_oneof![Just(WaveletFamily::Haar), Just(WaveletFamily::Db2)],
        ) {
            let levels = optimal_levels(signal.len()).unwrap();
            let dec = dwt(&signal, levels, family).unwrap();
            let signal_energy: f64 = signal.iter().map(|v| v * v).sum();
            let coeff_energy = dec.total_energy();
            let scale = signal_energy.max(1e-12);
            prop_assert!(((coeff_energy - signal_energy) / scale).abs() <= 1e-9);
        }

        #[test]
        fn coefficient_lengths_halve(
            n in 1usize..300,
            levels in 1usize..8,
        ) {
            let signal = vec![1.0; n];
            let dec = dwt(&signal, levels, WaveletFamily::Haar).unwrap();
            let m = dec.padded_len;
            prop_assert!(m.is_power_of_two());
            prop_assert!(m >= n && m >= (1 << levels));
            for (j, d) in dec.details.iter().enumerate() {
                prop_assert_eq!(d.len(), m >> (j + 1));
            }
            prop_assert_eq!(dec.approx.len(), m >> levels);
        }

        #[test]
        fn linear_in_the_signal(
            signal in proptest::collection::vec(-100.0f64..100.0, 2..128),
            alpha in 0.125f64..8.0,
        ) {
            let levels = optimal_levels(signal.len()).unwrap();
            let base = dwt(&signal, levels, WaveletFamily::Haar).unwrap();
            let scaled_signal: Vec<f64> = signal.iter().map(|v| v * alpha).collect();
            let scaled = dwt(&scaled_signal, levels, WaveletFamily::Haar).unwrap();
            for (b, s) in base.coefficient_arrays().zip(scaled.coefficient_arrays()) {
                for (&cb, &cs) in b.iter().zip(s) {
                    let want = cb * alpha;
                    let tol = 1e-12 * want.abs().max(1e-9);
                    prop_assert!((cs - want).abs() <= tol);
                }
            }
        }
    }
}
