//! Radix-2 fast Fourier transform, small and self-contained.
//!
//! The vibration monitor needs magnitude spectra of fixed 1024-sample
//! frames, so only power-of-two lengths are supported. The transform is
//! the classic in-place decimation-in-time form: bit-reversal permutation
//! followed by log2(N) butterfly passes.

use super::MonitorError;

/// Minimum window the spectral monitor accepts. Shorter frames have too
/// little frequency resolution to separate the motor tones.
pub const MIN_WINDOW: usize = 8;

/// In-place complex FFT: on return `re`/`im` hold X_k = Σ_n x_n·e^(−2πi·kn/N).
///
/// Both slices must have the same power-of-two length ≥ 8.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) -> Result<(), MonitorError> {
    let n = re.len();
    if im.len() != n {
        return Err(MonitorError::MismatchedLengths {
            left: n,
            right: im.len(),
        });
    }
    if n < MIN_WINDOW || !n.is_power_of_two() {
        return Err(MonitorError::BadWindowLength { n });
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    // Butterfly passes: width doubles each stage.
    let mut width = 2;
    while width <= n {
        let half = width / 2;
        let step = -std::f64::consts::TAU / width as f64;
        for start in (0..n).step_by(width) {
            for k in 0..half {
                let angle = step * k as f64;
                let (wr, wi) = (angle.cos(), angle.sin());
                let a = start + k;
                let b = a + half;
                let tr = wr * re[b] - wi * im[b];
                let ti = wr * im[b] + wi * re[b];
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        width *= 2;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;

    /// Textbook O(N²) DFT, evaluated with its own trig calls — the oracle
    /// the fast transform must reproduce.
    fn naive_dft(signal_re: &[f64], signal_im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = signal_re.len();
        let mut out_re = vec![0.0; n];
        let mut out_im = vec![0.0; n];
        for k in 0..n {
            for t in 0..n {
                let angle = -std::f64::consts::TAU * (k as f64) * (t as f64) / n as f64;
                let (c, s) = (angle.cos(), angle.sin());
                out_re[k] += signal_re[t] * c - signal_im[t] * s;
                out_im[k] += signal_re[t] * s + signal_im[t] * c;
            }
        }
        (out_re, out_im)
    }

    fn random_signal(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = Rng64::new(seed);
        let re = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let im = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        (re, im)
    }

    #[test]
    fn zero_signal_transforms_to_zero() {
        let mut re = vec![0.0; 64];
        let mut im = vec![0.0; 64];
        fft_in_place(&mut re, &mut im).unwrap();
        assert!(re.iter().chain(im.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn impulse_transforms_to_a_flat_spectrum() {
        let mut re = vec![0.0; 16];
        let mut im = vec![0.0; 16];
        re[0] = 1.0;
        fft_in_place(&mut re, &mut im).unwrap();
        for k in 0..16 {
            assert!((re[k] - 1.0).abs() < 1e-12 && im[k].abs() < 1e-12, "bin {k}");
        }
    }

    #[test]
    fn single_cosine_concentrates_at_its_bin() {
        let n = 64;
        let mut re: Vec<f64> = (0..n)
            .map(|t| (std::f64::consts::TAU * 5.0 * t as f64 / n as f64).cos())
            .collect();
        let mut im = vec![0.0; n];
        fft_in_place(&mut re, &mut im).unwrap();
        for k in 0..n {
            let mag = (re[k] * re[k] + im[k] * im[k]).sqrt();
            let expect = if k == 5 || k == n - 5 { 32.0 } else { 0.0 };
            assert!((mag - expect).abs() < 1e-9, "bin {k}: {mag}");
        }
    }

    #[test]
    fn matches_the_naive_dft_at_all_required_sizes() {
        for (n, seed) in [(8usize, 1u64), (64, 2), (1024, 3)] {
            let (re0, im0) = random_signal(n, seed);
            let (oracle_re, oracle_im) = naive_dft(&re0, &im0);
            let mut re = re0.clone();
            let mut im = im0.clone();
            fft_in_place(&mut re, &mut im).unwrap();
            for k in 0..n {
                assert!(
                    (re[k] - oracle_re[k]).abs() < 1e-9,
                    "N={n} bin {k} re: {} vs {}",
                    re[k],
                    oracle_re[k]
                );
                assert!(
                    (im[k] - oracle_im[k]).abs() < 1e-9,
                    "N={n} bin {k} im: {} vs {}",
                    im[k],
                    oracle_im[k]
                );
            }
        }
    }

    #[test]
    fn transform_is_linear_on_complex_inputs() {
        let n = 64;
        let (x_re, x_im) = random_signal(n, 10);
        let (y_re, y_im) = random_signal(n, 11);
        let (a, b) = (2.5, -1.25);

        let mut combo_re: Vec<f64> = (0..n).map(|t| a * x_re[t] + b * y_re[t]).collect();
        let mut combo_im: Vec<f64> = (0..n).map(|t| a * x_im[t] + b * y_im[t]).collect();
        fft_in_place(&mut combo_re, &mut combo_im).unwrap();

        let (mut xr, mut xi) = (x_re, x_im);
        fft_in_place(&mut xr, &mut xi).unwrap();
        let (mut yr, mut yi) = (y_re, y_im);
        fft_in_place(&mut yr, &mut yi).unwrap();

        for k in 0..n {
            let er = a * xr[k] + b * yr[k];
            let ei = a * xi[k] + b * yi[k];
            assert!((combo_re[k] - er).abs() < 1e-9, "bin {k}");
            assert!((combo_im[k] - ei).abs() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn parseval_energy_identity_holds() {
        let n = 1024;
        let (re0, im0) = random_signal(n, 77);
        let time_energy: f64 = (0..n).map(|t| re0[t] * re0[t] + im0[t] * im0[t]).sum();
        let mut re = re0;
        let mut im = im0;
        fft_in_place(&mut re, &mut im).unwrap();
        let freq_energy: f64 =
            (0..n).map(|k| re[k] * re[k] + im[k] * im[k]).sum::<f64>() / n as f64;
        assert!(
            (time_energy - freq_energy).abs() <= 1e-6 * time_energy,
            "{time_energy} vs {freq_energy}"
        );
    }

    #[test]
    fn rejects_bad_window_lengths() {
        let mut re = vec![0.0; 12];
        let mut im = vec![0.0; 12];
        assert!(matches!(
            fft_in_place(&mut re, &mut im),
            Err(MonitorError::BadWindowLength { n: 12 })
        ));
        let mut re = vec![0.0; 4];
        let mut im = vec![0.0; 4];
        assert!(matches!(
            fft_in_place(&mut re, &mut im),
            Err(MonitorError::BadWindowLength { n: 4 })
        ));
        let mut re = vec![0.0; 8];
        let mut im = vec![0.0; 7];
        assert!(fft_in_place(&mut re, &mut im).is_err());
    }
}
