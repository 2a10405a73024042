//! Shapiro-Wilk normality test, Royston's approximation (AS R94).
//!
//! Valid for 3 <= n <= 5000. Coefficients come from normal order-statistic
//! scores with polynomial end corrections; the p-value uses Royston's
//! normalizing transforms of W.

use statrs::distribution::{ContinuousCDF, Normal};

use super::PreprocessError;

/// Returns `(W, p)`; `W` in (0, 1], `p` in [0, 1].
pub fn shapiro_wilk(x: &[f64]) -> Result<(f64, f64), PreprocessError> {
    let n = x.len();
    if !(3..=5000).contains(&n) {
        return Err(PreprocessError::SampleSizeOutOfRange { got: n });
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mean = sorted.iter().sum::<f64>() / n as f64;
    let ss: f64 = sorted.iter().map(|v| (v - mean).powi(2)).sum();
    if ss <= 0.0 {
        return Err(PreprocessError::ZeroVariance);
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let nf = n as f64;

    // Blom-type normal scores.
    let m: Vec<f64> = (1..=n)
        .map(|i| normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
        .collect();
    let m_sum_sq: f64 = m.iter().map(|v| v * v).sum();

    let mut a = vec![0.0; n];
    if n == 3 {
        a[0] = -std::f64::consts::FRAC_1_SQRT_2;
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let u = 1.0 / nf.sqrt();
        let c_n = m[n - 1] / m_sum_sq.sqrt();
        let a_n = -2.706056 * u.powi(5) + 4.434685 * u.powi(4) - 2.071190 * u.powi(3)
            - 0.147981 * u.powi(2)
            + 0.221157 * u
            + c_n;
        if n <= 5 {
            let phi = (m_sum_sq - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * a_n * a_n);
            let scale = phi.sqrt();
            for i in 1..n - 1 {
                a[i] = m[i] / scale;
            }
            a[n - 1] = a_n;
            a[0] = -a_n;
        } else {
            let c_n1 = m[n - 2] / m_sum_sq.sqrt();
            let a_n1 = -3.582633 * u.powi(5) + 5.682633 * u.powi(4) - 1.752461 * u.powi(3)
                - 0.293762 * u.powi(2)
                + 0.042981 * u
                + c_n1;
            let phi = (m_sum_sq - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2])
                / (1.0 - 2.0 * a_n * a_n - 2.0 * a_n1 * a_n1);
            let scale = phi.sqrt();
            for i in 2..n - 2 {
                a[i] = m[i] / scale;
            }
            a[n - 1] = a_n;
            a[n - 2] = a_n1;
            a[0] = -a_n;
            a[1] = -a_n1;
        }
    }

    let num: f64 = a.iter().zip(&sorted).map(|(ai, xi)| ai * xi).sum();
    let w = (num * num / ss).min(1.0);

    let p = if n == 3 {
        let p = 6.0 / std::f64::consts::PI * ((w.sqrt()).asin() - (0.75_f64.sqrt()).asin());
        p.clamp(0.0, 1.0)
    } else if w >= 1.0 {
        1.0
    } else if n <= 11 {
        let g = -2.273 + 0.459 * nf;
        let inner = g - (1.0 - w).ln();
        if inner <= 0.0 {
            0.0
        } else {
            let y = -inner.ln();
            let mu = 0.5440 - 0.39978 * nf + 0.025054 * nf * nf - 0.0006714 * nf.powi(3);
            let sigma = (1.3822 - 0.77857 * nf + 0.062767 * nf * nf - 0.0020322 * nf.powi(3)).exp();
            normal.sf((y - mu) / sigma)
        }
    } else {
        let ln_n = nf.ln();
        let y = (1.0 - w).ln();
        let mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n * ln_n + 0.0038915 * ln_n.powi(3);
        let sigma = (-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n * ln_n).exp();
        normal.sf((y - mu) / sigma)
    };

    Ok((w, p.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn sample_size_bounds() {
        assert!(matches!(
            shapiro_wilk(&[1.0, 2.0]),
            Err(PreprocessError::SampleSizeOutOfRange { got: 2 })
        ));
        let big = vec![0.0; 5001];
        assert!(matches!(
            shapiro_wilk(&big),
            Err(PreprocessError::SampleSizeOutOfRange { got: 5001 })
        ));
    }

    #[test]
    fn normal_quantile_sequence_scores_high() {
        // reference oracle (scipy.stats.shapiro): W = 0.998474069803, p ~ 1
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 50;
        let seq: Vec<f64> = (1..=n)
            .map(|i| normal.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25)))
            .collect();
        let (w, p) = shapiro_wilk(&seq).unwrap();
        assert!(w > 0.99, "W = {w}");
        assert!((w - 0.998_474_069_803).abs() < 1e-6, "W = {w}");
        assert!(p > 0.99);
    }

    #[test]
    fn uniform_grid_rejected() {
        // reference oracle: W = 0.954724744958, p = 0.001721722194
        let seq: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let (w, p) = shapiro_wilk(&seq).unwrap();
        assert!((w - 0.954_724_744_958).abs() < 1e-6, "W = {w}");
        assert!(p < 0.05, "p = {p}");
        assert!((p - 0.001_721_722_194).abs() < 1e-4, "p = {p}");
    }

    #[test]
    fn skewed_sample_matches_reference() {
        // reference oracle: W = 0.744002158076, p = 0.002315180565
        let samp = [1.0, 1.2, 1.3, 1.5, 1.8, 2.0, 2.4, 3.1, 4.5, 6.0, 9.5, 15.0];
        let (w, p) = shapiro_wilk(&samp).unwrap();
        assert!((w - 0.744_002_158_076).abs() < 1e-6, "W = {w}");
        assert!((p - 0.002_315_180_565).abs() < 1e-4, "p = {p}");
    }

    #[test]
    fn exponential_sample_matches_reference() {
        // reference oracle: W = 0.782753966968, p = 0.000483251797
        let samp = [
            1.415059, 2.050407, 1.137097, 1.79022, 0.413066, 6.767275, 0.019507, 5.618432,
            1.150666, 0.601068, 1.082272, 0.624291, 1.79954, 2.147401, 3.7685, 0.444143,
            6.289347, 1.471715, 0.696746, 1.76713,
        ];
        let (w, p) = shapiro_wilk(&samp).unwrap();
        assert!((w - 0.782_753_966_968).abs() < 1e-6, "W = {w}");
        assert!((p - 0.000_483_251_797).abs() < 1e-4, "p = {p}");
    }

    #[test]
    fn constant_sample_rejected() {
        assert_eq!(shapiro_wilk(&[2.0; 10]).unwrap_err(), PreprocessError::ZeroVariance);
    }
}
