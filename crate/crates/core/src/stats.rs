//! Normal distribution helpers.

use std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF, `0.5 * erfc(-z / sqrt 2)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Phi(z)`, accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson integration of the density from 0 to |z|.
    fn cdf_by_quadrature(z: f64) -> f64 {
        let n = 20_000;
        let h = z.abs() / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(z.abs());
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        let half = s * h / 3.0;
        if z >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    #[test]
    fn cdf_matches_quadrature() {
        for &z in &[-8.0, -3.3, -1.0, -0.2, 0.0, 0.7, 2.0, 5.5] {
            assert!((normal_cdf(z) - cdf_by_quadrature(z)).abs() < 1e-12, "z = {z}");
        }
        assert!((normal_cdf(2.0) - 0.977_249_868_051_820_8).abs() < 1e-15);
    }

    #[test]
    fn sf_complements_cdf() {
        for i in -100..=100 {
            let z = i as f64 * 0.1;
            assert!((normal_cdf(z) + normal_sf(z) - 1.0).abs() < 1e-15);
        }
    }
}
