//! Dynamical invariants: Lyapunov spectra of flows and maps, the
//! Kaplan-Yorke dimension, and a data-driven largest-exponent estimate.

mod lyapunov;
mod rosenstein;

pub use lyapunov::{
    lyapunov_spectrum_map, lyapunov_spectrum_ode, LeConfig, LyapunovSpectrum, MatrixMap,
    TangentMap,
};
pub use rosenstein::{first_autocorrelation_zero, largest_le_from_data, RosensteinConfig};

use crate::error::{Error, Result};

/// Tolerance used when classifying an exponent as zero.
pub const ZERO_EXPONENT_TOL: f64 = 0.02;

/// Kaplan-Yorke dimension of a descending spectrum.
///
/// With `ky_index` the largest index whose partial sum is non-negative, the
/// dimension is `ky_index + S / |λ_{ky_index+1}|`. A negative leading
/// exponent gives 0; a partial sum that never turns negative gives the
/// number of exponents supplied.
pub fn kaplan_yorke_dimension(exponents: &[f64]) -> Result<f64> {
    if exponents.is_empty() {
        return Err(Error::invalid("Kaplan-Yorke dimension of an empty spectrum"));
    }
    if exponents.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("spectrum must be sorted in descending order"));
    }
    let mut partial = 0.0;
    for (ky_index, &lambda) in exponents.iter().enumerate() {
        if partial + lambda < 0.0 {
            return Ok(ky_index as f64 + partial / lambda.abs());
        }
        partial += lambda;
    }
    Ok(exponents.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_dimensions() {
        let d = kaplan_yorke_dimension(&[0.9, 0.0, -14.57]).unwrap();
        assert!((d - (2.0 + 0.9 / 14.57)).abs() < 1e-12);
        assert_eq!(kaplan_yorke_dimension(&[-1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(kaplan_yorke_dimension(&[1.0, -0.5]).unwrap(), 2.0);
        assert_eq!(kaplan_yorke_dimension(&[0.5, -1.0]).unwrap(), 1.5);
    }

    #[test]
    fn rejects_empty_and_unsorted() {
        assert!(kaplan_yorke_dimension(&[]).is_err());
        assert!(kaplan_yorke_dimension(&[-1.0, 1.0]).is_err());
    }
}
