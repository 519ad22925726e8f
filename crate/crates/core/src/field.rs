use crate::error::{Error, Result};
use crate::hermite::eigenvalue_sq;

pub type C64 = num_complex::Complex64;

/// A field `u = sum_{n=0}^{N} c_n h_n` stored by its Hermite coefficients.
///
/// The inner product is the real one used throughout: `<u, v> = Re sum c_n conj(d_n)`,
/// identifying `C` with `R^2` mode by mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            coeffs: vec![C64::new(0.0, 0.0); n_modes + 1],
        }
    }

    /// Wraps a coefficient vector; rejects empty and non-finite input.
    pub fn from_coeffs(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Config("a field needs at least mode 0".into()));
        }
        if !coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok(Self { coeffs })
    }

    /// Single-mode field `c * h_n`.
    pub fn mode(n_modes: usize, n: usize, c: C64) -> Self {
        let mut f = Self::zeros(n_modes);
        f.coeffs[n] = c;
        f
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Real inner product `Re sum c_n conj(d_n)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(c, d)| (c * d.conj()).re)
            .sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `|(-H)^{1/2} u|_{L^2}^2 = sum lambda_n^2 |c_n|^2`.
    pub fn h1_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| eigenvalue_sq(n) * c.norm_sqr())
            .sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// `self + a * other`; both fields must carry the same mode count.
    pub fn axpy(&self, a: C64, other: &Self) -> Self {
        assert_eq!(self.coeffs.len(), other.coeffs.len(), "mode counts differ");
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(c, d)| c + a * d)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// Distance in the `E_N` (that is `L^2`) norm.
    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).l2_norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_product_is_real_part() {
        let u = SpectralField::from_coeffs(vec![C64::new(1.0, 2.0)]).unwrap();
        let v = SpectralField::from_coeffs(vec![C64::new(3.0, -1.0)]).unwrap();
        // Re((1+2i)(3+i)) = Re(1 + 7i) = 1
        assert_eq!(u.inner(&v), 1.0);
    }

    #[test]
    fn h1_weights_modes_by_eigenvalue() {
        let mut u = SpectralField::zeros(4);
        u.coeffs_mut()[4] = C64::new(2.0, 0.0);
        assert_eq!(u.h1_norm_sq(), 9.0 * 4.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SpectralField::from_coeffs(vec![C64::new(f64::NAN, 0.0)]).is_err());
    }
}
