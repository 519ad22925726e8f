//! Hermite eigenbasis of `H = d^2/dx^2 - x^2` and the quadrature that makes the
//! cubic nonlinearity exact.
//!
//! The eigenfunctions `h_n` (Hermite functions) satisfy `H h_n = -lambda_n^2 h_n`
//! with `lambda_n^2 = 2n + 1` and are orthonormal in `L^2(R)`. Products of two of
//! them are `polynomial * exp(-x^2)`, products of four are `polynomial * exp(-2x^2)`.
//! A single Gauss-Hermite rule of size `M` serves both classes: for an integrand
//! `q(x) exp(-x^2 / a^2)` with `deg q <= 2M - 1`, evaluating at the rescaled nodes
//! `a * y_j` with weights `a * w_j e^{y_j^2}` is exact. The grid tabulates the
//! basis at the unit-scale nodes (synthesis / analysis, exact round trip) and at
//! the `1/sqrt(2)`-scale nodes (nonlinearity, quartic functionals).
//!
//! Everything is evaluated through the normalized Hermite-function recurrence
//! `h_{n+1}(x) = x sqrt(2/(n+1)) h_n(x) - sqrt(n/(n+1)) h_{n-1}(x)`, which stays
//! bounded where the raw Hermite polynomials overflow near n ~ 20.

use crate::error::{Error, Result};
use crate::field::{C64, SpectralField};

/// `lambda_n^2 = 2n + 1`, the spectral weight of mode `n`.
#[inline]
pub fn eigenvalue_sq(n: usize) -> f64 {
    (2 * n + 1) as f64
}

/// Hermite-function values `h_0(x) .. h_nmax(x)` by the normalized recurrence.
pub fn hermite_values(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let h0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(h0);
    if n_max >= 1 {
        out.push(std::f64::consts::SQRT_2 * x * h0);
    }
    for n in 1..n_max {
        let next = x * (2.0 / (n as f64 + 1.0)).sqrt() * out[n]
            - (n as f64 / (n as f64 + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// Gauss-Hermite nodes for weight `exp(-y^2)` together with the *absorbed*
/// weights `w_j e^{y_j^2}` (computed via the Christoffel sum of Hermite-function
/// squares, which never overflows). `sum_j W_j f(y_j)` integrates
/// `f = q(x) e^{-x^2}` exactly for `deg q <= 2M - 1`.
fn gauss_hermite_absorbed(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0_f64; m];
    let n_half = (m + 1) / 2;
    let mf = m as f64;
    let anu = 2.0 * mf + 1.0;
    for i in 0..n_half {
        // Numerical Recipes style initial guesses, largest root first.
        let mut z: f64 = match i {
            0 => anu.sqrt() - 1.85575 * anu.powf(-1.0 / 6.0),
            1 => nodes[m - 1] - 1.14 * mf.powf(0.426) / nodes[m - 1],
            2 => 1.86 * nodes[m - 2] - 0.86 * nodes[m - 1],
            3 => 1.91 * nodes[m - 3] - 0.91 * nodes[m - 2],
            _ => 2.0 * nodes[m - i] - nodes[m - i + 1],
        };
        for _ in 0..200 {
            let h = hermite_values(m, z);
            // psi_M'(z) = sqrt(2M) psi_{M-1}(z) - z psi_M(z)
            let dpsi = (2.0 * mf).sqrt() * h[m - 1] - z * h[m];
            let dz = h[m] / dpsi;
            z -= dz;
            if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        nodes[m - 1 - i] = z;
        nodes[i] = -z;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&y| {
            let h = hermite_values(m - 1, y);
            1.0 / h.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (nodes, weights)
}

/// Scaled Gauss-Hermite grid with tabulated Hermite functions.
///
/// Immutable after construction; all operations borrow it read-only.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    n_modes: usize,
    quad_size: usize,
    base_nodes: Vec<f64>,
    absorbed: Vec<f64>,
    /// (n_modes + 1) x quad_size, row-major: `basis[n * M + j] = h_n(base_nodes[j])`
    basis: Vec<f64>,
    quartic_nodes: Vec<f64>,
    quartic_weights: Vec<f64>,
    quartic_basis: Vec<f64>,
}

impl QuadratureGrid {
    /// Requires `quad_size >= 2 n_modes + 2` so quartic basis products integrate
    /// exactly (degree up to `4 n_modes <= 2 quad_size - 1`). Capped at 600:
    /// beyond that the outermost nodes pass the underflow horizon of
    /// `h_0 ~ e^{-x^2/2}` and the root finder loses them.
    pub fn build(n_modes: usize, quad_size: usize) -> Result<Self> {
        if quad_size < 2 * n_modes + 2 {
            return Err(Error::Config(format!(
                "quad_size {} too small for n_modes {}: need at least {}",
                quad_size,
                n_modes,
                2 * n_modes + 2
            )));
        }
        if quad_size > 600 {
            return Err(Error::Config(format!(
                "quad_size {quad_size} exceeds the supported maximum of 600"
            )));
        }
        let (base_nodes, absorbed) = gauss_hermite_absorbed(quad_size);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let quartic_nodes: Vec<f64> = base_nodes.iter().map(|y| y * inv_sqrt2).collect();
        let quartic_weights: Vec<f64> = absorbed.iter().map(|w| w * inv_sqrt2).collect();
        let tabulate = |xs: &[f64]| -> Vec<f64> {
            let mut b = vec![0.0; (n_modes + 1) * quad_size];
            for (j, &x) in xs.iter().enumerate() {
                for (n, v) in hermite_values(n_modes, x).into_iter().enumerate() {
                    b[n * quad_size + j] = v;
                }
            }
            b
        };
        let basis = tabulate(&base_nodes);
        let quartic_basis = tabulate(&quartic_nodes);
        Ok(Self {
            n_modes,
            quad_size,
            base_nodes,
            absorbed,
            basis,
            quartic_nodes,
            quartic_weights,
            quartic_basis,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn quad_size(&self) -> usize {
        self.quad_size
    }

    /// Synthesis nodes (unit scale): pairwise products integrate exactly here.
    pub fn nodes(&self) -> &[f64] {
        &self.base_nodes
    }

    /// Weights matching [`Self::nodes`] for plain `dx` integrals.
    pub fn weights(&self) -> &[f64] {
        &self.absorbed
    }

    /// Nodes of the `1/sqrt(2)` family where quartic products integrate exactly.
    pub fn quartic_nodes(&self) -> &[f64] {
        &self.quartic_nodes
    }

    pub fn quartic_weights(&self) -> &[f64] {
        &self.quartic_weights
    }

    /// Tabulated `h_n` on the synthesis nodes.
    pub fn basis_row(&self, n: usize) -> &[f64] {
        &self.basis[n * self.quad_size..(n + 1) * self.quad_size]
    }

    pub fn quartic_basis_row(&self, n: usize) -> &[f64] {
        &self.quartic_basis[n * self.quad_size..(n + 1) * self.quad_size]
    }

    fn check_modes(&self, u: &SpectralField) -> Result<()> {
        if u.n_modes() > self.n_modes {
            return Err(Error::ModeMismatch {
                field: u.n_modes(),
                grid: self.n_modes,
            });
        }
        Ok(())
    }

    fn synthesize_on(&self, u: &SpectralField, basis: &[f64]) -> Vec<C64> {
        let m = self.quad_size;
        let mut vals = vec![C64::new(0.0, 0.0); m];
        for (n, &c) in u.coeffs().iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let row = &basis[n * m..(n + 1) * m];
            for (v, &b) in vals.iter_mut().zip(row) {
                *v += c * b;
            }
        }
        vals
    }

    /// Point values `u(y_j) = sum_n c_n h_n(y_j)` on the synthesis nodes.
    pub fn synthesize(&self, u: &SpectralField) -> Result<Vec<C64>> {
        self.check_modes(u)?;
        Ok(self.synthesize_on(u, &self.basis))
    }

    /// Point values on the quartic-family nodes.
    pub fn synthesize_quartic(&self, u: &SpectralField) -> Result<Vec<C64>> {
        self.check_modes(u)?;
        Ok(self.synthesize_on(u, &self.quartic_basis))
    }

    /// Coefficients `c_n = int v h_n dx` by quadrature on the synthesis nodes;
    /// exact (and the inverse of [`Self::synthesize`]) for `v` in `E_N`.
    pub fn analyze(&self, values: &[C64]) -> Result<SpectralField> {
        if values.len() != self.quad_size {
            return Err(Error::LengthMismatch {
                expected: self.quad_size,
                got: values.len(),
            });
        }
        let mut coeffs = Vec::with_capacity(self.n_modes + 1);
        for n in 0..=self.n_modes {
            let row = self.basis_row(n);
            let mut acc = C64::new(0.0, 0.0);
            for ((v, &b), &w) in values.iter().zip(row).zip(&self.absorbed) {
                acc += v * (b * w);
            }
            coeffs.push(acc);
        }
        SpectralField::from_coeffs(coeffs)
    }

    /// Projection of point values on the quartic-family nodes back onto `E_N`;
    /// exact for integrands in the `poly * exp(-2x^2)` class, i.e. for the
    /// pointwise cubic of an `E_N` field.
    pub fn project_quartic(&self, values: &[C64]) -> Result<SpectralField> {
        if values.len() != self.quad_size {
            return Err(Error::LengthMismatch {
                expected: self.quad_size,
                got: values.len(),
            });
        }
        let mut coeffs = Vec::with_capacity(self.n_modes + 1);
        for n in 0..=self.n_modes {
            let row = self.quartic_basis_row(n);
            let mut acc = C64::new(0.0, 0.0);
            for ((v, &b), &w) in values.iter().zip(row).zip(&self.quartic_weights) {
                acc += v * (b * w);
            }
            coeffs.push(acc);
        }
        SpectralField::from_coeffs(coeffs)
    }

    /// `int |u|^4 dx`, exact.
    pub fn quartic_integral(&self, u: &SpectralField) -> Result<f64> {
        let vals = self.synthesize_quartic(u)?;
        Ok(vals
            .iter()
            .zip(&self.quartic_weights)
            .map(|(v, &w)| w * v.norm_sqr() * v.norm_sqr())
            .sum())
    }

    /// Nodes, weights and basis for the envelope class `poly * exp(-p x^2 / 2)`:
    /// nodes `scale * y_j`, weights `scale * W_j` with `scale = sqrt(2/p)`.
    /// Exact for `|u|^p` with even `p` once `p * n_modes <= 2 quad_size - 1`.
    pub fn scaled_family(&self, scale: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.quad_size;
        let nodes: Vec<f64> = self.base_nodes.iter().map(|y| y * scale).collect();
        let weights: Vec<f64> = self.absorbed.iter().map(|w| w * scale).collect();
        let mut basis = vec![0.0; (self.n_modes + 1) * m];
        for (j, &x) in nodes.iter().enumerate() {
            for (n, v) in hermite_values(self.n_modes, x).into_iter().enumerate() {
                basis[n * m + j] = v;
            }
        }
        (nodes, weights, basis)
    }

    /// Largest deviation of the discrete Gram matrix from the identity.
    pub fn gram_max_deviation(&self) -> f64 {
        let mut worst = 0.0_f64;
        for mth in 0..=self.n_modes {
            let rm = self.basis_row(mth);
            for nth in mth..=self.n_modes {
                let rn = self.basis_row(nth);
                let g: f64 = rm
                    .iter()
                    .zip(rn)
                    .zip(&self.absorbed)
                    .map(|((a, b), &w)| w * a * b)
                    .sum();
                let target = if mth == nth { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Smooth spectral cutoff weights `s_n = chi((2n+1)/(2N+1))`.
///
/// The profile is 1 on the lower half of the spectrum, 0 at and beyond the top,
/// bridged by the standard smooth bump `exp(1 - 1/(1-q^2))`, `q = 2t - 1`.
/// Any admissible `chi` gives the same theorems, so a custom profile can be
/// supplied through [`CutoffProfile::from_values`].
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffProfile {
    values: Vec<f64>,
}

/// The bridge `chi(t)` for `t >= 0`: 1 on `[0, 1/2]`, 0 on `[1, inf)`.
pub fn chi_bridge(t: f64) -> f64 {
    let t = t.abs();
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let q = 2.0 * t - 1.0;
        (1.0 - 1.0 / (1.0 - q * q)).exp()
    }
}

impl CutoffProfile {
    pub fn standard(n_modes: usize) -> Self {
        let denom = (2 * n_modes + 1) as f64;
        let values = (0..=n_modes)
            .map(|n| chi_bridge((2 * n + 1) as f64 / denom))
            .collect();
        Self { values }
    }

    /// Custom profile; must start at 1, be non-increasing and stay in [0, 1].
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Config("cutoff profile must start at s_0 = 1".into()));
        }
        for pair in values.windows(2) {
            if pair[1] > pair[0] + 1e-12 {
                return Err(Error::Config("cutoff profile must be non-increasing".into()));
            }
        }
        if values.iter().any(|&s| !(0.0..=1.0).contains(&s) || !s.is_finite()) {
            return Err(Error::Config("cutoff weights must lie in [0, 1]".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_modes(&self) -> usize {
        self.values.len() - 1
    }
}

/// `S_N u`: multiply coefficient `n` by the profile weight `s_n`.
pub fn apply_smooth_cutoff(u: &SpectralField, profile: &CutoffProfile) -> SpectralField {
    assert_eq!(
        u.n_modes(),
        profile.n_modes(),
        "cutoff profile length must match the field"
    );
    let coeffs = u
        .coeffs()
        .iter()
        .zip(profile.values())
        .map(|(c, &s)| c * s)
        .collect();
    SpectralField::from_coeffs(coeffs).expect("cutoff preserves finiteness")
}

/// `(-H)^{s/2} u`: multiply coefficient `n` by `(lambda_n^2)^{s/2}`.
pub fn apply_fractional_power(u: &SpectralField, s: f64) -> SpectralField {
    let coeffs = u
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| c * eigenvalue_sq(n).powf(0.5 * s))
        .collect();
    SpectralField::from_coeffs(coeffs).expect("fractional power preserves finiteness")
}
