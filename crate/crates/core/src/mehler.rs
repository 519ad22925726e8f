//! Closed-form Mehler kernel of the semigroup `exp(t (i + gamma) H)` and the
//! smoothing-estimate scans used to verify it.
//!
//! The kernel factorizes into Gaussians,
//!
//! ```text
//! K_t(x, y) = sqrt(delta / pi) e^{-(beta - delta) x^2} e^{-delta (x - y)^2} e^{-(beta - delta) y^2},
//! delta = -1 / (2 i sin(2 (gamma i - 1) t)),
//! beta  = -cos(2 (gamma i - 1) t) / (2 i sin(2 (gamma i - 1) t)),
//! ```
//!
//! with `Re delta > 0` and `Re (beta - delta) > 0` exactly for `0 < t < pi/4`;
//! outside that window the semigroup property splits `t` into admissible
//! sub-steps. The square root takes the principal branch, which the spectral
//! representation (branch-free) cross-validates: a wrong branch would flip the
//! sign of every applied field.

use crate::error::{Error, Result};
use crate::field::{C64, SpectralField};
use crate::hermite::{eigenvalue_sq, QuadratureGrid};
use crate::observables::lp_norm;

#[derive(Clone, Copy, Debug)]
pub struct KernelParams {
    pub t: f64,
    pub gamma: f64,
    pub delta: C64,
    pub beta: C64,
}

/// Gaussian factor parameters at time `t`; only `0 < t < pi/4` is admissible.
pub fn kernel_params(t: f64, gamma: f64) -> Result<KernelParams> {
    if !(t > 0.0 && t < std::f64::consts::FRAC_PI_4) {
        return Err(Error::KernelTimeOutOfRange { t });
    }
    // i sin(2(gamma i - 1)t) = -sinh(2 gamma t) cos(2t) - i cosh(2 gamma t) sin(2t)
    let isin = C64::new(
        -(2.0 * gamma * t).sinh() * (2.0 * t).cos(),
        -(2.0 * gamma * t).cosh() * (2.0 * t).sin(),
    );
    // cos(2(gamma i - 1)t) = cosh(2 gamma t) cos(2t) + i sinh(2 gamma t) sin(2t)
    let cosv = C64::new(
        (2.0 * gamma * t).cosh() * (2.0 * t).cos(),
        (2.0 * gamma * t).sinh() * (2.0 * t).sin(),
    );
    let delta = -0.5 / isin;
    let beta = -0.5 * cosv / isin;
    debug_assert!(delta.re > 0.0, "Re delta must be positive on (0, pi/4)");
    debug_assert!((beta - delta).re > 0.0, "Re (beta - delta) must be positive");
    Ok(KernelParams {
        t,
        gamma,
        delta,
        beta,
    })
}

/// `K_t(x, y)`, symmetric in its arguments.
pub fn kernel_value(p: &KernelParams, x: f64, y: f64) -> C64 {
    let edge = p.beta - p.delta;
    let pref = (p.delta / std::f64::consts::PI).sqrt();
    pref * (-(edge * (x * x + y * y)) - p.delta * (x - y) * (x - y)).exp()
}

/// Spectral application: `c_n -> e^{-(i+gamma) lambda_n^2 t} c_n`, any `t >= 0`.
pub fn apply_semigroup_spectral(u: &SpectralField, t: f64, gamma: f64) -> SpectralField {
    let coeffs = u
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| c * (C64::new(-gamma, -1.0) * eigenvalue_sq(n) * t).exp())
        .collect();
    SpectralField::from_coeffs(coeffs).expect("semigroup contracts")
}

/// Kernel-quadrature application of the semigroup, splitting `t` into sub-steps
/// of at most `pi/8` so each stays well inside the admissible window.
///
/// The quadrature over-resolves relative to the synthesis grid: the outermost
/// analysis nodes carry weights that grow like `e^{y^2/2}` and would amplify
/// the kernel-tail error of a minimal rule far above the 1e-6 contract.
pub fn apply_semigroup_kernel(
    u: &SpectralField,
    t: f64,
    gamma: f64,
    grid: &QuadratureGrid,
) -> Result<SpectralField> {
    if !(t > 0.0) {
        return Err(Error::KernelTimeOutOfRange { t });
    }
    let substeps = (t / std::f64::consts::FRAC_PI_8).ceil().max(1.0) as usize;
    let dt = t / substeps as f64;
    let params = kernel_params(dt, gamma)?;
    let n = grid.n_modes();
    let fine = QuadratureGrid::build(n, grid.quad_size().max(8 * n + 72))?;
    let nodes = fine.nodes();
    let weights = fine.weights();
    let mut values = fine.synthesize(u)?;
    let mut next = vec![C64::new(0.0, 0.0); values.len()];
    for _ in 0..substeps {
        for (i, &x) in nodes.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for ((&y, v), &w) in nodes.iter().zip(&values).zip(weights) {
                acc += kernel_value(&params, x, y) * v * w;
            }
            next[i] = acc;
        }
        std::mem::swap(&mut values, &mut next);
    }
    fine.analyze(&values)
}

/// Scan of `t -> |e^{t(i+gamma)H} f|_{L^r} / (t^{-kappa} |f|_{L^s})` over `t_grid`.
///
/// For `1/r <= 1/s` (the Young regime) `kappa = (1/s - 1/r)/2`; the borderline
/// map into `L^2` (`r = 2 <= s`) uses `kappa = 1/2 - 1/s`. Other exponent pairs
/// are rejected. Pass `f64::INFINITY` for sup norms.
pub fn smoothing_ratio_scan(
    f: &SpectralField,
    r: f64,
    s: f64,
    gamma: f64,
    t_grid: &[f64],
    grid: &QuadratureGrid,
) -> Result<Vec<(f64, f64)>> {
    let inv = |p: f64| if p.is_infinite() { 0.0 } else { 1.0 / p };
    let kappa = if inv(r) <= inv(s) + 1e-12 {
        0.5 * (inv(s) - inv(r))
    } else if (r - 2.0).abs() < 1e-12 && s >= 2.0 {
        0.5 - inv(s)
    } else {
        return Err(Error::ExponentMismatch { r, s });
    };
    let denom_norm = lp_norm(f, s, grid)?;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::KernelTimeOutOfRange { t });
        }
        let g = apply_semigroup_spectral(f, t, gamma);
        let num = lp_norm(&g, r, grid)?;
        out.push((t, num / (t.powf(-kappa) * denom_norm)));
    }
    Ok(out)
}
