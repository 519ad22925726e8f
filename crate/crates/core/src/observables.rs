//! Functionals and statistical estimators over the flows and measures.

use crate::dynamics::{FlowKind, Integrator, ModelParams, OuTransition, StepScheme};
use crate::error::{Error, Result};
use crate::field::{C64, SpectralField};
use crate::hermite::{apply_smooth_cutoff, CutoffProfile, QuadratureGrid};
use crate::rng::{complex_standard, stream};
use crate::stats::{mean_se, MeanSe};
use rayon::prelude::*;
use std::sync::Arc;

/// Time-stamped Monte-Carlo estimates with standard errors.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_samples: usize,
}

impl ObservableSeries {
    pub fn is_consistent(&self) -> bool {
        self.times.len() == self.values.len()
            && self.values.len() == self.std_errors.len()
            && self.times.windows(2).all(|w| w[1] > w[0])
            && self.std_errors.iter().all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// `|u|_{L^p}` by quadrature on the envelope-matched node family.
///
/// Exact for `p = 2` (spectral) and for even integer `p` with
/// `p * n_modes <= 2 quad_size - 1`; other exponents are approximate with the
/// accuracy validated by quadrature refinement. `p = inf` takes the maximum
/// over both tabulated node families.
pub fn lp_norm(u: &SpectralField, p: f64, grid: &QuadratureGrid) -> Result<f64> {
    if p.is_infinite() {
        let a = grid.synthesize(u)?;
        let b = grid.synthesize_quartic(u)?;
        return Ok(a
            .iter()
            .chain(b.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max));
    }
    if !(p >= 1.0) {
        return Err(Error::Config(format!("L^p norms need p >= 1, got {p}")));
    }
    if (p - 2.0).abs() < 1e-14 {
        return Ok(u.l2_norm());
    }
    if (p - 4.0).abs() < 1e-14 {
        return Ok(grid.quartic_integral(u)?.powf(0.25));
    }
    let scale = (2.0 / p).sqrt();
    let (_, weights, basis) = grid.scaled_family(scale);
    let m = grid.quad_size();
    let mut total = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        let mut v = C64::new(0.0, 0.0);
        for (n, &c) in u.coeffs().iter().enumerate() {
            v += c * basis[n * m + j];
        }
        total += w * v.norm().powf(p);
    }
    Ok(total.powf(1.0 / p))
}

/// Hamiltonian `S(u) = 1/2 |(-H)^{1/2} u|^2 - eta/2 |u|^2 + 1/4 |u|_{L^4}^4`.
pub fn hamiltonian_s(u: &SpectralField, eta: f64, grid: &QuadratureGrid) -> Result<f64> {
    Ok(0.5 * u.h1_norm_sq() - 0.5 * eta * u.l2_norm_sq() + 0.25 * grid.quartic_integral(u)?)
}

/// Finite-dimensional Gibbs energy `I(y) = 1/2 |(-H)^{1/2} y|^2 + 1/4 |S_N y|_{L^4}^4`;
/// the invariant density of the Galerkin flows is `exp(-I(y)) dy`.
pub fn finite_energy_i(
    y: &SpectralField,
    cutoff: &CutoffProfile,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let s_y = apply_smooth_cutoff(y, cutoff);
    Ok(0.5 * y.h1_norm_sq() + 0.25 * grid.quartic_integral(&s_y)?)
}

/// Bounded Lipschitz test functionals for the ergodic-rate estimators.
#[derive(Clone)]
pub enum TestFunctional {
    /// `Re c_n`
    ModeRe(usize),
    /// `Im c_n`
    ModeIm(usize),
    /// `cap * tanh(|u|_{L^4}^4 / cap)`
    L4Capped { cap: f64 },
    /// custom Lipschitz functional; gradient by central finite differences
    LipschitzCustom {
        name: String,
        f: Arc<dyn Fn(&SpectralField) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for TestFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl TestFunctional {
    pub fn name(&self) -> String {
        match self {
            Self::ModeRe(n) => format!("re_c{n}"),
            Self::ModeIm(n) => format!("im_c{n}"),
            Self::L4Capped { cap } => format!("l4_capped_{cap}"),
            Self::LipschitzCustom { name, .. } => name.clone(),
        }
    }

    pub fn evaluate(&self, u: &SpectralField, grid: &QuadratureGrid) -> Result<f64> {
        Ok(match self {
            Self::ModeRe(n) => u.coeffs()[*n].re,
            Self::ModeIm(n) => u.coeffs()[*n].im,
            Self::L4Capped { cap } => cap * (grid.quartic_integral(u)? / cap).tanh(),
            Self::LipschitzCustom { f, .. } => f(u),
        })
    }

    /// Gradient in the real `E_N` inner product; analytic except for the
    /// custom variant (central differences, step 1e-5).
    pub fn gradient(&self, u: &SpectralField, grid: &QuadratureGrid) -> Result<SpectralField> {
        match self {
            Self::ModeRe(n) => Ok(SpectralField::mode(u.n_modes(), *n, C64::new(1.0, 0.0))),
            Self::ModeIm(n) => Ok(SpectralField::mode(u.n_modes(), *n, C64::new(0.0, 1.0))),
            Self::L4Capped { cap } => {
                let q = grid.quartic_integral(u)?;
                let vals = grid.synthesize_quartic(u)?;
                let cubed: Vec<C64> = vals.iter().map(|v| v * v.norm_sqr()).collect();
                let grad_q = grid.project_quartic(&cubed)?;
                let sech2 = 1.0 / (q / cap).cosh().powi(2);
                Ok(grad_q.scaled(4.0 * sech2))
            }
            Self::LipschitzCustom { f, .. } => {
                let eps = 1e-5;
                let mut grad = SpectralField::zeros(u.n_modes());
                for n in 0..=u.n_modes() {
                    for part in 0..2 {
                        let dir = if part == 0 {
                            C64::new(eps, 0.0)
                        } else {
                            C64::new(0.0, eps)
                        };
                        let mut up = u.clone();
                        up.coeffs_mut()[n] += dir;
                        let mut dn = u.clone();
                        dn.coeffs_mut()[n] -= dir;
                        let d = (f(&up) - f(&dn)) / (2.0 * eps);
                        grad.coeffs_mut()[n] += if part == 0 {
                            C64::new(d, 0.0)
                        } else {
                            C64::new(0.0, d)
                        };
                    }
                }
                Ok(grad)
            }
        }
    }
}

/// Configuration of the two-replica variance-decay estimator.
#[derive(Clone, Copy, Debug)]
pub struct VarianceDecayConfig {
    pub t_end: f64,
    pub dt: f64,
    /// spacing of recorded observation times (a multiple of `dt`)
    pub dt_obs: f64,
}

#[derive(Clone, Debug)]
pub struct VarianceDecay {
    pub series: ObservableSeries,
    /// variance of the functional at time zero over the initial ensemble
    pub v0: MeanSe,
}

/// Unbiased estimate of `V(t) = int |P_t phi - mean(phi)|^2 d rho` by two
/// conditionally independent replicas per initial sample: for `y ~ rho`,
/// `E[phi(X^1_t) phi(X^2_t)] = (P_t phi(y))^2` and the squared mean is removed
/// with its own bias correction; standard errors come from a leave-one-out
/// jackknife over the outer samples.
pub fn variance_decay(
    phi: &TestFunctional,
    initials: &[SpectralField],
    cfg: VarianceDecayConfig,
    p: &ModelParams,
    grid: &QuadratureGrid,
    seed: u64,
) -> Result<VarianceDecay> {
    let n_outer = initials.len();
    if n_outer < 100 {
        return Err(Error::Config(format!(
            "two-replica estimator needs at least 100 outer samples, got {n_outer}"
        )));
    }
    let steps_per_obs = (cfg.dt_obs / cfg.dt).round() as usize;
    if steps_per_obs == 0 {
        return Err(Error::Config("dt_obs must be at least dt".into()));
    }
    let n_obs = (cfg.t_end / cfg.dt_obs).round() as usize;
    let scheme = StepScheme::exponential_euler(cfg.dt)?;

    // per outer sample: phi(y) and the pair products at each observation time
    let per_outer: Vec<Result<(f64, Vec<f64>)>> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let integ = Integrator::new(p, grid, scheme, FlowKind::Galerkin);
            let mut rng = stream(seed, &[0xdeca, i as u64]);
            let y = &initials[i];
            let phi0 = phi.evaluate(y, grid)?;
            let mut x1 = y.clone();
            let mut x2 = y.clone();
            let mut products = Vec::with_capacity(n_obs);
            let mut dw = vec![C64::new(0.0, 0.0); p.n_modes + 1];
            let sdt = cfg.dt.sqrt();
            for _ in 0..n_obs {
                for _ in 0..steps_per_obs {
                    for w in dw.iter_mut() {
                        *w = complex_standard(&mut rng) * sdt;
                    }
                    x1 = integ.step(&x1, Some(&dw))?;
                    for w in dw.iter_mut() {
                        *w = complex_standard(&mut rng) * sdt;
                    }
                    x2 = integ.step(&x2, Some(&dw))?;
                }
                products.push(phi.evaluate(&x1, grid)? * phi.evaluate(&x2, grid)?);
            }
            Ok((phi0, products))
        })
        .collect();

    let mut phi0s = Vec::with_capacity(n_outer);
    let mut prods = vec![Vec::with_capacity(n_outer); n_obs];
    for r in per_outer {
        let (p0, row) = r?;
        phi0s.push(p0);
        for (k, v) in row.into_iter().enumerate() {
            prods[k].push(v);
        }
    }

    let nf = n_outer as f64;
    let sum_phi: f64 = phi0s.iter().sum();
    let mean_phi = sum_phi / nf;
    let var_phi = phi0s.iter().map(|x| (x - mean_phi).powi(2)).sum::<f64>() / (nf - 1.0);
    // unbiased estimate of mean(phi)^2
    let mean_sq = mean_phi * mean_phi - var_phi / nf;

    let mut times = Vec::with_capacity(n_obs + 1);
    let mut values = Vec::with_capacity(n_obs + 1);
    let mut errs = Vec::with_capacity(n_obs + 1);
    let v0 = crate::stats::variance_se(&phi0s);
    times.push(0.0);
    values.push(v0.mean);
    errs.push(v0.se);
    for (k, row) in prods.iter().enumerate() {
        let sum_w: f64 = row.iter().sum();
        let estimate = sum_w / nf - mean_sq;
        // leave-one-out jackknife over outer samples
        let mut jack = Vec::with_capacity(n_outer);
        for i in 0..n_outer {
            let m = (sum_phi - phi0s[i]) / (nf - 1.0);
            let v = (sum_w - row[i]) / (nf - 1.0) - m * m;
            jack.push(v);
        }
        let jbar = jack.iter().sum::<f64>() / nf;
        let se = ((nf - 1.0) / nf * jack.iter().map(|v| (v - jbar).powi(2)).sum::<f64>()).sqrt();
        times.push((k + 1) as f64 * cfg.dt_obs);
        values.push(estimate);
        errs.push(se);
    }
    Ok(VarianceDecay {
        series: ObservableSeries {
            times,
            values,
            std_errors: errs,
            n_samples: n_outer,
        },
        v0,
    })
}

/// Weighted log-linear fit of the decay rate over `window`; returns
/// `(rate, rate_se)` with `V(t) ~ e^{-rate t}`. Points indistinguishable from
/// zero at two standard errors are left out.
pub fn fit_decay_rate(series: &ObservableSeries, window: (f64, f64)) -> Option<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for ((&t, &v), &se) in series
        .times
        .iter()
        .zip(&series.values)
        .zip(&series.std_errors)
    {
        if t < window.0 || t > window.1 || v <= 2.0 * se || v <= 0.0 {
            continue;
        }
        xs.push(t);
        ys.push(v.ln());
        // delta method: var(log v) = (se / v)^2
        ws.push((v / se).powi(2));
    }
    if xs.len() < 3 {
        return None;
    }
    let (slope, _, slope_se) = crate::stats::weighted_line_fit(&xs, &ys, &ws);
    Some((-slope, slope_se))
}

/// Pointwise check `V(t) <= (1 + slack) e^{-2 gamma t} V(0) + k_se * se_joint`.
/// Returns the worst margin (positive means violated).
pub fn decay_bound_margin(decay: &VarianceDecay, gamma: f64, slack: f64, k_se: f64) -> f64 {
    let v0 = decay.v0;
    let mut worst = f64::NEG_INFINITY;
    for ((&t, &v), &se) in decay
        .series
        .times
        .iter()
        .zip(&decay.series.values)
        .zip(&decay.series.std_errors)
    {
        let factor = (1.0 + slack) * (-2.0 * gamma * t).exp();
        let bound = factor * v0.mean + k_se * se.hypot(factor * v0.se);
        worst = worst.max(v - bound);
    }
    worst
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PoincareRow {
    pub functional: String,
    pub gradient_energy: MeanSe,
    pub variance: MeanSe,
    pub passed: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PoincareReport {
    pub rows: Vec<PoincareRow>,
}

/// Check `int |D phi|^2 d rho >= Var_rho(phi)` on a sample set, functional by
/// functional, with block standard errors and a three-sigma joint allowance.
pub fn poincare_check(
    phis: &[TestFunctional],
    samples: &[SpectralField],
    grid: &QuadratureGrid,
) -> Result<PoincareReport> {
    let mut rows = Vec::with_capacity(phis.len());
    for phi in phis {
        let mut grads = Vec::with_capacity(samples.len());
        let mut vals = Vec::with_capacity(samples.len());
        for u in samples {
            grads.push(phi.gradient(u, grid)?.l2_norm_sq());
            vals.push(phi.evaluate(u, grid)?);
        }
        let lhs = crate::stats::block_mean_se(&grads, 50);
        let rhs = crate::stats::block_variance_se(&vals, 50);
        let passed = lhs.mean >= rhs.mean - 3.0 * lhs.se.hypot(rhs.se);
        rows.push(PoincareRow {
            functional: phi.name(),
            gradient_energy: lhs,
            variance: rhs,
            passed,
        });
    }
    Ok(PoincareReport { rows })
}

/// Upper bound `theta(p)` of the Hermite `L^p` decay exponent window.
pub fn theta_exponent(p: f64) -> f64 {
    if p >= 4.0 {
        1.0
    } else if p >= 2.0 {
        2.0 - 4.0 / p
    } else {
        0.0
    }
}

/// `E |Z(t + tau) - Z(t)|_{L^p}^{2m}` over stationary samples, one exact
/// transition per `(replica, tau)`.
pub fn structure_function(
    p_exp: f64,
    m_exp: u32,
    tau_grid: &[f64],
    n_outer: usize,
    p: &ModelParams,
    grid: &QuadratureGrid,
    seed: u64,
) -> Result<ObservableSeries> {
    if !(p_exp > 2.0) {
        return Err(Error::Config(format!(
            "structure functions need p > 2, got {p_exp}"
        )));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[0x57f, i as u64]);
            let trans = OuTransition::new(p.gamma, p.n_modes);
            let z0 = trans.stationary(&mut rng);
            let mut out = Vec::with_capacity(tau_grid.len());
            for &tau in tau_grid {
                let z1 = trans.advance(&z0, tau, &mut rng);
                let diff = z1.sub(&z0);
                let norm = lp_norm(&diff, p_exp, grid)?;
                out.push(norm.powi(2 * m_exp as i32));
            }
            Ok(out)
        })
        .collect();
    let mut by_tau = vec![Vec::with_capacity(n_outer); tau_grid.len()];
    for r in rows {
        for (k, v) in r?.into_iter().enumerate() {
            by_tau[k].push(v);
        }
    }
    let mut values = Vec::with_capacity(tau_grid.len());
    let mut errs = Vec::with_capacity(tau_grid.len());
    for col in &by_tau {
        let m = mean_se(col);
        values.push(m.mean);
        errs.push(m.se);
    }
    Ok(ObservableSeries {
        times: tau_grid.to_vec(),
        values,
        std_errors: errs,
        n_samples: n_outer,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct FellerRow {
    pub h_norm: f64,
    pub difference: MeanSe,
    pub ratio: f64,
    /// false when the Monte-Carlo error exceeds the estimated signal
    pub conclusive: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct FellerReport {
    pub base: MeanSe,
    pub rows: Vec<FellerRow>,
}

fn mc_mean_phi(
    phi: &TestFunctional,
    x0: &SpectralField,
    t_end: f64,
    dt: f64,
    n_mc: usize,
    p: &ModelParams,
    grid: &QuadratureGrid,
    seed: u64,
    tag: u64,
) -> Result<MeanSe> {
    let n_steps = (t_end / dt).round() as usize;
    let scheme = StepScheme::exponential_euler(dt)?;
    let chunk = 256;
    let n_chunks = n_mc.div_ceil(chunk);
    let sums: Vec<Result<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let integ = Integrator::new(p, grid, scheme, FlowKind::Galerkin);
            let lo = c * chunk;
            let hi = ((c + 1) * chunk).min(n_mc);
            let mut vals = Vec::with_capacity(hi - lo);
            let mut dw = vec![C64::new(0.0, 0.0); p.n_modes + 1];
            let sdt = dt.sqrt();
            for i in lo..hi {
                let mut rng = stream(seed, &[0xfe11, tag, i as u64]);
                let mut x = x0.clone();
                for _ in 0..n_steps {
                    for w in dw.iter_mut() {
                        *w = complex_standard(&mut rng) * sdt;
                    }
                    x = integ.step(&x, Some(&dw))?;
                }
                vals.push(phi.evaluate(&x, grid)?);
            }
            Ok(vals)
        })
        .collect();
    let mut all = Vec::with_capacity(n_mc);
    for s in sums {
        all.extend(s?);
    }
    Ok(mean_se(&all))
}

/// Finite-difference probe of semigroup continuity: estimate
/// `P_T phi(X0 + h) - P_T phi(X0)` with independent noise between the two
/// points. Displaced ensembles share noise streams across the `h` scan so the
/// dyadic-ratio comparison is sharp. `h = 0` is the identity and returns an
/// exact zero row.
pub fn feller_probe(
    phi: &TestFunctional,
    x0: &SpectralField,
    h_list: &[SpectralField],
    t_end: f64,
    dt: f64,
    n_mc: usize,
    p: &ModelParams,
    grid: &QuadratureGrid,
    seed: u64,
) -> Result<FellerReport> {
    let base = mc_mean_phi(phi, x0, t_end, dt, n_mc, p, grid, seed, 0)?;
    let mut rows = Vec::with_capacity(h_list.len());
    for h in h_list {
        let h_norm = h.l2_norm();
        if h_norm == 0.0 {
            rows.push(FellerRow {
                h_norm,
                difference: MeanSe {
                    mean: 0.0,
                    se: 0.0,
                    n: 0,
                },
                ratio: 0.0,
                conclusive: true,
            });
            continue;
        }
        let displaced = x0.add(h);
        // tag = 1 for every h: common streams across the scan
        let at_h = mc_mean_phi(phi, &displaced, t_end, dt, n_mc, p, grid, seed, 1)?;
        let diff = MeanSe {
            mean: at_h.mean - base.mean,
            se: at_h.se.hypot(base.se),
            n: n_mc,
        };
        rows.push(FellerRow {
            h_norm,
            difference: diff,
            ratio: diff.mean.abs() / h_norm,
            conclusive: diff.mean.abs() > diff.se,
        });
    }
    Ok(FellerReport { base, rows })
}


#[cfg(test)]
mod probes {
    use super::*;
    use crate::measures::GaussianSpec;
    use crate::rng::stream;

    #[test]
    fn probe_p3_errors() {
        let n = 15;
        let g128 = QuadratureGrid::build(n, 128).unwrap();
        let g192 = QuadratureGrid::build(n, 192).unwrap();
        let g256 = QuadratureGrid::build(n, 256).unwrap();
        let g384 = QuadratureGrid::build(n, 384).unwrap();
        let g768 = QuadratureGrid::build(n, 512).unwrap();
        for seed in 0..8u64 {
            let mut rng = stream(2, &[seed]);
            let u = GaussianSpec::free_field(n).sample(&mut rng);
            let a = lp_norm(&u, 3.0, &g128).unwrap();
            let b = lp_norm(&u, 3.0, &g192).unwrap();
            let c = lp_norm(&u, 3.0, &g256).unwrap();
            let d = lp_norm(&u, 3.0, &g384).unwrap();
            let r = lp_norm(&u, 3.0, &g768).unwrap();
            println!(
                "seed {seed}: err128={:.2e} err192={:.2e} err256={:.2e} err384={:.2e}",
                (a - r).abs() / r,
                (b - r).abs() / r,
                (c - r).abs() / r,
                (d - r).abs() / r
            );
        }
    }
}
