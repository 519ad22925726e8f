//! The Gaussian free measure, the Gibbs measure and their samplers.
//!
//! The free measure `mu_N` places independent complex Gaussians on the modes,
//! `E|c_n|^2 = 2 / lambda_n^2`. The Gibbs measure reweights it by
//! `exp(-V(u))` with `V(u) = (1/4) |S_N u|_{L^4}^4` (and, for positive chemical
//! potential, the shifted potential built from `A_N = -H - eta (S_N - Pi_{N0})`).
//! Sampling is preconditioned Crank-Nicolson: the proposal preserves the
//! Gaussian reference exactly, so acceptance depends only on potential
//! differences and the sampler stays well conditioned as `N` grows. A direct
//! importance-sampling estimator over `mu_N` serves as the small-`N` oracle.

use crate::error::{Error, Result};
use crate::field::{C64, SpectralField};
use crate::hermite::{apply_smooth_cutoff, eigenvalue_sq, CutoffProfile, QuadratureGrid};
use crate::rng::{complex_standard, stream};
use crate::stats::{integrated_autocorrelation, mean_se, MeanSe};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Per-mode complex variances of a diagonal Gaussian measure on `E_N`.
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    variances: Vec<f64>,
}

impl GaussianSpec {
    /// The free measure `mu_N`: `E|c_n|^2 = 2 / lambda_n^2`.
    pub fn free_field(n_modes: usize) -> Self {
        Self {
            variances: (0..=n_modes).map(|n| 2.0 / eigenvalue_sq(n)).collect(),
        }
    }

    pub fn from_variances(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("mode variances must be positive".into()));
        }
        Ok(Self { variances })
    }

    pub fn n_modes(&self) -> usize {
        self.variances.len() - 1
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Draw a field: `c_n = a_n + i b_n` with `a_n, b_n ~ N(0, sigma_n^2 / 2)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpectralField {
        let coeffs = self
            .variances
            .iter()
            .map(|&v| complex_standard(rng) * (0.5 * v).sqrt())
            .collect();
        SpectralField::from_coeffs(coeffs).expect("gaussian draw is finite")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    /// `V(u) = (1/4) |S_N u|_{L^4}^4` (eta = 0).
    QuarticOnly,
    /// `V(u) = -eta/2 |Pi_{N0} S_N u|_{L^2}^2 + (1/4) |S_N u|_{L^4}^4`,
    /// paired with the Gaussian measure of `A_N = -H - eta (S_N - Pi_{N0})`.
    EtaSplit,
}

/// Potential of the Gibbs density, including the cutoff it is defined with.
#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub eta: f64,
    /// Largest `n` with `lambda_n^2 <= eta`; `None` below the ground state.
    pub n_zero: Option<usize>,
    pub cutoff: CutoffProfile,
}

impl PotentialSpec {
    pub fn quartic_only(n_modes: usize) -> Self {
        Self {
            kind: PotentialKind::QuarticOnly,
            eta: 0.0,
            n_zero: None,
            cutoff: CutoffProfile::standard(n_modes),
        }
    }
}

/// Largest `n` with `lambda_n^2 = 2n + 1 <= eta` (convention: none below 1).
pub fn n_zero_for(eta: f64) -> Option<usize> {
    if eta < 1.0 {
        None
    } else {
        Some(((eta - 1.0) / 2.0).floor() as usize)
    }
}

/// Gaussian and potential pair for chemical potential `eta >= 0` at mode count `N`.
///
/// Requires `(2 N0 + 1) / (2N + 1) <= 1/4` so the cutoff is still 1 on the
/// shifted modes; the per-mode variances `2 / (lambda_n^2 - eta (s_n - [n <= N0]))`
/// are then all positive.
pub fn build_eta_spec(eta: f64, n_modes: usize) -> Result<(GaussianSpec, PotentialSpec)> {
    if eta < 0.0 || !eta.is_finite() {
        return Err(Error::Config(format!("eta must be nonnegative, got {eta}")));
    }
    let cutoff = CutoffProfile::standard(n_modes);
    if eta == 0.0 {
        return Ok((
            GaussianSpec::free_field(n_modes),
            PotentialSpec::quartic_only(n_modes),
        ));
    }
    let n_zero = n_zero_for(eta);
    if let Some(n0) = n_zero {
        if (2 * n0 + 1) as f64 / (2 * n_modes + 1) as f64 > 0.25 {
            return Err(Error::Config(format!(
                "n_modes {} too small for eta {}: need (2 N0+1)/(2N+1) <= 1/4 with N0 = {}",
                n_modes, eta, n0
            )));
        }
    }
    let variances = (0..=n_modes)
        .map(|n| {
            let s = cutoff.values()[n];
            let proj = if n_zero.is_some_and(|n0| n <= n0) { 1.0 } else { 0.0 };
            let coeff = eigenvalue_sq(n) - eta * (s - proj);
            2.0 / coeff
        })
        .collect::<Vec<_>>();
    let gauss = GaussianSpec::from_variances(variances)?;
    let pot = PotentialSpec {
        kind: PotentialKind::EtaSplit,
        eta,
        n_zero,
        cutoff,
    };
    Ok((gauss, pot))
}

/// `V_eta(u) = -eta/2 |Pi_{N0} u|_{L^2}^2 + 1/4 |u|_{L^4}^4` without any cutoff.
pub fn eta_potential_raw(
    u: &SpectralField,
    eta: f64,
    n_zero: Option<usize>,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let quart = grid.quartic_integral(u)?;
    let low: f64 = match n_zero {
        Some(n0) => u.coeffs().iter().take(n0 + 1).map(|c| c.norm_sqr()).sum(),
        None => 0.0,
    };
    Ok(-0.5 * eta * low + 0.25 * quart)
}

/// The Gibbs potential evaluated on the cutoff field `S_N u`.
pub fn potential_v(u: &SpectralField, pot: &PotentialSpec, grid: &QuadratureGrid) -> Result<f64> {
    let su = apply_smooth_cutoff(u, &pot.cutoff);
    match pot.kind {
        PotentialKind::QuarticOnly => Ok(0.25 * grid.quartic_integral(&su)?),
        PotentialKind::EtaSplit => eta_potential_raw(&su, pot.eta, pot.n_zero, grid),
    }
}

/// State of one pCN chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub current: SpectralField,
    pub pcn_beta: f64,
    pub accepted: u64,
    pub proposed: u64,
    rng: ChaCha8Rng,
    cached_potential: f64,
}

impl ChainState {
    pub fn new(
        initial: SpectralField,
        pcn_beta: f64,
        pot: &PotentialSpec,
        grid: &QuadratureGrid,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        Self::new_with(initial, pcn_beta, |u| potential_v(u, pot, grid), rng)
    }

    /// Chain against an arbitrary potential; the seam that also realizes the
    /// alternative factorization of the positive-eta Gibbs density.
    pub fn new_with<V>(
        initial: SpectralField,
        pcn_beta: f64,
        potential: V,
        rng: ChaCha8Rng,
    ) -> Result<Self>
    where
        V: Fn(&SpectralField) -> Result<f64>,
    {
        if !(pcn_beta > 0.0 && pcn_beta <= 1.0) {
            return Err(Error::Config(format!("pcn_beta must be in (0, 1], got {pcn_beta}")));
        }
        let cached_potential = potential(&initial)?;
        Ok(Self {
            current: initial,
            pcn_beta,
            accepted: 0,
            proposed: 0,
            rng,
            cached_potential,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn potential(&self) -> f64 {
        self.cached_potential
    }

    pub fn reset_counters(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }
}

/// One preconditioned Crank-Nicolson update:
/// propose `u' = sqrt(1 - beta^2) u + beta xi`, accept with
/// `min(1, exp(V(u) - V(u')))`. Leaves `exp(-V) d(gaussian)` invariant.
pub fn pcn_step(
    chain: &mut ChainState,
    gauss: &GaussianSpec,
    pot: &PotentialSpec,
    grid: &QuadratureGrid,
) -> Result<bool> {
    pcn_step_with(chain, gauss, |u| potential_v(u, pot, grid))
}

/// [`pcn_step`] against an arbitrary potential.
pub fn pcn_step_with<V>(chain: &mut ChainState, gauss: &GaussianSpec, potential: V) -> Result<bool>
where
    V: Fn(&SpectralField) -> Result<f64>,
{
    let beta = chain.pcn_beta;
    let keep = (1.0 - beta * beta).max(0.0).sqrt();
    let xi = gauss.sample(&mut chain.rng);
    let proposal = chain.current.scaled(keep).axpy(C64::new(beta, 0.0), &xi);
    let v_new = potential(&proposal)?;
    let log_alpha = chain.cached_potential - v_new;
    chain.proposed += 1;
    let accept = log_alpha >= 0.0 || chain.rng.gen::<f64>() < log_alpha.exp();
    if accept {
        chain.current = proposal;
        chain.cached_potential = v_new;
        chain.accepted += 1;
    }
    Ok(accept)
}

/// Chain hygiene for [`sample_gibbs`].
#[derive(Clone, Debug)]
pub struct GibbsConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub initial_beta: f64,
    /// Robbins-Monro target acceptance during burn-in; tuning freezes afterwards.
    pub target_acceptance: f64,
    pub tune: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            burn_in: 10_000,
            thinning: 10,
            initial_beta: 0.5,
            target_acceptance: 0.25,
            tune: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GibbsRun {
    pub samples: Vec<SpectralField>,
    pub acceptance_rate: f64,
    pub final_beta: f64,
    /// Integrated autocorrelation time of the potential series after thinning.
    pub iact: f64,
    pub mean_potential: MeanSe,
    pub warnings: Vec<String>,
}

/// Draw approximately Gibbs-distributed fields with a tuned pCN chain.
pub fn sample_gibbs(
    gauss: &GaussianSpec,
    pot: &PotentialSpec,
    cfg: &GibbsConfig,
    grid: &QuadratureGrid,
    seed: u64,
) -> Result<GibbsRun> {
    let mut rng = stream(seed, &[0x6b5, 0]);
    let initial = gauss.sample(&mut rng);
    let mut chain = ChainState::new(initial, cfg.initial_beta, pot, grid, stream(seed, &[0x6b5, 1]))?;
    for k in 0..cfg.burn_in {
        let accepted = pcn_step(&mut chain, gauss, pot, grid)?;
        if cfg.tune {
            // Robbins-Monro drift toward the target acceptance rate
            let gain = 0.5 / (1.0 + k as f64).powf(0.6);
            let step = if accepted { 1.0 - cfg.target_acceptance } else { -cfg.target_acceptance };
            chain.pcn_beta = (chain.pcn_beta * (gain * step).exp()).clamp(1e-4, 1.0);
        }
    }
    chain.accepted = 0;
    chain.proposed = 0;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut potentials = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        for _ in 0..cfg.thinning.max(1) {
            pcn_step(&mut chain, gauss, pot, grid)?;
        }
        samples.push(chain.current.clone());
        potentials.push(chain.potential());
    }
    let acceptance_rate = chain.acceptance_rate();
    let mut warnings = Vec::new();
    if !(0.05..=0.95).contains(&acceptance_rate) {
        warnings.push(format!(
            "acceptance rate {acceptance_rate:.3} outside [0.05, 0.95] after tuning"
        ));
    }
    let iact = integrated_autocorrelation(&potentials);
    Ok(GibbsRun {
        acceptance_rate,
        final_beta: chain.pcn_beta,
        iact,
        mean_potential: mean_se(&potentials),
        warnings,
        samples,
    })
}

/// Importance-sampling estimates of `E_rho[F]` and of the normalization
/// `Gamma_N = E_mu[exp(-V)]`; the brute-force oracle for the MCMC sampler.
#[derive(Clone, Debug)]
pub struct ImportanceEstimate {
    pub value: MeanSe,
    pub gamma: MeanSe,
    pub effective_sample_size: f64,
}

pub fn importance_estimate<F>(
    gauss: &GaussianSpec,
    pot: &PotentialSpec,
    n_samples: usize,
    functional: F,
    grid: &QuadratureGrid,
    rng: &mut ChaCha8Rng,
) -> Result<ImportanceEstimate>
where
    F: Fn(&SpectralField) -> f64,
{
    importance_estimate_with(gauss, |u| potential_v(u, pot, grid), n_samples, functional, rng)
}

/// [`importance_estimate`] against an arbitrary potential.
pub fn importance_estimate_with<V, F>(
    gauss: &GaussianSpec,
    potential: V,
    n_samples: usize,
    functional: F,
    rng: &mut ChaCha8Rng,
) -> Result<ImportanceEstimate>
where
    V: Fn(&SpectralField) -> Result<f64>,
    F: Fn(&SpectralField) -> f64,
{
    let mut weights = Vec::with_capacity(n_samples);
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let u = gauss.sample(rng);
        weights.push((-potential(&u)?).exp());
        values.push(functional(&u));
    }
    let sum_w: f64 = weights.iter().sum();
    let sum_w2: f64 = weights.iter().map(|w| w * w).sum();
    let ess = sum_w * sum_w / sum_w2;
    if ess < 10.0 {
        return Err(Error::DegenerateWeights { ess, min: 10.0 });
    }
    let gamma = mean_se(&weights);
    let ratio = weights
        .iter()
        .zip(&values)
        .map(|(w, f)| w * f)
        .sum::<f64>()
        / sum_w;
    // delta-method error of the self-normalized estimator
    let n = n_samples as f64;
    let w_bar = sum_w / n;
    let var_num = weights
        .iter()
        .zip(&values)
        .map(|(w, f)| (w * (f - ratio)).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let se = (var_num / n).sqrt() / w_bar;
    Ok(ImportanceEstimate {
        value: MeanSe {
            mean: ratio,
            se,
            n: n_samples,
        },
        gamma,
        effective_sample_size: ess,
    })
}
