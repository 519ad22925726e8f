//! Small statistical helpers shared by the estimators and verification suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A point estimate with its standard error.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// `|self - other| <= k * sqrt(se^2 + se'^2)`.
    pub fn agrees_with(&self, other: &MeanSe, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.se.hypot(other.se)
    }

    pub fn agrees_with_value(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    assert!(n >= 2, "need at least two samples");
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    MeanSe {
        mean,
        se: (var / n as f64).sqrt(),
        n,
    }
}

/// Mean with a block standard error, for serially correlated (MCMC) samples.
pub fn block_mean_se(xs: &[f64], n_blocks: usize) -> MeanSe {
    let n = xs.len();
    let blocks = n_blocks.clamp(2, n / 2.max(1));
    let len = n / blocks;
    let means: Vec<f64> = (0..blocks)
        .map(|b| xs[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let m = mean_se(&means);
    MeanSe {
        mean: m.mean,
        se: m.se,
        n,
    }
}

/// Sample variance with the moment-based standard error
/// `se^2 = (m4 - var^2 (n-3)/(n-1)) / n`.
pub fn variance_se(xs: &[f64]) -> MeanSe {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    MeanSe {
        mean: var,
        se,
        n: xs.len(),
    }
}

/// Variance of serially correlated samples; block means feed the error bar.
pub fn block_variance_se(xs: &[f64], n_blocks: usize) -> MeanSe {
    let n = xs.len();
    let blocks = n_blocks.clamp(2, n / 2.max(1));
    let len = n / blocks;
    let vars: Vec<f64> = (0..blocks)
        .map(|b| variance_se(&xs[b * len..(b + 1) * len]).mean)
        .collect();
    let m = mean_se(&vars);
    MeanSe {
        mean: variance_se(xs).mean,
        se: m.se,
        n,
    }
}

/// Weighted least-squares line fit; returns `(slope, intercept, slope_se)`.
/// Weights are inverse variances of the ordinates.
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> (f64, f64, f64) {
    assert!(xs.len() == ys.len() && ys.len() == ws.len() && xs.len() >= 2);
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, (1.0 / sxx).sqrt())
}

/// Ordinary least-squares slope.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let ws = vec![1.0; xs.len()];
    let (a, b, _) = weighted_line_fit(xs, ys, &ws);
    (a, b)
}

/// Bootstrap percentile interval for the slope of `y ~ x` over resampled points.
pub fn bootstrap_slope_ci(
    xs: &[f64],
    ys: &[f64],
    n_boot: usize,
    level: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let n = xs.len();
    let mut slopes = Vec::with_capacity(n_boot);
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for _ in 0..n_boot {
        for k in 0..n {
            let j = rng.gen_range(0..n);
            bx[k] = xs[j];
            by[k] = ys[j];
        }
        let spread = bx.iter().fold((f64::MAX, f64::MIN), |a, &x| (a.0.min(x), a.1.max(x)));
        if spread.1 - spread.0 < 1e-12 {
            continue;
        }
        slopes.push(line_fit(&bx, &by).0);
    }
    slopes.sort_by(|a, b| a.total_cmp(b));
    let lo = ((1.0 - level) / 2.0 * slopes.len() as f64) as usize;
    let hi = (((1.0 + level) / 2.0) * slopes.len() as f64) as usize;
    (slopes[lo.min(slopes.len() - 1)], slopes[hi.min(slopes.len() - 1)])
}

/// Integrated autocorrelation time by the initial-positive-sequence rule.
pub fn integrated_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 8 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = xs[..n - lag]
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / n as f64;
        let rho = c / c0;
        if rho <= 0.0 {
            break;
        }
        tau += 2.0 * rho;
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn mean_and_variance_of_known_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let m = mean_se(&xs);
        assert!((m.mean - 2.5).abs() < 1e-15);
        let v = variance_se(&xs);
        assert!((v.mean - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_fit_recovers_line() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let ws = vec![1.0; xs.len()];
        let (slope, icpt, _) = weighted_line_fit(&xs, &ys, &ws);
        assert!((slope + 2.0).abs() < 1e-12 && (icpt - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_ci_brackets_true_slope() {
        let mut r = stream(11, &[1]);
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 1.0 + 0.5 * x + 0.01 * (r.gen::<f64>() - 0.5))
            .collect();
        let (lo, hi) = bootstrap_slope_ci(&xs, &ys, 400, 0.95, &mut r);
        assert!(lo < 0.5 && 0.5 < hi, "CI [{lo}, {hi}]");
    }

    #[test]
    fn iact_of_white_noise_is_near_one() {
        let mut r = stream(12, &[2]);
        let xs: Vec<f64> = (0..4000).map(|_| r.gen::<f64>()).collect();
        let tau = integrated_autocorrelation(&xs);
        assert!(tau < 1.5, "tau = {tau}");
    }
}
