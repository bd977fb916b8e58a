use rand::seq::index;

use super::network::ParamSet;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many parameters, sampled without replacement.
    /// `None` checks all of them.
    pub sample: Option<usize>,
    /// Denominator floor for the relative error, so that two gradients that
    /// are both essentially zero are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            sample: None,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central finite differences of `loss` at
/// `params`.
pub fn gradient_check<P, G, F>(
    loss: F,
    params: &P,
    analytic: &G,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    P: ParamSet + Clone,
    G: ParamSet,
    F: Fn(&P) -> Result<f64>,
{
    let n = params.len();
    let grads = analytic.flat();
    if grads.len() != n {
        return Err(Error::Shape(format!(
            "{} analytic gradients for {n} parameters",
            grads.len()
        )));
    }
    let indices: Vec<usize> = match config.sample {
        Some(k) if k < n => {
            let mut rng = rng::stream(config.seed, Stream::Sampling);
            let mut picked = index::sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..n).collect(),
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: indices.len(),
        max_relative_error: 0.0,
        worst_index: indices.first().copied().unwrap_or(0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        passed: true,
    };
    for &k in &indices {
        let original = *probe.scalar_mut(k);
        *probe.scalar_mut(k) = original + config.step;
        let plus = loss(&probe)?;
        *probe.scalar_mut(k) = original - config.step;
        let minus = loss(&probe)?;
        *probe.scalar_mut(k) = original;

        let numeric = (plus - minus) / (2.0 * config.step);
        let err = relative_error(grads[k], numeric, config.floor);
        if !err.is_finite() || err > report.max_relative_error {
            report.max_relative_error = if err.is_finite() { err } else { f64::INFINITY };
            report.worst_index = k;
            report.analytic_at_worst = grads[k];
            report.numeric_at_worst = numeric;
        }
    }
    report.passed = report.max_relative_error < config.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Activation, NetworkParams};

    fn squared_norm(p: &NetworkParams) -> Result<f64> {
        Ok(p.flat().iter().map(|v| v * v).sum())
    }

    fn doubled(p: &NetworkParams) -> crate::nn::NetworkGrads {
        let mut g = p.zeros_like();
        for (dst, (_, src)) in g.slices_mut().into_iter().zip(p.named_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = 2.0 * s;
            }
        }
        g
    }

    #[test]
    fn quadratic_loss_is_exact() {
        let mut p = init_network(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], 2).unwrap();
        for (k, s) in p.slices_mut().into_iter().enumerate() {
            for (j, v) in s.iter_mut().enumerate() {
                *v = 0.1 + 0.05 * (k + j) as f64;
            }
        }
        let report = gradient_check(squared_norm, &p, &doubled(&p), &GradCheckConfig {
            tolerance: 1e-8,
            ..Default::default()
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_relative_error < 1e-8);
        assert_eq!(report.checked, p.len());
    }

    #[test]
    fn corrupted_gradient_fails() {
        let p = init_network(&[3, 4], &[Activation::Tanh], 5).unwrap();
        let mut g = doubled(&p);
        *g.scalar_mut(3) *= 2.0;
        let report = gradient_check(squared_norm, &p, &g, &GradCheckConfig::default()).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_index, 3);
    }

    #[test]
    fn sampling_limits_work() {
        let p = init_network(&[5, 5], &[Activation::Tanh], 5).unwrap();
        let report = gradient_check(squared_norm, &p, &doubled(&p), &GradCheckConfig {
            sample: Some(7),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(report.checked, 7);
        assert!(report.passed);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0, 1e-6) - 1e-6).abs() < 1e-18);
    }
}
