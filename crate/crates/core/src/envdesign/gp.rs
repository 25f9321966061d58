//! Zero-mean Gaussian-process regression with a Matérn ν=5/2 kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::domains::Bounds;
use crate::error::{invalid, Error, Result};

const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Length-scale multipliers of the box width tried during fitting.
pub const LENGTH_SCALE_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];
/// Signal-variance multipliers of the observation variance tried during fitting.
pub const SIGNAL_VARIANCE_GRID: [f64; 3] = [0.25, 1.0, 4.0];
pub const FITTED_NOISE_VARIANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub inputs: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpModel {
    pub fn new(length_scales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let model =
            Self { inputs: Vec::new(), observations: Vec::new(), length_scales, signal_variance, noise_variance };
        model.check()?;
        Ok(model)
    }

    pub fn with_data(mut self, inputs: Vec<Vec<f64>>, observations: Vec<f64>) -> Result<Self> {
        self.inputs = inputs;
        self.observations = observations;
        self.check()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    fn check(&self) -> Result<()> {
        if self.length_scales.is_empty() || self.length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(invalid("length scales must be positive"));
        }
        if !(self.signal_variance > 0.0 && self.noise_variance > 0.0) {
            return Err(invalid("variances must be positive"));
        }
        if self.inputs.len() != self.observations.len() {
            return Err(invalid("inputs and observations differ in length"));
        }
        if self.inputs.iter().any(|x| x.len() != self.dim()) {
            return Err(invalid("input dimension does not match length scales"));
        }
        Ok(())
    }

    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let r = x.iter().zip(y).zip(&self.length_scales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum::<f64>().sqrt();
        let s5r = 5f64.sqrt() * r;
        self.signal_variance * (1.0 + s5r + 5.0 * r * r / 3.0) * (-s5r).exp()
    }

    /// Factorizes the training covariance for repeated queries.
    pub fn condition(&self) -> Result<ConditionedGp<'_>> {
        self.check()?;
        let n = self.inputs.len();
        let k = DMatrix::from_fn(n, n, |i, j| self.kernel(&self.inputs[i], &self.inputs[j]));
        let y = DVector::from_column_slice(&self.observations);
        for jitter in JITTER_LADDER {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += self.noise_variance + jitter;
            }
            if let Some(chol) = a.cholesky() {
                let alpha = chol.solve(&y);
                return Ok(ConditionedGp { model: self, chol, alpha });
            }
        }
        Err(Error::IllConditioned(*JITTER_LADDER.last().unwrap()))
    }

    /// `log p(y | hyperparameters)`.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        let c = self.condition()?;
        let n = self.observations.len() as f64;
        let y = DVector::from_column_slice(&self.observations);
        let fit = y.dot(&c.alpha);
        let log_det: f64 = c.chol.l().diagonal().iter().map(|v| v.ln()).sum();
        Ok(-0.5 * fit - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
    }
}

pub struct ConditionedGp<'a> {
    model: &'a GpModel,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl ConditionedGp<'_> {
    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.model.dim() {
            return Err(invalid("query point has the wrong dimension"));
        }
        let prior = self.model.kernel(x, x);
        if self.model.inputs.is_empty() {
            return Ok((0.0, prior.sqrt()));
        }
        let k_star = DVector::from_iterator(
            self.model.inputs.len(),
            self.model.inputs.iter().map(|xi| self.model.kernel(xi, x)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k_star).expect("cholesky factor is nonsingular");
        let var = (prior - v.dot(&v)).max(0.0);
        Ok((mean, var.sqrt()))
    }

    pub fn ucb(&self, x: &[f64], kappa: f64) -> Result<f64> {
        let (m, s) = self.predict(x)?;
        Ok(m + kappa * s)
    }
}

pub fn gp_posterior(model: &GpModel, theta: &[f64]) -> Result<(f64, f64)> {
    model.condition()?.predict(theta)
}

pub fn ucb(model: &GpModel, theta: &[f64], kappa: f64) -> Result<f64> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(invalid("kappa must be non-negative"));
    }
    model.condition()?.ucb(theta, kappa)
}

/// Maximum-likelihood hyperparameters over a fixed log-spaced grid.
///
/// Length scales are isotropic multiples of each box width; the signal
/// variance is a multiple of the observation variance. Ties keep the first
/// grid point.
pub fn fit(inputs: Vec<Vec<f64>>, observations: Vec<f64>, bounds: &Bounds) -> Result<GpModel> {
    let n = observations.len().max(1) as f64;
    let mean = observations.iter().sum::<f64>() / n;
    let var = (observations.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).max(1e-6);
    let mut best: Option<(f64, GpModel)> = None;
    for ls in LENGTH_SCALE_GRID {
        for sv in SIGNAL_VARIANCE_GRID {
            let scales = (0..bounds.dim()).map(|i| ls * bounds.width(i).max(1e-12)).collect();
            let model = GpModel::new(scales, sv * var, FITTED_NOISE_VARIANCE)?
                .with_data(inputs.clone(), observations.clone())?;
            let Ok(lml) = model.log_marginal_likelihood() else { continue };
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, model));
            }
        }
    }
    best.map(|(_, m)| m).ok_or(Error::IllConditioned(*JITTER_LADDER.last().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_1d(ls: f64, noise: f64) -> GpModel {
        GpModel::new(vec![ls], 1.0, noise).unwrap()
    }

    #[test]
    fn empty_model_is_prior() {
        let m = GpModel::new(vec![0.3, 0.3], 2.0, 1e-4).unwrap();
        let (mu, sd) = gp_posterior(&m, &[0.1, 0.9]).unwrap();
        assert_eq!(mu, 0.0);
        assert!((sd - 2f64.sqrt()).abs() < 1e-15);
        assert!((ucb(&m, &[0.1, 0.9], 2.0).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noise_free_interpolation() {
        let m = model_1d(0.2, 1e-10).with_data(vec![vec![0.1], vec![0.4], vec![0.8]], vec![1.0, -0.5, 2.0]).unwrap();
        let c = m.condition().unwrap();
        for (x, y) in [(0.1, 1.0), (0.4, -0.5), (0.8, 2.0)] {
            let (mu, sd) = c.predict(&[x]).unwrap();
            assert!((mu - y).abs() < 1e-4);
            assert!(sd < 1e-3);
            assert!((c.ucb(&[x], 5.0).unwrap() - y).abs() < 1e-2);
        }
        assert_eq!(c.ucb(&[0.3], 0.0).unwrap(), c.predict(&[0.3]).unwrap().0);
    }

    #[test]
    fn kernel_at_zero_distance_is_signal_variance() {
        let m = GpModel::new(vec![0.5], 3.0, 1e-4).unwrap();
        assert_eq!(m.kernel(&[0.2], &[0.2]), 3.0);
        assert!(m.kernel(&[0.0], &[1.0]) < m.kernel(&[0.0], &[0.5]));
    }

    #[test]
    fn bad_hyperparameters_rejected() {
        assert!(GpModel::new(vec![0.0], 1.0, 1e-4).is_err());
        assert!(GpModel::new(vec![1.0], -1.0, 1e-4).is_err());
        assert!(model_1d(1.0, 1e-4).with_data(vec![vec![0.0]], vec![]).is_err());
        assert!(ucb(&model_1d(1.0, 1e-4), &[0.0], -1.0).is_err());
    }

    #[test]
    fn fit_prefers_fitting_scale() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (20.0 * x[0]).sin()).collect();
        let m = fit(xs, ys, &Bounds::unit(1)).unwrap();
        assert!(m.length_scales[0] <= 0.2);
    }
}
