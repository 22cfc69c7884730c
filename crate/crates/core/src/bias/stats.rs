//! Descriptive statistics, Cohen's d and logistic regression by Newton/IRLS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("zero pooled standard deviation")]
    ZeroVariance,
    #[error("predictor `{0}` is constant")]
    ConstantPredictor(String),
    #[error("outcome has a single class")]
    SingleClass,
    #[error("design has {rows} rows but outcome has {outcome}")]
    Shape { rows: usize, outcome: usize },
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standardizes to mean 0 and sample sd 1. Errors on a constant column.
pub fn zscore(xs: &[f64]) -> Result<Vec<f64>, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: xs.len() });
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let sd = (centered.iter().map(|c| c * c).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Err(StatsError::ConstantPredictor(String::new()));
    }
    let z: Vec<f64> = centered.iter().map(|c| c / sd).collect();
    // one re-centering pass removes the rounding residue of the first mean
    let m2 = mean(&z);
    Ok(z.into_iter().map(|v| v - m2).collect())
}

/// (mean_a - mean_b) / pooled sd with n - 1 denominators.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    for g in [a, b] {
        if g.len() < 2 {
            return Err(StatsError::TooFew { need: 2, got: g.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((mean(a) - mean(b)) / pooled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// Wald statistic estimate / std_error.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// Intercept first, then predictors in design order.
    pub coefficients: Vec<Coefficient>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl RegressionResult {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-6;
const RIDGE: f64 = 1e-8;
const DIVERGED: f64 = 1e6;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Maximum-likelihood logistic regression with an intercept. `columns`
/// holds `(name, values)` pairs; callers standardize them beforehand.
/// Diverging coefficients (separation) or exhausting the iteration budget
/// yield `converged = false`.
pub fn logistic_fit(outcome: &[bool], columns: &[(String, Vec<f64>)]) -> Result<RegressionResult, StatsError> {
    let n = outcome.len();
    for (name, col) in columns {
        if col.len() != n {
            return Err(StatsError::Shape { rows: col.len(), outcome: n });
        }
        if col.iter().all(|v| *v == col[0]) {
            return Err(StatsError::ConstantPredictor(name.clone()));
        }
    }
    if outcome.iter().all(|&o| o) || outcome.iter().all(|&o| !o) {
        return Err(StatsError::SingleClass);
    }
    let k = columns.len() + 1;
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { columns[j - 1].1[i] });
    let y = DVector::from_iterator(n, outcome.iter().map(|&o| if o { 1.0 } else { 0.0 }));
    let mut beta = DVector::zeros(k);
    let mut converged = false;
    let mut iterations = 0;
    let information = |beta: &DVector<f64>| {
        let p = (&x * beta).map(sigmoid);
        let w = p.map(|pi| pi * (1.0 - pi));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut h = x.transpose() * xw;
        for d in 0..k {
            h[(d, d)] += RIDGE;
        }
        (p, h)
    };
    loop {
        let (p, h) = information(&beta);
        let score = x.transpose() * (&y - p);
        let Some(chol) = h.cholesky() else { break };
        let step = chol.solve(&score);
        // Under separation the score vanishes while the Newton step stays
        // large, so both must be small.
        if score.amax() < SCORE_TOL && step.amax() < STEP_TOL {
            converged = true;
            break;
        }
        if iterations == MAX_ITER {
            break;
        }
        beta += step;
        iterations += 1;
        if beta.amax() > DIVERGED || !beta.iter().all(|b| b.is_finite()) {
            break;
        }
    }
    let (_, h) = information(&beta);
    let cov = h.cholesky().map(|c| c.inverse());
    let names = std::iter::once("intercept".to_string()).chain(columns.iter().map(|(n, _)| n.clone()));
    let coefficients = names
        .enumerate()
        .map(|(j, name)| {
            let se = cov.as_ref().map_or(f64::NAN, |c| c[(j, j)].sqrt());
            Coefficient {
                name,
                estimate: beta[j],
                std_error: se,
                z: beta[j] / se,
            }
        })
        .collect();
    Ok(RegressionResult {
        coefficients,
        converged,
        iterations,
        log_likelihood: log_likelihood(&x, &y, &beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohens_d_examples() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cohens_d(&[0.0, 0.0], &[1.0, 1.0]), Err(StatsError::ZeroVariance));
        // both groups have variance 4
        let d = cohens_d(&[2.0, 4.0, 6.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let back = cohens_d(&[1.0, 3.0, 5.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(back, -d);
    }

    #[test]
    fn zscore_moments() {
        let z = zscore(&[3.0, 7.0, 7.0, 19.0, 1e6]).unwrap();
        assert!(mean(&z).abs() < 1e-10);
        assert!((std_dev(&z) - 1.0).abs() < 1e-10);
        assert!(zscore(&[2.0, 2.0]).is_err());
    }

    #[test]
    fn symmetric_outcome_gives_zero_fit() {
        // y alternates, x symmetric around zero and uncorrelated with y
        let y = [true, false, true, false];
        let x = vec![1.0, 1.0, -1.0, -1.0];
        let fit = logistic_fit(&y, &[("x".into(), x)]).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients.iter().all(|c| c.estimate.abs() < 1e-10));
    }

    #[test]
    fn separation_is_flagged() {
        let y = [false, false, true, true];
        let x = vec![-2.0, -1.0, 1.0, 2.0];
        let fit = logistic_fit(&y, &[("x".into(), x)]).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn precondition_errors() {
        assert_eq!(
            logistic_fit(&[true, false], &[("c".into(), vec![1.0, 1.0])]),
            Err(StatsError::ConstantPredictor("c".into()))
        );
        assert_eq!(
            logistic_fit(&[true, true], &[("x".into(), vec![1.0, 2.0])]),
            Err(StatsError::SingleClass)
        );
    }
}
