use crate::mining::MinedInstance;

use super::{AlignError, ProbMatrix};

/// Posteriors are floored here before taking the log.
pub const LIKELIHOOD_FLOOR: f64 = 1e-10;

/// Class prior `p(c)`; strictly positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors(Vec<f64>);

impl Priors {
    pub fn new(values: Vec<f64>) -> Result<Self, AlignError> {
        if values.is_empty() {
            return Err(AlignError::InvalidPriors("no classes".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(AlignError::InvalidPriors(format!("non-positive prior {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(AlignError::InvalidPriors(format!("priors sum to {sum}")));
        }
        Ok(Self(values))
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Additively smoothed class frequencies over the mined training instances.
pub fn compute_priors(instances: &[MinedInstance], classes: usize, smoothing: f64) -> Result<Priors, AlignError> {
    if !(smoothing >= 0.0) {
        return Err(AlignError::InvalidPriors(format!("negative smoothing {smoothing}")));
    }
    let mut counts = vec![0usize; classes];
    for inst in instances {
        let c = inst.class_id as usize;
        if c >= classes {
            return Err(AlignError::InvalidClass {
                class: inst.class_id,
                classes,
            });
        }
        counts[c] += 1;
    }
    let total = instances.len() as f64 + classes as f64 * smoothing;
    if total == 0.0 {
        return Err(AlignError::EmptyTraining);
    }
    let values: Vec<f64> = counts.iter().map(|&n| (n as f64 + smoothing) / total).collect();
    if values.contains(&0.0) {
        // an unseen class with zero smoothing would give log(0) later
        return Err(AlignError::InvalidPriors("unseen class with zero smoothing".into()));
    }
    Ok(Priors(values))
}

/// `log(max(p(c|x), eps)) - log(p(c))`, i.e. the log of `p(x|c)` up to a
/// per-frame constant.
pub fn to_likelihood(posteriors: &ProbMatrix, priors: &Priors) -> Result<ProbMatrix, AlignError> {
    if priors.len() != posteriors.classes() {
        return Err(AlignError::DimensionMismatch {
            expected: posteriors.classes(),
            got: priors.len(),
        });
    }
    let log_priors: Vec<f64> = priors.values().iter().map(|p| p.ln()).collect();
    let mut out = posteriors.clone();
    for row in out.rows_mut() {
        for (v, lp) in row.iter_mut().zip(&log_priors) {
            *v = v.max(LIKELIHOOD_FLOOR).ln() - lp;
        }
    }
    Ok(out)
}
