use serde::{Deserialize, Serialize};

use super::{encode_for, EncodedFold};
use crate::data::Dataset;
use crate::encoding::{CategoricalEncoder, FeatureMatrix};
use crate::error::{Error, Result};
use crate::persist::{ModelHeader, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticNetConfig {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        ElasticNetConfig {
            alpha: 1e-3,
            l1_ratio: 0.5,
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

/// Linear model on standardized features:
/// `y = intercept + sum_j coef_j (x_j - mean_j) / scale_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub header: ModelHeader,
    pub target_dim: usize,
    pub config: ElasticNetConfig,
    pub encoder: CategoricalEncoder,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub feature_mean: Vec<f64>,
    /// Zero for constant columns, whose coefficient stays zero.
    pub feature_scale: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    /// Objective value after each sweep.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl ElasticNetModel {
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Vec<f64> {
        (0..matrix.n_rows())
            .map(|r| {
                let mut p = self.intercept;
                for (j, &b) in self.coefficients.iter().enumerate() {
                    if self.feature_scale[j] > 0.0 {
                        p += b * (matrix.get(r, j) - self.feature_mean[j]) / self.feature_scale[j];
                    }
                }
                p
            })
            .collect()
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let m = encode_for(&self.encoder, &self.header.schema_fingerprint, data)?;
        Ok(self.predict_matrix(&m))
    }

    /// Coefficients and intercept on the unstandardized features.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let coef: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.feature_scale)
            .map(|(&b, &s)| if s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = self.intercept - coef.iter().zip(&self.feature_mean).map(|(c, m)| c * m).sum::<f64>();
        (coef, intercept)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.header.check(ModelKind::ElasticNet)?;
        Ok(m)
    }
}

pub fn train_elastic_net(fold: &EncodedFold, target_dim: usize, config: &ElasticNetConfig) -> Result<ElasticNetModel> {
    let y = fold.target(target_dim)?;
    let fit = fit_elastic_net(&fold.matrix, &y, &fold.data.weights(), config)?;
    Ok(ElasticNetModel {
        header: ModelHeader::new(ModelKind::ElasticNet, fold.data.schema.fingerprint()),
        target_dim,
        config: config.clone(),
        encoder: fold.encoder.clone(),
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        feature_mean: fit.mean,
        feature_scale: fit.scale,
        converged: fit.converged,
        n_iter: fit.n_iter,
        objective_trace: fit.objective_trace,
    })
}

pub(crate) struct Fit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub objective_trace: Vec<f64>,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on
/// `(1/2W) sum_i w_i (y_i - b0 - z_i.b)^2 + alpha (l1 |b|_1 + (1 - l1)/2 |b|_2^2)`
/// with weighted-standardized columns `z`.
pub(crate) fn fit_elastic_net(matrix: &FeatureMatrix, y: &[f64], w: &[f64], config: &ElasticNetConfig) -> Result<Fit> {
    if y.is_empty() {
        return Err(Error::EmptyTrainingFold);
    }
    if !(config.alpha >= 0.0) || !(0.0..=1.0).contains(&config.l1_ratio) || !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid elastic net config {config:?}")));
    }
    let n_feat = matrix.n_cols();
    let total_w: f64 = w.iter().sum();
    let mut mean = vec![0.0; n_feat];
    let mut scale = vec![0.0; n_feat];
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(n_feat);
    for j in 0..n_feat {
        let col = matrix.column(j);
        let m = col.iter().zip(w).map(|(x, wi)| x * wi).sum::<f64>() / total_w;
        let var = col.iter().zip(w).map(|(x, wi)| wi * (x - m) * (x - m)).sum::<f64>() / total_w;
        mean[j] = m;
        let s = var.sqrt();
        if s > 0.0 && s.is_finite() {
            scale[j] = s;
            z.push(col.iter().map(|x| (x - m) / s).collect());
        } else {
            z.push(Vec::new());
        }
    }
    let y_mean = y.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / total_w;
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut beta = vec![0.0; n_feat];
    let l1 = config.alpha * config.l1_ratio;
    let l2 = config.alpha * (1.0 - config.l1_ratio);

    let objective = |resid: &[f64], beta: &[f64]| {
        let loss = resid.iter().zip(w).map(|(r, wi)| wi * r * r).sum::<f64>() / (2.0 * total_w);
        let pen_l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let pen_l2: f64 = beta.iter().map(|b| b * b).sum();
        loss + l1 * pen_l1 + 0.5 * l2 * pen_l2
    };

    let mut converged = false;
    let mut n_iter = 0;
    let mut objective_trace = Vec::new();
    while n_iter < config.max_iter {
        n_iter += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..n_feat {
            let zj = &z[j];
            if zj.is_empty() {
                continue;
            }
            let rho = zj
                .iter()
                .zip(&resid)
                .zip(w)
                .map(|((zi, r), wi)| wi * zi * r)
                .sum::<f64>()
                / total_w
                + beta[j];
            let updated = soft_threshold(rho, l1) / (1.0 + l2);
            let delta = updated - beta[j];
            if delta != 0.0 {
                for (r, zi) in resid.iter_mut().zip(zj) {
                    *r -= delta * zi;
                }
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        objective_trace.push(objective(&resid, &beta));
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("elastic net stopped after {n_iter} sweeps without converging");
    }
    Ok(Fit {
        coefficients: beta,
        intercept: y_mean,
        mean,
        scale,
        converged,
        n_iter,
        objective_trace,
    })
}
