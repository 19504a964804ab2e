//! Direct multi-horizon ridge regression: one linear map from `H` lags (and
//! optional calendar encodings at the origin) to all `T` leads.

use chrono::{DateTime, Datelike, Timelike, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ForecastError, ForecastTask};

/// Sine/cosine pairs for hour-of-day and day-of-year.
pub const CALENDAR_WIDTH: usize = 4;

/// Relative eigenvalue floor below which an unregularised system is called singular.
const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub history_len: usize,
    pub horizon: usize,
    pub lambda: f64,
    pub calendar: bool,
    /// Mean and scale used to standardise each feature at fit time.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// One intercept per lead, in target units.
    pub intercept: Vec<f64>,
    /// `weights[lead][feature]` on standardised features.
    pub weights: Vec<Vec<f64>>,
    /// Upper clip bound for predictions; the lower bound is 0 when set.
    pub clip_max: Option<f64>,
}

impl RidgeModel {
    pub fn n_features(&self) -> usize {
        self.history_len + if self.calendar { CALENDAR_WIDTH } else { 0 }
    }

    pub fn with_clip(mut self, capacity: f64) -> Self {
        self.clip_max = Some(capacity);
        self
    }

    /// Coefficients on raw (unstandardised) features: `(intercepts, weights[lead][feature])`.
    pub fn raw_coefficients(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut intercepts = Vec::with_capacity(self.horizon);
        let mut coefs = Vec::with_capacity(self.horizon);
        for (w, b) in self.weights.iter().zip(&self.intercept) {
            let raw: Vec<f64> = w.iter().zip(&self.feature_scale).map(|(w, s)| w / s).collect();
            let shift: f64 = raw.iter().zip(&self.feature_mean).map(|(c, m)| c * m).sum();
            intercepts.push(b - shift);
            coefs.push(raw);
        }
        (intercepts, coefs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ridge model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn calendar_features(origin: &DateTime<Utc>) -> [f64; CALENDAR_WIDTH] {
    use std::f64::consts::TAU;
    let hour = origin.hour() as f64 + origin.minute() as f64 / 60.0 + origin.second() as f64 / 3600.0;
    let day = origin.ordinal0() as f64 + hour / 24.0;
    let h = TAU * hour / 24.0;
    let d = TAU * day / 365.25;
    [h.sin(), h.cos(), d.sin(), d.cos()]
}

fn features(history: &[f64], origin: Option<&DateTime<Utc>>, calendar: bool, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(history);
    if calendar {
        let ts = origin.expect("calendar features need an origin timestamp");
        out.extend_from_slice(&calendar_features(ts));
    }
}

/// Fits one model on a training series. Windows end at every origin `o` with
/// `o >= H - 1` and `o + T < len`; targets are the following `T` values.
pub fn ridge_fit(
    series: &[f64],
    timestamps: &[DateTime<Utc>],
    task: &ForecastTask,
    lambda: f64,
    calendar: bool,
) -> Result<RidgeModel, ForecastError> {
    task.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ForecastError::InvalidTask(format!("lambda must be >= 0, got {lambda}")));
    }
    if calendar && timestamps.len() != series.len() {
        return Err(ForecastError::LengthMismatch {
            expected: series.len(),
            got: timestamps.len(),
        });
    }
    let (h, t) = (task.history_len, task.horizon);
    let needed = h + t + 1;
    if series.len() < needed {
        return Err(ForecastError::InsufficientData {
            needed,
            got: series.len(),
        });
    }
    let n_samples = series.len() - h - t + 1;
    let p = h + if calendar { CALENDAR_WIDTH } else { 0 };

    let mut x = DMatrix::zeros(n_samples, p);
    let mut y = DMatrix::zeros(n_samples, t);
    let mut row = Vec::with_capacity(p);
    for s in 0..n_samples {
        let o = s + h - 1;
        features(&series[s..=o], timestamps.get(o), calendar, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(s, j)] = *v;
        }
        for lead in 0..t {
            y[(s, lead)] = series[o + 1 + lead];
        }
    }

    let nf = n_samples as f64;
    let mut mean = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let m = col.sum() / nf;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
        mean[j] = m;
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    for j in 0..p {
        for s in 0..n_samples {
            x[(s, j)] = (x[(s, j)] - mean[j]) / scale[j];
        }
    }
    let y_mean: Vec<f64> = (0..t).map(|l| y.column(l).sum() / nf).collect();
    for l in 0..t {
        for s in 0..n_samples {
            y[(s, l)] -= y_mean[l];
        }
    }

    // Standardised columns have zero mean, so the unpenalised intercept
    // decouples and equals the target mean.
    let xt = x.transpose();
    let mut gram = &xt * &x;
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = &xt * &y;
    if lambda == 0.0 {
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= SINGULAR_RTOL * max {
            return Err(ForecastError::SingularSystem);
        }
    }
    let chol = gram.cholesky().ok_or(ForecastError::SingularSystem)?;
    let w = chol.solve(&rhs);

    Ok(RidgeModel {
        history_len: h,
        horizon: t,
        lambda,
        calendar,
        feature_mean: mean,
        feature_scale: scale,
        intercept: y_mean,
        weights: (0..t).map(|l| w.column(l).iter().copied().collect()).collect(),
        clip_max: None,
    })
}

/// Applies the fitted map to the trailing `H` values ending at `origin`.
pub fn ridge_predict(
    model: &RidgeModel,
    history: &[f64],
    origin: &DateTime<Utc>,
) -> Result<Vec<f64>, ForecastError> {
    if history.len() != model.history_len {
        return Err(ForecastError::LengthMismatch {
            expected: model.history_len,
            got: history.len(),
        });
    }
    let mut row = Vec::with_capacity(model.n_features());
    features(history, Some(origin), model.calendar, &mut row);
    let z = DVector::from_iterator(
        row.len(),
        row.iter()
            .zip(model.feature_mean.iter().zip(&model.feature_scale))
            .map(|(v, (m, s))| (v - m) / s),
    );
    Ok(model
        .weights
        .iter()
        .zip(&model.intercept)
        .map(|(w, b)| {
            let v = b + w.iter().zip(z.iter()).map(|(a, c)| a * c).sum::<f64>();
            match model.clip_max {
                Some(cap) => v.clamp(0.0, cap),
                None => v,
            }
        })
        .collect())
}
