use super::ForecastError;

/// Repeats the last observed value over the whole horizon.
pub fn persistence_forecast(history: &[f64], horizon: usize) -> Result<Vec<f64>, ForecastError> {
    let last = *history.last().ok_or(ForecastError::EmptyHistory)?;
    Ok(vec![last; horizon])
}
