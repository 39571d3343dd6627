use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered run of finite real observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    demeaned: bool,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("time series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self {
            values,
            demeaned: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_demeaned(&self) -> bool {
        self.demeaned
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Copy of the series with its global mean subtracted.
    pub fn demeaned(&self) -> Self {
        let m = self.mean();
        Self {
            values: self.values.iter().map(|v| v - m).collect(),
            demeaned: true,
        }
    }

    /// Copy of the series multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = Self::new(self.values.iter().map(|v| v * c).collect())?;
        out.demeaned = self.demeaned;
        Ok(out)
    }

    /// Copy of the series in reverse time order.
    pub fn reversed(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self {
            values,
            demeaned: self.demeaned,
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for TimeSeries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(TimeSeries::new(vec![]).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn demeaning_sets_flag_and_centers() {
        let x = TimeSeries::new(vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let d = x.demeaned();
        assert!(d.is_demeaned());
        assert!(d.mean().abs() < 1e-15);
        assert_eq!(d.len(), 4);
    }

    #[test]
    fn reverse_twice_is_identity() {
        let x = TimeSeries::new(vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(x.reversed().reversed(), x);
    }
}
