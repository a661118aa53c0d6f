use chrono::{Days, NaiveDate};
use nalgebra::DVector;

use super::{apply_lag, rolling_average};
use crate::error::{Error, Result};

/// Daily reported cases and deaths on contiguous dates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseDeathSeries {
    start: NaiveDate,
    cases: Vec<u64>,
    deaths: Vec<u64>,
}

impl CaseDeathSeries {
    pub fn new(start: NaiveDate, cases: Vec<u64>, deaths: Vec<u64>) -> Result<Self> {
        if cases.len() != deaths.len() {
            return Err(Error::Structural(format!(
                "{} case days but {} death days",
                cases.len(),
                deaths.len()
            )));
        }
        if cases.is_empty() {
            return Err(Error::Structural("case series is empty".into()));
        }
        Ok(Self { start, cases, deaths })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + Days::new(day as u64)
    }

    pub fn cases(&self) -> &[u64] {
        &self.cases
    }

    pub fn deaths(&self) -> &[u64] {
        &self.deaths
    }

    /// Smoothed `[cases, deaths]` per day with a trailing window, shifted so
    /// that model day `t` sees the values reported on day `t + lag`.
    pub fn observations(&self, window: usize, lag: usize) -> Result<Vec<DVector<f64>>> {
        let c = rolling_average(&self.cases.iter().map(|v| *v as f64).collect::<Vec<_>>(), window)?;
        let d = rolling_average(&self.deaths.iter().map(|v| *v as f64).collect::<Vec<_>>(), window)?;
        let obs: Vec<DVector<f64>> = c
            .into_iter()
            .zip(d)
            .map(|(a, b)| DVector::from_column_slice(&[a, b]))
            .collect();
        apply_lag(&obs, lag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_observations_with_lag() {
        let s = CaseDeathSeries::new(NaiveDate::from_ymd_opt(2020, 7, 20).unwrap(), vec![1, 2, 3], vec![0, 0, 1]).unwrap();
        let o = s.observations(1, 1).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o[1].as_slice(), &[3.0, 1.0]);
        assert_eq!(s.date(2), NaiveDate::from_ymd_opt(2020, 7, 22).unwrap());
    }
}
