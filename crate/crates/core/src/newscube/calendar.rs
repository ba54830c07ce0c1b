use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Serialize};

use super::CubeError;

/// Consecutive 7-day periods starting on a Monday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekCalendar {
    start_date: NaiveDate,
    n_weeks: usize,
}

impl WeekCalendar {
    pub fn new(start_date: NaiveDate, n_weeks: usize) -> Result<Self, CubeError> {
        if start_date.weekday() != Weekday::Mon {
            return Err(CubeError::InvalidCalendar(format!(
                "start date {start_date} is a {:?}, not a Monday",
                start_date.weekday()
            )));
        }
        if n_weeks == 0 {
            return Err(CubeError::InvalidCalendar("n_weeks must be at least 1".into()));
        }
        Ok(Self { start_date, n_weeks })
    }

    /// The 52 weeks from Monday 2015-01-05 to Sunday 2016-01-03.
    pub fn year_2015() -> Self {
        Self::new(NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(), 52).unwrap()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn n_weeks(&self) -> usize {
        self.n_weeks
    }

    /// First day (Monday) of week `t`.
    pub fn week_start(&self, t: usize) -> NaiveDate {
        self.start_date + Duration::days(7 * t as i64)
    }

    /// Last day (Sunday) of the window.
    pub fn end_date(&self) -> NaiveDate {
        self.week_start(self.n_weeks) - Duration::days(1)
    }

    pub fn assign_date(&self, date: NaiveDate) -> Result<usize, CubeError> {
        let days = (date - self.start_date).num_days();
        if days < 0 {
            return Err(CubeError::OutOfWindow { date });
        }
        let t = (days / 7) as usize;
        if t >= self.n_weeks {
            return Err(CubeError::OutOfWindow { date });
        }
        Ok(t)
    }

    /// Week index of a UTC timestamp.
    pub fn assign_week(&self, published_at: &DateTime<Utc>) -> Result<usize, CubeError> {
        self.assign_date(published_at.date_naive())
    }
}
