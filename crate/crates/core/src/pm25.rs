//! Hourly Beijing PM2.5 records to the daily twelve-covariate design.
//!
//! Stages run in a fixed order: read, recover hourly wind, aggregate to days, engineer
//! features. Lags, 48-hour rain windows and wind segments all depend on row order.

use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{EmmbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindDir {
    NW,
    NE,
    SE,
    #[serde(rename = "cv")]
    Cv,
}

impl FromStr for WindDir {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "NW" => Ok(Self::NW),
            "NE" => Ok(Self::NE),
            "SE" => Ok(Self::SE),
            "cv" => Ok(Self::Cv),
            other => Err(format!("unknown wind direction '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub pm25: Option<f64>,
    pub dewp: f64,
    pub temp: f64,
    pub pres: f64,
    pub cbwd: WindDir,
    /// Cumulated wind speed.
    pub iws: f64,
    pub is_hours: u32,
    pub ir_hours: u32,
}

impl HourlyRecord {
    pub fn date(&self) -> Option<NaiveDate> {
        NaiveDate::from_ymd_opt(self.year, self.month, self.day)
    }

    pub fn timestamp(&self) -> Option<NaiveDateTime> {
        self.date()?.and_hms_opt(self.hour, 0, 0)
    }

    fn label(&self) -> String {
        format!("{:04}-{:02}-{:02} {:02}:00", self.year, self.month, self.day, self.hour)
    }
}

#[derive(Debug, Deserialize)]
struct RawHour {
    year: i32,
    month: u32,
    day: u32,
    hour: u32,
    #[serde(rename = "pm2.5")]
    pm25: String,
    #[serde(rename = "DEWP")]
    dewp: f64,
    #[serde(rename = "TEMP")]
    temp: f64,
    #[serde(rename = "PRES")]
    pres: f64,
    cbwd: String,
    #[serde(rename = "Iws")]
    iws: f64,
    #[serde(rename = "Is")]
    is_hours: u32,
    #[serde(rename = "Ir")]
    ir_hours: u32,
}

/// Reads the UCI hourly file (`No,year,month,day,hour,pm2.5,DEWP,TEMP,PRES,cbwd,Iws,Is,Ir`).
/// `NA` marks a missing PM2.5 value.
pub fn read_hourly_csv<R: Read>(reader: R) -> Result<Vec<HourlyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<RawHour>().enumerate() {
        let line = i + 2;
        let raw = rec?;
        let pm25 = match raw.pm25.as_str() {
            "NA" | "" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| EmmbError::Parse {
                    line,
                    message: format!("bad pm2.5 value '{s}'"),
                })?;
                if !(v >= 0.0) {
                    return Err(EmmbError::Parse { line, message: format!("negative pm2.5 value {v}") });
                }
                Some(v)
            }
        };
        let cbwd = raw.cbwd.parse().map_err(|message| EmmbError::Parse { line, message })?;
        if raw.hour > 23 {
            return Err(EmmbError::Parse { line, message: format!("hour {} out of range", raw.hour) });
        }
        out.push(HourlyRecord {
            year: raw.year,
            month: raw.month,
            day: raw.day,
            hour: raw.hour,
            pm25,
            dewp: raw.dewp,
            temp: raw.temp,
            pres: raw.pres,
            cbwd,
            iws: raw.iws,
            is_hours: raw.is_hours,
            ir_hours: raw.ir_hours,
        });
    }
    Ok(out)
}

/// Hourly wind speed from the cumulated `Iws`.
///
/// A segment starts when the direction changes or `Iws` drops below its predecessor; the
/// head hour's speed is its `Iws`, later hours take first differences.
pub fn recover_hourly_wind(hourly: &[HourlyRecord]) -> Result<Vec<f64>> {
    let mut speeds = Vec::with_capacity(hourly.len());
    let mut prev: Option<&HourlyRecord> = None;
    for h in hourly {
        let speed = match prev {
            Some(p) if p.cbwd == h.cbwd && h.iws >= p.iws => h.iws - p.iws,
            _ => h.iws,
        };
        if speed < 0.0 || !speed.is_finite() {
            return Err(EmmbError::NegativeWindSpeed { timestamp: h.label(), speed });
        }
        speeds.push(speed);
        prev = Some(h);
    }
    Ok(speeds)
}

/// One inclusive heating interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatingPeriod {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Heating intervals by winter. Winters without an entry run from Nov 15 to Mar 15.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingCalendar {
    pub periods: Vec<HeatingPeriod>,
    /// Dates outside this span are rejected.
    pub span: Option<(NaiveDate, NaiveDate)>,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

impl Default for HeatingCalendar {
    fn default() -> Self {
        let periods = [
            ((2009, 11, 15), (2010, 3, 22)),
            ((2010, 11, 15), (2011, 3, 15)),
            ((2011, 11, 15), (2012, 3, 18)),
            ((2012, 11, 3), (2013, 3, 17)),
            ((2013, 11, 15), (2014, 3, 15)),
            ((2014, 11, 15), (2015, 3, 15)),
        ]
        .iter()
        .map(|&((a, b, c), (d, e, f))| HeatingPeriod { start: ymd(a, b, c), end: ymd(d, e, f) })
        .collect();
        Self { periods, span: Some((ymd(2010, 1, 1), ymd(2014, 12, 31))) }
    }
}

impl HeatingCalendar {
    pub fn new(periods: Vec<HeatingPeriod>) -> Result<Self> {
        for p in &periods {
            if p.end < p.start {
                return Err(EmmbError::InvalidConfig(format!("heating period {} ends before it starts", p.start)));
            }
        }
        Ok(Self { periods, span: None })
    }

    pub fn with_span(mut self, start: NaiveDate, end: NaiveDate) -> Self {
        self.span = Some((start, end));
        self
    }

    /// Reads `start,end` rows of ISO dates (with a header line).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut periods = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let date = |k: usize| -> Result<NaiveDate> {
                let s = rec.get(k).unwrap_or("");
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|e| EmmbError::Parse { line, message: format!("bad date '{s}': {e}") })
            };
            periods.push(HeatingPeriod { start: date(0)?, end: date(1)? });
        }
        Self::new(periods)
    }

    /// Interval in effect for the winter that contains `date`'s season.
    pub fn period_for(&self, date: NaiveDate) -> HeatingPeriod {
        let winter = if date.month() >= 7 { date.year() } else { date.year() - 1 };
        self.periods
            .iter()
            .copied()
            .find(|p| p.start.year() == winter)
            .unwrap_or(HeatingPeriod { start: ymd(winter, 11, 15), end: ymd(winter + 1, 3, 15) })
    }
}

/// 1 inside the heating interval (inclusive), 0 otherwise.
pub fn heating_indicator(date: NaiveDate, calendar: &HeatingCalendar) -> Result<u8> {
    if let Some((start, end)) = calendar.span {
        if date < start || date > end {
            return Err(EmmbError::DateOutOfSpan {
                date: date.to_string(),
                start: start.to_string(),
                end: end.to_string(),
            });
        }
    }
    let p = calendar.period_for(date);
    Ok(u8::from(p.start <= date && date <= p.end))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRow {
    pub date: NaiveDate,
    pub pm25_mean: Option<f64>,
    pub pm25_lag4h: Option<f64>,
    pub dewp_mean: f64,
    pub temp_mean: f64,
    pub pres_mean: f64,
    pub ne_iws_inc: f64,
    pub nw_iws_inc: f64,
    pub se_iws_inc: f64,
    pub cv_hours: u32,
    pub rain_hours_48h: u32,
    pub heating: u8,
}

pub const MIN_VALID_HOURS: usize = 18;
pub const MIN_VALID_LAG_HOURS: usize = 3;

fn mean_if(values: impl Iterator<Item = Option<f64>>, min: usize) -> Option<f64> {
    let (sum, count) = values.flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count >= min).then(|| sum / count as f64)
}

fn check_grid(hourly: &[HourlyRecord]) -> Result<()> {
    let first = hourly.first().ok_or(EmmbError::Empty("hourly records"))?;
    let bad_ts = |h: &HourlyRecord| EmmbError::HourlyGrid(format!("invalid timestamp {}", h.label()));
    let mut prev = first.timestamp().ok_or_else(|| bad_ts(first))?;
    if first.hour != 0 {
        return Err(EmmbError::HourlyGrid(format!("first day starts at {} instead of hour 0", first.label())));
    }
    for h in &hourly[1..] {
        let ts = h.timestamp().ok_or_else(|| bad_ts(h))?;
        if ts - prev != Duration::hours(1) {
            return Err(EmmbError::HourlyGrid(format!("gap or disorder before {}", h.label())));
        }
        prev = ts;
    }
    let last = hourly.last().expect("non-empty");
    if last.hour != 23 {
        return Err(EmmbError::HourlyGrid(format!("last day ends at {} instead of hour 23", last.label())));
    }
    Ok(())
}

/// Daily rows from a complete hourly grid (every day has its 24 hours).
///
/// The calendar's span, when unset, becomes the span of the data.
pub fn aggregate_daily(hourly: &[HourlyRecord], calendar: &HeatingCalendar) -> Result<Vec<DailyRow>> {
    check_grid(hourly)?;
    let speeds = recover_hourly_wind(hourly)?;
    let mut calendar = calendar.clone();
    if calendar.span.is_none() {
        let d0 = hourly[0].date().expect("checked");
        let d1 = hourly[hourly.len() - 1].date().expect("checked");
        calendar.span = Some((d0, d1));
    }

    let mut rows = Vec::with_capacity(hourly.len() / 24);
    let mut prev_day: Option<(&[HourlyRecord], u32)> = None;
    for (d, (day, day_speeds)) in hourly.chunks(24).zip(speeds.chunks(24)).enumerate() {
        let date = day[0].date().expect("checked");
        let rain_today = day.iter().filter(|h| h.ir_hours > 0).count() as u32;
        let n = 24.0;
        let dir_sum = |dir: WindDir| {
            day.iter().zip(day_speeds).filter(|(h, _)| h.cbwd == dir).map(|(_, s)| s).sum::<f64>()
        };
        let (lag, rain_prev) = match prev_day {
            Some((p, r)) => (mean_if(p[20..].iter().map(|h| h.pm25), MIN_VALID_LAG_HOURS), r),
            None => (None, 0),
        };
        debug_assert_eq!(rows.len(), d);
        rows.push(DailyRow {
            date,
            pm25_mean: mean_if(day.iter().map(|h| h.pm25), MIN_VALID_HOURS),
            pm25_lag4h: lag,
            dewp_mean: day.iter().map(|h| h.dewp).sum::<f64>() / n,
            temp_mean: day.iter().map(|h| h.temp).sum::<f64>() / n,
            pres_mean: day.iter().map(|h| h.pres).sum::<f64>() / n,
            ne_iws_inc: dir_sum(WindDir::NE),
            nw_iws_inc: dir_sum(WindDir::NW),
            se_iws_inc: dir_sum(WindDir::SE),
            cv_hours: day.iter().filter(|h| h.cbwd == WindDir::Cv).count() as u32,
            rain_hours_48h: rain_prev + rain_today,
            heating: heating_indicator(date, &calendar)?,
        });
        prev_day = Some((day, rain_today));
    }
    Ok(rows)
}

/// Month sets for the SE wind interactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seasons {
    pub summer_months: Vec<u32>,
    pub winter_months: Vec<u32>,
}

impl Default for Seasons {
    fn default() -> Self {
        Self { summer_months: vec![6, 7, 8], winter_months: vec![12, 1, 2] }
    }
}

pub const DESIGN_COLUMNS: [&str; 12] = [
    "pm25_lag4h",
    "heating",
    "DEWP_mean",
    "TEMP_mean",
    "PRES_mean",
    "rain_48h_log1p",
    "NE_Iws_inc",
    "NW_Iws_inc",
    "SE_Iws_inc",
    "cv_hours",
    "SE_Summer",
    "SE_Winter",
];

pub const RESPONSE_COLUMN: &str = "pm25_mean";

/// Names of the centered columns, in design order.
pub const CENTERED_COLUMNS: [&str; 8] = [
    "DEWP_mean",
    "TEMP_mean",
    "PRES_mean",
    "rain_48h_log1p",
    "NE_Iws_inc",
    "NW_Iws_inc",
    "SE_Iws_inc",
    "cv_hours",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMean {
    pub name: String,
    pub mean: f64,
}

/// Everything needed to rebuild or extend the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetadata {
    pub centering_means: Vec<ColumnMean>,
    pub heating_calendar: HeatingCalendar,
    pub seasons: Seasons,
    pub daily_rows: usize,
    pub dropped_rows: usize,
    pub complete_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmDesign {
    pub data: Dataset,
    pub dates: Vec<NaiveDate>,
    pub metadata: DesignMetadata,
}

/// Complete-case design with training-sample centering means.
pub fn engineer_features(daily: &[DailyRow], seasons: &Seasons, calendar: &HeatingCalendar) -> Result<PmDesign> {
    engineer_features_with(daily, seasons, calendar, None)
}

/// Like [`engineer_features`], but centers with the given means (in [`CENTERED_COLUMNS`]
/// order) instead of the sample means, as when extending a fitted design to new days.
pub fn engineer_features_with(
    daily: &[DailyRow],
    seasons: &Seasons,
    calendar: &HeatingCalendar,
    means: Option<&[f64]>,
) -> Result<PmDesign> {
    let complete: Vec<&DailyRow> = daily.iter().filter(|r| r.pm25_mean.is_some() && r.pm25_lag4h.is_some()).collect();
    if complete.is_empty() {
        return Err(EmmbError::Empty("complete-case daily rows"));
    }
    let n = complete.len();
    let raw: Vec<[f64; 8]> = complete
        .iter()
        .map(|r| {
            [
                r.dewp_mean,
                r.temp_mean,
                r.pres_mean,
                (r.rain_hours_48h as f64).ln_1p(),
                r.ne_iws_inc,
                r.nw_iws_inc,
                r.se_iws_inc,
                r.cv_hours as f64,
            ]
        })
        .collect();
    let centers: Vec<f64> = match means {
        Some(m) if m.len() != CENTERED_COLUMNS.len() => {
            return Err(EmmbError::DimensionMismatch {
                context: "centering means".into(),
                expected: CENTERED_COLUMNS.len(),
                found: m.len(),
            })
        }
        Some(m) => m.to_vec(),
        None => (0..8).map(|c| raw.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect(),
    };

    let mut x = DMatrix::zeros(n, DESIGN_COLUMNS.len());
    let mut y = DVector::zeros(n);
    for (i, (row, vals)) in complete.iter().zip(&raw).enumerate() {
        x[(i, 0)] = row.pm25_lag4h.expect("complete case");
        x[(i, 1)] = f64::from(row.heating);
        for c in 0..8 {
            x[(i, 2 + c)] = vals[c] - centers[c];
        }
        let month = row.date.month();
        let se = x[(i, 8)];
        x[(i, 10)] = if seasons.summer_months.contains(&month) { se } else { 0.0 };
        x[(i, 11)] = if seasons.winter_months.contains(&month) { se } else { 0.0 };
        y[i] = row.pm25_mean.expect("complete case");
    }
    let names = DESIGN_COLUMNS.iter().map(|s| s.to_string()).collect();
    Ok(PmDesign {
        data: Dataset::new(x, y, names)?,
        dates: complete.iter().map(|r| r.date).collect(),
        metadata: DesignMetadata {
            centering_means: CENTERED_COLUMNS
                .iter()
                .zip(&centers)
                .map(|(name, &mean)| ColumnMean { name: name.to_string(), mean })
                .collect(),
            heating_calendar: calendar.clone(),
            seasons: seasons.clone(),
            daily_rows: daily.len(),
            dropped_rows: daily.len() - n,
            complete_rows: n,
        },
    })
}

/// Read, aggregate and engineer in one pass.
pub fn prepare_design<R: Read>(reader: R, calendar: &HeatingCalendar, seasons: &Seasons) -> Result<PmDesign> {
    let hourly = read_hourly_csv(reader)?;
    let daily = aggregate_daily(&hourly, calendar)?;
    engineer_features(&daily, seasons, calendar)
}

/// Design CSV: `date`, the twelve covariates, then the response. Values at full precision.
pub fn design_to_csv(design: &PmDesign) -> String {
    let mut out = String::from("date");
    for name in design.data.names() {
        out.push(',');
        out.push_str(name);
    }
    out.push(',');
    out.push_str(RESPONSE_COLUMN);
    out.push('\n');
    let (x, y) = (design.data.x(), design.data.y());
    for (i, date) in design.dates.iter().enumerate() {
        out.push_str(&date.to_string());
        for j in 0..x.ncols() {
            out.push_str(&format!(",{}", x[(i, j)]));
        }
        out.push_str(&format!(",{}\n", y[i]));
    }
    out
}
