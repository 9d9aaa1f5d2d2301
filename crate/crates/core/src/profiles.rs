//! Half-hourly load, solar, and wholesale-price time series: CSV ingestion,
//! synthetic generation, and cross-series alignment.

use std::path::Path;

use chrono::{DateTime, FixedOffset, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default slot width. The market, profiles, and network all advance on the
/// same half-hourly grid.
pub const DEFAULT_STEP_MINUTES: u32 = 30;

/// Slots per day at the default half-hourly resolution.
pub const SLOTS_PER_DAY: usize = 48;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header `timestamp,value`, found `{found}`")]
    Header { path: String, found: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: spacing is {found} minutes, expected {expected} minutes")]
    Spacing { line: u64, expected: i64, found: i64 },
    #[error("line {line}: negative power value {value}")]
    NegativePower { line: u64, value: f64 },
    #[error("series misaligned: {0}")]
    Alignment(String),
    #[error("invalid series: {0}")]
    Invalid(String),
}

/// A uniformly sampled series. Power series are in kW, price series in
/// GBP/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub start: DateTime<FixedOffset>,
    pub step_minutes: u32,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        start: DateTime<FixedOffset>,
        step_minutes: u32,
        values: Vec<f64>,
    ) -> Result<Self, ProfileError> {
        if step_minutes == 0 {
            return Err(ProfileError::Invalid("step_minutes must be > 0".into()));
        }
        if values.is_empty() {
            return Err(ProfileError::Invalid("series must have length >= 1".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(ProfileError::Invalid(format!("non-finite value {v}")));
        }
        Ok(Self { start, step_minutes, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Slot width in hours.
    pub fn dt_hours(&self) -> f64 {
        f64::from(self.step_minutes) / 60.0
    }

    fn truncate(&mut self, len: usize) {
        self.values.truncate(len);
    }
}

/// What a CSV column holds; power series must be non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Power,
    Price,
}

/// Which synthetic profile shape to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Load,
    Solar,
}

/// Everything one scenario needs: one load and one solar series per
/// prosumer, the wholesale price series used for network tariffs, and the
/// energy service provider's import/export prices bounding the market.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub loads: Vec<TimeSeries>,
    pub solars: Vec<TimeSeries>,
    pub wholesale: TimeSeries,
    /// ESP import price (GBP/kWh); upper bound on community prices.
    pub esp_import_price: f64,
    /// ESP export price (GBP/kWh); lower bound on community prices.
    pub esp_export_price: f64,
}

impl ScenarioData {
    fn all_series(&self) -> impl Iterator<Item = &TimeSeries> {
        self.loads
            .iter()
            .chain(self.solars.iter())
            .chain(std::iter::once(&self.wholesale))
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.loads.len() != self.solars.len() {
            return Err(ProfileError::Alignment(format!(
                "{} load series vs {} solar series",
                self.loads.len(),
                self.solars.len()
            )));
        }
        if self.loads.is_empty() {
            return Err(ProfileError::Invalid("scenario has no prosumers".into()));
        }
        if !(self.esp_export_price >= 0.0 && self.esp_import_price >= self.esp_export_price) {
            return Err(ProfileError::Invalid(format!(
                "ESP prices must satisfy import >= export >= 0, got import {} export {}",
                self.esp_import_price, self.esp_export_price
            )));
        }
        Ok(())
    }

    /// Common horizon length in slots (after [`align`]).
    pub fn horizon(&self) -> usize {
        self.loads.first().map_or(0, TimeSeries::len)
    }

    pub fn dt_hours(&self) -> f64 {
        self.wholesale.dt_hours()
    }
}

/// Read a `timestamp,value` CSV into a validated series. Timestamps must be
/// RFC 3339, strictly increasing, and uniformly spaced.
pub fn load_profile_csv(path: impl AsRef<Path>, kind: SeriesKind) -> Result<TimeSeries, ProfileError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => ProfileError::Io { path: path_str.clone(), source },
            other => ProfileError::Parse { line: 1, message: format!("{other:?}") },
        })?;

    {
        let headers = reader
            .headers()
            .map_err(|e| ProfileError::Parse { line: 1, message: e.to_string() })?;
        if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
            return Err(ProfileError::Header {
                path: path_str,
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
    }

    let mut start: Option<DateTime<FixedOffset>> = None;
    let mut prev: Option<DateTime<FixedOffset>> = None;
    let mut step: Option<TimeDelta> = None;
    let mut values = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| ProfileError::Parse {
            line: e.position().map_or(0, csv::Position::line),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != 2 {
            return Err(ProfileError::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let stamp = DateTime::parse_from_rfc3339(&record[0]).map_err(|e| ProfileError::Parse {
            line,
            message: format!("bad timestamp `{}`: {e}", &record[0]),
        })?;
        let value: f64 = record[1].parse().map_err(|e| ProfileError::Parse {
            line,
            message: format!("bad value `{}`: {e}", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(ProfileError::Parse {
                line,
                message: format!("non-finite value {value}"),
            });
        }
        if kind == SeriesKind::Power && value < 0.0 {
            return Err(ProfileError::NegativePower { line, value });
        }

        if let Some(prev) = prev {
            let gap = stamp - prev;
            if gap <= TimeDelta::zero() {
                return Err(ProfileError::Parse {
                    line,
                    message: "timestamps must be strictly increasing".into(),
                });
            }
            match step {
                None => {
                    if gap.num_seconds() % 60 != 0 {
                        return Err(ProfileError::Parse {
                            line,
                            message: format!(
                                "spacing of {} seconds is not a whole number of minutes",
                                gap.num_seconds()
                            ),
                        });
                    }
                    step = Some(gap);
                }
                Some(expected) if gap != expected => {
                    return Err(ProfileError::Spacing {
                        line,
                        expected: expected.num_minutes(),
                        found: gap.num_minutes(),
                    });
                }
                Some(_) => {}
            }
        } else {
            start = Some(stamp);
        }
        prev = Some(stamp);
        values.push(value);
    }

    let start = start.ok_or_else(|| ProfileError::Invalid("file has no data rows".into()))?;
    let step_minutes = step.map_or(DEFAULT_STEP_MINUTES, |d| d.num_minutes() as u32);
    TimeSeries::new(start, step_minutes, values)
}

/// Write a series back out in the same `timestamp,value` format that
/// [`load_profile_csv`] reads. Values round-trip exactly.
pub fn write_profile_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<(), ProfileError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => ProfileError::Io { path: path_str.clone(), source },
        other => ProfileError::Invalid(format!("{other:?}")),
    })?;
    writer
        .write_record(["timestamp", "value"])
        .map_err(|e| ProfileError::Invalid(e.to_string()))?;
    let step = TimeDelta::minutes(i64::from(series.step_minutes));
    for (i, v) in series.values.iter().enumerate() {
        let stamp = series.start + step * i as i32;
        writer
            .write_record([stamp.to_rfc3339(), format!("{v}")])
            .map_err(|e| ProfileError::Invalid(e.to_string()))?;
    }
    writer.flush().map_err(|e| ProfileError::Io { path: path_str, source: e })?;
    Ok(())
}

/// Daylight window for synthetic solar, hours of day.
const SOLAR_RISE_HOUR: f64 = 7.0;
const SOLAR_SET_HOUR: f64 = 17.0;

/// Generate a deterministic half-hourly profile. Solar is a squared-sine
/// daylight arch (zero outside the daylight window) with a per-day cloud
/// factor; load is a base plus morning and evening peaks with seeded noise.
/// Synthetic solar is normalized to a 1 kW installation and scaled by the
/// prosumer's PV capacity when a scenario is assembled.
pub fn synthesize_profiles(seed: u64, days: u32, kind: ProfileKind) -> TimeSeries {
    assert!(days >= 1, "days must be >= 1");
    let salt = match kind {
        ProfileKind::Load => 0x4c4f4144,
        ProfileKind::Solar => 0x534f4c52,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let start = DateTime::parse_from_rfc3339("2017-01-01T00:00:00+00:00").unwrap();
    let mut values = Vec::with_capacity(days as usize * SLOTS_PER_DAY);

    for _ in 0..days {
        // One draw per day keeps day-to-day variation mild and seeded.
        let day_factor: f64 = match kind {
            ProfileKind::Load => 1.0 + 0.1 * (rng.random::<f64>() * 2.0 - 1.0),
            ProfileKind::Solar => 0.35 + 0.65 * rng.random::<f64>(),
        };
        for slot in 0..SLOTS_PER_DAY {
            let hour = (slot as f64 + 0.5) * 0.5;
            let v = match kind {
                ProfileKind::Load => {
                    let bump = |center: f64, width: f64| {
                        (-(hour - center).powi(2) / (2.0 * width * width)).exp()
                    };
                    let shape = 0.12 + 0.55 * bump(7.5, 1.3) + 0.85 * bump(18.5, 1.8);
                    let noise = 1.0 + 0.08 * (rng.random::<f64>() * 2.0 - 1.0);
                    (shape * day_factor * noise).max(0.02)
                }
                ProfileKind::Solar => {
                    if hour <= SOLAR_RISE_HOUR || hour >= SOLAR_SET_HOUR {
                        // Keep the RNG stream aligned across day/night slots.
                        let _ = rng.random::<f64>();
                        0.0
                    } else {
                        let phase = (hour - SOLAR_RISE_HOUR) / (SOLAR_SET_HOUR - SOLAR_RISE_HOUR);
                        let arch = (std::f64::consts::PI * phase).sin().powi(2);
                        let noise = 1.0 + 0.05 * (rng.random::<f64>() * 2.0 - 1.0);
                        (arch * day_factor * noise).max(0.0)
                    }
                }
            };
            values.push(v);
        }
    }
    TimeSeries { start, step_minutes: DEFAULT_STEP_MINUTES, values }
}

/// Truncate every series in the scenario to the shortest common length.
/// Series must already agree on start instant and step; silently stretching
/// or resampling would corrupt every downstream market quantity.
pub fn align(mut scenario: ScenarioData) -> Result<ScenarioData, ProfileError> {
    scenario.validate()?;
    let reference = &scenario.wholesale;
    let (start, step) = (reference.start, reference.step_minutes);
    for series in scenario.all_series() {
        if series.start != start {
            return Err(ProfileError::Alignment(format!(
                "series starts differ: {} vs {}",
                series.start, start
            )));
        }
        if series.step_minutes != step {
            return Err(ProfileError::Alignment(format!(
                "series steps differ: {} min vs {} min",
                series.step_minutes, step
            )));
        }
    }
    let len = scenario.all_series().map(TimeSeries::len).min().unwrap();
    if len == 0 {
        return Err(ProfileError::Invalid("aligned horizon is empty".into()));
    }
    for series in scenario
        .loads
        .iter_mut()
        .chain(scenario.solars.iter_mut())
        .chain(std::iter::once(&mut scenario.wholesale))
    {
        series.truncate(len);
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(
            DateTime::parse_from_rfc3339("2017-01-01T00:00:00+00:00").unwrap(),
            30,
            values,
        )
        .unwrap()
    }

    #[test]
    fn parses_two_row_file() {
        let f = write_temp(
            "timestamp,value\n2017-01-01T00:00:00+00:00,1.5\n2017-01-01T00:30:00+00:00,2.0\n",
        );
        let ts = load_profile_csv(f.path(), SeriesKind::Power).unwrap();
        assert_eq!(ts.step_minutes, 30);
        assert_eq!(ts.values, vec![1.5, 2.0]);
    }

    #[test]
    fn rejects_gap_in_timestamps() {
        let f = write_temp(
            "timestamp,value\n2017-01-01T00:00:00+00:00,1.0\n2017-01-01T00:30:00+00:00,1.0\n2017-01-01T01:30:00+00:00,1.0\n",
        );
        match load_profile_csv(f.path(), SeriesKind::Power) {
            Err(ProfileError::Spacing { expected: 30, found: 60, line }) => assert_eq!(line, 4),
            other => panic!("expected spacing error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_power() {
        let f = write_temp(
            "timestamp,value\n2017-01-01T00:00:00+00:00,1.0\n2017-01-01T00:30:00+00:00,-0.3\n",
        );
        match load_profile_csv(f.path(), SeriesKind::Power) {
            Err(ProfileError::NegativePower { value, .. }) => assert_eq!(value, -0.3),
            other => panic!("expected negativity error, got {other:?}"),
        }
    }

    #[test]
    fn price_series_may_be_negative() {
        let f = write_temp(
            "timestamp,value\n2017-01-01T00:00:00+00:00,0.05\n2017-01-01T00:30:00+00:00,-0.01\n",
        );
        let ts = load_profile_csv(f.path(), SeriesKind::Price).unwrap();
        assert_eq!(ts.values[1], -0.01);
    }

    #[test]
    fn reports_parse_error_with_line() {
        let f = write_temp(
            "timestamp,value\n2017-01-01T00:00:00+00:00,1.0\nnot-a-time,1.0\n",
        );
        match load_profile_csv(f.path(), SeriesKind::Power) {
            Err(ProfileError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let f = write_temp("time,kw\n2017-01-01T00:00:00+00:00,1.0\n");
        assert!(matches!(
            load_profile_csv(f.path(), SeriesKind::Power),
            Err(ProfileError::Header { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let ts = series(vec![1.5, 2.0 / 3.0, 0.0, 1e-9, 123.456789012345]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_profile_csv(&ts, f.path()).unwrap();
        let back = load_profile_csv(f.path(), SeriesKind::Power).unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize_profiles(7, 1, ProfileKind::Solar);
        let b = synthesize_profiles(7, 1, ProfileKind::Solar);
        assert_eq!(a, b);
    }

    #[test]
    fn solar_is_zero_at_night_and_positive_overall() {
        let ts = synthesize_profiles(7, 1, ProfileKind::Solar);
        // 00:00 through 06:00 inclusive.
        for slot in 0..=12 {
            assert_eq!(ts.values[slot], 0.0, "slot {slot} should be dark");
        }
        assert!(ts.values.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn load_has_expected_length_and_positivity() {
        let ts = synthesize_profiles(7, 2, ProfileKind::Load);
        assert_eq!(ts.len(), 96);
        assert!(ts.values.iter().all(|v| *v > 0.0));
    }

    fn scenario(lengths: [usize; 3]) -> ScenarioData {
        ScenarioData {
            loads: vec![series(vec![1.0; lengths[0]])],
            solars: vec![series(vec![0.5; lengths[1]])],
            wholesale: series(vec![0.05; lengths[2]]),
            esp_import_price: 0.05,
            esp_export_price: 0.03,
        }
    }

    #[test]
    fn align_truncates_to_min_length() {
        let aligned = align(scenario([100, 96, 96])).unwrap();
        assert_eq!(aligned.loads[0].len(), 96);
        assert_eq!(aligned.solars[0].len(), 96);
        assert_eq!(aligned.wholesale.len(), 96);
    }

    #[test]
    fn align_rejects_mismatched_step() {
        let mut sc = scenario([48, 48, 48]);
        sc.wholesale.step_minutes = 60;
        assert!(matches!(align(sc), Err(ProfileError::Alignment(_))));
    }

    #[test]
    fn align_rejects_mismatched_start() {
        let mut sc = scenario([48, 48, 48]);
        sc.loads[0].start = DateTime::parse_from_rfc3339("2017-01-02T00:00:00+00:00").unwrap();
        assert!(matches!(align(sc), Err(ProfileError::Alignment(_))));
    }

    #[test]
    fn align_is_idempotent() {
        let once = align(scenario([100, 96, 97])).unwrap();
        let twice = align(once.clone()).unwrap();
        assert_eq!(once.loads, twice.loads);
        assert_eq!(once.solars, twice.solars);
        assert_eq!(once.wholesale, twice.wholesale);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_preserves_values(values in proptest::collection::vec(0.0f64..1e6, 1..50)) {
            let ts = series(values);
            let f = tempfile::NamedTempFile::new().unwrap();
            write_profile_csv(&ts, f.path()).unwrap();
            let back = load_profile_csv(f.path(), SeriesKind::Power).unwrap();
            proptest::prop_assert_eq!(back, ts);
        }
    }
}
