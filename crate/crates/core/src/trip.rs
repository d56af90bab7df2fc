//! GPS trip-log data model, validation, and CSV ingestion.
//!
//! A trip log is the multi-trip GPS record for one certified interval:
//! 1 s samples of speed and altitude, each labelled with a trip number and
//! an absolute timestamp. Within a trip the sampling grid is exactly 1 s;
//! between trips the engine is off and gaps are unconstrained. The season
//! of the interval is inferred from the first sample's month.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use thiserror::Error;

/// Exact header line required on GPS CSV files.
pub const GPS_CSV_HEADER: &str = "trip,timestamp,speed_mps,altitude_m";

#[derive(Debug, Error)]
pub enum TripLogError {
    #[error("trip log contains no samples")]
    Empty,
    #[error("row {row}: expected header `{GPS_CSV_HEADER}`, found `{found}`")]
    BadHeader { row: u64, found: String },
    #[error("row {row}: {message}")]
    MalformedRow { row: u64, message: String },
    #[error("row {row}: negative speed {speed_mps} m/s")]
    NegativeSpeed { row: u64, speed_mps: f64 },
    #[error("row {row}: trip numbers must be >= 1")]
    ZeroTripNumber { row: u64 },
    #[error("row {row}: trip number {found} decreases from {previous}")]
    TripOrder { row: u64, found: u32, previous: u32 },
    #[error("trip {trip} at {timestamp}: samples within a trip must be spaced exactly 1 s")]
    SpacingViolation { trip: u32, timestamp: DateTime<Utc> },
    #[error("row {row}: timestamp {timestamp} does not increase")]
    TimestampOrder { row: u64, timestamp: DateTime<Utc> },
    #[error("trip {trip} has fewer than 2 samples")]
    ShortTrip { trip: u32 },
    #[error("timestamps must have whole-second resolution (row {row})")]
    SubSecondTimestamp { row: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Warmer or cooler period of the year; conditions the auxiliary-power model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Season {
    Summer,
    Winter,
}

impl Season {
    pub fn as_str(self) -> &'static str {
        match self {
            Season::Summer => "summer",
            Season::Winter => "winter",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summer" | "s" => Ok(Season::Summer),
            "winter" | "w" => Ok(Season::Winter),
            other => Err(format!("unknown season `{other}` (expected summer or winter)")),
        }
    }
}

/// Assignment of calendar months to seasons.
///
/// The default maps November through March to winter and April through
/// October to summer. Other climates can override it from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonthMap {
    seasons: [Season; 12],
}

impl Default for MonthMap {
    fn default() -> Self {
        MonthMap::from_winter_months(&[11, 12, 1, 2, 3]).unwrap()
    }
}

impl MonthMap {
    /// Builds a map where the listed months (1-12) are winter and the rest
    /// summer.
    pub fn from_winter_months(months: &[u32]) -> Result<Self, String> {
        let mut seasons = [Season::Summer; 12];
        for &m in months {
            if !(1..=12).contains(&m) {
                return Err(format!("month {m} out of range 1..=12"));
            }
            seasons[(m - 1) as usize] = Season::Winter;
        }
        Ok(MonthMap { seasons })
    }

    pub fn season_of_month(&self, month: u32) -> Season {
        assert!((1..=12).contains(&month), "month out of range");
        self.seasons[(month - 1) as usize]
    }
}

/// One 1 s GPS sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsSample {
    pub trip_number: u32,
    pub timestamp: DateTime<Utc>,
    pub speed_mps: f64,
    pub altitude_m: f64,
}

/// Validated multi-trip GPS record for one certified interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TripLog {
    samples: Vec<GpsSample>,
    trip_bounds: Vec<(usize, usize)>, // half-open sample ranges, one per trip
    season: Season,
}

/// Season of the interval under `map`: the month of the first sample wins,
/// so an interval spanning a season boundary gets a single label.
pub fn infer_season(samples: &[GpsSample], map: &MonthMap) -> Result<Season, TripLogError> {
    let first = samples.first().ok_or(TripLogError::Empty)?;
    Ok(map.season_of_month(first.timestamp.month()))
}

impl TripLog {
    /// Validates the samples and builds the log. `row_offset` shifts reported
    /// row numbers so CSV errors point at file lines; plain constructors pass 0.
    fn new_with_offset(
        samples: Vec<GpsSample>,
        map: &MonthMap,
        row_offset: u64,
    ) -> Result<Self, TripLogError> {
        if samples.is_empty() {
            return Err(TripLogError::Empty);
        }
        let row = |i: usize| row_offset + i as u64 + 1;

        let mut trip_bounds: Vec<(usize, usize)> = Vec::new();
        let mut trip_start = 0usize;
        for (i, s) in samples.iter().enumerate() {
            if !s.speed_mps.is_finite() || !s.altitude_m.is_finite() {
                return Err(TripLogError::MalformedRow {
                    row: row(i),
                    message: "speed and altitude must be finite".into(),
                });
            }
            if s.speed_mps < 0.0 {
                return Err(TripLogError::NegativeSpeed {
                    row: row(i),
                    speed_mps: s.speed_mps,
                });
            }
            if s.trip_number == 0 {
                return Err(TripLogError::ZeroTripNumber { row: row(i) });
            }
            if s.timestamp.nanosecond() != 0 {
                return Err(TripLogError::SubSecondTimestamp { row: row(i) });
            }
            if i == 0 {
                continue;
            }
            let prev = &samples[i - 1];
            if s.trip_number < prev.trip_number {
                return Err(TripLogError::TripOrder {
                    row: row(i),
                    found: s.trip_number,
                    previous: prev.trip_number,
                });
            }
            if s.timestamp <= prev.timestamp {
                return Err(TripLogError::TimestampOrder {
                    row: row(i),
                    timestamp: s.timestamp,
                });
            }
            if s.trip_number == prev.trip_number {
                if s.timestamp - prev.timestamp != Duration::seconds(1) {
                    return Err(TripLogError::SpacingViolation {
                        trip: s.trip_number,
                        timestamp: s.timestamp,
                    });
                }
            } else {
                trip_bounds.push((trip_start, i));
                trip_start = i;
            }
        }
        trip_bounds.push((trip_start, samples.len()));

        for &(a, b) in &trip_bounds {
            if b - a < 2 {
                return Err(TripLogError::ShortTrip {
                    trip: samples[a].trip_number,
                });
            }
        }

        let season = infer_season(&samples, map)?;
        Ok(TripLog {
            samples,
            trip_bounds,
            season,
        })
    }

    pub fn new(samples: Vec<GpsSample>, map: &MonthMap) -> Result<Self, TripLogError> {
        Self::new_with_offset(samples, map, 0)
    }

    /// Parses a GPS CSV stream (header `trip,timestamp,speed_mps,altitude_m`,
    /// ISO-8601 UTC timestamps, UTF-8, LF or CRLF).
    pub fn from_csv_reader<R: Read>(reader: R, map: &MonthMap) -> Result<Self, TripLogError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);

        let mut records = rdr.records();
        let header = match records.next() {
            None => return Err(TripLogError::Empty),
            Some(rec) => rec.map_err(csv_error)?,
        };
        let header_line = header.iter().collect::<Vec<_>>().join(",");
        if header_line != GPS_CSV_HEADER {
            return Err(TripLogError::BadHeader {
                row: 1,
                found: header_line,
            });
        }

        let mut samples = Vec::new();
        for (i, rec) in records.enumerate() {
            let row = i as u64 + 2;
            let rec = rec.map_err(csv_error)?;
            if rec.len() != 4 {
                return Err(TripLogError::MalformedRow {
                    row,
                    message: format!("expected 4 fields, found {}", rec.len()),
                });
            }
            let trip_number: u32 = rec[0].trim().parse().map_err(|_| TripLogError::MalformedRow {
                row,
                message: format!("invalid trip number `{}`", &rec[0]),
            })?;
            let timestamp = DateTime::parse_from_rfc3339(rec[1].trim())
                .map_err(|e| TripLogError::MalformedRow {
                    row,
                    message: format!("invalid timestamp `{}`: {e}", &rec[1]),
                })?
                .with_timezone(&Utc);
            let speed_mps: f64 = rec[2].trim().parse().map_err(|_| TripLogError::MalformedRow {
                row,
                message: format!("invalid speed `{}`", &rec[2]),
            })?;
            let altitude_m: f64 = rec[3].trim().parse().map_err(|_| TripLogError::MalformedRow {
                row,
                message: format!("invalid altitude `{}`", &rec[3]),
            })?;
            samples.push(GpsSample {
                trip_number,
                timestamp,
                speed_mps,
                altitude_m,
            });
        }
        if samples.is_empty() {
            return Err(TripLogError::Empty);
        }
        Self::new_with_offset(samples, map, 1)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, map: &MonthMap) -> Result<Self, TripLogError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), map)
    }

    pub fn to_csv_writer<W: Write>(&self, mut w: W) -> Result<(), TripLogError> {
        writeln!(w, "{GPS_CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{}",
                s.trip_number,
                s.timestamp.format("%Y-%m-%dT%H:%M:%SZ"),
                s.speed_mps,
                s.altitude_m
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_csv_writer(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn samples(&self) -> &[GpsSample] {
        &self.samples
    }

    /// Iterates over the per-trip sample slices in order.
    pub fn trips(&self) -> impl Iterator<Item = &[GpsSample]> {
        self.trip_bounds.iter().map(move |&(a, b)| &self.samples[a..b])
    }

    /// Number of distinct trips in the log.
    pub fn trip_count(&self) -> usize {
        self.trip_bounds.len()
    }

    /// Cumulative driving time in seconds: the sum of (samples - 1) over
    /// trips, i.e. the number of 1 s steps.
    pub fn total_duration_s(&self) -> u64 {
        self.trip_bounds.iter().map(|&(a, b)| (b - a - 1) as u64).sum()
    }

    /// Total path distance in metres (speed integrated over 1 s steps; the
    /// last sample of each trip contributes no step).
    pub fn total_distance_m(&self) -> f64 {
        self.trips()
            .map(|t| t[..t.len() - 1].iter().map(|s| s.speed_mps).sum::<f64>())
            .sum()
    }

    pub fn season(&self) -> Season {
        self.season
    }

    /// Re-labels the season, e.g. from a CLI `--season` override.
    pub fn with_season(mut self, season: Season) -> Self {
        self.season = season;
        self
    }
}

fn csv_error(e: csv::Error) -> TripLogError {
    let row = e.position().map(|p| p.line()).unwrap_or(0);
    TripLogError::MalformedRow {
        row,
        message: e.to_string(),
    }
}
