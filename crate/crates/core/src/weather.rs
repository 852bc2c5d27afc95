//! Hourly heating-season weather: loading, synthesis and climate statistics.
//!
//! A season starts on December 15 at hour 0 and runs for 2002 hours. Records
//! carry only outdoor temperature and global horizontal irradiance (GHI);
//! orientation-specific flux is derived by the thermal model.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Hours in a full heating season (83 days plus the tail of an 84th).
pub const SEASON_HOURS: usize = 2002;
/// Day of year of December 15 in a non-leap year.
pub const SEASON_START_DAY: u32 = 349;
/// Site latitude used for all solar geometry.
pub const LATITUDE_DEG: f64 = 35.0;
/// City whose season is held out for testing.
pub const TEST_CITY: &str = "Yuncheng";

const DIURNAL_AMPLITUDE_FRACTION: f64 = 0.6;
const AR_PERSISTENCE: f64 = 0.9;
// Outdoor temperature peaks mid-afternoon.
const DIURNAL_PEAK_HOUR: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub hour_index: u32,
    pub hour_of_day: u32,
    pub day_of_year: u32,
    /// Outdoor dry-bulb temperature, degC.
    pub t_out: f64,
    /// Global horizontal irradiance, W/m2.
    pub ghi: f64,
}

impl WeatherRecord {
    pub fn solar_position(&self) -> SolarPosition {
        solar_position(self.day_of_year, f64::from(self.hour_of_day))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub city: String,
    pub records: Vec<WeatherRecord>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks every series-level invariant. Returns the first broken rule.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.records.first() else {
            return Ok(());
        };
        // hour_of_day = (hour_index + offset) mod 24, offset fixed by row 0
        let offset = (first.hour_of_day + 24 - first.hour_index % 24) % 24;
        for (i, r) in self.records.iter().enumerate() {
            let line = Some(i as u64 + 2);
            let fail = |rule: &str| Error::Invariant {
                rule: rule.to_string(),
                line,
            };
            if i > 0 && r.hour_index != self.records[i - 1].hour_index + 1 {
                return Err(fail("hour_index must increase by exactly 1"));
            }
            if r.hour_of_day > 23 {
                return Err(fail("hour_of_day must lie in 0..=23"));
            }
            if (r.hour_index + offset) % 24 != r.hour_of_day {
                return Err(fail("hour_of_day must equal hour_index mod 24"));
            }
            if !(1..=366).contains(&r.day_of_year) {
                return Err(fail("day_of_year must lie in 1..=366"));
            }
            if !r.t_out.is_finite() || !r.ghi.is_finite() {
                return Err(fail("values must be finite"));
            }
            if r.ghi < 0.0 {
                return Err(fail("ghi must be non-negative"));
            }
            if r.ghi > 0.0 && r.solar_position().elevation <= 0.0 {
                return Err(fail("ghi must be zero when the sun is below the horizon"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimateStats {
    pub mean_t_out: f64,
    pub std_t_out: f64,
    pub mean_daily_max_ghi: f64,
    pub std_daily_max_ghi: f64,
}

impl ClimateStats {
    fn validate(&self) -> Result<()> {
        let fields = [
            self.mean_t_out,
            self.std_t_out,
            self.mean_daily_max_ghi,
            self.std_daily_max_ghi,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("climate stats must be finite".into()));
        }
        if self.std_t_out < 0.0 || self.std_daily_max_ghi < 0.0 {
            return Err(Error::InvalidInput(
                "climate stats standard deviations must be >= 0".into(),
            ));
        }
        if self.mean_daily_max_ghi < 0.0 {
            return Err(Error::InvalidInput("mean daily max ghi must be >= 0".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Solar geometry

/// Sun position; angles in radians. Azimuth is measured from due south,
/// positive towards the west.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    pub elevation: f64,
    pub azimuth: f64,
}

pub fn declination(day_of_year: u32) -> f64 {
    (23.45_f64).to_radians() * (2.0 * PI * (284.0 + f64::from(day_of_year)) / 365.0).sin()
}

/// Position of the sun at `solar_hour` (local solar time, 12 = solar noon).
pub fn solar_position(day_of_year: u32, solar_hour: f64) -> SolarPosition {
    let lat = LATITUDE_DEG.to_radians();
    let decl = declination(day_of_year);
    let hour_angle = (15.0 * (solar_hour - 12.0)).to_radians();
    let sin_el = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    let elevation = sin_el.clamp(-1.0, 1.0).asin();
    let cos_el = elevation.cos().max(1e-9);
    let sin_az = decl.cos() * hour_angle.sin() / cos_el;
    let cos_az = (sin_el * lat.sin() - decl.sin()) / (cos_el * lat.cos());
    SolarPosition {
        elevation,
        azimuth: sin_az.atan2(cos_az),
    }
}

/// Haurwitz clear-sky GHI, zero below the horizon.
pub fn clear_sky_ghi(elevation: f64) -> f64 {
    if elevation <= 0.0 {
        return 0.0;
    }
    let s = elevation.sin();
    1098.0 * s * (-0.057 / s).exp()
}

// ---------------------------------------------------------------------------
// CSV I/O

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    hour_index: u32,
    hour_of_day: u32,
    day_of_year: u32,
    t_out_c: f64,
    ghi_wm2: f64,
}

pub fn load_weather(path: impl AsRef<Path>) -> Result<WeatherSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let city = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_weather(file, city)
}

pub fn read_weather(reader: impl std::io::Read, city: impl Into<String>) -> Result<WeatherSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["hour_index", "hour_of_day", "day_of_year", "t_out_c", "ghi_wm2"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(csv_error)?;
        records.push(WeatherRecord {
            hour_index: row.hour_index,
            hour_of_day: row.hour_of_day,
            day_of_year: row.day_of_year,
            t_out: row.t_out_c,
            ghi: row.ghi_wm2,
        });
    }
    let series = WeatherSeries {
        city: city.into(),
        records,
    };
    series.validate()?;
    Ok(series)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_weather(series: &WeatherSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &series.records {
        w.serialize(CsvRow {
            hour_index: r.hour_index,
            hour_of_day: r.hour_of_day,
            day_of_year: r.day_of_year,
            t_out_c: r.t_out,
            ghi_wm2: r.ghi,
        })
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Synthesis

fn season_calendar(hour: usize) -> (u32, u32) {
    let hour_of_day = (hour % 24) as u32;
    let day = (SEASON_START_DAY as usize - 1 + hour / 24) % 365;
    (hour_of_day, day as u32 + 1)
}

/// Generate a season of hourly weather whose outdoor temperature has exactly
/// the requested mean and standard deviation and whose daily GHI maxima have
/// the requested mean.
///
/// Temperature is a diurnal sinusoid (amplitude 0.6·std) plus AR(1) noise
/// (persistence 0.9), rescaled so the empirical moments hit the targets.
/// GHI is the clear-sky curve times a per-day lognormal cloudiness factor.
pub fn synthesize_weather(stats: &ClimateStats, season_len: usize, seed: u64) -> Result<WeatherSeries> {
    stats.validate()?;
    if season_len < 24 {
        return Err(Error::InvalidInput(format!(
            "season length must be at least 24 hours, got {season_len}"
        )));
    }
    let mut rng = rng::rng_from(seed);

    let t_out = synth_temperature(stats, season_len, &mut rng);

    let mut records: Vec<WeatherRecord> = (0..season_len)
        .map(|h| {
            let (hour_of_day, day_of_year) = season_calendar(h);
            WeatherRecord {
                hour_index: h as u32,
                hour_of_day,
                day_of_year,
                t_out: t_out[h],
                ghi: 0.0,
            }
        })
        .collect();
    synth_irradiance(stats, &mut records, &mut rng)?;

    let series = WeatherSeries {
        city: "synthetic".into(),
        records,
    };
    series.validate()?;
    Ok(series)
}

fn synth_temperature(stats: &ClimateStats, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    if stats.std_t_out == 0.0 {
        return vec![stats.mean_t_out; n];
    }
    let amp = DIURNAL_AMPLITUDE_FRACTION * stats.std_t_out;
    let noise_std = (stats.std_t_out.powi(2) - 0.5 * amp * amp).max(0.0).sqrt();
    let innovation = (1.0 - AR_PERSISTENCE * AR_PERSISTENCE).sqrt();
    let mut ar: f64 = rng.sample(StandardNormal);
    let mut dev: Vec<f64> = (0..n)
        .map(|h| {
            let hod = (h % 24) as f64;
            let diurnal = amp * (2.0 * PI * (hod - DIURNAL_PEAK_HOUR + 6.0) / 24.0).sin();
            let z: f64 = rng.sample(StandardNormal);
            ar = AR_PERSISTENCE * ar + innovation * z;
            diurnal + noise_std * ar
        })
        .collect();
    let (m, s) = mean_std(&dev);
    for d in &mut dev {
        *d = if s > 0.0 { (*d - m) / s } else { 0.0 };
    }
    dev.into_iter()
        .map(|d| stats.mean_t_out + stats.std_t_out * d)
        .collect()
}

fn synth_irradiance(stats: &ClimateStats, records: &mut [WeatherRecord], rng: &mut impl Rng) -> Result<()> {
    let clear: Vec<f64> = records
        .iter()
        .map(|r| clear_sky_ghi(r.solar_position().elevation))
        .collect();
    let days = day_groups(records);

    let m = stats.mean_daily_max_ghi;
    let s = stats.std_daily_max_ghi;
    let mut targets: Vec<f64> = if m == 0.0 {
        vec![0.0; days.len()]
    } else if s == 0.0 {
        vec![m; days.len()]
    } else {
        let sigma2 = (1.0 + (s / m).powi(2)).ln();
        let dist = LogNormal::new(m.ln() - 0.5 * sigma2, sigma2.sqrt())
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        days.iter().map(|_| dist.sample(rng)).collect()
    };

    // Rescale so the statistic used by climate_stats hits the target mean.
    let used = stat_days(&days);
    let realised: f64 = used.iter().map(|&d| targets[d]).sum::<f64>() / used.len() as f64;
    if realised > 0.0 {
        for t in &mut targets {
            *t *= m / realised;
        }
    }

    for (d, range) in days.iter().enumerate() {
        let peak = clear[range.clone()].iter().cloned().fold(0.0, f64::max);
        let k = if peak > 0.0 { targets[d] / peak } else { 0.0 };
        for h in range.clone() {
            records[h].ghi = k * clear[h];
        }
    }
    Ok(())
}

/// Contiguous index ranges sharing a day_of_year.
fn day_groups(records: &[WeatherRecord]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || records[i].day_of_year != records[start].day_of_year {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Days entering the daily-max statistics: complete days when any exist.
fn stat_days(days: &[std::ops::Range<usize>]) -> Vec<usize> {
    let full: Vec<usize> = (0..days.len()).filter(|&d| days[d].len() == 24).collect();
    if full.is_empty() {
        (0..days.len()).collect()
    } else {
        full
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean/std of hourly outdoor temperature and of the per-day GHI maxima.
///
/// Standard deviations are population (1/n) values. Only complete days
/// enter the GHI statistics unless the series has none.
pub fn climate_stats(series: &WeatherSeries) -> Result<ClimateStats> {
    if series.is_empty() {
        return Err(Error::InvalidInput("empty weather series".into()));
    }
    let temps: Vec<f64> = series.records.iter().map(|r| r.t_out).collect();
    let (mean_t_out, std_t_out) = mean_std(&temps);
    let days = day_groups(&series.records);
    let maxima: Vec<f64> = stat_days(&days)
        .into_iter()
        .map(|d| {
            series.records[days[d].clone()]
                .iter()
                .map(|r| r.ghi)
                .fold(0.0, f64::max)
        })
        .collect();
    let (mean_daily_max_ghi, std_daily_max_ghi) = mean_std(&maxima);
    Ok(ClimateStats {
        mean_t_out,
        std_t_out,
        mean_daily_max_ghi,
        std_daily_max_ghi,
    })
}

// ---------------------------------------------------------------------------
// City table

/// Climate statistics per city, keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CityTable {
    pub cities: BTreeMap<String, ClimateStats>,
}

impl Default for CityTable {
    fn default() -> Self {
        Self::parse(include_str!("cities.toml")).expect("bundled city table is valid")
    }
}

impl CityTable {
    pub fn parse(text: &str) -> Result<Self> {
        let table: CityTable = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, s) in &table.cities {
            s.validate()
                .map_err(|e| Error::Config(format!("city {name}: {e}")))?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, city: &str) -> Result<&ClimateStats> {
        self.cities
            .get(city)
            .ok_or_else(|| Error::Config(format!("unknown city `{city}`")))
    }

    /// Every city except the held-out test city.
    pub fn training_cities(&self) -> Vec<String> {
        self.cities
            .keys()
            .filter(|c| c.as_str() != TEST_CITY)
            .cloned()
            .collect()
    }

    /// Synthesize a city's season with a seed derived from `seed` and the name.
    pub fn synthesize(&self, city: &str, season_len: usize, seed: u64) -> Result<WeatherSeries> {
        let stats = self.get(city)?;
        let mut series = synthesize_weather(stats, season_len, rng::derive_seed(seed, city))?;
        series.city = city.to_string();
        Ok(series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: f64, std: f64, ghi: f64, ghi_std: f64) -> ClimateStats {
        ClimateStats {
            mean_t_out: mean,
            std_t_out: std,
            mean_daily_max_ghi: ghi,
            std_daily_max_ghi: ghi_std,
        }
    }

    #[test]
    fn yuncheng_round_trip() {
        let table = CityTable::default();
        let s = table.get("Yuncheng").unwrap();
        let series = synthesize_weather(s, SEASON_HOURS, 7).unwrap();
        assert_eq!(series.len(), 2002);
        let got = climate_stats(&series).unwrap();
        assert!((2.03..=3.03).contains(&got.mean_t_out), "{got:?}");
        assert!((got.std_t_out - 5.81).abs() <= 0.5);
        assert!((got.mean_daily_max_ghi - 631.0).abs() <= 63.1);
    }

    #[test]
    fn zero_std_gives_constant_temperature() {
        let series = synthesize_weather(&stats(5.0, 0.0, 300.0, 50.0), 200, 1).unwrap();
        assert!(series.records.iter().all(|r| r.t_out == 5.0));
        let got = climate_stats(&series).unwrap();
        assert_eq!(got.mean_t_out, 5.0);
        assert_eq!(got.std_t_out, 0.0);
    }

    #[test]
    fn negative_std_rejected() {
        assert!(synthesize_weather(&stats(5.0, -1.0, 300.0, 50.0), 200, 1).is_err());
        assert!(synthesize_weather(&stats(5.0, 1.0, 300.0, 50.0), 23, 1).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let s = stats(1.0, 4.0, 500.0, 200.0);
        let a = synthesize_weather(&s, 500, 99).unwrap();
        let b = synthesize_weather(&s, 500, 99).unwrap();
        let c = synthesize_weather(&s, 500, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn two_day_daily_max() {
        let mk = |h: u32, ghi: f64| WeatherRecord {
            hour_index: h,
            hour_of_day: h % 24,
            day_of_year: 1 + h / 24,
            t_out: 0.0,
            ghi,
        };
        let mut records: Vec<_> = (0..48).map(|h| mk(h, 0.0)).collect();
        records[12].ghi = 400.0;
        records[36].ghi = 600.0;
        let got = climate_stats(&WeatherSeries {
            city: "x".into(),
            records,
        })
        .unwrap();
        assert_eq!(got.mean_daily_max_ghi, 500.0);
        assert_eq!(got.std_daily_max_ghi, 100.0);
    }

    #[test]
    fn empty_series_rejected() {
        let empty = WeatherSeries {
            city: "x".into(),
            records: vec![],
        };
        assert!(climate_stats(&empty).is_err());
    }

    #[test]
    fn calendar_wraps_new_year() {
        assert_eq!(season_calendar(0), (0, 349));
        assert_eq!(season_calendar(17 * 24), (0, 1));
        assert_eq!(season_calendar(17 * 24 - 1), (23, 365));
    }

    #[test]
    fn noon_is_highest_and_night_is_dark() {
        let noon = solar_position(360, 12.0);
        assert!(noon.elevation > 0.5 && noon.elevation < 0.6);
        assert!(noon.azimuth.abs() < 1e-9);
        assert!(solar_position(360, 3.0).elevation < 0.0);
        let morning = solar_position(360, 9.0);
        assert!(morning.azimuth < 0.0, "morning sun is east of south");
    }
}
