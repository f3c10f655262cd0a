//! Domain types shared by every layer: region identity and hierarchy, the
//! dataset calendar, tracked variables and rates, and the geocircle frame
//! payload handed to map clients.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("region id needs a non-empty country")]
    EmptyCountry,
    #[error("region id has a county but no state")]
    CountyWithoutState,
    #[error("invalid region id `{0}`")]
    BadRegionId(String),
    #[error("date {date} is outside the calendar [{first}, {last}]")]
    OutOfCalendar {
        date: NaiveDate,
        first: NaiveDate,
        last: NaiveDate,
    },
    #[error("day index {0} is outside the calendar")]
    DayOutOfRange(u32),
    #[error("invalid time window [{start}, {end}] for a calendar of {n_days} days")]
    BadWindow { start: u32, end: u32, n_days: u32 },
    #[error("coordinate ({lat}, {lon}) is outside the valid lat/lon range")]
    BadCoordinate { lat: f64, lon: f64 },
    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },
    #[error("invalid scaling spec: {0}")]
    BadScaling(String),
}

fn canonical_component(raw: &str) -> String {
    raw.trim().to_lowercase().replace('/', "-")
}

/// Hierarchical region key: country, optional state/province, optional
/// county/city. Components are stored trimmed and lowercased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId {
    country: String,
    state: Option<String>,
    county: Option<String>,
}

impl RegionId {
    pub fn new(country: &str, state: Option<&str>, county: Option<&str>) -> Result<Self, ModelError> {
        let country = canonical_component(country);
        if country.is_empty() {
            return Err(ModelError::EmptyCountry);
        }
        let state = state.map(canonical_component).filter(|s| !s.is_empty());
        let county = county.map(canonical_component).filter(|s| !s.is_empty());
        if county.is_some() && state.is_none() {
            return Err(ModelError::CountyWithoutState);
        }
        Ok(RegionId { country, state, county })
    }

    pub fn country(name: &str) -> Result<Self, ModelError> {
        Self::new(name, None, None)
    }

    pub fn level(&self) -> Level {
        match (&self.state, &self.county) {
            (None, _) => Level::Country,
            (Some(_), None) => Level::State,
            (Some(_), Some(_)) => Level::County,
        }
    }

    /// The id one level up, or `None` for a country.
    pub fn parent(&self) -> Option<RegionId> {
        match self.level() {
            Level::Country => None,
            Level::State => Some(RegionId {
                country: self.country.clone(),
                state: None,
                county: None,
            }),
            Level::County => Some(RegionId {
                country: self.country.clone(),
                state: self.state.clone(),
                county: None,
            }),
        }
    }

    pub fn components(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.country.as_str())
            .chain(self.state.as_deref())
            .chain(self.county.as_deref())
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.components().collect();
        f.write_str(&parts.join("/"))
    }
}

impl FromStr for RegionId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        let id = match parts.as_slice() {
            [c] => RegionId::new(c, None, None),
            [c, st] => RegionId::new(c, Some(st), None),
            [c, st, co] => RegionId::new(c, Some(st), Some(co)),
            _ => return Err(ModelError::BadRegionId(s.to_string())),
        }?;
        if id.components().count() != parts.len() {
            return Err(ModelError::BadRegionId(s.to_string()));
        }
        Ok(id)
    }
}

impl Serialize for RegionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Country,
    State,
    County,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Country, Level::State, Level::County];

    pub fn name(self) -> &'static str {
        match self {
            Level::Country => "country",
            Level::State => "state",
            Level::County => "county",
        }
    }

    /// Default detail level for a map zoom: countries below 4, states up to
    /// 7, counties beyond.
    pub fn for_zoom(zoom: f64) -> Level {
        if zoom < 4.0 {
            Level::Country
        } else if zoom <= 7.0 {
            Level::State
        } else {
            Level::County
        }
    }
}

impl FromStr for Level {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "country" => Ok(Level::Country),
            "state" => Ok(Level::State),
            "county" => Ok(Level::County),
            _ => Err(ModelError::UnknownName {
                what: "level",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) || lat.is_nan() || lon.is_nan() {
            return Err(ModelError::BadCoordinate { lat, lon });
        }
        Ok(LatLon { lat, lon })
    }
}

/// Polygon rings as `[lon, lat]` pairs. The first ring is the outer shell,
/// any further rings are holes.
pub type Polygon = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub display_name: String,
    pub level: Level,
    pub anchor: Option<LatLon>,
    pub population: Option<u64>,
    pub parent: Option<RegionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<Polygon>>,
}

impl Region {
    pub fn new(id: RegionId, display_name: impl Into<String>, anchor: Option<LatLon>) -> Self {
        Region {
            level: id.level(),
            parent: id.parent(),
            id,
            display_name: display_name.into(),
            anchor,
            population: None,
            boundary: None,
        }
    }
}

macro_rules! named_enum {
    ($name:ident, $what:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(ModelError::UnknownName { what: $what, value: s.to_string() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Confirmed,
    Deaths,
    Recovered,
    Active,
    Vaccinations,
}

named_enum!(VariableKind, "variable", {
    Confirmed => "confirmed",
    Deaths => "deaths",
    Recovered => "recovered",
    Active => "active",
    Vaccinations => "vaccinations",
});

impl VariableKind {
    pub const ALL: [VariableKind; 5] = [
        VariableKind::Confirmed,
        VariableKind::Deaths,
        VariableKind::Recovered,
        VariableKind::Active,
        VariableKind::Vaccinations,
    ];

    /// Variables read from input files. Active is always derived.
    pub const INGESTED: [VariableKind; 4] = [
        VariableKind::Confirmed,
        VariableKind::Deaths,
        VariableKind::Recovered,
        VariableKind::Vaccinations,
    ];

    pub fn is_derived(self) -> bool {
        self == VariableKind::Active
    }

    pub fn color(self) -> Color {
        match self {
            VariableKind::Confirmed => Color::Black,
            VariableKind::Deaths => Color::Red,
            VariableKind::Active => Color::Yellow,
            VariableKind::Recovered => Color::Green,
            VariableKind::Vaccinations => Color::Blue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Incidence,
    Mortality,
    Recovery,
}

named_enum!(RateKind, "rate", {
    Incidence => "incidence",
    Mortality => "mortality",
    Recovery => "recovery",
});

impl RateKind {
    pub const ALL: [RateKind; 3] = [RateKind::Incidence, RateKind::Mortality, RateKind::Recovery];

    /// The variable whose color this rate shares.
    pub fn color_variable(self) -> VariableKind {
        match self {
            RateKind::Incidence => VariableKind::Confirmed,
            RateKind::Mortality => VariableKind::Deaths,
            RateKind::Recovery => VariableKind::Recovered,
        }
    }

    pub fn color(self) -> Color {
        self.color_variable().color()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    Red,
    Yellow,
    Green,
    Blue,
}

/// Variables are drawn with broken outlines, rates with solid ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stroke {
    Broken,
    Solid,
}

/// Contiguous run of UTC calendar days shared by every series of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub epoch: NaiveDate,
    pub n_days: u32,
}

impl Calendar {
    pub fn new(epoch: NaiveDate, n_days: u32) -> Self {
        Calendar { epoch, n_days }
    }

    pub fn day_index(&self, date: NaiveDate) -> Result<u32, ModelError> {
        let offset = (date - self.epoch).num_days();
        if offset < 0 || offset >= i64::from(self.n_days) {
            return Err(ModelError::OutOfCalendar {
                date,
                first: self.epoch,
                last: self.last_date(),
            });
        }
        Ok(offset as u32)
    }

    pub fn date(&self, day: u32) -> Result<NaiveDate, ModelError> {
        if day >= self.n_days {
            return Err(ModelError::DayOutOfRange(day));
        }
        Ok(self.epoch + Duration::days(i64::from(day)))
    }

    pub fn last_date(&self) -> NaiveDate {
        self.epoch + Duration::days(i64::from(self.n_days.saturating_sub(1)))
    }

    pub fn full_window(&self) -> Option<TimeWindow> {
        (self.n_days > 0).then(|| TimeWindow {
            start_day: 0,
            end_day: self.n_days - 1,
        })
    }
}

/// Per-region daily values for one variable. Ingested variables hold
/// cleaned, monotone cumulative counts; Active holds the derived current
/// count per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub region: RegionId,
    pub variable: VariableKind,
    pub cumulative: Vec<u64>,
}

impl DailySeries {
    pub fn is_monotone(&self) -> bool {
        self.cumulative.windows(2).all(|w| w[0] <= w[1])
    }

    /// `C[day]`, with `C[-1] = 0`.
    pub fn at(&self, day: i64) -> u64 {
        if day < 0 {
            0
        } else {
            self.cumulative[day as usize]
        }
    }
}

/// Inclusive range of day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_day: u32,
    pub end_day: u32,
}

impl TimeWindow {
    pub fn new(start_day: u32, end_day: u32, n_days: u32) -> Result<Self, ModelError> {
        if start_day > end_day || end_day >= n_days {
            return Err(ModelError::BadWindow {
                start: start_day,
                end: end_day,
                n_days,
            });
        }
        Ok(TimeWindow { start_day, end_day })
    }

    pub fn len(&self) -> u32 {
        self.end_day - self.start_day + 1
    }

    /// Always false: a window holds at least one day.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, day: u32) -> bool {
        (self.start_day..=self.end_day).contains(&day)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMethod {
    Linear,
    Log,
    #[default]
    Flannery,
}

named_enum!(ScaleMethod, "scale method", {
    Linear => "linear",
    Log => "log",
    Flannery => "flannery",
});

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub method: ScaleMethod,
    pub base_radius_px: f64,
    pub reference_value: f64,
    pub user_factor: f64,
    pub r_min_px: f64,
    pub r_max_px: f64,
}

impl ScalingSpec {
    pub const FLANNERY_EXPONENT: f64 = 0.57;
    pub const MIN_FACTOR: f64 = 0.1;
    pub const MAX_FACTOR: f64 = 8.0;

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::BadScaling(msg.to_string()));
        if !(self.base_radius_px > 0.0 && self.base_radius_px.is_finite()) {
            return bad("base_radius_px must be positive");
        }
        if !(self.reference_value > 0.0 && self.reference_value.is_finite()) {
            return bad("reference_value must be positive");
        }
        if !(Self::MIN_FACTOR..=Self::MAX_FACTOR).contains(&self.user_factor) {
            return bad("user_factor must lie in [0.1, 8.0]");
        }
        if !(self.r_min_px > 0.0 && self.r_min_px < self.r_max_px) {
            return bad("clamps must satisfy 0 < r_min_px < r_max_px");
        }
        Ok(())
    }
}

impl Default for ScalingSpec {
    fn default() -> Self {
        ScalingSpec {
            method: ScaleMethod::Flannery,
            base_radius_px: 40.0,
            reference_value: 1.0,
            user_factor: 1.0,
            r_min_px: 2.0,
            r_max_px: 120.0,
        }
    }
}

/// One concentric circle of a frame entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Glyph {
    pub kind: String,
    pub value: f64,
    pub radius_px: f64,
    pub stroke: Stroke,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    /// Region id for single regions, `cluster:<anchor region>` for groups.
    pub id: String,
    pub label: String,
    pub members: Vec<RegionId>,
    pub anchor: LatLon,
    pub highlight: bool,
    pub variables: Vec<Glyph>,
    pub rates: Vec<Glyph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDates {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocircleFrame {
    pub date: NaiveDate,
    pub window: WindowDates,
    pub level: Level,
    pub zoom: f64,
    /// Scaling parameters each glyph's radius was computed with.
    pub scales: Vec<SeriesScale>,
    pub entries: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesScale {
    pub kind: String,
    #[serde(flatten)]
    pub spec: ScalingSpec,
}

/// Total order on floats used for deterministic ranking (NaN sorts last).
pub(crate) fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn day_index_examples() {
        let cal = Calendar::new(d(2020, 1, 22), 400);
        assert_eq!(cal.day_index(d(2020, 1, 22)).unwrap(), 0);
        assert_eq!(cal.day_index(d(2020, 1, 23)).unwrap(), 1);
        // 9 days left in Jan + 29 in Feb (leap year) + 1
        assert_eq!(cal.day_index(d(2020, 3, 1)).unwrap(), 39);
    }

    #[test]
    fn day_index_rejects_dates_outside() {
        let cal = Calendar::new(d(2020, 1, 22), 3);
        assert!(matches!(cal.day_index(d(2020, 1, 21)), Err(ModelError::OutOfCalendar { .. })));
        assert!(matches!(cal.day_index(d(2020, 1, 25)), Err(ModelError::OutOfCalendar { .. })));
        assert!(cal.date(3).is_err());
    }

    #[test]
    fn day_index_round_trip() {
        let cal = Calendar::new(d(2019, 12, 1), 1200);
        for day in 0..cal.n_days {
            assert_eq!(cal.day_index(cal.date(day).unwrap()).unwrap(), day);
        }
    }

    #[test]
    fn region_id_canonical_and_ordered() {
        let a = RegionId::new(" Canada ", Some("Ontario"), None).unwrap();
        assert_eq!(a.to_string(), "canada/ontario");
        assert_eq!(a.level(), Level::State);
        assert_eq!(a.parent().unwrap(), RegionId::country("canada").unwrap());
        assert_eq!("canada/ontario".parse::<RegionId>().unwrap(), a);
        assert!(RegionId::new("", None, None).is_err());
        assert_eq!(
            RegionId::new("us", None, Some("x")),
            Err(ModelError::CountyWithoutState)
        );
        assert!("a//b".parse::<RegionId>().is_err());
        let country = RegionId::country("canada").unwrap();
        assert!(country < a);
    }

    #[test]
    fn scaling_spec_validation() {
        assert!(ScalingSpec::default().validate().is_ok());
        let high = ScalingSpec { user_factor: 8.5, ..ScalingSpec::default() };
        assert!(high.validate().is_err());
        let clamps = ScalingSpec { user_factor: 0.1, r_min_px: 130.0, ..ScalingSpec::default() };
        assert!(clamps.validate().is_err());
    }
}
