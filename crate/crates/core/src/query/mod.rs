//! Windowed aggregation over the daily series: per-window totals, rates,
//! the report-date schedule of an animation, whole-frame evaluation and the
//! focus/baseline side-by-side table.

mod pyramid;
mod threshold;

pub use pyramid::{Pyramid, PyramidSet};
pub use threshold::{threshold_query, Metric, Predicate, ThresholdHit, ThresholdOutcome};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::model::{LatLon, Level, ModelError, RateKind, RegionId, TimeWindow, VariableKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("no {variable} series for `{region}`")]
    SeriesMissing { region: RegionId, variable: VariableKind },
    #[error("no population for `{0}`")]
    PopulationMissing(RegionId),
    #[error("window of {size} days exceeds the {range}-day range")]
    WindowTooLarge { size: u32, range: u32 },
    #[error("invalid query: {0}")]
    InvalidSpec(String),
    #[error("day {0} is not a report date of this query")]
    NotAReportDate(u32),
    #[error("unknown region `{0}`")]
    UnknownRegion(RegionId),
    #[error("no pyramid for {variable} at {level} level")]
    PyramidMissing { variable: VariableKind, level: Level },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Growing prefix windows `[range.start, e]`.
    #[default]
    Total,
    /// Fixed-width trailing windows ending on each report date.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSize {
    Days(u32),
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Cumulative,
    DailyAverage,
}

/// Lat/lon rectangle. `min_lon > max_lon` denotes a box crossing the
/// antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn contains(&self, p: LatLon) -> bool {
        let lat_ok = p.lat >= self.min_lat && p.lat <= self.max_lat;
        let lon_ok = if self.min_lon <= self.max_lon {
            p.lon >= self.min_lon && p.lon <= self.max_lon
        } else {
            p.lon >= self.min_lon || p.lon <= self.max_lon
        };
        lat_ok && lon_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub mode: Mode,
    /// The animation range.
    pub range: TimeWindow,
    pub window_size: WindowSize,
    pub aggregation: Aggregation,
    pub variables: BTreeSet<VariableKind>,
    pub rates: BTreeSet<RateKind>,
    pub level: Level,
    pub bbox: Option<BBox>,
}

impl QuerySpec {
    /// Total-mode query over `range` at `level` with nothing selected.
    pub fn new(range: TimeWindow, level: Level) -> Self {
        QuerySpec {
            mode: Mode::Total,
            range,
            window_size: WindowSize::Maximum,
            aggregation: Aggregation::Cumulative,
            variables: BTreeSet::new(),
            rates: BTreeSet::new(),
            level,
            bbox: None,
        }
    }

    /// Window width in days, resolving `Maximum` to the range length.
    pub fn window_len(&self) -> Result<u32, QueryError> {
        let range = self.range.len();
        match self.window_size {
            WindowSize::Maximum => Ok(range),
            WindowSize::Days(0) => Err(QueryError::InvalidSpec("window size must be at least one day".into())),
            WindowSize::Days(size) if size > range => Err(QueryError::WindowTooLarge { size, range }),
            WindowSize::Days(size) => Ok(size),
        }
    }

    pub fn in_scope(&self, anchor: Option<LatLon>) -> bool {
        match (self.bbox, anchor) {
            (None, _) => true,
            (Some(b), Some(a)) => b.contains(a),
            (Some(_), None) => false,
        }
    }
}

/// `sum of daily increments over window` for a monotone cumulative series,
/// i.e. `C[end] - C[start-1]`. Active is computed from the window totals of
/// its constituents, floored at zero.
pub fn window_total(dataset: &Dataset, region: &RegionId, variable: VariableKind, window: TimeWindow) -> Result<u64, QueryError> {
    let missing = |variable| QueryError::SeriesMissing {
        region: region.clone(),
        variable,
    };
    if variable == VariableKind::Active {
        dataset.series(region, VariableKind::Active).ok_or_else(|| missing(VariableKind::Active))?;
        let c = window_total(dataset, region, VariableKind::Confirmed, window)?;
        let d = window_total(dataset, region, VariableKind::Deaths, window)?;
        let r = window_total(dataset, region, VariableKind::Recovered, window)?;
        return Ok(c.saturating_sub(d.saturating_add(r)));
    }
    let series = dataset.series(region, variable).ok_or_else(|| missing(variable))?;
    if window.end_day as usize >= series.cumulative.len() {
        return Err(ModelError::DayOutOfRange(window.end_day).into());
    }
    let end = series.at(i64::from(window.end_day));
    let before = series.at(i64::from(window.start_day) - 1);
    Ok(end.saturating_sub(before))
}

/// Applies the aggregation to a window total.
pub fn aggregate(total: u64, window_len: u32, aggregation: Aggregation) -> f64 {
    match aggregation {
        Aggregation::Cumulative => total as f64,
        Aggregation::DailyAverage => total as f64 / f64::from(window_len),
    }
}

pub fn window_value(
    dataset: &Dataset,
    region: &RegionId,
    variable: VariableKind,
    window: TimeWindow,
    aggregation: Aggregation,
) -> Result<f64, QueryError> {
    let total = window_total(dataset, region, variable, window)?;
    Ok(aggregate(total, window.len(), aggregation))
}

/// Why a rate could not be computed from a set of totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateInput {
    Variable(VariableKind),
    Population,
}

/// Rate from window totals. `Ok(None)` means the denominator is zero.
/// Incidence is per 100 000 inhabitants and follows the aggregation;
/// mortality and recovery are ratios of totals and do not depend on it.
pub fn rate_from_totals(
    rate: RateKind,
    total: impl Fn(VariableKind) -> Option<u64>,
    population: Option<u64>,
    window_len: u32,
    aggregation: Aggregation,
) -> Result<Option<f64>, RateInput> {
    let get = |v| total(v).ok_or(RateInput::Variable(v));
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    match rate {
        RateKind::Incidence => {
            let confirmed = get(VariableKind::Confirmed)?;
            let pop = population.ok_or(RateInput::Population)?;
            if pop == 0 {
                return Ok(None);
            }
            Ok(Some(100_000.0 * aggregate(confirmed, window_len, aggregation) / pop as f64))
        }
        RateKind::Mortality => {
            let deaths = get(VariableKind::Deaths)?;
            let confirmed = get(VariableKind::Confirmed)?;
            Ok(ratio(deaths, confirmed))
        }
        RateKind::Recovery => {
            let recovered = get(VariableKind::Recovered)?;
            let deaths = get(VariableKind::Deaths)?;
            Ok(ratio(recovered, deaths + recovered))
        }
    }
}

/// Rate for one region over a window; `Ok(None)` is Undefined.
pub fn rate_value(
    dataset: &Dataset,
    region: &RegionId,
    rate: RateKind,
    window: TimeWindow,
    aggregation: Aggregation,
) -> Result<Option<f64>, QueryError> {
    let info = dataset.region(region).ok_or_else(|| QueryError::UnknownRegion(region.clone()))?;
    let totals: BTreeMap<VariableKind, Result<u64, QueryError>> =
        [VariableKind::Confirmed, VariableKind::Deaths, VariableKind::Recovered]
            .into_iter()
            .map(|v| (v, window_total(dataset, region, v, window)))
            .collect();
    let result = rate_from_totals(
        rate,
        |v| totals.get(&v).and_then(|t| t.as_ref().ok()).copied(),
        info.population,
        window.len(),
        aggregation,
    );
    match result {
        Ok(v) => Ok(v),
        Err(RateInput::Population) => Err(QueryError::PopulationMissing(region.clone())),
        Err(RateInput::Variable(variable)) => Err(match totals.get(&variable) {
            Some(Err(e)) => e.clone(),
            _ => QueryError::SeriesMissing {
                region: region.clone(),
                variable,
            },
        }),
    }
}

/// Report dates of the animation and the window each one summarizes. A
/// window is stamped on its last day.
pub fn frame_dates(spec: &QuerySpec) -> Result<Vec<(u32, TimeWindow)>, QueryError> {
    let size = spec.window_len()?;
    let TimeWindow { start_day, end_day } = spec.range;
    Ok(match spec.mode {
        Mode::Window => (start_day + size - 1..=end_day)
            .map(|e| {
                (
                    e,
                    TimeWindow {
                        start_day: e + 1 - size,
                        end_day: e,
                    },
                )
            })
            .collect(),
        Mode::Total => (start_day..=end_day).map(|e| (e, TimeWindow { start_day, end_day: e })).collect(),
    })
}

/// The window reported on `day`, or an error if `day` is not a report date.
pub fn window_for(spec: &QuerySpec, day: u32) -> Result<TimeWindow, QueryError> {
    let size = spec.window_len()?;
    let TimeWindow { start_day, end_day } = spec.range;
    match spec.mode {
        Mode::Window if day >= start_day + size - 1 && day <= end_day => Ok(TimeWindow {
            start_day: day + 1 - size,
            end_day: day,
        }),
        Mode::Total if day >= start_day && day <= end_day => Ok(TimeWindow { start_day, end_day: day }),
        _ => Err(QueryError::NotAReportDate(day)),
    }
}

/// Window totals of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionValues {
    pub region: RegionId,
    pub display_name: String,
    pub anchor: LatLon,
    pub population: Option<u64>,
    /// Totals for every variable the region has, selected or not.
    pub totals: BTreeMap<VariableKind, u64>,
}

impl RegionValues {
    pub fn value(&self, variable: VariableKind, window_len: u32, aggregation: Aggregation) -> Option<f64> {
        self.totals.get(&variable).map(|&t| aggregate(t, window_len, aggregation))
    }

    pub fn rate(&self, rate: RateKind, window_len: u32, aggregation: Aggregation) -> Option<f64> {
        rate_from_totals(rate, |v| self.totals.get(&v).copied(), self.population, window_len, aggregation)
            .ok()
            .flatten()
    }
}

/// Values of one report date, before clustering and radius assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameValues {
    pub day: u32,
    pub window: TimeWindow,
    pub entries: Vec<RegionValues>,
}

/// Totals of every anchored region at `spec.level` inside the bbox.
/// Regions without a series simply lack that key.
pub fn evaluate_frame(dataset: &Dataset, spec: &QuerySpec, day: u32) -> Result<FrameValues, QueryError> {
    let window = window_for(spec, day)?;
    let mut entries = Vec::new();
    for region in dataset.regions_at(spec.level) {
        let Some(anchor) = region.anchor else { continue };
        if !spec.in_scope(Some(anchor)) {
            continue;
        }
        let totals = VariableKind::ALL
            .iter()
            .filter_map(|&v| window_total(dataset, &region.id, v, window).ok().map(|t| (v, t)))
            .collect();
        entries.push(RegionValues {
            region: region.id.clone(),
            display_name: region.display_name.clone(),
            anchor,
            population: region.population,
            totals,
        });
    }
    Ok(FrameValues { day, window, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocusCells {
    pub variables: Vec<Option<f64>>,
    pub rates: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocusRow {
    pub day: u32,
    pub window: TimeWindow,
    pub focus: FocusCells,
    pub baseline: Option<FocusCells>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocusTable {
    pub focus: RegionId,
    pub baseline: Option<RegionId>,
    pub variables: Vec<VariableKind>,
    pub rates: Vec<RateKind>,
    pub rows: Vec<FocusRow>,
}

/// Per-report-date values of every selected variable and rate for the focus
/// region and, optionally, a baseline region. Missing series and undefined
/// rates are blank cells.
pub fn focus_series(
    dataset: &Dataset,
    focus: &RegionId,
    baseline: Option<&RegionId>,
    spec: &QuerySpec,
) -> Result<FocusTable, QueryError> {
    for id in std::iter::once(focus).chain(baseline) {
        if dataset.region(id).is_none() {
            return Err(QueryError::UnknownRegion(id.clone()));
        }
    }
    let variables: Vec<VariableKind> = spec.variables.iter().copied().collect();
    let rates: Vec<RateKind> = spec.rates.iter().copied().collect();
    let cells = |region: &RegionId, window: TimeWindow| FocusCells {
        variables: variables
            .iter()
            .map(|&v| window_value(dataset, region, v, window, spec.aggregation).ok())
            .collect(),
        rates: rates
            .iter()
            .map(|&r| rate_value(dataset, region, r, window, spec.aggregation).ok().flatten())
            .collect(),
    };
    let rows = frame_dates(spec)?
        .into_iter()
        .map(|(day, window)| FocusRow {
            day,
            window,
            focus: cells(focus, window),
            baseline: baseline.map(|b| cells(b, window)),
        })
        .collect();
    Ok(FocusTable {
        focus: focus.clone(),
        baseline: baseline.cloned(),
        variables,
        rates,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Calendar, DailySeries, Region};
    use chrono::NaiveDate;

    pub(super) fn toy(series: &[(&str, VariableKind, &[u64])], populations: &[(&str, u64)]) -> Dataset {
        let n = series.first().map(|s| s.2.len()).unwrap_or(1) as u32;
        let cal = Calendar::new(NaiveDate::from_ymd_opt(2020, 1, 22).unwrap(), n);
        let names: BTreeSet<&str> = series.iter().map(|s| s.0).collect();
        let regions = names.iter().enumerate().map(|(i, name)| {
            let mut r = Region::new(
                RegionId::country(name).unwrap(),
                *name,
                Some(LatLon { lat: i as f64, lon: i as f64 }),
            );
            r.population = populations.iter().find(|p| p.0 == *name).map(|p| p.1);
            r
        });
        let ds = series.iter().map(|(name, v, c)| DailySeries {
            region: RegionId::country(name).unwrap(),
            variable: *v,
            cumulative: c.to_vec(),
        });
        Dataset::from_parts(cal, regions, ds, BTreeSet::new()).unwrap()
    }

    fn id(s: &str) -> RegionId {
        RegionId::country(s).unwrap()
    }

    fn w(a: u32, b: u32) -> TimeWindow {
        TimeWindow { start_day: a, end_day: b }
    }

    /// Brute-force sum of daily differences over the window.
    fn diff_sum(c: &[u64], window: TimeWindow) -> u64 {
        (window.start_day..=window.end_day)
            .map(|d| c[d as usize] - if d == 0 { 0 } else { c[d as usize - 1] })
            .sum()
    }

    #[test]
    fn window_value_examples() {
        let c = [0, 3, 5, 9];
        let ds = toy(&[("a", VariableKind::Confirmed, &c)], &[]);
        assert_eq!(diff_sum(&c, w(2, 3)), 6);
        assert_eq!(window_value(&ds, &id("a"), VariableKind::Confirmed, w(2, 3), Aggregation::Cumulative).unwrap(), 6.0);
        assert_eq!(window_value(&ds, &id("a"), VariableKind::Confirmed, w(2, 3), Aggregation::DailyAverage).unwrap(), 3.0);
        for d in 0..4 {
            let cum = window_value(&ds, &id("a"), VariableKind::Confirmed, w(d, d), Aggregation::Cumulative).unwrap();
            let avg = window_value(&ds, &id("a"), VariableKind::Confirmed, w(d, d), Aggregation::DailyAverage).unwrap();
            assert_eq!(cum, avg);
        }
        assert!(matches!(
            window_value(&ds, &id("a"), VariableKind::Deaths, w(0, 0), Aggregation::Cumulative),
            Err(QueryError::SeriesMissing { .. })
        ));
    }

    #[test]
    fn active_from_window_totals() {
        let ds = toy(
            &[
                ("a", VariableKind::Confirmed, &[10, 20, 40]),
                ("a", VariableKind::Deaths, &[1, 2, 3]),
                ("a", VariableKind::Recovered, &[0, 10, 11]),
                ("a", VariableKind::Active, &[9, 8, 26]),
            ],
            &[],
        );
        let t = |a, b| window_total(&ds, &id("a"), VariableKind::Active, w(a, b)).unwrap();
        assert_eq!(t(0, 2), 26);
        assert_eq!(t(0, 1), 8);
        assert_eq!(t(1, 2), 30 - 2 - 11);
        // (20-10) - (2-1) - (10-0) < 0
        assert_eq!(t(1, 1), 0);
    }

    #[test]
    fn rate_examples() {
        let ds = toy(
            &[
                ("a", VariableKind::Confirmed, &[0, 2500]),
                ("b", VariableKind::Confirmed, &[0, 200]),
                ("b", VariableKind::Deaths, &[0, 10]),
                ("b", VariableKind::Recovered, &[0, 0]),
                ("c", VariableKind::Confirmed, &[0, 9]),
                ("c", VariableKind::Deaths, &[0, 0]),
                ("c", VariableKind::Recovered, &[0, 0]),
            ],
            &[("a", 500_000)],
        );
        let all = w(0, 1);
        assert_eq!(rate_value(&ds, &id("a"), RateKind::Incidence, all, Aggregation::Cumulative).unwrap(), Some(500.0));
        assert_eq!(rate_value(&ds, &id("b"), RateKind::Mortality, all, Aggregation::Cumulative).unwrap(), Some(0.05));
        assert_eq!(rate_value(&ds, &id("c"), RateKind::Recovery, all, Aggregation::Cumulative).unwrap(), None);
        assert_eq!(
            rate_value(&ds, &id("b"), RateKind::Incidence, all, Aggregation::Cumulative),
            Err(QueryError::PopulationMissing(id("b")))
        );
        assert!(matches!(
            rate_value(&ds, &id("a"), RateKind::Mortality, all, Aggregation::Cumulative),
            Err(QueryError::SeriesMissing { variable: VariableKind::Deaths, .. })
        ));
    }

    fn spec(mode: Mode, range: TimeWindow, size: WindowSize) -> QuerySpec {
        QuerySpec {
            mode,
            window_size: size,
            ..QuerySpec::new(range, Level::Country)
        }
    }

    #[test]
    fn frame_dates_examples() {
        let got = frame_dates(&spec(Mode::Window, w(0, 4), WindowSize::Days(2))).unwrap();
        // enumerate all length-2 windows inside [0, 4], stamped on their last day
        let oracle: Vec<(u32, TimeWindow)> =
            (0..=4u32).flat_map(|s| (s..=4).map(move |e| (s, e))).filter(|(s, e)| e - s + 1 == 2).map(|(s, e)| (e, w(s, e))).collect();
        assert_eq!(got, oracle);
        assert_eq!(got.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);

        let total = frame_dates(&spec(Mode::Total, w(0, 2), WindowSize::Days(1))).unwrap();
        assert_eq!(total, vec![(0, w(0, 0)), (1, w(0, 1)), (2, w(0, 2))]);

        let max = frame_dates(&spec(Mode::Window, w(0, 9), WindowSize::Maximum)).unwrap();
        assert_eq!(max, vec![(9, w(0, 9))]);

        assert_eq!(
            frame_dates(&spec(Mode::Window, w(0, 2), WindowSize::Days(4))),
            Err(QueryError::WindowTooLarge { size: 4, range: 3 })
        );
    }

    #[test]
    fn window_for_matches_frame_dates() {
        for mode in [Mode::Total, Mode::Window] {
            let s = spec(mode, w(3, 12), WindowSize::Days(4));
            let dates = frame_dates(&s).unwrap();
            for day in 0..20 {
                let expected = dates.iter().find(|(d, _)| *d == day).map(|x| x.1);
                assert_eq!(window_for(&s, day).ok(), expected);
            }
        }
    }

    #[test]
    fn evaluate_frame_examples() {
        let ds = toy(&[("a", VariableKind::Confirmed, &[0, 10]), ("b", VariableKind::Confirmed, &[0, 4])], &[]);
        let mut s = spec(Mode::Window, w(0, 1), WindowSize::Days(1));
        let f = evaluate_frame(&ds, &s, 1).unwrap();
        let vals: Vec<u64> = f.entries.iter().map(|e| e.totals[&VariableKind::Confirmed]).collect();
        assert_eq!(vals, vec![10, 4]);

        s.mode = Mode::Total;
        let f = evaluate_frame(&ds, &s, 1).unwrap();
        assert_eq!(f.entries[0].totals[&VariableKind::Confirmed], 10);

        s.bbox = Some(BBox {
            min_lon: 50.0,
            min_lat: 50.0,
            max_lon: 60.0,
            max_lat: 60.0,
        });
        assert!(evaluate_frame(&ds, &s, 1).unwrap().entries.is_empty());
        assert_eq!(evaluate_frame(&ds, &s, 5), Err(QueryError::NotAReportDate(5)));
    }

    #[test]
    fn bbox_across_antimeridian() {
        let b = BBox {
            min_lon: 170.0,
            min_lat: -10.0,
            max_lon: -170.0,
            max_lat: 10.0,
        };
        assert!(b.contains(LatLon { lat: 0.0, lon: 179.0 }));
        assert!(b.contains(LatLon { lat: 0.0, lon: -175.0 }));
        assert!(!b.contains(LatLon { lat: 0.0, lon: 0.0 }));
    }

    #[test]
    fn focus_series_shapes() {
        let c: Vec<u64> = (0..10u64).map(|d| d * d).collect();
        let ds = toy(&[("a", VariableKind::Confirmed, &c), ("b", VariableKind::Confirmed, &c)], &[]);
        let mut s = spec(Mode::Window, w(0, 9), WindowSize::Days(7));
        s.aggregation = Aggregation::DailyAverage;
        s.variables.insert(VariableKind::Confirmed);
        s.variables.insert(VariableKind::Deaths);

        let single = focus_series(&ds, &id("a"), None, &s).unwrap();
        assert!(single.rows.iter().all(|r| r.baseline.is_none()));
        assert_eq!(single.rows.len(), 4);
        for row in &single.rows {
            let e = row.day as usize;
            let sliding: u64 = (e - 6..=e).map(|d| c[d] - if d == 0 { 0 } else { c[d - 1] }).sum();
            assert_eq!(row.focus.variables[0], Some(sliding as f64 / 7.0));
            assert_eq!(row.focus.variables[1], None);
        }

        let pair = focus_series(&ds, &id("a"), Some(&id("a")), &s).unwrap();
        assert!(pair.rows.iter().all(|r| r.baseline.as_ref() == Some(&r.focus)));

        assert_eq!(focus_series(&ds, &id("zz"), None, &s), Err(QueryError::UnknownRegion(id("zz"))));
    }
}
