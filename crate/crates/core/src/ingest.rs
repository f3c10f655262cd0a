//! Reading JHU-layout time-series and population tables and assembling the
//! immutable [`Dataset`] the query layer runs against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Calendar, DailySeries, LatLon, Level, ModelError, Polygon, Region, RegionId, VariableKind};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row {row}: expected {expected} values, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: `{value}` is not a number")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("row {row}: negative population {value}")]
    NegativePopulation { row: usize, value: i64 },
    #[error("row {row}: invalid region ({source})")]
    BadRegion { row: usize, source: ModelError },
    #[error("{variable} file lists region `{region}` twice (row {row})")]
    DuplicateRegionRow {
        variable: VariableKind,
        region: RegionId,
        row: usize,
    },
    #[error("{variable} was supplied more than once")]
    DuplicateVariable { variable: VariableKind },
    #[error("active cases are derived and cannot be ingested")]
    DerivedVariable,
    #[error("{variable} dates differ from the first file's date header")]
    CalendarMismatch { variable: VariableKind },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series refers to unknown region `{0}`")]
    UnknownRegion(RegionId),
    #[error("boundary file: {0}")]
    Boundary(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One data row of a time-series file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub region: Region,
    /// Original-case name components (country, state, county).
    pub names: Vec<String>,
    pub raw: Vec<i64>,
    /// 1-based line number in the source file.
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTimeSeries {
    pub variable: VariableKind,
    pub dates: Vec<NaiveDate>,
    pub records: Vec<RawRecord>,
}

fn find_column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h.trim()))
}

/// Parses a `M/D/YY` header cell.
fn parse_header_date(cell: &str) -> Option<NaiveDate> {
    let mut parts = cell.trim().split('/');
    let month: u32 = parts.next()?.parse().ok()?;
    let day: u32 = parts.next()?.parse().ok()?;
    let year = parts.next()?;
    if parts.next().is_some() || year.len() != 2 {
        return None;
    }
    let year: i32 = year.parse().ok()?;
    NaiveDate::from_ymd_opt(2000 + year, month, day)
}

fn parse_coord(cell: Option<&str>) -> Option<f64> {
    let cell = cell?.trim();
    if cell.is_empty() {
        return None;
    }
    cell.parse().ok()
}

fn csv_reader(content: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::None).from_reader(content)
}

fn nonempty(s: &str) -> Option<&str> {
    (!s.is_empty()).then_some(s)
}

pub fn parse_timeseries_csv(content: &[u8], variable: VariableKind) -> Result<ParsedTimeSeries, IngestError> {
    let mut reader = csv_reader(content);
    let headers = reader.headers()?.clone();
    let required = |names: &[&str], label: &str| {
        find_column(&headers, names).ok_or_else(|| IngestError::MalformedHeader(format!("missing column `{label}`")))
    };
    let state_col = required(&["Province/State", "Province_State"], "Province/State")?;
    let country_col = required(&["Country/Region", "Country_Region"], "Country/Region")?;
    let lat_col = required(&["Lat"], "Lat")?;
    let lon_col = required(&["Long", "Long_"], "Long")?;
    let county_col = find_column(&headers, &["Admin2"]);

    let date_cols: Vec<(usize, NaiveDate)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| parse_header_date(h).map(|d| (i, d)))
        .collect();
    if date_cols.is_empty() {
        return Err(IngestError::MalformedHeader("no M/D/YY date columns".into()));
    }
    let last_meta = [state_col, country_col, lat_col, lon_col].into_iter().chain(county_col).max().unwrap_or(0);
    if date_cols[0].0 < last_meta {
        return Err(IngestError::MalformedHeader("date columns must follow the location columns".into()));
    }
    for (pair_idx, pair) in date_cols.windows(2).enumerate() {
        if pair[1].0 != pair[0].0 + 1 || pair[1].1 != pair[0].1.succ_opt().unwrap_or(pair[0].1) {
            return Err(IngestError::MalformedHeader(format!(
                "date column {} ({}) does not follow {} on the next day",
                pair_idx + 2,
                pair[1].1,
                pair[0].1
            )));
        }
    }
    let dates: Vec<NaiveDate> = date_cols.iter().map(|&(_, d)| d).collect();

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != headers.len() {
            return Err(IngestError::RaggedRow {
                row,
                expected: headers.len(),
                found: rec.len(),
            });
        }
        let country = rec.get(country_col).unwrap_or("").trim().to_string();
        let state = rec.get(state_col).unwrap_or("").trim().to_string();
        let county = county_col.map(|c| rec.get(c).unwrap_or("").trim().to_string()).unwrap_or_default();
        let id = RegionId::new(&country, nonempty(&state), nonempty(&county)).map_err(|source| IngestError::BadRegion { row, source })?;

        let cell_num = |col: usize| {
            let value = rec.get(col).unwrap_or("");
            let coord = parse_coord(Some(value));
            if coord.is_none() && !value.trim().is_empty() {
                return Err(IngestError::NonNumericCell {
                    row,
                    column: headers[col].to_string(),
                    value: value.to_string(),
                });
            }
            Ok(coord)
        };
        let lat = cell_num(lat_col)?;
        let lon = cell_num(lon_col)?;
        // JHU marks unknown locations with blank cells or 0,0.
        let anchor = match (lat, lon) {
            (Some(lat), Some(lon)) if !(lat == 0.0 && lon == 0.0) => {
                Some(LatLon::new(lat, lon).map_err(|source| IngestError::BadRegion { row, source })?)
            }
            _ => None,
        };

        let mut raw = Vec::with_capacity(date_cols.len());
        for &(col, _) in &date_cols {
            let cell = rec.get(col).unwrap_or("");
            let value = cell.trim().parse::<i64>().map_err(|_| IngestError::NonNumericCell {
                row,
                column: headers[col].to_string(),
                value: cell.to_string(),
            })?;
            raw.push(value);
        }

        let mut names = vec![country.clone()];
        if !state.is_empty() {
            names.push(state.clone());
        }
        if !county.is_empty() {
            names.push(county.clone());
        }
        let display = names.last().cloned().unwrap_or_default();
        records.push(RawRecord {
            region: Region::new(id, display, anchor),
            names,
            raw,
            row,
        });
    }
    Ok(ParsedTimeSeries { variable, dates, records })
}

/// Reads a JHU UID lookup table. Rows with a blank population are skipped;
/// the first row wins when a region repeats.
pub fn parse_population_csv(content: &[u8]) -> Result<BTreeMap<RegionId, u64>, IngestError> {
    let mut reader = csv_reader(content);
    let headers = reader.headers()?.clone();
    let country_col = find_column(&headers, &["Country_Region", "Country/Region"])
        .ok_or_else(|| IngestError::MalformedHeader("missing column `Country_Region`".into()))?;
    let pop_col = find_column(&headers, &["Population"])
        .ok_or_else(|| IngestError::MalformedHeader("missing column `Population`".into()))?;
    let state_col = find_column(&headers, &["Province_State", "Province/State"]);
    let county_col = find_column(&headers, &["Admin2"]);

    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let cell = rec.get(pop_col).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let value: i64 = cell.parse().map_err(|_| IngestError::NonNumericCell {
            row,
            column: headers[pop_col].to_string(),
            value: cell.to_string(),
        })?;
        if value < 0 {
            return Err(IngestError::NegativePopulation { row, value });
        }
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty());
        let id = RegionId::new(rec.get(country_col).unwrap_or(""), get(state_col), get(county_col))
            .map_err(|source| IngestError::BadRegion { row, source })?;
        out.entry(id).or_insert(value as u64);
    }
    Ok(out)
}

/// Result of [`clean_series`]: a monotone series plus the number of cells
/// that had to change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanedSeries {
    pub values: Vec<u64>,
    pub adjusted: usize,
}

/// Backward minimum envelope: `out[d] = min(raw[d], out[d+1])`, keeping the
/// final value. Negative cells are floored at zero.
pub fn clean_series(raw: &[i64]) -> CleanedSeries {
    let mut values = vec![0u64; raw.len()];
    let mut adjusted = 0;
    let mut next = i64::MAX;
    for (d, &r) in raw.iter().enumerate().rev() {
        let v = r.min(next).max(0);
        if v != r {
            adjusted += 1;
        }
        values[d] = v as u64;
        next = v;
    }
    CleanedSeries { values, adjusted }
}

/// `max(0, confirmed - deaths - recovered)` per day.
pub fn derive_active(confirmed: &DailySeries, deaths: &DailySeries, recovered: &DailySeries) -> Result<DailySeries, IngestError> {
    let n = confirmed.cumulative.len();
    for other in [deaths, recovered] {
        if other.cumulative.len() != n {
            return Err(IngestError::LengthMismatch(n, other.cumulative.len()));
        }
    }
    let cumulative = (0..n)
        .map(|d| confirmed.cumulative[d].saturating_sub(deaths.cumulative[d].saturating_add(recovered.cumulative[d])))
        .collect();
    Ok(DailySeries {
        region: confirmed.region.clone(),
        variable: VariableKind::Active,
        cumulative,
    })
}

/// Immutable, query-ready collection of regions and their daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    calendar: Calendar,
    regions: BTreeMap<RegionId, Region>,
    series: BTreeMap<(RegionId, VariableKind), DailySeries>,
    children: BTreeMap<RegionId, Vec<RegionId>>,
    synthesized: BTreeSet<(RegionId, VariableKind)>,
}

impl Dataset {
    /// Assembles a dataset from already-clean parts, checking that every
    /// series belongs to a known region and spans the calendar.
    pub fn from_parts(
        calendar: Calendar,
        regions: impl IntoIterator<Item = Region>,
        series: impl IntoIterator<Item = DailySeries>,
        synthesized: BTreeSet<(RegionId, VariableKind)>,
    ) -> Result<Self, IngestError> {
        let regions: BTreeMap<RegionId, Region> = regions.into_iter().map(|r| (r.id.clone(), r)).collect();
        let mut by_key = BTreeMap::new();
        for s in series {
            if !regions.contains_key(&s.region) {
                return Err(IngestError::UnknownRegion(s.region));
            }
            if s.cumulative.len() != calendar.n_days as usize {
                return Err(IngestError::LengthMismatch(calendar.n_days as usize, s.cumulative.len()));
            }
            by_key.insert((s.region.clone(), s.variable), s);
        }
        let mut children: BTreeMap<RegionId, Vec<RegionId>> = BTreeMap::new();
        for id in regions.keys() {
            if let Some(parent) = id.parent() {
                if regions.contains_key(&parent) {
                    children.entry(parent).or_default().push(id.clone());
                }
            }
        }
        Ok(Dataset {
            calendar,
            regions,
            series: by_key,
            children,
            synthesized,
        })
    }

    pub fn calendar(&self) -> Calendar {
        self.calendar
    }

    pub fn region(&self, id: &RegionId) -> Option<&Region> {
        self.regions.get(id)
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn regions_at(&self, level: Level) -> impl Iterator<Item = &Region> {
        self.regions.values().filter(move |r| r.level == level)
    }

    pub fn series(&self, id: &RegionId, variable: VariableKind) -> Option<&DailySeries> {
        self.series.get(&(id.clone(), variable))
    }

    pub fn all_series(&self) -> impl Iterator<Item = &DailySeries> {
        self.series.values()
    }

    pub fn children(&self, id: &RegionId) -> &[RegionId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_synthesized(&self, id: &RegionId, variable: VariableKind) -> bool {
        self.synthesized.contains(&(id.clone(), variable))
    }

    pub fn synthesized(&self) -> &BTreeSet<(RegionId, VariableKind)> {
        &self.synthesized
    }

    pub fn variables_present(&self) -> Vec<VariableKind> {
        let set: BTreeSet<VariableKind> = self.series.keys().map(|(_, v)| *v).collect();
        set.into_iter().collect()
    }

    pub fn levels_present(&self) -> Vec<Level> {
        let set: BTreeSet<Level> = self.regions.values().map(|r| r.level).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub regions: usize,
    pub adjusted_cells: usize,
    pub anchorless: usize,
    pub date_range: DateRange,
    pub variables: Vec<VariableKind>,
    pub synthesized_series: usize,
    pub incidence_available: bool,
}

#[derive(Debug, Default)]
pub struct IngestInputs {
    pub series: Vec<ParsedTimeSeries>,
    pub population: Option<BTreeMap<RegionId, u64>>,
    pub boundaries: Option<BTreeMap<RegionId, Vec<Polygon>>>,
}

/// Cleans every ingested series, synthesizes missing parent rows as sums of
/// their children, joins populations and boundaries, and derives Active.
pub fn build_dataset(inputs: IngestInputs) -> Result<(Dataset, IngestReport), IngestError> {
    let first = inputs
        .series
        .first()
        .ok_or_else(|| IngestError::MalformedHeader("no time-series files supplied".into()))?;
    let dates = first.dates.clone();
    let calendar = Calendar::new(dates[0], dates.len() as u32);

    let mut seen_vars = BTreeSet::new();
    let mut regions: BTreeMap<RegionId, Region> = BTreeMap::new();
    let mut names: BTreeMap<RegionId, Vec<String>> = BTreeMap::new();
    let mut series: BTreeMap<(RegionId, VariableKind), Vec<u64>> = BTreeMap::new();
    let mut rows = 0;
    let mut adjusted_cells = 0;

    for file in &inputs.series {
        if file.variable.is_derived() {
            return Err(IngestError::DerivedVariable);
        }
        if !seen_vars.insert(file.variable) {
            return Err(IngestError::DuplicateVariable { variable: file.variable });
        }
        if file.dates != dates {
            return Err(IngestError::CalendarMismatch { variable: file.variable });
        }
        for rec in &file.records {
            rows += 1;
            let id = rec.region.id.clone();
            let key = (id.clone(), file.variable);
            if series.contains_key(&key) {
                return Err(IngestError::DuplicateRegionRow {
                    variable: file.variable,
                    region: id,
                    row: rec.row,
                });
            }
            let cleaned = clean_series(&rec.raw);
            adjusted_cells += cleaned.adjusted;
            series.insert(key, cleaned.values);
            let entry = regions.entry(id.clone()).or_insert_with(|| rec.region.clone());
            if entry.anchor.is_none() {
                entry.anchor = rec.region.anchor;
            }
            names.entry(id).or_insert_with(|| rec.names.clone());
        }
    }

    // Parent regions missing from every file, finest level first so that
    // synthesized states can feed synthesized countries.
    let mut synthesized = BTreeSet::new();
    for level in [Level::County, Level::State] {
        let at_level: Vec<RegionId> = regions.keys().filter(|id| id.level() == level).cloned().collect();
        let mut kids: BTreeMap<RegionId, Vec<RegionId>> = BTreeMap::new();
        for id in at_level {
            if let Some(parent) = id.parent() {
                kids.entry(parent).or_default().push(id);
            }
        }
        for (parent, children) in kids {
            if !regions.contains_key(&parent) {
                let child_names = &names[&children[0]];
                let parent_names: Vec<String> = child_names[..child_names.len() - 1].to_vec();
                let anchors: Vec<LatLon> = children.iter().filter_map(|c| regions[c].anchor).collect();
                let anchor = (!anchors.is_empty()).then(|| LatLon {
                    lat: anchors.iter().map(|a| a.lat).sum::<f64>() / anchors.len() as f64,
                    lon: anchors.iter().map(|a| a.lon).sum::<f64>() / anchors.len() as f64,
                });
                let display = parent_names.last().cloned().unwrap_or_default();
                regions.insert(parent.clone(), Region::new(parent.clone(), display, anchor));
                names.insert(parent.clone(), parent_names);
            }
            for &variable in &seen_vars {
                if series.contains_key(&(parent.clone(), variable)) {
                    continue;
                }
                let mut sum: Option<Vec<u64>> = None;
                for child in &children {
                    if let Some(s) = series.get(&(child.clone(), variable)) {
                        let acc = sum.get_or_insert_with(|| vec![0; s.len()]);
                        for (a, v) in acc.iter_mut().zip(s) {
                            *a += v;
                        }
                    }
                }
                if let Some(sum) = sum {
                    series.insert((parent.clone(), variable), sum);
                    synthesized.insert((parent.clone(), variable));
                }
            }
        }
    }

    if let Some(pop) = &inputs.population {
        for region in regions.values_mut() {
            region.population = pop.get(&region.id).copied();
        }
        // Synthesized parents without a population row inherit the sum of
        // their children when every child has one.
        for level in [Level::State, Level::Country] {
            let ids: Vec<RegionId> = regions
                .keys()
                .filter(|id| id.level() == level && regions[*id].population.is_none())
                .cloned()
                .collect();
            for id in ids {
                let children: Vec<&Region> = regions.values().filter(|r| r.parent.as_ref() == Some(&id)).collect();
                if children.is_empty() || !synthesized.iter().any(|(r, _)| r == &id) {
                    continue;
                }
                let total: Option<u64> = children.iter().map(|c| c.population).sum();
                regions.get_mut(&id).expect("region exists").population = total;
            }
        }
    }

    if let Some(bounds) = &inputs.boundaries {
        for region in regions.values_mut() {
            region.boundary = bounds.get(&region.id).cloned();
        }
    }

    let mut all_series: Vec<DailySeries> = series
        .into_iter()
        .map(|((region, variable), cumulative)| DailySeries {
            region,
            variable,
            cumulative,
        })
        .collect();
    let active: Vec<DailySeries> = {
        let lookup: BTreeMap<(&RegionId, VariableKind), &DailySeries> =
            all_series.iter().map(|s| ((&s.region, s.variable), s)).collect();
        let mut out = Vec::new();
        for id in regions.keys() {
            let get = |v| lookup.get(&(id, v)).copied();
            if let (Some(c), Some(d), Some(r)) =
                (get(VariableKind::Confirmed), get(VariableKind::Deaths), get(VariableKind::Recovered))
            {
                out.push(derive_active(c, d, r)?);
            }
        }
        out
    };
    all_series.extend(active);

    let incidence_available = regions.values().any(|r| r.population.is_some());
    let anchorless = regions.values().filter(|r| r.anchor.is_none()).count();
    let n_regions = regions.len();
    let synthesized_series = synthesized.len();
    let dataset = Dataset::from_parts(calendar, regions.into_values(), all_series, synthesized)?;
    let report = IngestReport {
        rows,
        regions: n_regions,
        adjusted_cells,
        anchorless,
        date_range: DateRange {
            start: calendar.epoch,
            end: calendar.last_date(),
        },
        variables: dataset.variables_present(),
        synthesized_series,
        incidence_available,
    };
    Ok((dataset, report))
}

/// Input files of one ingest run; absent variables are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestPaths {
    pub confirmed: Option<PathBuf>,
    pub deaths: Option<PathBuf>,
    pub recovered: Option<PathBuf>,
    pub vaccinations: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
}

impl IngestPaths {
    /// JHU global file names under `dir`, keeping only those that exist.
    /// Population and boundaries are looked up as
    /// `UID_ISO_FIPS_LookUp_Table.csv` and `boundaries.geojson`.
    pub fn from_dir(dir: &Path) -> Self {
        let existing = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
        let series = |v: &str| existing(&format!("time_series_covid19_{v}_global.csv"));
        IngestPaths {
            confirmed: series("confirmed"),
            deaths: series("deaths"),
            recovered: series("recovered"),
            vaccinations: series("vaccinations"),
            population: existing("UID_ISO_FIPS_LookUp_Table.csv"),
            boundaries: existing("boundaries.geojson"),
        }
    }

    pub fn series(&self) -> impl Iterator<Item = (VariableKind, &Path)> {
        [
            (VariableKind::Confirmed, &self.confirmed),
            (VariableKind::Deaths, &self.deaths),
            (VariableKind::Recovered, &self.recovered),
            (VariableKind::Vaccinations, &self.vaccinations),
        ]
        .into_iter()
        .filter_map(|(v, p)| p.as_deref().map(|p| (v, p)))
    }
}

/// An ingest failure, with the file it came from when there is one.
#[derive(Debug, Error)]
pub struct FileError {
    pub path: Option<PathBuf>,
    #[source]
    pub source: IngestError,
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {}", p.display(), self.source),
            None => self.source.fmt(f),
        }
    }
}

/// Reads, cleans and assembles every file named in `paths`.
pub fn ingest_files(paths: &IngestPaths) -> Result<(Dataset, IngestReport), FileError> {
    let at = |p: &Path| {
        let path = p.to_path_buf();
        move |source: IngestError| FileError {
            path: Some(path),
            source,
        }
    };
    let read = |p: &Path| std::fs::read(p).map_err(|e| at(p)(e.into()));
    let mut series = Vec::new();
    for (variable, path) in paths.series() {
        series.push(parse_timeseries_csv(&read(path)?, variable).map_err(at(path))?);
    }
    let population = match &paths.population {
        Some(p) => Some(parse_population_csv(&read(p)?).map_err(at(p))?),
        None => None,
    };
    let boundaries = match &paths.boundaries {
        Some(p) => Some(parse_boundaries_geojson(&read(p)?).map_err(at(p))?),
        None => None,
    };
    build_dataset(IngestInputs {
        series,
        population,
        boundaries,
    })
    .map_err(|source| {
        let variable = match &source {
            IngestError::CalendarMismatch { variable } | IngestError::DuplicateVariable { variable } => Some(*variable),
            _ => None,
        };
        let path = variable.and_then(|v| paths.series().find(|(k, _)| *k == v).map(|(_, p)| p.to_path_buf()));
        FileError { path, source }
    })
}

/// Reads region outlines from a GeoJSON FeatureCollection. Each feature
/// names its region in `properties.region` (e.g. `"brazil"` or
/// `"us/maryland"`) and carries a Polygon or MultiPolygon geometry.
pub fn parse_boundaries_geojson(content: &[u8]) -> Result<BTreeMap<RegionId, Vec<Polygon>>, IngestError> {
    #[derive(Deserialize)]
    struct Collection {
        features: Vec<Feature>,
    }
    #[derive(Deserialize)]
    struct Feature {
        properties: BTreeMap<String, serde_json::Value>,
        geometry: Geometry,
    }
    #[derive(Deserialize)]
    #[serde(tag = "type", content = "coordinates")]
    enum Geometry {
        Polygon(Polygon),
        MultiPolygon(Vec<Polygon>),
    }

    let collection: Collection =
        serde_json::from_slice(content).map_err(|e| IngestError::Boundary(e.to_string()))?;
    let mut out: BTreeMap<RegionId, Vec<Polygon>> = BTreeMap::new();
    for (i, feature) in collection.features.into_iter().enumerate() {
        let name = feature
            .properties
            .get("region")
            .and_then(|v| v.as_str())
            .ok_or_else(|| IngestError::Boundary(format!("feature {i} has no `region` property")))?;
        let id: RegionId = name.parse().map_err(|e: ModelError| IngestError::Boundary(e.to_string()))?;
        let polygons = match feature.geometry {
            Geometry::Polygon(p) => vec![p],
            Geometry::MultiPolygon(ps) => ps,
        };
        out.entry(id).or_default().extend(polygons);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,1/24/20\n";

    fn parse(body: &str) -> Result<ParsedTimeSeries, IngestError> {
        parse_timeseries_csv(format!("{HEADER}{body}").as_bytes(), VariableKind::Confirmed)
    }

    #[test]
    fn parses_country_row() {
        let parsed = parse(",\"Albania\",41.1533,20.1683,0,0,1\n").unwrap();
        assert_eq!(parsed.dates.len(), 3);
        assert_eq!(parsed.records.len(), 1);
        let rec = &parsed.records[0];
        assert_eq!(rec.region.id, RegionId::country("albania").unwrap());
        assert_eq!(rec.region.display_name, "Albania");
        assert_eq!(rec.region.level, Level::Country);
        assert_eq!(rec.raw, vec![0, 0, 1]);
        assert_eq!(rec.region.anchor, Some(LatLon { lat: 41.1533, lon: 20.1683 }));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse("").unwrap().records.is_empty());
    }

    #[test]
    fn missing_lat_is_malformed() {
        let csv = "Province/State,Country/Region,Long,1/22/20\n,A,1,0\n";
        assert!(matches!(
            parse_timeseries_csv(csv.as_bytes(), VariableKind::Deaths),
            Err(IngestError::MalformedHeader(_))
        ));
    }

    #[test]
    fn ragged_and_non_numeric_rows() {
        assert!(matches!(parse(",A,1,2,0,1\n"), Err(IngestError::RaggedRow { row: 2, .. })));
        match parse(",A,1,2,0,x,1\n") {
            Err(IngestError::NonNumericCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "1/23/20");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_coordinates_are_anchorless() {
        let parsed = parse("Recovered,Canada,,,0,0,0\n").unwrap();
        let r = &parsed.records[0].region;
        assert_eq!(r.anchor, None);
        assert_eq!(r.level, Level::State);
    }

    #[test]
    fn gap_in_dates_is_malformed() {
        let csv = "Province/State,Country/Region,Lat,Long,1/22/20,1/24/20\n";
        assert!(matches!(
            parse_timeseries_csv(csv.as_bytes(), VariableKind::Confirmed),
            Err(IngestError::MalformedHeader(_))
        ));
    }

    #[test]
    fn population_lookup() {
        let csv = "UID,iso2,Admin2,Province_State,Country_Region,Lat,Long_,Population\n\
                   376,IL,,,Israel,31.0,35.0,8655535\n\
                   999,XX,,,Nowhere,0,0,\n";
        let pop = parse_population_csv(csv.as_bytes()).unwrap();
        assert_eq!(pop.get(&RegionId::country("israel").unwrap()), Some(&8655535));
        assert!(!pop.contains_key(&RegionId::country("nowhere").unwrap()));

        let neg = "Country_Region,Population\nA,-5\n";
        assert!(matches!(
            parse_population_csv(neg.as_bytes()),
            Err(IngestError::NegativePopulation { value: -5, .. })
        ));
        assert!(matches!(
            parse_population_csv(b"Country_Region,Pop\n"),
            Err(IngestError::MalformedHeader(_))
        ));
    }

    /// Pointwise-greatest monotone series bounded by `raw` that keeps the
    /// last value: each cell is the minimum of the suffix starting there.
    fn envelope_oracle(raw: &[i64]) -> Vec<u64> {
        (0..raw.len()).map(|d| raw[d..].iter().copied().min().unwrap().max(0) as u64).collect()
    }

    #[test]
    fn clean_series_examples() {
        assert_eq!(clean_series(&[0, 3, 5, 9]), CleanedSeries { values: vec![0, 3, 5, 9], adjusted: 0 });
        assert_eq!(clean_series(&[0, 5, 3, 9]), CleanedSeries { values: vec![0, 3, 3, 9], adjusted: 1 });
        assert_eq!(envelope_oracle(&[0, 5, 3, 9]), vec![0, 3, 3, 9]);
        assert_eq!(clean_series(&[]), CleanedSeries { values: vec![], adjusted: 0 });
    }

    fn series(id: &RegionId, v: VariableKind, c: &[u64]) -> DailySeries {
        DailySeries {
            region: id.clone(),
            variable: v,
            cumulative: c.to_vec(),
        }
    }

    #[test]
    fn derive_active_examples() {
        let id = RegionId::country("x").unwrap();
        let a = derive_active(
            &series(&id, VariableKind::Confirmed, &[100, 0, 5]),
            &series(&id, VariableKind::Deaths, &[10, 0, 4]),
            &series(&id, VariableKind::Recovered, &[20, 0, 3]),
        )
        .unwrap();
        assert_eq!(a.cumulative, vec![70, 0, 0]);
        assert!(matches!(
            derive_active(
                &series(&id, VariableKind::Confirmed, &[1]),
                &series(&id, VariableKind::Deaths, &[1, 2]),
                &series(&id, VariableKind::Recovered, &[1]),
            ),
            Err(IngestError::LengthMismatch(1, 2))
        ));
    }

    fn two_files(body_c: &str) -> IngestInputs {
        let hdr = "Province/State,Country/Region,Lat,Long,1/22/20,1/23/20\n";
        IngestInputs {
            series: vec![parse_timeseries_csv(format!("{hdr}{body_c}").as_bytes(), VariableKind::Confirmed).unwrap()],
            ..Default::default()
        }
    }

    #[test]
    fn synthesizes_missing_country() {
        let (ds, report) = build_dataset(two_files("North,Land,10,10,1,2\nSouth,Land,-10,10,3,4\n")).unwrap();
        let land = RegionId::country("land").unwrap();
        assert_eq!(ds.series(&land, VariableKind::Confirmed).unwrap().cumulative, vec![4, 6]);
        assert!(ds.is_synthesized(&land, VariableKind::Confirmed));
        assert_eq!(ds.region(&land).unwrap().display_name, "Land");
        assert_eq!(ds.region(&land).unwrap().anchor, Some(LatLon { lat: 0.0, lon: 10.0 }));
        assert_eq!(ds.children(&land).len(), 2);
        assert_eq!(report.regions, 3);
        assert_eq!(report.synthesized_series, 1);
    }

    #[test]
    fn ingested_country_is_kept_verbatim() {
        let (ds, _) = build_dataset(two_files(",Land,0,1,7,7\nNorth,Land,10,10,1,2\n")).unwrap();
        let land = RegionId::country("land").unwrap();
        assert_eq!(ds.series(&land, VariableKind::Confirmed).unwrap().cumulative, vec![7, 7]);
        assert!(!ds.is_synthesized(&land, VariableKind::Confirmed));
    }

    #[test]
    fn duplicate_row_rejected() {
        let err = build_dataset(two_files("North,Land,10,10,1,2\nNorth,Land,10,10,1,2\n")).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateRegionRow { row: 3, .. }));
    }

    #[test]
    fn active_suppressed_without_recovered() {
        let hdr = "Province/State,Country/Region,Lat,Long,1/22/20\n";
        let c = parse_timeseries_csv(format!("{hdr},A,1,1,10\n").as_bytes(), VariableKind::Confirmed).unwrap();
        let d = parse_timeseries_csv(format!("{hdr},A,1,1,2\n").as_bytes(), VariableKind::Deaths).unwrap();
        let (ds, _) = build_dataset(IngestInputs {
            series: vec![c.clone(), d.clone()],
            ..Default::default()
        })
        .unwrap();
        let a = RegionId::country("a").unwrap();
        assert!(ds.series(&a, VariableKind::Active).is_none());

        let r = parse_timeseries_csv(format!("{hdr},A,1,1,3\n").as_bytes(), VariableKind::Recovered).unwrap();
        let (ds, _) = build_dataset(IngestInputs {
            series: vec![c, d, r],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ds.series(&a, VariableKind::Active).unwrap().cumulative, vec![5]);
    }

    #[test]
    fn boundaries_geojson() {
        let body = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"region":"brazil"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]}"#;
        let b = parse_boundaries_geojson(body.as_bytes()).unwrap();
        assert_eq!(b[&RegionId::country("brazil").unwrap()].len(), 1);
        assert!(parse_boundaries_geojson(b"{}").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clean_is_monotone_idempotent_and_keeps_last(raw in prop::collection::vec(0i64..1000, 0..40)) {
                let once = clean_series(&raw);
                prop_assert!(once.values.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(&once.values, &envelope_oracle(&raw));
                if let Some(&last) = raw.last() {
                    prop_assert_eq!(*once.values.last().unwrap() as i64, last);
                }
                let again: Vec<i64> = once.values.iter().map(|&v| v as i64).collect();
                let twice = clean_series(&again);
                prop_assert_eq!(twice.values, once.values);
                prop_assert_eq!(twice.adjusted, 0);
            }

            #[test]
            fn active_never_exceeds_confirmed(c in prop::collection::vec(0u64..500, 1..20), d in 0u64..100, r in 0u64..100) {
                let id = RegionId::country("x").unwrap();
                let n = c.len();
                let a = derive_active(
                    &series(&id, VariableKind::Confirmed, &c),
                    &series(&id, VariableKind::Deaths, &vec![d; n]),
                    &series(&id, VariableKind::Recovered, &vec![r; n]),
                ).unwrap();
                prop_assert!(a.cumulative.iter().zip(&c).all(|(a, c)| a <= c));
            }
        }
    }
}
