//! Request parsing and response rendering shared by the HTTP service and the
//! command line, so both produce byte-identical bodies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::engine::{Engine, FrameRequest, Picked, ReferenceMode};
use crate::model::{
    Calendar, GeocircleFrame, LatLon, Level, ModelError, RateKind, RegionId, ScaleMethod, ScalingSpec, TimeWindow,
    VariableKind,
};
use crate::query::{Aggregation, BBox, FocusCells, Metric, Mode, Predicate, QueryError, QuerySpec, WindowSize};
use crate::snapshot::SCHEMA_VERSION;
use crate::spatial::cluster::DEFAULT_PIXEL_RADIUS;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: 400,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: 404,
            message: message.into(),
        }
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        ApiError {
            status: 422,
            message: message.into(),
        }
    }

    pub fn unavailable(message: impl Into<String>) -> Self {
        ApiError {
            status: 503,
            message: message.into(),
        }
    }

    /// JSON error body, `{"error": "..."}`.
    pub fn body(&self) -> Vec<u8> {
        serde_json::to_vec(&json!({ "error": self.message })).expect("error serializes")
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.status)
    }
}

impl std::error::Error for ApiError {}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let message = e.to_string();
        match e {
            QueryError::UnknownRegion(_) => ApiError::not_found(message),
            QueryError::WindowTooLarge { .. }
            | QueryError::SeriesMissing { .. }
            | QueryError::PopulationMissing(_)
            | QueryError::PyramidMissing { .. } => ApiError::unprocessable(message),
            _ => ApiError::bad_request(message),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Meta,
    Regions,
    Frame,
    Series,
    Pick,
    Threshold,
}

impl Endpoint {
    pub const ALL: [Endpoint; 6] = [
        Endpoint::Meta,
        Endpoint::Regions,
        Endpoint::Frame,
        Endpoint::Series,
        Endpoint::Pick,
        Endpoint::Threshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Endpoint::Meta => "meta",
            Endpoint::Regions => "regions",
            Endpoint::Frame => "frame",
            Endpoint::Series => "series",
            Endpoint::Pick => "pick",
            Endpoint::Threshold => "threshold",
        }
    }
}

impl FromStr for Endpoint {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Endpoint::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ApiError::not_found(format!("unknown endpoint `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn content_type(self) -> &'static str {
        match self {
            Format::Json => "application/json",
            Format::Csv => "text/csv; charset=utf-8",
        }
    }
}

impl FromStr for Format {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(ApiError::bad_request(format!("unknown format `{s}` (expected json or csv)"))),
        }
    }
}

/// Server-wide defaults for parameters a request leaves out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApiDefaults {
    pub scaling: ScalingSpec,
    pub pixel_radius: f64,
    pub max_markers: Option<usize>,
}

impl Default for ApiDefaults {
    fn default() -> Self {
        ApiDefaults {
            scaling: ScalingSpec::default(),
            pixel_radius: DEFAULT_PIXEL_RADIUS,
            max_markers: None,
        }
    }
}

/// `key=value` command-line arguments as request parameters.
pub fn parse_kv_args<S: AsRef<str>>(args: &[S]) -> Result<Vec<(String, String)>, ApiError> {
    args.iter()
        .map(|a| {
            let a = a.as_ref();
            a.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| ApiError::bad_request(format!("expected key=value, got `{a}`")))
        })
        .collect()
}

/// Request parameters; a repeated key keeps its last value.
struct Params<'a> {
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn new(pairs: &'a [(String, String)]) -> Self {
        Params {
            map: pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
        }
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).copied()
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ApiError> {
        self.get(key)
            .map(|raw| {
                raw.trim()
                    .parse()
                    .map_err(|_| ApiError::bad_request(format!("invalid value `{raw}` for `{key}`")))
            })
            .transpose()
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ApiError> {
        self.parse(key)?.ok_or_else(|| ApiError::bad_request(format!("missing parameter `{key}`")))
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ApiError> {
        match self.parse::<f64>(key)? {
            Some(v) if !v.is_finite() => Err(ApiError::bad_request(format!("`{key}` must be finite"))),
            v => Ok(v),
        }
    }

    fn date(&self, key: &str, cal: Calendar) -> Result<Option<u32>, ApiError> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        let date = NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
            .map_err(|_| ApiError::bad_request(format!("`{key}` must be an ISO date (YYYY-MM-DD), got `{raw}`")))?;
        Ok(Some(cal.day_index(date)?))
    }

    fn list<T: FromStr<Err = ModelError> + Ord>(&self, key: &str) -> Result<Option<BTreeSet<T>>, ApiError> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty() && *s != "none")
            .map(|s| s.parse::<T>().map_err(ApiError::from))
            .collect::<Result<_, _>>()
            .map(Some)
    }
}

fn parse_bbox(raw: &str) -> Result<BBox, ApiError> {
    let bad = || ApiError::bad_request(format!("bbox must be minLon,minLat,maxLon,maxLat, got `{raw}`"));
    let parts: Vec<f64> = raw.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [min_lon, min_lat, max_lon, max_lat] = parts[..] else { return Err(bad()) };
    let lon_ok = |v: f64| (-180.0..=180.0).contains(&v);
    let lat_ok = |v: f64| (-90.0..=90.0).contains(&v);
    if !(lon_ok(min_lon) && lon_ok(max_lon) && lat_ok(min_lat) && lat_ok(max_lat) && min_lat <= max_lat) {
        return Err(bad());
    }
    Ok(BBox {
        min_lon,
        min_lat,
        max_lon,
        max_lat,
    })
}

fn parse_mode(raw: &str) -> Result<Mode, ApiError> {
    match raw {
        "total" => Ok(Mode::Total),
        "window" => Ok(Mode::Window),
        _ => Err(ApiError::bad_request(format!("mode must be total or window, got `{raw}`"))),
    }
}

fn parse_window(raw: &str) -> Result<WindowSize, ApiError> {
    if raw == "max" {
        return Ok(WindowSize::Maximum);
    }
    raw.parse::<u32>()
        .map(WindowSize::Days)
        .map_err(|_| ApiError::bad_request(format!("window must be a day count or `max`, got `{raw}`")))
}

fn parse_agg(raw: &str) -> Result<Aggregation, ApiError> {
    match raw {
        "cumulative" => Ok(Aggregation::Cumulative),
        "daily_avg" | "daily_average" => Ok(Aggregation::DailyAverage),
        _ => Err(ApiError::bad_request(format!("agg must be cumulative or daily_avg, got `{raw}`"))),
    }
}

fn parse_predicate(op: &str, value: f64) -> Result<Predicate, ApiError> {
    match op {
        "ge" | ">=" => Ok(Predicate::AtLeast(value)),
        "le" | "<=" => Ok(Predicate::AtMost(value)),
        _ => Err(ApiError::bad_request(format!("op must be ge or le, got `{op}`"))),
    }
}

fn parse_latlon(p: &Params<'_>, lat_key: &str, lon_key: &str) -> Result<Option<LatLon>, ApiError> {
    match (p.number(lat_key)?, p.number(lon_key)?) {
        (None, None) => Ok(None),
        (Some(lat), Some(lon)) => Ok(Some(LatLon::new(lat, lon)?)),
        _ => Err(ApiError::bad_request(format!("`{lat_key}` and `{lon_key}` must be given together"))),
    }
}

struct Selection {
    variables: BTreeSet<VariableKind>,
    rates: BTreeSet<RateKind>,
}

fn build_spec(p: &Params<'_>, engine: &Engine, default: Selection) -> Result<(QuerySpec, f64), ApiError> {
    let cal = engine.dataset().calendar();
    let full = cal.full_window().ok_or_else(|| ApiError::unavailable("dataset has no dates"))?;
    let start = p.date("start", cal)?.unwrap_or(full.start_day);
    let end = p.date("end", cal)?.unwrap_or(full.end_day);
    let range = TimeWindow::new(start, end, cal.n_days)?;
    let zoom = p.number("zoom")?.unwrap_or(2.0);
    if !(0.0..=24.0).contains(&zoom) {
        return Err(ApiError::bad_request("zoom must lie in [0, 24]"));
    }
    let level = p.parse::<Level>("level")?.unwrap_or_else(|| Level::for_zoom(zoom));
    let mut spec = QuerySpec::new(range, level);
    if let Some(m) = p.get("mode") {
        spec.mode = parse_mode(m)?;
    }
    if let Some(w) = p.get("window") {
        spec.window_size = parse_window(w)?;
    }
    if let Some(a) = p.get("agg") {
        spec.aggregation = parse_agg(a)?;
    }
    spec.variables = p.list("vars")?.unwrap_or(default.variables);
    spec.rates = p.list("rates")?.unwrap_or(default.rates);
    spec.bbox = p.get("bbox").map(parse_bbox).transpose()?;
    spec.window_len()?;
    Ok((spec, zoom))
}

fn frame_defaults() -> Selection {
    Selection {
        variables: BTreeSet::new(),
        rates: [RateKind::Incidence, RateKind::Mortality].into_iter().collect(),
    }
}

fn parse_factors(raw: &str, scaling: &mut ScalingSpec) -> Result<BTreeMap<Metric, f64>, ApiError> {
    let bad = || ApiError::bad_request(format!("scale_factor must be a number or kind:factor list, got `{raw}`"));
    if let Ok(v) = raw.trim().parse::<f64>() {
        scaling.user_factor = v;
        return Ok(BTreeMap::new());
    }
    raw.split(',')
        .map(|item| {
            let (k, v) = item.split_once(':').ok_or_else(bad)?;
            let metric = k.trim().parse::<Metric>()?;
            let v = v.trim().parse::<f64>().map_err(|_| bad())?;
            Ok((metric, v))
        })
        .collect()
}

fn build_frame_request(p: &Params<'_>, engine: &Engine, defaults: &ApiDefaults) -> Result<FrameRequest, ApiError> {
    let (spec, zoom) = build_spec(p, engine, frame_defaults())?;
    let cal = engine.dataset().calendar();
    let day = p.date("date", cal)?.unwrap_or(spec.range.end_day);
    let mut req = FrameRequest::new(spec, day);
    req.zoom = zoom;
    req.pixel_radius = p.number("cluster_px")?.unwrap_or(defaults.pixel_radius);
    if req.pixel_radius < 0.0 {
        return Err(ApiError::bad_request("cluster_px must not be negative"));
    }
    req.max_markers = match p.parse::<usize>("max_markers")? {
        Some(0) => return Err(ApiError::bad_request("max_markers must be at least 1")),
        Some(n) => Some(n),
        None => defaults.max_markers,
    };
    req.scaling = defaults.scaling;
    if let Some(m) = p.parse::<ScaleMethod>("scale_method")? {
        req.scaling.method = m;
    }
    if let Some(raw) = p.get("scale_factor") {
        req.factors = parse_factors(raw, &mut req.scaling)?;
    }
    req.reference = match p.get("ref_mode") {
        None | Some("frame") => ReferenceMode::Frame,
        Some("range") => ReferenceMode::Range,
        Some(other) => return Err(ApiError::bad_request(format!("ref_mode must be frame or range, got `{other}`"))),
    };
    req.highlight = parse_latlon(p, "pick_lat", "pick_lon")?;
    req.use_boundaries = p.parse::<bool>("boundaries")?.unwrap_or(true);
    Ok(req)
}

#[derive(Serialize)]
struct MetaBody<'a> {
    version: &'a str,
    schema_version: u32,
    epoch: NaiveDate,
    last_date: NaiveDate,
    n_days: u32,
    variables: Vec<VariableKind>,
    rates: Vec<RateKind>,
    levels: Vec<Level>,
    region_counts: BTreeMap<Level, usize>,
}

fn meta(engine: &Engine) -> MetaBody<'_> {
    let ds = engine.dataset();
    let cal = ds.calendar();
    let variables = ds.variables_present();
    let has = |v| variables.contains(&v);
    let rates = RateKind::ALL
        .into_iter()
        .filter(|r| match r {
            RateKind::Incidence => has(VariableKind::Confirmed) && ds.regions().any(|r| r.population.is_some()),
            RateKind::Mortality => has(VariableKind::Confirmed) && has(VariableKind::Deaths),
            RateKind::Recovery => has(VariableKind::Deaths) && has(VariableKind::Recovered),
        })
        .collect();
    let levels = ds.levels_present();
    MetaBody {
        version: engine.version(),
        schema_version: SCHEMA_VERSION,
        epoch: cal.epoch,
        last_date: cal.last_date(),
        n_days: cal.n_days,
        variables,
        rates,
        region_counts: levels.iter().map(|&l| (l, ds.regions_at(l).count())).collect(),
        levels,
    }
}

#[derive(Serialize)]
struct RegionBody<'a> {
    id: &'a RegionId,
    display_name: &'a str,
    level: Level,
    anchor: Option<LatLon>,
    population: Option<u64>,
}

fn cells_json(names: &[String], cells: &FocusCells) -> Map<String, Value> {
    names
        .iter()
        .zip(cells.variables.iter().chain(&cells.rates))
        .map(|(n, v)| (n.clone(), json!(v)))
        .collect()
}

fn picked_json(picked: Option<&Picked>, req: &FrameRequest) -> Value {
    let Some(p) = picked else { return json!({ "region": null }) };
    let lookup = |glyphs: &[crate::model::Glyph], name: String| {
        let v = glyphs.iter().find(|g| g.kind == name).map(|g| g.value);
        (name, json!(v))
    };
    let values: Map<String, Value> =
        req.spec.variables.iter().map(|v| lookup(&p.entry.variables, v.to_string())).collect();
    let rates: Map<String, Value> = req.spec.rates.iter().map(|r| lookup(&p.entry.rates, r.to_string())).collect();
    json!({
        "region": p.entry.id,
        "label": p.entry.label,
        "members": p.entry.members,
        "anchor": p.entry.anchor,
        "values": values,
        "rates": rates,
        "distance_km": p.distance_km,
        "contained": p.contained,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn frame_csv(frame: &GeocircleFrame) -> Vec<u8> {
    let header = ["id", "label", "lat", "lon", "highlight", "kind", "value", "radius_px", "stroke", "color"];
    let mut rows = Vec::new();
    for e in &frame.entries {
        let base = vec![e.id.clone(), e.label.clone(), e.anchor.lat.to_string(), e.anchor.lon.to_string(), e.highlight.to_string()];
        let glyphs: Vec<_> = e.variables.iter().chain(&e.rates).collect();
        if glyphs.is_empty() {
            rows.push([base.clone(), vec![String::new(); 5]].concat());
        }
        for g in glyphs {
            let stroke = serde_json::to_value(g.stroke).expect("stroke serializes");
            let color = serde_json::to_value(g.color).expect("color serializes");
            let mut row = base.clone();
            row.extend([
                g.kind.clone(),
                g.value.to_string(),
                g.radius_px.to_string(),
                stroke.as_str().unwrap_or_default().to_string(),
                color.as_str().unwrap_or_default().to_string(),
            ]);
            rows.push(row);
        }
    }
    csv_bytes(&header, rows)
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    serde_json::to_vec(value).expect("response serializes")
}

/// Runs one request against `engine` and renders the body.
pub fn handle(
    engine: &Engine,
    defaults: &ApiDefaults,
    endpoint: Endpoint,
    params: &[(String, String)],
    format: Format,
) -> Result<Vec<u8>, ApiError> {
    let p = Params::new(params);
    let cal = engine.dataset().calendar();
    let date = |day: u32| cal.date(day).map_err(ApiError::from);
    match endpoint {
        Endpoint::Meta => {
            let m = meta(engine);
            Ok(match format {
                Format::Json => to_json(&m),
                Format::Csv => {
                    let list = |items: Vec<String>| items.join(";");
                    csv_bytes(
                        &["key", "value"],
                        [
                            vec!["version".into(), m.version.to_string()],
                            vec!["schema_version".into(), m.schema_version.to_string()],
                            vec!["epoch".into(), m.epoch.to_string()],
                            vec!["last_date".into(), m.last_date.to_string()],
                            vec!["n_days".into(), m.n_days.to_string()],
                            vec!["variables".into(), list(m.variables.iter().map(|v| v.to_string()).collect())],
                            vec!["rates".into(), list(m.rates.iter().map(|r| r.to_string()).collect())],
                            vec!["levels".into(), list(m.levels.iter().map(|l| l.to_string()).collect())],
                        ],
                    )
                }
            })
        }
        Endpoint::Regions => {
            let level = p.parse::<Level>("level")?.unwrap_or(Level::Country);
            let regions: Vec<RegionBody<'_>> = engine
                .regions(level, p.get("q"))
                .into_iter()
                .map(|r| RegionBody {
                    id: &r.id,
                    display_name: &r.display_name,
                    level: r.level,
                    anchor: r.anchor,
                    population: r.population,
                })
                .collect();
            Ok(match format {
                Format::Json => to_json(&regions),
                Format::Csv => csv_bytes(
                    &["id", "display_name", "level", "lat", "lon", "population"],
                    regions.iter().map(|r| {
                        vec![
                            r.id.to_string(),
                            r.display_name.to_string(),
                            r.level.to_string(),
                            fmt_opt(r.anchor.map(|a| a.lat)),
                            fmt_opt(r.anchor.map(|a| a.lon)),
                            r.population.map(|p| p.to_string()).unwrap_or_default(),
                        ]
                    }),
                ),
            })
        }
        Endpoint::Frame => {
            let req = build_frame_request(&p, engine, defaults)?;
            let frame = engine.frame(&req)?;
            Ok(match format {
                Format::Json => to_json(&frame),
                Format::Csv => frame_csv(&frame),
            })
        }
        Endpoint::Pick => {
            let req = build_frame_request(&p, engine, defaults)?;
            let at = parse_latlon(&p, "lat", "lon")?.ok_or_else(|| ApiError::bad_request("missing parameters `lat` and `lon`"))?;
            let picked = engine.pick(&req, at)?;
            Ok(match format {
                Format::Json => to_json(&picked_json(picked.as_ref(), &req)),
                Format::Csv => csv_bytes(
                    &["region", "label", "distance_km", "contained"],
                    picked.iter().map(|pk| {
                        vec![
                            pk.entry.id.clone(),
                            pk.entry.label.clone(),
                            pk.distance_km.to_string(),
                            pk.contained.to_string(),
                        ]
                    }),
                ),
            })
        }
        Endpoint::Series => {
            let all = Selection {
                variables: engine.dataset().variables_present().into_iter().collect(),
                rates: RateKind::ALL.into_iter().collect(),
            };
            let (spec, _) = build_spec(&p, engine, all)?;
            let focus: RegionId = p.require("focus")?;
            let baseline: Option<RegionId> = p.parse("baseline")?;
            let table = engine.series(&focus, baseline.as_ref(), &spec)?;
            let names: Vec<String> = table
                .variables
                .iter()
                .map(|v| v.to_string())
                .chain(table.rates.iter().map(|r| r.to_string()))
                .collect();
            match format {
                Format::Json => {
                    let rows = table
                        .rows
                        .iter()
                        .map(|row| {
                            Ok(json!({
                                "date": date(row.day)?,
                                "window": { "start": date(row.window.start_day)?, "end": date(row.window.end_day)? },
                                "focus": cells_json(&names, &row.focus),
                                "baseline": row.baseline.as_ref().map(|b| cells_json(&names, b)),
                            }))
                        })
                        .collect::<Result<Vec<Value>, ApiError>>()?;
                    Ok(to_json(&json!({
                        "focus": table.focus,
                        "baseline": table.baseline,
                        "variables": table.variables,
                        "rates": table.rates,
                        "rows": rows,
                    })))
                }
                Format::Csv => {
                    let mut header = vec!["date".to_string(), "window_start".into(), "window_end".into()];
                    header.extend(names.iter().map(|n| format!("focus_{n}")));
                    if table.baseline.is_some() {
                        header.extend(names.iter().map(|n| format!("baseline_{n}")));
                    }
                    let header: Vec<&str> = header.iter().map(String::as_str).collect();
                    let mut rows = Vec::new();
                    for row in &table.rows {
                        let mut out = vec![
                            date(row.day)?.to_string(),
                            date(row.window.start_day)?.to_string(),
                            date(row.window.end_day)?.to_string(),
                        ];
                        for cells in std::iter::once(&row.focus).chain(&row.baseline) {
                            out.extend(cells.variables.iter().chain(&cells.rates).map(|v| fmt_opt(*v)));
                        }
                        rows.push(out);
                    }
                    Ok(csv_bytes(&header, rows))
                }
            }
        }
        Endpoint::Threshold => {
            let none = Selection {
                variables: BTreeSet::new(),
                rates: BTreeSet::new(),
            };
            let (spec, _) = build_spec(&p, engine, none)?;
            let metric: Metric = p
                .get("metric")
                .ok_or_else(|| ApiError::bad_request("missing parameter `metric`"))?
                .parse()?;
            let value = p.number("value")?.ok_or_else(|| ApiError::bad_request("missing parameter `value`"))?;
            let predicate = parse_predicate(p.get("op").unwrap_or("ge"), value)?;
            let outcome = engine.threshold(metric, predicate, &spec)?;
            let mut hits = Vec::with_capacity(outcome.hits.len());
            for hit in &outcome.hits {
                let dates = hit.days.iter().map(|&d| date(d)).collect::<Result<Vec<_>, _>>()?;
                hits.push((hit.region.clone(), dates));
            }
            Ok(match format {
                Format::Json => to_json(
                    &hits
                        .iter()
                        .map(|(region, dates)| json!({ "region": region, "dates": dates }))
                        .collect::<Vec<_>>(),
                ),
                Format::Csv => csv_bytes(
                    &["region", "date"],
                    hits.iter()
                        .flat_map(|(region, dates)| dates.iter().map(move |d| vec![region.to_string(), d.to_string()])),
                ),
            })
        }
    }
}
