//! Loaded dataset plus its indexes, and the frame composition pipeline:
//! window values, clustering, radius assignment and highlighting.

use std::collections::BTreeMap;
use std::path::Path;

use crate::ingest::Dataset;
use crate::model::{
    GeocircleFrame, FrameEntry, Glyph, LatLon, Level, RateKind, Region, RegionId, ScalingSpec, SeriesScale, Stroke,
    VariableKind, WindowDates,
};
use crate::query::{
    aggregate, evaluate_frame, focus_series, frame_dates, rate_from_totals, threshold_query, FocusTable, Metric,
    Predicate, PyramidSet, QueryError, QuerySpec, ThresholdOutcome,
};
use crate::scaling::{fit_reference, radius};
use crate::snapshot::{self, SnapshotError};
use crate::spatial::{cluster, pick, ClusterInput, ClusterNode, ClusterParams, PRQuadtree, PickCandidate};

/// What the radius reference is fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    /// Largest value in the frame itself.
    #[default]
    Frame,
    /// Largest single-region value over every report date of the range.
    Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRequest {
    pub spec: QuerySpec,
    pub day: u32,
    pub zoom: f64,
    pub pixel_radius: f64,
    pub max_markers: Option<usize>,
    /// Method, base radius and clamps; the reference is fitted per series.
    pub scaling: ScalingSpec,
    /// Per-series factor overrides of `scaling.user_factor`.
    pub factors: BTreeMap<Metric, f64>,
    pub reference: ReferenceMode,
    /// Pointer position whose picked entry is flagged `highlight`.
    pub highlight: Option<LatLon>,
    pub use_boundaries: bool,
}

impl FrameRequest {
    pub fn new(spec: QuerySpec, day: u32) -> Self {
        FrameRequest {
            spec,
            day,
            zoom: 2.0,
            pixel_radius: crate::spatial::cluster::DEFAULT_PIXEL_RADIUS,
            max_markers: None,
            scaling: ScalingSpec::default(),
            factors: BTreeMap::new(),
            reference: ReferenceMode::Frame,
            highlight: None,
            use_boundaries: true,
        }
    }

    /// Metrics drawn, variables first, in display order.
    pub fn metrics(&self) -> Vec<Metric> {
        let vars = self.spec.variables.iter().map(|&v| Metric::Variable(v));
        vars.chain(self.spec.rates.iter().map(|&r| Metric::Rate(r))).collect()
    }

    /// Variable that ranks regions for clustering.
    pub fn primary_variable(&self) -> VariableKind {
        self.spec.variables.iter().next().copied().unwrap_or(VariableKind::Confirmed)
    }
}

/// Entry chosen by a pointer position.
#[derive(Debug, Clone, PartialEq)]
pub struct Picked {
    pub entry: FrameEntry,
    pub distance_km: f64,
    pub contained: bool,
}

pub struct Engine {
    dataset: Dataset,
    pyramids: PyramidSet,
    trees: BTreeMap<Level, PRQuadtree>,
    version: String,
}

struct Composed {
    frame: GeocircleFrame,
    nodes: Vec<ClusterNode>,
}

fn metric_value(node: &ClusterNode, metric: Metric, window_len: u32, spec: &QuerySpec) -> Option<f64> {
    let total = |v: VariableKind| node.complete.contains(&v).then(|| node.totals.get(&v).copied()).flatten();
    match metric {
        Metric::Variable(v) => total(v).map(|t| aggregate(t, window_len, spec.aggregation)),
        Metric::Rate(r) => rate_from_totals(r, total, node.population, window_len, spec.aggregation).ok().flatten(),
    }
}

fn glyph_style(metric: Metric) -> (Stroke, crate::model::Color) {
    match metric {
        Metric::Variable(v) => (Stroke::Broken, v.color()),
        Metric::Rate(r) => (Stroke::Solid, RateKind::color(r)),
    }
}

impl Engine {
    pub fn new(dataset: Dataset) -> Self {
        let version = snapshot::content_version(&snapshot::encode(&dataset));
        Self::with_version(dataset, version)
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let dataset = snapshot::decode(bytes)?;
        Ok(Self::with_version(dataset, snapshot::content_version(bytes)))
    }

    pub fn load_dir(dir: &Path) -> Result<Self, SnapshotError> {
        Self::from_snapshot(&snapshot::read_dir(dir)?)
    }

    fn with_version(dataset: Dataset, version: String) -> Self {
        let pyramids = PyramidSet::build(&dataset);
        let trees = dataset
            .levels_present()
            .into_iter()
            .map(|level| {
                let anchors = dataset.regions_at(level).filter_map(|r| r.anchor.map(|a| (r.id.clone(), a)));
                (level, PRQuadtree::build(anchors))
            })
            .collect();
        Engine {
            dataset,
            pyramids,
            trees,
            version,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Hex content hash of the snapshot this engine serves.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn pyramids(&self) -> &PyramidSet {
        &self.pyramids
    }

    pub fn tree(&self, level: Level) -> Option<&PRQuadtree> {
        self.trees.get(&level)
    }

    /// Regions at `level` whose display name starts with `prefix`
    /// (case-insensitive), sorted by display name.
    pub fn regions(&self, level: Level, prefix: Option<&str>) -> Vec<&Region> {
        let prefix = prefix.map(str::to_lowercase);
        let mut out: Vec<&Region> = self
            .dataset
            .regions_at(level)
            .filter(|r| prefix.as_ref().is_none_or(|p| r.display_name.to_lowercase().starts_with(p.as_str())))
            .collect();
        out.sort_by(|a, b| a.display_name.cmp(&b.display_name).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn frame(&self, req: &FrameRequest) -> Result<GeocircleFrame, QueryError> {
        Ok(self.compose(req)?.frame)
    }

    /// Entry under `at` in the frame `req` describes, or `None` when every
    /// entry is zero.
    pub fn pick(&self, req: &FrameRequest, at: LatLon) -> Result<Option<Picked>, QueryError> {
        let composed = self.compose(req)?;
        Ok(self.pick_in(req, &composed, at).map(|(index, distance_km, contained)| Picked {
            entry: composed.frame.entries[index].clone(),
            distance_km,
            contained,
        }))
    }

    pub fn threshold(&self, metric: Metric, predicate: Predicate, spec: &QuerySpec) -> Result<ThresholdOutcome, QueryError> {
        threshold_query(&self.dataset, &self.pyramids, metric, predicate, spec)
    }

    pub fn series(&self, focus: &RegionId, baseline: Option<&RegionId>, spec: &QuerySpec) -> Result<FocusTable, QueryError> {
        focus_series(&self.dataset, focus, baseline, spec)
    }

    fn pick_in(&self, req: &FrameRequest, composed: &Composed, at: LatLon) -> Option<(usize, f64, bool)> {
        let tree = self.trees.get(&req.spec.level)?;
        let mut polys: Vec<Vec<&crate::model::Polygon>> = Vec::with_capacity(composed.nodes.len());
        for node in &composed.nodes {
            polys.push(
                node.members
                    .iter()
                    .filter_map(|m| self.dataset.region(m).and_then(|r| r.boundary.as_ref()))
                    .flatten()
                    .collect(),
            );
        }
        let candidates: Vec<PickCandidate<'_>> = composed
            .nodes
            .iter()
            .zip(&composed.frame.entries)
            .zip(polys)
            .map(|((node, entry), polygons)| PickCandidate {
                anchor_region: &node.anchor_region,
                anchor: node.anchor,
                nonzero: entry.variables.iter().chain(&entry.rates).any(|g| g.value > 0.0),
                polygons,
            })
            .collect();
        pick(tree, &candidates, at, req.use_boundaries).map(|p| (p.index, p.distance_km, p.contained))
    }

    fn range_references(&self, req: &FrameRequest, metrics: &[Metric]) -> Result<Vec<Option<f64>>, QueryError> {
        let len = req.spec.window_len()?;
        let mut best: Vec<Option<f64>> = vec![None; metrics.len()];
        for (day, _) in frame_dates(&req.spec)? {
            let values = evaluate_frame(&self.dataset, &req.spec, day)?;
            for (slot, &m) in best.iter_mut().zip(metrics) {
                let vals = values.entries.iter().filter_map(|e| match m {
                    Metric::Variable(v) => e.value(v, len, req.spec.aggregation),
                    Metric::Rate(r) => e.rate(r, len, req.spec.aggregation),
                });
                if let Ok(r) = fit_reference(vals) {
                    *slot = Some(slot.map_or(r, |s: f64| s.max(r)));
                }
            }
        }
        Ok(best)
    }

    fn compose(&self, req: &FrameRequest) -> Result<Composed, QueryError> {
        let values = evaluate_frame(&self.dataset, &req.spec, req.day)?;
        let window_len = values.window.len();
        let primary = req.primary_variable();
        let inputs: Vec<ClusterInput> = values
            .entries
            .into_iter()
            .map(|e| ClusterInput {
                primary: e.totals.get(&primary).copied().unwrap_or(0),
                id: e.region,
                display_name: e.display_name,
                anchor: e.anchor,
                population: e.population,
                totals: e.totals,
            })
            .collect();
        let nodes = cluster(
            &inputs,
            ClusterParams {
                zoom: req.zoom,
                pixel_radius: req.pixel_radius,
                max_markers: req.max_markers,
            },
        );

        let metrics = req.metrics();
        let table: Vec<Vec<Option<f64>>> = nodes
            .iter()
            .map(|n| metrics.iter().map(|&m| metric_value(n, m, window_len, &req.spec)).collect())
            .collect();
        let references = match req.reference {
            ReferenceMode::Frame => (0..metrics.len())
                .map(|i| fit_reference(table.iter().filter_map(|row| row[i])).ok())
                .collect(),
            ReferenceMode::Range => self.range_references(req, &metrics)?,
        };
        let scales: Vec<SeriesScale> = metrics
            .iter()
            .zip(&references)
            .map(|(&m, reference)| SeriesScale {
                kind: m.to_string(),
                spec: ScalingSpec {
                    reference_value: reference.unwrap_or(1.0),
                    user_factor: req.factors.get(&m).copied().unwrap_or(req.scaling.user_factor),
                    ..req.scaling
                },
            })
            .collect();
        for s in &scales {
            s.spec.validate().map_err(QueryError::from)?;
        }

        let mut entries = Vec::with_capacity(nodes.len());
        for (node, row) in nodes.iter().zip(&table) {
            let mut variables = Vec::new();
            let mut rates = Vec::new();
            for ((&m, value), scale) in metrics.iter().zip(row).zip(&scales) {
                let Some(value) = *value else { continue };
                let (stroke, color) = glyph_style(m);
                let glyph = Glyph {
                    kind: scale.kind.clone(),
                    value,
                    radius_px: radius(value, &scale.spec).map_err(|e| QueryError::InvalidSpec(e.to_string()))?,
                    stroke,
                    color,
                };
                match m {
                    Metric::Variable(_) => variables.push(glyph),
                    Metric::Rate(_) => rates.push(glyph),
                }
            }
            entries.push(FrameEntry {
                id: node.key(),
                label: node.label.clone(),
                members: node.members.clone(),
                anchor: node.anchor,
                highlight: false,
                variables,
                rates,
            });
        }
        let cal = self.dataset.calendar();
        let mut composed = Composed {
            frame: GeocircleFrame {
                date: cal.date(req.day)?,
                window: WindowDates {
                    start: cal.date(values.window.start_day)?,
                    end: cal.date(values.window.end_day)?,
                },
                level: req.spec.level,
                zoom: req.zoom,
                scales,
                entries,
            },
            nodes,
        };
        if let Some(at) = req.highlight {
            if let Some((index, _, _)) = self.pick_in(req, &composed, at) {
                composed.frame.entries[index].highlight = true;
            }
        }
        Ok(composed)
    }
}
