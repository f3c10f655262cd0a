//! Feature queries: where and when does a variable or rate cross a value.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{aggregate, frame_dates, rate_value, window_value, Aggregation, Mode, PyramidSet, QueryError, QuerySpec};
use crate::ingest::Dataset;
use crate::model::{ModelError, RateKind, RegionId, TimeWindow, VariableKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Variable(VariableKind),
    Rate(RateKind),
}

impl FromStr for Metric {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<VariableKind>()
            .map(Metric::Variable)
            .or_else(|_| s.parse::<RateKind>().map(Metric::Rate))
            .map_err(|_| ModelError::UnknownName {
                what: "metric",
                value: s.to_string(),
            })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Variable(v) => v.fmt(f),
            Metric::Rate(r) => r.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predicate {
    AtLeast(f64),
    AtMost(f64),
}

impl Predicate {
    pub fn test(self, value: f64) -> bool {
        match self {
            Predicate::AtLeast(v) => value >= v,
            Predicate::AtMost(v) => value <= v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThresholdHit {
    pub region: RegionId,
    pub days: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdOutcome {
    /// Regions with at least one satisfying report date, in id order.
    pub hits: Vec<ThresholdHit>,
    /// Exact (region, report-date) evaluations performed.
    pub evaluations: usize,
}

/// Regions at `spec.level` that are in scope. Without a bbox, anchorless
/// regions take part too.
fn scope<'a>(dataset: &'a Dataset, spec: &'a QuerySpec) -> impl Iterator<Item = &'a RegionId> + 'a {
    dataset.regions_at(spec.level).filter(|r| spec.in_scope(r.anchor)).map(|r| &r.id)
}

fn metric_value(dataset: &Dataset, region: &RegionId, metric: Metric, window: TimeWindow, agg: Aggregation) -> Option<f64> {
    match metric {
        Metric::Variable(v) => window_value(dataset, region, v, window, agg).ok(),
        Metric::Rate(r) => rate_value(dataset, region, r, window, agg).ok().flatten(),
    }
}

fn collect(found: BTreeMap<RegionId, Vec<u32>>, evaluations: usize) -> ThresholdOutcome {
    ThresholdOutcome {
        hits: found
            .into_iter()
            .filter(|(_, days)| !days.is_empty())
            .map(|(region, mut days)| {
                days.sort_unstable();
                ThresholdHit { region, days }
            })
            .collect(),
        evaluations,
    }
}

fn scan(dataset: &Dataset, metric: Metric, predicate: Predicate, spec: &QuerySpec) -> Result<ThresholdOutcome, QueryError> {
    let dates = frame_dates(spec)?;
    let mut found: BTreeMap<RegionId, Vec<u32>> = BTreeMap::new();
    let mut evaluations = 0;
    for region in scope(dataset, spec) {
        for &(day, window) in &dates {
            evaluations += 1;
            if let Some(v) = metric_value(dataset, region, metric, window, spec.aggregation) {
                if predicate.test(v) {
                    found.entry(region.clone()).or_default().push(day);
                }
            }
        }
    }
    Ok(collect(found, evaluations))
}

/// Every (region, report date) of `spec` whose window value satisfies the
/// predicate. For `>=` on an ingested variable the pyramid prunes report
/// date ranges whose bound falls below the threshold; every reported hit is
/// still checked exactly. Other predicates and metrics are scanned.
pub fn threshold_query(
    dataset: &Dataset,
    pyramids: &PyramidSet,
    metric: Metric,
    predicate: Predicate,
    spec: &QuerySpec,
) -> Result<ThresholdOutcome, QueryError> {
    let (variable, threshold) = match (metric, predicate) {
        (Metric::Variable(v), Predicate::AtLeast(t)) if !v.is_derived() => (v, t),
        _ => return scan(dataset, metric, predicate, spec),
    };
    let pyramid = pyramids.get(variable, spec.level).ok_or(QueryError::PyramidMissing {
        variable,
        level: spec.level,
    })?;
    let dates = frame_dates(spec)?;
    let candidates: Vec<(&RegionId, &[u64])> = scope(dataset, spec)
        .filter_map(|id| dataset.series(id, variable).map(|s| (id, s.cumulative.as_slice())))
        .collect();

    let mut search = Search {
        dataset,
        pyramid,
        variable,
        threshold,
        aggregation: spec.aggregation,
        mode: spec.mode,
        dates: &dates,
        found: BTreeMap::new(),
        evaluations: 0,
    };
    if !dates.is_empty() && !candidates.is_empty() {
        search.descend(0, dates.len() - 1, &candidates);
    }
    let evaluations = search.evaluations;
    Ok(collect(search.found, evaluations))
}

struct Search<'a> {
    dataset: &'a Dataset,
    pyramid: &'a super::Pyramid,
    variable: VariableKind,
    threshold: f64,
    aggregation: Aggregation,
    mode: Mode,
    dates: &'a [(u32, TimeWindow)],
    found: BTreeMap<RegionId, Vec<u32>>,
    evaluations: usize,
}

impl Search<'_> {
    /// Upper bound of the metric for windows whose union is `[lo, hi]` and
    /// whose lengths lie in `[min_len, max_len]`, given the largest
    /// single-day increment and the total over the union.
    fn bound(&self, union_total: u64, max_inc: u64, min_len: u32, max_len: u32) -> f64 {
        match self.aggregation {
            Aggregation::Cumulative => union_total.min(max_inc.saturating_mul(u64::from(max_len))) as f64,
            Aggregation::DailyAverage => (max_inc as f64).min(aggregate(union_total, min_len, Aggregation::DailyAverage)),
        }
    }

    fn descend(&mut self, first: usize, last: usize, candidates: &[(&RegionId, &[u64])]) {
        let lo = self.dates[first].1.start_day;
        let hi = self.dates[last].1.end_day;
        let (min_len, max_len) = match self.mode {
            Mode::Window => (self.dates[first].1.len(), self.dates[first].1.len()),
            Mode::Total => (self.dates[first].1.len(), self.dates[last].1.len()),
        };
        let level_bound = self.bound(
            self.pyramid.total_bound(lo, hi),
            self.pyramid.max_increment(lo, hi),
            min_len,
            max_len,
        );
        if level_bound < self.threshold {
            return;
        }
        let before = |c: &[u64]| if lo == 0 { 0 } else { c[lo as usize - 1] };
        let survivors: Vec<(&RegionId, &[u64])> = candidates
            .iter()
            .filter(|(_, c)| {
                let total = c[hi as usize].saturating_sub(before(c));
                let bound = match self.aggregation {
                    Aggregation::Cumulative => total as f64,
                    Aggregation::DailyAverage => aggregate(total, min_len, Aggregation::DailyAverage),
                };
                bound >= self.threshold
            })
            .copied()
            .collect();
        if survivors.is_empty() {
            return;
        }
        if first == last {
            let (day, window) = self.dates[first];
            for (region, _) in survivors {
                self.evaluations += 1;
                if let Ok(v) = window_value(self.dataset, region, self.variable, window, self.aggregation) {
                    if v >= self.threshold {
                        self.found.entry(region.clone()).or_default().push(day);
                    }
                }
            }
            return;
        }
        let mid = first + (last - first) / 2;
        self.descend(first, mid, &survivors);
        self.descend(mid + 1, last, &survivors);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Level;
    use crate::query::tests::toy;
    use crate::query::WindowSize;

    fn spec(mode: Mode, n: u32, size: WindowSize) -> QuerySpec {
        QuerySpec {
            mode,
            window_size: size,
            ..QuerySpec::new(TimeWindow { start_day: 0, end_day: n - 1 }, Level::Country)
        }
    }

    fn fixture() -> Dataset {
        toy(
            &[
                ("a", VariableKind::Confirmed, &[0, 2, 2, 10, 11, 30]),
                ("b", VariableKind::Confirmed, &[1, 1, 1, 1, 5, 5]),
                ("c", VariableKind::Confirmed, &[0, 0, 0, 0, 0, 0]),
            ],
            &[],
        )
    }

    #[test]
    fn vacuous_and_unsatisfiable() {
        let ds = fixture();
        let pyr = PyramidSet::build(&ds);
        let s = spec(Mode::Window, 6, WindowSize::Days(2));
        let all = threshold_query(&ds, &pyr, Metric::Variable(VariableKind::Confirmed), Predicate::AtLeast(0.0), &s).unwrap();
        assert_eq!(all.hits.len(), 3);
        assert!(all.hits.iter().all(|h| h.days == vec![1, 2, 3, 4, 5]));

        let max = pyr.get(VariableKind::Confirmed, Level::Country).unwrap().root_max_increment();
        let none = threshold_query(
            &ds,
            &pyr,
            Metric::Variable(VariableKind::Confirmed),
            Predicate::AtLeast(2.0 * max as f64 + 1.0),
            &s,
        )
        .unwrap();
        assert!(none.hits.is_empty());
        assert_eq!(none.evaluations, 0);
    }

    #[test]
    fn pruned_matches_scan() {
        let ds = fixture();
        let pyr = PyramidSet::build(&ds);
        for mode in [Mode::Window, Mode::Total] {
            for agg in [Aggregation::Cumulative, Aggregation::DailyAverage] {
                for t in [0.5, 1.0, 3.0, 8.0, 19.0] {
                    let mut s = spec(mode, 6, WindowSize::Days(2));
                    s.aggregation = agg;
                    let m = Metric::Variable(VariableKind::Confirmed);
                    let fast = threshold_query(&ds, &pyr, m, Predicate::AtLeast(t), &s).unwrap();
                    let slow = scan(&ds, m, Predicate::AtLeast(t), &s).unwrap();
                    assert_eq!(fast.hits, slow.hits, "{mode:?} {agg:?} {t}");
                    assert!(fast.evaluations <= slow.evaluations);
                }
            }
        }
    }

    #[test]
    fn missing_pyramid() {
        let ds = fixture();
        let s = spec(Mode::Window, 6, WindowSize::Days(2));
        let err = threshold_query(&ds, &PyramidSet::default(), Metric::Variable(VariableKind::Confirmed), Predicate::AtLeast(1.0), &s);
        assert!(matches!(err, Err(QueryError::PyramidMissing { .. })));
        // rates and <= never need one
        assert!(threshold_query(&ds, &PyramidSet::default(), Metric::Variable(VariableKind::Confirmed), Predicate::AtMost(1.0), &s).is_ok());
    }

    #[test]
    fn metric_names() {
        assert_eq!("deaths".parse::<Metric>().unwrap(), Metric::Variable(VariableKind::Deaths));
        assert_eq!("Mortality".parse::<Metric>().unwrap(), Metric::Rate(RateKind::Mortality));
        assert!("area".parse::<Metric>().is_err());
    }
}
