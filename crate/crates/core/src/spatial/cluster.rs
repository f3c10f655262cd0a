//! Marker clustering that conserves totals.
//!
//! Clusters are built as a hierarchy from [`MAX_CLUSTER_ZOOM`] down to the
//! requested zoom: at every zoom the clusters of the next finer zoom are
//! agglomerated greedily (largest primary value first, joining the nearest
//! seed within `pixel_radius`), then the nearest pairs are merged until at
//! most `max_markers` remain. The clusters at zoom `z` are therefore always
//! unions of the clusters at `z + 1`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::projection::project_clamped;
use crate::model::{LatLon, RegionId, VariableKind};

pub const MAX_CLUSTER_ZOOM: u32 = 20;
pub const DEFAULT_PIXEL_RADIUS: f64 = 60.0;
const ETC_SUFFIX: &str = "; etc.";

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterInput {
    pub id: RegionId,
    pub display_name: String,
    pub anchor: LatLon,
    pub population: Option<u64>,
    pub totals: BTreeMap<VariableKind, u64>,
    /// Value that ranks members and picks the cluster anchor.
    pub primary: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub zoom: f64,
    pub pixel_radius: f64,
    pub max_markers: Option<usize>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            zoom: 2.0,
            pixel_radius: DEFAULT_PIXEL_RADIUS,
            max_markers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    /// Sorted member ids.
    pub members: Vec<RegionId>,
    /// Member with the largest primary value; its anchor is the cluster's.
    pub anchor_region: RegionId,
    pub anchor: LatLon,
    pub label: String,
    pub totals: BTreeMap<VariableKind, u64>,
    /// Variables every member has.
    pub complete: BTreeSet<VariableKind>,
    /// Sum of member populations, if every member has one.
    pub population: Option<u64>,
    pub primary: u64,
    anchor_name: String,
    anchor_primary: u64,
}

impl ClusterNode {
    fn singleton(input: &ClusterInput) -> Self {
        ClusterNode {
            members: vec![input.id.clone()],
            anchor_region: input.id.clone(),
            anchor: input.anchor,
            label: input.display_name.clone(),
            totals: input.totals.clone(),
            complete: input.totals.keys().copied().collect(),
            population: input.population,
            primary: input.primary,
            anchor_name: input.display_name.clone(),
            anchor_primary: input.primary,
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    /// Region id for singletons, `cluster:<anchor region>` otherwise.
    pub fn key(&self) -> String {
        if self.is_singleton() {
            self.anchor_region.to_string()
        } else {
            format!("cluster:{}", self.anchor_region)
        }
    }

    /// Ranking used for seeding order and anchor choice: larger value first,
    /// then smaller region id.
    fn outranks(&self, other: &ClusterNode) -> bool {
        self.anchor_primary > other.anchor_primary
            || (self.anchor_primary == other.anchor_primary && self.anchor_region < other.anchor_region)
    }

    fn absorb(&mut self, other: ClusterNode) {
        if other.outranks(self) {
            self.anchor_region = other.anchor_region;
            self.anchor = other.anchor;
            self.anchor_name = other.anchor_name;
            self.anchor_primary = other.anchor_primary;
        }
        self.members.extend(other.members);
        for (v, t) in other.totals {
            *self.totals.entry(v).or_insert(0) += t;
        }
        self.complete = self.complete.intersection(&other.complete).copied().collect();
        self.population = self.population.zip(other.population).map(|(a, b)| a + b);
        self.primary += other.primary;
    }

    fn finish(&mut self) {
        self.members.sort();
        if !self.is_singleton() {
            self.label = format!("{}{}", self.anchor_name, ETC_SUFFIX);
        }
    }
}

fn rank_order(nodes: &mut [ClusterNode]) {
    nodes.sort_by(|a, b| {
        b.primary
            .cmp(&a.primary)
            .then(b.anchor_primary.cmp(&a.anchor_primary))
            .then_with(|| a.anchor_region.cmp(&b.anchor_region))
    });
}

fn radius_pass(mut nodes: Vec<ClusterNode>, zoom: f64, radius: f64) -> Vec<ClusterNode> {
    if radius <= 0.0 || nodes.len() < 2 {
        return nodes;
    }
    rank_order(&mut nodes);
    let cell_of = |(x, y): (f64, f64)| ((x / radius).floor() as i64, (y / radius).floor() as i64);
    let mut seeds: Vec<(ClusterNode, (f64, f64))> = Vec::new();
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for node in nodes {
        let pos = project_clamped(node.anchor.lat, node.anchor.lon, zoom);
        let (cx, cy) = cell_of(pos);
        let mut best: Option<(f64, usize)> = None;
        for gx in cx - 1..=cx + 1 {
            for gy in cy - 1..=cy + 1 {
                for &s in grid.get(&(gx, gy)).into_iter().flatten() {
                    let (sx, sy) = seeds[s].1;
                    let d = (sx - pos.0).hypot(sy - pos.1);
                    if d <= radius && best.is_none_or(|(bd, bs)| d < bd || (d == bd && s < bs)) {
                        best = Some((d, s));
                    }
                }
            }
        }
        match best {
            Some((_, s)) => seeds[s].0.absorb(node),
            None => {
                grid.entry((cx, cy)).or_default().push(seeds.len());
                seeds.push((node, pos));
            }
        }
    }
    seeds.into_iter().map(|(n, _)| n).collect()
}

/// Merges nearest pairs until at most `max` clusters remain.
fn cap_pass(mut nodes: Vec<ClusterNode>, zoom: f64, max: usize) -> Vec<ClusterNode> {
    let max = max.max(1);
    if nodes.len() <= max {
        return nodes;
    }
    nodes.sort_by(|a, b| a.anchor_region.cmp(&b.anchor_region));
    let mut slots: Vec<Option<(ClusterNode, (f64, f64))>> = nodes
        .into_iter()
        .map(|n| {
            let pos = project_clamped(n.anchor.lat, n.anchor.lon, zoom);
            Some((n, pos))
        })
        .collect();
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let nearest_of = |slots: &[Option<(ClusterNode, (f64, f64))>], i: usize| -> Option<(f64, usize)> {
        let pi = slots[i].as_ref()?.1;
        let mut best: Option<(f64, usize)> = None;
        for (j, s) in slots.iter().enumerate() {
            if j == i {
                continue;
            }
            if let Some((_, pj)) = s {
                let d = dist(pi, *pj);
                if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                    best = Some((d, j));
                }
            }
        }
        best
    };
    let mut nn: Vec<Option<(f64, usize)>> = (0..slots.len()).map(|i| nearest_of(&slots, i)).collect();
    let mut alive = slots.len();
    while alive > max {
        // closest pair, ties by lower indices
        let (i, j) = nn
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.map(|(d, j)| (d, i.min(j), i.max(j))))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
            .map(|(_, i, j)| (i, j))
            .expect("at least two clusters alive");
        let (other, _) = slots[j].take().expect("alive");
        nn[j] = None;
        let (node, pos) = slots[i].as_mut().expect("alive");
        node.absorb(other);
        *pos = project_clamped(node.anchor.lat, node.anchor.lon, zoom);
        alive -= 1;
        let merged_pos = *pos;
        nn[i] = nearest_of(&slots, i);
        for k in 0..slots.len() {
            if k == i || slots[k].is_none() {
                continue;
            }
            let stale = matches!(nn[k], Some((_, t)) if t == i || t == j);
            if stale {
                nn[k] = nearest_of(&slots, k);
            } else if let Some((_, pk)) = &slots[k] {
                let d = dist(*pk, merged_pos);
                if nn[k].is_none_or(|(bd, bt)| d < bd || (d == bd && i < bt)) {
                    nn[k] = Some((d, i));
                }
            }
        }
    }
    slots.into_iter().flatten().map(|(n, _)| n).collect()
}

/// Integer zoom the hierarchy is evaluated at.
pub fn cluster_zoom(zoom: f64) -> u32 {
    if zoom.is_nan() {
        return 0;
    }
    zoom.clamp(0.0, f64::from(MAX_CLUSTER_ZOOM)).floor() as u32
}

/// Groups nearby entries. Output is ordered by descending primary value,
/// then anchor region id.
pub fn cluster(entries: &[ClusterInput], params: ClusterParams) -> Vec<ClusterNode> {
    let target = cluster_zoom(params.zoom);
    let mut nodes = hierarchy(entries, params, target, |_, _| {});
    finish_all(&mut nodes);
    nodes
}

/// Clusterings for every integer zoom from [`MAX_CLUSTER_ZOOM`] down to
/// `min_zoom`, indexed by zoom. `params.zoom` is ignored. Entry `z` equals
/// `cluster` at zoom `z`.
pub fn cluster_levels(entries: &[ClusterInput], params: ClusterParams, min_zoom: u32) -> Vec<Vec<ClusterNode>> {
    let min_zoom = min_zoom.min(MAX_CLUSTER_ZOOM);
    let mut levels = vec![Vec::new(); (MAX_CLUSTER_ZOOM + 1) as usize];
    hierarchy(entries, params, min_zoom, |z, nodes| {
        let mut level = nodes.to_vec();
        finish_all(&mut level);
        levels[z as usize] = level;
    });
    levels
}

fn hierarchy(
    entries: &[ClusterInput],
    params: ClusterParams,
    target: u32,
    mut visit: impl FnMut(u32, &[ClusterNode]),
) -> Vec<ClusterNode> {
    let mut nodes: Vec<ClusterNode> = entries.iter().map(ClusterNode::singleton).collect();
    for z in (target..=MAX_CLUSTER_ZOOM).rev() {
        let zf = f64::from(z);
        nodes = radius_pass(nodes, zf, params.pixel_radius);
        if let Some(max) = params.max_markers {
            nodes = cap_pass(nodes, zf, max);
        }
        visit(z, &nodes);
    }
    nodes
}

fn finish_all(nodes: &mut [ClusterNode]) {
    for node in nodes.iter_mut() {
        node.finish();
    }
    rank_order(nodes);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(name: &str, lat: f64, lon: f64, confirmed: u64) -> ClusterInput {
        ClusterInput {
            id: RegionId::country(name).unwrap(),
            display_name: name.to_uppercase(),
            anchor: LatLon { lat, lon },
            population: Some(10),
            totals: [(VariableKind::Confirmed, confirmed)].into_iter().collect(),
            primary: confirmed,
        }
    }

    #[test]
    fn zero_radius_is_identity() {
        let entries = vec![input("a", 0.0, 0.0, 3), input("b", 0.0, 0.0001, 5), input("c", 0.0, 0.0, 1)];
        let out = cluster(
            &entries,
            ClusterParams {
                zoom: 0.0,
                pixel_radius: 0.0,
                max_markers: None,
            },
        );
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|c| c.is_singleton() && !c.label.contains("etc")));
        assert_eq!(out[0].totals[&VariableKind::Confirmed], 5);
    }

    #[test]
    fn coincident_anchors_merge_with_label() {
        let entries = vec![input("maryland", 39.0, -76.7, 900), input("dc", 39.0, -76.7, 300)];
        let out = cluster(&entries, ClusterParams::default());
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert_eq!(c.totals[&VariableKind::Confirmed], 1200);
        assert_eq!(c.label, "MARYLAND; etc.");
        assert_eq!(c.key(), "cluster:maryland");
        assert_eq!(c.population, Some(20));
        assert_eq!(c.members.len(), 2);
    }

    #[test]
    fn max_markers_caps_count() {
        let entries: Vec<ClusterInput> = (0..10).map(|i| input(&format!("r{i}"), 0.0, f64::from(i) * 20.0 - 90.0, 10 + i as u64)).collect();
        let out = cluster(
            &entries,
            ClusterParams {
                zoom: 5.0,
                pixel_radius: 0.0,
                max_markers: Some(3),
            },
        );
        assert_eq!(out.len(), 3);
        let total: u64 = out.iter().map(|c| c.totals[&VariableKind::Confirmed]).sum();
        assert_eq!(total, entries.iter().map(|e| e.primary).sum::<u64>());
    }

    #[test]
    fn far_apart_stay_separate() {
        let entries = vec![input("a", 0.0, 0.0, 1), input("b", 0.0, 90.0, 1)];
        assert_eq!(cluster(&entries, ClusterParams::default()).len(), 2);
    }

    #[test]
    fn missing_variable_not_complete() {
        let mut b = input("b", 0.0, 0.0, 1);
        b.totals.insert(VariableKind::Deaths, 1);
        b.population = None;
        let out = cluster(&[input("a", 0.0, 0.0, 2), b], ClusterParams::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].totals[&VariableKind::Deaths], 1);
        assert!(!out[0].complete.contains(&VariableKind::Deaths));
        assert_eq!(out[0].population, None);
    }
}
