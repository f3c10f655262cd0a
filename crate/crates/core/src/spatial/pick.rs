use std::collections::HashMap;

use super::projection::haversine_km;
use super::quadtree::PRQuadtree;
use crate::model::{LatLon, Polygon, RegionId};

/// One displayed entry as seen by the pick operation.
#[derive(Debug, Clone)]
pub struct PickCandidate<'a> {
    /// Region whose anchor the entry is drawn at.
    pub anchor_region: &'a RegionId,
    pub anchor: LatLon,
    /// Whether any selected value of the entry is nonzero.
    pub nonzero: bool,
    /// Outlines of every region the entry stands for.
    pub polygons: Vec<&'a Polygon>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PickResult {
    /// Index into the candidate slice.
    pub index: usize,
    pub distance_km: f64,
    pub contained: bool,
}

/// Even-odd ray casting over all rings, so holes are excluded.
pub fn polygon_contains(polygon: &Polygon, p: LatLon) -> bool {
    let mut inside = false;
    for ring in polygon {
        let n = ring.len();
        if n < 3 {
            continue;
        }
        let mut j = n - 1;
        for i in 0..n {
            let [xi, yi] = ring[i];
            let [xj, yj] = ring[j];
            if (yi > p.lat) != (yj > p.lat) && p.lon < (xj - xi) * (p.lat - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Picks the entry for a pointer position: the entry whose outline contains
/// the point when exactly one does and it is nonzero, otherwise the nearest
/// nonzero entry by great-circle distance. `None` when nothing is nonzero.
///
/// Candidate anchors are looked up in `tree`, which must have been built
/// over (at least) the candidates' anchor regions.
pub fn pick(tree: &PRQuadtree, candidates: &[PickCandidate<'_>], query: LatLon, use_boundaries: bool) -> Option<PickResult> {
    if use_boundaries {
        let containing: Vec<usize> = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.polygons.iter().any(|poly| polygon_contains(poly, query)))
            .map(|(i, _)| i)
            .collect();
        if let [only] = containing.as_slice() {
            let c = &candidates[*only];
            if c.nonzero {
                return Some(PickResult {
                    index: *only,
                    distance_km: haversine_km(query.lat, query.lon, c.anchor.lat, c.anchor.lon),
                    contained: true,
                });
            }
        }
    }
    let by_region: HashMap<&RegionId, usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.nonzero)
        .map(|(i, c)| (c.anchor_region, i))
        .collect();
    if by_region.is_empty() {
        return None;
    }
    let (point, distance_km) = tree.nearest(query, |p| by_region.contains_key(&p.id))?;
    Some(PickResult {
        index: by_region[&tree.points()[point].id],
        distance_km,
        contained: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        vec![vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]
    }

    #[test]
    fn containment() {
        let sq = square(0.0, 0.0, 10.0, 10.0);
        assert!(polygon_contains(&sq, LatLon { lat: 5.0, lon: 5.0 }));
        assert!(!polygon_contains(&sq, LatLon { lat: 15.0, lon: 5.0 }));
        let mut holed = sq.clone();
        holed.push(square(4.0, 4.0, 6.0, 6.0).remove(0));
        assert!(!polygon_contains(&holed, LatLon { lat: 5.0, lon: 5.0 }));
        assert!(polygon_contains(&holed, LatLon { lat: 2.0, lon: 2.0 }));
    }

    fn ids(names: &[&str]) -> Vec<RegionId> {
        names.iter().map(|n| RegionId::country(n).unwrap()).collect()
    }

    #[test]
    fn nearest_nonzero_skips_zero_entries() {
        let ids = ids(&["a", "b"]);
        let anchors = [LatLon { lat: 0.0, lon: 0.0 }, LatLon { lat: 0.0, lon: 2.0 }];
        let tree = PRQuadtree::build(ids.iter().cloned().zip(anchors));
        let cands = vec![
            PickCandidate {
                anchor_region: &ids[0],
                anchor: anchors[0],
                nonzero: true,
                polygons: vec![],
            },
            PickCandidate {
                anchor_region: &ids[1],
                anchor: anchors[1],
                nonzero: false,
                polygons: vec![],
            },
        ];
        let q = LatLon { lat: 0.0, lon: 1.6 };
        assert_eq!(pick(&tree, &cands, q, true).unwrap().index, 0);
        let mut all_zero = cands.clone();
        all_zero[0].nonzero = false;
        assert!(pick(&tree, &all_zero, q, true).is_none());
    }

    #[test]
    fn containing_region_beats_closer_anchor() {
        let ids = ids(&["brazil", "paraguay"]);
        let anchors = [LatLon { lat: -10.0, lon: -52.0 }, LatLon { lat: -23.0, lon: -58.0 }];
        let tree = PRQuadtree::build(ids.iter().cloned().zip(anchors));
        let brazil = square(-74.0, -33.0, -34.0, 5.0);
        let cands = vec![
            PickCandidate {
                anchor_region: &ids[0],
                anchor: anchors[0],
                nonzero: true,
                polygons: vec![&brazil],
            },
            PickCandidate {
                anchor_region: &ids[1],
                anchor: anchors[1],
                nonzero: true,
                polygons: vec![],
            },
        ];
        let q = LatLon { lat: -22.0, lon: -56.0 };
        let hit = pick(&tree, &cands, q, true).unwrap();
        assert_eq!(hit.index, 0);
        assert!(hit.contained);
        assert_eq!(pick(&tree, &cands, q, false).unwrap().index, 1);
    }
}
