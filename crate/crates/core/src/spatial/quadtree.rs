use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::projection::{haversine_km, to_unit, unit_y_to_lat, EARTH_RADIUS_KM};
use crate::model::{cmp_f64, LatLon, RegionId};

/// Depth at which splitting stops; only reachable by exactly coincident
/// positions.
const MAX_DEPTH: usize = 48;
const JITTER_DEG: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TreePoint {
    pub id: RegionId,
    /// Original anchor, used for distances.
    pub anchor: LatLon,
    x: f64,
    y: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Empty,
    Leaf(Vec<usize>),
    Internal(Box<[Node; 4]>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Cell {
    const ROOT: Cell = Cell {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    fn quadrant(&self, x: f64, y: f64) -> usize {
        let (mx, my) = ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0);
        usize::from(x >= mx) | (usize::from(y >= my) << 1)
    }

    fn child(&self, q: usize) -> Cell {
        let (mx, my) = ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0);
        let (x0, x1) = if q & 1 == 0 { (self.x0, mx) } else { (mx, self.x1) };
        let (y0, y1) = if q & 2 == 0 { (self.y0, my) } else { (my, self.y1) };
        Cell { x0, y0, x1, y1 }
    }

    /// Lower bound on the great-circle distance (km) from a point to any
    /// point whose projected position falls in this cell. The 1 m slack
    /// covers rounding and coincident-anchor jitter.
    fn min_distance_km(&self, p: LatLon) -> f64 {
        let lat_hi = if self.y0 <= 0.0 { 90.0 } else { unit_y_to_lat(self.y0) };
        let lat_lo = if self.y1 >= 1.0 { -90.0 } else { unit_y_to_lat(self.y1) };
        let lon_lo = self.x0 * 360.0 - 180.0;
        let lon_hi = self.x1 * 360.0 - 180.0;
        let dlat = if p.lat < lat_lo {
            lat_lo - p.lat
        } else if p.lat > lat_hi {
            p.lat - lat_hi
        } else {
            0.0
        };
        let circ = |a: f64, b: f64| {
            let d = (a - b).abs() % 360.0;
            d.min(360.0 - d)
        };
        let dlon = if p.lon >= lon_lo && p.lon <= lon_hi {
            0.0
        } else {
            circ(p.lon, lon_lo).min(circ(p.lon, lon_hi))
        };
        let across = (p.lat.to_radians().cos() * dlon.min(90.0).to_radians().sin()).clamp(0.0, 1.0).asin();
        let angle = dlat.to_radians().max(across);
        (angle * EARTH_RADIUS_KM * (1.0 - 1e-12) - 1e-3).max(0.0)
    }
}

/// Canonical shape of a tree, with leaves labelled by region id.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Empty,
    Leaf(Vec<RegionId>),
    Internal(Box<[Shape; 4]>),
}

/// Point-region quadtree over Web-Mercator unit space. Leaves hold at most
/// one anchor, and the decomposition depends only on the point set.
#[derive(Debug, Clone, PartialEq)]
pub struct PRQuadtree {
    points: Vec<TreePoint>,
    root: Node,
}

/// Jitter direction from an FNV-1a hash of the id.
fn jitter_signs(id: &RegionId) -> (f64, f64) {
    let bits = id
        .to_string()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
    let s = |b: u64| if bits & b == 0 { 1.0 } else { -1.0 };
    (s(1), s(2))
}

impl PRQuadtree {
    /// Builds the tree by inserting anchors in the given order. Anchors that
    /// coincide exactly are nudged apart by multiples of 1e-9 degrees,
    /// ranked by region id, so the result is order independent.
    pub fn build(anchors: impl IntoIterator<Item = (RegionId, LatLon)>) -> PRQuadtree {
        let anchors: Vec<(RegionId, LatLon)> = anchors.into_iter().collect();
        let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
        for (i, (_, a)) in anchors.iter().enumerate() {
            groups.entry((a.lat.to_bits(), a.lon.to_bits())).or_default().push(i);
        }
        let mut rank = vec![0usize; anchors.len()];
        for members in groups.values_mut() {
            members.sort_by(|&a, &b| anchors[a].0.cmp(&anchors[b].0));
            for (k, &i) in members.iter().enumerate() {
                rank[i] = k;
            }
        }

        let points: Vec<TreePoint> = anchors
            .into_iter()
            .zip(rank)
            .map(|((id, anchor), k)| {
                let (slat, slon) = jitter_signs(&id);
                let off = k as f64 * JITTER_DEG;
                let lat = (anchor.lat + slat * off).clamp(-90.0, 90.0);
                let lon = (anchor.lon + slon * off).clamp(-180.0, 180.0);
                let (x, y) = to_unit(lat, lon);
                TreePoint { id, anchor, x, y }
            })
            .collect();

        let mut tree = PRQuadtree {
            points,
            root: Node::Empty,
        };
        for i in 0..tree.points.len() {
            let (x, y) = (tree.points[i].x, tree.points[i].y);
            Self::insert(&mut tree.root, &tree.points, Cell::ROOT, i, x, y, 0);
        }
        tree
    }

    fn insert(node: &mut Node, points: &[TreePoint], cell: Cell, idx: usize, x: f64, y: f64, depth: usize) {
        match node {
            Node::Empty => *node = Node::Leaf(vec![idx]),
            Node::Leaf(items) => {
                let other = items[0];
                let same = points[other].x == x && points[other].y == y;
                if depth >= MAX_DEPTH || same {
                    items.push(idx);
                    return;
                }
                let existing = std::mem::take(items);
                let mut children = Box::new([Node::Empty, Node::Empty, Node::Empty, Node::Empty]);
                for j in existing {
                    let q = cell.quadrant(points[j].x, points[j].y);
                    Self::insert(&mut children[q], points, cell.child(q), j, points[j].x, points[j].y, depth + 1);
                }
                let q = cell.quadrant(x, y);
                Self::insert(&mut children[q], points, cell.child(q), idx, x, y, depth + 1);
                *node = Node::Internal(children);
            }
            Node::Internal(children) => {
                let q = cell.quadrant(x, y);
                Self::insert(&mut children[q], points, cell.child(q), idx, x, y, depth + 1);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[TreePoint] {
        &self.points
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Internal(c) => 1 + c.iter().map(go).max().unwrap_or(0),
                _ => 0,
            }
        }
        go(&self.root)
    }

    pub fn leaf_count(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Empty => 0,
                Node::Leaf(_) => 1,
                Node::Internal(c) => c.iter().map(go).sum(),
            }
        }
        go(&self.root)
    }

    pub fn shape(&self) -> Shape {
        fn go(n: &Node, pts: &[TreePoint]) -> Shape {
            match n {
                Node::Empty => Shape::Empty,
                Node::Leaf(items) => {
                    let mut ids: Vec<RegionId> = items.iter().map(|&i| pts[i].id.clone()).collect();
                    ids.sort();
                    Shape::Leaf(ids)
                }
                Node::Internal(c) => Shape::Internal(Box::new([go(&c[0], pts), go(&c[1], pts), go(&c[2], pts), go(&c[3], pts)])),
            }
        }
        go(&self.root, &self.points)
    }

    /// Each point sits in exactly one leaf whose cell contains it, and no
    /// leaf above the depth limit holds more than one point.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![0usize; self.points.len()];
        fn go(n: &Node, cell: Cell, depth: usize, pts: &[TreePoint], seen: &mut [usize]) -> bool {
            match n {
                Node::Empty => true,
                Node::Leaf(items) => {
                    let inside = items.iter().all(|&i| {
                        seen[i] += 1;
                        let p = &pts[i];
                        p.x >= cell.x0 && p.x <= cell.x1 && p.y >= cell.y0 && p.y <= cell.y1
                    });
                    inside && (items.len() == 1 || depth >= MAX_DEPTH)
                }
                Node::Internal(c) => (0..4).all(|q| go(&c[q], cell.child(q), depth + 1, pts, seen)),
            }
        }
        go(&self.root, Cell::ROOT, 0, &self.points, &mut seen) && seen.iter().all(|&s| s == 1)
    }

    /// Nearest accepted point by great-circle distance, ties broken by
    /// region id. Returns the point index and distance in km.
    pub fn nearest(&self, query: LatLon, accept: impl Fn(&TreePoint) -> bool) -> Option<(usize, f64)> {
        struct Pending<'a> {
            bound: f64,
            node: &'a Node,
            cell: Cell,
        }
        impl PartialEq for Pending<'_> {
            fn eq(&self, other: &Self) -> bool {
                self.bound == other.bound
            }
        }
        impl Eq for Pending<'_> {}
        impl PartialOrd for Pending<'_> {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Pending<'_> {
            fn cmp(&self, other: &Self) -> Ordering {
                cmp_f64(other.bound, self.bound)
            }
        }

        let mut best: Option<(usize, f64)> = None;
        let mut heap = BinaryHeap::new();
        heap.push(Pending {
            bound: 0.0,
            node: &self.root,
            cell: Cell::ROOT,
        });
        while let Some(Pending { bound, node, cell }) = heap.pop() {
            if let Some((_, d)) = best {
                if bound > d {
                    break;
                }
            }
            match node {
                Node::Empty => {}
                Node::Leaf(items) => {
                    for &i in items {
                        let p = &self.points[i];
                        if !accept(p) {
                            continue;
                        }
                        let d = haversine_km(query.lat, query.lon, p.anchor.lat, p.anchor.lon);
                        let better = match best {
                            None => true,
                            Some((j, bd)) => d < bd || (d == bd && p.id < self.points[j].id),
                        };
                        if better {
                            best = Some((i, d));
                        }
                    }
                }
                Node::Internal(children) => {
                    for (q, child) in children.iter().enumerate() {
                        if matches!(child, Node::Empty) {
                            continue;
                        }
                        let c = cell.child(q);
                        heap.push(Pending {
                            bound: c.min_distance_km(query),
                            node: child,
                            cell: c,
                        });
                    }
                }
            }
        }
        best
    }
}
