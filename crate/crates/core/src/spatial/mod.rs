//! Spatial side of the engine: Web-Mercator math, the PR quadtree over
//! region anchors, pointer picking and marker clustering.

pub mod cluster;
pub mod pick;
pub mod projection;
pub mod quadtree;

pub use cluster::{cluster, ClusterInput, ClusterNode, ClusterParams};
pub use pick::{pick, polygon_contains, PickCandidate, PickResult};
pub use projection::{haversine_km, project, LatOutOfRange};
pub use quadtree::{PRQuadtree, Shape, TreePoint};
