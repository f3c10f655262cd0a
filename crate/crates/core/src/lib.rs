//! Spatiotemporal query engine behind animated proportional-symbol maps of
//! epidemic time series: JHU-layout ingest, windowed aggregation with
//! pyramid-pruned threshold search, clustering, pointer picking and circle
//! scaling, plus the request layer shared by the HTTP service and the CLI.

pub mod api;
pub mod engine;
pub mod ingest;
pub mod model;
pub mod query;
pub mod scaling;
pub mod snapshot;
pub mod spatial;

pub use engine::{Engine, FrameRequest, Picked, ReferenceMode};
pub use ingest::{build_dataset, ingest_files, Dataset, IngestPaths, IngestReport};
pub use model::{
    GeocircleFrame, LatLon, Level, RateKind, Region, RegionId, ScaleMethod, ScalingSpec, TimeWindow, VariableKind,
};
pub use query::{Aggregation, Metric, Mode, Predicate, QueryError, QuerySpec, WindowSize};
