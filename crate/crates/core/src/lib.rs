//! Aerial vision-and-language navigation over synthetic city scenes: world
//! model, simulator, goal-aware semantic maps, agents, metrics and the corpus
//! data store.
//!
//! Geodesy, geometry and the metric primitives are generic over [`Scalar`];
//! the rest of the crate works in `f64` through the aliases below.

pub mod agents;
pub mod datastore;
pub mod geodesy;
pub mod geometry;
pub mod gsm;
pub mod metrics;
pub mod scalar;
pub mod sim;
pub mod text;
pub mod worldmodel;

pub use scalar::Scalar;

pub type Pose = geodesy::Pose<f64>;
pub type Point3 = geodesy::Point3<f64>;
pub type MapTransform = geodesy::MapTransform<f64>;
pub use geodesy::Action;
