pub mod dataset;
pub mod evaluation;
pub mod experiment;
pub mod factors;
pub mod geometry;
pub mod graph;
pub mod scalar;
pub mod semantics;
pub mod simulator;

pub use scalar::Real;

pub type Pose64 = geometry::Pose<f64>;
pub type Pose32 = geometry::Pose<f32>;
pub type Quadric64 = geometry::ConstrainedDualQuadric<f64>;
pub type Quadric32 = geometry::ConstrainedDualQuadric<f32>;
pub type BoundingBox64 = geometry::BoundingBox2D<f64>;
pub type BoundingBox32 = geometry::BoundingBox2D<f32>;
pub type Intrinsics64 = geometry::CameraIntrinsics<f64>;
pub type Intrinsics32 = geometry::CameraIntrinsics<f32>;
pub type Values64 = graph::Values<f64>;
pub type Values32 = graph::Values<f32>;
pub type FactorGraph64 = graph::FactorGraph<f64>;
pub type FactorGraph32 = graph::FactorGraph<f32>;
pub type Solution64 = graph::Solution<f64>;
pub type Solution32 = graph::Solution<f32>;
