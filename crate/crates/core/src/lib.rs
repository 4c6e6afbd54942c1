//! Quadrilateral meshing of planar domains by reinforcement-learned element
//! extraction.

pub mod api;
pub mod checkpoint;
pub mod domains;
pub mod env;
pub mod geom2d;
pub mod mesher;
pub mod meshio;
pub mod quality;
pub mod sac;
pub mod svg;
pub mod tinynet;

pub use env::{EnvConfig, EnvError, MeshEnv, Observation, RuleType, StepOutcome, StepResult};
pub use geom2d::{GeomError, Point2, PolyBoundary, QuadElement};
pub use quality::{Mesh, QualityReport};
