//! Reflection groups generated by pearl necklaces.
//!
//! A pearl necklace is a cyclic chain of tangent round spheres covering a
//! tame knot. Reflecting in every pearl and iterating produces nested
//! necklaces whose intersection is a wild knot. This crate builds the
//! necklaces, enumerates the stages, refines the limit set to a point cloud,
//! counts the stage combinatorics, and computes presentations and homology of
//! the associated knot groups and branched covers.

pub mod algebra;
pub mod census;
pub mod geometry;
pub mod knot;
pub mod necklace;
pub mod orbit;

pub use algebra::{AbelianInvariants, Endomorphism, FreeWord, Presentation};
pub use census::{CompositionCount, FiberStats};
pub use geometry::{Point3, RoundSphere, SphereRelation};
pub use knot::{BuiltinKnot, ClearanceReport, PolygonalKnot};
pub use necklace::{NecklaceReport, PearlNecklace};
pub use orbit::{PointCloud, ReducedWord, Stage, StagePearl};
