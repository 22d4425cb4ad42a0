//! Meshes, metrics and the geometric constructions built on them.

pub mod builders;
pub mod cylinder;
pub mod family;
pub mod locate;
pub mod mesh;
pub mod metric;

pub use builders::{build_annulus, build_curved_patch, build_disk, build_disk_with_inclusion, build_flat_patch, DiskBuilder, Inclusion};
pub use cylinder::{attach_cylinder, CylinderMesh};
pub use family::{nested_family, nested_family_on, LevelFields, NestedFamily, Profile, Tentacle};
pub use locate::PointLocator;
pub use mesh::{Point, Region, SubMesh, TriMesh};
pub use metric::{composite_metric, CompositeMetric, MetricField, Sym2};
