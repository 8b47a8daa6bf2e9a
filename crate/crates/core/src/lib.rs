#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Physically grounded adverse-weather augmentation for LiDAR point clouds
//! and tools to compare generated intensity distributions with references.
//!
//! The pipeline: read a cloud ([`io`]), derive range / incidence /
//! reflectance ([`modalities`]), degrade geometry with precipitation
//! ([`augment`]), evaluate the Lambertian × Beer–Lambert intensity target
//! ([`physics`]), project to range images ([`projection`], [`container`]) and
//! score generated intensities ([`metrics`], [`loss`]).

pub mod augment;
pub mod container;
pub mod error;
pub mod grid;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod modalities;
pub mod physics;
pub mod precipitation;
pub mod projection;
pub mod scene;

pub use error::{Error, Result};
pub use grid::Image;
pub use io::{MaterialTable, Point, PointCloud, PointFormat};
pub use modalities::Modalities;
pub use physics::{Condition, WeatherParams};
pub use projection::{ProjectionConfig, RangeImageStack};
