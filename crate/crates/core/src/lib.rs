//! Monte Carlo engine for Voronoi percolation.
//!
//! Points of a unit-intensity Poisson process are coloured black with
//! probability `p`, and each Voronoi cell takes its point's colour. The
//! modules build up from sampling ([`point_process`]) and cell adjacency
//! ([`geometry`], [`connectivity`]) to estimators, influences on an ε-grid
//! ([`tensor`]), the exploration algorithm ([`exploration`]), the OSSS
//! inequality ([`osss`]) and numerical sharpness checks ([`sharpness`]).
//!
//! ```
//! use voronoi_perc::connectivity::{evaluate, Engine, EventKind, EventSpec};
//! use voronoi_perc::estimators::event_window;
//! use voronoi_perc::point_process::sample_configuration;
//!
//! let spec = EventSpec::new(EventKind::BoxCrossing { n: 2.0 }, Engine::Delaunay2d);
//! let config = sample_configuration(&event_window(2, &spec.kind)?, 1.0, 3)?;
//! assert!(evaluate(&config, &spec)?);
//! # Ok::<(), voronoi_perc::Error>(())
//! ```

pub mod connectivity;
pub mod error;
pub mod estimators;
pub mod exploration;
pub mod geometry;
pub mod osss;
pub mod point_process;
pub mod seed;
pub mod sharpness;
pub mod stats;
pub mod tensor;
pub mod union_find;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/point-process.md")]
    pub struct PointProcess;
    #[doc = include_str!("../../../book/src/geometry.md")]
    pub struct Geometry;
    #[doc = include_str!("../../../book/src/connectivity.md")]
    pub struct Connectivity;
    #[doc = include_str!("../../../book/src/estimators.md")]
    pub struct Estimators;
    #[doc = include_str!("../../../book/src/tensor.md")]
    pub struct Tensor;
    #[doc = include_str!("../../../book/src/exploration.md")]
    pub struct Exploration;
    #[doc = include_str!("../../../book/src/osss.md")]
    pub struct Osss;
    #[doc = include_str!("../../../book/src/sharpness.md")]
    pub struct Sharpness;
}
