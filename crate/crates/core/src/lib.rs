//! Reconstruction of a watertight textured triangle mesh from a colored
//! point cloud, using two untrained networks as priors: an edge-graph
//! convolutional network that deforms the mesh in 3D, and an
//! encoder-decoder that densifies sparse position and color samples in
//! the UV atlas of the mesh.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`] holds the data types and geometric primitives (hull,
//!   topology, sampling, projection, partitioning, remeshing).
//! * [`losses`] and [`metrics`] hold the training losses with analytic
//!   gradients and the evaluation metrics.
//! * [`prior3d`] is the edge-graph network and its optimizer.
//! * [`uvatlas`] builds atlases, splats points into UV space and bakes
//!   textures.
//! * [`prior2d`] is the image-space network.
//! * [`pipeline`] ties everything together, and [`io`] / [`config`]
//!   handle files and configuration.

pub mod config;
pub mod error;
pub mod geom;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod prior2d;
pub mod prior3d;
pub mod spatial;
pub mod uvatlas;

pub use error::{Error, Result};
pub use mesh::{PointCloud, SurfacePoint, TriangleMesh};
