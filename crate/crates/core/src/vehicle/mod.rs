//! Track geometry, mesh generation and the single-track vehicle model.

pub mod dynamics;
pub mod mesh;
pub mod track;

pub use dynamics::{
    friction_circle_usage, lethargy, spatial_derivatives, time_derivatives, ControlInput,
    VehicleParams, VehicleState, NU, NX,
};
pub use mesh::{generate_mesh, Mesh, MeshOptions};
pub use track::{load_track, synthetic_oval, TrackData};
