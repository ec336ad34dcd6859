//! Synthetic fenced sequences with exact ground truth, and the metrics used
//! to score detection, segmentation, flow and reconstruction.

pub mod io;
mod metrics;
mod scene;

pub use self::metrics::{
    detection_fmeasure, endpoint_error, f_measure, mask_fmeasure, match_points, prf_from_counts,
    psnr, Prf,
};
pub use self::scene::{
    lattice_alpha, lattice_joints, render_scene, GroundTruth, LatticeSpec, Motion, SceneSpec,
    Texture,
};
