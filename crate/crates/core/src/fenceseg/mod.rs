//! Single-image fence segmentation: sliding-window texel joint detection
//! with a linear classifier, lattice linking, automatic scribbles, alpha
//! matting and thresholding.

mod classifier;
mod detect;
mod features;
mod lattice;
mod matting;
mod scribbles;
mod segment;
pub mod training;

pub use self::classifier::{
    train_classifier, LinearClassifier, ModelFile, TrainParams, MODEL_FORMAT, MODEL_VERSION,
};
pub use self::detect::{
    detect_texels, non_maximum_suppression, refine_by_symmetry, scan_centers, score_windows,
    window_fits, TexelDetection,
};
pub use self::features::{
    FeatureBackend, FeatureFile, FeatureVector, HandcraftedFeatures, FEATURE_FILE_ID,
    HANDCRAFTED_DIM, HANDCRAFTED_ID,
};
pub use self::lattice::{
    default_max_link, draw_disks, draw_segments, link_texels, median_nearest_distance,
    rasterize_lattice, Lattice, Segment,
};
pub use self::matting::{
    solve_alpha, threshold_alpha, AlphaSolver, LaplacianMatting, MattingSystem,
};
pub use self::scribbles::{generate_scribbles, Label, Scribbles, Trimap};
pub use self::segment::{
    segment_fence, segment_fence_with, SegmentConfig, SegmentStatus, Segmentation,
};
