//! Raster types and the geometric primitives shared by every stage:
//! pyramids, bilinear warping, gradients and binary morphology.

mod flow;
mod image;
pub mod io;
mod mask;
mod morph;
mod pyramid;
mod warp;

pub use self::flow::FlowField;
pub use self::image::Image;
pub use self::mask::BinaryMask;
pub use self::morph::{boundary_edges, dilate, disk_offsets, erode};
pub use self::pyramid::{
    downsample_mask_any, gaussian_blur, gaussian_pyramid, mask_pyramid, pyramid_dims,
    pyramid_sigma, resize_bilinear, resize_flow, Pyramid,
};
pub use self::warp::{bilinear_taps, image_gradients, warp_image, warp_mask_nearest};
