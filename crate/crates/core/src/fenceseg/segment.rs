use serde::{Deserialize, Serialize};

use crate::error::{DefenceError, Result};
use crate::fenceseg::{
    default_max_link, detect_texels, draw_disks, draw_segments, generate_scribbles, link_texels,
    refine_by_symmetry, threshold_alpha, AlphaSolver, FeatureBackend, Label, LaplacianMatting,
    Lattice, LinearClassifier, TexelDetection, Trimap,
};
use crate::imgcore::{BinaryMask, Image};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub window: usize,
    pub stride: usize,
    /// Suppression radius; `window / 2` when absent.
    pub nms_radius: Option<f64>,
    /// Linking distance; 1.8 × median nearest-neighbour spacing when absent.
    pub max_link: Option<f64>,
    /// Width of rasterised lattice edges.
    pub thickness: usize,
    pub erode_radius: usize,
    pub dilate_radius: usize,
    pub lambda_s: f64,
    pub sigma_c: f64,
    pub tau: f64,
    /// Continue dangling lattice lines towards the border.
    pub extend_edges: bool,
    /// Search radius of the point-symmetry refinement of detections; 0
    /// keeps the scan-grid positions.
    pub refine_radius: usize,
    /// Drop lattice edges off both lattice directions and predict joints in
    /// the border band where the window does not fit.
    pub regularize: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            window: 32,
            stride: 5,
            nms_radius: None,
            max_link: None,
            thickness: 3,
            erode_radius: 1,
            dilate_radius: 3,
            lambda_s: 100.0,
            sigma_c: 0.1,
            tau: 0.5,
            extend_edges: true,
            refine_radius: 3,
            regularize: true,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(DefenceError::param("stride", "must be at least 1"));
        }
        if self.window < 4 {
            return Err(DefenceError::param("window", "must be at least 4"));
        }
        if self.thickness == 0 {
            return Err(DefenceError::param("thickness", "must be at least 1"));
        }
        if self.erode_radius == 0 || self.dilate_radius == 0 {
            return Err(DefenceError::param(
                "erode_radius/dilate_radius",
                "must be at least 1",
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(DefenceError::param(
                "tau",
                format!("{} outside (0, 1)", self.tau),
            ));
        }
        if !(self.lambda_s > 0.0) {
            return Err(DefenceError::param("lambda_s", "must be positive"));
        }
        if !(self.sigma_c > 0.0) {
            return Err(DefenceError::param("sigma_c", "must be positive"));
        }
        if let Some(r) = self.nms_radius {
            if !(r >= 0.0) {
                return Err(DefenceError::param("nms_radius", "must be non-negative"));
            }
        }
        if let Some(l) = self.max_link {
            if !(l > 0.0) {
                return Err(DefenceError::param("max_link", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn nms_radius(&self) -> f64 {
        self.nms_radius.unwrap_or(self.window as f64 / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentStatus {
    Ok,
    /// No window scored above threshold; the mask is empty.
    NoDetections,
    /// Scribbles of one kind were missing, so the preliminary lattice mask
    /// is returned without matting.
    NoMatting,
}

#[derive(Clone, Debug)]
pub struct Segmentation<T> {
    pub mask: BinaryMask,
    pub status: SegmentStatus,
    pub detections: Vec<TexelDetection>,
    pub lattice: Lattice,
    pub prelim: BinaryMask,
    pub trimap: Trimap,
    pub erode_radius_used: usize,
    pub alpha: Option<Image<T>>,
}

/// detect → link → rasterise → scribbles → matting → threshold.
pub fn segment_fence<T: Scalar>(
    img: &Image<T>,
    clf: &LinearClassifier<T>,
    backend: &dyn FeatureBackend<T>,
    cfg: &SegmentConfig,
) -> Result<Segmentation<T>> {
    let matting = LaplacianMatting {
        lambda_s: cfg.lambda_s,
        sigma_c: cfg.sigma_c,
        ..LaplacianMatting::default()
    };
    segment_fence_with(img, clf, backend, &matting, cfg)
}

pub fn segment_fence_with<T: Scalar>(
    img: &Image<T>,
    clf: &LinearClassifier<T>,
    backend: &dyn FeatureBackend<T>,
    matting: &dyn AlphaSolver<T>,
    cfg: &SegmentConfig,
) -> Result<Segmentation<T>> {
    cfg.validate()?;
    let (w, h) = img.dims();
    let detections = detect_texels(img, clf, backend, cfg.stride, cfg.window, cfg.nms_radius())?;
    let detections = refine_by_symmetry(img, &detections, cfg.refine_radius, cfg.window / 4);
    if detections.is_empty() {
        log::warn!("no fence texels detected; returning an empty mask");
        return Ok(Segmentation {
            mask: BinaryMask::new(w, h),
            status: SegmentStatus::NoDetections,
            detections,
            lattice: Lattice::default(),
            prelim: BinaryMask::new(w, h),
            trimap: Trimap::new(w, h),
            erode_radius_used: 0,
            alpha: None,
        });
    }

    let max_link = cfg
        .max_link
        .or_else(|| default_max_link(&detections))
        .unwrap_or(cfg.window as f64);
    let mut lattice = link_texels(&detections, max_link);
    let basis = if cfg.regularize {
        lattice.basis()
    } else {
        None
    };
    if let Some(b) = &basis {
        lattice.prune_off_axis(b, 15.0);
    }
    log::debug!(
        "{} detections, {} lattice edges (max link {:.1})",
        detections.len(),
        lattice.edges.len(),
        max_link
    );

    let mut prelim = BinaryMask::new(w, h);
    let mut segments = lattice.segments();
    if cfg.extend_edges {
        segments.extend(lattice.extension_segments(w, h));
    }
    if let Some(b) = &basis {
        segments.extend(lattice.border_completion(b, w, h, cfg.window));
    }
    draw_segments(&mut prelim, &segments, cfg.thickness);
    let centers: Vec<_> = lattice.nodes.iter().map(|n| (n.x, n.y)).collect();
    draw_disks(&mut prelim, &centers, cfg.thickness);

    let scribbles = generate_scribbles(&prelim, cfg.erode_radius, cfg.dilate_radius);
    if scribbles.erode_radius != cfg.erode_radius {
        log::info!(
            "foreground scribbles empty at erosion radius {}, used {}",
            cfg.erode_radius,
            scribbles.erode_radius
        );
    }
    let trimap = scribbles.trimap;
    if trimap.count(Label::Foreground) == 0 || trimap.count(Label::Background) == 0 {
        log::warn!("scribbles incomplete; using the preliminary lattice mask");
        return Ok(Segmentation {
            mask: prelim.clone(),
            status: SegmentStatus::NoMatting,
            detections,
            lattice,
            prelim,
            trimap,
            erode_radius_used: scribbles.erode_radius,
            alpha: None,
        });
    }

    let alpha = matting.solve(img, &trimap)?;
    let mask = threshold_alpha(&alpha, cfg.tau)?;
    Ok(Segmentation {
        mask,
        status: SegmentStatus::Ok,
        detections,
        lattice,
        prelim,
        trimap,
        erode_radius_used: scribbles.erode_radius,
        alpha: Some(alpha),
    })
}
