use crate::imgcore::{boundary_edges, dilate, erode, BinaryMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Unknown,
    Foreground,
    Background,
}

/// Per-pixel scribble labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trimap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl Trimap {
    pub fn new(width: usize, height: usize) -> Self {
        Trimap {
            width,
            height,
            labels: vec![Label::Unknown; width * height],
        }
    }

    /// Builds a trimap from scribble masks; pixels claimed by both become unknown.
    pub fn from_masks(fg: &BinaryMask, bg: &BinaryMask) -> Self {
        assert_eq!(fg.dims(), bg.dims());
        let labels = fg
            .data()
            .iter()
            .zip(bg.data())
            .map(|(f, b)| match (*f, *b) {
                (true, false) => Label::Foreground,
                (false, true) => Label::Background,
                _ => Label::Unknown,
            })
            .collect();
        Trimap {
            width: fg.width(),
            height: fg.height(),
            labels,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, l: Label) {
        self.labels[y * self.width + x] = l;
    }

    pub fn count(&self, l: Label) -> usize {
        self.labels.iter().filter(|x| **x == l).count()
    }

    pub fn mask_of(&self, l: Label) -> BinaryMask {
        BinaryMask::from_vec(
            self.width,
            self.height,
            self.labels.iter().map(|x| *x == l).collect(),
        )
        .expect("trimap dims")
    }
}

/// Result of scribble generation; `erode_radius` is the radius actually used
/// after the empty-foreground fallback.
#[derive(Clone, Debug)]
pub struct Scribbles {
    pub trimap: Trimap,
    pub erode_radius: usize,
}

/// Foreground scribbles are the eroded preliminary mask, background scribbles
/// the boundary of the dilated mask. If erosion empties the foreground the
/// radius is reduced step by step down to 0.
pub fn generate_scribbles(prelim: &BinaryMask, erode_r: usize, dilate_r: usize) -> Scribbles {
    let mut r = erode_r;
    let mut fg = erode(prelim, r);
    while fg.is_clear() && r > 0 {
        r -= 1;
        fg = erode(prelim, r);
    }
    let bg = boundary_edges(&dilate(prelim, dilate_r));
    Scribbles {
        trimap: Trimap::from_masks(&fg, &bg),
        erode_radius: r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_prelim_gives_no_scribbles() {
        let s = generate_scribbles(&BinaryMask::new(30, 30), 1, 3);
        assert_eq!(s.trimap.count(Label::Unknown), 900);
        assert_eq!(s.erode_radius, 0);
    }

    #[test]
    fn solid_block() {
        let prelim = BinaryMask::from_fn(50, 50, |x, y| {
            (15..35).contains(&x) && (15..35).contains(&y)
        });
        let s = generate_scribbles(&prelim, 2, 3);
        let fg = s.trimap.mask_of(Label::Foreground);
        let inner = BinaryMask::from_fn(50, 50, |x, y| {
            (17..33).contains(&x) && (17..33).contains(&y)
        });
        assert_eq!(fg, inner);

        // ring around the block dilated by 3: it spans the 26x26 box
        let bg = s.trimap.mask_of(Label::Background);
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (usize::MAX, 0, usize::MAX, 0);
        for y in 0..50 {
            for x in 0..50 {
                if bg.get(x, y) {
                    xmin = xmin.min(x);
                    xmax = xmax.max(x);
                    ymin = ymin.min(y);
                    ymax = ymax.max(y);
                    assert!(!prelim.get(x, y));
                }
            }
        }
        assert_eq!((xmin, xmax, ymin, ymax), (12, 37, 12, 37));
        // straight sides of the ring are complete
        assert!((15..35).all(|t| bg.get(12, t) && bg.get(37, t) && bg.get(t, 12) && bg.get(t, 37)));
    }

    #[test]
    fn erosion_falls_back_for_thin_shapes() {
        let prelim = BinaryMask::from_fn(30, 30, |x, y| y == 10 && (5..25).contains(&x));
        let s = generate_scribbles(&prelim, 2, 2);
        assert_eq!(s.erode_radius, 0);
        assert_eq!(s.trimap.count(Label::Foreground), 20);
    }

    #[test]
    fn scribbles_are_disjoint_and_fg_inside_prelim() {
        let prelim = BinaryMask::from_fn(40, 40, |x, y| (x + 2 * y) % 13 < 4);
        let s = generate_scribbles(&prelim, 1, 2);
        let fg = s.trimap.mask_of(Label::Foreground);
        let bg = s.trimap.mask_of(Label::Background);
        assert!(fg.and(&bg).is_clear());
        assert!(fg.is_subset_of(&prelim));
    }
}
