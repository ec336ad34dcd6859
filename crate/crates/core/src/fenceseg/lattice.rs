use std::collections::BTreeSet;

use crate::fenceseg::TexelDetection;
use crate::imgcore::BinaryMask;

/// Detected joints and the straight edges linking them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lattice {
    pub nodes: Vec<TexelDetection>,
    /// Sorted, deduplicated `(i, j)` pairs with `i < j`.
    pub edges: Vec<(usize, usize)>,
}

/// A straight segment in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

/// Angular quadrant of the direction `(dx, dy)`: 0 = right, 1 = down,
/// 2 = left, 3 = up, each spanning 90 degrees centred on its axis.
fn quadrant(dx: f64, dy: f64) -> usize {
    let deg = dy.atan2(dx).to_degrees();
    (((deg + 45.0) / 90.0).floor() as isize).rem_euclid(4) as usize
}

/// Median distance from each detection to its nearest other detection.
pub fn median_nearest_distance(dets: &[TexelDetection]) -> Option<f64> {
    if dets.len() < 2 {
        return None;
    }
    let mut nn: Vec<f64> = dets
        .iter()
        .enumerate()
        .map(|(i, a)| {
            dets.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.distance(b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len();
    Some(if m % 2 == 1 {
        nn[m / 2]
    } else {
        0.5 * (nn[m / 2 - 1] + nn[m / 2])
    })
}

/// Default linking distance: 1.8 × the median nearest-neighbour distance.
pub fn default_max_link(dets: &[TexelDetection]) -> Option<f64> {
    median_nearest_distance(dets).map(|d| 1.8 * d)
}

/// Links each node to its nearest neighbour in each of the four angular
/// quadrants, considering only neighbours within `max_link`.
pub fn link_texels(dets: &[TexelDetection], max_link: f64) -> Lattice {
    let mut edges = BTreeSet::new();
    for (i, a) in dets.iter().enumerate() {
        let mut best: [Option<(f64, usize)>; 4] = [None; 4];
        for (j, b) in dets.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = a.distance(b);
            if d > max_link || d == 0.0 {
                continue;
            }
            let q = quadrant(b.x - a.x, b.y - a.y);
            if best[q].is_none_or(|(bd, _)| d < bd) {
                best[q] = Some((d, j));
            }
        }
        for (_, j) in best.into_iter().flatten() {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    Lattice {
        nodes: dets.to_vec(),
        edges: edges.into_iter().collect(),
    }
}

impl Lattice {
    pub fn segments(&self) -> Vec<Segment> {
        self.edges
            .iter()
            .map(|&(i, j)| Segment {
                a: (self.nodes[i].x, self.nodes[i].y),
                b: (self.nodes[j].x, self.nodes[j].y),
            })
            .collect()
    }

    /// Continues dangling lattice lines. For a node linked in one quadrant
    /// but not the opposite one, a ray is cast away from the linked
    /// neighbour, running to the raster border or at most two edge lengths.
    /// This recovers wire stubs past the outermost detectable joints and
    /// bridges a single missed joint.
    pub fn extension_segments(&self, width: usize, height: usize) -> Vec<Segment> {
        let mut linked: Vec<[Option<usize>; 4]> = vec![[None; 4]; self.nodes.len()];
        for &(i, j) in &self.edges {
            let (a, b) = (&self.nodes[i], &self.nodes[j]);
            linked[i][quadrant(b.x - a.x, b.y - a.y)] = Some(j);
            linked[j][quadrant(a.x - b.x, a.y - b.y)] = Some(i);
        }
        let (wmax, hmax) = ((width - 1) as f64, (height - 1) as f64);
        let mut out = Vec::new();
        for (i, quads) in linked.iter().enumerate() {
            let a = &self.nodes[i];
            for q in 0..4 {
                let (Some(j), None) = (quads[q], quads[(q + 2) % 4]) else {
                    continue;
                };
                let b = &self.nodes[j];
                let (dx, dy) = (a.x - b.x, a.y - b.y);
                let len = dx.hypot(dy);
                if len == 0.0 {
                    continue;
                }
                let (ux, uy) = (dx / len, dy / len);
                let exit = |p: f64, u: f64, max: f64| {
                    if u > 0.0 {
                        (max - p) / u
                    } else if u < 0.0 {
                        -p / u
                    } else {
                        f64::INFINITY
                    }
                };
                let reach = exit(a.x, ux, wmax).min(exit(a.y, uy, hmax)).max(0.0);
                let t = reach.min(2.0 * len);
                if t > 0.0 {
                    out.push(Segment {
                        a: (a.x, a.y),
                        b: (a.x + t * ux, a.y + t * uy),
                    });
                }
            }
        }
        out
    }
}

/// Folds a direction into (−90°, 90°].
fn axis_angle(dx: f64, dy: f64) -> f64 {
    let mut a = dy.atan2(dx).to_degrees();
    if a <= -90.0 {
        a += 180.0;
    } else if a > 90.0 {
        a -= 180.0;
    }
    a
}

/// Angle between two undirected directions, in [0°, 90°].
fn axis_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 180.0;
    d.min(180.0 - d)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

impl Lattice {
    fn edge_vectors(&self) -> Vec<(f64, f64)> {
        self.edges
            .iter()
            .map(|&(i, j)| {
                (
                    self.nodes[j].x - self.nodes[i].x,
                    self.nodes[j].y - self.nodes[i].y,
                )
            })
            .collect()
    }

    /// The two lattice directions as displacement vectors: the most common
    /// edge orientation (±10°), then the most common one at least 30° away.
    /// Each vector is the componentwise median of its edges. `None` unless
    /// both directions have two or more edges.
    pub fn basis(&self) -> Option<[(f64, f64); 2]> {
        const BAND: f64 = 10.0;
        let vecs = self.edge_vectors();
        let angles: Vec<f64> = vecs.iter().map(|v| axis_angle(v.0, v.1)).collect();
        let support = |c: f64| angles.iter().filter(|a| axis_gap(**a, c) <= BAND).count();
        let pick = |allowed: &dyn Fn(f64) -> bool| {
            angles
                .iter()
                .copied()
                .filter(|a| allowed(*a))
                .map(|a| (support(a), a))
                .fold(None, |best: Option<(usize, f64)>, (n, a)| match best {
                    Some((bn, _)) if bn >= n => best,
                    _ => Some((n, a)),
                })
        };
        let (n1, a1) = pick(&|_| true)?;
        let (n2, a2) = pick(&|a| axis_gap(a, a1) >= 30.0)?;
        if n1 < 2 || n2 < 2 {
            return None;
        }
        let vector = |centre: f64| {
            let (cx, cy) = (centre.to_radians().cos(), centre.to_radians().sin());
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (v, a) in vecs.iter().zip(&angles) {
                if axis_gap(*a, centre) <= BAND {
                    let s = if v.0 * cx + v.1 * cy < 0.0 { -1.0 } else { 1.0 };
                    xs.push(s * v.0);
                    ys.push(s * v.1);
                }
            }
            (median(&mut xs), median(&mut ys))
        };
        Some([vector(a1), vector(a2)])
    }

    /// Drops edges whose orientation is more than `tol_deg` from both basis
    /// directions (diagonal shortcuts taken where a neighbour is missing).
    pub fn prune_off_axis(&mut self, basis: &[(f64, f64); 2], tol_deg: f64) {
        let dirs = [
            axis_angle(basis[0].0, basis[0].1),
            axis_angle(basis[1].0, basis[1].1),
        ];
        let nodes = &self.nodes;
        self.edges.retain(|&(i, j)| {
            let a = axis_angle(nodes[j].x - nodes[i].x, nodes[j].y - nodes[i].y);
            dirs.iter().any(|d| axis_gap(a, *d) <= tol_deg)
        });
    }

    /// Segments for the part of the lattice that cannot be detected because
    /// a `window`-sized patch does not fit there. Starting from the detected
    /// nodes, joints are predicted one basis step at a time into the border
    /// band; predicted joints link to each other and run out to the raster
    /// edge; new joints inside the band only continue an existing line.
    pub fn border_completion(
        &self,
        basis: &[(f64, f64); 2],
        width: usize,
        height: usize,
        window: usize,
    ) -> Vec<Segment> {
        let (w, h) = (width as f64, height as f64);
        let inside = |p: (f64, f64)| p.0 >= -0.5 && p.1 >= -0.5 && p.0 <= w - 0.5 && p.1 <= h - 0.5;
        let half = (window / 2) as f64;
        let detectable = |p: (f64, f64)| {
            p.0 >= half
                && p.1 >= half
                && p.0 <= w - window as f64 + half
                && p.1 <= h - window as f64 + half
        };
        let steps = [
            basis[0],
            basis[1],
            (-basis[0].0, -basis[0].1),
            (-basis[1].0, -basis[1].1),
        ];
        let snap = 0.25
            * basis[0]
                .0
                .hypot(basis[0].1)
                .min(basis[1].0.hypot(basis[1].1));

        // (position, direction index that created it; None for detections)
        let mut points: Vec<((f64, f64), Option<usize>)> =
            self.nodes.iter().map(|n| ((n.x, n.y), None)).collect();
        let mut pairs = BTreeSet::new();
        let mut out = Vec::new();
        let mut k = 0;
        while k < points.len() {
            let (p, origin) = points[k];
            for (di, d) in steps.iter().enumerate() {
                let q = (p.0 + d.0, p.1 + d.1);
                let behind = (p.0 - d.0, p.1 - d.1);
                let continues = origin.is_none()
                    || origin == Some(di)
                    || points
                        .iter()
                        .any(|(r, _)| (r.0 - behind.0).hypot(r.1 - behind.1) <= snap);
                let near = points
                    .iter()
                    .position(|(r, _)| (r.0 - q.0).hypot(r.1 - q.1) <= snap);
                if let Some(m) = near {
                    // Only predicted joints gain links; detected ones keep theirs.
                    if (origin.is_some() || points[m].1.is_some())
                        && pairs.insert((k.min(m), k.max(m)))
                    {
                        out.push(Segment {
                            a: p,
                            b: points[m].0,
                        });
                    }
                    continue;
                }
                if detectable(q) {
                    continue;
                }
                if !inside(q) {
                    // at most one basis step, most of it off the raster
                    out.push(Segment { a: p, b: q });
                    continue;
                }
                if continues {
                    points.push((q, Some(di)));
                    pairs.insert((k, points.len() - 1));
                    out.push(Segment { a: p, b: q });
                }
            }
            k += 1;
        }
        out
    }
}

fn point_segment_distance(px: f64, py: f64, s: &Segment) -> f64 {
    let (ax, ay) = s.a;
    let (bx, by) = s.b;
    let (vx, vy) = (bx - ax, by - ay);
    let l2 = vx * vx + vy * vy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((px - ax) * vx + (py - ay) * vy) / l2).clamp(0.0, 1.0)
    };
    (px - ax - t * vx).hypot(py - ay - t * vy)
}

/// Draws segments of width `thickness` (pixel centres within
/// `thickness / 2` of the segment) into `mask`.
pub fn draw_segments(mask: &mut BinaryMask, segments: &[Segment], thickness: usize) {
    let (w, h) = mask.dims();
    let half = thickness as f64 / 2.0;
    for s in segments {
        let x_lo = (s.a.0.min(s.b.0) - half).floor().max(0.0) as usize;
        let x_hi = ((s.a.0.max(s.b.0) + half).ceil().max(0.0) as usize).min(w - 1);
        let y_lo = (s.a.1.min(s.b.1) - half).floor().max(0.0) as usize;
        let y_hi = ((s.a.1.max(s.b.1) + half).ceil().max(0.0) as usize).min(h - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if point_segment_distance(x as f64, y as f64, s) <= half + 1e-9 {
                    mask.set(x, y, true);
                }
            }
        }
    }
}

/// Draws disks of the given radius centred on each point.
pub fn draw_disks(mask: &mut BinaryMask, centers: &[(f64, f64)], radius: usize) {
    let (w, h) = mask.dims();
    let r = radius as f64;
    for &(cx, cy) in centers {
        let x_lo = (cx - r).floor().max(0.0) as usize;
        let x_hi = ((cx + r).ceil().max(0.0) as usize).min(w - 1);
        let y_lo = (cy - r).floor().max(0.0) as usize;
        let y_hi = ((cy + r).ceil().max(0.0) as usize).min(h - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if (x as f64 - cx).hypot(y as f64 - cy) <= r + 1e-9 {
                    mask.set(x, y, true);
                }
            }
        }
    }
}

/// Preliminary fence mask: edges as segments of width `thickness`, nodes as
/// disks of radius `thickness`.
pub fn rasterize_lattice(
    lat: &Lattice,
    thickness: usize,
    width: usize,
    height: usize,
) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    if width == 0 || height == 0 {
        return mask;
    }
    draw_segments(&mut mask, &lat.segments(), thickness.max(1));
    let centers: Vec<_> = lat.nodes.iter().map(|n| (n.x, n.y)).collect();
    draw_disks(&mut mask, &centers, thickness.max(1));
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64) -> TexelDetection {
        TexelDetection { x, y, score: 1.0 }
    }

    fn grid(n: usize, spacing: f64) -> Vec<TexelDetection> {
        let mut v = Vec::new();
        for j in 0..n {
            for i in 0..n {
                v.push(det(20.0 + i as f64 * spacing, 20.0 + j as f64 * spacing));
            }
        }
        v
    }

    #[test]
    fn single_node_has_no_edges() {
        let lat = link_texels(&[det(5.0, 5.0)], 100.0);
        assert_eq!(lat.nodes.len(), 1);
        assert!(lat.edges.is_empty());
    }

    #[test]
    fn three_by_three_grid_links_to_grid_adjacency() {
        let lat = link_texels(&grid(3, 40.0), 60.0);
        assert_eq!(lat.edges.len(), 12);
        for &(i, j) in &lat.edges {
            assert!((lat.nodes[i].distance(&lat.nodes[j]) - 40.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_grid_keeps_adjacency() {
        let (s, c) = 25f64.to_radians().sin_cos();
        let dets: Vec<_> = grid(4, 35.0)
            .into_iter()
            .map(|d| det(100.0 + c * d.x - s * d.y, 20.0 + s * d.x + c * d.y))
            .collect();
        let lat = link_texels(&dets, default_max_link(&dets).unwrap());
        assert_eq!(lat.edges.len(), 24);
    }

    #[test]
    fn distant_pair_is_not_linked() {
        let lat = link_texels(&[det(0.0, 0.0), det(100.0, 0.0)], 60.0);
        assert!(lat.edges.is_empty());
    }

    #[test]
    fn median_link_distance() {
        let d = median_nearest_distance(&grid(3, 40.0)).unwrap();
        assert_eq!(d, 40.0);
        assert_eq!(default_max_link(&grid(3, 40.0)), Some(72.0));
        assert_eq!(default_max_link(&[det(1.0, 1.0)]), None);
    }

    #[test]
    fn rasterized_segment_and_disks() {
        let lat = Lattice {
            nodes: vec![det(10.0, 10.0), det(50.0, 10.0)],
            edges: vec![(0, 1)],
        };
        let mut segment_only = BinaryMask::new(64, 32);
        draw_segments(&mut segment_only, &lat.segments(), 1);
        assert_eq!(segment_only.count(), 41);
        assert!((10..=50).all(|x| segment_only.get(x, 10)));

        // each endpoint disk of radius 1 adds its three pixels off the segment
        let m = rasterize_lattice(&lat, 1, 64, 32);
        assert_eq!(m.count(), 47);
    }

    #[test]
    fn lone_node_and_empty_lattice() {
        let lat = Lattice {
            nodes: vec![det(8.0, 8.0)],
            edges: vec![],
        };
        assert_eq!(rasterize_lattice(&lat, 2, 20, 20).count(), 13);
        assert!(rasterize_lattice(&Lattice::default(), 3, 20, 20).is_clear());
    }

    #[test]
    fn extensions_reach_the_border() {
        // a horizontal row of joints at 40 px pitch starting 30 px from the left
        let dets: Vec<_> = (0..3).map(|i| det(30.0 + 40.0 * i as f64, 50.0)).collect();
        let lat = link_texels(&dets, 60.0);
        let ext = lat.extension_segments(140, 100);
        assert_eq!(ext.len(), 2);
        let left = ext.iter().find(|s| s.a.0 == 30.0).unwrap();
        assert!((left.b.0 - 0.0).abs() < 1e-9 && (left.b.1 - 50.0).abs() < 1e-9);
        let right = ext.iter().find(|s| s.a.0 == 110.0).unwrap();
        assert!((right.b.0 - 139.0).abs() < 1e-9);
    }

    #[test]
    fn basis_of_rotated_grid() {
        let (s, c) = 20f64.to_radians().sin_cos();
        let dets: Vec<_> = grid(4, 35.0)
            .into_iter()
            .map(|d| det(100.0 + c * d.x - s * d.y, 20.0 + s * d.x + c * d.y))
            .collect();
        let b = link_texels(&dets, 60.0).basis().unwrap();
        let mut lens: Vec<f64> = b.iter().map(|v| v.0.hypot(v.1)).collect();
        lens.sort_by(f64::total_cmp);
        assert!((lens[0] - 35.0).abs() < 1e-9 && (lens[1] - 35.0).abs() < 1e-9);
        let dot = b[0].0 * b[1].0 + b[0].1 * b[1].1;
        assert!(dot.abs() < 1e-6);
        assert_eq!(Lattice::default().basis(), None);
    }

    #[test]
    fn pruning_drops_diagonal_shortcuts() {
        // the joint at (60, 60) is missing, so (20, 60) links up-right to (60, 20)
        let mut dets = grid(2, 40.0);
        dets.push(det(20.0, 100.0));
        dets.push(det(60.0, 100.0));
        dets.push(det(100.0, 20.0));
        dets.push(det(100.0, 60.0));
        dets.retain(|d| !(d.x == 60.0 && d.y == 60.0));
        let mut lat = link_texels(&dets, 60.0);
        let basis = lat.basis().unwrap();
        lat.prune_off_axis(&basis, 15.0);
        for &(i, j) in &lat.edges {
            let (a, b) = (&lat.nodes[i], &lat.nodes[j]);
            assert!(a.x == b.x || a.y == b.y, "diagonal {a:?} {b:?}");
        }
        assert!(!lat.edges.is_empty());
    }

    #[test]
    fn border_band_is_completed() {
        // 3x3 joints at 40..120 on a 150x150 raster; a 32 px window cannot be
        // centred closer than 16 px to the edge, so the joints at x = 0 and
        // y = 0 are predicted and linked along the band
        let dets: Vec<_> = (1..4)
            .flat_map(|j| (1..4).map(move |i| det(40.0 * i as f64, 40.0 * j as f64)))
            .collect();
        let lat = link_texels(&dets, 60.0);
        let basis = lat.basis().unwrap();
        let segs = lat.border_completion(&basis, 150, 150, 32);
        let has = |a: (f64, f64), b: (f64, f64)| {
            let close = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1) < 1e-9;
            segs.iter()
                .any(|s| (close(s.a, a) && close(s.b, b)) || (close(s.a, b) && close(s.b, a)))
        };
        assert!(has((40.0, 40.0), (0.0, 40.0)));
        assert!(has((0.0, 40.0), (0.0, 80.0)));
        assert!(!has((40.0, 80.0), (40.0, 120.0)));
        assert!(has((120.0, 40.0), (160.0, 40.0)));
        let mut m = BinaryMask::new(150, 150);
        draw_segments(&mut m, &segs, 0);
        assert!(m.get(0, 60) && m.get(60, 0) && m.get(149, 40));
        assert!(m.get(0, 10) && m.get(10, 0));
        assert!(!m.get(60, 60));
    }
}
