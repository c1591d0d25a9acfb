//! Spherical projection of a point cloud onto the sensor's image grid,
//! nearest-neighbour fill-in and re-projection of pixel values to points.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::cloud::{ClassId, LabelVector, Point, PointCloud, ProbMatrix, SensorSpec};
use crate::error::{Error, Result};
use crate::grid::neighbours8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelCoord {
    pub u: usize,
    pub v: usize,
}

/// Feature channel order inside [`FrameGrids::features`].
pub const FEATURE_NAMES: [&str; 5] = ["x", "y", "z", "i", "r"];

/// Image-representation stack of one frame. Pixel `(u, v)` lives at
/// linear index `v * w + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrids {
    pub w: usize,
    pub h: usize,
    pub n: usize,
    /// x, y, z, intensity, range; one `w*h` grid each.
    pub features: [Vec<f64>; 5],
    /// Pixel-major `w*h*n` class probabilities.
    pub probs: Vec<f32>,
    pub gt_labels: Option<Vec<ClassId>>,
    pub pred_labels: Vec<ClassId>,
    /// `true` where the pixel holds a projected point.
    pub mask: Vec<bool>,
    pub point_map: Vec<PixelCoord>,
    pub collision_count: usize,
    /// Points whose image coordinates had to be clamped into the grid.
    pub overshoot_count: usize,
}

impl FrameGrids {
    pub fn index(&self, p: PixelCoord) -> usize {
        p.v * self.w + p.u
    }

    pub fn coord(&self, l: usize) -> PixelCoord {
        PixelCoord { u: l % self.w, v: l / self.w }
    }

    pub fn len(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_probs(&self, l: usize) -> &[f32] {
        &self.probs[l * self.n..(l + 1) * self.n]
    }

    pub fn projected_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Range, elevation `θ = asin(z/r)` and azimuth `φ = atan2(y, x)` in `(−π, π]`.
pub fn spherical_angles(p: &Point) -> Result<(f64, f64, f64)> {
    let r = p.range();
    if !(r > 0.0) {
        return Err(Error::ZeroRange);
    }
    let theta = (p.z as f64 / r).clamp(-1.0, 1.0).asin();
    let mut phi = (p.y as f64).atan2(p.x as f64);
    if phi <= -PI {
        phi = PI;
    }
    Ok((r, theta, phi))
}

/// Floors the real-valued image coordinates and clamps them into the grid.
/// The flag is `true` when clamping changed the coordinate.
pub fn image_coords(theta: f64, phi: f64, spec: &SensorSpec) -> (PixelCoord, bool) {
    let (w, h) = (spec.width(), spec.height());
    let down = spec.fov_down.to_radians();
    let fov = spec.fov_ver().to_radians();
    let u_real = 0.5 * (1.0 - phi / PI) * w as f64;
    let v_real = (1.0 - (theta + down) / fov) * h as f64;
    let (u, cu) = floor_clamp(u_real, w);
    let (v, cv) = floor_clamp(v_real, h);
    (PixelCoord { u, v }, cu || cv)
}

fn floor_clamp(x: f64, size: usize) -> (usize, bool) {
    let f = x.floor();
    if f < 0.0 {
        (0, true)
    } else if f > (size - 1) as f64 {
        (size - 1, true)
    } else {
        (f as usize, false)
    }
}

/// Sparse projection. On collisions the point with the smaller range keeps
/// the pixel (first index on equal ranges); losers stay in `point_map`.
pub fn project(
    cloud: &PointCloud,
    probs: &ProbMatrix,
    gt: Option<&LabelVector>,
    pred: &LabelVector,
    spec: &SensorSpec,
) -> Result<FrameGrids> {
    spec.validate()?;
    let m = cloud.len();
    if probs.rows() != m || pred.len() != m || gt.is_some_and(|g| g.len() != m) {
        return Err(Error::Shape(format!("inconsistent point counts for m = {m}")));
    }
    let (w, h, n) = (spec.width(), spec.height(), probs.cols());
    let size = w * h;
    let mut owner: Vec<Option<(usize, f64)>> = vec![None; size];
    let mut point_map = Vec::with_capacity(m);
    let mut overshoot_count = 0;
    for (j, p) in cloud.points().iter().enumerate() {
        let (r, theta, phi) = spherical_angles(p)?;
        let (px, clamped) = image_coords(theta, phi, spec);
        overshoot_count += clamped as usize;
        point_map.push(px);
        let l = px.v * w + px.u;
        match owner[l] {
            Some((_, r0)) if r0 <= r => {}
            _ => owner[l] = Some((j, r)),
        }
    }

    let mut grids = FrameGrids {
        w,
        h,
        n,
        features: std::array::from_fn(|_| vec![0.0; size]),
        probs: vec![0.0; size * n],
        gt_labels: gt.map(|_| vec![1; size]),
        pred_labels: vec![1; size],
        mask: vec![false; size],
        point_map,
        collision_count: 0,
        overshoot_count,
    };
    for (l, slot) in owner.iter().enumerate() {
        let Some((j, r)) = *slot else { continue };
        let p = &cloud.points()[j];
        let vals = [p.x as f64, p.y as f64, p.z as f64, p.intensity as f64, r];
        for (ch, v) in grids.features.iter_mut().zip(vals) {
            ch[l] = v;
        }
        grids.probs[l * n..(l + 1) * n].copy_from_slice(probs.row(j));
        if let (Some(g), Some(gt)) = (grids.gt_labels.as_mut(), gt) {
            g[l] = gt.labels()[j];
        }
        grids.pred_labels[l] = pred.labels()[j];
        grids.mask[l] = true;
    }
    grids.collision_count = m - grids.projected_count();
    Ok(grids)
}

/// For every pixel, the linear index of its fill donor: itself when
/// projected, otherwise the nearest projected pixel in Chebyshev distance
/// with horizontal wraparound, ties going to the donor first in scan order.
pub fn donor_map(mask: &[bool], w: usize, h: usize) -> Result<Vec<usize>> {
    const UNSET: usize = usize::MAX;
    let mut donor = vec![UNSET; w * h];
    let mut frontier: Vec<usize> = Vec::new();
    for (l, &m) in mask.iter().enumerate() {
        if m {
            donor[l] = l;
            frontier.push(l);
        }
    }
    if frontier.is_empty() {
        return Err(Error::EmptyGrid);
    }
    // Layered BFS over the 8-neighbourhood: BFS depth equals Chebyshev
    // distance, and the nearest-donor set of a pixel is the union of the
    // sets of its neighbours one layer closer, so propagating the minimum
    // donor index keeps the scan-order tie rule exact.
    let mut layer = vec![UNSET; w * h];
    for &l in &frontier {
        layer[l] = 0;
    }
    let mut depth = 0;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &l in &frontier {
            for q in neighbours8(l, w, h, true) {
                if layer[q] == UNSET {
                    layer[q] = depth + 1;
                    donor[q] = donor[l];
                    next.push(q);
                } else if layer[q] == depth + 1 && donor[l] < donor[q] {
                    donor[q] = donor[l];
                }
            }
        }
        depth += 1;
        frontier = next;
    }
    Ok(donor)
}

/// Fills every empty pixel with all channels of its single donor.
pub fn fill(mut grids: FrameGrids) -> Result<FrameGrids> {
    let donor = donor_map(&grids.mask, grids.w, grids.h)?;
    let n = grids.n;
    for (l, &d) in donor.iter().enumerate() {
        if d == l {
            continue;
        }
        for ch in grids.features.iter_mut() {
            ch[l] = ch[d];
        }
        grids.probs.copy_within(d * n..(d + 1) * n, l * n);
        if let Some(g) = grids.gt_labels.as_mut() {
            g[l] = g[d];
        }
        grids.pred_labels[l] = grids.pred_labels[d];
    }
    Ok(grids)
}

/// Reads the grid value at each point's pixel.
pub fn reproject<T: Copy>(pixel_values: &[T], w: usize, point_map: &[PixelCoord]) -> Vec<T> {
    point_map.iter().map(|p| pixel_values[p.v * w + p.u]).collect()
}

/// BFS distances from `start` on the 8-neighbourhood graph; test helper
/// for neighbourhood consistency.
#[doc(hidden)]
pub fn bfs_depths(start: usize, w: usize, h: usize) -> Vec<usize> {
    let mut d = vec![usize::MAX; w * h];
    d[start] = 0;
    let mut q = VecDeque::from([start]);
    while let Some(l) = q.pop_front() {
        for n in neighbours8(l, w, h, true) {
            if d[n] == usize::MAX {
                d[n] = d[l] + 1;
                q.push_back(n);
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(channels: usize, res: f64) -> SensorSpec {
        SensorSpec::new(channels, res, 10.0, 10.0).unwrap()
    }

    #[test]
    fn angle_axis_cases() {
        let (r, t, p) = spherical_angles(&Point::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!((r, t, p), (1.0, 0.0, 0.0));
        let (_, _, p) = spherical_angles(&Point::new(0.0, 1.0, 0.0, 0.0)).unwrap();
        assert!((p - PI / 2.0).abs() < 1e-15);
        let (_, _, p) = spherical_angles(&Point::new(-1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(p, PI);
        let (_, _, p) = spherical_angles(&Point::new(-1.0, -0.0, 0.0, 0.0)).unwrap();
        assert_eq!(p, PI);
        assert!(matches!(spherical_angles(&Point::new(0.0, 0.0, 0.0, 1.0)), Err(Error::ZeroRange)));
    }

    #[test]
    fn azimuth_matches_atan2_oracle() {
        for k in 0..360 {
            let a = (k as f64 + 0.3).to_radians();
            let (x, y) = (a.cos(), a.sin());
            let (_, _, phi) = spherical_angles(&Point::new(x as f32, y as f32, 0.0, 0.0)).unwrap();
            let oracle = (y as f32 as f64).atan2(x as f32 as f64);
            assert!((phi - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn top_of_fov_maps_to_row_zero() {
        let s = SensorSpec::new(64, 0.08, 3.0, 25.0).unwrap();
        let (px, clamped) = image_coords(3.0f64.to_radians(), 0.0, &s);
        assert_eq!(px, PixelCoord { u: 2250, v: 0 });
        assert!(!clamped);
        let (px, clamped) = image_coords(-40f64.to_radians(), 0.0, &s);
        assert_eq!(px.v, 63);
        assert!(clamped);
    }

    fn one_hot(n: usize, c: usize) -> Vec<f32> {
        (0..n).map(|k| if k == c { 1.0 } else { 0.0 }).collect()
    }

    fn frame(points: Vec<Point>, classes: Vec<ClassId>, s: &SensorSpec) -> FrameGrids {
        let m = points.len();
        let n = 3;
        let cloud = PointCloud::new(points).unwrap();
        let probs = ProbMatrix::new(m, n, classes.iter().flat_map(|&c| one_hot(n, c as usize - 1)).collect()).unwrap();
        let labels = LabelVector::new(classes, n).unwrap();
        project(&cloud, &probs, Some(&labels), &labels, s).unwrap()
    }

    #[test]
    fn collisions_keep_nearest() {
        let s = spec(4, 10.0);
        let g = frame(vec![Point::new(1.0, 0.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0, 0.0)], vec![1, 2], &s);
        assert_eq!(g.projected_count(), 2);
        assert_eq!(g.collision_count, 0);

        let g = frame(vec![Point::new(9.0, 0.0, 0.0, 0.9), Point::new(5.0, 0.0, 0.0, 0.5)], vec![1, 2], &s);
        assert_eq!(g.collision_count, 1);
        assert_eq!(g.point_map[0], g.point_map[1]);
        let l = g.index(g.point_map[0]);
        assert_eq!(g.features[4][l], 5.0);
        assert_eq!(g.features[3][l], 0.5);
        assert_eq!(g.pred_labels[l], 2);
        let back = reproject(&g.pred_labels, g.w, &g.point_map);
        assert_eq!(back, vec![2, 2]);

        let g = frame(vec![Point::new(1.0, 1.0, 0.0, 0.0)], vec![3], &s);
        assert_eq!(g.projected_count(), 1);
        assert!(g.mask[g.index(g.point_map[0])]);
    }

    fn mask_grid(w: usize, h: usize, on: &[usize]) -> Vec<bool> {
        let mut m = vec![false; w * h];
        for &l in on {
            m[l] = true;
        }
        m
    }

    fn brute_donor(mask: &[bool], w: usize, _h: usize, l: usize) -> usize {
        let (u, v) = (l % w, l / w);
        let mut best = (usize::MAX, usize::MAX);
        for (d, &m) in mask.iter().enumerate() {
            if !m {
                continue;
            }
            let (du0, dv) = ((d % w).abs_diff(u), (d / w).abs_diff(v));
            let du = du0.min(w - du0);
            let dist = du.max(dv);
            if (dist, d) < best {
                best = (dist, d);
            }
        }
        best.1
    }

    #[test]
    fn fill_examples() {
        assert_eq!(donor_map(&mask_grid(3, 1, &[1]), 3, 1).unwrap(), vec![1, 1, 1]);
        // wraparound: pixel 3 is one step left of pixel 0
        let d = donor_map(&mask_grid(4, 1, &[0]), 4, 1).unwrap();
        assert_eq!(d[3], 0);
        let full = mask_grid(3, 2, &[0, 1, 2, 3, 4, 5]);
        assert_eq!(donor_map(&full, 3, 2).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(matches!(donor_map(&[false; 4], 2, 2), Err(Error::EmptyGrid)));
    }

    #[test]
    fn fill_copies_all_channels_from_one_donor() {
        let s = spec(2, 90.0);
        let g = frame(vec![Point::new(2.0, 0.0, 0.05, 0.3)], vec![2], &s);
        let l0 = g.index(g.point_map[0]);
        let f = fill(g.clone()).unwrap();
        for l in 0..f.len() {
            assert_eq!(f.pred_labels[l], 2);
            assert_eq!(f.pixel_probs(l), &[0.0, 1.0, 0.0]);
            for ch in &f.features {
                assert_eq!(ch[l], ch[l0]);
            }
        }
        assert_eq!(f.mask, g.mask);
    }

    #[test]
    fn chebyshev_is_bfs_depth() {
        let (w, h) = (7, 4);
        let d = bfs_depths(9, w, h);
        for (l, &dl) in d.iter().enumerate() {
            let du0 = (l % w).abs_diff(9 % w);
            let cheb = du0.min(w - du0).max((l / w).abs_diff(9 / w));
            assert_eq!(dl, cheb);
        }
    }

    proptest! {
        #[test]
        fn donor_matches_brute_force(w in 1usize..9, h in 1usize..6, bits in proptest::collection::vec(any::<bool>(), 54)) {
            let mut mask: Vec<bool> = bits[..w * h].to_vec();
            if !mask.iter().any(|&b| b) { mask[0] = true; }
            let d = donor_map(&mask, w, h).unwrap();
            for l in 0..w * h {
                prop_assert_eq!(d[l], brute_donor(&mask, w, h, l));
            }
        }
    }
}
