//! Connected components of label grids, interior/boundary decomposition and
//! the segmentwise IoU / adjusted IoU against ground truth.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cloud::ClassId;
use crate::grid::{full_window, neighbours8};

/// Adjacency used for components and interiors: always the 8-neighbourhood,
/// optionally wrapping across the left/right image border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    pub wrap: bool,
}

impl Default for Adjacency {
    fn default() -> Self {
        Self { wrap: true }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Partition of a label grid into components. Ids follow the scan order of
/// each component's first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub w: usize,
    pub h: usize,
    /// Component id per pixel.
    pub ids: Vec<u32>,
    /// Class per component id.
    pub classes: Vec<ClassId>,
    /// Sorted pixel lists per component id.
    pub pixels: Vec<Vec<usize>>,
    pub adjacency: Adjacency,
}

impl Components {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Builds a partition from explicit per-pixel ids (ids must be dense).
    pub fn from_ids(w: usize, h: usize, ids: Vec<u32>, classes: Vec<ClassId>, adjacency: Adjacency) -> Self {
        let mut pixels = vec![Vec::new(); classes.len()];
        for (l, &id) in ids.iter().enumerate() {
            pixels[id as usize].push(l);
        }
        Self { w, h, ids, classes, pixels, adjacency }
    }
}

pub fn connected_components(labels: &[ClassId], w: usize, h: usize, adjacency: Adjacency) -> Components {
    assert_eq!(labels.len(), w * h, "label grid size");
    let mut ds = DisjointSet::new(w * h);
    for l in 0..w * h {
        for q in neighbours8(l, w, h, adjacency.wrap) {
            if q > l && labels[q] == labels[l] {
                ds.union(l as u32, q as u32);
            }
        }
    }
    // roots are the smallest pixel of each set, so first sight = scan order
    let mut root_id = vec![u32::MAX; w * h];
    let mut ids = Vec::with_capacity(w * h);
    let mut classes = Vec::new();
    for l in 0..w * h {
        let r = ds.find(l as u32) as usize;
        if root_id[r] == u32::MAX {
            root_id[r] = classes.len() as u32;
            classes.push(labels[l]);
        }
        ids.push(root_id[r]);
    }
    Components::from_ids(w, h, ids, classes, adjacency)
}

/// One predicted segment with its interior, boundary and outer neighbourhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u32,
    pub class: ClassId,
    pub pixels: Vec<usize>,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub neighbours: Vec<usize>,
    /// Number of pixels holding a projected point.
    pub sp: usize,
}

impl Segment {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }

    pub fn size_in(&self) -> usize {
        self.interior.len()
    }

    pub fn size_bd(&self) -> usize {
        self.boundary.len()
    }

    /// `(u_min, v_min, u_max, v_max)` in pixel coordinates, ignoring wraparound.
    pub fn bbox(&self, w: usize) -> (usize, usize, usize, usize) {
        let mut b = (usize::MAX, usize::MAX, 0, 0);
        for &l in &self.pixels {
            let (u, v) = (l % w, l / w);
            b = (b.0.min(u), b.1.min(v), b.2.max(u), b.3.max(v));
        }
        b
    }
}

/// Interior pixels have their whole 8-neighbourhood inside the segment
/// (top and bottom image rows never qualify).
pub fn decompose(comps: &Components, id: u32, mask: &[bool]) -> Segment {
    let (w, h, wrap) = (comps.w, comps.h, comps.adjacency.wrap);
    let pixels = comps.pixels[id as usize].clone();
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut outside: Vec<usize> = Vec::new();
    for &l in &pixels {
        let mut all_in = full_window(l, w, h, wrap);
        for q in neighbours8(l, w, h, wrap) {
            if comps.ids[q] != id {
                all_in = false;
                outside.push(q);
            }
        }
        if all_in {
            interior.push(l);
        } else {
            boundary.push(l);
        }
    }
    outside.sort_unstable();
    outside.dedup();
    let sp = pixels.iter().filter(|&&l| mask[l]).count();
    Segment { id, class: comps.classes[id as usize], pixels, interior, boundary, neighbours: outside, sp }
}

/// Decomposes every component; order follows component ids.
pub fn decompose_all(comps: &Components, mask: &[bool]) -> Vec<Segment> {
    crate::par::map_range(comps.len(), |id| decompose(comps, id as u32, mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMatch {
    /// Same-class ground-truth components intersecting the segment (K').
    pub gt_components: Vec<u32>,
    /// Same-class predicted components intersecting K' (Q); includes the segment.
    pub pred_components: Vec<u32>,
    pub iou: f64,
    pub iou_adj: f64,
}

impl GroundTruthMatch {
    pub fn is_false_positive(&self) -> bool {
        self.iou_adj == 0.0
    }
}

#[derive(Default, Clone, Copy)]
struct Overlap {
    masked: usize,
}

/// IoU and adjusted IoU for every predicted component. All counts are
/// restricted to projected pixels; a zero denominator yields 0.
pub fn match_all(pred: &Components, gt: &Components, mask: &[bool]) -> Vec<GroundTruthMatch> {
    assert_eq!(pred.ids.len(), gt.ids.len(), "grid size");
    let mut overlap: HashMap<(u32, u32), Overlap> = HashMap::new();
    for (l, (&p, &g)) in pred.ids.iter().zip(&gt.ids).enumerate() {
        if pred.classes[p as usize] != gt.classes[g as usize] {
            continue;
        }
        overlap.entry((p, g)).or_default().masked += mask[l] as usize;
    }
    let mut pred_to_gt: Vec<Vec<(u32, usize)>> = vec![Vec::new(); pred.len()];
    let mut gt_to_pred: Vec<Vec<(u32, usize)>> = vec![Vec::new(); gt.len()];
    let mut pairs: Vec<_> = overlap.into_iter().collect();
    pairs.sort_unstable_by_key(|(k, _)| *k);
    for ((p, g), o) in pairs {
        pred_to_gt[p as usize].push((g, o.masked));
        gt_to_pred[g as usize].push((p, o.masked));
    }
    let masked_size = |pixels: &Vec<usize>| pixels.iter().filter(|&&l| mask[l]).count();
    let pred_sp: Vec<usize> = pred.pixels.iter().map(masked_size).collect();
    let gt_sp: Vec<usize> = gt.pixels.iter().map(masked_size).collect();

    (0..pred.len())
        .map(|k| {
            let k_prime: Vec<u32> = pred_to_gt[k].iter().map(|&(g, _)| g).collect();
            let inter: usize = pred_to_gt[k].iter().map(|&(_, m)| m).sum();
            let k_prime_sp: usize = k_prime.iter().map(|&g| gt_sp[g as usize]).sum();
            let mut q: Vec<u32> =
                k_prime.iter().flat_map(|&g| gt_to_pred[g as usize].iter().map(|&(p, _)| p)).collect();
            q.sort_unstable();
            q.dedup();
            // |K' ∩ Q|_δ; predicted components are disjoint so overlaps add up
            let covered: usize =
                k_prime.iter().flat_map(|&g| gt_to_pred[g as usize].iter().map(|&(_, m)| m)).sum();
            let union = pred_sp[k] + k_prime_sp - inter;
            // k ⊆ Q whenever K' is non-empty, so k and K' \ Q are disjoint
            let union_adj = pred_sp[k] + (k_prime_sp - covered);
            GroundTruthMatch {
                gt_components: k_prime,
                pred_components: q,
                iou: ratio(inter, union),
                iou_adj: ratio(inter, union_adj),
            }
        })
        .collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Match for a single predicted component.
pub fn match_segment(id: u32, pred: &Components, gt: &Components, mask: &[bool]) -> GroundTruthMatch {
    match_all(pred, gt, mask).swap_remove(id as usize)
}
