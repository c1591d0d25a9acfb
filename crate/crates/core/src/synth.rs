//! Deterministic synthetic scenes cast on the sensor's ray grid, plus a mock
//! segmentation network that corrupts ground truth and emits softmax
//! probabilities whose dispersion tracks the injected errors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloud::{ClassId, LabelVector, Point, PointCloud, ProbMatrix, SensorSpec};
use crate::error::{Error, Result};
use crate::projection::{image_coords, spherical_angles};
use crate::segments::{connected_components, Adjacency};

pub const GROUND: ClassId = 1;
pub const VEHICLE: ClassId = 2;
pub const POLE: ClassId = 3;
pub const BUILDING: ClassId = 4;

/// Independent RNG seed for a named stream derived from a root seed.
pub fn substream(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

fn normal<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    Normal::new(0.0, sigma).map_or(0.0, |d| d.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub sensor: SensorSpec,
    /// Sensor height above the ground plane (m).
    pub sensor_height: f64,
    /// Rays travelling further than this return nothing (m).
    pub max_range: f64,
    pub n_classes: usize,
    pub vehicles: usize,
    pub poles: usize,
    pub buildings: usize,
    /// Standard deviation of range noise along the ray (m).
    pub range_noise: f64,
    pub intensity_noise: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sensor: SensorSpec { channels: 16, angular_resolution: 1.0, fov_hor: 360.0, fov_up: 10.0, fov_down: 20.0 },
            sensor_height: 1.8,
            max_range: 60.0,
            n_classes: 5,
            vehicles: 8,
            poles: 10,
            buildings: 3,
            range_noise: 0.02,
            intensity_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// Axis-aligned box given by min/max corners.
    Cuboid { min: [f64; 3], max: [f64; 3] },
    /// Vertical cylinder.
    Cylinder { cx: f64, cy: f64, radius: f64, z0: f64, z1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Object {
    shape: Shape,
    class: ClassId,
}

fn ray_box(dir: [f64; 3], min: [f64; 3], max: [f64; 3]) -> Option<f64> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if dir[k].abs() < 1e-15 {
            if 0.0 < min[k] || 0.0 > max[k] {
                return None;
            }
            continue;
        }
        let (a, b) = (min[k] / dir[k], max[k] / dir[k]);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

fn ray_cylinder(dir: [f64; 3], cx: f64, cy: f64, radius: f64, z0: f64, z1: f64) -> Option<f64> {
    let a = dir[0] * dir[0] + dir[1] * dir[1];
    if a < 1e-15 {
        return None;
    }
    let b = -2.0 * (dir[0] * cx + dir[1] * cy);
    let c = cx * cx + cy * cy - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    let z = t * dir[2];
    (t > 0.0 && z >= z0 && z <= z1).then_some(t)
}

impl Object {
    fn hit(&self, dir: [f64; 3]) -> Option<f64> {
        match self.shape {
            Shape::Cuboid { min, max } => ray_box(dir, min, max),
            Shape::Cylinder { cx, cy, radius, z0, z1 } => ray_cylinder(dir, cx, cy, radius, z0, z1),
        }
    }
}

fn base_intensity(class: ClassId) -> f64 {
    match class {
        GROUND => 0.25,
        VEHICLE => 0.65,
        POLE => 0.45,
        BUILDING => 0.35,
        _ => 0.5,
    }
}

/// Unit ray through the centre of pixel `(u, v)`.
pub fn pixel_ray(u: usize, v: usize, sensor: &SensorSpec) -> [f64; 3] {
    let (w, h) = (sensor.width() as f64, sensor.height() as f64);
    let phi = std::f64::consts::PI * (1.0 - 2.0 * (u as f64 + 0.5) / w);
    let theta = (1.0 - (v as f64 + 0.5) / h) * sensor.fov_ver().to_radians() - sensor.fov_down.to_radians();
    [theta.cos() * phi.cos(), theta.cos() * phi.sin(), theta.sin()]
}

fn place_objects(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Object> {
    let ground_z = -cfg.sensor_height;
    let class_or = |c: ClassId| if (c as usize) <= cfg.n_classes { c } else { VEHICLE };
    let mut objects = Vec::new();
    let polar = |rng: &mut ChaCha8Rng, r0: f64, r1: f64| {
        let r = rng.gen_range(r0..r1);
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        (r * a.cos(), r * a.sin())
    };
    for _ in 0..cfg.buildings {
        let (x, y) = polar(rng, 18.0, 40.0);
        let (lx, ly) = if rng.gen_bool(0.5) { (rng.gen_range(8.0..20.0), 2.0) } else { (2.0, rng.gen_range(8.0..20.0)) };
        let height = rng.gen_range(4.0..10.0);
        objects.push(Object {
            shape: Shape::Cuboid { min: [x - lx / 2.0, y - ly / 2.0, ground_z], max: [x + lx / 2.0, y + ly / 2.0, ground_z + height] },
            class: class_or(BUILDING),
        });
    }
    for _ in 0..cfg.vehicles {
        let (x, y) = polar(rng, 4.0, 30.0);
        let (lx, ly) = if rng.gen_bool(0.5) { (4.2, 1.8) } else { (1.8, 4.2) };
        let height = rng.gen_range(1.3..1.8);
        objects.push(Object {
            shape: Shape::Cuboid { min: [x - lx / 2.0, y - ly / 2.0, ground_z], max: [x + lx / 2.0, y + ly / 2.0, ground_z + height] },
            class: class_or(VEHICLE),
        });
    }
    for _ in 0..cfg.poles {
        let (x, y) = polar(rng, 3.0, 25.0);
        objects.push(Object {
            shape: Shape::Cylinder { cx: x, cy: y, radius: rng.gen_range(0.15..0.4), z0: ground_z, z1: ground_z + rng.gen_range(3.0..6.0) },
            class: class_or(POLE),
        });
    }
    objects
}

/// Casts one ray per pixel of the sensor grid; returns the cloud and its labels.
pub fn generate_scene(cfg: &SceneConfig) -> Result<(PointCloud, LabelVector)> {
    cfg.sensor.validate()?;
    if cfg.n_classes < 2 || !(cfg.max_range > 0.0) || !(cfg.sensor_height > 0.0) {
        return Err(Error::Config("scene needs n >= 2 and positive extents".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let objects = place_objects(cfg, &mut rng);
    let (w, h) = (cfg.sensor.width(), cfg.sensor.height());
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let dir = pixel_ray(u, v, &cfg.sensor);
            let mut best: Option<(f64, ClassId)> = None;
            if dir[2] < 0.0 {
                best = Some((-cfg.sensor_height / dir[2], GROUND));
            }
            for o in &objects {
                if let Some(t) = o.hit(dir) {
                    if best.is_none_or(|(b, _)| t < b) {
                        best = Some((t, o.class));
                    }
                }
            }
            // noise is drawn for every ray so streams do not depend on hits
            let dr = normal(&mut rng, cfg.range_noise);
            let di = normal(&mut rng, cfg.intensity_noise);
            let Some((t, class)) = best else { continue };
            if t > cfg.max_range {
                continue;
            }
            let t = (t + dr).max(0.1);
            let intensity = (base_intensity(class) + di).max(0.0);
            points.push(Point::new((t * dir[0]) as f32, (t * dir[1]) as f32, (t * dir[2]) as f32, intensity as f32));
            labels.push(class);
        }
    }
    if points.is_empty() {
        return Err(Error::Config("scene produced no returns".into()));
    }
    Ok((PointCloud::new(points)?, LabelVector::new(labels, cfg.n_classes)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    pub seed: u64,
    /// Chance that a point on a ground-truth boundary takes its neighbour's class.
    pub erosion: f64,
    /// Chance that a small non-ground component is relabelled as a whole.
    pub segment_flip: f64,
    /// Components with at most this many points are flip candidates.
    pub small_segment_points: usize,
    pub temperature: f64,
    pub label_noise: f64,
    /// Temperature multiplier around corrupted points.
    pub hot_factor: f64,
    /// Fraction of flipped segments left confident (no extra dispersion).
    pub confident_fraction: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            erosion: 0.15,
            segment_flip: 0.35,
            small_segment_points: 80,
            temperature: 1.0,
            label_noise: 0.002,
            hot_factor: 3.0,
            confident_fraction: 0.3,
        }
    }
}

impl CorruptionConfig {
    /// No corruption at all; with a tiny temperature the output is one-hot.
    pub fn clean(seed: u64, temperature: f64) -> Self {
        Self {
            seed,
            erosion: 0.0,
            segment_flip: 0.0,
            label_noise: 0.0,
            temperature,
            hot_factor: 1.0,
            confident_fraction: 0.0,
            small_segment_points: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !(unit(self.erosion) && unit(self.segment_flip) && unit(self.label_noise) && unit(self.confident_fraction)) {
            return Err(Error::Config("corruption probabilities must lie in [0, 1]".into()));
        }
        if !(self.temperature > 0.0) || !(self.hot_factor > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Damage {
    Clean,
    Eroded,
    Flipped { confident: bool },
}

/// Corrupts `gt` into a plausible prediction and returns its softmax output.
pub fn mock_inference(
    gt: &LabelVector,
    n: usize,
    cloud: &PointCloud,
    sensor: &SensorSpec,
    cfg: &CorruptionConfig,
) -> Result<ProbMatrix> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    let m = cloud.len();
    if gt.len() != m {
        return Err(Error::CountMismatch { expected: m, found: gt.len() });
    }
    if let Some(&class) = gt.labels().iter().find(|&&c| c as usize > n) {
        return Err(Error::ClassOutOfRange { class, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (sensor.width(), sensor.height());

    let mut pixel_of = Vec::with_capacity(m);
    let mut point_at = vec![usize::MAX; w * h];
    for (j, p) in cloud.points().iter().enumerate() {
        let (_, theta, phi) = spherical_angles(p)?;
        let (px, _) = image_coords(theta, phi, sensor);
        let l = px.v * w + px.u;
        pixel_of.push(l);
        if point_at[l] == usize::MAX {
            point_at[l] = j;
        }
    }
    let neighbours = |l: usize| crate::grid::neighbours8(l, w, h, true).map(|q| point_at[q]).filter(|&j| j != usize::MAX);

    let gt_l = gt.labels();
    let mut pred = gt_l.to_vec();
    let mut damage = vec![Damage::Clean; m];

    // whole-segment flips on the sparse grid (0 marks pixels without a return)
    let mut sparse = vec![0 as ClassId; w * h];
    for (j, &l) in pixel_of.iter().enumerate() {
        sparse[l] = gt_l[j];
    }
    let comps = connected_components(&sparse, w, h, Adjacency::default());
    for (id, px) in comps.pixels.iter().enumerate() {
        let class = comps.classes[id];
        if class == 0 || class == GROUND || px.len() > cfg.small_segment_points {
            continue;
        }
        if !rng.gen_bool(cfg.segment_flip) {
            continue;
        }
        let choices: Vec<ClassId> = (2..=n as ClassId).filter(|&c| c != class).collect();
        let Some(&new) = choices.choose(&mut rng) else { continue };
        let confident = rng.gen_bool(cfg.confident_fraction);
        for &l in px {
            let j = point_at[l];
            pred[j] = new;
            damage[j] = Damage::Flipped { confident };
        }
    }

    for j in 0..m {
        if damage[j] != Damage::Clean {
            continue;
        }
        let other = neighbours(pixel_of[j]).map(|q| gt_l[q]).find(|&c| c != gt_l[j]);
        if let Some(c) = other {
            if rng.gen_bool(cfg.erosion) {
                pred[j] = c;
                damage[j] = Damage::Eroded;
            }
        }
    }
    for j in 0..m {
        if damage[j] == Damage::Clean && rng.gen_bool(cfg.label_noise) {
            pred[j] = rng.gen_range(1..=n as ClassId);
            if pred[j] != gt_l[j] {
                damage[j] = Damage::Eroded;
            }
        }
    }

    // points at or next to a loud error run hot
    let loud = |d: Damage| matches!(d, Damage::Eroded | Damage::Flipped { confident: false });
    let mut values = Vec::with_capacity(m * n);
    for j in 0..m {
        let hot = loud(damage[j]) || neighbours(pixel_of[j]).any(|q| loud(damage[q]));
        let range = cloud.points()[j].range();
        let mut t = cfg.temperature;
        if hot {
            t *= cfg.hot_factor;
        }
        // far returns are intrinsically harder
        t *= 1.0 + (range / 40.0).powi(2);
        let mut z: Vec<f64> = (0..n).map(|_| normal(&mut rng, 0.3)).collect();
        z[pred[j] as usize - 1] += 4.0;
        let k = pred[j] as usize - 1;
        if loud(damage[j]) {
            z[gt_l[j] as usize - 1] += 3.0;
        }
        // the corrupted labelling is the prediction: keep it the argmax
        let rival = z.iter().enumerate().filter(|&(c, _)| c != k).map(|(_, &v)| v).fold(f64::NEG_INFINITY, f64::max);
        z[k] = z[k].max(rival + 0.25);
        let zmax = z.iter().map(|v| v / t).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v / t - zmax).exp()).collect();
        let s: f64 = e.iter().sum();
        values.extend(e.iter().map(|v| (v / s) as f32));
    }
    ProbMatrix::new(m, n, values)
}

/// One generated frame: cloud, ground truth and mock network output.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub cloud: PointCloud,
    pub gt: LabelVector,
    pub probs: ProbMatrix,
}

/// Frame `index` of a corpus rooted at `seed`; scene and corruption seeds in
/// the configs are replaced by per-frame substreams.
pub fn synth_frame(seed: u64, index: u32, scene: &SceneConfig, corruption: &CorruptionConfig) -> Result<SynthFrame> {
    let scene = SceneConfig { seed: substream(seed, &format!("scene/{index}")), ..*scene };
    let corruption = CorruptionConfig { seed: substream(seed, &format!("corruption/{index}")), ..*corruption };
    let (cloud, gt) = generate_scene(&scene)?;
    let probs = mock_inference(&gt, scene.n_classes, &cloud, &scene.sensor, &corruption)?;
    Ok(SynthFrame { cloud, gt, probs })
}

/// Frames are split into `groups` contiguous runs, like drive sequences.
pub fn group_of(index: u32, frames: u32, groups: u32) -> u32 {
    (index as u64 * groups as u64 / frames.max(1) as u64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::argmax_prediction;

    #[test]
    fn scenes_are_deterministic() {
        let cfg = SceneConfig { seed: 9, ..Default::default() };
        let (a, la) = generate_scene(&cfg).unwrap();
        let (b, lb) = generate_scene(&cfg).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(la, lb);
        let (c, _) = generate_scene(&SceneConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn returns_are_nearest_hits() {
        let cfg = SceneConfig { seed: 4, range_noise: 0.0, ..Default::default() };
        let (cloud, labels) = generate_scene(&cfg).unwrap();
        for (p, &c) in cloud.points().iter().zip(labels.labels()) {
            if c == GROUND {
                assert!((p.z as f64 + cfg.sensor_height).abs() < 1e-3);
            } else {
                // an object hit lies in front of where the ray would meet the ground
                let r = p.range();
                let dz = p.z as f64 / r;
                assert!(dz >= 0.0 || r <= -cfg.sensor_height / dz + 1e-3);
            }
        }
        let classes: std::collections::BTreeSet<_> = labels.labels().iter().collect();
        assert!(classes.len() >= 3);
    }

    #[test]
    fn clean_cold_inference_is_one_hot_truth() {
        let cfg = SceneConfig { seed: 2, ..Default::default() };
        let (cloud, gt) = generate_scene(&cfg).unwrap();
        let probs = mock_inference(&gt, cfg.n_classes, &cloud, &cfg.sensor, &CorruptionConfig::clean(1, 1e-3)).unwrap();
        assert_eq!(argmax_prediction(&probs).labels(), gt.labels());
        assert!(probs.values().iter().all(|&p| p == 0.0 || p == 1.0));
    }

    #[test]
    fn corruption_changes_predictions() {
        let f = synth_frame(3, 0, &SceneConfig::default(), &CorruptionConfig::default()).unwrap();
        let pred = argmax_prediction(&f.probs);
        let wrong = pred.labels().iter().zip(f.gt.labels()).filter(|(a, b)| a != b).count();
        assert!(wrong > 0 && wrong < f.gt.len() / 4, "{wrong} of {}", f.gt.len());
    }

    #[test]
    fn ground_only_scene_projects_injectively() {
        let cfg = SceneConfig { seed: 1, vehicles: 0, poles: 0, buildings: 0, ..Default::default() };
        let (cloud, gt) = generate_scene(&cfg).unwrap();
        assert!(gt.labels().iter().all(|&c| c == GROUND));
        let probs = mock_inference(&gt, cfg.n_classes, &cloud, &cfg.sensor, &CorruptionConfig::clean(0, 1.0)).unwrap();
        let grids = crate::projection::project(&cloud, &probs, Some(&gt), &gt, &cfg.sensor).unwrap();
        assert_eq!(grids.projected_count(), cloud.len());
    }

    #[test]
    fn box_occludes_ground_on_cast_rays() {
        // a wall across the +x axis, checked against the analytic plane hit
        let sensor = SceneConfig::default().sensor;
        let wall = Object { shape: Shape::Cuboid { min: [8.0, -3.0, -1.8], max: [9.0, 3.0, 2.0] }, class: BUILDING };
        let mut hits = 0;
        for v in 0..sensor.height() {
            let dir = pixel_ray(sensor.width() / 2, v, &sensor);
            let t = 8.0 / dir[0];
            let z = t * dir[2];
            match wall.hit(dir) {
                Some(t_box) => {
                    hits += 1;
                    assert!((t_box - t).abs() < 1e-9);
                    assert!((-1.8..=2.0).contains(&z));
                    if dir[2] < 0.0 {
                        // the ground point behind the wall is further away
                        assert!(t_box < -1.8 / dir[2]);
                    }
                }
                None => assert!(!(-1.8..=2.0).contains(&z)),
            }
        }
        assert!(hits > 0);
        assert!(wall.hit(pixel_ray(0, 8, &sensor)).is_none());
    }

    fn fp_segments(scene: &SceneConfig, corruption: &CorruptionConfig) -> (usize, usize) {
        let (cloud, gt) = generate_scene(scene).unwrap();
        let probs = mock_inference(&gt, scene.n_classes, &cloud, &scene.sensor, corruption).unwrap();
        let a = crate::pipeline::analyze_frame(&cloud, &probs, Some(&gt), &scene.sensor, Adjacency::default(), &[]).unwrap();
        let m = a.matches.unwrap();
        let non_ground: Vec<_> = a.segments.iter().zip(&m).filter(|(s, _)| s.class != GROUND).collect();
        (non_ground.iter().filter(|(_, m)| m.is_false_positive()).count(), non_ground.len())
    }

    #[test]
    fn flipping_isolated_objects_makes_them_false_positives() {
        // poles only: every flip lands on a class absent from the scene
        let scene = SceneConfig { seed: 5, vehicles: 0, buildings: 0, poles: 12, ..Default::default() };
        let corruption = CorruptionConfig {
            segment_flip: 1.0,
            small_segment_points: usize::MAX,
            ..CorruptionConfig::clean(3, 1e-3)
        };
        let (fp, total) = fp_segments(&scene, &corruption);
        assert!(total > 0);
        assert_eq!(fp, total);
    }

    #[test]
    fn fp_rate_grows_with_flip_probability() {
        let rate = |p: f64| {
            let (mut fp, mut total) = (0, 0);
            for seed in 0..6 {
                let scene = SceneConfig { seed, ..Default::default() };
                let (f, t) = fp_segments(&scene, &CorruptionConfig { seed, segment_flip: p, ..Default::default() });
                fp += f;
                total += t;
            }
            fp as f64 / total as f64
        };
        let rates: Vec<f64> = [0.0, 0.3, 0.7, 1.0].into_iter().map(rate).collect();
        for w in rates.windows(2) {
            assert!(w[1] >= w[0], "{rates:?}");
        }
    }

    #[test]
    fn groups_are_contiguous() {
        let g: Vec<u32> = (0..20).map(|i| group_of(i, 20, 10)).collect();
        assert_eq!(g, (0..10).flat_map(|k| [k, k]).collect::<Vec<_>>());
    }
}
