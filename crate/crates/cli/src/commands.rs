use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use segquality::analysis::{calibration, greedy_select, ConfidenceMode, SelectionConfig};
use segquality::cloud::{ClassMap, LabelVector, PointCloud, ProbMatrix};
use segquality::dataset::{build_dataset, schema_hash, FrameRows, MetaDataset};
use segquality::dispersion::Auxiliary;
use segquality::io;
use segquality::meta::cv::{score_set, REPORT_SCHEMA_VERSION};
use segquality::meta::{cross_validate, targets, train_on, MetaModel, ModelKind, Task};
use segquality::pipeline::{analyze_frame, columns_for, FrameAnalysis};
use segquality::projection::reproject;
use segquality::segments::Adjacency;
use segquality::synth::{group_of, synth_frame, BUILDING, GROUND, POLE, VEHICLE};
use segquality::{export, par};
use serde::Serialize;

use crate::config::RunConfig;
use crate::corpus::{self, ClassesInfo, Corpus, DatasetInfo, Entry};

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn csv_sibling(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

// ---- synth ----

/// Raw label ids in the style of a KITTI label file.
fn synth_class_map(n: usize) -> ClassMap {
    let named = [(40, GROUND), (10, VEHICLE), (80, POLE), (50, BUILDING)];
    let mut map: BTreeMap<u32, u16> = named.into_iter().filter(|&(_, c)| (c as usize) <= n).collect();
    for c in 5..=n as u16 {
        map.insert(100 + c as u32, c);
    }
    ClassMap::new(map, n).expect("synthetic class map is valid")
}

fn synth_class_names(n: usize) -> Vec<String> {
    let named = ["ground", "vehicle", "pole", "building"];
    (1..=n).map(|c| named.get(c - 1).map_or(format!("other-{c}"), |s| s.to_string())).collect()
}

pub fn synth(cfg: &RunConfig, out: &Path, frames: u32, groups: u32) -> Result<()> {
    if frames == 0 {
        bail!("--frames must be at least 1");
    }
    if groups == 0 || groups > frames {
        bail!("--groups must be in 1..={frames}");
    }
    let mut scene = cfg.synth.scene;
    if let Some(s) = cfg.sensor {
        scene.sensor = s;
    }
    let n = scene.n_classes;
    let map = synth_class_map(n);
    let generated = par::map_range(frames as usize, |i| synth_frame(cfg.seed, i as u32, &scene, &cfg.synth.corruption));
    let mut entries = Vec::with_capacity(frames as usize);
    let mut points = 0;
    for (i, f) in generated.into_iter().enumerate() {
        let f = f?;
        let stem = format!("{i:06}");
        fs::create_dir_all(out.join("frames")).with_context(|| format!("creating {}", out.display()))?;
        io::write_pointcloud(corpus::frame_path(out, &stem, "bin"), &f.cloud)?;
        io::write_labels(corpus::frame_path(out, &stem, "label"), &f.gt, &map)?;
        io::write_probabilities(corpus::frame_path(out, &stem, "prob"), &f.probs)?;
        points += f.cloud.len();
        entries.push(Entry { frame: i as u32, group: group_of(i as u32, frames, groups), stem });
    }
    let info = DatasetInfo { sensor: scene.sensor, classes: ClassesInfo::from_map(&map, synth_class_names(n)) };
    write_file(&corpus::info_path(out), toml::to_string(&info)?)?;
    write_file(&corpus::manifest_path(out), corpus::manifest_csv(&entries))?;
    info!("wrote {frames} frames ({points} points) in {groups} groups to {}", out.display());
    Ok(())
}

// ---- shared frame processing ----

struct FrameInput {
    cloud: PointCloud,
    probs: ProbMatrix,
    gt: Option<LabelVector>,
    aux: Vec<Auxiliary>,
}

fn load_frame(corpus: &Corpus, map: &ClassMap, e: &Entry, with_labels: bool, aux: &[String]) -> Result<FrameInput> {
    let n = corpus.info.classes.n;
    let cloud = io::load_pointcloud(corpus.path(&e.stem, "bin"))?;
    let prob_path = corpus.path(&e.stem, "prob");
    let (m, pn) = io::read_prob_header(&prob_path)?;
    if m != cloud.len() {
        bail!("frame {}: {} points but {} probability rows", e.stem, cloud.len(), m);
    }
    if pn != n {
        bail!("frame {}: {} probability columns, dataset has {} classes", e.stem, pn, n);
    }
    let probs = io::load_probabilities(&prob_path, m, n)?;
    let gt = if with_labels { Some(io::load_labels(corpus.path(&e.stem, "label"), m, map)?) } else { None };
    let size = corpus.info.sensor.width() * corpus.info.sensor.height();
    let aux = aux
        .iter()
        .map(|name| -> Result<Auxiliary> {
            let values = io::load_point_values(corpus.path(&e.stem, &format!("{name}.aux")))?;
            if values.len() != size {
                bail!("frame {}: auxiliary {name} has {} values, image has {size} pixels", e.stem, values.len());
            }
            Ok(Auxiliary { name: name.clone(), values: values.into_iter().map(f64::from).collect() })
        })
        .collect::<Result<_>>()?;
    Ok(FrameInput { cloud, probs, gt, aux })
}

fn analyze(corpus: &Corpus, input: &FrameInput, wrap: bool) -> Result<FrameAnalysis> {
    Ok(analyze_frame(&input.cloud, &input.probs, input.gt.as_ref(), &corpus.info.sensor, Adjacency { wrap }, &input.aux)?)
}

// ---- metrics ----

pub struct MetricsArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub segments: Option<PathBuf>,
    pub dump: Option<PathBuf>,
    pub no_labels: bool,
    pub aux: Vec<String>,
}

struct FrameOutput {
    rows: FrameRows,
    segment_lines: String,
    collisions: usize,
    overshoots: usize,
}

fn segment_lines(frame: u32, a: &FrameAnalysis, sp_min: usize) -> String {
    let mut s = String::new();
    for (i, seg) in a.segments.iter().enumerate() {
        let (u0, v0, u1, v1) = seg.bbox(a.grids.w);
        let (iou, iou_adj) = match &a.matches {
            Some(m) => (m[i].iou.to_string(), m[i].iou_adj.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            s,
            "{frame},{},{},{},{},{},{},{},{iou},{iou_adj},{u0},{v0},{u1},{v1},{}",
            seg.id,
            seg.class,
            seg.size(),
            seg.size_in(),
            seg.size_bd(),
            seg.sp,
            seg.neighbours.len(),
            (seg.sp >= sp_min) as u8
        )
        .unwrap();
    }
    s
}

const SEGMENTS_HEADER: &str =
    "frame,segment,class,size,size_in,size_bd,sp,neighbours,iou,iou_adj,u_min,v_min,u_max,v_max,retained\n";

fn dump_frame(dir: &Path, stem: &str, a: &FrameAnalysis) -> Result<()> {
    let (w, h) = (a.grids.w, a.grids.h);
    for hm in &a.heatmaps {
        export::write_pgm(&dir.join(format!("{stem}_{}.pgm", hm.name)), &hm.values, w, h)?;
        export::write_csv(&dir.join(format!("{stem}_{}.csv", hm.name)), &hm.values, w, h)?;
    }
    let pred: Vec<f64> = a.grids.pred_labels.iter().map(|&c| c as f64).collect();
    export::write_csv(&dir.join(format!("{stem}_pred.csv")), &pred, w, h)?;
    let mask: Vec<f64> = a.grids.mask.iter().map(|&b| b as u8 as f64).collect();
    export::write_pgm(&dir.join(format!("{stem}_mask.pgm")), &mask, w, h)?;
    Ok(())
}

pub fn metrics(cfg: &RunConfig, args: &MetricsArgs) -> Result<()> {
    let corpus = Corpus::open(&args.data, cfg.sensor)?;
    let map = corpus.info.classes.class_map()?;
    let with_labels = if args.no_labels {
        false
    } else {
        let present = corpus.entries.iter().filter(|e| corpus.path(&e.stem, "label").exists()).count();
        match present {
            0 => {
                warn!("no label files found; building a dataset without targets");
                false
            }
            k if k == corpus.entries.len() => true,
            k => bail!("{k} of {} frames have label files; pass --no-labels to ignore them", corpus.entries.len()),
        }
    };
    if let Some(d) = &args.dump {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let outputs = par::map_slice(&corpus.entries, |e| -> Result<FrameOutput> {
        let input = load_frame(&corpus, &map, e, with_labels, &args.aux).with_context(|| format!("frame {}", e.stem))?;
        let a = analyze(&corpus, &input, cfg.wrap).with_context(|| format!("frame {}", e.stem))?;
        if let Some(d) = &args.dump {
            dump_frame(d, &e.stem, &a)?;
        }
        Ok(FrameOutput {
            segment_lines: segment_lines(e.frame, &a, cfg.sp_min),
            collisions: a.grids.collision_count,
            overshoots: a.grids.overshoot_count,
            rows: a.into_rows(e.frame),
        })
    });
    let mut rows = Vec::with_capacity(outputs.len());
    let mut seg_csv = String::from(SEGMENTS_HEADER);
    let (mut collisions, mut overshoots) = (0, 0);
    for o in outputs {
        let o = o?;
        seg_csv.push_str(&o.segment_lines);
        collisions += o.collisions;
        overshoots += o.overshoots;
        rows.push(o.rows);
    }
    let groups: BTreeMap<u32, u32> = corpus.entries.iter().map(|e| (e.frame, e.group)).collect();
    let columns = columns_for(corpus.info.classes.n, &args.aux);
    let (ds, stats) = build_dataset(columns, &rows, cfg.sp_min, &groups)?;
    ds.write(&args.out)?;
    ds.write_csv(csv_sibling(&args.out))?;
    if let Some(p) = &args.segments {
        write_file(p, seg_csv)?;
    }
    info!(
        "{} of {} segments retained (SP >= {}), {:.2}% of points; {collisions} collisions, {overshoots} points clamped",
        stats.segments_retained,
        stats.segments_total,
        cfg.sp_min,
        100.0 * stats.retained_point_fraction()
    );
    info!("dataset: {} rows × {} metrics -> {}", ds.len(), ds.n_cols(), args.out.display());
    Ok(())
}

// ---- train / eval ----

pub fn train(cfg: &RunConfig, dataset: &Path, out: &Path, loss: Option<&Path>) -> Result<()> {
    let ds = MetaDataset::read(dataset)?;
    let y = targets(&ds, cfg.task)?;
    let (model, history) = train_on(&ds, &y, cfg.task, cfg.kind, &cfg.hyper())?;
    model.write(out)?;
    if let Some(p) = loss {
        let mut s = String::from("round,loss\n");
        for (i, l) in history.iter().enumerate() {
            writeln!(s, "{i},{l}").unwrap();
        }
        write_file(p, s)?;
    }
    match history.last() {
        Some(l) => info!("trained {:?} {:?} model on {} rows, final loss {l:.6}", cfg.kind, cfg.task, ds.len()),
        None => info!("trained {:?} {:?} model on {} rows", cfg.kind, cfg.task, ds.len()),
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelEvaluation {
    schema_version: u32,
    task: Task,
    kind: ModelKind,
    samples: usize,
    scores: Vec<NamedScore>,
}

#[derive(Serialize)]
struct NamedScore {
    metric: String,
    value: f64,
}

pub fn eval(cfg: &RunConfig, dataset: &Path, model: Option<&Path>, out: &Path, oof: Option<&Path>) -> Result<()> {
    let ds = MetaDataset::read(dataset)?;
    let json = match model {
        Some(path) => {
            let model = MetaModel::read(path)?;
            let pred = model.predict(&ds)?;
            let y = targets(&ds, model.task)?;
            let scores = score_set(model.task, &pred, &y)?;
            for (m, v) in &scores {
                info!("{m}: {v:.4}");
            }
            let report = ModelEvaluation {
                schema_version: REPORT_SCHEMA_VERSION,
                task: model.task,
                kind: model.kind(),
                samples: ds.len(),
                scores: scores.into_iter().map(|(metric, value)| NamedScore { metric, value }).collect(),
            };
            serde_json::to_string_pretty(&report)?
        }
        None => {
            let cv = cross_validate(&ds, cfg.task, cfg.kind, &cfg.hyper(), cfg.folds)?;
            for row in &cv.report.rows {
                let fmt = |s: &Option<segquality::meta::MetricStat>| {
                    s.as_ref().map_or("n/a".to_string(), |s| format!("{:.4} ± {:.4}", s.mean, s.std))
                };
                info!("{:<20} train {:<18} validation {}", row.metric, fmt(&row.train), fmt(&row.validation));
            }
            if let Some(p) = oof {
                let y = targets(&ds, cfg.task)?;
                let mut s = String::from("frame,segment,target,prediction\n");
                for (i, k) in ds.keys.iter().enumerate() {
                    writeln!(s, "{},{},{},{}", k.frame, k.segment, y[i], cv.oof[i]).unwrap();
                }
                write_file(p, s)?;
            }
            serde_json::to_string_pretty(&cv.report)?
        }
    };
    write_file(out, json + "\n")
}

// ---- select ----

pub fn select(cfg: &RunConfig, dataset: &Path, max_metrics: usize, on_training: bool, out: &Path) -> Result<()> {
    let ds = MetaDataset::read(dataset)?;
    let sc = SelectionConfig {
        task: cfg.task,
        kind: cfg.kind,
        hyper: cfg.hyper(),
        folds: cfg.folds,
        max_metrics: max_metrics.min(ds.n_cols()),
        on_training,
    };
    let trace = greedy_select(&ds, &sc)?;
    for st in &trace.steps {
        info!("step {:>3}: + {:<16} {} {:.4}", st.step, st.added, trace.objective, st.objective);
    }
    write_file(out, trace.to_csv())
}

// ---- calibrate ----

pub enum ScoreSource<'a> {
    Model(&'a Path),
    Scores(&'a Path),
    CrossValidation,
}

fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?.split(',').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| anyhow!("{} lacks a `{name}` column", path.display()));
    let (pi, li) = (col("probability")?, col("label")?);
    let (mut p, mut y) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |k: usize| -> Result<f64> {
            f.get(k).ok_or_else(|| anyhow!("line {}: too few fields", i + 2))?.parse().with_context(|| format!("line {}", i + 2))
        };
        p.push(get(pi)?);
        y.push(get(li)?);
    }
    Ok((p, y))
}

pub fn calibrate(cfg: &RunConfig, dataset: Option<&Path>, source: ScoreSource, raw: bool, out: &Path) -> Result<()> {
    let load = || -> Result<MetaDataset> {
        Ok(MetaDataset::read(dataset.ok_or_else(|| anyhow!("--dataset is required unless --scores is given"))?)?)
    };
    let (p, y) = match source {
        ScoreSource::Scores(path) => read_scores(path)?,
        ScoreSource::Model(path) => {
            let ds = load()?;
            let model = MetaModel::read(path)?;
            if model.task != Task::Classify {
                bail!("calibration needs a classification model");
            }
            (model.predict(&ds)?, ds.fp_labels()?)
        }
        ScoreSource::CrossValidation => {
            let ds = load()?;
            let cv = cross_validate(&ds, Task::Classify, cfg.kind, &cfg.hyper(), cfg.folds)?;
            (cv.oof, ds.fp_labels()?)
        }
    };
    let mode = if raw { ConfidenceMode::RawProbability } else { ConfidenceMode::PredictedClass };
    let report = calibration(&p, &y, mode)?;
    info!("{} samples: MCE {:.4}, ECE {:.4}", report.samples, report.mce, report.ece);
    write_file(out, report.to_json() + "\n")
}

// ---- infer ----

pub struct InferArgs {
    pub data: PathBuf,
    pub classifier: Option<PathBuf>,
    pub regressor: Option<PathBuf>,
    pub out: PathBuf,
    pub aux: Vec<String>,
}

/// Value written for points of excluded segments.
pub const EXCLUDED: f32 = -1.0;

fn check_model(model: &MetaModel, columns: &[String], task: Task, flag: &str) -> Result<()> {
    if model.task != task {
        bail!("{flag} expects a {task:?} model, got {:?}", model.task);
    }
    let hash = schema_hash(columns);
    if model.schema_hash != hash || model.n_features != columns.len() {
        return Err(segquality::Error::SchemaMismatch { model: model.schema_hash, data: hash }.into());
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn infer(cfg: &RunConfig, args: &InferArgs) -> Result<()> {
    if args.classifier.is_none() && args.regressor.is_none() {
        bail!("pass --classifier and/or --regressor");
    }
    let corpus = Corpus::open(&args.data, cfg.sensor)?;
    let map = corpus.info.classes.class_map()?;
    let columns = columns_for(corpus.info.classes.n, &args.aux);
    let classifier = args.classifier.as_deref().map(MetaModel::read).transpose()?;
    let regressor = args.regressor.as_deref().map(MetaModel::read).transpose()?;
    if let Some(m) = &classifier {
        check_model(m, &columns, Task::Classify, "--classifier")?;
    }
    if let Some(m) = &regressor {
        check_model(m, &columns, Task::Regress, "--regressor")?;
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let results = par::map_slice(&corpus.entries, |e| -> Result<(usize, usize)> {
        // labels are never read here
        let input = load_frame(&corpus, &map, e, false, &args.aux).with_context(|| format!("frame {}", e.stem))?;
        let a = analyze(&corpus, &input, cfg.wrap).with_context(|| format!("frame {}", e.stem))?;
        let mut csv = String::from("segment,class,sp,excluded,fp_probability,iou_adj\n");
        let mut fp_by_seg = vec![EXCLUDED; a.segments.len()];
        let mut iou_by_seg = vec![EXCLUDED; a.segments.len()];
        let mut excluded = 0;
        for (i, (seg, mv)) in a.segments.iter().zip(&a.vectors).enumerate() {
            let skip = seg.sp < cfg.sp_min;
            excluded += skip as usize;
            let fp = classifier.as_ref().filter(|_| !skip).map(|m| m.predict_row(&mv.values));
            let iou = regressor.as_ref().filter(|_| !skip).map(|m| m.predict_row(&mv.values));
            if let Some(v) = fp {
                fp_by_seg[i] = v as f32;
            }
            if let Some(v) = iou {
                iou_by_seg[i] = v as f32;
            }
            writeln!(csv, "{},{},{},{},{},{}", seg.id, seg.class, seg.sp, skip as u8, fmt_opt(fp), fmt_opt(iou)).unwrap();
        }
        write_file(&args.out.join(format!("{}.segments.csv", e.stem)), csv)?;
        // segment ids are component ids, so the component grid indexes the tables
        let per_pixel = |table: &[f32]| -> Vec<f32> { a.components.ids.iter().map(|&id| table[id as usize]).collect() };
        if classifier.is_some() {
            let v = reproject(&per_pixel(&fp_by_seg), a.grids.w, &a.grids.point_map);
            io::write_point_values(args.out.join(format!("{}.fp", e.stem)), &v)?;
        }
        if regressor.is_some() {
            let v = reproject(&per_pixel(&iou_by_seg), a.grids.w, &a.grids.point_map);
            io::write_point_values(args.out.join(format!("{}.iou_adj", e.stem)), &v)?;
        }
        Ok((a.segments.len(), excluded))
    });
    let (mut segments, mut excluded) = (0, 0);
    for r in results {
        let (s, x) = r?;
        segments += s;
        excluded += x;
    }
    info!("{} frames, {segments} segments ({excluded} excluded, SP < {}) -> {}", corpus.entries.len(), cfg.sp_min, args.out.display());
    Ok(())
}
