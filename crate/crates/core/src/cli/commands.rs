use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{read_config, resolve, FileConfig, Overrides, Settings};
use super::{CliError, Command, Common, DecodeFlags};
use crate::codec::{encode_targets, Detection};
use crate::data::{
    generate_page, load_annotations, load_dataset, load_image, save_annotations, save_image, train_count,
    write_tensor, ANNOTATION_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{benchmark_inference, detect, evaluate, render_overlay};
use crate::geom::BBox;
use crate::grid::TensorGrid;
use crate::model::{load_model, Model};
use crate::train::train;

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn input<T>(r: Result<T>) -> CliResult<T> {
    r.map_err(CliError::Input)
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

struct Run {
    command: &'static str,
    settings: Settings,
    started: f64,
}

impl Run {
    fn start(command: &'static str, common: &Common, extra: Overrides) -> CliResult<Self> {
        let file = match &common.config {
            Some(p) => read_config(p).map_err(CliError::Config)?,
            None => FileConfig::default(),
        };
        let flags = Overrides {
            preset: common.preset.map(|p| p.name().to_string()),
            seed: common.seed,
            ..extra
        };
        let settings = resolve(&file, &flags)?;
        Ok(Run {
            command,
            settings,
            started: now(),
        })
    }

    /// Writes the manifest to `path`.
    fn finish(self, path: &Path, outputs: Vec<PathBuf>, summary: serde_json::Value) -> CliResult {
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.settings.seed,
            config: serde_json::to_value(&self.settings).expect("plain settings"),
            started_unix: self.started,
            finished_unix: now(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            summary,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("plain manifest");
        fs::write(path, text + "\n").map_err(|e| CliError::Run(Error::io(path, e)))
    }
}

/// Manifest location for a single-file output: `<out>.manifest.json`.
fn manifest_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| CliError::Run(Error::io(p, e))),
        _ => Ok(()),
    }
}

fn decode_overrides(d: &DecodeFlags) -> Overrides {
    Overrides {
        conf: d.conf,
        nms_iou: d.nms_iou,
        ..Overrides::default()
    }
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    image: String,
    boxes: Vec<[f64; 5]>,
}

impl DetectionRecord {
    fn new(image: &Path, dets: &[Detection]) -> Self {
        DetectionRecord {
            image: image.display().to_string(),
            boxes: dets
                .iter()
                .map(|d| {
                    let c = d.bbox.to_corners();
                    [c.x_min, c.y_min, c.x_max, c.y_max, d.score]
                })
                .collect(),
        }
    }
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Synth {
            common,
            pages,
            page_size,
            noise,
        } => synth(&common, pages, page_size, noise),
        Command::Encode { common, annotations } => encode(&common, &annotations),
        Command::Train {
            common,
            data,
            epochs,
            batch_size,
            lr,
            input_size,
            decode,
        } => {
            let extra = Overrides {
                epochs,
                batch_size,
                lr,
                input_size,
                ..decode_overrides(&decode)
            };
            train_cmd(&common, extra, &data)
        }
        Command::Infer {
            common,
            model,
            images,
            decode,
        } => infer(&common, decode_overrides(&decode), &model, &images),
        Command::Eval {
            common,
            model,
            data,
            holdout_only,
            decode,
        } => eval_cmd(&common, decode_overrides(&decode), &model, &data, holdout_only),
        Command::Bench {
            common,
            model,
            input_size,
            warmup,
            iters,
            decode,
        } => {
            let extra = Overrides {
                input_size,
                ..decode_overrides(&decode)
            };
            bench(&common, extra, model.as_deref(), warmup, iters)
        }
        Command::Viz {
            common,
            image,
            detections,
            model,
            decode,
        } => viz(&common, decode_overrides(&decode), &image, detections.as_deref(), model.as_deref()),
    }
}

fn synth(common: &Common, pages: usize, page_size: Option<u32>, noise: Option<f64>) -> CliResult {
    let run = Run::start("synth", common, Overrides::default())?;
    let mut cfg = run.settings.synth.clone();
    if let Some(s) = page_size {
        cfg.page_w = s;
        cfg.page_h = s;
    }
    if let Some(n) = noise {
        cfg.noise_level = n;
    }
    cfg.validate()?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Run(Error::io(&dir, e)))?;
    let mut anns = Vec::with_capacity(pages);
    let mut outputs = Vec::with_capacity(pages + 1);
    for i in 0..pages {
        let (img, mut ann) = generate_page(&cfg.for_page(i as u64))?;
        let name = format!("p{i}.png");
        save_image(dir.join(&name), &img)?;
        outputs.push(dir.join(&name));
        ann.image_path = name;
        anns.push(ann);
    }
    let ann_path = dir.join(ANNOTATION_FILE);
    save_annotations(&ann_path, &anns)?;
    outputs.push(ann_path);
    let n_boxes: usize = anns.iter().map(|a| a.boxes.len()).sum();
    eprintln!("synth: {pages} pages, {n_boxes} characters in {}", dir.display());
    let summary = serde_json::json!({ "pages": pages, "characters": n_boxes, "page_config": cfg });
    run.finish(&dir.join("manifest.json"), outputs, summary)
}

fn encode(common: &Common, annotations: &Path) -> CliResult {
    let run = Run::start("encode", common, Overrides::default())?;
    let pages = input(load_annotations(annotations))?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("targets"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Run(Error::io(&dir, e)))?;
    let codec = run.settings.train.codec;
    let mut outputs = Vec::with_capacity(pages.len());
    for (i, page) in pages.iter().enumerate() {
        let t = encode_targets(&page.boxes, page.width, page.height, &codec)?;
        // Channels: heatmap, height, width, x offset, y offset, mask.
        let mut data = Vec::with_capacity(6 * t.heatmap.len());
        for g in [&t.heatmap, &t.size_map, &t.offset_map, &t.mask] {
            data.extend_from_slice(g.as_slice());
        }
        let grid = TensorGrid::from_vec(6, t.heatmap.height(), t.heatmap.width(), data)?;
        let stem = Path::new(&page.image_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("page{i}"));
        let path = dir.join(format!("{stem}.hrtg"));
        write_tensor(&path, &grid)?;
        if t.collisions > 0 {
            eprintln!("encode: {}: {} boxes share a center pixel", page.image_path, t.collisions);
        }
        outputs.push(path);
    }
    eprintln!("encode: {} pages to {}", pages.len(), dir.display());
    run.finish(&dir.join("manifest.json"), outputs, serde_json::Value::Null)
}

fn train_cmd(common: &Common, extra: Overrides, data: &Path) -> CliResult {
    let run = Run::start("train", common, extra)?;
    let s = &run.settings;
    let dataset = input(load_dataset(data, s.model.input_channels))?;
    if dataset.is_empty() {
        return Err(CliError::Input(Error::format(data, "dataset has no pages")));
    }
    let n_train = train_count(dataset.len(), s.holdout);
    let (train_set, held) = dataset.split_at(n_train);
    let mut model = Model::build(s.model, s.seed)?;
    eprintln!(
        "train: {} pages ({} held out), preset {}, {} parameters",
        train_set.len(),
        held.len(),
        s.preset,
        model.param_count()
    );
    let history = train(&mut model, train_set, &s.train, |e| {
        eprintln!(
            "epoch {:>3}/{}: loss {:.4} (heatmap {:.4}, size {:.4}, offset {:.4}) {:.1}s",
            e.epoch, s.train.epochs, e.mean_loss, e.mean_heatmap, e.mean_size, e.mean_offset, e.seconds
        );
    })?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("model.ckpt"));
    ensure_parent(&out)?;
    model.save(&out)?;
    let mut summary = serde_json::json!({ "history": history, "train_pages": train_set.len() });
    if !held.is_empty() {
        let r = evaluate(&model, held, &s.train.codec)?;
        eprintln!(
            "held-out: mean_iou {:.4}, precision {:.4}, recall {:.4} on {} pages",
            r.mean_iou,
            r.precision_at_50,
            r.recall_at_50,
            held.len()
        );
        summary["holdout"] = serde_json::json!({
            "pages": held.len(),
            "mean_iou": r.mean_iou,
            "precision_at_50": r.precision_at_50,
            "recall_at_50": r.recall_at_50,
        });
    }
    run.finish(&manifest_for(&out), vec![out.clone()], summary)
}

fn infer(common: &Common, extra: Overrides, model_path: &Path, images: &[PathBuf]) -> CliResult {
    let run = Run::start("infer", common, extra)?;
    let model = input(load_model(model_path, None))?;
    let codec = run.settings.train.codec;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("detections.jsonl"));
    let mut buf = Vec::new();
    let mut total = 0;
    for path in images {
        let img = input(load_image(path, model.config().input_channels))?;
        let dets = detect(&model, &img, &codec)?;
        total += dets.len();
        serde_json::to_writer(&mut buf, &DetectionRecord::new(path, &dets)).expect("plain record");
        buf.push(b'\n');
    }
    ensure_parent(&out)?;
    fs::File::create(&out)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| CliError::Run(Error::io(&out, e)))?;
    eprintln!("infer: {total} detections on {} images to {}", images.len(), out.display());
    run.finish(&manifest_for(&out), vec![out.clone()], serde_json::json!({ "detections": total }))
}

fn eval_cmd(common: &Common, extra: Overrides, model_path: &Path, data: &Path, holdout_only: bool) -> CliResult {
    let run = Run::start("eval", common, extra)?;
    let model = input(load_model(model_path, None))?;
    let dataset = input(load_dataset(data, model.config().input_channels))?;
    let pages = if holdout_only {
        &dataset[train_count(dataset.len(), run.settings.holdout)..]
    } else {
        &dataset[..]
    };
    if pages.is_empty() {
        return Err(CliError::Input(Error::format(data, "no pages to evaluate")));
    }
    let report = evaluate(&model, pages, &run.settings.train.codec)?;
    print!("{}", report.table());
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("eval.jsonl"));
    ensure_parent(&out)?;
    fs::write(&out, report.to_json_lines()).map_err(|e| CliError::Run(Error::io(&out, e)))?;
    let summary = serde_json::json!({
        "pages": pages.len(),
        "mean_iou": report.mean_iou,
        "precision_at_50": report.precision_at_50,
        "recall_at_50": report.recall_at_50,
    });
    run.finish(&manifest_for(&out), vec![out.clone()], summary)
}

fn bench(common: &Common, extra: Overrides, model_path: Option<&Path>, warmup: usize, iters: usize) -> CliResult {
    let run = Run::start("bench", common, extra)?;
    let s = &run.settings;
    let model = match model_path {
        Some(p) => input(load_model(p, None))?,
        None => Model::build(s.model, s.seed)?,
    };
    let side = s.train.input_size;
    let report = benchmark_inference(&model, (side, side), warmup, iters, &s.train.codec)?;
    print!("{}", report.table());
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("bench.jsonl"));
    ensure_parent(&out)?;
    fs::write(&out, report.to_json_line()).map_err(|e| CliError::Run(Error::io(&out, e)))?;
    let summary = serde_json::to_value(&report).expect("plain report");
    run.finish(&manifest_for(&out), vec![out.clone()], summary)
}

fn read_detections(path: &Path, image: &Path) -> CliResult<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(Error::io(path, e)))?;
    let want = image.display().to_string();
    let want_name = image.file_name();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: DetectionRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Input(Error::format(path, format!("line {}: {e}", i + 1))))?;
        if rec.image != want && Path::new(&rec.image).file_name() != want_name {
            continue;
        }
        return rec
            .boxes
            .iter()
            .map(|&[x0, y0, x1, y1, score]| {
                let bbox = BBox::from_corners(x0, y0, x1, y1)
                    .map_err(|e| CliError::Input(Error::format(path, format!("line {}: {e}", i + 1))))?;
                Ok(Detection { bbox, score })
            })
            .collect();
    }
    Err(CliError::Input(Error::format(path, format!("no record for {want}"))))
}

fn viz(
    common: &Common,
    extra: Overrides,
    image: &Path,
    detections: Option<&Path>,
    model_path: Option<&Path>,
) -> CliResult {
    let run = Run::start("viz", common, extra)?;
    let dets = match (detections, model_path) {
        (Some(d), _) => read_detections(d, image)?,
        (None, Some(m)) => {
            let model = input(load_model(m, None))?;
            let img = input(load_image(image, model.config().input_channels))?;
            detect(&model, &img, &run.settings.train.codec)?
        }
        (None, None) => {
            return Err(CliError::Config("viz needs --detections or --model".into()));
        }
    };
    let page = input(load_image(image, 3))?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("overlay.png"));
    ensure_parent(&out)?;
    render_overlay(&page, &dets, &out)?;
    eprintln!("viz: {} boxes drawn to {}", dets.len(), out.display());
    run.finish(&manifest_for(&out), vec![out.clone()], serde_json::json!({ "boxes": dets.len() }))
}
