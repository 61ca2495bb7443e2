//! Command-line front end. Every command reads the run configuration,
//! writes its artifacts under the output directory and records them in
//! `manifests/<command>.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};
use visbeam_core::crops::Splits;
use visbeam_core::detector::{bitmap_topk, BitMap};
use visbeam_core::fcn::{convert_cnn_to_fcn, equivalence_check};
use visbeam_core::labeler::{build_label_table, LabelTable};
use visbeam_core::metrics::{latency_report, ConfusionMatrix, TimingStats};
use visbeam_core::scene::{Camera, Case, Obstacle};
use visbeam_core::stage2::{decode_class, encode_pair, predict_pair, split_samples, stack_bitmaps, train_stage2, Stage2Sample};
use visbeam_core::Tensor;

use crate::bench::{bench_inference, compare_modes, StageTimings};
use crate::config::{DetectorMode, ObstacleKind, RunConfig};
use crate::error::{Error, Result};
use crate::formats::{self, crops, csv, pnm, weights};
use crate::pipeline::{self, Detector};

#[derive(Debug, Parser)]
#[command(name = "visbeam", version, about = "Camera-assisted mmWave beam selection pipeline")]
pub struct Cli {
    /// JSON run configuration; defaults apply when absent.
    #[arg(long, global = true, env = "VISBEAM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, env = "VISBEAM_OUT")]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "VISBEAM_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Detector mode: per-crop or fcn.
    #[arg(long, global = true)]
    pub mode: Option<DetectorMode>,
    /// Obstacle: none, wood or cardbox.
    #[arg(long, global = true)]
    pub obstacle: Option<String>,
    /// Camera ids in stacking order, e.g. `1,2`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub cameras: Option<Vec<u8>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic scenes as PPM images.
    GenScenes {
        /// Write every light level instead of neutral light only.
        #[arg(long)]
        all_levels: bool,
    },
    /// Sample the SNR oracle for every case and beam pair.
    GenSnr,
    /// Turn an SNR table into the best-pair label table.
    Label {
        #[arg(long)]
        snr: Option<PathBuf>,
    },
    /// Build the balanced Stage-1 crop splits.
    GenCrops,
    /// Train the Stage-1 crop classifier.
    TrainStage1 {
        /// Directory holding train/val/test crop files.
        #[arg(long)]
        crops: Option<PathBuf>,
    },
    /// Heatmap and bitmap of one image, or the full Stage-2 bitmap set.
    Bitmap(BitmapArgs),
    /// Convert Stage-1 weights into the fully convolutional form.
    ConvertFcn {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Random cells compared against the per-crop network.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Train the Stage-2 beam-pair predictor.
    TrainStage2 {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Predict the beam pair for one image per camera.
    Predict(PredictArgs),
    /// Stage-1 accuracy, detection IoU and Stage-2 confusion.
    Evaluate,
    /// Time per-crop and FCN inference.
    Bench {
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Predicted vs. exhaustive-sweep latency.
    Report {
        /// Prediction latency; taken from bench.csv when absent.
        #[arg(long)]
        predicted_ms: Option<f64>,
        #[arg(long, default_value_t = 0.275)]
        dwell_ms: f64,
        #[arg(long, default_value_t = 169)]
        pairs: usize,
    },
}

#[derive(Debug, Args)]
pub struct BitmapArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// One PPM per camera, in camera order.
    #[arg(long = "image", required = true)]
    pub images: Vec<PathBuf>,
    #[arg(long)]
    pub stage1: Option<PathBuf>,
    #[arg(long)]
    pub stage2: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::GenScenes { all_levels } => gen_scenes(&ctx, all_levels),
        Command::GenSnr => gen_snr(&ctx),
        Command::Label { snr } => label(&ctx, snr),
        Command::GenCrops => gen_crops(&ctx),
        Command::TrainStage1 { crops } => train_stage1(&ctx, crops),
        Command::Bitmap(a) => bitmap(&ctx, a),
        Command::ConvertFcn { weights, trials } => convert_fcn(&ctx, weights, trials),
        Command::TrainStage2 { manifest } => train_stage2_cmd(&ctx, manifest),
        Command::Predict(a) => predict(&ctx, a),
        Command::Evaluate => evaluate(&ctx),
        Command::Bench { repeats } => bench(&ctx, repeats),
        Command::Report { predicted_ms, dwell_ms, pairs } => report(&ctx, predicted_ms, dwell_ms, pairs),
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(m) = cli.mode {
            cfg.mode = m;
        }
        if let Some(o) = &cli.obstacle {
            cfg.obstacle = ObstacleKind::from(Obstacle::parse(o).map_err(|e| Error::Config(e.to_string()))?);
        }
        if let Some(c) = &cli.cameras {
            cfg.cameras = c.clone();
        }
        if let Some(o) = &cli.out {
            cfg.out_dir = o.clone();
        }
        let cfg = cfg.normalized()?;
        Ok(Ctx { out: cfg.out_dir.clone(), cfg })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn obstacle(&self) -> &'static str {
        Obstacle::from(self.cfg.obstacle).name()
    }

    fn snr_rel(&self) -> String {
        format!("snr_{}.csv", self.obstacle())
    }

    fn labels_rel(&self) -> String {
        csv::label_file_name(self.obstacle())
    }

    fn camset(&self) -> String {
        camset(&self.cfg.cameras)
    }

    fn bitmap_dir(&self) -> String {
        format!("bitmaps/{}", self.cfg.mode.name())
    }

    fn stage2_manifest_rel(&self) -> String {
        format!("{}/stage2_{}.csv", self.bitmap_dir(), self.camset())
    }

    fn stage2_rel(&self) -> String {
        format!("stage2_{}_{}.bsw", self.cfg.mode.name(), self.camset())
    }

    fn labels(&self) -> Result<LabelTable> {
        csv::decode_labels(&formats::read_text(&self.path(&self.labels_rel()))?)
    }

    /// Detector for the configured mode; FCN mode needs `convert-fcn` output.
    fn detector(&self, stage1: Option<&Path>) -> Result<Detector> {
        let cnn_path = stage1.map(Path::to_path_buf).unwrap_or_else(|| self.path("stage1.bsw"));
        let cnn = weights::load(&cnn_path)?;
        match self.cfg.mode {
            DetectorMode::PerCrop => Detector::new(cnn, DetectorMode::PerCrop, self.cfg.stride),
            DetectorMode::Fcn => {
                let fcn_path = match stage1 {
                    Some(p) => p.with_file_name(fcn_name(p)),
                    None => self.path("stage1_fcn.bsw"),
                };
                Detector::with_fcn(cnn, weights::load(&fcn_path)?)
            }
        }
    }
}

fn fcn_name(p: &Path) -> String {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{stem}_fcn.bsw")
}

fn camset(ids: &[u8]) -> String {
    ids.iter().map(u8::to_string).collect::<Vec<_>>().join("+")
}

fn scene_name(case: Case, level: usize) -> String {
    format!("case_{}_{}_l{:02}", case.i, case.j, level)
}

/// Artifacts written by one command, recorded in its manifest.
struct Outputs<'a> {
    ctx: &'a Ctx,
    command: &'static str,
    artifacts: Vec<Value>,
    summary: BTreeMap<String, Value>,
}

impl<'a> Outputs<'a> {
    fn new(ctx: &'a Ctx, command: &'static str) -> Self {
        Outputs { ctx, command, artifacts: Vec::new(), summary: BTreeMap::new() }
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        formats::write_atomic(&self.ctx.path(rel), bytes)?;
        self.artifacts.push(json!({
            "path": rel,
            "bytes": bytes.len(),
            "fnv1a64": format!("{:016x}", fnv1a64(bytes)),
        }));
        Ok(())
    }

    fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_owned(), v.into());
    }

    fn finish(self) -> Result<()> {
        let mut cfg = self.ctx.cfg.clone();
        cfg.out_dir = PathBuf::new();
        let doc = json!({
            "command": self.command,
            "config": cfg,
            "artifacts": self.artifacts,
            "summary": self.summary,
        });
        let text = serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n";
        formats::write_atomic(&self.ctx.path(&format!("manifests/{}.json", self.command)), text.as_bytes())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn gen_scenes(ctx: &Ctx, all_levels: bool) -> Result<()> {
    let cfg = &ctx.cfg;
    let levels: Vec<(usize, f64)> = if all_levels {
        cfg.light_factors()?.into_iter().enumerate().map(|(i, l)| (i + 1, l)).collect()
    } else {
        vec![(0, 1.0)]
    };
    let cameras = cfg.camera_list()?;
    let jobs: Vec<(Camera, Case, usize, f64)> = cameras
        .iter()
        .flat_map(|&cam| {
            let levels = &levels;
            Case::all().flat_map(move |c| levels.iter().map(move |&(n, l)| (cam, c, n, l)))
        })
        .collect();
    let rendered = jobs
        .par_iter()
        .map(|&(cam, case, _, light)| {
            let (img, boxes) = pipeline::render(cfg, cam, case, light)?;
            Ok((pnm::encode_ppm(&img), boxes))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut o = Outputs::new(ctx, "gen-scenes");
    let mut index = String::from(
        "camera,case_i,case_j,light_level,light,path,\
         tx_top,tx_left,tx_height,tx_width,tx_occluded,rx_top,rx_left,rx_height,rx_width,rx_occluded\n",
    );
    for (&(cam, case, level, light), (ppm, boxes)) in jobs.iter().zip(&rendered) {
        let rel = format!("scenes/cam{}/{}.ppm", cam.id(), scene_name(case, level));
        o.write(&rel, ppm)?;
        index.push_str(&format!("{},{},{},{},{},{}", cam.id(), case.i, case.j, level, light, rel));
        for b in boxes {
            index.push_str(&format!(",{},{},{},{},{}", b.top, b.left, b.height, b.width, b.occluded as u8));
        }
        index.push('\n');
    }
    o.write("scenes/scenes.csv", index.as_bytes())?;
    o.note("images", jobs.len());
    println!("wrote {} scenes", jobs.len());
    o.finish()
}

fn gen_snr(ctx: &Ctx) -> Result<()> {
    let table = pipeline::snr_table(&ctx.cfg)?;
    let text = csv::encode_snr(&table);
    let nulls = table.iter().flat_map(|(_, _, v)| v.iter()).filter(|x| x.is_nan()).count();
    let mut o = Outputs::new(ctx, "gen-snr");
    o.write(&ctx.snr_rel(), text.as_bytes())?;
    o.note("entries", table.len());
    o.note("nan_samples", nulls);
    println!("wrote {} ({} pair tables, {} NaN samples)", ctx.snr_rel(), table.len(), nulls);
    o.finish()
}

fn label(ctx: &Ctx, snr: Option<PathBuf>) -> Result<()> {
    let path = snr.unwrap_or_else(|| ctx.path(&ctx.snr_rel()));
    let table = csv::decode_snr(&formats::read_text(&path)?)?;
    let labels = build_label_table(&table)?;
    let text = csv::encode_labels(&labels);
    let mut o = Outputs::new(ctx, "label");
    o.write(&ctx.labels_rel(), text.as_bytes())?;
    o.note("distinct_pairs", labels.distinct_pairs());
    print!("{text}");
    o.finish()
}

fn gen_crops(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let splits = pipeline::stage1_splits(cfg)?;
    let mut o = Outputs::new(ctx, "gen-crops");
    for (name, set) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        o.write(&format!("crops/{name}.bsc"), &crops::encode(set, cfg.window, cfg.stride)?)?;
        let pos = set.iter().filter(|c| c.label.class() == 1).count();
        o.note(name, json!({ "crops": set.len(), "positive": pos }));
        println!("{name}: {} crops ({} positive)", set.len(), pos);
    }
    o.finish()
}

fn load_split(dir: &Path, name: &str, cfg: &RunConfig) -> Result<Vec<visbeam_core::crops::LabeledCrop>> {
    let f = crops::load(&dir.join(format!("{name}.bsc")))?;
    if f.window != cfg.window {
        return Err(Error::Config(format!("{name}.bsc holds {}-pixel crops, config says {}", f.window, cfg.window)));
    }
    Ok(f.crops)
}

fn history_csv(h: &visbeam_core::nn::History) -> String {
    let mut s = String::from("epoch,loss,train_accuracy,val_accuracy\n");
    for (i, e) in h.epochs.iter().enumerate() {
        s.push_str(&format!("{},{},{},{}\n", i + 1, e.loss, e.train_accuracy, e.val_accuracy));
    }
    s
}

fn train_stage1(ctx: &Ctx, dir: Option<PathBuf>) -> Result<()> {
    let cfg = &ctx.cfg;
    let dir = dir.unwrap_or_else(|| ctx.path("crops"));
    let splits = Splits {
        train: load_split(&dir, "train", cfg)?,
        val: load_split(&dir, "val", cfg)?,
        test: load_split(&dir, "test", cfg)?,
    };
    let outcome = pipeline::train_detector(cfg, &splits)?;
    let mut o = Outputs::new(ctx, "train-stage1");
    o.write("stage1.bsw", &weights::encode(&outcome.net))?;
    o.write("stage1_history.csv", history_csv(&outcome.history).as_bytes())?;
    o.note("test_accuracy", outcome.test_accuracy);
    o.note("epochs", outcome.history.epochs.len());
    o.note("best_epoch", outcome.history.best_epoch + 1);
    println!(
        "stage1 test_accuracy={:.4} epochs={} best_epoch={}",
        outcome.test_accuracy,
        outcome.history.epochs.len(),
        outcome.history.best_epoch + 1
    );
    o.finish()
}

fn convert_fcn(ctx: &Ctx, path: Option<PathBuf>, trials: usize) -> Result<()> {
    let src = path.clone().unwrap_or_else(|| ctx.path("stage1.bsw"));
    let mut cnn = weights::load(&src)?;
    cnn.set_mode(visbeam_core::nn::Mode::Eval);
    let fcn = convert_cnn_to_fcn(&cnn)?;
    let (img, _) = pipeline::render(&ctx.cfg, Camera::One, Case::new(3, 3)?, 1.0)?;
    let diff = equivalence_check(&cnn, &fcn, img.as_tensor(), trials, ctx.cfg.seed)?;
    let rel = match &path {
        Some(p) => p.with_file_name(fcn_name(p)).to_string_lossy().into_owned(),
        None => "stage1_fcn.bsw".to_owned(),
    };
    let mut o = Outputs::new(ctx, "convert-fcn");
    if path.is_some() {
        formats::write_atomic(Path::new(&rel), &weights::encode(&fcn))?;
    } else {
        o.write(&rel, &weights::encode(&fcn))?;
    }
    o.note("max_abs_diff", diff);
    o.note("trials", trials);
    println!("wrote {rel} max_abs_diff={diff:e} over {trials} cells");
    o.finish()
}

fn bitmap(ctx: &Ctx, a: BitmapArgs) -> Result<()> {
    let det = ctx.detector(a.weights.as_deref())?;
    match a.image {
        Some(p) => bitmap_single(ctx, &det, &p),
        None => bitmap_dataset(ctx, &det),
    }
}

fn bitmap_single(ctx: &Ctx, det: &Detector, path: &Path) -> Result<()> {
    let img = pnm::decode_ppm(&formats::read_bytes(path)?)?;
    let hm = det.heatmap(img.as_tensor())?;
    let k = top_k_for(ctx, det, img.rows(), img.cols())?;
    let bm = bitmap_topk(&hm, k)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
    let mut o = Outputs::new(ctx, "bitmap");
    o.write(&format!("bitmap/{stem}_heat.pgm"), &pnm::encode_heatmap(&hm))?;
    o.write(&format!("bitmap/{stem}_heat.csv"), csv::encode_heatmap(&hm).as_bytes())?;
    o.write(&format!("bitmap/{stem}_bits.pgm"), &pnm::encode_bitmap(&bm, 0)?)?;
    o.note("grid", json!([hm.rows, hm.cols]));
    o.note("top_k", k);
    println!("grid={}x{} top_k={} max_p={:.4}", hm.rows, hm.cols, k, hm.max());
    o.finish()
}

/// K for an image of the given size: the configured value when the image
/// matches the config, the default rule otherwise.
fn top_k_for(ctx: &Ctx, det: &Detector, rows: usize, cols: usize) -> Result<usize> {
    if (rows, cols) == (ctx.cfg.rows, ctx.cfg.cols) {
        return ctx.cfg.top_k();
    }
    Ok(visbeam_core::detector::default_top_k(det.grid(rows, cols)?.total()))
}

fn bitmap_dataset(ctx: &Ctx, det: &Detector) -> Result<()> {
    let cfg = &ctx.cfg;
    let labels = ctx.labels()?;
    let cameras = cfg.camera_list()?;
    let dir = ctx.bitmap_dir();
    let mut o = Outputs::new(ctx, "bitmap");
    let mut paths: Vec<Vec<String>> = Vec::new();
    for &cam in &cameras {
        let maps = pipeline::camera_bitmaps(cfg, det, cam)?;
        let mut cam_paths = Vec::with_capacity(maps.len());
        let mut it = maps.iter();
        for case in Case::all() {
            for level in 1..=cfg.light_levels {
                let bm = it.next().expect("one bitmap per case and level");
                let rel = format!("{dir}/cam{}/{}.pgm", cam.id(), scene_name(case, level));
                o.write(&rel, &pnm::encode_bitmap(bm, 0)?)?;
                cam_paths.push(rel);
            }
        }
        paths.push(cam_paths);
    }
    let mut rows = Vec::new();
    for case in Case::all() {
        let pair = labels.label(case)?;
        for level in 1..=cfg.light_levels {
            let idx = case.index() * cfg.light_levels + level - 1;
            let joined = paths.iter().map(|p| p[idx].as_str()).collect::<Vec<_>>().join("+");
            rows.push(csv::Stage2Row { case, light_level: level, camera_set: ctx.camset(), bitmap_path: joined, pair });
        }
    }
    o.write(&ctx.stage2_manifest_rel(), csv::encode_stage2(&rows)?.as_bytes())?;
    o.note("samples", rows.len());
    o.note("top_k", cfg.top_k()?);
    println!("wrote {} bitmaps per camera and {}", rows.len(), ctx.stage2_manifest_rel());
    o.finish()
}

fn load_samples(ctx: &Ctx, manifest: &Path) -> Result<(Vec<Stage2Sample>, String)> {
    let rows = csv::decode_stage2(&formats::read_text(manifest)?)?;
    let Some(first) = rows.first() else {
        return Err(Error::Parse(format!("{}: no samples", manifest.display())));
    };
    let set = first.camera_set.clone();
    rows.iter()
        .map(|r| {
            if r.camera_set != set {
                return Err(Error::Parse(format!("mixed camera sets {} and {}", set, r.camera_set)));
            }
            let maps = r
                .bitmap_path
                .split('+')
                .map(|p| pnm::decode_bitmap(&formats::read_bytes(&ctx.path(p))?))
                .collect::<Result<Vec<BitMap>>>()?;
            Ok(Stage2Sample { case: r.case, light_level: r.light_level, bitmap: stack_bitmaps(&maps)?, pair: r.pair })
        })
        .collect::<Result<Vec<_>>>()
        .map(|s| (s, set))
}

fn train_stage2_cmd(ctx: &Ctx, manifest: Option<PathBuf>) -> Result<()> {
    let path = manifest.unwrap_or_else(|| ctx.path(&ctx.stage2_manifest_rel()));
    let (samples, set) = load_samples(ctx, &path)?;
    let outcome = train_stage2(samples, &ctx.cfg.stage2.train_config(), ctx.cfg.seed)?;
    let stem = format!("stage2_{}_{}", ctx.cfg.mode.name(), set);
    let mut preds = String::from("case_i,case_j,light_level,t,r,pred_t,pred_r\n");
    for (s, &c) in outcome.test.iter().zip(&outcome.test_predictions) {
        let p = decode_class(c)?;
        preds.push_str(&format!("{},{},{},{},{},{},{}\n", s.case.i, s.case.j, s.light_level, s.pair.t, s.pair.r, p.t, p.r));
    }
    let mut o = Outputs::new(ctx, "train-stage2");
    o.write(&format!("{stem}.bsw"), &weights::encode(&outcome.net))?;
    o.write(&format!("{stem}_history.csv"), history_csv(&outcome.history).as_bytes())?;
    o.write(&format!("{stem}_test.csv"), preds.as_bytes())?;
    o.note("camera_set", set.as_str());
    o.note("test_accuracy", outcome.test_accuracy);
    println!("stage2 cameras={} test_accuracy={:.4}", set, outcome.test_accuracy);
    o.finish()
}

fn predict(ctx: &Ctx, a: PredictArgs) -> Result<()> {
    if a.images.len() > 8 {
        return Err(Error::Config("at most 8 images".into()));
    }
    let det = ctx.detector(a.stage1.as_deref())?;
    let stage2_path = match a.stage2 {
        Some(p) => p,
        None => {
            let ids = if a.images.len() == ctx.cfg.cameras.len() {
                ctx.cfg.cameras.clone()
            } else {
                (1..=a.images.len() as u8).collect()
            };
            ctx.path(&format!("stage2_{}_{}.bsw", ctx.cfg.mode.name(), camset(&ids)))
        }
    };
    let stage2 = weights::load(&stage2_path)?;
    let images = a
        .images
        .iter()
        .map(|p| Ok(pnm::decode_ppm(&formats::read_bytes(p)?)?.into_tensor()))
        .collect::<Result<Vec<Tensor>>>()?;
    let (rows, cols) = (images[0].shape()[0], images[0].shape()[1]);
    if images.iter().any(|i| i.shape()[..2] != [rows, cols]) {
        return Err(Error::Config("all images must share one size".into()));
    }
    let k = top_k_for(ctx, &det, rows, cols)?;
    let p = pipeline::predict(&det, &stage2, &images, k)?;
    println!(
        "pair=({},{}) confidence={:.6} stage1_ms={:.3} stage2_ms={:.3} total_ms={:.3}",
        p.pair.t,
        p.pair.r,
        p.confidence,
        p.stage1_ms,
        p.stage2_ms,
        p.total_ms()
    );
    let mut o = Outputs::new(ctx, "predict");
    o.note("pair", json!([p.pair.t, p.pair.r]));
    o.note("confidence", p.confidence);
    o.note("images", a.images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    o.finish()
}

fn evaluate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let det = ctx.detector(None)?;
    let mut o = Outputs::new(ctx, "evaluate");
    let mut summary = String::from("metric,value\n");

    let test_crops = ctx.path("crops/test.bsc");
    if test_crops.exists() {
        let test = load_split(&ctx.path("crops"), "test", cfg)?;
        let acc = visbeam_core::detector::accuracy(&det.cnn, &test)?;
        summary.push_str(&format!("stage1_test_accuracy,{acc}\n"));
        o.note("stage1_test_accuracy", acc);
    }

    let mut iou_csv = String::from("camera,case_i,case_j,tx_visible,tx_iou,rx_iou\n");
    let mut worst = f64::INFINITY;
    for cam in cfg.camera_list()? {
        let jobs: Vec<Case> = Case::all().collect();
        let results = jobs
            .par_iter()
            .map(|&case| {
                let (_, boxes) = pipeline::render(cfg, cam, case, 1.0)?;
                let visible = !boxes[0].occluded;
                let (tx, rx) = pipeline::detection_iou(cfg, &det, cam, case, 1.0)?;
                Ok((case, visible, tx, rx))
            })
            .collect::<Result<Vec<_>>>()?;
        for (case, visible, tx, rx) in results {
            if visible {
                worst = worst.min(tx.min(rx));
            } else {
                worst = worst.min(rx);
            }
            iou_csv.push_str(&format!("{},{},{},{},{},{}\n", cam.id(), case.i, case.j, visible as u8, tx, rx));
        }
    }
    o.write("eval/iou.csv", iou_csv.as_bytes())?;
    summary.push_str(&format!("min_visible_iou,{worst}\n"));
    o.note("min_visible_iou", worst);

    let stage2_path = ctx.path(&ctx.stage2_rel());
    let manifest = ctx.path(&ctx.stage2_manifest_rel());
    if stage2_path.exists() && manifest.exists() {
        let net = weights::load(&stage2_path)?;
        let (samples, _) = load_samples(ctx, &manifest)?;
        let [_, _, test] = split_samples(samples, cfg.seed)?;
        let mut preds = Vec::with_capacity(test.len());
        let mut truth = Vec::with_capacity(test.len());
        for s in &test {
            preds.push(encode_pair(predict_pair(&net, &s.bitmap)?.0)?);
            truth.push(encode_pair(s.pair)?);
        }
        let cm = ConfusionMatrix::build(&preds, &truth, visbeam_core::codebook::N_PAIRS)?;
        let mut text = String::from("true_t,true_r,pred_t,pred_r,count\n");
        for t in cm.present_classes() {
            for p in 0..visbeam_core::codebook::N_PAIRS {
                let n = cm.get(t, p);
                if n > 0 {
                    let (a, b) = (decode_class(t)?, decode_class(p)?);
                    text.push_str(&format!("{},{},{},{},{}\n", a.t, a.r, b.t, b.r, n));
                }
            }
        }
        o.write("eval/confusion.csv", text.as_bytes())?;
        summary.push_str(&format!("stage2_test_accuracy,{}\n", cm.accuracy()));
        o.note("stage2_test_accuracy", cm.accuracy());
    }
    o.write("eval/summary.csv", summary.as_bytes())?;
    print!("{summary}");
    o.finish()
}

fn timing_rows(s: &mut String, mode: &str, stage: &str, t: &TimingStats) {
    s.push_str(&format!("{mode},{stage},{},{},{},{}\n", t.mean_ms, t.p50_ms, t.p95_ms, t.samples_ms.len()));
}

fn stage_rows(s: &mut String, mode: &str, t: &StageTimings) {
    timing_rows(s, mode, "stage1", &t.stage1);
    if let Some(s2) = &t.stage2 {
        timing_rows(s, mode, "stage2", s2);
    }
    timing_rows(s, mode, "total", &t.total);
}

fn bench(ctx: &Ctx, repeats: usize) -> Result<()> {
    let cfg = &ctx.cfg;
    let cnn = weights::load(&ctx.path("stage1.bsw"))?;
    let cameras = cfg.camera_list()?;
    let mut per_case: Vec<Vec<Tensor>> = Vec::new();
    for case in Case::all() {
        let imgs = cameras
            .iter()
            .map(|&cam| Ok(pipeline::render(cfg, cam, case, 1.0)?.0.into_tensor()))
            .collect::<Result<Vec<_>>>()?;
        per_case.push(imgs);
    }
    let first: Vec<Tensor> = per_case.iter().map(|v| v[0].clone()).collect();
    let cmp = compare_modes(&cnn, cfg.stride, &first, repeats)?;
    let mut text = String::from("mode,stage,mean_ms,p50_ms,p95_ms,samples\n");
    stage_rows(&mut text, "per-crop", &cmp.per_crop);
    stage_rows(&mut text, "fcn", &cmp.fcn);

    let stage2_path = ctx.path(&ctx.stage2_rel());
    let mut pipeline_ms = None;
    if stage2_path.exists() {
        let det = ctx.detector(None)?;
        let net = weights::load(&stage2_path)?;
        let t = bench_inference(&det, Some(&net), &per_case, cfg.top_k()?, repeats)?;
        stage_rows(&mut text, &format!("pipeline-{}", cfg.mode.name()), &t);
        pipeline_ms = Some(t.total.mean_ms);
    }
    let mut o = Outputs::new(ctx, "bench");
    o.write("bench.csv", text.as_bytes())?;
    o.note("repeats", repeats);
    print!("{text}");
    println!("fcn_speedup={:.3}", cmp.speedup());
    if let Some(ms) = pipeline_ms {
        println!("pipeline_total_ms={ms:.3}");
    }
    o.finish()
}

/// Mean total latency of the configured pipeline from `bench.csv`.
fn bench_latency(ctx: &Ctx) -> Result<f64> {
    let path = ctx.path("bench.csv");
    let text = formats::read_text(&path)?;
    let want = format!("pipeline-{}", ctx.cfg.mode.name());
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() == 6 && f[0] == want && f[1] == "total" {
            return csv::field(0, f[2], "mean_ms");
        }
    }
    Err(Error::MissingInput(format!("{}: no {want} total row; run bench after train-stage2", path.display())))
}

fn report(ctx: &Ctx, predicted: Option<f64>, dwell_ms: f64, pairs: usize) -> Result<()> {
    let predicted_ms = match predicted {
        Some(v) => v,
        None => bench_latency(ctx)?,
    };
    let r = latency_report(predicted_ms, dwell_ms, pairs)?;
    let text = format!(
        "predicted_ms,dwell_ms,pairs,sweep_ms,reduction_pct\n{},{},{},{},{}\n",
        r.predicted_ms,
        r.dwell_ms,
        r.pairs,
        r.sweep_ms,
        r.reduction * 100.0
    );
    let mut o = Outputs::new(ctx, "report");
    o.write("report.csv", text.as_bytes())?;
    o.note("reduction_pct", r.reduction * 100.0);
    println!(
        "predicted_ms={:.3} sweep_ms={:.3} reduction_pct={:.2}",
        r.predicted_ms,
        r.sweep_ms,
        r.reduction * 100.0
    );
    o.finish()
}
