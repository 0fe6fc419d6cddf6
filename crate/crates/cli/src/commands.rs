use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use depth_contours::edges::{
    canny, dbe_accuracy, dbe_completeness, normalize_depth, CannyParams, ChamferScore, EdgeMap,
};
use depth_contours::imageio::{
    read_depth_auto, read_mask, read_normals, read_probabilities, write_depth, write_report,
    write_table_csv, DatasetEntry, DepthFormat, LoadedEntry, TableRow,
};
use depth_contours::losses::{gradcheck, total_loss, LossBreakdown, LossConfig, LossTerm, Predictions, Targets};
use depth_contours::metrics::{aggregate, evaluate_batch, evaluate_grids, EvalConfig, EvalReport};
use depth_contours::synth::{perturb, random_scene, render, shift_edges, SceneSpec};
use depth_contours::{Error, ProbGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::FileConfig;
use crate::pairing::{companion, list, pair, resolve, DEPTH_EXTS, MASK_EXTS};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or inputs that make the run meaningless.
    Config(String),
    Run(String),
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Clean,
    Failures,
}

fn config(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

fn run(e: impl Display) -> CliError {
    CliError::Run(e.to_string())
}

pub struct Context {
    pub out: PathBuf,
    pub file: FileConfig,
    pub seed: Option<u64>,
    pub timestamp: Option<String>,
}

impl Context {
    fn dir(&self, sub: &str) -> CliResult<PathBuf> {
        let d = if sub.is_empty() { self.out.clone() } else { self.out.join(sub) };
        fs::create_dir_all(&d).map_err(|e| run(format!("{}: {e}", d.display())))?;
        Ok(d)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir("")?.join(name);
        fs::write(&path, bytes).map_err(|e| run(format!("{}: {e}", path.display())))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(run)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

#[derive(Debug, Default, Serialize)]
struct Manifest {
    unmatched_pred: Vec<String>,
    unmatched_gt: Vec<String>,
    failed: BTreeMap<String, String>,
}

impl Manifest {
    fn status(&self) -> Status {
        if self.unmatched_pred.is_empty() && self.unmatched_gt.is_empty() && self.failed.is_empty() {
            Status::Clean
        } else {
            Status::Failures
        }
    }

    fn report(&self) {
        for id in &self.unmatched_pred {
            eprintln!("unmatched prediction: {id}");
        }
        for id in &self.unmatched_gt {
            eprintln!("unmatched ground truth: {id}");
        }
        for (id, e) in &self.failed {
            eprintln!("failed {id}: {e}");
        }
    }
}

fn dataset(pred: &Path, gt: &Path, contours: Option<&Path>) -> CliResult<(Vec<DatasetEntry>, Manifest)> {
    let preds = list(&resolve(pred, "depth"), DEPTH_EXTS).map_err(config)?;
    let gts = list(&resolve(gt, "depth"), DEPTH_EXTS).map_err(config)?;
    let contour_dir = contours.map(Path::to_path_buf).or_else(|| companion(gt, "contours"));
    let masks = match &contour_dir {
        Some(d) => list(d, MASK_EXTS).map_err(config)?,
        None => BTreeMap::new(),
    };
    let p = pair(&preds, &gts);
    if p.matched.is_empty() {
        return Err(config(format!(
            "no ids shared between {} and {}",
            pred.display(),
            gt.display()
        )));
    }
    let entries = p
        .matched
        .into_iter()
        .map(|(id, pred, gt)| DatasetEntry {
            contours: masks.get(&id).cloned(),
            normals: None,
            id,
            pred,
            gt,
        })
        .collect();
    let manifest = Manifest {
        unmatched_pred: p.only_left,
        unmatched_gt: p.only_right,
        ..Manifest::default()
    };
    Ok((entries, manifest))
}

fn table(method: &str, report: &EvalReport) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &[TableRow { method, report }]).map_err(run)?;
    Ok(buf)
}

pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub contours: Option<PathBuf>,
    pub method: String,
    pub cfg: EvalConfig,
}

/// Writes `reports/<id>.json`, `aggregate.json`, `table.csv` and `failures.json`.
pub fn eval(ctx: &Context, a: &EvalArgs) -> CliResult<Status> {
    let (entries, mut manifest) = dataset(&a.pred, &a.gt, a.contours.as_deref())?;
    let reports_dir = ctx.dir("reports")?;
    let mut ok = Vec::new();
    for (e, r) in entries.iter().zip(evaluate_batch(&entries, &a.cfg)) {
        match r {
            Ok(mut rep) => {
                rep.timestamp = ctx.timestamp.clone();
                write_report(&rep, &reports_dir.join(format!("{}.json", e.id))).map_err(run)?;
                ok.push(rep);
            }
            Err(err) => {
                manifest.failed.insert(e.id.clone(), err.to_string());
            }
        }
    }
    ctx.write_json("failures.json", &manifest)?;
    manifest.report();
    if ok.is_empty() {
        return Err(run("no entry could be evaluated"));
    }
    let mut agg = aggregate(&a.method, &ok, a.cfg.aggregation).map_err(run)?;
    agg.timestamp = ctx.timestamp.clone();
    write_report(&agg, &ctx.dir("")?.join("aggregate.json")).map_err(run)?;
    let csv = table(&a.method, &agg)?;
    ctx.write("table.csv", &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(manifest.status())
}

pub struct DbeArgs {
    pub pred: PathBuf,
    pub gt_edges: PathBuf,
    pub canny: Vec<CannyParams>,
    pub theta: f64,
}

fn defined(r: depth_contours::Result<ChamferScore>) -> depth_contours::Result<Option<f64>> {
    match r {
        Ok(s) => Ok(Some(s.value)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

type Scores = Vec<(Option<f64>, Option<f64>)>;

fn dbe_one(pred: &Path, gt: &Path, params: &[CannyParams], theta: f64) -> depth_contours::Result<Scores> {
    let d = read_depth_auto(pred)?;
    let gt = read_mask(gt)?;
    let (w, h) = (d.width(), d.height());
    if (w, h) != (gt.width(), gt.height()) {
        return Err(Error::Dimension(format!(
            "depth {w}x{h} vs edges {}x{}",
            gt.width(),
            gt.height()
        )));
    }
    let norm = match normalize_depth(&d) {
        Ok(n) => Some(n),
        Err(Error::DegenerateRange(_) | Error::EmptyDomain(_)) => None,
        Err(e) => return Err(e),
    };
    params
        .iter()
        .map(|p| {
            let e = match &norm {
                Some(n) => canny(n, p)?,
                None => EdgeMap::empty(w, h),
            };
            Ok((
                defined(dbe_accuracy(&e, &gt, theta))?,
                defined(dbe_completeness(&e, &gt, theta))?,
            ))
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"))
}

fn mean(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = vals.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Writes `dbe.csv`: one row per image and a final `mean` row over defined cells.
pub fn dbe(ctx: &Context, a: &DbeArgs) -> CliResult<Status> {
    if !(a.theta > 0.0) {
        return Err(config(format!("truncation radius must be positive, got {}", a.theta)));
    }
    let preds = list(&resolve(&a.pred, "depth"), DEPTH_EXTS).map_err(config)?;
    let gts = list(&resolve(&a.gt_edges, "contours"), MASK_EXTS).map_err(config)?;
    let p = pair(&preds, &gts);
    if p.matched.is_empty() {
        return Err(config(format!(
            "no ids shared between {} and {}",
            a.pred.display(),
            a.gt_edges.display()
        )));
    }
    let results: Vec<_> = p
        .matched
        .par_iter()
        .map(|(_, pred, gt)| dbe_one(pred, gt, &a.canny, a.theta))
        .collect();
    let mut manifest = Manifest {
        unmatched_pred: p.only_left.clone(),
        unmatched_gt: p.only_right.clone(),
        ..Manifest::default()
    };
    let mut rows: Vec<(String, Scores)> = Vec::new();
    for ((id, _, _), r) in p.matched.iter().zip(results) {
        match r {
            Ok(s) => rows.push((id.clone(), s)),
            Err(e) => {
                manifest.failed.insert(id.clone(), e.to_string());
            }
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend(a.canny.iter().map(|p| format!("dbe_acc_{}_{}", p.sigma_low, p.sigma_high)));
    header.extend(a.canny.iter().map(|p| format!("dbe_comp_{}_{}", p.sigma_low, p.sigma_high)));
    w.write_record(&header).map_err(run)?;
    for (id, s) in &rows {
        let mut rec = vec![id.clone()];
        rec.extend(s.iter().map(|v| cell(v.0)));
        rec.extend(s.iter().map(|v| cell(v.1)));
        w.write_record(&rec).map_err(run)?;
    }
    let mut rec = vec!["mean".to_string()];
    rec.extend((0..a.canny.len()).map(|k| cell(mean(rows.iter().map(|r| r.1[k].0)))));
    rec.extend((0..a.canny.len()).map(|k| cell(mean(rows.iter().map(|r| r.1[k].1)))));
    w.write_record(&rec).map_err(run)?;
    let bytes = w.into_inner().map_err(run)?;

    ctx.write("dbe.csv", &bytes)?;
    ctx.write_json("failures.json", &manifest)?;
    manifest.report();
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(manifest.status())
}

pub struct SweepArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub contours: Option<PathBuf>,
    pub samples: usize,
    pub seed: u64,
    pub cfg: EvalConfig,
}

/// Threshold pair drawn uniformly from `{(lo, hi) in (0,1)^2 : lo < hi}`.
pub fn draw_thresholds(rng: &mut impl Rng) -> (f64, f64) {
    loop {
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        if u != v && u > 0.0 && v > 0.0 {
            return (u.min(v), u.max(v));
        }
    }
}

/// Writes `sweep.csv` with one aggregate row per threshold sample.
pub fn sweep(ctx: &Context, a: &SweepArgs) -> CliResult<Status> {
    if a.samples == 0 {
        return Err(config("sweep needs at least one sample"));
    }
    let (entries, mut manifest) = dataset(&a.pred, &a.gt, a.contours.as_deref())?;
    let loaded: Vec<(String, depth_contours::Result<LoadedEntry>)> =
        entries.par_iter().map(|e| (e.id.clone(), e.load())).collect();
    let mut data = Vec::new();
    for (id, r) in loaded {
        match r {
            Ok(l) => data.push((id, l)),
            Err(e) => {
                manifest.failed.insert(id, e.to_string());
            }
        }
    }
    if data.is_empty() {
        ctx.write_json("failures.json", &manifest)?;
        manifest.report();
        return Err(run("no entry could be loaded"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample", "sigma_low", "sigma_high", "dbe_acc", "rmse_log"]).map_err(run)?;
    for i in 0..a.samples {
        let (lo, hi) = draw_thresholds(&mut rng);
        let params = CannyParams {
            sigma_low: lo,
            sigma_high: hi,
            gauss_sigma: a.cfg.canny.first().map_or(1.0, |p| p.gauss_sigma),
        };
        let cfg = EvalConfig {
            canny: vec![params],
            ..a.cfg.clone()
        };
        let results: Vec<_> = data
            .par_iter()
            .map(|(id, l)| evaluate_grids(id, &l.pred, &l.gt, l.contours.as_ref(), &cfg))
            .collect();
        let mut ok = Vec::new();
        for ((id, _), r) in data.iter().zip(results) {
            match r {
                Ok(rep) => ok.push(rep),
                Err(e) => {
                    manifest.failed.entry(id.clone()).or_insert_with(|| e.to_string());
                }
            }
        }
        let (acc, rmse_log) = match aggregate("sweep", &ok, cfg.aggregation) {
            Ok(agg) => (agg.dbe_acc.get(&params.key()).copied().flatten(), Some(agg.rmse_log)),
            Err(_) => (None, None),
        };
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
        w.write_record([i.to_string(), format!("{lo:.6}"), format!("{hi:.6}"), fmt(acc), fmt(rmse_log)])
            .map_err(run)?;
    }
    let bytes = w.into_inner().map_err(run)?;
    ctx.write("sweep.csv", &bytes)?;
    ctx.write_json("failures.json", &manifest)?;
    manifest.report();
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(manifest.status())
}

pub struct LossArgs {
    pub pred_depth: PathBuf,
    pub pred_contours: PathBuf,
    pub pred_normals: PathBuf,
    pub gt_depth: PathBuf,
    pub gt_contours: PathBuf,
    pub gt_normals: PathBuf,
    pub cfg: LossConfig,
}

/// PBM labels or `Pf` probabilities, by extension.
fn read_contours(path: &Path) -> depth_contours::Result<ProbGrid> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pbm")) {
        let m = read_mask(path)?;
        ProbGrid::from_labels(m.width(), m.height(), m.bits())
    } else {
        read_probabilities(path)
    }
}

#[derive(Serialize)]
struct LossOutput {
    value: f64,
    terms: LossBreakdown,
    config: LossConfig,
}

/// Writes `losses.json` with the weighted total and every unweighted term.
pub fn losses(ctx: &Context, a: &LossArgs) -> CliResult<Status> {
    let pred = Predictions {
        depth: read_depth_auto(&a.pred_depth).map_err(run)?,
        contours: read_contours(&a.pred_contours).map_err(run)?,
        normals: read_normals(&a.pred_normals).map_err(run)?.into_grid(),
    };
    let gt = Targets {
        depth: read_depth_auto(&a.gt_depth).map_err(run)?,
        contours: read_contours(&a.gt_contours).map_err(run)?,
        normals: read_normals(&a.gt_normals).map_err(run)?,
    };
    let t = total_loss(&pred, &gt, &a.cfg).map_err(run)?;
    let out = LossOutput {
        value: t.value,
        terms: t.terms,
        config: a.cfg,
    };
    ctx.write_json("losses.json", &out)?;
    let terms = t.terms;
    for (name, v) in [
        ("depth", terms.depth),
        ("contour", terms.contour),
        ("normals", terms.normals),
        ("depth-contour", terms.depth_contour),
        ("depth-normal", terms.depth_normal),
        ("total", t.value),
    ] {
        println!("{name:<14} {v:.9e}");
    }
    Ok(Status::Clean)
}

pub struct GradArgs {
    pub terms: Vec<LossTerm>,
    pub seeds: u64,
    pub size: usize,
    pub step: f64,
    pub tol: f64,
}

/// Writes `gradcheck.csv`; any term above tolerance makes the run fail.
pub fn gradcheck_cmd(ctx: &Context, a: &GradArgs) -> CliResult<Status> {
    if a.seeds == 0 || !(a.tol > 0.0) || !(a.step > 0.0) || a.size < 3 {
        return Err(config("gradcheck needs seeds >= 1, size >= 3 and positive tol and step"));
    }
    let base = ctx.seed.unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["term", "seeds", "checked", "excluded", "max_rel_error", "pass"]).map_err(run)?;
    let mut status = Status::Clean;
    for &term in &a.terms {
        let reports: Vec<_> = (base..base + a.seeds)
            .into_par_iter()
            .map(|s| gradcheck(term, s, a.size, a.step))
            .collect::<Result<_, _>>()
            .map_err(run)?;
        let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        let checked: usize = reports.iter().map(|r| r.checked).sum();
        let excluded: usize = reports.iter().map(|r| r.excluded).sum();
        let pass = worst <= a.tol;
        if !pass {
            status = Status::Failures;
        }
        println!(
            "{:<14} max relative error {worst:.3e} over {checked} partials  {}",
            term.name(),
            if pass { "ok" } else { "FAIL" }
        );
        w.write_record([
            term.name().to_string(),
            a.seeds.to_string(),
            checked.to_string(),
            excluded.to_string(),
            format!("{worst:.6e}"),
            pass.to_string(),
        ])
        .map_err(run)?;
    }
    ctx.write("gradcheck.csv", &w.into_inner().map_err(run)?)?;
    Ok(status)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    /// Columns every primitive of the prediction moves right.
    #[serde(default)]
    pub shift: usize,
    #[serde(flatten)]
    pub spec: SceneSpec,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    #[serde(default)]
    pub scenes: Vec<SceneEntry>,
}

pub struct SynthArgs {
    pub spec: Option<PathBuf>,
    pub random: usize,
    pub width: usize,
    pub height: usize,
    pub shift: Option<usize>,
    pub format: DepthFormat,
}

fn load_scenes(path: &Path) -> CliResult<SynthFile> {
    let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Writes ground truth under `gt/` and the prediction depth under
/// `pred/depth/`, plus `scenes.json` listing every rendered spec.
pub fn synth(ctx: &Context, a: &SynthArgs) -> CliResult<Status> {
    let mut file = match &a.spec {
        Some(p) => load_scenes(p)?,
        None => SynthFile::default(),
    };
    let base = ctx.seed.unwrap_or(0);
    for i in 0..a.random {
        let seed = base + i as u64;
        file.scenes.push(SceneEntry {
            id: format!("scene_{seed:04}"),
            shift: 0,
            spec: random_scene(seed, a.width, a.height).map_err(config)?,
        });
    }
    if file.scenes.is_empty() {
        return Err(config("nothing to render: pass --spec or --random"));
    }
    if let Some(k) = a.shift {
        for s in &mut file.scenes {
            s.shift = k;
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &file.scenes {
        if !seen.insert(&s.id) {
            return Err(config(format!("scene id {:?} appears twice", s.id)));
        }
    }

    let rendered: Vec<_> = file
        .scenes
        .par_iter()
        .map(|s| -> depth_contours::Result<_> {
            let truth = render(&s.spec)?;
            let shifted = if s.shift > 0 { shift_edges(&s.spec, s.shift)? } else { truth.clone() };
            let pred = match &s.spec.noise {
                Some(n) => perturb(&shifted, n, s.spec.seed)?,
                None => shifted.depth,
            };
            Ok((truth, pred))
        })
        .collect::<Result<_, _>>()
        .map_err(config)?;

    let gt_dir = ctx.dir("gt")?;
    let pred_dir = ctx.dir("pred/depth")?;
    for (s, (truth, pred)) in file.scenes.iter().zip(&rendered) {
        truth.write(&gt_dir, &s.id, a.format).map_err(run)?;
        let path = pred_dir.join(format!("{}.{}", s.id, a.format.extension()));
        write_depth(&path, pred, a.format).map_err(run)?;
    }
    ctx.write_json("scenes.json", &file)?;
    println!("wrote {} scenes to {}", file.scenes.len(), ctx.out.display());
    Ok(Status::Clean)
}
