//! Bodies of the five subcommands.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use errnet_core::gradcheck::{corrupted_check, model_grad_check, op_suite};
use errnet_core::loss::LossBreakdown;
use errnet_core::metrics::{EvalPair, Map, MetricReport, Scores};
use errnet_core::ops;
use errnet_core::optim::{train_step, AdamState};
use errnet_core::rng::SeededRng;
use errnet_core::synth::{draw_scale, multiscale_batch, synth_sample, SynthConfig};
use errnet_core::{final_prediction, ErrNet, Tensor};
use rayon::prelude::*;

use crate::checkpoint;
use crate::config::Config;
use crate::dataset::{files_by_stem, Layout};
use crate::error::{CliError, Result};
use crate::pnm;

pub const LOSS_CSV: &str = "loss.csv";
pub const CHECKPOINT: &str = "model.ckpt";
pub const DUMP_DIR: &str = "dump";
pub const EVAL_HEADER: [&str; 5] = ["file", "s_alpha", "e_phi", "fw_beta", "mae"];

/// Threshold for single operators.
pub const OP_TOLERANCE: f64 = 1e-5;
/// Threshold for the full objective.
pub const MODEL_TOLERANCE: f64 = 1e-3;
pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_SIZE: usize = 32;

/// Stream for the training order and scale draws; model init uses the raw seed.
const TRAIN_STREAM: u64 = 0x7261_696e;

pub fn synth(cfg: &Config, out: &Path) -> Result<()> {
    let sc = cfg.synth_config();
    sc.validate()?;
    let layout = Layout::new(out);
    layout.create_dirs()?;
    let ids = (0..sc.count)
        .into_par_iter()
        .map(|i| {
            let s = synth_sample(&sc, i)?;
            layout.write_sample(&s)?;
            Ok(s.id)
        })
        .collect::<Result<Vec<_>>>()?;
    layout.write_manifest(ids.iter().map(String::as_str))?;
    println!("wrote {} samples to {}", ids.len(), out.display());
    Ok(())
}

pub fn loss_header() -> Vec<String> {
    let mut h: Vec<String> = ["iter", "epoch", "scale", "size", "total", "edge"].map(String::from).to_vec();
    for level in ["3", "4", "5", "g"] {
        h.push(format!("wbce_{level}"));
        h.push(format!("wiou_{level}"));
    }
    h
}

fn loss_row(iter: u64, epoch: usize, scale: f64, size: usize, b: &LossBreakdown) -> Vec<String> {
    let mut row = vec![iter.to_string(), epoch.to_string(), scale.to_string(), size.to_string(), b.total.to_string(), b.edge.to_string()];
    for (_, l) in &b.per_level {
        row.push(l.wbce.to_string());
        row.push(l.wiou.to_string());
    }
    row
}

pub fn train(cfg: &Config, data: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    cfg.training_sizes()?;
    let layout = Layout::new(data);
    let samples = layout.load_all()?;
    let side = samples[0].image.shape().h;
    if let Some(s) = samples.iter().find(|s| {
        let sh = s.image.shape();
        sh.h != side || sh.w != side
    }) {
        return Err(CliError::Validation(format!(
            "{}: training images must all be {side}x{side}, found {}x{}",
            s.id,
            s.image.shape().w,
            s.image.shape().h
        )));
    }

    let mut net = ErrNet::new(cfg.model_config(), cfg.seed)?;
    let mut adam = AdamState::new(&net.params);
    if let Some(path) = resume {
        let entries = checkpoint::read(path)?;
        checkpoint::load_params(&mut net, &entries, path)?;
        adam = checkpoint::load_adam(&net, &entries, path)?
            .ok_or_else(|| CliError::Validation(format!("{}: no optimiser state to resume from", path.display())))?;
    }
    let start = adam.step;
    let mut rng = SeededRng::fork(cfg.seed ^ TRAIN_STREAM, start);

    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let csv_path = out.join(LOSS_CSV);
    let mut csv = csv::Writer::from_path(&csv_path).map_err(CliError::csv(&csv_path))?;
    csv.write_record(loss_header()).map_err(CliError::csv(&csv_path))?;
    csv.flush().map_err(CliError::io(&csv_path))?;

    let base = cfg.input_size as f64 / side as f64;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut n = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let scale = draw_scale(&mut rng, &cfg.scales);
            let refs: Vec<_> = chunk.iter().map(|&i| &samples[i]).collect();
            let batch = multiscale_batch(&refs, scale * base)?;
            let b = train_step(&mut net, &mut adam, &batch, cfg.lr)?;
            csv.write_record(loss_row(adam.step, epoch, scale, batch.size, &b)).map_err(CliError::csv(&csv_path))?;
            csv.flush().map_err(CliError::io(&csv_path))?;
            sum += b.total;
            n += 1;
        }
        eprintln!("epoch {epoch}: mean loss {}", sum / n as f64);
    }
    let ckpt = out.join(CHECKPOINT);
    checkpoint::write(&ckpt, &checkpoint::entries_for(&net, Some(&adam)))?;
    println!("trained {} iterations; wrote {} and {}", adam.step - start, csv_path.display(), ckpt.display());
    Ok(())
}

/// Network from `cfg`'s shapes with parameters from a checkpoint.
pub fn load_model(cfg: &Config, path: &Path) -> Result<ErrNet> {
    let mut net = ErrNet::new(cfg.model_config(), cfg.seed)?;
    let entries = checkpoint::read(path)?;
    checkpoint::load_params(&mut net, &entries, path)?;
    Ok(net)
}

fn probability(t: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    Ok(ops::resize_forward(t, h, w)?.map(ops::sigmoid))
}

/// Input resized to `input_size`; maps come back at the original resolution.
pub fn predict_maps(net: &ErrNet, cfg: &Config, image: &Tensor) -> Result<Vec<(&'static str, Tensor)>> {
    let s = image.shape();
    let x = ops::resize_forward(image, cfg.input_size, cfg.input_size)?;
    let ps = net.predict(&x)?;
    Ok(vec![
        ("p3", final_prediction(&ps, s.h, s.w)?),
        ("p4", probability(&ps.p_4, s.h, s.w)?),
        ("p5", probability(&ps.p_5, s.h, s.w)?),
        ("pg", probability(&ps.p_g, s.h, s.w)?),
        ("pe", probability(&ps.p_e, s.h, s.w)?),
    ])
}

fn sub_dir_or(dir: &Path, sub: &str) -> PathBuf {
    let candidate = dir.join(sub);
    if candidate.is_dir() { candidate } else { dir.to_path_buf() }
}

pub fn predict(cfg: &Config, ckpt: &Path, images: &Path, out: &Path, dump_all: bool) -> Result<()> {
    let net = load_model(cfg, ckpt)?;
    let files = files_by_stem(&sub_dir_or(images, "images"), "ppm")?;
    if files.is_empty() {
        return Err(CliError::Validation(format!("{}: no .ppm images", images.display())));
    }
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let dump = out.join(DUMP_DIR);
    if dump_all {
        fs::create_dir_all(&dump).map_err(CliError::io(&dump))?;
    }
    files.par_iter().try_for_each(|(id, path)| -> Result<()> {
        let image = pnm::read_ppm(path)?;
        let maps = predict_maps(&net, cfg, &image)?;
        pnm::write_pgm(&out.join(format!("{id}.pgm")), &maps[0].1)?;
        if dump_all {
            for (key, m) in &maps[1..] {
                pnm::write_pgm(&dump.join(format!("{id}_{key}.pgm")), m)?;
            }
        }
        Ok(())
    })?;
    println!("wrote {} prediction(s) to {}", files.len(), out.display());
    Ok(())
}

fn score(pred: &Path, gt: &Path) -> Result<Scores> {
    let p = pnm::read_pgm(pred)?;
    let g = pnm::read_pgm(gt)?;
    let (sp, sg) = (p.shape(), g.shape());
    if (sp.h, sp.w) != (sg.h, sg.w) {
        return Err(CliError::Validation(format!("size mismatch: prediction {}x{}, ground truth {}x{}", sp.w, sp.h, sg.w, sg.h)));
    }
    let pair = EvalPair::new(Map::from_tensor(&p), Map::from_tensor(&g))?;
    Ok(Scores::compute(&pair))
}

/// Scores every `.pgm` stem present in either folder. Stems missing on one
/// side and unreadable or mismatched pairs are listed in `errors`.
pub fn evaluate_folder(pred_dir: &Path, gt_dir: &Path) -> Result<MetricReport> {
    let preds = files_by_stem(pred_dir, "pgm")?;
    let gts = files_by_stem(&sub_dir_or(gt_dir, "masks"), "pgm")?;
    let mut stems: Vec<&String> = preds.iter().chain(&gts).map(|(s, _)| s).collect();
    stems.sort();
    stems.dedup();
    let find = |list: &'_ [(String, PathBuf)], stem: &str| list.iter().find(|(s, _)| s == stem).map(|(_, p)| p.clone());
    let results: Vec<(String, std::result::Result<Scores, String>)> = stems
        .par_iter()
        .map(|&stem| {
            let r = match (find(&preds, stem), find(&gts, stem)) {
                (Some(p), Some(g)) => score(&p, &g).map_err(|e| e.to_string()),
                (None, _) => Err("missing prediction".to_string()),
                (_, None) => Err("missing ground truth".to_string()),
            };
            (stem.clone(), r)
        })
        .collect();
    let mut report = MetricReport::default();
    for (stem, r) in results {
        match r {
            Ok(s) => report.rows.push((stem, s)),
            Err(e) => report.errors.push((stem, e)),
        }
    }
    Ok(report)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_report(path: &Path, report: &MetricReport) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e| CliError::csv(path)(e);
    w.write_record(EVAL_HEADER).map_err(err)?;
    let row = |name: &str, s: &Scores| [name.to_string(), fmt6(s.s_alpha), fmt6(s.e_phi), fmt6(s.f_w_beta), fmt6(s.mae)];
    for (name, s) in &report.rows {
        w.write_record(row(name, s)).map_err(err)?;
    }
    if let Some(m) = report.means() {
        w.write_record(row("MEAN", &m)).map_err(err)?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn eval(pred: &Path, gt: &Path, out: &Path) -> Result<()> {
    let report = evaluate_folder(pred, gt)?;
    write_report(out, &report)?;
    for (id, e) in &report.errors {
        eprintln!("{id}: {e}");
    }
    let Some(m) = report.means() else {
        return Err(CliError::Validation(format!("no scorable pairs between {} and {}", pred.display(), gt.display())));
    };
    println!("S_alpha {}", fmt6(m.s_alpha));
    println!("E_phi {}", fmt6(m.e_phi));
    println!("Fw_beta {}", fmt6(m.f_w_beta));
    println!("MAE {}", fmt6(m.mae));
    if !report.errors.is_empty() {
        let ids: Vec<&str> = report.errors.iter().map(|(i, _)| i.as_str()).collect();
        return Err(CliError::Validation(format!("{} file(s) could not be scored: {}", ids.len(), ids.join(", "))));
    }
    Ok(())
}

/// One line of the gradient-check report.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub note: String,
}

impl Component {
    pub fn passed(&self) -> bool {
        self.error < self.tolerance
    }
}

/// Every operator, then every parameter tensor of a fresh model on one
/// synthetic `1x3x32x32` sample.
pub fn gradcheck_components(cfg: &Config, inject_fault: bool) -> Result<Vec<Component>> {
    let mut out: Vec<Component> = op_suite(cfg.seed, GRADCHECK_EPS)?
        .into_iter()
        .map(|(name, error)| Component { name: format!("op.{name}"), error, tolerance: OP_TOLERANCE, note: String::new() })
        .collect();
    if inject_fault {
        out.push(Component {
            name: "op.corrupted_backward".into(),
            error: corrupted_check(GRADCHECK_EPS)?,
            tolerance: OP_TOLERANCE,
            note: "injected fault".into(),
        });
    }
    let sc = SynthConfig { seed: cfg.seed, count: 1, size: GRADCHECK_SIZE, contrast: cfg.contrast };
    let s = synth_sample(&sc, 0)?;
    let net = ErrNet::new(cfg.model_config(), cfg.seed)?;
    for c in model_grad_check(&net, &s.image, &s.mask, &s.edge, GRADCHECK_EPS, 2, cfg.seed)? {
        let mut note = format!("{} probe(s)", c.report.checked);
        if c.kinks_skipped > 0 {
            note.push_str(&format!(", {} kink(s) skipped", c.kinks_skipped));
        }
        if c.report.checked == 0 {
            note.push_str(", no smooth coordinate found");
        }
        out.push(Component { name: format!("loss.{}", c.name), error: c.report.max_relative_error, tolerance: MODEL_TOLERANCE, note });
    }
    Ok(out)
}

pub fn gradcheck(cfg: &Config, inject_fault: bool) -> Result<()> {
    let comps = gradcheck_components(cfg, inject_fault)?;
    let width = comps.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &comps {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        println!("{:<width$}  {:.3e}  (< {:.0e})  {verdict}  {}", c.name, c.error, c.tolerance, c.note);
    }
    let failed: Vec<&str> = comps.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let worst = comps.iter().map(|c| c.error).fold(0.0, f64::max);
    println!("{} component(s), worst relative error {worst:.3e}", comps.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::NumericalCheck(format!("{} component(s) over tolerance: {}", failed.len(), failed.join(", "))))
    }
}

