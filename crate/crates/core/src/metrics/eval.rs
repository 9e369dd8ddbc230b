//! Batch evaluation of predicted sketches against ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::image::load_gray;
use crate::metrics::{fsim::fsim, scoot::scoot, ssim::ssim};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub ssim: f64,
    pub fsim: f64,
    pub scoot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_ssim: f64,
    pub mean_fsim: f64,
    pub mean_scoot: f64,
}

/// Scores (name, prediction, ground truth) triples; images are 2D [H,W]
/// grayscale in [0,1].
pub fn eval_pairs(pairs: &[(String, Tensor<f64>, Tensor<f64>)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::data("no image pairs to evaluate"));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let (mut s_sum, mut f_sum, mut c_sum) = (0.0, 0.0, 0.0);
    for (name, pred, gt) in pairs {
        let row = EvalRow {
            name: name.clone(),
            ssim: ssim(pred, gt)
                .map_err(|e| Error::data(format!("{name}: ssim: {e}")))?,
            fsim: fsim(pred, gt)
                .map_err(|e| Error::data(format!("{name}: fsim: {e}")))?,
            scoot: scoot(pred, gt)
                .map_err(|e| Error::data(format!("{name}: scoot: {e}")))?,
        };
        s_sum += row.ssim;
        f_sum += row.fsim;
        c_sum += row.scoot;
        rows.push(row);
    }
    let n = rows.len() as f64;
    Ok(EvalReport {
        rows,
        mean_ssim: s_sum / n,
        mean_fsim: f_sum / n,
        mean_scoot: c_sum / n,
    })
}

fn image_names(dir: &Path) -> Result<BTreeSet<String>> {
    let mut names = BTreeSet::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::data(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::data(format!("{}: {e}", dir.display())))?;
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "png" | "pgm" | "ppm") {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.insert(name.to_string());
            }
        }
    }
    Ok(names)
}

/// Evaluates every image in `pred_dir` against the same-named file in
/// `gt_dir`. The two directories must hold exactly the same set of image
/// filenames.
pub fn eval_set(pred_dir: &Path, gt_dir: &Path) -> Result<EvalReport> {
    let preds = image_names(pred_dir)?;
    let gts = image_names(gt_dir)?;
    let only_pred: Vec<_> = preds.difference(&gts).cloned().collect();
    let only_gt: Vec<_> = gts.difference(&preds).cloned().collect();
    if !only_pred.is_empty() || !only_gt.is_empty() {
        return Err(Error::data(format!(
            "prediction and ground-truth sets differ; only in {}: [{}]; only in {}: [{}]",
            pred_dir.display(),
            only_pred.join(", "),
            gt_dir.display(),
            only_gt.join(", ")
        )));
    }
    if preds.is_empty() {
        return Err(Error::data(format!(
            "no images found under {}",
            pred_dir.display()
        )));
    }
    let mut pairs = Vec::with_capacity(preds.len());
    for name in &preds {
        let pred: Tensor<f64> = load_gray(&pred_dir.join(name))?;
        let gt: Tensor<f64> = load_gray(&gt_dir.join(name))?;
        let (ph, pw) = (pred.shape()[1], pred.shape()[2]);
        let (gh, gw) = (gt.shape()[1], gt.shape()[2]);
        pairs.push((
            name.clone(),
            pred.reshape(&[ph, pw])?,
            gt.reshape(&[gh, gw])?,
        ));
    }
    eval_pairs(&pairs)
}

/// Renders a report as CSV, scores as percentages with two decimals,
/// followed by a MEAN row.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("filename,ssim,fsim,scoot\n");
    let pct = |v: f64| format!("{:.2}", v * 100.0);
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.name,
            pct(row.ssim),
            pct(row.fsim),
            pct(row.scoot)
        )
        .expect("string write");
    }
    writeln!(
        out,
        "MEAN,{},{},{}",
        pct(report.mean_ssim),
        pct(report.mean_fsim),
        pct(report.mean_scoot)
    )
    .expect("string write");
    out
}
