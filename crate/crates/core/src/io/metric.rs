use crate::error::{Error, Result};
use crate::tensor::LabelMap;

/// Mean intersection-over-union between a prediction and ground truth.
///
/// Pixels whose ground-truth label equals `ignore_label` are skipped. A
/// class that appears in neither map (after ignoring) does not enter the
/// mean; if no class appears at all the maps agree trivially and the result
/// is 1.
pub fn compute_miou(pred: &LabelMap, gt: &LabelMap, k: usize, ignore_label: Option<u32>) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::shape(format!(
            "prediction {}x{} and ground truth {}x{} differ",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut inter = vec![0u64; k];
    let mut pred_count = vec![0u64; k];
    let mut gt_count = vec![0u64; k];
    for (i, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
        if Some(g) == ignore_label {
            continue;
        }
        if p as usize >= k {
            return Err(Error::shape(format!("predicted label {p} at pixel {i} is outside [0, {k})")));
        }
        if g as usize >= k {
            return Err(Error::shape(format!("ground-truth label {g} at pixel {i} is outside [0, {k})")));
        }
        pred_count[p as usize] += 1;
        gt_count[g as usize] += 1;
        if p == g {
            inter[p as usize] += 1;
        }
    }
    let ious: Vec<f64> = (0..k)
        .filter_map(|c| {
            let union = pred_count[c] + gt_count[c] - inter[c];
            (union > 0).then(|| inter[c] as f64 / union as f64)
        })
        .collect();
    if ious.is_empty() {
        return Ok(1.0);
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}
