//! Training objective: penalty-reduced focal loss on the heatmap plus masked
//! L1 losses on the size and offset maps, each normalized by the object count.

use serde::{Deserialize, Serialize};

use crate::codec::TargetSet;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::NetOutput;
use crate::nn::Scalar;

/// Predictions are clamped to `[EPS, 1 - EPS]` before logarithms.
pub const PRED_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma_h: f64,
    pub gamma_s: f64,
    pub gamma_offset: f64,
    /// Focal exponent on the prediction.
    pub alpha: f64,
    /// Penalty-reduction exponent on the Gaussian target.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gamma_h: 1.0,
            gamma_s: 5.0,
            gamma_offset: 10.0,
            alpha: 2.0,
            beta: 4.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma_h, self.gamma_s, self.gamma_offset, self.alpha, self.beta];
        if all.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "loss weights must be strictly positive: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub l_h: f64,
    pub l_s: f64,
    pub l_offset: f64,
    pub total: f64,
    pub n_objects: usize,
}

fn denom(n: usize) -> f64 {
    n.max(1) as f64
}

/// Focal heatmap loss and its gradient with respect to `pred`.
///
/// Pixels whose target is exactly 1 are positives; every other pixel is
/// weighted by `(1 - target)^beta`.
pub fn heatmap_focal_loss<T: Scalar>(
    pred: &Grid<T>,
    target: &Grid<T>,
    n: usize,
    w: &LossWeights,
) -> Result<(T, Grid<T>)> {
    pred.check_dims(target, "heatmap prediction vs target")?;
    let (c, h, wd) = pred.dims();
    let eps = T::lit(PRED_EPS);
    let (lo, hi) = (eps, T::one() - eps);
    let (alpha, beta) = (T::lit(w.alpha), T::lit(w.beta));
    let scale = T::lit(1.0 / denom(n));
    let one = T::one();
    let mut grad = Grid::zeros(c, h, wd);
    let mut sum = T::zero();
    for ((&p_raw, &t), g) in pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .zip(grad.as_mut_slice())
    {
        let p = p_raw.max(lo).min(hi);
        let clamped = p != p_raw;
        let (value, dvalue) = if t == one {
            let q = one - p;
            let v = q.powf(alpha) * p.ln();
            let dv = -alpha * q.powf(alpha - one) * p.ln() + q.powf(alpha) / p;
            (v, dv)
        } else {
            let wgt = (one - t).powf(beta);
            let v = wgt * p.powf(alpha) * (one - p).ln();
            let dv = wgt * (alpha * p.powf(alpha - one) * (one - p).ln() - p.powf(alpha) / (one - p));
            (v, dv)
        };
        sum = sum - value;
        if !clamped {
            *g = -dvalue * scale;
        }
    }
    Ok((sum * scale, grad))
}

/// L1 loss over mask pixels, summed over channels; shared by size and offset.
fn masked_l1<T: Scalar>(
    pred: &Grid<T>,
    target: &Grid<T>,
    mask: &Grid<T>,
    n: usize,
    what: &str,
) -> Result<(T, Grid<T>)> {
    pred.check_dims(target, what)?;
    let (c, h, w) = pred.dims();
    if mask.dims() != (1, h, w) {
        return Err(Error::DimensionMismatch(format!(
            "{what}: mask {:?} vs maps {:?}",
            mask.dims(),
            pred.dims()
        )));
    }
    let scale = T::lit(1.0 / denom(n));
    let mut grad = Grid::zeros(c, h, w);
    let mut sum = T::zero();
    let plane = h * w;
    for (i, &m) in mask.as_slice().iter().enumerate() {
        if m <= T::zero() {
            continue;
        }
        for ch in 0..c {
            let j = ch * plane + i;
            let d = pred.as_slice()[j] - target.as_slice()[j];
            sum = sum + d.abs();
            grad.as_mut_slice()[j] = if d > T::zero() {
                scale
            } else if d < T::zero() {
                -scale
            } else {
                T::zero()
            };
        }
    }
    Ok((sum * scale, grad))
}

/// Masked L1 loss on the normalized height/width maps.
pub fn size_loss<T: Scalar>(
    pred_size: &Grid<T>,
    target_size: &Grid<T>,
    mask: &Grid<T>,
    n: usize,
) -> Result<(T, Grid<T>)> {
    masked_l1(pred_size, target_size, mask, n, "size")
}

/// Masked L1 loss on the sub-pixel offset maps.
pub fn offset_loss<T: Scalar>(
    pred_off: &Grid<T>,
    target_off: &Grid<T>,
    mask: &Grid<T>,
    n: usize,
) -> Result<(T, Grid<T>)> {
    masked_l1(pred_off, target_off, mask, n, "offset")
}

/// Weighted sum of the three losses for one page, with gradients for every map.
pub fn total_loss<T: Scalar>(
    pred: &NetOutput<T>,
    targets: &TargetSet,
    w: &LossWeights,
) -> Result<(LossReport, NetOutput<T>)> {
    let n = targets.n_objects;
    let mask = targets.mask.cast::<T>();
    let (l_h, g_h) = heatmap_focal_loss(&pred.heatmap, &targets.heatmap.cast(), n, w)?;
    let (l_s, g_s) = size_loss(&pred.size, &targets.size_map.cast(), &mask, n)?;
    let (l_o, g_o) = offset_loss(&pred.offset, &targets.offset_map.cast(), &mask, n)?;
    let to_f64 = |v: T| v.to_f64().expect("finite loss");
    let report = LossReport {
        l_h: to_f64(l_h),
        l_s: to_f64(l_s),
        l_offset: to_f64(l_o),
        total: to_f64(T::lit(w.gamma_h) * l_h + T::lit(w.gamma_s) * l_s + T::lit(w.gamma_offset) * l_o),
        n_objects: n,
    };
    let scaled = |mut g: Grid<T>, k: f64| {
        let k = T::lit(k);
        g.as_mut_slice().iter_mut().for_each(|v| *v = *v * k);
        g
    };
    let grads = NetOutput {
        heatmap: scaled(g_h, w.gamma_h),
        size: scaled(g_s, w.gamma_s),
        offset: scaled(g_o, w.gamma_offset),
    };
    Ok((report, grads))
}
