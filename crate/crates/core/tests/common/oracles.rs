//! Reference checks shared by the module tests and the acceptance run.
//!
//! Each check returns `Ok(detail)` or `Err(reason)` so the acceptance target
//! can print one line per check while module tests simply unwrap.

use std::time::Instant;

use hrcenternet::codec::{decode_detections, encode_targets, CodecConfig, Detection, TargetSet};
use hrcenternet::data::{generate_page, read_tensor, write_tensor, SynthConfig};
use hrcenternet::eval::{evaluate, match_and_score, score_output, MATCH_IOU};
use hrcenternet::geom::BBox;
use hrcenternet::grid::{Grid, TensorGrid};
use hrcenternet::loss::{heatmap_focal_loss, offset_loss, size_loss, total_loss, LossWeights};
use hrcenternet::model::{objective, Model, ModelConfig, NetOutput};
use hrcenternet::nn::{Adam, AdamConfig, Module, Network, Tensor};
use hrcenternet::train::{train, TrainConfig};
use rand::Rng;

use super::{central_diff, random_grid, rel_err, rng};

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- losses

fn one_pixel(v: f64) -> Grid<f64> {
    Grid::filled(1, 1, 1, v)
}

/// Loss terms on one 1x1 page whose values are easy to work out by hand.
pub fn loss_hand_values() -> Check {
    let w = LossWeights::default();
    let (pos, _) = heatmap_focal_loss(&one_pixel(0.5), &one_pixel(1.0), 1, &w).map_err(|e| e.to_string())?;
    ensure(close(pos, 0.173287, 1e-6), || format!("positive focal term {pos}, want 0.173287"))?;
    let (neg, _) = heatmap_focal_loss(&one_pixel(0.5), &one_pixel(0.5), 1, &w).map_err(|e| e.to_string())?;
    ensure(close(neg, 0.010830, 1e-6), || format!("negative focal term {neg}, want 0.010830"))?;

    let targets = TargetSet {
        heatmap: Grid::filled(1, 1, 1, 1.0),
        size_map: Grid::from_vec(2, 1, 1, vec![0.1875, 0.3125]).unwrap(),
        offset_map: Grid::from_vec(2, 1, 1, vec![0.7, 0.1]).unwrap(),
        mask: Grid::filled(1, 1, 1, 1.0),
        n_objects: 1,
        collisions: 0,
    };
    let pred: NetOutput<f64> = NetOutput {
        heatmap: one_pixel(0.5),
        size: Grid::from_vec(2, 1, 1, vec![0.2, 0.3]).unwrap(),
        offset: Grid::from_vec(2, 1, 1, vec![0.65, 0.15]).unwrap(),
    };
    let (r, _) = total_loss(&pred, &targets, &w).map_err(|e| e.to_string())?;
    ensure(close(r.l_s, 0.025, 1e-6), || format!("size term {}, want 0.025", r.l_s))?;
    ensure(close(r.l_offset, 0.1, 1e-6), || format!("offset term {}, want 0.1", r.l_offset))?;
    ensure(close(r.total, 1.298287, 1e-6), || format!("total {}, want 1.298287", r.total))?;
    Ok(format!(
        "focal {pos:.6}/{neg:.6}, size {:.6}, offset {:.6}, total {:.6}",
        r.l_s, r.l_offset, r.total
    ))
}

// ------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-4;

fn focal_target(r: &mut rand_chacha::ChaCha8Rng) -> Grid<f64> {
    let mut t = random_grid(r, 2, 8, 8, 0.0, 0.95);
    for i in [3, 17, 70, 101] {
        t.as_mut_slice()[i] = 1.0;
    }
    t
}

/// Focal loss gradient on random 2x8x8 maps, every coordinate.
pub fn focal_gradient() -> Check {
    let w = LossWeights::default();
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let mut r = rng(seed);
        let target = focal_target(&mut r);
        let pred = random_grid(&mut r, 2, 8, 8, 0.02, 0.98);
        let (_, grad) = heatmap_focal_loss(&pred, &target, 4, &w).unwrap();
        let f = |p: &Grid<f64>| heatmap_focal_loss(p, &target, 4, &w).unwrap().0;
        for i in 0..pred.len() {
            let num = central_diff(&pred, i, FD_STEP, f);
            let e = rel_err(grad.as_slice()[i], num, 1e-10);
            ensure(e < FD_TOL, || {
                format!("focal seed {seed} coord {i}: analytic {} numeric {num}", grad.as_slice()[i])
            })?;
            worst = worst.max(e);
        }
    }
    Ok(format!("384 coords, max rel err {worst:.1e}"))
}

/// Masked L1 gradients away from the `|pred - target| = 0` kink.
pub fn l1_gradients() -> Check {
    let mut worst = 0.0f64;
    let mut n = 0;
    for seed in 0..3 {
        let mut r = rng(seed);
        let target = random_grid(&mut r, 2, 8, 8, 0.0, 1.0);
        let pred = random_grid(&mut r, 2, 8, 8, 0.0, 1.0);
        let mut mask = Grid::zeros(1, 8, 8);
        for _ in 0..6 {
            let i = r.gen_range(0..64);
            mask.as_mut_slice()[i] = 1.0;
        }
        for (name, loss) in [
            ("size", size_loss::<f64> as fn(&_, &_, &_, usize) -> _),
            ("offset", offset_loss::<f64>),
        ] {
            let (_, grad) = loss(&pred, &target, &mask, 5).unwrap();
            let f = |p: &Grid<f64>| loss(p, &target, &mask, 5).unwrap().0;
            for i in 0..pred.len() {
                if (pred.as_slice()[i] - target.as_slice()[i]).abs() < 10.0 * FD_STEP {
                    continue;
                }
                let num = central_diff(&pred, i, FD_STEP, f);
                let e = rel_err(grad.as_slice()[i], num, 1e-10);
                ensure(e < FD_TOL, || {
                    format!("{name} seed {seed} coord {i}: analytic {} numeric {num}", grad.as_slice()[i])
                })?;
                worst = worst.max(e);
                n += 1;
            }
        }
    }
    Ok(format!("{n} coords, max rel err {worst:.1e}"))
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        base_channels: 4,
        ..ModelConfig::toy()
    }
}

fn tiny_page() -> (Tensor<f64>, TargetSet) {
    let mut r = rng(42);
    let img: Vec<f64> = (0..32 * 32).map(|_| r.gen_range(0.0..1.0)).collect();
    let boxes = [
        BBox::new(9.3, 10.7, 8.0, 10.0).unwrap(),
        BBox::new(22.6, 20.2, 10.0, 7.0).unwrap(),
    ];
    let t = encode_targets(&boxes, 32, 32, &CodecConfig::default()).unwrap();
    (Tensor::from_vec(1, 1, 32, 32, img), t)
}

/// Outcome of the end-to-end gradient check.
pub struct NetworkCheck {
    /// `(param index, analytic, numeric, relative error)` for smooth coordinates.
    pub checked: Vec<(usize, f64, f64, f64)>,
    /// Coordinates with a ReLU kink inside the finite-difference step.
    pub kinks: usize,
    /// Numeric gradients at coordinates whose analytic gradient is exactly zero.
    pub zeros: Vec<(usize, f64)>,
}

/// Checks `samples` parameters that receive gradient, plus a few that do not.
///
/// At 32x32 the deepest branch is 1x1, where per-sample normalization makes
/// its output constant; most of its parameters therefore have exactly zero
/// gradient and would make a uniform sample vacuous.
///
/// A coordinate counts as a kink when the central difference at `step`
/// disagrees with the one at `step / 10` by more than `tol`: the loss is then
/// not differentiable within the step and the estimate says nothing about the
/// analytic gradient. Kinks are replaced by fresh draws.
pub fn check_network_gradient(samples: usize, step: f64, tol: f64) -> NetworkCheck {
    let mut net: Network<f64> = Network::new(&tiny_config(), &mut rng(5));
    let (x, t) = tiny_page();
    let w = LossWeights::default();
    let (_, grad, cache) = objective(&net, &x, &[&t], &w).unwrap();
    net.zero_grad();
    net.backward(cache, &grad);

    let mut grads = Vec::new();
    net.visit_params_mut(&mut |_, g| grads.extend_from_slice(g));
    let live: Vec<usize> = (0..grads.len()).filter(|&i| grads[i] != 0.0).collect();
    let dead: Vec<usize> = (0..grads.len()).filter(|&i| grads[i] == 0.0).collect();
    assert!(live.len() >= samples, "only {} parameters receive gradient", live.len());

    let mut r = rng(9);
    let fd = |net: &mut Network<f64>, idx: usize, h: f64| {
        let orig = net.param(idx);
        let mut eval = |v: f64| {
            net.set_param(idx, v);
            objective(net, &x, &[&t], &w).unwrap().0.total
        };
        let numeric = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
        net.set_param(idx, orig);
        numeric
    };
    let mut checked = Vec::new();
    let mut kinks = 0;
    while checked.len() < samples && kinks < 3 * samples {
        let idx = live[r.gen_range(0..live.len())];
        let coarse = fd(&mut net, idx, step);
        let fine = fd(&mut net, idx, step / 10.0);
        if rel_err(coarse, fine, 1e-9) > tol {
            kinks += 1;
            continue;
        }
        checked.push((idx, grads[idx], coarse, rel_err(grads[idx], coarse, 1e-9)));
    }
    let zeros = (0..5.min(dead.len()))
        .map(|_| {
            let idx = dead[r.gen_range(0..dead.len())];
            (idx, fd(&mut net, idx, step))
        })
        .collect();
    NetworkCheck { checked, kinks, zeros }
}

/// Twenty sampled network parameters against finite differences.
pub fn network_gradient() -> Check {
    let check = check_network_gradient(20, 1e-3, 1e-2);
    ensure(check.checked.len() == 20, || format!("too many kinks: {}", check.kinks))?;
    ensure(check.kinks <= 5, || format!("{} kinks among {} draws", check.kinks, check.kinks + 20))?;
    let mut worst = 0.0f64;
    for &(idx, a, n, e) in &check.checked {
        ensure(e < 1e-2, || format!("param {idx}: analytic {a} numeric {n} rel {e}"))?;
        worst = worst.max(e);
    }
    for &(idx, n) in &check.zeros {
        ensure(n.abs() < 1e-8, || format!("param {idx}: zero analytic gradient but numeric {n}"))?;
    }
    Ok(format!("20 params, max rel err {worst:.1e}, {} kinks redrawn", check.kinks))
}

/// All gradient checks, with the time budget.
pub fn gradient_suite() -> Check {
    let t = Instant::now();
    let a = focal_gradient()?;
    let b = l1_gradients()?;
    let c = network_gradient()?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("focal: {a}; L1: {b}; network: {c}; {secs:.1} s"))
}

// ----------------------------------------------------------------- codec

const PAGE: u32 = 128;

fn random_box<R: Rng>(r: &mut R) -> BBox {
    let w = r.gen_range(8.0..64.0);
    let h = r.gen_range(8.0..64.0);
    let cx = r.gen_range(w / 2.0..PAGE as f64 - w / 2.0);
    let cy = r.gen_range(h / 2.0..PAGE as f64 - h / 2.0);
    BBox::new(cx, cy, w, h).unwrap()
}

fn center_pixel(b: &BBox, stride: f64) -> (i64, i64) {
    ((b.cx() / stride).floor() as i64, (b.cy() / stride).floor() as i64)
}

/// Boxes whose centers land on distinct output pixels, outside each other's
/// peak window, with pairwise IoU at most the NMS threshold.
///
/// The window condition matters because two Gaussians of peak 1.0 on
/// neighbouring pixels form a plateau, and the plateau rule keeps only one.
pub fn separable_boxes<R: Rng>(r: &mut R, n: usize, cfg: &CodecConfig) -> Vec<BBox> {
    let stride = cfg.stride as f64;
    let reach = (cfg.peak_window / 2) as i64;
    let mut boxes: Vec<BBox> = Vec::with_capacity(n);
    let mut tries = 0;
    while boxes.len() < n && tries < 10_000 {
        tries += 1;
        let b = random_box(r);
        let (gx, gy) = center_pixel(&b, stride);
        let clear = boxes.iter().all(|o| {
            let (ox, oy) = center_pixel(o, stride);
            (gx - ox).abs().max((gy - oy).abs()) > reach && hrcenternet::iou(&b, o) <= cfg.nms_iou
        });
        if clear {
            boxes.push(b);
        }
    }
    boxes
}

/// Matches decoded boxes to ground truth by nearest center and returns the
/// worst center and size errors, failing on any miss or extra.
fn roundtrip_errors(gts: &[BBox], dets: &[Detection]) -> Result<(f64, f64), String> {
    ensure(dets.len() == gts.len(), || format!("{} boxes in, {} out", gts.len(), dets.len()))?;
    let mut used = vec![false; dets.len()];
    let (mut ce, mut se) = (0.0f64, 0.0f64);
    for g in gts {
        let (j, d) = dets
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .min_by(|a, b| {
                let da = (a.1.bbox.cx() - g.cx()).hypot(a.1.bbox.cy() - g.cy());
                let db = (b.1.bbox.cx() - g.cx()).hypot(b.1.bbox.cy() - g.cy());
                da.total_cmp(&db)
            })
            .ok_or("ran out of detections")?;
        used[j] = true;
        ce = ce.max((d.bbox.cx() - g.cx()).abs()).max((d.bbox.cy() - g.cy()).abs());
        se = se.max((d.bbox.w() - g.w()).abs()).max((d.bbox.h() - g.h()).abs());
    }
    Ok((ce, se))
}

/// Decoding the encoded targets of random pages returns the input boxes.
pub fn codec_roundtrip() -> Check {
    let cfg = CodecConfig::default();
    let t = Instant::now();
    let mut r = rng(2024);
    let (mut ce, mut se) = (0.0f64, 0.0f64);
    let mut total = 0;
    for page in 0..125 {
        let boxes = if page < 100 {
            vec![random_box(&mut r)]
        } else {
            let n = r.gen_range(2..=8);
            separable_boxes(&mut r, n, &cfg)
        };
        let targets = encode_targets(&boxes, PAGE, PAGE, &cfg).map_err(|e| e.to_string())?;
        let dets = decode_detections(&targets.as_prediction(), PAGE, PAGE, &cfg).map_err(|e| e.to_string())?;
        let (c, s) = roundtrip_errors(&boxes, &dets).map_err(|e| format!("page {page}: {e}"))?;
        ce = ce.max(c);
        se = se.max(s);
        total += boxes.len();
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(ce < 1e-3 && se < 1e-3, || format!("center err {ce:.2e}, size err {se:.2e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "125 pages, {total} boxes, max center err {ce:.1e} px, max size err {se:.1e} px, {secs:.2} s"
    ))
}

/// Heatmap values against the Gaussian written out by hand.
pub fn gaussian_encoding() -> Check {
    let cfg = CodecConfig::default();
    let half = (-0.5f64).exp();
    // 80x40 px at stride 4 with divisor 10 gives sigma (2, 1) output pixels.
    let b = BBox::new(66.0, 70.0, 80.0, 40.0).unwrap();
    let t = encode_targets(&[b], PAGE, PAGE, &cfg).map_err(|e| e.to_string())?;
    let (gx, gy) = (16usize, 17usize);
    let hm = &t.heatmap;
    ensure(hm.get(0, gy, gx) == 1.0, || format!("center value {}", hm.get(0, gy, gx)))?;
    ensure(t.centers() == vec![(gx, gy)], || format!("mask centers {:?}", t.centers()))?;
    for (x, y) in [(gx + 2, gy), (gx - 2, gy), (gx, gy + 1), (gx, gy - 1)] {
        let v = hm.get(0, y, x) as f64;
        ensure(close(v, half, 1e-6), || format!("one-sigma value at ({x}, {y}) is {v}, want {half}"))?;
    }

    // Two overlapping objects: every pixel is the larger of the two kernels.
    let boxes = [
        BBox::new(50.0, 60.0, 48.0, 56.0).unwrap(),
        BBox::new(70.5, 66.3, 36.0, 40.0).unwrap(),
    ];
    let t = encode_targets(&boxes, PAGE, PAGE, &cfg).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for y in 0..32 {
        for x in 0..32 {
            let want = boxes
                .iter()
                .map(|b| {
                    let (px, py) = ((b.cx() / 4.0).floor(), (b.cy() / 4.0).floor());
                    let (sx, sy) = ((b.w() / 40.0).max(0.5), (b.h() / 40.0).max(0.5));
                    let (dx, dy) = (x as f64 - px, y as f64 - py);
                    (-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy))).exp()
                })
                .fold(0.0, f64::max);
            worst = worst.max((t.heatmap.get(0, y, x) as f64 - want).abs());
        }
    }
    ensure(worst < 1e-6, || format!("two-object max differs by {worst:.2e}"))?;
    Ok(format!("peak 1.0, one-sigma e^-1/2, two-object max err {worst:.1e}"))
}

fn corners_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |c: [f64; 4]| (c[2] - c[0]) * (c[3] - c[1]);
    inter / (area(a) + area(b) - inter)
}

/// Threshold then greedy suppression, written independently of the codec.
fn hand_decode(mut cands: Vec<([f64; 4], f64)>, conf: f64, nms_iou: f64) -> Vec<([f64; 4], f64)> {
    cands.retain(|c| c.1 >= conf);
    cands.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut kept: Vec<([f64; 4], f64)> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| corners_iou(k.0, c.0) <= nms_iou) {
            kept.push(c);
        }
    }
    kept
}

/// Writes one peak of `score` whose decoded box is `w x h` px centered at `(cx, cy)`.
fn plant(out: &mut NetOutput, cx: f64, cy: f64, w: f64, h: f64, score: f32) -> [f64; 4] {
    let (px, py) = (cx / 4.0, cy / 4.0);
    let (gx, gy) = (px.floor() as usize, py.floor() as usize);
    out.heatmap.set(0, gy, gx, score);
    out.size.set(0, gy, gx, (h / PAGE as f64) as f32);
    out.size.set(1, gy, gx, (w / PAGE as f64) as f32);
    out.offset.set(0, gy, gx, (px - gx as f64) as f32);
    out.offset.set(1, gy, gx, (py - gy as f64) as f32);
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

/// Three peaks (0.9, 0.6, 0.2); the top two overlap at a chosen IoU.
pub fn decode_protocol() -> Check {
    let cfg = CodecConfig::default();
    let mut lines = Vec::new();
    // Shifts of 10 and 17.14 px between two 40x40 boxes give IoU 0.6 and 0.4.
    for (shift, want_len) in [(10.0, 1), (120.0 / 7.0, 2)] {
        let mut out = NetOutput {
            heatmap: TensorGrid::zeros(1, 32, 32),
            size: TensorGrid::zeros(2, 32, 32),
            offset: TensorGrid::zeros(2, 32, 32),
        };
        let a = plant(&mut out, 50.0, 50.0, 40.0, 40.0, 0.9);
        let b = plant(&mut out, 50.0 + shift, 50.0, 40.0, 40.0, 0.6);
        let c = plant(&mut out, 100.0, 110.0, 16.0, 12.0, 0.2);
        let pair_iou = corners_iou(a, b);
        let want = hand_decode(
            vec![(a, 0.9f32 as f64), (b, 0.6f32 as f64), (c, 0.2f32 as f64)],
            cfg.conf_thresh,
            cfg.nms_iou,
        );
        ensure(want.len() == want_len, || format!("hand simulation kept {}", want.len()))?;
        let got = decode_detections(&out, PAGE, PAGE, &cfg).map_err(|e| e.to_string())?;
        ensure(got.len() == want.len(), || {
            format!("IoU {pair_iou:.2}: decoded {} boxes, hand simulation {}", got.len(), want.len())
        })?;
        for (g, (wc, ws)) in got.iter().zip(&want) {
            let c = g.bbox.to_corners();
            let gc = [c.x_min, c.y_min, c.x_max, c.y_max];
            let err = gc.iter().zip(wc).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            ensure(err < 1e-4 && g.score == *ws, || {
                format!("IoU {pair_iou:.2}: got {gc:?} @ {}, want {wc:?} @ {ws}", g.score)
            })?;
        }
        lines.push(format!("IoU {pair_iou:.2} keeps {}", got.len()));
    }
    Ok(lines.join(", "))
}

// ------------------------------------------------------------------ model

/// Output map shapes for square inputs of 128 and 512 px.
pub fn output_shapes() -> Check {
    let model = Model::build(ModelConfig::toy(), 0).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for (h, w) in [(128, 128), (512, 512), (64, 160)] {
        let out = model.forward(&TensorGrid::filled(1, h, w, 0.5)).map_err(|e| e.to_string())?;
        let (oh, ow) = (h / 4, w / 4);
        ensure(out.heatmap.dims() == (1, oh, ow), || format!("heatmap {:?} for {h}x{w}", out.heatmap.dims()))?;
        ensure(out.size.dims() == (2, oh, ow), || format!("size {:?} for {h}x{w}", out.size.dims()))?;
        ensure(out.offset.dims() == (2, oh, ow), || format!("offset {:?} for {h}x{w}", out.offset.dims()))?;
        let in_range = [&out.heatmap, &out.size, &out.offset]
            .iter()
            .all(|g| g.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        ensure(in_range, || format!("{h}x{w}: outputs outside [0, 1]"))?;
        seen.push(format!("{h}x{w} -> 5x{oh}x{ow}"));
    }
    Ok(seen.join(", "))
}

// --------------------------------------------------------------- training

/// 300 steps on one page must cut the loss below a quarter of its start.
pub fn overfit_single_page() -> Check {
    let (img, ann) = generate_page(&SynthConfig {
        seed: 11,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let t = encode_targets(&ann.boxes, ann.width, ann.height, &CodecConfig::default()).map_err(|e| e.to_string())?;
    let mut model = Model::build(ModelConfig::toy(), 0).map_err(|e| e.to_string())?;
    let mut opt = Adam::new(AdamConfig {
        lr: TrainConfig::toy().lr,
        ..AdamConfig::default()
    });
    let w = LossWeights::default();
    let first = model.batch_loss(&[(&img, &t)], &w).map_err(|e| e.to_string())?.total;
    for _ in 0..300 {
        model.train_step(&[(&img, &t)], &mut opt, &w).map_err(|e| e.to_string())?;
    }
    let last = model.batch_loss(&[(&img, &t)], &w).map_err(|e| e.to_string())?.total;
    let ratio = last / first;
    ensure(ratio < 0.25, || format!("loss {first:.3} -> {last:.3} (ratio {ratio:.3})"))?;
    Ok(format!("loss {first:.3} -> {last:.3} ({:.0}%)", 100.0 * ratio))
}

pub const DESK_PAGES: usize = 200;
pub const DESK_TRAIN: usize = 180;
pub const DESK_SEED: u64 = 7;

pub fn desk_pages() -> Result<Vec<(TensorGrid, hrcenternet::data::PageAnnotation)>, String> {
    let base = SynthConfig {
        seed: DESK_SEED,
        ..SynthConfig::default()
    };
    (0..DESK_PAGES as u64)
        .map(|i| generate_page(&base.for_page(i)).map_err(|e| e.to_string()))
        .collect()
}

/// Toy preset trained on 180 synthetic pages and scored on 20 held-out ones.
pub fn desk_training() -> Check {
    let t = Instant::now();
    let pages = desk_pages()?;
    let cfg = TrainConfig::toy();
    let mut model = Model::build(ModelConfig::toy(), cfg.seed).map_err(|e| e.to_string())?;
    let history = train(&mut model, &pages[..DESK_TRAIN], &cfg, |_| {}).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &pages[DESK_TRAIN..], &cfg.codec).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let first = history.first().map_or(f64::NAN, |h| h.mean_loss);
    let last = history.last().map_or(f64::NAN, |h| h.mean_loss);
    let detail = format!(
        "{} epochs, loss {first:.3} -> {last:.3}, held-out mean IoU {:.3}, recall@0.5 {:.3}, precision@0.5 {:.3}, {:.0} s",
        history.len(),
        report.mean_iou,
        report.recall_at_50,
        report.precision_at_50,
        secs
    );
    ensure(report.mean_iou >= 0.5 && report.recall_at_50 >= 0.6 && secs < 900.0, || detail.clone())?;
    Ok(detail)
}

// ------------------------------------------------------------ evaluation

fn det(x0: f64, x1: f64, score: f64) -> Detection {
    Detection {
        bbox: BBox::from_corners(x0, 0.0, x1, 10.0).unwrap(),
        score,
    }
}

fn strip(x0: f64, x1: f64) -> BBox {
    BBox::from_corners(x0, 0.0, x1, 10.0).unwrap()
}

/// Matching on small cases worked out by hand.
pub fn matching_hand_cases() -> Check {
    let s = match_and_score(&[det(0.0, 10.0, 0.9)], &[strip(0.0, 10.0)], MATCH_IOU);
    ensure((s.mean_iou, s.precision, s.recall) == (1.0, 1.0, 1.0), || format!("perfect: {s:?}"))?;

    // Half matched: one prediction at IoU 0.8 against two ground-truth boxes.
    let s = match_and_score(&[det(0.0, 10.0, 0.9)], &[strip(0.0, 8.0), strip(50.0, 60.0)], MATCH_IOU);
    ensure(
        close(s.mean_iou, 0.4, 1e-12) && (s.precision, s.recall) == (1.0, 0.5),
        || format!("half matched: {s:?}"),
    )?;

    let s = match_and_score(&[det(0.0, 10.0, 0.9), det(0.0, 10.0, 0.8)], &[strip(0.0, 10.0)], MATCH_IOU);
    ensure((s.n_matched, s.precision, s.recall) == (1, 0.5, 1.0), || format!("duplicate: {s:?}"))?;

    // IoU exactly 0.5 counts; 0.4 does not.
    let s = match_and_score(&[det(0.0, 10.0, 0.9)], &[strip(0.0, 5.0)], MATCH_IOU);
    ensure(s.n_matched == 1 && close(s.mean_iou, 0.5, 1e-12), || format!("at threshold: {s:?}"))?;
    let s = match_and_score(&[det(0.0, 10.0, 0.9)], &[strip(0.0, 4.0)], MATCH_IOU);
    ensure(s.n_matched == 0 && s.mean_iou == 0.0, || format!("below threshold: {s:?}"))?;

    // Greedy by score: the 0.9 box claims its best match (IoU 9/11) and the
    // 0.8 box is left with 6/14, below threshold.
    let s = match_and_score(
        &[det(3.0, 13.0, 0.9), det(4.0, 14.0, 0.8)],
        &[strip(0.0, 10.0), strip(4.0, 14.0)],
        MATCH_IOU,
    );
    ensure(s.n_matched == 1 && close(s.mean_iou, 9.0 / 22.0, 1e-12), || format!("greedy: {s:?}"))?;
    ensure((s.precision, s.recall) == (0.5, 0.5), || format!("greedy: {s:?}"))?;

    let s = match_and_score(&[], &[], MATCH_IOU);
    ensure(s == Default::default(), || format!("empty: {s:?}"))?;
    let s = match_and_score(&[], &[strip(0.0, 10.0)], MATCH_IOU);
    ensure((s.recall, s.precision) == (0.0, 0.0), || format!("no predictions: {s:?}"))?;
    let s = match_and_score(&[det(0.0, 10.0, 0.5)], &[], MATCH_IOU);
    ensure((s.recall, s.precision, s.n_pred) == (0.0, 0.0, 1), || format!("no ground truth: {s:?}"))?;
    Ok("perfect, empty, half matched and 5 edge cases".into())
}

/// Ground-truth maps with each object's peak scaled to a different score,
/// plus isolated false peaks.
pub fn graded_prediction(seed: u64) -> Result<(NetOutput, hrcenternet::data::PageAnnotation), String> {
    let cfg = CodecConfig::default();
    let (_, ann) = generate_page(&SynthConfig {
        seed,
        noise_level: 0.0,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let (w, h) = (ann.width, ann.height);
    let full = encode_targets(&ann.boxes, w, h, &cfg).map_err(|e| e.to_string())?;
    let mut heatmap = TensorGrid::zeros(1, full.heatmap.height(), full.heatmap.width());
    let n = ann.boxes.len();
    for (i, b) in ann.boxes.iter().enumerate() {
        let amp = 0.05 + 0.9 * i as f32 / (n.max(2) - 1) as f32;
        let one = encode_targets(&[*b], w, h, &cfg).map_err(|e| e.to_string())?;
        for (dst, &v) in heatmap.as_mut_slice().iter_mut().zip(one.heatmap.as_slice()) {
            *dst = dst.max(amp * v);
        }
    }
    let mut out = NetOutput {
        heatmap,
        size: full.size_map.clone(),
        offset: full.offset_map.clone(),
    };
    let centers = full.centers();
    let mut r = rng(seed);
    let mut planted = 0;
    for score in [0.45f32, 0.65, 0.85] {
        for _ in 0..1000 {
            let (x, y) = (r.gen_range(1..31usize), r.gen_range(1..31usize));
            let far = centers.iter().all(|&(cx, cy)| cx.abs_diff(x).max(cy.abs_diff(y)) > 2);
            if far && out.heatmap.get(0, y, x) < 0.05 {
                out.heatmap.set(0, y, x, score);
                out.size.set(0, y, x, 0.08);
                out.size.set(1, y, x, 0.08);
                planted += 1;
                break;
            }
        }
    }
    if planted == 0 {
        return Err("no room for false peaks".into());
    }
    Ok((out, ann))
}

/// Raising the confidence threshold never adds predictions or recall.
pub fn threshold_monotonicity() -> Check {
    let (out, ann) = graded_prediction(3)?;
    let mut prev: Option<(usize, f64)> = None;
    let mut rows = Vec::new();
    for conf in [0.1, 0.3, 0.5, 0.7] {
        let cfg = CodecConfig {
            conf_thresh: conf,
            ..CodecConfig::default()
        };
        let s = score_output(&out, &ann, &cfg).map_err(|e| e.to_string())?;
        if let Some((n, r)) = prev {
            ensure(s.n_pred <= n && s.recall <= r, || {
                format!("conf {conf}: {} preds / recall {:.3} after {n} / {r:.3}", s.n_pred, s.recall)
            })?;
        }
        prev = Some((s.n_pred, s.recall));
        rows.push(format!("{conf}: {}/{:.2}", s.n_pred, s.recall));
    }
    let lo = score_output(&out, &ann, &CodecConfig { conf_thresh: 0.1, ..CodecConfig::default() }).unwrap();
    ensure(lo.recall > prev.unwrap().1, || "recall never changed; the page is uninformative".into())?;
    Ok(format!("preds/recall by conf {}", rows.join(", ")))
}

pub fn evaluation_checks() -> Check {
    let a = matching_hand_cases()?;
    let b = threshold_monotonicity()?;
    Ok(format!("{a}; {b}"))
}

// ---------------------------------------------------------- reproducibility

fn tiny_trained(pages: &[(TensorGrid, hrcenternet::data::PageAnnotation)]) -> Result<Vec<f32>, String> {
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 2,
        input_size: 64,
        seed: 5,
        ..TrainConfig::toy()
    };
    let mut model = Model::build(tiny_config(), 5).map_err(|e| e.to_string())?;
    train(&mut model, pages, &cfg, |_| {}).map_err(|e| e.to_string())?;
    Ok(model.parameters())
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Rejects `bytes` written to `path` after each of three corruptions.
fn corruptions_rejected<F>(bytes: &[u8], path: &std::path::Path, load: F) -> Result<(), String>
where
    F: Fn(&std::path::Path) -> Result<(), String>,
{
    let mid = bytes.len() / 2;
    let cases: [(&str, Box<dyn Fn(&mut Vec<u8>)>); 3] = [
        ("magic", Box::new(|b: &mut Vec<u8>| b[0] ^= 0xff)),
        ("truncation", Box::new(|b: &mut Vec<u8>| b.truncate(b.len() - 7))),
        ("payload bit flip", Box::new(move |b: &mut Vec<u8>| b[mid] ^= 0x10)),
    ];
    for (name, corrupt) in cases {
        let mut b = bytes.to_vec();
        corrupt(&mut b);
        std::fs::write(path, &b).map_err(|e| e.to_string())?;
        match load(path) {
            Ok(()) => return Err(format!("{name} was not detected")),
            Err(msg) => {
                let fname = path.file_name().unwrap().to_string_lossy();
                ensure(msg.contains(&*fname), || format!("{name}: diagnostic does not name the file: {msg}"))?;
            }
        }
    }
    Ok(())
}

/// Same seeds give bit-identical pages, targets and models; files roundtrip
/// exactly and corrupted files are refused.
pub fn reproducibility() -> Check {
    let cfg = SynthConfig {
        seed: 99,
        ..SynthConfig::default()
    };
    let (img_a, ann_a) = generate_page(&cfg).map_err(|e| e.to_string())?;
    let (img_b, ann_b) = generate_page(&cfg).map_err(|e| e.to_string())?;
    ensure(bits(img_a.as_slice()) == bits(img_b.as_slice()) && ann_a == ann_b, || "pages differ".into())?;
    let (img_c, _) = generate_page(&SynthConfig { seed: 100, ..cfg.clone() }).map_err(|e| e.to_string())?;
    ensure(img_a != img_c, || "different seeds gave the same page".into())?;

    let codec = CodecConfig::default();
    let t_a = encode_targets(&ann_a.boxes, ann_a.width, ann_a.height, &codec).map_err(|e| e.to_string())?;
    let t_b = encode_targets(&ann_b.boxes, ann_b.width, ann_b.height, &codec).map_err(|e| e.to_string())?;
    ensure(t_a == t_b, || "targets differ".into())?;

    let m_a = Model::build(ModelConfig::toy(), 3).map_err(|e| e.to_string())?;
    let m_b = Model::build(ModelConfig::toy(), 3).map_err(|e| e.to_string())?;
    ensure(bits(&m_a.parameters()) == bits(&m_b.parameters()), || "initial parameters differ".into())?;
    let pages: Vec<_> = (0..4).map(|i| generate_page(&cfg.for_page(i)).unwrap()).collect();
    ensure(tiny_trained(&pages)? == tiny_trained(&pages)?, || "trained parameters differ".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let tpath = dir.path().join("page.hrtg");
    write_tensor(&tpath, &t_a.heatmap).map_err(|e| e.to_string())?;
    let back = read_tensor(&tpath).map_err(|e| e.to_string())?;
    ensure(bits(back.as_slice()) == bits(t_a.heatmap.as_slice()) && back.dims() == t_a.heatmap.dims(), || {
        "tensor file did not roundtrip".into()
    })?;
    let tbytes = std::fs::read(&tpath).map_err(|e| e.to_string())?;
    corruptions_rejected(&tbytes, &tpath, |p| read_tensor(p).map(|_| ()).map_err(|e| e.to_string()))
        .map_err(|e| format!("tensor file: {e}"))?;

    let cpath = dir.path().join("model.ckpt");
    m_a.save(&cpath).map_err(|e| e.to_string())?;
    let loaded = Model::load(&cpath).map_err(|e| e.to_string())?;
    ensure(bits(&loaded.parameters()) == bits(&m_a.parameters()), || "checkpoint parameters differ".into())?;
    let probe = &img_a;
    let (fa, fb) = (m_a.forward(probe).unwrap(), loaded.forward(probe).unwrap());
    ensure(fa == fb, || "reloaded model gives a different forward pass".into())?;
    let cbytes = std::fs::read(&cpath).map_err(|e| e.to_string())?;
    corruptions_rejected(&cbytes, &cpath, |p| Model::load(p).map(|_| ()).map_err(|e| e.to_string()))
        .map_err(|e| format!("checkpoint: {e}"))?;
    Ok("pages, targets, initial and trained models identical; tensor and checkpoint files exact, 3 corruptions refused each".into())
}
