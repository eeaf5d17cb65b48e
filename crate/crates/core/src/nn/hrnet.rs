//! Parallel multi-resolution backbone with a shared sigmoid detection head.
//!
//! Branch `i` carries `C * 2^i` channels at `1 / (4 * 2^i)` of the input
//! resolution. Stage 1 runs at 1/4 resolution with bottleneck blocks; each
//! later stage adds one lower-resolution branch and repeats multi-resolution
//! modules (per-branch basic blocks followed by an all-to-all fusion). The
//! final fusion collapses every branch onto the highest-resolution one.

use rand::Rng;

use super::blocks::{BasicBlock, BasicCache, Bottleneck, BottleneckCache, BOTTLENECK_EXPANSION};
use super::layers::{Conv2d, ConvBn, ConvBnCache, ConvCache};
use super::{Module, Scalar, Tensor};
use crate::model::ModelConfig;

/// Number of parallel branches at the last stage.
pub const BRANCHES: usize = 4;

/// Total downsampling of the deepest branch relative to the input.
pub const MAX_STRIDE: usize = 32;

/// Output stride of the network.
pub const OUTPUT_STRIDE: usize = 4;

#[derive(Debug, Clone)]
enum FuseOp<T> {
    Identity,
    /// Lower-resolution source: 1x1 conv-bn to match channels, then nearest upsample.
    Up { conv: ConvBn<T>, factor: usize },
    /// Higher-resolution source: one stride-2 3x3 conv-bn per octave.
    Down(Vec<ConvBn<T>>),
}

#[derive(Debug)]
enum FuseOpCache<T> {
    Identity,
    Skipped,
    Up(ConvBnCache<T>),
    Down(Vec<ConvBnCache<T>>),
}

fn branch_channels(base: usize, i: usize) -> usize {
    base << i
}

impl<T: Scalar> FuseOp<T> {
    fn new<R: Rng>(base: usize, from: usize, to: usize, rng: &mut R) -> Self {
        let (cf, ct) = (branch_channels(base, from), branch_channels(base, to));
        if from == to {
            FuseOp::Identity
        } else if from > to {
            FuseOp::Up {
                conv: ConvBn::new(cf, ct, 1, 1, false, rng),
                factor: 1 << (from - to),
            }
        } else {
            let steps = to - from;
            let convs = (0..steps)
                .map(|s| {
                    let last = s + 1 == steps;
                    ConvBn::new(cf, if last { ct } else { cf }, 3, 2, !last, rng)
                })
                .collect();
            FuseOp::Down(convs)
        }
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, FuseOpCache<T>) {
        match self {
            FuseOp::Identity => (x.clone(), FuseOpCache::Identity),
            FuseOp::Up { conv, factor } => {
                let (y, c) = conv.forward(x, train);
                (y.upsample_nearest(*factor), FuseOpCache::Up(c))
            }
            FuseOp::Down(convs) => {
                let mut caches = Vec::with_capacity(convs.len());
                let mut y = x.clone();
                for conv in convs {
                    let (next, c) = conv.forward(&y, train);
                    caches.push(c);
                    y = next;
                }
                (y, FuseOpCache::Down(caches))
            }
        }
    }

    fn backward(&mut self, cache: FuseOpCache<T>, dy: &Tensor<T>) -> Option<Tensor<T>> {
        match (self, cache) {
            (_, FuseOpCache::Skipped) => None,
            (FuseOp::Identity, FuseOpCache::Identity) => Some(dy.clone()),
            (FuseOp::Up { conv, factor }, FuseOpCache::Up(c)) => {
                Some(conv.backward(c, dy.downsample_sum(*factor)))
            }
            (FuseOp::Down(convs), FuseOpCache::Down(caches)) => {
                let mut d = dy.clone();
                for (conv, c) in convs.iter_mut().zip(caches).rev() {
                    d = conv.backward(c, d);
                }
                Some(d)
            }
            _ => unreachable!("fuse cache does not match its op"),
        }
    }

    fn modules(&self) -> Vec<&ConvBn<T>> {
        match self {
            FuseOp::Identity => vec![],
            FuseOp::Up { conv, .. } => vec![conv],
            FuseOp::Down(convs) => convs.iter().collect(),
        }
    }

    fn modules_mut(&mut self) -> Vec<&mut ConvBn<T>> {
        match self {
            FuseOp::Identity => vec![],
            FuseOp::Up { conv, .. } => vec![conv],
            FuseOp::Down(convs) => convs.iter_mut().collect(),
        }
    }
}

/// All contributions into one output branch, summed then rectified.
#[derive(Debug, Clone)]
struct FuseRow<T> {
    ops: Vec<FuseOp<T>>,
}

#[derive(Debug)]
struct FuseRowCache<T> {
    ops: Vec<FuseOpCache<T>>,
    out: Option<Tensor<T>>,
}

impl<T: Scalar> FuseRow<T> {
    fn new<R: Rng>(base: usize, inputs: usize, to: usize, rng: &mut R) -> Self {
        FuseRow {
            ops: (0..inputs).map(|from| FuseOp::new(base, from, to, rng)).collect(),
        }
    }

    fn forward(
        &self,
        xs: &[Tensor<T>],
        train: bool,
        skip: Option<usize>,
    ) -> (Tensor<T>, FuseRowCache<T>) {
        let mut sum: Option<Tensor<T>> = None;
        let mut caches = Vec::with_capacity(self.ops.len());
        for (j, (op, x)) in self.ops.iter().zip(xs).enumerate() {
            if skip == Some(j) {
                caches.push(FuseOpCache::Skipped);
                continue;
            }
            let (y, c) = op.forward(x, train);
            caches.push(c);
            match &mut sum {
                Some(s) => s.add_assign(&y),
                None => sum = Some(y),
            }
        }
        let mut y = sum.expect("fusion row with no inputs");
        y.relu_in_place();
        let out = train.then(|| y.clone());
        (y, FuseRowCache { ops: caches, out })
    }

    fn backward(&mut self, cache: FuseRowCache<T>, dy: Tensor<T>, dxs: &mut [Tensor<T>]) {
        let mut dy = dy;
        cache.out.as_ref().expect("training cache").relu_backward(&mut dy);
        for ((op, c), dx) in self.ops.iter_mut().zip(cache.ops).zip(dxs.iter_mut()) {
            if let Some(d) = op.backward(c, &dy) {
                dx.add_assign(&d);
            }
        }
    }
}

impl<T: Scalar> Module<T> for FuseRow<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        for op in &self.ops {
            op.modules().into_iter().for_each(|m| m.visit_params(f));
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for op in &mut self.ops {
            op.modules_mut().into_iter().for_each(|m| m.visit_params_mut(f));
        }
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        for op in &self.ops {
            op.modules().into_iter().for_each(|m| m.visit_buffers(f));
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        for op in &mut self.ops {
            op.modules_mut().into_iter().for_each(|m| m.visit_buffers_mut(f));
        }
    }
}

/// Per-branch basic blocks followed by all-to-all fusion.
#[derive(Debug, Clone)]
struct HrModule<T> {
    branches: Vec<Vec<BasicBlock<T>>>,
    fuse: Vec<FuseRow<T>>,
}

#[derive(Debug)]
struct HrModuleCache<T> {
    branches: Vec<Vec<BasicCache<T>>>,
    fuse: Vec<FuseRowCache<T>>,
    shapes: Vec<[usize; 4]>,
}

impl<T: Scalar> HrModule<T> {
    fn new<R: Rng>(base: usize, n_branches: usize, blocks: usize, rng: &mut R) -> Self {
        let branches = (0..n_branches)
            .map(|i| {
                (0..blocks)
                    .map(|_| BasicBlock::new(branch_channels(base, i), rng))
                    .collect()
            })
            .collect();
        let fuse = (0..n_branches)
            .map(|to| FuseRow::new(base, n_branches, to, rng))
            .collect();
        HrModule { branches, fuse }
    }

    fn forward(&self, xs: Vec<Tensor<T>>, train: bool) -> (Vec<Tensor<T>>, HrModuleCache<T>) {
        let mut feats = Vec::with_capacity(xs.len());
        let mut bcaches = Vec::with_capacity(xs.len());
        for (blocks, x) in self.branches.iter().zip(xs) {
            let mut y = x;
            let mut caches = Vec::with_capacity(blocks.len());
            for block in blocks {
                let (next, c) = block.forward(&y, train);
                caches.push(c);
                y = next;
            }
            feats.push(y);
            bcaches.push(caches);
        }
        let shapes = feats.iter().map(Tensor::shape).collect();
        let mut outs = Vec::with_capacity(self.fuse.len());
        let mut fcaches = Vec::with_capacity(self.fuse.len());
        for row in &self.fuse {
            let (y, c) = row.forward(&feats, train, None);
            outs.push(y);
            fcaches.push(c);
        }
        (
            outs,
            HrModuleCache {
                branches: bcaches,
                fuse: fcaches,
                shapes,
            },
        )
    }

    fn backward(&mut self, cache: HrModuleCache<T>, dys: Vec<Tensor<T>>) -> Vec<Tensor<T>> {
        let mut dfeats: Vec<Tensor<T>> = cache
            .shapes
            .iter()
            .map(|s| Tensor::zeros(s[0], s[1], s[2], s[3]))
            .collect();
        for ((row, c), dy) in self.fuse.iter_mut().zip(cache.fuse).zip(dys) {
            row.backward(c, dy, &mut dfeats);
        }
        let mut dxs = Vec::with_capacity(dfeats.len());
        for ((blocks, caches), d) in self.branches.iter_mut().zip(cache.branches).zip(dfeats) {
            let mut d = d;
            for (block, c) in blocks.iter_mut().zip(caches).rev() {
                d = block.backward(c, d);
            }
            dxs.push(d);
        }
        dxs
    }
}

impl<T: Scalar> Module<T> for HrModule<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        self.branches.iter().flatten().for_each(|b| b.visit_params(f));
        self.fuse.iter().for_each(|r| r.visit_params(f));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.branches.iter_mut().flatten().for_each(|b| b.visit_params_mut(f));
        self.fuse.iter_mut().for_each(|r| r.visit_params_mut(f));
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        self.branches.iter().flatten().for_each(|b| b.visit_buffers(f));
        self.fuse.iter().for_each(|r| r.visit_buffers(f));
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.branches.iter_mut().flatten().for_each(|b| b.visit_buffers_mut(f));
        self.fuse.iter_mut().for_each(|r| r.visit_buffers_mut(f));
    }
}

/// Adapts the previous stage's branches and spawns one new, half-resolution branch.
#[derive(Debug, Clone)]
struct Transition<T> {
    adapt: Vec<Option<ConvBn<T>>>,
    spawn: ConvBn<T>,
}

#[derive(Debug)]
struct TransitionCache<T> {
    adapt: Vec<Option<ConvBnCache<T>>>,
    spawn: ConvBnCache<T>,
}

impl<T: Scalar> Transition<T> {
    /// `in_channels` lists the incoming branch widths; output branch `i` gets `C * 2^i`.
    fn new<R: Rng>(base: usize, in_channels: &[usize], rng: &mut R) -> Self {
        let adapt = in_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let want = branch_channels(base, i);
                (c != want).then(|| ConvBn::new(c, want, 3, 1, true, rng))
            })
            .collect();
        let last = *in_channels.last().expect("at least one branch");
        let spawn = ConvBn::new(last, branch_channels(base, in_channels.len()), 3, 2, true, rng);
        Transition { adapt, spawn }
    }

    fn forward(&self, xs: Vec<Tensor<T>>, train: bool) -> (Vec<Tensor<T>>, TransitionCache<T>) {
        let (new, spawn) = self.spawn.forward(xs.last().expect("branch input"), train);
        let mut outs = Vec::with_capacity(xs.len() + 1);
        let mut adapt = Vec::with_capacity(xs.len());
        for (a, x) in self.adapt.iter().zip(xs) {
            match a {
                Some(conv) => {
                    let (y, c) = conv.forward(&x, train);
                    outs.push(y);
                    adapt.push(Some(c));
                }
                None => {
                    outs.push(x);
                    adapt.push(None);
                }
            }
        }
        outs.push(new);
        (outs, TransitionCache { adapt, spawn })
    }

    fn backward(&mut self, cache: TransitionCache<T>, mut dys: Vec<Tensor<T>>) -> Vec<Tensor<T>> {
        let dnew = dys.pop().expect("spawned branch gradient");
        let mut dxs: Vec<Tensor<T>> = self
            .adapt
            .iter_mut()
            .zip(cache.adapt)
            .zip(dys)
            .map(|((a, c), dy)| match (a, c) {
                (Some(conv), Some(c)) => conv.backward(c, dy),
                _ => dy,
            })
            .collect();
        let d = self.spawn.backward(cache.spawn, dnew);
        dxs.last_mut().expect("branch").add_assign(&d);
        dxs
    }
}

impl<T: Scalar> Module<T> for Transition<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        self.adapt.iter().flatten().for_each(|a| a.visit_params(f));
        self.spawn.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.adapt.iter_mut().flatten().for_each(|a| a.visit_params_mut(f));
        self.spawn.visit_params_mut(f);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        self.adapt.iter().flatten().for_each(|a| a.visit_buffers(f));
        self.spawn.visit_buffers(f);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.adapt.iter_mut().flatten().for_each(|a| a.visit_buffers_mut(f));
        self.spawn.visit_buffers_mut(f);
    }
}

/// Forward-pass switches used by diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Drop this branch's contribution from the final fusion.
    pub skip_final_branch: Option<usize>,
}

/// The complete backbone plus head.
#[derive(Debug, Clone)]
pub struct Network<T> {
    stem: [ConvBn<T>; 2],
    layer1: Vec<Bottleneck<T>>,
    transitions: Vec<Transition<T>>,
    stages: Vec<Vec<HrModule<T>>>,
    final_fuse: FuseRow<T>,
    head: Conv2d<T>,
}

#[derive(Debug)]
pub struct NetCache<T> {
    stem: Vec<ConvBnCache<T>>,
    layer1: Vec<BottleneckCache<T>>,
    transitions: Vec<TransitionCache<T>>,
    stages: Vec<Vec<HrModuleCache<T>>>,
    final_fuse: FuseRowCache<T>,
    final_shapes: Vec<[usize; 4]>,
    head: ConvCache<T>,
    out: Tensor<T>,
}

/// Initial bias of the heatmap logit: sigmoid(-2.19) is about 0.1.
pub const HEATMAP_PRIOR_BIAS: f64 = -2.19;

impl<T: Scalar> Network<T> {
    /// Builds the network; layers are initialized in canonical (visit) order.
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.base_channels;
        let stem = [
            ConvBn::new(cfg.input_channels, c, 3, 2, true, rng),
            ConvBn::new(c, c, 3, 2, true, rng),
        ];
        let mut layer1 = Vec::with_capacity(cfg.stage1_bottlenecks);
        let mut in_c = c;
        for _ in 0..cfg.stage1_bottlenecks {
            layer1.push(Bottleneck::new(in_c, c, rng));
            in_c = c * BOTTLENECK_EXPANSION;
        }
        let mut widths = vec![in_c];
        let mut transitions = Vec::with_capacity(BRANCHES - 1);
        let mut stages = Vec::with_capacity(BRANCHES - 1);
        for (s, &modules) in cfg.stage_block_counts.iter().enumerate() {
            transitions.push(Transition::new(c, &widths, rng));
            let n_branches = s + 2;
            widths = (0..n_branches).map(|i| branch_channels(c, i)).collect();
            stages.push(
                (0..modules)
                    .map(|_| HrModule::new(c, n_branches, cfg.blocks_per_branch, rng))
                    .collect(),
            );
        }
        let final_fuse = FuseRow::new(c, BRANCHES, 0, rng);
        let mut head = Conv2d::new(c, cfg.head_channels, 1, 1, true, rng);
        if let Some(b) = head.bias_mut() {
            b[0] = T::lit(HEATMAP_PRIOR_BIAS);
        }
        Network {
            stem,
            layer1,
            transitions,
            stages,
            final_fuse,
            head,
        }
    }

    /// Runs the network; returns sigmoid outputs `n x head x H/4 x W/4`.
    ///
    /// With `train` set, batch statistics are used and a cache is returned for
    /// [`Network::backward`].
    pub fn forward(
        &self,
        x: &Tensor<T>,
        train: bool,
        opts: ForwardOptions,
    ) -> (Tensor<T>, Option<NetCache<T>>) {
        assert!(
            x.h.is_multiple_of(MAX_STRIDE) && x.w.is_multiple_of(MAX_STRIDE),
            "input dims must be divisible by {MAX_STRIDE}"
        );
        let (y, s0) = self.stem[0].forward(x, train);
        let (mut y, s1) = self.stem[1].forward(&y, train);
        let mut l1 = Vec::with_capacity(self.layer1.len());
        for b in &self.layer1 {
            let (next, c) = b.forward(&y, train);
            l1.push(c);
            y = next;
        }
        let mut xs = vec![y];
        let mut tcaches = Vec::with_capacity(self.transitions.len());
        let mut scaches = Vec::with_capacity(self.stages.len());
        for (t, stage) in self.transitions.iter().zip(&self.stages) {
            let (next, c) = t.forward(xs, train);
            tcaches.push(c);
            xs = next;
            let mut mcaches = Vec::with_capacity(stage.len());
            for m in stage {
                let (next, c) = m.forward(xs, train);
                mcaches.push(c);
                xs = next;
            }
            scaches.push(mcaches);
        }
        let final_shapes = xs.iter().map(Tensor::shape).collect();
        let (feat, fcache) = self.final_fuse.forward(&xs, train, opts.skip_final_branch);
        let (mut out, hcache) = self.head.forward(&feat, train);
        for v in &mut out.data {
            *v = sigmoid(*v);
        }
        let cache = train.then(|| NetCache {
            stem: vec![s0, s1],
            layer1: l1,
            transitions: tcaches,
            stages: scaches,
            final_fuse: fcache,
            final_shapes,
            head: hcache,
            out: out.clone(),
        });
        (out, cache)
    }

    /// Accumulates parameter gradients given `d loss / d output` (post-sigmoid).
    pub fn backward(&mut self, cache: NetCache<T>, d_out: &Tensor<T>) {
        let mut dz = d_out.clone();
        for (g, &s) in dz.data.iter_mut().zip(&cache.out.data) {
            *g = *g * s * (T::one() - s);
        }
        let dfeat = self.head.backward(cache.head, &dz);
        let mut dxs: Vec<Tensor<T>> = cache
            .final_shapes
            .iter()
            .map(|s| Tensor::zeros(s[0], s[1], s[2], s[3]))
            .collect();
        self.final_fuse.backward(cache.final_fuse, dfeat, &mut dxs);
        for ((t, stage), (tc, mcs)) in self
            .transitions
            .iter_mut()
            .zip(self.stages.iter_mut())
            .zip(cache.transitions.into_iter().zip(cache.stages))
            .rev()
        {
            for (m, c) in stage.iter_mut().zip(mcs).rev() {
                dxs = m.backward(c, dxs);
            }
            dxs = t.backward(tc, dxs);
        }
        let mut d = dxs.pop().expect("stage 1 gradient");
        for (b, c) in self.layer1.iter_mut().zip(cache.layer1).rev() {
            d = b.backward(c, d);
        }
        let mut stem_caches = cache.stem;
        let c1 = stem_caches.pop().expect("stem cache");
        let c0 = stem_caches.pop().expect("stem cache");
        let d = self.stem[1].backward(c1, d);
        self.stem[0].backward(c0, d);
    }

    /// Channel widths of the final-stage branches.
    pub fn branch_widths(&self) -> Vec<usize> {
        self.final_fuse
            .ops
            .iter()
            .enumerate()
            .map(|(j, op)| match op {
                FuseOp::Identity => self.head.in_c,
                FuseOp::Up { conv, .. } => conv.conv.in_c,
                FuseOp::Down(_) => unreachable!("final fusion only targets branch {j} from below"),
            })
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |_, g| g.fill(T::zero()));
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    pub fn buffer_count(&self) -> usize {
        let mut n = 0;
        self.visit_buffers(&mut |p| n += p.len());
        n
    }

    /// Parameter at flat canonical index `idx`.
    pub fn param(&self, idx: usize) -> T {
        let mut seen = 0;
        let mut out = None;
        self.visit_params(&mut |p| {
            if out.is_none() && idx < seen + p.len() {
                out = Some(p[idx - seen]);
            }
            seen += p.len();
        });
        out.expect("parameter index in range")
    }

    pub fn set_param(&mut self, idx: usize, value: T) {
        let mut seen = 0;
        self.visit_params_mut(&mut |p, _| {
            if idx >= seen && idx < seen + p.len() {
                p[idx - seen] = value;
            }
            seen += p.len();
        });
    }

    /// Accumulated gradient at flat canonical index `idx`.
    pub fn grad(&mut self, idx: usize) -> T {
        let mut seen = 0;
        let mut out = None;
        self.visit_params_mut(&mut |p, g| {
            if out.is_none() && idx < seen + p.len() {
                out = Some(g[idx - seen]);
            }
            seen += p.len();
        });
        out.expect("parameter index in range")
    }
}

impl<T> NetCache<T> {
    /// `[n, c, h, w]` of each final-stage branch seen by the last fusion.
    pub fn branch_shapes(&self) -> &[[usize; 4]] {
        &self.final_shapes
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Module<T> for Network<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T])) {
        self.stem.iter().for_each(|m| m.visit_params(f));
        self.layer1.iter().for_each(|m| m.visit_params(f));
        for (t, stage) in self.transitions.iter().zip(&self.stages) {
            t.visit_params(f);
            stage.iter().for_each(|m| m.visit_params(f));
        }
        self.final_fuse.visit_params(f);
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        self.stem.iter_mut().for_each(|m| m.visit_params_mut(f));
        self.layer1.iter_mut().for_each(|m| m.visit_params_mut(f));
        for (t, stage) in self.transitions.iter_mut().zip(&mut self.stages) {
            t.visit_params_mut(f);
            stage.iter_mut().for_each(|m| m.visit_params_mut(f));
        }
        self.final_fuse.visit_params_mut(f);
        self.head.visit_params_mut(f);
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[T])) {
        self.stem.iter().for_each(|m| m.visit_buffers(f));
        self.layer1.iter().for_each(|m| m.visit_buffers(f));
        for (t, stage) in self.transitions.iter().zip(&self.stages) {
            t.visit_buffers(f);
            stage.iter().for_each(|m| m.visit_buffers(f));
        }
        self.final_fuse.visit_buffers(f);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T])) {
        self.stem.iter_mut().for_each(|m| m.visit_buffers_mut(f));
        self.layer1.iter_mut().for_each(|m| m.visit_buffers_mut(f));
        for (t, stage) in self.transitions.iter_mut().zip(&mut self.stages) {
            t.visit_buffers_mut(f);
            stage.iter_mut().for_each(|m| m.visit_buffers_mut(f));
        }
        self.final_fuse.visit_buffers_mut(f);
    }
}
