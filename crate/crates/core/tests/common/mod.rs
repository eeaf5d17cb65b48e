#![allow(dead_code)]

use hrcenternet::grid::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f64, hi: f64) -> Grid<f64> {
    let data = (0..c * h * w).map(|_| r.gen_range(lo..hi)).collect();
    Grid::from_vec(c, h, w, data).unwrap()
}

/// `|a - n| / max(|a|, |n|)`, with both treated as equal below `floor`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        return 0.0;
    }
    (analytic - numeric).abs() / scale
}

/// Central finite difference of `f` along coordinate `i` of `x`.
pub fn central_diff(x: &Grid<f64>, i: usize, step: f64, f: impl Fn(&Grid<f64>) -> f64) -> f64 {
    let mut plus = x.clone();
    plus.as_mut_slice()[i] += step;
    let mut minus = x.clone();
    minus.as_mut_slice()[i] -= step;
    (f(&plus) - f(&minus)) / (2.0 * step)
}
pub mod oracles;
