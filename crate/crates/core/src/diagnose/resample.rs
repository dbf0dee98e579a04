use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dynsys::TimeSeries;
use crate::rng::{rng_from_seed, Rng};
use crate::splines::SplineFunction;
use crate::{Error, Result};

fn check_blocks(k: usize, block_len: usize) -> Result<usize> {
    if block_len == 0 || 2 * block_len > k {
        return Err(Error::invalid(format!(
            "block permutation needs at least two full blocks (K = {k}, block length {block_len})"
        )));
    }
    Ok(k.div_ceil(block_len))
}

/// Concatenates the consecutive blocks of `0..k` in the given block order.
/// The final block may be short and is moved as a unit.
pub fn blocks_in_order(k: usize, block_len: usize, order: &[usize]) -> Result<Vec<usize>> {
    let n_blocks = check_blocks(k, block_len)?;
    let mut seen = vec![false; n_blocks];
    if order.len() != n_blocks
        || order
            .iter()
            .any(|&b| b >= n_blocks || core::mem::replace(&mut seen[b], true))
    {
        return Err(Error::invalid(
            "block order must be a permutation of the block indices",
        ));
    }
    let mut out = Vec::with_capacity(k);
    for &b in order {
        out.extend(b * block_len..((b + 1) * block_len).min(k));
    }
    Ok(out)
}

/// Uniformly random block permutation of `0..k` drawn from `rng`.
pub fn block_permute_with(k: usize, block_len: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let n_blocks = check_blocks(k, block_len)?;
    let mut order: Vec<usize> = (0..n_blocks).collect();
    order.shuffle(rng);
    blocks_in_order(k, block_len, &order)
}

/// Uniformly random block permutation of `0..k` (zero-based indices).
pub fn block_permute(k: usize, block_len: usize, seed: u64) -> Result<Vec<usize>> {
    block_permute_with(k, block_len, &mut rng_from_seed(seed))
}

/// Residuals `y_i − x̂(t_i)`, row-major like the data.
pub fn residuals(data: &TimeSeries, xhat: &SplineFunction) -> Result<Vec<f64>> {
    let m = data.dim();
    if xhat.outputs() != m {
        return Err(Error::invalid("smooth and data have different dimensions"));
    }
    let mut out = vec![0.0; data.len() * m];
    for (i, &t) in data.times().iter().enumerate() {
        xhat.eval_into(t, 0, &mut out[i * m..(i + 1) * m]);
        for (o, y) in out[i * m..(i + 1) * m].iter_mut().zip(data.row(i)) {
            *o = y - *o;
        }
    }
    Ok(out)
}

/// `y_i* = x̂(t_i) + ε*_i` with residual rows drawn with replacement, so the
/// coordinates of one time point stay together.
pub fn residual_bootstrap_resample(
    data: &TimeSeries,
    xhat: &SplineFunction,
    seed: u64,
) -> Result<TimeSeries> {
    let eps = residuals(data, xhat)?;
    let m = data.dim();
    let n = data.len();
    let mut rng = rng_from_seed(seed);
    let mut values = vec![0.0; n * m];
    for (i, &t) in data.times().iter().enumerate() {
        let row = &mut values[i * m..(i + 1) * m];
        xhat.eval_into(t, 0, row);
        let j = rng.random_range(0..n);
        for (v, e) in row.iter_mut().zip(&eps[j * m..(j + 1) * m]) {
            *v += e;
        }
    }
    data.with_values(values)
}
