//! Block-structured residual network mapping `w in R^m` to `c in R^k`.
//!
//! Block 1: `W3 tanh(W2 tanh(W1 x + b1) + b2) + W0 x`.
//! Block i >= 2: `W3 tanh(W2 tanh(W1 x + b1) + b2) + x`.
//! Batches are row-major `n x dim` slices.

use crate::error::{Error, Result};
use crate::reduction::ByteCursor;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::io::{Read, Write};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// `c = a b + beta c` where `a` is `m x k`, `b` is `k x n`, `c` is row-major `m x n`.
/// Strides `(rs, cs)` describe how `a` and `b` are laid out.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_s: (usize, usize), b: &[f64], b_s: (usize, usize), beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the strides describe in-bounds accesses of `a` (m x k), `b`
    // (k x n) and `c` (m x n), which callers guarantee via the shapes they pass.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_s.0 as isize,
            a_s.1 as isize,
            b.as_ptr(),
            b_s.0 as isize,
            b_s.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x w^T` for batch `x` (`n x d`) and weight `w` (`o x d`).
fn mul_xwt(x: &[f64], n: usize, w: &Mat, out: &mut [f64], beta: f64) {
    gemm(n, w.cols, w.rows, x, (w.cols, 1), &w.data, (1, w.cols), beta, out);
}

/// `d w` for upstream `d` (`n x o`) and weight `w` (`o x d`).
fn mul_dw(d: &[f64], n: usize, w: &Mat, out: &mut [f64]) {
    gemm(n, w.rows, w.cols, d, (w.rows, 1), &w.data, (w.cols, 1), 0.0, out);
}

/// `d^T x` for upstream `d` (`n x o`) and input `x` (`n x i`), into `o x i`.
fn mul_dtx(d: &[f64], o: usize, x: &[f64], i: usize, n: usize, out: &mut [f64]) {
    gemm(o, n, i, d, (1, o), x, (i, 1), 0.0, out);
}

fn col_sums(d: &[f64], n: usize, cols: usize) -> Vec<f64> {
    let mut s = vec![0.0; cols];
    for r in 0..n {
        for (acc, v) in s.iter_mut().zip(&d[r * cols..(r + 1) * cols]) {
            *acc += v;
        }
    }
    s
}

/// One residual block `x -> W3 tanh(W2 tanh(W1 x + b1) + b2)` (skip added by the network).
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    h1: Vec<f64>,
    h2: Vec<f64>,
    /// `W3 h2`, the block's residual output.
    pub out: Vec<f64>,
}

impl Block {
    pub fn zeros(input: usize, width: usize, output: usize) -> Self {
        Self {
            w1: Mat::zeros(width, input),
            b1: vec![0.0; width],
            w2: Mat::zeros(width, width),
            b2: vec![0.0; width],
            w3: Mat::zeros(output, width),
        }
    }

    pub fn width(&self) -> usize {
        self.w1.rows
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w3.rows
    }

    pub fn num_params(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len() + self.w3.data.len()
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.w1.data, &self.b1, &self.w2.data, &self.b2, &self.w3.data]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.w3.data,
        ]
    }

    /// Residual output for a batch of `n` inputs.
    pub fn forward_batch(&self, x: &[f64], n: usize) -> BlockCache {
        let w = self.width();
        let mut h1 = vec![0.0; n * w];
        for r in 0..n {
            h1[r * w..(r + 1) * w].copy_from_slice(&self.b1);
        }
        mul_xwt(x, n, &self.w1, &mut h1, 1.0);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut h2 = vec![0.0; n * w];
        for r in 0..n {
            h2[r * w..(r + 1) * w].copy_from_slice(&self.b2);
        }
        mul_xwt(&h1, n, &self.w2, &mut h2, 1.0);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = vec![0.0; n * self.output_dim()];
        mul_xwt(&h2, n, &self.w3, &mut out, 0.0);
        BlockCache { h1, h2, out }
    }

    /// Parameter gradient for upstream `dy = dL/d(out)`; also returns
    /// `dL/dx` through the residual branch when `want_input` is set.
    pub fn backward(
        &self,
        x: &[f64],
        n: usize,
        cache: &BlockCache,
        dy: &[f64],
        want_input: bool,
    ) -> (Block, Option<Vec<f64>>) {
        let w = self.width();
        let k = self.output_dim();
        let d_in = self.input_dim();
        let mut g = Block::zeros(d_in, w, k);
        mul_dtx(dy, k, &cache.h2, w, n, &mut g.w3.data);
        let mut da2 = vec![0.0; n * w];
        mul_dw(dy, n, &self.w3, &mut da2);
        for (d, h) in da2.iter_mut().zip(&cache.h2) {
            *d *= 1.0 - h * h;
        }
        mul_dtx(&da2, w, &cache.h1, w, n, &mut g.w2.data);
        g.b2 = col_sums(&da2, n, w);
        let mut da1 = vec![0.0; n * w];
        mul_dw(&da2, n, &self.w2, &mut da1);
        for (d, h) in da1.iter_mut().zip(&cache.h1) {
            *d *= 1.0 - h * h;
        }
        mul_dtx(&da1, w, x, d_in, n, &mut g.w1.data);
        g.b1 = col_sums(&da1, n, w);
        let dx = want_input.then(|| {
            let mut dx = vec![0.0; n * d_in];
            mul_dw(&da1, n, &self.w1, &mut dx);
            dx
        });
        (g, dx)
    }

    /// Batch MSE of the block alone against targets `t`, with its gradient:
    /// the objective on a residual dataset `(x~, c - x~)`.
    pub fn loss_and_gradient(&self, x: &[f64], t: &[f64]) -> Result<(f64, Block)> {
        let k = self.output_dim();
        let n = batch_rows(x.len(), self.input_dim())?;
        if t.len() != n * k {
            return Err(Error::ShapeMismatch(format!("targets have {} entries, expected {}", t.len(), n * k)));
        }
        let cache = self.forward_batch(x, n);
        let (loss, dy) = mse_and_grad(&cache.out, t, n);
        let (g, _) = self.backward(x, n, &cache, &dy, false);
        Ok((loss, g))
    }
}

fn batch_rows(len: usize, dim: usize) -> Result<usize> {
    if dim == 0 || len % dim != 0 || len == 0 {
        return Err(Error::ShapeMismatch(format!(
            "batch of {len} values is not a nonempty multiple of dimension {dim}"
        )));
    }
    Ok(len / dim)
}

/// `(1/n) sum ||y - t||^2` and its derivative in `y`.
fn mse_and_grad(y: &[f64], t: &[f64], n: usize) -> (f64, Vec<f64>) {
    let scale = 2.0 / n as f64;
    let mut loss = 0.0;
    let dy = y
        .iter()
        .zip(t)
        .map(|(a, b)| {
            let r = a - b;
            loss += r * r;
            scale * r
        })
        .collect();
    (loss / n as f64, dy)
}

/// Which parameter groups an optimization step may change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainableMask {
    pub theta0: bool,
    pub blocks: Vec<bool>,
}

impl TrainableMask {
    pub fn full(num_blocks: usize) -> Self {
        Self {
            theta0: true,
            blocks: vec![true; num_blocks],
        }
    }

    /// Only block `i` (0-based).
    pub fn only_block(num_blocks: usize, i: usize) -> Self {
        let mut blocks = vec![false; num_blocks];
        blocks[i] = true;
        Self { theta0: false, blocks }
    }

    pub fn theta0_only(num_blocks: usize) -> Self {
        Self {
            theta0: true,
            blocks: vec![false; num_blocks],
        }
    }

    pub fn any(&self) -> bool {
        self.theta0 || self.blocks.iter().any(|&b| b)
    }
}

/// How a newly appended block is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockInit {
    /// All entries `N(0, std^2)`.
    #[default]
    Gaussian,
    /// Gaussian, except `W3 = 0`: the network output is unchanged.
    ZeroLast,
}

/// Network parameters `theta0, theta1, ..., thetaB`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResNetParams {
    m: usize,
    k: usize,
    pub theta0: Mat,
    pub blocks: Vec<Block>,
}

impl ResNetParams {
    /// All-zero network with the given per-block widths.
    pub fn zeros(m: usize, k: usize, widths: &[usize]) -> Self {
        let blocks = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| Block::zeros(if i == 0 { m } else { k }, w, k))
            .collect();
        Self {
            m,
            k,
            theta0: Mat::zeros(k, m),
            blocks,
        }
    }

    /// I.i.d. `N(0, std^2)` entries, drawn in storage order.
    pub fn init_gaussian<R: Rng + ?Sized>(m: usize, k: usize, widths: &[usize], std: f64, rng: &mut R) -> Result<Self> {
        let normal = gaussian(std)?;
        let mut p = Self::zeros(m, k, widths);
        for t in p.tensors_mut(&TrainableMask::full(widths.len())) {
            t.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.k
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::width).collect()
    }

    /// Folds `x -> s x` into the input maps: afterwards `forward(x)` equals
    /// the old `forward(s x)`.
    pub fn scale_inputs(&mut self, s: f64) {
        self.theta0.data.iter_mut().for_each(|v| *v *= s);
        if let Some(b) = self.blocks.first_mut() {
            b.w1.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn count_params(&self) -> usize {
        self.theta0.data.len() + self.blocks.iter().map(Block::num_params).sum::<usize>()
    }

    /// Adds a block of width `width` mapping `R^k -> R^k`.
    pub fn append_block<R: Rng + ?Sized>(&mut self, width: usize, init: BlockInit, std: f64, rng: &mut R) -> Result<()> {
        let normal = gaussian(std)?;
        let input = if self.blocks.is_empty() { self.m } else { self.k };
        let mut b = Block::zeros(input, width, self.k);
        for t in b.tensors_mut() {
            t.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        if init == BlockInit::ZeroLast {
            b.w3.data.iter_mut().for_each(|v| *v = 0.0);
        }
        self.blocks.push(b);
        Ok(())
    }

    /// Parameter tensors of the enabled groups, in storage order.
    pub fn tensors(&self, mask: &TrainableMask) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if mask.theta0 {
            out.push(&self.theta0.data);
        }
        for (b, &on) in self.blocks.iter().zip(&mask.blocks) {
            if on {
                out.extend(b.tensors());
            }
        }
        out
    }

    pub fn tensors_mut(&mut self, mask: &TrainableMask) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if mask.theta0 {
            out.push(&mut self.theta0.data);
        }
        for (b, &on) in self.blocks.iter_mut().zip(&mask.blocks) {
            if on {
                out.extend(b.tensors_mut());
            }
        }
        out
    }

    fn check_mask(&self, mask: &TrainableMask) -> Result<()> {
        if mask.blocks.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask covers {} blocks, network has {}",
                mask.blocks.len(),
                self.blocks.len()
            )));
        }
        Ok(())
    }

    /// Output after the first `nblocks` blocks; `0` gives `W0 x`.
    pub fn forward_prefix(&self, x: &[f64], nblocks: usize) -> Result<Vec<f64>> {
        let n = batch_rows(x.len(), self.m)?;
        if nblocks > self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "prefix of {nblocks} blocks, network has {}",
                self.blocks.len()
            )));
        }
        let mut y = vec![0.0; n * self.k];
        mul_xwt(x, n, &self.theta0, &mut y, 0.0);
        for (i, b) in self.blocks.iter().take(nblocks).enumerate() {
            let input: &[f64] = if i == 0 { x } else { &y };
            let cache = b.forward_batch(input, n);
            for (yv, g) in y.iter_mut().zip(&cache.out) {
                *yv += g;
            }
        }
        Ok(y)
    }

    /// Network output for a batch.
    pub fn forward_batch(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_prefix(x, self.blocks.len())
    }

    /// Network output for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m {
            return Err(Error::ShapeMismatch(format!("input has length {}, expected {}", x.len(), self.m)));
        }
        self.forward_batch(x)
    }

    /// `(1/n) sum ||c - NN(w)||^2` over a batch.
    pub fn batch_loss(&self, x: &[f64], c: &[f64]) -> Result<f64> {
        let y = self.forward_batch(x)?;
        if c.len() != y.len() {
            return Err(Error::ShapeMismatch(format!("targets have {} entries, expected {}", c.len(), y.len())));
        }
        let n = y.len() / self.k;
        Ok(mse_and_grad(&y, c, n).0)
    }

    /// Batch loss and its exact gradient. Groups outside `mask` get zeros.
    pub fn loss_and_gradient(&self, mask: &TrainableMask, x: &[f64], c: &[f64]) -> Result<(f64, ResNetParams)> {
        self.check_mask(mask)?;
        let n = batch_rows(x.len(), self.m)?;
        if c.len() != n * self.k {
            return Err(Error::ShapeMismatch(format!("targets have {} entries, expected {}", c.len(), n * self.k)));
        }
        let nb = self.blocks.len();
        // states[i] is the input of block i; states[nb] the output
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(nb + 1);
        let mut caches: Vec<BlockCache> = Vec::with_capacity(nb);
        let mut y = vec![0.0; n * self.k];
        mul_xwt(x, n, &self.theta0, &mut y, 0.0);
        for (i, b) in self.blocks.iter().enumerate() {
            let cache = b.forward_batch(if i == 0 { x } else { &y }, n);
            if i > 0 {
                states.push(y.clone());
            }
            for (yv, g) in y.iter_mut().zip(&cache.out) {
                *yv += g;
            }
            caches.push(cache);
        }
        let (loss, mut d) = mse_and_grad(&y, c, n);
        let mut grad = ResNetParams::zeros(self.m, self.k, &self.widths());
        // earliest group that needs a gradient
        let first = if mask.theta0 { 0 } else { mask.blocks.iter().position(|&b| b).unwrap_or(nb) };
        for i in (0..nb).rev() {
            if i < first {
                break;
            }
            let input: &[f64] = if i == 0 { x } else { &states[i - 1] };
            let want_input = i > 0 && i > first;
            if mask.blocks[i] || want_input {
                let (g, dx) = self.blocks[i].backward(input, n, &caches[i], &d, want_input);
                if mask.blocks[i] {
                    grad.blocks[i] = g;
                }
                if let Some(dx) = dx {
                    for (dv, e) in d.iter_mut().zip(&dx) {
                        *dv += e;
                    }
                }
            }
        }
        if mask.theta0 {
            mul_dtx(&d, self.k, x, self.m, n, &mut grad.theta0.data);
        }
        Ok((loss, grad))
    }
}

fn gaussian(std: f64) -> Result<Normal<f64>> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::InvalidArgument(format!("init std must be positive, got {std}")));
    }
    Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Parameter count of the architecture without building it.
pub fn count_params(m: usize, k: usize, widths: &[usize]) -> usize {
    k * m
        + widths
            .iter()
            .enumerate()
            .map(|(i, &w)| w * if i == 0 { m } else { k } + w + w * w + w + k * w)
            .sum::<usize>()
}

const MODEL_MAGIC: &[u8; 5] = b"PDENN";
const MODEL_VERSION: u32 = 1;

/// Writes the model file: magic, version, `m`, `k`, `B`, widths, then `theta0`
/// and each block's `W1, b1, W2, b2, W3` as little-endian f64.
pub fn serialize<W: Write>(p: &ResNetParams, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * p.count_params() + 64);
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [p.m, p.k, p.blocks.len()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for w in p.widths() {
        buf.extend_from_slice(&(w as u64).to_le_bytes());
    }
    for t in p.tensors(&TrainableMask::full(p.blocks.len())) {
        for x in t {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

const MAX_DIM: u64 = 1 << 24;

pub fn deserialize<R: Read>(mut input: R) -> Result<ResNetParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = ByteCursor::new(&bytes);
    if cur.take(5)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let dim = |cur: &mut ByteCursor, what: &str| -> Result<usize> {
        let v = cur.u64()?;
        if v > MAX_DIM {
            return Err(Error::Format(format!("implausible {what} {v} in model header")));
        }
        Ok(v as usize)
    };
    let m = dim(&mut cur, "input dimension")?;
    let k = dim(&mut cur, "output dimension")?;
    let nb = dim(&mut cur, "block count")?;
    if m == 0 || k == 0 {
        return Err(Error::Format("model dimensions must be positive".into()));
    }
    let widths = (0..nb).map(|_| dim(&mut cur, "width")).collect::<Result<Vec<_>>>()?;
    let expected = count_params(m, k, &widths) * 8;
    if cur.remaining() != expected {
        return Err(Error::Format(format!(
            "model payload has {} bytes, shape table implies {expected}",
            cur.remaining()
        )));
    }
    let mut p = ResNetParams::zeros(m, k, &widths);
    for t in p.tensors_mut(&TrainableMask::full(nb)) {
        let vals = cur.f64s(t.len())?;
        t.copy_from_slice(&vals);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straightforward per-sample evaluator, written independently of the
    /// batched implementation.
    fn direct_forward(p: &ResNetParams, x: &[f64]) -> Vec<f64> {
        let matvec = |w: &Mat, v: &[f64]| -> Vec<f64> {
            (0..w.rows).map(|r| (0..w.cols).map(|c| w.get(r, c) * v[c]).sum()).collect()
        };
        let block = |b: &Block, v: &[f64]| -> Vec<f64> {
            let h1: Vec<f64> = matvec(&b.w1, v).iter().zip(&b.b1).map(|(a, c)| (a + c).tanh()).collect();
            let h2: Vec<f64> = matvec(&b.w2, &h1).iter().zip(&b.b2).map(|(a, c)| (a + c).tanh()).collect();
            matvec(&b.w3, &h2)
        };
        let mut y: Vec<f64> = block(&p.blocks[0], x)
            .iter()
            .zip(matvec(&p.theta0, x))
            .map(|(a, b)| a + b)
            .collect();
        for b in &p.blocks[1..] {
            let g = block(b, &y);
            y.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        y
    }

    fn random_batch(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn parameter_counts() {
        for (m, k, w, b, expected) in [
            (16, 28, 200, 1, 49_648),
            (16, 28, 200, 2, 101_248),
            (16, 28, 20, 1, 1_768),
            (16, 28, 20, 2, 3_328),
            (16, 21, 20, 1, 1_516),
            (49, 22, 20, 1, 2_938),
        ] {
            assert_eq!(count_params(m, k, &vec![w; b]), expected);
            assert_eq!(ResNetParams::zeros(m, k, &vec![w; b]).count_params(), expected);
        }
    }

    #[test]
    fn zero_and_identity_networks() {
        let p = ResNetParams::zeros(3, 5, &[4, 4]);
        assert_eq!(p.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0; 5]);
        let mut q = ResNetParams::zeros(3, 5, &[4]);
        for i in 0..3 {
            q.theta0.set(i, i, 1.0);
        }
        assert_eq!(q.forward(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(q.forward(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn batched_forward_matches_direct_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, k, widths) in [(4, 6, vec![5]), (16, 28, vec![20, 7, 20]), (7, 3, vec![2, 9])] {
            let p = ResNetParams::init_gaussian(m, k, &widths, 0.5, &mut rng).unwrap();
            let x = random_batch(9, m, &mut rng);
            let y = p.forward_batch(&x).unwrap();
            for r in 0..9 {
                let d = direct_forward(&p, &x[r * m..(r + 1) * m]);
                for (a, b) in y[r * k..(r + 1) * k].iter().zip(&d) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn init_statistics() {
        let a = ResNetParams::init_gaussian(16, 28, &[200], 0.1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = ResNetParams::init_gaussian(16, 28, &[200], 0.1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = ResNetParams::init_gaussian(16, 28, &[200], 0.1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let all: Vec<f64> = a.tensors(&TrainableMask::full(1)).concat();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.1).abs() < 0.005, "{std}");
        assert!(ResNetParams::init_gaussian(2, 2, &[2], 0.0, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn append_block_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ResNetParams::init_gaussian(16, 28, &[20], 0.1, &mut rng).unwrap();
        let x = random_batch(4, 16, &mut rng);
        let before = p.forward_batch(&x).unwrap();
        let count = p.count_params();
        p.append_block(20, BlockInit::ZeroLast, 0.1, &mut rng).unwrap();
        assert_eq!(p.forward_batch(&x).unwrap(), before);
        assert_eq!(p.count_params() - count, 1_560);
        p.append_block(20, BlockInit::Gaussian, 0.1, &mut rng).unwrap();
        assert_ne!(p.forward_batch(&x).unwrap(), before);
        assert_eq!(p.count_params(), 4_888);
    }

    fn check_gradient(p: &ResNetParams, mask: &TrainableMask, x: &[f64], c: &[f64], rng: &mut ChaCha8Rng) {
        let (_, g) = p.loss_and_gradient(mask, x, c).unwrap();
        let full = TrainableMask::full(p.num_blocks());
        let gt: Vec<f64> = g.tensors(&full).concat();
        let mask_flags: Vec<bool> = {
            let mut f = Vec::new();
            f.extend(std::iter::repeat(mask.theta0).take(p.theta0.data.len()));
            for (b, &on) in p.blocks.iter().zip(&mask.blocks) {
                f.extend(std::iter::repeat(on).take(b.num_params()));
            }
            f
        };
        let total = gt.len();
        let step = 1e-5;
        for _ in 0..20 {
            let idx = rng.random_range(0..total);
            let perturbed = |delta: f64| {
                let mut q = p.clone();
                let mut flat = q.tensors_mut(&full);
                let mut i = idx;
                for t in flat.iter_mut() {
                    if i < t.len() {
                        t[i] += delta;
                        break;
                    }
                    i -= t.len();
                }
                q.batch_loss(x, c).unwrap()
            };
            let fd = (perturbed(step) - perturbed(-step)) / (2.0 * step);
            if mask_flags[idx] {
                let err = (gt[idx] - fd).abs() / fd.abs().max(1e-4);
                assert!(err <= 1e-6, "coordinate {idx}: {} vs {fd}", gt[idx]);
            } else {
                assert_eq!(gt[idx], 0.0);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_for_all_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = ResNetParams::init_gaussian(5, 4, &[6, 3, 6], 0.6, &mut rng).unwrap();
        let x = random_batch(8, 5, &mut rng);
        let c = random_batch(8, 4, &mut rng);
        let masks = [
            TrainableMask::full(3),
            TrainableMask::theta0_only(3),
            TrainableMask::only_block(3, 0),
            TrainableMask::only_block(3, 1),
            TrainableMask::only_block(3, 2),
            TrainableMask {
                theta0: true,
                blocks: vec![true, false, false],
            },
        ];
        for mask in &masks {
            check_gradient(&p, mask, &x, &c, &mut rng);
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = ResNetParams::init_gaussian(5, 4, &[6, 6], 0.6, &mut rng).unwrap();
        let x = random_batch(3, 5, &mut rng);
        let c = p.forward_batch(&x).unwrap();
        let (loss, g) = p.loss_and_gradient(&TrainableMask::full(2), &x, &c).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors(&TrainableMask::full(2)).concat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_sensitivity_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ResNetParams::init_gaussian(4, 3, &[8, 8], 0.5, &mut rng).unwrap();
        let x = random_batch(1, 4, &mut rng);
        for i in 0..4 {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let ya = p.forward(&a).unwrap();
            let yb = p.forward(&b).unwrap();
            for (u, v) in ya.iter().zip(&yb) {
                let d = (u - v) / 2e-6;
                assert!(d.is_finite() && d.abs() < 100.0);
            }
        }
    }

    #[test]
    fn serialization_round_trip_and_rejection() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = ResNetParams::init_gaussian(16, 28, &[20, 20], 0.1, &mut rng).unwrap();
        let mut bytes = Vec::new();
        serialize(&p, &mut bytes).unwrap();
        let q = deserialize(&bytes[..]).unwrap();
        assert_eq!(p, q);
        let x = random_batch(3, 16, &mut rng);
        let (a, b) = (p.forward_batch(&x).unwrap(), q.forward_batch(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert!(matches!(deserialize(&bytes[..bytes.len() - 8]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(deserialize(&bad[..]), Err(Error::Format(_))));
        let mut wide = bytes.clone();
        wide[33] = 0x7f; // first width
        assert!(matches!(deserialize(&wide[..]), Err(Error::Format(_))));
    }

    #[test]
    fn block_alone_equals_network_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ResNetParams::init_gaussian(5, 4, &[6, 6], 0.4, &mut rng).unwrap();
        let x = random_batch(7, 5, &mut rng);
        let c = random_batch(7, 4, &mut rng);
        let prefix = p.forward_prefix(&x, 1).unwrap();
        let resid: Vec<f64> = c.iter().zip(&prefix).map(|(a, b)| a - b).collect();
        let (l1, g1) = p.loss_and_gradient(&TrainableMask::only_block(2, 1), &x, &c).unwrap();
        let (l2, g2) = p.blocks[1].loss_and_gradient(&prefix, &resid).unwrap();
        assert!((l1 - l2).abs() <= 1e-12);
        for (a, b) in g1.blocks[1].tensors().concat().iter().zip(g2.tensors().concat()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
