//! Optimizers and the global / blockwise-expansion training schedules.

use crate::error::{Error, Result};
use crate::resnet::{Block, BlockInit, ResNetParams, TrainableMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    ProximalAdagrad,
    Adam,
}

/// Optional rescaling of the network inputs before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    #[default]
    None,
    /// Divide by the root mean square input entry; the factor is folded into
    /// the trained weights, so the returned network acts on raw inputs.
    Rms,
}

impl OptimizerKind {
    /// Default learning rate for this optimizer.
    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::ProximalAdagrad => 0.03,
            OptimizerKind::Adam => 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// All parameters of a fixed `B`-block network for `T` steps.
    Global,
    /// Grow to `B` blocks, `T / B` steps per block, only the newest block trained.
    Expansion,
    /// Expansion followed by `extra_steps` of full-network training.
    ExpansionPlusGlobal { extra_steps: usize },
}

impl Schedule {
    pub fn label(&self) -> &'static str {
        match self {
            Schedule::Global => "Gl",
            Schedule::Expansion => "Exp",
            Schedule::ExpansionPlusGlobal { .. } => "Exp+Gl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub l1: f64,
    /// Total steps `T` (excluding the extra global phase).
    pub steps: usize,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    /// Target block count `B`.
    pub blocks: usize,
    /// Hidden width `W` of every block.
    pub width: usize,
    pub init_std: f64,
    pub new_block_init: BlockInit,
    pub seed: u64,
    /// Loss is recorded at global steps divisible by this.
    pub record_every: usize,
    /// End a stage early when the loss stops improving.
    pub stop_on_stagnation: bool,
    /// Fill the `wall_ms` column; off by default so histories are reproducible.
    pub record_wall_time: bool,
    pub input_scaling: InputScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: OptimizerKind::ProximalAdagrad.default_lr(),
            batch: 100,
            l1: 1e-5,
            steps: 10_000,
            optimizer: OptimizerKind::ProximalAdagrad,
            schedule: Schedule::Global,
            blocks: 1,
            width: 20,
            init_std: 0.1,
            new_block_init: BlockInit::Gaussian,
            seed: 0,
            record_every: 100,
            stop_on_stagnation: false,
            record_wall_time: false,
            input_scaling: InputScaling::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.batch == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.l1 >= 0.0) {
            return bad(format!("l1 weight must be nonnegative, got {}", self.l1));
        }
        if self.blocks == 0 || self.width == 0 {
            return bad("network needs at least one block of positive width".into());
        }
        if self.record_every == 0 {
            return bad("record interval must be positive".into());
        }
        if !(self.init_std > 0.0) {
            return bad("init std must be positive".into());
        }
        Ok(())
    }

    /// Steps given to expansion stage `i` (1-based): `T / B`, with the
    /// remainder spread over the first stages.
    pub fn stage_steps(&self, i: usize) -> usize {
        let base = self.steps / self.blocks;
        base + usize::from(i <= self.steps % self.blocks)
    }
}

/// Per-coordinate proximal Adagrad:
/// `G += g^2; eta = lr / sqrt(G); p = soft(p - eta g, eta l1)`.
pub fn proximal_adagrad_step(accum: &mut [f64], p: &mut [f64], g: &[f64], lr: f64, l1: f64) {
    for ((a, x), &gi) in accum.iter_mut().zip(p.iter_mut()).zip(g) {
        *a += gi * gi;
        let eta = lr / a.sqrt();
        let v = *x - eta * gi;
        let tau = eta * l1;
        *x = v.signum() * (v.abs() - tau).max(0.0);
    }
}

/// First and second moments of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam step `t` (1-based); `l1 sign(p)` is added to the gradient.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(state: &mut AdamMoments, t: u64, p: &mut [f64], g: &[f64], lr: f64, l1: f64, betas: (f64, f64), eps: f64) {
    let (b1, b2) = betas;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((x, &gi), m), v) in p.iter_mut().zip(g).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        let sub = if *x > 0.0 {
            l1
        } else if *x < 0.0 {
            -l1
        } else {
            0.0
        };
        let gi = gi + sub;
        *m = b1 * *m + (1.0 - b1) * gi;
        *v = b2 * *v + (1.0 - b2) * gi * gi;
        let mh = *m / c1;
        let vh = *v / c2;
        *x -= lr * mh / (vh.sqrt() + eps);
    }
}

pub const ADAGRAD_INIT_ACCUM: f64 = 0.1;

/// Optimizer state over a fixed list of tensors.
#[derive(Debug, Clone)]
pub enum Optimizer {
    ProximalAdagrad { lr: f64, l1: f64, accum: Vec<Vec<f64>> },
    Adam { lr: f64, l1: f64, t: u64, moments: Vec<AdamMoments> },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, l1: f64) -> Self {
        match kind {
            OptimizerKind::ProximalAdagrad => Optimizer::ProximalAdagrad { lr, l1, accum: Vec::new() },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                l1,
                t: 0,
                moments: Vec::new(),
            },
        }
    }

    /// Applies one update; state is sized on first use.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        debug_assert_eq!(params.len(), grads.len());
        match self {
            Optimizer::ProximalAdagrad { lr, l1, accum } => {
                if accum.is_empty() {
                    *accum = params.iter().map(|p| vec![ADAGRAD_INIT_ACCUM; p.len()]).collect();
                }
                for ((p, g), a) in params.into_iter().zip(grads).zip(accum.iter_mut()) {
                    proximal_adagrad_step(a, p, g, *lr, *l1);
                }
            }
            Optimizer::Adam { lr, l1, t, moments } => {
                if moments.is_empty() {
                    *moments = params.iter().map(|p| AdamMoments::zeros(p.len())).collect();
                }
                *t += 1;
                for ((p, g), s) in params.into_iter().zip(grads).zip(moments.iter_mut()) {
                    adam_step(s, *t, p, g, *lr, *l1, ADAM_BETAS, ADAM_EPS);
                }
            }
        }
    }
}

/// Training pairs stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub m: usize,
    pub k: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(m: usize, k: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if m == 0 || inputs.len() % m != 0 || targets.len() != inputs.len() / m * k {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs of dimension {m} do not pair with {} targets of dimension {k}",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self { m, k, inputs, targets })
    }

    /// Rows `idx` of `w` and `c`.
    pub fn from_rows(w: &[Vec<f64>], c: &[Vec<f64>], idx: &[usize]) -> Result<Self> {
        let m = idx.first().map_or(0, |&i| w[i].len());
        let k = idx.first().map_or(0, |&i| c[i].len());
        let mut inputs = Vec::with_capacity(idx.len() * m);
        let mut targets = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            if w[i].len() != m || c[i].len() != k {
                return Err(Error::ShapeMismatch(format!("row {i} has inconsistent dimensions")));
            }
            inputs.extend_from_slice(&w[i]);
            targets.extend_from_slice(&c[i]);
        }
        if idx.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        Self::new(m, k, inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.m..(i + 1) * self.m]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.k..(i + 1) * self.k]
    }

    fn gather(&self, idx: &[usize], x: &mut Vec<f64>, c: &mut Vec<f64>) {
        x.clear();
        c.clear();
        for &i in idx {
            x.extend_from_slice(self.input(i));
            c.extend_from_slice(self.target(i));
        }
    }
}

/// `(x~, c - x~)` with `x~` the output of the frozen network.
pub fn residual_dataset(frozen: &ResNetParams, data: &Dataset) -> Result<Dataset> {
    let xt = frozen.forward_batch(&data.inputs)?;
    let ct = data.targets.iter().zip(&xt).map(|(c, x)| c - x).collect();
    Dataset::new(data.k, data.k, xt, ct)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    /// 1-based block trained alone, or 0 when all parameters train.
    pub block_index: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub records: Vec<LossRecord>,
    /// `(block_index, first global step)` of each stage.
    pub stage_starts: Vec<(usize, usize)>,
    /// Global steps actually taken.
    pub steps_taken: usize,
}

impl LossHistory {
    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["step", "loss", "block_index", "wall_ms"]).map_err(io)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.block_index.to_string(),
                r.wall_ms.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Batch-sampling stream for a stage: one ChaCha stream per `(seed, stage)`.
pub fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stage);
    r
}

/// Stream used to initialize parameters of block `i` (1-based).
fn init_rng(seed: u64, block: usize) -> ChaCha8Rng {
    stage_rng(seed, (1 << 32) + block as u64)
}

struct Runner<'a> {
    cfg: &'a TrainConfig,
    history: LossHistory,
    start: Instant,
}

const STAGNATION_WINDOW: usize = 1000;
const STAGNATION_TOL: f64 = 1e-4;

impl<'a> Runner<'a> {
    fn new(cfg: &'a TrainConfig) -> Self {
        Self {
            cfg,
            history: LossHistory::default(),
            start: Instant::now(),
        }
    }

    /// Runs `steps` steps over `data`; `step` computes the loss on a batch and
    /// applies the update, unless the loss is not finite.
    fn run(
        &mut self,
        data: &Dataset,
        steps: usize,
        stage: u64,
        block_index: usize,
        mut step: impl FnMut(&[f64], &[f64]) -> Result<f64>,
    ) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        if data.is_empty() {
            return Err(Error::InvalidArgument("training data is empty".into()));
        }
        let mut rng = stage_rng(self.cfg.seed, stage);
        let b = self.cfg.batch;
        let mut idx = vec![0usize; b];
        let (mut x, mut c) = (Vec::with_capacity(b * data.m), Vec::with_capacity(b * data.k));
        let mut losses = Vec::new();
        self.history.stage_starts.push((block_index, self.history.steps_taken));
        for s in 0..steps {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..data.len()));
            data.gather(&idx, &mut x, &mut c);
            let global = self.history.steps_taken;
            let loss = step(&x, &c).map_err(|e| match e {
                Error::NonFiniteLoss { loss, .. } => Error::NonFiniteLoss { step: global, loss },
                other => other,
            })?;
            if global % self.cfg.record_every == 0 {
                let wall_ms = if self.cfg.record_wall_time {
                    self.start.elapsed().as_millis() as u64
                } else {
                    0
                };
                self.history.records.push(LossRecord {
                    step: global,
                    loss,
                    block_index,
                    wall_ms,
                });
            }
            self.history.steps_taken += 1;
            if self.cfg.stop_on_stagnation {
                losses.push(loss);
                let n = s + 1;
                if n >= 2 * STAGNATION_WINDOW && n % STAGNATION_WINDOW == 0 {
                    let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
                    let prev = mean(&losses[n - 2 * STAGNATION_WINDOW..n - STAGNATION_WINDOW]);
                    let cur = mean(&losses[n - STAGNATION_WINDOW..]);
                    if (prev - cur) / prev < STAGNATION_TOL {
                        log::info!("stage {stage} stagnated after {n} steps");
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

fn finite(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss { step: 0, loss })
    }
}

fn train_masked(
    runner: &mut Runner,
    p: &mut ResNetParams,
    data: &Dataset,
    mask: &TrainableMask,
    steps: usize,
    stage: u64,
    block_index: usize,
) -> Result<()> {
    let cfg = runner.cfg;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.l1);
    runner.run(data, steps, stage, block_index, |x, c| {
        let (loss, g) = p.loss_and_gradient(mask, x, c)?;
        finite(loss)?;
        opt.update(p.tensors_mut(mask), g.tensors(mask));
        Ok(loss)
    })
}

fn train_block_alone(
    runner: &mut Runner,
    block: &mut Block,
    data: &Dataset,
    steps: usize,
    stage: u64,
    block_index: usize,
) -> Result<()> {
    let cfg = runner.cfg;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.l1);
    runner.run(data, steps, stage, block_index, |x, c| {
        let (loss, g) = block.loss_and_gradient(x, c)?;
        finite(loss)?;
        opt.update(block.tensors_mut().into(), g.tensors().into());
        Ok(loss)
    })
}

fn check_dims(p: &ResNetParams, data: &Dataset) -> Result<()> {
    if p.input_dim() != data.m || p.output_dim() != data.k {
        return Err(Error::ShapeMismatch(format!(
            "network maps R^{} -> R^{}, data pairs R^{} -> R^{}",
            p.input_dim(),
            p.output_dim(),
            data.m,
            data.k
        )));
    }
    Ok(())
}

/// `T` steps of full-network training from `p`, batches from stream `(seed, 0)`.
pub fn train_global(p: ResNetParams, data: &Dataset, cfg: &TrainConfig) -> Result<(ResNetParams, LossHistory)> {
    cfg.validate()?;
    check_dims(&p, data)?;
    let mut p = p;
    let mut runner = Runner::new(cfg);
    let mask = TrainableMask::full(p.num_blocks());
    train_masked(&mut runner, &mut p, data, &mask, cfg.steps, 0, 0)?;
    Ok((p, runner.history))
}

/// Blockwise expansion from a one-block network `p1`. Stage 1 trains
/// `theta0, theta1`; stage `i` appends block `i` and trains it alone on the
/// residual dataset of the frozen prefix.
pub fn train_expansion(p1: ResNetParams, data: &Dataset, cfg: &TrainConfig) -> Result<(ResNetParams, LossHistory)> {
    cfg.validate()?;
    check_dims(&p1, data)?;
    if p1.num_blocks() != 1 {
        return Err(Error::InvalidArgument(format!(
            "expansion starts from one block, got {}",
            p1.num_blocks()
        )));
    }
    let mut runner = Runner::new(cfg);
    let p = expand(&mut runner, p1, data)?;
    Ok((p, runner.history))
}

fn expand(runner: &mut Runner, p1: ResNetParams, data: &Dataset) -> Result<ResNetParams> {
    let cfg = runner.cfg;
    let mut p = p1;
    train_masked(runner, &mut p, data, &TrainableMask::full(1), cfg.stage_steps(1), 0, 1)?;
    for i in 2..=cfg.blocks {
        let resid = residual_dataset(&p, data)?;
        p.append_block(cfg.width, cfg.new_block_init, cfg.init_std, &mut init_rng(cfg.seed, i))?;
        let block = p.blocks.last_mut().expect("just appended");
        train_block_alone(runner, block, &resid, cfg.stage_steps(i), (i - 1) as u64, i)?;
    }
    Ok(p)
}

/// `extra_steps` of full-network training after an expansion, from stream `(seed, B)`.
pub fn train_schedule_plus_global(
    p: ResNetParams,
    data: &Dataset,
    cfg: &TrainConfig,
    extra_steps: usize,
) -> Result<(ResNetParams, LossHistory)> {
    cfg.validate()?;
    check_dims(&p, data)?;
    let mut p = p;
    let mut runner = Runner::new(cfg);
    let stage = p.num_blocks() as u64;
    let mask = TrainableMask::full(p.num_blocks());
    train_masked(&mut runner, &mut p, data, &mask, extra_steps, stage, 0)?;
    Ok((p, runner.history))
}

/// Initial network for a schedule: `B` blocks for global training, one block otherwise.
pub fn initial_params(m: usize, k: usize, cfg: &TrainConfig) -> Result<ResNetParams> {
    let blocks = match cfg.schedule {
        Schedule::Global => cfg.blocks,
        _ => 1,
    };
    let mut rng = init_rng(cfg.seed, 1);
    ResNetParams::init_gaussian(m, k, &vec![cfg.width; blocks], cfg.init_std, &mut rng)
}

/// Factor applied to the inputs under `scaling`.
pub fn input_scale(data: &Dataset, scaling: InputScaling) -> f64 {
    match scaling {
        InputScaling::None => 1.0,
        InputScaling::Rms => {
            let ms = data.inputs.iter().map(|x| x * x).sum::<f64>() / data.inputs.len().max(1) as f64;
            if ms > 0.0 {
                1.0 / ms.sqrt()
            } else {
                1.0
            }
        }
    }
}

/// Initializes and trains according to `cfg.schedule`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(ResNetParams, LossHistory)> {
    cfg.validate()?;
    let s = input_scale(data, cfg.input_scaling);
    if s != 1.0 {
        let scaled = Dataset::new(
            data.m,
            data.k,
            data.inputs.iter().map(|x| x * s).collect(),
            data.targets.clone(),
        )?;
        let (mut p, history) = train_unscaled(&scaled, cfg)?;
        p.scale_inputs(s);
        return Ok((p, history));
    }
    train_unscaled(data, cfg)
}

fn train_unscaled(data: &Dataset, cfg: &TrainConfig) -> Result<(ResNetParams, LossHistory)> {
    let p = initial_params(data.m, data.k, cfg)?;
    match cfg.schedule {
        Schedule::Global => train_global(p, data, cfg),
        Schedule::Expansion => train_expansion(p, data, cfg),
        Schedule::ExpansionPlusGlobal { extra_steps } => {
            let mut runner = Runner::new(cfg);
            let mut p = expand(&mut runner, p, data)?;
            let mask = TrainableMask::full(p.num_blocks());
            train_masked(&mut runner, &mut p, data, &mask, extra_steps, cfg.blocks as u64, 0)?;
            Ok((p, runner.history))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data(n: usize, m: usize, k: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets = (0..n)
            .flat_map(|r| {
                let x = &inputs[r * m..(r + 1) * m];
                (0..k)
                    .map(|j| (x[j % m] * 1.5).sin() + 0.3 * x[(j + 1) % m] * x[j % m])
                    .collect::<Vec<_>>()
            })
            .collect();
        Dataset::new(m, k, inputs, targets).unwrap()
    }

    #[test]
    fn proximal_adagrad_hand_example() {
        let (mut acc, mut p) = ([0.1], [1.0]);
        proximal_adagrad_step(&mut acc, &mut p, &[2.0], 0.1, 0.0);
        assert!((acc[0] - 4.1f64).abs() < 1e-15);
        let eta = 0.1 / 4.1f64.sqrt();
        assert!((eta - 0.049386).abs() < 1e-6);
        assert_eq!(p[0], 1.0 - eta * 2.0);
        assert!((p[0] - 0.901229).abs() < 5e-6);

        let (mut acc, mut p) = ([0.1], [0.01]);
        proximal_adagrad_step(&mut acc, &mut p, &[0.1], 0.1, 10.0);
        assert_eq!(p[0], 0.0);

        let (mut acc, mut p) = ([0.1], [0.7]);
        proximal_adagrad_step(&mut acc, &mut p, &[0.0], 0.1, 0.0);
        assert_eq!(p[0], 0.7);
    }

    #[test]
    fn proximal_adagrad_without_l1_is_adagrad() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut acc = vec![0.1; 10];
        let mut acc2 = acc.clone();
        let mut p: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q = p.clone();
        for _ in 0..5 {
            let g: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            proximal_adagrad_step(&mut acc, &mut p, &g, 0.05, 0.0);
            for i in 0..10 {
                acc2[i] += g[i] * g[i];
                q[i] -= 0.05 / acc2[i].sqrt() * g[i];
            }
        }
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_single_step() {
        for g in [3.0, -0.02, 1e3] {
            let mut s = AdamMoments::zeros(1);
            let mut p = [0.5];
            adam_step(&mut s, 1, &mut p, &[g], 1e-3, 0.0, ADAM_BETAS, ADAM_EPS);
            let expected = 1e-3 * g / (g.abs() + ADAM_EPS);
            assert!(((0.5 - p[0]) - expected).abs() < 1e-15);
            assert!(((0.5 - p[0]).abs() - 1e-3).abs() < 1e-6);
        }
        let mut s = AdamMoments::zeros(1);
        let mut p = [0.5];
        adam_step(&mut s, 1, &mut p, &[0.0], 1e-3, 0.0, ADAM_BETAS, ADAM_EPS);
        assert_eq!(p[0], 0.5);
    }

    #[test]
    fn batch_loss_matches_direct_sum() {
        let data = toy_data(5, 3, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ResNetParams::init_gaussian(3, 4, &[5], 0.3, &mut rng).unwrap();
        let loss = p.batch_loss(&data.inputs, &data.targets).unwrap();
        let mut direct = 0.0;
        for i in 0..5 {
            let y = p.forward(data.input(i)).unwrap();
            direct += y.iter().zip(data.target(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        assert!((loss - direct / 5.0).abs() < 1e-12);
        let zero = ResNetParams::zeros(3, 4, &[5]);
        let c2: f64 = data.target(0).iter().map(|v| v * v).sum();
        assert!((zero.batch_loss(data.input(0), data.target(0)).unwrap() - c2).abs() < 1e-14);
    }

    #[test]
    fn global_training_reduces_loss_and_is_deterministic() {
        let data = toy_data(300, 4, 5, 4);
        let cfg = TrainConfig {
            steps: 2000,
            width: 10,
            lr: 0.03,
            batch: 20,
            seed: 9,
            ..TrainConfig::default()
        };
        let (p, h) = train(&data, &cfg).unwrap();
        let (p2, h2) = train(&data, &cfg).unwrap();
        assert_eq!(p, p2);
        assert_eq!(h, h2);
        assert_eq!(h.records.len(), 20);
        let init = initial_params(4, 5, &cfg).unwrap();
        let before = init.batch_loss(&data.inputs, &data.targets).unwrap();
        let after = p.batch_loss(&data.inputs, &data.targets).unwrap();
        assert!(after < 0.5 * before, "{before} -> {after}");

        let zero_cfg = TrainConfig { steps: 0, ..cfg.clone() };
        let (q, hq) = train_global(init.clone(), &data, &zero_cfg).unwrap();
        assert_eq!(q, init);
        assert!(hq.records.is_empty());
    }

    #[test]
    fn single_block_expansion_equals_global() {
        let data = toy_data(100, 3, 4, 5);
        let cfg = TrainConfig {
            steps: 300,
            width: 6,
            batch: 10,
            seed: 2,
            ..TrainConfig::default()
        };
        let p = initial_params(3, 4, &cfg).unwrap();
        let (a, _) = train_global(p.clone(), &data, &cfg).unwrap();
        let (b, _) = train_expansion(p, &data, &TrainConfig { schedule: Schedule::Expansion, ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expansion_freezes_earlier_blocks() {
        let data = toy_data(100, 3, 4, 6);
        let cfg = TrainConfig {
            steps: 301,
            width: 6,
            batch: 10,
            blocks: 3,
            schedule: Schedule::Expansion,
            record_every: 1,
            seed: 4,
            ..TrainConfig::default()
        };
        assert_eq!((1..=3).map(|i| cfg.stage_steps(i)).collect::<Vec<_>>(), vec![101, 100, 100]);
        let (p, h) = train(&data, &cfg).unwrap();
        assert_eq!(p.num_blocks(), 3);
        assert_eq!(h.records.len(), 301);
        assert_eq!(h.stage_starts, vec![(1, 0), (2, 101), (3, 201)]);
        // rerunning with two blocks reproduces the first two blocks exactly
        let two = TrainConfig {
            steps: 201,
            blocks: 2,
            ..cfg.clone()
        };
        let (q, _) = train(&data, &two).unwrap();
        assert_eq!(q.theta0, p.theta0);
        assert_eq!(q.blocks[0], p.blocks[0]);
        assert_eq!(q.blocks[1], p.blocks[1]);
    }

    #[test]
    fn plus_global_appends_steps() {
        let data = toy_data(80, 3, 4, 7);
        let cfg = TrainConfig {
            steps: 100,
            width: 5,
            batch: 8,
            blocks: 2,
            schedule: Schedule::ExpansionPlusGlobal { extra_steps: 50 },
            record_every: 1,
            ..TrainConfig::default()
        };
        let (_, h) = train(&data, &cfg).unwrap();
        assert_eq!(h.records.len(), 150);
        assert_eq!(h.records.last().unwrap().block_index, 0);
        let exp = TrainConfig {
            schedule: Schedule::Expansion,
            ..cfg.clone()
        };
        let (pe, _) = train(&data, &exp).unwrap();
        let (pz, _) = train_schedule_plus_global(pe.clone(), &data, &exp, 0).unwrap();
        assert_eq!(pe, pz);
    }

    #[test]
    fn residual_dataset_of_zero_prefix() {
        let data = toy_data(10, 3, 4, 8);
        let zero = ResNetParams::zeros(3, 4, &[5]);
        let d = residual_dataset(&zero, &data).unwrap();
        assert!(d.inputs.iter().all(|&v| v == 0.0));
        assert_eq!(d.targets, data.targets);
    }

    #[test]
    fn divergence_is_reported() {
        let data = toy_data(50, 3, 4, 9);
        let cfg = TrainConfig {
            steps: 200,
            lr: 1e300,
            optimizer: OptimizerKind::Adam,
            ..TrainConfig::default()
        };
        match train(&data, &cfg) {
            Err(Error::NonFiniteLoss { step, .. }) => assert!(step > 0),
            other => panic!("expected non-finite loss, got {other:?}"),
        }
    }

    #[test]
    fn history_csv_columns() {
        let data = toy_data(20, 2, 2, 10);
        let cfg = TrainConfig {
            steps: 250,
            width: 3,
            batch: 4,
            ..TrainConfig::default()
        };
        let (_, h) = train(&data, &cfg).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,loss,block_index,wall_ms");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("100,"));
        assert!(lines[2].ends_with(",0,0"));
    }

    #[test]
    fn rms_scaling_is_folded_into_the_weights() {
        let data = toy_data(300, 4, 3, 9);
        let small = Dataset::new(4, 3, data.inputs.iter().map(|x| x * 1e-3).collect(), data.targets.clone()).unwrap();
        let cfg = TrainConfig {
            steps: 300,
            schedule: Schedule::Expansion,
            blocks: 2,
            width: 6,
            input_scaling: InputScaling::Rms,
            ..TrainConfig::default()
        };
        let s = input_scale(&small, InputScaling::Rms);
        let rms = (small.inputs.iter().map(|x| x * x).sum::<f64>() / small.inputs.len() as f64).sqrt();
        assert!((s * rms - 1.0).abs() < 1e-12);
        let (net, hist) = train(&small, &cfg).unwrap();
        let scaled = Dataset::new(4, 3, small.inputs.iter().map(|x| x * s).collect(), small.targets.clone()).unwrap();
        let plain = TrainConfig {
            input_scaling: InputScaling::None,
            ..cfg.clone()
        };
        let (reference, ref_hist) = train(&scaled, &plain).unwrap();
        assert_eq!(hist, ref_hist);
        for i in 0..5 {
            let a = net.forward(small.input(i)).unwrap();
            let b = reference.forward(scaled.input(i)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
        assert_eq!(input_scale(&small, InputScaling::None), 1.0);
    }
}
