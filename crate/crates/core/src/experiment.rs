//! Experiment configs, profiles and the generate / train / evaluate /
//! compare-affine / plot pipeline behind the command line.

use crate::affine::{build_affine_space, scan_pbdw, write_comparison, ComparisonRow};
use crate::coeff::MaternSpec;
use crate::error::{Error, Result};
use crate::estimation::{absolute_errors, evaluate, write_error_table, ErrorRow, EvalReport, Estimator};
use crate::fem::{FeFunction, FeSpace, InnerProductMode};
use crate::plot::chart_from_files;
use crate::reduction::{
    extract_labels, generate_snapshots, pod_complement, read_snapshots, split_train_ghost, write_snapshots,
    ComplementBasis, PodOptions, PodWeighting, Scenario, SnapshotSet,
};
use crate::resnet::{self, BlockInit, ResNetParams};
use crate::sensing::{place_random, place_uniform, MeasurementSpace, Orthonormalization, SensorArray, DEFAULT_DELTA};
use crate::training::{stage_rng, train, Dataset, InputScaling, LossHistory, OptimizerKind, Schedule, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

pub const SNAPSHOT_FILE: &str = "snapshots.bin";
pub const MODEL_FILE: &str = "model.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const ERROR_FILE: &str = "errors.csv";
pub const COMPARE_FILE: &str = "compare.csv";

/// Desk runs shrink `N_hat` and `T` by this factor unless `[desk]` says otherwise.
pub const DESK_FACTOR: usize = 5;

/// Stream of the train/ghost split RNG.
const SPLIT_STREAM: u64 = 0xFFFF_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?} (desk or paper)"))),
        }
    }
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Pwc,
    LogNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub scenario: ScenarioName,
    #[serde(default = "default_mesh")]
    pub mesh_n: usize,
    /// Defaults to H1 for pwc and L2 for log-normal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<InnerProductMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matern: Option<MaternSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorLayout {
    Uniform16,
    Uniform49,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub layout: SensorLayout,
    /// Random layout only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Random layout only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub orthonormalization: Orthonormalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_hat: usize,
    pub n_ghost: usize,
    #[serde(default = "default_energy")]
    pub energy: f64,
    #[serde(default)]
    pub weighting: PodWeighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Global,
    Expansion,
    ExpansionPlusGlobal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub optimizer: OptimizerKind,
    /// Defaults to the optimizer's default rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_l1")]
    pub l1: f64,
    pub steps: usize,
    pub schedule: ScheduleName,
    /// Global steps after expansion (`expansion_plus_global` only).
    #[serde(default)]
    pub extra_steps: usize,
    pub blocks: usize,
    pub width: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub new_block_init: BlockInit,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub stop_on_stagnation: bool,
    #[serde(default)]
    pub input_scaling: InputScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Nested prefixes of the random sensor pool.
    #[serde(default = "default_counts")]
    pub sensor_counts: Vec<usize>,
    /// Largest affine dimension scanned (capped by the sensor count).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_n: Option<usize>,
    /// Training steps per network; defaults to `train.steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            sensor_counts: default_counts(),
            max_n: None,
            steps: None,
        }
    }
}

/// Desk-profile replacements; missing values shrink by [`DESK_FACTOR`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskOverrides {
    pub n_hat: Option<usize>,
    pub n_ghost: Option<usize>,
    pub steps: Option<usize>,
    pub extra_steps: Option<usize>,
    pub compare_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub problem: ProblemConfig,
    pub sensors: SensorConfig,
    pub data: DataConfig,
    pub train: TrainSection,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desk: Option<DeskOverrides>,
}

fn default_mesh() -> usize {
    64
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_energy() -> f64 {
    0.995
}
fn default_batch() -> usize {
    100
}
fn default_l1() -> f64 {
    1e-5
}
fn default_init_std() -> f64 {
    0.1
}
fn default_record_every() -> usize {
    100
}
fn default_counts() -> Vec<usize> {
    vec![10, 20, 30, 40, 50]
}
fn default_seed() -> u64 {
    2024
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies the profile and validates. The result has no `[desk]` table.
    pub fn resolve(&self, profile: Profile) -> Result<Self> {
        let mut cfg = self.clone();
        let desk = cfg.desk.take().unwrap_or_default();
        if profile == Profile::Desk {
            let n_hat = desk.n_hat.unwrap_or(self.data.n_hat.div_ceil(DESK_FACTOR));
            cfg.data.n_ghost = desk.n_ghost.unwrap_or(if self.data.n_ghost * 2 <= n_hat {
                self.data.n_ghost
            } else {
                (n_hat / 10).max(1)
            });
            cfg.data.n_hat = n_hat;
            cfg.train.steps = desk.steps.unwrap_or(self.train.steps / DESK_FACTOR);
            cfg.train.extra_steps = desk.extra_steps.unwrap_or(self.train.extra_steps / DESK_FACTOR);
            cfg.compare.steps = desk
                .compare_steps
                .or(self.compare.steps.map(|s| s / DESK_FACTOR));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.problem.mesh_n < 4 {
            return Err(config_err("mesh_n must be at least 4"));
        }
        if self.problem.matern.is_some() && self.problem.scenario == ScenarioName::Pwc {
            return Err(config_err("[problem.matern] only applies to the log-normal scenario"));
        }
        if let Some(m) = &self.problem.matern {
            m.validate().map_err(|e| config_err(e.to_string()))?;
        }
        match self.sensors.layout {
            SensorLayout::Random => match self.sensors.count {
                None | Some(0) => return Err(config_err("random layout needs count >= 1")),
                Some(_) if self.sensors.seed.is_none() => return Err(config_err("random layout needs a seed")),
                _ => {}
            },
            _ if self.sensors.count.is_some() || self.sensors.seed.is_some() => {
                return Err(config_err("count and seed only apply to the random layout"))
            }
            _ => {}
        }
        if !(self.sensors.delta > 0.0 && self.sensors.delta < 0.1) {
            return Err(config_err(format!("sensor delta {} outside (0, 0.1)", self.sensors.delta)));
        }
        if self.data.n_ghost == 0 || self.data.n_ghost >= self.data.n_hat {
            return Err(config_err(format!(
                "n_ghost = {} must lie strictly between 0 and n_hat = {}",
                self.data.n_ghost, self.data.n_hat
            )));
        }
        if !(self.data.energy > 0.0 && self.data.energy < 1.0) {
            return Err(config_err(format!("energy {} outside (0, 1)", self.data.energy)));
        }
        if self.train.schedule != ScheduleName::ExpansionPlusGlobal && self.train.extra_steps != 0 {
            return Err(config_err("extra_steps only applies to expansion_plus_global"));
        }
        if self.compare.sensor_counts.is_empty() || self.compare.sensor_counts.contains(&0) {
            return Err(config_err("sensor_counts must be nonempty and positive"));
        }
        if let (SensorLayout::Random, Some(m)) = (self.sensors.layout, self.sensors.count) {
            if self.compare.sensor_counts.iter().any(|&c| c > m) {
                return Err(config_err(format!("sensor_counts exceed the pool of {m} random sensors")));
            }
        }
        self.train_config().validate()
    }

    pub fn mode(&self) -> InnerProductMode {
        self.problem.mode.unwrap_or(match self.problem.scenario {
            ScenarioName::Pwc => InnerProductMode::H1Seminorm,
            ScenarioName::LogNormal => InnerProductMode::L2,
        })
    }

    pub fn scenario(&self) -> Scenario {
        match self.problem.scenario {
            ScenarioName::Pwc => Scenario::Pwc,
            ScenarioName::LogNormal => Scenario::LogNormal(self.problem.matern.unwrap_or_default()),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr.unwrap_or(t.optimizer.default_lr()),
            batch: t.batch,
            l1: t.l1,
            steps: t.steps,
            optimizer: t.optimizer,
            schedule: match t.schedule {
                ScheduleName::Global => Schedule::Global,
                ScheduleName::Expansion => Schedule::Expansion,
                ScheduleName::ExpansionPlusGlobal => Schedule::ExpansionPlusGlobal {
                    extra_steps: t.extra_steps,
                },
            },
            blocks: t.blocks,
            width: t.width,
            init_std: t.init_std,
            new_block_init: t.new_block_init,
            seed: self.seed,
            record_every: t.record_every,
            stop_on_stagnation: t.stop_on_stagnation,
            record_wall_time: false,
            input_scaling: t.input_scaling,
        }
    }

    /// Sensors of the configured layout. For the random layout this is the
    /// whole pool; comparisons use its prefixes.
    pub fn sensor_array(&self) -> Result<SensorArray> {
        let s = &self.sensors;
        let base = match s.layout {
            SensorLayout::Uniform16 => place_uniform(16)?,
            SensorLayout::Uniform49 => place_uniform(49)?,
            SensorLayout::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed.unwrap_or_default());
                place_random(s.count.unwrap_or_default(), &mut rng)?
            }
        };
        SensorArray::new(base.centers().to_vec(), s.delta)
    }
}

/// Spaces shared by all commands.
#[derive(Debug)]
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub space: FeSpace,
    pub sensors: SensorArray,
    pub meas: MeasurementSpace,
}

impl Setup {
    /// `cfg` must already be resolved.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let space = FeSpace::with_subdivisions(cfg.problem.mesh_n)?;
        let sensors = cfg.sensor_array()?;
        let meas = MeasurementSpace::build(&space, &sensors, cfg.mode(), cfg.sensors.orthonormalization)?;
        Ok(Self {
            cfg: cfg.clone(),
            space,
            sensors,
            meas,
        })
    }

    fn pod_options(&self) -> PodOptions {
        PodOptions {
            energy: self.cfg.data.energy,
            weighting: self.cfg.data.weighting,
        }
    }

    /// `(train, ghost)` indices, fixed by the master seed.
    pub fn split(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        split_train_ghost(
            self.cfg.data.n_hat,
            self.cfg.data.n_ghost,
            &mut stage_rng(self.cfg.seed, SPLIT_STREAM),
        )
    }

    /// Reads the snapshot cache and checks it against the config.
    pub fn load_snapshots(&self, out: &Path) -> Result<SnapshotSet> {
        let path = out.join(SNAPSHOT_FILE);
        let file = File::open(&path)
            .map_err(|e| Error::ArtifactMismatch(format!("cannot open {}: {e}", path.display())))?;
        let snaps = read_snapshots(BufReader::new(file))?;
        let cfg = &self.cfg;
        let expect = |what: &str, got: String, want: String| {
            if got == want {
                Ok(())
            } else {
                Err(Error::ArtifactMismatch(format!("cache {what} is {got}, config wants {want}")))
            }
        };
        expect("scenario", snaps.scenario_tag.to_string(), cfg.scenario().tag().to_string())?;
        expect("mode", snaps.mode.to_string(), cfg.mode().to_string())?;
        expect("N_hat", snaps.len().to_string(), cfg.data.n_hat.to_string())?;
        expect("N_h", snaps.num_dofs().to_string(), self.space.num_dofs().to_string())?;
        expect("sensor count", snaps.num_sensors().to_string(), self.meas.dim().to_string())?;
        expect("master seed", snaps.master_seed.to_string(), cfg.seed.to_string())?;
        let w0 = self.meas.coords_of(&snaps.solutions[0].coeffs);
        let drift = w0.iter().zip(&snaps.w[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = w0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if drift > 1e-8 * (1.0 + scale) {
            return Err(Error::ArtifactMismatch(
                "cached measurements do not match the configured sensors".into(),
            ));
        }
        Ok(snaps)
    }

    pub fn complement_basis(&self, snaps: &SnapshotSet) -> Result<ComplementBasis> {
        pod_complement(&snaps.z, &self.space, &self.meas, &self.pod_options())
    }

    pub fn load_model(&self, out: &Path, basis: &ComplementBasis) -> Result<ResNetParams> {
        let path = out.join(MODEL_FILE);
        let file = File::open(&path)
            .map_err(|e| Error::ArtifactMismatch(format!("cannot open {}: {e}", path.display())))?;
        let net = resnet::deserialize(BufReader::new(file))?;
        if net.input_dim() != self.meas.dim() || net.output_dim() != basis.k() {
            return Err(Error::ArtifactMismatch(format!(
                "model maps R^{} -> R^{}, data has m = {} and k = {}",
                net.input_dim(),
                net.output_dim(),
                self.meas.dim(),
                basis.k()
            )));
        }
        Ok(net)
    }
}

/// Seeds, config and file hashes of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub profile: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u64>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, profile: Profile, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            profile: profile.name().into(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    fn hash_into(map: &mut BTreeMap<String, String>, dir: &Path, name: &str) -> Result<()> {
        map.insert(name.into(), sha256_file(&dir.join(name))?);
        Ok(())
    }

    pub fn input(&mut self, dir: &Path, name: &str) -> Result<()> {
        Self::hash_into(&mut self.inputs, dir, name)
    }

    pub fn output(&mut self, dir: &Path, name: &str) -> Result<()> {
        Self::hash_into(&mut self.outputs, dir, name)
    }

    pub fn time(&mut self, phase: &str, since: Instant) {
        self.timings_ms.insert(phase.into(), since.elapsed().as_millis() as u64);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Solves and measures `N_hat` snapshots and writes the cache.
pub fn cmd_generate(cfg: &ExperimentConfig, profile: Profile, out: &Path) -> Result<SnapshotSet> {
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("generate", profile, cfg);
    let t = Instant::now();
    let setup = Setup::new(cfg)?;
    let snaps = generate_snapshots(&cfg.scenario(), cfg.data.n_hat, &setup.space, &setup.meas, cfg.seed)?;
    manifest.time("generate", t);
    let mut w = create(&out.join(SNAPSHOT_FILE))?;
    write_snapshots(&snaps, &mut w)?;
    std::io::Write::flush(&mut w)?;
    manifest.output(out, SNAPSHOT_FILE)?;
    manifest.write(out)?;
    Ok(snaps)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub k: usize,
    pub energy_kept: f64,
    pub final_loss: Option<f64>,
    pub net: ResNetParams,
    pub history: LossHistory,
}

/// POD of the complements, labels, and training on the non-ghost samples.
pub fn cmd_train(cfg: &ExperimentConfig, profile: Profile, out: &Path) -> Result<TrainSummary> {
    let mut manifest = RunManifest::new("train", profile, cfg);
    let setup = Setup::new(cfg)?;
    let snaps = setup.load_snapshots(out)?;
    manifest.input(out, SNAPSHOT_FILE)?;
    let t = Instant::now();
    let basis = setup.complement_basis(&snaps)?;
    manifest.time("pod", t);
    let labels = extract_labels(&snaps, &basis);
    let (train_idx, _) = setup.split()?;
    let data = Dataset::from_rows(&snaps.w, &labels, &train_idx)?;
    let t = Instant::now();
    let (net, history) = train(&data, &cfg.train_config())?;
    manifest.time("train", t);
    let mut w = create(&out.join(MODEL_FILE))?;
    resnet::serialize(&net, &mut w)?;
    std::io::Write::flush(&mut w)?;
    history.write_csv(create(&out.join(LOSS_FILE))?)?;
    manifest.output(out, MODEL_FILE)?;
    manifest.output(out, LOSS_FILE)?;
    manifest.write(out)?;
    Ok(TrainSummary {
        k: basis.k(),
        energy_kept: basis.energy_kept(),
        final_loss: history.last_loss(),
        net,
        history,
    })
}

/// Error table of the trained model on the ghost samples.
pub fn cmd_evaluate(cfg: &ExperimentConfig, profile: Profile, out: &Path) -> Result<EvalReport> {
    let mut manifest = RunManifest::new("evaluate", profile, cfg);
    let setup = Setup::new(cfg)?;
    let snaps = setup.load_snapshots(out)?;
    let basis = setup.complement_basis(&snaps)?;
    let net = setup.load_model(out, &basis)?;
    manifest.input(out, SNAPSHOT_FILE)?;
    manifest.input(out, MODEL_FILE)?;
    let (_, ghost) = setup.split()?;
    let labels = extract_labels(&snaps, &basis);
    let t = Instant::now();
    let report = evaluate_on(&setup, &snaps, &basis, &net, &labels, &ghost)?;
    manifest.time("evaluate", t);
    let row = ErrorRow {
        blocks: net.num_blocks(),
        width: net.widths().first().copied().unwrap_or(0),
        trainables: net.count_params(),
        scheme: cfg.train_config().schedule.label().into(),
        ehat: report.ehat,
        rel_l2: report.rel_l2,
        rel_h1: report.rel_h1,
    };
    write_error_table(&[row], create(&out.join(ERROR_FILE))?)?;
    manifest.output(out, ERROR_FILE)?;
    manifest.write(out)?;
    Ok(report)
}

pub fn evaluate_on(
    setup: &Setup,
    snaps: &SnapshotSet,
    basis: &ComplementBasis,
    net: &ResNetParams,
    labels: &[Vec<f64>],
    idx: &[usize],
) -> Result<EvalReport> {
    let est = Estimator::new(&setup.space, &setup.meas, basis, net)?;
    let w: Vec<Vec<f64>> = idx.iter().map(|&i| snaps.w[i].clone()).collect();
    let c: Vec<Vec<f64>> = idx.iter().map(|&i| labels[i].clone()).collect();
    let u: Vec<FeFunction> = idx.iter().map(|&i| snaps.solutions[i].clone()).collect();
    evaluate(&est, &w, &c, &u)
}

/// POD-PBDW over `n` and a trained network, for each sensor count.
pub fn cmd_compare_affine(cfg: &ExperimentConfig, profile: Profile, out: &Path) -> Result<Vec<ComparisonRow>> {
    let mut manifest = RunManifest::new("compare-affine", profile, cfg);
    let setup = Setup::new(cfg)?;
    let snaps = setup.load_snapshots(out)?;
    manifest.input(out, SNAPSHOT_FILE)?;
    let (train_idx, ghost) = setup.split()?;
    let counts: Vec<usize> = match cfg.sensors.layout {
        SensorLayout::Random => {
            let mut c = cfg.compare.sensor_counts.clone();
            c.sort_unstable();
            c.dedup();
            c
        }
        _ => vec![setup.meas.dim()],
    };
    let train_u: Vec<FeFunction> = train_idx.iter().map(|&i| snaps.solutions[i].clone()).collect();
    let ghost_u: Vec<FeFunction> = ghost.iter().map(|&i| snaps.solutions[i].clone()).collect();
    let mut tcfg = cfg.train_config();
    if let Some(s) = cfg.compare.steps {
        tcfg.steps = s;
    }
    let net_label = format!("{}-ResNN", tcfg.schedule.label());
    let mut rows = Vec::new();
    let t = Instant::now();
    for &m in &counts {
        let sensors = SensorArray::new(setup.sensors.centers()[..m].to_vec(), cfg.sensors.delta)?;
        let meas = MeasurementSpace::build(&setup.space, &sensors, cfg.mode(), cfg.sensors.orthonormalization)?;
        let sub = SnapshotSet::measure(snaps.scenario_tag, &snaps.params, &snaps.solutions, &meas, snaps.master_seed);
        let basis = pod_complement(&sub.z, &setup.space, &meas, &setup.pod_options())?;
        let labels = extract_labels(&sub, &basis);
        let data = Dataset::from_rows(&sub.w, &labels, &train_idx)?;
        let (net, _) = train(&data, &tcfg)?;
        let est = Estimator::new(&setup.space, &meas, &basis, &net)?;
        let gw: Vec<Vec<f64>> = ghost.iter().map(|&i| sub.w[i].clone()).collect();
        let pred = est.predict_states(&gw)?;
        let errs = absolute_errors(&setup.space, &ghost_u, &pred, InnerProductMode::H1Seminorm);
        rows.push(ComparisonRow {
            sensors: m,
            method: net_label.clone(),
            n: basis.k(),
            mu: f64::NAN,
            max_h1: errs.iter().copied().fold(0.0, f64::max),
            mean_h1: errs.iter().sum::<f64>() / errs.len() as f64,
        });
        let n_max = cfg.compare.max_n.unwrap_or(m).min(m);
        let aff = build_affine_space(&train_u, &setup.space, &meas, n_max)?;
        rows.extend(scan_pbdw(&aff, &meas, &setup.space, &gw, &ghost_u));
        log::info!("compare: {m} sensors done");
    }
    manifest.time("compare", t);
    write_comparison(&rows, create(&out.join(COMPARE_FILE))?)?;
    manifest.output(out, COMPARE_FILE)?;
    manifest.write(out)?;
    Ok(rows)
}

/// One SVG per invocation, named after the first input.
pub fn cmd_plot(files: &[PathBuf], out: &Path) -> Result<PathBuf> {
    let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let svg = chart_from_files(&refs)?.render_svg()?;
    std::fs::create_dir_all(out)?;
    let stem = files[0].file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let path = out.join(format!("{stem}.svg"));
    std::fs::write(&path, svg)?;
    Ok(path)
}
