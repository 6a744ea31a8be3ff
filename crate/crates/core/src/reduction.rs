//! Snapshot generation, POD of the complement snapshots, and label extraction.

use crate::coeff::{self, CirculantSampler, GridField, MaternSpec};
use crate::error::{Error, Result};
use crate::fem::{self, FeFunction, FeSpace, InnerProductMode};
use crate::sensing::MeasurementSpace;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::{Read, Write};

/// Parametric coefficient model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// `1 + y_j` on a 4x4 checkerboard, `y_j ~ U[-1/2, 1/2]`.
    Pwc,
    /// `a0 + a1 exp(z)` with a Matérn field `z`.
    LogNormal(MaternSpec),
}

impl Scenario {
    pub fn tag(&self) -> u32 {
        match self {
            Scenario::Pwc => 1,
            Scenario::LogNormal(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Pwc => "pwc",
            Scenario::LogNormal(_) => "log-normal",
        }
    }
}

/// A scenario bound to a mesh, ready to draw coefficients.
#[derive(Debug)]
pub enum CoefficientModel {
    Pwc,
    LogNormal(CirculantSampler),
}

impl CoefficientModel {
    pub fn new(scenario: &Scenario, space: &FeSpace) -> Result<Self> {
        Ok(match scenario {
            Scenario::Pwc => CoefficientModel::Pwc,
            Scenario::LogNormal(spec) => {
                CoefficientModel::LogNormal(CirculantSampler::new(spec, space.mesh())?)
            }
        })
    }

    pub fn tag(&self) -> u32 {
        match self {
            CoefficientModel::Pwc => 1,
            CoefficientModel::LogNormal(_) => 2,
        }
    }

    /// Parameter vector and per-element coefficient of one draw. For the
    /// log-normal model the parameter vector is the nodal field `z`.
    pub fn draw<R: Rng + ?Sized>(&self, space: &FeSpace, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        match self {
            CoefficientModel::Pwc => {
                let p = coeff::sample_param_s1(rng);
                let a = coeff::element_coefficients_s1(&p, space.mesh());
                (p.y.to_vec(), a)
            }
            CoefficientModel::LogNormal(sampler) => {
                let z = sampler.sample(rng);
                let a = coeff::element_coefficients_s2(sampler.spec(), &z, space.mesh());
                (z.values, a)
            }
        }
    }

    /// Coefficient for a stored parameter vector.
    pub fn coefficients(&self, space: &FeSpace, params: &[f64]) -> Result<Vec<f64>> {
        match self {
            CoefficientModel::Pwc => {
                let y: [f64; coeff::S1_DIM] = params
                    .try_into()
                    .map_err(|_| Error::ShapeMismatch("pwc parameters have 16 entries".into()))?;
                Ok(coeff::element_coefficients_s1(&coeff::ParamS1::new(y)?, space.mesh()))
            }
            CoefficientModel::LogNormal(sampler) => {
                let z = GridField {
                    values: params.to_vec(),
                };
                Ok(coeff::element_coefficients_s2(sampler.spec(), &z, space.mesh()))
            }
        }
    }
}

/// Per-snapshot generator: `seed_s = master ^ s`.
pub fn snapshot_rng(master_seed: u64, s: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master_seed ^ s as u64)
}

/// Truth solutions for `n_hat` parameter draws.
#[derive(Debug, Clone)]
pub struct States {
    pub params: Vec<Vec<f64>>,
    pub solutions: Vec<FeFunction>,
    /// Snapshots whose first draw failed and were drawn again.
    pub resampled: Vec<usize>,
}

/// Solves `-div(a grad u) = 1` for `n_hat` draws in parallel. A failed draw
/// is replaced once from a second stream of the same seed; a second failure
/// is fatal.
pub fn solve_states(model: &CoefficientModel, space: &FeSpace, n_hat: usize, master_seed: u64) -> Result<States> {
    let load = space.mesh().unit_load();
    let results: Vec<Result<(Vec<f64>, FeFunction, bool)>> = (0..n_hat)
        .into_par_iter()
        .map(|s| {
            let mut rng = snapshot_rng(master_seed, s);
            match solve_one(model, space, &load, &mut rng) {
                Ok((p, u)) => Ok((p, u, false)),
                Err(e) => {
                    log::warn!("snapshot {s} failed ({e}); resampling");
                    rng.set_stream(1);
                    solve_one(model, space, &load, &mut rng).map(|(p, u)| (p, u, true))
                }
            }
        })
        .collect();
    let mut states = States {
        params: Vec::with_capacity(n_hat),
        solutions: Vec::with_capacity(n_hat),
        resampled: Vec::new(),
    };
    for (s, r) in results.into_iter().enumerate() {
        let (p, u, again) = r?;
        if again {
            states.resampled.push(s);
        }
        states.params.push(p);
        states.solutions.push(u);
    }
    Ok(states)
}

fn solve_one(
    model: &CoefficientModel,
    space: &FeSpace,
    load: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, FeFunction)> {
    let (params, a) = model.draw(space, rng);
    let k = fem::assemble_stiffness(space.mesh(), &a)?;
    let u = fem::solve_dirichlet(&k, load, 1e-10)?;
    Ok((params, u))
}

/// Snapshots with their sensor coordinates and complements.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub scenario_tag: u32,
    pub mode: InnerProductMode,
    pub master_seed: u64,
    pub params: Vec<Vec<f64>>,
    pub solutions: Vec<FeFunction>,
    /// `w_s = C l(u_s)`
    pub w: Vec<Vec<f64>>,
    /// `z_s = u_s - Phi^T w_s`
    pub z: Vec<FeFunction>,
}

impl SnapshotSet {
    /// Measures given states through `meas`.
    pub fn from_states(scenario_tag: u32, states: &States, meas: &MeasurementSpace, master_seed: u64) -> Self {
        Self::measure(scenario_tag, &states.params, &states.solutions, meas, master_seed)
    }

    pub fn measure(
        scenario_tag: u32,
        params: &[Vec<f64>],
        solutions: &[FeFunction],
        meas: &MeasurementSpace,
        master_seed: u64,
    ) -> Self {
        let (w, z): (Vec<Vec<f64>>, Vec<FeFunction>) = solutions
            .par_iter()
            .map(|u| {
                let w = meas.measure_coords(&meas.observe(&u.coeffs));
                let mut z = u.clone();
                for (wi, p) in w.iter().zip(meas.phi()) {
                    z.axpy(-wi, p);
                }
                (w, z)
            })
            .unzip();
        Self {
            scenario_tag,
            mode: meas.mode(),
            master_seed,
            params: params.to_vec(),
            solutions: solutions.to_vec(),
            w,
            z,
        }
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn num_dofs(&self) -> usize {
        self.solutions.first().map_or(0, |u| u.len())
    }

    pub fn num_sensors(&self) -> usize {
        self.w.first().map_or(0, |w| w.len())
    }

    pub fn param_dim(&self) -> usize {
        self.params.first().map_or(0, |p| p.len())
    }

    /// Keeps the first `n` snapshots.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            scenario_tag: self.scenario_tag,
            mode: self.mode,
            master_seed: self.master_seed,
            params: self.params[..n].to_vec(),
            solutions: self.solutions[..n].to_vec(),
            w: self.w[..n].to_vec(),
            z: self.z[..n].to_vec(),
        }
    }
}

/// Draws, solves and measures `n_hat` snapshots.
pub fn generate_snapshots(
    scenario: &Scenario,
    n_hat: usize,
    space: &FeSpace,
    meas: &MeasurementSpace,
    master_seed: u64,
) -> Result<SnapshotSet> {
    if n_hat == 0 {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    let model = CoefficientModel::new(scenario, space)?;
    let states = solve_states(&model, space, n_hat, master_seed)?;
    Ok(SnapshotSet::from_states(scenario.tag(), &states, meas, master_seed))
}

/// Inner product used to build the snapshot Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodWeighting {
    /// `K_st = (z_s, z_t)_U`
    #[default]
    Weighted,
    /// `K_st = z_s . z_t` on coefficient vectors.
    Euclidean,
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Smallest `k` reaching this fraction of the eigenvalue sum.
    Energy(f64),
    /// Exactly this many modes (fewer if the numerical rank is smaller).
    Count(usize),
}

/// Snapshot counts above this use Lanczos instead of a dense eigensolve.
pub const DENSE_POD_LIMIT: usize = 1500;

/// Leading POD modes of a snapshot family.
#[derive(Debug, Clone)]
pub struct Pod {
    /// U-orthonormal modes.
    pub modes: Vec<FeFunction>,
    /// Computed eigenvalues of the snapshot Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum used as the energy reference.
    pub total: f64,
    /// Fraction of `total` carried by the retained eigenvalues.
    pub energy_kept: f64,
}

/// Method of snapshots: eigenpairs of `K_st = (v_s, v_t)`, modes
/// `sum_s V_si v_s / sqrt(lambda_i)`, then U-orthonormalized.
pub fn pod(
    vectors: &[FeFunction],
    space: &FeSpace,
    mode: InnerProductMode,
    weighting: PodWeighting,
    truncation: Truncation,
) -> Result<Pod> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::InvalidArgument("POD of an empty snapshot family".into()));
    }
    if let Truncation::Energy(e) = truncation {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::InvalidArgument(format!("energy threshold {e} outside (0, 1]")));
        }
    }
    let weighted: Vec<Vec<f64>> = match weighting {
        PodWeighting::Weighted => vectors.par_iter().map(|v| space.apply_gram(&v.coeffs, mode)).collect(),
        PodWeighting::Euclidean => vectors.iter().map(|v| v.coeffs.clone()).collect(),
    };
    let trace: f64 = vectors.iter().zip(&weighted).map(|(v, g)| fem::dot(&v.coeffs, g)).sum();
    if !(trace > 0.0) {
        log::warn!("all snapshots vanish; the POD basis is empty");
        return Ok(Pod {
            modes: Vec::new(),
            eigenvalues: Vec::new(),
            total: 0.0,
            energy_kept: 1.0,
        });
    }
    let (eigenvalues, vecs, total) = if n <= DENSE_POD_LIMIT {
        dense_eigenpairs(vectors, &weighted)
    } else {
        lanczos_eigenpairs(vectors, &weighted, trace, truncation)
    };
    let k = select_count(&eigenvalues, total, truncation);
    let kept: f64 = eigenvalues[..k].iter().sum();
    let ndof = vectors[0].len();
    let modes: Vec<FeFunction> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; ndof];
            for (s, v) in vectors.iter().enumerate() {
                let coef = vecs[(s, i)];
                if coef != 0.0 {
                    fem::axpy(coef, &v.coeffs, &mut out);
                }
            }
            let scale = 1.0 / eigenvalues[i].sqrt();
            out.iter_mut().for_each(|x| *x *= scale);
            FeFunction::new(out)
        })
        .collect();
    let modes = orthonormalize_modes(space, mode, modes, None);
    Ok(Pod {
        energy_kept: if total > 0.0 { kept / total } else { 1.0 },
        modes,
        eigenvalues,
        total,
    })
}

fn select_count(eigenvalues: &[f64], total: f64, truncation: Truncation) -> usize {
    match truncation {
        Truncation::Count(c) => c.min(eigenvalues.len()),
        Truncation::Energy(e) => {
            let target = e * total;
            let mut acc = 0.0;
            for (i, l) in eigenvalues.iter().enumerate() {
                acc += l;
                if acc >= target * (1.0 - 1e-14) {
                    return i + 1;
                }
            }
            eigenvalues.len()
        }
    }
}

const RANK_CUTOFF: f64 = 1e-12;

/// Dense Gram matrix and full eigendecomposition. Eigenvalues below
/// `1e-12 * lambda_1` are dropped; `total` is the sum of those kept.
fn dense_eigenpairs(vectors: &[FeFunction], weighted: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>, f64) {
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| (0..=s).map(|t| fem::dot(&weighted[s], &vectors[t].coeffs)).collect())
        .collect();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for (s, row) in rows.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            k[(s, t)] = v;
            k[(t, s)] = v;
        }
    }
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let order: Vec<usize> = order
        .into_iter()
        .take_while(|&i| eig.eigenvalues[i] > RANK_CUTOFF * l1)
        .collect();
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, order.len(), |s, j| eig.eigenvectors[(s, order[j])]);
    let total = values.iter().sum();
    (values, vecs, total)
}

/// Lanczos with full reorthogonalization on `K = Z G Z^T`, applied without
/// forming `K`. The Krylov space grows until the leading Ritz pairs that the
/// truncation needs have converged. `total` is the trace of `K`.
fn lanczos_eigenpairs(
    vectors: &[FeFunction],
    weighted: &[Vec<f64>],
    trace: f64,
    truncation: Truncation,
) -> (Vec<f64>, DMatrix<f64>, f64) {
    let n = vectors.len();
    let ndof = vectors[0].len();
    let apply = |v: &[f64]| -> Vec<f64> {
        // Z^T v in coefficient space, then dot with each G z_s
        let chunks: Vec<Vec<f64>> = vectors
            .par_chunks(256)
            .zip(v.par_chunks(256))
            .map(|(vs, cs)| {
                let mut acc = vec![0.0; ndof];
                for (z, &c) in vs.iter().zip(cs) {
                    fem::axpy(c, &z.coeffs, &mut acc);
                }
                acc
            })
            .collect();
        let mut x = vec![0.0; ndof];
        for c in &chunks {
            fem::axpy(1.0, c, &mut x);
        }
        weighted.par_iter().map(|g| fem::dot(g, &x)).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let mut q0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nrm = fem::norm2(&q0);
    q0.iter_mut().for_each(|x| *x /= nrm);
    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut target = n.min(match truncation {
        Truncation::Count(c) => 2 * c + 20,
        Truncation::Energy(_) => 80,
    });
    loop {
        let mut exhausted = false;
        while alpha.len() < target {
            let j = alpha.len();
            let mut w = apply(&basis[j]);
            let a = fem::dot(&w, &basis[j]);
            fem::axpy(-a, &basis[j], &mut w);
            if j > 0 {
                fem::axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = fem::dot(q, &w);
                    fem::axpy(-c, q, &mut w);
                }
            }
            alpha.push(a);
            let b = fem::norm2(&w);
            if b <= 1e-12 * trace.max(a.abs()) || alpha.len() == n {
                exhausted = true;
                break;
            }
            w.iter_mut().for_each(|x| *x /= b);
            beta.push(b);
            basis.push(w);
        }
        let p = alpha.len();
        let t = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j || j + 1 == i {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let l1 = eig.eigenvalues[order[0]];
        let order: Vec<usize> = order
            .into_iter()
            .take_while(|&i| eig.eigenvalues[i] > RANK_CUTOFF * l1)
            .collect();
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let last_beta = if exhausted { 0.0 } else { beta[p - 1] };
        let residual = |j: usize| last_beta * eig.eigenvectors[(p - 1, order[j])].abs();
        let need = select_count(&values, trace, truncation);
        let need_converged = (need + 2).min(values.len());
        let converged = (0..need_converged).all(|j| residual(j) <= 1e-8 * l1);
        let reached = match truncation {
            Truncation::Energy(e) => values[..need].iter().sum::<f64>() >= e * trace * (1.0 - 1e-14),
            Truncation::Count(_) => true,
        };
        if exhausted || (converged && reached) || p >= n {
            let mut vecs = DMatrix::<f64>::zeros(n, order.len());
            for (j, &col) in order.iter().enumerate() {
                for (i, q) in basis.iter().take(p).enumerate() {
                    let c = eig.eigenvectors[(i, col)];
                    for s in 0..n {
                        vecs[(s, j)] += c * q[s];
                    }
                }
            }
            return (values, vecs, trace);
        }
        target = n.min(2 * target);
    }
}

/// Modified Gram-Schmidt (two passes) in the U inner product, optionally
/// after removing the components along `against` (assumed U-orthonormal).
/// Modes that collapse below `1e-10` of their original norm are dropped.
fn orthonormalize_modes(
    space: &FeSpace,
    mode: InnerProductMode,
    mut modes: Vec<FeFunction>,
    against: Option<&MeasurementSpace>,
) -> Vec<FeFunction> {
    if let Some(meas) = against {
        modes.par_iter_mut().for_each(|psi| {
            for _ in 0..2 {
                let w = meas.coords_of(&psi.coeffs);
                for (wi, p) in w.iter().zip(meas.phi()) {
                    psi.axpy(-wi, p);
                }
            }
        });
    }
    let mut out: Vec<FeFunction> = Vec::with_capacity(modes.len());
    let mut gout: Vec<Vec<f64>> = Vec::with_capacity(modes.len());
    for mut v in modes {
        let start = space.norm(&v.coeffs, mode);
        for _ in 0..2 {
            for (q, gq) in out.iter().zip(&gout) {
                let c = fem::dot(gq, &v.coeffs);
                v.axpy(-c, q);
            }
        }
        let gv = space.apply_gram(&v.coeffs, mode);
        let nrm = fem::dot(&gv, &v.coeffs).max(0.0).sqrt();
        if !(nrm > 1e-10 * start) {
            continue;
        }
        let inv = 1.0 / nrm;
        v.coeffs.iter_mut().for_each(|x| *x *= inv);
        out.push(v);
        gout.push(gv.into_iter().map(|x| x * inv).collect());
    }
    out
}

/// Options for [`pod_complement`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PodOptions {
    pub energy: f64,
    pub weighting: PodWeighting,
}

impl Default for PodOptions {
    fn default() -> Self {
        Self {
            energy: 0.995,
            weighting: PodWeighting::Weighted,
        }
    }
}

/// U-orthonormal basis `Psi` of the effective complement space.
#[derive(Debug, Clone)]
pub struct ComplementBasis {
    psi: Vec<FeFunction>,
    gram_psi: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    total_energy: f64,
    energy_kept: f64,
    mode: InnerProductMode,
}

impl ComplementBasis {
    pub fn from_modes(space: &FeSpace, mode: InnerProductMode, psi: Vec<FeFunction>) -> Self {
        let gram_psi = psi.iter().map(|p| space.apply_gram(&p.coeffs, mode)).collect();
        Self {
            psi,
            gram_psi,
            eigenvalues: Vec::new(),
            total_energy: 0.0,
            energy_kept: 1.0,
            mode,
        }
    }

    pub fn psi(&self) -> &[FeFunction] {
        &self.psi
    }

    pub fn k(&self) -> usize {
        self.psi.len()
    }

    pub fn mode(&self) -> InnerProductMode {
        self.mode
    }

    /// Computed spectrum of the snapshot Gram matrix, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Singular values of the (weighted) snapshot matrix.
    pub fn singular_values(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.sqrt()).collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    pub fn energy_kept(&self) -> f64 {
        self.energy_kept
    }

    /// `c_i = (u, psi_i)_U`
    pub fn coeffs_of(&self, u: &[f64]) -> Vec<f64> {
        self.gram_psi.iter().map(|g| fem::dot(g, u)).collect()
    }

    /// `Psi^T c`
    pub fn synthesize(&self, c: &[f64]) -> FeFunction {
        let mut out = FeFunction::zeros(self.psi.first().map_or(0, |p| p.len()));
        for (ci, p) in c.iter().zip(&self.psi) {
            out.axpy(*ci, p);
        }
        out
    }

    /// `max |(psi_i, psi_j)_U - delta_ij|`
    pub fn gram_residual(&self) -> f64 {
        let mut r = 0.0f64;
        for (i, g) in self.gram_psi.iter().enumerate() {
            for (j, p) in self.psi.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                r = r.max((fem::dot(g, &p.coeffs) - target).abs());
            }
        }
        r
    }

    /// `max |(psi_i, phi_j)_U|`
    pub fn cross_gram(&self, meas: &MeasurementSpace) -> f64 {
        self.gram_psi
            .iter()
            .flat_map(|g| meas.phi().iter().map(move |p| fem::dot(g, &p.coeffs).abs()))
            .fold(0.0, f64::max)
    }
}

/// POD of the complement snapshots, cleaned so that `Psi` is U-orthonormal
/// and orthogonal to the measurement space.
pub fn pod_complement(
    z: &[FeFunction],
    space: &FeSpace,
    meas: &MeasurementSpace,
    opts: &PodOptions,
) -> Result<ComplementBasis> {
    if !(opts.energy > 0.0 && opts.energy < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy threshold {} outside (0, 1)",
            opts.energy
        )));
    }
    let mode = meas.mode();
    let pod = pod(z, space, mode, opts.weighting, Truncation::Energy(opts.energy))?;
    let psi = orthonormalize_modes(space, mode, pod.modes, Some(meas));
    let mut basis = ComplementBasis::from_modes(space, mode, psi);
    basis.eigenvalues = pod.eigenvalues;
    basis.total_energy = pod.total;
    basis.energy_kept = pod.energy_kept;
    Ok(basis)
}

/// Labels `c^s` with a train/ghost split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    /// Row `s` holds `c^s`.
    pub c: Vec<Vec<f64>>,
    pub train_idx: Vec<usize>,
    pub ghost_idx: Vec<usize>,
}

/// `c^s_i = (u_s, psi_i)_U` for every snapshot.
pub fn extract_labels(snapshots: &SnapshotSet, basis: &ComplementBasis) -> Vec<Vec<f64>> {
    snapshots
        .solutions
        .par_iter()
        .map(|u| basis.coeffs_of(&u.coeffs))
        .collect()
}

/// Uniform random split into `n_hat - n_ghost` training and `n_ghost` ghost
/// indices, each sorted.
pub fn split_train_ghost<R: Rng + ?Sized>(
    n_hat: usize,
    n_ghost: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_ghost == 0 || n_ghost >= n_hat {
        return Err(Error::InvalidArgument(format!(
            "ghost set size {n_ghost} must lie strictly between 0 and {n_hat}"
        )));
    }
    let mut idx: Vec<usize> = (0..n_hat).collect();
    idx.shuffle(rng);
    let mut ghost = idx[..n_ghost].to_vec();
    let mut train = idx[n_ghost..].to_vec();
    ghost.sort_unstable();
    train.sort_unstable();
    Ok((train, ghost))
}

impl LabelSet {
    pub fn new<R: Rng + ?Sized>(c: Vec<Vec<f64>>, n_ghost: usize, rng: &mut R) -> Result<Self> {
        let (train_idx, ghost_idx) = split_train_ghost(c.len(), n_ghost, rng)?;
        Ok(Self { c, train_idx, ghost_idx })
    }
}

const CACHE_MAGIC: &[u8; 5] = b"PDES1";
const CACHE_VERSION: u32 = 1;

/// Writes the snapshot container (little endian).
pub fn write_snapshots<W: Write>(set: &SnapshotSet, mut out: W) -> Result<()> {
    out.write_all(CACHE_MAGIC)?;
    for v in [CACHE_VERSION, set.scenario_tag, set.mode.tag()] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in [
        set.len() as u64,
        set.num_dofs() as u64,
        set.num_sensors() as u64,
        set.param_dim() as u64,
        set.master_seed,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::new();
    let mut put = |xs: &[f64]| {
        for x in xs {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    };
    set.params.iter().for_each(|p| put(p));
    set.solutions.iter().for_each(|u| put(&u.coeffs));
    set.w.iter().for_each(|w| put(w));
    set.z.iter().for_each(|z| put(&z.coeffs));
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Reads a snapshot container written by [`write_snapshots`].
pub fn read_snapshots<R: Read>(mut input: R) -> Result<SnapshotSet> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = ByteCursor::new(&bytes);
    if cur.take(5)? != CACHE_MAGIC {
        return Err(Error::Format("not a snapshot container (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported snapshot container version {version}")));
    }
    let scenario_tag = cur.u32()?;
    let mode = InnerProductMode::from_tag(cur.u32()?)
        .ok_or_else(|| Error::Format("unknown inner-product tag".into()))?;
    let n_hat = cur.u64()? as usize;
    let ndof = cur.u64()? as usize;
    let m = cur.u64()? as usize;
    let pdim = cur.u64()? as usize;
    let master_seed = cur.u64()?;
    let expected = n_hat
        .checked_mul(pdim + 2 * ndof + m)
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| Error::Format("snapshot header dimensions overflow".into()))?;
    if cur.remaining() != expected {
        return Err(Error::Format(format!(
            "snapshot payload has {} bytes, header implies {expected}",
            cur.remaining()
        )));
    }
    let params = (0..n_hat).map(|_| cur.f64s(pdim)).collect::<Result<_>>()?;
    let solutions = (0..n_hat).map(|_| cur.f64s(ndof).map(FeFunction::new)).collect::<Result<_>>()?;
    let w = (0..n_hat).map(|_| cur.f64s(m)).collect::<Result<_>>()?;
    let z = (0..n_hat).map(|_| cur.f64s(ndof).map(FeFunction::new)).collect::<Result<_>>()?;
    Ok(SnapshotSet {
        scenario_tag,
        mode,
        master_seed,
        params,
        solutions,
        w,
        z,
    })
}

/// Little-endian reader over a byte slice; running out of bytes is a format error.
pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Tail sum `sum_{i > k} lambda_i`.
pub fn tail_energy(eigenvalues: &[f64], total: f64, k: usize) -> f64 {
    (total - eigenvalues[..k.min(eigenvalues.len())].iter().sum::<f64>()).max(0.0)
}
