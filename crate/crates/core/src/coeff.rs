//! Parametric diffusion coefficients.
//!
//! Scenario `pwc` is a 4x4 checkerboard of constants `1 + y_j`, `y_j ~ U[-1/2, 1/2]`.
//! Scenario `log-normal` is `a0 + a1 exp(z)` with `z` a zero-mean stationary
//! Gaussian field with Matérn covariance, sampled exactly on the mesh nodes by
//! circulant embedding.

use crate::error::{Error, Result};
use crate::fem::{Point, TriMesh};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Number of checkerboard cells in the piecewise-constant scenario.
pub const S1_DIM: usize = 16;

/// Parameter of the piecewise-constant scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamS1 {
    pub y: [f64; S1_DIM],
}

impl ParamS1 {
    pub fn new(y: [f64; S1_DIM]) -> Result<Self> {
        if y.iter().any(|v| !(v.abs() <= 0.5)) {
            return Err(Error::InvalidArgument(
                "checkerboard parameters must lie in [-1/2, 1/2]".into(),
            ));
        }
        Ok(Self { y })
    }
}

/// Draws 16 i.i.d. `U[-1/2, 1/2]` values.
pub fn sample_param_s1<R: Rng + ?Sized>(rng: &mut R) -> ParamS1 {
    let mut y = [0.0; S1_DIM];
    for v in y.iter_mut() {
        *v = rng.random_range(-0.5..=0.5);
    }
    ParamS1 { y }
}

/// Checkerboard cell of a point, row-major from the lower-left corner.
pub fn checkerboard_cell(x: Point) -> usize {
    let ix = ((4.0 * x[0]).floor() as isize).clamp(0, 3) as usize;
    let iy = ((4.0 * x[1]).floor() as isize).clamp(0, 3) as usize;
    4 * iy + ix
}

/// `a(x; y) = 1 + y_j` on cell `j`.
pub fn eval_s1(param: &ParamS1, x: Point) -> f64 {
    1.0 + param.y[checkerboard_cell(x)]
}

/// Per-element coefficient of the piecewise-constant scenario, sampled at barycenters.
pub fn element_coefficients_s1(param: &ParamS1, mesh: &TriMesh) -> Vec<f64> {
    (0..mesh.elements().len())
        .map(|e| eval_s1(param, mesh.barycenter(e)))
        .collect()
}

/// Matérn covariance and log-normal coefficient parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternSpec {
    pub sigma2: f64,
    pub nu: f64,
    pub lam1: f64,
    pub lam2: f64,
    pub a0: f64,
    pub a1: f64,
}

impl Default for MaternSpec {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            nu: 1.0,
            lam1: 0.2,
            lam2: 0.2,
            a0: 0.0,
            a1: 1.0,
        }
    }
}

impl MaternSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma2 > 0.0
            && self.nu > 0.5
            && self.lam1 > 0.0
            && self.lam2 > 0.0
            && self.a1 > 0.0
            && self.a0 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Matérn spec {self:?}")))
        }
    }

    /// Covariance as a function of the coordinate offsets.
    pub fn cov_offset(&self, dx: f64, dy: f64) -> f64 {
        let r = ((dx / self.lam1).powi(2) + (dy / self.lam2).powi(2)).sqrt();
        matern_scaled(self.sigma2, self.nu, r)
    }
}

fn matern_scaled(sigma2: f64, nu: f64, r: f64) -> f64 {
    let z = 2.0 * nu.sqrt() * r;
    if z < 1e-12 {
        return sigma2;
    }
    let gamma = statrs::function::gamma::gamma(nu);
    sigma2 * 2f64.powf(1.0 - nu) / gamma * z.powf(nu) * bessel_k(nu, z)
}

/// `c(x, x') = sigma^2 2^(1-nu) / Gamma(nu) (2 sqrt(nu) r)^nu K_nu(2 sqrt(nu) r)`.
pub fn matern_cov(spec: &MaternSpec, x: Point, xp: Point) -> f64 {
    spec.cov_offset(x[0] - xp[0], x[1] - xp[1])
}

/// Modified Bessel function of the second kind for real order and `z > 0`,
/// from `K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt`.
///
/// The integrand is smooth and decays doubly exponentially, so the trapezoidal
/// rule converges geometrically in the step size.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    assert!(z > 0.0, "bessel_k needs z > 0");
    let nu = nu.abs();
    // cut off where z cosh t exceeds the retained dynamic range
    let mut t_max: f64 = 1.0;
    while z * t_max.cosh() - nu * t_max < 750.0 {
        t_max += 1.0;
    }
    let step = 0.05f64.min(0.3 / z.sqrt());
    let steps = (t_max / step).ceil() as usize;
    let h = t_max / steps as f64;
    let f = |t: f64| (-z * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
    let mut acc = 0.5 * f(0.0);
    for i in 1..steps {
        acc += f(i as f64 * h);
    }
    acc * h
}

/// Nodal values of a field over the mesh (node order of [`TriMesh::nodes`]).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub values: Vec<f64>,
}

/// Circulant-embedding sampler for a stationary Matérn field on the nodes of
/// a uniform mesh. The embedding spectrum is computed once and reused.
pub struct CirculantSampler {
    spec: MaternSpec,
    nodes_per_side: usize,
    period: usize,
    sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    padding: usize,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("spec", &self.spec)
            .field("nodes_per_side", &self.nodes_per_side)
            .field("period", &self.period)
            .finish()
    }
}

const EMBED_TOL: f64 = 1e-8;
const EMBED_RETRIES: usize = 3;

impl CirculantSampler {
    /// Builds the sampler, starting from a periodic grid twice the physical
    /// extent and doubling the padding on negative embedding eigenvalues.
    pub fn new(spec: &MaternSpec, mesh: &TriMesh) -> Result<Self> {
        let mut padding = 2;
        let mut last_err = None;
        for _ in 0..=EMBED_RETRIES {
            match Self::with_padding(spec, mesh, padding) {
                Ok(s) => return Ok(s),
                Err(e @ Error::NonPositiveEmbedding { .. }) => {
                    last_err = Some(e);
                    padding *= 2;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    /// Builds the sampler on a periodic grid of `padding * n` cells per side.
    pub fn with_padding(spec: &MaternSpec, mesh: &TriMesh, padding: usize) -> Result<Self> {
        spec.validate()?;
        if padding < 2 {
            return Err(Error::InvalidArgument("padding factor must be >= 2".into()));
        }
        let n = mesh.n();
        let h = mesh.h();
        let period = padding * n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(period);
        let mut buf = vec![Complex64::new(0.0, 0.0); period * period];
        for j in 0..period {
            let dy = j.min(period - j) as f64 * h;
            for i in 0..period {
                let dx = i.min(period - i) as f64 * h;
                buf[i + j * period] = Complex64::new(spec.cov_offset(dx, dy), 0.0);
            }
        }
        fft2(&fft, &mut buf, period);
        let max = buf.iter().fold(f64::MIN, |m, c| m.max(c.re));
        let min = buf.iter().fold(f64::MAX, |m, c| m.min(c.re));
        if min < -EMBED_TOL * max {
            return Err(Error::NonPositiveEmbedding {
                min_eigenvalue: min,
                suggested_padding: 2 * padding,
            });
        }
        let scale = 1.0 / (period * period) as f64;
        let sqrt_eig = buf.iter().map(|c| (c.re.max(0.0) * scale).sqrt()).collect();
        Ok(Self {
            spec: *spec,
            nodes_per_side: n + 1,
            period,
            sqrt_eig,
            fft,
            padding,
        })
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn spec(&self) -> &MaternSpec {
        &self.spec
    }

    /// Draws one realization of the field at the mesh nodes.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GridField {
        self.sample_pair(rng).0
    }

    /// Draws two independent realizations from one complex synthesis.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (GridField, GridField) {
        let p = self.period;
        let mut buf: Vec<Complex64> = self
            .sqrt_eig
            .iter()
            .map(|s| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft2(&self.fft, &mut buf, p);
        let np = self.nodes_per_side;
        let mut a = Vec::with_capacity(np * np);
        let mut b = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                let c = buf[i + j * p];
                a.push(c.re);
                b.push(c.im);
            }
        }
        (GridField { values: a }, GridField { values: b })
    }
}

fn fft2(fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], p: usize) {
    // rows
    fft.process(buf);
    // columns via transpose
    let mut t = vec![Complex64::new(0.0, 0.0); p * p];
    for j in 0..p {
        for i in 0..p {
            t[j + i * p] = buf[i + j * p];
        }
    }
    fft.process(&mut t);
    for j in 0..p {
        for i in 0..p {
            buf[i + j * p] = t[j + i * p];
        }
    }
}

/// One realization of the Matérn field; builds a fresh sampler.
pub fn sample_grf_circulant<R: Rng + ?Sized>(
    spec: &MaternSpec,
    mesh: &TriMesh,
    rng: &mut R,
) -> Result<GridField> {
    Ok(CirculantSampler::new(spec, mesh)?.sample(rng))
}

/// `a0 + a1 exp(z)` at the barycenter of `element`, with `z` averaged over the
/// element's three vertices.
pub fn eval_s2(spec: &MaternSpec, z: &GridField, mesh: &TriMesh, element: usize) -> f64 {
    let [a, b, c] = mesh.elements()[element];
    let zbar = (z.values[a] + z.values[b] + z.values[c]) / 3.0;
    spec.a0 + spec.a1 * zbar.exp()
}

pub fn element_coefficients_s2(spec: &MaternSpec, z: &GridField, mesh: &TriMesh) -> Vec<f64> {
    (0..mesh.elements().len())
        .map(|e| eval_s2(spec, z, mesh, e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn s1_sampling_is_deterministic_and_bounded() {
        let a = sample_param_s1(&mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_param_s1(&mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mean = [0.0; S1_DIM];
        let draws = 10_000;
        for _ in 0..draws {
            let p = sample_param_s1(&mut rng);
            assert!(p.y.iter().all(|v| v.abs() <= 0.5));
            for (m, v) in mean.iter_mut().zip(p.y) {
                *m += v / draws as f64;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.02), "{mean:?}");
    }

    #[test]
    fn s1_evaluation() {
        let zero = ParamS1::new([0.0; S1_DIM]).unwrap();
        assert_eq!(eval_s1(&zero, [0.3, 0.7]), 1.0);
        let hi = ParamS1::new([0.5; S1_DIM]).unwrap();
        let lo = ParamS1::new([-0.5; S1_DIM]).unwrap();
        assert_eq!(eval_s1(&hi, [0.2, 0.2]), 1.5);
        assert_eq!(eval_s1(&lo, [0.99, 0.01]), 0.5);
        assert_eq!(checkerboard_cell([0.1, 0.1]), 0);
        assert_eq!(checkerboard_cell([0.9, 0.9]), 15);
        assert_eq!(checkerboard_cell([1.0, 1.0]), 15);
        assert_eq!(checkerboard_cell([0.3, 0.1]), 1);
        assert_eq!(checkerboard_cell([0.1, 0.3]), 4);
        assert!(ParamS1::new([0.6; S1_DIM]).is_err());
    }

    #[test]
    fn s1_zero_parameter_gives_unit_stiffness() {
        let mesh = TriMesh::new(8).unwrap();
        let coeff = element_coefficients_s1(&ParamS1::new([0.0; S1_DIM]).unwrap(), &mesh);
        let a = crate::fem::assemble_stiffness(&mesh, &coeff).unwrap();
        assert_eq!(a, crate::fem::assemble_laplace(&mesh));
    }

    #[test]
    fn bessel_k_known_values() {
        // K_{1/2}(z) = sqrt(pi / (2 z)) e^{-z}
        for z in [0.01, 0.3, 1.0, 4.0, 20.0] {
            let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z as f64).exp();
            assert!((bessel_k(0.5, z) / exact - 1.0).abs() < 1e-12, "z={z}");
        }
        assert!((bessel_k(1.0, 1.0) - 0.601_907_230_197_234_6).abs() < 1e-13);
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-13);
    }

    #[test]
    fn matern_values() {
        let spec = MaternSpec {
            sigma2: 1.0,
            nu: 0.5,
            lam1: 1.0,
            lam2: 1.0,
            a0: 0.0,
            a1: 1.0,
        };
        assert_eq!(matern_cov(&spec, [0.3, 0.3], [0.3, 0.3]), 1.0);
        let c = matern_cov(&spec, [0.0, 0.0], [1.0, 0.0]);
        assert!((c - (-(2f64).sqrt()).exp()).abs() < 1e-12);
        assert!((c - 0.24312).abs() < 1e-5);

        let d = MaternSpec::default();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let r = i as f64 * 0.005;
            let c = matern_cov(&d, [0.0, 0.0], [r, 0.0]);
            assert!(c < prev || i == 0);
            prev = c;
        }
    }

    #[test]
    fn circulant_sampler_is_deterministic_and_positive() {
        let mesh = TriMesh::new(16).unwrap();
        let s = CirculantSampler::new(&MaternSpec::default(), &mesh).unwrap();
        let a = s.sample(&mut ChaCha8Rng::seed_from_u64(3));
        let b = s.sample(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 17 * 17);
        let c = s.sample(&mut ChaCha8Rng::seed_from_u64(4));
        assert_ne!(a, c);
    }

    #[test]
    fn circulant_variance_and_cross_seed_independence() {
        let mesh = TriMesh::new(8).unwrap();
        let spec = MaternSpec::default();
        let s = CirculantSampler::new(&spec, &mesh).unwrap();
        let reps = 10_000;
        let probe = 4 + 4 * 9;
        let (mut var, mut cross) = (0.0, 0.0);
        for r in 0..reps {
            let a = s.sample(&mut ChaCha8Rng::seed_from_u64(2 * r));
            let b = s.sample(&mut ChaCha8Rng::seed_from_u64(2 * r + 1));
            var += a.values[probe].powi(2) / reps as f64;
            cross += a.values[probe] * b.values[probe] / reps as f64;
        }
        assert!((var / spec.sigma2 - 1.0).abs() < 0.05, "variance {var}");
        assert!(cross.abs() < 0.05, "cross-correlation {cross}");
    }

    #[test]
    fn lognormal_coefficient() {
        let mesh = TriMesh::new(4).unwrap();
        let spec = MaternSpec::default();
        let zero = GridField {
            values: vec![0.0; mesh.nodes().len()],
        };
        assert!(element_coefficients_s2(&spec, &zero, &mesh).iter().all(|&a| a == 1.0));
        let ln2 = GridField {
            values: vec![2f64.ln(); mesh.nodes().len()],
        };
        assert!(element_coefficients_s2(&spec, &ln2, &mesh)
            .iter()
            .all(|&a| (a - 2.0).abs() < 1e-14));
        let s = CirculantSampler::new(&spec, &mesh).unwrap();
        let z = s.sample(&mut ChaCha8Rng::seed_from_u64(1));
        assert!(element_coefficients_s2(&spec, &z, &mesh).iter().all(|&a| a > 0.0));
    }
}
