//! Sensors, their Riesz representers, and the measurement space `W`.
//!
//! A sensor averages the P1 interpolant over the four corners of a small square
//! around its center. Lifting each functional into the truth space and
//! orthonormalizing gives a basis `Phi` of `W` together with the change of
//! basis `C` that maps raw observations to sensor coordinates `w = C o`.

use crate::error::{Error, Result};
use crate::fem::{self, CgOptions, FeFunction, FeSpace, InnerProductMode, Point, TriMesh};
use nalgebra::DMatrix;
use rand::Rng;

/// Side length of the averaging square.
pub const DEFAULT_DELTA: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    centers: Vec<Point>,
    delta: f64,
}

impl SensorArray {
    pub fn new(centers: Vec<Point>, delta: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidArgument("need at least one sensor".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument("sensor square must have positive side".into()));
        }
        let half = delta / 2.0;
        for (i, c) in centers.iter().enumerate() {
            let inside = |v: f64| v - half >= 0.0 && v + half <= 1.0;
            if !(inside(c[0]) && inside(c[1])) {
                return Err(Error::InvalidArgument(format!(
                    "sensor {i} at ({}, {}) reaches outside the domain",
                    c[0], c[1]
                )));
            }
        }
        Ok(Self { centers, delta })
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// The four corners of the averaging square of sensor `i`.
    pub fn corners(&self, i: usize) -> [Point; 4] {
        let [x, y] = self.centers[i];
        let d = self.delta / 2.0;
        [[x - d, y - d], [x + d, y - d], [x - d, y + d], [x + d, y + d]]
    }
}

/// The two uniform layouts: 16 sensors at the checkerboard cell centers
/// `((2i-1)/8, (2j-1)/8)`, or 49 sensors on the grid `(i/8, j/8)`.
pub fn place_uniform(m: usize) -> Result<SensorArray> {
    let centers = match m {
        16 => grid_points(4, |i| (2 * i + 1) as f64 / 8.0),
        49 => grid_points(7, |i| (i + 1) as f64 / 8.0),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "uniform placement supports 16 or 49 sensors, got {m}; use place_grid"
            )))
        }
    };
    SensorArray::new(centers, DEFAULT_DELTA)
}

/// `per_side x per_side` sensors at the cell centers of a uniform grid.
pub fn place_grid(per_side: usize) -> Result<SensorArray> {
    if per_side == 0 {
        return Err(Error::InvalidArgument("need at least one sensor".into()));
    }
    let s = per_side as f64;
    SensorArray::new(
        grid_points(per_side, |i| (i as f64 + 0.5) / s),
        DEFAULT_DELTA,
    )
}

fn grid_points(per_side: usize, coord: impl Fn(usize) -> f64) -> Vec<Point> {
    let mut pts = Vec::with_capacity(per_side * per_side);
    for j in 0..per_side {
        for i in 0..per_side {
            pts.push([coord(i), coord(j)]);
        }
    }
    pts
}

/// `m` i.i.d. uniform sensor centers in `[0.05, 0.95]^2`.
pub fn place_random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<SensorArray> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one sensor".into()));
    }
    let centers = (0..m)
        .map(|_| [rng.random_range(0.05..=0.95), rng.random_range(0.05..=0.95)])
        .collect();
    SensorArray::new(centers, DEFAULT_DELTA)
}

/// Sparse representation of one sensor functional over interior DOFs.
pub type Functional = Vec<(usize, f64)>;

/// Each sensor as a sparse functional: `l_i(u) = sum w_d u_d`.
pub fn functionals(mesh: &TriMesh, sensors: &SensorArray) -> Result<Vec<Functional>> {
    (0..sensors.len())
        .map(|i| {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for corner in sensors.corners(i) {
                for (d, w) in mesh.eval_weights(corner)? {
                    match acc.iter_mut().find(|(dd, _)| *dd == d) {
                        Some(entry) => entry.1 += 0.25 * w,
                        None => acc.push((d, 0.25 * w)),
                    }
                }
            }
            acc.sort_by_key(|e| e.0);
            Ok(acc)
        })
        .collect()
}

fn apply_functional(f: &Functional, u: &[f64]) -> f64 {
    f.iter().map(|&(d, w)| w * u[d]).sum()
}

/// Raw observations `o_i = l_i(u)`.
pub fn apply_functionals(mesh: &TriMesh, sensors: &SensorArray, u: &FeFunction) -> Result<Vec<f64>> {
    mesh.check(u)?;
    Ok(functionals(mesh, sensors)?
        .iter()
        .map(|f| apply_functional(f, &u.coeffs))
        .collect())
}

/// Riesz representers: solves `(phi_i, v)_U = l_i(v)` for all `v` in the truth space.
pub fn riesz_lift(
    space: &FeSpace,
    sensors: &SensorArray,
    mode: InnerProductMode,
) -> Result<Vec<FeFunction>> {
    let funcs = functionals(space.mesh(), sensors)?;
    lift_functionals(space, &funcs, mode)
}

fn lift_functionals(
    space: &FeSpace,
    funcs: &[Functional],
    mode: InnerProductMode,
) -> Result<Vec<FeFunction>> {
    let gram = space.gram(mode);
    let opts = CgOptions {
        tol: 1e-12,
        ..CgOptions::default()
    };
    funcs
        .iter()
        .map(|f| {
            let mut load = vec![0.0; space.num_dofs()];
            for &(d, w) in f {
                load[d] += w;
            }
            fem::solve_cg(gram, &load, &opts)
        })
        .collect()
}

/// How the lifted functionals are orthonormalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orthonormalization {
    /// `G = L L^T`, `C = L^{-1}` (lower triangular).
    #[default]
    Cholesky,
    /// `G = V S V^T`, `C = S^{-1/2} V^T`.
    Svd,
}

const DEPENDENT_PIVOT: f64 = 1e-12;

/// Change of basis `C` with `C G C^T = I` for a Gram matrix `G`.
pub fn change_of_basis(gram: &DMatrix<f64>, method: Orthonormalization) -> Result<DMatrix<f64>> {
    let m = gram.nrows();
    match method {
        Orthonormalization::Cholesky => {
            let mut l = DMatrix::<f64>::zeros(m, m);
            for j in 0..m {
                let mut d = gram[(j, j)];
                for k in 0..j {
                    d -= l[(j, k)] * l[(j, k)];
                }
                if !(d > DEPENDENT_PIVOT * gram[(j, j)]) {
                    return Err(Error::DependentSensors { index: j });
                }
                let ljj = d.sqrt();
                l[(j, j)] = ljj;
                for i in j + 1..m {
                    let mut s = gram[(i, j)];
                    for k in 0..j {
                        s -= l[(i, k)] * l[(j, k)];
                    }
                    l[(i, j)] = s / ljj;
                }
            }
            // forward substitution for L^{-1}
            let mut c = DMatrix::<f64>::zeros(m, m);
            for col in 0..m {
                for i in col..m {
                    let mut s = if i == col { 1.0 } else { 0.0 };
                    for k in col..i {
                        s -= l[(i, k)] * c[(k, col)];
                    }
                    c[(i, col)] = s / l[(i, i)];
                }
            }
            Ok(c)
        }
        Orthonormalization::Svd => {
            let eig = nalgebra::SymmetricEigen::new(gram.clone());
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let smax = eig.eigenvalues[order[0]];
            let smin = eig.eigenvalues[order[m - 1]];
            if !(smin > DEPENDENT_PIVOT * smax) {
                let v = eig.eigenvectors.column(order[m - 1]);
                let index = v.iamax();
                return Err(Error::DependentSensors { index });
            }
            let mut c = DMatrix::<f64>::zeros(m, m);
            for (row, &k) in order.iter().enumerate() {
                let s = eig.eigenvalues[k].sqrt();
                for j in 0..m {
                    c[(row, j)] = eig.eigenvectors[(j, k)] / s;
                }
            }
            Ok(c)
        }
    }
}

/// Orthonormal basis of the measurement space.
#[derive(Debug, Clone)]
pub struct MeasurementSpace {
    phi: Vec<FeFunction>,
    /// `G_U phi_i`, cached for fast inner products.
    gram_phi: Vec<Vec<f64>>,
    c: DMatrix<f64>,
    mode: InnerProductMode,
    gram_residual: f64,
    functionals: Vec<Functional>,
}

impl MeasurementSpace {
    /// Lifts, then orthonormalizes, the sensors of `sensors`.
    pub fn build(
        space: &FeSpace,
        sensors: &SensorArray,
        mode: InnerProductMode,
        method: Orthonormalization,
    ) -> Result<Self> {
        let funcs = functionals(space.mesh(), sensors)?;
        let lifts = lift_functionals(space, &funcs, mode)?;
        let mut ms = orthonormalize(space, &lifts, mode, method)?;
        ms.functionals = funcs;
        Ok(ms)
    }

    pub fn phi(&self) -> &[FeFunction] {
        &self.phi
    }

    pub fn change_of_basis(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn mode(&self) -> InnerProductMode {
        self.mode
    }

    pub fn gram_residual(&self) -> f64 {
        self.gram_residual
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// Raw sensor readings of `u`; empty functionals when built from bare lifts.
    pub fn observe(&self, u: &[f64]) -> Vec<f64> {
        self.functionals.iter().map(|f| apply_functional(f, u)).collect()
    }

    /// `w = C o`
    pub fn measure_coords(&self, o: &[f64]) -> Vec<f64> {
        let m = self.dim();
        (0..m)
            .map(|i| (0..m).map(|j| self.c[(i, j)] * o[j]).sum())
            .collect()
    }

    /// `w_i = (u, phi_i)_U` by direct inner products.
    pub fn coords_of(&self, u: &[f64]) -> Vec<f64> {
        self.gram_phi.iter().map(|g| fem::dot(g, u)).collect()
    }

    /// `Phi^T w`
    pub fn synthesize(&self, w: &[f64]) -> FeFunction {
        let mut out = FeFunction::zeros(self.phi.first().map_or(0, |p| p.len()));
        for (wi, p) in w.iter().zip(&self.phi) {
            out.axpy(*wi, p);
        }
        out
    }

    /// `P_W u = Phi^T w(u)`
    pub fn project(&self, u: &[f64]) -> FeFunction {
        self.synthesize(&self.coords_of(u))
    }

    /// `z = u - P_W u`
    pub fn project_complement(&self, u: &FeFunction) -> FeFunction {
        let mut z = u.clone();
        for (wi, p) in self.coords_of(&u.coeffs).iter().zip(&self.phi) {
            z.axpy(-wi, p);
        }
        z
    }
}

/// Orthonormalizes lifted functionals: `Phi = C Phi~`.
pub fn orthonormalize(
    space: &FeSpace,
    lifts: &[FeFunction],
    mode: InnerProductMode,
    method: Orthonormalization,
) -> Result<MeasurementSpace> {
    let m = lifts.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no lifted functionals".into()));
    }
    let glifts: Vec<Vec<f64>> = lifts.iter().map(|l| space.apply_gram(&l.coeffs, mode)).collect();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = fem::dot(&glifts[i], &lifts[j].coeffs);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let c = change_of_basis(&gram, method)?;
    let ndof = space.num_dofs();
    let phi: Vec<FeFunction> = (0..m)
        .map(|i| FeFunction::new(combine_rows(&c, i, lifts.iter().map(|l| l.coeffs.as_slice()), ndof)))
        .collect();
    let gram_phi: Vec<Vec<f64>> = (0..m)
        .map(|i| combine_rows(&c, i, glifts.iter().map(|g| g.as_slice()), ndof))
        .collect();
    let mut residual = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let target = if i == j { 1.0 } else { 0.0 };
            residual = residual.max((fem::dot(&gram_phi[i], &phi[j].coeffs) - target).abs());
        }
    }
    Ok(MeasurementSpace {
        phi,
        gram_phi,
        c,
        mode,
        gram_residual: residual,
        functionals: Vec::new(),
    })
}

fn combine_rows<'a>(c: &DMatrix<f64>, i: usize, vecs: impl Iterator<Item = &'a [f64]>, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (j, v) in vecs.enumerate() {
        let cij = c[(i, j)];
        if cij != 0.0 {
            fem::axpy(cij, v, &mut out);
        }
    }
    out
}

/// `w = C o` (free-function form).
pub fn measure_coords(space: &MeasurementSpace, o: &[f64]) -> Vec<f64> {
    space.measure_coords(o)
}

/// `z = (I - P_W) u` (free-function form).
pub fn project_complement(space: &MeasurementSpace, u: &FeFunction) -> FeFunction {
    space.project_complement(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_function(n: usize, rng: &mut ChaCha8Rng) -> FeFunction {
        FeFunction::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn uniform_layouts() {
        let s16 = place_uniform(16).unwrap();
        assert_eq!(s16.len(), 16);
        assert_eq!(s16.centers()[0], [0.125, 0.125]);
        let s49 = place_uniform(49).unwrap();
        assert_eq!(s49.centers()[1][0] - s49.centers()[0][0], 0.125);
        assert!(place_uniform(25).is_err());
        for c in s16.centers().iter().chain(s49.centers()) {
            assert!(c[0] > 0.0 && c[0] < 1.0 && c[1] > 0.0 && c[1] < 1.0);
        }
    }

    #[test]
    fn random_layout() {
        let a = place_random(50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = place_random(50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(a
            .centers()
            .iter()
            .all(|c| (0.05..=0.95).contains(&c[0]) && (0.05..=0.95).contains(&c[1])));
        let big = place_random(10_000, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let mean = big.centers().iter().fold([0.0, 0.0], |m, c| [m[0] + c[0], m[1] + c[1]]);
        assert!((mean[0] / 1e4 - 0.5).abs() < 0.01 && (mean[1] / 1e4 - 0.5).abs() < 0.01);
        assert!(place_random(0, &mut ChaCha8Rng::seed_from_u64(6)).is_err());
    }

    #[test]
    fn functionals_on_simple_fields() {
        let mesh = TriMesh::new(16).unwrap();
        let sensors = place_uniform(16).unwrap();
        let zero = FeFunction::zeros(mesh.num_dofs());
        assert!(apply_functionals(&mesh, &sensors, &zero).unwrap().iter().all(|&o| o == 0.0));

        // x1 on the interior nodes; exact for P1 away from the boundary
        let u = mesh.interpolate(|p| p[0]);
        let o = apply_functionals(&mesh, &sensors, &u).unwrap();
        for (oi, c) in o.iter().zip(sensors.centers()) {
            assert!((oi - c[0]).abs() <= sensors.delta());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_function(mesh.num_dofs(), &mut rng);
        let b = random_function(mesh.num_dofs(), &mut rng);
        let mut comb = a.scaled(2.0);
        comb.axpy(-3.0, &b);
        let oa = apply_functionals(&mesh, &sensors, &a).unwrap();
        let ob = apply_functionals(&mesh, &sensors, &b).unwrap();
        let oc = apply_functionals(&mesh, &sensors, &comb).unwrap();
        for i in 0..16 {
            assert!((oc[i] - (2.0 * oa[i] - 3.0 * ob[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn riesz_lifts_represent_functionals() {
        let space = FeSpace::with_subdivisions(16).unwrap();
        let sensors = place_uniform(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [InnerProductMode::H1Seminorm, InnerProductMode::L2] {
            let lifts = riesz_lift(&space, &sensors, mode).unwrap();
            for _ in 0..10 {
                let u = random_function(space.num_dofs(), &mut rng);
                let o = apply_functionals(space.mesh(), &sensors, &u).unwrap();
                for (l, oi) in lifts.iter().zip(&o) {
                    let ip = space.inner(&l.coeffs, &u.coeffs, mode);
                    assert!((ip - oi).abs() <= 1e-8 * oi.abs().max(1e-3), "{ip} vs {oi}");
                }
            }
            let (a, b) = (&lifts[0], &lifts[5]);
            let cos = space.inner(&a.coeffs, &b.coeffs, mode)
                / (space.norm(&a.coeffs, mode) * space.norm(&b.coeffs, mode));
            assert!(cos.abs() < 1.0);
        }
    }

    #[test]
    fn l2_lift_is_mass_solve() {
        let space = FeSpace::with_subdivisions(8).unwrap();
        let sensors = place_grid(2).unwrap();
        let lifts = riesz_lift(&space, &sensors, InnerProductMode::L2).unwrap();
        let funcs = functionals(space.mesh(), &sensors).unwrap();
        for (l, f) in lifts.iter().zip(&funcs) {
            let ml = space.apply_gram(&l.coeffs, InnerProductMode::L2);
            let mut load = vec![0.0; space.num_dofs()];
            for &(d, w) in f {
                load[d] += w;
            }
            for (a, b) in ml.iter().zip(&load) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hand_cholesky_change_of_basis() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let c = change_of_basis(&g, Orthonormalization::Cholesky).unwrap();
        let s3 = 3f64.sqrt();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0 / s3, 2.0 / s3]);
        assert!((c - expected).abs().max() < 1e-14);

        let eye = DMatrix::<f64>::identity(3, 3);
        assert!((change_of_basis(&eye, Orthonormalization::Cholesky).unwrap() - &eye).abs().max() < 1e-15);

        let singular = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            change_of_basis(&singular, Orthonormalization::Cholesky),
            Err(Error::DependentSensors { index: 1 })
        ));
        assert!(matches!(
            change_of_basis(&singular, Orthonormalization::Svd),
            Err(Error::DependentSensors { .. })
        ));
    }

    #[test]
    fn measurement_space_invariants_both_modes_and_methods() {
        let space = FeSpace::with_subdivisions(16).unwrap();
        let sensors = place_uniform(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [InnerProductMode::H1Seminorm, InnerProductMode::L2] {
            for method in [Orthonormalization::Cholesky, Orthonormalization::Svd] {
                let ms = MeasurementSpace::build(&space, &sensors, mode, method).unwrap();
                assert!(ms.gram_residual() <= 1e-10, "{}", ms.gram_residual());
                if method == Orthonormalization::Cholesky {
                    let c = ms.change_of_basis();
                    for i in 0..16 {
                        assert!(c[(i, i)] > 0.0);
                        for j in i + 1..16 {
                            assert_eq!(c[(i, j)], 0.0);
                        }
                    }
                }
                for _ in 0..5 {
                    let u = random_function(space.num_dofs(), &mut rng);
                    let w = ms.measure_coords(&ms.observe(&u.coeffs));
                    let direct = ms.coords_of(&u.coeffs);
                    let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for (a, b) in w.iter().zip(&direct) {
                        assert!((a - b).abs() <= 1e-8 * scale);
                    }
                    let pw = ms.project(&u.coeffs);
                    let wn: f64 = direct.iter().map(|v| v * v).sum();
                    assert!((space.norm(&pw.coeffs, mode).powi(2) - wn).abs() <= 1e-10 * wn);
                    // idempotence
                    let again = ms.coords_of(&pw.coeffs);
                    for (a, b) in again.iter().zip(&direct) {
                        assert!((a - b).abs() <= 1e-10 * scale);
                    }
                    let z = ms.project_complement(&u);
                    let zz = space.inner(&z.coeffs, &z.coeffs, mode);
                    let uu = space.inner(&u.coeffs, &u.coeffs, mode);
                    assert!((uu - wn - zz).abs() <= 1e-8 * uu);
                    for p in ms.phi() {
                        assert!(space.inner(&z.coeffs, &p.coeffs, mode).abs() <= 1e-8 * uu.sqrt());
                    }
                }
                assert!(ms.measure_coords(&[0.0; 16]).iter().all(|&v| v == 0.0));
                // u in W projects to zero complement; u orthogonal to W is unchanged
                let inside = ms.synthesize(&(0..16).map(|i| i as f64 - 7.0).collect::<Vec<_>>());
                let zin = ms.project_complement(&inside);
                assert!(space.norm(&zin.coeffs, mode) <= 1e-8 * space.norm(&inside.coeffs, mode));
                let perp = ms.project_complement(&random_function(space.num_dofs(), &mut rng));
                let twice = ms.project_complement(&perp);
                let diff: Vec<f64> = twice.coeffs.iter().zip(&perp.coeffs).map(|(a, b)| a - b).collect();
                assert!(space.norm(&diff, mode) <= 1e-10 * space.norm(&perp.coeffs, mode));
            }
        }
    }

    #[test]
    fn orthonormal_input_gives_identity() {
        let space = FeSpace::with_subdivisions(8).unwrap();
        let sensors = place_grid(2).unwrap();
        let ms = MeasurementSpace::build(&space, &sensors, InnerProductMode::H1Seminorm, Orthonormalization::Cholesky)
            .unwrap();
        let again = orthonormalize(&space, ms.phi(), InnerProductMode::H1Seminorm, Orthonormalization::Cholesky)
            .unwrap();
        let eye = DMatrix::<f64>::identity(4, 4);
        assert!((again.change_of_basis() - eye).abs().max() < 1e-10);
    }

    #[test]
    fn dependent_sensors_are_reported() {
        let space = FeSpace::with_subdivisions(8).unwrap();
        let sensors = SensorArray::new(vec![[0.3, 0.3], [0.7, 0.6], [0.3, 0.3]], DEFAULT_DELTA).unwrap();
        match MeasurementSpace::build(&space, &sensors, InnerProductMode::H1Seminorm, Orthonormalization::Cholesky) {
            Err(Error::DependentSensors { index }) => assert_eq!(index, 2),
            other => panic!("expected dependent sensors, got {other:?}"),
        }
    }

    #[test]
    fn lift_resolve_is_stable() {
        let space = FeSpace::with_subdivisions(16).unwrap();
        let sensors = place_uniform(16).unwrap();
        let ms = MeasurementSpace::build(&space, &sensors, InnerProductMode::H1Seminorm, Orthonormalization::Cholesky)
            .unwrap();
        // re-solve the lifts at a looser tolerance; coordinates barely move
        let funcs = functionals(space.mesh(), &sensors).unwrap();
        let gram = space.gram(InnerProductMode::H1Seminorm);
        let lifts: Vec<FeFunction> = funcs
            .iter()
            .map(|f| {
                let mut load = vec![0.0; space.num_dofs()];
                for &(d, w) in f {
                    load[d] += w;
                }
                fem::solve_dirichlet(gram, &load, 1e-10).unwrap()
            })
            .collect();
        let loose = orthonormalize(&space, &lifts, InnerProductMode::H1Seminorm, Orthonormalization::Cholesky).unwrap();
        let u = space.mesh().interpolate(|p| (3.0 * p[0]).sin() * p[1] * (1.0 - p[1]) * p[0] * (1.0 - p[0]));
        let a = ms.coords_of(&u.coeffs);
        let b = loose.coords_of(&u.coeffs);
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(d < 1e-9 * na, "{d}");
    }
}
