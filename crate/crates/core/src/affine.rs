//! Affine one-space (PBDW) baseline on a POD reduced space.

use crate::error::{Error, Result};
use crate::fem::{self, FeFunction, FeSpace, InnerProductMode};
use crate::reduction::{pod, PodWeighting, Truncation};
use crate::sensing::MeasurementSpace;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::io::Write;

/// `U_n = u_bar + span{xi_1, ..., xi_n}` with U-orthonormal `xi`.
#[derive(Debug, Clone)]
pub struct AffineSpace {
    offset: FeFunction,
    basis: Vec<FeFunction>,
    gram_basis: Vec<Vec<f64>>,
    mode: InnerProductMode,
}

impl AffineSpace {
    /// Assumes `basis` is U-orthonormal.
    pub fn from_parts(space: &FeSpace, mode: InnerProductMode, offset: FeFunction, basis: Vec<FeFunction>) -> Self {
        let gram_basis = basis.iter().map(|b| space.apply_gram(&b.coeffs, mode)).collect();
        Self {
            offset,
            basis,
            gram_basis,
            mode,
        }
    }

    pub fn offset(&self) -> &FeFunction {
        &self.offset
    }

    pub fn basis(&self) -> &[FeFunction] {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.len()
    }

    /// The first `n` basis functions (nested POD spaces).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.basis.len());
        Self {
            offset: self.offset.clone(),
            basis: self.basis[..n].to_vec(),
            gram_basis: self.gram_basis[..n].to_vec(),
            mode: self.mode,
        }
    }

    /// `dist_U(u, U_n)`
    pub fn distance(&self, space: &FeSpace, u: &FeFunction) -> f64 {
        let mut r = u.clone();
        r.axpy(-1.0, &self.offset);
        let coefs: Vec<f64> = self.gram_basis.iter().map(|g| fem::dot(g, &r.coeffs)).collect();
        for (c, b) in coefs.iter().zip(&self.basis) {
            r.axpy(-c, b);
        }
        space.norm(&r.coeffs, self.mode)
    }
}

/// Snapshot mean plus the top-`n` POD modes of the centered snapshots.
pub fn build_affine_space(
    solutions: &[FeFunction],
    space: &FeSpace,
    meas: &MeasurementSpace,
    n: usize,
) -> Result<AffineSpace> {
    if n > meas.dim() {
        return Err(Error::InvalidArgument(format!(
            "reduced dimension {n} exceeds the number of sensors {}",
            meas.dim()
        )));
    }
    if solutions.is_empty() {
        return Err(Error::InvalidArgument("no snapshots".into()));
    }
    let ndof = solutions[0].len();
    let mut mean = vec![0.0; ndof];
    for u in solutions {
        fem::axpy(1.0, &u.coeffs, &mut mean);
    }
    let inv = 1.0 / solutions.len() as f64;
    mean.iter_mut().for_each(|x| *x *= inv);
    let offset = FeFunction::new(mean);
    let basis = if n == 0 {
        Vec::new()
    } else {
        let centered: Vec<FeFunction> = solutions
            .par_iter()
            .map(|u| {
                let mut c = u.clone();
                c.axpy(-1.0, &offset);
                c
            })
            .collect();
        pod(&centered, space, meas.mode(), PodWeighting::Weighted, Truncation::Count(n))?.modes
    };
    Ok(AffineSpace::from_parts(space, meas.mode(), offset, basis))
}

/// `G_ij = (xi_i, phi_j)_U` with its smallest singular value.
#[derive(Debug, Clone)]
pub struct CrossGramian {
    pub g: DMatrix<f64>,
    pub sigma_min: f64,
}

pub fn cross_gramian(aff: &AffineSpace, meas: &MeasurementSpace) -> CrossGramian {
    let n = aff.n();
    let m = meas.dim();
    let g = DMatrix::from_fn(n, m, |i, j| fem::dot(&aff.gram_basis[i], &meas.phi()[j].coeffs));
    let sigma_min = if n == 0 {
        1.0
    } else {
        g.clone().svd(false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min)
    };
    CrossGramian { g, sigma_min }
}

const SIGMA_FLOOR: f64 = 1e-12;

/// `1 / sigma_min(G)`; infinite when `sigma_min < 1e-12`, and 1 for `n = 0`.
pub fn compute_mu(aff: &AffineSpace, meas: &MeasurementSpace) -> f64 {
    let cg = cross_gramian(aff, meas);
    if cg.sigma_min < SIGMA_FLOOR {
        f64::INFINITY
    } else {
        1.0 / cg.sigma_min
    }
}

/// Precomputed solver for repeated estimates with one affine space.
#[derive(Debug, Clone)]
pub struct Pbdw<'a> {
    aff: &'a AffineSpace,
    meas: &'a MeasurementSpace,
    g: DMatrix<f64>,
    normal: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    w_offset: Vec<f64>,
    pub mu: f64,
}

impl<'a> Pbdw<'a> {
    pub fn new(aff: &'a AffineSpace, meas: &'a MeasurementSpace) -> Result<Self> {
        let cg = cross_gramian(aff, meas);
        let mu = if cg.sigma_min < SIGMA_FLOOR {
            f64::INFINITY
        } else {
            1.0 / cg.sigma_min
        };
        if !mu.is_finite() {
            return Err(Error::UnrecoverableSpace);
        }
        let normal = if aff.n() == 0 {
            None
        } else {
            Some((&cg.g * cg.g.transpose()).cholesky().ok_or(Error::UnrecoverableSpace)?)
        };
        Ok(Self {
            aff,
            meas,
            w_offset: meas.coords_of(&aff.offset.coeffs),
            g: cg.g,
            normal,
            mu,
        })
    }

    /// `u* = v* + Phi^T (w - w(v*))`, `v* = u_bar + Xi^T eta`,
    /// `eta = argmin ||G^T eta - (w - w(u_bar))||`.
    pub fn estimate(&self, w: &[f64]) -> Result<FeFunction> {
        if w.len() != self.meas.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {} sensors",
                w.len(),
                self.meas.dim()
            )));
        }
        let mut v = self.aff.offset.clone();
        if let Some(chol) = &self.normal {
            let rhs = DVector::from_iterator(w.len(), w.iter().zip(&self.w_offset).map(|(a, b)| a - b));
            let eta = chol.solve(&(&self.g * rhs));
            for (e, b) in eta.iter().zip(&self.aff.basis) {
                v.axpy(*e, b);
            }
        }
        let wv = self.meas.coords_of(&v.coeffs);
        let corr: Vec<f64> = w.iter().zip(&wv).map(|(a, b)| a - b).collect();
        v.axpy(1.0, &self.meas.synthesize(&corr));
        Ok(v)
    }
}

pub fn pbdw_estimate(aff: &AffineSpace, meas: &MeasurementSpace, w: &[f64]) -> Result<FeFunction> {
    Pbdw::new(aff, meas)?.estimate(w)
}

/// Outcome of checking `||u* - u|| <= mu dist(u, U_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub mu: f64,
    /// Largest `||u* - u|| / (mu dist(u, U_n) + 1e-8 ||u||)`.
    pub worst_ratio: f64,
    pub all_hold: bool,
}

pub fn check_error_bound(
    aff: &AffineSpace,
    meas: &MeasurementSpace,
    space: &FeSpace,
    truth: &[FeFunction],
) -> Result<BoundReport> {
    let solver = Pbdw::new(aff, meas)?;
    let mode = meas.mode();
    let ratios: Vec<f64> = truth
        .par_iter()
        .map(|u| {
            let est = solver.estimate(&meas.coords_of(&u.coeffs))?;
            let mut d = est;
            d.axpy(-1.0, u);
            let err = space.norm(&d.coeffs, mode);
            let bound = solver.mu * aff.distance(space, u) + 1e-8 * space.norm(&u.coeffs, mode);
            Ok(if bound > 0.0 { err / bound } else if err == 0.0 { 0.0 } else { f64::INFINITY })
        })
        .collect::<Result<_>>()?;
    let worst_ratio = ratios.into_iter().fold(0.0, f64::max);
    Ok(BoundReport {
        mu: solver.mu,
        worst_ratio,
        all_hold: worst_ratio <= 1.0 + 1e-6,
    })
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub sensors: usize,
    pub method: String,
    pub n: usize,
    pub mu: f64,
    pub max_h1: f64,
    pub mean_h1: f64,
}

/// PBDW errors (absolute H1) on `truth` for each `n = 0..=n_max`, measured
/// through `w`. Infinite `mu` rows carry NaN errors.
pub fn scan_pbdw(
    full: &AffineSpace,
    meas: &MeasurementSpace,
    space: &FeSpace,
    w: &[Vec<f64>],
    truth: &[FeFunction],
) -> Vec<ComparisonRow> {
    (0..=full.n())
        .map(|n| {
            let aff = full.truncated(n);
            match Pbdw::new(&aff, meas) {
                Ok(solver) => {
                    let errs: Vec<f64> = w
                        .par_iter()
                        .zip(truth)
                        .map(|(wi, u)| {
                            let mut d = solver.estimate(wi).expect("dimensions checked");
                            d.axpy(-1.0, u);
                            space.norm(&d.coeffs, InnerProductMode::H1Seminorm)
                        })
                        .collect();
                    ComparisonRow {
                        sensors: meas.dim(),
                        method: "POD-PBDW".into(),
                        n,
                        mu: solver.mu,
                        max_h1: errs.iter().copied().fold(0.0, f64::max),
                        mean_h1: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
                    }
                }
                Err(_) => ComparisonRow {
                    sensors: meas.dim(),
                    method: "POD-PBDW".into(),
                    n,
                    mu: f64::INFINITY,
                    max_h1: f64::NAN,
                    mean_h1: f64::NAN,
                },
            }
        })
        .collect()
}

pub fn write_comparison<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["sensors", "method", "n", "mu", "max_h1", "mean_h1"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.sensors.to_string(),
            r.method.clone(),
            r.n.to_string(),
            r.mu.to_string(),
            r.max_h1.to_string(),
            r.mean_h1.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
