//! The estimator `u ~ Phi^T w + Psi^T NN(w)` and its error metrics.

use crate::error::{Error, Result};
use crate::fem::{FeFunction, FeSpace, InnerProductMode};
use crate::reduction::ComplementBasis;
use crate::resnet::ResNetParams;
use crate::sensing::MeasurementSpace;
use rayon::prelude::*;
use std::io::Write;

/// Measurement space, complement basis and lifting network, bundled.
#[derive(Debug, Clone, Copy)]
pub struct Estimator<'a> {
    pub space: &'a FeSpace,
    pub meas: &'a MeasurementSpace,
    pub basis: &'a ComplementBasis,
    pub net: &'a ResNetParams,
}

impl<'a> Estimator<'a> {
    pub fn new(
        space: &'a FeSpace,
        meas: &'a MeasurementSpace,
        basis: &'a ComplementBasis,
        net: &'a ResNetParams,
    ) -> Result<Self> {
        if net.input_dim() != meas.dim() || net.output_dim() != basis.k() {
            return Err(Error::ShapeMismatch(format!(
                "network maps R^{} -> R^{}, but there are {} sensors and {} complement modes",
                net.input_dim(),
                net.output_dim(),
                meas.dim(),
                basis.k()
            )));
        }
        Ok(Self { space, meas, basis, net })
    }

    /// `NN(w)` for many coordinate vectors at once.
    pub fn predict_coeffs(&self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let flat: Vec<f64> = w.concat();
        let out = self.net.forward_batch(&flat)?;
        Ok(out.chunks(self.basis.k().max(1)).map(<[f64]>::to_vec).collect())
    }

    /// `Phi^T w + Psi^T NN(w)`
    pub fn state_from_coords(&self, w: &[f64]) -> Result<FeFunction> {
        let c = self.net.forward(w)?;
        Ok(self.assemble(w, &c))
    }

    fn assemble(&self, w: &[f64], c: &[f64]) -> FeFunction {
        let mut u = self.meas.synthesize(w);
        u.axpy(1.0, &self.basis.synthesize(c));
        u
    }

    /// State estimate from raw sensor readings `o`: `w = C o` first.
    pub fn predict_state(&self, o: &[f64]) -> Result<FeFunction> {
        if o.len() != self.meas.dim() || o.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("observations must be finite and one per sensor".into()));
        }
        self.state_from_coords(&self.meas.measure_coords(o))
    }

    /// State estimates for many coordinate vectors.
    pub fn predict_states(&self, w: &[Vec<f64>]) -> Result<Vec<FeFunction>> {
        let c = self.predict_coeffs(w)?;
        Ok(w.par_iter().zip(&c).map(|(wi, ci)| self.assemble(wi, ci)).collect())
    }
}

/// `(sum ||c - c_pred||^2 / sum (||w||^2 + ||c||^2))^{1/2}`
pub fn ehat(w: &[Vec<f64>], c: &[Vec<f64>], c_pred: &[Vec<f64>]) -> Result<f64> {
    if w.is_empty() || w.len() != c.len() || c.len() != c_pred.len() {
        return Err(Error::UndefinedMetric("needs a nonempty set of matching (w, c) pairs".into()));
    }
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let num: f64 = c
        .iter()
        .zip(c_pred)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum();
    let den: f64 = w.iter().zip(c).map(|(a, b)| sq(a) + sq(b)).sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("all evaluation pairs are zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Empirical relative coefficient error on `(w, c)` pairs.
pub fn metric_ehat(est: &Estimator, w: &[Vec<f64>], c: &[Vec<f64>]) -> Result<f64> {
    let pred = est.predict_coeffs(w)?;
    ehat(w, c, &pred)
}

/// Norm used for state errors: `L2` (mass) or `H1` (a = 1 stiffness).
pub type NormKind = InnerProductMode;

/// `(sum ||u - u_pred||^2 / sum ||u||^2)^{1/2}`
pub fn relative_error(space: &FeSpace, truth: &[FeFunction], pred: &[FeFunction], norm: NormKind) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::UndefinedMetric("needs a nonempty set of matching states".into()));
    }
    let (num, den) = truth
        .par_iter()
        .zip(pred)
        .map(|(u, p)| {
            let d: Vec<f64> = u.coeffs.iter().zip(&p.coeffs).map(|(a, b)| a - b).collect();
            (space.inner(&d, &d, norm), space.inner(&u.coeffs, &u.coeffs, norm))
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if den == 0.0 {
        return Err(Error::UndefinedMetric("all truth states vanish".into()));
    }
    Ok((num / den).sqrt())
}

/// Per-sample absolute errors `||u - u_pred||`.
pub fn absolute_errors(space: &FeSpace, truth: &[FeFunction], pred: &[FeFunction], norm: NormKind) -> Vec<f64> {
    truth
        .par_iter()
        .zip(pred)
        .map(|(u, p)| {
            let d: Vec<f64> = u.coeffs.iter().zip(&p.coeffs).map(|(a, b)| a - b).collect();
            space.norm(&d, norm)
        })
        .collect()
}

pub fn metric_relative_u(est: &Estimator, w: &[Vec<f64>], truth: &[FeFunction], norm: NormKind) -> Result<f64> {
    relative_error(est.space, truth, &est.predict_states(w)?, norm)
}

/// Largest absolute H1 error over the evaluation set.
pub fn metric_max_h1(est: &Estimator, w: &[Vec<f64>], truth: &[FeFunction]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("empty evaluation set".into()));
    }
    let pred = est.predict_states(w)?;
    Ok(absolute_errors(est.space, truth, &pred, InnerProductMode::H1Seminorm)
        .into_iter()
        .fold(0.0, f64::max))
}

/// All metrics on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub ehat: f64,
    pub rel_l2: f64,
    pub rel_h1: f64,
    pub max_h1: f64,
}

pub fn evaluate(est: &Estimator, w: &[Vec<f64>], c: &[Vec<f64>], truth: &[FeFunction]) -> Result<EvalReport> {
    let cp = est.predict_coeffs(w)?;
    let pred: Vec<FeFunction> = w.par_iter().zip(&cp).map(|(wi, ci)| est.assemble(wi, ci)).collect();
    let h1 = absolute_errors(est.space, truth, &pred, InnerProductMode::H1Seminorm);
    Ok(EvalReport {
        ehat: ehat(w, c, &cp)?,
        rel_l2: relative_error(est.space, truth, &pred, InnerProductMode::L2)?,
        rel_h1: relative_error(est.space, truth, &pred, InnerProductMode::H1Seminorm)?,
        max_h1: h1.into_iter().fold(0.0, f64::max),
    })
}

/// One row of an error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub blocks: usize,
    pub width: usize,
    pub trainables: usize,
    pub scheme: String,
    pub ehat: f64,
    pub rel_l2: f64,
    pub rel_h1: f64,
}

pub fn write_error_table<W: Write>(rows: &[ErrorRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["B", "W", "trainables", "scheme", "ehat", "rel_l2", "rel_h1"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.blocks.to_string(),
            r.width.to_string(),
            r.trainables.to_string(),
            r.scheme.clone(),
            r.ehat.to_string(),
            r.rel_l2.to_string(),
            r.rel_h1.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
