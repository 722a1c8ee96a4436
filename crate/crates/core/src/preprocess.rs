//! Coherency-to-response preprocessing `p(Ψ)` and its error term.

use nalgebra::SVD;
use rayon::prelude::*;

use crate::dataset::{ArrayDataSet, DataKind};
use crate::em::dyadic_green;
use crate::error::{Error, Result};
use crate::linalg::{cond2, Basis32, CMat2};

/// Above this condition number `G̃*` is inverted by truncated SVD.
pub const REGULARIZE_ABOVE: f64 = 1e8;
/// Relative singular-value cutoff of the truncated inverse.
pub const TRUNCATION: f64 = 1e-8;
/// `J̃_s` must be better conditioned than this.
pub const SOURCE_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessReport {
    /// Worst condition number of `G̃` over the band, per receiver.
    pub conditions: Vec<f64>,
    /// Receivers where the truncated inverse was used.
    pub regularized: Vec<usize>,
    pub threshold: f64,
}

impl PreprocessReport {
    pub fn summary(&self) -> String {
        let worst = self.conditions.iter().copied().fold(1.0, f64::max);
        format!(
            "receivers: {}\nworst cond(G~): {:.6e}\nregularization threshold: {:.1e}\nregularized receivers: {}\n",
            self.conditions.len(),
            worst,
            self.threshold,
            self.regularized.len()
        )
    }
}

/// Inverse of `G̃*`, truncated when `G̃` is nearly singular.
#[derive(Debug, Clone, Copy)]
pub struct AdjointInverse {
    pub matrix: CMat2,
    pub cond: f64,
    pub regularized: bool,
}

pub fn inverse_adjoint(g: &CMat2) -> AdjointInverse {
    let cond = cond2(g);
    let ga = g.adjoint();
    if cond <= REGULARIZE_ABOVE {
        if let Some(matrix) = ga.try_inverse() {
            return AdjointInverse {
                matrix,
                cond,
                regularized: false,
            };
        }
    }
    let svd = SVD::new(ga, true, true);
    let smax = svd.singular_values.max();
    let matrix = svd
        .pseudo_inverse(TRUNCATION * smax)
        .unwrap_or_else(|_| CMat2::zeros());
    AdjointInverse {
        matrix,
        cond,
        regularized: true,
    }
}

fn source_inverse(j: &CMat2) -> Result<CMat2> {
    let cond = cond2(j);
    if !(cond < SOURCE_COND_LIMIT) {
        return Err(Error::Singular {
            what: "source coherency".into(),
            cond,
        });
    }
    j.try_inverse().ok_or(Error::Singular {
        what: "source coherency".into(),
        cond,
    })
}

/// Per-frequency quantities shared by all receivers.
struct Frame {
    jinv: Vec<CMat2>,
    js: Vec<CMat2>,
    us: Basis32,
}

impl Frame {
    fn new(ds: &ArrayDataSet) -> Result<Self> {
        let src = &ds.meta.source;
        let js = ds
            .meta
            .band
            .omegas()
            .iter()
            .map(|&w| src.coherency_at(w))
            .collect::<Result<Vec<_>>>()?;
        let jinv = js.iter().map(source_inverse).collect::<Result<Vec<_>>>()?;
        Ok(Frame {
            jinv,
            js,
            us: src.basis()?,
        })
    }

    fn gtilde(&self, ds: &ArrayDataSet, r: usize, f: usize) -> Result<CMat2> {
        let g = ds.meta.array.receiver_at(r);
        let k = ds.meta.band.wavenumber(f)?;
        Ok(Basis32::cross_range()
            .compress(&dyadic_green(&g, &ds.meta.source.position, k)?, &self.us))
    }
}

/// Applies `p(Ψ) = U∥[Ψ − G̃J̃G̃*]G̃^{−*}J̃^{−1}U_s*` to every entry.
pub fn preprocess(ds: &ArrayDataSet) -> Result<(ArrayDataSet, PreprocessReport)> {
    if ds.kind != DataKind::Coherency2x2 {
        return Err(Error::invalid(format!(
            "preprocessing needs coherency data, got {:?}",
            ds.kind
        )));
    }
    let frame = Frame::new(ds)?;
    let up = Basis32::cross_range();
    let per_receiver = (0..ds.receivers())
        .into_par_iter()
        .map(|r| {
            let mut block = Vec::with_capacity(ds.freqs() * 9);
            let (mut worst, mut flagged) = (1.0f64, false);
            for f in 0..ds.freqs() {
                let g = frame.gtilde(ds, r, f)?;
                let inv = inverse_adjoint(&g);
                worst = worst.max(inv.cond);
                flagged |= inv.regularized;
                let j = &frame.js[f];
                let m = (ds.mat2(r, f) - g * j * g.adjoint()) * inv.matrix * frame.jinv[f];
                block.extend_from_slice(up.expand(&m, &frame.us).transpose().as_slice());
            }
            Ok((block, worst, flagged))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::with_capacity(per_receiver.len());
    let mut report = PreprocessReport {
        conditions: vec![],
        regularized: vec![],
        threshold: REGULARIZE_ABOVE,
    };
    for (r, (b, c, flag)) in per_receiver.into_iter().enumerate() {
        blocks.push(b);
        report.conditions.push(c);
        if flag {
            report.regularized.push(r);
        }
    }
    let out = ArrayDataSet::from_blocks(DataKind::Preprocessed3x3, ds.meta.clone(), blocks)?;
    Ok((out, report))
}

/// Error of the preprocessing, `q = U∥[G̃J̃Π̃* + Π̃J̃Π̃*]G̃^{−*}J̃^{−1}U_s*`,
/// evaluated from the true response.
pub fn expected_error(resp: &ArrayDataSet) -> Result<ArrayDataSet> {
    map_response(resp, |frame, g, p, f| {
        let inv = inverse_adjoint(g);
        let j = &frame.js[f];
        (g * j * p.adjoint() + p * j * p.adjoint()) * inv.matrix * frame.jinv[f]
    })
}

/// `U∥Π̃U_s* = P∥ Π P_s`, the response the preprocessing aims at.
pub fn projected_response(resp: &ArrayDataSet) -> Result<ArrayDataSet> {
    map_response(resp, |_, _, p, _| *p)
}

fn map_response(
    resp: &ArrayDataSet,
    op: impl Fn(&Frame, &CMat2, &CMat2, usize) -> CMat2 + Sync,
) -> Result<ArrayDataSet> {
    if resp.kind != DataKind::Response3x3 {
        return Err(Error::invalid(format!(
            "expected response data, got {:?}",
            resp.kind
        )));
    }
    let frame = Frame::new(resp)?;
    let up = Basis32::cross_range();
    let blocks = (0..resp.receivers())
        .into_par_iter()
        .map(|r| {
            let mut block = Vec::with_capacity(resp.freqs() * 9);
            for f in 0..resp.freqs() {
                let g = frame.gtilde(resp, r, f)?;
                let p = up.compress(&resp.mat3(r, f), &frame.us);
                let m = op(&frame, &g, &p, f);
                block.extend_from_slice(up.expand(&m, &frame.us).transpose().as_slice());
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    ArrayDataSet::from_blocks(DataKind::Preprocessed3x3, resp.meta.clone(), blocks)
}

/// Largest `cond(G̃)` over a band for a single receiver position.
pub fn worst_condition(ds: &ArrayDataSet, r: usize) -> Result<f64> {
    let frame = Frame::new(ds)?;
    (0..ds.freqs()).try_fold(
        1.0f64,
        |acc, f| Ok(acc.max(cond2(&frame.gtilde(ds, r, f)?))),
    )
}
