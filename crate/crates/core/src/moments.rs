//! Per-individual moment functions `f_i(θ)` and their derivatives `q_i(θ)`
//! for the difference (Dif), level (Lev), Ahn-Schmidt nonlinear (NL),
//! Dif+NL (AS) and Dif+Lev (Sys) moment conditions.
//!
//! Every moment function is a polynomial of degree at most two in `θ`:
//! `f_i(θ) = c0_i + θ c1_i + θ² c2_i`. [`MomentProfile`] exploits this to
//! evaluate sample moments and Eicker-White covariances at any `θ` in time
//! independent of `N`; [`evaluate`] is the direct, per-individual route.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PanelData;

/// Which moment conditions to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentSet {
    Dif,
    Lev,
    Nl,
    As,
    Sys,
}

impl MomentSet {
    pub const ALL: [MomentSet; 5] = [
        MomentSet::Dif,
        MomentSet::Lev,
        MomentSet::Nl,
        MomentSet::As,
        MomentSet::Sys,
    ];

    /// Lower-case identifier used on the command line and in output files.
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentSet::Dif => "dif",
            MomentSet::Lev => "lev",
            MomentSet::Nl => "nl",
            MomentSet::As => "as",
            MomentSet::Sys => "sys",
        }
    }

    /// Display label, e.g. `Sys`.
    pub fn label(&self) -> &'static str {
        match self {
            MomentSet::Dif => "Dif",
            MomentSet::Lev => "Lev",
            MomentSet::Nl => "NL",
            MomentSet::As => "AS",
            MomentSet::Sys => "Sys",
        }
    }

    /// Whether the moments are affine in `θ` (so `q_i` does not depend on `θ`).
    pub fn is_affine(&self) -> bool {
        matches!(self, MomentSet::Dif | MomentSet::Lev | MomentSet::Sys)
    }

    pub fn min_periods(&self) -> usize {
        match self {
            MomentSet::Nl | MomentSet::As => 4,
            _ => 3,
        }
    }
}

impl fmt::Display for MomentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MomentSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dif" => Ok(MomentSet::Dif),
            "lev" => Ok(MomentSet::Lev),
            "nl" => Ok(MomentSet::Nl),
            "as" => Ok(MomentSet::As),
            "sys" => Ok(MomentSet::Sys),
            other => Err(Error::Config(format!("unknown moment set '{other}'"))),
        }
    }
}

/// Number of moment conditions of `set` for `t` periods.
pub fn k_dim(set: MomentSet, t: usize) -> Result<usize> {
    if t < set.min_periods() {
        return Err(Error::Dimension(format!(
            "{set} moments need T >= {}, got T={t}",
            set.min_periods()
        )));
    }
    let dif = (t - 1) * (t - 2) / 2;
    Ok(match set {
        MomentSet::Dif => dif,
        MomentSet::Lev => t - 2,
        MomentSet::Nl => t - 3,
        MomentSet::As => dif + t - 3,
        MomentSet::Sys => (t + 1) * (t - 2) / 2,
    })
}

// Periods are 1-based in the formulas: y(s) = y_is, dy(s) = Δy_is = y_is - y_{i,s-1}.
#[inline]
fn lvl(row: &[f64], s: usize) -> f64 {
    row[s - 1]
}

#[inline]
fn dlt(row: &[f64], s: usize) -> f64 {
    row[s - 1] - row[s - 2]
}

fn push_dif(row: &[f64], theta: f64, f: &mut Vec<f64>, q: &mut Vec<f64>) {
    let t_len = row.len();
    for t in 3..=t_len {
        let resid = dlt(row, t) - theta * dlt(row, t - 1);
        for j in 1..=t - 2 {
            f.push(lvl(row, j) * resid);
            q.push(-lvl(row, j) * dlt(row, t - 1));
        }
    }
}

fn push_lev(row: &[f64], theta: f64, f: &mut Vec<f64>, q: &mut Vec<f64>) {
    for t in 3..=row.len() {
        let inst = dlt(row, t - 1);
        f.push(inst * (lvl(row, t) - theta * lvl(row, t - 1)));
        q.push(-inst * lvl(row, t - 1));
    }
}

fn push_nl(row: &[f64], theta: f64, f: &mut Vec<f64>, q: &mut Vec<f64>) {
    for t in 4..=row.len() {
        let diff_part = dlt(row, t - 1) - theta * dlt(row, t - 2);
        let level_part = lvl(row, t) - theta * lvl(row, t - 1);
        f.push(diff_part * level_part);
        q.push(-dlt(row, t - 2) * level_part - diff_part * lvl(row, t - 1));
    }
}

/// Moment vector `f_i(θ)` and derivative `q_i(θ)` for one individual.
///
/// Dif moments are ordered with the outer loop over `t = 3..T` and the inner
/// loop over the instrument lag `j = 1..t-2`. AS and Sys place the Dif block
/// first.
pub fn moments_individual(set: MomentSet, row: &[f64], theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = k_dim(set, row.len())?;
    let mut f = Vec::with_capacity(k);
    let mut q = Vec::with_capacity(k);
    match set {
        MomentSet::Dif => push_dif(row, theta, &mut f, &mut q),
        MomentSet::Lev => push_lev(row, theta, &mut f, &mut q),
        MomentSet::Nl => push_nl(row, theta, &mut f, &mut q),
        MomentSet::As => {
            push_dif(row, theta, &mut f, &mut q);
            push_nl(row, theta, &mut f, &mut q);
        }
        MomentSet::Sys => {
            push_dif(row, theta, &mut f, &mut q);
            push_lev(row, theta, &mut f, &mut q);
        }
    }
    debug_assert_eq!(f.len(), k);
    Ok((f, q))
}

/// Polynomial coefficients `(c0, c1, c2)` of `f_i(θ) = c0 + θ c1 + θ² c2`.
pub fn moment_coefficients(set: MomentSet, row: &[f64]) -> Result<[Vec<f64>; 3]> {
    let k = k_dim(set, row.len())?;
    let mut c = [
        Vec::with_capacity(k),
        Vec::with_capacity(k),
        Vec::with_capacity(k),
    ];
    let dif = |c: &mut [Vec<f64>; 3]| {
        for t in 3..=row.len() {
            for j in 1..=t - 2 {
                c[0].push(lvl(row, j) * dlt(row, t));
                c[1].push(-lvl(row, j) * dlt(row, t - 1));
                c[2].push(0.0);
            }
        }
    };
    let lev = |c: &mut [Vec<f64>; 3]| {
        for t in 3..=row.len() {
            c[0].push(dlt(row, t - 1) * lvl(row, t));
            c[1].push(-dlt(row, t - 1) * lvl(row, t - 1));
            c[2].push(0.0);
        }
    };
    let nl = |c: &mut [Vec<f64>; 3]| {
        for t in 4..=row.len() {
            c[0].push(dlt(row, t - 1) * lvl(row, t));
            c[1].push(-(dlt(row, t - 2) * lvl(row, t) + dlt(row, t - 1) * lvl(row, t - 1)));
            c[2].push(dlt(row, t - 2) * lvl(row, t - 1));
        }
    };
    match set {
        MomentSet::Dif => dif(&mut c),
        MomentSet::Lev => lev(&mut c),
        MomentSet::Nl => nl(&mut c),
        MomentSet::As => {
            dif(&mut c);
            nl(&mut c);
        }
        MomentSet::Sys => {
            dif(&mut c);
            lev(&mut c);
        }
    }
    Ok(c)
}

/// Per-individual moments and derivatives at one `θ`, with sample means.
#[derive(Debug, Clone)]
pub struct MomentEval {
    pub set: MomentSet,
    pub theta: f64,
    pub k: usize,
    /// Row `i` is `f_i(θ)'`.
    pub f_individual: DMatrix<f64>,
    /// Row `i` is `q_i(θ)'`.
    pub q_individual: DMatrix<f64>,
    pub f_bar: DVector<f64>,
    pub q_bar: DVector<f64>,
}

impl MomentEval {
    pub fn n(&self) -> usize {
        self.f_individual.nrows()
    }

    /// Sample moments and covariances needed by the test statistics.
    pub fn summary(&self) -> Result<MomentSummary> {
        Ok(MomentSummary {
            n: self.n(),
            theta: self.theta,
            f_bar: self.f_bar.clone(),
            q_bar: self.q_bar.clone(),
            v_ff: covariance_ff(self)?,
            v_qf: covariance_qf(self)?,
        })
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|c| c.iter().sum::<f64>() / n),
    )
}

/// Evaluates `f_i(θ)` and `q_i(θ)` for every individual.
pub fn evaluate(set: MomentSet, panel: &PanelData, theta: f64) -> Result<MomentEval> {
    let k = k_dim(set, panel.n_periods())?;
    let n = panel.n_individuals();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| moments_individual(set, panel.row(i), theta))
        .collect::<Result<_>>()?;
    let f_individual = DMatrix::from_fn(n, k, |i, j| rows[i].0[j]);
    let q_individual = DMatrix::from_fn(n, k, |i, j| rows[i].1[j]);
    let f_bar = column_means(&f_individual);
    let q_bar = column_means(&q_individual);
    Ok(MomentEval {
        set,
        theta,
        k,
        f_individual,
        q_individual,
        f_bar,
        q_bar,
    })
}

/// `(1/N) Σ (x_i - x̄)(y_i - ȳ)'` for row-stacked observations.
pub fn cross_covariance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateSample { needed: 2, got: n });
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    Ok(xc.transpose() * yc / n as f64)
}

fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(m);
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Eicker-White covariance `V̂_ff(θ)`.
pub fn covariance_ff(eval: &MomentEval) -> Result<DMatrix<f64>> {
    let v = cross_covariance(&eval.f_individual, &eval.f_individual)?;
    Ok(symmetrize(v))
}

/// `V̂_qf(θ) = (1/N) Σ (q_i - q̄)(f_i - f̄)'`.
pub fn covariance_qf(eval: &MomentEval) -> Result<DMatrix<f64>> {
    cross_covariance(&eval.q_individual, &eval.f_individual)
}

/// `V̂_fq(θ)`, the transpose of [`covariance_qf`].
pub fn covariance_fq(eval: &MomentEval) -> Result<DMatrix<f64>> {
    cross_covariance(&eval.f_individual, &eval.q_individual)
}

pub(crate) fn symmetrize(mut v: DMatrix<f64>) -> DMatrix<f64> {
    let k = v.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = 0.5 * (v[(i, j)] + v[(j, i)]);
            v[(i, j)] = avg;
            v[(j, i)] = avg;
        }
    }
    v
}

/// The ingredients of the GMM-AR and KLM statistics at one `θ`.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub n: usize,
    pub theta: f64,
    pub f_bar: DVector<f64>,
    pub q_bar: DVector<f64>,
    pub v_ff: DMatrix<f64>,
    pub v_qf: DMatrix<f64>,
}

/// Sufficient statistics of a panel for one moment set: means and centered
/// cross-moments of the polynomial coefficients of `f_i(θ)`.
#[derive(Debug, Clone)]
pub struct MomentProfile {
    pub set: MomentSet,
    n: usize,
    k: usize,
    degree: usize,
    means: [DVector<f64>; 3],
    // cov[a][b] = (1/N) Σ (c_a,i - c̄_a)(c_b,i - c̄_b)'
    cov: Vec<Vec<DMatrix<f64>>>,
}

impl MomentProfile {
    pub fn new(set: MomentSet, panel: &PanelData) -> Result<Self> {
        let k = k_dim(set, panel.n_periods())?;
        let n = panel.n_individuals();
        if n < 2 {
            return Err(Error::DegenerateSample { needed: 2, got: n });
        }
        let degree = if set.is_affine() { 1 } else { 2 };
        let width = (degree + 1) * k;
        let mut stacked = DMatrix::<f64>::zeros(n, width);
        for (i, row) in panel.rows().enumerate() {
            let c = moment_coefficients(set, row)?;
            for (a, coeffs) in c.iter().enumerate().take(degree + 1) {
                for (j, v) in coeffs.iter().enumerate() {
                    stacked[(i, a * k + j)] = *v;
                }
            }
        }
        let means_all = column_means(&stacked);
        let centered = center_columns(&stacked);
        let full = centered.transpose() * &centered / n as f64;
        let mut means = [DVector::zeros(k), DVector::zeros(k), DVector::zeros(k)];
        for (a, m) in means.iter_mut().enumerate().take(degree + 1) {
            *m = means_all.rows(a * k, k).into_owned();
        }
        let cov = (0..=degree)
            .map(|a| {
                (0..=degree)
                    .map(|b| full.view((a * k, b * k), (k, k)).into_owned())
                    .collect()
            })
            .collect();
        Ok(Self {
            set,
            n,
            k,
            degree,
            means,
            cov,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn f_bar(&self, theta: f64) -> DVector<f64> {
        let mut f = self.means[0].clone();
        f.axpy(theta, &self.means[1], 1.0);
        if self.degree == 2 {
            f.axpy(theta * theta, &self.means[2], 1.0);
        }
        f
    }

    pub fn q_bar(&self, theta: f64) -> DVector<f64> {
        let mut q = self.means[1].clone();
        if self.degree == 2 {
            q.axpy(2.0 * theta, &self.means[2], 1.0);
        }
        q
    }

    pub fn at(&self, theta: f64) -> MomentSummary {
        let k = self.k;
        let fw: Vec<f64> = (0..=self.degree).map(|a| theta.powi(a as i32)).collect();
        // q_i - q̄ = (c1 - c̄1) + 2θ (c2 - c̄2): weights on coefficient blocks 1, 2
        let qw: Vec<f64> = (0..=self.degree)
            .map(|a| match a {
                0 => 0.0,
                1 => 1.0,
                _ => 2.0 * theta,
            })
            .collect();
        let mut v_ff = DMatrix::zeros(k, k);
        let mut v_qf = DMatrix::zeros(k, k);
        for a in 0..=self.degree {
            for b in 0..=self.degree {
                v_ff += &self.cov[a][b] * (fw[a] * fw[b]);
                if qw[a] != 0.0 {
                    v_qf += &self.cov[a][b] * (qw[a] * fw[b]);
                }
            }
        }
        MomentSummary {
            n: self.n,
            theta,
            f_bar: self.f_bar(theta),
            q_bar: self.q_bar(theta),
            v_ff: symmetrize(v_ff),
            v_qf,
        }
    }
}
