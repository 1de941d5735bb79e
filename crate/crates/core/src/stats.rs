//! GMM Anderson-Rubin (GMM-AR) and Kleibergen LM (KLM) statistics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{chi2_critical, chi2_sf};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::model::PanelData;
use crate::moments::{evaluate, MomentSet, MomentSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "GMM-AR")]
    GmmAr,
    #[serde(rename = "KLM")]
    Klm,
    #[serde(rename = "RobustAR")]
    RobustAr,
    #[serde(rename = "OptimalAR")]
    OptimalAr,
}

impl TestKind {
    pub fn label(&self) -> &'static str {
        match self {
            TestKind::GmmAr => "GMM-AR",
            TestKind::Klm => "KLM",
            TestKind::RobustAr => "RobustAR",
            TestKind::OptimalAr => "OptimalAR",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "gmmar" | "ar" => Ok(TestKind::GmmAr),
            "klm" => Ok(TestKind::Klm),
            "robustar" | "robust" => Ok(TestKind::RobustAr),
            "optimalar" | "optimal" => Ok(TestKind::OptimalAr),
            _ => Err(Error::Config(format!(
                "unknown test '{s}' (expected gmm-ar, klm, robust-ar, optimal-ar)"
            ))),
        }
    }
}

/// Result of testing `H0: θ = θ*` at level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub kind: TestKind,
    pub moments: MomentSet,
    pub theta_star: f64,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )))
    }
}

impl TestOutcome {
    /// Attaches the χ²(dof) p-value and decision to a statistic.
    pub fn from_statistic(
        kind: TestKind,
        moments: MomentSet,
        theta_star: f64,
        statistic: f64,
        dof: usize,
        alpha: f64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !statistic.is_finite() {
            return Err(Error::Inference(format!(
                "{kind} statistic is not finite at θ*={theta_star}"
            )));
        }
        let statistic = statistic.max(0.0);
        let critical = chi2_critical(alpha, dof)?;
        Ok(Self {
            kind,
            moments,
            theta_star,
            statistic,
            dof,
            p_value: chi2_sf(statistic, dof),
            alpha,
            reject: statistic > critical,
        })
    }
}

fn require_more_than_k(n: usize, k: usize) -> Result<()> {
    if n <= k {
        return Err(Error::DegenerateSample {
            needed: k + 1,
            got: n,
        });
    }
    Ok(())
}

/// `N f̄' V̂_ff⁻¹ f̄`.
pub fn gmm_ar_statistic(s: &MomentSummary) -> Result<f64> {
    require_more_than_k(s.n, s.f_bar.len())?;
    let v = SpdFactor::new(&s.v_ff)?;
    Ok(s.n as f64 * v.quad_form(&s.f_bar))
}

fn d_hat_with(s: &MomentSummary, v: &SpdFactor) -> DVector<f64> {
    &s.q_bar - &s.v_qf * v.solve(&s.f_bar)
}

/// `D̂ = q̄ − V̂_qf V̂_ff⁻¹ f̄`: the Jacobian estimate made independent of `f̄`.
pub fn d_hat_from_summary(s: &MomentSummary) -> Result<DVector<f64>> {
    let v = SpdFactor::new(&s.v_ff)?;
    Ok(d_hat_with(s, &v))
}

/// `N (f̄'V̂⁻¹D̂)² / (D̂'V̂⁻¹D̂)`.
pub fn klm_statistic(s: &MomentSummary) -> Result<f64> {
    require_more_than_k(s.n, s.f_bar.len())?;
    let v = SpdFactor::new(&s.v_ff)?;
    let d = d_hat_with(s, &v);
    let vinv_d = v.solve(&d);
    let denom = d.dot(&vinv_d);
    if !(denom > 1e-14 * s.q_bar.norm_squared()) {
        return Err(Error::RankDeficient { value: denom });
    }
    let num = s.f_bar.dot(&vinv_d);
    Ok(s.n as f64 * num * num / denom)
}

pub fn gmm_ar(
    set: MomentSet,
    panel: &PanelData,
    theta_star: f64,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let s = evaluate(set, panel, theta_star)?.summary()?;
    let stat = gmm_ar_statistic(&s)?;
    TestOutcome::from_statistic(TestKind::GmmAr, set, theta_star, stat, s.f_bar.len(), alpha)
}

pub fn d_hat(set: MomentSet, panel: &PanelData, theta_star: f64) -> Result<DVector<f64>> {
    let s = evaluate(set, panel, theta_star)?.summary()?;
    d_hat_from_summary(&s)
}

pub fn klm(set: MomentSet, panel: &PanelData, theta_star: f64, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let s = evaluate(set, panel, theta_star)?.summary()?;
    let stat = klm_statistic(&s)?;
    TestOutcome::from_statistic(TestKind::Klm, set, theta_star, stat, 1, alpha)
}

/// Applies a fixed linear map `m` to every moment: `f ↦ m f`, `q ↦ m q`.
pub fn transform_summary(s: &MomentSummary, m: &DMatrix<f64>) -> MomentSummary {
    MomentSummary {
        n: s.n,
        theta: s.theta,
        f_bar: m * &s.f_bar,
        q_bar: m * &s.q_bar,
        v_ff: m * &s.v_ff * m.transpose(),
        v_qf: m * &s.v_qf * m.transpose(),
    }
}
