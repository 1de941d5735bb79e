//! Moments that stay informative near the unit root.
//!
//! Near `θ = 1` the sample moments behave like `A_f(θ) ψ + μ_f(θ)` where `ψ`
//! collects the (possibly huge) initial-condition terms. Premultiplying by an
//! orthogonal complement `A_⊥(θ) = (G_f(θ) ⋮ G_2)` removes `ψ` and leaves
//! robust moments `g(θ) = A_⊥(θ)' f̄(θ) = a θ² + b θ + d`.
//!
//! Closed forms exist for `T ∈ {4, 5}` and the AS and Sys moment sets. The
//! robust coordinates are ordered `G_f` columns first, then `G_2` columns.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::model::PanelData;
use crate::moments::{cross_covariance, k_dim, symmetrize, MomentSet};
use crate::stats::{check_alpha, TestKind, TestOutcome};

fn check_periods(t: usize) -> Result<()> {
    if (3..=5).contains(&t) {
        Ok(())
    } else {
        Err(Error::UnsupportedPeriods(t))
    }
}

/// Matrices of the representation `f̄(θ) ≈ A_f(θ) ψ + μ_f(θ, σ̄²)` and of its
/// derivative `q̄(θ) ≈ A_q(θ) ψ + μ_q(θ, σ̄²)`. Columns index `ψ_2, …, ψ_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprMatrices {
    pub set: MomentSet,
    pub t: usize,
    pub theta: f64,
    /// `(σ_2², …, σ_T²)`.
    pub sigma_sq: Vec<f64>,
    pub a_f: DMatrix<f64>,
    pub a_q: DMatrix<f64>,
    pub mu_f: DVector<f64>,
    pub mu_q: DVector<f64>,
}

struct ReprRow {
    a_f: Vec<(usize, f64)>,
    a_q: Vec<(usize, f64)>,
    mu_f: f64,
    mu_q: f64,
}

pub fn repr_matrices(
    set: MomentSet,
    t: usize,
    theta: f64,
    sigma_sq: &[f64],
) -> Result<ReprMatrices> {
    check_periods(t)?;
    let k = k_dim(set, t)?;
    if sigma_sq.len() != t - 1 {
        return Err(Error::Dimension(format!(
            "expected {} variances (σ_2² … σ_T²), got {}",
            t - 1,
            sigma_sq.len()
        )));
    }
    // column / variance index of period s
    let col = |s: usize| s - 2;
    let s2 = |s: usize| sigma_sq[s - 2];

    let dif = |tt: usize| ReprRow {
        a_f: vec![(col(tt - 1), -theta), (col(tt), 1.0)],
        a_q: vec![(col(tt - 1), -1.0)],
        mu_f: 0.0,
        mu_q: 0.0,
    };
    let lev = |tt: usize| ReprRow {
        a_f: vec![(col(tt - 1), 1.0 - theta)],
        a_q: vec![(col(tt - 1), -1.0)],
        mu_f: (1.0 - theta) * s2(tt - 1),
        mu_q: -s2(tt - 1),
    };
    let nl = |tt: usize| ReprRow {
        a_f: vec![
            (col(tt - 2), theta * (theta - 1.0)),
            (col(tt - 1), 1.0 - theta),
        ],
        a_q: vec![(col(tt - 2), 2.0 * theta - 1.0), (col(tt - 1), -1.0)],
        mu_f: (1.0 - theta) * (s2(tt - 1) - theta * s2(tt - 2)),
        mu_q: (2.0 * theta - 1.0) * s2(tt - 2) - s2(tt - 1),
    };

    let mut rows = Vec::with_capacity(k);
    if matches!(set, MomentSet::Dif | MomentSet::As | MomentSet::Sys) {
        for tt in 3..=t {
            for _ in 1..=tt - 2 {
                rows.push(dif(tt));
            }
        }
    }
    if matches!(set, MomentSet::Lev | MomentSet::Sys) {
        rows.extend((3..=t).map(lev));
    }
    if matches!(set, MomentSet::Nl | MomentSet::As) {
        rows.extend((4..=t).map(nl));
    }
    debug_assert_eq!(rows.len(), k);

    let mut a_f = DMatrix::zeros(k, t - 1);
    let mut a_q = DMatrix::zeros(k, t - 1);
    for (i, r) in rows.iter().enumerate() {
        for &(j, v) in &r.a_f {
            a_f[(i, j)] += v;
        }
        for &(j, v) in &r.a_q {
            a_q[(i, j)] += v;
        }
    }
    Ok(ReprMatrices {
        set,
        t,
        theta,
        sigma_sq: sigma_sq.to_vec(),
        a_f,
        a_q,
        mu_f: DVector::from_iterator(k, rows.iter().map(|r| r.mu_f)),
        mu_q: DVector::from_iterator(k, rows.iter().map(|r| r.mu_q)),
    })
}

/// `A_⊥(θ) = (G_f(θ) ⋮ G_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoComplement {
    pub set: MomentSet,
    pub t: usize,
    pub theta: f64,
    pub g_f: DMatrix<f64>,
    pub g_2: DMatrix<f64>,
    pub p: usize,
    pub p_max: usize,
}

impl OrthoComplement {
    pub fn full(&self) -> DMatrix<f64> {
        let k = self.g_f.nrows();
        let mut m = DMatrix::zeros(k, self.p_max);
        m.view_mut((0, 0), (k, self.p)).copy_from(&self.g_f);
        m.view_mut((0, self.p), (k, self.p_max - self.p))
            .copy_from(&self.g_2);
        m
    }
}

/// `(p, p_max)`: number of θ-dependent and total robust moments.
pub fn robust_dims(t: usize) -> Result<(usize, usize)> {
    match t {
        4 => Ok((1, 2)),
        5 => Ok((3, 5)),
        _ => Err(Error::UnsupportedPeriods(t)),
    }
}

fn check_robust_request(set: MomentSet, t: usize) -> Result<()> {
    if !(3..=5).contains(&t) {
        return Err(Error::UnsupportedPeriods(t));
    }
    if !matches!(set, MomentSet::As | MomentSet::Sys) || t == 3 {
        return Err(Error::NoOrthogonalComplement { set, t });
    }
    Ok(())
}

pub fn ortho_complement(set: MomentSet, t: usize, theta: f64) -> Result<OrthoComplement> {
    check_robust_request(set, t)?;
    let (p, p_max) = robust_dims(t)?;
    let k = k_dim(set, t)?;
    let sys = set == MomentSet::Sys;
    let mut g_f = DMatrix::zeros(k, p);
    let mut g_2 = DMatrix::zeros(k, p_max - p);
    // 1-based (row, column, value)
    let put = |m: &mut DMatrix<f64>, r: usize, c: usize, v: f64| m[(r - 1, c - 1)] = v;
    let lag = -(1.0 - theta);
    if t == 4 {
        put(&mut g_f, 1, 1, lag);
        if sys {
            put(&mut g_f, 4, 1, -theta);
            put(&mut g_f, 5, 1, 1.0);
        } else {
            put(&mut g_f, 4, 1, 1.0);
        }
        put(&mut g_2, 2, 1, -1.0);
        put(&mut g_2, 3, 1, 1.0);
    } else {
        for c in 1..=3 {
            put(&mut g_f, c, c, lag);
        }
        if sys {
            put(&mut g_f, 7, 1, -theta);
            put(&mut g_f, 8, 1, 1.0);
            for c in 2..=3 {
                put(&mut g_f, 8, c, -theta);
                put(&mut g_f, 9, c, 1.0);
            }
        } else {
            put(&mut g_f, 7, 1, 1.0);
            put(&mut g_f, 8, 2, 1.0);
            put(&mut g_f, 8, 3, 1.0);
        }
        put(&mut g_2, 4, 1, -1.0);
        put(&mut g_2, 5, 1, 1.0);
        put(&mut g_2, 5, 2, -1.0);
        put(&mut g_2, 6, 2, 1.0);
    }
    Ok(OrthoComplement {
        set,
        t,
        theta,
        g_f,
        g_2,
        p,
        p_max,
    })
}

/// Coefficients `(a_i, b_i, d_i)` of `g_i(θ) = a_i θ² + b_i θ + d_i` for one
/// individual.
fn abd_row(set: MomentSet, row: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let y = |s: usize| row[s - 1];
    let dy = |s: usize| row[s - 1] - row[s - 2];
    let sys = set == MomentSet::Sys;
    if row.len() == 4 {
        let a0 = if sys {
            dy(2) * dy(2)
        } else {
            (y(3) - y(1)) * dy(2)
        };
        let b0 = if sys {
            (y(3) - y(1)).powi(2)
        } else {
            (y(3) - y(1)) * dy(3) + (y(4) - y(1)) * dy(2)
        };
        let a = vec![a0, 0.0];
        let b = vec![-b0, -dy(2) * dy(3)];
        let d = vec![(y(4) - y(1)) * dy(3), dy(2) * dy(4)];
        (a, b, d)
    } else {
        let (a, b) = if sys {
            (
                vec![dy(2) * dy(2), (y(3) - y(1)) * dy(3), dy(3) * dy(3)],
                vec![
                    (y(3) - y(1)).powi(2),
                    (y(4) - y(1)) * (y(4) - y(2)),
                    (y(4) - y(2)).powi(2),
                ],
            )
        } else {
            (
                vec![
                    (y(3) - y(1)) * dy(2),
                    (y(4) - y(1)) * dy(3),
                    (y(4) - y(2)) * dy(3),
                ],
                vec![
                    (y(4) - y(1)) * dy(2) + (y(3) - y(1)) * dy(3),
                    (y(4) - y(1)) * dy(4) + (y(5) - y(1)) * dy(3),
                    (y(4) - y(2)) * dy(4) + (y(5) - y(2)) * dy(3),
                ],
            )
        };
        let mut a = a;
        a.extend([0.0, 0.0]);
        let mut b: Vec<f64> = b.into_iter().map(|v| -v).collect();
        b.extend([-dy(2) * dy(4), -dy(3) * dy(4)]);
        let d = vec![
            (y(4) - y(1)) * dy(3),
            (y(5) - y(1)) * dy(4),
            (y(5) - y(2)) * dy(4),
            dy(2) * dy(5),
            dy(3) * dy(5),
        ];
        (a, b, d)
    }
}

/// Robust moments `g(θ) = a θ² + b θ + d` of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustQuad {
    pub set: MomentSet,
    pub t: usize,
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub d: DVector<f64>,
    pub a_individual: DMatrix<f64>,
    pub b_individual: DMatrix<f64>,
    pub d_individual: DMatrix<f64>,
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|c| c.iter().sum::<f64>() / n),
    )
}

pub fn robust_quad(set: MomentSet, t: usize, panel: &PanelData) -> Result<RobustQuad> {
    check_robust_request(set, t)?;
    if panel.n_periods() != t {
        return Err(Error::Dimension(format!(
            "robust moments requested for T={t} but the panel has T={}",
            panel.n_periods()
        )));
    }
    let (_, p_max) = robust_dims(t)?;
    let n = panel.n_individuals();
    let rows: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| abd_row(set, panel.row(i)))
        .collect();
    let a_individual = DMatrix::from_fn(n, p_max, |i, j| rows[i].0[j]);
    let b_individual = DMatrix::from_fn(n, p_max, |i, j| rows[i].1[j]);
    let d_individual = DMatrix::from_fn(n, p_max, |i, j| rows[i].2[j]);
    Ok(RobustQuad {
        set,
        t,
        a: column_means(&a_individual),
        b: column_means(&b_individual),
        d: column_means(&d_individual),
        a_individual,
        b_individual,
        d_individual,
    })
}

impl RobustQuad {
    pub fn n(&self) -> usize {
        self.a_individual.nrows()
    }

    pub fn p_max(&self) -> usize {
        self.a.len()
    }

    /// Per-individual `g_i(θ)` as an `N × p_max` matrix.
    pub fn g_individual(&self, theta: f64) -> DMatrix<f64> {
        &self.a_individual * (theta * theta) + &self.b_individual * theta + &self.d_individual
    }

    /// Eicker-White covariance of `g_i(θ)`.
    pub fn v_gg(&self, theta: f64) -> Result<DMatrix<f64>> {
        let g = self.g_individual(theta);
        Ok(symmetrize(cross_covariance(&g, &g)?))
    }
}

pub fn robust_eval(quad: &RobustQuad, theta: f64) -> DVector<f64> {
    &quad.a * (theta * theta) + &quad.b * theta + &quad.d
}

/// `N g' V⁻¹ g`, requiring `N > dim(g)`.
pub(crate) fn ar_form(n: usize, g: &DVector<f64>, v: &DMatrix<f64>) -> Result<f64> {
    if n <= g.len() {
        return Err(Error::DegenerateSample {
            needed: g.len() + 1,
            got: n,
        });
    }
    Ok(n as f64 * SpdFactor::new(v)?.quad_form(g))
}

/// GMM-AR statistic on the robust moments: `N g(θ*)' V̂_gg(θ*)⁻¹ g(θ*)`, `p_max` degrees of freedom.
pub fn robust_gmm_ar(
    set: MomentSet,
    t: usize,
    panel: &PanelData,
    theta_star: f64,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let quad = robust_quad(set, t, panel)?;
    robust_gmm_ar_quad(&quad, theta_star, alpha)
}

pub fn robust_gmm_ar_quad(quad: &RobustQuad, theta_star: f64, alpha: f64) -> Result<TestOutcome> {
    let g = robust_eval(quad, theta_star);
    let stat = ar_form(quad.n(), &g, &quad.v_gg(theta_star)?)?;
    TestOutcome::from_statistic(
        TestKind::RobustAr,
        quad.set,
        theta_star,
        stat,
        quad.p_max(),
        alpha,
    )
}

/// Block scalars `(1 + x(2 + x), 1 + x, 1)` with `x = e / N^{1/4}`.
pub fn b_scalars(e: f64, n: usize) -> [f64; 3] {
    let x = e / (n as f64).powf(0.25);
    [1.0 + x * (2.0 + x), 1.0 + x, 1.0]
}

/// `B(N)`: three stacked `p_max × p_max` scalar blocks, so that
/// `B(N)'(a', b', d')' = a θ(e)² + b θ(e) + d`.
pub fn b_matrix(e: f64, n: usize, p_max: usize) -> DMatrix<f64> {
    let s = b_scalars(e, n);
    let mut b = DMatrix::zeros(3 * p_max, p_max);
    for (blk, v) in s.iter().enumerate() {
        for j in 0..p_max {
            b[(blk * p_max + j, j)] = *v;
        }
    }
    b
}

/// Eicker-White covariance of the stacked `(a_i', b_i', d_i')'`.
pub fn v_abd(quad: &RobustQuad) -> Result<DMatrix<f64>> {
    let n = quad.n();
    if n < 2 {
        return Err(Error::DegenerateSample { needed: 2, got: n });
    }
    let p = quad.p_max();
    let mut stacked = DMatrix::zeros(n, 3 * p);
    stacked
        .view_mut((0, 0), (n, p))
        .copy_from(&quad.a_individual);
    stacked
        .view_mut((0, p), (n, p))
        .copy_from(&quad.b_individual);
    stacked
        .view_mut((0, 2 * p), (n, p))
        .copy_from(&quad.d_individual);
    Ok(symmetrize(cross_covariance(&stacked, &stacked)?))
}

/// `w = (B'V_abd B)⁻¹ a_target`.
pub fn optimal_weight(
    a_target: &DVector<f64>,
    bn: &DMatrix<f64>,
    vabd: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let m = symmetrize(bn.transpose() * vabd * bn);
    if a_target.len() != m.nrows() {
        return Err(Error::Dimension(format!(
            "target has length {}, weights need {}",
            a_target.len(),
            m.nrows()
        )));
    }
    Ok(SpdFactor::new(&m)?.solve(a_target))
}

/// Local-to-unity design `θ(e) = 1 + e / N^{1/4}` with homoskedastic `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticDesign {
    pub e: f64,
    pub n: usize,
    pub theta_e: f64,
    pub sigma: f64,
}

impl AsymptoticDesign {
    pub fn new(e: f64, n: usize, sigma: f64) -> Result<Self> {
        if !e.is_finite() {
            return Err(Error::Domain(format!("e must be finite, got {e}")));
        }
        if n == 0 {
            return Err(Error::Domain("sample size must be positive".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self {
            e,
            n,
            theta_e: local_theta(e, n),
            sigma,
        })
    }
}

/// `1 + e / N^{1/4}`.
pub fn local_theta(e: f64, n: usize) -> f64 {
    1.0 + e * (n as f64).powf(-0.25)
}

fn iota(p: usize, p_max: usize) -> DVector<f64> {
    DVector::from_fn(p_max, |i, _| if i < p { 1.0 } else { 0.0 })
}

/// `δ(N) = (eσ)⁴ (ι_p; 0)' (B'V_abd B)⁻¹ (ι_p; 0)`.
pub fn delta_noncentrality(
    design: &AsymptoticDesign,
    bn: &DMatrix<f64>,
    vabd: &DMatrix<f64>,
    p: usize,
) -> Result<f64> {
    let p_max = bn.ncols();
    if p == 0 || p > p_max {
        return Err(Error::Dimension(format!("p={p} must lie in 1..={p_max}")));
    }
    let m = symmetrize(bn.transpose() * vabd * bn);
    let quad = SpdFactor::new(&m)?.quad_form(&iota(p, p_max));
    Ok((design.e * design.sigma).powi(4) * quad)
}

/// Target direction for the optimal weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// `σ² (ι_p; 0)` with known `σ`.
    Oracle { sigma: f64 },
    /// The sample `a` vector.
    Plugin,
}

/// `N (w'g)² / (w' V w)`.
pub fn weighted_ar_statistic(
    n: usize,
    g: &DVector<f64>,
    v_gg: &DMatrix<f64>,
    w: &DVector<f64>,
) -> Result<f64> {
    let denom = w.dot(&(v_gg * w));
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::RankDeficient { value: denom });
    }
    let num = w.dot(g);
    Ok(n as f64 * num * num / denom)
}

/// One-degree-of-freedom test of `θ = θ(e)` on the optimally weighted robust
/// moments `w'g(θ(e))`.
pub fn optimal_weighted_ar(
    quad: &RobustQuad,
    design: &AsymptoticDesign,
    mode: WeightMode,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let (p, p_max) = robust_dims(quad.t)?;
    let a_target = match mode {
        WeightMode::Oracle { sigma } => iota(p, p_max) * (sigma * sigma),
        WeightMode::Plugin => quad.a.clone(),
    };
    let bn = b_matrix(design.e, design.n, p_max);
    let vabd = v_abd(quad)?;
    let w = optimal_weight(&a_target, &bn, &vabd)?;
    let theta = design.theta_e;
    let g = robust_eval(quad, theta);
    let v_gg = symmetrize(bn.transpose() * &vabd * &bn);
    let stat = weighted_ar_statistic(quad.n(), &g, &v_gg, &w)?;
    TestOutcome::from_statistic(TestKind::OptimalAr, quad.set, theta, stat, 1, alpha)
}

/// Matrix `M_T(θ)` with `g_AS(θ) = M_T(θ) g_Sys(θ)`. For `T = 5` it has a
/// `1/(1 − θ)` entry and is undefined at `θ = 1`.
pub fn as_sys_map(t: usize, theta: f64) -> Result<DMatrix<f64>> {
    match t {
        4 => Ok(DMatrix::from_row_slice(2, 2, &[1.0, -theta, 0.0, 1.0])),
        5 => {
            if theta == 1.0 {
                return Err(Error::Domain(
                    "the T=5 AS/Sys map is undefined at θ = 1".into(),
                ));
            }
            let r = theta / (1.0 - theta);
            #[rustfmt::skip]
            let m = DMatrix::from_row_slice(5, 5, &[
                1.0, -r,  r,   0.0, 0.0,
                0.0, 1.0, 0.0, 0.0, -theta,
                0.0, 0.0, 1.0, 0.0, -theta,
                0.0, 0.0, 0.0, 1.0, 0.0,
                0.0, 0.0, 0.0, 0.0, 1.0,
            ]);
            Ok(m)
        }
        _ => Err(Error::UnsupportedPeriods(t)),
    }
}

/// Probability limits of `(a, b, d)` at the unit root for variances
/// `(σ_2², …, σ_T²)`; identical for AS and Sys.
pub fn limit_abd(t: usize, sigma_sq: &[f64]) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    robust_dims(t)?;
    if sigma_sq.len() != t - 1 {
        return Err(Error::Dimension(format!(
            "expected {} variances, got {}",
            t - 1,
            sigma_sq.len()
        )));
    }
    let s = |i: usize| sigma_sq[i - 2];
    if t == 4 {
        Ok((
            DVector::from_vec(vec![s(2), 0.0]),
            DVector::from_vec(vec![-(s(2) + s(3)), 0.0]),
            DVector::from_vec(vec![s(3), 0.0]),
        ))
    } else {
        Ok((
            DVector::from_vec(vec![s(2), s(3), s(3), 0.0, 0.0]),
            DVector::from_vec(vec![
                -(s(2) + s(3)),
                -(s(3) + s(4)),
                -(s(3) + s(4)),
                0.0,
                0.0,
            ]),
            DVector::from_vec(vec![s(3), s(4), s(4), 0.0, 0.0]),
        ))
    }
}
