//! Panel container and the mean-stationary data-generating processes.
//!
//! The model is `y_it = c_i + θ y_{i,t-1} + u_it` for `t = 2..T`, with the
//! initial observation `y_i1 = μ_i + u_i1` and `μ_i = c_i / (1 - θ)`.
//! Five variants differ in how `var(u_i1)` and the individual effects are
//! specified; see [`DgpVariant`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Balanced panel of level observations, one row per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    values: Vec<f64>,
    n_individuals: usize,
    n_periods: usize,
}

impl PanelData {
    /// Builds a panel from row-major values.
    ///
    /// Requires `T >= 3`, at least one individual and finite entries. Routines
    /// that need a covariance estimate check `N >= 2` themselves.
    pub fn from_row_major(
        values: Vec<f64>,
        n_individuals: usize,
        n_periods: usize,
    ) -> Result<Self> {
        if n_periods < 3 {
            return Err(Error::Dimension(format!(
                "a dynamic panel needs T >= 3 periods, got {n_periods}"
            )));
        }
        if n_individuals == 0 {
            return Err(Error::Dimension("panel has no individuals".into()));
        }
        if values.len() != n_individuals * n_periods {
            return Err(Error::Dimension(format!(
                "expected {} values for a {n_individuals}x{n_periods} panel, got {}",
                n_individuals * n_periods,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite observation for individual {} in period {}",
                pos / n_periods + 1,
                pos % n_periods + 1
            )));
        }
        Ok(Self {
            values,
            n_individuals,
            n_periods,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_periods = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_periods) {
            return Err(Error::Dimension(format!(
                "row {} has {} periods, expected {n_periods}",
                bad + 1,
                rows[bad].len()
            )));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::from_row_major(values, rows.len(), n_periods)
    }

    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    /// Observations `(y_i1, ..., y_iT)` of individual `i` (0-based).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_periods..(i + 1) * self.n_periods]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.n_periods)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sample mean and (1/N) variance of column `t` (0-based).
    pub fn column_moments(&self, t: usize) -> (f64, f64) {
        let n = self.n_individuals as f64;
        let mean = self.rows().map(|r| r[t]).sum::<f64>() / n;
        let var = self.rows().map(|r| (r[t] - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }
}

/// Local-to-unity drift `θ_{0,N} = 1 + l / N^τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub l: f64,
    pub tau: f64,
}

/// Initial-condition variant. The `g` of DGP 4 and 5 is the number of
/// periods the process has been running before the first observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DgpVariant {
    /// `var(u_i1) = sigma1_sq`, effects `c_i ~ N(0, σ_c²)`.
    Dgp1 { sigma1_sq: f64 },
    /// Stationary `var(u_i1) = σ²/(1-θ²)`, effects `c_i ~ N(0, σ_c²)`.
    Dgp2,
    /// Stationary `var(u_i1)`, effects drawn directly as `μ_i ~ N(0, σ_μ²)`.
    Dgp3,
    /// Process started `g` periods back, `μ_i ~ N(0, σ_μ²)`.
    Dgp4 { g: u32 },
    /// Process started `g` periods back, `c_i ~ N(0, σ_c²)`.
    Dgp5 { g: u32 },
}

impl DgpVariant {
    /// Whether the effects are drawn as `c_i` and rescaled by `1/(1-θ)`.
    pub fn scales_effects(&self) -> bool {
        matches!(
            self,
            DgpVariant::Dgp1 { .. } | DgpVariant::Dgp2 | DgpVariant::Dgp5 { .. }
        )
    }
}

/// Full description of a simulated dynamic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub theta0: f64,
    pub drift: Option<Drift>,
    pub sigma_c_sq: f64,
    pub sigma_mu_sq: f64,
    /// Innovation variances `σ_t²` for `t = 2..T` (length `T - 1`).
    pub sigma_sq: Vec<f64>,
    pub variant: DgpVariant,
    pub n_individuals: usize,
    pub n_periods: usize,
}

impl DgpConfig {
    /// DGP 1 with unit innovation variances, the design used for the power
    /// curve experiments.
    pub fn dgp1(
        theta0: f64,
        sigma_c_sq: f64,
        sigma1_sq: f64,
        n_individuals: usize,
        n_periods: usize,
    ) -> Self {
        Self {
            theta0,
            drift: None,
            sigma_c_sq,
            sigma_mu_sq: 0.0,
            sigma_sq: vec![1.0; n_periods.saturating_sub(1)],
            variant: DgpVariant::Dgp1 { sigma1_sq },
            n_individuals,
            n_periods,
        }
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn with_drift(mut self, l: f64, tau: f64) -> Self {
        self.drift = Some(Drift { l, tau });
        self
    }

    pub fn with_sigma_sq(mut self, sigma_sq: Vec<f64>) -> Self {
        self.sigma_sq = sigma_sq;
        self
    }

    /// The autoregressive parameter actually used: the drift when present,
    /// `theta0` otherwise.
    pub fn effective_theta(&self) -> Result<f64> {
        match self.drift {
            Some(Drift { l, tau }) => drifting_theta(l, tau, self.n_individuals),
            None => Ok(self.theta0),
        }
    }

    /// Common innovation variance; errors unless `sigma_sq` is constant.
    pub fn homoskedastic_sigma_sq(&self) -> Result<f64> {
        let first = *self
            .sigma_sq
            .first()
            .ok_or_else(|| Error::Config("sigma_sq is empty".into()))?;
        if self.sigma_sq.iter().any(|&s| s != first) {
            return Err(Error::Config(
                "DGPs 2-5 require a time-homoskedastic innovation variance".into(),
            ));
        }
        Ok(first)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_periods < 3 {
            return Err(Error::Dimension(format!(
                "T must be at least 3, got {}",
                self.n_periods
            )));
        }
        if self.n_individuals == 0 {
            return Err(Error::Dimension("N must be positive".into()));
        }
        if self.sigma_sq.len() != self.n_periods - 1 {
            return Err(Error::Config(format!(
                "sigma_sq must have T-1 = {} entries, got {}",
                self.n_periods - 1,
                self.sigma_sq.len()
            )));
        }
        let variances = [self.sigma_c_sq, self.sigma_mu_sq]
            .into_iter()
            .chain(self.sigma_sq.iter().copied());
        for v in variances {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "variances must be finite and >= 0, got {v}"
                )));
            }
        }
        if !self.theta0.is_finite() {
            return Err(Error::Domain("theta0 must be finite".into()));
        }
        match self.variant {
            DgpVariant::Dgp1 { sigma1_sq } if !(sigma1_sq.is_finite() && sigma1_sq >= 0.0) => {
                return Err(Error::Domain(format!(
                    "sigma1_sq must be >= 0, got {sigma1_sq}"
                )));
            }
            DgpVariant::Dgp4 { g } | DgpVariant::Dgp5 { g } if g < 1 => {
                return Err(Error::Domain("DGP 4/5 need g >= 1".into()));
            }
            _ => {}
        }
        self.effective_theta()?;
        Ok(())
    }
}

/// `θ_{0,N} = 1 + l / n^τ` for `l < 0` and `τ > 1/2`.
pub fn drifting_theta(l: f64, tau: f64, n: usize) -> Result<f64> {
    if !(l < 0.0) || !(tau > 0.5) || n == 0 {
        return Err(Error::Domain(format!(
            "drift needs l < 0, tau > 1/2 and n >= 1 (got l={l}, tau={tau}, n={n})"
        )));
    }
    Ok(1.0 + l * (n as f64).powf(-tau))
}

/// Variance of the initial disturbance `u_i1` implied by the configuration.
pub fn sigma1_sq(config: &DgpConfig) -> Result<f64> {
    let theta = config.effective_theta()?;
    match config.variant {
        DgpVariant::Dgp1 { sigma1_sq } => Ok(sigma1_sq),
        DgpVariant::Dgp2 | DgpVariant::Dgp3 => {
            let s2 = config.homoskedastic_sigma_sq()?;
            let th2 = theta * theta;
            if th2 >= 1.0 {
                return Err(Error::Domain(format!(
                    "stationary initial variance needs theta0^2 < 1, got theta0={theta}"
                )));
            }
            Ok(s2 / (1.0 - th2))
        }
        DgpVariant::Dgp4 { g } | DgpVariant::Dgp5 { g } => {
            let s2 = config.homoskedastic_sigma_sq()?;
            if g < 1 {
                return Err(Error::Domain("DGP 4/5 need g >= 1".into()));
            }
            // σ² (1 - θ^{2(g+1)}) / (1 - θ²) written as the finite geometric sum,
            // which stays defined at θ² = 1.
            let th2 = theta * theta;
            let mut power = 1.0;
            let mut sum = 0.0;
            for _ in 0..=g {
                sum += power;
                power *= th2;
            }
            Ok(s2 * sum)
        }
    }
}

/// Simulates a panel. The output is a pure function of `(config, seed)`.
pub fn generate_panel(config: &DgpConfig, seed: u64) -> Result<PanelData> {
    generate_panel_with_effects(config, seed).map(|(panel, _)| panel)
}

/// Like [`generate_panel`], also returning the drawn effects `c_i`.
///
/// Per individual the draws are taken in the order effect, `u_i1`, `u_i2`,
/// ..., `u_iT` from a ChaCha8 stream seeded with `seed`; each normal is
/// `StandardNormal` (ziggurat on the uniform stream) scaled by the standard
/// deviation.
pub fn generate_panel_with_effects(config: &DgpConfig, seed: u64) -> Result<(PanelData, Vec<f64>)> {
    config.validate()?;
    let theta = config.effective_theta()?;
    let scaled = config.variant.scales_effects();
    if scaled && theta == 1.0 {
        return Err(Error::SingularInitialization);
    }
    let sd1 = sigma1_sq(config)?.sqrt();
    let sd_c = config.sigma_c_sq.sqrt();
    let sd_mu = config.sigma_mu_sq.sqrt();
    let sd_u: Vec<f64> = config.sigma_sq.iter().map(|s| s.sqrt()).collect();

    let (n, t_len) = (config.n_individuals, config.n_periods);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * t_len);
    let mut effects = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let (c, mu) = if scaled {
            let c = sd_c * z;
            (c, c / (1.0 - theta))
        } else {
            let mu = sd_mu * z;
            ((1.0 - theta) * mu, mu)
        };
        effects.push(c);
        let u1: f64 = rng.sample(StandardNormal);
        let mut y = mu + sd1 * u1;
        values.push(y);
        for sd in &sd_u {
            let u: f64 = rng.sample(StandardNormal);
            y = c + theta * y + sd * u;
            values.push(y);
        }
    }
    Ok((PanelData::from_row_major(values, n, t_len)?, effects))
}
