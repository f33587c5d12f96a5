//! Rényi DP accounting for noisy batch-gradient sums: the continuous
//! Gaussian bound, the discrete-Gaussian sum bound with its τ correction,
//! degradation under dishonest clients, and conversion to (ε, δ).

use crate::codec::SCALE;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccountantError {
    #[error("invalid privacy parameter: {0}")]
    Param(String),
}

fn param(msg: impl Into<String>) -> AccountantError {
    AccountantError::Param(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpConfig {
    /// Standard deviation of the aggregate noise on a batch sum.
    pub sigma: f64,
    pub clip_c: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub delta: f64,
    /// Model parameter count.
    pub dimension: usize,
    pub honest_fraction: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            sigma: 1.0,
            clip_c: 5.0,
            batch_size: 64,
            epochs: 1,
            delta: 1e-5,
            dimension: 1,
            honest_fraction: 1.0,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<(), AccountantError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.clip_c > 0.0 && self.clip_c.is_finite()) {
            return Err(param(format!(
                "clip bound must be positive, got {}",
                self.clip_c
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.dimension == 0 {
            return Err(param("batch size, epochs and dimension must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(param(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.honest_fraction > 0.0 && self.honest_fraction <= 1.0) {
            return Err(param(format!(
                "honest fraction must lie in (0, 1], got {}",
                self.honest_fraction
            )));
        }
        Ok(())
    }

    pub fn with_epochs(&self, epochs: usize) -> Self {
        DpConfig {
            epochs,
            ..self.clone()
        }
    }
}

/// Orders α used for every curve: 1.25, 1.5, 1.75, the integers 2..=256,
/// a geometric ladder 1.25·2^(i/8) and 512.
pub fn alpha_grid() -> Vec<f64> {
    let mut grid = vec![1.25, 1.5, 1.75];
    grid.extend((2..=256).map(f64::from));
    grid.extend(
        (0..)
            .map(|i| 1.25 * 2f64.powf(i as f64 / 8.0))
            .take_while(|&a| a < 512.0),
    );
    grid.push(512.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    grid
}

/// `(α, ε_RDP(α))` pairs in increasing α.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    pub points: Vec<(f64, f64)>,
}

impl RdpCurve {
    pub fn from_fn(
        alphas: &[f64],
        mut f: impl FnMut(f64) -> Result<f64, AccountantError>,
    ) -> Result<Self, AccountantError> {
        Ok(RdpCurve {
            points: alphas
                .iter()
                .map(|&a| f(a).map(|e| (a, e)))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_alpha(alpha: f64) -> Result<(), AccountantError> {
    if alpha >= 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(param(format!("alpha must be at least 1, got {alpha}")))
    }
}

/// `E·C²·α / (2σ²)`.
pub fn rdp_continuous(cfg: &DpConfig, alpha: f64) -> Result<f64, AccountantError> {
    cfg.validate()?;
    check_alpha(alpha)?;
    Ok(cfg.epochs as f64 * cfg.clip_c.powi(2) * alpha / (2.0 * cfg.sigma.powi(2)))
}

/// `ln τ` for `τ = 10·Σ_{k=1}^{n-1} exp(-2π²σ²·k/(k+1))`, summed in log space.
/// `-∞` when `n < 2` (empty sum).
pub fn log_tau(sigma: f64, n: usize) -> f64 {
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let c = 2.0 * PI * PI * sigma * sigma;
    let exps: Vec<f64> = (1..n).map(|k| -c * k as f64 / (k as f64 + 1.0)).collect();
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    10f64.ln() + max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln()
}

pub fn tau(sigma: f64, n: usize) -> f64 {
    log_tau(sigma, n).exp()
}

/// Rényi divergence bound for a sum of `n` discrete Gaussians of scale
/// `sigma` under a shift of L2 norm `delta_norm` in `d` dimensions:
/// `α·Δ²/(2nσ²) + τ·d`.
pub fn discrete_sum_bound(
    alpha: f64,
    delta_norm: f64,
    n: usize,
    sigma: f64,
    d: usize,
) -> Result<f64, AccountantError> {
    check_alpha(alpha)?;
    if sigma < 0.5 {
        return Err(param(format!("discrete noise scale {sigma} is below 1/2")));
    }
    if n == 0 {
        return Err(param("sum of zero noise terms"));
    }
    Ok(
        alpha * delta_norm * delta_norm / (2.0 * n as f64 * sigma * sigma)
            + tau(sigma, n) * d as f64,
    )
}

/// Per-client discrete noise scale in the fixed-point domain: `10^4·σ/√b`.
pub fn per_client_scaled_sigma(cfg: &DpConfig) -> f64 {
    SCALE * cfg.sigma / (cfg.batch_size as f64).sqrt()
}

/// Discrete-noise RDP over `E` epochs: each of the `b` clients adds a
/// discrete Gaussian of scale `10^4·σ/√b` to values scaled by `10^4`.
pub fn rdp_discrete(cfg: &DpConfig, alpha: f64) -> Result<f64, AccountantError> {
    cfg.validate()?;
    let per_epoch = discrete_sum_bound(
        alpha,
        SCALE * cfg.clip_c,
        cfg.batch_size,
        per_client_scaled_sigma(cfg),
        cfg.dimension,
    )?;
    Ok(cfg.epochs as f64 * per_epoch)
}

pub fn continuous_curve(cfg: &DpConfig) -> Result<RdpCurve, AccountantError> {
    RdpCurve::from_fn(&alpha_grid(), |a| rdp_continuous(cfg, a))
}

pub fn discrete_curve(cfg: &DpConfig) -> Result<RdpCurve, AccountantError> {
    RdpCurve::from_fn(&alpha_grid(), |a| rdp_discrete(cfg, a))
}

/// Continuous curve when only `honest_fraction` of the noise is added:
/// `σ²_eff = honest_fraction·σ²`.
pub fn degraded_guarantee(cfg: &DpConfig) -> Result<RdpCurve, AccountantError> {
    cfg.validate()?;
    let eff = DpConfig {
        sigma: cfg.sigma * cfg.honest_fraction.sqrt(),
        honest_fraction: 1.0,
        ..cfg.clone()
    };
    continuous_curve(&eff)
}

/// `min_α ε_RDP(α) + ln(1/δ)/(α - 1)` over the curve's points with `α > 1`;
/// returns `(ε, α*)`.
pub fn to_eps_delta(curve: &RdpCurve, delta: f64) -> Result<(f64, f64), AccountantError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param(format!("delta must lie in (0, 1), got {delta}")));
    }
    curve
        .points
        .iter()
        .filter(|(a, _)| *a > 1.0)
        .map(|&(a, e)| (e + (1.0 / delta).ln() / (a - 1.0), a))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .ok_or_else(|| param("empty RDP curve"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Continuous,
    Discrete,
    Degraded,
}

/// Privacy spent by a training run, charged one epoch at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLedger {
    base: DpConfig,
    epochs: usize,
}

impl PrivacyLedger {
    /// `base.epochs` is ignored; spending starts at zero.
    pub fn new(base: DpConfig) -> Result<Self, AccountantError> {
        base.validate()?;
        Ok(PrivacyLedger { base, epochs: 0 })
    }

    pub fn charge_epoch(&mut self) {
        self.epochs += 1;
    }

    pub fn epochs_charged(&self) -> usize {
        self.epochs
    }

    /// `(ε, α*)` at the ledger's δ; zero before any epoch is charged.
    pub fn epsilon(&self, analysis: Analysis) -> Result<(f64, f64), AccountantError> {
        if self.epochs == 0 {
            return Ok((0.0, f64::NAN));
        }
        let cfg = self.base.with_epochs(self.epochs);
        let curve = match analysis {
            Analysis::Continuous => continuous_curve(&cfg)?,
            Analysis::Discrete => discrete_curve(&cfg)?,
            Analysis::Degraded => degraded_guarantee(&cfg)?,
        };
        to_eps_delta(&curve, cfg.delta)
    }
}
