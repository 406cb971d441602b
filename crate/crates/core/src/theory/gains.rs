use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-node, per-layer quantities of the subgraph-aware gain formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    /// Degree `d_i`.
    pub d_i: f64,
    /// Cross-class mean ratio: `E[f | y != y_i] = -rho E[f | y_i]`.
    pub rho: f64,
    /// Aggregate edge weight `W_i^0` over the neighborhood.
    pub w_i0: f64,
    /// Share of the aggregate weight carried by the inductive subgraph.
    pub beta: f64,
    /// Same-class probability inside the subgraph group.
    pub h_s: f64,
    /// Same-class probability among the remaining neighbors.
    pub h_r: f64,
    /// Mean relative degree; typically nonpositive.
    pub rbar: f64,
    /// Deep-layer factor, taken as given.
    pub xi: f64,
}

impl Default for GainParams {
    fn default() -> Self {
        GainParams {
            d_i: 1.0,
            rho: 0.0,
            w_i0: 1.0,
            beta: 0.0,
            h_s: 1.0,
            h_r: 1.0,
            rbar: 0.0,
            xi: 1.0,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl GainParams {
    pub fn validate(&self) -> Result<()> {
        unit("beta", self.beta)?;
        unit("h_S", self.h_s)?;
        unit("h_R", self.h_r)?;
        if !(self.d_i >= 0.0) {
            return Err(Error::domain(format!("degree must be nonnegative, got {}", self.d_i)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::domain(format!("rho must be nonnegative, got {}", self.rho)));
        }
        if !(self.w_i0.is_finite() && self.rbar.is_finite() && self.xi.is_finite()) {
            return Err(Error::domain("W, rbar and xi must be finite"));
        }
        Ok(())
    }

    pub fn h_eff(&self) -> f64 {
        effective_homophily(self.beta, self.h_s, self.h_r)
    }

    /// `G_i^(0)` for `layer == 0`, the deep-layer `G_i^(ℓ)` otherwise.
    pub fn layer_gain(&self, layer: usize) -> f64 {
        if layer == 0 {
            one_layer_gain(self.d_i, self.w_i0, self.rho, self.h_eff())
        } else {
            deep_layer_gain(self.d_i, self.rho, self.h_eff(), self.rbar, self.xi).0
        }
    }
}

/// `beta h_S + (1 - beta) h_R`.
pub fn effective_homophily(beta: f64, h_s: f64, h_r: f64) -> f64 {
    beta * h_s + (1.0 - beta) * h_r
}

/// `(1 + W ((1 + rho) h_eff - rho)) / (d + 1)`.
pub fn one_layer_gain(d_i: f64, w_i0: f64, rho: f64, h_eff: f64) -> f64 {
    (1.0 + w_i0 * ((1.0 + rho) * h_eff - rho)) / (d_i + 1.0)
}

/// `G = (((1 + rho) h_eff - rho) d rbar + 1) / (d + 1)` together with `G xi`,
/// the full multiplier on the base class signal.
pub fn deep_layer_gain(d_i: f64, rho_l: f64, h_eff_hat: f64, rbar: f64, xi: f64) -> (f64, f64) {
    let g = (((1.0 + rho_l) * h_eff_hat - rho_l) * d_i * rbar + 1.0) / (d_i + 1.0);
    (g, g * xi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthDecay {
    pub gains: Vec<f64>,
    /// Running products; the last entry is the total multiplier.
    pub cumulative: Vec<f64>,
    /// Layers whose gain is below one.
    pub shrinking: Vec<usize>,
}

impl DepthDecay {
    pub fn total(&self) -> f64 {
        *self.cumulative.last().expect("nonempty")
    }
}

/// Running product of per-layer gains.
pub fn depth_decay_of_gains(gains: &[f64]) -> Result<DepthDecay> {
    if gains.is_empty() {
        return Err(Error::domain("depth decay needs at least one layer"));
    }
    let cumulative = gains
        .iter()
        .scan(1.0, |acc, &g| {
            *acc *= g;
            Some(*acc)
        })
        .collect();
    Ok(DepthDecay {
        gains: gains.to_vec(),
        cumulative,
        shrinking: gains.iter().enumerate().filter(|(_, &g)| g < 1.0).map(|(l, _)| l).collect(),
    })
}

/// Gains of layers `0..L` (one-layer form first, deep-layer form after).
pub fn depth_decay(layers: &[GainParams]) -> Result<DepthDecay> {
    for p in layers {
        p.validate()?;
    }
    let gains: Vec<f64> = layers.iter().enumerate().map(|(l, p)| p.layer_gain(l)).collect();
    depth_decay_of_gains(&gains)
}
