use serde::{Deserialize, Serialize};

use super::gains::GainParams;
use crate::error::{Error, Result};

/// Rounding allowance on the precondition comparisons.
const TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementConfig {
    /// Label-inconsistency gap: the subgraph group is at least this much
    /// less homophilous than the rest.
    pub delta: f64,
    /// Bound on the causal branch's shortcut dominance.
    pub eps: f64,
    /// Constant of the `O(eps)` slack, which is `slack_c * eps`.
    pub slack_c: f64,
}

impl Default for ImprovementConfig {
    fn default() -> Self {
        ImprovementConfig {
            delta: 0.1,
            eps: 0.05,
            slack_c: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMargin {
    pub layer: usize,
    pub baseline: f64,
    pub causal: f64,
    /// `causal - baseline + slack`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub slack: f64,
    pub h_eff_baseline: f64,
    pub h_eff_causal: f64,
    pub h_eff_improvement: f64,
    /// `delta (beta_baseline - beta_causal)`.
    pub h_eff_predicted: f64,
    /// Improvement minus `predicted - slack`.
    pub h_eff_margin: f64,
    pub g0_baseline: f64,
    pub g0_causal: f64,
    /// `W (1 + rho) / (d + 1)`, the slope of the one-layer gain in `h_eff`.
    pub c0: f64,
    /// Gain improvement minus `c0 (beta_baseline - eps) delta - slack`.
    pub g0_margin: f64,
    /// Layers `1..L`.
    pub deep: Vec<LayerMargin>,
    /// Product of per-layer gain ratios; absent unless every baseline gain
    /// is positive.
    pub cumulative_ratio: Option<f64>,
}

impl Margins {
    pub fn holds(&self) -> bool {
        self.h_eff_margin >= 0.0 && self.g0_margin >= 0.0 && self.deep.iter().all(|l| l.margin >= 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ImprovementReport {
    AssumptionsNotMet { reasons: Vec<String> },
    Checked(Margins),
}

/// `prod_t causal_t / baseline_t`, defined when every baseline gain is positive.
pub fn cumulative_ratio(baseline: &[f64], causal: &[f64]) -> Option<f64> {
    if baseline.len() != causal.len() || baseline.iter().any(|&b| !(b > 0.0)) {
        return None;
    }
    Some(baseline.iter().zip(causal).map(|(b, c)| c / b).product())
}

/// Compares baseline and causal-branch gains layer by layer (layer 0 first).
/// Reports margins of the effective-homophily bound, the one-layer and
/// deep-layer gain bounds and the cumulative ratio, or the violated
/// preconditions.
pub fn gain_improvement_check(
    baseline: &[GainParams],
    causal: &[GainParams],
    cfg: &ImprovementConfig,
) -> Result<ImprovementReport> {
    if baseline.is_empty() || baseline.len() != causal.len() {
        return Err(Error::domain(format!(
            "need matching nonempty layer lists, got {} and {}",
            baseline.len(),
            causal.len()
        )));
    }
    for p in baseline.iter().chain(causal) {
        p.validate()?;
    }
    let mut reasons = Vec::new();
    for (l, c) in causal.iter().enumerate() {
        if c.beta > cfg.eps + TOL {
            reasons.push(format!("layer {l}: causal dominance {} exceeds eps {}", c.beta, cfg.eps));
        }
    }
    let (b0, c0p) = (&baseline[0], &causal[0]);
    if b0.h_s > b0.h_r - cfg.delta + TOL {
        reasons.push(format!(
            "subgraph group is not label-inconsistent: h_S {} > h_R {} - delta {}",
            b0.h_s, b0.h_r, cfg.delta
        ));
    }
    if !reasons.is_empty() {
        return Ok(ImprovementReport::AssumptionsNotMet { reasons });
    }

    let slack = cfg.slack_c * cfg.eps;
    let (hb, hc) = (b0.h_eff(), c0p.h_eff());
    let predicted = cfg.delta * (b0.beta - c0p.beta);
    let (gb, gc) = (b0.layer_gain(0), c0p.layer_gain(0));
    let c0 = b0.w_i0 * (1.0 + b0.rho) / (b0.d_i + 1.0);
    let deep = (1..baseline.len())
        .map(|l| {
            let (b, c) = (baseline[l].layer_gain(l), causal[l].layer_gain(l));
            LayerMargin {
                layer: l,
                baseline: b,
                causal: c,
                margin: c - b + slack,
            }
        })
        .collect();
    let gains = |ps: &[GainParams]| ps.iter().enumerate().map(|(l, p)| p.layer_gain(l)).collect::<Vec<_>>();
    Ok(ImprovementReport::Checked(Margins {
        slack,
        h_eff_baseline: hb,
        h_eff_causal: hc,
        h_eff_improvement: hc - hb,
        h_eff_predicted: predicted,
        h_eff_margin: (hc - hb) - (predicted - slack),
        g0_baseline: gb,
        g0_causal: gc,
        c0,
        g0_margin: (gc - gb) - (c0 * (b0.beta - cfg.eps) * cfg.delta - slack),
        deep,
        cumulative_ratio: cumulative_ratio(&gains(baseline), &gains(causal)),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::gains::{effective_homophily, one_layer_gain};

    fn layer(beta: f64) -> GainParams {
        GainParams {
            d_i: 4.0,
            w_i0: 4.0,
            rho: 0.5,
            beta,
            h_s: 0.1,
            h_r: 0.6,
            rbar: -0.1,
            xi: 1.0,
        }
    }

    fn checked(r: ImprovementReport) -> Margins {
        match r {
            ImprovementReport::Checked(m) => m,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hand_case() {
        let cfg = ImprovementConfig {
            delta: 0.5,
            eps: 0.05,
            slack_c: 2.0,
        };
        let m = checked(gain_improvement_check(&[layer(0.8)], &[layer(0.05)], &cfg).unwrap());
        assert!((m.h_eff_improvement - 0.375).abs() < 1e-12);
        assert!((m.h_eff_predicted - 0.375).abs() < 1e-12);
        let direct = effective_homophily(0.05, 0.1, 0.6) - effective_homophily(0.8, 0.1, 0.6);
        assert_eq!(m.h_eff_improvement, direct);
        assert!((m.h_eff_margin - m.slack).abs() < 1e-12);
        let g = |h| one_layer_gain(4.0, 4.0, 0.5, h);
        assert_eq!(m.g0_causal - m.g0_baseline, g(m.h_eff_causal) - g(m.h_eff_baseline));
        assert!(m.holds());
    }

    #[test]
    fn no_change_leaves_only_slack() {
        let cfg = ImprovementConfig {
            delta: 0.5,
            eps: 0.05,
            slack_c: 2.0,
        };
        let m = checked(gain_improvement_check(&[layer(0.03)], &[layer(0.03)], &cfg).unwrap());
        assert_eq!(m.h_eff_improvement, 0.0);
        assert!((m.h_eff_margin - m.slack).abs() < 1e-15);
    }

    #[test]
    fn cumulative_ratio_of_doubled_gains() {
        let r = cumulative_ratio(&[0.4; 3], &[0.8; 3]).unwrap();
        assert!((r - 8.0).abs() < 1e-12);
        assert_eq!(cumulative_ratio(&[0.4, -0.1], &[0.8, 0.2]), None);
    }

    #[test]
    fn unmet_assumptions_are_reported() {
        let cfg = ImprovementConfig::default();
        let r = gain_improvement_check(&[layer(0.8)], &[layer(0.3)], &cfg).unwrap();
        assert!(matches!(r, ImprovementReport::AssumptionsNotMet { .. }));
        let mut consistent = layer(0.8);
        consistent.h_s = 0.55;
        let r = gain_improvement_check(&[consistent], &[layer(0.0)], &cfg).unwrap();
        assert!(matches!(r, ImprovementReport::AssumptionsNotMet { .. }));
        assert!(gain_improvement_check(&[layer(0.8)], &[], &cfg).is_err());
    }
}
