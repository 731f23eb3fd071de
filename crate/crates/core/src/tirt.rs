//! Temporal IRT: proficiency drifts as a Wiener process with variance rate
//! `γ²` per interaction, and the current proficiency is estimated from past
//! responses whose influence is discounted by `α̃ = (1 + γ²·lag)^{-1/2}`.
//!
//! Item difficulties come from a static IRT fit and stay frozen; only the
//! one-dimensional proficiency is solved for at prediction time.

use crate::dataio::InteractionRecord;
use crate::error::{Error, Result};
use crate::irt::maximize_concave_1d;
use crate::link::{probit, response_term};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TirtConfig {
    /// Drift variance per unit of interaction lag. Zero recovers static IRT.
    pub gamma2: f64,
}

impl TirtConfig {
    pub fn new(gamma2: f64) -> Result<Self> {
        if !(gamma2 >= 0.0 && gamma2.is_finite()) {
            return Err(Error::Argument(format!("gamma2 must be finite and non-negative, got {gamma2}")));
        }
        Ok(Self { gamma2 })
    }
}

/// `(1 + γ²·lag)^{-1/2}`.
pub fn discount_factor(gamma2: f64, lag: i64) -> Result<f64> {
    if lag < 0 {
        return Err(Error::Argument(format!("negative lag {lag}")));
    }
    if !(gamma2 >= 0.0) {
        return Err(Error::Argument(format!("negative gamma2 {gamma2}")));
    }
    Ok((1.0 + gamma2 * lag as f64).powf(-0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedEntry {
    pub beta: f64,
    pub correct: bool,
    pub discount: f64,
}

/// A student's past responses with their discounts relative to one moment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscountedHistory {
    pub entries: Vec<DiscountedEntry>,
}

impl DiscountedHistory {
    /// Discounts `(time_index, beta, correct)` responses relative to `at_time`.
    pub fn new(
        cfg: &TirtConfig,
        responses: impl IntoIterator<Item = (u32, f64, bool)>,
        at_time: u32,
    ) -> Result<Self> {
        let entries = responses
            .into_iter()
            .map(|(t, beta, correct)| {
                let discount = discount_factor(cfg.gamma2, at_time as i64 - t as i64)?;
                Ok(DiscountedEntry { beta, correct, discount })
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Approximate log posterior of the current proficiency and its first two
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TirtObjective {
    pub value: f64,
    pub grad: f64,
    pub curvature: f64,
}

pub fn tirt_log_posterior(theta: f64, h: &DiscountedHistory, floor: f64) -> TirtObjective {
    let mut out = TirtObjective { value: -0.5 * theta * theta, grad: -theta, curvature: -1.0 };
    for e in &h.entries {
        let t = response_term(e.discount * (theta - e.beta), e.correct, floor);
        out.value += t.value;
        out.grad += e.discount * t.d1;
        out.curvature += e.discount * e.discount * t.d2;
    }
    out
}

/// MAP of [`tirt_log_posterior`]; 0 for an empty history.
pub fn estimate_from_history(h: &DiscountedHistory, start: f64, floor: f64) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    maximize_concave_1d(start, |theta| {
        let o = tirt_log_posterior(theta, h, floor);
        (o.grad, o.curvature)
    })
}

/// Current proficiency at `at_time` from a student's earlier records, with
/// difficulties looked up in the frozen `beta` table (unknown items at 0).
pub fn estimate_current_proficiency(
    history: &[InteractionRecord],
    beta: &[f64],
    cfg: &TirtConfig,
    at_time: u32,
    floor: f64,
) -> Result<f64> {
    let h = DiscountedHistory::new(
        cfg,
        history.iter().map(|r| (r.time_index, beta_of(beta, r.item), r.correct)),
        at_time,
    )?;
    Ok(estimate_from_history(&h, 0.0, floor))
}

/// `Φ(θ̂ − β_i)` for the response at `at_time` to `item` (`None` for an item
/// without a difficulty, which sits at the prior mean 0).
pub fn predict_tirt(
    history: &[InteractionRecord],
    beta: &[f64],
    item: Option<u32>,
    cfg: &TirtConfig,
    at_time: u32,
    floor: f64,
) -> Result<f64> {
    let theta = estimate_current_proficiency(history, beta, cfg, at_time, floor)?;
    Ok(probit(theta - item.map(|i| beta_of(beta, i)).unwrap_or(0.0)))
}

fn beta_of(beta: &[f64], item: u32) -> f64 {
    beta.get(item as usize).copied().unwrap_or(0.0)
}
