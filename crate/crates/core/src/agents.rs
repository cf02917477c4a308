//! Behavioral policies for simulated participants.
//!
//! The `TobitLatent` policy is the generative reading of the censored
//! regression model: a linear index in the subject's own history and the
//! group's previous-round behavior, plus a normal disturbance, censored to
//! `[0, e]` and rounded to a whole token.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{FeedbackView, Tokens, Treatment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    FreeRider,
    FullCooperator,
    ConditionalCooperator,
    TobitLatent,
}

/// Coefficients of the latent contribution index, in tokens per unit of regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientRecord {
    pub intercept: f64,
    /// Own round-1 contribution.
    pub first: f64,
    /// Own contribution one round back.
    pub lag1: f64,
    /// Own contribution two rounds back.
    pub lag2: f64,
    /// Amount by which the subject exceeded the others' mean last round.
    pub over: f64,
    /// Amount by which the subject fell short of the others' mean last round.
    pub under: f64,
    /// Zero contributors among the rest of the session last round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_count: Option<f64>,
    /// Full contributors among the rest of the session last round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_count: Option<f64>,
}

impl CoefficientRecord {
    pub const ICELAND_GROUP: CoefficientRecord = CoefficientRecord {
        intercept: -11.56,
        first: 0.28,
        lag1: 0.70,
        lag2: 0.25,
        over: -0.31,
        under: 0.10,
        zero_count: None,
        full_count: None,
    };
    pub const US_GROUP: CoefficientRecord = CoefficientRecord {
        intercept: -32.67,
        first: 0.34,
        lag1: 1.11,
        lag2: 0.26,
        over: -0.42,
        under: 0.23,
        zero_count: None,
        full_count: None,
    };
    pub const ICELAND_SESSION: CoefficientRecord = CoefficientRecord {
        intercept: -5.78,
        first: 0.16,
        lag1: 0.67,
        lag2: 0.39,
        over: -0.24,
        under: -0.01,
        zero_count: Some(-1.04),
        full_count: Some(-0.85),
    };
    pub const US_SESSION: CoefficientRecord = CoefficientRecord {
        intercept: -22.85,
        first: 0.19,
        lag1: 1.07,
        lag2: 0.43,
        over: -0.61,
        under: 0.24,
        zero_count: Some(-1.27),
        full_count: Some(-1.19),
    };

    /// Built-in estimates by name: `iceland-group`, `us-group`, `iceland-session`, `us-session`
    /// (`community` is accepted in place of `session`).
    pub fn preset(name: &str) -> Option<CoefficientRecord> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "iceland-group" => Some(Self::ICELAND_GROUP),
            "us-group" => Some(Self::US_GROUP),
            "iceland-session" | "iceland-community" => Some(Self::ICELAND_SESSION),
            "us-session" | "us-community" => Some(Self::US_SESSION),
            _ => None,
        }
    }

    pub fn zeros() -> Self {
        CoefficientRecord {
            intercept: 0.0,
            first: 0.0,
            lag1: 0.0,
            lag2: 0.0,
            over: 0.0,
            under: 0.0,
            zero_count: None,
            full_count: None,
        }
    }

    pub fn uses_session_counts(&self) -> bool {
        self.zero_count.is_some() || self.full_count.is_some()
    }

    /// Coefficients in regressor order: intercept, first, lag1, lag2, over, under, then
    /// the session counts when present.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.intercept, self.first, self.lag1, self.lag2, self.over, self.under];
        if self.uses_session_counts() {
            v.push(self.zero_count.unwrap_or(0.0));
            v.push(self.full_count.unwrap_or(0.0));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawFamily {
    /// Normal with sd = `spread`, redrawn until it lands inside `[0, e]`.
    TruncatedNormal,
    /// Uniform on `[mean - spread, mean + spread]` intersected with `[0, e]`.
    Uniform,
}

/// Distribution of a round-1 contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDraw {
    #[serde(default = "InitialDraw::default_family")]
    pub family: DrawFamily,
    pub mean: f64,
    #[serde(default)]
    pub spread: f64,
}

impl Default for InitialDraw {
    fn default() -> Self {
        InitialDraw { family: DrawFamily::TruncatedNormal, mean: 45.0, spread: 25.0 }
    }
}

impl InitialDraw {
    fn default_family() -> DrawFamily {
        DrawFamily::TruncatedNormal
    }

    pub fn constant(value: f64) -> Self {
        InitialDraw { family: DrawFamily::TruncatedNormal, mean: value, spread: 0.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, endowment: Tokens, rng: &mut R) -> Tokens {
        let e = f64::from(endowment);
        let raw = if self.spread <= 0.0 {
            self.mean
        } else {
            match self.family {
                DrawFamily::TruncatedNormal => {
                    let normal = Normal::new(self.mean, self.spread).expect("spread is positive");
                    // Falls back to clamping when the mass inside [0, e] is negligible.
                    (0..1000)
                        .map(|_| normal.sample(rng))
                        .find(|v| (0.0..=e).contains(v))
                        .unwrap_or(self.mean)
                }
                DrawFamily::Uniform => {
                    let lo = (self.mean - self.spread).max(0.0);
                    let hi = (self.mean + self.spread).min(e);
                    if lo < hi {
                        rng.random_range(lo..=hi)
                    } else {
                        self.mean
                    }
                }
            }
        };
        round_tokens(raw, endowment)
    }
}

/// Censors to `[0, e]` and rounds half-up to a whole token.
pub fn round_tokens(value: f64, endowment: Tokens) -> Tokens {
    if value.is_nan() {
        return 0;
    }
    value.clamp(0.0, f64::from(endowment)).round() as Tokens
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientRecord>,
    /// Standard deviation of the latent disturbance, in tokens.
    #[serde(default = "AgentSpec::default_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub initial: InitialDraw,
}

impl AgentSpec {
    pub const DEFAULT_SIGMA: f64 = 20.0;

    fn default_sigma() -> f64 {
        Self::DEFAULT_SIGMA
    }

    fn simple(kind: AgentKind) -> Self {
        AgentSpec {
            kind,
            coefficients: None,
            noise_sigma: Self::DEFAULT_SIGMA,
            initial: InitialDraw::default(),
        }
    }

    pub fn free_rider() -> Self {
        Self::simple(AgentKind::FreeRider)
    }

    pub fn full_cooperator() -> Self {
        Self::simple(AgentKind::FullCooperator)
    }

    pub fn conditional_cooperator(initial: InitialDraw) -> Self {
        AgentSpec { initial, ..Self::simple(AgentKind::ConditionalCooperator) }
    }

    pub fn tobit_latent(coefficients: CoefficientRecord, noise_sigma: f64) -> Self {
        AgentSpec {
            coefficients: Some(coefficients),
            noise_sigma,
            ..Self::simple(AgentKind::TobitLatent)
        }
    }

    pub fn validate(&self, endowment: Tokens, treatment: Treatment) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.initial.mean.is_finite() && self.initial.spread.is_finite() && self.initial.spread >= 0.0) {
            return Err(Error::Config("initial draw needs a finite mean and nonnegative spread".into()));
        }
        if !(0.0..=f64::from(endowment)).contains(&self.initial.mean) {
            return Err(Error::Config(format!(
                "initial mean {} outside [0, {endowment}]",
                self.initial.mean
            )));
        }
        match (self.kind, &self.coefficients) {
            (AgentKind::TobitLatent, None) => {
                Err(Error::Config("tobit_latent agents need coefficients".into()))
            }
            (AgentKind::TobitLatent, Some(c))
                if c.uses_session_counts() && treatment == Treatment::GroupFeedback =>
            {
                Err(Error::Config(
                    "session-count coefficients are only meaningful under session feedback".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// What an agent remembers when deciding in round `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryView {
    pub own_first: Option<Tokens>,
    pub own_lag1: Option<Tokens>,
    pub own_lag2: Option<Tokens>,
    /// Mean of the other group members' contributions last round.
    pub mean_others_lag1: Option<f64>,
    /// Zero contributors among the other session members last round (session feedback only).
    pub zero_count_lag1: Option<u32>,
    /// Full contributors among the other session members last round (session feedback only).
    pub full_count_lag1: Option<u32>,
}

impl HistoryView {
    /// Round-1 view: nothing has been observed.
    pub fn empty() -> Self {
        HistoryView::default()
    }

    /// Builds the view from what the subject was actually shown.
    pub fn from_feedback(
        own_first: Tokens,
        last: &FeedbackView,
        before_last: Option<&FeedbackView>,
        endowment: Tokens,
    ) -> Self {
        let (zero, full) = match last.others_in_session() {
            Some(others) => {
                let (z, f) = others.fold((0, 0), |(z, f), c| {
                    (z + u32::from(c == 0), f + u32::from(c == endowment))
                });
                (Some(z), Some(f))
            }
            None => (None, None),
        };
        HistoryView {
            own_first: Some(own_first),
            own_lag1: Some(last.own_contribution),
            own_lag2: before_last.map(|v| v.own_contribution),
            mean_others_lag1: Some(last.mean_others_in_group()),
            zero_count_lag1: zero,
            full_count_lag1: full,
        }
    }

    pub fn over_lag1(&self) -> Option<f64> {
        Some((f64::from(self.own_lag1?) - self.mean_others_lag1?).max(0.0))
    }

    pub fn under_lag1(&self) -> Option<f64> {
        Some((self.mean_others_lag1? - f64::from(self.own_lag1?)).max(0.0))
    }
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Contract(format!("history view lacks {what}")))
}

/// The latent contribution index (unbounded).
pub fn latent_predictor(coeffs: &CoefficientRecord, view: &HistoryView) -> Result<f64> {
    let first = f64::from(need(view.own_first, "round-1 contribution")?);
    let lag1 = f64::from(need(view.own_lag1, "previous contribution")?);
    let lag2 = f64::from(need(view.own_lag2, "contribution two rounds back")?);
    let mean = need(view.mean_others_lag1, "others' mean")?;
    let over = (lag1 - mean).max(0.0);
    let under = (mean - lag1).max(0.0);
    let mut latent = coeffs.intercept
        + coeffs.first * first
        + coeffs.lag1 * lag1
        + coeffs.lag2 * lag2
        + coeffs.over * over
        + coeffs.under * under;
    if let Some(b) = coeffs.zero_count {
        latent += b * f64::from(need(view.zero_count_lag1, "zero-contributor count")?);
    }
    if let Some(b) = coeffs.full_count {
        latent += b * f64::from(need(view.full_count_lag1, "full-contributor count")?);
    }
    Ok(latent)
}

/// One agent's contribution in `round` (1-based).
pub fn agent_decide<R: Rng + ?Sized>(
    spec: &AgentSpec,
    view: &HistoryView,
    round: u32,
    endowment: Tokens,
    rng: &mut R,
) -> Result<Tokens> {
    if round == 0 {
        return Err(Error::Contract("rounds are numbered from 1".into()));
    }
    match spec.kind {
        AgentKind::FreeRider => Ok(0),
        AgentKind::FullCooperator => Ok(endowment),
        AgentKind::ConditionalCooperator => {
            if round == 1 {
                Ok(spec.initial.sample(endowment, rng))
            } else {
                let mean = need(view.mean_others_lag1, "others' mean")?;
                Ok(round_tokens(mean, endowment))
            }
        }
        AgentKind::TobitLatent => {
            if round == 1 {
                return Ok(spec.initial.sample(endowment, rng));
            }
            let coeffs = spec
                .coefficients
                .as_ref()
                .ok_or_else(|| Error::Contract("tobit_latent agent without coefficients".into()))?;
            let mut view = *view;
            if round == 2 {
                view.own_lag2 = view.own_lag2.or(view.own_lag1);
            }
            let latent = latent_predictor(coeffs, &view)?;
            let noise = if spec.noise_sigma > 0.0 {
                Normal::new(0.0, spec.noise_sigma)
                    .map_err(|e| Error::Contract(e.to_string()))?
                    .sample(rng)
            } else {
                0.0
            };
            Ok(round_tokens(latent + noise, endowment))
        }
    }
}
