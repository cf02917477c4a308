//! The linear public-goods game: parameters, payoffs, random regrouping,
//! end-of-round feedback, and token-to-currency conversion.
//!
//! Contributions are whole tokens. Earnings are `f64` because the group share
//! `S * g / n` is fractional whenever `S * g` is not a multiple of `n`; with
//! the default parameters (g = 2, n = 4) every earning is a multiple of 0.5
//! and therefore exact in binary floating point.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Tokens = u32;
pub type SubjectId = usize;
pub type GroupId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    /// Each subject sees the four contributions of their own group.
    #[serde(alias = "group")]
    GroupFeedback,
    /// Each subject additionally sees all contributions in the session, clustered by group.
    #[serde(alias = "session", alias = "community")]
    SessionFeedback,
}

impl Treatment {
    pub fn label(self) -> &'static str {
        match self {
            Treatment::GroupFeedback => "group",
            Treatment::SessionFeedback => "session",
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" | "group_feedback" => Ok(Treatment::GroupFeedback),
            "session" | "community" | "session_feedback" => Ok(Treatment::SessionFeedback),
            other => Err(Error::Config(format!("unknown treatment `{other}`"))),
        }
    }
}

/// All parameters of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Tokens handed to every subject at the start of each round.
    pub endowment: Tokens,
    /// Factor applied to the group account before it is split equally.
    pub multiplier: f64,
    pub group_size: usize,
    pub group_count: usize,
    pub rounds: u32,
    pub treatment: Treatment,
    /// Currency units paid per token.
    pub conversion_rate: f64,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            endowment: 100,
            multiplier: 2.0,
            group_size: 4,
            group_count: 3,
            rounds: 80,
            treatment: Treatment::GroupFeedback,
            conversion_rate: 0.32,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn with_treatment(treatment: Treatment) -> Self {
        SessionConfig { treatment, ..Default::default() }
    }

    pub fn session_size(&self) -> usize {
        self.group_size * self.group_count
    }

    /// Marginal per-capita return of a token placed in the group account.
    pub fn mpcr(&self) -> f64 {
        self.multiplier / self.group_size as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.endowment == 0 {
            return Err(Error::Config("endowment must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("at least one round is required".into()));
        }
        if self.group_size < 2 || self.group_count == 0 {
            return Err(Error::Config(format!(
                "need groups of at least 2 and at least one group, got {}x{}",
                self.group_count, self.group_size
            )));
        }
        if !(self.multiplier > 1.0 && self.multiplier < self.group_size as f64) {
            return Err(Error::Config(format!(
                "multiplier {} outside the social-dilemma range (1, {})",
                self.multiplier, self.group_size
            )));
        }
        if !(self.conversion_rate.is_finite() && self.conversion_rate > 0.0) {
            return Err(Error::Config(format!(
                "conversion rate must be positive, got {}",
                self.conversion_rate
            )));
        }
        Ok(())
    }

    /// Earnings of one member given their own contribution and the group total.
    pub fn payoff(&self, own: Tokens, group_total: u64) -> f64 {
        f64::from(self.endowment - own) + self.group_share(group_total)
    }

    /// What each member receives from the group account.
    pub fn group_share(&self, group_total: u64) -> f64 {
        group_total as f64 * self.multiplier / self.group_size as f64
    }

    pub(crate) fn check_contribution(&self, subject: SubjectId, x: Tokens) -> Result<()> {
        if x > self.endowment {
            return Err(Error::Domain(format!(
                "subject {subject} contributed {x}, endowment is {}",
                self.endowment
            )));
        }
        Ok(())
    }
}

/// An unlabeled partition of the session into groups for one round.
///
/// Groups are kept in canonical order (members ascending, groups ordered by
/// their smallest member), so group ids only mean "position in this round".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub round: u32,
    pub groups: Vec<Vec<SubjectId>>,
}

impl GroupAssignment {
    pub fn new(round: u32, mut groups: Vec<Vec<SubjectId>>) -> Self {
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.sort_unstable_by_key(|g| g.first().copied().unwrap_or(usize::MAX));
        GroupAssignment { round, groups }
    }

    pub fn group_of(&self, subject: SubjectId) -> Option<GroupId> {
        self.groups.iter().position(|g| g.contains(&subject))
    }

    /// Per-subject group ids for subjects `0..session_size`.
    pub fn group_ids(&self, session_size: usize) -> Result<Vec<GroupId>> {
        let mut ids = vec![usize::MAX; session_size];
        for (gid, members) in self.groups.iter().enumerate() {
            for &s in members {
                let slot = ids.get_mut(s).ok_or_else(|| {
                    Error::Structure(format!("subject {s} outside session of {session_size}"))
                })?;
                if *slot != usize::MAX {
                    return Err(Error::Structure(format!("subject {s} assigned twice")));
                }
                *slot = gid;
            }
        }
        if let Some(s) = ids.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Structure(format!("subject {s} not assigned to any group")));
        }
        Ok(ids)
    }

    /// Checks the partition against a session configuration.
    pub fn validate(&self, config: &SessionConfig) -> Result<()> {
        if self.groups.len() != config.group_count {
            return Err(Error::Structure(format!(
                "expected {} groups, found {}",
                config.group_count,
                self.groups.len()
            )));
        }
        if let Some(g) = self.groups.iter().find(|g| g.len() != config.group_size) {
            return Err(Error::Structure(format!(
                "group of size {} where {} is required",
                g.len(),
                config.group_size
            )));
        }
        self.group_ids(config.session_size()).map(|_| ())
    }
}

/// Draws a uniformly random partition of `subjects` into groups of `group_size`.
pub fn assign_groups<R: Rng + ?Sized>(
    config: &SessionConfig,
    subjects: &[SubjectId],
    round: u32,
    rng: &mut R,
) -> Result<GroupAssignment> {
    if subjects.len() != config.session_size() {
        return Err(Error::Structure(format!(
            "{} subjects supplied for a session of {}",
            subjects.len(),
            config.session_size()
        )));
    }
    let mut order = subjects.to_vec();
    order.sort_unstable();
    if order.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Structure("duplicate subject id".into()));
    }
    order.shuffle(rng);
    let groups = order.chunks(config.group_size).map(<[_]>::to_vec).collect();
    Ok(GroupAssignment::new(round, groups))
}

/// Per-subject earnings for one round. `contributions` is indexed by subject id.
pub fn compute_round_payoffs(
    config: &SessionConfig,
    assignment: &GroupAssignment,
    contributions: &[Tokens],
) -> Result<Vec<f64>> {
    if contributions.len() != config.session_size() {
        return Err(Error::Structure(format!(
            "{} contributions for a session of {}",
            contributions.len(),
            config.session_size()
        )));
    }
    assignment.validate(config)?;
    for (s, &x) in contributions.iter().enumerate() {
        config.check_contribution(s, x)?;
    }
    let mut earnings = vec![0.0; contributions.len()];
    for members in &assignment.groups {
        let total: u64 = members.iter().map(|&s| u64::from(contributions[s])).sum();
        for &s in members {
            earnings[s] = config.payoff(contributions[s], total);
        }
    }
    Ok(earnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub contribution: Tokens,
    pub own: bool,
}

/// What one subject is shown after a round.
///
/// Panels carry contributions only. The own entry comes first in the group
/// panel and the remaining entries are sorted by contribution, descending, so
/// nothing in the view identifies another participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackView {
    pub subject_id: SubjectId,
    pub round: u32,
    pub own_contribution: Tokens,
    pub others_in_group_sum: u64,
    pub own_round_earnings_total: f64,
    pub earnings_from_private: f64,
    pub earnings_from_group: f64,
    pub group_panel: Vec<PanelEntry>,
    /// All groups of the session, own group first. Present only under session feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_panel: Option<Vec<Vec<PanelEntry>>>,
}

impl FeedbackView {
    pub fn others_in_group(&self) -> impl Iterator<Item = Tokens> + '_ {
        self.group_panel.iter().filter(|e| !e.own).map(|e| e.contribution)
    }

    pub fn mean_others_in_group(&self) -> f64 {
        let n = self.group_panel.len().saturating_sub(1).max(1);
        self.others_in_group_sum as f64 / n as f64
    }

    /// Contributions of everyone else in the session, if the treatment reveals them.
    pub fn others_in_session(&self) -> Option<impl Iterator<Item = Tokens> + '_> {
        self.session_panel
            .as_ref()
            .map(|p| p.iter().flatten().filter(|e| !e.own).map(|e| e.contribution))
    }
}

fn panel_for(members: &[SubjectId], contributions: &[Tokens], own: Option<SubjectId>) -> Vec<PanelEntry> {
    let mut others: Vec<Tokens> =
        members.iter().filter(|&&s| Some(s) != own).map(|&s| contributions[s]).collect();
    others.sort_unstable_by(|a, b| b.cmp(a));
    let mut panel = Vec::with_capacity(members.len());
    if let Some(o) = own {
        panel.push(PanelEntry { contribution: contributions[o], own: true });
    }
    panel.extend(others.into_iter().map(|c| PanelEntry { contribution: c, own: false }));
    panel
}

/// Builds the end-of-round view for `subject`.
pub fn build_feedback(
    config: &SessionConfig,
    assignment: &GroupAssignment,
    contributions: &[Tokens],
    earnings: &[f64],
    subject: SubjectId,
) -> Result<FeedbackView> {
    if subject >= contributions.len() || subject >= earnings.len() {
        return Err(Error::UnknownSubject(subject));
    }
    let own_gid = assignment.group_of(subject).ok_or(Error::UnknownSubject(subject))?;
    let members = &assignment.groups[own_gid];
    let own = contributions[subject];
    let group_total: u64 = members.iter().map(|&s| u64::from(contributions[s])).sum();

    let group_panel = panel_for(members, contributions, Some(subject));
    let session_panel = match config.treatment {
        Treatment::GroupFeedback => None,
        Treatment::SessionFeedback => {
            let mut rest: Vec<Vec<PanelEntry>> = assignment
                .groups
                .iter()
                .enumerate()
                .filter(|&(gid, _)| gid != own_gid)
                .map(|(_, m)| panel_for(m, contributions, None))
                .collect();
            rest.sort_unstable_by(|a, b| {
                let ka: Vec<_> = a.iter().map(|e| e.contribution).collect();
                let kb: Vec<_> = b.iter().map(|e| e.contribution).collect();
                kb.cmp(&ka)
            });
            let mut panel = vec![group_panel.clone()];
            panel.extend(rest);
            Some(panel)
        }
    };

    Ok(FeedbackView {
        subject_id: subject,
        round: assignment.round,
        own_contribution: own,
        others_in_group_sum: group_total - u64::from(own),
        own_round_earnings_total: earnings[subject],
        earnings_from_private: f64::from(config.endowment - own),
        earnings_from_group: config.group_share(group_total),
        group_panel,
        session_panel,
    })
}

/// A currency amount with exactly two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CurrencyAmount(Decimal);

impl CurrencyAmount {
    pub fn as_decimal(&self) -> Decimal {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.to_string().parse().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for CurrencyAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

impl Serialize for CurrencyAmount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CurrencyAmount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v = Decimal::from_str(&s).map_err(serde::de::Error::custom)?;
        Ok(CurrencyAmount(v.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero)))
    }
}

fn exact_decimal(v: f64, what: &str) -> Result<Decimal> {
    // Display for f64 yields the shortest string that round-trips, so 0.0018 stays 0.0018.
    Decimal::from_str(&v.to_string())
        .map_err(|e| Error::Domain(format!("{what} {v} not representable: {e}")))
}

/// Converts a token total into currency, rounded half-up to two decimals.
pub fn convert_tokens(total_tokens: f64, conversion_rate: f64) -> Result<CurrencyAmount> {
    if !(total_tokens.is_finite() && total_tokens >= 0.0) {
        return Err(Error::Domain(format!("token total must be nonnegative, got {total_tokens}")));
    }
    if !(conversion_rate.is_finite() && conversion_rate > 0.0) {
        return Err(Error::Domain(format!("conversion rate must be positive, got {conversion_rate}")));
    }
    let amount = exact_decimal(total_tokens, "token total")?
        .checked_mul(exact_decimal(conversion_rate, "conversion rate")?)
        .ok_or_else(|| Error::Domain("currency amount overflows".into()))?;
    let mut rounded = amount.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero);
    rounded.rescale(2);
    Ok(CurrencyAmount(rounded))
}
