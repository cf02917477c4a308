//! The session state machine. Every transition is a function of the current
//! state and one inbound message; the transport only routes messages.

use serde::{Deserialize, Serialize};
use vcm_core::game::{
    assign_groups, build_feedback, compute_round_payoffs, convert_tokens, FeedbackView, SessionConfig, SubjectId,
    Tokens,
};
use vcm_core::log::{LogHeader, Roster, SessionLog};
use vcm_core::rng::{stream_rng, RngState, GROUPING_STREAM};

use crate::protocol::{Inbound, OperatorCommand, Outbound, RejectReason, StatusReport, PROTOCOL_VERSION};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "round", rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    RoundOpen(u32),
    FeedbackPending(u32),
    Finished,
    Aborted,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Lobby => "lobby",
            Phase::RoundOpen(_) => "round_open",
            Phase::FeedbackPending(_) => "feedback_pending",
            Phase::Finished => "finished",
            Phase::Aborted => "aborted",
        }
    }

    pub fn round(self) -> u32 {
        match self {
            Phase::RoundOpen(t) | Phase::FeedbackPending(t) => t,
            _ => 0,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Finished | Phase::Aborted)
    }
}

/// Who sent a message: a connection that has not joined yet, or a joined subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Anonymous,
    Subject(SubjectId),
}

/// Where an outbound message goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// The connection the inbound message came from.
    Reply,
    Subject(SubjectId),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transition {
    pub messages: Vec<(Target, Outbound)>,
    /// False when the message was rejected or only triggered re-delivery.
    pub changed: bool,
    /// Set when this message completed a round.
    pub completed_round: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub config: SessionConfig,
    /// Join tokens; the index is the subject id.
    tokens: Vec<String>,
    operator_key: String,
    pub phase: Phase,
    joined: Vec<bool>,
    submissions: Vec<Option<Tokens>>,
    acks: Vec<bool>,
    /// Views of the last completed round, kept for re-delivery.
    feedback: Vec<FeedbackView>,
    pub log: SessionLog,
    rng: RngState,
}

impl SessionState {
    pub fn new(session_id: &str, config: SessionConfig, tokens: Vec<String>, operator_key: &str) -> Result<Self> {
        config.validate()?;
        let n = config.session_size();
        if tokens.len() != n {
            return Err(Error::Setup(format!("{} join tokens for a session of {n}", tokens.len())));
        }
        let mut sorted = tokens.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n || sorted.iter().any(|t| t.is_empty()) {
            return Err(Error::Setup("join tokens must be distinct and nonempty".into()));
        }
        if operator_key.is_empty() || tokens.iter().any(|t| t == operator_key) {
            return Err(Error::Setup("operator key must be nonempty and differ from join tokens".into()));
        }
        let rng = RngState::capture(config.seed, &stream_rng(config.seed, 0, GROUPING_STREAM));
        let log = SessionLog::new(LogHeader::new(session_id, config.clone(), Roster::live()));
        Ok(SessionState {
            session_id: session_id.to_string(),
            tokens,
            operator_key: operator_key.to_string(),
            phase: Phase::Lobby,
            joined: vec![false; n],
            submissions: vec![None; n],
            acks: vec![false; n],
            feedback: Vec::new(),
            log,
            rng,
            config,
        })
    }

    fn n(&self) -> usize {
        self.config.session_size()
    }

    pub fn status(&self) -> StatusReport {
        StatusReport {
            session_id: self.session_id.clone(),
            phase: self.phase.label().to_string(),
            round: self.phase.round(),
            joined: self.joined.iter().filter(|&&j| j).count(),
            submitted: self.submissions.iter().filter(|s| s.is_some()).count(),
            acknowledged: self.acks.iter().filter(|&&a| a).count(),
            rounds_completed: self.log.rounds_recorded(),
        }
    }

    /// Applies one message in place. Rejected messages leave the state untouched.
    pub fn apply(&mut self, origin: Origin, msg: &Inbound) -> Result<Transition> {
        match msg {
            Inbound::Join { token, protocol } => Ok(self.join(token, *protocol)),
            Inbound::SubmitAllocation { private_tokens, group_tokens, round } => {
                self.submit(origin, *private_tokens, *group_tokens, *round)
            }
            Inbound::AckFeedback { round } => self.ack(origin, *round),
            Inbound::Operator { key, command } => Ok(self.operator(key, *command)),
        }
    }

    fn join(&mut self, token: &str, protocol: u32) -> Transition {
        let mut tr = Transition::default();
        if protocol != PROTOCOL_VERSION {
            tr.messages.push(reply(RejectReason::VersionMismatch, format!("server speaks protocol {PROTOCOL_VERSION}")));
            return tr;
        }
        let Some(s) = self.tokens.iter().position(|t| t == token) else {
            tr.messages.push(reply(RejectReason::UnknownToken, "token not registered for this session"));
            return tr;
        };
        let c = &self.config;
        tr.messages.push((
            Target::Reply,
            Outbound::Welcome {
                protocol: PROTOCOL_VERSION,
                subject_id: s,
                session_id: self.session_id.clone(),
                treatment: c.treatment,
                endowment: c.endowment,
                multiplier: c.multiplier,
                group_size: c.group_size,
                rounds: c.rounds,
            },
        ));
        match self.phase {
            Phase::Lobby => {
                if !self.joined[s] {
                    self.joined[s] = true;
                    tr.changed = true;
                    if self.joined.iter().all(|&j| j) {
                        self.open_round(1, &mut tr);
                    }
                }
            }
            // Rejoin: re-deliver whatever this subject still has to act on.
            Phase::RoundOpen(t) => {
                let msg = match self.submissions[s] {
                    None => Outbound::EndowmentNotice { round: t, endowment: self.config.endowment },
                    Some(g) => Outbound::SubmissionReceived { round: t, group_tokens: g },
                };
                tr.messages.push((Target::Reply, msg));
            }
            Phase::FeedbackPending(_) => {
                if !self.acks[s] {
                    tr.messages.push((Target::Reply, Outbound::RoundFeedback { view: self.feedback[s].clone() }));
                }
            }
            Phase::Finished => {
                if let Ok(done) = self.completion(s) {
                    tr.messages.push((Target::Reply, done));
                }
            }
            Phase::Aborted => {
                tr.messages.push((Target::Reply, Outbound::SessionAborted { rounds_completed: self.log.rounds_recorded() }));
            }
        }
        tr
    }

    fn open_round(&mut self, t: u32, tr: &mut Transition) {
        self.phase = Phase::RoundOpen(t);
        self.submissions = vec![None; self.n()];
        self.acks = vec![false; self.n()];
        for s in 0..self.n() {
            tr.messages.push((Target::Subject(s), Outbound::EndowmentNotice { round: t, endowment: self.config.endowment }));
        }
    }

    fn submit(&mut self, origin: Origin, private: f64, group: f64, round: Option<u32>) -> Result<Transition> {
        let mut tr = Transition::default();
        let Origin::Subject(s) = origin else {
            tr.messages.push(reply(RejectReason::NotJoined, "join before submitting"));
            return Ok(tr);
        };
        let Phase::RoundOpen(t) = self.phase else {
            tr.messages.push(reply(RejectReason::OutOfPhase, format!("no round is open ({})", self.phase.label())));
            return Ok(tr);
        };
        if round.is_some_and(|r| r != t) {
            tr.messages.push(reply(RejectReason::OutOfPhase, format!("round {t} is open")));
            return Ok(tr);
        }
        if self.submissions[s].is_some() {
            tr.messages.push(reply(RejectReason::Duplicate, format!("already submitted in round {t}")));
            return Ok(tr);
        }
        let e = f64::from(self.config.endowment);
        let check = if !(private.is_finite() && group.is_finite()) {
            Err((RejectReason::Malformed, "amounts must be numbers".to_string()))
        } else if private < 0.0 || group < 0.0 {
            Err((RejectReason::Negative, "amounts cannot be negative".to_string()))
        } else if private.fract() != 0.0 || group.fract() != 0.0 {
            Err((RejectReason::NotInteger, "amounts must be whole tokens".to_string()))
        } else if private + group != e {
            Err((RejectReason::SumMismatch, format!("{private} + {group} != {e}")))
        } else {
            Ok(group as Tokens)
        };
        let g = match check {
            Ok(g) => g,
            Err((reason, detail)) => {
                tr.messages.push(reply(reason, detail));
                return Ok(tr);
            }
        };

        self.submissions[s] = Some(g);
        tr.changed = true;
        tr.messages.push((Target::Reply, Outbound::SubmissionReceived { round: t, group_tokens: g }));
        if self.submissions.iter().all(Option::is_some) {
            self.close_round(t, &mut tr)?;
        }
        Ok(tr)
    }

    /// Groups are drawn only after every allocation is in.
    fn close_round(&mut self, t: u32, tr: &mut Transition) -> Result<()> {
        let contributions: Vec<Tokens> = self.submissions.iter().map(|s| s.expect("all submitted")).collect();
        let ids: Vec<SubjectId> = (0..self.n()).collect();
        let mut rng = self.rng.restore();
        let assignment = assign_groups(&self.config, &ids, t, &mut rng)?;
        let earnings = compute_round_payoffs(&self.config, &assignment, &contributions)?;
        let views = (0..self.n())
            .map(|s| build_feedback(&self.config, &assignment, &contributions, &earnings, s))
            .collect::<vcm_core::Result<Vec<_>>>()?;
        self.log.push_round(&assignment, &contributions, &earnings)?;
        self.rng = RngState::capture(self.rng.seed, &rng);
        for (s, v) in views.iter().enumerate() {
            tr.messages.push((Target::Subject(s), Outbound::RoundFeedback { view: v.clone() }));
        }
        self.feedback = views;
        self.acks = vec![false; self.n()];
        self.phase = Phase::FeedbackPending(t);
        tr.completed_round = Some(t);
        Ok(())
    }

    fn completion(&self, s: SubjectId) -> Result<Outbound> {
        let total: f64 = self.log.records.iter().filter(|r| r.subject_id == s).map(|r| r.earnings).sum();
        Ok(Outbound::SessionComplete {
            total_tokens: total,
            currency_amount: convert_tokens(total, self.config.conversion_rate)?,
        })
    }

    fn ack(&mut self, origin: Origin, round: Option<u32>) -> Result<Transition> {
        let mut tr = Transition::default();
        let Origin::Subject(s) = origin else {
            tr.messages.push(reply(RejectReason::NotJoined, "join first"));
            return Ok(tr);
        };
        let Phase::FeedbackPending(t) = self.phase else {
            tr.messages.push(reply(RejectReason::OutOfPhase, format!("no feedback pending ({})", self.phase.label())));
            return Ok(tr);
        };
        if round.is_some_and(|r| r != t) {
            tr.messages.push(reply(RejectReason::OutOfPhase, format!("feedback pending for round {t}")));
            return Ok(tr);
        }
        if self.acks[s] {
            tr.messages.push(reply(RejectReason::Duplicate, format!("round {t} already acknowledged")));
            return Ok(tr);
        }
        self.acks[s] = true;
        tr.changed = true;
        if self.acks.iter().all(|&a| a) {
            if t == self.config.rounds {
                self.phase = Phase::Finished;
                for s in 0..self.n() {
                    let done = self.completion(s)?;
                    tr.messages.push((Target::Subject(s), done));
                }
            } else {
                self.open_round(t + 1, &mut tr);
            }
        }
        Ok(tr)
    }

    fn operator(&mut self, key: &str, command: OperatorCommand) -> Transition {
        let mut tr = Transition::default();
        if key != self.operator_key {
            tr.messages.push(reply(RejectReason::Unauthorized, "bad operator key"));
            return tr;
        }
        if command == OperatorCommand::Abort {
            if self.phase.is_terminal() {
                tr.messages.push(reply(RejectReason::OutOfPhase, "session already ended"));
                return tr;
            }
            self.phase = Phase::Aborted;
            self.log.header.complete = false;
            tr.changed = true;
            let rounds_completed = self.log.rounds_recorded();
            for s in (0..self.n()).filter(|&s| self.joined[s]) {
                tr.messages.push((Target::Subject(s), Outbound::SessionAborted { rounds_completed }));
            }
        }
        tr.messages.push((Target::Reply, Outbound::Status(self.status())));
        tr
    }
}

fn reply(reason: RejectReason, detail: impl Into<String>) -> (Target, Outbound) {
    (Target::Reply, Outbound::reject(reason, detail))
}

/// Pure form of [`SessionState::apply`].
pub fn handle_message(state: &SessionState, origin: Origin, msg: &Inbound) -> Result<(SessionState, Transition)> {
    let mut next = state.clone();
    let tr = next.apply(origin, msg)?;
    Ok((next, tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vcm_core::game::Treatment;

    pub(crate) fn tokens() -> Vec<String> {
        (0..12).map(|i| format!("tok-{i:02}")).collect()
    }

    fn joined(treatment: Treatment) -> SessionState {
        let mut st = SessionState::new("live-1", SessionConfig::with_treatment(treatment), tokens(), "op").unwrap();
        for tok in tokens() {
            st.apply(Origin::Anonymous, &Inbound::Join { token: tok, protocol: 1 }).unwrap();
        }
        st
    }

    fn submit(p: f64, g: f64) -> Inbound {
        Inbound::SubmitAllocation { private_tokens: p, group_tokens: g, round: None }
    }

    fn rejection(tr: &Transition) -> Option<RejectReason> {
        tr.messages.iter().find_map(|(_, m)| match m {
            Outbound::RejectSubmission { reason, .. } => Some(*reason),
            _ => None,
        })
    }

    #[test]
    fn lobby_opens_round_one_when_full() {
        let mut st = SessionState::new("s", SessionConfig::default(), tokens(), "op").unwrap();
        for (i, tok) in tokens().into_iter().enumerate() {
            let tr = st.apply(Origin::Anonymous, &Inbound::Join { token: tok, protocol: 1 }).unwrap();
            assert!(matches!(tr.messages[0], (Target::Reply, Outbound::Welcome { subject_id, .. }) if subject_id == i));
            if i < 11 {
                assert_eq!(st.phase, Phase::Lobby);
            } else {
                assert_eq!(st.phase, Phase::RoundOpen(1));
                let notices = tr.messages.iter().filter(|(_, m)| matches!(m, Outbound::EndowmentNotice { round: 1, endowment: 100 })).count();
                assert_eq!(notices, 12);
            }
        }
    }

    #[test]
    fn allocation_rules() {
        let mut st = joined(Treatment::GroupFeedback);
        let before = st.clone();
        let cases = [
            (submit(60.0, 50.0), RejectReason::SumMismatch),
            (submit(-10.0, 110.0), RejectReason::Negative),
            (submit(49.5, 50.5), RejectReason::NotInteger),
            (submit(f64::NAN, 100.0), RejectReason::Malformed),
            (Inbound::AckFeedback { round: None }, RejectReason::OutOfPhase),
            (Inbound::SubmitAllocation { private_tokens: 50.0, group_tokens: 50.0, round: Some(2) }, RejectReason::OutOfPhase),
        ];
        for (msg, reason) in cases {
            let tr = st.apply(Origin::Subject(0), &msg).unwrap();
            assert_eq!(rejection(&tr), Some(reason), "{msg:?}");
            assert!(!tr.changed);
            assert_eq!(st, before);
        }
        let tr = st.apply(Origin::Anonymous, &submit(50.0, 50.0)).unwrap();
        assert_eq!(rejection(&tr), Some(RejectReason::NotJoined));

        let tr = st.apply(Origin::Subject(0), &submit(50.0, 50.0)).unwrap();
        assert!(tr.changed);
        assert_eq!(tr.messages, vec![(Target::Reply, Outbound::SubmissionReceived { round: 1, group_tokens: 50 })]);
        let after = st.clone();
        let tr = st.apply(Origin::Subject(0), &submit(0.0, 100.0)).unwrap();
        assert_eq!(rejection(&tr), Some(RejectReason::Duplicate));
        assert_eq!(st, after);
    }

    #[test]
    fn join_errors() {
        let mut st = SessionState::new("s", SessionConfig::default(), tokens(), "op").unwrap();
        let tr = st.apply(Origin::Anonymous, &Inbound::Join { token: "nope".into(), protocol: 1 }).unwrap();
        assert_eq!(rejection(&tr), Some(RejectReason::UnknownToken));
        let tr = st.apply(Origin::Anonymous, &Inbound::Join { token: "tok-00".into(), protocol: 9 }).unwrap();
        assert_eq!(rejection(&tr), Some(RejectReason::VersionMismatch));
        assert!(SessionState::new("s", SessionConfig::default(), vec!["a".into(); 12], "op").is_err());
        assert!(SessionState::new("s", SessionConfig::default(), tokens(), "tok-03").is_err());
    }

    fn play_round(st: &mut SessionState, t: u32) -> Vec<(Target, Outbound)> {
        let mut out = Vec::new();
        for s in 0..12 {
            let g = ((s as u32 * 17 + t * 5) % 101) as f64;
            out.extend(st.apply(Origin::Subject(s), &submit(100.0 - g, g)).unwrap().messages);
        }
        for s in 0..12 {
            out.extend(st.apply(Origin::Subject(s), &Inbound::AckFeedback { round: Some(t) }).unwrap().messages);
        }
        out
    }

    #[test]
    fn full_session_produces_a_valid_log() {
        for treatment in [Treatment::GroupFeedback, Treatment::SessionFeedback] {
            let mut st = joined(treatment);
            let mut all = Vec::new();
            for t in 1..=80 {
                all.extend(play_round(&mut st, t));
            }
            assert_eq!(st.phase, Phase::Finished);
            st.log.validate().unwrap();
            let completes: Vec<f64> = all
                .iter()
                .filter_map(|(_, m)| match m {
                    Outbound::SessionComplete { total_tokens, .. } => Some(*total_tokens),
                    _ => None,
                })
                .collect();
            assert_eq!(completes, st.log.subject_totals());

            for (_, m) in &all {
                if let Outbound::RoundFeedback { view } = m {
                    assert_eq!(view.session_panel.is_some(), treatment == Treatment::SessionFeedback);
                }
                let json = crate::protocol::encode(m);
                assert!(!json.contains("tok-"), "{json}");
            }
        }
    }

    #[test]
    fn groups_match_the_simulator_stream() {
        // A live session draws its groups from replication 0 of the configured seed.
        let mut st = joined(Treatment::GroupFeedback);
        play_round(&mut st, 1);
        let mut rng = stream_rng(st.config.seed, 0, GROUPING_STREAM);
        let ids: Vec<_> = (0..12).collect();
        let a = assign_groups(&st.config, &ids, 1, &mut rng).unwrap();
        let logged: Vec<usize> = st.log.round(1).iter().map(|r| r.group_id).collect();
        assert_eq!(logged, a.group_ids(12).unwrap());
    }

    #[test]
    fn rejoin_redelivers() {
        let mut st = joined(Treatment::SessionFeedback);
        let join = Inbound::Join { token: "tok-04".into(), protocol: 1 };
        let tr = st.apply(Origin::Anonymous, &join).unwrap();
        assert!(!tr.changed);
        assert!(matches!(tr.messages[1].1, Outbound::EndowmentNotice { round: 1, .. }));
        for s in 0..12 {
            st.apply(Origin::Subject(s), &submit(50.0, 50.0)).unwrap();
        }
        let tr = st.apply(Origin::Anonymous, &join).unwrap();
        assert!(matches!(&tr.messages[1].1, Outbound::RoundFeedback { view } if view.subject_id == 4));
        st.apply(Origin::Subject(4), &Inbound::AckFeedback { round: None }).unwrap();
        let tr = st.apply(Origin::Anonymous, &join).unwrap();
        assert_eq!(tr.messages.len(), 1);
    }

    #[test]
    fn operator_status_and_abort() {
        let mut st = joined(Treatment::GroupFeedback);
        play_round(&mut st, 1);
        let tr = st.apply(Origin::Anonymous, &Inbound::Operator { key: "bad".into(), command: OperatorCommand::Abort }).unwrap();
        assert_eq!(rejection(&tr), Some(RejectReason::Unauthorized));
        let tr = st.apply(Origin::Anonymous, &Inbound::Operator { key: "op".into(), command: OperatorCommand::Status }).unwrap();
        assert!(matches!(&tr.messages[0].1, Outbound::Status(s) if s.round == 2 && s.rounds_completed == 1 && s.joined == 12));
        let tr = st.apply(Origin::Anonymous, &Inbound::Operator { key: "op".into(), command: OperatorCommand::Abort }).unwrap();
        assert!(tr.changed);
        assert_eq!(st.phase, Phase::Aborted);
        assert!(!st.log.header.complete);
        st.log.validate().unwrap();
        assert_eq!(tr.messages.iter().filter(|(_, m)| matches!(m, Outbound::SessionAborted { rounds_completed: 1 })).count(), 12);
    }

    #[test]
    fn pure_wrapper_leaves_input_alone() {
        let st = joined(Treatment::GroupFeedback);
        let (next, tr) = handle_message(&st, Origin::Subject(3), &submit(50.0, 50.0)).unwrap();
        assert!(tr.changed);
        assert_ne!(next, st);
        assert_eq!(st.status().submitted, 0);
        assert_eq!(next.status().submitted, 1);
    }
}
