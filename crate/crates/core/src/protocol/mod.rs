//! Executable sender/receiver state machines for batch remote state
//! preparation from weak coherent pulses, and the ideal batch resource they
//! are checked against.
//!
//! A run has four messages, in order: emissions, acknowledgement,
//! corrections, receiver output. Any `Abort` ends the transcript.

mod params;
mod receivers;
mod transcript;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use params::{batch_size_for, mean_detection, ProtocolParams};
pub use receivers::{FirstNonEmptyReceiver, HonestReceiver, PnsReceiver, ReceiverStrategy, ScriptedReceiver};
pub use transcript::{read_jsonl, write_jsonl, TranscriptRecord};

use crate::error::{param, Error, Result};
use crate::estimation::{Estimator, Verdict};
use crate::numerics::RngStream;
use crate::qubits::{wcp_emit, GroupElement, PlusState, PulseEmission};

const SENDER_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;
const RECEIVER_STREAM: u64 = 3;

/// A message slot that is either the message or `Abort`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step<T> {
    Abort,
    Sent(T),
}

impl<T> Step<T> {
    pub fn sent(&self) -> Option<&T> {
        match self {
            Step::Sent(t) => Some(t),
            Step::Abort => None,
        }
    }
}

/// Receiver acknowledgement: `K` round indices, or `Abort`.
pub type Ack = Step<Vec<usize>>;

/// Sender's corrections: relabeling `sigma` and `U~_j = U_{sigma(j)} U'_j^dagger`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corrections {
    pub sigma: Vec<usize>,
    pub unitaries: Vec<GroupElement>,
}

/// Full classical message history of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub emissions: Vec<PulseEmission>,
    pub ack: Ack,
    /// `None` when the run ended before the sender spoke.
    pub corrections: Option<Step<Corrections>>,
    pub output: Option<Vec<PlusState>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome<'a> {
    ReceiverAbort,
    SenderAbort,
    Completed(&'a [PlusState]),
}

impl Transcript {
    pub fn outcome(&self) -> RunOutcome<'_> {
        match (&self.ack, &self.corrections, &self.output) {
            (Step::Abort, _, _) => RunOutcome::ReceiverAbort,
            (_, Some(Step::Abort), _) => RunOutcome::SenderAbort,
            (_, _, Some(out)) => RunOutcome::Completed(out),
            _ => unreachable!("transcripts are built in message order"),
        }
    }

    pub fn aborted(&self) -> bool {
        !matches!(self.outcome(), RunOutcome::Completed(_))
    }

    /// Estimation verdict, if estimation ran.
    pub fn estimation(&self) -> Option<Verdict> {
        match &self.corrections {
            Some(Step::Sent(_)) => Some(Verdict::Accept),
            Some(Step::Abort) => Some(Verdict::Abort),
            None => None,
        }
    }

    /// The receiver passed estimation holding no pulse with fewer than two
    /// photons: it learned every kept state.
    pub fn cheat_succeeded(&self) -> bool {
        match (&self.ack, self.estimation()) {
            (Step::Sent(rounds), Some(Verdict::Accept)) => {
                rounds.iter().all(|&r| self.emissions[r].photon_count >= 2)
            }
            _ => false,
        }
    }
}

/// Sender secrets of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SenderState {
    /// `permutation[r]` is the original pulse index sent in round `r`.
    pub permutation: Vec<usize>,
    /// `U'_r` per round.
    pub pulse_unitaries: Vec<GroupElement>,
    pub targets: Vec<GroupElement>,
    pub sigma: Option<Vec<usize>>,
}

/// Output of the ideal batch resource on an honest receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdealBatchOutput {
    pub states: Vec<PlusState>,
}

pub fn ideal_batch(targets: &[GroupElement]) -> IdealBatchOutput {
    IdealBatchOutput { states: targets.iter().map(|u| u.act(PlusState::REFERENCE)).collect() }
}

/// Honest sender, honest receiver.
pub fn run_honest(
    params: &ProtocolParams,
    estimator: &dyn Estimator,
    targets: &[GroupElement],
    stream: RngStream,
) -> Result<Transcript> {
    run_with_receiver(params, estimator, targets, &mut HonestReceiver::default(), stream)
}

/// Honest sender against an arbitrary receiver.
pub fn run_with_receiver(
    params: &ProtocolParams,
    estimator: &dyn Estimator,
    targets: &[GroupElement],
    receiver: &mut dyn ReceiverStrategy,
    stream: RngStream,
) -> Result<Transcript> {
    run_detailed(params, estimator, targets, receiver, stream).map(|(t, _)| t)
}

/// As [`run_with_receiver`], also returning the sender's secrets.
pub fn run_detailed(
    params: &ProtocolParams,
    estimator: &dyn Estimator,
    targets: &[GroupElement],
    receiver: &mut dyn ReceiverStrategy,
    stream: RngStream,
) -> Result<(Transcript, SenderState)> {
    let n = params.n_pulses;
    let k = params.batch_size;
    if targets.len() != k {
        return Err(param("targets", format!("expected {k} target unitaries, got {}", targets.len())));
    }
    let mut sender_rng = stream.substream(SENDER_STREAM).rng();
    let mut channel_rng = stream.substream(CHANNEL_STREAM).rng();
    let mut receiver_rng = stream.substream(RECEIVER_STREAM).rng();

    // Sending WCP
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut sender_rng);
    let pulse_unitaries: Vec<GroupElement> = (0..n).map(|_| GroupElement::random(&mut sender_rng)).collect();
    let malicious = receiver.malicious();
    let emissions = permutation
        .iter()
        .zip(&pulse_unitaries)
        .map(|(&orig, &u)| wcp_emit(u, params.intensity(orig), params.eta, malicious, &mut channel_rng))
        .collect::<Result<Vec<_>>>()?;

    let mut sender = SenderState { permutation, pulse_unitaries, targets: targets.to_vec(), sigma: None };

    // Acknowledging WCP reception
    let ack = match receiver.acknowledge(&emissions, k, &mut receiver_rng) {
        Step::Abort => {
            let t = Transcript { emissions, ack: Step::Abort, corrections: None, output: None };
            return Ok((t, sender));
        }
        Step::Sent(rounds) => Step::Sent(validate_ack(rounds, n, k)?),
    };
    let rounds = ack.sent().expect("validated above").clone();

    // Estimation on un-permuted indices
    let original: Vec<usize> = rounds.iter().map(|&r| sender.permutation[r]).collect();
    if estimator.estimate(&original, &params.classes)? == Verdict::Abort {
        let t = Transcript { emissions, ack, corrections: Some(Step::Abort), output: None };
        return Ok((t, sender));
    }
    let mut sigma: Vec<usize> = (0..k).collect();
    sigma.shuffle(&mut sender_rng);
    let unitaries = rounds
        .iter()
        .enumerate()
        .map(|(j, &r)| targets[sigma[j]].compose(sender.pulse_unitaries[r].inverse()))
        .collect();
    let corrections = Corrections { sigma: sigma.clone(), unitaries };
    sender.sigma = Some(sigma);

    // Corrections
    let output = receiver.apply_corrections(&corrections);
    let t = Transcript { emissions, ack, corrections: Some(Step::Sent(corrections)), output: Some(output) };
    Ok((t, sender))
}

fn validate_ack(mut rounds: Vec<usize>, n: usize, k: usize) -> Result<Vec<usize>> {
    if rounds.len() != k {
        return Err(Error::ProtocolViolation(format!("acknowledged {} rounds, expected {k}", rounds.len())));
    }
    rounds.sort_unstable();
    if let Some(&r) = rounds.iter().find(|&&r| r >= n) {
        return Err(Error::ProtocolViolation(format!("acknowledged round {r} outside [0, {n})")));
    }
    if rounds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::ProtocolViolation("acknowledged a round twice".into()));
    }
    Ok(rounds)
}
