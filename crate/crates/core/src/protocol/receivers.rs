//! Receiver strategies that can be plugged into a protocol run.

use rand::seq::index;

use super::{Ack, Corrections};
use crate::numerics::StreamRng;
use crate::qubits::{Payload, PlusState, PulseEmission};

/// Everything a receiver does in the protocol.
///
/// Kept states are relabeled `0..K` in increasing round order; correction `j`
/// and `sigma[j]` refer to that order.
pub trait ReceiverStrategy {
    /// Whether the receiver removes channel loss (the generator's `c = 1` input).
    fn malicious(&self) -> bool;

    /// Sees the whole emission stream and answers with `K` round indices or `Abort`.
    fn acknowledge(&mut self, emissions: &[PulseEmission], batch_size: usize, rng: &mut StreamRng) -> Ack;

    /// Receives the corrections and returns the receiver's output register.
    fn apply_corrections(&mut self, corrections: &Corrections) -> Vec<PlusState>;
}

fn apply(kept: &[PlusState], corrections: &Corrections) -> Vec<PlusState> {
    let mut out = vec![PlusState::REFERENCE; kept.len()];
    for (j, state) in kept.iter().enumerate() {
        // corrected state j holds target sigma(j); undoing sigma puts it there
        out[corrections.sigma[j]] = corrections.unitaries[j].act(*state);
    }
    out
}

/// Keeps a uniform `K`-subset of the non-empty rounds, one photon each.
#[derive(Debug, Default, Clone)]
pub struct HonestReceiver {
    kept: Vec<PlusState>,
}

impl ReceiverStrategy for HonestReceiver {
    fn malicious(&self) -> bool {
        false
    }

    fn acknowledge(&mut self, emissions: &[PulseEmission], batch_size: usize, rng: &mut StreamRng) -> Ack {
        let nonempty: Vec<usize> = (0..emissions.len()).filter(|&r| !emissions[r].is_vacuum()).collect();
        if nonempty.len() < batch_size {
            return Ack::Abort;
        }
        let mut chosen: Vec<usize> = index::sample(rng, nonempty.len(), batch_size)
            .into_iter()
            .map(|i| nonempty[i])
            .collect();
        chosen.sort_unstable();
        self.kept = chosen
            .iter()
            .map(|&r| emissions[r].quantum_state().expect("non-empty honest pulse carries photons"))
            .collect();
        Ack::Sent(chosen)
    }

    fn apply_corrections(&mut self, corrections: &Corrections) -> Vec<PlusState> {
        apply(&self.kept, corrections)
    }
}

/// Honest about the channel but deterministic: acknowledges the first `K`
/// non-empty rounds.
#[derive(Debug, Default, Clone)]
pub struct FirstNonEmptyReceiver {
    kept: Vec<PlusState>,
}

impl ReceiverStrategy for FirstNonEmptyReceiver {
    fn malicious(&self) -> bool {
        false
    }

    fn acknowledge(&mut self, emissions: &[PulseEmission], batch_size: usize, _rng: &mut StreamRng) -> Ack {
        let chosen: Vec<usize> = (0..emissions.len())
            .filter(|&r| !emissions[r].is_vacuum())
            .take(batch_size)
            .collect();
        if chosen.len() < batch_size {
            return Ack::Abort;
        }
        self.kept = chosen.iter().filter_map(|&r| emissions[r].quantum_state()).collect();
        Ack::Sent(chosen)
    }

    fn apply_corrections(&mut self, corrections: &Corrections) -> Vec<PlusState> {
        apply(&self.kept, corrections)
    }
}

/// Photon-number-splitting receiver: removes the loss, acknowledges only
/// multiphoton pulses (highest photon numbers first, uniform among ties) and
/// reconstructs every kept state from the leaked classical descriptions.
///
/// Its census projection is the greedy PNS adversary of the security game.
#[derive(Debug, Default, Clone)]
pub struct PnsReceiver {
    kept: Vec<PlusState>,
}

impl ReceiverStrategy for PnsReceiver {
    fn malicious(&self) -> bool {
        true
    }

    fn acknowledge(&mut self, emissions: &[PulseEmission], batch_size: usize, rng: &mut StreamRng) -> Ack {
        let max_n = emissions.iter().map(|e| e.photon_count).max().unwrap_or(0);
        let mut chosen = Vec::with_capacity(batch_size);
        let mut n = max_n;
        while n >= 2 && chosen.len() < batch_size {
            let group: Vec<usize> = (0..emissions.len()).filter(|&r| emissions[r].photon_count == n).collect();
            let need = batch_size - chosen.len();
            if group.len() <= need {
                chosen.extend(group);
            } else {
                chosen.extend(index::sample(rng, group.len(), need).into_iter().map(|i| group[i]));
            }
            n -= 1;
        }
        if chosen.len() < batch_size {
            return Ack::Abort;
        }
        chosen.sort_unstable();
        self.kept = chosen
            .iter()
            .map(|&r| match emissions[r].payload {
                Payload::Classical { unitary, .. } => unitary.act(PlusState::REFERENCE),
                Payload::Quantum { state, .. } => state,
            })
            .collect();
        Ack::Sent(chosen)
    }

    fn apply_corrections(&mut self, corrections: &Corrections) -> Vec<PlusState> {
        apply(&self.kept, corrections)
    }
}

/// Replays a fixed acknowledgement; used to check that the sender's messages
/// depend on the receiver only through `I'`.
#[derive(Debug, Clone)]
pub struct ScriptedReceiver {
    pub ack: Ack,
    pub malicious: bool,
}

impl ReceiverStrategy for ScriptedReceiver {
    fn malicious(&self) -> bool {
        self.malicious
    }

    fn acknowledge(&mut self, _emissions: &[PulseEmission], _batch_size: usize, _rng: &mut StreamRng) -> Ack {
        self.ack.clone()
    }

    fn apply_corrections(&mut self, corrections: &Corrections) -> Vec<PlusState> {
        vec![PlusState::REFERENCE; corrections.sigma.len()]
    }
}
