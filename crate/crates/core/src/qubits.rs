//! Exact symbolic qubit algebra for the one-time-pad group `<X, Z(pi/4)>`
//! acting on `|+_theta>` states, and the weak-coherent-pulse source model.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::numerics::poisson_sample;

/// `X^flip * Z(rotation * pi/4)`, one of the 16 elements of the group.
///
/// Matrices compose right-to-left: the rotation acts first. Equality is up to
/// global phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupElement {
    pub flip: bool,
    rotation: u8,
}

impl GroupElement {
    pub const ORDER: usize = 16;
    pub const IDENTITY: GroupElement = GroupElement { flip: false, rotation: 0 };
    pub const X: GroupElement = GroupElement { flip: true, rotation: 0 };
    pub const Z: GroupElement = GroupElement { flip: false, rotation: 4 };

    pub fn new(flip: bool, rotation: u8) -> Self {
        Self { flip, rotation: rotation % 8 }
    }

    /// `Z(k pi/4)`.
    pub fn z_rotation(k: u8) -> Self {
        Self::new(false, k)
    }

    /// Rotation index `k` of the `Z(k pi/4)` factor, in `0..8`.
    pub fn rotation(&self) -> u8 {
        self.rotation
    }

    /// Dense index in `0..16`.
    pub fn index(&self) -> usize {
        (self.flip as usize) * 8 + self.rotation as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::new(i >= 8, (i % 8) as u8)
    }

    pub fn all() -> impl Iterator<Item = GroupElement> {
        (0..Self::ORDER).map(Self::from_index)
    }

    /// Uniform (Haar) draw over the finite group.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_index(rng.random_range(0..Self::ORDER))
    }

    /// `self * other`, using `Z(a) X = X Z(-a)`.
    pub fn compose(self, other: GroupElement) -> GroupElement {
        let carried = if other.flip { (8 - self.rotation) % 8 } else { self.rotation };
        GroupElement::new(self.flip ^ other.flip, carried + other.rotation)
    }

    pub fn inverse(self) -> GroupElement {
        if self.flip {
            // (X Z(a))^2 = X X Z(-a) Z(a) = I
            self
        } else {
            GroupElement::new(false, 8 - self.rotation)
        }
    }

    /// Action on `|+_theta>`: `Z(a)` shifts the angle, `X` negates it.
    pub fn act(self, state: PlusState) -> PlusState {
        let shifted = (state.angle + self.rotation) % 8;
        if self.flip {
            PlusState::new(8 - shifted)
        } else {
            PlusState::new(shifted)
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.flip, self.rotation) {
            (false, 0) => write!(f, "I"),
            (false, k) => write!(f, "Z({k}pi/4)"),
            (true, 0) => write!(f, "X"),
            (true, k) => write!(f, "X.Z({k}pi/4)"),
        }
    }
}

/// `|+_theta>` with `theta = angle * pi/4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlusState {
    angle: u8,
}

impl PlusState {
    /// The reference state `rho_0 = |+>`.
    pub const REFERENCE: PlusState = PlusState { angle: 0 };

    pub fn new(angle: u8) -> Self {
        Self { angle: angle % 8 }
    }

    pub fn angle(&self) -> u8 {
        self.angle
    }
}

/// What a weak coherent pulse delivers to the receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// `copies` identical photons in `state` (zero copies for vacuum).
    Quantum { state: PlusState, copies: u64 },
    /// Malicious multiphoton branch: the photon count and the unitary in clear.
    Classical { photons: u64, unitary: GroupElement },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseEmission {
    pub photon_count: u64,
    pub payload: Payload,
}

impl PulseEmission {
    pub fn is_vacuum(&self) -> bool {
        self.photon_count == 0
    }

    /// The single-photon state the receiver can store, if it holds a quantum copy.
    pub fn quantum_state(&self) -> Option<PlusState> {
        match self.payload {
            Payload::Quantum { state, copies } if copies > 0 => Some(state),
            _ => None,
        }
    }
}

/// One call to the weak-coherent-pulse generator.
///
/// Honest channel: `n ~ Poisson(mu * eta)` copies of `g(rho_0)`. Malicious
/// (loss removed): `n ~ Poisson(mu)`, quantum copies when `n <= 1`, the
/// classical description `(n, g)` otherwise.
pub fn wcp_emit<R: Rng + ?Sized>(
    g: GroupElement,
    mu: f64,
    eta: f64,
    malicious: bool,
    rng: &mut R,
) -> Result<PulseEmission> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(param("eta", format!("transmittance must lie in [0, 1], got {eta}")));
    }
    if !mu.is_finite() || mu < 0.0 {
        return Err(param("mu", format!("intensity must be finite and >= 0, got {mu}")));
    }
    let mean = if malicious { mu } else { mu * eta };
    let n = poisson_sample(mean, rng)?;
    Ok(emission_for(g, n, malicious))
}

/// Payload shape for a given photon count and branch.
pub fn emission_for(g: GroupElement, photon_count: u64, malicious: bool) -> PulseEmission {
    let payload = if malicious && photon_count > 1 {
        Payload::Classical { photons: photon_count, unitary: g }
    } else {
        Payload::Quantum { state: g.act(PlusState::REFERENCE), copies: photon_count }
    };
    PulseEmission { photon_count, payload }
}
