//! Line-delimited JSON encoding of transcripts, one message per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Ack, Corrections, Step, Transcript};
use crate::error::{Error, Result};
use crate::qubits::{PlusState, PulseEmission};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "msg", rename_all = "snake_case")]
pub enum TranscriptRecord {
    Emission { round: usize, emission: PulseEmission },
    Ack { ack: Ack },
    Corrections { corrections: Step<Corrections> },
    Output { states: Vec<PlusState> },
}

pub fn write_jsonl<W: Write>(transcript: &Transcript, mut out: W) -> Result<()> {
    let mut line = |rec: TranscriptRecord| -> Result<()> {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    for (round, e) in transcript.emissions.iter().enumerate() {
        line(TranscriptRecord::Emission { round, emission: e.clone() })?;
    }
    line(TranscriptRecord::Ack { ack: transcript.ack.clone() })?;
    if let Some(c) = &transcript.corrections {
        line(TranscriptRecord::Corrections { corrections: c.clone() })?;
    }
    if let Some(o) = &transcript.output {
        line(TranscriptRecord::Output { states: o.clone() })?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Transcript> {
    let mut emissions = Vec::new();
    let mut ack = None;
    let mut corrections = None;
    let mut output = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("line {}: {what}", lineno + 1));
        match serde_json::from_str(&line)? {
            TranscriptRecord::Emission { round, emission } => {
                if ack.is_some() || round != emissions.len() {
                    return Err(bad("emission out of order"));
                }
                emissions.push(emission);
            }
            TranscriptRecord::Ack { ack: a } => {
                if ack.replace(a).is_some() {
                    return Err(bad("second acknowledgement"));
                }
            }
            TranscriptRecord::Corrections { corrections: c } => {
                if ack.is_none() || corrections.replace(c).is_some() {
                    return Err(bad("corrections out of order"));
                }
            }
            TranscriptRecord::Output { states } => {
                if !matches!(corrections, Some(Step::Sent(_))) || output.replace(states).is_some() {
                    return Err(bad("output out of order"));
                }
            }
        }
    }
    let ack = ack.ok_or_else(|| Error::Format("transcript has no acknowledgement".into()))?;
    Ok(Transcript { emissions, ack, corrections, output })
}
