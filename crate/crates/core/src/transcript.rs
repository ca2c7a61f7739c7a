//! The classical-channel transcript of one protocol session: an append-only,
//! totally ordered record of every message the parties exchange, with a
//! length-prefixed binary serialization and a human-readable dump.
//!
//! Record layout (little-endian):
//!
//! ```text
//! [len: u32] [sequence: u32] [sender: u8] [tag: u8] [payload ...]
//! ```
//!
//! where `len` counts the bytes after the length field. Pair labels are
//! serialized as `left:right` integer pairs (`i32` each in the binary form).

use crate::channel::Basis;
use crate::decoder::GroupId;
use crate::error::{Error, Result};
use crate::pairing::PairLabel;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sender {
    Alice,
    Bob,
}

impl Sender {
    fn code(self) -> u8 {
        match self {
            Sender::Alice => 0,
            Sender::Bob => 1,
        }
    }

    fn from_code(c: u8, offset: usize) -> Result<Self> {
        match c {
            0 => Ok(Sender::Alice),
            1 => Ok(Sender::Bob),
            other => Err(Error::TranscriptDecode {
                offset,
                msg: format!("unknown sender code {other}"),
            }),
        }
    }
}

/// One classical message.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Bob's measured quadrature per pulse.
    BasisAnnounce { bases: Vec<Basis> },
    /// Alice's pair label per key pulse.
    PairAnnounce { pairs: Vec<PairLabel> },
    /// Bob's group id per kept pulse index.
    GroupAnnounce { assignments: Vec<(u32, GroupId)> },
    /// Error-correction accounting and verification digest for one group.
    SyndromeInfo {
        group: GroupId,
        leaked_bits: f64,
        digest: u64,
    },
    /// Seed and output length of the privacy-amplification hash.
    PaSeed { seed: u64, output_length: u64 },
}

impl Message {
    fn tag(&self) -> u8 {
        match self {
            Message::BasisAnnounce { .. } => 1,
            Message::PairAnnounce { .. } => 2,
            Message::GroupAnnounce { .. } => 3,
            Message::SyndromeInfo { .. } => 4,
            Message::PaSeed { .. } => 5,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Message::BasisAnnounce { .. } => "BasisAnnounce",
            Message::PairAnnounce { .. } => "PairAnnounce",
            Message::GroupAnnounce { .. } => "GroupAnnounce",
            Message::SyndromeInfo { .. } => "SyndromeInfo",
            Message::PaSeed { .. } => "PaSeed",
        }
    }
}

/// A sequenced message.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub sequence: u32,
    pub sender: Sender,
    pub message: Message,
}

/// Append-only ordered transcript.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    records: Vec<Record>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sender: Sender, message: Message) {
        let sequence = self.records.len() as u32;
        self.records.push(Record {
            sequence,
            sender,
            message,
        });
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Total leaked bits itemized across the transcript; every leaked bit is
    /// attributed to exactly one `SyndromeInfo` record.
    pub fn total_leaked_bits(&self) -> f64 {
        self.records
            .iter()
            .map(|r| match &r.message {
                Message::SyndromeInfo { leaked_bits, .. } => *leaked_bits,
                _ => 0.0,
            })
            .sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for record in &self.records {
            let payload = encode_payload(&record.message);
            out.extend_from_slice(&(6 + payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&record.sequence.to_le_bytes());
            out.push(record.sender.code());
            out.push(record.message.tag());
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut records = Vec::new();
        let mut pos = 0usize;
        while pos < bytes.len() {
            let len = read_u32(bytes, &mut pos)? as usize;
            if len < 6 || pos + len > bytes.len() {
                return Err(Error::TranscriptDecode {
                    offset: pos,
                    msg: format!("record length {len} exceeds remaining bytes"),
                });
            }
            let end = pos + len;
            let sequence = read_u32(bytes, &mut pos)?;
            let sender = Sender::from_code(read_u8(bytes, &mut pos)?, pos)?;
            let tag = read_u8(bytes, &mut pos)?;
            let message = decode_payload(tag, &bytes[pos..end], pos)?;
            pos = end;
            records.push(Record {
                sequence,
                sender,
                message,
            });
        }
        Ok(Self { records })
    }

    /// Human-readable dump, one line per record.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let sender = match r.sender {
                Sender::Alice => "Alice",
                Sender::Bob => "Bob",
            };
            let _ = write!(out, "{:06} {:<5} {:<13}", r.sequence, sender, r.message.name());
            match &r.message {
                Message::BasisAnnounce { bases } => {
                    let _ = writeln!(out, " n={}", bases.len());
                }
                Message::PairAnnounce { pairs } => {
                    let _ = write!(out, " n={}", pairs.len());
                    let shown: Vec<String> =
                        pairs.iter().take(8).map(|p| p.to_string()).collect();
                    let _ = writeln!(
                        out,
                        " [{}{}]",
                        shown.join(" "),
                        if pairs.len() > 8 { " ..." } else { "" }
                    );
                }
                Message::GroupAnnounce { assignments } => {
                    let _ = writeln!(out, " kept={}", assignments.len());
                }
                Message::SyndromeInfo {
                    group,
                    leaked_bits,
                    digest,
                } => {
                    let _ = writeln!(
                        out,
                        " group={group} leaked_bits={leaked_bits:.3} digest={digest:016x}"
                    );
                }
                Message::PaSeed {
                    seed,
                    output_length,
                } => {
                    let _ = writeln!(out, " seed={seed:016x} out_len={output_length}");
                }
            }
        }
        out
    }
}

fn encode_payload(message: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match message {
        Message::BasisAnnounce { bases } => {
            out.extend_from_slice(&(bases.len() as u32).to_le_bytes());
            let mut byte = 0u8;
            for (i, basis) in bases.iter().enumerate() {
                if *basis == Basis::P {
                    byte |= 1 << (i % 8);
                }
                if i % 8 == 7 {
                    out.push(byte);
                    byte = 0;
                }
            }
            if bases.len() % 8 != 0 {
                out.push(byte);
            }
        }
        Message::PairAnnounce { pairs } => {
            out.extend_from_slice(&(pairs.len() as u32).to_le_bytes());
            for p in pairs {
                out.extend_from_slice(&(p.left as i32).to_le_bytes());
                out.extend_from_slice(&(p.right as i32).to_le_bytes());
            }
        }
        Message::GroupAnnounce { assignments } => {
            out.extend_from_slice(&(assignments.len() as u32).to_le_bytes());
            for (index, group) in assignments {
                out.extend_from_slice(&index.to_le_bytes());
                out.extend_from_slice(&group.ber_bin.to_le_bytes());
                out.push(group.asym_bucket);
            }
        }
        Message::SyndromeInfo {
            group,
            leaked_bits,
            digest,
        } => {
            out.extend_from_slice(&group.ber_bin.to_le_bytes());
            out.push(group.asym_bucket);
            out.extend_from_slice(&leaked_bits.to_le_bytes());
            out.extend_from_slice(&digest.to_le_bytes());
        }
        Message::PaSeed {
            seed,
            output_length,
        } => {
            out.extend_from_slice(&seed.to_le_bytes());
            out.extend_from_slice(&output_length.to_le_bytes());
        }
    }
    out
}

fn decode_payload(tag: u8, bytes: &[u8], offset: usize) -> Result<Message> {
    let mut pos = 0usize;
    let msg = match tag {
        1 => {
            let n = read_u32(bytes, &mut pos)? as usize;
            let mut bases = Vec::with_capacity(n);
            for i in 0..n {
                let byte = *bytes.get(pos + i / 8).ok_or(Error::TranscriptDecode {
                    offset: offset + pos,
                    msg: "basis payload truncated".to_string(),
                })?;
                bases.push(if byte >> (i % 8) & 1 == 1 {
                    Basis::P
                } else {
                    Basis::X
                });
            }
            Message::BasisAnnounce { bases }
        }
        2 => {
            let n = read_u32(bytes, &mut pos)? as usize;
            let mut pairs = Vec::with_capacity(n);
            for _ in 0..n {
                let left = read_i32(bytes, &mut pos)? as i64;
                let right = read_i32(bytes, &mut pos)? as i64;
                pairs.push(PairLabel { left, right });
            }
            Message::PairAnnounce { pairs }
        }
        3 => {
            let n = read_u32(bytes, &mut pos)? as usize;
            let mut assignments = Vec::with_capacity(n);
            for _ in 0..n {
                let index = read_u32(bytes, &mut pos)?;
                let ber_bin = read_u16(bytes, &mut pos)?;
                let asym_bucket = read_u8(bytes, &mut pos)?;
                assignments.push((
                    index,
                    GroupId {
                        ber_bin,
                        asym_bucket,
                    },
                ));
            }
            Message::GroupAnnounce { assignments }
        }
        4 => {
            let ber_bin = read_u16(bytes, &mut pos)?;
            let asym_bucket = read_u8(bytes, &mut pos)?;
            let leaked_bits = f64::from_le_bytes(read_array::<8>(bytes, &mut pos)?);
            let digest = u64::from_le_bytes(read_array::<8>(bytes, &mut pos)?);
            Message::SyndromeInfo {
                group: GroupId {
                    ber_bin,
                    asym_bucket,
                },
                leaked_bits,
                digest,
            }
        }
        5 => {
            let seed = u64::from_le_bytes(read_array::<8>(bytes, &mut pos)?);
            let output_length = u64::from_le_bytes(read_array::<8>(bytes, &mut pos)?);
            Message::PaSeed {
                seed,
                output_length,
            }
        }
        other => {
            return Err(Error::TranscriptDecode {
                offset,
                msg: format!("unknown message tag {other}"),
            })
        }
    };
    Ok(msg)
}

fn read_array<const N: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let slice = bytes
        .get(*pos..*pos + N)
        .ok_or(Error::TranscriptDecode {
            offset: *pos,
            msg: "payload truncated".to_string(),
        })?;
    *pos += N;
    Ok(slice.try_into().expect("length checked"))
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array::<4>(bytes, pos)?))
}

fn read_u16(bytes: &[u8], pos: &mut usize) -> Result<u16> {
    Ok(u16::from_le_bytes(read_array::<2>(bytes, pos)?))
}

fn read_i32(bytes: &[u8], pos: &mut usize) -> Result<i32> {
    Ok(i32::from_le_bytes(read_array::<4>(bytes, pos)?))
}

fn read_u8(bytes: &[u8], pos: &mut usize) -> Result<u8> {
    let b = *bytes.get(*pos).ok_or(Error::TranscriptDecode {
        offset: *pos,
        msg: "payload truncated".to_string(),
    })?;
    *pos += 1;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_transcript() -> Transcript {
        let mut t = Transcript::new();
        t.push(
            Sender::Bob,
            Message::BasisAnnounce {
                bases: vec![Basis::X, Basis::P, Basis::P, Basis::X, Basis::P],
            },
        );
        t.push(
            Sender::Alice,
            Message::PairAnnounce {
                pairs: vec![
                    PairLabel { left: 2, right: 9 },
                    PairLabel { left: -10, right: -3 },
                ],
            },
        );
        t.push(
            Sender::Bob,
            Message::GroupAnnounce {
                assignments: vec![
                    (0, GroupId { ber_bin: 12, asym_bucket: 1 }),
                    (1, GroupId { ber_bin: 39, asym_bucket: 0 }),
                ],
            },
        );
        t.push(
            Sender::Bob,
            Message::SyndromeInfo {
                group: GroupId { ber_bin: 12, asym_bucket: 1 },
                leaked_bits: 17.25,
                digest: 0xdead_beef_1234_5678,
            },
        );
        t.push(
            Sender::Bob,
            Message::PaSeed {
                seed: 42,
                output_length: 128,
            },
        );
        t
    }

    #[test]
    fn roundtrip() {
        let t = sample_transcript();
        let bytes = t.encode();
        let back = Transcript::decode(&bytes).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn sequencing_and_leak_attribution() {
        let t = sample_transcript();
        for (i, r) in t.records().iter().enumerate() {
            assert_eq!(r.sequence as usize, i);
        }
        assert!((t.total_leaked_bits() - 17.25).abs() < 1e-12);
    }

    #[test]
    fn dump_contains_pair_labels() {
        let t = sample_transcript();
        let dump = t.dump();
        assert!(dump.contains("2:9"));
        assert!(dump.contains("-10:-3"));
        assert!(dump.contains("PaSeed"));
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(Transcript::decode(&[1, 2, 3]).is_err());
        let mut bytes = sample_transcript().encode();
        bytes[8] = 99; // sender byte of the first record
        assert!(Transcript::decode(&bytes).is_err());
        let len = bytes.len();
        assert!(Transcript::decode(&bytes[..len - 2]).is_err());
    }
}
