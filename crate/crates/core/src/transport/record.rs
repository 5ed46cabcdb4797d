//! Bit-exact packet encoding shared by record files and the byte stream.
//!
//! ```text
//! packet:  tick u64 LE | count u8 | command * count
//! command: chain u8 | n u8 | frame data u8 * n | parity flags u8 (bit i = frame i)
//! stream:  length u32 LE | packet
//! ```

use std::io::{self, Read};

use super::{ChainCommand, Packet, TransportError};
use crate::protocol::{self, FrameByte};
use crate::sim::{MAX_CHAINS, MAX_COMMANDS_PER_PACKET};

pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, TransportError> {
    if packet.commands.len() > MAX_COMMANDS_PER_PACKET {
        return Err(TransportError::Overflow(packet.commands.len()));
    }
    let mut out = Vec::with_capacity(9 + packet.commands.len() * 5);
    out.extend_from_slice(&packet.tick.to_le_bytes());
    out.push(packet.commands.len() as u8);
    for c in &packet.commands {
        let frames = protocol::encode(&c.command)?;
        out.push(c.chain);
        out.push(frames.len() as u8);
        out.extend(frames.iter().map(|f| f.data));
        out.push(
            frames
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, f)| acc | (u8::from(f.parity) << i)),
        );
    }
    Ok(out)
}

/// Concatenated packets, as written by a record-file endpoint.
pub fn encode_record(packets: &[Packet]) -> Result<Vec<u8>, TransportError> {
    let mut out = Vec::new();
    for p in packets {
        out.extend(encode_packet(p)?);
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], TransportError> {
        if self.bytes.len() - self.pos < n {
            return Err(TransportError::Parse {
                offset: self.pos,
                message: format!("truncated {what}: need {n} byte(s), {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn byte(&mut self, what: &str) -> Result<u8, TransportError> {
        Ok(self.take(1, what)?[0])
    }
}

fn parse_at(cur: &mut Cursor<'_>) -> Result<Packet, TransportError> {
    let tick = u64::from_le_bytes(cur.take(8, "tick")?.try_into().expect("8 bytes"));
    let count_at = cur.pos;
    let count = cur.byte("command count")? as usize;
    if count > MAX_COMMANDS_PER_PACKET {
        return Err(TransportError::Parse {
            offset: count_at,
            message: format!("{count} commands exceed the per-packet limit"),
        });
    }
    let mut commands = Vec::with_capacity(count);
    for _ in 0..count {
        let at = cur.pos;
        let chain = cur.byte("chain id")?;
        if usize::from(chain) >= MAX_CHAINS {
            return Err(TransportError::Parse {
                offset: at,
                message: format!("chain id {chain} out of range"),
            });
        }
        let n = cur.byte("frame count")? as usize;
        if !(1..=2).contains(&n) {
            return Err(TransportError::Parse {
                offset: at + 1,
                message: format!("frame count {n} is not 1 or 2"),
            });
        }
        let data = cur.take(n, "frames")?;
        let flags_at = cur.pos;
        let flags = cur.byte("parity flags")?;
        if flags >> n != 0 {
            return Err(TransportError::Parse {
                offset: flags_at,
                message: format!("parity flags {flags:#04x} set bits beyond {n} frame(s)"),
            });
        }
        let frames: Vec<FrameByte> = data
            .iter()
            .enumerate()
            .map(|(i, &d)| FrameByte {
                data: d,
                parity: flags >> i & 1 == 1,
            })
            .collect();
        let command = protocol::decode(&frames).map_err(|e| TransportError::Parse {
            offset: at,
            message: e.to_string(),
        })?;
        commands.push(ChainCommand { chain, command });
    }
    Ok(Packet { tick, commands })
}

/// Parses a record file; ticks must not decrease.
pub fn parse_record(bytes: &[u8]) -> Result<Vec<Packet>, TransportError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let mut out: Vec<Packet> = Vec::new();
    while cur.pos < bytes.len() {
        let at = cur.pos;
        let p = parse_at(&mut cur)?;
        if let Some(prev) = out.last() {
            if p.tick < prev.tick {
                return Err(TransportError::Parse {
                    offset: at,
                    message: format!("tick {} precedes tick {}", p.tick, prev.tick),
                });
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Parses one packet body, requiring it to be consumed exactly.
pub fn parse_packet(bytes: &[u8]) -> Result<Packet, TransportError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let p = parse_at(&mut cur)?;
    if cur.pos != bytes.len() {
        return Err(TransportError::Parse {
            offset: cur.pos,
            message: format!("{} trailing byte(s)", bytes.len() - cur.pos),
        });
    }
    Ok(p)
}

pub fn frame_stream_packet(packet: &Packet) -> Result<Vec<u8>, TransportError> {
    let body = encode_packet(packet)?;
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend(body);
    Ok(out)
}

/// Reads one length-prefixed packet; `Ok(None)` at a clean end of stream.
pub fn read_stream_packet(reader: &mut impl Read) -> Result<Option<Packet>, TransportError> {
    let mut len = [0u8; 4];
    match reader.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut body = vec![0u8; u32::from_le_bytes(len) as usize];
    reader.read_exact(&mut body)?;
    parse_packet(&body).map(Some)
}
