//! Binary transcript formats.
//!
//! Local transcript: magic `DPKL`, `u32` version, `u64` record count, then
//! records `u32 user | u16 slot | u8 kind | payload`, where kind 0 carries
//! one `i8` sign and kind 1 a `u32` length followed by that many `f64`.
//! Shuffle transcript: magic `DPKS`, `u32` version, `u64` count, then
//! 16-byte messages. All integers are little-endian.

use serde::{Deserialize, Serialize};

use super::shuffle::ShuffleMessage;
use crate::error::{Error, Result};

const LOCAL_MAGIC: &[u8; 4] = b"DPKL";
const SHUFFLE_MAGIC: &[u8; 4] = b"DPKS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Sign(i8),
    Vector(Vec<f64>),
}

/// One local-model report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMessage {
    pub user: u32,
    pub slot: u16,
    pub payload: Payload,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Wire(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<u64> {
        if self.take(4)? != magic {
            return Err(Error::Wire("bad magic".into()));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(Error::Wire(format!("unsupported version {v}")));
        }
        self.u64()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Wire(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn header(magic: &[u8; 4], count: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    out
}

pub fn write_local(msgs: &[LocalMessage]) -> Vec<u8> {
    let mut out = header(LOCAL_MAGIC, msgs.len());
    for m in msgs {
        out.extend_from_slice(&m.user.to_le_bytes());
        out.extend_from_slice(&m.slot.to_le_bytes());
        match &m.payload {
            Payload::Sign(s) => {
                out.push(0);
                out.push(*s as u8);
            }
            Payload::Vector(v) => {
                out.push(1);
                out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn read_local(buf: &[u8]) -> Result<Vec<LocalMessage>> {
    let mut r = Reader { buf, pos: 0 };
    let count = r.header(LOCAL_MAGIC)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let user = r.u32()?;
        let slot = r.u16()?;
        let payload = match r.u8()? {
            0 => {
                let s = r.u8()? as i8;
                if s != 1 && s != -1 {
                    return Err(Error::Wire(format!("sign {s}")));
                }
                Payload::Sign(s)
            }
            1 => {
                let len = r.u32()? as usize;
                let mut v = Vec::with_capacity(len.min(1 << 20));
                for _ in 0..len {
                    v.push(f64::from_bits(r.u64()?));
                }
                Payload::Vector(v)
            }
            k => return Err(Error::Wire(format!("unknown record kind {k}"))),
        };
        out.push(LocalMessage { user, slot, payload });
    }
    r.finish()?;
    Ok(out)
}

pub fn write_shuffle(msgs: &[ShuffleMessage]) -> Vec<u8> {
    let mut out = header(SHUFFLE_MAGIC, msgs.len());
    for m in msgs {
        out.extend_from_slice(&m.to_bytes());
    }
    out
}

pub fn read_shuffle(buf: &[u8]) -> Result<Vec<ShuffleMessage>> {
    let mut r = Reader { buf, pos: 0 };
    let count = r.header(SHUFFLE_MAGIC)?;
    let mut out = Vec::new();
    for _ in 0..count {
        out.push(ShuffleMessage::from_bytes(r.take(ShuffleMessage::BYTES)?)?);
    }
    r.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_round_trip() {
        let msgs = vec![
            LocalMessage {
                user: 3,
                slot: 1,
                payload: Payload::Sign(-1),
            },
            LocalMessage {
                user: 4,
                slot: 0,
                payload: Payload::Vector(vec![0.1, -2.5e-300, f64::MAX]),
            },
        ];
        let b = write_local(&msgs);
        assert_eq!(read_local(&b).unwrap(), msgs);
        assert_eq!(write_local(&read_local(&b).unwrap()), b);
        assert!(read_local(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(read_local(&extra).is_err());
    }

    #[test]
    fn shuffle_round_trip() {
        let msgs = vec![
            ShuffleMessage {
                bucket: 1,
                coord: 2,
                value: 3,
            };
            5
        ];
        let b = write_shuffle(&msgs);
        assert_eq!(b.len(), 16 + 5 * 16);
        assert_eq!(read_shuffle(&b).unwrap(), msgs);
        assert!(read_shuffle(b"DPKL\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
    }
}
