//! Length-prefixed wire protocol between the federator and agency nodes.
//!
//! Frame = total_len u32 LE | msg_type u8 | request_id [u8;16] | body,
//! where total_len counts everything after itself (msg_type + request_id +
//! body). All integers little-endian.

use std::io::{Read, Write};

use thiserror::Error;

use crate::store::EncryptedRecord;

pub const PROTOCOL_VERSION: u8 = 1;

/// Caps a frame at 256 MiB; anything larger is a corrupt length prefix.
pub const MAX_FRAME_LEN: u32 = 256 * 1024 * 1024;

pub const MSG_PING: u8 = 0x01;
pub const MSG_QUERY: u8 = 0x02;
pub const MSG_SCORES: u8 = 0x03;
pub const MSG_FETCH: u8 = 0x04;
pub const MSG_RECORDS: u8 = 0x05;
pub const MSG_ERROR: u8 = 0x7F;

/// Error codes carried in ERROR frames.
pub const ERR_PARAMS_MISMATCH: u16 = 1;
pub const ERR_MALFORMED_QUERY: u16 = 2;
pub const ERR_NOT_FOUND: u16 = 3;
pub const ERR_UNSUPPORTED_VERSION: u16 = 4;
pub const ERR_INTERNAL: u16 = 5;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame of {0} bytes exceeds the protocol maximum")]
    FrameTooLarge(u32),

    #[error("truncated message: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },

    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),

    #[error("malformed {msg} body: {detail}")]
    Malformed { msg: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Request: client's protocol version. Response: node's version plus
    /// its node id.
    Ping {
        version: u8,
        node_id: String,
    },
    Query {
        params_digest: [u8; 32],
        ciphertext: Vec<u8>,
    },
    Scores {
        scores: Vec<(u64, Vec<u8>)>,
    },
    Fetch {
        ids: Vec<u64>,
    },
    Records {
        records: Vec<EncryptedRecord>,
    },
    Error {
        code: u16,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub request_id: [u8; 16],
    pub message: Message,
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (msg_type, body) = encode_body(&self.message);
        let total_len = 1 + 16 + body.len();
        let mut out = Vec::with_capacity(4 + total_len);
        out.extend_from_slice(&(total_len as u32).to_le_bytes());
        out.push(msg_type);
        out.extend_from_slice(&self.request_id);
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Envelope, usize), WireError> {
        if bytes.len() < 4 {
            return Err(WireError::Truncated {
                need: 4,
                have: bytes.len(),
            });
        }
        let total_len = u32::from_le_bytes(bytes[..4].try_into().unwrap());
        if total_len > MAX_FRAME_LEN {
            return Err(WireError::FrameTooLarge(total_len));
        }
        let total_len = total_len as usize;
        if bytes.len() < 4 + total_len {
            return Err(WireError::Truncated {
                need: 4 + total_len,
                have: bytes.len(),
            });
        }
        if total_len < 17 {
            return Err(WireError::Malformed {
                msg: "frame",
                detail: format!("total_len {} below minimum 17", total_len),
            });
        }
        let msg_type = bytes[4];
        let request_id: [u8; 16] = bytes[5..21].try_into().unwrap();
        let body = &bytes[21..4 + total_len];
        let message = decode_body(msg_type, body)?;
        Ok((
            Envelope {
                request_id,
                message,
            },
            4 + total_len,
        ))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), WireError> {
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Envelope, WireError> {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)?;
        let total_len = u32::from_le_bytes(len_buf);
        if total_len > MAX_FRAME_LEN {
            return Err(WireError::FrameTooLarge(total_len));
        }
        let mut rest = vec![0u8; total_len as usize];
        r.read_exact(&mut rest)?;
        let mut full = len_buf.to_vec();
        full.extend_from_slice(&rest);
        let (env, _) = Envelope::from_bytes(&full)?;
        Ok(env)
    }
}

fn encode_body(msg: &Message) -> (u8, Vec<u8>) {
    match msg {
        Message::Ping { version, node_id } => {
            let mut b = vec![*version];
            b.extend_from_slice(node_id.as_bytes());
            (MSG_PING, b)
        }
        Message::Query {
            params_digest,
            ciphertext,
        } => {
            let mut b = Vec::with_capacity(40 + ciphertext.len());
            b.extend_from_slice(params_digest);
            b.extend_from_slice(&(ciphertext.len() as u64).to_le_bytes());
            b.extend_from_slice(ciphertext);
            (MSG_QUERY, b)
        }
        Message::Scores { scores } => {
            let mut b = Vec::new();
            b.extend_from_slice(&(scores.len() as u32).to_le_bytes());
            for (id, ct) in scores {
                b.extend_from_slice(&id.to_le_bytes());
                b.extend_from_slice(&(ct.len() as u64).to_le_bytes());
                b.extend_from_slice(ct);
            }
            (MSG_SCORES, b)
        }
        Message::Fetch { ids } => {
            let mut b = Vec::with_capacity(4 + ids.len() * 8);
            b.extend_from_slice(&(ids.len() as u32).to_le_bytes());
            for id in ids {
                b.extend_from_slice(&id.to_le_bytes());
            }
            (MSG_FETCH, b)
        }
        Message::Records { records } => {
            let mut b = Vec::new();
            b.extend_from_slice(&(records.len() as u32).to_le_bytes());
            for rec in records {
                let row = rec.to_bytes();
                b.extend_from_slice(&row);
            }
            (MSG_RECORDS, b)
        }
        Message::Error { code, message } => {
            let mut b = Vec::with_capacity(2 + message.len());
            b.extend_from_slice(&code.to_le_bytes());
            b.extend_from_slice(message.as_bytes());
            (MSG_ERROR, b)
        }
    }
}

struct BodyReader<'a> {
    body: &'a [u8],
    pos: usize,
    msg: &'static str,
}

impl<'a> BodyReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.body.len() - self.pos < n {
            return Err(WireError::Malformed {
                msg: self.msg,
                detail: format!("body needs {} more bytes", n - (self.body.len() - self.pos)),
            });
        }
        let s = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> Result<(), WireError> {
        if self.pos != self.body.len() {
            return Err(WireError::Malformed {
                msg: self.msg,
                detail: format!("{} trailing bytes", self.body.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn decode_body(msg_type: u8, body: &[u8]) -> Result<Message, WireError> {
    match msg_type {
        MSG_PING => {
            if body.is_empty() {
                return Err(WireError::Malformed {
                    msg: "PING",
                    detail: "missing version byte".into(),
                });
            }
            let node_id = String::from_utf8(body[1..].to_vec()).map_err(|_| {
                WireError::Malformed {
                    msg: "PING",
                    detail: "node id is not UTF-8".into(),
                }
            })?;
            Ok(Message::Ping {
                version: body[0],
                node_id,
            })
        }
        MSG_QUERY => {
            let mut r = BodyReader {
                body,
                pos: 0,
                msg: "QUERY",
            };
            let params_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
            let ct_len = r.u64()? as usize;
            let ciphertext = r.take(ct_len)?.to_vec();
            r.done()?;
            Ok(Message::Query {
                params_digest,
                ciphertext,
            })
        }
        MSG_SCORES => {
            let mut r = BodyReader {
                body,
                pos: 0,
                msg: "SCORES",
            };
            let count = r.u32()? as usize;
            let mut scores = Vec::with_capacity(count);
            for _ in 0..count {
                let id = r.u64()?;
                let ct_len = r.u64()? as usize;
                scores.push((id, r.take(ct_len)?.to_vec()));
            }
            r.done()?;
            Ok(Message::Scores { scores })
        }
        MSG_FETCH => {
            let mut r = BodyReader {
                body,
                pos: 0,
                msg: "FETCH",
            };
            let count = r.u32()? as usize;
            let mut ids = Vec::with_capacity(count);
            for _ in 0..count {
                ids.push(r.u64()?);
            }
            r.done()?;
            Ok(Message::Fetch { ids })
        }
        MSG_RECORDS => {
            let mut r = BodyReader {
                body,
                pos: 0,
                msg: "RECORDS",
            };
            let count = r.u32()? as usize;
            let mut records = Vec::with_capacity(count);
            for _ in 0..count {
                let row_len = r.u32()? as usize;
                let row = r.take(row_len)?;
                records.push(EncryptedRecord::from_bytes(row).map_err(|e| {
                    WireError::Malformed {
                        msg: "RECORDS",
                        detail: e.to_string(),
                    }
                })?);
            }
            r.done()?;
            Ok(Message::Records { records })
        }
        MSG_ERROR => {
            let mut r = BodyReader {
                body,
                pos: 0,
                msg: "ERROR",
            };
            let code = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
            let message = String::from_utf8(body[2..].to_vec()).map_err(|_| {
                WireError::Malformed {
                    msg: "ERROR",
                    detail: "message is not UTF-8".into(),
                }
            })?;
            Ok(Message::Error { code, message })
        }
        other => Err(WireError::UnknownType(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rid(seed: u8) -> [u8; 16] {
        let mut r = [0u8; 16];
        for (i, b) in r.iter_mut().enumerate() {
            *b = seed.wrapping_add(i as u8);
        }
        r
    }

    fn roundtrip(env: &Envelope) {
        let bytes = env.to_bytes();
        let (back, consumed) = Envelope::from_bytes(&bytes).unwrap();
        assert_eq!(consumed, bytes.len());
        assert_eq!(&back, env);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn ping_roundtrip_and_layout() {
        let env = Envelope {
            request_id: rid(1),
            message: Message::Ping {
                version: PROTOCOL_VERSION,
                node_id: "alpha".into(),
            },
        };
        let bytes = env.to_bytes();
        // total_len = 1 (type) + 16 (request id) + 1 (version) + 5 (node id)
        assert_eq!(u32::from_le_bytes(bytes[..4].try_into().unwrap()), 23);
        assert_eq!(bytes[4], MSG_PING);
        assert_eq!(&bytes[5..21], &rid(1));
        assert_eq!(bytes[21], PROTOCOL_VERSION);
        assert_eq!(&bytes[22..], b"alpha");
        roundtrip(&env);
    }

    #[test]
    fn query_roundtrip_and_layout() {
        let env = Envelope {
            request_id: rid(2),
            message: Message::Query {
                params_digest: [7u8; 32],
                ciphertext: vec![1, 2, 3, 4, 5],
            },
        };
        let bytes = env.to_bytes();
        assert_eq!(bytes[4], MSG_QUERY);
        assert_eq!(&bytes[21..53], &[7u8; 32]);
        assert_eq!(u64::from_le_bytes(bytes[53..61].try_into().unwrap()), 5);
        assert_eq!(&bytes[61..66], &[1, 2, 3, 4, 5]);
        roundtrip(&env);
    }

    #[test]
    fn scores_roundtrip_and_layout() {
        let env = Envelope {
            request_id: rid(3),
            message: Message::Scores {
                scores: vec![(10, vec![0xAA; 3]), (11, vec![0xBB; 2])],
            },
        };
        let bytes = env.to_bytes();
        assert_eq!(bytes[4], MSG_SCORES);
        assert_eq!(u32::from_le_bytes(bytes[21..25].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[25..33].try_into().unwrap()), 10);
        roundtrip(&env);
    }

    #[test]
    fn fetch_records_error_roundtrip() {
        roundtrip(&Envelope {
            request_id: rid(4),
            message: Message::Fetch { ids: vec![1, 5, 9] },
        });
        roundtrip(&Envelope {
            request_id: rid(5),
            message: Message::Records {
                records: vec![EncryptedRecord {
                    id: 3,
                    encryption_key_id: 2,
                    crime_type: vec![1],
                    location: vec![2, 2],
                    description: vec![3],
                    date: vec![4],
                    time: vec![],
                    criminal_name: vec![5],
                    encrypted_crime_type: vec![1],
                }],
            },
        });
        roundtrip(&Envelope {
            request_id: rid(6),
            message: Message::Error {
                code: ERR_PARAMS_MISMATCH,
                message: "params digest mismatch".into(),
            },
        });
    }

    #[test]
    fn error_body_layout() {
        let env = Envelope {
            request_id: rid(7),
            message: Message::Error {
                code: ERR_NOT_FOUND,
                message: "no".into(),
            },
        };
        let bytes = env.to_bytes();
        assert_eq!(bytes[4], MSG_ERROR);
        assert_eq!(u16::from_le_bytes(bytes[21..23].try_into().unwrap()), ERR_NOT_FOUND);
        assert_eq!(&bytes[23..], b"no");
    }

    #[test]
    fn malformed_frames_are_rejected() {
        assert!(matches!(
            Envelope::from_bytes(&[1, 2]),
            Err(WireError::Truncated { .. })
        ));
        // Oversized length prefix.
        let mut huge = (MAX_FRAME_LEN + 1).to_le_bytes().to_vec();
        huge.extend([0u8; 32]);
        assert!(matches!(
            Envelope::from_bytes(&huge),
            Err(WireError::FrameTooLarge(_))
        ));
        // Unknown message type.
        let env = Envelope {
            request_id: rid(8),
            message: Message::Fetch { ids: vec![] },
        };
        let mut bytes = env.to_bytes();
        bytes[4] = 0x42;
        assert!(matches!(
            Envelope::from_bytes(&bytes),
            Err(WireError::UnknownType(0x42))
        ));
        // Truncated QUERY body.
        let env = Envelope {
            request_id: rid(9),
            message: Message::Query {
                params_digest: [0u8; 32],
                ciphertext: vec![1, 2, 3],
            },
        };
        let mut bytes = env.to_bytes();
        let n = bytes.len();
        bytes.truncate(n - 1);
        let fixed_len = (u32::from_le_bytes(bytes[..4].try_into().unwrap()) - 1).to_le_bytes();
        bytes[..4].copy_from_slice(&fixed_len);
        assert!(matches!(
            Envelope::from_bytes(&bytes),
            Err(WireError::Malformed { msg: "QUERY", .. })
        ));
    }

    #[test]
    fn stream_read_write_roundtrip() {
        let env = Envelope {
            request_id: rid(10),
            message: Message::Fetch { ids: vec![42] },
        };
        let mut buf = Vec::new();
        env.write_to(&mut buf).unwrap();
        let mut cursor = std::io::Cursor::new(buf);
        assert_eq!(Envelope::read_from(&mut cursor).unwrap(), env);
    }
}
