//! Framed client/server protocol.
//!
//! A frame is `[msg_type u8][payload_len u32 BE][payload]` where the
//! payload is a UTF-8 JSON object with binary fields base64-encoded.
//! Message types:
//!
//! | byte | message   |
//! |------|-----------|
//! | 0x01 | HELLO     |
//! | 0x10 | UPDATE_A  |
//! | 0x11 | SEARCH_A  |
//! | 0x12 | RESULTS_A |
//! | 0x20 | UPDATE_B  |
//! | 0x21 | COPY_B    |
//! | 0x22 | SEARCH_B  |
//! | 0x23 | RESULTS_B |
//! | 0x30 | STATS     |
//! | 0x7f | ERROR     |
//!
//! Transport security is deployment configuration; the index's own
//! guarantees do not rest on it.

use crate::crypto::paillier::Ciphertext;
use crate::crypto::tdp::SearchToken;
use crate::crypto::{UpdateToken, TOKEN_LEN};
use crate::scheme_a::{RequestSegment, SearchRequestA, SearchResultsA, UpdateMessageA};
use crate::scheme_b::{CopyMessage, UpdateMessageB};
use crate::store::PublicParams;
use crate::{DocId, Error, Result, DOC_ID_LEN};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const MSG_HELLO: u8 = 0x01;
pub const MSG_UPDATE_A: u8 = 0x10;
pub const MSG_SEARCH_A: u8 = 0x11;
pub const MSG_RESULTS_A: u8 = 0x12;
pub const MSG_UPDATE_B: u8 = 0x20;
pub const MSG_COPY_B: u8 = 0x21;
pub const MSG_SEARCH_B: u8 = 0x22;
pub const MSG_RESULTS_B: u8 = 0x23;
pub const MSG_STATS: u8 = 0x30;
pub const MSG_ERROR: u8 = 0x7f;

const MAX_PAYLOAD: usize = 64 << 20;

pub fn b64(bytes: &[u8]) -> String {
    BASE64.encode(bytes)
}

fn pad_left(bytes: &[u8], width: usize) -> Vec<u8> {
    assert!(bytes.len() <= width, "value wider than fixed width");
    let mut out = vec![0u8; width - bytes.len()];
    out.extend_from_slice(bytes);
    out
}

pub fn unb64(s: &str) -> Result<Vec<u8>> {
    BASE64
        .decode(s)
        .map_err(|e| Error::Protocol(format!("bad base64 field: {e}")))
}

fn unb64_fixed<const N: usize>(s: &str, what: &str) -> Result<[u8; N]> {
    let bytes = unb64(s)?;
    bytes
        .try_into()
        .map_err(|_| Error::Protocol(format!("{what} has wrong length")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloMsg {
    pub scheme: String,
    /// Store params as produced by [`PublicParams::to_json_bytes`].
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateAMsg {
    pub token: String,
    pub masked_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMsg {
    pub key: String,
    pub head: String,
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchAMsg {
    pub segments: Vec<SegmentMsg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsAMsg {
    pub ids: Vec<String>,
    pub count: u64,
    pub anomalies: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateBMsg {
    pub token: String,
    pub ciphertext: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyBMsg {
    pub src: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBMsg {
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsBMsg {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ciphertext: Option<String>,
}

/// STATS is both the request (empty object) and the reply (fields set).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct StatsMsg {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entries: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello(HelloMsg),
    UpdateA(UpdateAMsg),
    SearchA(SearchAMsg),
    ResultsA(ResultsAMsg),
    UpdateB(UpdateBMsg),
    CopyB(CopyBMsg),
    SearchB(SearchBMsg),
    ResultsB(ResultsBMsg),
    Stats(StatsMsg),
    Error(ErrorMsg),
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Hello(_) => MSG_HELLO,
            Message::UpdateA(_) => MSG_UPDATE_A,
            Message::SearchA(_) => MSG_SEARCH_A,
            Message::ResultsA(_) => MSG_RESULTS_A,
            Message::UpdateB(_) => MSG_UPDATE_B,
            Message::CopyB(_) => MSG_COPY_B,
            Message::SearchB(_) => MSG_SEARCH_B,
            Message::ResultsB(_) => MSG_RESULTS_B,
            Message::Stats(_) => MSG_STATS,
            Message::Error(_) => MSG_ERROR,
        }
    }

    pub fn hello(params: &PublicParams) -> Self {
        let value = serde_json::from_slice(&params.to_json_bytes()).expect("params json");
        Message::Hello(HelloMsg { scheme: params.scheme().as_str().into(), params: value })
    }

    pub fn from_update_a(m: &UpdateMessageA) -> Self {
        Message::UpdateA(UpdateAMsg {
            token: b64(m.token.as_bytes()),
            masked_id: b64(&m.masked_id),
        })
    }

    pub fn from_search_a(req: &SearchRequestA) -> Self {
        Message::SearchA(SearchAMsg {
            segments: req
                .segments
                .iter()
                .map(|s| SegmentMsg {
                    key: b64(&s.key),
                    head: b64(s.head.as_bytes()),
                    from: s.from_counter,
                    to: s.to_counter,
                })
                .collect(),
        })
    }

    pub fn from_results_a(res: &SearchResultsA) -> Self {
        Message::ResultsA(ResultsAMsg {
            ids: res.ids.iter().map(|id| b64(id.as_bytes())).collect(),
            count: res.ids.len() as u64,
            anomalies: res.anomalies,
        })
    }

    /// `width` is the store's fixed ciphertext width; padding to it keeps
    /// every update message byte-identical in shape regardless of content
    /// or operation.
    pub fn from_update_b(m: &UpdateMessageB, width: usize) -> Self {
        Message::UpdateB(UpdateBMsg {
            token: b64(m.token.as_bytes()),
            ciphertext: b64(&pad_left(&m.ciphertext.value().to_bytes_be(), width)),
        })
    }

    pub fn from_copy_b(m: &CopyMessage) -> Self {
        Message::CopyB(CopyBMsg { src: b64(m.src.as_bytes()), dst: b64(m.dst.as_bytes()) })
    }

    pub fn from_search_b(token: &UpdateToken) -> Self {
        Message::SearchB(SearchBMsg { token: b64(token.as_bytes()) })
    }

    pub fn from_results_b(ct: Option<&Ciphertext>, width: usize) -> Self {
        Message::ResultsB(ResultsBMsg {
            ciphertext: ct.map(|c| b64(&pad_left(&c.value().to_bytes_be(), width))),
        })
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Message::Error(ErrorMsg { code: code.into(), message: message.into() })
    }
}

impl HelloMsg {
    pub fn to_params(&self) -> Result<PublicParams> {
        let bytes = serde_json::to_vec(&self.params)
            .map_err(|e| Error::Protocol(format!("hello params: {e}")))?;
        PublicParams::from_json_bytes(&bytes)
            .map_err(|e| Error::Protocol(format!("hello params: {e}")))
    }
}

impl UpdateAMsg {
    pub fn to_update_a(&self) -> Result<UpdateMessageA> {
        Ok(UpdateMessageA {
            token: UpdateToken(unb64_fixed::<TOKEN_LEN>(&self.token, "token")?),
            masked_id: unb64_fixed::<DOC_ID_LEN>(&self.masked_id, "masked_id")?,
        })
    }
}

impl SearchAMsg {
    pub fn to_search_a(&self) -> Result<SearchRequestA> {
        Ok(SearchRequestA {
            segments: self
                .segments
                .iter()
                .map(|s| {
                    if s.from < s.to {
                        return Err(Error::Protocol("segment counters out of order".into()));
                    }
                    Ok(RequestSegment {
                        key: unb64_fixed::<TOKEN_LEN>(&s.key, "segment key")?,
                        head: SearchToken::from_bytes(unb64(&s.head)?),
                        from_counter: s.from,
                        to_counter: s.to,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

impl ResultsAMsg {
    pub fn to_results_a(&self) -> Result<SearchResultsA> {
        let ids = self
            .ids
            .iter()
            .map(|s| Ok(DocId(unb64_fixed::<DOC_ID_LEN>(s, "doc id")?)))
            .collect::<Result<Vec<_>>>()?;
        if ids.len() as u64 != self.count {
            return Err(Error::Protocol("result count mismatch".into()));
        }
        Ok(SearchResultsA { ids, anomalies: self.anomalies })
    }
}

impl UpdateBMsg {
    pub fn to_update_b(&self) -> Result<UpdateMessageB> {
        Ok(UpdateMessageB {
            token: UpdateToken(unb64_fixed::<TOKEN_LEN>(&self.token, "token")?),
            ciphertext: Ciphertext::from_biguint_unchecked(BigUint::from_bytes_be(&unb64(
                &self.ciphertext,
            )?)),
        })
    }
}

impl CopyBMsg {
    pub fn to_copy_b(&self) -> Result<CopyMessage> {
        Ok(CopyMessage {
            src: UpdateToken(unb64_fixed::<TOKEN_LEN>(&self.src, "src")?),
            dst: UpdateToken(unb64_fixed::<TOKEN_LEN>(&self.dst, "dst")?),
        })
    }
}

impl SearchBMsg {
    pub fn to_token(&self) -> Result<UpdateToken> {
        Ok(UpdateToken(unb64_fixed::<TOKEN_LEN>(&self.token, "token")?))
    }
}

impl ResultsBMsg {
    pub fn to_ciphertext(&self) -> Result<Option<Ciphertext>> {
        self.ciphertext
            .as_ref()
            .map(|s| Ok(Ciphertext::from_biguint_unchecked(BigUint::from_bytes_be(&unb64(s)?))))
            .transpose()
    }
}

/// Serializes a message to its type byte and JSON payload.
pub fn encode_message(msg: &Message) -> (u8, Vec<u8>) {
    let payload = match msg {
        Message::Hello(m) => serde_json::to_vec(m),
        Message::UpdateA(m) => serde_json::to_vec(m),
        Message::SearchA(m) => serde_json::to_vec(m),
        Message::ResultsA(m) => serde_json::to_vec(m),
        Message::UpdateB(m) => serde_json::to_vec(m),
        Message::CopyB(m) => serde_json::to_vec(m),
        Message::SearchB(m) => serde_json::to_vec(m),
        Message::ResultsB(m) => serde_json::to_vec(m),
        Message::Stats(m) => serde_json::to_vec(m),
        Message::Error(m) => serde_json::to_vec(m),
    }
    .expect("wire structs always serialize");
    (msg.kind(), payload)
}

pub fn decode_message(msg_type: u8, payload: &[u8]) -> Result<Message> {
    let bad = |e: serde_json::Error| Error::Protocol(format!("bad payload: {e}"));
    Ok(match msg_type {
        MSG_HELLO => Message::Hello(serde_json::from_slice(payload).map_err(bad)?),
        MSG_UPDATE_A => Message::UpdateA(serde_json::from_slice(payload).map_err(bad)?),
        MSG_SEARCH_A => Message::SearchA(serde_json::from_slice(payload).map_err(bad)?),
        MSG_RESULTS_A => Message::ResultsA(serde_json::from_slice(payload).map_err(bad)?),
        MSG_UPDATE_B => Message::UpdateB(serde_json::from_slice(payload).map_err(bad)?),
        MSG_COPY_B => Message::CopyB(serde_json::from_slice(payload).map_err(bad)?),
        MSG_SEARCH_B => Message::SearchB(serde_json::from_slice(payload).map_err(bad)?),
        MSG_RESULTS_B => Message::ResultsB(serde_json::from_slice(payload).map_err(bad)?),
        MSG_STATS => Message::Stats(serde_json::from_slice(payload).map_err(bad)?),
        MSG_ERROR => Message::Error(serde_json::from_slice(payload).map_err(bad)?),
        other => return Err(Error::Protocol(format!("unknown message type 0x{other:02x}"))),
    })
}

/// Writes one frame.
pub fn write_frame(w: &mut impl Write, msg: &Message) -> Result<()> {
    let (msg_type, payload) = encode_message(msg);
    w.write_all(&[msg_type])?;
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on clean end-of-stream at a frame boundary.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Message>> {
    let mut type_buf = [0u8; 1];
    match r.read_exact(&mut type_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!("frame too large: {len} bytes")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(decode_message(type_buf[0], &payload)?))
}

/// The exact payload bytes a message puts on the wire; transcripts record
/// these verbatim.
pub fn payload_bytes(msg: &Message) -> Vec<u8> {
    encode_message(msg).1
}
