//! Binary framing for tensors and control messages between device and edge.
//!
//! Layout, all multi-byte integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SLKF"
//! 4       2     version (currently 1)
//! 6       1     frame type: 0 InferRequest, 1 InferResponse, 2 Error, 3 Ping, 4 Pong
//! 7       8     request id
//! 15      1     string length L
//! 16      L     string field (UTF-8)
//! 16+L    2     split index
//! 18+L    12    dims: C, H, W as u32
//! 30+L    8     payload length in bytes (= 4*C*H*W for tensor frames, else 0)
//! 38+L    ..    payload: raw little-endian 32-bit reals
//! ```
//!
//! The total frame length is derivable from the header alone, so frames can
//! be streamed back to back.
//!
//! The string field carries the model id in requests. Responses reuse it for
//! the edge compute time in microseconds (decimal digits), and error frames
//! for a short human-readable reason; error frames also reuse the split-index
//! field for a numeric reason code. Ping/Pong leave it empty.

use std::fmt;
use std::io::Read;

pub const FRAME_MAGIC: [u8; 4] = *b"SLKF";
pub const WIRE_VERSION: u16 = 1;

/// Fixed header bytes excluding the variable-length string field.
pub const HEADER_BASE_LEN: usize = 38;

/// Upper bound on payload elements accepted by the decoder (256 MiB of f32).
pub const MAX_PAYLOAD_ELEMENTS: u64 = 1 << 26;

/// Numeric reason codes carried in the split-index field of Error frames.
pub mod reason {
    pub const UNKNOWN_MODEL: u16 = 1;
    pub const SHAPE_MISMATCH: u16 = 2;
    pub const BAD_SPLIT: u16 = 3;
    pub const UNSUPPORTED_VERSION: u16 = 4;
    pub const PAYLOAD_MISMATCH: u16 = 5;
    pub const NON_FINITE_PAYLOAD: u16 = 6;
    pub const UNEXPECTED_FRAME: u16 = 7;
    pub const INTERNAL: u16 = 8;
    pub const BAD_MAGIC: u16 = 9;
    pub const EXECUTION_FAILED: u16 = 10;
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
pub enum FrameType {
    InferRequest = 0,
    InferResponse = 1,
    Error = 2,
    Ping = 3,
    Pong = 4,
}

impl FrameType {
    pub fn from_u8(v: u8) -> Option<FrameType> {
        match v {
            0 => Some(FrameType::InferRequest),
            1 => Some(FrameType::InferResponse),
            2 => Some(FrameType::Error),
            3 => Some(FrameType::Ping),
            4 => Some(FrameType::Pong),
            _ => None,
        }
    }

    /// Whether this frame type carries a tensor payload.
    pub fn carries_tensor(self) -> bool {
        matches!(self, FrameType::InferRequest | FrameType::InferResponse)
    }
}

/// A decoded frame.
#[derive(Clone, PartialEq, Debug)]
pub struct Frame {
    pub frame_type: FrameType,
    pub request_id: u64,
    /// Model id for requests; see module docs for the per-type reuse.
    pub model_id: String,
    pub split_index: u16,
    pub dims: (u32, u32, u32),
    pub payload: Vec<f32>,
}

impl Frame {
    pub fn ping(request_id: u64) -> Frame {
        Frame { frame_type: FrameType::Ping, request_id, model_id: String::new(), split_index: 0, dims: (0, 0, 0), payload: Vec::new() }
    }

    pub fn pong(request_id: u64) -> Frame {
        Frame { frame_type: FrameType::Pong, ..Frame::ping(request_id) }
    }

    pub fn error(request_id: u64, code: u16, message: &str) -> Frame {
        let mut msg = message.to_string();
        msg.truncate(255);
        Frame {
            frame_type: FrameType::Error,
            request_id,
            model_id: msg,
            split_index: code,
            dims: (0, 0, 0),
            payload: Vec::new(),
        }
    }

    /// Encoded size of this frame in bytes.
    pub fn encoded_len(&self) -> u64 {
        HEADER_BASE_LEN as u64 + self.model_id.len() as u64 + self.payload.len() as u64 * 4
    }
}

/// Size in bytes of a tensor-bearing frame with the given string-field
/// length and tensor element count. This is the payload accounting the
/// benchmark and planner use.
pub fn tensor_frame_len(model_id_len: usize, elements: usize) -> u64 {
    HEADER_BASE_LEN as u64 + model_id_len as u64 + elements as u64 * 4
}

/// Errors from the framing layer.
#[derive(Debug)]
pub enum WireError {
    BadMagic { got: [u8; 4] },
    UnsupportedVersion { got: u16 },
    /// The byte stream ended before the frame did.
    TruncatedFrame,
    /// The payload length field is inconsistent with the frame type and dims
    /// (or exceeds the decoder's sanity cap).
    PayloadLengthMismatch { expected: u64, got: u64 },
    UnknownFrameType { got: u8 },
    /// The string field must fit one length byte.
    OversizedModelId { len: usize },
    /// The string field was not valid UTF-8.
    InvalidModelId,
    Io(std::io::Error),
}

impl fmt::Display for WireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireError::BadMagic { got } => write!(f, "bad frame magic {got:02x?}"),
            WireError::UnsupportedVersion { got } => write!(f, "unsupported wire version {got}"),
            WireError::TruncatedFrame => write!(f, "truncated frame"),
            WireError::PayloadLengthMismatch { expected, got } => {
                write!(f, "payload length {got} does not match expected {expected}")
            }
            WireError::UnknownFrameType { got } => write!(f, "unknown frame type {got}"),
            WireError::OversizedModelId { len } => write!(f, "model id of {len} bytes exceeds 255"),
            WireError::InvalidModelId => write!(f, "model id is not valid UTF-8"),
            WireError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for WireError {}

impl From<std::io::Error> for WireError {
    fn from(e: std::io::Error) -> Self {
        // EOF mid-frame is a truncation, not a generic io failure.
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            WireError::TruncatedFrame
        } else {
            WireError::Io(e)
        }
    }
}

/// Expected payload length in bytes for a frame's type and dims.
fn expected_payload_len(frame_type: FrameType, dims: (u32, u32, u32)) -> u64 {
    if frame_type.carries_tensor() {
        4 * dims.0 as u64 * dims.1 as u64 * dims.2 as u64
    } else {
        0
    }
}

/// Encode a frame to bytes. Deterministic: the same frame always yields the
/// same bytes.
pub fn encode(frame: &Frame) -> Result<Vec<u8>, WireError> {
    if frame.model_id.len() > 255 {
        return Err(WireError::OversizedModelId { len: frame.model_id.len() });
    }
    let expected = expected_payload_len(frame.frame_type, frame.dims);
    let got = frame.payload.len() as u64 * 4;
    if expected != got {
        return Err(WireError::PayloadLengthMismatch { expected, got });
    }
    let mut out = Vec::with_capacity(frame.encoded_len() as usize);
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    out.push(frame.frame_type as u8);
    out.extend_from_slice(&frame.request_id.to_le_bytes());
    out.push(frame.model_id.len() as u8);
    out.extend_from_slice(frame.model_id.as_bytes());
    out.extend_from_slice(&frame.split_index.to_le_bytes());
    out.extend_from_slice(&frame.dims.0.to_le_bytes());
    out.extend_from_slice(&frame.dims.1.to_le_bytes());
    out.extend_from_slice(&frame.dims.2.to_le_bytes());
    out.extend_from_slice(&got.to_le_bytes());
    for v in &frame.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], WireError> {
    if bytes.len() < *pos + n {
        return Err(WireError::TruncatedFrame);
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

/// Decode one frame from the start of `bytes`. Returns the frame and the
/// number of bytes consumed; trailing bytes are untouched.
pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), WireError> {
    let mut pos = 0usize;
    let magic = take(bytes, &mut pos, 4)?;
    if magic != FRAME_MAGIC {
        return Err(WireError::BadMagic { got: [magic[0], magic[1], magic[2], magic[3]] });
    }
    let version = u16::from_le_bytes(take(bytes, &mut pos, 2)?.try_into().unwrap());
    if version != WIRE_VERSION {
        return Err(WireError::UnsupportedVersion { got: version });
    }
    let type_byte = take(bytes, &mut pos, 1)?[0];
    let frame_type = FrameType::from_u8(type_byte).ok_or(WireError::UnknownFrameType { got: type_byte })?;
    let request_id = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().unwrap());
    let id_len = take(bytes, &mut pos, 1)?[0] as usize;
    let model_id = std::str::from_utf8(take(bytes, &mut pos, id_len)?)
        .map_err(|_| WireError::InvalidModelId)?
        .to_string();
    let split_index = u16::from_le_bytes(take(bytes, &mut pos, 2)?.try_into().unwrap());
    let c = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap());
    let h = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap());
    let w = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap());
    let payload_len = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().unwrap());
    let expected = expected_payload_len(frame_type, (c, h, w));
    if payload_len != expected || payload_len / 4 > MAX_PAYLOAD_ELEMENTS {
        return Err(WireError::PayloadLengthMismatch { expected, got: payload_len });
    }
    let raw = take(bytes, &mut pos, payload_len as usize)?;
    let mut payload = Vec::with_capacity(raw.len() / 4);
    for chunk in raw.chunks_exact(4) {
        payload.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok((
        Frame { frame_type, request_id, model_id, split_index, dims: (c, h, w), payload },
        pos,
    ))
}

/// Read exactly one frame's bytes from a stream, using only the header to
/// find the frame end. Validation beyond lengths is left to [`decode`].
pub fn read_frame_bytes(r: &mut impl Read) -> Result<Vec<u8>, WireError> {
    let mut head = vec![0u8; 16]; // through the string-length byte
    r.read_exact(&mut head)?;
    if head[0..4] != FRAME_MAGIC {
        return Err(WireError::BadMagic { got: [head[0], head[1], head[2], head[3]] });
    }
    let id_len = head[15] as usize;
    let mut mid = vec![0u8; id_len + 22]; // string + split + dims + payload_len
    r.read_exact(&mut mid)?;
    let payload_len = u64::from_le_bytes(mid[id_len + 14..id_len + 22].try_into().unwrap());
    if payload_len / 4 > MAX_PAYLOAD_ELEMENTS {
        return Err(WireError::PayloadLengthMismatch { expected: 4 * MAX_PAYLOAD_ELEMENTS, got: payload_len });
    }
    let mut payload = vec![0u8; payload_len as usize];
    r.read_exact(&mut payload)?;
    head.extend_from_slice(&mid);
    head.extend_from_slice(&payload);
    Ok(head)
}

/// Read and decode one frame from a stream.
pub fn read_frame(r: &mut impl Read) -> Result<Frame, WireError> {
    let bytes = read_frame_bytes(r)?;
    let (frame, consumed) = decode(&bytes)?;
    debug_assert_eq!(consumed, bytes.len());
    Ok(frame)
}
