//! MQTT 3.1.1 control packets: the subset a QoS 0 broker needs.

use bytes::{BufMut, Bytes, BytesMut};

use super::topic::{valid_filter, valid_topic_name};
use super::ProtocolError;

pub const PROTOCOL_NAME: &str = "MQTT";
pub const PROTOCOL_LEVEL: u8 = 4;
/// Largest value the 4-byte remaining-length varint can carry.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QoS {
    AtMostOnce = 0,
    AtLeastOnce = 1,
    ExactlyOnce = 2,
}

impl QoS {
    fn from_bits(b: u8) -> Result<Self, ProtocolError> {
        match b {
            0 => Ok(QoS::AtMostOnce),
            1 => Ok(QoS::AtLeastOnce),
            2 => Ok(QoS::ExactlyOnce),
            _ => Err(ProtocolError::Malformed("QoS 3 is reserved".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastWill {
    pub topic: String,
    pub payload: Bytes,
    pub qos: QoS,
    pub retain: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub protocol_level: u8,
    pub clean_session: bool,
    pub keep_alive: u16,
    pub client_id: String,
    pub will: Option<LastWill>,
    pub username: Option<String>,
    pub password: Option<Bytes>,
}

impl Connect {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self {
            protocol_level: PROTOCOL_LEVEL,
            clean_session: true,
            keep_alive: 60,
            client_id: client_id.into(),
            will: None,
            username: None,
            password: None,
        }
    }
}

pub mod connack {
    pub const ACCEPTED: u8 = 0;
    pub const UNACCEPTABLE_PROTOCOL: u8 = 1;
    pub const IDENTIFIER_REJECTED: u8 = 2;
}

/// Suback return code for a rejected filter.
pub const SUBACK_FAILURE: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub dup: bool,
    pub qos: QoS,
    pub retain: bool,
    pub topic: String,
    /// Present iff `qos` is above 0.
    pub packet_id: Option<u16>,
    pub payload: Bytes,
}

impl Publish {
    pub fn new(topic: impl Into<String>, payload: impl Into<Bytes>) -> Self {
        Self {
            dup: false,
            qos: QoS::AtMostOnce,
            retain: false,
            topic: topic.into(),
            packet_id: None,
            payload: payload.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    Connack { session_present: bool, return_code: u8 },
    Publish(Publish),
    Puback { packet_id: u16 },
    Subscribe { packet_id: u16, filters: Vec<(String, QoS)> },
    Suback { packet_id: u16, return_codes: Vec<u8> },
    Unsubscribe { packet_id: u16, filters: Vec<String> },
    Unsuback { packet_id: u16 },
    Pingreq,
    Pingresp,
    Disconnect,
}

impl Packet {
    pub fn name(&self) -> &'static str {
        match self {
            Packet::Connect(_) => "CONNECT",
            Packet::Connack { .. } => "CONNACK",
            Packet::Publish(_) => "PUBLISH",
            Packet::Puback { .. } => "PUBACK",
            Packet::Subscribe { .. } => "SUBSCRIBE",
            Packet::Suback { .. } => "SUBACK",
            Packet::Unsubscribe { .. } => "UNSUBSCRIBE",
            Packet::Unsuback { .. } => "UNSUBACK",
            Packet::Pingreq => "PINGREQ",
            Packet::Pingresp => "PINGRESP",
            Packet::Disconnect => "DISCONNECT",
        }
    }
}

/// Result of reading the remaining-length varint.
enum Varint {
    NeedMore,
    Value { value: usize, len: usize },
}

fn read_varint(buf: &[u8]) -> Result<Varint, ProtocolError> {
    let mut value = 0usize;
    for i in 0..4 {
        let Some(&b) = buf.get(i) else {
            return Ok(Varint::NeedMore);
        };
        value |= ((b & 0x7F) as usize) << (7 * i);
        if b & 0x80 == 0 {
            return Ok(Varint::Value { value, len: i + 1 });
        }
    }
    Err(ProtocolError::Malformed("remaining length longer than 4 bytes".into()))
}

fn write_varint(out: &mut BytesMut, mut value: usize) {
    debug_assert!(value <= MAX_REMAINING_LENGTH);
    loop {
        let mut b = (value % 128) as u8;
        value /= 128;
        if value > 0 {
            b |= 0x80;
        }
        out.put_u8(b);
        if value == 0 {
            break;
        }
    }
}

/// Cursor over one packet body. All reads are bounds-checked.
struct Body<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Body<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        let b = *self.buf.get(self.pos).ok_or_else(|| truncated("byte"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        let hi = self.u8()?;
        let lo = self.u8()?;
        Ok(u16::from_be_bytes([hi, lo]))
    }

    fn binary(&mut self) -> Result<&'a [u8], ProtocolError> {
        let len = self.u16()? as usize;
        if self.remaining() < len {
            return Err(truncated("length-prefixed field"));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn string(&mut self) -> Result<String, ProtocolError> {
        let raw = self.binary()?;
        let s = std::str::from_utf8(raw)
            .map_err(|_| ProtocolError::Malformed("string is not valid UTF-8".into()))?;
        if s.contains('\0') {
            return Err(ProtocolError::Malformed("string contains NUL".into()));
        }
        Ok(s.to_string())
    }

    fn rest(&mut self) -> &'a [u8] {
        let r = &self.buf[self.pos..];
        self.pos = self.buf.len();
        r
    }

    fn finish(&self, what: &str) -> Result<(), ProtocolError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(ProtocolError::Malformed(format!("trailing bytes in {what}")))
        }
    }
}

fn truncated(what: &str) -> ProtocolError {
    ProtocolError::Malformed(format!("packet truncated while reading {what}"))
}

fn expect_flags(kind: &str, flags: u8, expected: u8) -> Result<(), ProtocolError> {
    if flags == expected {
        Ok(())
    } else {
        Err(ProtocolError::Malformed(format!(
            "{kind} fixed-header flags must be {expected:#06b}, got {flags:#06b}"
        )))
    }
}

/// Decodes one packet from the front of `buf`.
///
/// Returns `Ok(None)` when more bytes are needed, or the packet and the
/// number of bytes it occupied. Packets whose remaining length exceeds
/// `max_remaining` are rejected as soon as the header is readable.
pub fn decode_packet_limited(
    buf: &[u8],
    max_remaining: usize,
) -> Result<Option<(Packet, usize)>, ProtocolError> {
    let Some(&first) = buf.first() else {
        return Ok(None);
    };
    let (remaining, vlen) = match read_varint(&buf[1..])? {
        Varint::NeedMore => return Ok(None),
        Varint::Value { value, len } => (value, len),
    };
    if remaining > max_remaining {
        return Err(ProtocolError::TooLarge { size: remaining, max: max_remaining });
    }
    let header_len = 1 + vlen;
    let total = header_len + remaining;
    if buf.len() < total {
        return Ok(None);
    }
    let mut body = Body { buf: &buf[header_len..total], pos: 0 };
    let packet = decode_body(first >> 4, first & 0x0F, &mut body)?;
    Ok(Some((packet, total)))
}

pub fn decode_packet(buf: &[u8]) -> Result<Option<(Packet, usize)>, ProtocolError> {
    decode_packet_limited(buf, MAX_REMAINING_LENGTH)
}

fn decode_body(kind: u8, flags: u8, body: &mut Body<'_>) -> Result<Packet, ProtocolError> {
    let packet = match kind {
        1 => {
            expect_flags("CONNECT", flags, 0)?;
            Packet::Connect(decode_connect(body)?)
        }
        2 => {
            expect_flags("CONNACK", flags, 0)?;
            let ack = body.u8()?;
            if ack & 0xFE != 0 {
                return Err(ProtocolError::Malformed("CONNACK reserved bits set".into()));
            }
            let return_code = body.u8()?;
            Packet::Connack { session_present: ack & 1 == 1, return_code }
        }
        3 => Packet::Publish(decode_publish(flags, body)?),
        4 => {
            expect_flags("PUBACK", flags, 0)?;
            Packet::Puback { packet_id: body.u16()? }
        }
        8 => {
            expect_flags("SUBSCRIBE", flags, 0b0010)?;
            let packet_id = body.u16()?;
            let mut filters = Vec::new();
            while body.remaining() > 0 {
                let filter = body.string()?;
                let opts = body.u8()?;
                if opts & 0xFC != 0 {
                    return Err(ProtocolError::Malformed("SUBSCRIBE option reserved bits".into()));
                }
                filters.push((filter, QoS::from_bits(opts & 0x03)?));
            }
            if filters.is_empty() {
                return Err(ProtocolError::Malformed("SUBSCRIBE without filters".into()));
            }
            Packet::Subscribe { packet_id, filters }
        }
        9 => {
            expect_flags("SUBACK", flags, 0)?;
            let packet_id = body.u16()?;
            let return_codes = body.rest().to_vec();
            Packet::Suback { packet_id, return_codes }
        }
        10 => {
            expect_flags("UNSUBSCRIBE", flags, 0b0010)?;
            let packet_id = body.u16()?;
            let mut filters = Vec::new();
            while body.remaining() > 0 {
                filters.push(body.string()?);
            }
            if filters.is_empty() {
                return Err(ProtocolError::Malformed("UNSUBSCRIBE without filters".into()));
            }
            Packet::Unsubscribe { packet_id, filters }
        }
        11 => {
            expect_flags("UNSUBACK", flags, 0)?;
            Packet::Unsuback { packet_id: body.u16()? }
        }
        12 => {
            expect_flags("PINGREQ", flags, 0)?;
            Packet::Pingreq
        }
        13 => {
            expect_flags("PINGRESP", flags, 0)?;
            Packet::Pingresp
        }
        14 => {
            expect_flags("DISCONNECT", flags, 0)?;
            Packet::Disconnect
        }
        5..=7 => return Err(ProtocolError::Unsupported("QoS 2 flow packets")),
        _ => return Err(ProtocolError::Malformed(format!("reserved packet type {kind}"))),
    };
    body.finish(packet.name())?;
    Ok(packet)
}

fn decode_connect(body: &mut Body<'_>) -> Result<Connect, ProtocolError> {
    let name = body.string()?;
    if name != PROTOCOL_NAME {
        return Err(ProtocolError::Malformed(format!("protocol name {name:?} is not \"MQTT\"")));
    }
    let protocol_level = body.u8()?;
    let flags = body.u8()?;
    if flags & 0x01 != 0 {
        return Err(ProtocolError::Malformed("CONNECT reserved flag set".into()));
    }
    let clean_session = flags & 0x02 != 0;
    let will_flag = flags & 0x04 != 0;
    let will_qos = (flags >> 3) & 0x03;
    let will_retain = flags & 0x20 != 0;
    let has_password = flags & 0x40 != 0;
    let has_username = flags & 0x80 != 0;
    if !will_flag && (will_qos != 0 || will_retain) {
        return Err(ProtocolError::Malformed("will QoS/retain set without will flag".into()));
    }
    if has_password && !has_username {
        return Err(ProtocolError::Malformed("password flag without username flag".into()));
    }
    let keep_alive = body.u16()?;
    let client_id = body.string()?;
    let will = if will_flag {
        let topic = body.string()?;
        let payload = Bytes::copy_from_slice(body.binary()?);
        Some(LastWill { topic, payload, qos: QoS::from_bits(will_qos)?, retain: will_retain })
    } else {
        None
    };
    let username = has_username.then(|| body.string()).transpose()?;
    let password = has_password
        .then(|| body.binary().map(Bytes::copy_from_slice))
        .transpose()?;
    Ok(Connect { protocol_level, clean_session, keep_alive, client_id, will, username, password })
}

fn decode_publish(flags: u8, body: &mut Body<'_>) -> Result<Publish, ProtocolError> {
    let dup = flags & 0x08 != 0;
    let qos = QoS::from_bits((flags >> 1) & 0x03)?;
    let retain = flags & 0x01 != 0;
    if qos == QoS::AtMostOnce && dup {
        return Err(ProtocolError::Malformed("DUP set on a QoS 0 PUBLISH".into()));
    }
    let topic = body.string()?;
    if !valid_topic_name(&topic) {
        return Err(ProtocolError::Malformed(format!("invalid PUBLISH topic {topic:?}")));
    }
    let packet_id = if qos == QoS::AtMostOnce { None } else { Some(body.u16()?) };
    let payload = Bytes::copy_from_slice(body.rest());
    Ok(Publish { dup, qos, retain, topic, packet_id, payload })
}

fn put_str(out: &mut BytesMut, s: &str) {
    put_bin(out, s.as_bytes());
}

fn put_bin(out: &mut BytesMut, b: &[u8]) {
    out.put_u16(b.len() as u16);
    out.put_slice(b);
}

/// Appends the wire encoding of `packet` to `out`.
pub fn encode_packet_into(packet: &Packet, out: &mut BytesMut) {
    let mut body = BytesMut::new();
    let first: u8 = match packet {
        Packet::Connect(c) => {
            put_str(&mut body, PROTOCOL_NAME);
            body.put_u8(c.protocol_level);
            let mut flags = 0u8;
            if c.clean_session {
                flags |= 0x02;
            }
            if let Some(w) = &c.will {
                flags |= 0x04 | ((w.qos as u8) << 3);
                if w.retain {
                    flags |= 0x20;
                }
            }
            if c.password.is_some() {
                flags |= 0x40;
            }
            if c.username.is_some() {
                flags |= 0x80;
            }
            body.put_u8(flags);
            body.put_u16(c.keep_alive);
            put_str(&mut body, &c.client_id);
            if let Some(w) = &c.will {
                put_str(&mut body, &w.topic);
                put_bin(&mut body, &w.payload);
            }
            if let Some(u) = &c.username {
                put_str(&mut body, u);
            }
            if let Some(p) = &c.password {
                put_bin(&mut body, p);
            }
            0x10
        }
        Packet::Connack { session_present, return_code } => {
            body.put_u8(*session_present as u8);
            body.put_u8(*return_code);
            0x20
        }
        Packet::Publish(p) => {
            put_str(&mut body, &p.topic);
            if let Some(id) = p.packet_id {
                body.put_u16(id);
            }
            body.put_slice(&p.payload);
            0x30 | ((p.dup as u8) << 3) | ((p.qos as u8) << 1) | p.retain as u8
        }
        Packet::Puback { packet_id } => {
            body.put_u16(*packet_id);
            0x40
        }
        Packet::Subscribe { packet_id, filters } => {
            body.put_u16(*packet_id);
            for (f, q) in filters {
                put_str(&mut body, f);
                body.put_u8(*q as u8);
            }
            0x82
        }
        Packet::Suback { packet_id, return_codes } => {
            body.put_u16(*packet_id);
            body.put_slice(return_codes);
            0x90
        }
        Packet::Unsubscribe { packet_id, filters } => {
            body.put_u16(*packet_id);
            for f in filters {
                put_str(&mut body, f);
            }
            0xA2
        }
        Packet::Unsuback { packet_id } => {
            body.put_u16(*packet_id);
            0xB0
        }
        Packet::Pingreq => 0xC0,
        Packet::Pingresp => 0xD0,
        Packet::Disconnect => 0xE0,
    };
    out.reserve(5 + body.len());
    out.put_u8(first);
    write_varint(out, body.len());
    out.put_slice(&body);
}

pub fn encode_packet(packet: &Packet) -> Bytes {
    let mut out = BytesMut::new();
    encode_packet_into(packet, &mut out);
    out.freeze()
}

/// Checks a SUBSCRIBE filter list; used by the router to build Suback codes.
pub fn filter_is_acceptable(filter: &str) -> bool {
    valid_filter(filter)
}
