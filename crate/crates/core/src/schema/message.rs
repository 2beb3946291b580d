//! JSON payloads carried on the station topics.
//!
//! Field names are fixed; third-party MQTT tools and the operator console
//! read them directly:
//!
//! | payload       | fields                                                          |
//! |---------------|-----------------------------------------------------------------|
//! | location      | `tag_id`, `x`, `y`, `z`, `ts_us`, `event`?                      |
//! | sound control | `cmd`, `volume`?, `x`?, `y`?, `z`?, `pitch`?                    |
//! | sound status  | `sound_id`, `playing`, `volume`, `x`, `y`, `z`, `pitch`, `gains`, `ts_us` |
//! | bench         | `seq`, `t_send_us`, `pad`                                       |
//! | error         | `id`, `error`                                                   |
//! | zone select   | `zone_id`                                                       |
//! | extract status| `zone_id`, `snr_in_db`, `snr_out_db`                            |

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{DecodeError, Vec3};

pub const VOLUME_RANGE: (f64, f64) = (0.0, 2.0);
pub const PITCH_RANGE: (f64, f64) = (0.25, 4.0);

/// A payload type with a fixed JSON shape.
pub trait Payload: Sized {
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self, DecodeError>;
}

fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, DecodeError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { String::new() } else { field };
        let inner = e.into_inner();
        let reason = inner.to_string();
        // serde reports missing fields at the parent path; pull the name out.
        let field = match (field.is_empty(), reason.strip_prefix("missing field `")) {
            (true, Some(rest)) => rest.split('`').next().unwrap_or_default().to_string(),
            _ => field,
        };
        DecodeError { field, reason }
    })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("payload serialization is infallible")
}

fn check_range(field: &str, value: f64, (lo, hi): (f64, f64)) -> Result<(), DecodeError> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(DecodeError::new(field, format!("{field} out of range [{lo}, {hi}]: {value}")))
    }
}

fn check_non_empty(field: &str, value: &str) -> Result<(), DecodeError> {
    if value.is_empty() {
        Err(DecodeError::new(field, format!("{field} must not be empty")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationEvent {
    ButtonPush,
}

/// One tag position fix, or a button push on that tag.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationMessage {
    pub tag_id: String,
    pub position: Vec3,
    pub timestamp_us: u64,
    pub event: Option<LocationEvent>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocationWire {
    tag_id: String,
    x: f64,
    y: f64,
    z: f64,
    ts_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    event: Option<LocationEvent>,
}

impl Payload for LocationMessage {
    fn encode(&self) -> Vec<u8> {
        to_json(&LocationWire {
            tag_id: self.tag_id.clone(),
            x: self.position.x,
            y: self.position.y,
            z: self.position.z,
            ts_us: self.timestamp_us,
            event: self.event,
        })
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let w: LocationWire = parse_json(bytes)?;
        check_non_empty("tag_id", &w.tag_id)?;
        Ok(Self {
            tag_id: w.tag_id,
            position: Vec3::new(w.x, w.y, w.z),
            timestamp_us: w.ts_us,
            event: w.event,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Play,
    Stop,
    Set,
}

/// Control vocabulary for one registered sound.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundCommand {
    pub command: CommandKind,
    /// Linear amplitude, 1.0 is unity.
    pub volume: Option<f64>,
    pub position: Option<Vec3>,
    /// Playback-rate ratio.
    pub pitch: Option<f64>,
}

impl SoundCommand {
    pub fn play() -> Self {
        Self { command: CommandKind::Play, volume: None, position: None, pitch: None }
    }

    pub fn stop() -> Self {
        Self { command: CommandKind::Stop, volume: None, position: None, pitch: None }
    }

    pub fn set() -> Self {
        Self { command: CommandKind::Set, volume: None, position: None, pitch: None }
    }

    pub fn with_volume(mut self, v: f64) -> Self {
        self.volume = Some(v);
        self
    }

    pub fn with_position(mut self, p: Vec3) -> Self {
        self.position = Some(p);
        self
    }

    pub fn with_pitch(mut self, p: f64) -> Self {
        self.pitch = Some(p);
        self
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if let Some(v) = self.volume {
            check_range("volume", v, VOLUME_RANGE)?;
        }
        if let Some(p) = self.pitch {
            check_range("pitch", p, PITCH_RANGE)?;
        }
        if let Some(p) = self.position {
            if !p.is_finite() {
                return Err(DecodeError::new("x", "position must be finite"));
            }
        }
        if self.command == CommandKind::Set
            && self.volume.is_none()
            && self.position.is_none()
            && self.pitch.is_none()
        {
            return Err(DecodeError::new(
                "cmd",
                "set requires at least one of volume, position, pitch",
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoundCommandWire {
    cmd: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    volume: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pitch: Option<f64>,
}

impl Payload for SoundCommand {
    fn encode(&self) -> Vec<u8> {
        let p = self.position;
        to_json(&SoundCommandWire {
            cmd: self.command,
            volume: self.volume,
            x: p.map(|p| p.x),
            y: p.map(|p| p.y),
            z: p.map(|p| p.z),
            pitch: self.pitch,
        })
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let w: SoundCommandWire = parse_json(bytes)?;
        let position = match (w.x, w.y, w.z) {
            (Some(x), Some(y), Some(z)) => Some(Vec3::new(x, y, z)),
            (None, None, None) => None,
            (x, y, _) => {
                let missing = if x.is_none() { "x" } else if y.is_none() { "y" } else { "z" };
                return Err(DecodeError::new(
                    missing,
                    format!("position requires x, y and z; {missing} is missing"),
                ));
            }
        };
        let cmd = SoundCommand { command: w.cmd, volume: w.volume, position, pitch: w.pitch };
        cmd.validate()?;
        Ok(cmd)
    }
}

/// State echo for one sound after every command.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundStatus {
    pub sound_id: String,
    pub playing: bool,
    pub volume: f64,
    pub position: Vec3,
    pub pitch: f64,
    /// Energy-normalized per-speaker panning gains, one per configured speaker.
    pub gains: Vec<f64>,
    pub timestamp_us: u64,
}

impl SoundStatus {
    pub fn validate(&self) -> Result<(), DecodeError> {
        check_non_empty("sound_id", &self.sound_id)?;
        check_range("volume", self.volume, VOLUME_RANGE)?;
        check_range("pitch", self.pitch, PITCH_RANGE)?;
        let mut energy = 0.0;
        for g in &self.gains {
            check_range("gains", *g, (0.0, 1.0))?;
            energy += g * g;
        }
        if energy > 1.0 + 1e-6 {
            return Err(DecodeError::new("gains", format!("gain energy {energy} exceeds 1")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoundStatusWire {
    sound_id: String,
    playing: bool,
    volume: f64,
    x: f64,
    y: f64,
    z: f64,
    pitch: f64,
    gains: Vec<f64>,
    ts_us: u64,
}

impl Payload for SoundStatus {
    fn encode(&self) -> Vec<u8> {
        to_json(&SoundStatusWire {
            sound_id: self.sound_id.clone(),
            playing: self.playing,
            volume: self.volume,
            x: self.position.x,
            y: self.position.y,
            z: self.position.z,
            pitch: self.pitch,
            gains: self.gains.clone(),
            ts_us: self.timestamp_us,
        })
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let w: SoundStatusWire = parse_json(bytes)?;
        let s = SoundStatus {
            sound_id: w.sound_id,
            playing: w.playing,
            volume: w.volume,
            position: Vec3::new(w.x, w.y, w.z),
            pitch: w.pitch,
            gains: w.gains,
            timestamp_us: w.ts_us,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Error report published on a status topic in place of a normal status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReport {
    pub id: String,
    pub error: String,
}

impl Payload for ErrorReport {
    fn encode(&self) -> Vec<u8> {
        to_json(self)
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        parse_json(bytes)
    }
}

/// Latency-probe payload. `pad` fills the message up to the requested size
/// and is ignored on decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchMessage {
    pub seq: u64,
    pub t_send_us: u64,
}

#[derive(Serialize)]
struct BenchWireOut<'a> {
    seq: u64,
    t_send_us: u64,
    pad: &'a str,
}

#[derive(Deserialize)]
struct BenchWireIn {
    seq: u64,
    t_send_us: u64,
    #[allow(dead_code)]
    #[serde(default)]
    pad: serde::de::IgnoredAny,
}

impl BenchMessage {
    /// Encodes padded to exactly `size` bytes, or to the smallest possible
    /// encoding when `size` is below it.
    pub fn encode_padded(&self, size: usize) -> Vec<u8> {
        let bare = to_json(&BenchWireOut { seq: self.seq, t_send_us: self.t_send_us, pad: "" });
        let fill = size.saturating_sub(bare.len());
        if fill == 0 {
            return bare;
        }
        let pad = "x".repeat(fill);
        to_json(&BenchWireOut { seq: self.seq, t_send_us: self.t_send_us, pad: &pad })
    }
}

impl Payload for BenchMessage {
    fn encode(&self) -> Vec<u8> {
        self.encode_padded(0)
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let w: BenchWireIn = parse_json(bytes)?;
        Ok(Self { seq: w.seq, t_send_us: w.t_send_us })
    }
}

/// Extraction-zone selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSelect {
    pub zone_id: String,
}

impl Payload for ZoneSelect {
    fn encode(&self) -> Vec<u8> {
        to_json(self)
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let z: ZoneSelect = parse_json(bytes)?;
        check_non_empty("zone_id", &z.zone_id)?;
        Ok(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractStatus {
    pub zone_id: String,
    pub snr_in_db: f64,
    pub snr_out_db: f64,
}

impl Payload for ExtractStatus {
    fn encode(&self) -> Vec<u8> {
        to_json(self)
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        parse_json(bytes)
    }
}

/// Discriminates [`Message`] variants for [`decode_message`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Location,
    SoundCommand,
    SoundStatus,
    Bench,
    Error,
    ZoneSelect,
    ExtractStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Location(LocationMessage),
    SoundCommand(SoundCommand),
    SoundStatus(SoundStatus),
    Bench(BenchMessage),
    Error(ErrorReport),
    ZoneSelect(ZoneSelect),
    ExtractStatus(ExtractStatus),
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    match msg {
        Message::Location(m) => m.encode(),
        Message::SoundCommand(m) => m.encode(),
        Message::SoundStatus(m) => m.encode(),
        Message::Bench(m) => m.encode(),
        Message::Error(m) => m.encode(),
        Message::ZoneSelect(m) => m.encode(),
        Message::ExtractStatus(m) => m.encode(),
    }
}

pub fn decode_message(bytes: &[u8], kind: MessageKind) -> Result<Message, DecodeError> {
    Ok(match kind {
        MessageKind::Location => Message::Location(Payload::decode(bytes)?),
        MessageKind::SoundCommand => Message::SoundCommand(Payload::decode(bytes)?),
        MessageKind::SoundStatus => Message::SoundStatus(Payload::decode(bytes)?),
        MessageKind::Bench => Message::Bench(Payload::decode(bytes)?),
        MessageKind::Error => Message::Error(Payload::decode(bytes)?),
        MessageKind::ZoneSelect => Message::ZoneSelect(Payload::decode(bytes)?),
        MessageKind::ExtractStatus => Message::ExtractStatus(Payload::decode(bytes)?),
    })
}
