use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::clip::{sample_at, Clip};
use super::layout::{compute_gains, distance_attenuation, triangulate_layout, PanningMesh, SpeakerLayout};
use super::RenderError;
use crate::schema::{CommandKind, Payload, SoundCommand, SoundStatus, Vec3};

pub const DEFAULT_SAMPLE_RATE: u32 = 48_000;
pub const DEFAULT_BLOCK_SIZE: usize = 512;

/// One registered sound and its playback state.
#[derive(Debug, Clone)]
pub struct SoundSource {
    pub id: String,
    pub clip: Clip,
    pub looping: bool,
    pub playing: bool,
    /// Fractional read position into `clip`, in samples.
    pub cursor: f64,
    pub volume: f64,
    pub pitch: f64,
    pub position: Vec3,
    /// Normalized direction gains (Σg² = 1), as reported in status.
    pub direction_gains: Vec<f64>,
    /// Per-channel gains at the end of the last rendered block.
    pub current_gains: Vec<f64>,
    /// Per-channel gains the next block ramps to: direction gains × volume ×
    /// distance attenuation.
    pub target_gains: Vec<f64>,
}

impl SoundSource {
    fn sample(&self, pos: f64) -> f32 {
        let s = &self.clip.samples;
        if !self.looping {
            return sample_at(s, pos);
        }
        let len = s.len() as f64;
        let pos = pos.rem_euclid(len);
        let i = pos.floor() as usize % s.len();
        let frac = (pos - pos.floor()) as f32;
        let a = s[i];
        let b = s[(i + 1) % s.len()];
        a + (b - a) * frac
    }
}

/// Channel-major block of rendered audio.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBlock {
    pub channels: Vec<Vec<f32>>,
    pub sample_rate: u32,
}

impl RenderBlock {
    pub fn frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}

/// Panning state for every registered sound plus the block renderer.
#[derive(Debug, Clone)]
pub struct RenderEngine {
    layout: SpeakerLayout,
    mesh: PanningMesh,
    sample_rate: u32,
    sources: BTreeMap<String, SoundSource>,
    finished: Vec<String>,
}

impl RenderEngine {
    pub fn new(layout: SpeakerLayout, sample_rate: u32) -> Result<Self, RenderError> {
        let mesh = triangulate_layout(&layout)?;
        Ok(Self { layout, mesh, sample_rate, sources: BTreeMap::new(), finished: Vec::new() })
    }

    pub fn layout(&self) -> &SpeakerLayout {
        &self.layout
    }

    pub fn mesh(&self) -> &PanningMesh {
        &self.mesh
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> usize {
        self.layout.len()
    }

    /// Registers a stopped sound at `position`, resampling its clip to the
    /// engine rate.
    pub fn add_sound(&mut self, id: &str, clip: &Clip, looping: bool, position: Vec3) -> Result<(), RenderError> {
        if self.sources.contains_key(id) {
            return Err(RenderError::InvalidCommand(format!("sound {id:?} registered twice")));
        }
        if !position.is_finite() {
            return Err(RenderError::InvalidCommand(format!("sound {id:?} has a non-finite position")));
        }
        let clip = clip.resampled(self.sample_rate);
        if clip.samples.is_empty() {
            return Err(RenderError::Audio { path: id.to_string(), reason: "clip is empty".into() });
        }
        let mut src = SoundSource {
            id: id.to_string(),
            clip,
            looping,
            playing: false,
            cursor: 0.0,
            volume: 1.0,
            pitch: 1.0,
            position,
            direction_gains: Vec::new(),
            current_gains: Vec::new(),
            target_gains: Vec::new(),
        };
        self.retarget(&mut src);
        src.current_gains = src.target_gains.clone();
        self.sources.insert(id.to_string(), src);
        Ok(())
    }

    fn retarget(&self, src: &mut SoundSource) {
        src.direction_gains = compute_gains(src.position, &self.layout, &self.mesh);
        let scale = src.volume * distance_attenuation(src.position.distance(self.layout.reference_point));
        src.target_gains = src.direction_gains.iter().map(|g| g * scale).collect();
    }

    pub fn sound_ids(&self) -> impl Iterator<Item = &str> {
        self.sources.keys().map(String::as_str)
    }

    pub fn source(&self, id: &str) -> Option<&SoundSource> {
        self.sources.get(id)
    }

    pub fn status(&self, id: &str, timestamp_us: u64) -> Result<SoundStatus, RenderError> {
        let s = self.sources.get(id).ok_or_else(|| RenderError::UnknownSound(id.to_string()))?;
        Ok(SoundStatus {
            sound_id: s.id.clone(),
            playing: s.playing,
            volume: s.volume,
            position: s.position,
            pitch: s.pitch,
            gains: s.direction_gains.clone(),
            timestamp_us,
        })
    }

    /// Applies one control command and returns the resulting status.
    ///
    /// `play` restarts from the beginning when the sound is stopped and is a
    /// no-op when it is already playing. `set` changes only the fields it
    /// carries; while playing, the new gains are reached by a ramp over the
    /// next block.
    pub fn apply_command(&mut self, id: &str, cmd: &SoundCommand, timestamp_us: u64) -> Result<SoundStatus, RenderError> {
        cmd.validate().map_err(|e| RenderError::InvalidCommand(e.reason))?;
        let mut src = self.sources.remove(id).ok_or_else(|| RenderError::UnknownSound(id.to_string()))?;
        if let Some(v) = cmd.volume {
            src.volume = v;
        }
        if let Some(p) = cmd.pitch {
            src.pitch = p;
        }
        if let Some(p) = cmd.position {
            src.position = p;
        }
        if cmd.volume.is_some() || cmd.position.is_some() {
            self.retarget(&mut src);
        }
        match cmd.command {
            CommandKind::Play if !src.playing => {
                src.cursor = 0.0;
                src.playing = true;
                src.current_gains.clone_from(&src.target_gains);
            }
            CommandKind::Stop => src.playing = false,
            _ => {}
        }
        if !src.playing {
            src.current_gains.clone_from(&src.target_gains);
        }
        self.sources.insert(id.to_string(), src);
        self.status(id, timestamp_us)
    }

    /// Sounds that reached their end during rendering since the last call.
    pub fn take_finished(&mut self) -> Vec<String> {
        std::mem::take(&mut self.finished)
    }

    /// Renders the next `block_size` frames.
    pub fn render_block(&mut self, block_size: usize) -> RenderBlock {
        let channels = self.layout.len();
        let mut mix = vec![vec![0.0f64; block_size]; channels];
        let inv = 1.0 / block_size.max(1) as f64;
        for src in self.sources.values_mut() {
            if !src.playing {
                continue;
            }
            let input: Vec<f64> =
                (0..block_size).map(|n| src.sample(src.cursor + n as f64 * src.pitch) as f64).collect();
            for (c, out) in mix.iter_mut().enumerate() {
                let (g0, g1) = (src.current_gains[c], src.target_gains[c]);
                if g0 == 0.0 && g1 == 0.0 {
                    continue;
                }
                for (n, (o, x)) in out.iter_mut().zip(&input).enumerate() {
                    let g = g0 + (g1 - g0) * (n + 1) as f64 * inv;
                    *o += g * x;
                }
            }
            src.current_gains.clone_from(&src.target_gains);
            src.cursor += block_size as f64 * src.pitch;
            let len = src.clip.samples.len() as f64;
            if src.looping {
                src.cursor = src.cursor.rem_euclid(len);
            } else if src.cursor >= len {
                src.cursor = len;
                src.playing = false;
                self.finished.push(src.id.clone());
            }
        }
        RenderBlock {
            channels: mix.into_iter().map(|ch| ch.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect()).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// A command scheduled at `t` seconds into an offline session.
///
/// JSON form: `{"t": 0.5, "sound_id": "s1", "cmd": "set", "x": 1, ...}`, i.e.
/// the control payload with `t` and `sound_id` added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimedWire", into = "TimedWire")]
pub struct TimedCommand {
    pub t: f64,
    pub sound_id: String,
    pub command: SoundCommand,
}

#[derive(Serialize, Deserialize)]
struct TimedWire {
    t: f64,
    sound_id: String,
    #[serde(flatten)]
    command: serde_json::Map<String, serde_json::Value>,
}

impl TryFrom<TimedWire> for TimedCommand {
    type Error = String;

    fn try_from(w: TimedWire) -> Result<Self, String> {
        let bytes = serde_json::to_vec(&w.command).map_err(|e| e.to_string())?;
        let command = SoundCommand::decode(&bytes).map_err(|e| e.reason)?;
        Ok(Self { t: w.t, sound_id: w.sound_id, command })
    }
}

impl From<TimedCommand> for TimedWire {
    fn from(c: TimedCommand) -> Self {
        let command = serde_json::from_slice(&c.command.encode()).unwrap_or_default();
        Self { t: c.t, sound_id: c.sound_id, command }
    }
}

#[derive(Debug, Clone)]
pub struct SessionSound {
    pub id: String,
    pub clip: Clip,
    pub looping: bool,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

/// Renders a command log offline into an N-channel WAV file.
///
/// Commands take effect at the first block boundary at or after their time.
/// The output depends only on the inputs, so identical calls write
/// identical files.
pub fn render_session_to_wav(
    log: &[TimedCommand],
    sounds: &[SessionSound],
    layout: &SpeakerLayout,
    duration_s: f64,
    format: WavFormat,
    path: &Path,
) -> Result<(), RenderError> {
    if log.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(RenderError::InvalidCommand("command log is not sorted by time".into()));
    }
    let sr = DEFAULT_SAMPLE_RATE;
    let mut engine = RenderEngine::new(layout.clone(), sr)?;
    for s in sounds {
        engine.add_sound(&s.id, &s.clip, s.looping, s.position)?;
    }
    let spec = hound::WavSpec {
        channels: layout.len() as u16,
        sample_rate: sr,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    let total = (duration_s.max(0.0) * sr as f64).round() as usize;
    let mut next = 0;
    let mut written = 0;
    while written < total {
        let block_start = written as f64 / sr as f64;
        while next < log.len() && log[next].t <= block_start + 1e-12 {
            let c = &log[next];
            engine.apply_command(&c.sound_id, &c.command, (c.t * 1e6).round() as u64)?;
            next += 1;
        }
        let frames = DEFAULT_BLOCK_SIZE.min(total - written);
        let block = engine.render_block(DEFAULT_BLOCK_SIZE);
        write_frames(&mut writer, &block, frames, format)?;
        written += frames;
    }
    writer.finalize()?;
    Ok(())
}

pub(crate) fn write_frames<W: std::io::Write + std::io::Seek>(
    writer: &mut hound::WavWriter<W>,
    block: &RenderBlock,
    frames: usize,
    format: WavFormat,
) -> Result<(), hound::Error> {
    for n in 0..frames {
        for ch in &block.channels {
            match format {
                WavFormat::Pcm16 => writer.write_sample((ch[n] * 32767.0).round() as i16)?,
                WavFormat::Float32 => writer.write_sample(ch[n])?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn engine_with(clip: &Clip, looping: bool) -> RenderEngine {
        let mut e = RenderEngine::new(SpeakerLayout::default_room(), DEFAULT_SAMPLE_RATE).unwrap();
        e.add_sound("s", clip, looping, Vec3::new(2.0, 3.0, 1.95)).unwrap();
        e
    }

    /// Unit distance from the reference point toward speaker `k`, so that
    /// attenuation is exactly 1.
    fn toward_speaker(e: &RenderEngine, k: usize) -> Vec3 {
        e.layout().reference_point + e.mesh().directions()[k]
    }

    #[test]
    fn one_hot_channel_carries_the_input() {
        let clip = Clip::tone(300.0, 0.5, 0.5, DEFAULT_SAMPLE_RATE);
        let mut e = engine_with(&clip, false);
        let pos = toward_speaker(&e, 5);
        e.apply_command("s", &SoundCommand::set().with_position(pos).with_volume(0.8), 0).unwrap();
        e.apply_command("s", &SoundCommand::play(), 0).unwrap();
        let b = e.render_block(512);
        for (c, ch) in b.channels.iter().enumerate() {
            for (n, v) in ch.iter().enumerate() {
                let want = if c == 5 { clip.samples[n] as f64 * 0.8 } else { 0.0 };
                assert!((*v as f64 - want).abs() < 1e-6, "ch {c} n {n}");
            }
        }
    }

    #[test]
    fn play_stop_status() {
        let mut e = engine_with(&Clip::tone(300.0, 0.1, 0.5, DEFAULT_SAMPLE_RATE), false);
        assert!(e.apply_command("s", &SoundCommand::play(), 1).unwrap().playing);
        assert!(!e.apply_command("s", &SoundCommand::stop(), 2).unwrap().playing);
        assert!(matches!(e.apply_command("nope", &SoundCommand::play(), 3), Err(RenderError::UnknownSound(_))));
        let bad = SoundCommand::set().with_volume(3.0);
        assert!(matches!(e.apply_command("s", &bad, 4), Err(RenderError::InvalidCommand(_))));
    }

    #[test]
    fn center_position_status_is_normalized() {
        let mut e = engine_with(&Clip::tone(300.0, 0.1, 0.5, DEFAULT_SAMPLE_RATE), false);
        let st = e.apply_command("s", &SoundCommand::set().with_position(Vec3::new(2.0, 2.0, 1.95)), 0).unwrap();
        assert!((st.gains.iter().map(|g| g * g).sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(st.validate().is_ok());
    }

    #[test]
    fn non_looping_sound_stops_at_end() {
        let mut e = engine_with(&Clip::new(vec![0.5; 700], DEFAULT_SAMPLE_RATE), false);
        e.apply_command("s", &SoundCommand::play(), 0).unwrap();
        e.render_block(512);
        assert!(e.take_finished().is_empty());
        let b = e.render_block(512);
        assert_eq!(e.take_finished(), vec!["s".to_string()]);
        assert!(!e.source("s").unwrap().playing);
        let tail: f32 = b.channels.iter().map(|c| c[300..].iter().map(|v| v.abs()).sum::<f32>()).sum();
        assert_eq!(tail, 0.0);
    }

    #[test]
    fn limiter_clamps() {
        let mut e = engine_with(&Clip::new(vec![1.0; 4096], DEFAULT_SAMPLE_RATE), true);
        let pos = e.layout().reference_point + e.mesh().directions()[0] * 0.5;
        e.apply_command("s", &SoundCommand::set().with_position(pos).with_volume(2.0), 0).unwrap();
        e.apply_command("s", &SoundCommand::play(), 0).unwrap();
        let b = e.render_block(512);
        assert!(b.channels.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(b.channels[0][10], 1.0);
    }

    #[test]
    fn gain_ramp_is_linear() {
        let mut e = engine_with(&Clip::new(vec![0.5; 48_000], DEFAULT_SAMPLE_RATE), false);
        let a = toward_speaker(&e, 0);
        e.apply_command("s", &SoundCommand::set().with_position(a), 0).unwrap();
        e.apply_command("s", &SoundCommand::play(), 0).unwrap();
        e.render_block(64);
        e.apply_command("s", &SoundCommand::set().with_volume(0.0), 0).unwrap();
        let b = e.render_block(64);
        for n in 0..64 {
            let want = 0.5 * (1.0 - (n + 1) as f64 / 64.0);
            assert!((b.channels[0][n] as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn energy_is_bounded_by_source_energy() {
        let clip = Clip::tone(523.0, 0.5, 0.7, DEFAULT_SAMPLE_RATE);
        let mut e = engine_with(&clip, true);
        let targets = [Vec3::new(0.5, 3.0, 1.0), Vec3::new(3.5, 0.5, 2.6), Vec3::new(2.0, 2.0, 3.2)];
        e.apply_command("s", &SoundCommand::play().with_volume(0.9), 0).unwrap();
        for t in targets {
            // unit distance so attenuation is 1
            let dir = (t - e.layout().reference_point).normalized().unwrap();
            let before = e.source("s").unwrap().cursor;
            e.apply_command("s", &SoundCommand::set().with_position(e.layout().reference_point + dir), 0).unwrap();
            let b = e.render_block(512);
            let src: f64 = (0..512).map(|n| clip.samples[(before as usize + n) % clip.samples.len()] as f64).map(|x| x * x).sum();
            let out: f64 = b.channels.iter().flatten().map(|v| (*v as f64).powi(2)).sum();
            assert!(out <= src * 0.81 * (1.0 + 1e-6), "{out} > {src}");
        }
    }

    #[test]
    fn pitch_two_doubles_frequency() {
        let clip = Clip::tone(440.0, 4.0, 0.5, DEFAULT_SAMPLE_RATE);
        let mut e = engine_with(&clip, false);
        let pos = toward_speaker(&e, 2);
        e.apply_command("s", &SoundCommand::set().with_position(pos).with_pitch(2.0), 0).unwrap();
        e.apply_command("s", &SoundCommand::play(), 0).unwrap();
        let mut ch = Vec::new();
        while ch.len() < 48_000 {
            ch.extend_from_slice(&e.render_block(512).channels[2]);
        }
        ch.truncate(48_000);
        let mut buf: Vec<Complex<f64>> = ch.iter().map(|v| Complex::new(*v as f64, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let peak = (1..24_000).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        let hz = peak as f64 * 48_000.0 / 48_000.0;
        assert!((hz - 880.0).abs() <= 2.0, "{hz}");
    }

    #[test]
    fn session_render_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let layout = SpeakerLayout::default_room();
        let clip = Clip::tone(440.0, 1.0, 0.5, DEFAULT_SAMPLE_RATE);
        let sounds = [SessionSound { id: "a".into(), clip, looping: false, position: layout.speakers[4].position }];
        let log = [
            TimedCommand { t: 0.0, sound_id: "a".into(), command: SoundCommand::play() },
            TimedCommand { t: 0.4, sound_id: "a".into(), command: SoundCommand::set().with_pitch(1.5) },
        ];
        let (p1, p2) = (dir.path().join("1.wav"), dir.path().join("2.wav"));
        render_session_to_wav(&log, &sounds, &layout, 1.5, WavFormat::Pcm16, &p1).unwrap();
        render_session_to_wav(&log, &sounds, &layout, 1.5, WavFormat::Pcm16, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let mut r = hound::WavReader::open(&p1).unwrap();
        assert_eq!(r.spec().channels, 8);
        assert_eq!(r.duration(), 72_000);
        let s: Vec<i16> = r.samples::<i16>().map(Result::unwrap).collect();
        let peak = |c: usize| s.iter().skip(c).step_by(8).map(|v| v.unsigned_abs()).max().unwrap();
        assert!(peak(4) > 1000);
        assert!((0..8).filter(|&c| c != 4).all(|c| peak(c) == 0));
    }

    #[test]
    fn timed_command_json() {
        let c: TimedCommand =
            serde_json::from_str(r#"{"t":0.5,"sound_id":"s1","cmd":"set","x":1,"y":2,"z":1.5}"#).unwrap();
        assert_eq!(c.command, SoundCommand::set().with_position(Vec3::new(1.0, 2.0, 1.5)));
        let back: TimedCommand = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<TimedCommand>(r#"{"t":0,"sound_id":"s","cmd":"set","volume":9}"#).is_err());
    }

    #[test]
    fn empty_log_is_silent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("silent.wav");
        render_session_to_wav(&[], &[], &SpeakerLayout::default_room(), 0.25, WavFormat::Float32, &p).unwrap();
        let mut r = hound::WavReader::open(&p).unwrap();
        assert_eq!(r.duration(), 12_000);
        assert!(r.samples::<f32>().all(|v| v.unwrap() == 0.0));
    }
}
