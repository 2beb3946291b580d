use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::extract::{MicArrayConfig, Zone};
use crate::localization::{check_sensor_geometry, SensorConfig, TagConfig};
use crate::render::{triangulate_layout, Clip, SessionSound, SpeakerLayout, WavFormat};
use crate::schema::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    #[serde(default = "default_prefix")]
    pub prefix: String,
    #[serde(default)]
    pub broker: BrokerSettings,
    pub room: Room,
    pub speakers: SpeakerLayout,
    pub sensors: Vec<SensorConfig>,
    #[serde(default)]
    pub tags: Vec<TagConfig>,
    pub mic_array: MicArrayConfig,
    pub zones: Vec<Zone>,
    #[serde(default)]
    pub sounds: Vec<SoundEntry>,
    #[serde(default)]
    pub localization: LocalizationSettings,
    #[serde(default)]
    pub render: RenderSettings,
    #[serde(default)]
    pub extraction: ExtractionSettings,
    #[serde(default)]
    pub services: ServiceToggles,
    /// Directory relative paths are resolved against. Set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_prefix() -> String {
    "sdm".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerSettings {
    /// Run the broker in-process. When false, `addr` names an external one.
    #[serde(default = "yes")]
    pub embedded: bool,
    pub addr: String,
    /// WebSocket listener of the embedded broker, if any.
    #[serde(default)]
    pub ws_addr: Option<String>,
}

impl Default for BrokerSettings {
    fn default() -> Self {
        Self { embedded: true, addr: "127.0.0.1:1883".into(), ws_addr: Some("127.0.0.1:8083".into()) }
    }
}

fn yes() -> bool {
    true
}

/// Axis-aligned room bounds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub min: Vec3,
    pub max: Vec3,
}

impl Room {
    pub fn contains(&self, p: Vec3) -> bool {
        let eps = 1e-9;
        p.is_finite()
            && (self.min.x - eps..=self.max.x + eps).contains(&p.x)
            && (self.min.y - eps..=self.max.y + eps).contains(&p.y)
            && (self.min.z - eps..=self.max.z + eps).contains(&p.z)
    }
}

/// A registered sound: either a WAV file or a generated tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundEntry {
    pub id: String,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub tone: Option<ToneSpec>,
    #[serde(default, rename = "loop")]
    pub looping: bool,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSpec {
    pub freq_hz: f64,
    pub duration_s: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f32,
}

fn default_amplitude() -> f32 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationSettings {
    pub publish_rate_hz: f64,
    pub seed: u64,
}

impl Default for LocalizationSettings {
    fn default() -> Self {
        Self { publish_rate_hz: 10.0, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSettings {
    pub sample_rate: u32,
    pub block_size: usize,
    #[serde(default)]
    pub output_wav: Option<PathBuf>,
    #[serde(default)]
    pub output_format: WavFormat,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { sample_rate: 48_000, block_size: 512, output_wav: None, output_format: WavFormat::Pcm16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionSettings {
    /// Multichannel recording to extract from, one channel per mic. When
    /// absent, a scene with one synthetic talker per zone is simulated.
    #[serde(default)]
    pub capture_wav: Option<PathBuf>,
    pub scene_seconds: f64,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        Self { capture_wav: None, scene_seconds: 3.0, seed: 1, output_dir: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceToggles {
    pub localization: bool,
    pub render: bool,
    pub extraction: bool,
}

impl Default for ServiceToggles {
    fn default() -> Self {
        Self { localization: true, render: true, extraction: true }
    }
}

/// One validation failure: where, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

/// Every problem found in a config, not just the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} config error(s):", self.0.len())?;
        for i in &self.0 {
            writeln!(f, "  {i}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    fn single(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self(vec![ConfigIssue { path: path.into(), reason: reason.into() }])
    }
}

/// The bundled default station, as shipped in `config/station.json`.
pub const BUNDLED_CONFIG: &str = include_str!("../../../../config/station.json");

impl StationConfig {
    /// Parses and validates the bundled default.
    pub fn bundled() -> Self {
        parse_config(BUNDLED_CONFIG, Path::new(".")).expect("bundled config is valid")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads the clips of all registered sounds at `sample_rate`.
    pub fn session_sounds(&self) -> Result<Vec<SessionSound>, ConfigErrors> {
        let rate = self.render.sample_rate;
        let mut out = Vec::with_capacity(self.sounds.len());
        let mut issues = Vec::new();
        for (i, s) in self.sounds.iter().enumerate() {
            let clip = match (&s.file, &s.tone) {
                (Some(f), None) => match Clip::from_wav(&self.resolve(f)) {
                    Ok(c) => c.resampled(rate),
                    Err(e) => {
                        issues.push(ConfigIssue { path: format!("sounds[{i}].file"), reason: e.to_string() });
                        continue;
                    }
                },
                (None, Some(t)) => Clip::tone(t.freq_hz, t.duration_s, t.amplitude, rate),
                _ => continue,
            };
            out.push(SessionSound { id: s.id.clone(), clip, looping: s.looping, position: s.position });
        }
        if issues.is_empty() {
            Ok(out)
        } else {
            Err(ConfigErrors(issues))
        }
    }

    /// Checks the whole config and reports every problem found.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut v = Validator::default();
        let room = self.room;

        if self.prefix.contains(['+', '#', '\0']) {
            v.issue("prefix", "must not contain '+', '#' or NUL");
        }
        if self.broker.addr.trim().is_empty() {
            v.issue("broker.addr", "is empty");
        }
        if !(room.min.is_finite() && room.max.is_finite())
            || room.min.x >= room.max.x
            || room.min.y >= room.max.y
            || room.min.z >= room.max.z
        {
            v.issue("room", "min must be below max on every axis");
        }

        for (i, s) in self.speakers.speakers.iter().enumerate() {
            v.id("speakers", i, &s.id);
            v.inside(&room, &format!("speakers.speakers[{i}] ({})", s.id), s.position);
        }
        if self.speakers.speakers.len() >= 4 {
            if let Err(e) = triangulate_layout(&self.speakers) {
                v.issue("speakers", e.to_string());
            }
        } else {
            v.issue("speakers.speakers", "at least 4 speakers are needed");
        }
        v.inside(&room, "speakers.reference_point", self.speakers.reference_point);

        for (i, s) in self.sensors.iter().enumerate() {
            v.id("sensors", i, &s.id);
            v.inside(&room, &format!("sensors[{i}] ({})", s.id), s.position);
            if !(s.range_noise_sigma >= 0.0 && s.range_noise_sigma.is_finite()) {
                v.issue(format!("sensors[{i}].range_noise_sigma"), "must be a non-negative number");
            }
        }
        if let Err(e) = check_sensor_geometry(&self.sensors) {
            v.issue("sensors", e.to_string());
        }
        for (i, t) in self.tags.iter().enumerate() {
            v.id("tags", i, &t.id);
            if let Err(e) = t.trajectory.validate() {
                v.issue(format!("tags[{i}] ({})", t.id), e);
            }
            for (k, w) in t.trajectory.waypoints.iter().enumerate() {
                v.inside(&room, &format!("tags[{i}].waypoints[{k}] ({})", t.id), w.position);
            }
        }

        for (i, m) in self.mic_array.mics.iter().enumerate() {
            v.id("mic_array.mics", i, &m.id);
            v.inside(&room, &format!("mic_array.mics[{i}] ({})", m.id), m.position);
        }
        if let Err(e) = self.mic_array.validate() {
            v.issue("mic_array", e.to_string());
        }
        if self.zones.is_empty() {
            v.issue("zones", "at least one zone is needed");
        }
        for (i, z) in self.zones.iter().enumerate() {
            v.id("zones", i, &z.id);
            v.inside(&room, &format!("zones[{i}] ({})", z.id), z.center);
            if !(z.radius > 0.0) {
                v.issue(format!("zones[{i}].radius"), "must be positive");
            }
        }

        for (i, s) in self.sounds.iter().enumerate() {
            v.id("sounds", i, &s.id);
            v.inside(&room, &format!("sounds[{i}] ({})", s.id), s.position);
            match (&s.file, &s.tone) {
                (Some(f), None) => {
                    let p = self.resolve(f);
                    if !p.is_file() {
                        v.issue(format!("sounds[{i}].file ({})", s.id), format!("{} does not exist", p.display()));
                    }
                }
                (None, Some(t)) => {
                    if !(t.freq_hz > 0.0 && t.duration_s > 0.0 && (0.0..=1.0).contains(&t.amplitude)) {
                        v.issue(format!("sounds[{i}].tone ({})", s.id), "needs freq_hz > 0, duration_s > 0, amplitude in [0, 1]");
                    }
                }
                _ => v.issue(format!("sounds[{i}] ({})", s.id), "exactly one of \"file\" or \"tone\" is required"),
            }
        }

        if !(self.localization.publish_rate_hz > 0.0 && self.localization.publish_rate_hz <= 1000.0) {
            v.issue("localization.publish_rate_hz", "must be in (0, 1000]");
        }
        if self.render.sample_rate == 0 || self.render.block_size == 0 {
            v.issue("render", "sample_rate and block_size must be positive");
        }
        if let Some(p) = &self.extraction.capture_wav {
            let p = self.resolve(p);
            if !p.is_file() {
                v.issue("extraction.capture_wav", format!("{} does not exist", p.display()));
            }
        } else if !(self.extraction.scene_seconds > 0.0 && self.extraction.scene_seconds <= 600.0) {
            v.issue("extraction.scene_seconds", "must be in (0, 600]");
        }

        v.cross_registry_duplicates();
        v.finish()
    }
}

#[derive(Default)]
struct Validator {
    issues: Vec<ConfigIssue>,
    // id -> registries it appears in, first index of each
    seen: HashMap<String, Vec<(String, usize)>>,
}

impl Validator {
    fn issue(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.issues.push(ConfigIssue { path: path.into(), reason: reason.into() });
    }

    fn id(&mut self, registry: &str, index: usize, id: &str) {
        if id.is_empty() || id.contains(['/', '+', '#']) {
            self.issue(format!("{registry}[{index}].id"), format!("{id:?} is not a valid id"));
        }
        let entry = self.seen.entry(id.to_string()).or_default();
        if let Some((_, first)) = entry.iter().find(|(r, _)| r == registry) {
            let first = *first;
            self.issue(format!("{registry}[{index}].id"), format!("duplicate id {id:?} (first at {registry}[{first}])"));
        } else {
            entry.push((registry.to_string(), index));
        }
    }

    fn inside(&mut self, room: &Room, what: &str, p: Vec3) {
        if !room.contains(p) {
            self.issue(what.to_string(), format!("position {p} is outside the room"));
        }
    }

    fn cross_registry_duplicates(&mut self) {
        let mut dups: Vec<(String, Vec<(String, usize)>)> =
            self.seen.iter().filter(|(_, v)| v.len() > 1).map(|(k, v)| (k.clone(), v.clone())).collect();
        dups.sort();
        for (id, places) in dups {
            let list: Vec<String> = places.iter().map(|(r, i)| format!("{r}[{i}]")).collect();
            self.issue(list[1].clone(), format!("id {id:?} is used in several registries: {}", list.join(", ")));
        }
    }

    fn finish(self) -> Result<(), ConfigErrors> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(self.issues))
        }
    }
}

/// Parses JSON config text. Relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<StationConfig, ConfigErrors> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut config: StationConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigErrors::single(if path == "." { "(root)".to_string() } else { path }, e.into_inner().to_string())
    })?;
    config.base_dir = base_dir.to_path_buf();
    config.validate()?;
    Ok(config)
}

/// Reads, parses and validates a station config file.
pub fn load_config(path: &Path) -> Result<StationConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors::single(path.display().to_string(), format!("cannot read: {e}")))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled_json() -> serde_json::Value {
        serde_json::from_str(BUNDLED_CONFIG).unwrap()
    }

    fn parse(v: &serde_json::Value) -> Result<StationConfig, ConfigErrors> {
        parse_config(&v.to_string(), Path::new("."))
    }

    #[test]
    fn bundled_default_loads() {
        let c = StationConfig::bundled();
        assert_eq!(c.speakers.speakers.len(), 8);
        assert_eq!(c.sensors.len(), 4);
        assert_eq!(c.mic_array.mics.len(), 16);
        assert_eq!(c.zones.len(), 4);
        assert!(!c.sounds.is_empty());
        assert_eq!(c.session_sounds().unwrap().len(), c.sounds.len());
    }

    #[test]
    fn bundled_file_matches_builtin_geometry() {
        let c = StationConfig::bundled();
        assert_eq!(c.speakers, SpeakerLayout::default_room());
        assert_eq!(c.sensors, crate::localization::default_sensors());
        assert_eq!(c.mic_array, MicArrayConfig::default_array());
        assert_eq!(c.zones, crate::extract::default_zones());
    }

    #[test]
    fn speaker_outside_room_is_named() {
        let mut v = bundled_json();
        v["speakers"]["speakers"][2]["position"]["x"] = 9.0.into();
        let e = parse(&v).unwrap_err();
        assert!(e.0.iter().any(|i| i.path.contains("speakers[2]") && i.path.contains("low3")), "{e}");
    }

    #[test]
    fn errors_are_aggregated() {
        let mut v = bundled_json();
        let first = v["sounds"][0].clone();
        v["sounds"].as_array_mut().unwrap().push(first.clone());
        v["sensors"][0]["position"]["z"] = (-5.0).into();
        v["zones"][1]["radius"] = 0.0.into();
        let e = parse(&v).unwrap_err();
        assert!(e.0.len() >= 3, "{e}");
        let dup: Vec<_> = e.0.iter().filter(|i| i.reason.contains("duplicate id")).collect();
        assert_eq!(dup.len(), 1);
        assert!(dup[0].reason.contains(first["id"].as_str().unwrap()));
    }

    #[test]
    fn ids_are_unique_across_registries() {
        let mut v = bundled_json();
        v["zones"][0]["id"] = v["sensors"][0]["id"].clone();
        let e = parse(&v).unwrap_err();
        assert!(e.0.iter().any(|i| i.reason.contains("several registries")), "{e}");
    }

    #[test]
    fn missing_file_and_bad_json() {
        let mut v = bundled_json();
        v["sounds"][0] = serde_json::json!({"id": "x", "file": "nope.wav", "position": {"x": 1.0, "y": 1.0, "z": 1.0}});
        let e = parse(&v).unwrap_err();
        assert!(e.0.iter().any(|i| i.reason.contains("does not exist")));

        let e = parse_config(r#"{"room": 3}"#, Path::new(".")).unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert!(e.0[0].path.contains("room"), "{e}");
        assert!(load_config(Path::new("/definitely/not/here.json")).is_err());
    }
}
