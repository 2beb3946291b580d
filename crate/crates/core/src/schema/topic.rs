use std::fmt;

use serde::{Deserialize, Serialize};

use super::SchemaError;

/// A concrete (publishable) topic name: non-empty, no NUL, no wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TopicName(String);

impl TopicName {
    pub fn new(s: impl Into<String>) -> Result<Self, SchemaError> {
        let s = s.into();
        if s.is_empty() {
            return Err(SchemaError::InvalidTopic("topic is empty".into()));
        }
        check_segment_chars(&s, "topic")?;
        Ok(Self(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TopicName {
    type Error = SchemaError;
    fn try_from(s: String) -> Result<Self, SchemaError> {
        TopicName::new(s)
    }
}

impl From<TopicName> for String {
    fn from(t: TopicName) -> String {
        t.0
    }
}

impl AsRef<str> for TopicName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The object classes that get their own topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopicKind {
    Location,
    SoundControl,
    SoundStatus,
    Bench,
}

fn check_segment_chars(s: &str, what: &str) -> Result<(), SchemaError> {
    if let Some(c) = s.chars().find(|c| matches!(c, '+' | '#' | '\0')) {
        let shown = if c == '\0' { "NUL".to_string() } else { format!("'{c}'") };
        return Err(SchemaError::InvalidTopic(format!(
            "{what} {s:?} contains forbidden character {shown}"
        )));
    }
    Ok(())
}

/// Builds the topic for one object: `<prefix>/<kind>/<id>`.
///
/// Location topics end in `location/<id>`, sound topics in
/// `sound/<id>/control` or `sound/<id>/status`, bench topics in `bench/<id>`.
/// Leading and trailing slashes on the prefix are dropped so that the result
/// never has an empty root segment. An empty prefix is allowed.
pub fn make_topic(prefix: &str, kind: TopicKind, id: &str) -> Result<TopicName, SchemaError> {
    check_segment_chars(prefix, "prefix")?;
    check_segment_chars(id, "id")?;
    if id.is_empty() || id.contains('/') {
        return Err(SchemaError::InvalidTopic(format!(
            "id {id:?} must be a single non-empty topic level"
        )));
    }
    let prefix = prefix.trim_matches('/');
    let tail = match kind {
        TopicKind::Location => format!("location/{id}"),
        TopicKind::SoundControl => format!("sound/{id}/control"),
        TopicKind::SoundStatus => format!("sound/{id}/status"),
        TopicKind::Bench => format!("bench/{id}"),
    };
    if prefix.is_empty() {
        TopicName::new(tail)
    } else {
        TopicName::new(format!("{prefix}/{tail}"))
    }
}

/// Joins a prefix and a fixed suffix such as `extract/control`.
pub fn prefixed(prefix: &str, suffix: &str) -> String {
    let prefix = prefix.trim_matches('/');
    if prefix.is_empty() {
        suffix.to_string()
    } else {
        format!("{prefix}/{suffix}")
    }
}

/// Extracts `<id>` from a topic shaped like `<prefix>/sound/<id>/<leaf>`.
pub fn sound_id_from_topic<'a>(prefix: &str, topic: &'a str) -> Option<&'a str> {
    let base = prefixed(prefix, "sound/");
    let rest = topic.strip_prefix(base.as_str())?;
    let (id, _leaf) = rest.split_once('/')?;
    (!id.is_empty()).then_some(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_examples() {
        assert_eq!(
            make_topic("UTokyo/IREF", TopicKind::Location, "tag1").unwrap().as_str(),
            "UTokyo/IREF/location/tag1"
        );
        assert_eq!(
            make_topic("p", TopicKind::SoundControl, "s1").unwrap().as_str(),
            "p/sound/s1/control"
        );
        assert_eq!(
            make_topic("p", TopicKind::SoundStatus, "s1").unwrap().as_str(),
            "p/sound/s1/status"
        );
        assert_eq!(make_topic("p", TopicKind::Bench, "run7").unwrap().as_str(), "p/bench/run7");
    }

    #[test]
    fn leading_slash_is_normalized() {
        assert_eq!(
            make_topic("/UTokyo/IREF/", TopicKind::Location, "tag1").unwrap().as_str(),
            "UTokyo/IREF/location/tag1"
        );
        assert_eq!(make_topic("", TopicKind::Bench, "x").unwrap().as_str(), "bench/x");
    }

    #[test]
    fn wildcards_rejected() {
        assert!(make_topic("a/+", TopicKind::Location, "t").is_err());
        assert!(make_topic("a", TopicKind::Location, "#").is_err());
        assert!(make_topic("a", TopicKind::Location, "t\0").is_err());
        assert!(make_topic("a", TopicKind::Location, "").is_err());
        assert!(make_topic("a", TopicKind::Location, "x/y").is_err());
        assert!(TopicName::new("").is_err());
    }

    #[test]
    fn deterministic() {
        let a = make_topic("site", TopicKind::SoundStatus, "dog").unwrap();
        let b = make_topic("site", TopicKind::SoundStatus, "dog").unwrap();
        assert_eq!(a.as_str().as_bytes(), b.as_str().as_bytes());
    }

    #[test]
    fn sound_id_parsing() {
        assert_eq!(sound_id_from_topic("p", "p/sound/dog/control"), Some("dog"));
        assert_eq!(sound_id_from_topic("p", "q/sound/dog/control"), None);
        assert_eq!(sound_id_from_topic("", "sound/x/status"), Some("x"));
    }
}
