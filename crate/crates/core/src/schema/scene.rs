use std::collections::HashMap;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::{SchemaError, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Tag,
    SoundSource,
    Speaker,
    Microphone,
    Sensor,
    Zone,
}

/// An object in the virtual space mirroring something in the room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub kind: ObjectKind,
    pub pose: Vec3,
    /// Assigned by the registry; ignored on upsert.
    pub version: u64,
}

impl SceneObject {
    pub fn new(id: impl Into<String>, kind: ObjectKind, pose: Vec3) -> Self {
        Self { id: id.into(), kind, pose, version: 0 }
    }
}

/// Registry of scene objects. Many readers, one writer at a time; each call
/// is atomic.
#[derive(Debug, Default)]
pub struct Scene {
    objects: RwLock<HashMap<String, SceneObject>>,
}

impl Scene {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces an object and returns its new version, which is
    /// one more than the previous version of the same id (1 on first insert).
    pub fn upsert(&self, mut object: SceneObject) -> Result<u64, SchemaError> {
        if object.id.is_empty() {
            return Err(SchemaError::InvalidObject("object id is empty".into()));
        }
        if !object.pose.is_finite() {
            return Err(SchemaError::InvalidObject(format!(
                "object {} has a non-finite pose",
                object.id
            )));
        }
        let mut objects = self.objects.write();
        let version = objects.get(&object.id).map_or(1, |o| o.version + 1);
        object.version = version;
        objects.insert(object.id.clone(), object);
        Ok(version)
    }

    pub fn get(&self, id: &str) -> Result<SceneObject, SchemaError> {
        self.objects
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| SchemaError::NotFound(id.to_string()))
    }

    /// Point-in-time copy, sorted by id.
    pub fn snapshot(&self) -> Vec<SceneObject> {
        let mut all: Vec<_> = self.objects.read().values().cloned().collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }

    pub fn len(&self) -> usize {
        self.objects.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn upsert_then_get() {
        let scene = Scene::new();
        let v = scene.upsert(SceneObject::new("tag1", ObjectKind::Tag, Vec3::ZERO)).unwrap();
        assert_eq!(v, 1);
        let o = scene.get("tag1").unwrap();
        assert_eq!(o.pose, Vec3::ZERO);
        assert_eq!(o.version, 1);
        let v = scene
            .upsert(SceneObject::new("tag1", ObjectKind::Tag, Vec3::new(1.0, 0.0, 0.0)))
            .unwrap();
        assert_eq!(v, 2);
    }

    #[test]
    fn unknown_id() {
        let scene = Scene::new();
        assert!(matches!(scene.get("nope"), Err(SchemaError::NotFound(_))));
        assert!(scene.upsert(SceneObject::new("", ObjectKind::Tag, Vec3::ZERO)).is_err());
    }

    #[test]
    fn randomized_upserts_match_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scene = Scene::new();
        let mut log = Vec::new();
        for _ in 0..1000 {
            let id = format!("obj{}", rng.gen_range(0..10));
            let pose = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let obj = SceneObject::new(id, ObjectKind::Tag, pose);
            scene.upsert(obj.clone()).unwrap();
            log.push(obj);
        }
        // replay oracle: last pose wins, version = number of upserts of the id
        let mut expect: HashMap<String, (Vec3, u64)> = HashMap::new();
        for o in &log {
            let e = expect.entry(o.id.clone()).or_insert((o.pose, 0));
            *e = (o.pose, e.1 + 1);
        }
        let snap = scene.snapshot();
        assert_eq!(snap.len(), 10);
        for o in snap {
            let (pose, version) = expect[&o.id];
            assert_eq!(o.pose, pose);
            assert_eq!(o.version, version);
        }
    }

    #[test]
    fn concurrent_upserts_linearize() {
        let scene = Arc::new(Scene::new());
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let scene = scene.clone();
                std::thread::spawn(move || {
                    let mut versions = Vec::new();
                    for i in 0..500 {
                        let id = format!("o{}", (t + i) % 5);
                        let v = scene
                            .upsert(SceneObject::new(id.clone(), ObjectKind::Zone, Vec3::ZERO))
                            .unwrap();
                        versions.push((id, v));
                    }
                    versions
                })
            })
            .collect();
        let mut per_id: HashMap<String, Vec<u64>> = HashMap::new();
        for h in handles {
            for (id, v) in h.join().unwrap() {
                per_id.entry(id).or_default().push(v);
            }
        }
        // versions handed out per id form exactly 1..=n, as in a serial replay
        for (id, mut vs) in per_id {
            vs.sort_unstable();
            let n = vs.len() as u64;
            assert_eq!(vs, (1..=n).collect::<Vec<_>>());
            assert_eq!(scene.get(&id).unwrap().version, n);
        }
    }
}
