use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::RenderError;
use crate::schema::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerLayout {
    pub speakers: Vec<Speaker>,
    /// Listening center the panning directions are measured from.
    pub reference_point: Vec3,
}

impl SpeakerLayout {
    /// Eight speakers on the corners of a 4×4 m square, at 1.2 m and 2.7 m,
    /// panned about the center of that volume.
    pub fn default_room() -> Self {
        let corners = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)];
        let mut speakers = Vec::with_capacity(8);
        for (level, z) in [1.2, 2.7].into_iter().enumerate() {
            for (i, &(x, y)) in corners.iter().enumerate() {
                speakers.push(Speaker {
                    id: format!("{}{}", if level == 0 { "low" } else { "high" }, i + 1),
                    position: Vec3::new(x, y, z),
                });
            }
        }
        Self { speakers, reference_point: Vec3::new(2.0, 2.0, 1.95) }
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    /// Unit vectors from the reference point to each speaker.
    pub fn directions(&self) -> Result<Vec<Vec3>, RenderError> {
        self.speakers
            .iter()
            .map(|s| {
                (s.position - self.reference_point).normalized().ok_or_else(|| {
                    RenderError::Layout(format!("speaker {} sits on the reference point", s.id))
                })
            })
            .collect()
    }
}

/// Triangulated convex hull of the speaker directions, with each triangle's
/// inverse direction matrix precomputed.
#[derive(Debug, Clone)]
pub struct PanningMesh {
    pub triangles: Vec<[usize; 3]>,
    /// Whether the reference point is strictly inside the hull. If not, some
    /// directions fall outside every triangle and use the nearest one.
    pub encloses_reference: bool,
    inverses: Vec<Matrix3<f64>>,
    directions: Vec<Vec3>,
}

fn na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

const PLANE_EPS: f64 = 1e-9;

impl PanningMesh {
    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    /// Distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::BTreeSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// Speakers used by at least one triangle.
    pub fn vertex_count(&self) -> usize {
        let mut v: Vec<usize> = self.triangles.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    /// Raw triplet gains `L⁻¹ d` for triangle `t`.
    pub fn triplet_gains(&self, t: usize, d: Vec3) -> [f64; 3] {
        let g = self.inverses[t] * na(d);
        [g.x, g.y, g.z]
    }

    /// Triangle whose cone contains `d`, or the closest one if rounding puts
    /// `d` outside every cone. The flag is false in the latter case.
    pub fn locate(&self, d: Vec3) -> (usize, bool) {
        let mut best = (0, f64::NEG_INFINITY);
        for t in 0..self.triangles.len() {
            let g = self.triplet_gains(t, d);
            let worst = g[0].min(g[1]).min(g[2]);
            if worst >= -1e-12 {
                return (t, true);
            }
            if worst > best.1 {
                best = (t, worst);
            }
        }
        (best.0, false)
    }
}

/// Convex hull of the unit speaker directions, split into triangles.
///
/// Facets with more than three coplanar directions (the default layout's
/// faces are quads) are fanned from their lowest-index speaker after sorting
/// the facet's corners by angle, so the result depends only on input order.
pub fn triangulate_layout(layout: &SpeakerLayout) -> Result<PanningMesh, RenderError> {
    if layout.len() < 4 {
        return Err(RenderError::Layout(format!(
            "{} speakers cannot span 3D; at least 4 are needed",
            layout.len()
        )));
    }
    let dirs = layout.directions()?;
    for i in 0..dirs.len() {
        for j in 0..i {
            if dirs[i].distance(dirs[j]) < 1e-9 {
                return Err(RenderError::Layout(format!(
                    "speakers {} and {} share a direction",
                    layout.speakers[j].id, layout.speakers[i].id
                )));
            }
        }
    }
    let p: Vec<Vector3<f64>> = dirs.iter().map(|d| na(*d)).collect();
    let n = p.len();

    // Every supporting plane through three directions, keyed by its vertex set.
    let mut facets: BTreeMap<Vec<usize>, Vector3<f64>> = BTreeMap::new();
    let mut min_offset = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (p[j] - p[i]).cross(&(p[k] - p[i]));
                let len = normal.norm();
                if len < 1e-12 {
                    continue;
                }
                let mut normal = normal / len;
                let offset = normal.dot(&p[i]);
                let mut above = 0;
                let mut below = 0;
                let mut on = Vec::new();
                for (m, q) in p.iter().enumerate() {
                    let s = normal.dot(q) - offset;
                    if s > PLANE_EPS {
                        above += 1;
                    } else if s < -PLANE_EPS {
                        below += 1;
                    } else {
                        on.push(m);
                    }
                }
                if above > 0 && below > 0 {
                    continue;
                }
                if above > 0 {
                    normal = -normal;
                }
                min_offset = min_offset.min(normal.dot(&p[i]));
                facets.entry(on).or_insert(normal);
            }
        }
    }
    if facets.len() < 4 {
        return Err(RenderError::Layout("speaker directions are coplanar; the layout cannot pan in 3D".into()));
    }

    let mut triangles = Vec::new();
    for (verts, normal) in &facets {
        let centroid = verts.iter().map(|&v| p[v]).sum::<Vector3<f64>>() / verts.len() as f64;
        let u = (p[verts[0]] - centroid).normalize();
        let w = normal.cross(&u);
        let mut ring: Vec<(f64, usize)> = verts
            .iter()
            .map(|&v| {
                let r = p[v] - centroid;
                (r.dot(&w).atan2(r.dot(&u)), v)
            })
            .collect();
        ring.sort_by(|a, b| a.0.total_cmp(&b.0));
        let start = ring.iter().enumerate().min_by_key(|(_, (_, v))| *v).map(|(i, _)| i).unwrap_or(0);
        ring.rotate_left(start);
        for m in 1..ring.len() - 1 {
            triangles.push([ring[0].1, ring[m].1, ring[m + 1].1]);
        }
    }

    let mut inverses = Vec::with_capacity(triangles.len());
    for t in &triangles {
        let m = Matrix3::from_columns(&[p[t[0]], p[t[1]], p[t[2]]]);
        let inv = m.try_inverse().ok_or_else(|| {
            RenderError::Layout(format!("triangle {t:?} is degenerate as seen from the reference point"))
        })?;
        inverses.push(inv);
    }
    debug!(speakers = n, triangles = triangles.len(), "layout triangulated");
    Ok(PanningMesh { triangles, encloses_reference: min_offset > PLANE_EPS, inverses, directions: dirs })
}

/// Scalar distance law applied on top of the normalized direction gains.
pub fn distance_attenuation(distance: f64) -> f64 {
    1.0 / distance.max(0.5)
}

/// Direction gains for a source at `source_pos`, normalized so Σg² = 1.
///
/// Only the three speakers of the containing triangle are non-zero.
/// Negative triplet gains (numerical boundary cases) are clamped to zero
/// before normalizing. A source on the reference point has no direction and
/// gets `1/√N` on every speaker. Volume and distance attenuation are not
/// included.
pub fn compute_gains(source_pos: Vec3, layout: &SpeakerLayout, mesh: &PanningMesh) -> Vec<f64> {
    let n = mesh.directions.len();
    let offset = source_pos - layout.reference_point;
    let Some(d) = offset.normalized().filter(|_| offset.norm() > 1e-9) else {
        return vec![1.0 / (n as f64).sqrt(); n];
    };
    let (t, inside) = mesh.locate(d);
    if !inside {
        debug!(direction = %d, triangle = t, "no containing triangle, using nearest");
    }
    let raw = mesh.triplet_gains(t, d);
    let mut gains = vec![0.0; n];
    for (k, &spk) in mesh.triangles[t].iter().enumerate() {
        gains[spk] = raw[k].max(0.0);
    }
    let norm = gains.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > 0.0 {
        for g in &mut gains {
            *g /= norm;
        }
    } else {
        // only reachable if every clamped gain was zero; pick the nearest speaker
        let k = (0..n).max_by(|&a, &b| mesh.directions[a].dot(d).total_cmp(&mesh.directions[b].dot(d))).unwrap_or(0);
        gains[k] = 1.0;
    }
    gains
}

/// Energy-weighted mean speaker direction, `normalize(Σ g_i² u_i)`.
pub fn intensity_direction(gains: &[f64], mesh: &PanningMesh) -> Result<Vec3, RenderError> {
    if gains.len() != mesh.directions.len() {
        return Err(RenderError::GainCount { expected: mesh.directions.len(), got: gains.len() });
    }
    let v: Vec3 = gains.iter().zip(&mesh.directions).map(|(g, u)| *u * (g * g)).sum();
    v.normalized().ok_or(RenderError::UndefinedDirection)
}
