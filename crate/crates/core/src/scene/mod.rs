//! Gaussian clouds grouped per person and assembled into crowd scenes.

mod cluster;
mod gaussian;
pub mod ply;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::body_model::Mesh;
use crate::{Error, Result, Vec3};

pub use cluster::{cluster_persons, dbscan, ClusterConfig, Clustering};
pub use gaussian::{quaternion_to_matrix, Gaussian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub u32);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonGaussians {
    pub person_id: PersonId,
    /// Positions are in the person-local frame.
    pub gaussians: Vec<Gaussian>,
    pub root_translation: Vec3,
}

impl PersonGaussians {
    pub fn new(person_id: PersonId, gaussians: Vec<Gaussian>, root_translation: Vec3) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::Scene(format!("person {person_id} has no gaussians")));
        }
        Ok(Self {
            person_id,
            gaussians,
            root_translation,
        })
    }

    pub fn world_gaussians(&self) -> impl Iterator<Item = Gaussian> + '_ {
        self.gaussians.iter().map(move |g| Gaussian {
            position: g.position + self.root_translation,
            ..*g
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrowdScene {
    pub persons: Vec<PersonGaussians>,
    pub background: Vec3,
}

/// Builds a scene; person ids must be unique. Root translations are applied
/// at render time, so stored positions stay person-local.
pub fn assemble_scene(persons: Vec<PersonGaussians>, background: Vec3) -> Result<CrowdScene> {
    let mut seen = HashSet::new();
    for p in &persons {
        if !seen.insert(p.person_id) {
            return Err(Error::Scene(format!("duplicate person id {}", p.person_id)));
        }
    }
    Ok(CrowdScene { persons, background })
}

impl CrowdScene {
    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn person(&self, id: PersonId) -> Option<&PersonGaussians> {
        self.persons.iter().find(|p| p.person_id == id)
    }

    pub fn person_ids(&self) -> Vec<PersonId> {
        self.persons.iter().map(|p| p.person_id).collect()
    }

    pub fn gaussian_count(&self) -> usize {
        self.persons.iter().map(|p| p.gaussians.len()).sum()
    }

    /// World-space Gaussians of every person, in person order.
    pub fn world_gaussians(&self) -> Vec<Gaussian> {
        self.persons.iter().flat_map(|p| p.world_gaussians()).collect()
    }

    /// The same scene restricted to `ids`, keeping person order.
    pub fn subset(&self, ids: &BTreeSet<PersonId>) -> CrowdScene {
        CrowdScene {
            persons: self
                .persons
                .iter()
                .filter(|p| ids.contains(&p.person_id))
                .cloned()
                .collect(),
            background: self.background,
        }
    }

    pub fn translated(&self, offset: Vec3) -> CrowdScene {
        let mut out = self.clone();
        for p in &mut out.persons {
            p.root_translation += offset;
        }
        out
    }

    /// Mean world-space Gaussian position.
    pub fn centroid(&self) -> Option<Vec3> {
        let n = self.gaussian_count();
        (n > 0).then(|| {
            self.persons
                .iter()
                .flat_map(|p| p.world_gaussians())
                .map(|g| g.position)
                .sum::<Vec3>()
                / n as f64
        })
    }
}

/// One Gaussian per mesh vertex: isotropic scale `per_vertex_scale` times the
/// mean length of the vertex's incident edges, identity rotation, opacity 0.95.
pub fn init_gaussians_from_mesh(mesh: &Mesh, per_vertex_scale: f64, colors: &[Vec3]) -> Result<Vec<Gaussian>> {
    if mesh.vertices.is_empty() {
        return Err(Error::Scene("cannot seed gaussians from an empty mesh".into()));
    }
    if colors.len() != mesh.vertices.len() {
        return Err(Error::Dimension(format!(
            "{} colors for {} vertices",
            colors.len(),
            mesh.vertices.len()
        )));
    }
    if !(per_vertex_scale > 0.0) {
        return Err(Error::Config(format!("per_vertex_scale must be positive, got {per_vertex_scale}")));
    }
    let mut edges = BTreeSet::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut sum = vec![0.0; mesh.vertices.len()];
    let mut count = vec![0usize; mesh.vertices.len()];
    for &(a, b) in &edges {
        let len = (mesh.vertices[a] - mesh.vertices[b]).norm();
        sum[a] += len;
        sum[b] += len;
        count[a] += 1;
        count[b] += 1;
    }
    let opacity_logit = logit(0.95);
    mesh.vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if count[i] == 0 {
                return Err(Error::Scene(format!("vertex {i} has no incident edge")));
            }
            let mean_edge = sum[i] / count[i] as f64;
            if !(mean_edge > 0.0) {
                return Err(Error::Scene(format!("vertex {i} has zero-length incident edges")));
            }
            let s = (per_vertex_scale * mean_edge).ln();
            Ok(Gaussian::new(*v, Vec3::repeat(s), [1.0, 0.0, 0.0, 0.0], opacity_logit, colors[i]))
        })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
