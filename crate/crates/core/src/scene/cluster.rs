//! DBSCAN grouping of persons by root position.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{CrowdScene, PersonId};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Neighbourhood radius in metres, inclusive.
    pub eps: f64,
    /// Neighbours required for a core point, counting the point itself.
    pub min_pts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { eps: 1.5, min_pts: 1 }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("cluster eps must be positive, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("cluster min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Clustering {
    /// Sorted by smallest member id.
    pub clusters: Vec<BTreeSet<PersonId>>,
    pub noise: BTreeSet<PersonId>,
}

/// Labels every point with a cluster index, or `None` for noise.
///
/// Points are visited in slice order; a cluster grows breadth-first from the
/// first unlabelled core point. A border point reachable from several
/// clusters stays with the first cluster that reaches it.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (points[i] - points[j]).norm_squared() <= eps2)
                .collect()
        })
        .collect();
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[start] = Some(cluster);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            if !is_core[p] {
                continue;
            }
            for &q in &neighbours[p] {
                if labels[q].is_none() {
                    labels[q] = Some(cluster);
                    queue.push_back(q);
                }
            }
        }
    }
    labels
}

/// DBSCAN over root translations in 3D Euclidean distance.
pub fn cluster_persons(scene: &CrowdScene, cfg: &ClusterConfig) -> Result<Clustering> {
    cfg.validate()?;
    if scene.is_empty() {
        return Err(Error::Scene("cannot cluster an empty scene".into()));
    }
    let mut roots: Vec<(PersonId, Vec3)> = scene
        .persons
        .iter()
        .map(|p| (p.person_id, p.root_translation))
        .collect();
    roots.sort_by_key(|(id, _)| *id);
    let points: Vec<Vec3> = roots.iter().map(|(_, p)| *p).collect();
    let labels = dbscan(&points, cfg.eps, cfg.min_pts);

    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters = vec![BTreeSet::new(); count];
    let mut noise = BTreeSet::new();
    for ((id, _), label) in roots.iter().zip(&labels) {
        match label {
            Some(c) => {
                clusters[*c].insert(*id);
            }
            None => {
                noise.insert(*id);
            }
        }
    }
    clusters.sort_by_key(|c| *c.iter().next().expect("clusters are non-empty"));
    Ok(Clustering { clusters, noise })
}
