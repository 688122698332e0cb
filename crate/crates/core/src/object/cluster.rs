//! Doppler-weighted density clustering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::RawPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Weights `(a_x, a_y, a_z, a_v)` of the distance metric.
    pub weights: [f64; 4],
    /// Neighbourhood radius in the weighted metric.
    pub tau_d: f64,
    /// Neighbours (excluding the point itself) needed for a core point.
    pub min_neighbors: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            weights: [1.0, 1.0, 1.0, 3.0],
            tau_d: 10.0,
            min_neighbors: 1,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) || !(self.tau_d > 0.0) {
            return Err(Error::InvalidConfig(
                "cluster weights and tau_d must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Weighted distance `|(a_x dx, a_y dy, a_z dz, a_v dv)|`.
    pub fn distance(&self, a: &RawPoint, b: &RawPoint) -> f64 {
        let w = &self.weights;
        let d = [
            w[0] * (a.x - b.x),
            w[1] * (a.y - b.y),
            w[2] * (a.z - b.z),
            w[3] * (a.vd - b.vd),
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt()
    }
}

/// Spatial hash over weighted positions with cells of edge `tau_d`.
struct Grid<'a> {
    cfg: &'a ClusterConfig,
    points: &'a [RawPoint],
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [RawPoint], cfg: &'a ClusterConfig) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(cfg, p)).or_default().push(i);
        }
        Self { cfg, points, cells }
    }

    fn cell(cfg: &ClusterConfig, p: &RawPoint) -> [i64; 3] {
        let w = &cfg.weights;
        [
            (w[0] * p.x / cfg.tau_d).floor() as i64,
            (w[1] * p.y / cfg.tau_d).floor() as i64,
            (w[2] * p.z / cfg.tau_d).floor() as i64,
        ]
    }

    /// Indices within `tau_d` of point `i`, excluding `i`, ascending.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let c = Self::cell(self.cfg, p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &j in list {
                            if j != i && self.cfg.distance(p, &self.points[j]) <= self.cfg.tau_d {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// DBSCAN labels for `points`. Points that are neither core nor reachable
/// from a core point get their own singleton cluster. Clusters are numbered
/// in order of their lowest point index.
pub fn cluster_labels(points: &[RawPoint], cfg: &ClusterConfig) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    let n = points.len();
    let grid = Grid::new(points, cfg);
    let mut labels = vec![UNSET; n];
    let mut next = 0;
    let mut nb = Vec::new();
    let mut nb2 = Vec::new();
    let mut queue = Vec::new();
    for i in 0..n {
        if labels[i] != UNSET {
            continue;
        }
        grid.neighbors(i, &mut nb);
        let label = next;
        next += 1;
        labels[i] = label;
        if nb.len() < cfg.min_neighbors {
            // Border points are claimed later by a core point if one exists;
            // until then this point stands alone.
            continue;
        }
        queue.clear();
        queue.extend(nb.iter().copied());
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j] != UNSET {
                continue;
            }
            labels[j] = label;
            grid.neighbors(j, &mut nb2);
            if nb2.len() >= cfg.min_neighbors {
                queue.extend(nb2.iter().copied().filter(|&k| labels[k] == UNSET));
            }
        }
    }
    if cfg.min_neighbors > 1 {
        reassign_borders(points, cfg, &grid, &mut labels);
    }
    labels
}

/// A non-core point opened its own singleton before a core neighbour's
/// cluster reached it; attach such points to the cluster of their first
/// core neighbour.
fn reassign_borders(points: &[RawPoint], cfg: &ClusterConfig, grid: &Grid, labels: &mut [usize]) {
    let n = points.len();
    let mut nb = Vec::new();
    let core: Vec<bool> = (0..n)
        .map(|i| {
            grid.neighbors(i, &mut nb);
            nb.len() >= cfg.min_neighbors
        })
        .collect();
    for i in 0..n {
        if core[i] {
            continue;
        }
        grid.neighbors(i, &mut nb);
        if let Some(&c) = nb.iter().find(|&&j| core[j]) {
            labels[i] = labels[c];
        }
    }
    // Renumber by first appearance.
    let mut map = HashMap::new();
    for l in labels.iter_mut() {
        let len = map.len();
        *l = *map.entry(*l).or_insert(len);
    }
}

/// Group point indices by cluster label.
pub fn cluster_indices(points: &[RawPoint], cfg: &ClusterConfig) -> Vec<Vec<usize>> {
    let labels = cluster_labels(points, cfg);
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); count];
    for (i, l) in labels.into_iter().enumerate() {
        groups[l].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}
