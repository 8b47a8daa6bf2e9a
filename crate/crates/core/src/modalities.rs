//! Per-point physical inputs: range, incidence angle and material reflectance.

use std::io::Write;
use std::path::Path;

use kiddo::{KdTree, SquaredEuclidean};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{MaterialTable, PointCloud};

pub const DEFAULT_NEIGHBORS: usize = 10;

/// Eigenvalue ratio (middle / largest) below which a neighborhood is treated
/// as rank-deficient.
const DEGENERATE_RATIO: f64 = 1e-9;

/// Struct-of-arrays modalities aligned with a cloud's point order.
#[derive(Debug, Clone, PartialEq)]
pub struct Modalities {
    pub range: Vec<f64>,
    /// Radians in [0, π/2].
    pub incidence: Vec<f64>,
    pub reflectance: Vec<f64>,
    /// Unit normals facing the sensor; zero for invalid points.
    pub normals: Vec<[f64; 3]>,
    /// False for zero-range points.
    pub valid: Vec<bool>,
}

impl Modalities {
    /// Assembles modalities from precomputed arrays; normals are left zero.
    pub fn from_parts(range: Vec<f64>, incidence: Vec<f64>, reflectance: Vec<f64>) -> Self {
        assert!(range.len() == incidence.len() && range.len() == reflectance.len());
        let n = range.len();
        let valid = range.iter().map(|&r| r > 0.0).collect();
        Self {
            range,
            incidence,
            reflectance,
            normals: vec![[0.0; 3]; n],
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    /// Debug dump as `index,R,theta,rho`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let wrap = |e| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
        writeln!(w, "index,R,theta,rho").map_err(wrap)?;
        for i in 0..self.len() {
            writeln!(w, "{i},{},{},{}", self.range[i], self.incidence[i], self.reflectance[i]).map_err(wrap)?;
        }
        w.flush().map_err(wrap)
    }
}

pub fn compute_range(pc: &PointCloud) -> Vec<f64> {
    pc.points.iter().map(|p| p.range()).collect()
}

fn radial_toward_sensor(p: [f64; 3]) -> [f64; 3] {
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if r > 0.0 {
        [-p[0] / r, -p[1] / r, -p[2] / r]
    } else {
        [0.0; 3]
    }
}

/// Normal of the best-fit plane through `neighborhood`, or `None` when the
/// neighborhood spans fewer than two dimensions.
fn pca_normal(neighborhood: &[[f64; 3]]) -> Option<Vector3<f64>> {
    let n = neighborhood.len() as f64;
    let centroid = neighborhood
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p))
        / n;
    let mut cov = Matrix3::zeros();
    for p in neighborhood {
        let d = Vector3::from(*p) - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (smallest, middle, largest) = (order[0], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(largest > 0.0) || middle / largest < DEGENERATE_RATIO {
        return None;
    }
    Some(eig.eigenvectors.column(smallest).normalize())
}

/// PCA normals from the `k` nearest neighbors (plus the point itself),
/// flipped to face the sensor at the origin. Degenerate neighborhoods fall
/// back to the radial direction `-p/|p|`.
pub fn estimate_normals(pc: &PointCloud, k: usize) -> Result<Vec<[f64; 3]>> {
    if k < 3 {
        return Err(Error::Contract(format!("normal estimation needs k >= 3, got {k}")));
    }
    if pc.len() < k + 1 {
        return Err(Error::Contract(format!(
            "k = {k} neighbors requested but the cloud has only {} points",
            pc.len()
        )));
    }
    let coords: Vec<[f64; 3]> = pc.points.iter().map(|p| p.xyz()).collect();
    let mut tree: KdTree<f64, 3> = KdTree::with_capacity(coords.len());
    for (i, c) in coords.iter().enumerate() {
        tree.add(c, i as u64);
    }

    let normals = coords
        .par_iter()
        .map(|p| {
            let neighborhood: Vec<[f64; 3]> = tree
                .nearest_n::<SquaredEuclidean>(p, k + 1)
                .into_iter()
                .map(|nn| coords[nn.item as usize])
                .collect();
            let radial = radial_toward_sensor(*p);
            match pca_normal(&neighborhood) {
                Some(n) => {
                    let pv = Vector3::from(*p);
                    let n = if n.dot(&pv) > 0.0 { -n } else { n };
                    [n.x, n.y, n.z]
                }
                None => radial,
            }
        })
        .collect();
    Ok(normals)
}

/// Incidence angle `acos(clamp(d·n, 0, 1))` with `d` the unit vector from the
/// point back to the sensor. Zero-range points get 0.
pub fn compute_incidence(pc: &PointCloud, normals: &[[f64; 3]]) -> Result<Vec<f64>> {
    if normals.len() != pc.len() {
        return Err(Error::Contract(format!(
            "{} normals for {} points",
            normals.len(),
            pc.len()
        )));
    }
    Ok(pc
        .points
        .iter()
        .zip(normals)
        .map(|(p, n)| {
            let d = radial_toward_sensor(p.xyz());
            if d == [0.0; 3] {
                return 0.0;
            }
            let cos = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
            cos.clamp(0.0, 1.0).acos()
        })
        .collect())
}

pub fn lookup_reflectance(pc: &PointCloud, table: &MaterialTable) -> Vec<f64> {
    pc.points.iter().map(|p| table.reflectance(p.label)).collect()
}

/// All three modalities in one pass.
pub fn compute_modalities(pc: &PointCloud, table: &MaterialTable, k: usize) -> Result<Modalities> {
    let range = compute_range(pc);
    let valid: Vec<bool> = range.iter().map(|&r| r > 0.0).collect();
    if let Some(i) = valid.iter().position(|v| !v) {
        log::warn!("point {i} has zero range and is flagged invalid");
    }
    let normals = estimate_normals(pc, k)?;
    let incidence = compute_incidence(pc, &normals)?;
    let reflectance = lookup_reflectance(pc, table);
    Ok(Modalities {
        range,
        incidence,
        reflectance,
        normals,
        valid,
    })
}
