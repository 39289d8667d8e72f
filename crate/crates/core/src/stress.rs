//! Effective (maximum principal) stress, square averaging over a length `delta`, the
//! surface quadrature of the 3D sheet, and the highly stressed volume.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::UnitStressField;
use crate::geometry::Point;
use crate::mesh::{PointLocator, TriMesh};

/// Sub-grid points per axis used to average over the square of side `delta`.
pub const SUBGRID: usize = 8;

/// Maximum principal stress of a plane stress state.
pub fn effective_stress(sx: f64, sy: f64, txy: f64) -> f64 {
    0.5 * (sx + sy) + (0.25 * (sx - sy) * (sx - sy) + txy * txy).sqrt()
}

/// Evaluates the P1 stress interpolant and its effective stress anywhere in the mesh.
pub struct StressSampler<'a> {
    mesh: &'a TriMesh,
    field: &'a UnitStressField,
    locator: PointLocator,
}

impl<'a> StressSampler<'a> {
    pub fn new(mesh: &'a TriMesh, field: &'a UnitStressField) -> Self {
        StressSampler {
            mesh,
            field,
            locator: PointLocator::new(mesh),
        }
    }

    pub fn stress_at(&self, p: Point) -> Option<[f64; 3]> {
        let (t, bary) = self.locator.locate(self.mesh, p)?;
        let mut s = [0.0; 3];
        for (k, &n) in self.mesh.triangles[t].iter().enumerate() {
            for c in 0..3 {
                s[c] += bary[k] * self.field.stress[n][c];
            }
        }
        Some(s)
    }

    pub fn effective_at(&self, p: Point) -> Option<f64> {
        self.stress_at(p).map(|s| effective_stress(s[0], s[1], s[2]))
    }

    /// Mean effective stress over the part of the square of side `delta` centred at `x`
    /// that lies inside the mesh, sampled on a `g x g` grid of cell centres.
    pub fn averaged(&self, x: Point, delta: f64, g: usize) -> Result<f64> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("averaging length must be non-negative, got {delta}")));
        }
        let outside = || Error::OutsideDomain { x: x[0], y: x[1] };
        if delta == 0.0 {
            return self.effective_at(x).ok_or_else(outside);
        }
        let g = g.max(1);
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in 0..g {
            let y = x[1] + delta * ((j as f64 + 0.5) / g as f64 - 0.5);
            for i in 0..g {
                let px = x[0] + delta * ((i as f64 + 0.5) / g as f64 - 0.5);
                if let Some(v) = self.effective_at([px, y]) {
                    sum += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(outside());
        }
        Ok(sum / count as f64)
    }
}

/// One-off averaged effective stress at `x` with the default sub-grid.
pub fn averaged_effective_stress(
    mesh: &TriMesh,
    field: &UnitStressField,
    delta: f64,
    x: Point,
) -> Result<f64> {
    StressSampler::new(mesh, field).averaged(x, delta, SUBGRID)
}

/// Node-based quadrature of the sheet surface: lateral faces plus both flat faces.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceQuadrature {
    /// Node index of each site.
    pub sites: Vec<usize>,
    /// Total weight per site, in^2.
    pub weights: Vec<f64>,
    pub lateral: Vec<f64>,
    pub face: Vec<f64>,
}

impl SurfaceQuadrature {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Trapezoid rule on the boundary edges (times `thickness`) plus the vertex rule on
/// triangles (times two faces).
pub fn build_surface_quadrature(mesh: &TriMesh, thickness: f64) -> SurfaceQuadrature {
    let n = mesh.num_nodes();
    let mut lateral = vec![0.0; n];
    let mut face = vec![0.0; n];
    for e in &mesh.boundary_edges {
        let half = 0.5 * mesh.edge_length(e) * thickness;
        lateral[e.nodes[0]] += half;
        lateral[e.nodes[1]] += half;
    }
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let third = 2.0 * mesh.triangle_area(t) / 3.0;
        for &v in tri {
            face[v] += third;
        }
    }
    let weights = lateral.iter().zip(&face).map(|(a, b)| a + b).collect();
    SurfaceQuadrature {
        sites: (0..n).collect(),
        weights,
        lateral,
        face,
    }
}

/// Unit-traction effective stress at every quadrature site for one averaging length.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedStressProfile {
    pub delta: f64,
    pub values: Vec<f64>,
}

/// Pointwise (`delta = 0`) profile: nodal effective stress.
pub fn pointwise_profile(field: &UnitStressField, quad: &SurfaceQuadrature) -> AveragedStressProfile {
    let values = quad
        .sites
        .iter()
        .map(|&n| {
            let s = field.stress[n];
            effective_stress(s[0], s[1], s[2])
        })
        .collect();
    AveragedStressProfile { delta: 0.0, values }
}

/// Averaged profile at the sites; `delta = 0` reduces to [`pointwise_profile`].
pub fn averaged_profile(
    mesh: &TriMesh,
    field: &UnitStressField,
    quad: &SurfaceQuadrature,
    delta: f64,
    g: usize,
) -> Result<AveragedStressProfile> {
    if delta == 0.0 {
        return Ok(pointwise_profile(field, quad));
    }
    let sampler = StressSampler::new(mesh, field);
    let values = quad
        .sites
        .par_iter()
        .map(|&n| sampler.averaged(mesh.nodes[n], delta, g))
        .collect::<Result<Vec<f64>>>()?;
    Ok(AveragedStressProfile { delta, values })
}

/// `gamma(beta)`: surface measure where the pointwise unit stress exceeds `beta`.
pub fn highly_stressed_volume(
    pointwise: &AveragedStressProfile,
    quad: &SurfaceQuadrature,
    beta: f64,
) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::Params(format!("beta must be non-negative, got {beta}")));
    }
    let gamma: f64 = pointwise
        .values
        .iter()
        .zip(&quad.weights)
        .filter(|(s, _)| **s > beta)
        .map(|(_, w)| w)
        .sum();
    if gamma > 0.0 {
        Ok(gamma)
    } else {
        let max = pointwise.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Err(Error::EmptyHighlyStressedVolume { beta, max })
    }
}

/// Sorted pointwise stresses with cumulative weights, for repeated `gamma(beta)` queries.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeTable {
    /// Stresses in descending order.
    stress: Vec<f64>,
    /// `cumulative[k]` = total weight of the first `k + 1` entries.
    cumulative: Vec<f64>,
}

impl VolumeTable {
    pub fn new(pointwise: &AveragedStressProfile, quad: &SurfaceQuadrature) -> Self {
        let mut pairs: Vec<(f64, f64)> = pointwise
            .values
            .iter()
            .copied()
            .zip(quad.weights.iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut acc = 0.0;
        let cumulative = pairs
            .iter()
            .map(|&(_, w)| {
                acc += w;
                acc
            })
            .collect();
        VolumeTable {
            stress: pairs.into_iter().map(|(s, _)| s).collect(),
            cumulative,
        }
    }

    pub fn max_stress(&self) -> f64 {
        self.stress.first().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn gamma(&self, beta: f64) -> Result<f64> {
        if !(beta >= 0.0) {
            return Err(Error::Params(format!("beta must be non-negative, got {beta}")));
        }
        let k = self.stress.partition_point(|&s| s > beta);
        if k == 0 {
            return Err(Error::EmptyHighlyStressedVolume {
                beta,
                max: self.max_stress(),
            });
        }
        Ok(self.cumulative[k - 1])
    }
}

/// Rows `(x, y, weight, pointwise, averaged)` for the profile export.
pub fn profile_rows(
    mesh: &TriMesh,
    quad: &SurfaceQuadrature,
    pointwise: &AveragedStressProfile,
    averaged: &AveragedStressProfile,
) -> Vec<[f64; 5]> {
    quad.sites
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let p = mesh.nodes[n];
            [p[0], p[1], quad.weights[k], pointwise.values[k], averaged.values[k]]
        })
        .collect()
}

/// Node closest to the notch root `(0, w_min / 2)`.
pub fn notch_root_site(mesh: &TriMesh, w_min: f64) -> usize {
    let target = [0.0, 0.5 * w_min];
    (0..mesh.num_nodes())
        .min_by(|&a, &b| {
            let da = crate::geometry::dist(mesh.nodes[a], target);
            let db = crate::geometry::dist(mesh.nodes[b], target);
            da.total_cmp(&db)
        })
        .expect("mesh has nodes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{unit_stress_field, MaterialParams};
    use crate::geometry::SpecimenGeometry;
    use crate::mesh::{mesh_at_level, surface_measure, triangulate};

    #[test]
    fn effective_stress_examples() {
        assert_eq!(effective_stress(3.0, 0.0, 0.0), 3.0);
        assert_eq!(effective_stress(0.0, 0.0, -2.0), 2.0);
        assert_eq!(effective_stress(5.0, 5.0, 0.0), 5.0);
        assert_eq!(effective_stress(-3.0, 0.0, 0.0), 0.0);
    }

    fn uniform_strip() -> (TriMesh, UnitStressField) {
        let g = SpecimenGeometry::rectangle(1.0, 2.0, 0.09).unwrap();
        let m = triangulate(&g, 0.25).unwrap();
        let f = UnitStressField {
            stress: vec![[1.0, 0.0, 0.0]; m.num_nodes()],
        };
        (m, f)
    }

    #[test]
    fn constant_field_averages_to_itself() {
        let (m, f) = uniform_strip();
        let s = StressSampler::new(&m, &f);
        for delta in [0.0, 0.01, 0.3, 0.9] {
            for p in [[0.0, 0.0], [1.0, 0.25], [2.0, 0.5]] {
                let v = s.averaged(p, delta, SUBGRID);
                assert!((v.as_ref().unwrap() - 1.0).abs() < 1e-12, "{p:?} {delta} {v:?}");
            }
        }
        assert!(matches!(
            s.averaged([10.0, 10.0], 0.1, SUBGRID),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn quadrature_weights_sum_to_surface_measure() {
        let g = SpecimenGeometry::specimen2();
        let m = mesh_at_level(&g, 1).unwrap();
        let q = build_surface_quadrature(&m, g.thickness);
        assert!(q.weights.iter().all(|&w| w >= 0.0));
        let sm = surface_measure(&m, g.thickness);
        assert!((q.total() - sm).abs() <= 1e-12 * sm);
    }

    #[test]
    fn face_rule_is_exact_for_linear_functions() {
        let g = SpecimenGeometry::rectangle(1.0, 1.0, 0.09).unwrap();
        let m = triangulate(&g, 0.3).unwrap();
        let q = build_surface_quadrature(&m, 0.09);
        let f: Vec<f64> = m.nodes.iter().map(|p| p[0] + p[1]).collect();
        let face: f64 = q.face.iter().zip(&f).map(|(w, v)| w * v).sum();
        // 2 * integral of (x + y) over [0, 1] x [0, 0.5]
        assert!((face - 0.75).abs() < 1e-12);
    }

    #[test]
    fn volume_examples_on_uniform_strip() {
        let (m, f) = uniform_strip();
        let q = build_surface_quadrature(&m, 0.09);
        let prof = pointwise_profile(&f, &q);
        let g = highly_stressed_volume(&prof, &q, 0.5).unwrap();
        assert!((g - q.total()).abs() < 1e-12);
        assert!((highly_stressed_volume(&prof, &q, 0.0).unwrap() - q.total()).abs() < 1e-12);
        assert!(matches!(
            highly_stressed_volume(&prof, &q, 1.5),
            Err(Error::EmptyHighlyStressedVolume { .. })
        ));
        let table = VolumeTable::new(&prof, &q);
        assert!((table.gamma(0.5).unwrap() - g).abs() < 1e-12);
        assert!(table.gamma(1.0).is_err());
    }

    #[test]
    fn notched_specimen_volume_and_averaging() {
        let g = SpecimenGeometry::specimen2();
        let m = mesh_at_level(&g, 2).unwrap();
        let field = unit_stress_field(&m, &MaterialParams::default()).unwrap();
        let q = build_surface_quadrature(&m, g.thickness);
        let prof = pointwise_profile(&field, &q);
        let table = VolumeTable::new(&prof, &q);
        let lo = table.gamma(1.16).unwrap();
        let hi = table.gamma(1.95).unwrap();
        assert!(hi > 0.0 && hi < lo);
        assert!((highly_stressed_volume(&prof, &q, 1.16).unwrap() - lo).abs() < 1e-12 * lo);

        let root = notch_root_site(&m, g.w_min);
        let s = StressSampler::new(&m, &field);
        let pointwise = s.averaged(m.nodes[root], 0.0, SUBGRID).unwrap();
        assert!((pointwise - prof.values[root]).abs() < 1e-12);
        let coarse = s.averaged(m.nodes[root], 0.025, SUBGRID).unwrap();
        let fine = s.averaged(m.nodes[root], 0.025, 4 * SUBGRID).unwrap();
        assert!(coarse < pointwise);
        assert!(((coarse - fine) / fine).abs() <= 0.005, "{coarse} vs {fine}");
        // scaling commutes with averaging
        let scaled = field.scaled(3.5);
        let s2 = StressSampler::new(&m, &scaled);
        let v = s2.averaged(m.nodes[root], 0.025, SUBGRID).unwrap();
        assert!((v - 3.5 * coarse).abs() < 1e-12 * v);
    }
}
