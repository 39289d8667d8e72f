//! Linear (P1) plane-stress finite elements on the quarter domain.
//!
//! Boundary conditions: unit normal traction `sigma_x = 1` on `B1`, free `B2`/`B3`, and
//! symmetry (zero normal displacement) on `B4` (`u_y = 0`) and `B5` (`u_x = 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SpecimenGeometry};
use crate::mesh::{BoundaryTag, TriMesh};
use crate::sn::equivalent_stress;
use crate::solver::{SparseCholesky, SymmetricMatrix};

/// Relative residual the direct solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    /// Modulus of elasticity, ksi.
    pub e_ksi: f64,
    /// Poisson's ratio.
    pub nu: f64,
}

impl Default for MaterialParams {
    /// Typical wrought aluminium values.
    fn default() -> Self {
        MaterialParams {
            e_ksi: 10_400.0,
            nu: 0.33,
        }
    }
}

impl MaterialParams {
    pub fn new(e_ksi: f64, nu: f64) -> Result<Self> {
        let m = MaterialParams { e_ksi, nu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_ksi.is_finite() && self.e_ksi > 0.0) {
            return Err(Error::Material(format!("E must be positive, got {}", self.e_ksi)));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::Material(format!("nu must lie in [0, 0.5), got {}", self.nu)));
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        self.e_ksi / (2.0 * (1.0 + self.nu))
    }

    /// Plane-stress constitutive matrix in Voigt order `(xx, yy, xy)`.
    pub fn constitutive(&self) -> [[f64; 3]; 3] {
        let c = self.e_ksi / (1.0 - self.nu * self.nu);
        [
            [c, c * self.nu, 0.0],
            [c * self.nu, c, 0.0],
            [0.0, 0.0, self.shear_modulus()],
        ]
    }
}

/// Nodal displacements `(u_x, u_y)`, inches per unit traction.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub u: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn as_dofs(&self) -> Vec<f64> {
        self.u.iter().flat_map(|d| *d).collect()
    }
}

/// Nodal stress tensor `(sigma_x, sigma_y, tau_xy)` for unit end traction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitStressField {
    pub stress: Vec<[f64; 3]>,
}

impl UnitStressField {
    pub fn len(&self) -> usize {
        self.stress.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stress.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> UnitStressField {
        UnitStressField {
            stress: self.stress.iter().map(|s| s.map(|v| v * factor)).collect(),
        }
    }
}

/// Gradient data of a linear triangle: `(area, dN/dx, dN/dy)`.
pub fn shape_gradients(p: [Point; 3]) -> (f64, [f64; 3], [f64; 3]) {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut bx = [0.0; 3];
    let mut by = [0.0; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        bx[i] = (p[j][1] - p[k][1]) / area2;
        by[i] = (p[k][0] - p[j][0]) / area2;
    }
    (area2 / 2.0, bx, by)
}

/// Strain-displacement matrix rows `(eps_xx, eps_yy, gamma_xy)` over dofs `(u1, v1, u2, ...)`.
fn strain_matrix(bx: [f64; 3], by: [f64; 3]) -> [[f64; 6]; 3] {
    let mut b = [[0.0; 6]; 3];
    for i in 0..3 {
        b[0][2 * i] = bx[i];
        b[1][2 * i + 1] = by[i];
        b[2][2 * i] = by[i];
        b[2][2 * i + 1] = bx[i];
    }
    b
}

/// Element stiffness `A * B^T D B` (unit thickness).
pub fn element_stiffness(p: [Point; 3], d: &[[f64; 3]; 3]) -> [[f64; 6]; 6] {
    let (area, bx, by) = shape_gradients(p);
    let b = strain_matrix(bx, by);
    let mut db = [[0.0; 6]; 3];
    for r in 0..3 {
        for c in 0..6 {
            db[r][c] = (0..3).map(|k| d[r][k] * b[k][c]).sum();
        }
    }
    let mut k = [[0.0; 6]; 6];
    for r in 0..6 {
        for c in 0..6 {
            k[r][c] = area * (0..3).map(|m| b[m][r] * db[m][c]).sum::<f64>();
        }
    }
    k
}

/// Global stiffness triplets (lower triangle) over all `2 * nodes` dofs.
pub fn stiffness_triplets(mesh: &TriMesh, mat: &MaterialParams) -> Vec<(usize, usize, f64)> {
    let d = mat.constitutive();
    let mut triplets = Vec::with_capacity(mesh.triangles.len() * 21);
    for tri in &mesh.triangles {
        let ke = element_stiffness(tri.map(|i| mesh.nodes[i]), &d);
        let dofs = [
            2 * tri[0],
            2 * tri[0] + 1,
            2 * tri[1],
            2 * tri[1] + 1,
            2 * tri[2],
            2 * tri[2] + 1,
        ];
        for r in 0..6 {
            for c in 0..6 {
                if dofs[c] <= dofs[r] {
                    triplets.push((dofs[r], dofs[c], ke[r][c]));
                }
            }
        }
    }
    triplets
}

pub fn assemble_stiffness(mesh: &TriMesh, mat: &MaterialParams) -> SymmetricMatrix {
    SymmetricMatrix::from_lower_triplets(2 * mesh.num_nodes(), stiffness_triplets(mesh, mat))
}

/// Consistent nodal load for normal traction `traction` on `B1` (edges lumped half/half).
pub fn traction_load(mesh: &TriMesh, traction: f64) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.num_nodes()];
    for e in mesh.boundary_edges.iter().filter(|e| e.tag == BoundaryTag::B1) {
        let [a, b] = e.nodes;
        let pa = mesh.nodes[a];
        let pb = mesh.nodes[b];
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        // outward normal of a counter-clockwise boundary edge
        let n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        // traction vector t = sigma . n with sigma = diag(traction, 0)
        let t = [traction * n[0], 0.0];
        for node in [a, b] {
            f[2 * node] += t[0] * len / 2.0;
            f[2 * node + 1] += t[1] * len / 2.0;
        }
    }
    f
}

/// Dofs fixed by the symmetry conditions; fails if a rigid-body mode survives.
pub fn constrained_dofs(mesh: &TriMesh) -> Result<Vec<bool>> {
    let mut fixed = vec![false; 2 * mesh.num_nodes()];
    for n in mesh.nodes_on(BoundaryTag::B5) {
        fixed[2 * n] = true;
    }
    for n in mesh.nodes_on(BoundaryTag::B4) {
        fixed[2 * n + 1] = true;
    }
    // rigid modes (tx, ty, rotation) restricted to the fixed dofs
    let mut gram = [[0.0; 3]; 3];
    let mut any_x = false;
    let mut any_y = false;
    let scale = mesh
        .nodes
        .iter()
        .fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()))
        .max(1e-300);
    for (dof, _) in fixed.iter().enumerate().filter(|(_, &f)| f) {
        let p = mesh.nodes[dof / 2];
        let v = if dof % 2 == 0 {
            any_x = true;
            [1.0, 0.0, -p[1] / scale]
        } else {
            any_y = true;
            [0.0, 1.0, p[0] / scale]
        };
        for r in 0..3 {
            for c in 0..3 {
                gram[r][c] += v[r] * v[c];
            }
        }
    }
    if !any_x {
        return Err(Error::RigidBodyMode("x-translation"));
    }
    if !any_y {
        return Err(Error::RigidBodyMode("y-translation"));
    }
    let det = nalgebra::Matrix3::from_fn(|r, c| gram[r][c]).determinant();
    let trace = gram[0][0] + gram[1][1] + gram[2][2];
    if det <= 1e-12 * trace.powi(3) {
        return Err(Error::RigidBodyMode("in-plane rotation"));
    }
    Ok(fixed)
}

/// Solves for the displacement under unit end traction.
pub fn assemble_solve(mesh: &TriMesh, mat: &MaterialParams) -> Result<DisplacementField> {
    solve_with_traction(mesh, mat, 1.0)
}

pub fn solve_with_traction(
    mesh: &TriMesh,
    mat: &MaterialParams,
    traction: f64,
) -> Result<DisplacementField> {
    mat.validate()?;
    if mesh.nodes_on(BoundaryTag::B1).is_empty() {
        return Err(Error::MissingBoundary(BoundaryTag::B1));
    }
    let fixed = constrained_dofs(mesh)?;
    let n_dof = fixed.len();
    let mut free_index = vec![usize::MAX; n_dof];
    let mut n_free = 0;
    for (dof, &f) in fixed.iter().enumerate() {
        if !f {
            free_index[dof] = n_free;
            n_free += 1;
        }
    }
    let triplets = stiffness_triplets(mesh, mat);
    let reduced = SymmetricMatrix::from_lower_triplets(
        n_free,
        triplets.into_iter().filter_map(|(r, c, v)| {
            let (fr, fc) = (free_index[r], free_index[c]);
            (fr != usize::MAX && fc != usize::MAX).then_some((fr, fc, v))
        }),
    );
    let load = traction_load(mesh, traction);
    let rhs: Vec<f64> = (0..n_dof).filter(|&d| !fixed[d]).map(|d| load[d]).collect();

    let chol = SparseCholesky::factor(&reduced)?;
    let x = chol.solve(&rhs);
    let ax = reduced.mul(&x);
    let res: f64 = ax.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = rhs.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-300);
    if res > RESIDUAL_TOL * norm {
        return Err(Error::Solver(format!("relative residual {:e} too large", res / norm)));
    }
    let mut u = vec![[0.0; 2]; mesh.num_nodes()];
    for dof in 0..n_dof {
        if !fixed[dof] {
            u[dof / 2][dof % 2] = x[free_index[dof]];
        }
    }
    Ok(DisplacementField { u })
}

/// Nodal reaction forces `K u - f` for unit traction (zero at free dofs up to round-off).
pub fn reactions(mesh: &TriMesh, mat: &MaterialParams, u: &DisplacementField) -> Vec<[f64; 2]> {
    let k = assemble_stiffness(mesh, mat);
    let ku = k.mul(&u.as_dofs());
    let f = traction_load(mesh, 1.0);
    (0..mesh.num_nodes())
        .map(|n| [ku[2 * n] - f[2 * n], ku[2 * n + 1] - f[2 * n + 1]])
        .collect()
}

/// Strain energy norm `sqrt(u^T K u)`.
pub fn energy_norm(mesh: &TriMesh, mat: &MaterialParams, u: &[f64]) -> f64 {
    let k = assemble_stiffness(mesh, mat);
    let ku = k.mul(u);
    u.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Constant element stresses.
pub fn element_stresses(
    mesh: &TriMesh,
    u: &DisplacementField,
    mat: &MaterialParams,
) -> Vec<[f64; 3]> {
    let d = mat.constitutive();
    mesh.triangles
        .iter()
        .map(|tri| {
            let (_, bx, by) = shape_gradients(tri.map(|i| mesh.nodes[i]));
            let mut eps = [0.0; 3];
            for (k, &n) in tri.iter().enumerate() {
                let [ux, uy] = u.u[n];
                eps[0] += bx[k] * ux;
                eps[1] += by[k] * uy;
                eps[2] += by[k] * ux + bx[k] * uy;
            }
            [0, 1, 2].map(|r| (0..3).map(|c| d[r][c] * eps[c]).sum())
        })
        .collect()
}

/// Area-weighted average of element stresses at each node.
pub fn recover_stress(
    mesh: &TriMesh,
    u: &DisplacementField,
    mat: &MaterialParams,
) -> UnitStressField {
    let elem = element_stresses(mesh, u, mat);
    let mut acc = vec![[0.0; 3]; mesh.num_nodes()];
    let mut weight = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t);
        for &n in tri {
            for k in 0..3 {
                acc[n][k] += a * elem[t][k];
            }
            weight[n] += a;
        }
    }
    let stress = acc
        .into_iter()
        .zip(weight)
        .map(|(s, w)| if w > 0.0 { s.map(|v| v / w) } else { [0.0; 3] })
        .collect();
    UnitStressField { stress }
}

/// End traction for an experiment: `(W_min / W_max) * S_max * (1 - R)^q`.
pub fn traction_for(s_max: f64, ratio: f64, q: f64, width_ratio: f64) -> Result<f64> {
    Ok(width_ratio * equivalent_stress(s_max, ratio, q)?)
}

/// Stress tensor field for an experiment, by linearity from the unit-traction field.
pub fn scale_stress(
    field: &UnitStressField,
    s_max: f64,
    ratio: f64,
    q: f64,
    geom: &SpecimenGeometry,
) -> Result<UnitStressField> {
    let t = traction_for(s_max, ratio, q, geom.width_ratio())?;
    Ok(field.scaled(t))
}

/// Unit-traction solve and stress recovery in one call.
pub fn unit_stress_field(mesh: &TriMesh, mat: &MaterialParams) -> Result<UnitStressField> {
    let u = assemble_solve(mesh, mat)?;
    Ok(recover_stress(mesh, &u, mat))
}
