//! Discrete Gelfand triple `V ↪ H ↪ V′`.
//!
//! A state is a coefficient vector `v`; the H and V geometries are carried by two SPD Gram
//! matrices, `(u|v)_H = vᵀ·G_H·u` and `‖v‖²_V = vᵀ·G_V·v`. Elements of `V′` are coefficient
//! vectors of functional values, paired with states by `⟨g, v⟩ = vᵀg`, so `H` embeds into `V′`
//! through `h ↦ G_H·h`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, BandMatrix, Whitening};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Endpoint values are eliminated, `V = H¹₀`.
    Dirichlet,
    /// All nodes are free, `V = H¹`.
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassKind {
    #[default]
    Consistent,
    /// Row-sum (trapezoidal) lumping; required for pointwise constraint sets.
    Lumped,
}

/// Uniform P1 mesh of `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub cells: usize,
    pub bc: BoundaryCondition,
    /// Coordinates of all mesh nodes, boundary included.
    pub nodes: Vec<f64>,
    /// Mesh node carrying each degree of freedom.
    pub dofs: Vec<usize>,
}

impl Mesh {
    pub fn cell_width(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) * self.cell_width()
    }

    /// Degree of freedom at mesh node `node`, if the node is not eliminated.
    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        match self.bc {
            BoundaryCondition::Neumann => Some(node),
            BoundaryCondition::Dirichlet => {
                (node > 0 && node < self.cells).then(|| node - 1)
            }
        }
    }
}

/// Element of `V′` in coefficient form.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector(pub DVector<f64>);

impl DualVector {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `⟨g, v⟩ = vᵀg`.
    pub fn pair(&self, v: &DVector<f64>) -> f64 {
        self.0.dot(v)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteSpace {
    h_gram: BandMatrix,
    v_gram: BandMatrix,
    h_factor: BandCholesky,
    v_factor: BandCholesky,
    lumped: bool,
    mesh: Option<Mesh>,
    embedding: f64,
}

impl DiscreteSpace {
    /// P1 finite elements on a uniform mesh of `(0, 1)` with `cells` cells.
    ///
    /// The H-Gram is the (consistent or lumped) mass matrix and the V-Gram is stiffness plus
    /// that mass matrix, i.e. the full H¹ inner product, for both boundary conditions.
    pub fn interval(cells: usize, bc: BoundaryCondition, mass: MassKind) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidMesh { cells });
        }
        let h = 1.0 / cells as f64;
        let nodes: Vec<f64> = (0..=cells).map(|i| i as f64 * h).collect();
        let dofs: Vec<usize> = match bc {
            BoundaryCondition::Neumann => (0..=cells).collect(),
            BoundaryCondition::Dirichlet => (1..cells).collect(),
        };
        let mesh = Mesh {
            cells,
            bc,
            nodes,
            dofs,
        };
        let mass_m = assemble_cells(&mesh, |_| match mass {
            MassKind::Consistent => [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]],
            MassKind::Lumped => [[h / 2.0, 0.0], [0.0, h / 2.0]],
        });
        let stiff = assemble_cells(&mesh, |_| [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]]);
        let v_gram = BandMatrix::lincomb(1.0, &stiff, 1.0, &mass_m);
        let mut space = Self::build(mass_m, v_gram)?;
        space.mesh = Some(mesh);
        Ok(space)
    }

    /// Finite-dimensional triple from two explicit Gram matrices.
    pub fn from_matrices(h_gram: &DMatrix<f64>, v_gram: &DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("h_gram", h_gram), ("v_gram", v_gram)] {
            if m.nrows() != m.ncols() || m.nrows() == 0 {
                return Err(Error::InvalidMatrix {
                    name: name.into(),
                    reason: format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols()),
                });
            }
        }
        if h_gram.nrows() != v_gram.nrows() {
            return Err(Error::DimensionMismatch {
                expected: h_gram.nrows(),
                found: v_gram.nrows(),
            });
        }
        Self::build(BandMatrix::from_dense(h_gram), BandMatrix::from_dense(v_gram))
    }

    fn build(h_gram: BandMatrix, v_gram: BandMatrix) -> Result<Self> {
        let check = |name: &str, m: &BandMatrix| -> Result<BandCholesky> {
            let asym = m.asymmetry();
            if asym > 1e-12 {
                return Err(Error::InvalidMatrix {
                    name: name.into(),
                    reason: format!("not symmetric (relative asymmetry {asym:e})"),
                });
            }
            BandCholesky::new(m).ok_or_else(|| Error::InvalidMatrix {
                name: name.into(),
                reason: "not positive definite".into(),
            })
        };
        let h_factor = check("h_gram", &h_gram)?;
        let v_factor = check("v_gram", &v_gram)?;
        let lumped = h_gram.is_diagonal();
        let w = Whitening::new(&v_gram.to_dense()).ok_or_else(|| Error::InvalidMatrix {
            name: "v_gram".into(),
            reason: "not positive definite".into(),
        })?;
        let top = *w
            .pencil_eigenvalues(&h_gram.to_dense())
            .last()
            .expect("non-empty space");
        Ok(Self {
            h_gram,
            v_gram,
            h_factor,
            v_factor,
            lumped,
            mesh: None,
            embedding: top.max(0.0).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.h_gram.dim()
    }

    pub fn h_gram(&self) -> &BandMatrix {
        &self.h_gram
    }

    pub fn v_gram(&self) -> &BandMatrix {
        &self.v_gram
    }

    pub fn is_lumped(&self) -> bool {
        self.lumped
    }

    pub fn mesh(&self) -> Option<&Mesh> {
        self.mesh.as_ref()
    }

    /// Smallest `c` with `‖v‖_H ≤ c·‖v‖_V`.
    pub fn embedding_constant(&self) -> f64 {
        self.embedding
    }

    /// Coordinates of the degrees of freedom (FEM mode only).
    pub fn dof_coordinates(&self) -> Option<Vec<f64>> {
        self.mesh
            .as_ref()
            .map(|m| m.dofs.iter().map(|&i| m.nodes[i]).collect())
    }

    /// Nodal interpolant of `f` (FEM mode only).
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> Result<DVector<f64>> {
        let xs = self.dof_coordinates().ok_or_else(|| {
            Error::InvalidArgument("interpolation needs a mesh-based space".into())
        })?;
        Ok(DVector::from_iterator(xs.len(), xs.into_iter().map(f)))
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            })
        }
    }

    pub fn h_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(u.len())?;
        self.check_dim(v.len())?;
        Ok(self.h_gram.bilinear(u, v))
    }

    pub fn h_norm(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(self.h_norm_sq(v).sqrt())
    }

    pub fn v_norm(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(self.v_norm_sq(v).sqrt())
    }

    /// `‖g‖_{V′} = √(gᵀ·G_V⁻¹·g)`.
    pub fn dual_norm(&self, g: &DualVector) -> Result<f64> {
        self.check_dim(g.len())?;
        Ok(self.dual_norm_sq(g).sqrt())
    }

    /// Embedding `H → V′`, `h ↦ G_H·h`.
    pub fn embed(&self, h: &DVector<f64>) -> DualVector {
        DualVector(self.h_gram.mul_vec(h))
    }

    /// Riesz representative in H: the `h` with `G_H·h = g`.
    pub fn h_riesz(&self, g: &DualVector) -> DVector<f64> {
        self.h_factor.solve(&g.0)
    }

    /// Riesz representative in V: the maximiser of `⟨g, v⟩ / ‖v‖_V`.
    pub fn v_riesz(&self, g: &DualVector) -> DVector<f64> {
        self.v_factor.solve(&g.0)
    }

    pub(crate) fn h_norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.h_gram.bilinear(v, v).max(0.0)
    }

    pub(crate) fn v_norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.v_gram.bilinear(v, v).max(0.0)
    }

    pub(crate) fn dual_norm_sq(&self, g: &DualVector) -> f64 {
        g.0.dot(&self.v_factor.solve(&g.0)).max(0.0)
    }

    /// Norm of the nodal identity between the lumped and actual H geometry.
    ///
    /// Equals one for lumped spaces; for consistent mass it bounds how much a nodal
    /// Lipschitz constant grows when measured in `‖·‖_H`.
    pub fn nodal_equivalence(&self) -> f64 {
        if self.lumped {
            return 1.0;
        }
        let d = DMatrix::from_diagonal(&self.h_gram.diagonal());
        let w = Whitening::new(&d).expect("diagonal of an SPD matrix is positive");
        let ev = w.pencil_eigenvalues(&self.h_gram.to_dense());
        (ev[ev.len() - 1] / ev[0]).sqrt()
    }
}

/// Assembles a tridiagonal matrix over mesh dofs from 2x2 cell blocks.
pub(crate) fn assemble_cells(mesh: &Mesh, block: impl Fn(usize) -> [[f64; 2]; 2]) -> BandMatrix {
    let mut m = BandMatrix::zeros(mesh.dofs.len(), 1, 1);
    for cell in 0..mesh.cells {
        let b = block(cell);
        let ids = [mesh.dof_of_node(cell), mesh.dof_of_node(cell + 1)];
        for (r, ir) in ids.iter().enumerate() {
            for (c, ic) in ids.iter().enumerate() {
                if let (Some(i), Some(j)) = (ir, ic) {
                    if b[r][c] != 0.0 || i == j {
                        m.add(*i, *j, b[r][c]);
                    }
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Hat function of node `i` on a uniform mesh with `cells` cells.
    fn hat(i: usize, cells: usize, x: f64) -> f64 {
        let h = 1.0 / cells as f64;
        (1.0 - (x - i as f64 * h).abs() / h).max(0.0)
    }

    /// Composite midpoint rule on `(0, 1)` with many subintervals.
    fn quad(f: impl Fn(f64) -> f64) -> f64 {
        let m = 20_000;
        (0..m).map(|k| f((k as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64
    }

    #[test]
    fn lumped_mass_is_trapezoid_weights() {
        let s = DiscreteSpace::interval(2, BoundaryCondition::Neumann, MassKind::Lumped).unwrap();
        let d = s.h_gram().to_dense();
        for i in 0..3 {
            // lumped entry = ∫ φ_i
            let oracle = quad(|x| hat(i, 2, x));
            assert_relative_eq!(d[(i, i)], oracle, epsilon = 1e-8);
        }
        assert_relative_eq!(d, DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 0.5, 0.25])));
        assert!(s.is_lumped());
    }

    #[test]
    fn consistent_mass_matches_quadrature_and_sums_to_one() {
        let s = DiscreteSpace::interval(4, BoundaryCondition::Neumann, MassKind::Consistent).unwrap();
        let d = s.h_gram().to_dense();
        for i in 0..5 {
            for j in 0..5 {
                let oracle = quad(|x| hat(i, 4, x) * hat(j, 4, x));
                assert_relative_eq!(d[(i, j)], oracle, epsilon = 1e-8);
            }
        }
        assert_relative_eq!(d.sum(), 1.0, epsilon = 1e-14);
        assert!(!s.is_lumped());
    }

    #[test]
    fn dirichlet_eliminates_boundary() {
        let s = DiscreteSpace::interval(2, BoundaryCondition::Dirichlet, MassKind::Consistent).unwrap();
        assert_eq!(s.dim(), 1);
        let s = DiscreteSpace::interval(10, BoundaryCondition::Dirichlet, MassKind::Lumped).unwrap();
        assert_eq!(s.dim(), 9);
        assert_eq!(s.dof_coordinates().unwrap()[0], 0.1);
    }

    #[test]
    fn too_few_cells_is_rejected() {
        assert_eq!(
            DiscreteSpace::interval(1, BoundaryCondition::Neumann, MassKind::Lumped).unwrap_err(),
            Error::InvalidMesh { cells: 1 }
        );
    }

    #[test]
    fn matrix_mode_geometries() {
        let i2 = DMatrix::identity(2, 2);
        let s = DiscreteSpace::from_matrices(&i2, &i2).unwrap();
        assert_eq!(s.dim(), 2);
        assert_relative_eq!(s.embedding_constant(), 1.0, epsilon = 1e-14);

        let s = DiscreteSpace::from_matrices(&i2, &(&i2 * 4.0)).unwrap();
        let v = DVector::from_vec(vec![0.3, -1.7]);
        assert_relative_eq!(s.h_norm(&v).unwrap(), 0.5 * s.v_norm(&v).unwrap(), epsilon = 1e-14);
        assert_relative_eq!(s.embedding_constant(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn matrix_mode_rejects_bad_input() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        match DiscreteSpace::from_matrices(&h, &v).unwrap_err() {
            Error::InvalidMatrix { name, .. } => assert_eq!(name, "v_gram"),
            e => panic!("unexpected {e:?}"),
        }
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match DiscreteSpace::from_matrices(&indefinite, &h).unwrap_err() {
            Error::InvalidMatrix { name, reason } => {
                assert_eq!(name, "h_gram");
                assert!(reason.contains("positive definite"));
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(
            DiscreteSpace::from_matrices(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn norms_in_identity_geometry() {
        let i2 = DMatrix::identity(2, 2);
        let s = DiscreteSpace::from_matrices(&i2, &i2).unwrap();
        assert_eq!(s.h_norm(&DVector::zeros(2)).unwrap(), 0.0);
        assert_relative_eq!(s.h_norm(&DVector::from_vec(vec![3.0, 4.0])).unwrap(), 5.0);
        assert_relative_eq!(s.dual_norm(&DualVector(DVector::from_vec(vec![1.0, 0.0]))).unwrap(), 1.0);
        assert_eq!(s.dual_norm(&DualVector::zeros(2)).unwrap(), 0.0);
        assert!(matches!(
            s.h_norm(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(s.dual_norm(&DualVector::zeros(1)).is_err());
    }

    #[test]
    fn dual_norm_against_explicit_inverse() {
        let h = DMatrix::identity(2, 2);
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let s = DiscreteSpace::from_matrices(&h, &v).unwrap();
        let g = DVector::from_vec(vec![2.0, 0.0]);
        let oracle = g.dot(&(v.clone().try_inverse().unwrap() * &g)).sqrt();
        assert_relative_eq!(oracle, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.dual_norm(&DualVector(g)).unwrap(), oracle, epsilon = 1e-14);
    }

    #[test]
    fn sine_interpolant_norm() {
        let s = DiscreteSpace::interval(64, BoundaryCondition::Dirichlet, MassKind::Consistent).unwrap();
        let v = s.interpolate(|x| (PI * x).sin()).unwrap();
        // ∫ sin²(πx) dx = 1/2
        let oracle = quad(|x| (PI * x).sin().powi(2)).sqrt();
        assert!((s.h_norm(&v).unwrap() - oracle).abs() < 1e-3);
    }

    #[test]
    fn embedding_round_trip() {
        let s = DiscreteSpace::interval(16, BoundaryCondition::Neumann, MassKind::Consistent).unwrap();
        let h = s.interpolate(|x| x * x - 0.3).unwrap();
        let back = s.h_riesz(&s.embed(&h));
        assert_relative_eq!(back, h, epsilon = 1e-12);
    }

    #[test]
    fn fem_embedding_constant_is_at_most_one() {
        // V-Gram = stiffness + mass, so ‖v‖_H ≤ ‖v‖_V
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let s = DiscreteSpace::interval(12, bc, MassKind::Lumped).unwrap();
            assert!(s.embedding_constant() <= 1.0 + 1e-12);
        }
        let s = DiscreteSpace::interval(12, BoundaryCondition::Neumann, MassKind::Lumped).unwrap();
        // constants have zero stiffness energy
        assert_relative_eq!(s.embedding_constant(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lumped_nodal_equivalence_is_one() {
        let s = DiscreteSpace::interval(8, BoundaryCondition::Neumann, MassKind::Lumped).unwrap();
        assert_eq!(s.nodal_equivalence(), 1.0);
        let s = DiscreteSpace::interval(8, BoundaryCondition::Neumann, MassKind::Consistent).unwrap();
        let e = s.nodal_equivalence();
        assert!(e > 1.0 && e <= 3.0_f64.sqrt() + 1e-9, "{e}");
    }
}
