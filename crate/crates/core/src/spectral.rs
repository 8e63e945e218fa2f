//! Finite-dimensional spectral instantiations of the operator pair `(A, B)`.
//!
//! A model fixes an eigenbasis `Φ` of `A` together with the spectrum
//! `λ_1 ≤ … ≤ λ_N` (so `A φ_k = i λ_k φ_k`) and the compression of the
//! control potential `B = -iW` to that basis. Two 1D geometries are
//! supported: the Dirichlet interval `(0, π)` with the sine basis, and the
//! flat torus `[0, 2π)` with the real Fourier basis plus a positive
//! spectral shift that keeps `A` invertible.
//!
//! When the confining potential `V` vanishes the basis is analytic;
//! otherwise `-Δ + V` is assembled in the free basis at the requested
//! dimension and diagonalized, and `Φ` is the resulting orthonormal
//! eigenbasis. All potential matrix elements come from composite
//! Gauss-Legendre quadrature with a doubling self-check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::complexify;
use crate::quadrature::composite_nodes;

/// Entrywise tolerance for the skew-Hermitian model invariant.
pub const SKEW_TOL: f64 = 1e-12;
/// Entrywise tolerance for the quadrature doubling self-check.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Eigenvalue gap below which a numerically diagonalized model is rejected.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Closed-form real potential on the model interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// Identically zero.
    Zero,
    /// `Σ_i coeffs[i] · x^i`.
    Polynomial { coeffs: Vec<f64> },
    /// `constant + Σ_m cos[m-1]·cos(m x) + Σ_m sin[m-1]·sin(m x)`.
    Trig {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl PotentialSpec {
    /// `cos(x)`, the workhorse control potential in tests and examples.
    pub fn cosine() -> Self {
        PotentialSpec::Trig {
            constant: 0.0,
            cos: vec![1.0],
            sin: vec![],
        }
    }

    pub fn constant(c: f64) -> Self {
        PotentialSpec::Trig {
            constant: c,
            cos: vec![],
            sin: vec![],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
            }
            PotentialSpec::Trig { constant, cos, sin } => {
                let mut v = *constant;
                for (m, c) in cos.iter().enumerate() {
                    v += c * ((m + 1) as f64 * x).cos();
                }
                for (m, s) in sin.iter().enumerate() {
                    v += s * ((m + 1) as f64 * x).sin();
                }
                v
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialSpec::Zero => true,
            PotentialSpec::Polynomial { coeffs } => coeffs.iter().all(|&c| c == 0.0),
            PotentialSpec::Trig { constant, cos, sin } => {
                *constant == 0.0 && cos.iter().all(|&c| c == 0.0) && sin.iter().all(|&s| s == 0.0)
            }
        }
    }

    /// Rejects non-finite coefficients (the descriptor must be a real
    /// function).
    pub fn validate(&self) -> Result<()> {
        let all_finite = match self {
            PotentialSpec::Zero => true,
            PotentialSpec::Polynomial { coeffs } => coeffs.iter().all(|c| c.is_finite()),
            PotentialSpec::Trig { constant, cos, sin } => {
                constant.is_finite()
                    && cos.iter().all(|c| c.is_finite())
                    && sin.iter().all(|s| s.is_finite())
            }
        };
        if all_finite {
            Ok(())
        } else {
            Err(Error::invalid(
                "potential descriptor has non-finite coefficients",
            ))
        }
    }
}

/// Base geometry of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    /// Interval `(0, π)` with Dirichlet boundary conditions; sine basis.
    DirichletBox,
    /// Circle of circumference `2π`; real Fourier basis. The shift is
    /// added to the free spectrum so every eigenvalue is strictly
    /// positive.
    FlatTorus { spectral_shift: f64 },
}

impl Geometry {
    fn interval(&self) -> (f64, f64) {
        match self {
            Geometry::DirichletBox => (0.0, std::f64::consts::PI),
            Geometry::FlatTorus { .. } => (0.0, 2.0 * std::f64::consts::PI),
        }
    }

    /// Eigenvalues of the shifted free operator, ascending.
    fn free_spectrum(&self, n: usize) -> Vec<f64> {
        match self {
            Geometry::DirichletBox => (1..=n).map(|j| (j * j) as f64).collect(),
            Geometry::FlatTorus { spectral_shift } => (0..n)
                .map(|j| {
                    let m = j.div_ceil(2);
                    (m * m) as f64 + spectral_shift
                })
                .collect(),
        }
    }

    /// Values of the first `n` basis functions at `x`.
    fn basis_values(&self, n: usize, x: f64) -> Vec<f64> {
        match self {
            Geometry::DirichletBox => {
                let scale = (2.0 / std::f64::consts::PI).sqrt();
                (1..=n).map(|j| scale * (j as f64 * x).sin()).collect()
            }
            Geometry::FlatTorus { .. } => {
                let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
                (0..n)
                    .map(|j| {
                        if j == 0 {
                            inv_sqrt_2pi
                        } else {
                            let m = j.div_ceil(2) as f64;
                            if j % 2 == 1 {
                                inv_sqrt_pi * (m * x).cos()
                            } else {
                                inv_sqrt_pi * (m * x).sin()
                            }
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Whether the eigenbasis is the closed-form free basis or came out of a
/// dense diagonalization of `-Δ + V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    NumericallyDiagonalized,
}

/// Coefficient vector of a state in the model eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    coefficients: DVector<C64>,
}

impl StateVector {
    pub fn new(coefficients: DVector<C64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("state vector must be non-empty"));
        }
        if !coefficients
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(Error::invalid("state vector has non-finite coefficients"));
        }
        Ok(StateVector { coefficients })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(DVector::from_vec(
            pairs.iter().map(|&(re, im)| C64::new(re, im)).collect(),
        ))
    }

    /// The `index`-th basis state `φ_index` (1-based) at dimension `dim`.
    pub fn eigenstate(dim: usize, index: usize) -> Result<Self> {
        if index == 0 || index > dim {
            return Err(Error::invalid(format!(
                "eigenstate index {index} out of range 1..={dim}"
            )));
        }
        let mut v = DVector::zeros(dim);
        v[index - 1] = C64::new(1.0, 0.0);
        Ok(StateVector { coefficients: v })
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &DVector<C64> {
        &self.coefficients
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::vec_norm(&self.coefficients)
    }

    /// Truncation to the first `n` coefficients.
    pub fn project(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.dim() {
            return Err(Error::invalid(format!(
                "projection order {n} out of range 1..={}",
                self.dim()
            )));
        }
        Ok(StateVector {
            coefficients: DVector::from_iterator(n, self.coefficients.iter().take(n).copied()),
        })
    }

    /// Zero-padding to length `n_target`.
    pub fn lift(&self, n_target: usize) -> Result<Self> {
        if n_target < self.dim() {
            return Err(Error::invalid(format!(
                "lift target {n_target} is below the current dimension {}",
                self.dim()
            )));
        }
        let mut v = DVector::zeros(n_target);
        for (j, z) in self.coefficients.iter().enumerate() {
            v[j] = *z;
        }
        Ok(StateVector { coefficients: v })
    }

    /// Rescale to unit Euclidean norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(Error::invalid("cannot normalize the zero state"));
        }
        Ok(StateVector {
            coefficients: &self.coefficients / C64::new(n, 0.0),
        })
    }
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let doc = StateDoc {
            coefficients: self.coefficients.iter().map(|z| [z.re, z.im]).collect(),
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = StateDoc::deserialize(d)?;
        let v = DVector::from_vec(
            doc.coefficients
                .iter()
                .map(|p| C64::new(p[0], p[1]))
                .collect(),
        );
        StateVector::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    coefficients: Vec<[f64; 2]>,
}

/// Finite-dimensional instantiation of `(A, B)` in the eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct SpectralModel {
    dim: usize,
    eigenvalues: Vec<f64>,
    b_matrix: DMatrix<C64>,
    geometry: Geometry,
    v_potential: PotentialSpec,
    w_potential: PotentialSpec,
    provenance: Provenance,
}

impl SpectralModel {
    /// Validating constructor used by the builders and by deserialization.
    pub fn from_parts(
        eigenvalues: Vec<f64>,
        b_matrix: DMatrix<C64>,
        geometry: Geometry,
        v_potential: PotentialSpec,
        w_potential: PotentialSpec,
        provenance: Provenance,
    ) -> Result<Self> {
        let dim = eigenvalues.len();
        if dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        if b_matrix.nrows() != dim || b_matrix.ncols() != dim {
            return Err(Error::invalid(format!(
                "b matrix is {}x{}, expected {dim}x{dim}",
                b_matrix.nrows(),
                b_matrix.ncols()
            )));
        }
        if !eigenvalues.iter().all(|l| l.is_finite()) {
            return Err(Error::invalid("eigenvalues must be finite"));
        }
        if eigenvalues[0] <= 0.0 {
            return Err(Error::invalid("eigenvalues must be strictly positive"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("eigenvalues must be non-decreasing"));
        }
        if !b_matrix
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            return Err(Error::invalid("b matrix has non-finite entries"));
        }
        let skew_defect = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| (b_matrix[(i, j)] + b_matrix[(j, i)].conj()).norm())
            .fold(0.0, f64::max);
        if skew_defect > SKEW_TOL {
            return Err(Error::invalid(format!(
                "b matrix is not skew-Hermitian (defect {skew_defect:.3e})"
            )));
        }
        Ok(SpectralModel {
            dim,
            eigenvalues,
            b_matrix,
            geometry,
            v_potential,
            w_potential,
            provenance,
        })
    }

    /// Model on the Dirichlet interval `(0, π)`.
    ///
    /// With `v = 0` the eigenvalues are exactly `n²` and the basis is the
    /// sine basis; otherwise `-Δ + V` is assembled at dimension `n` and
    /// diagonalized. `quad_points` sets the quadrature budget and is
    /// re-run doubled as a self-check.
    pub fn dirichlet_box(
        n: usize,
        v: PotentialSpec,
        w: PotentialSpec,
        quad_points: usize,
    ) -> Result<Self> {
        Self::build(Geometry::DirichletBox, n, v, w, quad_points)
    }

    /// Model on the flat torus `[0, 2π)` with spectral shift `+1`.
    pub fn flat_torus(
        n: usize,
        v: PotentialSpec,
        w: PotentialSpec,
        quad_points: usize,
    ) -> Result<Self> {
        Self::build(
            Geometry::FlatTorus {
                spectral_shift: 1.0,
            },
            n,
            v,
            w,
            quad_points,
        )
    }

    /// Quadrature budget that comfortably resolves trigonometric
    /// potentials of degree up to `n` at dimension `n`.
    pub fn default_quad_points(geometry: &Geometry, n: usize) -> usize {
        match geometry {
            Geometry::DirichletBox => (32 * n).max(64),
            Geometry::FlatTorus { .. } => (64 * n).max(128),
        }
    }

    fn build(
        geometry: Geometry,
        n: usize,
        v: PotentialSpec,
        w: PotentialSpec,
        quad_points: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        v.validate()?;
        w.validate()?;
        if quad_points < 4 * n {
            return Err(Error::invalid(format!(
                "quad_points {quad_points} is below the floor 4*dim = {}",
                4 * n
            )));
        }

        let (_, b_matrix) = assemble(&geometry, n, &v, &w, quad_points)?;
        let (eigenvalues_2, b_matrix_2) = assemble(&geometry, n, &v, &w, 2 * quad_points)?;
        let drift = crate::linalg::max_abs_diff(&b_matrix, &b_matrix_2);
        if drift > QUADRATURE_TOL {
            return Err(Error::accuracy(format!(
                "quadrature self-check failed: doubling quad_points moved a b-matrix entry by {drift:.3e}"
            )));
        }
        // Keep the better-resolved assembly.
        let provenance = if v.is_zero() {
            Provenance::Analytic
        } else {
            Provenance::NumericallyDiagonalized
        };
        Self::from_parts(eigenvalues_2, b_matrix_2, geometry, v, w, provenance)
    }

    /// Galerkin compression to order `n`: leading eigenvalues and the
    /// leading block of the control matrix.
    pub fn compress(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.dim {
            return Err(Error::invalid(format!(
                "compression order {n} out of range 1..={}",
                self.dim
            )));
        }
        Ok(SpectralModel {
            dim: n,
            eigenvalues: self.eigenvalues[..n].to_vec(),
            b_matrix: self.b_matrix.view((0, 0), (n, n)).into_owned(),
            geometry: self.geometry.clone(),
            v_potential: self.v_potential.clone(),
            w_potential: self.w_potential.clone(),
            provenance: self.provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn b_matrix(&self) -> &DMatrix<C64> {
        &self.b_matrix
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn v_potential(&self) -> &PotentialSpec {
        &self.v_potential
    }

    pub fn w_potential(&self) -> &PotentialSpec {
        &self.w_potential
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `A` as a matrix: `i · diag(λ)`.
    pub fn a_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_diagonal(&DVector::from_vec(
            self.eigenvalues
                .iter()
                .map(|&l| C64::new(0.0, l))
                .collect::<Vec<_>>(),
        ))
    }

    /// Generator of the flow at control value `u`: `A + u B`.
    pub fn generator(&self, u: f64) -> DMatrix<C64> {
        let mut g = &self.b_matrix * C64::new(u, 0.0);
        for j in 0..self.dim {
            g[(j, j)] += C64::new(0.0, self.eigenvalues[j]);
        }
        g
    }

    /// Spectral Sobolev-scale norm `sqrt(Σ λ_n^k |c_n|²)`.
    ///
    /// `k = 0` is the plain Euclidean norm.
    pub fn sobolev_norm(&self, state: &StateVector, k: f64) -> Result<f64> {
        if state.dim() != self.dim {
            return Err(Error::invalid(format!(
                "state dimension {} does not match model dimension {}",
                state.dim(),
                self.dim
            )));
        }
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::invalid("Sobolev order must be a non-negative real"));
        }
        let sum: f64 = self
            .eigenvalues
            .iter()
            .zip(state.coefficients().iter())
            .map(|(&l, c)| l.powf(k) * c.norm_sqr())
            .sum();
        Ok(sum.sqrt())
    }

    /// `diag(λ^{k/2}) · B · diag(λ^{-k/2})`: the control matrix viewed as
    /// an operator on the `λ^{k/2}`-weighted space.
    pub fn weighted_similarity(&self, k: f64) -> Result<DMatrix<C64>> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::invalid("weight order must be a non-negative real"));
        }
        let mut out = self.b_matrix.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let scale = (self.eigenvalues[i] / self.eigenvalues[j]).powf(0.5 * k);
                out[(i, j)] *= C64::new(scale, 0.0);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Assembles eigenvalues and the control matrix at the given quadrature
/// budget. Returns matrices that are exactly symmetric/skew-Hermitian by
/// construction.
fn assemble(
    geometry: &Geometry,
    n: usize,
    v: &PotentialSpec,
    w: &PotentialSpec,
    quad_points: usize,
) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let (a, b) = geometry.interval();
    let nodes = composite_nodes(a, b, quad_points);
    let free = geometry.free_spectrum(n);

    // Basis value table: row j holds φ_j at every node.
    let q = nodes.len();
    let mut basis = DMatrix::zeros(n, q);
    for (col, (x, _)) in nodes.iter().enumerate() {
        for (row, val) in geometry.basis_values(n, *x).into_iter().enumerate() {
            basis[(row, col)] = val;
        }
    }

    let w_free = potential_matrix(&basis, &nodes, w);

    if v.is_zero() {
        let b_matrix = complexify(&w_free) * C64::new(0.0, -1.0);
        return Ok((free, b_matrix));
    }

    // Assemble -Δ + V (+ shift) in the free basis and diagonalize.
    let mut h = potential_matrix(&basis, &nodes, v);
    for j in 0..n {
        h[(j, j)] += free[j];
    }
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();

    if eigenvalues[0] <= 0.0 {
        return Err(Error::invalid(format!(
            "potential drives the lowest eigenvalue to {:.6} <= 0; the model operator must stay invertible",
            eigenvalues[0]
        )));
    }
    let min_gap = eigenvalues
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::INFINITY, f64::min);
    if n > 1 && min_gap < DEGENERACY_GAP {
        return Err(Error::accuracy(format!(
            "degenerate numerical spectrum (gap {min_gap:.3e}); the Galerkin spaces would be ill-defined"
        )));
    }

    // Deterministic phase convention: largest-magnitude coefficient positive.
    let mut phi = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for r in 1..n {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        phi.set_column(dst, &(col * sign));
    }

    let w_eig = symmetrize(phi.transpose() * &w_free * &phi);
    let b_matrix = complexify(&w_eig) * C64::new(0.0, -1.0);
    Ok((eigenvalues, b_matrix))
}

/// Matrix of multiplication by `p` in the given basis table, exactly
/// symmetric.
fn potential_matrix(basis: &DMatrix<f64>, nodes: &[(f64, f64)], p: &PotentialSpec) -> DMatrix<f64> {
    let (n, q) = basis.shape();
    let mut weighted = DMatrix::zeros(n, q);
    for (col, (x, w)) in nodes.iter().enumerate() {
        let scale = w * p.eval(*x);
        for row in 0..n {
            weighted[(row, col)] = basis[(row, col)] * scale;
        }
    }
    symmetrize(weighted * basis.transpose())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    out
}

/// Wire format: complex entries as row-major `[re, im]` pairs.
#[derive(Serialize, Deserialize, Clone)]
struct ModelDoc {
    dim: usize,
    eigenvalues: Vec<f64>,
    b_matrix: Vec<[f64; 2]>,
    geometry: Geometry,
    potentials: PotentialsDoc,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize, Clone)]
struct PotentialsDoc {
    v: PotentialSpec,
    w: PotentialSpec,
}

impl From<SpectralModel> for ModelDoc {
    fn from(m: SpectralModel) -> Self {
        let mut b = Vec::with_capacity(m.dim * m.dim);
        for i in 0..m.dim {
            for j in 0..m.dim {
                let z = m.b_matrix[(i, j)];
                b.push([z.re, z.im]);
            }
        }
        ModelDoc {
            dim: m.dim,
            eigenvalues: m.eigenvalues,
            b_matrix: b,
            geometry: m.geometry,
            potentials: PotentialsDoc {
                v: m.v_potential,
                w: m.w_potential,
            },
            provenance: m.provenance,
        }
    }
}

impl TryFrom<ModelDoc> for SpectralModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.eigenvalues.len() != doc.dim {
            return Err(Error::invalid(format!(
                "document dim {} does not match {} eigenvalues",
                doc.dim,
                doc.eigenvalues.len()
            )));
        }
        if doc.b_matrix.len() != doc.dim * doc.dim {
            return Err(Error::invalid(format!(
                "document b_matrix has {} entries, expected {}",
                doc.b_matrix.len(),
                doc.dim * doc.dim
            )));
        }
        let b = DMatrix::from_fn(doc.dim, doc.dim, |i, j| {
            let p = doc.b_matrix[i * doc.dim + j];
            C64::new(p[0], p[1])
        });
        SpectralModel::from_parts(
            doc.eigenvalues,
            b,
            doc.geometry,
            doc.potentials.v,
            doc.potentials.w,
            doc.provenance,
        )
    }
}
