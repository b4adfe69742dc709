//! Grids, model operators, perturbation bases and their banded realizations.
//!
//! Unknowns are stored as `iz * n_modes + k`: `iz` runs over the longitudinal
//! grid and `k` over the retained angular modes (a single mode for the line
//! model). Multiplication operators are sampled on an angular quadrature grid
//! and enter the matrix as per-point mode-coupling blocks.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let g = Self { x_min, x_max, n_points };
        g.validate()?;
        Ok(g)
    }

    /// Grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_points)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "need x_max > x_min, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.n_points < 16 {
            return Err(Error::InvalidGrid(format!(
                "need at least 16 points, got {}",
                self.n_points
            )));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + self.h() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() <= 1e-12 * self.x_max.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form")]
pub enum PotentialSpec {
    /// `a sech^2 x + b sech^4 x`
    SechPair { a: f64, b: f64 },
    /// `-v0 sech^2 z`
    SechSquaredWell { v0: f64 },
    /// Lattice version of `20 sech^2 x - 24 sech^4 x`: the potential for which
    /// the sampled `sech x` solves the five-point equation exactly, with
    /// eigenvalue [`lattice_sech_eigenvalue`]. Differs from the continuum
    /// potential by `O(h^2)` and decays like `sech^2 x`.
    LatticeSech,
    Tabulated { values: Vec<f64> },
}

/// Eigenvalue `(2 sinh(h/2))^4 / h^4 = 1 + h^2/6 + ...` carried by `sech x`
/// under [`PotentialSpec::LatticeSech`].
pub fn lattice_sech_eigenvalue(h: f64) -> f64 {
    (2.0 * (0.5 * h).sinh()).powi(4) / h.powi(4)
}

fn lattice_sech_potential(x: f64, h: f64) -> f64 {
    // lambda - (D4 sech)(x) / sech(x), each stencil term rewritten so the
    // factor 1 - tanh|x| is explicit and the tail decays without cancellation
    let ax = x.abs();
    let t = ax.tanh();
    let one_minus_t = 2.0 / ((2.0 * ax).exp() + 1.0);
    let stencil = [(-2.0, 1.0), (-1.0, -4.0), (0.0, 6.0), (1.0, -4.0), (2.0, 1.0)];
    let s: f64 = stencil
        .iter()
        .map(|&(k, c)| {
            let a = k * h;
            c * a.sinh() * (-a).exp() / (a.cosh() + t * a.sinh())
        })
        .sum();
    -one_minus_t * s / h.powi(4)
}

impl PotentialSpec {
    pub fn sample(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        let values = match self {
            PotentialSpec::SechPair { a, b } => grid
                .points()
                .iter()
                .map(|&x| {
                    let s2 = 1.0 / x.cosh().powi(2);
                    a * s2 + b * s2 * s2
                })
                .collect(),
            PotentialSpec::SechSquaredWell { v0 } => {
                grid.points().iter().map(|&x| -v0 / x.cosh().powi(2)).collect()
            }
            PotentialSpec::LatticeSech => {
                let h = grid.h();
                grid.points().iter().map(|&x| lattice_sech_potential(x, h)).collect()
            }
            PotentialSpec::Tabulated { values } => {
                if values.len() != grid.n_points {
                    return Err(Error::DimensionMismatch { expected: grid.n_points, got: values.len() });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("tabulated potential has non-finite values".into()));
                }
                values.clone()
            }
        };
        Ok(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    FourthOrderLine,
    CylinderEvenSector,
    CylinderFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub potential: PotentialSpec,
    /// Highest retained angular frequency `J` (cylinder only).
    #[serde(default)]
    pub angular_cutoff: usize,
    /// Angular index `n` of the embedded state (cylinder only).
    #[serde(default = "one")]
    pub angular_index: usize,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn is_cylinder(&self) -> bool {
        self.kind != ModelKind::FourthOrderLine
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_cylinder() {
            if self.angular_index == 0 {
                return Err(Error::InvalidModel("angular index must be positive".into()));
            }
            if self.angular_cutoff < self.angular_index {
                return Err(Error::InvalidModel(format!(
                    "angular cutoff {} below angular index {}",
                    self.angular_cutoff, self.angular_index
                )));
            }
        }
        Ok(())
    }
}

/// Real orthonormal angular mode on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Cos(usize),
    Sin(usize),
}

impl Mode {
    pub fn frequency(&self) -> usize {
        match *self {
            Mode::Cos(j) | Mode::Sin(j) => j,
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        match *self {
            Mode::Cos(0) => 1.0 / (2.0 * PI).sqrt(),
            Mode::Cos(j) => (j as f64 * theta).cos() / PI.sqrt(),
            Mode::Sin(j) => (j as f64 * theta).sin() / PI.sqrt(),
        }
    }
}

/// Index bookkeeping shared by every vector and operator of one model.
#[derive(Debug, Clone)]
pub struct Layout {
    pub kind: ModelKind,
    pub grid: Grid1D,
    pub modes: Vec<Mode>,
    pub theta: Vec<f64>,
    pub theta_weight: f64,
    /// `table[k * n_theta + q] = Theta_k(theta_q)`
    table: Vec<f64>,
}

impl Layout {
    pub fn new(model: &ModelSpec, grid: Grid1D) -> Result<Self> {
        grid.validate()?;
        model.validate()?;
        let (modes, theta, weight) = match model.kind {
            ModelKind::FourthOrderLine => (vec![Mode::Cos(0)], vec![0.0], 1.0),
            ModelKind::CylinderEvenSector | ModelKind::CylinderFull => {
                let jmax = model.angular_cutoff;
                let mut modes = vec![Mode::Cos(0)];
                for j in 1..=jmax {
                    modes.push(Mode::Cos(j));
                    if model.kind == ModelKind::CylinderFull {
                        modes.push(Mode::Sin(j));
                    }
                }
                // 2J+1 equispaced nodes integrate every mode product exactly
                let nq = 2 * jmax + 1;
                let theta = (0..nq).map(|q| 2.0 * PI * q as f64 / nq as f64).collect();
                (modes, theta, 2.0 * PI / nq as f64)
            }
        };
        let table = if model.kind == ModelKind::FourthOrderLine {
            vec![1.0]
        } else {
            modes.iter().flat_map(|m| theta.iter().map(move |&t| m.eval(t))).collect()
        };
        Ok(Self { kind: model.kind, grid, modes, theta, theta_weight: weight, table })
    }

    pub fn nz(&self) -> usize {
        self.grid.n_points
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    /// Length of coefficient (state) vectors.
    pub fn dim(&self) -> usize {
        self.nz() * self.n_modes()
    }

    /// Length of sampled multiplication functions.
    pub fn nodal_dim(&self) -> usize {
        self.nz() * self.n_theta()
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn index(&self, iz: usize, k: usize) -> usize {
        iz * self.n_modes() + k
    }

    pub fn mode_index(&self, mode: Mode) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    #[inline]
    pub fn basis_value(&self, k: usize, q: usize) -> f64 {
        self.table[k * self.n_theta() + q]
    }

    /// Values at the quadrature nodes of a state given in mode coefficients.
    pub fn synthesize(&self, v: &DVector<f64>) -> DVector<f64> {
        let (nm, nq) = (self.n_modes(), self.n_theta());
        DVector::from_fn(self.nodal_dim(), |idx, _| {
            let (iz, q) = (idx / nq, idx % nq);
            (0..nm).map(|k| v[iz * nm + k] * self.basis_value(k, q)).sum()
        })
    }

    /// Mode coefficients of nodal values (quadrature projection).
    pub fn analyze(&self, f: &DVector<f64>) -> DVector<f64> {
        let (nm, nq) = (self.n_modes(), self.n_theta());
        let w = self.theta_weight;
        DVector::from_fn(self.dim(), |idx, _| {
            let (iz, k) = (idx / nm, idx % nm);
            (0..nq).map(|q| w * f[iz * nq + q] * self.basis_value(k, q)).sum()
        })
    }

    /// Applies the multiplication operator with nodal values `w` to a state.
    pub fn multiply(&self, w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        if self.kind == ModelKind::FourthOrderLine {
            return w.component_mul(v);
        }
        let s = self.synthesize(v);
        self.analyze(&w.component_mul(&s))
    }

    pub fn multiply_complex(&self, w: &DVector<f64>, v: &DVector<C64>) -> DVector<C64> {
        let re = self.multiply(w, &v.map(|c| c.re));
        let im = self.multiply(w, &v.map(|c| c.im));
        DVector::from_fn(v.len(), |i, _| C64::new(re[i], im[i]))
    }

    /// Nodal samples of `f(z) * a(theta)`.
    pub fn nodal_from(&self, f: impl Fn(f64) -> f64, a: impl Fn(f64) -> f64) -> DVector<f64> {
        let nq = self.n_theta();
        let zs = self.grid.points();
        DVector::from_fn(self.nodal_dim(), |idx, _| f(zs[idx / nq]) * a(self.theta[idx % nq]))
    }

    /// State `f(z)` placed in mode `k`.
    pub fn state_in_mode(&self, k: usize, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let nm = self.n_modes();
        let mut v = DVector::zeros(self.dim());
        for (iz, z) in self.grid.points().into_iter().enumerate() {
            v[iz * nm + k] = f(z);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Boundary value from the upper half plane, `z = lambda + i0`.
    Plus,
    /// `z = lambda - i0`.
    Minus,
}

impl Branch {
    pub fn sign(&self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn conjugate(&self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Dirichlet,
    Radiation { lambda: f64, branch: Branch },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KindTag {
    H,
    Hbar,
    HplusW,
    HbarPlusW,
}

/// Banded realization of `H`, `H + P0`, `H + W` or `H + P0 + W`.
///
/// `interior` holds the symmetric matrix with zero values outside the box.
/// The rank-`n` part `P0` is kept as a list of factors, and radiation rows
/// are added on demand for a given complex energy.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub layout: Arc<Layout>,
    interior: BandMatrix<f64>,
    potential: Vec<f64>,
    perturbation: Option<DVector<f64>>,
    low_rank: Vec<DVector<f64>>,
    pub bc: Boundary,
    pub kind_tag: KindTag,
}

const POTENTIAL_EDGE_TOL: f64 = 1e-10;

pub fn build_operator(model: &ModelSpec, grid: &Grid1D, bc: Boundary) -> Result<DiscreteOperator> {
    let layout = Layout::new(model, *grid)?;
    let potential = model.potential.sample(grid)?;
    let edge = potential[0].abs().max(potential[potential.len() - 1].abs());
    if edge > POTENTIAL_EDGE_TOL {
        return Err(Error::PotentialNotDecaying { value: edge });
    }
    if let Boundary::Radiation { lambda, .. } = bc {
        check_energy(&layout, lambda)?;
    }
    let interior = assemble_interior(&layout, &potential);
    Ok(DiscreteOperator {
        layout: Arc::new(layout),
        interior,
        potential,
        perturbation: None,
        low_rank: Vec::new(),
        bc,
        kind_tag: KindTag::H,
    })
}

/// Rejects energies without an open channel or sitting on a threshold.
pub fn check_energy(layout: &Layout, lambda: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::NoPropagatingChannel(lambda));
    }
    if layout.kind != ModelKind::FourthOrderLine {
        for m in &layout.modes {
            let t = (m.frequency() * m.frequency()) as f64;
            if (lambda - t).abs() <= 1e-10 * t.max(1.0) {
                return Err(Error::ChannelThreshold { lambda, threshold: t });
            }
        }
    }
    Ok(())
}

fn assemble_interior(layout: &Layout, potential: &[f64]) -> BandMatrix<f64> {
    let nz = layout.nz();
    let h = layout.h();
    match layout.kind {
        ModelKind::FourthOrderLine => {
            let mut m = BandMatrix::zeros(nz, 2, 2);
            let s = 1.0 / h.powi(4);
            let stencil = [1.0, -4.0, 6.0, -4.0, 1.0];
            for i in 0..nz {
                for (d, c) in stencil.iter().enumerate() {
                    let j = i as isize + d as isize - 2;
                    if j >= 0 && (j as usize) < nz {
                        m.set(i, j as usize, c * s);
                    }
                }
                m.add(i, i, potential[i]);
            }
            m
        }
        _ => {
            let nm = layout.n_modes();
            let mut m = BandMatrix::zeros(nz * nm, nm, nm);
            let s = 1.0 / (h * h);
            for iz in 0..nz {
                for (k, mode) in layout.modes.iter().enumerate() {
                    let i = iz * nm + k;
                    let j2 = (mode.frequency() * mode.frequency()) as f64;
                    m.set(i, i, 2.0 * s + j2 + potential[iz]);
                    if iz + 1 < nz {
                        m.set(i, i + nm, -s);
                        m.set(i + nm, i, -s);
                    }
                }
            }
            m
        }
    }
}

/// Characteristic root with `|r| <= 1` of `r + 1/r - 2 = s`; on the unit
/// circle the root with `Im r` of the branch sign is chosen.
fn lattice_root(s: C64, branch: Branch) -> C64 {
    let b = C64::new(2.0, 0.0) + s;
    let disc = (b * b - C64::new(4.0, 0.0)).sqrt();
    let r1 = (b + disc) * 0.5;
    let r2 = (b - disc) * 0.5;
    let (a1, a2) = (r1.norm(), r2.norm());
    if (a1 - a2).abs() > 1e-12 * (a1 + a2) {
        if a1 < a2 {
            r1
        } else {
            r2
        }
    } else if r1.im * branch.sign() >= 0.0 {
        r1
    } else {
        r2
    }
}

/// Entries added to the interior matrix by the transparent rows at energy `z`.
fn boundary_entries(layout: &Layout, z: C64, branch: Branch) -> Vec<(usize, usize, C64)> {
    let h = layout.h();
    let nz = layout.nz();
    let mut out = Vec::new();
    match layout.kind {
        ModelKind::FourthOrderLine => {
            let sq = z.sqrt() * (h * h);
            let r1 = lattice_root(sq, branch);
            let r2 = lattice_root(-sq, branch);
            let (s, p) = (r1 + r2, r1 * r2);
            let inv = 1.0 / h.powi(4);
            // ghosts right: u_N = s u_{N-1} - p u_{N-2}, u_{N+1} = (s^2 - p) u_{N-1} - s p u_{N-2}
            let (a1, a2) = (s, -p);
            let (b1, b2) = (s * s - p, -s * p);
            let (l1, l2) = (nz - 1, nz - 2);
            // row N-2: + u_N
            out.push((l2, l1, a1 * inv));
            out.push((l2, l2, a2 * inv));
            // row N-1: -4 u_N + u_{N+1}
            out.push((l1, l1, (a1 * -4.0 + b1) * inv));
            out.push((l1, l2, (a2 * -4.0 + b2) * inv));
            // mirrored on the left with u_0, u_1 in place of u_{N-1}, u_{N-2}
            out.push((1, 0, a1 * inv));
            out.push((1, 1, a2 * inv));
            out.push((0, 0, (a1 * -4.0 + b1) * inv));
            out.push((0, 1, (a2 * -4.0 + b2) * inv));
        }
        _ => {
            let nm = layout.n_modes();
            for (k, mode) in layout.modes.iter().enumerate() {
                let j2 = (mode.frequency() * mode.frequency()) as f64;
                let r = lattice_root(-(z - j2) * (h * h), branch);
                let d = -r / (h * h);
                out.push((k, k, d));
                out.push(((nz - 1) * nm + k, (nz - 1) * nm + k, d));
            }
        }
    }
    out
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn h(&self) -> f64 {
        self.layout.h()
    }

    /// Symmetric matrix of the local part with zero exterior values.
    pub fn interior(&self) -> &BandMatrix<f64> {
        &self.interior
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn perturbation(&self) -> Option<&DVector<f64>> {
        self.perturbation.as_ref()
    }

    /// Factors `psi_i` of the rank-`n` term `h * sum psi_i psi_i^T`.
    pub fn low_rank(&self) -> &[DVector<f64>] {
        &self.low_rank
    }

    /// Same operator with different boundary metadata.
    pub fn with_boundary(&self, bc: Boundary) -> Result<Self> {
        if let Boundary::Radiation { lambda, .. } = bc {
            check_energy(&self.layout, lambda)?;
        }
        let mut out = self.clone();
        out.bc = bc;
        Ok(out)
    }

    /// `H + P0` with `P0 = sum psi_i <psi_i, .>`.
    pub fn with_low_rank(&self, factors: Vec<DVector<f64>>) -> Result<Self> {
        for f in &factors {
            if f.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), got: f.len() });
            }
        }
        let mut out = self.clone();
        out.low_rank = factors;
        out.kind_tag = match self.kind_tag {
            KindTag::H | KindTag::Hbar => KindTag::Hbar,
            KindTag::HplusW | KindTag::HbarPlusW => KindTag::HbarPlusW,
        };
        Ok(out)
    }

    /// Adds the multiplication operator with nodal values `w`.
    pub fn add_multiplication(&self, w: &DVector<f64>) -> Result<Self> {
        let layout = &self.layout;
        if w.len() != layout.nodal_dim() {
            return Err(Error::DimensionMismatch { expected: layout.nodal_dim(), got: w.len() });
        }
        let mut out = self.clone();
        let (nm, nq) = (layout.n_modes(), layout.n_theta());
        let wq = layout.theta_weight;
        for iz in 0..layout.nz() {
            let row = &w.as_slice()[iz * nq..(iz + 1) * nq];
            if row.iter().all(|&x| x == 0.0) {
                continue;
            }
            if layout.kind == ModelKind::FourthOrderLine {
                out.interior.add(iz, iz, row[0]);
                continue;
            }
            for j in 0..nm {
                for k in j..nm {
                    let c: f64 = (0..nq)
                        .map(|q| wq * layout.basis_value(j, q) * row[q] * layout.basis_value(k, q))
                        .sum();
                    if c != 0.0 {
                        out.interior.add(iz * nm + j, iz * nm + k, c);
                        if j != k {
                            out.interior.add(iz * nm + k, iz * nm + j, c);
                        }
                    }
                }
            }
        }
        out.perturbation = Some(match &self.perturbation {
            Some(p) => p + w,
            None => w.clone(),
        });
        out.kind_tag = match self.kind_tag {
            KindTag::H | KindTag::HplusW => KindTag::HplusW,
            KindTag::Hbar | KindTag::HbarPlusW => KindTag::HbarPlusW,
        };
        Ok(out)
    }

    /// Action of the local part with zero exterior values (no `P0`).
    pub fn apply_local(&self, v: &DVector<f64>) -> DVector<f64> {
        self.interior.mul_vec(v)
    }

    /// Action including `P0`, Dirichlet closure.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut y = self.interior.mul_vec(v);
        let h = self.h();
        for f in &self.low_rank {
            let c = h * f.dot(v);
            y.axpy(c, f, 1.0);
        }
        y
    }

    /// Local part of `A - z` with transparent rows at `z` (no `P0`).
    pub fn shifted_radiation(&self, z: C64, branch: Branch) -> BandMatrix<C64> {
        let mut m = self.interior.to_complex();
        m.add_diagonal(-z);
        for (i, j, v) in boundary_entries(&self.layout, z, branch) {
            m.add(i, j, v);
        }
        m
    }

    /// `(A - z) v` with transparent rows and the `P0` term.
    pub fn apply_shifted_radiation(&self, z: C64, branch: Branch, v: &DVector<C64>) -> DVector<C64> {
        let mut y = self.shifted_radiation(z, branch).mul_vec(v);
        let h = self.h();
        for f in &self.low_rank {
            let fc = f.map(|x| C64::new(x, 0.0));
            let c = fc.dotc(v) * h;
            y += fc * c;
        }
        y
    }

    /// The matrix named by the boundary metadata: the real symmetric interior
    /// for Dirichlet, the complex matrix with transparent rows at `lambda`
    /// otherwise. The rank-`n` term is not included.
    pub fn matrix(&self) -> BandMatrix<C64> {
        match self.bc {
            Boundary::Dirichlet => self.interior.to_complex(),
            Boundary::Radiation { lambda, branch } => {
                let mut m = self.shifted_radiation(C64::new(lambda, 0.0), branch);
                m.add_diagonal(C64::new(lambda, 0.0));
                m
            }
        }
    }
}

/// Ordered list of real multiplication operators, sampled at the nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationBasis {
    pub labels: Vec<String>,
    pub elements: Vec<Vec<f64>>,
    /// Imaginary parts, kept only so that non-real input can be reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imag: Option<Vec<Vec<f64>>>,
}

/// Angular profile of a bump perturbation on the cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angular {
    Const,
    Cos(usize),
    Sin(usize),
}

impl Angular {
    pub fn eval(&self, theta: f64) -> f64 {
        match *self {
            Angular::Const => 1.0,
            Angular::Cos(k) => (k as f64 * theta).cos(),
            Angular::Sin(k) => (k as f64 * theta).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default = "const_angular")]
    pub angular: Angular,
}

fn unit() -> f64 {
    1.0
}

fn const_angular() -> Angular {
    Angular::Const
}

impl Bump {
    pub fn new(center: f64, width: f64) -> Self {
        Self { center, width, amplitude: 1.0, angular: Angular::Const }
    }

    pub fn with_angular(mut self, angular: Angular) -> Self {
        self.angular = angular;
        self
    }

    pub fn label(&self) -> String {
        format!("bump(c={:.3},w={:.3},{:?})", self.center, self.width, self.angular)
    }
}

impl PerturbationBasis {
    pub fn new(labels: Vec<String>, elements: Vec<DVector<f64>>) -> Self {
        Self { labels, elements: elements.into_iter().map(|e| e.as_slice().to_vec()).collect(), imag: None }
    }

    pub fn from_bumps(layout: &Layout, bumps: &[Bump]) -> Self {
        let elements = bumps
            .iter()
            .map(|b| {
                layout.nodal_from(
                    |z| b.amplitude * (-((z - b.center) / b.width).powi(2)).exp(),
                    |t| b.angular.eval(t),
                )
            })
            .collect();
        Self::new(bumps.iter().map(Bump::label).collect(), elements)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.elements[k])
    }

    pub fn validate(&self, layout: &Layout) -> Result<()> {
        for (k, e) in self.elements.iter().enumerate() {
            if e.len() != layout.nodal_dim() {
                return Err(Error::DimensionMismatch { expected: layout.nodal_dim(), got: e.len() });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("basis element {k} has non-finite values")));
            }
        }
        if let Some(im) = &self.imag {
            for (k, e) in im.iter().enumerate() {
                if e.iter().any(|&v| v != 0.0) {
                    let label = self.labels.get(k).cloned().unwrap_or_else(|| k.to_string());
                    return Err(Error::NonRealPerturbation(label));
                }
            }
        }
        Ok(())
    }

    /// Largest deviation from evenness in theta over all elements.
    pub fn theta_oddness(&self, layout: &Layout) -> f64 {
        let nq = layout.n_theta();
        let mut worst: f64 = 0.0;
        for e in &self.elements {
            for iz in 0..layout.nz() {
                for q in 0..nq {
                    let mirror = (nq - q) % nq;
                    worst = worst.max((e[iz * nq + q] - e[iz * nq + mirror]).abs());
                }
            }
        }
        worst
    }

    /// Nodal values of `sum c_k W_k`.
    pub fn combine(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: coeffs.len() });
        }
        let n = self.elements.first().map_or(0, Vec::len);
        let mut w = DVector::zeros(n);
        for (c, e) in coeffs.iter().zip(&self.elements) {
            if *c != 0.0 {
                w.axpy(*c, &DVector::from_column_slice(e), 1.0);
            }
        }
        Ok(w)
    }

    /// Numerical rank of the Gram matrix of the elements.
    pub fn gram_rank(&self) -> usize {
        let p = self.len();
        if p == 0 {
            return 0;
        }
        let g = nalgebra::DMatrix::from_fn(p, p, |i, j| {
            self.elements[i].iter().zip(&self.elements[j]).map(|(a, b)| a * b).sum::<f64>()
        });
        let ev = g.symmetric_eigenvalues();
        let max = ev.iter().cloned().fold(0.0, f64::max);
        ev.iter().filter(|&&e| e > 1e-12 * max).count()
    }
}

pub fn apply_perturbation(
    op: &DiscreteOperator,
    basis: &PerturbationBasis,
    coeffs: &DVector<f64>,
) -> Result<DiscreteOperator> {
    basis.validate(&op.layout)?;
    let w = basis.combine(coeffs)?;
    op.add_multiplication(&w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(pot: PotentialSpec, n: usize) -> DiscreteOperator {
        let model = ModelSpec { kind: ModelKind::FourthOrderLine, potential: pot, angular_cutoff: 0, angular_index: 1 };
        build_operator(&model, &Grid1D::symmetric(20.0, n).unwrap(), Boundary::Dirichlet).unwrap()
    }

    fn cylinder(kind: ModelKind, j: usize) -> DiscreteOperator {
        let model = ModelSpec {
            kind,
            potential: PotentialSpec::SechSquaredWell { v0: 1.44 },
            angular_cutoff: j,
            angular_index: 1,
        };
        build_operator(&model, &Grid1D::symmetric(20.0, 201).unwrap(), Boundary::Dirichlet).unwrap()
    }

    #[test]
    fn dirichlet_line_is_exactly_symmetric() {
        let op = line(PotentialSpec::SechPair { a: 20.0, b: -24.0 }, 301);
        assert_eq!(op.interior().asymmetry(), 0.0);
    }

    #[test]
    fn stencil_reproduces_fourth_derivative_of_quartic() {
        let op = line(PotentialSpec::SechPair { a: 0.0, b: 0.0 }, 101);
        let x = op.layout.grid.points();
        let v = DVector::from_iterator(x.len(), x.iter().map(|t| t.powi(4)));
        let y = op.apply_local(&v);
        let scale = 20f64.powi(4) / op.h().powi(4);
        for i in 2..x.len() - 2 {
            assert!((y[i] - 24.0).abs() < 1e-13 * scale, "{}", y[i]);
        }
    }

    #[test]
    fn sech_pair_values() {
        let g = Grid1D::symmetric(20.0, 401).unwrap();
        let v = PotentialSpec::SechPair { a: 20.0, b: -24.0 }.sample(&g).unwrap();
        assert!((v[200] + 4.0).abs() < 1e-14);
        assert!(v[0].abs() < 1e-15);
    }

    #[test]
    fn lattice_sech_is_an_exact_eigenvector() {
        let op = line(PotentialSpec::LatticeSech, 1601);
        let x = op.layout.grid.points();
        let v = DVector::from_iterator(x.len(), x.iter().map(|t| 1.0 / t.cosh()));
        let lam = lattice_sech_eigenvalue(op.h());
        let r = op.apply_local(&v) - &v * lam;
        // interior rows only: the box walls cut the tails at sech(20)
        let worst = r.rows(2, x.len() - 4).amax();
        // round-off floor of the stencil is ~ 16 eps / h^4
        assert!(worst < 100.0 * f64::EPSILON / op.h().powi(4), "{worst}");
        let cont = PotentialSpec::SechPair { a: 20.0, b: -24.0 }.sample(&op.layout.grid).unwrap();
        let diff = op.potential().iter().zip(&cont).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 20.0 * op.h().powi(2), "{diff}");
    }

    #[test]
    fn cylinder_blocks_shift_by_j_squared() {
        let op = cylinder(ModelKind::CylinderEvenSector, 3);
        let lay = &op.layout;
        assert_eq!(lay.n_modes(), 4);
        for iz in [0, 50, 100] {
            let base = op.interior().get(lay.index(iz, 0), lay.index(iz, 0));
            for k in 1..4 {
                let d = op.interior().get(lay.index(iz, k), lay.index(iz, k));
                assert!((d - base - (k * k) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_is_exact_on_modes() {
        let op = cylinder(ModelKind::CylinderFull, 3);
        let lay = &op.layout;
        let v = DVector::from_fn(lay.dim(), |i, _| ((i * 7) % 11) as f64 - 5.0);
        let back = lay.analyze(&lay.synthesize(&v));
        assert!((back - v).amax() < 1e-12);
    }

    #[test]
    fn zero_coefficients_leave_operator_unchanged() {
        let op = line(PotentialSpec::SechPair { a: 20.0, b: -24.0 }, 201);
        let basis = PerturbationBasis::from_bumps(&op.layout, &[Bump::new(0.0, 1.0), Bump::new(2.0, 1.0)]);
        let w = apply_perturbation(&op, &basis, &DVector::zeros(2)).unwrap();
        assert_eq!(w.interior(), op.interior());
        assert_eq!(w.kind_tag, KindTag::HplusW);
    }

    #[test]
    fn perturbed_cylinder_stays_symmetric() {
        let op = cylinder(ModelKind::CylinderFull, 2);
        let basis = PerturbationBasis::from_bumps(
            &op.layout,
            &[Bump::new(0.0, 1.0).with_angular(Angular::Cos(1)), Bump::new(1.0, 1.0).with_angular(Angular::Sin(2))],
        );
        let w = apply_perturbation(&op, &basis, &DVector::from_vec(vec![0.3, -0.2])).unwrap();
        assert!(w.interior().asymmetry() < 1e-15);
    }

    #[test]
    fn radiation_rejects_bad_energies() {
        let model = ModelSpec {
            kind: ModelKind::FourthOrderLine,
            potential: PotentialSpec::SechPair { a: 0.0, b: 0.0 },
            angular_cutoff: 0,
            angular_index: 1,
        };
        let g = Grid1D::symmetric(20.0, 201).unwrap();
        let bc = Boundary::Radiation { lambda: -1.0, branch: Branch::Plus };
        assert!(matches!(build_operator(&model, &g, bc), Err(Error::NoPropagatingChannel(_))));
        let cyl = ModelSpec { kind: ModelKind::CylinderEvenSector, angular_cutoff: 2, ..model };
        let bc = Boundary::Radiation { lambda: 1.0, branch: Branch::Plus };
        assert!(matches!(build_operator(&cyl, &g, bc), Err(Error::ChannelThreshold { .. })));
    }

    #[test]
    fn undersized_grid_is_rejected() {
        assert!(Grid1D::new(-1.0, 1.0, 8).is_err());
        assert!(Grid1D::new(1.0, -1.0, 100).is_err());
    }

    #[test]
    fn lattice_roots_select_outgoing_and_decaying() {
        let h = 0.1;
        let mu: f64 = 1.0;
        let s = C64::new(mu * mu * h * h, 0.0);
        let rp = lattice_root(-s, Branch::Plus);
        assert!((rp.norm() - 1.0).abs() < 1e-12 && rp.im > 0.0);
        let rm = lattice_root(-s, Branch::Minus);
        assert!((rm - rp.conj()).norm() < 1e-14);
        let re = lattice_root(s, Branch::Plus);
        assert!(re.im.abs() < 1e-14 && re.re > 0.0 && re.re < 1.0);
    }
}
