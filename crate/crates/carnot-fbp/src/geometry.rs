//! Stratified group models and the box grids all fields live on.
//!
//! A [`GroupModel`] carries the generating frame `Z_1..Z_{N1}` of the group,
//! its anisotropic dilation exponents and the homogeneous dimension `Q`.
//! Frames of the supported models have affine coefficients, which is what the
//! flux-form operator assembly relies on. A [`Grid`] is a uniform tensor grid
//! on an axis-aligned box with a Dirichlet boundary layer and trapezoid Haar
//! weights (they sum to the box volume exactly).

use crate::error::{Error, Result};
use crate::Real;

/// One transverse term of a generator: `c(x) * d/dx_axis` with
/// `c(x) = c0 + sum_k c_lin[k] x_k`.
#[derive(Debug, Clone)]
pub struct FrameTerm {
    pub axis: usize,
    pub c0: f64,
    pub c_lin: Vec<f64>,
}

impl FrameTerm {
    pub fn eval<T: Real>(&self, x: &[T]) -> T {
        let mut c = T::from_f64(self.c0);
        for (k, &cl) in self.c_lin.iter().enumerate() {
            if cl != 0.0 {
                c += T::from_f64(cl) * x[k];
            }
        }
        c
    }
}

/// A generator `Z_i = d/dx_p + sum of transverse terms`, with `p` the edge
/// axis used by the flux discretization. The edge-axis coefficient is the
/// constant 1 for every supported model.
#[derive(Debug, Clone)]
pub struct Generator {
    pub edge_axis: usize,
    pub transverse: Vec<FrameTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Euclidean,
    Heisenberg1,
}

/// A stratified group model: ambient space, generating frame, dilations.
#[derive(Debug, Clone)]
pub struct GroupModel {
    kind: GroupKind,
    ambient_dim: usize,
    dilation_exponents: Vec<u32>,
    generators: Vec<Generator>,
}

impl GroupModel {
    /// Abelian model on R^dim: identity frame, all dilation exponents 1.
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::invalid(format!(
                "euclidean model supports dimensions 1..=3, got {dim}"
            )));
        }
        let generators = (0..dim)
            .map(|i| Generator {
                edge_axis: i,
                transverse: Vec::new(),
            })
            .collect();
        Ok(GroupModel {
            kind: GroupKind::Euclidean,
            ambient_dim: dim,
            dilation_exponents: vec![1; dim],
            generators,
        })
    }

    /// First Heisenberg group H^1 on R^3: two generators
    /// `Z_1 = d/dx1 + 2 x2 d/dx3`, `Z_2 = d/dx2 - 2 x1 d/dx3`,
    /// dilations `(d x1, d x2, d^2 x3)`, so `Q = 4`.
    pub fn heisenberg1() -> Self {
        GroupModel {
            kind: GroupKind::Heisenberg1,
            ambient_dim: 3,
            dilation_exponents: vec![1, 1, 2],
            generators: vec![
                Generator {
                    edge_axis: 0,
                    transverse: vec![FrameTerm {
                        axis: 2,
                        c0: 0.0,
                        c_lin: vec![0.0, 2.0, 0.0],
                    }],
                },
                Generator {
                    edge_axis: 1,
                    transverse: vec![FrameTerm {
                        axis: 2,
                        c0: 0.0,
                        c_lin: vec![-2.0, 0.0, 0.0],
                    }],
                },
            ],
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn dilation_exponents(&self) -> &[u32] {
        &self.dilation_exponents
    }

    /// Q = sum of the dilation exponents.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.dilation_exponents.iter().sum()
    }

    /// Anisotropic dilation `T_d(x) = (d^{r_1} x_1, ..., d^{r_N} x_N)`.
    pub fn dilate<T: Real>(&self, x: &[T], d: T) -> Result<Vec<T>> {
        if x.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                got: x.len(),
            });
        }
        if d <= T::zero() {
            return Err(Error::invalid(format!("dilation factor must be positive, got {d}")));
        }
        Ok(x.iter()
            .zip(&self.dilation_exponents)
            .map(|(&xi, &r)| d.powi(r as i32) * xi)
            .collect())
    }

    /// Coefficient vectors of `Z_1..Z_{N1}` at the point `x`, each of length
    /// `ambient_dim`.
    pub fn frame_at<T: Real>(&self, x: &[T]) -> Vec<Vec<T>> {
        self.generators
            .iter()
            .map(|gen| {
                let mut row = vec![T::zero(); self.ambient_dim];
                row[gen.edge_axis] = T::one();
                for term in &gen.transverse {
                    row[term.axis] += term.eval(x);
                }
                row
            })
            .collect()
    }
}

/// Uniform tensor grid on an axis-aligned box with a Dirichlet boundary
/// layer. Node ordering is row-major with the last axis contiguous.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    shape: Vec<usize>,
    spacing: Vec<T>,
    strides: Vec<usize>,
    num_nodes: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(lo: &[T], hi: &[T], shape: &[usize]) -> Result<Self> {
        let dim = lo.len();
        if hi.len() != dim || shape.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: hi.len().max(shape.len()),
            });
        }
        if dim == 0 || dim > 3 {
            return Err(Error::invalid("grid dimension must be 1..=3"));
        }
        for k in 0..dim {
            if !(hi[k] > lo[k]) {
                return Err(Error::invalid(format!("box_hi must exceed box_lo on axis {k}")));
            }
            if shape[k] < 3 {
                return Err(Error::invalid(format!(
                    "resolution must be at least 3 nodes per axis, got {} on axis {k}",
                    shape[k]
                )));
            }
        }
        let spacing: Vec<T> = (0..dim)
            .map(|k| (hi[k] - lo[k]) / T::from_usize(shape[k] - 1))
            .collect();
        let mut strides = vec![1usize; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let num_nodes = shape.iter().product();
        Ok(Grid {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            shape: shape.to_vec(),
            spacing,
            strides,
            num_nodes,
        })
    }

    /// Unit box `[0,1]^dim` helper.
    pub fn unit_box(dim: usize, nodes_per_axis: usize) -> Result<Self> {
        Grid::new(
            &vec![T::zero(); dim],
            &vec![T::one(); dim],
            &vec![nodes_per_axis; dim],
        )
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> T {
        self.spacing.iter().cloned().fold(T::zero(), T::max)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn box_volume(&self) -> T {
        (0..self.dim())
            .map(|k| self.hi[k] - self.lo[k])
            .fold(T::one(), |a, b| a * b)
    }

    #[inline]
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    #[inline]
    pub fn multi_index(&self, node: usize, out: &mut [usize]) {
        let mut rem = node;
        for k in 0..self.dim() {
            out[k] = rem / self.strides[k];
            rem %= self.strides[k];
        }
    }

    #[inline]
    pub fn node_coords(&self, node: usize, out: &mut [T]) {
        let mut rem = node;
        for k in 0..self.dim() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            out[k] = self.lo[k] + T::from_usize(i) * self.spacing[k];
        }
    }

    pub fn coords_vec(&self, node: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.node_coords(node, &mut out);
        out
    }

    /// Trapezoid weight along one axis: h/2 at the two end nodes, h inside.
    #[inline]
    pub fn axis_weight(&self, axis: usize, index: usize) -> T {
        let h = self.spacing[axis];
        if index == 0 || index + 1 == self.shape[axis] {
            h * T::from_f64(0.5)
        } else {
            h
        }
    }

    /// Haar quadrature weight of a node (product of axis weights). Summing
    /// over all nodes reproduces the box volume exactly.
    #[inline]
    pub fn haar_weight(&self, node: usize) -> T {
        let mut rem = node;
        let mut w = T::one();
        for k in 0..self.dim() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            w *= self.axis_weight(k, i);
        }
        w
    }

    #[inline]
    pub fn is_interior(&self, node: usize) -> bool {
        let mut rem = node;
        for k in 0..self.dim() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            if i == 0 || i + 1 == self.shape[k] {
                return false;
            }
        }
        true
    }

    /// Materialized mask: true on interior (unknown) nodes, false on the
    /// Dirichlet boundary layer.
    pub fn interior_mask(&self) -> Vec<bool> {
        (0..self.num_nodes).map(|j| self.is_interior(j)).collect()
    }

    pub fn num_interior(&self) -> usize {
        self.shape.iter().map(|&n| n - 2).product()
    }

    /// Haar measure of a masked node set.
    pub fn haar_measure_of(&self, mask: &[bool]) -> T {
        debug_assert_eq!(mask.len(), self.num_nodes);
        crate::linalg::pairwise(self.num_nodes, |j| {
            if mask[j] {
                self.haar_weight(j)
            } else {
                T::zero()
            }
        })
    }

    /// Distance from a point to the box boundary (L-infinity style: smallest
    /// slab distance over all axes).
    pub fn distance_to_boundary(&self, x: &[T]) -> T {
        let mut d = T::infinity();
        for k in 0..self.dim() {
            d = d.min(x[k] - self.lo[k]).min(self.hi[k] - x[k]);
        }
        d
    }
}

/// Nodal values of a scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    pub values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        ScalarField {
            values: vec![T::zero(); grid.num_nodes()],
        }
    }

    /// Constant value on interior nodes, zero on the boundary layer.
    pub fn constant_interior(grid: &Grid<T>, value: T) -> Self {
        let values = (0..grid.num_nodes())
            .map(|j| if grid.is_interior(j) { value } else { T::zero() })
            .collect();
        ScalarField { values }
    }

    /// Sample a function of the coordinates at every node (no boundary
    /// zeroing).
    pub fn from_fn(grid: &Grid<T>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let mut x = vec![T::zero(); grid.dim()];
        let values = (0..grid.num_nodes())
            .map(|j| {
                grid.node_coords(j, &mut x);
                f(&x)
            })
            .collect();
        ScalarField { values }
    }

    /// Same as [`Self::from_fn`] but forces zeros on the boundary layer.
    pub fn from_fn_dirichlet(grid: &Grid<T>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let mut field = Self::from_fn(grid, &mut f);
        field.project_dirichlet(grid);
        field
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zero the boundary layer in place.
    pub fn project_dirichlet(&mut self, grid: &Grid<T>) {
        for j in 0..self.values.len() {
            if !grid.is_interior(j) {
                self.values[j] = T::zero();
            }
        }
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn sup_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn min_interior(&self, grid: &Grid<T>) -> T {
        let mut m = T::infinity();
        for j in 0..self.values.len() {
            if grid.is_interior(j) {
                m = m.min(self.values[j]);
            }
        }
        m
    }

    pub fn scaled(&self, factor: T) -> Self {
        ScalarField {
            values: self.values.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
