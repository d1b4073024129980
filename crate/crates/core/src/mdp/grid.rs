use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest grid dimension supported by the fixed-size interpolation stencil.
pub const MAX_DIMS: usize = 4;
const MAX_CORNERS: usize = 1 << MAX_DIMS;

/// Rectilinear grid whose knots follow a cubic scale: dense near the origin,
/// sparse towards the limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpGrid {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    len: usize,
}

/// Knots `sign(u)·|u|³·limit` for `n` values of `u` evenly spaced in [-1, 1].
pub fn cubic_knots(limit: f64, n: usize) -> Result<Vec<f64>> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidGrid(format!("knot count must be odd and at least 3, got {n}")));
    }
    if !(limit > 0.0 && limit.is_finite()) {
        return Err(Error::InvalidGrid(format!("axis limit must be positive, got {limit}")));
    }
    let half = (n / 2) as f64;
    Ok((0..n)
        .map(|i| {
            let u = (i as f64 - half) / half;
            u * u * u * limit
        })
        .collect())
}

pub fn build_grid(limits: &[f64], knots_per_axis: &[usize]) -> Result<InterpGrid> {
    if limits.len() != knots_per_axis.len() {
        return Err(Error::InvalidGrid("one knot count per axis limit is required".into()));
    }
    let axes = limits
        .iter()
        .zip(knots_per_axis)
        .map(|(&l, &n)| cubic_knots(l, n))
        .collect::<Result<Vec<_>>>()?;
    InterpGrid::from_axes(axes)
}

/// Corner indices and multilinear weights of the cell enclosing a query.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    idx: [usize; MAX_CORNERS],
    w: [f64; MAX_CORNERS],
    len: usize,
}

impl Stencil {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len].iter().copied().zip(self.w[..self.len].iter().copied())
    }
}

impl InterpGrid {
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIMS {
            return Err(Error::InvalidGrid(format!(
                "grid must have between 1 and {MAX_DIMS} axes, got {}",
                axes.len()
            )));
        }
        for axis in &axes {
            if axis.len() < 2 || axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidGrid("knots must be strictly increasing".into()));
            }
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].len();
        }
        let len = strides[0] * axes[0].len();
        Ok(Self { axes, strides, len })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis(&self, d: usize) -> &[f64] {
        &self.axes[d]
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn limit(&self, d: usize) -> f64 {
        *self.axes[d].last().unwrap()
    }

    /// Coordinates of grid point `i` (row-major, last axis fastest).
    pub fn point(&self, mut i: usize, out: &mut [f64]) {
        for d in 0..self.dims() {
            let k = i / self.strides[d];
            i %= self.strides[d];
            out[d] = self.axes[d][k];
        }
    }

    pub fn point_vec(&self, i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dims()];
        self.point(i, &mut p);
        p
    }

    pub fn index_of(&self, knot_indices: &[usize]) -> usize {
        knot_indices.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    /// Lower knot index and fractional offset of `x` along axis `d`,
    /// clamping `x` into the axis range.
    pub fn locate(&self, d: usize, x: f64) -> (usize, f64) {
        locate(&self.axes[d], x)
    }

    pub fn stencil(&self, query: &[f64]) -> Stencil {
        debug_assert_eq!(query.len(), self.dims());
        let mut st = Stencil {
            idx: [0; MAX_CORNERS],
            w: [0.0; MAX_CORNERS],
            len: 1,
        };
        st.w[0] = 1.0;
        for (d, &x) in query.iter().enumerate() {
            let (lo, t) = self.locate(d, x);
            let stride = self.strides[d];
            let n = st.len;
            for c in 0..n {
                let (base, w) = (st.idx[c], st.w[c]);
                st.idx[c] = base + lo * stride;
                st.w[c] = w * (1.0 - t);
                st.idx[c + n] = base + (lo + 1) * stride;
                st.w[c + n] = w * t;
            }
            st.len = 2 * n;
        }
        st
    }

    /// Multilinear interpolation of a table of grid-point values.
    pub fn interpolate(&self, table: &[f64], query: &[f64]) -> f64 {
        self.stencil(query).iter().map(|(i, w)| w * table[i]).sum()
    }
}

pub(crate) fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if !(x > axis[0]) {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let hi = axis.partition_point(|&k| k <= x);
    let lo = hi - 1;
    (lo, (x - axis[lo]) / (axis[hi] - axis[lo]))
}
