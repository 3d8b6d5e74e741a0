//! Distinguished tensors on the 1-jet space and their transformation law:
//! one Jacobian factor per index, with the paired jet index kinds carrying
//! the combined spatial-times-time factor.

use crate::expr::Expr;

use super::transform::CoordinateChange;
use super::{GeometryError, JetPoint, TemporalMetric};

/// Kind of a d-tensor index, fixing its transformation factor:
/// `SpatialUp -> ∂x̃/∂x`, `SpatialDown -> ∂x/∂x̃`, `TimeUp -> dt̃/dt`,
/// `TimeDown -> dt/dt̃`, `JetUp -> (∂x̃/∂x)(dt/dt̃)`,
/// `JetDown -> (∂x/∂x̃)(dt̃/dt)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexKind {
    SpatialUp,
    SpatialDown,
    TimeUp,
    TimeDown,
    JetUp,
    JetDown,
}

impl IndexKind {
    fn extent(self, n: usize) -> usize {
        match self {
            IndexKind::TimeUp | IndexKind::TimeDown => 1,
            _ => n,
        }
    }
}

/// A d-tensor field: a signature of index kinds and a row-major component
/// array of expressions over `(t, x, y)`. Spatial and jet axes have extent
/// `n`, time axes extent 1.
#[derive(Clone, Debug)]
pub struct DTensor {
    pub signature: Vec<IndexKind>,
    pub n: usize,
    dims: Vec<usize>,
    components: Vec<Expr>,
}

impl DTensor {
    pub fn new(
        signature: Vec<IndexKind>,
        n: usize,
        components: Vec<Expr>,
    ) -> Result<DTensor, GeometryError> {
        let dims: Vec<usize> = signature.iter().map(|k| k.extent(n)).collect();
        let len: usize = dims.iter().product();
        if components.len() != len {
            return Err(GeometryError::Dimension(format!(
                "tensor of signature {signature:?} over n={n} needs {len} components, got {}",
                components.len()
            )));
        }
        Ok(DTensor { signature, n, dims, components })
    }

    pub fn rank(&self) -> usize {
        self.signature.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn component(&self, idx: &[usize]) -> &Expr {
        &self.components[self.flat_index(idx)]
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (i, d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            flat = flat * d + i;
        }
        flat
    }

    /// All multi-indices of the component array, row-major.
    pub fn indices(&self) -> MultiIndexIter {
        MultiIndexIter::new(self.dims.clone())
    }

    /// Numeric components of the tensor in the tilde chart at
    /// `transform_jetpoint(p)`, by contracting one factor per index.
    pub fn transform_at(
        &self,
        change: &CoordinateChange,
        p: &JetPoint,
    ) -> Result<Vec<f64>, GeometryError> {
        let jac = change.spatial_jacobian_at(&p.x)?; // ∂x̃^i/∂x^j
        let jac_inv = super::transform::invert_matrix(&jac)?; // ∂x^i/∂x̃^j
        let s = change.time_derivative_at(p.t)?; // dt̃/dt
        if s == 0.0 {
            return Err(GeometryError::SingularJacobian);
        }

        let original: Vec<f64> = self
            .components
            .iter()
            .map(|e| e.eval(p))
            .collect::<Result<_, _>>()?;

        let mut out = vec![0.0; original.len()];
        for (o_flat, out_idx) in MultiIndexIter::new(self.dims.clone()).enumerate() {
            let mut acc = 0.0;
            for (i_flat, in_idx) in MultiIndexIter::new(self.dims.clone()).enumerate() {
                let mut factor = 1.0;
                for (axis, kind) in self.signature.iter().enumerate() {
                    let a = out_idx[axis];
                    let b = in_idx[axis];
                    factor *= match kind {
                        IndexKind::SpatialUp => jac[a][b],
                        IndexKind::SpatialDown => jac_inv[b][a],
                        IndexKind::TimeUp => s,
                        IndexKind::TimeDown => 1.0 / s,
                        IndexKind::JetUp => jac[a][b] / s,
                        IndexKind::JetDown => jac_inv[b][a] * s,
                    };
                    if factor == 0.0 {
                        break;
                    }
                }
                acc += factor * original[i_flat];
            }
            out[o_flat] = acc;
        }
        Ok(out)
    }
}

/// Row-major odometer over a multi-dimensional index space.
pub struct MultiIndexIter {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl MultiIndexIter {
    pub fn new(dims: Vec<usize>) -> MultiIndexIter {
        let next = if dims.iter().any(|&d| d == 0) {
            None
        } else {
            Some(vec![0; dims.len()])
        };
        MultiIndexIter { dims, next }
    }
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        let mut bumped = current.clone();
        let mut axis = self.dims.len();
        loop {
            if axis == 0 {
                self.next = None;
                break;
            }
            axis -= 1;
            bumped[axis] += 1;
            if bumped[axis] < self.dims[axis] {
                self.next = Some(bumped);
                break;
            }
            bumped[axis] = 0;
        }
        Some(current)
    }
}

/// Canonical Liouville d-tensor field `C^(i)_(1) = y^i`, signature `[JetUp]`.
pub fn make_liouville(n: usize) -> DTensor {
    let components = (1..=n).map(Expr::velocity).collect();
    DTensor::new(vec![IndexKind::JetUp], n, components).expect("liouville shape")
}

/// h-normalization d-tensor field `J^(i)_(1)1j = h11 δ^i_j`, signature
/// `[JetUp, TimeDown, SpatialDown]`.
pub fn make_normalization(h: &TemporalMetric, n: usize) -> DTensor {
    let mut components = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            components.push(if i == j { h.h11.clone() } else { Expr::zero() });
        }
    }
    DTensor::new(
        vec![IndexKind::JetUp, IndexKind::TimeDown, IndexKind::SpatialDown],
        n,
        components,
    )
    .expect("normalization shape")
}
