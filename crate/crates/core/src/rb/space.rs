use crate::error::{Error, Result};
use crate::fem::{affine_coefficients, AffineOperator, FinParams};
use crate::linalg::{dot, Cholesky, CsrMatrix, DenseMatrix, SkylineCholesky};
use crate::scalar::Real;

/// Relative norm below which a snapshot is treated as already in the span.
pub const DISCARD_TOL: f64 = 1e-10;

/// Relative remainder below which a residual representer adds no direction.
const RIESZ_DROP_TOL: f64 = 1e-11;

/// The inner product `(u, v)_X = ∫ ∇u·∇v + ∫_{Γ_B} u v`, factored once.
#[derive(Debug, Clone)]
pub struct XInnerProduct<T> {
    pub matrix: CsrMatrix<T>,
    factor: SkylineCholesky<T>,
}

impl<T: Real> XInnerProduct<T> {
    pub fn new(op: &AffineOperator<T>) -> Result<Self> {
        let matrix = CsrMatrix::linear_combination(&[T::one(); 3], &[&op.a1, &op.a2, &op.b0]);
        let factor = SkylineCholesky::factor(&matrix)?;
        Ok(Self { matrix, factor })
    }

    pub fn inner(&self, u: &[T], v: &[T]) -> T {
        self.matrix.bilinear(u, v)
    }

    pub fn norm(&self, u: &[T]) -> T {
        self.inner(u, u).max(T::zero()).sqrt()
    }

    /// Riesz representer `M_X^{-1} f` of a functional given by its load vector.
    pub fn riesz(&self, f: &[T]) -> Vec<T> {
        self.factor.solve(f)
    }

    /// Dual norm `sqrt(f^T M_X^{-1} f)`.
    pub fn dual_norm(&self, f: &[T]) -> T {
        dot(f, &self.riesz(f)).max(T::zero()).sqrt()
    }
}

/// Online data of a reduced-basis surrogate.
///
/// The residual dual norm is stored through the coordinates of the Riesz
/// representers `M_X^{-1} F` and `M_X^{-1} A_q ξ_n` in an X-orthonormal basis
/// of their span, so online evaluation is a Euclidean norm with no
/// cancellation between large terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RBSpace<T> {
    /// Number of affine components `Q = 3 + K`.
    pub num_components: usize,
    pub basis: Vec<Vec<T>>,
    pub snapshot_params: Vec<FinParams>,
    /// `ξ_i^T A_q ξ_j`, one `N x N` matrix per component.
    pub reduced: Vec<DenseMatrix<T>>,
    pub reduced_load: Vec<T>,
    pub reduced_output: Vec<T>,
    /// Residual coordinates: entry 0 for the load, entry `1 + n Q + q` for
    /// `A_q ξ_n`. Columns have increasing length.
    pub residual: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RBSolution<T> {
    pub gamma: Vec<T>,
    pub s: T,
    pub o: T,
    /// X-dual norm of the residual.
    pub residual_norm: T,
    pub alpha_lb: T,
    /// Error bound `residual_norm / alpha_lb` on `||u_FE - u_RB||_X`.
    pub delta: T,
}

impl<T: Real> RBSolution<T> {
    /// `||u_RB||_X`, which equals the Euclidean norm of `gamma` for an
    /// orthonormal basis.
    pub fn norm_x(&self) -> T {
        dot(&self.gamma, &self.gamma).sqrt()
    }
}

impl<T: Real> RBSpace<T> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn num_modes(&self) -> usize {
        self.num_components - 3
    }

    pub fn reduced_matrix(&self, theta: &[T]) -> DenseMatrix<T> {
        let n = self.dim();
        let mut a = DenseMatrix::zeros(n, n);
        for (q, &t) in theta.iter().enumerate() {
            if t != T::zero() {
                a.scale_add(t, &self.reduced[q]);
            }
        }
        a
    }

    /// Galerkin solution in the reduced space with its error bound.
    pub fn online_solve(&self, p: &FinParams) -> Result<RBSolution<T>> {
        if !(p.k1 > 0.0 && p.k2 > 0.0 && p.biot_mean > 0.0) {
            return Err(Error::InvalidParameter(format!("non-coercive parameters k1={}, k2={}, E={}", p.k1, p.k2, p.biot_mean)));
        }
        let theta: Vec<T> = affine_coefficients(p, self.num_modes())?;
        let gamma = if self.dim() == 0 {
            Vec::new()
        } else {
            let a = self.reduced_matrix(&theta);
            Cholesky::factor(&a)
                .map_err(|e| Error::Numerical(format!("reduced system at {p:?}: {e}")))?
                .solve(&self.reduced_load)
        };
        let s = dot(&self.reduced_load, &gamma);
        let o = dot(&self.reduced_output, &gamma);
        let residual_norm = self.residual_norm(&theta, &gamma);
        let alpha_lb = T::of(p.alpha_lb());
        Ok(RBSolution { gamma, s, o, residual_norm, alpha_lb, delta: residual_norm / alpha_lb })
    }

    /// Error bound for given reduced coefficients.
    pub fn error_bound(&self, p: &FinParams, gamma: &[T]) -> Result<T> {
        if gamma.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for dimension {}", gamma.len(), self.dim())));
        }
        let theta: Vec<T> = affine_coefficients(p, self.num_modes())?;
        Ok(self.residual_norm(&theta, gamma) / T::of(p.alpha_lb()))
    }

    fn residual_norm(&self, theta: &[T], gamma: &[T]) -> T {
        let q_count = self.num_components;
        let len = self.residual.iter().map(Vec::len).max().unwrap_or(0);
        let mut v = vec![T::zero(); len];
        for (vi, &c) in v.iter_mut().zip(&self.residual[0]) {
            *vi = c;
        }
        for (n, &g) in gamma.iter().enumerate() {
            for (q, &t) in theta.iter().enumerate() {
                let w = t * g;
                if w == T::zero() {
                    continue;
                }
                for (vi, &c) in v.iter_mut().zip(&self.residual[1 + n * q_count + q]) {
                    *vi -= w * c;
                }
            }
        }
        dot(&v, &v).sqrt()
    }

    /// Reduced solution lifted to the FE space.
    pub fn reconstruct(&self, gamma: &[T]) -> Vec<T> {
        let n = self.basis.first().map_or(0, Vec::len);
        let mut u = vec![T::zero(); n];
        for (xi, &g) in self.basis.iter().zip(gamma) {
            for (ui, &x) in u.iter_mut().zip(xi) {
                *ui += g * x;
            }
        }
        u
    }
}

/// Offline state for growing an [`RBSpace`].
pub struct RBBuilder<'a, T> {
    op: &'a AffineOperator<T>,
    x: &'a XInnerProduct<T>,
    space: RBSpace<T>,
    /// X-orthonormal basis of the residual span and its `M_X` image.
    w: Vec<Vec<T>>,
    mw: Vec<Vec<T>>,
}

impl<'a, T: Real> RBBuilder<'a, T> {
    pub fn new(op: &'a AffineOperator<T>, x: &'a XInnerProduct<T>) -> Self {
        let q = 3 + op.num_modes();
        let space = RBSpace {
            num_components: q,
            basis: Vec::new(),
            snapshot_params: Vec::new(),
            reduced: vec![DenseMatrix::zeros(0, 0); q],
            reduced_load: Vec::new(),
            reduced_output: Vec::new(),
            residual: Vec::new(),
        };
        let mut b = Self { op, x, space, w: Vec::new(), mw: Vec::new() };
        let f = op.load.clone();
        let col = b.orthogonalize_riesz(&f);
        b.space.residual.push(col);
        b
    }

    pub fn space(&self) -> &RBSpace<T> {
        &self.space
    }

    pub fn into_space(self) -> RBSpace<T> {
        self.space
    }

    /// Adds the coordinates of `M_X^{-1} f` in the residual basis, extending
    /// the basis with its orthogonal remainder.
    fn orthogonalize_riesz(&mut self, f: &[T]) -> Vec<T> {
        let mut r = self.x.riesz(f);
        let mut mr = f.to_vec();
        let original = dot(&r, &mr).max(T::zero()).sqrt();
        let mut coords = vec![T::zero(); self.w.len()];
        for _pass in 0..2 {
            for (k, (wk, mwk)) in self.w.iter().zip(&self.mw).enumerate() {
                let c = dot(mwk, &r);
                coords[k] += c;
                for ((ri, mri), (&wi, &mwi)) in r.iter_mut().zip(mr.iter_mut()).zip(wk.iter().zip(mwk)) {
                    *ri -= c * wi;
                    *mri -= c * mwi;
                }
            }
        }
        // Recompute the image so a remainder dominated by rounding cannot
        // enter the basis with an inconsistent M_X w.
        let mr = self.x.matrix.matvec(&r);
        let rest = dot(&r, &mr).max(T::zero()).sqrt();
        if rest > T::of(RIESZ_DROP_TOL) * original {
            let mut mr = mr;
            for (ri, mri) in r.iter_mut().zip(mr.iter_mut()) {
                *ri /= rest;
                *mri /= rest;
            }
            self.w.push(r);
            self.mw.push(mr);
            coords.push(rest);
        }
        coords
    }

    /// X-orthonormalizes `snapshot` against the basis and appends it.
    /// Returns `false` when the remainder is negligible and the snapshot is
    /// discarded.
    pub fn extend_basis(&mut self, snapshot: &[T], params: FinParams) -> Result<bool> {
        if snapshot.len() != self.op.dim() {
            return Err(Error::DimensionMismatch(format!("snapshot of length {} for {} nodes", snapshot.len(), self.op.dim())));
        }
        let norm0 = self.x.norm(snapshot);
        if !(norm0 > T::zero()) {
            return Ok(false);
        }
        let mut v = snapshot.to_vec();
        for _pass in 0..2 {
            for xi in &self.space.basis {
                let c = self.x.inner(xi, &v);
                for (vi, &x) in v.iter_mut().zip(xi) {
                    *vi -= c * x;
                }
            }
        }
        let rest = self.x.norm(&v);
        if !(rest > T::of(DISCARD_TOL) * norm0) {
            return Ok(false);
        }
        for vi in v.iter_mut() {
            *vi /= rest;
        }
        let comps = self.op.components();
        let a_new: Vec<Vec<T>> = comps.iter().map(|a| a.matvec(&v)).collect();
        let n = self.space.dim();
        for (q, aq) in a_new.iter().enumerate() {
            let old = &self.space.reduced[q];
            let mut m = DenseMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = old[(i, j)];
                }
                let c = dot(&self.space.basis[i], aq);
                m[(i, n)] = c;
                m[(n, i)] = c;
            }
            m[(n, n)] = dot(&v, aq);
            self.space.reduced[q] = m;
        }
        self.space.reduced_load.push(dot(&self.op.load, &v));
        self.space.reduced_output.push(dot(&self.op.output_o, &v));
        for aq in &a_new {
            let col = self.orthogonalize_riesz(aq);
            self.space.residual.push(col);
        }
        self.space.basis.push(v);
        self.space.snapshot_params.push(params);
        Ok(true)
    }

    /// Solves the full problem at `params` and extends the basis.
    pub fn add_snapshot(&mut self, params: &FinParams) -> Result<bool> {
        let u = self.op.solve_full(params)?;
        self.extend_basis(&u, params.clone())
    }
}

/// Residual dual norm of a reduced solution computed in the full space.
pub fn direct_residual_norm<T: Real>(op: &AffineOperator<T>, x: &XInnerProduct<T>, p: &FinParams, u: &[T]) -> Result<T> {
    let a = op.matrix(p)?;
    let au = a.matvec(u);
    let r: Vec<T> = op.load.iter().zip(&au).map(|(&f, &v)| f - v).collect();
    Ok(x.dual_norm(&r))
}
