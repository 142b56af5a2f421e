use std::sync::Arc;

use super::mesh::{BoundaryLabel, Mesh, Region};
use crate::error::{Error, Result};
use crate::linalg::{dot, CsrMatrix, SkylineCholesky, SparsityPattern};
use crate::scalar::Real;

/// P1 stiffness matrix of one triangle with counter-clockwise vertices.
pub fn element_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    k
}

/// Exact boundary mass of a linear edge of length `len` weighted by a
/// linear coefficient with end values `wa`, `wb`.
pub fn weighted_edge_mass(len: f64, wa: f64, wb: f64) -> [[f64; 2]; 2] {
    let aa = len * (3.0 * wa + wb) / 12.0;
    let ab = len * (wa + wb) / 12.0;
    let bb = len * (wa + 3.0 * wb) / 12.0;
    [[aa, ab], [ab, bb]]
}

/// Parameter-separable thermal-fin operator
/// `A = k1 A1 + k2 A2 + E (B0 + sum_k y_k B_k)`.
#[derive(Debug, Clone)]
pub struct AffineOperator<T> {
    pub a1: CsrMatrix<T>,
    pub a2: CsrMatrix<T>,
    pub b0: CsrMatrix<T>,
    pub bk: Vec<CsrMatrix<T>>,
    pub load: Vec<T>,
    /// Averaging functional over the top of the post.
    pub output_o: Vec<T>,
    /// Nodal mode values the `bk` were built from (full node vectors).
    pub modes: Vec<Vec<f64>>,
    pub biot_nodes: Vec<usize>,
}

/// Physical parameters of one solve; `y[k]` multiplies mode `k` of the Biot
/// field, i.e. `y_k = Upsilon sqrt(lambda_k) Z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinParams {
    pub k1: f64,
    pub k2: f64,
    pub biot_mean: f64,
    pub y: Vec<f64>,
}

impl FinParams {
    pub fn nominal(k2: f64, biot_mean: f64) -> Self {
        Self { k1: 1.0, k2, biot_mean, y: Vec::new() }
    }

    /// Coercivity lower bound in the X-norm, valid when the Biot field stays
    /// above half its mean.
    pub fn alpha_lb(&self) -> f64 {
        self.k1.min(self.k2).min(0.5 * self.biot_mean)
    }
}

/// `[k1, k2, E, E y_1, ..., E y_K]`; missing `y` entries are zero.
pub fn affine_coefficients<T: Real>(p: &FinParams, num_modes: usize) -> Result<Vec<T>> {
    if p.y.len() > num_modes {
        return Err(Error::DimensionMismatch(format!("{} field coordinates for {num_modes} modes", p.y.len())));
    }
    let mut c = vec![T::of(p.k1), T::of(p.k2), T::of(p.biot_mean)];
    c.extend((0..num_modes).map(|k| T::of(p.biot_mean * p.y.get(k).copied().unwrap_or(0.0))));
    Ok(c)
}

pub fn assemble<T: Real>(mesh: &Mesh, modes: &[Vec<f64>], g: f64) -> Result<AffineOperator<T>> {
    let n = mesh.num_nodes();
    if let Some(bad) = modes.iter().position(|m| m.len() != n) {
        return Err(Error::InvalidConfiguration(format!(
            "mode {bad} has {} values for a mesh with {n} nodes",
            modes[bad].len()
        )));
    }
    let mut pairs = Vec::new();
    for t in &mesh.triangles {
        for a in 0..3 {
            for b in 0..3 {
                pairs.push((t[a], t[b]));
            }
        }
    }
    let pattern = Arc::new(SparsityPattern::symmetric_from_pairs(n, pairs));
    let mut a1 = CsrMatrix::zeros(pattern.clone());
    let mut a2 = CsrMatrix::zeros(pattern.clone());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let k = element_stiffness(mesh.triangle_points(t));
        let target = match mesh.regions[t] {
            Region::Post => &mut a1,
            Region::Subfin => &mut a2,
        };
        for a in 0..3 {
            for b in 0..3 {
                target.add(tri[a], tri[b], T::of(k[a][b]));
            }
        }
    }
    let mut b0 = CsrMatrix::zeros(pattern.clone());
    let mut bk: Vec<CsrMatrix<T>> = modes.iter().map(|_| CsrMatrix::zeros(pattern.clone())).collect();
    let mut load = vec![T::zero(); n];
    let mut output_o = vec![T::zero(); n];
    let top_len: f64 = mesh
        .boundary
        .iter()
        .filter(|e| is_post_top(mesh, e.nodes))
        .map(|e| mesh.edge_length(e))
        .sum();
    for e in &mesh.boundary {
        let len = mesh.edge_length(e);
        let [p, q] = e.nodes;
        if e.label.is_biot() {
            add_edge(&mut b0, p, q, weighted_edge_mass(len, 1.0, 1.0));
            for (m, phi) in bk.iter_mut().zip(modes) {
                add_edge(m, p, q, weighted_edge_mass(len, phi[p], phi[q]));
            }
        } else if e.label == BoundaryLabel::Root {
            load[p] += T::of(g * len / 2.0);
            load[q] += T::of(g * len / 2.0);
        }
        if is_post_top(mesh, e.nodes) {
            output_o[p] += T::of(len / (2.0 * top_len));
            output_o[q] += T::of(len / (2.0 * top_len));
        }
    }
    let mut biot_nodes = mesh.nodes_with_label(BoundaryLabel::BiotLeft);
    biot_nodes.extend(mesh.nodes_with_label(BoundaryLabel::BiotRight));
    biot_nodes.sort_unstable();
    Ok(AffineOperator { a1, a2, b0, bk, load, output_o, modes: modes.to_vec(), biot_nodes })
}

fn is_post_top(mesh: &Mesh, nodes: [usize; 2]) -> bool {
    let [a, b] = nodes.map(|i| mesh.nodes[i]);
    (a[1] - super::mesh::POST_HEIGHT).abs() < 1e-12 && (b[1] - super::mesh::POST_HEIGHT).abs() < 1e-12
}

fn add_edge<T: Real>(m: &mut CsrMatrix<T>, p: usize, q: usize, e: [[f64; 2]; 2]) {
    m.add(p, p, T::of(e[0][0]));
    m.add(p, q, T::of(e[0][1]));
    m.add(q, p, T::of(e[1][0]));
    m.add(q, q, T::of(e[1][1]));
}

/// Relative residual required of a full-order solve.
pub const SOLVE_TOL: f64 = 1e-10;

impl<T: Real> AffineOperator<T> {
    pub fn dim(&self) -> usize {
        self.load.len()
    }

    pub fn num_modes(&self) -> usize {
        self.bk.len()
    }

    /// All components in the order `A1, A2, B0, B_1, ..., B_K`.
    pub fn components(&self) -> Vec<&CsrMatrix<T>> {
        let mut v = vec![&self.a1, &self.a2, &self.b0];
        v.extend(self.bk.iter());
        v
    }

    /// Coefficients matching [`AffineOperator::components`].
    pub fn coefficients(&self, p: &FinParams) -> Result<Vec<T>> {
        affine_coefficients(p, self.num_modes())
    }

    /// Biot coefficient at each Γ_B node.
    pub fn biot_field(&self, p: &FinParams) -> Vec<f64> {
        self.biot_nodes
            .iter()
            .map(|&i| p.biot_mean * (1.0 + p.y.iter().zip(&self.modes).map(|(y, m)| y * m[i]).sum::<f64>()))
            .collect()
    }

    pub fn check_coercive(&self, p: &FinParams) -> Result<()> {
        if !(p.k1 > 0.0 && p.k2 > 0.0 && p.biot_mean > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "conductivities and mean Biot number must be positive (k1={}, k2={}, E={})",
                p.k1, p.k2, p.biot_mean
            )));
        }
        let min = self.biot_field(p).into_iter().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::InvalidParameter(format!("Biot field not positive (min {min:e})")));
        }
        Ok(())
    }

    pub fn matrix(&self, p: &FinParams) -> Result<CsrMatrix<T>> {
        Ok(CsrMatrix::linear_combination(&self.coefficients(p)?, &self.components()))
    }

    /// Full-order temperature for parameters `p`.
    pub fn solve_full(&self, p: &FinParams) -> Result<Vec<T>> {
        self.check_coercive(p)?;
        let a = self.matrix(p)?;
        let u = SkylineCholesky::factor(&a)?.solve(&self.load);
        let r = a.matvec(&u);
        let res: T = r.iter().zip(&self.load).map(|(x, f)| (*x - *f) * (*x - *f)).sum::<T>().sqrt();
        let fnorm = dot(&self.load, &self.load).sqrt();
        if fnorm > T::zero() && res > T::of(SOLVE_TOL) * fnorm {
            return Err(Error::Numerical(format!("full solve residual {:e} exceeds tolerance", (res / fnorm).to_f64_lossy())));
        }
        Ok(u)
    }

    /// Compliance `s = F u` and top-average temperature `o`.
    pub fn outputs(&self, u: &[T]) -> (T, T) {
        (dot(&self.load, u), dot(&self.output_o, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::generate_fin_mesh;
    use crate::linalg::Cholesky;

    fn op(r: usize) -> (Mesh, AffineOperator<f64>) {
        let m = generate_fin_mesh(r).unwrap();
        let o = assemble(&m, &[], 1.0).unwrap();
        (m, o)
    }

    #[test]
    fn unit_triangle_stiffness() {
        let k = element_stiffness([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weighted_mass_integrates_products() {
        // int_0^L (wa(1-t) + wb t) * (1-t) * t * L dt with t = s/L
        let m = weighted_edge_mass(2.0, 1.0, 3.0);
        assert!((m[0][1] - 2.0 * 4.0 / 12.0).abs() < 1e-15);
        assert!((m[0][0] + 2.0 * m[0][1] + m[1][1] - 2.0 * 2.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_kills_constants_and_mass_measures_boundary() {
        let (_, o) = op(2);
        let sum = CsrMatrix::linear_combination(&[1.0, 1.0], &[&o.a1, &o.a2]);
        assert!(sum.row_sums().iter().all(|r| r.abs() < 1e-12));
        let one = vec![1.0; o.dim()];
        assert!((o.b0.bilinear(&one, &one) - 9.0).abs() < 1e-12);
        assert!((o.load.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((o.output_o.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for m in o.components() {
            assert_eq!(m.max_asymmetry(), 0.0);
        }
    }

    #[test]
    fn sparse_solve_matches_dense_oracle() {
        let (m, o) = op(1);
        assert!(m.num_nodes() <= 80);
        let p = FinParams::nominal(0.7, 0.3);
        let u = o.solve_full(&p).unwrap();
        let dense = Cholesky::factor(&o.matrix(&p).unwrap().to_dense()).unwrap().solve(&o.load);
        for (a, b) in u.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn linearity_and_compliance() {
        let m = generate_fin_mesh(2).unwrap();
        let o1: AffineOperator<f64> = assemble(&m, &[], 1.0).unwrap();
        let o2: AffineOperator<f64> = assemble(&m, &[], 2.0).unwrap();
        let o0: AffineOperator<f64> = assemble(&m, &[], 0.0).unwrap();
        let p = FinParams::nominal(0.4, 0.05);
        let u1 = o1.solve_full(&p).unwrap();
        let u2 = o2.solve_full(&p).unwrap();
        let (s1, _) = o1.outputs(&u1);
        let (s2, _) = o2.outputs(&u2);
        assert!(s1 > 0.0);
        assert!((s2 - 4.0 * s1).abs() < 1e-10 * s2);
        let a = o1.matrix(&p).unwrap();
        assert!((a.bilinear(&u1, &u1) - s1).abs() < 1e-10 * s1);
        let u0 = o0.solve_full(&p).unwrap();
        assert!(u0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn non_coercive_parameters_rejected() {
        let (_, o) = op(1);
        assert!(matches!(o.solve_full(&FinParams::nominal(-1.0, 0.1)), Err(Error::InvalidParameter(_))));
        assert!(matches!(o.solve_full(&FinParams::nominal(1.0, 0.0)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn mode_length_mismatch() {
        let m = generate_fin_mesh(1).unwrap();
        assert!(matches!(assemble::<f64>(&m, &[vec![0.0; 3]], 1.0), Err(Error::InvalidConfiguration(_))));
    }
}
