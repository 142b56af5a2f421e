//! Karhunen-Loève expansion of the Biot field on the cooled boundary.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::{BoundaryLabel, Mesh};
use crate::linalg::{symmetric_eigen, DenseMatrix};
use crate::rng::RandomStream;

/// Redraws allowed per realization before giving up.
pub const MAX_ATTEMPTS: u64 = 64;

/// Gaussian covariance `exp(-|x-y|^2 / delta^2) / |Γ_B|` within one boundary
/// component, zero across components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceKernel {
    pub delta: f64,
    pub normalization: f64,
}

impl CovarianceKernel {
    pub fn eval(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
        (-d2 / (self.delta * self.delta)).exp() * self.normalization
    }
}

#[derive(Debug, Clone)]
pub struct KLBasis {
    pub kernel: CovarianceKernel,
    /// Descending, nonnegative, summing to one.
    pub eigenvalues: Vec<f64>,
    /// Nodal mode values on the full mesh (zero away from Γ_B).
    pub modes: Vec<Vec<f64>>,
    /// Mesh nodes on Γ_B, sorted.
    pub biot_nodes: Vec<usize>,
    /// Trapezoid weights of the mesh Γ_B nodes, aligned with `biot_nodes`.
    pub weights: Vec<f64>,
    /// Factor applied to the paired discrete eigenvalues to reach unit trace.
    pub trace_renormalization: f64,
}

struct Quadrature {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// Quadrature index of each mesh node on the component.
    node_index: HashMap<usize, usize>,
}

/// Composite trapezoid rule on the edges with `label`, each edge split into
/// `sub` equal pieces. Mesh nodes are quadrature points.
fn component_quadrature(mesh: &Mesh, label: BoundaryLabel, sub: usize) -> Quadrature {
    let mut q = Quadrature { points: Vec::new(), weights: Vec::new(), node_index: HashMap::new() };
    let node_point = |q: &mut Quadrature, n: usize| -> usize {
        *q.node_index.entry(n).or_insert_with(|| {
            q.points.push(mesh.nodes[n]);
            q.weights.push(0.0);
            q.points.len() - 1
        })
    };
    let mut edges: Vec<_> = mesh.boundary.iter().filter(|e| e.label == label).collect();
    edges.sort_by_key(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])));
    for e in edges {
        let [a, b] = e.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let piece = mesh.edge_length(e) / sub as f64;
        let mut ids = vec![node_point(&mut q, a)];
        for s in 1..sub {
            let t = s as f64 / sub as f64;
            q.points.push([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
            q.weights.push(0.0);
            ids.push(q.points.len() - 1);
        }
        ids.push(node_point(&mut q, b));
        for w in ids.windows(2) {
            q.weights[w[0]] += 0.5 * piece;
            q.weights[w[1]] += 0.5 * piece;
        }
    }
    q
}

/// Nyström discretization of the kernel on the right Γ_B component,
/// extended to the left component by mirror symmetry.
///
/// `quadrature_refinement` subdivides each boundary edge for the eigenproblem;
/// modes are reported at mesh nodes.
pub fn build_kl(mesh: &Mesh, delta: f64, quadrature_refinement: usize) -> Result<KLBasis> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("correlation length {delta} must be positive")));
    }
    if quadrature_refinement == 0 {
        return Err(Error::InvalidParameter("quadrature refinement must be at least 1".into()));
    }
    let measure = mesh.boundary_measure(BoundaryLabel::is_biot);
    if !(measure > 0.0) {
        return Err(Error::InvalidConfiguration("mesh has no Biot boundary".into()));
    }
    let kernel = CovarianceKernel { delta, normalization: 1.0 / measure };
    let quad = component_quadrature(mesh, BoundaryLabel::BiotRight, quadrature_refinement);
    let n = quad.points.len();
    let sw: Vec<f64> = quad.weights.iter().map(|w| w.sqrt()).collect();
    let mut s = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = sw[i] * kernel.eval(quad.points[i], quad.points[j]) * sw[j];
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let eig = symmetric_eigen(&s)?;

    let mirror = mesh.mirror_map()?;
    let right = mesh.nodes_with_label(BoundaryLabel::BiotRight);
    let mut biot_nodes = mesh.nodes_with_label(BoundaryLabel::BiotLeft);
    biot_nodes.extend(&right);
    biot_nodes.sort_unstable();

    // Both components carry one copy of each mode, so the paired spectrum is
    // the component spectrum counted twice.
    let paired: Vec<f64> = eig.values.iter().map(|&l| 2.0 * l.max(0.0)).collect();
    let total: f64 = paired.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("covariance spectrum is identically zero".into()));
    }
    let trace_renormalization = 1.0 / total;
    let eigenvalues: Vec<f64> = paired.iter().map(|l| l * trace_renormalization).collect();

    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut modes = Vec::with_capacity(n);
    for k in 0..n {
        let v = eig.vectors.column(k);
        let lead = (0..n).fold(0, |best, i| if v[i].abs() > v[best].abs() + 1e-12 { i } else { best });
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        let mut phi = vec![0.0; mesh.num_nodes()];
        for &node in &right {
            let qi = quad.node_index[&node];
            let val = sign * scale * v[qi] / sw[qi];
            phi[node] = val;
            phi[mirror[node]] = val;
        }
        modes.push(phi);
    }
    let weights = nodal_weights(mesh, &biot_nodes);
    Ok(KLBasis { kernel, eigenvalues, modes, biot_nodes, weights, trace_renormalization })
}

/// Trapezoid weights of the Γ_B mesh nodes.
fn nodal_weights(mesh: &Mesh, nodes: &[usize]) -> Vec<f64> {
    let pos: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut w = vec![0.0; nodes.len()];
    for e in mesh.boundary.iter().filter(|e| e.label.is_biot()) {
        let half = 0.5 * mesh.edge_length(e);
        for n in e.nodes {
            w[pos[&n]] += half;
        }
    }
    w
}

/// Smallest `K` whose tail `sum_{k>K} sqrt(lambda_k)` is at most `tol`
/// times the full sum.
pub fn truncate(eigenvalues: &[f64], tol: f64) -> Result<usize> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("truncation tolerance {tol} outside (0, 1)")));
    }
    let roots: Vec<f64> = eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let total: f64 = roots.iter().sum();
    let mut tail = total;
    for (k, r) in roots.iter().enumerate() {
        tail -= r;
        if tail <= tol * total {
            return Ok(k + 1);
        }
    }
    Ok(roots.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiotRealization {
    pub z: Vec<f64>,
    /// Field values aligned with `KLBasis::biot_nodes`.
    pub field: Vec<f64>,
    pub rejections: u64,
}

impl KLBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Mode coefficients `y_k = upsilon sqrt(lambda_k) z_k`.
    pub fn field_coordinates(&self, z: &[f64], upsilon: f64) -> Vec<f64> {
        z.iter().zip(&self.eigenvalues).map(|(zk, l)| upsilon * l.max(0.0).sqrt() * zk).collect()
    }

    /// `Ē (1 + Σ y_k Φ_k)` at each Γ_B node.
    pub fn field(&self, y: &[f64], biot_mean: f64) -> Vec<f64> {
        self.biot_nodes
            .iter()
            .map(|&n| biot_mean * (1.0 + y.iter().zip(&self.modes).map(|(yk, m)| yk * m[n]).sum::<f64>()))
            .collect()
    }

    /// Discrete L² Gram matrix of the first `k` modes.
    pub fn gram(&self, k: usize) -> DenseMatrix<f64> {
        let mut g = DenseMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                g[(a, b)] = self
                    .biot_nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(&n, w)| w * self.modes[a][n] * self.modes[b][n])
                    .sum();
            }
        }
        g
    }

    /// First `k` modes as full nodal vectors.
    pub fn truncated_modes(&self, k: usize) -> Vec<Vec<f64>> {
        self.modes[..k.min(self.len())].to_vec()
    }

    /// Draws `z ~ U(-√3, √3)^K` on `stream` until the field stays above
    /// `Ē/2`; attempt `a` uses counters `a K .. (a+1) K`.
    pub fn sample_biot(&self, k: usize, biot_mean: f64, upsilon: f64, stream: &RandomStream) -> Result<BiotRealization> {
        if upsilon < 0.0 {
            return Err(Error::InvalidParameter(format!("field amplitude {upsilon} is negative")));
        }
        if k > self.len() {
            return Err(Error::InvalidParameter(format!("K = {k} exceeds {} available modes", self.len())));
        }
        for attempt in 0..MAX_ATTEMPTS {
            let z: Vec<f64> = (0..k as u64)
                .map(|j| stream.at(attempt * k as u64 + j).next_uniform_pm_sqrt3())
                .collect();
            let y = self.field_coordinates(&z, upsilon);
            let field = self.field(&y, biot_mean);
            if field.iter().all(|&b| b >= 0.5 * biot_mean) {
                return Ok(BiotRealization { z, field, rejections: attempt });
            }
        }
        Err(Error::InvalidConfiguration(format!(
            "Biot field fell below half its mean in {MAX_ATTEMPTS} consecutive draws"
        )))
    }

    /// Fraction of first draws rejected over streams `0..window`; more than
    /// half is a configuration error.
    pub fn check_rejection_rate(&self, k: usize, upsilon: f64, seed: u64, window: u64) -> Result<f64> {
        let mut rejected = 0u64;
        for m in 0..window {
            let s = RandomStream::new(seed, m);
            let z: Vec<f64> = (0..k as u64).map(|j| s.at(j).next_uniform_pm_sqrt3()).collect();
            let field = self.field(&self.field_coordinates(&z, upsilon), 1.0);
            if field.iter().any(|&b| b < 0.5) {
                rejected += 1;
            }
        }
        let rate = rejected as f64 / window.max(1) as f64;
        if rate > 0.5 {
            return Err(Error::InvalidConfiguration(format!(
                "Biot field rejection rate {rate:.3} exceeds 0.5; reduce the amplitude"
            )));
        }
        Ok(rate)
    }

    pub fn write_spectrum<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "k,lambda_k")?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{},{l:e}", k + 1)?;
        }
        Ok(())
    }

    /// Node table of the first `k` modes: `node,x,y,phi_1,...`.
    pub fn write_modes<W: Write>(&self, out: &mut W, mesh: &Mesh, k: usize) -> Result<()> {
        let k = k.min(self.len());
        let mut header = vec!["node".to_string(), "x".into(), "y".into()];
        header.extend((1..=k).map(|j| format!("phi_{j}")));
        writeln!(out, "{}", header.join(","))?;
        for &n in &self.biot_nodes {
            let mut row = vec![n.to_string(), mesh.nodes[n][0].to_string(), mesh.nodes[n][1].to_string()];
            row.extend((0..k).map(|j| format!("{:e}", self.modes[j][n])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
