//! Eigenstructure of symmetric supra-Laplacians and the first-order estimate
//! of algebraic connectivity under weak inter-layer coupling.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::network::{
    assemble_supra_laplacian, symmetry_defect, DiffusionConstants, InterconnectedNetwork,
    SupraLaplacian,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    /// Eigenvalues of the full operator below `1e-9 · ‖L‖₂`.
    pub kernel_dim: usize,
    /// Orthonormal columns spanning the kernel of the intra-layer part.
    pub null_basis: DMatrix<f64>,
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    if symmetry_defect(m) > 1e-12 * scale {
        return invalid(format!("{what} is not symmetric"));
    }
    Ok(())
}

fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn kernel_tol(values: &[f64]) -> f64 {
    let norm = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if norm > 0.0 {
        1e-9 * norm
    } else {
        f64::MIN_POSITIVE
    }
}

/// Full symmetric eigendecomposition summary. Directed operators are
/// rejected.
pub fn spectrum(supra: &SupraLaplacian) -> Result<SpectralSummary> {
    check_symmetric(supra.matrix(), "operator")?;
    if supra.dim() < 2 {
        return invalid("spectrum needs at least two nodes");
    }
    let (eigenvalues, _) = sorted_eigen(supra.matrix());
    let tol = kernel_tol(&eigenvalues);
    let kernel_dim = eigenvalues.iter().filter(|v| **v < tol).count();
    let (intra_values, intra_vectors) = sorted_eigen(supra.intra_part());
    let intra_tol = kernel_tol(&intra_values);
    let k = intra_values.iter().filter(|v| **v < intra_tol).count();
    Ok(SpectralSummary {
        lambda2: eigenvalues[1],
        eigenvalues,
        kernel_dim,
        null_basis: intra_vectors.columns(0, k).into_owned(),
    })
}

/// λ₂ of `supra` by direct eigendecomposition.
pub fn algebraic_connectivity(supra: &SupraLaplacian) -> Result<f64> {
    check_symmetric(supra.matrix(), "operator")?;
    if supra.dim() < 2 {
        return invalid("algebraic connectivity needs at least two nodes");
    }
    let (v, _) = sorted_eigen(supra.matrix());
    Ok(v[1])
}

fn block_connected(m: &DMatrix<f64>, start: usize, len: usize) -> bool {
    if len <= 1 {
        return true;
    }
    let mut seen = vec![false; len];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..len {
            let linked = m[(start + i, start + j)] != 0.0 || m[(start + j, start + i)] != 0.0;
            if linked && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `Uᵀ L_I U` where `U` holds the normalized per-layer indicator vectors,
/// which span the kernel of the intra-layer part when every layer is
/// internally connected.
pub fn projected_inter_operator(supra: &SupraLaplacian) -> Result<DMatrix<f64>> {
    check_symmetric(supra.inter_part(), "inter-layer part")?;
    let index = supra.index();
    let spans: Vec<_> = index
        .layer_ids()
        .map(|id| index.layer_range(id).expect("indexed layer"))
        .collect();
    for (id, r) in index.layer_ids().zip(&spans) {
        if !block_connected(supra.intra_part(), r.start, r.len()) {
            return Err(Error::InvalidInput(format!(
                "layer {id} is not internally connected; the intra-layer kernel exceeds one vector per layer"
            )));
        }
    }
    let li = supra.inter_part();
    let m = spans.len();
    Ok(DMatrix::from_fn(m, m, |a, b| {
        let (ra, rb) = (&spans[a], &spans[b]);
        let mut s = 0.0;
        for i in ra.clone() {
            for j in rb.clone() {
                s += li[(i, j)];
            }
        }
        s / ((ra.len() * rb.len()) as f64).sqrt()
    }))
}

/// First-order estimate of λ₂ for `L_L + ε L_I`: ε times the second-smallest
/// eigenvalue of the projected inter-layer operator.
pub fn lambda2_perturbation_estimate(supra: &SupraLaplacian, epsilon: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return invalid(format!("epsilon must be >= 0, got {epsilon}"));
    }
    let projected = projected_inter_operator(supra)?;
    if projected.nrows() < 2 {
        return invalid("perturbation estimate needs at least two layers");
    }
    let (values, _) = sorted_eigen(&projected);
    Ok(epsilon * values[1])
}

/// `ε · u_αᵀ L_I u_α` for each normalized layer indicator `u_α`.
pub fn single_vector_estimates(supra: &SupraLaplacian, epsilon: f64) -> Result<Vec<f64>> {
    let projected = projected_inter_operator(supra)?;
    Ok(projected.diagonal().iter().map(|v| epsilon * v).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub lambda2_actual: f64,
    pub lambda2_estimate: f64,
    pub rel_error: f64,
}

/// Actual and estimated λ₂ of `L_L + ε L_I` over a grid of ε.
pub fn connectivity_sweep(
    network: &InterconnectedNetwork,
    constants: &DiffusionConstants,
    epsilon_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if let Some(e) = epsilon_grid.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return invalid(format!("grid values must be >= 0, got {e}"));
    }
    let base = assemble_supra_laplacian(network, constants)?;
    epsilon_grid
        .par_iter()
        .map(|&epsilon| {
            let scaled = base.scale_inter_layer(epsilon)?;
            let actual = algebraic_connectivity(&scaled)?;
            let estimate = lambda2_perturbation_estimate(&base, epsilon)?;
            let diff = (estimate - actual).abs();
            let rel_error = if actual.abs() > 1e-300 { diff / actual.abs() } else { diff };
            Ok(SweepRow {
                epsilon,
                lambda2_actual: actual,
                lambda2_estimate: estimate,
                rel_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::*;
    use nalgebra::dmatrix;

    #[test]
    fn path_graph_spectrum() {
        let w = dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 1.0; 0.0, 1.0, 0.0];
        let s = spectrum(&SupraLaplacian::from_matrix(build_laplacian(&w).unwrap()).unwrap()).unwrap();
        for (a, b) in s.eigenvalues.iter().zip([0.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.kernel_dim, 1);
        assert_eq!(s.null_basis.ncols(), 1);
    }

    #[test]
    fn complete_graph_lambda2() {
        for n in [3, 5, 8] {
            let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
            let l = SupraLaplacian::from_matrix(build_laplacian(&w).unwrap()).unwrap();
            assert!((spectrum(&l).unwrap().lambda2 - n as f64).abs() < 1e-10);
        }
    }

    fn two_layer_toy() -> SupraLaplacian {
        let a = LayerGraph::with_prefix(1, LayerKind::Agent, "a", dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let b = LayerGraph::with_prefix(2, LayerKind::Agent, "b", dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let c = InterLayerCoupling::identity(1, 2, 2).unwrap();
        let net = InterconnectedNetwork::new(vec![a, b], vec![c.clone(), c.transposed()]).unwrap();
        assemble_supra_laplacian(&net, &DiffusionConstants::uniform(&net, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn disconnected_layers_kernel() {
        let s = spectrum(&two_layer_toy().scale_inter_layer(0.0).unwrap()).unwrap();
        assert_eq!(s.kernel_dim, 2);
        assert_eq!(s.null_basis.ncols(), 2);
    }

    #[test]
    fn toy_estimate_matches_eigensolver() {
        let l = two_layer_toy();
        assert_eq!(lambda2_perturbation_estimate(&l, 0.0).unwrap(), 0.0);
        for eps in [1e-2, 5e-3, 1e-3] {
            let est = lambda2_perturbation_estimate(&l, eps).unwrap();
            let act = algebraic_connectivity(&l.scale_inter_layer(eps).unwrap()).unwrap();
            assert!((est - act).abs() / act < 0.05, "eps {eps}: {est} vs {act}");
        }
        let e1 = lambda2_perturbation_estimate(&l, 0.004).unwrap();
        let e2 = lambda2_perturbation_estimate(&l, 0.008).unwrap();
        assert_eq!(e2, 2.0 * e1);
        let per = single_vector_estimates(&l, 0.01).unwrap();
        assert_eq!(per.len(), 2);
        assert!((per[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn directed_and_disconnected_rejected() {
        let w = dmatrix![0.0, 1.0; 0.0, 0.0];
        let l = SupraLaplacian::from_matrix(build_laplacian(&w).unwrap()).unwrap();
        assert!(spectrum(&l).is_err());
        let a = LayerGraph::with_prefix(1, LayerKind::Agent, "a", DMatrix::zeros(2, 2)).unwrap();
        let b = LayerGraph::with_prefix(2, LayerKind::Agent, "b", dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let c = InterLayerCoupling::identity(1, 2, 2).unwrap();
        let net = InterconnectedNetwork::new(vec![a, b], vec![c.clone(), c.transposed()]).unwrap();
        let s = assemble_supra_laplacian(&net, &DiffusionConstants::uniform(&net, 1.0, 1.0).unwrap()).unwrap();
        assert!(lambda2_perturbation_estimate(&s, 0.01).is_err());
    }
}
