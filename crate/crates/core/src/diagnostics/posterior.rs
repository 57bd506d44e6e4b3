//! Exact posterior mean for a Gaussian prior under a linear-Gaussian
//! measurement, used as the end-to-end reference.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Cholesky;
use crate::operator::LinearOperator;
use crate::prior::GaussianComponent;
use crate::Scalar;

/// `μ + ΣAᵀ(AΣAᵀ + σ_y²I)⁻¹(y − Aμ)`, solved with a Cholesky factorisation.
pub fn gaussian_posterior_mean<S: Scalar>(
    prior: &GaussianComponent<S>,
    op: &LinearOperator<S>,
    y: ArrayView1<S>,
    noise_std: S,
) -> Result<Array1<S>> {
    check_dim("posterior prior", op.input_dim(), prior.dim())?;
    check_dim("posterior measurement", op.output_dim(), y.len())?;
    if !(noise_std >= S::zero()) {
        return Err(Error::InvalidRange {
            name: "noise_std",
            detail: format!("must be non-negative, got {noise_std}"),
        });
    }
    let a = op.to_matrix();
    let sigma = prior.covariance_matrix();
    let sigma_at: Array2<S> = sigma.dot(&a.t());
    let mut system = a.dot(&sigma_at);
    let var = noise_std * noise_std;
    for i in 0..system.nrows() {
        system[[i, i]] += var;
    }
    // Symmetrise away round-off before factoring.
    let system = (&system + &system.t()) * S::lit(0.5);
    let chol = Cholesky::new(system.view()).map_err(|_| {
        Error::Singular(format!(
            "A Σ Aᵀ + σ_y² I is not positive definite (σ_y = {noise_std}, {} measurements)",
            y.len()
        ))
    })?;
    let innovation = &y - &a.dot(&prior.mean);
    let w = chol.solve(innovation.view());
    Ok(&prior.mean + &sigma_at.dot(&w))
}
