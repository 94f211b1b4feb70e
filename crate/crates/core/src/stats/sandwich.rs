use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::MomentMatrix;

/// `Ω̂ = (ĜᵀV̂⁻¹Ĝ)⁻¹` with `V̂ = n⁻¹ Σ g_i g_iᵀ` and `jac` the `p × q` mean
/// Jacobian `Ĝ` (row-major).
pub fn sandwich_omega(m: &MomentMatrix, jac: &[f64], q: usize) -> Result<Matrix> {
    let p = m.p();
    if jac.len() != p * q || q == 0 {
        return Err(Error::Input(format!("Jacobian must be {p}x{q}, got {} entries", jac.len())));
    }
    let v = Matrix::new(p, m.second_moment())?;
    let chol = v.cholesky().map_err(|_| Error::Rank("moment second-moment matrix is singular".into()))?;
    // GᵀV⁻¹G column by column.
    let mut info = vec![0.0; q * q];
    let cols: Vec<Vec<f64>> = (0..q).map(|j| (0..p).map(|i| jac[i * q + j]).collect()).collect();
    let solved: Vec<Vec<f64>> = cols.iter().map(|c| chol.solve(c)).collect();
    for a in 0..q {
        for b in 0..q {
            info[a * q + b] = cols[a].iter().zip(&solved[b]).map(|(x, y)| x * y).sum();
        }
    }
    let info = Matrix::new(q, info)?;
    let chol = info.cholesky().map_err(|_| Error::Rank("GᵀV⁻¹G is singular".into()))?;
    Ok(chol.inverse())
}
