use crate::error::{Error, Result};

/// `L_α(u) = E[e^{ru}] = (1 − u/α)^{−α}` for a mean-one Γ(α) rate `r`.
pub fn mgf_gamma(alpha: f64, u: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if u > 0.0 || u.is_nan() {
        return Err(Error::Domain(format!("moment generating function needs u <= 0, got {u}")));
    }
    Ok((-alpha * (-u / alpha).ln_1p()).exp())
}

/// Inverse of [`mgf_gamma`] on `(0, 1]`: `α(1 − v^{−1/α})`.
pub fn mgf_gamma_inverse(alpha: f64, v: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Domain(format!("inverse needs a value in (0, 1], got {v}")));
    }
    Ok(-alpha * (-v.ln() / alpha).exp_m1())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Domain(format!("gamma shape {alpha} must be positive")));
    }
    Ok(())
}
