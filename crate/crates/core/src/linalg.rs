//! Pseudo-inverse with damping near singular configurations.

use nalgebra::DMatrix;

/// Singular-value threshold below which damping kicks in.
pub const DAMPING_THRESHOLD: f64 = 1e-3;
/// Damping `mu` in `sigma / (sigma^2 + mu)`.
pub const DAMPING: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub damped: bool,
    pub sigma_min: f64,
}

/// Moore-Penrose inverse via SVD. When the smallest singular value drops
/// below [`DAMPING_THRESHOLD`] every singular value is inverted as
/// `sigma / (sigma^2 + DAMPING)` instead.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> PseudoInverse {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested u"), svd.v_t.expect("requested v_t"));
    let sigma = &svd.singular_values;
    let sigma_min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let damped = sigma_min < DAMPING_THRESHOLD;
    if damped {
        log::debug!("damped pseudo-inverse: sigma_min = {sigma_min:e}");
    }
    let tol = sigma_max * 1e-14 * m.nrows().max(m.ncols()) as f64;
    let inv = sigma.map(|s| {
        if damped {
            s / (s * s + DAMPING)
        } else if s > tol {
            1.0 / s
        } else {
            0.0
        }
    });
    let matrix = vt.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
    PseudoInverse { matrix, damped, sigma_min }
}
