use super::homogeneous;
use super::roots::bisect;
use crate::error::{check_positive, Error, Result};

const PHI_BRACKET: (f64, f64) = (1e-9, 50.0);
const PHI_TOLERANCE: f64 = 1e-10;

/// Largest booking rate a homogeneous market with relative demand `lambda`
/// can reach, approached as the consideration rate grows without bound.
pub fn booking_rate_supremum(lambda: f64) -> f64 {
    -(-lambda).exp_m1()
}

/// Homogeneous consideration rate whose global booking rate
/// `1 - exp(-lambda (1 - e^-phi))` equals `target`.
pub fn calibrate_phi(target: f64, lambda: f64) -> Result<f64> {
    let lambda = check_positive("lambda", lambda)?;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain {
            name: "target",
            value: target,
            domain: "(0, 1)",
        });
    }
    let supremum = booking_rate_supremum(lambda);
    let residual = |phi: f64| homogeneous::booking_rate(phi, lambda) - target;
    if target >= supremum || residual(PHI_BRACKET.1) < 0.0 {
        return Err(Error::Infeasible {
            target,
            lambda,
            supremum,
        });
    }
    // Tiny targets put the root below the usual lower end; the residual is
    // negative at 0 for any positive target, so widen the bracket there.
    let lo = if residual(PHI_BRACKET.0) > 0.0 {
        0.0
    } else {
        PHI_BRACKET.0
    };
    bisect(residual, lo, PHI_BRACKET.1, PHI_TOLERANCE).ok_or(Error::Infeasible {
        target,
        lambda,
        supremum,
    })
}
