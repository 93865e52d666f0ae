//! Smooth one-dimensional building blocks: C^∞ steps, even cutoffs, and the
//! quadratic localization profiles used by the partition of unity.

fn psi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn dpsi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp() / (x * x)
    }
}

/// C^∞ step: 0 for `x <= 0`, 1 for `x >= 1`, symmetric about ½.
pub fn bump_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = psi(x);
    let b = psi(1.0 - x);
    a / (a + b)
}

pub fn bump_step_deriv(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let a = psi(x);
    let b = psi(1.0 - x);
    let da = dpsi(x);
    let db = -dpsi(1.0 - x);
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

/// Interpolation profile: 0 on `(-∞, 1/3]`, 1 on `[2/3, ∞)`.
pub fn plateau_step(x: f64) -> f64 {
    bump_step(3.0 * x - 1.0)
}

/// Even cutoff: 1 for `|r| <= 1/2`, 0 for `|r| >= 1`.
pub fn cutoff(r: f64) -> f64 {
    1.0 - bump_step(2.0 * r.abs() - 1.0)
}

pub fn cutoff_deriv(r: f64) -> f64 {
    -2.0 * r.signum() * bump_step_deriv(2.0 * r.abs() - 1.0)
}

/// Quadratic interface cutoff `(1 - r²) θ(r)`.
pub fn zeta_2ph(r: f64) -> f64 {
    (1.0 - r * r) * cutoff(r)
}

/// Half-space cutoff: `zeta_2ph(min(r, 0))`.
pub fn zeta_3j(r: f64) -> f64 {
    zeta_2ph(r.min(0.0))
}

/// Truncated identity: `r` on `|r| <= 1/2`, clamped to ±1 for `|r| >= 1`, monotone in between.
pub fn truncated_identity(r: f64) -> f64 {
    let a = r.abs();
    let b = bump_step(2.0 * a - 1.0);
    r.signum() * ((1.0 - b) * a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus() {
        assert_eq!(plateau_step(0.2), 0.0);
        assert_eq!(plateau_step(1.0 / 3.0), 0.0);
        assert_eq!(plateau_step(0.7), 1.0);
        assert!((plateau_step(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(-0.3), 1.0);
        assert_eq!(cutoff(1.0), 0.0);
        assert_eq!(zeta_3j(0.4), 1.0);
        assert!((zeta_2ph(0.25) - (1.0 - 0.0625)).abs() < 1e-15);
        assert_eq!(truncated_identity(0.2), 0.2);
        assert_eq!(truncated_identity(-3.0), -1.0);
    }

    #[test]
    fn step_derivative_matches_difference() {
        for &x in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let h = 1e-6;
            let fd = (bump_step(x + h) - bump_step(x - h)) / (2.0 * h);
            assert!((fd - bump_step_deriv(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn truncated_identity_monotone() {
        let mut prev = -1.0;
        for k in 0..=4000 {
            let r = -2.0 + k as f64 * 1e-3;
            let v = truncated_identity(r);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
