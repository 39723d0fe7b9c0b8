use super::model::{AcousticNet, NetGrads};
use crate::error::{Error, Result};

/// Fails with the first non-finite component, tagged with `param`.
pub fn check_finite(param: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for (index, value) in values.into_iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteGradient {
                param: param.to_string(),
                index,
                value,
            });
        }
    }
    Ok(())
}

/// `p <- p - lr * g` on a flat parameter vector. Nothing is written if any
/// gradient component is non-finite.
pub fn sgd_step_slice(param: &str, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient length",
            expected: params.len(),
            got: grads.len(),
        });
    }
    check_finite(param, grads.iter().copied())?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// Network SGD update; validates every gradient before touching the net.
pub fn sgd_step(net: &mut AcousticNet, grads: &NetGrads, lr: f64) -> Result<()> {
    if net.config() != grads.config() {
        return Err(Error::InvalidArgument("gradient shape does not match network".into()));
    }
    let mut bad = None;
    let mut index = 0;
    grads.for_each_param(|_, g| {
        if bad.is_none() && !g.is_finite() {
            bad = Some((index, g));
        }
        index += 1;
    });
    if let Some((index, value)) = bad {
        return Err(Error::NonFiniteGradient {
            param: "network".into(),
            index,
            value,
        });
    }
    net.add_scaled(grads, -lr);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_update_arithmetic() {
        let mut p = [1.0];
        sgd_step_slice("r", &mut p, &[0.5], 0.1).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
        sgd_step_slice("r", &mut p, &[123.0], 0.0).unwrap();
        assert_eq!(p[0], 0.95 - 0.0 * 123.0);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = [1.0, 2.0];
        let err = sgd_step_slice("mu", &mut p, &[0.0, f64::NAN], 0.1).unwrap_err();
        match err {
            Error::NonFiniteGradient { param, index, .. } => {
                assert_eq!(param, "mu");
                assert_eq!(index, 1);
            }
            e => panic!("{e}"),
        }
        assert_eq!(p, [1.0, 2.0]);
    }

    #[test]
    fn convex_toy_decreases_monotonically() {
        // f(p) = sum (p_i - c_i)^2 / 2
        let c = [3.0, -1.0, 0.5];
        let mut p = [0.0; 3];
        let loss = |p: &[f64]| p.iter().zip(&c).map(|(a, b)| (a - b).powi(2) / 2.0).sum::<f64>();
        let mut prev = loss(&p);
        for _ in 0..10 {
            let g: Vec<f64> = p.iter().zip(&c).map(|(a, b)| a - b).collect();
            sgd_step_slice("p", &mut p, &g, 0.1).unwrap();
            let l = loss(&p);
            assert!(l < prev);
            prev = l;
        }
    }
}
