//! Central finite differences, used as the reference for [`Network::backward`].

use super::network::{ForwardCache, GradBlock, Gradients, Network};
use crate::error::{Error, Result};

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Estimates every parameter gradient of `net`'s loss at `(x, target)` by
/// central differences. When `frozen` is given, its dropout masks are reused
/// for every perturbed evaluation; otherwise dropout is bypassed.
pub fn finite_diff_gradients(
    net: &Network,
    x: &[f64],
    target: &[f64],
    step: f64,
    frozen: Option<&ForwardCache>,
) -> Result<Gradients> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::contract(format!(
            "finite-difference step {step} must be positive"
        )));
    }
    let loss_at = |n: &Network| -> Result<f64> {
        let y = match frozen {
            Some(cache) => n.forward_frozen(x, cache)?.0,
            None => n.predict(x)?,
        };
        n.loss_value(&y, target)
    };

    let mut work = net.clone();
    let mut blocks = Vec::new();
    for li in 0..net.layers().len() {
        let names = net.layers()[li].param_names();
        let lens: Vec<usize> = net.layers()[li]
            .params_flat()
            .iter()
            .map(Vec::len)
            .collect();
        for (bi, (&name, &len)) in names.iter().zip(&lens).enumerate() {
            let mut values = Vec::with_capacity(len);
            for i in 0..len {
                let orig = {
                    let mut ps = work.layers_mut()[li].params_mut();
                    *ps[bi].scalar_mut(i)
                };
                let set = |w: &mut Network, v: f64| {
                    let mut ps = w.layers_mut()[li].params_mut();
                    *ps[bi].scalar_mut(i) = v;
                };
                set(&mut work, orig + step);
                let plus = loss_at(&work)?;
                set(&mut work, orig - step);
                let minus = loss_at(&work)?;
                set(&mut work, orig);
                values.push((plus - minus) / (2.0 * step));
            }
            blocks.push(GradBlock {
                layer: li,
                name,
                values,
            });
        }
    }
    Ok(Gradients { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::layer::{Dense, Layer};
    use crate::nn::loss::LossKind;

    #[test]
    fn quadratic_matches_2w() {
        let w = -1.3;
        let net = Network::new(
            1,
            vec![Layer::Dense(Dense {
                weight: Matrix::from_rows(&[vec![w]]).unwrap(),
                bias: vec![0.0],
            })],
            LossKind::Mse,
        )
        .unwrap();
        let g = finite_diff_gradients(&net, &[1.0], &[0.0], 1e-5, None).unwrap();
        assert!((g.blocks[0].values[0] - 2.0 * w).abs() < 1e-8);
    }

    #[test]
    fn zero_step_is_rejected() {
        let net = Network::mini_nn(2, 3);
        assert!(matches!(
            finite_diff_gradients(&net, &[0.0, 1.0], &[1.0], 0.0, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
