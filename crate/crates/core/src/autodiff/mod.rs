//! Exact nested differentiation.
//!
//! Input derivatives (value, gradient and the diagonal of the input Hessian)
//! are pushed forward through the networks as jets; the parameter gradient of
//! any loss built from them comes from a reverse sweep over that jet
//! computation. See [`engine`] for the batched kernel.

pub mod engine;
pub mod field;
pub mod jet;
pub mod residual;
pub mod scalar;

pub use engine::Order;
pub use field::{AnalyticField, DifferentiableField, FieldBundle, NetworkField};
pub use jet::{Jet2, SpatialJet, TaylorJet};
pub use residual::{DynOp, PointCtx, PointwiseOp};
pub use scalar::{Dual, Scalar, MAX_SEEDS};

pub use crate::loss::loss_gradient;

use crate::error::{Error, Result};

/// Value, gradient and diagonal second derivatives of every output channel.
pub fn evaluate_jet(field: &dyn DifferentiableField, point: &[f64]) -> Result<Vec<Jet2>> {
    if point.len() != field.input_dim() {
        return Err(Error::contract(format!(
            "point has {} coordinates, field expects {}",
            point.len(),
            field.input_dim()
        )));
    }
    field.jets(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Activation, InputMap, MlpSpec, ParameterVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / (b.abs() + 1e-8)
    }

    #[test]
    fn single_tanh_neuron_closed_form() {
        // u(x) = 1 * tanh(2x + 0) + 0
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Tanh).unwrap();
        let field = NetworkField::plain(spec, ParameterVector(vec![2.0, 0.0, 1.0, 0.0])).unwrap();
        let j = &evaluate_jet(&field, &[0.5]).unwrap()[0];
        let t = 1f64.tanh();
        assert!((j.value - t).abs() < 1e-15);
        assert!((j.grad[0] - 2.0 * (1.0 - t * t)).abs() < 1e-14);
        assert!((j.diag2[0] + 8.0 * t * (1.0 - t * t)).abs() < 1e-14);

        let f = |x: f64| (2.0 * x).tanh();
        let h = 1e-5;
        let fd1 = (f(0.5 + h) - f(0.5 - h)) / (2.0 * h);
        let fd2 = (f(0.5 + h) - 2.0 * f(0.5) + f(0.5 - h)) / (h * h);
        assert!(rel(j.grad[0], fd1) < 1e-8);
        assert!(rel(j.diag2[0], fd2) < 1e-4);
    }

    #[test]
    fn zero_network_has_zero_jets() {
        let spec = MlpSpec::new(vec![3, 7, 7, 2], Activation::Tanh).unwrap();
        let field = NetworkField::plain(spec.clone(), ParameterVector::zeros(spec.param_count())).unwrap();
        for j in evaluate_jet(&field, &[0.3, -1.2, 4.0]).unwrap() {
            assert_eq!(j.value, 0.0);
            assert!(j.grad.iter().chain(&j.diag2).all(|&v| v == 0.0));
        }
    }

    fn random_field(seed: u64, act: Activation) -> NetworkField {
        let spec = MlpSpec::new(vec![2, 12, 9, 1], act).unwrap();
        let mut p = init_params(&spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        for v in p.as_mut_slice() {
            *v += rng.random_range(-0.2..0.2);
        }
        NetworkField::new(spec, p, InputMap::to_unit_box(&[(0.0, 2.0), (-1.0, 1.0)])).unwrap()
    }

    #[test]
    fn mlp_jets_match_finite_differences() {
        for act in Activation::ALL {
            let field = random_field(7, act);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..10 {
                let x = [rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0)];
                let j = &evaluate_jet(&field, &x).unwrap()[0];
                for k in 0..2 {
                    let at = |h: f64| {
                        let mut y = x;
                        y[k] += h;
                        field.forward(&y).unwrap()[0]
                    };
                    let h1 = 1e-4;
                    let g = (at(h1) - at(-h1)) / (2.0 * h1);
                    assert!(rel(j.grad[k], g) < 1e-6, "{act} grad {k}: {} vs {g}", j.grad[k]);
                    let h2 = 1e-3;
                    let d2 = (at(h2) - 2.0 * at(0.0) + at(-h2)) / (h2 * h2);
                    assert!(rel(j.diag2[k], d2) < 1e-4, "{act} diag2 {k}: {} vs {d2}", j.diag2[k]);
                }
            }
        }
    }

    #[test]
    fn diag2_matches_differences_of_the_gradient() {
        let field = random_field(3, Activation::Tanh);
        let x = [0.7, 0.2];
        let j = &evaluate_jet(&field, &x).unwrap()[0];
        for k in 0..2 {
            let h = 1e-5;
            let mut a = x;
            let mut b = x;
            a[k] += h;
            b[k] -= h;
            let ga = evaluate_jet(&field, &a).unwrap()[0].grad[k];
            let gb = evaluate_jet(&field, &b).unwrap()[0].grad[k];
            assert!(rel(j.diag2[k], (ga - gb) / (2.0 * h)) < 1e-4);
        }
    }

    #[test]
    fn value_channel_is_bit_identical_to_forward() {
        let field = random_field(5, Activation::Softplus);
        for x in [[0.1, 0.9], [1.9, -0.3], [1.0, 0.0]] {
            let j = evaluate_jet(&field, &x).unwrap();
            assert_eq!(j[0].value.to_bits(), field.forward(&x).unwrap()[0].to_bits());
        }
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let field = random_field(1, Activation::Tanh);
        assert!(matches!(evaluate_jet(&field, &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn overflow_reports_the_point() {
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Softplus).unwrap();
        let field = NetworkField::plain(spec, ParameterVector(vec![1e300, 0.0, 1e300, 0.0])).unwrap();
        match evaluate_jet(&field, &[10.0]) {
            Err(Error::NonFinite { point, .. }) => assert_eq!(point, vec![10.0]),
            other => panic!("expected a numeric error, got {other:?}"),
        }
    }

    #[test]
    fn repeated_evaluation_is_pure() {
        let field = random_field(9, Activation::Sine);
        let a = evaluate_jet(&field, &[0.4, 0.4]).unwrap();
        let b = evaluate_jet(&field, &[0.4, 0.4]).unwrap();
        assert_eq!(a, b);
    }
}
