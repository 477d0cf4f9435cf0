use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, Model, NnError, Tensor};

/// Gradients smaller than this are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-4)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Layer index of the worst element.
    pub worst_layer: usize,
}

/// Loss used for checking: mean squared difference to `target`.
fn loss(
    model: &mut Model<f64>,
    x: &Tensor<f64>,
    target: &Tensor<f64>,
) -> Result<(f64, Tensor<f64>), NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = model.forward(x.clone(), Mode::BatchStats, &mut rng)?;
    if y.shape() != target.shape() {
        return Err(NnError::ShapeMismatch(alloc::format!(
            "output {:?} vs target {:?}",
            y.shape(),
            target.shape()
        )));
    }
    let n = y.len() as f64;
    let mut grad = Tensor::zeros(y.shape().to_vec());
    let mut l = 0.0;
    for ((&p, &t), g) in y.data().iter().zip(target.data()).zip(grad.data_mut()) {
        l += (p - t) * (p - t);
        *g = 2.0 * (p - t) / n;
    }
    Ok((l / n, grad))
}

fn set_param(model: &mut Model<f64>, tensor: usize, elem: usize, value: f64) -> f64 {
    let mut idx = 0;
    let mut old = 0.0;
    model.visit_params(&mut |_, v, _| {
        if idx == tensor {
            old = v[elem];
            v[elem] = value;
        }
        idx += 1;
    });
    old
}

/// Compares reverse-mode gradients of every parameter with central finite
/// differences of step `eps`. BatchNorm runs on batch statistics and dropout is off.
pub fn gradient_check(
    model: &mut Model<f64>,
    x: &Tensor<f64>,
    target: &Tensor<f64>,
    eps: f64,
) -> Result<GradCheckReport, NnError> {
    let (_, dy) = loss(model, x, target)?;
    model.zero_grad();
    model.backward(dy);
    let mut analytic: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |layer, v, g| analytic.push((layer, v.to_vec(), g.to_vec())));

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        worst_layer: 0,
    };
    for (t, (layer, values, grads)) in analytic.iter().enumerate() {
        for (e, (&v, &a)) in values.iter().zip(grads).enumerate() {
            set_param(model, t, e, v + eps);
            let (plus, _) = loss(model, x, target)?;
            set_param(model, t, e, v - eps);
            let (minus, _) = loss(model, x, target)?;
            set_param(model, t, e, v);
            let numeric = (plus - minus) / (2.0 * eps);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_layer = *layer;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Act, LayerSpec, ModelSpec};
    use alloc::vec;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn check(
        layers: Vec<LayerSpec>,
        frames: usize,
        coeffs: usize,
        out: &[usize],
    ) -> GradCheckReport {
        let spec = ModelSpec {
            name: "check".into(),
            input_frames: frames,
            input_coeffs: coeffs,
            layers,
        };
        let mut m = Model::<f64>::new(spec, 7).unwrap();
        let x = random(&[3, 1, frames, coeffs], 1);
        gradient_check(&mut m, &x, &random(out, 2), 1e-5).unwrap()
    }

    #[test]
    fn dense() {
        let r = check(
            vec![
                LayerSpec::TimeFlatten,
                LayerSpec::Dense { units: 5 },
                LayerSpec::Dense { units: 3 },
            ],
            2,
            4,
            &[3, 2, 3],
        );
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn conv_batchnorm_pool_elu() {
        let r = check(
            vec![
                LayerSpec::Conv2d {
                    kernel: 3,
                    filters: 3,
                },
                LayerSpec::BatchNorm,
                LayerSpec::Activation { act: Act::Elu },
                LayerSpec::MaxPool,
                LayerSpec::Conv2d {
                    kernel: 3,
                    filters: 2,
                },
                LayerSpec::GlobalFlatten,
                LayerSpec::Dense { units: 6 },
            ],
            6,
            5,
            &[3, 6],
        );
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn two_layer_gru_seven_steps() {
        let r = check(
            vec![
                LayerSpec::TimeFlatten,
                LayerSpec::Gru {
                    units: 4,
                    return_sequences: true,
                },
                LayerSpec::Gru {
                    units: 3,
                    return_sequences: false,
                },
                LayerSpec::Dense { units: 6 },
            ],
            7,
            3,
            &[3, 6],
        );
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }
}
