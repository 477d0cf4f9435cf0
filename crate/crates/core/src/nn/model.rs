use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    Act, Activation, BatchNorm, Conv2d, Dense, Dropout, GlobalFlatten, Gru, Layer, MaxPool,
    TimeFlatten,
};
use super::{Mode, NnError, Real, Tensor};
use crate::fingerprint::Fingerprint;

pub const OUTPUTS: usize = 6;
pub const DEFAULT_DROPOUT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BaselineCnn,
    Crnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BaselineCnn => "baseline_cnn",
            ModelKind::Crnn => "crnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline_cnn" | "cnn" => Some(ModelKind::BaselineCnn),
            "crnn" => Some(ModelKind::Crnn),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        kernel: usize,
        filters: usize,
    },
    BatchNorm,
    Activation {
        act: Act,
    },
    MaxPool,
    Dropout {
        p: f64,
    },
    TimeFlatten,
    GlobalFlatten,
    Gru {
        units: usize,
        return_sequences: bool,
    },
    Dense {
        units: usize,
    },
}

/// Layer list plus the `(frames, coeffs)` input it is checked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_frames: usize,
    pub input_coeffs: usize,
    pub layers: Vec<LayerSpec>,
}

/// Table-1 architectures on `(798, 32)` inputs with dropout 0.2.
pub fn build_model(kind: ModelKind) -> ModelSpec {
    ModelSpec::new(kind, 798, 32, DEFAULT_DROPOUT)
}

impl ModelSpec {
    pub fn new(kind: ModelKind, frames: usize, coeffs: usize, dropout: f64) -> Self {
        let block = |kernel, filters, act| {
            vec![
                LayerSpec::Conv2d { kernel, filters },
                LayerSpec::BatchNorm,
                LayerSpec::Activation { act },
                LayerSpec::MaxPool,
                LayerSpec::Dropout { p: dropout },
            ]
        };
        let mut layers = Vec::new();
        match kind {
            ModelKind::BaselineCnn => {
                layers.extend(block(5, 256, Act::Relu));
                layers.extend(block(5, 256, Act::Relu));
                layers.push(LayerSpec::GlobalFlatten);
                layers.push(LayerSpec::Dense { units: 64 });
                layers.push(LayerSpec::Activation { act: Act::Relu });
                layers.push(LayerSpec::Dense { units: OUTPUTS });
            }
            ModelKind::Crnn => {
                for filters in [64, 128, 128, 128] {
                    layers.extend(block(3, filters, Act::Elu));
                }
                layers.push(LayerSpec::TimeFlatten);
                layers.push(LayerSpec::Gru {
                    units: 32,
                    return_sequences: true,
                });
                layers.push(LayerSpec::Gru {
                    units: 32,
                    return_sequences: false,
                });
                for units in [128, 64] {
                    layers.push(LayerSpec::Dense { units });
                    layers.push(LayerSpec::Activation { act: Act::Elu });
                }
                layers.push(LayerSpec::Dense { units: OUTPUTS });
            }
        }
        Self {
            name: kind.name().into(),
            input_frames: frames,
            input_coeffs: coeffs,
            layers,
        }
    }

    /// Per-sample output shape of every layer, in order.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        shape_chain(&self.layers, vec![1, self.input_frames, self.input_coeffs])
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NnError> {
        Ok(self
            .shapes()?
            .pop()
            .unwrap_or_else(|| vec![1, self.input_frames, self.input_coeffs]))
    }

    /// Trainable parameters (BatchNorm running statistics excluded).
    pub fn param_count(&self) -> Result<usize, NnError> {
        let shapes = self.shapes()?;
        let mut input = vec![1, self.input_frames, self.input_coeffs];
        let mut total = 0;
        for (layer, out) in self.layers.iter().zip(&shapes) {
            total += match *layer {
                LayerSpec::Conv2d { kernel, filters } => filters * (input[0] * kernel * kernel + 1),
                LayerSpec::BatchNorm => 2 * input[0],
                LayerSpec::Gru { units, .. } => 3 * units * (input[1] + units + 1),
                LayerSpec::Dense { units } => units * (input.last().unwrap() + 1),
                _ => 0,
            };
            input = out.clone();
        }
        Ok(total)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(format!("model/1;{self:?}").as_bytes())
    }
}

fn shape_chain(layers: &[LayerSpec], input: Vec<usize>) -> Result<Vec<Vec<usize>>, NnError> {
    let bad = |i: usize, what: String| NnError::ShapeMismatch(format!("layer {i}: {what}"));
    let mut shape = input;
    let mut out = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        shape = match (layer, shape.as_slice()) {
            (LayerSpec::Conv2d { kernel, filters }, &[_, h, w]) => {
                if kernel % 2 == 0 || *filters == 0 {
                    return Err(bad(
                        i,
                        format!("conv kernel {kernel} must be odd, filters > 0"),
                    ));
                }
                vec![*filters, h, w]
            }
            (LayerSpec::MaxPool, &[c, h, w]) => {
                if h < 2 || w < 2 {
                    return Err(bad(i, format!("cannot pool {h}×{w}")));
                }
                vec![c, h / 2, w / 2]
            }
            (LayerSpec::TimeFlatten, &[c, h, w]) => vec![h, c * w],
            (LayerSpec::GlobalFlatten, &[c, _, _]) => vec![c],
            (
                LayerSpec::Gru {
                    units,
                    return_sequences,
                },
                &[t, _],
            ) => {
                if *return_sequences {
                    vec![t, *units]
                } else {
                    vec![*units]
                }
            }
            (LayerSpec::Dense { units }, s) if !s.is_empty() => {
                let mut s = s.to_vec();
                *s.last_mut().unwrap() = *units;
                s
            }
            (LayerSpec::BatchNorm | LayerSpec::Activation { .. }, s) if !s.is_empty() => s.to_vec(),
            (LayerSpec::Dropout { p }, s) => {
                if !(0.0..1.0).contains(p) {
                    return Err(bad(i, format!("dropout p {p} outside [0, 1)")));
                }
                s.to_vec()
            }
            (l, s) => return Err(bad(i, format!("{l:?} cannot take per-sample shape {s:?}"))),
        };
        if shape.contains(&0) {
            return Err(bad(i, format!("empty output shape {shape:?}")));
        }
        out.push(shape.clone());
    }
    Ok(out)
}

/// Instantiated network.
#[derive(Clone, Debug)]
pub struct Model<T> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Model<T> {
    /// Checks the shape chain, then draws initial weights from `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input = vec![1, spec.input_frames, spec.input_coeffs];
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (l, out) in spec.layers.iter().zip(&shapes) {
            layers.push(match *l {
                LayerSpec::Conv2d { kernel, filters } => {
                    Layer::Conv2d(Conv2d::new(input[0], filters, kernel, &mut rng))
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(input[0])),
                LayerSpec::Activation { act } => Layer::Activation(Activation::new(act)),
                LayerSpec::MaxPool => Layer::MaxPool(MaxPool::default()),
                LayerSpec::Dropout { p } => Layer::Dropout(Dropout::new(p)),
                LayerSpec::TimeFlatten => Layer::TimeFlatten(TimeFlatten::default()),
                LayerSpec::GlobalFlatten => Layer::GlobalFlatten(GlobalFlatten::default()),
                LayerSpec::Gru {
                    units,
                    return_sequences,
                } => Layer::Gru(Gru::new(input[1], units, return_sequences, &mut rng)),
                LayerSpec::Dense { units } => {
                    Layer::Dense(Dense::new(*input.last().unwrap(), units, &mut rng))
                }
            });
            input = out.clone();
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        match *x.shape() {
            [n, 1, _, f] if n > 0 && f == self.spec.input_coeffs => Ok(()),
            _ => Err(NnError::ShapeMismatch(format!(
                "model input must be (N, 1, frames, {}), got {:?}",
                self.spec.input_coeffs,
                x.shape()
            ))),
        }
    }

    /// Forward pass; in [`Mode::Eval`] nothing is cached and `rng` is unused.
    pub fn forward(
        &mut self,
        x: Tensor<T>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<T>, NnError> {
        if mode == Mode::Eval {
            self.layers.iter_mut().for_each(Layer::clear_cache);
            return self.predict(x);
        }
        self.check_input(&x)?;
        let mut h = x;
        for layer in &mut self.layers {
            h = layer.forward(h, mode, rng)?;
        }
        Ok(h)
    }

    /// Inference with running statistics; `(N, 1, frames, coeffs)` → `(N, 6)`.
    pub fn predict(&self, x: Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(&x)?;
        let mut h = x;
        for layer in &self.layers {
            h = layer.infer(h)?;
        }
        Ok(h)
    }

    /// Back-propagates `dy` (gradient of the loss w.r.t. the last forward output),
    /// accumulating into the parameter gradients.
    pub fn backward(&mut self, dy: Tensor<T>) {
        let mut d = dy;
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            d = layer.backward(d, i > 0);
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, _, g| g.fill(T::zero()));
    }

    /// `(value, gradient)` slices of every trainable tensor, in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(usize, &mut [T], &mut [T])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&mut |_, v, g| f(i, v, g));
        }
    }

    /// Every persistent tensor: `(layer index, name, values)`.
    pub fn visit_state(&mut self, f: &mut dyn FnMut(usize, &'static str, &mut Vec<T>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_state(&mut |name, v| f(i, name, v));
        }
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, v, _| n += v.len());
        n
    }

    pub fn snapshot(&mut self) -> Vec<Vec<T>> {
        let mut out = Vec::new();
        self.visit_state(&mut |_, _, v| out.push(v.clone()));
        out
    }

    /// Panics if `snap` came from a different architecture.
    pub fn restore(&mut self, snap: &[Vec<T>]) {
        let mut it = snap.iter();
        self.visit_state(&mut |_, _, v| {
            let s = it.next().expect("snapshot too short");
            assert_eq!(s.len(), v.len(), "snapshot tensor size");
            v.copy_from_slice(s);
        });
        assert!(it.next().is_none(), "snapshot too long");
    }

    /// Same weights in another precision.
    pub fn cast<U: Real>(&mut self) -> Model<U> {
        let mut other = Model::<U>::new(self.spec.clone(), 0).expect("spec already validated");
        let snap: Vec<Vec<U>> = self
            .snapshot()
            .into_iter()
            .map(|v| v.into_iter().map(|x| U::lit(x.as_f64())).collect())
            .collect();
        other.restore(&snap);
        other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crnn_shape_chain() {
        let spec = build_model(ModelKind::Crnn);
        let shapes = spec.shapes().unwrap();
        let tf = spec
            .layers
            .iter()
            .position(|l| *l == LayerSpec::TimeFlatten)
            .unwrap();
        assert_eq!(shapes[tf - 1], vec![128, 49, 2]);
        assert_eq!(shapes[tf], vec![49, 256]);
        assert_eq!(spec.output_shape().unwrap(), vec![6]);
    }

    #[test]
    fn parameter_counts() {
        // conv 640 + 73 856 + 147 584 + 147 584, BN 896,
        // GRU 3·32·(256+32+1) + 3·32·(32+32+1), dense 4 224 + 8 256 + 390.
        let crnn = build_model(ModelKind::Crnn);
        assert_eq!(crnn.param_count().unwrap(), 417_414);
        // conv 6 656 + 1 638 656, BN 1 024, dense 16 448 + 390.
        let cnn = build_model(ModelKind::BaselineCnn);
        assert_eq!(cnn.param_count().unwrap(), 1_663_174);
        let mut m = Model::<f32>::new(crnn, 1).unwrap();
        assert_eq!(m.param_count(), 417_414);
    }

    #[test]
    fn bad_chain_rejected() {
        let spec = ModelSpec {
            name: "bad".into(),
            input_frames: 10,
            input_coeffs: 4,
            layers: vec![
                LayerSpec::Dense { units: 3 },
                LayerSpec::Gru {
                    units: 2,
                    return_sequences: false,
                },
            ],
        };
        // Dense keeps (1, 10, 3): a GRU cannot take a 3-D per-sample shape.
        assert!(matches!(spec.shapes(), Err(NnError::ShapeMismatch(_))));
        let tiny = ModelSpec {
            name: "tiny".into(),
            input_frames: 1,
            input_coeffs: 4,
            layers: vec![LayerSpec::MaxPool],
        };
        assert!(tiny.shapes().is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let spec = ModelSpec::new(ModelKind::Crnn, 32, 16, 0.2);
        let mut a = Model::<f32>::new(spec.clone(), 9).unwrap();
        let mut b = Model::<f32>::new(spec.clone(), 9).unwrap();
        let mut c = Model::<f32>::new(spec, 10).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
        assert_ne!(a.snapshot(), c.snapshot());
    }

    #[test]
    fn spec_fingerprint_and_serde_names() {
        let a = build_model(ModelKind::Crnn);
        assert_eq!(a.fingerprint(), build_model(ModelKind::Crnn).fingerprint());
        assert_ne!(
            a.fingerprint(),
            build_model(ModelKind::BaselineCnn).fingerprint()
        );
        assert_eq!(
            ModelKind::parse("baseline_cnn"),
            Some(ModelKind::BaselineCnn)
        );
    }
}
