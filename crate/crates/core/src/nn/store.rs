use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::Layer;
use super::train::{predict_raw, stack_features};
use super::{Model, ModelSpec, NnError};
use crate::features::{standardize, FeatureMatrix, FeatureStats};
use crate::fingerprint::Fingerprint;
use crate::label::{AcousticLabel, LabelFlags, LabelStats};

pub const WEIGHT_STORE_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub layer: u32,
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Trained weights plus everything needed to turn features into labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightStore {
    pub model: ModelSpec,
    pub model_fingerprint: Fingerprint,
    pub feature_fingerprint: Fingerprint,
    pub feature_stats: FeatureStats,
    pub target_stats: LabelStats,
    pub tensors: Vec<NamedTensor>,
}

fn tensor_shape(layer: &Layer<f32>, name: &str, len: usize) -> Vec<usize> {
    match (layer, name) {
        (Layer::Conv2d(c), "weight") => vec![c.filters, c.in_channels, c.kernel, c.kernel],
        (Layer::Gru(g), "kernel") => vec![g.input_dim, 3 * g.units],
        (Layer::Gru(g), "recurrent") => vec![g.units, 3 * g.units],
        (Layer::Dense(d), "weight") => vec![d.input_dim, d.units],
        _ => vec![len],
    }
}

impl WeightStore {
    pub fn from_model(
        model: &mut Model<f32>,
        feature_fingerprint: Fingerprint,
        feature_stats: FeatureStats,
        target_stats: LabelStats,
    ) -> Self {
        let mut raw = Vec::new();
        model.visit_state(&mut |layer, name, v| raw.push((layer, name, v.clone())));
        let tensors = raw
            .into_iter()
            .map(|(layer, name, data)| NamedTensor {
                layer: layer as u32,
                name: name.to_string(),
                shape: tensor_shape(&model.layers()[layer], name, data.len()),
                data,
            })
            .collect();
        Self {
            model_fingerprint: model.spec().fingerprint(),
            model: model.spec().clone(),
            feature_fingerprint,
            feature_stats,
            target_stats,
            tensors,
        }
    }

    /// Rebuilds the network; every tensor must match by layer, name and size.
    pub fn to_model(&self) -> Result<Model<f32>, NnError> {
        if self.model.fingerprint() != self.model_fingerprint {
            return Err(NnError::FingerprintMismatch(
                "model spec does not match its fingerprint",
            ));
        }
        let mut model = Model::<f32>::new(self.model.clone(), 0)?;
        let mut it = self.tensors.iter();
        let mut err = None;
        model.visit_state(&mut |layer, name, v| {
            if err.is_some() {
                return;
            }
            match it.next() {
                Some(t)
                    if t.layer as usize == layer && t.name == name && t.data.len() == v.len() =>
                {
                    v.copy_from_slice(&t.data);
                }
                Some(t) => {
                    err = Some(format!(
                        "expected layer {layer} {name} ({} values), found layer {} {} ({} values)",
                        v.len(),
                        t.layer,
                        t.name,
                        t.data.len()
                    ))
                }
                None => err = Some(format!("missing layer {layer} {name}")),
            }
        });
        if let Some(e) = err {
            return Err(NnError::BadWeights(e));
        }
        if it.next().is_some() {
            return Err(NnError::BadWeights("extra tensors".into()));
        }
        Ok(model)
    }
}

/// Features → labels with a loaded store. Inference only reads the weights.
#[derive(Clone, Debug)]
pub struct Estimator {
    store: WeightStore,
    model: Model<f32>,
}

impl Estimator {
    pub fn new(store: WeightStore) -> Result<Self, NnError> {
        let model = store.to_model()?;
        Ok(Self { store, model })
    }

    pub fn store(&self) -> &WeightStore {
        &self.store
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    fn prepare(&self, f: &FeatureMatrix) -> Result<FeatureMatrix, NnError> {
        if f.fingerprint() != self.store.feature_fingerprint {
            return Err(NnError::FingerprintMismatch(
                "features were computed with a different config",
            ));
        }
        standardize(f, &self.store.feature_stats).map_err(|e| NnError::ShapeMismatch(e.to_string()))
    }

    /// De-standardizes a raw network output and clamps `sti` to [0, 1] and `rt60` to ≥ 0.
    pub fn to_label(&self, raw: [f64; 6]) -> AcousticLabel {
        let mut v = self.store.target_stats.destandardize(raw);
        v[0] = v[0].max(0.0);
        v[4] = v[4].clamp(0.0, 1.0);
        AcousticLabel::from_array(v, LabelFlags::NONE)
    }

    pub fn predict(&self, f: &FeatureMatrix) -> Result<AcousticLabel, NnError> {
        let x = stack_features::<f32>(&[&self.prepare(f)?])?;
        let y = self.model.predict(x)?;
        if y.shape() != [1, 6] {
            return Err(NnError::ShapeMismatch(format!(
                "model output {:?}",
                y.shape()
            )));
        }
        Ok(self.to_label(core::array::from_fn(|k| y.data()[k] as f64)))
    }

    pub fn predict_batch(
        &self,
        fs: &[&FeatureMatrix],
        batch: usize,
    ) -> Result<Vec<AcousticLabel>, NnError> {
        let prepared = fs
            .iter()
            .map(|f| self.prepare(f))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&FeatureMatrix> = prepared.iter().collect();
        Ok(predict_raw(&self.model, &refs, batch)?
            .into_iter()
            .map(|raw| self.to_label(raw))
            .collect())
    }
}
