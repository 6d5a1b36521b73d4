use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ModelConfig, Variant};
use crate::rng::{self, ChaCha8Rng};
use crate::world::OBSERVATION_DIM;

pub const NUM_SLOTS: usize = 7;
pub const ENTITY_DIM: usize = 4;

/// Affine layer, `out = x · wᵀ + b` with `w` shaped `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn init(out: usize, inp: usize, range: f64, rng: &mut ChaCha8Rng) -> Dense {
        Dense {
            w: Array2::from_shape_simple_fn((out, inp), || rng::uniform(rng, -range, range)),
            b: Array1::from_shape_simple_fn(out, || rng::uniform(rng, -range, range)),
        }
    }
}

/// Token table `[vocab, hidden]` plus a bias, followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Array2<f64>,
    pub b: Array1<f64>,
}

/// One direction of a gated recurrent unit. Rows of the stacked matrices are
/// the reset, update and candidate blocks, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub b_input: Array1<f64>,
    pub b_hidden: Array1<f64>,
}

impl Gru {
    fn init(hidden: usize, range: f64, rng: &mut ChaCha8Rng) -> Gru {
        let mut u = || rng::uniform(rng, -range, range);
        Gru {
            w_input: Array2::from_shape_simple_fn((3 * hidden, hidden), &mut u),
            w_hidden: Array2::from_shape_simple_fn((3 * hidden, hidden), &mut u),
            b_input: Array1::from_shape_simple_fn(3 * hidden, &mut u),
            b_hidden: Array1::from_shape_simple_fn(3 * hidden, &mut u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub variant: Variant,
    pub hidden: usize,
    pub vocab_size: usize,
    pub context: Dense,
    pub relation: Option<Dense>,
    pub embedding: Option<Embedding>,
    pub gru_forward: Option<Gru>,
    pub gru_backward: Option<Gru>,
    pub classifier: Dense,
}

impl Parameters {
    pub fn init(config: &ModelConfig, vocab_size: usize) -> Parameters {
        let mut rng = rng::seeded(rng::derive_seed(config.seed, 0x1a17));
        let h = config.hidden;
        let r = config.init_range;
        let v = config.variant;
        let relation = v
            .uses_relations()
            .then(|| Dense::init(h, 2 * ENTITY_DIM, r, &mut rng));
        let ctx_in = OBSERVATION_DIM + if v.uses_relations() { h } else { 0 };
        let context = Dense::init(h, ctx_in, r, &mut rng);
        let (embedding, gru_forward, gru_backward) = if v.uses_dialogue() {
            let emb = Dense::init(vocab_size, h, r, &mut rng);
            let emb = Embedding {
                table: emb.w,
                b: Array1::from_shape_simple_fn(h, || rng::uniform(&mut rng, -r, r)),
            };
            (
                Some(emb),
                Some(Gru::init(h, r, &mut rng)),
                Some(Gru::init(h, r, &mut rng)),
            )
        } else {
            (None, None, None)
        };
        let cls_in = h + if v.uses_dialogue() { 2 * h } else { 0 };
        let classifier = Dense::init(NUM_SLOTS, cls_in, r, &mut rng);
        Parameters {
            variant: v,
            hidden: h,
            vocab_size,
            context,
            relation,
            embedding,
            gru_forward,
            gru_backward,
            classifier,
        }
    }

    pub fn zeros_like(&self) -> Parameters {
        let mut z = self.clone();
        for (_, s) in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    /// Every tensor as `(name, shape, data)` in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn push2<'a>(
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
            name: &str,
            a: &'a Array2<f64>,
        ) {
            out.push((
                name.to_string(),
                a.shape().to_vec(),
                a.as_slice().expect("standard layout"),
            ))
        }
        fn push1<'a>(
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
            name: &str,
            a: &'a Array1<f64>,
        ) {
            out.push((
                name.to_string(),
                a.shape().to_vec(),
                a.as_slice().expect("standard layout"),
            ))
        }
        let mut out = Vec::new();
        push2(&mut out, "context.w", &self.context.w);
        if let Some(d) = &self.relation {
            push2(&mut out, "relation.w", &d.w);
        }
        if let Some(e) = &self.embedding {
            push2(&mut out, "embedding.table", &e.table);
        }
        for (tag, g) in [
            ("gru_forward", &self.gru_forward),
            ("gru_backward", &self.gru_backward),
        ] {
            if let Some(g) = g {
                push2(&mut out, &format!("{tag}.w_input"), &g.w_input);
                push2(&mut out, &format!("{tag}.w_hidden"), &g.w_hidden);
            }
        }
        push2(&mut out, "classifier.w", &self.classifier.w);
        push1(&mut out, "context.b", &self.context.b);
        if let Some(d) = &self.relation {
            push1(&mut out, "relation.b", &d.b);
        }
        if let Some(e) = &self.embedding {
            push1(&mut out, "embedding.b", &e.b);
        }
        for (tag, g) in [
            ("gru_forward", &self.gru_forward),
            ("gru_backward", &self.gru_backward),
        ] {
            if let Some(g) = g {
                push1(&mut out, &format!("{tag}.b_input"), &g.b_input);
                push1(&mut out, &format!("{tag}.b_hidden"), &g.b_hidden);
            }
        }
        push1(&mut out, "classifier.b", &self.classifier.b);
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        fn s2(a: &mut Array2<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        fn s1(a: &mut Array1<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut ws: Vec<(&'static str, &mut [f64])> = Vec::new();
        let mut bs: Vec<(&'static str, &mut [f64])> = Vec::new();
        ws.push(("context.w", s2(&mut self.context.w)));
        bs.push(("context.b", s1(&mut self.context.b)));
        if let Some(d) = self.relation.as_mut() {
            ws.push(("relation.w", s2(&mut d.w)));
            bs.push(("relation.b", s1(&mut d.b)));
        }
        if let Some(e) = self.embedding.as_mut() {
            ws.push(("embedding.table", s2(&mut e.table)));
            bs.push(("embedding.b", s1(&mut e.b)));
        }
        if let Some(g) = self.gru_forward.as_mut() {
            ws.push(("gru_forward.w_input", s2(&mut g.w_input)));
            ws.push(("gru_forward.w_hidden", s2(&mut g.w_hidden)));
            bs.push(("gru_forward.b_input", s1(&mut g.b_input)));
            bs.push(("gru_forward.b_hidden", s1(&mut g.b_hidden)));
        }
        if let Some(g) = self.gru_backward.as_mut() {
            ws.push(("gru_backward.w_input", s2(&mut g.w_input)));
            ws.push(("gru_backward.w_hidden", s2(&mut g.w_hidden)));
            bs.push(("gru_backward.b_input", s1(&mut g.b_input)));
            bs.push(("gru_backward.b_hidden", s1(&mut g.b_hidden)));
        }
        ws.push(("classifier.w", s2(&mut self.classifier.w)));
        bs.push(("classifier.b", s1(&mut self.classifier.b)));
        ws.extend(bs);
        ws
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, _, d)| d.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    pub fn to_dump(&self) -> TensorDump {
        TensorDump {
            variant: self.variant,
            hidden: self.hidden,
            vocab_size: self.vocab_size,
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| {
                    (
                        name,
                        StoredTensor {
                            shape,
                            data: data.to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_dump(dump: &TensorDump) -> Result<Parameters, ParamError> {
        let mut config = ModelConfig::new(dump.variant, 0);
        config.hidden = dump.hidden;
        let mut p = Parameters::init(&config, dump.vocab_size);
        let expected: Vec<(String, Vec<usize>)> =
            p.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != dump.tensors.len() {
            return Err(ParamError::TensorCount {
                expected: expected.len(),
                found: dump.tensors.len(),
            });
        }
        for ((name, shape), (_, slot)) in expected.iter().zip(p.slices_mut()) {
            let stored = dump
                .tensors
                .get(name)
                .ok_or_else(|| ParamError::Missing(name.clone()))?;
            if &stored.shape != shape || stored.data.len() != slot.len() {
                return Err(ParamError::Shape {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: stored.shape.clone(),
                });
            }
            slot.copy_from_slice(&stored.data);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serializable form of [`Parameters`]: named row-major tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDump {
    pub variant: Variant,
    pub hidden: usize,
    pub vocab_size: usize,
    pub tensors: BTreeMap<String, StoredTensor>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("expected {expected} tensors, found {found}")]
    TensorCount { expected: usize, found: usize },
    #[error("missing tensor {0}")]
    Missing(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_per_variant() {
        let p = Parameters::init(&ModelConfig::new(Variant::ContextMlp, 1), 50);
        assert_eq!(p.context.w.shape(), &[128, 28]);
        assert!(p.relation.is_none() && p.embedding.is_none());
        assert_eq!(p.classifier.w.shape(), &[7, 128]);

        let p = Parameters::init(&ModelConfig::new(Variant::FullRn, 1), 50);
        assert_eq!(p.relation.as_ref().unwrap().w.shape(), &[128, 8]);
        assert_eq!(p.context.w.shape(), &[128, 28 + 128]);
        assert_eq!(p.embedding.as_ref().unwrap().table.shape(), &[50, 128]);
        assert_eq!(
            p.gru_forward.as_ref().unwrap().w_hidden.shape(),
            &[384, 128]
        );
        assert_eq!(p.classifier.w.shape(), &[7, 384]);
    }

    #[test]
    fn init_range_respected() {
        let p = Parameters::init(&ModelConfig::new(Variant::FullRn, 5), 20);
        assert!(p
            .tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.abs() < 0.01)));
        assert!(p.is_finite());
    }

    #[test]
    fn dump_round_trip() {
        let p = Parameters::init(&ModelConfig::new(Variant::FullMlp, 3), 12);
        let json = serde_json::to_string(&p.to_dump()).unwrap();
        let back = Parameters::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn dump_shape_mismatch() {
        let p = Parameters::init(&ModelConfig::new(Variant::ContextMlp, 3), 12);
        let mut d = p.to_dump();
        d.tensors.get_mut("context.b").unwrap().shape = vec![3];
        assert!(matches!(
            Parameters::from_dump(&d),
            Err(ParamError::Shape { .. })
        ));
    }
}
