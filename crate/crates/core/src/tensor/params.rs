use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use super::{check_finite, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Param {
    value: Tensor,
    /// RMSprop running average of squared gradients.
    accum: Vec<f64>,
}

/// Named parameters in insertion order, each with its RMSprop accumulator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: IndexMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate parameter name {name:?}")));
        }
        let accum = vec![0.0; value.len()];
        self.params.insert(name, Param { value, accum });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn accumulator(&self, name: &str) -> Option<&[f64]> {
        self.params.get(name).map(|p| p.accum.as_slice())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    /// Same values with every optimizer accumulator reset to zero.
    pub fn fresh_copy(&self) -> ParamSet {
        let params = self
            .params
            .iter()
            .map(|(k, p)| {
                let accum = vec![0.0; p.value.len()];
                (
                    k.clone(),
                    Param {
                        value: p.value.clone(),
                        accum,
                    },
                )
            })
            .collect();
        ParamSet { params }
    }

    /// Records every parameter on `tape`. Trainable bindings become leaves
    /// that receive gradients; otherwise they enter as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|(k, p)| {
                let v = if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bindings { vars }
    }

    pub fn max_abs(&self) -> f64 {
        self.params.values().fold(0.0, |m, p| m.max(p.value.max_abs()))
    }

    /// `acc ← decay·acc + (1−decay)·g²; p ← p − lr·g/√(acc + eps_guard)`.
    pub fn rmsprop_step(&mut self, grads: &ParamGrads, opt: &RmsProp) -> Result<()> {
        opt.validate()?;
        for (name, g) in &grads.grads {
            let p = self
                .params
                .get_mut(name)
                .ok_or_else(|| Error::Usage(format!("gradient for unknown parameter {name:?}")))?;
            if p.value.shape() != g.shape() {
                return Err(Error::Usage(format!(
                    "gradient shape {:?} does not match parameter {name:?} {:?}",
                    g.shape(),
                    p.value.shape()
                )));
            }
        }
        for (name, g) in &grads.grads {
            let p = &mut self.params[name.as_str()];
            let Param { value, accum } = p;
            for ((w, a), &gv) in value.data_mut().iter_mut().zip(accum.iter_mut()).zip(g.data()) {
                *a = opt.decay * *a + (1.0 - opt.decay) * gv * gv;
                *w -= opt.lr * gv / (*a + opt.eps_guard).sqrt();
            }
            check_finite("rmsprop_step", value.data())?;
        }
        Ok(())
    }

    /// Clamps every entry into `[-c, c]`.
    pub fn clip(&mut self, c: f64) -> Result<()> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("clip value must be positive, got {c}")));
        }
        for p in self.params.values_mut() {
            for w in p.value.data_mut() {
                *w = w.clamp(-c, c);
            }
        }
        Ok(())
    }

    /// Concatenated little-endian bytes of every parameter, in order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let n: usize = self.params.values().map(|p| p.value.len()).sum();
        let mut out = Vec::with_capacity(n * 8);
        for p in self.params.values() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// SHA-256 over names, shapes and values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.params {
            h.update(name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
        }
        h.update(self.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Free-function form of [`ParamSet::clip`].
pub fn clip_weights(params: &mut ParamSet, c: f64) -> Result<()> {
    params.clip(c)
}

/// RMSprop without momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps_guard: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp {
            lr: 5e-5,
            decay: 0.9,
            eps_guard: 1e-8,
        }
    }
}

impl RmsProp {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!(
                "rmsprop decay must be in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.eps_guard > 0.0) {
            return Err(Error::Config(format!(
                "eps_guard must be positive, got {}",
                self.eps_guard
            )));
        }
        Ok(())
    }
}

/// Parameter names mapped to their tape variables.
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Usage(format!("no parameter named {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Collects the gradient of every trainable binding. Constant bindings
    /// are skipped, so frozen parameters never appear in the result.
    pub fn gradients(&self, grads: &Gradients) -> ParamGrads {
        let grads = self
            .vars
            .iter()
            .filter_map(|(k, v)| grads.get(*v).map(|g| (k.clone(), g.clone())))
            .collect();
        ParamGrads { grads }
    }
}

/// Binds names to existing tape variables, e.g. to route a network through
/// values computed earlier on the same tape.
impl FromIterator<(String, Var)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Bindings {
            vars: iter.into_iter().collect(),
        }
    }
}

/// Per-parameter gradients keyed by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads {
    grads: IndexMap<String, Tensor>,
}

impl ParamGrads {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, g: Tensor) {
        self.grads.insert(name.into(), g);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(v).unwrap()).unwrap();
        p
    }

    fn grad(v: f64) -> ParamGrads {
        let mut g = ParamGrads::new();
        g.insert("w", Tensor::scalar(v).unwrap());
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = single(0.7);
        p.rmsprop_step(&grad(0.0), &RmsProp::default()).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[0.7]);
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        let mut p = single(1.0);
        let opt = RmsProp {
            lr: 0.1,
            decay: 0.9,
            eps_guard: 1e-8,
        };
        p.rmsprop_step(&grad(1.0), &opt).unwrap();
        let acc = p.accumulator("w").unwrap()[0];
        assert!((acc - 0.1).abs() < 1e-16);
        let want = 1.0 - 0.1 / (0.1f64 + 1e-8).sqrt();
        assert!((p.get("w").unwrap().data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_rejects_bad_input() {
        let mut p = single(1.0);
        let mut g = ParamGrads::new();
        g.insert("w", Tensor::zeros(vec![2]).unwrap());
        assert!(matches!(p.rmsprop_step(&g, &RmsProp::default()), Err(Error::Usage(_))));
        let mut g = ParamGrads::new();
        g.insert("nope", Tensor::scalar(1.0).unwrap());
        assert!(p.rmsprop_step(&g, &RmsProp::default()).is_err());
        let bad = RmsProp {
            lr: 0.1,
            decay: 1.0,
            eps_guard: 1e-8,
        };
        assert!(matches!(p.rmsprop_step(&grad(1.0), &bad), Err(Error::Config(_))));
    }

    #[test]
    fn clip_examples() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::new(vec![3], vec![0.5, -0.5, 0.004]).unwrap())
            .unwrap();
        clip_weights(&mut p, 0.01).unwrap();
        assert_eq!(p.get("a").unwrap().data(), &[0.01, -0.01, 0.004]);
        assert!(matches!(p.clip(0.0), Err(Error::Config(_))));
        assert!(p.clip(-1.0).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = single(1.0);
        assert!(p.insert("w", Tensor::scalar(2.0).unwrap()).is_err());
    }

    #[test]
    fn constant_bindings_yield_no_gradients() {
        let p = single(2.0);
        let mut tape = Tape::new();
        let b = p.bind(&mut tape, false);
        let w = b.var("w").unwrap();
        let loss = tape.scale(w, 3.0).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(b.gradients(&g).is_empty());

        let mut tape = Tape::new();
        let b = p.bind(&mut tape, true);
        let w = b.var("w").unwrap();
        let loss = tape.scale(w, 3.0).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(b.gradients(&g).get("w").unwrap().data(), &[3.0]);
    }
}
