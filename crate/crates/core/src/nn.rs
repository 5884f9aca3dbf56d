//! Building blocks shared by the dialogue models and the classifier.

use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{uniform, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// LSTM cell weights, one `in_width × 4D` block per input channel plus a
/// `4D` bias. Gate column order is input, forget, output, candidate.
///
/// The recurrent hidden state is an ordinary channel, so a cell over
/// `[x; h]` has channels `x` and `h`, and a cell with an extra conditioning
/// vector has a third block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub name: String,
    pub channels: Vec<(String, usize)>,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(name: &str, channels: &[(&str, usize)], hidden: usize) -> Self {
        Self {
            name: name.to_string(),
            channels: channels.iter().map(|(c, w)| (c.to_string(), *w)).collect(),
            hidden,
        }
    }

    pub fn weight_name(&self, channel: &str) -> String {
        format!("{}.w_{}", self.name, channel)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<_> = self
            .channels
            .iter()
            .map(|(c, w)| (self.weight_name(c), vec![*w, 4 * self.hidden]))
            .collect();
        out.push((self.bias_name(), vec![4 * self.hidden]));
        out
    }

    /// Uniform(±1/√D) weights and zero bias.
    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        for (name, shape) in self.shapes() {
            let t = if name == self.bias_name() {
                Tensor::zeros(&shape)
            } else {
                uniform(&shape, bound, rng)
            };
            store.insert(name, t);
        }
    }

    /// One step. `inputs` are `[B×width]` tensors in channel order; `cell`
    /// is the previous cell state `[B×D]`. Returns `(h', c')`.
    pub fn step<'t, T: Scalar>(
        &self,
        tape: &'t Tape<T>,
        store: &ParamStore<T>,
        inputs: &[Var<'t, T>],
        cell: Var<'t, T>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        if inputs.len() != self.channels.len() {
            return Err(Error::contract(format!(
                "{} expects {} inputs, got {}",
                self.name,
                self.channels.len(),
                inputs.len()
            )));
        }
        let d = self.hidden;
        let mut z: Option<Var<'t, T>> = None;
        for ((channel, _), x) in self.channels.iter().zip(inputs) {
            let w = tape.param(store, &self.weight_name(channel))?;
            let term = x.matmul(w)?;
            z = Some(match z {
                None => term,
                Some(acc) => acc.add(term)?,
            });
        }
        let z = z
            .expect("at least one channel")
            .add(tape.param(store, &self.bias_name())?)?;
        let input = z.narrow(0, d)?.sigmoid();
        let forget = z.narrow(d, d)?.sigmoid();
        let output = z.narrow(2 * d, d)?.sigmoid();
        let candidate = z.narrow(3 * d, d)?.tanh();
        let c = forget.mul(cell)?.add(input.mul(candidate)?)?;
        let h = output.mul(c.tanh())?;
        Ok((h, c))
    }
}

/// Inverted dropout: with `rng` present each element is zeroed with
/// probability `p` and survivors are scaled by `1/(1−p)`; without `rng`
/// (inference) the input passes through unchanged.
pub fn dropout<'t, T: Scalar>(
    x: Var<'t, T>,
    p: f64,
    rng: Option<&mut (dyn rand::RngCore + 'static)>,
) -> Result<Var<'t, T>> {
    match rng {
        Some(rng) if p > 0.0 => {
            let mask = dropout_mask(x.numel(), p, rng);
            x.mask_mul(mask)
        }
        _ => Ok(x),
    }
}

pub fn dropout_mask<T: Scalar>(n: usize, p: f64, rng: &mut dyn rand::RngCore) -> Vec<T> {
    let keep = 1.0 - p;
    let scale = T::of(1.0 / keep);
    (0..n)
        .map(|_| if rng.gen_bool(keep) { scale } else { T::zero() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(in_dim: usize, d: usize) -> (LstmCell, ParamStore<f64>) {
        let c = LstmCell::new("cell", &[("x", in_dim), ("h", d)], d);
        let mut store = ParamStore::new();
        c.init(&mut store, &mut ChaCha8Rng::seed_from_u64(1));
        (c, store)
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let (c, mut store) = cell(3, 4);
        for (_, t) in store.iter_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let tape = Tape::new();
        let x = tape.constant(Tensor::full(&[2, 3], 0.7));
        let h = tape.constant(Tensor::full(&[2, 4], 0.3));
        let cs = tape.constant(Tensor::zeros(&[2, 4]));
        let (h, c2) = c.step(&tape, &store, &[x, h], cs).unwrap();
        assert!(h.data().iter().all(|v| *v == 0.0));
        assert!(c2.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hidden_is_bounded() {
        let (c, store) = cell(3, 4);
        let tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 3], 50.0));
        let h = tape.constant(Tensor::full(&[1, 4], -50.0));
        let cs = tape.constant(Tensor::full(&[1, 4], 3.0));
        let (h, c2) = c.step(&tape, &store, &[x, h], cs).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1.0));
        assert!(c2.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let (c, store) = cell(3, 4);
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 5]));
        let h = tape.constant(Tensor::zeros(&[1, 4]));
        let err = c.step(&tape, &store, &[x, h], h).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn dropout_keep_rate_within_three_sigma() {
        let p = 0.25;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mask: Vec<f64> = dropout_mask(n, p, &mut rng);
        let kept = mask.iter().filter(|m| **m > 0.0).count() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((kept - n as f64 * (1.0 - p)).abs() < 3.0 * sigma);
        assert!(mask.iter().all(|m| *m == 0.0 || (*m - 1.0 / 0.75).abs() < 1e-12));
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[4], 2.0));
        let y = dropout(x, 0.5, None).unwrap();
        assert_eq!(y.id(), x.id());
    }
}
