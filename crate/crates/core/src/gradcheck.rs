//! Finite-difference gradient oracle. It evaluates losses only through
//! forward passes, so it shares no code with reverse accumulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::seq2seq::{Batch, Seq2Seq};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, floor)`. The floor keeps entries whose true
/// gradient is zero or near zero from turning round-off into large ratios.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of `f` at `x`.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Compares the `grad` buffer of every entry of every parameter in `store`
/// with central differences of `loss`. Returns the worst entry.
pub fn check_store_gradients(
    store: &ParamStore<f64>,
    loss: impl Fn(&ParamStore<f64>) -> f64,
    floor: f64,
) -> Option<GradMismatch> {
    let mut probe = store.clone();
    let mut worst: Option<GradMismatch> = None;
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let t = store.get(&name).expect("name from store");
        let zeros = vec![0.0; t.numel()];
        let analytic = t.grad.clone().unwrap_or(zeros);
        for (i, &a) in analytic.iter().enumerate() {
            let orig = t.data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = orig + FD_STEP;
            let plus = loss(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = orig - FD_STEP;
            let minus = loss(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            let n = (plus - minus) / (2.0 * FD_STEP);
            let e = rel_err(a, n, floor);
            if worst.as_ref().is_none_or(|w| e > w.rel_err) {
                worst = Some(GradMismatch {
                    param: name.clone(),
                    index: i,
                    analytic: a,
                    numeric: n,
                    rel_err: e,
                });
            }
        }
    }
    worst
}

/// Checks the input gradients of `op`. The output is contracted with fixed
/// random weights so that every output entry contributes to the loss.
/// Returns the worst relative error over all entries of all inputs.
pub fn check_op<F>(inputs: &[Tensor<f64>], floor: f64, op: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let weights = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = op(&tape, &vars)?;
        let mut rng = ChaCha8Rng::seed_from_u64(out.numel() as u64);
        let w: Vec<f64> = (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(&out.shape(), w)?
    };
    let contracted = |values: &[Tensor<f64>], grads: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let tape = Tape::new();
        let vars: Vec<_> = values
            .iter()
            .map(|t| {
                if grads {
                    tape.leaf(t.clone().with_grad())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        let out = op(&tape, &vars)?;
        let loss = out.mul(tape.constant(weights.clone()))?.sum();
        let value = loss.item();
        if !grads {
            return Ok((value, Vec::new()));
        }
        let g = tape.backward(loss)?;
        let per_input = vars
            .iter()
            .map(|v| {
                g.wrt(*v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; v.numel()])
            })
            .collect();
        Ok((value, per_input))
    };
    let (_, analytic) = contracted(inputs, true)?;
    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        for (i, &ai) in a.iter().enumerate() {
            let orig = probe[k].data()[i];
            probe[k].data_mut()[i] = orig + FD_STEP;
            let plus = contracted(&probe, false)?.0;
            probe[k].data_mut()[i] = orig - FD_STEP;
            let minus = contracted(&probe, false)?.0;
            probe[k].data_mut()[i] = orig;
            let n = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(ai, n, floor));
        }
    }
    Ok(worst)
}

/// Gradient of the mean teacher-forced loss of `model` on `batch` with
/// respect to every parameter entry, compared against central differences.
/// Dropout is disabled for the comparison.
pub fn check_seq2seq(model: &Seq2Seq<f64>, batch: &Batch, floor: f64) -> Result<GradMismatch> {
    let with = |params: &ParamStore<f64>| Seq2Seq {
        kind: model.kind,
        dims: model.dims,
        dropout: 0.0,
        params: params.clone(),
    };
    let mut store = model.params.clone();
    store.zero_grad();
    {
        let m = with(&store);
        let tape = Tape::new();
        let (loss, _) = m.loss(&tape, batch, None)?;
        let g = tape.backward(loss)?;
        store.accumulate(&g);
    }
    let loss = |p: &ParamStore<f64>| {
        let m = with(p);
        let tape = Tape::new();
        m.loss(&tape, batch, None)
            .map(|(l, _)| l.item())
            .unwrap_or(f64::NAN)
    };
    check_store_gradients(&store, loss, floor)
        .ok_or_else(|| Error::contract("model has no parameters"))
}
