use emoseq_core::autograd::{concat, Tape};
use emoseq_core::gradcheck::{check_op, check_seq2seq, check_store_gradients};
use emoseq_core::nn::LstmCell;
use emoseq_core::params::{uniform, ParamStore};
use emoseq_core::seq2seq::{Batch, Seq2Seq};
use emoseq_core::tensor::Tensor;
use emoseq_core::variants::{
    ModelDims, ModelKind, VariantTag, ATTENTION_EMOTION, EMOTION_VECTORS, PROJ_EMOTION_B,
    PROJ_EMOTION_W,
};
use emoseq_core::Emotion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OP_TOL: f64 = 1e-6;
const OP_FLOOR: f64 = 1e-3;
const MODEL_TOL: f64 = 1e-4;
const MODEL_FLOOR: f64 = 1e-5;

fn rand(shape: &[usize], seed: u64) -> Tensor<f64> {
    uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn assert_op<F>(name: &str, inputs: &[Tensor<f64>], op: F)
where
    F: for<'t> Fn(
        &'t Tape<f64>,
        &[emoseq_core::autograd::Var<'t, f64>],
    ) -> emoseq_core::Result<emoseq_core::autograd::Var<'t, f64>>,
{
    let worst = check_op(inputs, OP_FLOOR, op).unwrap();
    assert!(worst < OP_TOL, "{name}: rel err {worst:e}");
}

#[test]
fn matmul_and_bmm() {
    assert_op("matmul", &[rand(&[3, 4], 1), rand(&[4, 5], 2)], |_, v| v[0].matmul(v[1]));
    assert_op("bmm", &[rand(&[2, 3, 4], 3), rand(&[2, 4, 2], 4)], |_, v| v[0].bmm(v[1]));
}

#[test]
fn elementwise() {
    let a = rand(&[3, 4], 5);
    let b = rand(&[3, 4], 6);
    assert_op("add", &[a.clone(), b.clone()], |_, v| v[0].add(v[1]));
    assert_op("add broadcast", &[a.clone(), rand(&[4], 7)], |_, v| v[0].add(v[1]));
    assert_op("mul", &[a.clone(), b], |_, v| v[0].mul(v[1]));
    assert_op("scale", std::slice::from_ref(&a), |_, v| Ok(v[0].scale(-2.5)));
    assert_op("mask_mul", std::slice::from_ref(&a), |_, v| {
        v[0].mask_mul((0..12).map(|i| (i % 3) as f64 * 0.5).collect())
    });
    assert_op("tanh", std::slice::from_ref(&a), |_, v| Ok(v[0].tanh()));
    let wide = Tensor::from_f64(&[6], &[-30.0, -3.0, -0.1, 0.0, 2.0, 25.0]).unwrap();
    assert_op("sigmoid", &[a, wide], |_, v| v[0].sigmoid().sum().add(v[1].sigmoid().sum()));
}

#[test]
fn shape_ops() {
    let a = rand(&[2, 3, 4], 8);
    assert_op("narrow", std::slice::from_ref(&a), |_, v| v[0].narrow(1, 2));
    assert_op("reshape", std::slice::from_ref(&a), |_, v| v[0].reshape(&[6, 4]));
    assert_op("concat last", &[rand(&[2, 3], 9), rand(&[2, 5], 10)], |_, v| concat(v, 1));
    assert_op(
        "concat middle",
        &[rand(&[2, 1, 3], 11), rand(&[2, 2, 3], 12)],
        |_, v| concat(v, 1),
    );
    assert_op("sum", &[a], |_, v| Ok(v[0].sum()));
}

#[test]
fn softmax_family() {
    let a = rand(&[3, 5], 13);
    assert_op("softmax", std::slice::from_ref(&a), |_, v| v[0].softmax());
    let keep: Vec<bool> = (0..15).map(|i| i % 5 < 2 + i / 5).collect();
    assert_op("masked softmax", std::slice::from_ref(&a), move |_, v| v[0].masked_softmax(Some(&keep)));
    assert_op("cross entropy", &[a], |_, v| {
        v[0].cross_entropy(&[Some(1), None, Some(4)], 0.5)
    });
}

#[test]
fn row_selection() {
    assert_op("select_rows", &[rand(&[3, 4], 14), rand(&[3, 4], 15)], |_, v| {
        v[0].select_rows(&[true, false, true], v[1])
    });
    assert_op("gather_rows", &[rand(&[5, 3], 16)], |_, v| v[0].gather_rows(&[4, 1, 4, 0]));
    assert_op(
        "gather_matmul 2d",
        &[rand(&[3, 4], 17), rand(&[5, 4, 2], 18)],
        |_, v| v[0].gather_matmul(v[1], &[2, 0, 2]),
    );
    assert_op(
        "gather_matmul 3d",
        &[rand(&[3, 2, 4], 19), rand(&[5, 4, 4], 20)],
        |_, v| v[0].gather_matmul(v[1], &[1, 1, 3]),
    );
}

#[test]
fn lstm_cell_inputs_and_weights() {
    let cell = LstmCell::new("cell", &[("x", 3), ("h", 4)], 4);
    let mut store = ParamStore::new();
    cell.init(&mut store, &mut ChaCha8Rng::seed_from_u64(21));
    for (i, (_, t)) in store.iter_mut().enumerate() {
        // Non-zero biases so every gate path is exercised.
        if t.shape().len() == 1 {
            *t = rand(&[16], 30 + i as u64).with_grad();
        }
    }
    let inputs = [rand(&[2, 3], 22), rand(&[2, 4], 23), rand(&[2, 4], 24)];
    let worst = check_op(&inputs, OP_FLOOR, |tape, v| {
        let (h, c) = cell.step(tape, &store, &[v[0], v[1]], v[2])?;
        concat(&[h, c], 1)
    })
    .unwrap();
    assert!(worst < 1e-5, "lstm inputs: {worst:e}");

    let loss = |p: &ParamStore<f64>| {
        let tape = Tape::new();
        let v: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let (h, c) = cell.step(&tape, p, &[v[0], v[1]], v[2]).unwrap();
        h.sum().add(c.scale(0.5).sum()).unwrap().item()
    };
    let mut analytic = store.clone();
    {
        let tape = Tape::new();
        let v: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let (h, c) = cell.step(&tape, &analytic, &[v[0], v[1]], v[2]).unwrap();
        let g = tape.backward(h.sum().add(c.scale(0.5).sum()).unwrap()).unwrap();
        analytic.zero_grad();
        analytic.accumulate(&g);
    }
    let worst = check_store_gradients(&analytic, loss, OP_FLOOR).unwrap();
    assert!(worst.rel_err < 1e-5, "lstm weights: {worst:?}");
}

fn toy_dims() -> ModelDims {
    ModelDims {
        vocab: 20,
        embed: 8,
        hidden: 8,
        emotions: 10,
        max_len: 30,
    }
}

fn toy_batch() -> Batch {
    Batch {
        sources: vec![vec![14, 15, 16], vec![17, 18, 19]],
        targets: vec![vec![16, 17, 14], vec![19, 15, 18]],
        emotions: vec![Emotion::Joy, Emotion::Fear],
    }
}

fn toy_model(kind: ModelKind) -> Seq2Seq<f64> {
    Seq2Seq::new(kind, toy_dims(), 0.0, &mut ChaCha8Rng::seed_from_u64(40))
}

#[test]
fn end_to_end_every_model_kind() {
    for kind in ModelKind::ALL {
        let worst = check_seq2seq(&toy_model(kind), &toy_batch(), MODEL_FLOOR).unwrap();
        assert!(worst.rel_err < MODEL_TOL, "{kind}: {worst:?}");
    }
}

#[test]
fn end_to_end_ragged_batch() {
    let batch = Batch {
        sources: vec![vec![14, 15], vec![17, 18, 19], vec![16]],
        targets: vec![vec![16], vec![19, 15, 18], vec![]],
        emotions: vec![Emotion::Joy, Emotion::Fear, Emotion::Joy],
    };
    for kind in ModelKind::ALL {
        let worst = check_seq2seq(&toy_model(kind), &batch, MODEL_FLOOR).unwrap();
        assert!(worst.rel_err < MODEL_TOL, "{kind}: {worst:?}");
    }
}

fn param_grads(model: &Seq2Seq<f64>, batch: &Batch) -> ParamStore<f64> {
    let mut store = model.params.clone();
    let tape = Tape::new();
    let (loss, _) = model.loss(&tape, batch, None).unwrap();
    store.zero_grad();
    store.accumulate(&tape.backward(loss).unwrap());
    store
}

/// Rows (or slabs) of a per-emotion tensor whose gradient is not all zero.
fn touched(store: &ParamStore<f64>, name: &str) -> Vec<usize> {
    let t = store.get(name).unwrap();
    let g = t.grad.as_ref().unwrap();
    let slab = t.numel() / t.shape()[0];
    (0..t.shape()[0])
        .filter(|&e| g[e * slab..(e + 1) * slab].iter().any(|x| *x != 0.0))
        .collect()
}

#[test]
fn emotion_parameters_receive_gradient_only_for_batch_emotions() {
    let batch = toy_batch();
    let used = vec![Emotion::Fear.index(), Emotion::Joy.index()];
    let cases = [
        (VariantTag::DecRep, vec![EMOTION_VECTORS]),
        (VariantTag::DecProj, vec![PROJ_EMOTION_W, PROJ_EMOTION_B]),
        (VariantTag::EncAtt, vec![ATTENTION_EMOTION]),
        (VariantTag::DecTrans, vec![emoseq_core::variants::TRANS_EMOTION]),
    ];
    for (tag, names) in cases {
        let g = param_grads(&toy_model(ModelKind::Variant(tag)), &batch);
        for name in names {
            assert_eq!(touched(&g, name), used, "{tag} {name}");
        }
    }
}

#[test]
fn classifier_loss() {
    use emoseq_core::classifier::{ClassifierDims, ClassifierModel};
    use emoseq_core::text::Vocabulary;

    let words: Vec<String> = "a b c d e f".split(' ').map(str::to_string).collect();
    let vocab = Vocabulary::build([words.as_slice()], 100).unwrap();
    for hops in [1, 2] {
        let dims = ClassifierDims {
            vocab: vocab.len(),
            embed: 8,
            hidden: 8,
            attention: 8,
            hops,
        };
        let model =
            ClassifierModel::<f64>::new(dims, vocab.clone(), &mut ChaCha8Rng::seed_from_u64(50))
                .unwrap();
        let seqs = vec![vec![14, 15, 16], vec![17, 18], vec![19, 14, 15, 16]];
        let labels = [Emotion::Joy, Emotion::Guilt, Emotion::Joy];
        let mut store = model.params.clone();
        {
            let tape = Tape::new();
            let loss = model.loss(&tape, &seqs, &labels).unwrap();
            store.zero_grad();
            store.accumulate(&tape.backward(loss).unwrap());
        }
        let loss = |p: &ParamStore<f64>| {
            let m = ClassifierModel::from_params(dims, vocab.clone(), p.clone()).unwrap();
            let tape = Tape::new();
            m.loss(&tape, &seqs, &labels).unwrap().item()
        };
        let worst = check_store_gradients(&store, loss, MODEL_FLOOR).unwrap();
        assert!(worst.rel_err < MODEL_TOL, "hops {hops}: {worst:?}");
    }
}
