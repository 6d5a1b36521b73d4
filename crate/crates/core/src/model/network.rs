use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::params::{Dense, Gru, Parameters, ENTITY_DIM, NUM_SLOTS};
use crate::corpus::TargetExample;
use crate::rng::{self, ChaCha8Rng};
use crate::world::OBSERVATION_DIM;

pub const NUM_PAIRS: usize = NUM_SLOTS * (NUM_SLOTS - 1) / 2;

/// Unordered slot pairs `i < j` in lexicographic order.
pub fn slot_pairs() -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(NUM_PAIRS);
    for i in 0..NUM_SLOTS {
        for j in i + 1..NUM_SLOTS {
            out.push((i, j));
        }
    }
    out
}

/// Dropout is active only in training mode, drawing masks from the given rng.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn mask(&mut self, rows: usize, cols: usize, p: f64) -> Option<Array2<f64>> {
        match self {
            Mode::Train(r) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                Some(Array2::from_shape_simple_fn((rows, cols), || {
                    if rng::unit_f64(*r) < p {
                        0.0
                    } else {
                        keep
                    }
                }))
            }
            _ => None,
        }
    }
}

fn apply_mask(a: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *a *= m;
    }
}

fn affine(x: ArrayView2<f64>, d: &Dense) -> Array2<f64> {
    x.dot(&d.w.t()) + &d.b
}

fn relu(a: Array2<f64>) -> Array2<f64> {
    a.mapv_into(|v| v.max(0.0))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Model inputs for a batch: observations `[B, 28]` and token streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub observations: Array2<f64>,
    pub tokens: Vec<Vec<usize>>,
}

impl Inputs {
    pub fn from_examples(examples: &[&TargetExample]) -> Inputs {
        let mut observations = Array2::zeros((examples.len(), OBSERVATION_DIM));
        for (b, ex) in examples.iter().enumerate() {
            let flat = ex.observation.flatten();
            observations.row_mut(b).assign(&Array1::from(flat));
        }
        Inputs {
            observations,
            tokens: examples.iter().map(|e| e.token_ids.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct RelationCache {
    pairs: Array2<f64>,
    act: Array2<f64>,
    mask: Option<Array2<f64>>,
}

struct ContextCache {
    input: Array2<f64>,
    act: Array2<f64>,
    mask: Option<Array2<f64>>,
    relation: Option<RelationCache>,
}

struct GruStep {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    hidden_candidate: Array2<f64>,
    live: Array2<f64>,
}

struct DialogueCache {
    lengths: Vec<usize>,
    act: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    forward: Vec<GruStep>,
    backward: Vec<GruStep>,
    out_mask: Option<Array2<f64>>,
}

pub struct Forward {
    pub logits: Array2<f64>,
    context: ContextCache,
    dialogue: Option<DialogueCache>,
    features: Array2<f64>,
}

/// Per-tensor gradients plus the gradient with respect to the observations.
pub struct Gradients {
    pub params: Parameters,
    pub observations: Array2<f64>,
}

fn relation_forward(
    obs: &Array2<f64>,
    rel: &Dense,
    dropout: f64,
    mode: &mut Mode,
) -> (Array2<f64>, RelationCache) {
    let batch = obs.nrows();
    let pairs_idx = slot_pairs();
    let mut pairs = Array2::zeros((batch * NUM_PAIRS, 2 * ENTITY_DIM));
    for b in 0..batch {
        for (k, (i, j)) in pairs_idx.iter().enumerate() {
            let mut row = pairs.row_mut(b * NUM_PAIRS + k);
            row.slice_mut(s![..ENTITY_DIM])
                .assign(&obs.slice(s![b, i * ENTITY_DIM..(i + 1) * ENTITY_DIM]));
            row.slice_mut(s![ENTITY_DIM..])
                .assign(&obs.slice(s![b, j * ENTITY_DIM..(j + 1) * ENTITY_DIM]));
        }
    }
    let act = relu(affine(pairs.view(), rel));
    let mut sum = Array2::zeros((batch, rel.w.nrows()));
    for b in 0..batch {
        sum.row_mut(b).assign(
            &act.slice(s![b * NUM_PAIRS..(b + 1) * NUM_PAIRS, ..])
                .sum_axis(Axis(0)),
        );
    }
    let mask = mode.mask(batch, rel.w.nrows(), dropout);
    apply_mask(&mut sum, &mask);
    (sum, RelationCache { pairs, act, mask })
}

fn context_forward(
    p: &Parameters,
    obs: &Array2<f64>,
    dropout: f64,
    mode: &mut Mode,
) -> (Array2<f64>, ContextCache) {
    let (input, relation) = match &p.relation {
        Some(rel) => {
            let (sum, cache) = relation_forward(obs, rel, dropout, mode);
            let input = concatenate(Axis(1), &[obs.view(), sum.view()]).expect("same batch");
            (input, Some(cache))
        }
        None => (obs.clone(), None),
    };
    let act = relu(affine(input.view(), &p.context));
    let mask = mode.mask(act.nrows(), act.ncols(), dropout);
    let mut out = act.clone();
    apply_mask(&mut out, &mask);
    (
        out,
        ContextCache {
            input,
            act,
            mask,
            relation,
        },
    )
}

fn gru_forward(
    g: &Gru,
    xs: &[Array2<f64>],
    live: &[Array2<f64>],
    hidden: usize,
) -> (Array2<f64>, Vec<GruStep>) {
    let batch = live.first().map_or(0, |m| m.nrows());
    let mut h = Array2::zeros((batch, hidden));
    let mut steps = Vec::with_capacity(xs.len());
    for (x, m) in xs.iter().zip(live) {
        let gi = affine_raw(x.view(), &g.w_input, &g.b_input);
        let gh = affine_raw(h.view(), &g.w_hidden, &g.b_hidden);
        let r = (&gi.slice(s![.., ..hidden]) + &gh.slice(s![.., ..hidden])).mapv_into(sigmoid);
        let z = (&gi.slice(s![.., hidden..2 * hidden]) + &gh.slice(s![.., hidden..2 * hidden]))
            .mapv_into(sigmoid);
        let hidden_candidate = gh.slice(s![.., 2 * hidden..]).to_owned();
        let n = (&gi.slice(s![.., 2 * hidden..]) + &(&r * &hidden_candidate)).mapv_into(f64::tanh);
        let updated = &n + &(&z * &(&h - &n));
        let next = &h + &(m * &(&updated - &h));
        steps.push(GruStep {
            x: x.clone(),
            h_prev: std::mem::replace(&mut h, next),
            r,
            z,
            n,
            hidden_candidate,
            live: m.clone(),
        });
    }
    (h, steps)
}

fn affine_raw(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

/// Returns the gradient with respect to each step's input.
fn gru_backward(
    g: &Gru,
    steps: &[GruStep],
    dh_final: Array2<f64>,
    grad: &mut Gru,
) -> Vec<Array2<f64>> {
    let hidden = g.w_hidden.ncols();
    let mut dh = dh_final;
    let mut dxs = vec![Array2::zeros((0, 0)); steps.len()];
    for (t, st) in steps.iter().enumerate().rev() {
        let du = &dh * &st.live;
        let mut dh_prev = &dh - &du;
        let dn = &du * &st.z.mapv(|z| 1.0 - z);
        let dz = &du * &(&st.h_prev - &st.n);
        dh_prev += &(&du * &st.z);
        let dn_pre = &dn * &st.n.mapv(|n| 1.0 - n * n);
        let dr = &dn_pre * &st.hidden_candidate;
        let dr_pre = &dr * &st.r.mapv(|r| r * (1.0 - r));
        let dz_pre = &dz * &st.z.mapv(|z| z * (1.0 - z));
        let dgi = concatenate(Axis(1), &[dr_pre.view(), dz_pre.view(), dn_pre.view()])
            .expect("same batch");
        let dgh_n = &dn_pre * &st.r;
        let dgh = concatenate(Axis(1), &[dr_pre.view(), dz_pre.view(), dgh_n.view()])
            .expect("same batch");
        debug_assert_eq!(dgi.ncols(), 3 * hidden);

        grad.w_hidden += &dgh.t().dot(&st.h_prev);
        grad.b_hidden += &dgh.sum_axis(Axis(0));
        dh_prev += &dgh.dot(&g.w_hidden);
        grad.w_input += &dgi.t().dot(&st.x);
        grad.b_input += &dgi.sum_axis(Axis(0));
        dxs[t] = dgi.dot(&g.w_input);
        dh = dh_prev;
    }
    dxs
}

fn dialogue_forward(
    p: &Parameters,
    tokens: &[Vec<usize>],
    dropout: f64,
    mode: &mut Mode,
) -> (Array2<f64>, DialogueCache) {
    let emb = p
        .embedding
        .as_ref()
        .expect("dialogue variant has an embedding");
    let (fw, bw) = (
        p.gru_forward.as_ref().expect("gru"),
        p.gru_backward.as_ref().expect("gru"),
    );
    let h = p.hidden;
    let batch = tokens.len();
    let lengths: Vec<usize> = tokens.iter().map(Vec::len).collect();
    let steps = lengths.iter().copied().max().unwrap_or(0);

    let mut act = Vec::with_capacity(steps);
    let mut masks = Vec::with_capacity(steps);
    let mut dropped = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut a = Array2::zeros((batch, h));
        for (b, toks) in tokens.iter().enumerate() {
            if let Some(&tok) = toks.get(t) {
                let row = (&emb.table.row(tok) + &emb.b).mapv_into(|v| v.max(0.0));
                a.row_mut(b).assign(&row);
            }
        }
        let m = mode.mask(batch, h, dropout);
        let mut d = a.clone();
        apply_mask(&mut d, &m);
        act.push(a);
        masks.push(m);
        dropped.push(d);
    }

    let live: Vec<Array2<f64>> = (0..steps)
        .map(|t| Array2::from_shape_fn((batch, 1), |(b, _)| if t < lengths[b] { 1.0 } else { 0.0 }))
        .collect();
    let reversed: Vec<Array2<f64>> = (0..steps)
        .map(|t| {
            let mut x = Array2::zeros((batch, h));
            for b in 0..batch {
                if t < lengths[b] {
                    x.row_mut(b).assign(&dropped[lengths[b] - 1 - t].row(b));
                }
            }
            x
        })
        .collect();
    let (hf, forward) = gru_forward(fw, &dropped, &live, h);
    let (hb, backward) = gru_forward(bw, &reversed, &live, h);
    let mut out = concatenate(Axis(1), &[hf.view(), hb.view()]).expect("same batch");
    let out_mask = mode.mask(batch, 2 * h, dropout);
    apply_mask(&mut out, &out_mask);
    (
        out,
        DialogueCache {
            lengths,
            act,
            masks,
            forward,
            backward,
            out_mask,
        },
    )
}

pub fn forward(p: &Parameters, inputs: &Inputs, dropout: f64, mut mode: Mode) -> Forward {
    let (ctx, context) = context_forward(p, &inputs.observations, dropout, &mut mode);
    let (features, dialogue) = if p.variant.uses_dialogue() {
        let (d, cache) = dialogue_forward(p, &inputs.tokens, dropout, &mut mode);
        (
            concatenate(Axis(1), &[ctx.view(), d.view()]).expect("same batch"),
            Some(cache),
        )
    } else {
        (ctx, None)
    };
    let logits = affine(features.view(), &p.classifier);
    Forward {
        logits,
        context,
        dialogue,
        features,
    }
}

pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Mean cross-entropy over the batch and its gradient with respect to the
/// logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let probs = softmax(logits);
    let batch = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (b, &y) in labels.iter().enumerate() {
        let row = logits.row(b);
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let lse = max + row.mapv(|v| (v - max).exp()).sum().ln();
        loss += lse - row[y];
        grad[[b, y]] -= 1.0;
    }
    (loss / batch, grad / batch)
}

pub fn backward(
    p: &Parameters,
    inputs: &Inputs,
    fwd: &Forward,
    dlogits: &Array2<f64>,
) -> Gradients {
    let h = p.hidden;
    let mut g = p.zeros_like();
    g.classifier.w.assign(&dlogits.t().dot(&fwd.features));
    g.classifier.b.assign(&dlogits.sum_axis(Axis(0)));
    let dfeat = dlogits.dot(&p.classifier.w);

    if let Some(dc) = &fwd.dialogue {
        let mut dd = dfeat.slice(s![.., h..]).to_owned();
        apply_mask(&mut dd, &dc.out_mask);
        dialogue_backward(p, inputs, dc, dd, &mut g);
    }

    let cc = &fwd.context;
    let mut dctx = dfeat.slice(s![.., ..h]).to_owned();
    apply_mask(&mut dctx, &cc.mask);
    dctx.zip_mut_with(&cc.act, |d, &a| {
        if a <= 0.0 {
            *d = 0.0
        }
    });
    g.context.w.assign(&dctx.t().dot(&cc.input));
    g.context.b.assign(&dctx.sum_axis(Axis(0)));
    let dinput = dctx.dot(&p.context.w);
    let mut dobs = dinput.slice(s![.., ..OBSERVATION_DIM]).to_owned();

    if let (Some(rc), Some(rel)) = (&cc.relation, &p.relation) {
        let mut dsum = dinput.slice(s![.., OBSERVATION_DIM..]).to_owned();
        apply_mask(&mut dsum, &rc.mask);
        let batch = dsum.nrows();
        let mut dact = Array2::zeros(rc.act.raw_dim());
        for b in 0..batch {
            for k in 0..NUM_PAIRS {
                dact.row_mut(b * NUM_PAIRS + k).assign(&dsum.row(b));
            }
        }
        dact.zip_mut_with(&rc.act, |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        let gr = g.relation.as_mut().expect("relation variant");
        gr.w.assign(&dact.t().dot(&rc.pairs));
        gr.b.assign(&dact.sum_axis(Axis(0)));
        let dpairs = dact.dot(&rel.w);
        for b in 0..batch {
            for (k, (i, j)) in slot_pairs().into_iter().enumerate() {
                let row = dpairs.row(b * NUM_PAIRS + k);
                let mut di = dobs.slice_mut(s![b, i * ENTITY_DIM..(i + 1) * ENTITY_DIM]);
                di += &row.slice(s![..ENTITY_DIM]);
                let mut dj = dobs.slice_mut(s![b, j * ENTITY_DIM..(j + 1) * ENTITY_DIM]);
                dj += &row.slice(s![ENTITY_DIM..]);
            }
        }
    }

    Gradients {
        params: g,
        observations: dobs,
    }
}

fn dialogue_backward(
    p: &Parameters,
    inputs: &Inputs,
    dc: &DialogueCache,
    dd: Array2<f64>,
    g: &mut Parameters,
) {
    let h = p.hidden;
    let dxf = gru_backward(
        p.gru_forward.as_ref().expect("gru"),
        &dc.forward,
        dd.slice(s![.., ..h]).to_owned(),
        g.gru_forward.as_mut().expect("gru"),
    );
    let dxb = gru_backward(
        p.gru_backward.as_ref().expect("gru"),
        &dc.backward,
        dd.slice(s![.., h..]).to_owned(),
        g.gru_backward.as_mut().expect("gru"),
    );
    let batch = dd.nrows();
    let mut demb = dxf;
    for (t, dx) in dxb.iter().enumerate() {
        for b in 0..batch {
            if t < dc.lengths[b] {
                let mut row = demb[dc.lengths[b] - 1 - t].row_mut(b);
                row += &dx.row(b);
            }
        }
    }
    let ge = g.embedding.as_mut().expect("embedding");
    for (t, mut de) in demb.into_iter().enumerate() {
        apply_mask(&mut de, &dc.masks[t]);
        de.zip_mut_with(&dc.act[t], |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        for (b, toks) in inputs.tokens.iter().enumerate() {
            if let Some(&tok) = toks.get(t) {
                let mut row = ge.table.row_mut(tok);
                row += &de.row(b);
                ge.b += &de.row(b);
            }
        }
    }
}

/// Context encoding of one observation in eval mode (relation sum included
/// for relation variants).
pub fn encode_context(p: &Parameters, observation: &[f64]) -> Array1<f64> {
    let obs =
        Array2::from_shape_vec((1, OBSERVATION_DIM), observation.to_vec()).expect("28 values");
    context_forward(p, &obs, 0.0, &mut Mode::Eval)
        .0
        .row(0)
        .to_owned()
}

/// Sum of the shared pair layer over all 21 slot pairs, eval mode.
pub fn relation_sum(p: &Parameters, observation: &[f64]) -> Option<Array1<f64>> {
    let rel = p.relation.as_ref()?;
    let obs =
        Array2::from_shape_vec((1, OBSERVATION_DIM), observation.to_vec()).expect("28 values");
    Some(
        relation_forward(&obs, rel, 0.0, &mut Mode::Eval)
            .0
            .row(0)
            .to_owned(),
    )
}

/// Final forward and backward recurrent states, concatenated, eval mode.
pub fn encode_dialogue(p: &Parameters, tokens: &[usize]) -> Option<Array1<f64>> {
    p.embedding.as_ref()?;
    let (out, _) = dialogue_forward(p, &[tokens.to_vec()], 0.0, &mut Mode::Eval);
    Some(out.row(0).to_owned())
}

/// Finite-difference checks of the hand-written backward pass.
pub mod gradcheck {
    use super::*;
    use crate::model::config::{ModelConfig, Variant};

    const EPS: f64 = 1e-5;

    pub(crate) fn inputs(batch: usize, vocab: usize, seed: u64) -> Inputs {
        let mut r = rng::seeded(seed);
        let observations = Array2::from_shape_simple_fn((batch, OBSERVATION_DIM), || {
            rng::uniform(&mut r, -0.99, 0.99)
        });
        let tokens = (0..batch)
            .map(|b| {
                (0..(3 + b % 3))
                    .map(|_| rng::below(&mut r, vocab as u64) as usize)
                    .collect()
            })
            .collect();
        Inputs {
            observations,
            tokens,
        }
    }

    /// Parameters scaled up so activations are not all near zero.
    pub(crate) fn params(variant: Variant, vocab: usize, seed: u64) -> Parameters {
        let mut c = ModelConfig::new(variant, seed);
        c.hidden = 6;
        c.init_range = 0.5;
        Parameters::init(&c, vocab)
    }

    fn loss(p: &Parameters, x: &Inputs, labels: &[usize]) -> f64 {
        cross_entropy(&forward(p, x, 0.0, Mode::Eval).logits, labels).0
    }

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    /// Worst relative error between analytic and central-difference
    /// gradients of the mean cross-entropy, over every parameter value.
    pub fn loss_gradient_error(variant: Variant, seed: u64) -> f64 {
        let vocab = 5;
        let p = params(variant, vocab, seed);
        let x = inputs(3, vocab, rng::derive_seed(seed, 1));
        let labels = [0, 3, 6];
        let f = forward(&p, &x, 0.0, Mode::Eval);
        let (_, dl) = cross_entropy(&f.logits, &labels);
        let analytic = backward(&p, &x, &f, &dl).params;
        let grads: Vec<Vec<f64>> = analytic
            .tensors()
            .iter()
            .map(|(_, _, d)| d.to_vec())
            .collect();
        let mut probe = p.clone();
        let count = probe.slices_mut().len();
        let mut worst = 0.0f64;
        for (ti, grad) in grads.iter().enumerate().take(count) {
            for (k, &a) in grad.iter().enumerate() {
                let orig = probe.slices_mut()[ti].1[k];
                probe.slices_mut()[ti].1[k] = orig + EPS;
                let up = loss(&probe, &x, &labels);
                probe.slices_mut()[ti].1[k] = orig - EPS;
                let down = loss(&probe, &x, &labels);
                probe.slices_mut()[ti].1[k] = orig;
                let numeric = (up - down) / (2.0 * EPS);
                if numeric.abs() > 1e-9 || a.abs() > 1e-9 {
                    worst = worst.max(rel_err(a, numeric));
                }
            }
        }
        worst
    }

    /// Worst relative error of d(sum of context encoding)/d(observation).
    pub fn context_input_gradient_error(variant: Variant, seed: u64) -> f64 {
        let p = params(variant, 4, seed);
        let x = inputs(2, 4, rng::derive_seed(seed, 1));
        let sum_ctx = |x: &Inputs| -> f64 {
            (0..x.len())
                .map(|b| encode_context(&p, x.observations.row(b).as_slice().unwrap()).sum())
                .sum()
        };
        let (ctx, cache) = context_forward(&p, &x.observations, 0.0, &mut Mode::Eval);
        // Route a unit gradient through a classifier that copies the context.
        let mut copy = p.clone();
        copy.variant = if variant.uses_relations() {
            Variant::ContextRn
        } else {
            Variant::ContextMlp
        };
        copy.embedding = None;
        copy.classifier.w = Array2::eye(p.hidden);
        copy.classifier.b = Array1::zeros(p.hidden);
        let fwd = Forward {
            logits: ctx.clone(),
            context: cache,
            dialogue: None,
            features: ctx,
        };
        let dlogits = Array2::ones((x.len(), p.hidden));
        let analytic = backward(&copy, &x, &fwd, &dlogits).observations;
        let mut worst = 0.0f64;
        for b in 0..x.len() {
            for i in 0..OBSERVATION_DIM {
                let mut xp = x.clone();
                xp.observations[[b, i]] += EPS;
                let mut xm = x.clone();
                xm.observations[[b, i]] -= EPS;
                let numeric = (sum_ctx(&xp) - sum_ctx(&xm)) / (2.0 * EPS);
                let a = analytic[[b, i]];
                if numeric.abs() > 1e-9 || a.abs() > 1e-9 {
                    worst = worst.max(rel_err(a, numeric));
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::{context_input_gradient_error, inputs, loss_gradient_error, rel_err};
    use super::*;
    use crate::model::config::Variant;

    fn params(variant: Variant, vocab: usize) -> Parameters {
        super::gradcheck::params(variant, vocab, 9)
    }

    fn check_params(variant: Variant, tol: f64) {
        let worst = loss_gradient_error(variant, 9);
        assert!(worst < tol, "{variant}: worst relative error {worst}");
    }

    #[test]
    fn param_gradients_context_mlp() {
        check_params(Variant::ContextMlp, 1e-4);
    }

    #[test]
    fn param_gradients_context_rn() {
        check_params(Variant::ContextRn, 1e-4);
    }

    #[test]
    fn param_gradients_full_mlp() {
        check_params(Variant::FullMlp, 1e-3);
    }

    #[test]
    fn param_gradients_full_rn() {
        check_params(Variant::FullRn, 1e-3);
    }

    #[test]
    fn input_gradient_plain_context() {
        let worst = context_input_gradient_error(Variant::ContextMlp, 3);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn input_gradient_relation_context() {
        let worst = context_input_gradient_error(Variant::ContextRn, 3);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn uniform_logits_loss_is_ln7() {
        let logits = Array2::zeros((4, NUM_SLOTS));
        let (l, _) = cross_entropy(&logits, &[0, 1, 2, 6]);
        assert!((l - 7f64.ln()).abs() < 1e-12);
        assert!((l - 1.9459).abs() < 1e-4);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = inputs(5, 3, 1);
        let p = params(Variant::FullRn, 3);
        let probs = softmax(&forward(&p, &x, 0.0, Mode::Eval).logits);
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_relu_zero() {
        let mut p = params(Variant::ContextMlp, 3);
        p.context.b.fill(0.0);
        let out = encode_context(&p, &[0.0; OBSERVATION_DIM]);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identical_rows_relation_is_21_times_one_pair() {
        let p = params(Variant::ContextRn, 3);
        let row = [0.3, -0.2, 0.5, -0.7];
        let obs: Vec<f64> = (0..NUM_SLOTS).flat_map(|_| row).collect();
        let sum = relation_sum(&p, &obs).unwrap();
        let pair = Array2::from_shape_vec((1, 8), [row, row].concat()).unwrap();
        let single = relu(affine(pair.view(), p.relation.as_ref().unwrap()));
        for (a, b) in sum.iter().zip(single.row(0)) {
            assert!((a - 21.0 * b).abs() < 1e-12);
        }
        assert_eq!(slot_pairs().len(), 21);
    }

    #[test]
    fn eval_mode_deterministic_and_single_token() {
        let p = params(Variant::FullMlp, 4);
        let a = encode_dialogue(&p, &[3]).unwrap();
        let b = encode_dialogue(&p, &[3]).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn padding_does_not_change_outputs() {
        let p = params(Variant::FullRn, 5);
        let x = inputs(3, 5, 2);
        let batched = forward(&p, &x, 0.0, Mode::Eval).logits;
        for b in 0..3 {
            let single = Inputs {
                observations: x.observations.slice(s![b..b + 1, ..]).to_owned(),
                tokens: vec![x.tokens[b].clone()],
            };
            let l = forward(&p, &single, 0.0, Mode::Eval).logits;
            for (u, v) in l.row(0).iter().zip(batched.row(b)) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_gradients_match_with_fixed_masks() {
        let p = params(Variant::FullRn, 5);
        let x = inputs(3, 5, 6);
        let labels = [1, 2, 5];
        let mut r1 = rng::seeded(77);
        let f = forward(&p, &x, 0.5, Mode::Train(&mut r1));
        let (_, dl) = cross_entropy(&f.logits, &labels);
        let g = backward(&p, &x, &f, &dl).params;
        let eps = 1e-5;
        let mut probe = p.clone();
        let lossat = |probe: &Parameters| {
            let mut r = rng::seeded(77);
            cross_entropy(
                &forward(probe, &x, 0.5, Mode::Train(&mut r)).logits,
                &labels,
            )
            .0
        };
        let target = g.context.w[[1, 2]];
        probe.context.w[[1, 2]] += eps;
        let up = lossat(&probe);
        probe.context.w[[1, 2]] -= 2.0 * eps;
        let down = lossat(&probe);
        let numeric = (up - down) / (2.0 * eps);
        assert!(rel_err(target, numeric) < 1e-4 || (target.abs() < 1e-9 && numeric.abs() < 1e-9));
    }
}
