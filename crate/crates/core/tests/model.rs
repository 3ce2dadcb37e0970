use modlens::corpus::{encode_sample, parse_digits, FormatSpec};
use modlens::model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        num_layers: 1,
        num_heads: 2,
        d_model: 8,
        vocab_size: 10,
        context_window: 6,
        dropout_prob: 0.1,
    }
}

/// Tiny model with O(1) random weights so that every gradient component is non-trivial.
fn tiny_params(seed: u64) -> Params<f64> {
    let mut p = Params::<f64>::init(&tiny_config(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let layout = p.layout.clone();
    for e in &layout.entries {
        let base = if e.role == TensorRole::NormScale { 1.0 } else { 0.0 };
        for v in &mut p.values[e.range()] {
            *v = base + rng.random_range(-0.5..0.5);
        }
    }
    p
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Vec<u8>> {
    (0..n)
        .map(|_| (0..len).map(|_| rng.random_range(0..10u8)).collect())
        .collect()
}

fn gradient_check(mask: LossMask) -> f64 {
    let mut params = tiny_params(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = random_batch(&mut rng, 3, 7);
    let (_, grads) = loss_and_grads(&params, &batch, mask, None).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.values.len() {
        let orig = params.values[i];
        params.values[i] = orig + h;
        let up = batch_loss(&params, &batch, mask).unwrap();
        params.values[i] = orig - h;
        let down = batch_loss(&params, &batch, mask).unwrap();
        params.values[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.values[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    let worst = gradient_check(LossMask::Full);
    assert!(worst < 1e-4, "max relative error {worst}");
    let worst = gradient_check(LossMask::AnswerOnly { result_width: 3 });
    assert!(worst < 1e-4, "max relative error {worst} (answer-only)");
}

#[test]
fn uniform_logits_give_ln10() {
    let mut p = Params::<f64>::init(&ModelConfig::addition(), 0).unwrap();
    p.tensor_mut("lm_head.weight").unwrap().fill(0.0);
    let s = encode_sample(349, 705, &FormatSpec::addition()).unwrap();
    let loss = batch_loss(&p, &[s.tokens], LossMask::Full).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn loss_is_a_mean_over_the_batch() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
    let s = encode_sample(128, 256, &FormatSpec::addition()).unwrap().tokens;
    let (one, _) = loss_and_grads(&p, &[s.clone()], LossMask::Full, None).unwrap();
    let (four, _) = loss_and_grads(&p, &vec![s; 4], LossMask::Full, None).unwrap();
    assert!((one - four).abs() < 1e-9, "{one} vs {four}");
}

#[test]
fn ragged_and_overlong_batches_are_rejected() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
    let batch = vec![vec![1u8; 16], vec![1u8; 15]];
    assert!(loss_and_grads(&p, &batch, LossMask::Full, None).is_err());
    assert!(forward(&p, &[0u8; 16], Mode::Eval, None).is_err());
}

#[test]
fn eval_forward_is_deterministic_and_train_needs_rng() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
    let toks = parse_digits("003490070545010").unwrap();
    let a = forward(&p, &toks, Mode::Eval, None).unwrap();
    let b = forward(&p, &toks, Mode::Eval, None).unwrap();
    assert_eq!(a.logits, b.logits);
    assert!(forward(&p, &toks, Mode::Train, None).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = forward(&p, &toks, Mode::Train, Some(&mut rng)).unwrap();
    assert_ne!(t.logits, a.logits);
}

#[test]
fn untrained_model_is_near_uniform() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
    let toks = parse_digits("003490070545010").unwrap();
    let rows = next_token_distribution(&p, &toks).unwrap();
    assert_eq!(rows.len(), 15);
    for row in &rows {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(row.iter().cloned().fold(0.0, f64::max) < 0.5);
    }
}

#[test]
fn distributions_are_softmaxed_logits() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 4).unwrap();
    let toks = parse_digits("012345678901234").unwrap();
    let trace = forward(&p, &toks, Mode::Eval, None).unwrap();
    let rows = next_token_distribution(&p, &toks).unwrap();
    for (t, row) in rows.iter().enumerate() {
        let logits: Vec<f64> = trace.logits_row(t).iter().map(|&v| v as f64).collect();
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        for (pv, l) in row.iter().zip(&logits) {
            assert!((pv - l.exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn causal_mask_holds() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let toks: Vec<u8> = (0..15).map(|_| rng.random_range(0..10u8)).collect();
        let k = rng.random_range(1..15);
        let mut other = toks.clone();
        other[k] = (other[k] + 1 + rng.random_range(0..9u8)) % 10;
        let a = forward(&p, &toks, Mode::Eval, None).unwrap();
        let b = forward(&p, &other, Mode::Eval, None).unwrap();
        assert_eq!(a.logits[..k * 10], b.logits[..k * 10]);
        assert_ne!(a.logits[k * 10..], b.logits[k * 10..]);
    }
}

#[test]
fn dropout_vanishes_as_probability_goes_to_zero() {
    let mut cfg = ModelConfig::addition();
    let toks = parse_digits("003490070545010").unwrap();
    let mut gaps = Vec::new();
    for p in [0.3, 0.1, 1e-3] {
        cfg.dropout_prob = p;
        let params = Params::<f64>::init(&cfg, 2).unwrap();
        let eval = forward(&params, &toks, Mode::Eval, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 200;
        let mut mean = vec![0.0; eval.logits.len()];
        for _ in 0..draws {
            let t = forward(&params, &toks, Mode::Train, Some(&mut rng)).unwrap();
            for (m, v) in mean.iter_mut().zip(&t.logits) {
                *m += v / draws as f64;
            }
        }
        let gap = mean
            .iter()
            .zip(&eval.logits)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        gaps.push(gap);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 1e-2, "{gaps:?}");
}

#[test]
fn greedy_generation_contract() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
    let prefix = parse_digits("0034900705").unwrap();
    assert_eq!(greedy_generate(&p, &prefix, 0).unwrap(), prefix);
    let out = greedy_generate(&p, &prefix, 6).unwrap();
    assert_eq!(out.len(), 16);
    assert_eq!(out, greedy_generate(&p, &prefix, 6).unwrap());
    assert!(greedy_generate(&p, &prefix, 7).is_err());
    // batched decoding agrees with one-at-a-time decoding
    let other = parse_digits("0012800256").unwrap();
    let batch = greedy_generate_batch(&p, &[prefix.clone(), other.clone()], 6).unwrap();
    assert_eq!(batch[0], out);
    assert_eq!(batch[1], greedy_generate(&p, &other, 6).unwrap());
}

#[test]
fn argmax_prefers_lowest_index_on_ties() {
    assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    assert_eq!(argmax(&[0.0f32; 10]), 0);
}

#[test]
fn hidden_representation_contract() {
    let p = Params::<f32>::init(&ModelConfig::addition(), 0).unwrap();
    let toks = encode_sample(349, 705, &FormatSpec::addition()).unwrap().tokens;
    let toks = &toks[..15];
    let h = hidden_representation(&p, toks, 9).unwrap();
    assert_eq!(h.len(), 48);
    assert_eq!(h, hidden_representation(&p, toks, 9).unwrap());
    let mut changed = toks.to_vec();
    changed[12] = 7;
    assert_eq!(h, hidden_representation(&p, &changed, 9).unwrap());
    assert!(hidden_representation(&p, toks, 15).is_err());
    let trace = forward(&p, toks, Mode::Eval, None).unwrap();
    assert_eq!(trace.hidden_at(9), &h[..]);
    let batched = hidden_representations(&p, &[toks.to_vec(), changed], 9).unwrap();
    assert_eq!(batched[0], h);
    assert_eq!(batched[1], h);
}
