use anchorscope::datasets::McqSample;
use anchorscope::discovery::{scan_samples, ScanOptions};
use anchorscope::lens::{frozen_ln_decomposition, Lens, Sigma};
use anchorscope::mitigation::edit_value_vector;
use anchorscope::model::{forward, logits, CaptureLevel, Hook, SwapMode};
use anchorscope::toyforge::{build_toy, toy_samples, ToySpec, ToyVocab};
use anchorscope::{Execution, LetterSet};
use proptest::prelude::*;

const LETTERS: LetterSet = LetterSet {
    ids: [0, 1, 2, 3, 4],
    leading_space: true,
};

fn tokens_strategy() -> impl Strategy<Value = Vec<u32>> {
    let v = ToyVocab.size() as u32;
    prop::collection::vec(0..v, 2..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frozen_ln_parts_sum_to_direct(seed in 0u64..1000, tokens in tokens_strategy(), learned in any::<bool>()) {
        let toy = build_toy(&ToySpec { ln_noise: 0.05, ..ToySpec::random(seed) }).unwrap();
        let (_, tr) = forward(&toy.weights, &tokens, CaptureLevel::FinalPosition, &[]).unwrap();
        let sigma = if learned { Sigma::LearnedLn } else { Sigma::PlainLn };
        let d = frozen_ln_decomposition(&Lens::new(&toy.weights, sigma), &tr, 0, 1).unwrap();
        prop_assert!((d.total() - d.direct).abs() < 1e-3, "{} vs {}", d.total(), d.direct);
    }

    #[test]
    fn value_patch_matches_persistent_edit(seed in 0u64..1000, tokens in tokens_strategy(), l2 in 0.0f32..10.0) {
        let toy = build_toy(&ToySpec::random(seed)).unwrap();
        let w = &toy.weights;
        let layer = w.config.n_layers - 1;
        let dim = (seed as usize * 7) % w.config.d_mlp;
        let hook = Hook::value_edit(w, layer, dim, 0, 1, 1.0, l2).unwrap();
        let patched = logits(w, &tokens, &[hook]).unwrap();
        let edited = edit_value_vector(w, layer, dim, 0, 1, 1.0, l2).unwrap();
        let persistent = logits(&edited, &tokens, &[]).unwrap();
        let gap = patched.iter().zip(&persistent).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        prop_assert!(gap < 1e-3, "gap {gap}");
    }

    #[test]
    fn earlier_positions_ignore_later_tokens(seed in 0u64..1000, tokens in tokens_strategy(), swap in 0u32..20) {
        let toy = build_toy(&ToySpec::random(seed)).unwrap();
        let mut changed = tokens.clone();
        let last = changed.len() - 1;
        changed[last] = swap % ToyVocab.size() as u32;
        let (_, a) = forward(&toy.weights, &tokens, CaptureLevel::Full, &[]).unwrap();
        let (_, b) = forward(&toy.weights, &changed, CaptureLevel::Full, &[]).unwrap();
        let (fa, fb) = (a.full.unwrap(), b.full.unwrap());
        for (ra, rb) in fa.resid.iter().zip(&fb.resid) {
            for t in 0..last {
                prop_assert_eq!(ra.row(t), rb.row(t));
            }
        }
    }

    #[test]
    fn literal_swap_is_a_no_op(seed in 0u64..1000, tokens in tokens_strategy(), pick in any::<(usize, usize, usize)>()) {
        let toy = build_toy(&ToySpec::random(seed)).unwrap();
        let w = &toy.weights;
        let hook = Hook::AttentionSwap {
            layer: pick.0 % w.config.n_layers,
            head: pick.1 % w.config.n_heads,
            pos_a: pick.2 % tokens.len(),
            pos_b: tokens.len() - 1,
            mode: SwapMode::Literal,
        };
        for level in [CaptureLevel::None, CaptureLevel::FinalPosition, CaptureLevel::Full] {
            let (base, _) = forward(w, &tokens, level, &[]).unwrap();
            let (swapped, _) = forward(w, &tokens, level, std::slice::from_ref(&hook)).unwrap();
            let gap = base.iter().zip(&swapped).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            prop_assert!(gap < 1e-4, "{level:?}: gap {gap}");
        }
    }
}

fn toy_set() -> (anchorscope::toyforge::ToyModel, Vec<McqSample>) {
    let toy = build_toy(&ToySpec::default()).unwrap();
    let samples = toy_samples(40, 4, 11).unwrap();
    (toy, samples)
}

#[test]
fn execution_modes_agree_on_scans() {
    let (toy, samples) = toy_set();
    let mut opts = ScanOptions {
        exec: Execution::Sequential,
        ..ScanOptions::default()
    };
    let seq = scan_samples(&toy.weights, &LETTERS, &samples, &opts).unwrap();
    opts.exec = Execution::Parallel;
    let par = scan_samples(&toy.weights, &LETTERS, &samples, &opts).unwrap();
    assert_eq!(seq, par);
}
