use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use grounding_core::analysis::{analyze, NuanceDictionary};
use grounding_core::corpus::{build_vocab, make_examples, tokenize};
use grounding_core::engine::{Action, GameState};
use grounding_core::model::network::forward;
use grounding_core::model::{Inputs, Mode, ModelConfig, Parameters, Variant};
use grounding_core::synth;
use grounding_core::world::{generate_world, AttributeRanges};

fn worlds(c: &mut Criterion) {
    let mut seed = 0u64;
    c.bench_function("generate world k=5", |b| {
        b.iter(|| {
            seed += 1;
            generate_world(5, black_box(seed)).unwrap()
        })
    });
}

fn engine(c: &mut Criterion) {
    let world = generate_world(5, 3).unwrap();
    let id = world.shared_ids()[0];
    c.bench_function("session with 10 messages and 2 selections", |b| {
        b.iter(|| {
            let mut s = GameState::new(world.clone(), 0, 0).unwrap();
            let mut now = 20_000;
            for i in 0..10 {
                now += 1_000;
                s = s
                    .apply(
                        i % 2,
                        Action::Message {
                            text: "the dark one".into(),
                        },
                        now,
                    )
                    .unwrap();
            }
            now += 60_000;
            s = s.apply(0, Action::Select { entity_id: id }, now).unwrap();
            s.apply(1, Action::Select { entity_id: id }, now).unwrap()
        })
    });
}

fn corpus(c: &mut Criterion) {
    let line = "I have a tiny black dot slightly to the right of a larger gray one, don't you?";
    c.bench_function("tokenize utterance", |b| {
        b.iter(|| tokenize(black_box(line)))
    });
    let transcripts = synth::corpus(500, 1);
    let dictionaries = NuanceDictionary::shipped();
    let ranges = AttributeRanges::default();
    c.bench_function("analyze 500 dialogues", |b| {
        b.iter(|| analyze(&transcripts, &dictionaries, &ranges))
    });
}

fn model(c: &mut Criterion) {
    let transcripts = synth::corpus(8, 2);
    let vocab = build_vocab(&transcripts);
    let examples = make_examples(&transcripts, &vocab).examples;
    let batch: Vec<_> = examples.iter().take(16).collect();
    let inputs = Inputs::from_examples(&batch);
    let mut group = c.benchmark_group("forward batch of 16");
    for variant in Variant::ALL {
        let params = Parameters::init(&ModelConfig::new(variant, 1), vocab.len());
        group.bench_function(variant.name(), |b| {
            b.iter(|| forward(&params, &inputs, 0.0, Mode::Eval).logits)
        });
    }
    group.finish();
}

criterion_group!(benches, worlds, engine, corpus, model);
criterion_main!(benches);
