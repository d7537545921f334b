use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rcd_bench::{bench_model, masked_block};
use rcd_core::decode::{block_logits, decode_sequence, decode_step_rcd, DecodeConfig, WarmStart};
use rcd_core::rng::{stream, substream};
use rcd_core::train::{block_example, loss_and_grad};
use rcd_core::ResidualState;

fn forward(c: &mut Criterion) {
    let params = bench_model();
    let state = masked_block(8, 8);
    c.bench_function("forward_block_16", |b| b.iter(|| block_logits(&params, &state, false).unwrap()));
}

fn backward(c: &mut Criterion) {
    let params = bench_model();
    let record: Vec<u32> = (0..16).map(|i| 2 + i % 10).collect();
    let mut rng = substream(1, stream::CORRUPTION);
    let ex = block_example(&record, 8, 8, 0.5, &mut rng).unwrap();
    c.bench_function("loss_and_grad_block_16", |b| b.iter(|| loss_and_grad(&params, &ex, 0.01).unwrap()));
}

fn decode(c: &mut Criterion) {
    let params = bench_model();
    let cfg = DecodeConfig { warm_start: WarmStart::None, ..Default::default() };
    let mut rng = substream(0, stream::SAMPLING);
    c.bench_function("rcd_step", |b| {
        b.iter_batched(
            || {
                let mut s = masked_block(8, 8);
                s.residuals = vec![Some(ResidualState::zero(params.dims.dim)); 8];
                s
            },
            |mut s| decode_step_rcd(&params, &mut s, &cfg, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let prompt: Vec<u32> = (0..8).map(|i| 2 + i % 10).collect();
    c.bench_function("decode_sequence_2_blocks", |b| {
        b.iter(|| decode_sequence(&params, None, &prompt, 2, &cfg).unwrap())
    });
}

criterion_group!(benches, forward, backward, decode);
criterion_main!(benches);
