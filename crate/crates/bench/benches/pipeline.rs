use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use gencomm::diffusion::sample;
use gencomm::rng::{normal_vec, seeded};
use gencomm::sidechannel::{ac_encode, bpsk_awgn_llrs, SideChannel, SideChannelConfig};
use gencomm::{Axis, LdpcCode, PromptClass};
use gencomm_bench::{analytic_context, mlp_context};

fn trials(c: &mut Criterion) {
    let mlp = mlp_context().unwrap();
    let point = mlp.points(Axis::Single).unwrap()[0];
    c.bench_function("trial_mlp_d16", |b| {
        let mut i = 0u32;
        b.iter(|| {
            i = i.wrapping_add(1);
            black_box(mlp.run_trial(&point, i).unwrap())
        })
    });
    let analytic = analytic_context().unwrap();
    c.bench_function("trial_analytic_d16", |b| {
        let mut i = 0u32;
        b.iter(|| {
            i = i.wrapping_add(1);
            black_box(analytic.run_trial(&point, i).unwrap())
        })
    });
}

fn sampler(c: &mut Criterion) {
    let ctx = mlp_context().unwrap();
    let model = gencomm::MlpDenoiser::new(gencomm::denoiser::MlpShape::new(16, 4), 2).unwrap();
    let cfg = gencomm::SamplerConfig {
        warm_start: Some(500),
        ..Default::default()
    };
    let mut rng = seeded(3);
    let z_c = normal_vec(&mut rng, 16);
    c.bench_function("sample_mlp_5_steps", |b| {
        b.iter(|| black_box(sample(&z_c, &model, Some(PromptClass(1)), &cfg, ctx.schedule(), &mut rng).unwrap()))
    });
}

fn side_channel(c: &mut Criterion) {
    let code = LdpcCode::regular(1024, 0x1d9c).unwrap();
    let mut rng = seeded(4);
    let cw = code.encode(&vec![0u8; code.k()]).unwrap();
    let llrs = bpsk_awgn_llrs(&cw, 3.0, &mut rng);
    c.bench_function("ldpc_1024_decode_3db", |b| b.iter(|| black_box(code.decode(&llrs, 50).unwrap())));

    let text = b"a photo of a red bicycle leaning on a brick wall at sunset";
    c.bench_function("ac_encode_prompt", |b| b.iter(|| black_box(ac_encode(text).unwrap())));

    let link = SideChannel::from_config(&SideChannelConfig::default()).unwrap();
    c.bench_function("send_prompt_10db", |b| {
        b.iter(|| black_box(link.send_prompt("class 2", 10.0, &mut rng).unwrap()))
    });
}

criterion_group!(benches, trials, sampler, side_channel);
criterion_main!(benches);
