use std::hint::black_box;

use blobtrack::io::{FrameSource, SynthSpec, Synthetic};
use blobtrack::pipeline::{run, DetectionContext, Execution, RunConfig};
use blobtrack::Params;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn source(frames: usize, resolution: f64) -> Synthetic {
    Synthetic::new(SynthSpec {
        frames,
        resolution,
        amplitude: Some(3.0),
        ..SynthSpec::default()
    })
    .expect("valid synthetic spec")
}

fn per_frame(c: &mut Criterion) {
    let src = source(3, 125.0);
    let ctx = DetectionContext::new(&src, None, 1, Params::default()).unwrap();
    let raw = ctx.load(&src, 2).unwrap();
    let mut group = c.benchmark_group("frame");
    group.sample_size(20);
    group.bench_function(format!("analyze/{}v", ctx.mesh().vertex_count()), |b| {
        b.iter(|| ctx.analyze(2, black_box(&raw)).unwrap())
    });
    group.finish();
}

fn run_modes(c: &mut Criterion) {
    let src = source(32, 60.0);
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    for (name, execution, w) in [
        ("sequential", Execution::Sequential, 1),
        ("parallel", Execution::Parallel, workers),
    ] {
        let config = RunConfig {
            workers: w,
            execution,
            ..RunConfig::default()
        };
        group.bench_with_input(BenchmarkId::new(name, src.time_steps()), &config, |b, cfg| {
            b.iter(|| run(cfg, &src).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, per_frame, run_modes);
criterion_main!(benches);
