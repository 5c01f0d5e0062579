use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use interlace_bench::ramp;
use interlace_core::{fft2c_tensor, Padding, Shape, Tape};

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft2c");
    for n in [64, 128, 256] {
        let x = ramp(Shape::new(1, n, n, 32));
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| b.iter(|| fft2c_tensor(x).unwrap()));
    }
    group.finish();
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_9x9_32x32");
    group.sample_size(20);
    for n in [32, 64] {
        let x = ramp(Shape::new(1, n, n, 32));
        let w = ramp(Shape::new(9, 9, 32, 32));
        let bias = ramp(Shape::new(1, 1, 1, 32));
        group.bench_with_input(BenchmarkId::new("forward", n), &n, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(bias.clone()));
                tape.conv2d(xv, wv, bv, Padding::Zero).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", n), &n, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.leaf(x.clone(), true);
                let wv = tape.leaf(w.clone(), true);
                let bv = tape.leaf(bias.clone(), true);
                let y = tape.conv2d(xv, wv, bv, Padding::Zero).unwrap();
                let loss = tape.sum(y);
                tape.backward(loss).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, fft, conv);
criterion_main!(benches);
