use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use oec_core::codec::{encode_tile, init_weights, ToyEncoderSpec};
use oec_core::imageio::synthetic_image;
use oec_core::tiler::partition;
use oec_core::SizeClass;

fn transform(c: &mut Criterion) {
    let mut g = c.benchmark_group("transform");
    g.sample_size(10);
    for class in SizeClass::ALL {
        let w = init_weights(&ToyEncoderSpec::for_class(class, 1)).unwrap();
        let image = synthetic_image(256, 256, 1);
        let batch = partition(&image, 0, 256).unwrap();
        g.throughput(Throughput::Elements(256 * 256));
        g.bench_with_input(BenchmarkId::new("tile_256", class), &batch, |b, batch| {
            b.iter(|| encode_tile(black_box(&batch.tiles[0]), batch.origins[0], &w).unwrap())
        });
    }
    g.finish();
}

fn tiling(c: &mut Criterion) {
    let image = synthetic_image(2048, 2048, 3);
    let mut g = c.benchmark_group("tiler");
    g.throughput(Throughput::Elements(2048 * 2048));
    for tile in [256u32, 600] {
        g.bench_with_input(BenchmarkId::new("partition_2048", tile), &tile, |b, &t| b.iter(|| partition(black_box(&image), 0, t).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, transform, tiling);
criterion_main!(benches);
