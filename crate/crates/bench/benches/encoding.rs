use criterion::{criterion_group, criterion_main, Criterion};
use satpart::cipher::{encode, reference_keystream, Family, GeneratorSpec};

fn encoding(c: &mut Criterion) {
    for family in [Family::A51, Family::Bivium] {
        let spec = GeneratorSpec::standard(family);
        let state: Vec<bool> = (0..spec.state_bits()).map(|i| i % 5 < 2).collect();
        let ks = reference_keystream(&spec, &state).unwrap();
        c.bench_function(&format!("keystream_{}", spec.name), |b| {
            b.iter(|| reference_keystream(&spec, &state).unwrap())
        });
        c.bench_function(&format!("encode_{}", spec.name), |b| {
            b.iter(|| encode(&spec, &ks).unwrap())
        });
    }
}

criterion_group!(benches, encoding);
criterion_main!(benches);
