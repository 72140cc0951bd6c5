use adsl_bench::{asset_text, program, workcell};
use adsl_core::exec::{Controller, NullSink};
use adsl_core::{parse_program, pretty_print, RunOptions};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn parsing(c: &mut Criterion) {
    let text = asset_text("peg_in_hole.adsl");
    c.bench_function("parse corpus", |b| b.iter(|| parse_program(black_box(&text)).unwrap()));
    let p = program("peg_in_hole.adsl");
    c.bench_function("pretty print corpus", |b| b.iter(|| pretty_print(black_box(&p))));
}

fn running(c: &mut Criterion) {
    let p = program("peg_in_hole.adsl");
    for cell in ["aligned.json", "misaligned.json"] {
        let cfg = workcell(cell);
        c.bench_function(&format!("run {cell}"), |b| {
            b.iter(|| {
                let mut sink = NullSink;
                Controller::new(&p, cfg.clone(), RunOptions::default(), &mut sink).run()
            })
        });
    }
}

fn reversing(c: &mut Criterion) {
    let p = program("reversible_demo.adsl");
    let cfg = workcell("aligned.json");
    c.bench_function("run and fully reverse demo", |b| {
        b.iter(|| {
            let mut sink = NullSink;
            let mut ctl = Controller::new(&p, cfg.clone(), RunOptions::default(), &mut sink);
            ctl.run();
            ctl.reverse(None).unwrap().steps.len()
        })
    });
}

criterion_group!(benches, parsing, running, reversing);
criterion_main!(benches);
