use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eae_bench::{document, predictions, response};
use eae_core::extract::{parse_response, ExtractionRecord, ParseDiagnostics, ParseMode, RecordStatus};
use eae_core::score::{score_corpus, tuple_counts, MatchMode, ReportLabels};
use std::hint::black_box;

fn bench_tuple_counts(c: &mut Criterion) {
    let mut group = c.benchmark_group("tuple_counts");
    for args in [4, 16, 64] {
        let doc = document(0, 200, args);
        let preds = predictions(&doc);
        group.bench_with_input(BenchmarkId::from_parameter(args), &args, |b, _| {
            b.iter(|| tuple_counts(black_box(&preds), black_box(&doc.events[0].arguments), MatchMode::ExactNormalized))
        });
    }
    group.finish();
}

fn bench_score_corpus(c: &mut Criterion) {
    let docs: Vec<_> = (0..1000).map(|i| document(i, 300, 6)).collect();
    let records: Vec<_> = docs
        .iter()
        .map(|d| ExtractionRecord {
            doc_id: d.doc_id.clone(),
            event_index: 0,
            event_type: d.events[0].event_type.clone(),
            trigger: None,
            raw_response: String::new(),
            predictions: predictions(d),
            diagnostics: ParseDiagnostics { mode_used: ParseMode::Canonical, skipped_lines: 0, warnings: vec![] },
            status: RecordStatus::Ok,
        })
        .collect();
    let labels = ReportLabels::default();
    c.bench_function("score_corpus/1000_docs", |b| {
        b.iter(|| score_corpus(black_box(&records), black_box(&docs), MatchMode::HeadWord, &labels).unwrap())
    });
}

fn bench_parse(c: &mut Criterion) {
    let raw = response(&document(0, 200, 24));
    c.bench_function("parse_response/24_args", |b| b.iter(|| parse_response(black_box(&raw))));
}

criterion_group!(benches, bench_tuple_counts, bench_score_corpus, bench_parse);
criterion_main!(benches);
