use confperf::audit::{generate, GeneratorSpec};
use confperf::cpp::{candidate_cpp, zfree_cpp, zmod_fixed_fit, zmod_variable_fit, IntervalKind};
use confperf::data::{read_csv, write_csv, RngStream, TargetKind};
use confperf::learners::{ConstantLearner, GdErm, Knn, LossFn, SgdErm, SymbolAlphabet};
use confperf::quantile::candidate_levels;
use confperf::subroutines::SubroutineConfig;
use confperf::{Dataset32, Dataset64, Error};
use proptest::prelude::*;

fn linear(n: usize, seed: u64) -> Dataset64 {
    generate(&GeneratorSpec::linear_normal(5), n, &mut RngStream::new(seed).rng()).unwrap()
}

#[test]
fn csv_round_trip_preserves_records() {
    for spec in [GeneratorSpec::linear_student(3), GeneratorSpec::blobs(2), GeneratorSpec::glyphs()] {
        let d: Dataset64 = generate(&spec, 60, &mut RngStream::new(2).rng()).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let kind = if spec.is_classification() { TargetKind::Classification } else { TargetKind::Regression };
        let back: Dataset64 = read_csv(buf.as_slice(), kind).unwrap();
        assert_eq!(back.len(), d.len());
        for i in 0..d.len() {
            assert_eq!(back.features(i), d.features(i));
            assert_eq!(back.target(i), d.target(i));
        }
    }
}

#[test]
fn single_precision_pipeline() {
    let d: Dataset32 = generate(&GeneratorSpec::linear_normal(3), 400, &mut RngStream::new(1).rng()).unwrap();
    let out = candidate_cpp(&d, &SgdErm::default(), &LossFn::squared_error(), 0.1, &RngStream::new(2)).unwrap();
    assert!(out.interval.lower.is_finite() && out.interval.upper.is_finite());
    assert!(out.interval.lower <= out.interval.upper);
    let z = zfree_cpp(&d, &GdErm::default(), &LossFn::squared_error(), 0.2, 20, &RngStream::new(3)).unwrap();
    assert_eq!(z.interval.kind, IntervalKind::ZFree);
}

#[test]
fn large_zfree_split_has_finite_interval() {
    let d = generate::<f64, _>(&GeneratorSpec::linear_student(5), 75_000, &mut RngStream::new(4).rng()).unwrap();
    let out = zfree_cpp(&d, &GdErm::default(), &LossFn::squared_error(), 0.1, 1000, &RngStream::new(5)).unwrap();
    assert_eq!(out.plan.block_size, 74);
    assert!(out.interval.lower.is_finite() && out.interval.upper.is_finite());
}

#[test]
fn constant_learner_zfree_matches_candidate_structure() {
    // A learner that ignores its data makes every block candidate the same
    // function, so both constructions reduce to quantiles of point losses.
    let d = linear(2000, 6);
    let c = ConstantLearner { value: 1.0 };
    let loss = LossFn::squared_error();
    let z = zfree_cpp(&d, &c, &loss, 0.1, 199, &RngStream::new(1)).unwrap();
    let (lo, hi) = candidate_levels(0.1, 199).unwrap();
    let l: Vec<f64> = z.plan.i_ev.iter().map(|&j| match d.target(j) {
        confperf::data::Target::Real(y) => (y - 1.0) * (y - 1.0),
        _ => unreachable!(),
    }).collect();
    let s = confperf::LossSample64::new(l).unwrap();
    assert_eq!((z.interval.lower, z.interval.upper), (s.quantile(lo), s.quantile(hi)));
}

#[test]
fn zmod_fixed_width_is_identical_everywhere() {
    let d = linear(4200, 7);
    let p = zmod_fixed_fit(&d, &GdErm::default(), &LossFn::squared_error(), 0.1, 100, &RngStream::new(8), &SubroutineConfig::default()).unwrap();
    let probe = linear(1000, 9);
    let w0 = p.query(probe.record(0)).unwrap().width();
    assert!(probe.records().all(|r| p.query(r).unwrap().width() == w0));
}

#[test]
fn zmod_queries_are_pure() {
    let d = linear(2100, 10);
    let p = zmod_variable_fit(&d, &GdErm::default(), &LossFn::squared_error(), 0.1, 50, &RngStream::new(1), &SubroutineConfig::default()).unwrap();
    for r in linear(50, 11).records() {
        assert_eq!(p.query(r).unwrap(), p.query(r).unwrap());
    }
}

#[test]
fn wrong_task_errors_propagate() {
    let blobs: Dataset64 = generate(&GeneratorSpec::blobs(2), 400, &mut RngStream::new(1).rng()).unwrap();
    assert!(matches!(
        candidate_cpp(&blobs, &GdErm::default(), &LossFn::squared_error(), 0.1, &RngStream::new(0)),
        Err(Error::WrongTask(_))
    ));
    let reg = linear(400, 1);
    let sym = LossFn::symbolic(SymbolAlphabet::binary());
    assert!(candidate_cpp(&reg, &Knn::default(), &sym, 0.1, &RngStream::new(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn candidate_intervals_nest_in_alpha(seed in any::<u64>(), a in 0.02f64..0.5, gap in 0.01f64..0.45) {
        let d = linear(300, seed);
        let s = RngStream::new(seed);
        let wide = candidate_cpp(&d, &GdErm::default(), &LossFn::squared_error(), a, &s).unwrap().interval;
        let narrow = candidate_cpp(&d, &GdErm::default(), &LossFn::squared_error(), a + gap, &s).unwrap().interval;
        prop_assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
    }

    #[test]
    fn constructions_are_deterministic(seed in any::<u64>()) {
        let d = linear(630, seed);
        let s = RngStream::new(seed.rotate_left(7));
        let a = zfree_cpp(&d, &SgdErm::default(), &LossFn::squared_error(), 0.1, 30, &s).unwrap();
        let b = zfree_cpp(&d, &SgdErm::default(), &LossFn::squared_error(), 0.1, 30, &s).unwrap();
        prop_assert_eq!(a.interval, b.interval);
        prop_assert_eq!(a.plan, b.plan);
    }
}
