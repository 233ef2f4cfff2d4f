use carpenter_core::carpenter::{build, build_case2, Mode, Options, Pipeline, ResultKind};
use carpenter_core::diagonal::{classify, DiagonalSpec, Tail, Verdict};
use carpenter_core::tetris::TetrisStream;
use carpenter_core::verify::{check_projection, check_rows};

fn constant(prefix: Vec<f64>, c: f64) -> DiagonalSpec {
    DiagonalSpec::new(prefix, Some(Tail::Constant { c })).unwrap()
}

#[test]
fn full_and_shortcut_pipelines_agree_on_diagonal() {
    let d = vec![0.05, 0.15, 0.1, 0.55, 0.95, 0.2];
    let spec = DiagonalSpec::finite(d.clone()).unwrap();
    for pipeline in [Pipeline::Shortcut, Pipeline::Full] {
        let r = build(&spec, &Options { pipeline, ..Options::default() }).unwrap();
        let p = r.matrix.unwrap();
        let report = check_projection(&p, &d, 1e-9);
        assert!(report.pass, "{pipeline:?}: {report:?}");
        assert_eq!(report.estimated_rank, 2);
    }
}

#[test]
fn streamed_build_completes_most_columns() {
    let r = build(&constant(vec![], 0.4), &Options { truncation_rows: 100, ..Options::default() }).unwrap();
    assert_eq!(r.kind, ResultKind::Streamed);
    let block = &r.block_summaries[0];
    let stream = &r.streams.as_ref().unwrap().blocks[0].stream;
    let touched = stream.position_origins().len();
    assert!(block.completed_columns as f64 >= 0.98 * touched as f64);
    assert!(block.completed_max_error <= 1e-12);
}

#[test]
fn complement_route_rows_describe_complement() {
    let spec = constant(vec![], 0.9);
    assert_eq!(classify(&spec).verdict, Verdict::CaseII);
    let mut built = build_case2(&spec).unwrap();
    assert!(built.complemented);
    let stream = &mut built.blocks[0].stream;
    stream.advance_to(40).unwrap();
    let cc = stream.completed_columns();
    assert!(cc.norms_sq.iter().all(|x| (1.0 - x - 0.9).abs() < 1e-12));
}

#[test]
fn blocks_with_several_heads_are_disjoint() {
    let spec = constant(vec![0.8, 0.3, 0.6, 0.7], 0.25);
    let mut built = build_case2(&spec).unwrap();
    assert_eq!(built.blocks.len(), 3);
    let mut seen = std::collections::BTreeSet::new();
    for block in &mut built.blocks {
        block.stream.advance_to(30).unwrap();
        assert!(check_rows(block.stream.rows()) < 1e-12);
        let cc = block.stream.completed_columns();
        assert!(cc.max_error() < 1e-12);
        for idx in block.stream.position_origins() {
            assert!(seen.insert(idx), "index {idx} in two blocks");
        }
    }
    assert!(seen.contains(&0) && seen.contains(&1) && seen.contains(&2) && seen.contains(&3));
}

#[test]
fn projection_prefix_is_a_projection() {
    let mut s = TetrisStream::from_spec(constant(vec![0.7], 0.25));
    s.advance_to(20).unwrap();
    let pp = s.projection_prefix(20).unwrap();
    assert!(pp.matrix.idempotence_defect() < 1e-12);
    assert!((pp.matrix.trace() - 20.0).abs() < 1e-11);
    assert!(pp.indices.windows(2).all(|w| w[0] < w[1]));
    for (k, &done) in pp.completed.iter().enumerate() {
        if done {
            let target = if pp.indices[k] == 0 { 0.7 } else { 0.25 };
            assert!((pp.matrix.get(k, k) - target).abs() < 1e-12);
        }
    }
}

#[test]
fn approximate_mode_on_feasible_power_tail() {
    // Tail 0.5·i⁻²: b = 0.5 from i = 1, a = 0.5(π²/6 − 1) from the rest.
    // The prefix 1 − π²/12 makes a − b = 0.
    let prefix = 1.0 - std::f64::consts::PI.powi(2) / 12.0;
    let spec = DiagonalSpec::new(vec![prefix], Some(Tail::power(0.5, 2.0))).unwrap();
    assert_eq!(classify(&spec).verdict, Verdict::CaseI);
    let opts = Options { mode: Mode::Approximate, epsilon: 1e-5, ..Options::default() };
    let r = build(&spec, &opts).unwrap();
    assert_eq!(r.kind, ResultKind::Approximate);
    let p = r.matrix.unwrap();
    assert!(r.verification.unwrap().pass);
    let truth = spec.materialize(p.dim());
    let worst = truth.iter().zip(p.diagonal()).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(worst <= r.approximation_error);
    assert!(r.approximation_error < 1e-2);
}
