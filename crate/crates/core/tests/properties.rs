use carpenter_core::carpenter::{build, build_summable, complement, Options};
use carpenter_core::cli::{read_csv, write_csv};
use carpenter_core::diagonal::{classify, integrality_gap, DiagonalSpec, ExtReal, Tail, Verdict};
use carpenter_core::horn::{convex_mix_unitary, horn_build, MajorizationInput};
use carpenter_core::matrix::SymmetricMatrix;
use carpenter_core::moves::{ops_restore, ops_shift, OpsRequest};
use carpenter_core::verify::random_orthogonal;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0_f64
}

/// Finite diagonal whose sum is an integer.
fn integral_diagonal() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0_f64, 1..25).prop_map(|mut d| {
        let s: f64 = d.iter().sum();
        d.push((s.ceil() - s).clamp(0.0, 1.0));
        d
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classify_is_permutation_invariant(d in prop::collection::vec(unit(), 1..30), seed in any::<u64>()) {
        let mut shuffled = d.clone();
        let k = (seed as usize) % d.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let r1 = classify(&DiagonalSpec::finite(d).unwrap());
        let r2 = classify(&DiagonalSpec::finite(shuffled).unwrap());
        prop_assert_eq!(r1.verdict, r2.verdict);
        prop_assert!((r1.a_minus_b.unwrap() - r2.a_minus_b.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn complement_swaps_a_and_b(d in prop::collection::vec(0.0..1.0_f64, 1..30)) {
        // Entries at exactly 1/2 move between the sums, so keep clear of it.
        let d: Vec<f64> = d.into_iter().filter(|x| (x - 0.5).abs() > 1e-9).collect();
        prop_assume!(!d.is_empty());
        let spec = DiagonalSpec::finite(d).unwrap();
        let r = classify(&spec);
        let c = classify(&spec.complement().unwrap());
        let (ExtReal::Finite(a), ExtReal::Finite(b)) = (r.a, r.b) else { unreachable!() };
        let (ExtReal::Finite(ca), ExtReal::Finite(cb)) = (c.a, c.b) else { unreachable!() };
        prop_assert!((a - cb).abs() < 1e-12 && (b - ca).abs() < 1e-12);
    }

    #[test]
    fn finite_case_one_iff_integer_sum(d in prop::collection::vec(unit(), 1..30)) {
        let sum: f64 = d.iter().sum();
        let r = classify(&DiagonalSpec::finite(d).unwrap());
        prop_assume!((integrality_gap(sum) - 1e-9).abs() > 1e-11);
        prop_assert_eq!(r.verdict == Verdict::CaseI, integrality_gap(sum) <= 1e-9);
    }

    #[test]
    fn horn_round_trip(
        lambdas in prop::collection::vec(0.1..2.0_f64, 1..6),
        extra in 0usize..8,
        seed in any::<u64>(),
    ) {
        let m = lambdas.len() + extra;
        let q = random_orthogonal(m, seed, 0);
        let diag: Vec<f64> = (0..m)
            .map(|i| (0..lambdas.len()).map(|k| lambdas[k] * q[(i, k)] * q[(i, k)]).sum())
            .collect();
        let s = horn_build(&MajorizationInput::new(lambdas.clone(), diag.clone())).unwrap();
        let mut expected = lambdas;
        expected.resize(m, 0.0);
        expected.sort_by(f64::total_cmp);
        prop_assert!(close(&s.eigenvalues(), &expected, 1e-9));
        prop_assert!(close(&s.diagonal(), &diag, 1e-10));
    }

    #[test]
    fn convex_mix_preserves_spectrum(
        d in integral_diagonal(),
        w in unit(),
        alpha in 0.0..=1.0_f64,
        seed in any::<usize>(),
    ) {
        // Coordinates in different direct summands are uncoupled.
        let p = build_summable(&d).unwrap().direct_sum(&SymmetricMatrix::from_diagonal(&[w]));
        let (i, j) = (seed % d.len(), d.len());
        let q = convex_mix_unitary(&p, i, j, alpha).unwrap();
        prop_assert!(close(&q.eigenvalues(), &p.eigenvalues(), 1e-10));
        let mixed = alpha * p.get(i, i) + (1.0 - alpha) * p.get(j, j);
        prop_assert!((q.get(i, i) - mixed).abs() < 1e-12);
    }

    #[test]
    fn ops_round_trip(d in prop::collection::vec(unit(), 2..12), frac in 0.0..=1.0_f64) {
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&x, &y| d[x].total_cmp(&d[y]));
        let cut = d.len() / 2;
        let (i0, i1) = (order[..cut].to_vec(), order[cut..].to_vec());
        prop_assume!(!i0.is_empty());
        let mass: f64 = i0.iter().map(|&i| d[i]).sum();
        let room: f64 = i1.iter().map(|&i| 1.0 - d[i]).sum();
        let eta0 = frac * mass.min(room);
        let req = OpsRequest { d: d.clone(), i0: i0.clone(), i1: i1.clone(), eta0 };
        let dt = ops_shift(&req).unwrap();
        let removed: f64 = i0.iter().map(|&i| d[i] - dt[i]).sum();
        let added: f64 = i1.iter().map(|&i| dt[i] - d[i]).sum();
        prop_assert!((removed - eta0).abs() < 1e-12 && (added - eta0).abs() < 1e-12);

        let start = SymmetricMatrix::from_diagonal(&dt);
        let (e, plan) = ops_restore(&start, &dt, &d, &i0, &i1).unwrap();
        prop_assert!(close(&e.diagonal(), &d, 1e-9));
        prop_assert!(close(&e.eigenvalues(), &start.eigenvalues(), 1e-9));
        prop_assert!(plan.replay(&start).max_abs_diff(&e) <= 1e-12);
        prop_assert!(plan.len() <= i0.len() + i1.len());
    }

    #[test]
    fn double_complement_is_identity(d in integral_diagonal()) {
        let p = build_summable(&d).unwrap();
        let back = complement(&complement(&p));
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                if i != j {
                    prop_assert_eq!(back.get(i, j).to_bits(), p.get(i, j).to_bits());
                } else {
                    prop_assert!((back.get(i, i) - p.get(i, i)).abs() <= f64::EPSILON);
                }
            }
        }
    }

    #[test]
    fn build_is_permutation_covariant(d in integral_diagonal()) {
        let mut rev = d.clone();
        rev.reverse();
        let r = build(&DiagonalSpec::finite(rev.clone()).unwrap(), &Options::default()).unwrap();
        let p = r.matrix.unwrap();
        prop_assert!(close(&p.diagonal(), &rev, 1e-9));
        prop_assert!(p.idempotence_defect() <= 1e-9);
    }

    #[test]
    fn generic_triples_have_negative_entries(x in 0.01..0.99_f64, y in 0.01..0.99_f64) {
        let z = 2.0 - x - y;
        prop_assume!(z > 0.01 && z < 0.99);
        let p = build_summable(&[x, y, z]).unwrap();
        let min = [(0, 1), (0, 2), (1, 2)].iter().map(|&(i, j)| p.get(i, j)).fold(f64::INFINITY, f64::min);
        prop_assert!(min < -1e-12);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(d in integral_diagonal()) {
        let p = build_summable(&d).unwrap();
        let mut buf = Vec::new();
        write_csv(&p, &mut buf).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        for (x, y) in back.diagonal().iter().zip(p.diagonal()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        prop_assert_eq!(back, p);
    }

    #[test]
    fn constant_tails_classify_by_value(c in unit(), prefix in prop::collection::vec(unit(), 0..5)) {
        let spec = DiagonalSpec::new(prefix, Some(Tail::Constant { c })).unwrap();
        let r = classify(&spec);
        if c == 0.0 || c == 1.0 {
            prop_assert_ne!(r.verdict, Verdict::CaseII);
        } else {
            prop_assert_eq!(r.verdict, Verdict::CaseII);
        }
    }
}
