//! Property tests of structural invariants across lifts, fill-ins and
//! vector fields.

use proptest::prelude::*;
use roughfilter::cadlag_path::{p_variation, CadlagPath};
use roughfilter::experiments::BlockSystem;
use roughfilter::fillin::PathFunction;
use roughfilter::lift::{marcus_lift, stratonovich_lift};
use roughfilter::rde::{Smooth, VectorField};

/// Cadlag path on `[0, 1]` built from uniform samples, left-limit offsets
/// and jump flags.
fn cadlag() -> impl Strategy<Value = CadlagPath> {
    (1usize..=3, 2usize..=9).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec(-1.0f64..1.0, n * d),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(values, offsets, jumps)| {
                let times: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
                let pre = (0..n * d)
                    .map(|i| if i >= d && jumps[i / d] { values[i] + offsets[i] } else { values[i] })
                    .collect();
                CadlagPath::with_left_limits(times, values, pre, d).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn marcus_jumps_have_pure_level_one_logs(x in cadlag()) {
        let lift = marcus_lift(&x);
        prop_assert!(lift.point(0).is_identity());
        for k in lift.jump_indices() {
            let log = lift.pre_point(k).increment_to(lift.point(k)).log();
            prop_assert!(log.level2.iter().all(|v| v.abs() <= 1e-10));
        }
    }

    #[test]
    fn lift_satisfies_chen(x in cadlag()) {
        let lift = marcus_lift(&x);
        let n = lift.len();
        for s in 0..n {
            for t in s..n {
                for u in t..n {
                    prop_assert!(lift.chen_defect(s, t, u) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn jumpless_marcus_lift_is_stratonovich(values in prop::collection::vec(-2.0f64..2.0, 2..12)) {
        let n = values.len();
        let times: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let x = CadlagPath::scalar(times, values).unwrap();
        let (m, s) = (marcus_lift(&x), stratonovich_lift(&x).unwrap());
        prop_assert_eq!(m.points(), s.points());
    }

    #[test]
    fn p_variation_decreases_in_p(x in cadlag(), p in 1.0f64..3.0, dp in 0.0f64..1.0) {
        let a = p_variation(&x, p).unwrap();
        let b = p_variation(&x, p + dp).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn path_functions_hit_their_endpoints(x in cadlag()) {
        let lift = marcus_lift(&x);
        let (a, b) = (lift.point(0), lift.point(lift.len() - 1));
        for phi in [PathFunction::LogLinear, PathFunction::Linear] {
            prop_assert!(phi.eval(a, b, 0.0).max_abs_diff(a) <= 1e-12);
            prop_assert!(phi.eval(a, b, 1.0).max_abs_diff(b) <= 1e-10);
        }
    }

    #[test]
    fn block_jacobian_matches_finite_differences(u in -3.0f64..3.0, v in -3.0f64..3.0) {
        let exact = BlockSystem { blocks: 1 };
        let generic = Smooth(BlockSystem { blocks: 1 });
        let y = [u, v];
        let (mut ja, mut jd) = (vec![0.0; 8], vec![0.0; 8]);
        exact.jacobian(0.0, &y, &mut ja);
        generic.jacobian(0.0, &y, &mut jd);
        let mut jf = vec![0.0; 8];
        let (mut fp, mut fm) = (vec![0.0; 4], vec![0.0; 4]);
        for k in 0..2 {
            let (mut yp, mut ym) = (y, y);
            yp[k] += 1e-6;
            ym[k] -= 1e-6;
            exact.eval(0.0, &yp, &mut fp);
            exact.eval(0.0, &ym, &mut fm);
            for ij in 0..4 {
                jf[ij * 2 + k] = (fp[ij] - fm[ij]) / 2e-6;
            }
        }
        for i in 0..8 {
            prop_assert!((ja[i] - jf[i]).abs() <= 1e-5 * jf[i].abs().max(1.0));
            prop_assert!((jd[i] - jf[i]).abs() <= 1e-5 * jf[i].abs().max(1.0));
        }
    }
}
