use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use randcert::bell::CorrelatorSet;
use randcert::pipeline::{project_no_signalling, projection_report, RawCorrelators};

/// Random no-signalling correlators plus a signalling perturbation of the marginals.
fn perturbed(ix: usize, iy: usize) -> impl Strategy<Value = (CorrelatorSet, RawCorrelators)> {
    let n = ix + iy + ix * iy + 2 * ix * iy;
    prop::collection::vec(-0.45..0.45f64, n).prop_map(move |v| {
        let a = v[..ix].to_vec();
        let b = v[ix..ix + iy].to_vec();
        let ab = (0..ix).map(|x| v[ix + iy + x * iy..ix + iy + (x + 1) * iy].to_vec()).collect();
        let ns = CorrelatorSet::new(a, b, ab).unwrap();
        let noise = &v[ix + iy + ix * iy..];
        let mut raw = RawCorrelators::from_no_signalling(&ns);
        for x in 0..ix {
            for y in 0..iy {
                raw.a[x][y] += 0.1 * noise[x * iy + y];
                raw.b[x][y] += 0.1 * noise[ix * iy + x * iy + y];
            }
        }
        (ns, raw)
    })
}

fn ns_vector(c: &CorrelatorSet) -> Vec<f64> {
    RawCorrelators::from_no_signalling(c).to_vector()
}

/// Columns spanning the no-signalling subspace in per-setting coordinates.
fn ns_basis(ix: usize, iy: usize) -> DMatrix<f64> {
    let dim = ix + iy + ix * iy;
    let columns: Vec<DVector<f64>> = (0..dim)
        .map(|k| {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            let ab = (0..ix).map(|x| e[ix + iy + x * iy..ix + iy + (x + 1) * iy].to_vec()).collect();
            let c = CorrelatorSet { a: e[..ix].to_vec(), b: e[ix..ix + iy].to_vec(), ab };
            DVector::from_vec(ns_vector(&c))
        })
        .collect();
    DMatrix::from_columns(&columns)
}

fn distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent((_, raw) in (2usize..4, 2usize..4).prop_flat_map(|(ix, iy)| perturbed(ix, iy))) {
        let once = project_no_signalling(&raw).unwrap();
        let twice = project_no_signalling(&RawCorrelators::from_no_signalling(&once)).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn projecting_a_no_signalling_point_returns_it((ns, _) in perturbed(2, 2)) {
        let back = project_no_signalling(&RawCorrelators::from_no_signalling(&ns)).unwrap();
        for (u, v) in ns_vector(&back).iter().zip(ns_vector(&ns)) {
            prop_assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_is_orthogonal_to_no_signalling_directions((_, raw) in (2usize..4, 2usize..4).prop_flat_map(|(ix, iy)| perturbed(ix, iy))) {
        let (ix, iy) = (raw.a.len(), raw.a[0].len());
        let projected = project_no_signalling(&raw).unwrap();
        let residual: Vec<f64> = raw.to_vector().iter().zip(ns_vector(&projected)).map(|(r, p)| r - p).collect();
        let residual = DVector::from_vec(residual);
        let basis = ns_basis(ix, iy);
        for column in basis.column_iter() {
            prop_assert!(column.dot(&residual).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_the_closest_no_signalling_point((ns, raw) in perturbed(2, 2)) {
        let report = projection_report(&raw).unwrap();
        let target = DVector::from_vec(raw.to_vector());
        let basis = ns_basis(2, 2);
        let least_squares = basis.clone().svd(true, true).solve(&target, 1e-14).unwrap();
        let oracle = (&basis * least_squares).iter().copied().collect::<Vec<_>>();
        let oracle_distance = distance(&oracle, target.as_slice());
        prop_assert!(report.residual_norm <= oracle_distance + 1e-9);
        prop_assert!(report.residual_norm <= distance(&ns_vector(&ns), target.as_slice()) + 1e-9);
        prop_assert!(distance(&oracle, &ns_vector(&report.projected)) < 1e-9);
    }
}
