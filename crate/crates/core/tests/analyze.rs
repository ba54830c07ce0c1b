use newsgravity::analyze::{
    cell_residuals, coverage_series_design, pca, residuals_by_country_design, ward_cluster, AnalyzeError,
};
use newsgravity::countglm::Family;
use newsgravity::covariates::{build_design_with_offsets, ModelSpec, OffsetSource};
use newsgravity::estimate::{fit_by_media_design, global_run, simulate_cube, synthetic_world, SimOffsets, SimParams};
use newsgravity::newscube::{Layer, WeekCalendar};
use newsgravity::ParamMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Discrete, NegativeBinomial};

fn matrix(rows: &[Vec<f64>]) -> ParamMatrix {
    ParamMatrix {
        media: (0..rows.len()).map(|i| format!("M{i:02}")).collect(),
        terms: (0..rows[0].len()).map(|j| format!("t{j}")).collect(),
        values: rows.iter().flatten().copied().collect(),
        z_values: vec![0.0; rows.len() * rows[0].len()],
        excluded: Vec::new(),
    }
}

fn random_matrix(n: usize, p: usize, seed: u64) -> ParamMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|j| rng.random::<f64>() * (j + 1) as f64).collect()).collect();
    matrix(&rows)
}

fn frobenius(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Sample covariance (or correlation) of the columns, row-major.
fn covariance(m: &ParamMatrix, standardize: bool) -> Vec<f64> {
    let (n, p) = (m.n_rows(), m.n_cols());
    let mean: Vec<f64> = (0..p).map(|j| (0..n).map(|i| m.get(i, j)).sum::<f64>() / n as f64).collect();
    let mut c = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            c[a * p + b] = (0..n).map(|i| (m.get(i, a) - mean[a]) * (m.get(i, b) - mean[b])).sum::<f64>() / (n as f64 - 1.0);
        }
    }
    if standardize {
        let sd: Vec<f64> = (0..p).map(|j| c[j * p + j].sqrt()).collect();
        for a in 0..p {
            for b in 0..p {
                c[a * p + b] /= sd[a] * sd[b];
            }
        }
    }
    c
}

#[test]
fn pca_reconstruction_trace_and_orthogonality() {
    for (seed, standardize) in [(1, true), (2, false), (3, true)] {
        let m = random_matrix(31, 9, seed);
        let r = pca(&m, standardize).unwrap();
        let p = m.n_cols();
        let mut rec = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                rec[a * p + b] = (0..p).map(|c| r.loading(a, c) * r.eigenvalues[c] * r.loading(b, c)).sum();
            }
        }
        let target = covariance(&m, standardize);
        assert!(frobenius(&rec, &target) < 1e-10);
        if standardize {
            assert!((r.eigenvalues.iter().sum::<f64>() - p as f64).abs() < 1e-10);
        }
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        // loadings orthonormal, scores uncorrelated
        for a in 0..p {
            for b in 0..p {
                let dot: f64 = (0..p).map(|j| r.loading(j, a) * r.loading(j, b)).sum();
                assert!((dot - f64::from(u8::from(a == b))).abs() < 1e-10);
                if a != b {
                    let cov: f64 = (0..m.n_rows()).map(|i| r.score(i, a) * r.score(i, b)).sum::<f64>() / 30.0;
                    assert!(cov.abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn pca_needs_two_rows() {
    let m = matrix(&[vec![1.0, 2.0]]);
    assert!(matches!(pca(&m, true), Err(AnalyzeError::TooSmall(_))));
}

/// Greedy Ward agglomeration computing each candidate cost directly from
/// member points.
fn brute_force_ward(points: &[Vec<f64>]) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let ess = |set: &[usize]| -> f64 {
        let p = points[0].len();
        let c: Vec<f64> = (0..p).map(|j| set.iter().map(|&i| points[i][j]).sum::<f64>() / set.len() as f64).collect();
        set.iter().map(|&i| (0..p).map(|j| (points[i][j] - c[j]).powi(2)).sum::<f64>()).sum()
    };
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let merged: Vec<usize> = clusters[a].iter().chain(&clusters[b]).copied().collect();
                let inc = ess(&merged) - ess(&clusters[a]) - ess(&clusters[b]);
                if inc < best.0 {
                    best = (inc, a, b);
                }
            }
        }
        let (inc, a, b) = best;
        let mut sa = clusters[a].clone();
        let mut sb = clusters[b].clone();
        sa.sort_unstable();
        sb.sort_unstable();
        out.push((sa.clone(), sb.clone(), inc));
        let merged: Vec<usize> = sa.into_iter().chain(sb).collect();
        clusters.remove(b);
        clusters[a] = merged;
    }
    out
}

#[test]
fn ward_matches_brute_force_on_small_instances() {
    for n in 2..=6 {
        for seed in 0..25 {
            let m = random_matrix(n, 3, 100 * n as u64 + seed);
            let r = ward_cluster(&m, 1, false).unwrap();
            let pts: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
            let oracle = brute_force_ward(&pts);
            // expand cluster ids to member sets
            let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            for (merge, (sa, sb, inc)) in r.merges.iter().zip(&oracle) {
                let mut a = members[merge.a].clone();
                let mut b = members[merge.b].clone();
                a.sort_unstable();
                b.sort_unstable();
                let mut ours = [a.clone(), b.clone()];
                ours.sort();
                let mut theirs = [sa.clone(), sb.clone()];
                theirs.sort();
                assert_eq!(ours, theirs, "n={n} seed={seed}");
                assert!((merge.cost - inc).abs() < 1e-9 * (1.0 + inc));
                members.push(a.into_iter().chain(b).collect());
            }
            assert!(r.merges.windows(2).all(|w| w[0].cost <= w[1].cost + 1e-12));
        }
    }
}

#[test]
fn ward_recovers_separated_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let centers = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0]];
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for i in 0..32 {
        let c = i % 4;
        rows.push(centers[c].iter().map(|v| v + rng.random::<f64>() - 0.5).collect::<Vec<_>>());
        truth.push(c);
    }
    let r = ward_cluster(&matrix(&rows), 4, true).unwrap();
    for i in 0..32 {
        for j in 0..32 {
            assert_eq!(truth[i] == truth[j], r.assignments[i] == r.assignments[j]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ward_is_label_invariant(seed in 0u64..1000, n in 3usize..12, k in 1usize..4) {
        let m = random_matrix(n, 3, seed);
        let k = k.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| m.row(i).to_vec()).collect();
        let a = ward_cluster(&m, k, true).unwrap();
        let b = ward_cluster(&matrix(&rows), k, true).unwrap();
        for x in 0..n {
            for y in 0..n {
                prop_assert_eq!(
                    a.assignments[perm[x]] == a.assignments[perm[y]],
                    b.assignments[x] == b.assignments[y]
                );
            }
        }
        let costs: Vec<f64> = a.merges.iter().map(|m| m.cost).collect();
        prop_assert!(costs.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}

#[test]
fn self_consistent_residuals_and_envelope() {
    let w = synthetic_world(100, 8, 3).unwrap();
    let cal = WeekCalendar::new(WeekCalendar::year_2015().start_date(), 20).unwrap();
    let sim = simulate_cube(&SimParams::table5(Some(0.3)), &w.covariates, &cal, &w.media, &SimOffsets::TargetRowTotal(200.0), false, 4).unwrap();
    let spec = ModelSpec::default().with_layer(Layer::Raw).with_family(Family::NegBin);
    let d = build_design_with_offsets(&sim.cube, &w.covariates, &spec, &OffsetSource::Supplied(sim.offsets.clone())).unwrap();
    let run = global_run(&d, &spec);
    let table = residuals_by_country_design(&d, &run).unwrap();
    assert_eq!(table.skipped_rows, 0);
    let obs: f64 = table.rows.iter().map(|r| r.observed).sum();
    let pred: f64 = table.rows.iter().map(|r| r.predicted).sum();
    // NB scores weight cells by θ/(θ + μ), so totals match only roughly
    assert!((obs - pred).abs() / obs < 0.1, "{obs} {pred}");
    let fine = table.rows.iter().filter(|r| r.pearson.abs() < 4.0).count();
    assert!(fine as f64 >= 0.95 * table.rows.len() as f64);
    assert!(table.rows.windows(2).all(|p| p[0].residual >= p[1].residual));

    // NB2 99.9% envelope of each cell
    let theta = run.fits[0].fit.theta.unwrap();
    let cells = cell_residuals(&d, &run).unwrap();
    let inside = cells
        .iter()
        .filter(|c| {
            let nb = NegativeBinomial::new(theta, theta / (theta + c.predicted)).unwrap();
            let mut cdf = 0.0;
            let mut lo = None;
            let mut hi = None;
            let mut y = 0u64;
            while hi.is_none() {
                cdf += nb.pmf(y);
                if lo.is_none() && cdf >= 0.0005 {
                    lo = Some(y);
                }
                if cdf >= 0.9995 {
                    hi = Some(y);
                }
                y += 1;
            }
            (lo.unwrap() as f64..=hi.unwrap() as f64).contains(&c.observed)
        })
        .count();
    assert!(inside as f64 >= 0.99 * cells.len() as f64, "{inside} / {}", cells.len());

    // media-level model for coverage; silent countries still get a prediction
    let by_media = fit_by_media_design(&d, &spec).unwrap();
    let target = &w.covariates.countries.codes()[0];
    let cov = coverage_series_design(&sim.cube, &d, &by_media.run, target).unwrap();
    assert_eq!(cov.len(), 8 * 20);
    assert!(cov.iter().filter(|r| r.week > 0).all(|r| r.predicted.is_some() || w.covariates.home_of(&r.media) == Some(target)));
    assert!(matches!(
        coverage_series_design(&sim.cube, &d, &by_media.run, "ZZZ"),
        Err(AnalyzeError::UnknownCountry(_))
    ));
}

#[test]
fn perfect_prediction_gives_zero_residuals() {
    let w = synthetic_world(30, 3, 8).unwrap();
    let cal = WeekCalendar::new(WeekCalendar::year_2015().start_date(), 4).unwrap();
    let sim = simulate_cube(&SimParams::table5(None), &w.covariates, &cal, &w.media, &SimOffsets::TargetRowTotal(50.0), false, 6).unwrap();
    let spec = ModelSpec::default().with_layer(Layer::Raw).with_family(Family::Poisson);
    let d = build_design_with_offsets(&sim.cube, &w.covariates, &spec, &OffsetSource::Supplied(sim.offsets.clone())).unwrap();
    let mut run = global_run(&d, &spec);
    let mu = run.predict(&d).unwrap();
    let exact = d.with_response(mu).unwrap();
    run.fits[0].fit.converged = true;
    let table = residuals_by_country_design(&exact, &run).unwrap();
    assert!(table.rows.iter().all(|r| r.residual.abs() < 1e-9 * (1.0 + r.observed)));
}

#[test]
fn poisson_fit_matches_observed_total() {
    let w = synthetic_world(60, 5, 2).unwrap();
    let cal = WeekCalendar::new(WeekCalendar::year_2015().start_date(), 10).unwrap();
    let sim = simulate_cube(&SimParams::table5(Some(1.0)), &w.covariates, &cal, &w.media, &SimOffsets::TargetRowTotal(100.0), false, 5).unwrap();
    let spec = ModelSpec::default().with_family(Family::Poisson);
    let d = newsgravity::covariates::build_design(&sim.cube, &w.covariates, &spec).unwrap();
    for run in [global_run(&d, &spec), fit_by_media_design(&d, &spec).unwrap().run] {
        let table = residuals_by_country_design(&d, &run).unwrap();
        let obs: f64 = table.rows.iter().map(|r| r.observed).sum();
        let pred: f64 = table.rows.iter().map(|r| r.predicted).sum();
        assert!((obs - pred).abs() / obs < 1e-3, "{obs} {pred}");
    }
}
