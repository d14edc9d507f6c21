use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use co2cast::energy::{binding_energy, cohesive_energy, BindingInput, CohesiveInput, Constituent};
use co2cast::ingest::{
    aggregate_total, filter_period, parse_emissions_csv, pivot_sector_matrix, EmissionDataset, EmissionRecord,
    FeatureMatrix, Sector, ISO_DATE,
};
use co2cast::linalg::{eigen_symmetric, Matrix, DEFAULT_EIGEN_TOL};
use co2cast::metrics::evaluate;
use co2cast::pca::{covariance, pca_fit, project, reconstruct};
use co2cast::preprocess::{clean_outliers, inverse_scale, make_supervised, mean_sd, minmax_scale, moving_average};
use proptest::prelude::*;

fn day(i: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 11, 1).unwrap() + Days::new(i)
}

/// Full datasets: every region has all five sectors on the same dates.
fn dataset() -> impl Strategy<Value = EmissionDataset> {
    (1usize..3, 1u64..30)
        .prop_flat_map(|(n_regions, n_days)| {
            prop::collection::vec(0.0f64..1000.0, n_regions * 5 * n_days as usize)
                .prop_map(move |vals| (n_regions, n_days, vals))
        })
        .prop_map(|(n_regions, n_days, vals)| {
            let mut records = Vec::new();
            let mut it = vals.into_iter();
            for r in 0..n_regions {
                for s in Sector::ALL {
                    for d in 0..n_days {
                        records.push(EmissionRecord {
                            region: if r == 0 { "North, \"A\"".into() } else { format!("R{r}") },
                            sector: s,
                            date: day(d),
                            value: (it.next().unwrap() * 1e6).round() / 1e6,
                        });
                    }
                }
            }
            EmissionDataset::from_records(records, "prop").unwrap()
        })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = FeatureMatrix> {
    prop::collection::vec(-50.0f64..50.0, rows * cols).prop_map(move |data| {
        let labels = (0..cols).map(|j| format!("c{j}")).collect();
        FeatureMatrix::new(data, (0..rows as u64).map(day).collect(), labels).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_csv_is_a_fixpoint(ds in dataset()) {
        let once = ds.to_canonical_csv();
        let back = parse_emissions_csv(once.as_bytes(), ISO_DATE).unwrap();
        prop_assert_eq!(back.records(), ds.records());
        prop_assert_eq!(back.to_canonical_csv(), once);
    }

    #[test]
    fn filter_is_subset_and_idempotent(ds in dataset(), a in 0u64..30, len in 0u64..30, skip_2020 in any::<bool>()) {
        let excluded: BTreeSet<i32> = if skip_2020 { [2020].into() } else { BTreeSet::new() };
        let once = filter_period(&ds, day(a), day(a + len), &excluded).unwrap();
        let twice = filter_period(&once, day(a), day(a + len), &excluded).unwrap();
        prop_assert_eq!(once.records(), twice.records());
        for r in once.records() {
            prop_assert!(ds.records().contains(r));
        }
    }

    #[test]
    fn pivot_rows_sum_to_aggregate(ds in dataset()) {
        for region in ds.regions() {
            let m = pivot_sector_matrix(&ds, &region).unwrap();
            let total = aggregate_total(&ds, &region).unwrap();
            prop_assert_eq!(m.n_rows(), total.len());
            for (i, (d, t)) in total.iter().enumerate() {
                prop_assert_eq!(m.row_labels()[i], *d);
                let s: f64 = m.row(i).iter().sum();
                prop_assert!((s - t).abs() <= 1e-12 * t.abs().max(1.0));
            }
        }
    }

    #[test]
    fn flagged_points_exceed_threshold_on_original_stats(
        s in prop::collection::vec(-100.0f64..100.0, 2..80),
        spike in 0usize..80,
        threshold in 0.5f64..4.0,
    ) {
        let mut s = s;
        let i = spike % s.len();
        s[i] += 1e4;
        let out = clean_outliers(&s, threshold).unwrap();
        let (mean, sd) = mean_sd(&s);
        let expected: Vec<usize> = (0..s.len()).filter(|&k| ((s[k] - mean) / sd).abs() > threshold).collect();
        prop_assert_eq!(&out.flagged, &expected);
        for k in 0..s.len() {
            if !expected.contains(&k) {
                prop_assert_eq!(out.cleaned[k], s[k]);
            } else if k > 0 {
                prop_assert_eq!(out.cleaned[k], out.cleaned[k - 1]);
            }
        }
    }

    #[test]
    fn moving_average_is_linear(
        x in prop::collection::vec(-10.0f64..10.0, 10..60),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        w in 1usize..10,
    ) {
        let y: Vec<f64> = x.iter().rev().map(|v| v * 0.5 + 1.0).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let l = moving_average(&combo, w).unwrap();
        let (mx, my) = (moving_average(&x, w).unwrap(), moving_average(&y, w).unwrap());
        for k in 0..l.len() {
            prop_assert!((l[k] - (a * mx[k] + b * my[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn minmax_round_trip(s in prop::collection::vec(-1e4f64..1e4, 2..60)) {
        let (y, sc) = minmax_scale(&s).unwrap();
        prop_assume!(!sc.is_degenerate());
        let back = inverse_scale(&y, &sc).unwrap();
        let span = sc.max - sc.min;
        for (a, b) in s.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(span));
        }
    }

    #[test]
    fn windowing_identities(s in prop::collection::vec(-5.0f64..5.0, 2..80), seq in 1usize..20) {
        prop_assume!(s.len() > seq);
        let set = make_supervised(&s, seq).unwrap();
        prop_assert_eq!(set.len(), s.len() - seq);
        for k in 0..set.len() {
            prop_assert_eq!(set.input(k), &s[k..k + seq]);
            prop_assert_eq!(set.input(k)[seq - 1], s[k + seq - 1]);
            prop_assert_eq!(set.targets()[k], s[k + seq]);
        }
    }

    #[test]
    fn covariance_is_psd(m in matrix(12, 5)) {
        let c = covariance(&m, true).unwrap();
        let e = eigen_symmetric(&c, DEFAULT_EIGEN_TOL).unwrap();
        let eps = 1e-10 * c.trace();
        prop_assert!(e.eigenvalues.iter().all(|&l| l >= -eps));
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_conserves_trace_and_frobenius(vals in prop::collection::vec(-20.0f64..20.0, 15)) {
        let mut a = vec![0.0; 25];
        let mut it = vals.into_iter();
        for i in 0..5 {
            for j in i..5 {
                let v = it.next().unwrap();
                a[i * 5 + j] = v;
                a[j * 5 + i] = v;
            }
        }
        let m = Matrix::from_vec(5, 5, a);
        let e = eigen_symmetric(&m, DEFAULT_EIGEN_TOL).unwrap();
        let fro2 = m.frobenius_norm().powi(2);
        let scale = fro2.sqrt().max(1e-300);
        prop_assert!((e.eigenvalues.iter().sum::<f64>() - m.trace()).abs() <= 1e-8 * scale);
        prop_assert!((e.eigenvalues.iter().map(|l| l * l).sum::<f64>() - fro2).abs() <= 1e-8 * fro2.max(1e-300));
    }

    #[test]
    fn explained_ratio_is_scale_invariant(m in matrix(15, 4), c in 0.01f64..100.0) {
        let a = pca_fit(&m).unwrap();
        let b = pca_fit(&m.scaled(c).unwrap()).unwrap();
        for (x, y) in a.explained_ratio.iter().zip(&b.explained_ratio) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((a.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_projection_reconstructs(m in matrix(10, 5)) {
        let r = pca_fit(&m).unwrap();
        let scores = project(&r, &m, 5).unwrap();
        let back = reconstruct(&r, &scores).unwrap();
        for i in 0..m.n_rows() {
            for j in 0..m.n_cols() {
                prop_assert!((back[(i, j)] - m.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn metric_identities(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..100),
        shift in -100.0f64..100.0,
    ) {
        let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = evaluate(&a, &p).unwrap();
        prop_assert!(r.mse >= 0.0);
        prop_assert!((r.rmse * r.rmse - r.mse).abs() <= 1e-12 * r.mse.max(1.0));
        prop_assert!(r.mae <= r.rmse + 1e-12);

        let swapped = evaluate(&p, &a).unwrap();
        prop_assert_eq!(swapped.mse, r.mse);
        prop_assert_eq!(swapped.mae, r.mae);
        // r2 is not symmetric: it normalizes by the variance of the first argument.

        let sa: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let sp: Vec<f64> = p.iter().map(|v| v + shift).collect();
        let s = evaluate(&sa, &sp).unwrap();
        prop_assert!((s.mse - r.mse).abs() < 1e-12 * r.mse.max(1.0) * (1.0 + shift.abs()));
        prop_assert!((s.mae - r.mae).abs() < 1e-12 * (1.0 + shift.abs()));
        if !r.degenerate_variance {
            // The oracle recomputes r2 from the shifted vectors' own mean.
            let mean = sa.iter().sum::<f64>() / sa.len() as f64;
            let sst: f64 = sa.iter().map(|v| (v - mean).powi(2)).sum();
            let sse: f64 = sa.iter().zip(&sp).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!((s.r2 - (1.0 - sse / sst)).abs() < 1e-9);
            prop_assert!((s.r2 - r.r2).abs() < 1e-6);
        }
    }

    #[test]
    fn binding_energy_shift_invariance(t in -500.0f64..0.0, s in -500.0f64..0.0, a in -50.0f64..0.0, c in -100.0f64..100.0, share in 0.0f64..1.0) {
        let base = binding_energy(&BindingInput { e_total: t, e_substrate: s, e_adsorbate: a }).unwrap();
        let shifted = binding_energy(&BindingInput {
            e_total: t + c,
            e_substrate: s + share * c,
            e_adsorbate: a + (1.0 - share) * c,
        })
        .unwrap();
        prop_assert!((base - shifted).abs() < 1e-9);
    }

    #[test]
    fn cohesive_energy_halves_when_n_doubles(e in -500.0f64..0.0, ex in -10.0f64..0.0, count in 1u32..40, n in 1.0f64..100.0) {
        let input = |norm: f64| CohesiveInput {
            e_system: e,
            constituents: vec![Constituent { species: "X".into(), energy: ex, count }],
            n_atoms: None,
            normalization: norm,
        };
        let one = cohesive_energy(&input(n)).unwrap();
        let two = cohesive_energy(&input(2.0 * n)).unwrap();
        prop_assert_eq!(two, one / 2.0);
    }
}
