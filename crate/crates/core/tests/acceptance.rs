//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p synchrolab --test acceptance`.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{dtw_brute_force, fixture, floats, rng, uniform_series};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use synchrolab::dataset::{ChannelKind, Recording, Segment, SegmentSpec};
use synchrolab::decompose::{tonic_phasic_split, total_variation, DecomposeConfig, DecomposeMethod};
use synchrolab::pipeline::{analyze, export_keyframes, ingest, synthetic_study, AnalysisReport, Study};
use synchrolab::preprocess::{
    detect_outliers, interpolate_outliers, moving_average, preprocess_pipeline, resample, resampled_len, Butterworth,
    PreprocessConfig,
};
use synchrolab::stats::{
    art_transform, cohens_d, midranks, oneway_anova, p_adjust, partial_eta_sq_ci, rm_anova, shapiro_wilk,
    studentized_range_sf, tukey_hsd, LongTable, Observation, PAdjustMethod,
};
use synchrolab::synchrony::{dtw_distance, pairwise_dtw, pearson, Component, DtwConfig};
use synchrolab::synthgen::SynthStudy;
use synchrolab::{AnalysisCohort, SubjectSeries};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn full_band() -> DtwConfig {
    DtwConfig { band_radius: None, ..DtwConfig::default() }
}

fn dtw_oracle() -> Outcome {
    let mut g = rng(2024);
    let start = Instant::now();
    for k in 0..1000 {
        let (n, m) = (g.random_range(1..=12), g.random_range(1..=12));
        let (x, y) = (uniform_series(&mut g, n), uniform_series(&mut g, m));
        let got = dtw_distance(&x, &y, &full_band()).unwrap().raw;
        let want = dtw_brute_force(&x, &y);
        ensure!(got == want, "pair {k}: {got} != {want}");
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("1000 pairs exact in {took:.2?}"))
}

fn dtw_properties() -> Outcome {
    let warp = dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0], &full_band()).unwrap().raw;
    ensure!(warp == 0.0, "warp example gave {warp}");
    let mut g = rng(7);
    for k in 0..300 {
        let n: usize = g.random_range(1..=40);
        let m = g.random_range(n.saturating_sub(5).max(1)..=n + 5);
        let (x, y) = (uniform_series(&mut g, n), uniform_series(&mut g, m));
        let d = |a: &[f64], b: &[f64], r: Option<usize>| {
            dtw_distance(a, b, &DtwConfig { band_radius: r, ..DtwConfig::default() }).unwrap().raw
        };
        ensure!(d(&x, &x, None) == 0.0, "case {k}: identity");
        ensure!(d(&x, &y, None) == d(&y, &x, None), "case {k}: symmetry");
        let mut last = f64::INFINITY;
        for r in n.abs_diff(m)..=n.max(m) {
            let v = d(&x, &y, Some(r));
            ensure!(v <= last, "case {k}: radius {r} gave {v} > {last}");
            last = v;
        }
        ensure!(last == d(&x, &y, None), "case {k}: widest band differs from full");
    }
    Ok("identity, symmetry, band monotonicity on 300 cases; warp example 0".into())
}

fn pearson_checks() -> Outcome {
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], 1.0),
        (&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], -1.0),
        (&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0], 0.8),
    ];
    for (x, y, want) in cases {
        let r = pearson(x, y).unwrap().r;
        ensure!((r - want).abs() <= 1e-12, "{x:?} vs {y:?}: {r}");
    }
    let mut g = rng(11);
    for k in 0..200 {
        let (x, y) = (uniform_series(&mut g, 50), uniform_series(&mut g, 50));
        let (a, b) =
            (g.random_range(0.1..10.0) * if g.random::<bool>() { 1.0 } else { -1.0 }, g.random_range(-5.0..5.0));
        let (c, d) = (g.random_range(0.1..10.0), g.random_range(-5.0..5.0));
        let base = pearson(&x, &y).unwrap().r;
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let cy: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let moved = pearson(&ax, &cy).unwrap().r;
        ensure!((moved - a.signum() * base).abs() <= 1e-12, "case {k}: {moved} vs {base}");
    }
    let x: Vec<f64> = (0..260).map(|i| (i as f64 * 0.1).sin()).collect();
    let y: Vec<f64> = (0..260).map(|i| (i as f64 * 0.1 + 0.3).sin()).collect();
    let df = pearson(&x, &y).unwrap().df;
    ensure!(df == 258, "df {df}");
    Ok("hand cases and affine invariance to 1e-12; 260 samples give df 258".into())
}

fn interior_amplitude(x: &[f64], margin: usize) -> f64 {
    x[margin..x.len() - margin].iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn filter_response() -> Outcome {
    let rate = 10.0;
    let bw = Butterworth::lowpass(2, 0.5, rate).unwrap();
    let amp = |freq: f64| {
        let x: Vec<f64> = (0..20_000).map(|i| (std::f64::consts::TAU * freq * i as f64 / rate).sin()).collect();
        interior_amplitude(&bw.filtfilt(&x).unwrap(), 4000)
    };
    let (pass, stop) = (amp(0.05), amp(2.0));
    let analytic = (bw.magnitude(0.05, rate).powi(2), bw.magnitude(2.0, rate).powi(2));
    ensure!(pass >= 0.99, "0.05 Hz kept {pass}");
    ensure!(stop <= 0.01 * 1.1, "2 Hz kept {stop}");
    ensure!((pass - analytic.0).abs() < 1e-3 && (stop - analytic.1).abs() < 1e-3, "analytic {analytic:?}");
    Ok(format!("0.05 Hz gain {pass:.5}, 2 Hz gain {stop:.2e} (analytic {:.5}, {:.2e})", analytic.0, analytic.1))
}

fn preprocess_invariants() -> Outcome {
    let mask = detect_outliers(&[1.0f64, 2.0, 3.0, 100.0], 1.5).unwrap();
    ensure!(mask.flagged_indices() == [3], "flags {:?}", mask.flagged_indices());
    let repaired = interpolate_outliers(&[1.0f64, 2.0, 3.0, 100.0], &mask).unwrap();
    ensure!(repaired == [1.0, 2.0, 3.0, 3.0], "repaired {repaired:?}");

    let cfg = PreprocessConfig::default();
    let mut g = rng(13);
    for k in 0..50 {
        let n = g.random_range(100..3000);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin() + g.random::<f64>()).collect();
        ensure!(moving_average(&x, 10.0, 1.0).unwrap().len() == n, "case {k}: moving average length");
        let rec = Recording::new("s", ChannelKind::Eda, 10.0, x).unwrap();
        let out = preprocess_pipeline(&rec, &cfg).unwrap().samples;
        ensure!(out.len() == n, "case {k}: pipeline length {}", out.len());
        ensure!(out.iter().all(|v| v.is_finite()), "case {k}: non-finite output");
        let (lo, hi) = out.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        ensure!(lo == 0.0 && hi == 1.0, "case {k}: range [{lo}, {hi}]");
        let up = resample(&out, 10.0, 30.0).unwrap();
        ensure!(up.len() == resampled_len(n, 10.0, 30.0) && up.len() == 3 * (n - 1) + 1, "case {k}: resample length");
    }
    ensure!(resampled_len(2601, 10.0, 30.0) == 7801, "2601 samples at 10 Hz should give 7801 frames");
    Ok("fence example flags index 3 and repairs it; 50 random pipelines NaN-free with exact [0, 1]".into())
}

fn decomposition() -> Outcome {
    let mut g = rng(17);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = g.random_range(200..2000);
        let mut level = 0.0;
        let x: Vec<f64> = (0..n)
            .map(|_| {
                level += g.random_range(-0.05..0.05);
                level + 0.2 * g.random::<f64>()
            })
            .collect();
        for method in [DecomposeMethod::ComplementaryLowpass, DecomposeMethod::MedianBaseline] {
            let cfg = DecomposeConfig { method, ..DecomposeConfig::default() };
            let c = tonic_phasic_split(&x, 10.0, &cfg).unwrap();
            for (i, v) in x.iter().enumerate() {
                let err = (c.tonic[i] + c.phasic[i] - v).abs();
                worst = worst.max(err);
                ensure!(err <= 1e-9, "case {k} {method:?}: sample {i} off by {err}");
            }
            let (tv_t, tv_x) = (total_variation(&c.tonic), total_variation(&x));
            ensure!(tv_t <= tv_x, "case {k} {method:?}: tonic TV {tv_t} > input TV {tv_x}");
        }
    }
    Ok(format!("100 inputs, both methods; worst reconstruction error {worst:.1e}"))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn statistics() -> Outcome {
    let hand = oneway_anova(&LongTable::from_groups([("a", &[1.0, 2.0][..]), ("b", &[2.0, 3.0][..])])).unwrap();
    ensure!(close(hand.f, 2.0, 1e-9) && close(hand.partial_eta_sq, 0.5, 1e-9), "hand ANOVA {hand:?}");
    ensure!((hand.df_between, hand.df_within) == (1, 2), "hand ANOVA df");
    let holm = |p: &[f64]| p_adjust(p, PAdjustMethod::Holm).unwrap();
    let (h1, h2) = (holm(&[0.01, 0.04]), holm(&[0.03, 0.04]));
    ensure!(close(h1[0], 0.02, 1e-9) && close(h1[1], 0.04, 1e-9), "holm {h1:?}");
    ensure!(close(h2[0], 0.06, 1e-9) && close(h2[1], 0.06, 1e-9), "holm {h2:?}");
    let d = cohens_d(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    ensure!(close(d, -1.0, 1e-9), "d = {d}");

    let mut g = rng(19);
    for k in 0..50 {
        let (na, nb) = (g.random_range(3..30), g.random_range(3..30));
        let a = uniform_series(&mut g, na);
        let b: Vec<f64> = uniform_series(&mut g, nb).iter().map(|v| v + 0.2).collect();
        let tukey = tukey_hsd(&LongTable::from_groups([("a", &a[..]), ("b", &b[..])]), PAdjustMethod::Holm).unwrap();
        let (na, nb) = (na as f64, nb as f64);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let ss = |s: &[f64]| s.iter().map(|v| (v - mean(s)).powi(2)).sum::<f64>();
        let df = na + nb - 2.0;
        let sp = ((ss(&a) + ss(&b)) / df).sqrt();
        let t = (mean(&a) - mean(&b)) / (sp * (1.0 / na + 1.0 / nb).sqrt());
        let p_t = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs());
        let p = tukey.comparisons[0].p_raw;
        ensure!(close(p, p_t, 1e-9), "case {k}: Tukey p {p} vs t-test p {p_t}");
    }

    const TOL: f64 = 1e-6;
    let sw = fixture("shapiro_wilk.json");
    for case in sw["cases"].as_array().unwrap() {
        let r = shapiro_wilk(&floats(&case["sample"])).unwrap();
        ensure!(
            close(r.w, case["w"].as_f64().unwrap(), TOL) && close(r.p, case["p"].as_f64().unwrap(), TOL),
            "shapiro {}",
            case["label"]
        );
    }
    let tk = fixture("tukey_oneway.json");
    let rows = tk["groups"]
        .as_object()
        .unwrap()
        .iter()
        .flat_map(|(grp, vals)| {
            floats(vals)
                .into_iter()
                .enumerate()
                .map(move |(i, v)| Observation::new(format!("{grp}{i}"), grp.clone(), v))
        })
        .collect();
    let result = tukey_hsd(&LongTable::new(rows), PAdjustMethod::Holm).unwrap();
    for pair in tk["pairs"].as_array().unwrap() {
        let c = result
            .comparisons
            .iter()
            .find(|c| c.group_a == pair["group_a"].as_str().unwrap() && c.group_b == pair["group_b"].as_str().unwrap())
            .ok_or("missing Tukey pair")?;
        ensure!(
            close(c.mean_diff, pair["mean_diff"].as_f64().unwrap(), TOL)
                && close(c.p_raw, pair["p"].as_f64().unwrap(), TOL),
            "tukey {pair}"
        );
    }
    let sr = fixture("studentized_range.json");
    for case in sr["cases"].as_array().unwrap() {
        let got = studentized_range_sf(
            case["q"].as_f64().unwrap(),
            case["k"].as_u64().unwrap() as usize,
            case["df"].as_f64().unwrap(),
        );
        ensure!(close(got, case["sf"].as_f64().unwrap(), TOL), "studentized range {case}");
    }
    let rm = fixture("rm_anova.json");
    let rows = rm["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            Observation::new(
                r["subject"].as_str().unwrap(),
                r["condition"].as_str().unwrap(),
                r["value"].as_f64().unwrap(),
            )
        })
        .collect();
    let a = rm_anova(&LongTable::new(rows)).unwrap();
    ensure!(close(a.f, rm["f"].as_f64().unwrap(), TOL) && close(a.p, rm["p"].as_f64().unwrap(), TOL), "rm anova {a:?}");
    let ci = fixture("eta_ci.json");
    for case in ci["cases"].as_array().unwrap() {
        let v = |k: &str| case[k].as_f64().unwrap();
        let (lo, hi) = partial_eta_sq_ci(v("f"), v("df1"), v("df2"), v("level"));
        ensure!(close(lo, v("lo"), TOL) && close(hi, v("hi"), TOL), "eta ci {case}: ({lo}, {hi})");
    }
    Ok("hand ANOVA, Holm, d, Tukey = t-test on 50 tables to 1e-9; oracle fixtures to 1e-6".into())
}

fn art_reduction() -> Outcome {
    let mut g = rng(23);
    for k in 0..100 {
        let n_groups = g.random_range(2..6);
        let mut rows = Vec::new();
        for grp in 0..n_groups {
            for i in 0..g.random_range(2..15) {
                // rounded values force ties
                let v = (g.random::<f64>() * 20.0).round() / 4.0 + grp as f64;
                rows.push(Observation::new(format!("s{grp}_{i}"), format!("g{grp}"), v));
            }
        }
        let table = LongTable::new(rows);
        let raw: Vec<f64> = table.rows.iter().map(|r| r.value).collect();
        let ranked: Vec<f64> = art_transform(&table).unwrap().rows.iter().map(|r| r.value).collect();
        ensure!(ranked == midranks(&raw), "table {k}: ART ranks differ from midranks");
    }
    Ok("100 tables with ties, exact".into())
}

fn reported_dtw(report: &AnalysisReport, condition: &str) -> f64 {
    let r = report.group_result(condition, "overall").unwrap();
    if report.manifest.dtw.normalize_by_path {
        r.dtw_normalized
    } else {
        r.dtw_raw
    }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let (mut dtw_ok, mut r_ok) = (0, 0);
    for seed in 0..100 {
        let (mut study, ingested) = synthetic_study(&SynthStudy::three_conditions(seed)).map_err(|e| e.to_string())?;
        study.manifest.analysis.pairwise = false;
        let (report, _) = analyze(&study, &ingested).map_err(|e| e.to_string())?;
        let d = ["low", "med", "high"].map(|c| reported_dtw(&report, c));
        let r = ["low", "med", "high"].map(|c| report.group_result(c, "overall").unwrap().r);
        dtw_ok += usize::from(d[0] < d[1] && d[1] < d[2]);
        r_ok += usize::from(r[2] < r[1] && r[1] < r[0]);
    }
    let took = start.elapsed();
    ensure!(dtw_ok >= 95 && r_ok >= 95, "DTW ordered in {dtw_ok}/100, r ordered in {r_ok}/100");
    ensure!(took < Duration::from_secs(300), "took {took:?}");
    Ok(format!("DTW ordered in {dtw_ok}/100, r ordered in {r_ok}/100, {took:.1?}"))
}

fn pair_counts() -> Outcome {
    let mut spec = SynthStudy::three_conditions(5);
    for cfg in std::iter::once(&mut spec.reference).chain(spec.probes.iter_mut()) {
        cfg.duration_s = 30.0;
    }
    let (mut study, ingested) = synthetic_study(&spec).map_err(|e| e.to_string())?;
    study.manifest.segments = SegmentSpec {
        segments: vec![Segment::new("a", 0.0, 10.0), Segment::new("b", 10.0, 20.0), Segment::new("c", 20.0, 30.0)],
    };
    let (_, pairs) = analyze(&study, &ingested).map_err(|e| e.to_string())?;
    let pairs = pairs.ok_or("no pair table")?;
    let mut seen = Vec::new();
    for (cond, want) in [("low", 840), ("med", 800), ("high", 840)] {
        for seg in ["a", "b", "c", "overall"] {
            let n = pairs.rows_for(cond, seg).count();
            ensure!(n == want, "{cond}/{seg}: {n} rows");
        }
        seen.push(format!("{cond} {want}"));
    }
    Ok(format!("{} per segment", seen.join(", ")))
}

fn cohort(label: &str, n: usize, len: usize, seed: u64) -> AnalysisCohort {
    let mut g = rng(seed);
    let subjects = (0..n)
        .map(|k| {
            let s = uniform_series(&mut g, len);
            SubjectSeries {
                subject_id: format!("{label}{k:02}"),
                excluded: false,
                raw: s.clone(),
                tonic: s.clone(),
                phasic: s,
            }
        })
        .collect();
    AnalysisCohort { label: label.into(), rate_hz: 10.0, duration_s: len as f64 / 10.0, subjects }
}

fn performance() -> Outcome {
    let reference = cohort("ref", 40, 2600, 29);
    let probe = cohort("probe", 21, 2600, 31);
    let segments = [Segment::new("overall", 0.0, 260.0)];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let start = Instant::now();
        let table =
            pool.install(|| pairwise_dtw(&reference, &probe, Component::Tonic, &segments, &full_band())).unwrap();
        (table, start.elapsed())
    };
    let (one, t1) = run(1);
    let (eight, t8) = run(8);
    ensure!(one.len() == 840, "{} pairs", one.len());
    let same = one.rows.iter().zip(&eight.rows).all(|(a, b)| {
        a.probe_subject == b.probe_subject
            && a.reference_subject == b.reference_subject
            && a.dtw_raw.to_bits() == b.dtw_raw.to_bits()
    });
    ensure!(same && one.len() == eight.len(), "1- and 8-thread tables differ");
    ensure!(t8 < Duration::from_secs(120), "8 threads took {t8:?}");
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    Ok(format!("840 pairs: {t1:.1?} on 1 thread, {t8:.1?} on 8 threads ({cores} core(s) available); bitwise identical"))
}

fn keyframes() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    SynthStudy::three_conditions(37).write(dir.path()).map_err(|e| e.to_string())?;
    let study = Study::load(&dir.path().join("manifest.json")).map_err(|e| e.to_string())?;
    let ingested = ingest(&study).map_err(|e| e.to_string())?;
    let first = export_keyframes(&study, &ingested, &dir.path().join("a")).map_err(|e| e.to_string())?;
    let second = export_keyframes(&study, &ingested, &dir.path().join("b")).map_err(|e| e.to_string())?;
    let (lo, hi) = study.manifest.keyframes.height_bounds;
    let mut tracks = 0;
    for (a, b) in first.iter().zip(&second) {
        let bytes = fs::read(a).unwrap();
        ensure!(bytes == fs::read(b).unwrap(), "{} differs on re-export", a.display());
        for line in String::from_utf8(bytes).unwrap().lines() {
            let track: serde_json::Value = serde_json::from_str(line).unwrap();
            let values = floats(&track["values"]);
            ensure!(values.len() == 7801, "{}: {} frames", track["subject"], values.len());
            ensure!(values.iter().all(|v| (lo..=hi).contains(v)), "{}: value out of bounds", track["subject"]);
            tracks += 1;
        }
    }
    let reference = fs::read_to_string(&first[0]).unwrap().lines().count();
    ensure!(reference == 40, "reference cohort has {reference} tracks");
    Ok(format!("{tracks} tracks of 7801 frames in bounds; reference 40 tracks; byte-identical re-export"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("dtw oracle equivalence", dtw_oracle),
        ("dtw properties", dtw_properties),
        ("pearson", pearson_checks),
        ("filter response", filter_response),
        ("preprocess invariants", preprocess_invariants),
        ("decomposition", decomposition),
        ("statistics fixtures", statistics),
        ("art reduction", art_reduction),
        ("end-to-end ordering", end_to_end),
        ("pair-count contract", pair_counts),
        ("performance", performance),
        ("keyframe export", keyframes),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
