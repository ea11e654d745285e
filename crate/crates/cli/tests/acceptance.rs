//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`; pass criterion numbers after
//! `--` to run a subset (`cargo test --test acceptance -- 1 9 10`).

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rbnma::data::{design_columns, design_matrix, AdArm, CovariateSpec, CovariateValue, IndividualRecord, Transform, TrialAd, TrialIpd};
use rbnma::evaluation::{auc, auc_rank, calibration_slope};
use rbnma::glm::fit_logistic;
use rbnma::math::{inv_logit, kendall_tau, log1p_exp, logit, mix_seed};
use rbnma::nma::EffectDraws;
use rbnma::prediction::{predict, PredictOptions, PredictionAnchors};
use rbnma::pseudo_ipd::{ad_baseline_risks, impute_table, ImputationTable, PseudoIpdConfig};
use rbnma::risk::{LinearRiskModel, RiskModel};
use rbnma::sampler::{ess_bulk, sample_posterior, split_rhat, FnLikelihood, ModelSpec, ParameterBlock, Prior, SamplerConfig};
use rbnma::simulation::{
    basic_network, fit_pipeline, recovery_report, simulate_cohort, simulate_network, CovariateGenerator, CycleRange, Marginal, RecoveryConfig, SimulatedNetwork,
    SimulationTruth, Stage1Truth, Stage2Truth, StudyKind, StudyPlan,
};
use rbnma::stage1::{bootstrap_optimism, fit_prognostic, PrognosticConfig, PrognosticFitter, PrognosticModel, RandomEffectSds, RandomEffects, MODEL_FORMAT_VERSION};
use rbnma::stage2::{recalibrate, Method, RecalibrationConfig};

/// Collected checks of one criterion.
#[derive(Default)]
struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.lines.push((ok, detail.into()));
    }

    fn passed(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|(ok, _)| *ok)
    }

    fn summary(&self) -> String {
        self.lines.iter().map(|(ok, d)| if *ok { d.clone() } else { format!("[x] {d}") }).collect::<Vec<_>>().join("; ")
    }
}

type Criterion = fn(&mut Report);

fn main() {
    let criteria: [(usize, &str, Criterion); 12] = [
        (1, "sampler: Beta-Binomial conjugate check", c1_sampler),
        (2, "stage 1: prognostic model recovery", c2_stage1),
        (3, "stage 2: recalibration identities", c3_stage2),
        (4, "stage 3: network parameter recovery", c4_recovery),
        (5, "consistency identity", c5_consistency),
        (6, "cross-design consistency", c6_cross_design),
        (7, "aggregation-bias guard", c7_aggregation),
        (8, "study-mean imputation oracle", c8_imputation),
        (9, "prediction arithmetic oracle", c9_prediction),
        (10, "evaluation metrics", c10_evaluation),
        (11, "determinism of every stochastic subcommand", c11_determinism),
        (12, "invariances", c12_invariances),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (n, label, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let mut report = Report::default();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut report)));
        if let Err(e) = outcome {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            report.check(false, format!("panicked: {msg}"));
        }
        let verdict = if report.passed() { "PASS" } else { "FAIL" };
        if !report.passed() {
            failures += 1;
        }
        println!("criterion {n:>2} {verdict} {label} ({:.1}s): {}", t0.elapsed().as_secs_f64(), report.summary());
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// shared fixtures

fn parent_model(m: &LinearRiskModel) -> PrognosticModel {
    PrognosticModel {
        format_version: MODEL_FORMAT_VERSION,
        specs: m.specs.clone(),
        columns: design_columns(&m.specs).into_iter().map(|c| c.name).collect(),
        intercept: m.intercept,
        slopes: m.coefficients.clone(),
        random_effects: RandomEffects::None,
        random_effect_sds: RandomEffectSds { intercept: None, slopes: Vec::new() },
        n_records: 0,
        n_subjects: 0,
        seed: 0,
    }
}

/// Basic preset with every treatment effect and modifier at zero, so trial
/// outcomes follow the trial risk model exactly.
fn null_truth(stage2: Stage2Truth) -> SimulationTruth {
    let mut t = SimulationTruth::basic();
    t.stage2 = stage2;
    for map in [&mut t.stage3.delta, &mut t.stage3.gamma_w, &mut t.stage3.gamma_b] {
        map.values_mut().for_each(|v| *v = 0.0);
    }
    t
}

fn posterior_mean(post: &rbnma::nma::NmaPosterior, name: &str) -> f64 {
    post.diagnostics.get(name).unwrap_or_else(|| panic!("parameter {name}")).summary.mean
}

// ---------------------------------------------------------------------------

fn c1_sampler(r: &mut Report) {
    let t0 = Instant::now();
    // theta = logit p under a flat prior on p: 30 events in 100 trials plus
    // the Jacobian p(1-p) gives exponents 31 and 71
    let mut spec = ModelSpec::new();
    spec.push(ParameterBlock::scalar("theta", Prior::Hierarchical));
    let lik = FnLikelihood(|p: &[f64]| -31.0 * log1p_exp(-p[0]) - 71.0 * log1p_exp(p[0]));
    let config = SamplerConfig { chains: 4, warmup: 5000, iterations: 10_000, seed: 101, ..Default::default() };
    let draws = sample_posterior(&spec, &lik, &config).expect("sampling");
    let chains: Vec<Vec<f64>> = draws.chain_columns(0).into_iter().map(|c| c.into_iter().map(inv_logit).collect()).collect();
    let all: Vec<f64> = chains.concat();
    let mean = rbnma::math::mean(&all);
    let ess = ess_bulk(&chains);
    let mcse = rbnma::math::sd(&all) / ess.sqrt();
    let target = 31.0 / 102.0;
    let rhat = split_rhat(&chains);
    r.check((mean - target).abs() < 3.0 * mcse, format!("mean {mean:.5} vs {target:.5} (3 MCSE = {:.5})", 3.0 * mcse));
    r.check(rhat <= 1.02, format!("R-hat {rhat:.4}"));
    let secs = t0.elapsed().as_secs_f64();
    r.check(secs < 30.0, format!("{} draws in {secs:.1}s", all.len()));
}

fn stage1_truth() -> SimulationTruth {
    let normal = |name: &str| CovariateGenerator { spec: CovariateSpec::continuous(name, Transform::Identity), marginal: Marginal::Normal { mean: 0.0, sd: 1.0, lower: None } };
    let mut t = SimulationTruth::basic();
    t.covariates = vec![
        normal("x1"),
        normal("x2"),
        normal("x3"),
        CovariateGenerator { spec: CovariateSpec::binary("b"), marginal: Marginal::Bernoulli { p: 0.5 } },
        normal("x5"),
    ];
    t.correlation = None;
    t.stage1 = Stage1Truth { intercept: -0.3, slopes: vec![0.5, -0.4, 0.3, 0.6, -0.2], sd_u0: 0.5 };
    t
}

fn c2_stage1(r: &mut Report) {
    let t0 = Instant::now();
    let truth = stage1_truth();
    let specs = truth.specs();
    let cohort = simulate_cohort(&truth, 2000, CycleRange { min: 1, max: 3 }, 202).expect("cohort");
    let config = PrognosticConfig { sampler: SamplerConfig { seed: 203, ..Default::default() }, ..Default::default() };
    let fit = fit_prognostic(&cohort, &specs, &config).expect("stage-1 fit");
    let estimates: Vec<f64> = std::iter::once(fit.model.intercept).chain(fit.model.slopes.iter().copied()).collect();
    let truths: Vec<f64> = std::iter::once(truth.stage1.intercept).chain(truth.stage1.slopes.iter().copied()).collect();
    let worst = estimates.iter().zip(&truths).map(|(e, t)| (e - t).abs()).fold(0.0, f64::max);
    r.check(worst < 0.15, format!("{} records, max |mean - truth| {worst:.3} over {} fixed effects", cohort.len(), truths.len()));

    let flat = PrognosticConfig { flat_slopes: true, random_effects: RandomEffects::None, sampler: SamplerConfig::quick(204), ..Default::default() };
    let flat_fit = fit_prognostic(&cohort, &specs, &flat).expect("flat fit");
    let (x, y) = design_matrix(&cohort, &specs).expect("design");
    let rows: Vec<Vec<f64>> = x.iter().map(|row| std::iter::once(1.0).chain(row.iter().copied()).collect()).collect();
    let mle = fit_logistic(&rows, &y, None).expect("MLE");
    let bayes: Vec<f64> = std::iter::once(flat_fit.model.intercept).chain(flat_fit.model.slopes.iter().copied()).collect();
    let gap = bayes.iter().zip(&mle.coefficients).map(|(b, m)| (b - m).abs()).fold(0.0, f64::max);
    r.check(gap < 0.05, format!("flat-prior fit vs Newton MLE max gap {gap:.4}"));
    let secs = t0.elapsed().as_secs_f64();
    r.check(secs < 300.0, format!("{secs:.0}s"));
}

fn two_study_plans(n_per_arm: usize) -> Vec<StudyPlan> {
    vec![
        StudyPlan::new("t1", StudyKind::Ipd, &["P", "A"], n_per_arm).shifted(vec![-0.3, -0.3, 0.0]),
        StudyPlan::new("t2", StudyKind::Ipd, &["P", "A"], n_per_arm).shifted(vec![0.3, 0.3, 0.0]),
    ]
}

fn c3_stage2(r: &mut Report) {
    // the trials sit 0.4 above the cohort model on the logit scale
    let truth = null_truth(Stage2Truth { intercept_shift: 0.4, ..Default::default() });
    let net = simulate_network(&truth, &two_study_plans(750), 301).expect("network");
    let parent = parent_model(&truth.cohort_risk_model());
    let cfg = RecalibrationConfig { method: Method::InterceptOnly, sampler: SamplerConfig::quick(302), ..Default::default() };
    let fit = recalibrate(&parent, &net.ipd, &cfg).expect("intercept-only recalibration");
    let records: Vec<IndividualRecord> = net.ipd.iter().flat_map(|t| t.records.clone()).collect();
    let before: Vec<f64> = parent.record_logit_risks(&records).unwrap().into_iter().map(inv_logit).collect();
    let after: Vec<f64> = fit.model.effective.record_logit_risks(&records).unwrap().into_iter().map(inv_logit).collect();
    let observed = records.iter().filter(|r| r.event()).count() as f64 / records.len() as f64;
    let predicted = rbnma::math::mean(&after);
    r.check((predicted - observed).abs() < 0.01, format!("mean risk {predicted:.4} vs event rate {observed:.4} (n={})", records.len()));
    let tau = kendall_tau(&before, &after);
    r.check(tau == 1.0, format!("Kendall tau {tau}"));

    // a single n=3000 fit has slope SE near 0.045, so the band is checked on
    // the average of independent replicates
    let truth = null_truth(Stage2Truth::default());
    let parent = parent_model(&truth.trial_risk_model());
    let mut fits = Vec::new();
    for k in 0..10 {
        let net = simulate_network(&truth, &two_study_plans(750), mix_seed(303, k)).expect("network");
        let cfg = RecalibrationConfig { method: Method::InterceptAndSlope, sampler: SamplerConfig::quick(mix_seed(304, k)), ..Default::default() };
        let fit = recalibrate(&parent, &net.ipd, &cfg).expect("intercept-and-slope recalibration");
        fits.push((fit.model.coefficients[0].mean, fit.model.overall_slope));
    }
    let b0 = fits.iter().map(|f| f.0).sum::<f64>() / fits.len() as f64;
    let slope = fits.iter().map(|f| f.1).sum::<f64>() / fits.len() as f64;
    let worst = fits.iter().map(|f| (f.1 - 1.0).abs()).fold(0.0, f64::max);
    r.check(b0.abs() < 0.1 && (slope - 1.0).abs() < 0.1, format!("self-consistency (b0, b_overall) = ({b0:.3}, {slope:.3}) over 10 fits of n=3000, worst |slope - 1| {worst:.3}"));
}

fn c4_recovery(r: &mut Report) {
    let t0 = Instant::now();
    let mut config = RecoveryConfig { replicates: 20, ..Default::default() };
    config.nma.sampler = SamplerConfig::quick(0);
    let report = recovery_report(&SimulationTruth::basic(), &basic_network(1500), &config).expect("recovery study");
    r.check(report.failed == 0, format!("{}/{} replicates fitted", report.replicates.len(), report.requested));
    for p in &report.parameters {
        r.check(p.bias.abs() < 0.15 && p.covered >= 17, format!("{} bias {:+.3} coverage {}/{}", p.parameter, p.bias, p.covered, p.replicates));
    }
    let secs = t0.elapsed().as_secs_f64();
    r.check(secs < 1800.0, format!("{secs:.0}s"));
}

fn small_fit(seed: u64, center: bool) -> rbnma::nma::NmaPosterior {
    let truth = SimulationTruth::basic();
    let net = simulate_network(&truth, &basic_network(300), seed).expect("network");
    let mut config = RecoveryConfig::default();
    config.nma.center_risk = center;
    config.nma.sampler = SamplerConfig::quick(0);
    fit_pipeline(&truth, &net, &config, seed).expect("network fit")
}

fn c5_consistency(r: &mut Report) {
    let post = small_fit(501, true);
    let (p, a, b) = (post.treatment_index("P").unwrap(), post.treatment_index("A").unwrap(), post.treatment_index("B").unwrap());
    let mut worst: f64 = 0.0;
    let mut reference_exact = true;
    for d in 0..post.n_draws() {
        let loop_sum = post.contrast(d, p, a) + post.contrast(d, a, b) - post.contrast(d, p, b);
        worst = worst.max(loop_sum.abs());
        reference_exact &= post.contrast(d, p, a) == post.delta(d, a);
    }
    r.check(worst <= 1e-12, format!("max |D_PA + D_AB - D_PB| = {worst:e} over {} draws", post.n_draws()));
    r.check(reference_exact, "D_PA equals delta_A in every draw");
}

fn c6_cross_design(r: &mut Report) {
    let truth = SimulationTruth::basic();
    let net = simulate_network(&truth, &basic_network(3000), 601).expect("network");
    let mut config = RecoveryConfig::default();
    config.nma.sampler = SamplerConfig::quick(0);
    let mixed = fit_pipeline(&truth, &net, &config, 602).expect("IPD + AD fit");
    let full = SimulatedNetwork { ipd: net.ipd.iter().chain(&net.ad_sources).cloned().collect(), ad: Vec::new(), ..net.clone() };
    let all_ipd = fit_pipeline(&truth, &full, &config, 602).expect("full-IPD fit");
    for name in ["delta[A]", "delta[B]"] {
        let shift = posterior_mean(&mixed, name) - posterior_mean(&all_ipd, name);
        r.check(shift.abs() < 0.2, format!("{name} shift {shift:+.3}"));
    }
}

fn one_covariate_trial(rng: &mut ChaCha8Rng, n: usize) -> TrialIpd {
    let records = (0..n)
        .map(|i| {
            let x: f64 = rng.sample(StandardNormal);
            IndividualRecord {
                subject_id: format!("s{i}"),
                cycle: 1,
                covariates: [("x".to_string(), CovariateValue::Number(x))].into(),
                treatment: if i % 2 == 0 { "P" } else { "A" }.into(),
                outcome: rng.random_bool(0.3) as u8,
            }
        })
        .collect();
    TrialIpd { study_id: "ipd".into(), reference_treatment: "P".into(), records }
}

fn c7_aggregation(r: &mut Report) {
    let specs = vec![CovariateSpec::continuous("x", Transform::Identity)];
    let model = LinearRiskModel::new(specs, -1.5, vec![1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(701);
    let ipd = vec![one_covariate_trial(&mut rng, 2000)];
    let ad = vec![TrialAd {
        study_id: "ad".into(),
        reference_treatment: "P".into(),
        arms: vec![AdArm { treatment: "P".into(), events: 30, total: 100 }, AdArm { treatment: "A".into(), events: 20, total: 100 }],
        covariate_means: [("x".to_string(), Some(0.0))].into(),
        covariate_sds: [("x".to_string(), Some(1.0))].into(),
    }];
    let config = PseudoIpdConfig { rows: 5000, seed: 702, imputation: SamplerConfig::quick(703) };
    let result = ad_baseline_risks(&model, &ipd, &ad, &config).expect("pseudo-IPD");
    let rows = &result.rows["ad"];
    let summary = &result.summaries[0];
    let row_mean = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
    let row_sd = rbnma::math::sd(&rows.iter().map(|r| r[0]).collect::<Vec<_>>());
    let at_mean = inv_logit(model.linear_predictor(&[row_mean]));
    let averaged = rows.iter().map(|r| inv_logit(model.linear_predictor(r))).sum::<f64>() / rows.len() as f64;
    r.check((row_sd - 1.0).abs() < 0.05, format!("pseudo rows SD {row_sd:.3}"));
    r.check(averaged - at_mean > 0.01, format!("mean R_i {averaged:.4} vs R(mean row) {at_mean:.4}"));
    r.check(summary.mean_risk == averaged, "pipeline risk equals the pseudo-row average");
    let mean_logit = rows.iter().map(|r| model.linear_predictor(r)).sum::<f64>() / rows.len() as f64;
    r.check(summary.mean_logit_risk == mean_logit, "study covariate of the network model is the pseudo-row mean of logit R_i");
}

fn c8_imputation(r: &mut Report) {
    let (mx, my, sx, sy, rho) = (1.0, -0.5, 1.0, 0.8, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(801);
    let studies = 40;
    let values: Vec<Vec<Option<f64>>> = (0..studies)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            vec![Some(mx + sx * z1), Some(my + sy * (rho * z1 + (1.0 - rho * rho).sqrt() * z2))]
        })
        .collect();
    let complete = ImputationTable { studies: (0..studies).map(|j| format!("s{j}")).collect(), columns: vec!["x".into(), "y".into()], values };
    let passed = impute_table(&complete, &SamplerConfig::quick(802)).expect("complete table");
    let exact = passed.values.iter().zip(&complete.values).all(|(a, b)| a.iter().zip(b).all(|(u, v)| Some(*u) == *v));
    r.check(exact && passed.imputed.iter().flatten().all(|m| !m), "complete table passes through unchanged");

    let mut masked = complete.clone();
    masked.values[0][1] = None;
    let x0 = masked.values[0][0].unwrap();
    let oracle = my + rho * sy / sx * (x0 - mx);
    let imputed = impute_table(&masked, &SamplerConfig { seed: 803, ..Default::default() }).expect("imputation");
    let (est, sd) = (imputed.values[0][1], imputed.sds[0][1]);
    r.check((est - oracle).abs() < 2.0 * sd, format!("imputed {est:.3} (sd {sd:.3}) vs conditional mean {oracle:.3}"));
}

fn c9_prediction(r: &mut Report) {
    let effects = |gw: f64, gb: f64| EffectDraws::point(vec!["A".into(), "P".into()], "P", vec![-0.9, 0.0], vec![gw, 0.0], vec![gb, 0.0]);
    let opts = PredictOptions::default();
    let p = predict(&PredictionAnchors::point("ctx", -0.5, 1.0, 0.0), &effects(-0.2, -0.2), 0.3, &opts).unwrap();
    let a = p.get("A").unwrap().mean;
    r.check((a - 0.238_667_285_157_089_63).abs() < 1e-6, format!("p_A = {a} (logit -1.16)"));
    let reference = p.get("P").unwrap().mean;
    r.check(reference == inv_logit(-0.5 + 0.3), format!("reference collapses to inv_logit(a + gamma x) = {reference}"));
    // at x = mean logit R with gamma_b = gamma_w the between term drops out
    let xbar = 0.45;
    let q = predict(&PredictionAnchors::point("ctx", -0.5, 1.0, xbar), &effects(-0.2, -0.2), xbar, &opts).unwrap();
    let direct = inv_logit(-0.5 + -0.9 + (1.0 + -0.2) * xbar);
    r.check(q.get("A").unwrap().mean == direct, "between term cancels exactly");
}

fn brute_force_auc(p: &[f64], y: &[bool]) -> f64 {
    let (mut score, mut pairs) = (0.0, 0.0);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                score += if p[i] > p[j] { 1.0 } else if p[i] == p[j] { 0.5 } else { 0.0 };
            }
        }
    }
    score / pairs
}

/// Random instances with coarse predictions (many ties) and both classes.
fn tied_instances(seed: u64, count: usize) -> Vec<(Vec<f64>, Vec<bool>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let n = rng.random_range(5..300);
            let p: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).round() / 20.0 * 0.98 + 0.01).collect();
            let y: Vec<bool> = p.iter().map(|&q| rng.random_bool(q)).collect();
            if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
                break (p, y);
            }
        })
        .collect()
}

struct NewtonFitter {
    specs: Vec<CovariateSpec>,
}

impl PrognosticFitter for NewtonFitter {
    fn fit(&self, cohort: &[IndividualRecord], _seed: u64) -> rbnma::Result<LinearRiskModel> {
        let (x, y) = design_matrix(cohort, &self.specs)?;
        let rows: Vec<Vec<f64>> = x.iter().map(|row| std::iter::once(1.0).chain(row.iter().copied()).collect()).collect();
        let b = fit_logistic(&rows, &y, None)?.coefficients;
        LinearRiskModel::new(self.specs.clone(), b[0], b[1..].to_vec())
    }
}

fn c10_evaluation(r: &mut Report) {
    let mut worst: f64 = 0.0;
    for (p, y) in tied_instances(1001, 100) {
        let brute = brute_force_auc(&p, &y);
        worst = worst.max((auc(&p, &y).unwrap() - brute).abs()).max((auc_rank(&p, &y).unwrap() - brute).abs());
    }
    r.check(worst <= 1e-12, format!("AUC vs pairwise concordance max gap {worst:e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let n = 5000;
    let lp: Vec<f64> = (0..n).map(|_| -0.5 + 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let y: Vec<bool> = lp.iter().map(|&v| rng.random_bool(inv_logit(v))).collect();
    let calibrated: Vec<f64> = lp.iter().map(|&v| inv_logit(v)).collect();
    let doubled: Vec<f64> = lp.iter().map(|&v| inv_logit(2.0 * v)).collect();
    let s1 = calibration_slope(&calibrated, &y).unwrap();
    let s2 = calibration_slope(&doubled, &y).unwrap();
    r.check((0.9..=1.1).contains(&s1), format!("calibrated slope {s1:.3}"));
    r.check((0.45..=0.55).contains(&s2), format!("doubled-logit slope {s2:.3}"));

    let names = ["n1", "n2", "n3", "n4", "n5"];
    let specs: Vec<CovariateSpec> = names.iter().map(|n| CovariateSpec::continuous(n, Transform::Identity)).collect();
    let cohort: Vec<IndividualRecord> = (0..400)
        .map(|i| IndividualRecord {
            subject_id: format!("s{i}"),
            cycle: 1,
            covariates: names.iter().map(|n| (n.to_string(), CovariateValue::Number(rng.sample(StandardNormal)))).collect(),
            treatment: "none".into(),
            outcome: rng.random_bool(0.3) as u8,
        })
        .collect();
    let report = bootstrap_optimism(&cohort, &NewtonFitter { specs }, 50, 1003).expect("bootstrap");
    let c = report.corrected.auc;
    r.check((0.45..=0.55).contains(&c), format!("no-signal AUC apparent {:.3} corrected {c:.3} (B=50)", report.apparent.auc));
}

fn c11_determinism(r: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("small.toml"), common::SMALL).unwrap();
    common::run_pipeline(dir);
    let first = common::snapshot(dir);
    std::fs::remove_dir_all(dir.join("data")).unwrap();
    common::run_pipeline(dir);
    let second = common::snapshot(dir);
    let differing: Vec<String> = first.iter().filter(|(k, v)| second.get(*k) != Some(v)).map(|(k, _)| k.display().to_string()).collect();
    let exports = first.keys().filter(|k| k.extension().is_some_and(|e| e == "tsv")).count();
    r.check(first.len() == second.len() && differing.is_empty(), format!("{} files ({exports} tables) byte-identical across reruns {differing:?}", first.len()));
}

fn c12_invariances(r: &mut Report) {
    // argmin treatment under shifts of the anchor intercept, with random-effects noise on
    let mut rng = ChaCha8Rng::seed_from_u64(1201);
    let treatments: Vec<String> = ["A", "B", "C", "P"].iter().map(|s| s.to_string()).collect();
    let draws = 400;
    let row = |rng: &mut ChaCha8Rng, centre: [f64; 3], spread: f64| -> Vec<f64> {
        centre.iter().map(|c| c + spread * rng.sample::<f64, _>(StandardNormal)).chain(std::iter::once(0.0)).collect()
    };
    let mut effects = EffectDraws::point(treatments, "P", Vec::new(), Vec::new(), Vec::new());
    effects.delta = (0..draws).map(|_| row(&mut rng, [-0.6, -0.3, -0.9], 0.2)).collect();
    effects.gamma_w = (0..draws).map(|_| row(&mut rng, [-0.3, 0.1, -0.5], 0.1)).collect();
    effects.gamma_b = effects.gamma_w.clone();
    effects.sd_d = Some(vec![0.2; draws]);
    let opts = PredictOptions::default();
    let mut stable = true;
    for x in [-3.0, -1.5, -0.5, 0.0, 0.8, 2.0] {
        let base = predict(&PredictionAnchors::point("ctx", 0.0, 1.0, -0.4), &effects, x, &opts).unwrap();
        for shift in [-2.0, -0.7, 0.4, 1.5, 3.0] {
            let moved = predict(&PredictionAnchors::point("ctx", shift, 1.0, -0.4), &effects, x, &opts).unwrap();
            stable &= moved.best() == base.best();
        }
    }
    r.check(stable, "best treatment unchanged under 5 shifts of a at 6 risk levels");

    let centred = small_fit(1202, true);
    let uncentred = small_fit(1202, false);
    let mut gap: f64 = 0.0;
    for name in ["delta[A]", "delta[B]"] {
        gap = gap.max((posterior_mean(&centred, name) - posterior_mean(&uncentred, name)).abs());
    }
    let d_ab = |p: &rbnma::nma::NmaPosterior| posterior_mean(p, "delta[B]") - posterior_mean(p, "delta[A]");
    gap = gap.max((d_ab(&centred) - d_ab(&uncentred)).abs());
    r.check(gap < 0.05, format!("contrasts with and without risk centring differ by at most {gap:.3}"));

    let transforms: [(&str, fn(f64) -> f64); 3] = [("logit", logit), ("cube", |p| p * p * p), ("exp(5p)", |p| (5.0 * p).exp())];
    let mut exact = true;
    for (p, y) in tied_instances(1203, 100) {
        let base = auc(&p, &y).unwrap();
        for (_, f) in &transforms {
            let q: Vec<f64> = p.iter().map(|&v| f(v)).collect();
            exact &= auc(&q, &y).unwrap() == base && auc_rank(&q, &y).unwrap() == base;
        }
    }
    r.check(exact, "AUC identical under logit, cube and exp transforms on 100 instances");
}
