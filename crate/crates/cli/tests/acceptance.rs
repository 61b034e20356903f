//! Acceptance criteria C1-C12. Prints one line per criterion and exits
//! non-zero if any fails. Pass criterion ids (e.g. `C3 C7`) to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use rand::Rng as _;
use regime_var::evaluate::{
    comp_totals, comp_value, comparison_matrix, comparison_report, dominance, paired_t_test, student_t_cdf, BreachSet, Sided,
};
use regime_var::hmm::baum_welch_trace;
use regime_var::nn::gradcheck::{central_difference, max_store_gradient_error, relative_error};
use regime_var::nn::{
    balance_regularizer, objective, regularized_loss, Activation, CausalConv, Dense, GmmHead, LstmCell, ParamStore, RegimeHead,
    TcnStack,
};
use regime_var::regime_net::Normalization;
use regime_var::rng::{derive_seed, rng_from_seed};
use regime_var::synthetic::{equity_bond_regimes, equity_regimes, generate_returns, return_series};
use regime_var::{
    forward_backward, run_backtest, Accounting, BackboneSpec, BacktestConfig, BreachRecord, EmConfig, HmmParams, Matrix,
    MvGaussian, RegimeNetModel,
};
use statrs::function::gamma::ln_gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, &'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        (
            "C1",
            "forward-backward matches path enumeration",
            c1_forward_backward,
            Some(Duration::from_secs(1)),
        ),
        ("C2", "EM log-likelihood is monotone", c2_em_monotone, None),
        ("C3", "HMM parameter recovery", c3_hmm_recovery, Some(Duration::from_secs(30))),
        ("C4", "gradient suite", c4_gradients, None),
        ("C5", "TCN receptive field of 255 days", c5_receptive_field, None),
        ("C6", "regularizer reference values", c6_regularizer, None),
        (
            "C7",
            "classic VaR calibration on i.i.d. data",
            c7_calibration,
            Some(Duration::from_secs(600)),
        ),
        ("C8", "HMM beats classic at 1% on regime data", c8_hmm_vs_classic, None),
        ("C9", "HMM init and regularization help the LSTM", c9_lstm_variants, None),
        ("C10", "evaluation fixtures and t-CDF", c10_evaluation_math, None),
        ("C11", "backtest output independent of thread count", c11_determinism, None),
        ("C12", "comp totals per level and asset class", c12_comp_totals, None),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f, limit) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w.eq_ignore_ascii_case(id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; exceeded {} s limit", limit.as_secs()));
            }
        }
        if !out.pass {
            failed += 1;
        }
        println!(
            "[{}] {id:<3} {name}: {} ({:.2} s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn weighted_sum(a: &Matrix, w: &Matrix) -> f64 {
    a.as_slice().iter().zip(w.as_slice()).map(|(x, y)| x * y).sum()
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// ---- C1 ----

/// Log-density of N(mean, L Lᵀ) for n <= 2 through the explicit 2x2 inverse.
fn oracle_log_density(mean: &[f64], l: &[f64], x: &[f64]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    if mean.len() == 1 {
        let z = (x[0] - mean[0]) / l[0];
        return -0.5 * ln2pi - l[0].ln() - 0.5 * z * z;
    }
    let (a, c, d) = (l[0], l[2], l[3]);
    let (s11, s12, s22) = (a * a, a * c, c * c + d * d);
    let det = s11 * s22 - s12 * s12;
    let (u, v) = (x[0] - mean[0], x[1] - mean[1]);
    let q = (s22 * u * u - 2.0 * s12 * u * v + s11 * v * v) / det;
    -ln2pi - 0.5 * det.ln() - 0.5 * q
}

fn c1_forward_backward() -> Outcome {
    let mut worst = 0.0f64;
    for inst in 0..50u64 {
        let mut rng = rng_from_seed(derive_seed(1, &["c1", &inst.to_string()]));
        let n = 1 + (inst % 2) as usize;
        let t_len = rng.random_range(1..=8);
        let p0 = rng.random_range(0.05..0.95);
        let (a, b) = (rng.random_range(0.05..0.99), rng.random_range(0.05..0.99));
        let trans = vec![a, 1.0 - a, 1.0 - b, b];
        let mut comps = Vec::new();
        let mut raw = Vec::new();
        for _ in 0..2 {
            let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let l = if n == 1 {
                vec![rng.random_range(0.3..1.5)]
            } else {
                vec![
                    rng.random_range(0.3..1.5),
                    0.0,
                    rng.random_range(-0.5..0.5),
                    rng.random_range(0.3..1.5),
                ]
            };
            comps.push(MvGaussian::new(mean.clone(), l.clone()).unwrap());
            raw.push((mean, l));
        }
        let params = HmmParams::new(vec![p0, 1.0 - p0], trans.clone(), comps).unwrap();
        let obs = random_matrix(t_len, n, -2.0, 2.0, inst + 100);

        let mut joint = Vec::with_capacity(1 << t_len);
        for path in 0..(1usize << t_len) {
            let s = |t: usize| (path >> t) & 1;
            let mut lp = [p0, 1.0 - p0][s(0)].ln();
            for t in 0..t_len {
                if t > 0 {
                    lp += trans[s(t - 1) * 2 + s(t)].ln();
                }
                let (m, l) = &raw[s(t)];
                lp += oracle_log_density(m, l, obs.row(t));
            }
            joint.push(lp);
        }
        let ll = lse(&joint);
        let fb = forward_backward(&params, &obs).unwrap();
        worst = worst.max((fb.log_likelihood - ll).abs());
        for t in 0..t_len {
            for i in 0..2 {
                let terms: Vec<f64> = joint
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| (p >> t) & 1 == i)
                    .map(|(_, v)| *v)
                    .collect();
                let gamma = (lse(&terms) - ll).exp();
                worst = worst.max((fb.probs.get(t, i) - gamma).abs());
            }
        }
    }
    outcome(worst < 1e-10, format!("50 instances, max abs error {worst:.1e}"))
}

// ---- C2 ----

fn c2_em_monotone() -> Outcome {
    let mut worst_drop = 0.0f64;
    let mut iters = 0;
    for seed in 0..20u64 {
        let (x, _) = generate_returns(
            &equity_bond_regimes(),
            1500,
            &mut rng_from_seed(derive_seed(2, &["c2", &seed.to_string()])),
        );
        let fit = baum_welch_trace(&x, 2, &EmConfig::default(), &mut rng_from_seed(seed)).unwrap();
        iters += fit.log_likelihoods.len();
        for w in fit.log_likelihoods.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    outcome(
        worst_drop <= 1e-9,
        format!("20 runs, {iters} iterations, largest decrease {worst_drop:.1e}"),
    )
}

// ---- C3 ----

fn c3_hmm_recovery() -> Outcome {
    let truth = HmmParams::new(
        vec![0.5, 0.5],
        vec![0.98, 0.02, 0.02, 0.98],
        vec![
            MvGaussian::new(vec![0.0004], vec![0.008]).unwrap(),
            MvGaussian::new(vec![-0.0008], vec![0.020]).unwrap(),
        ],
    )
    .unwrap();
    let mut ok = 0;
    let (mut bad_mean, mut bad_vol, mut bad_diag) = (0, 0, 0);
    let mut worst_mean = 0.0f64;
    for seed in 0..20u64 {
        let (x, _) = generate_returns(&truth, 4000, &mut rng_from_seed(derive_seed(3, &["c3", &seed.to_string()])));
        let fit = baum_welch_trace(&x, 2, &EmConfig::default(), &mut rng_from_seed(seed))
            .unwrap()
            .params;
        let mut best: Option<(bool, bool, bool, f64)> = None;
        for perm in [[0usize, 1], [1, 0]] {
            let mut means = true;
            let mut vols = true;
            let mut diag = true;
            let mut err = 0.0f64;
            for i in 0..2 {
                let (f, t) = (&fit.regimes()[perm[i]], &truth.regimes()[i]);
                let e = (f.mean()[0] - t.mean()[0]).abs();
                err = err.max(e);
                means &= e <= 0.0004;
                vols &= (f.std_devs()[0] / t.std_devs()[0] - 1.0).abs() <= 0.10;
                diag &= (fit.trans_row(perm[i])[perm[i]] - truth.trans_row(i)[i]).abs() <= 0.02;
            }
            let score = means && vols && diag;
            if best.map_or(true, |b| score || (!(b.0 && b.1 && b.2) && err < b.3)) {
                best = Some((means, vols, diag, err));
            }
        }
        let (m, v, d, e) = best.unwrap();
        worst_mean = worst_mean.max(e);
        bad_mean += usize::from(!m);
        bad_vol += usize::from(!v);
        bad_diag += usize::from(!d);
        ok += usize::from(m && v && d);
    }
    outcome(
        ok >= 18,
        format!(
            "{ok}/20 seeds recovered (need 18); misses: means {bad_mean}, vols {bad_vol}, diagonal {bad_diag}; worst mean error {worst_mean:.5}"
        ),
    )
}

// ---- C4 ----

fn c4_gradients() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, err: f64, tol: f64| {
        pass &= err < tol;
        lines.push(format!("{name} {err:.0e}"));
    };

    // dense + tanh
    {
        let mut rng = rng_from_seed(41);
        let mut s = ParamStore::new();
        let d1 = Dense::new(&mut s, "d1", 5, 4, Activation::Tanh);
        let d2 = Dense::new(&mut s, "d2", 4, 3, Activation::Tanh);
        d1.init_uniform(&mut s, &mut rng);
        d2.init_uniform(&mut s, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = [0.7, -1.3, 0.4];
        let loss = |s: &ParamStore| {
            let y = d2.forward(s, &d1.forward(s, &x).unwrap()).unwrap();
            y.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        s.zero_grad();
        let h = d1.forward(&s, &x).unwrap();
        let y = d2.forward(&s, &h).unwrap();
        let mut dh = vec![0.0; 4];
        d2.backward(&mut s, &h, &y, &c, Some(&mut dh));
        d1.backward(&mut s, &x, &h, &dh, None);
        check("dense", max_store_gradient_error(&mut s, loss), 1e-5);
    }

    // causal dilated convolution
    {
        let mut s = ParamStore::new();
        let conv = CausalConv::new(&mut s, "c", 2, 3, 4, Activation::Tanh);
        conv.init_uniform(&mut s, &mut rng_from_seed(42));
        let x = random_matrix(16, 2, -1.0, 1.0, 43);
        let w = random_matrix(16, 3, -1.0, 1.0, 44);
        let loss = |s: &ParamStore| weighted_sum(&conv.forward(s, &x), &w);
        s.zero_grad();
        let y = conv.forward(&s, &x);
        conv.backward(&mut s, &x, &y, &w, None);
        check("conv", max_store_gradient_error(&mut s, loss), 1e-5);

        let mut s = ParamStore::new();
        let tcn = TcnStack::new(&mut s, "tcn", 2, 3, 3, Activation::Tanh);
        tcn.init_uniform(&mut s, &mut rng_from_seed(45));
        let x = random_matrix(20, 2, -1.0, 1.0, 46);
        let w = random_matrix(20, 3, -1.0, 1.0, 47);
        let loss = |s: &ParamStore| weighted_sum(tcn.forward(s, &x).last().unwrap(), &w);
        s.zero_grad();
        let acts = tcn.forward(&s, &x);
        let dx = tcn.backward(&mut s, &acts, w.clone());
        let probe = s.clone();
        let f = |flat: &[f64]| {
            weighted_sum(
                tcn.forward(&probe, &Matrix::from_vec(20, 2, flat.to_vec()).unwrap())
                    .last()
                    .unwrap(),
                &w,
            )
        };
        let input_err = (0..40)
            .map(|i| relative_error(dx.as_slice()[i], central_difference(&f, x.as_slice(), i)))
            .fold(0.0, f64::max);
        check("tcn", max_store_gradient_error(&mut s, loss).max(input_err), 1e-5);
    }

    // LSTM, one step and a 50-step recurrence
    for (t_len, tol) in [(1usize, 1e-5), (50, 1e-4)] {
        let mut rng = rng_from_seed(48);
        let mut s = ParamStore::new();
        let cell = LstmCell::new(&mut s, "l", 2, 5);
        cell.init_uniform(&mut s, &mut rng);
        let xs = random_matrix(t_len, 2, -1.0, 1.0, 49);
        let w = random_matrix(t_len, 5, -1.0, 1.0, 50);
        let (h0, c0) = (vec![0.1; 5], vec![-0.2; 5]);
        let loss = |s: &ParamStore| weighted_sum(&cell.forward_sequence(s, &xs, &h0, &c0).h, &w);
        s.zero_grad();
        let trace = cell.forward_sequence(&s, &xs, &h0, &c0);
        let probe = s.clone();
        let dx = cell.backward_sequence(&mut s, &xs, &trace, &w);
        let f = |flat: &[f64]| {
            let xm = Matrix::from_vec(t_len, 2, flat.to_vec()).unwrap();
            weighted_sum(&cell.forward_sequence(&probe, &xm, &h0, &c0).h, &w)
        };
        let input_err = (0..2 * t_len)
            .map(|i| relative_error(dx.as_slice()[i], central_difference(&f, xs.as_slice(), i)))
            .fold(0.0, f64::max);
        check(
            &format!("lstm{t_len}"),
            max_store_gradient_error(&mut s, loss).max(input_err),
            tol,
        );
    }

    // softmax head
    {
        let mut rng = rng_from_seed(51);
        let mut s = ParamStore::new();
        let head = RegimeHead::new(&mut s, "h", 4, 3);
        head.init_uniform(&mut s, &mut rng);
        let x = [0.3, -0.8, 1.5, 0.1];
        let c = [0.5, -2.0, 1.0];
        let loss = |s: &ParamStore| {
            head.forward(s, &x)
                .unwrap()
                .iter()
                .zip(&c)
                .map(|(p, b)| b * p.ln())
                .sum::<f64>()
        };
        s.zero_grad();
        let phi = head.forward(&s, &x).unwrap();
        let dphi: Vec<f64> = phi.iter().zip(&c).map(|(p, b)| b / p).collect();
        head.backward(&mut s, &x, &phi, &dphi, None);
        check("softmax", max_store_gradient_error(&mut s, loss), 1e-5);
    }

    // GMM head
    {
        let mut rng = rng_from_seed(52);
        let mut s = ParamStore::new();
        let gmm = GmmHead::new(&mut s, "gmm", 2, 3);
        gmm.init_random(&mut s, &mut rng);
        let ids: Vec<_> = s.ids().collect();
        for id in ids {
            for v in s.value_mut(id) {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let obs = random_matrix(6, 3, -2.0, 2.0, 53);
        let w = random_matrix(6, 2, -1.0, 1.0, 54);
        let loss = |s: &ParamStore| weighted_sum(&gmm.log_densities(s, &obs), &w);
        s.zero_grad();
        gmm.backward(&mut s, &obs, &w);
        check("gmm", max_store_gradient_error(&mut s, loss), 1e-5);
    }

    // lookahead loss and regularized loss, with respect to φ and the densities
    for weight in [0.0, 1.0] {
        let ln = random_matrix(12, 3, -4.0, 1.0, 55);
        let mut phi = random_matrix(9, 3, 0.1, 1.0, 56);
        for t in 0..9 {
            let sum: f64 = phi.row(t).iter().sum();
            phi.row_mut(t).iter_mut().for_each(|v| *v /= sum);
        }
        let out = objective(&phi, 1, &ln, 3, weight).unwrap();
        let f_phi = |flat: &[f64]| {
            objective(&Matrix::from_vec(9, 3, flat.to_vec()).unwrap(), 1, &ln, 3, weight)
                .unwrap()
                .total
        };
        let f_ln = |flat: &[f64]| {
            objective(&phi, 1, &Matrix::from_vec(12, 3, flat.to_vec()).unwrap(), 3, weight)
                .unwrap()
                .total
        };
        let mut err = 0.0f64;
        for i in 0..27 {
            err = err.max(relative_error(
                out.grad.dphi.as_slice()[i],
                central_difference(&f_phi, phi.as_slice(), i),
            ));
        }
        for i in 0..36 {
            err = err.max(relative_error(
                out.grad.d_logn.as_slice()[i],
                central_difference(&f_ln, ln.as_slice(), i),
            ));
        }
        check(if weight == 0.0 { "loss" } else { "reg-loss" }, err, 1e-5);
    }

    // end to end through each backbone
    let backbones = [
        (
            "ffn",
            BackboneSpec::Ffn {
                receptive_field: 3,
                hidden: vec![4, 3],
            },
            12,
            1e-5,
        ),
        ("tcn", BackboneSpec::Tcn { layers: 3, channels: 2 }, 20, 1e-5),
        ("lstm", BackboneSpec::Lstm { hidden: 3 }, 10, 1e-5),
        ("lstm50", BackboneSpec::lstm(), 50, 1e-4),
    ];
    for (name, spec, t_len, tol) in backbones {
        for weight in [0.0, 1.0] {
            let xs = random_matrix(t_len, 2, -1.0, 1.0, 57);
            let norm = Normalization {
                mean: vec![0.0; 2],
                var: vec![1.0; 2],
            };
            let mut m = RegimeNetModel::new(spec.clone(), 2, 2, 3, norm).unwrap();
            let mut rng = rng_from_seed(58);
            m.init_network(&mut rng);
            m.init_gmm_random(&mut rng);
            m.objective_with_gradients(&xs, weight).unwrap();
            let probe = m.clone();
            let mut store = m.params().clone();
            let err = max_store_gradient_error(&mut store, |s| {
                let mut p = probe.clone();
                *p.params_mut() = s.clone();
                p.objective_value(&xs, weight).unwrap()
            });
            check(&format!("{name}-w{weight}"), err, tol);
        }
    }
    outcome(pass, format!("max relative errors: {}", lines.join(", ")))
}

// ---- C5 ----

fn c5_receptive_field() -> Outcome {
    let mut s = ParamStore::new();
    let tcn = TcnStack::new(&mut s, "tcn", 1, 3, 7, Activation::Tanh);
    tcn.init_uniform(&mut s, &mut rng_from_seed(5));
    let t_len = 700;
    let impulse = 300;
    let x = random_matrix(t_len, 1, -1.0, 1.0, 6);
    let mut bumped = x.clone();
    bumped.set(impulse, 0, x.get(impulse, 0) + 0.5);
    let (a, b) = (tcn.forward(&s, &x), tcn.forward(&s, &bumped));
    let (ya, yb) = (a.last().unwrap(), b.last().unwrap());
    let changed: Vec<usize> = (0..t_len).filter(|&t| ya.row(t) != yb.row(t)).collect();
    let stack_ok = tcn.receptive_field() == 255
        && changed.first() == Some(&impulse)
        && changed.last() == Some(&(impulse + 254))
        && changed.len() == 255;

    // the full network: the next-day regime distribution reads the last 255 days
    let mut m = RegimeNetModel::new(
        BackboneSpec::tcn(),
        2,
        1,
        5,
        Normalization {
            mean: vec![0.0],
            var: vec![1.0],
        },
    )
    .unwrap();
    m.init_network(&mut rng_from_seed(7));
    let history = random_matrix(400, 1, -1.0, 1.0, 8);
    let base = m.regime_probs(&history).unwrap();
    let mut sensitive = Vec::new();
    for back in 0..400 {
        let mut h = history.clone();
        let r = 399 - back;
        h.set(r, 0, h.get(r, 0) + 0.5);
        if m.regime_probs(&h).unwrap() != base {
            sensitive.push(back);
        }
    }
    let model_ok = sensitive.len() == 255 && sensitive.last() == Some(&254);
    outcome(
        stack_ok && model_ok,
        format!(
            "impulse at {impulse} moves outputs {:?}..={:?} ({} steps); network reads the last {} days",
            changed.first(),
            changed.last(),
            changed.len(),
            sensitive.len()
        ),
    )
}

// ---- C6 ----

fn c6_regularizer() -> Outcome {
    let balanced = Matrix::from_vec(4, 2, vec![0.5; 8]).unwrap();
    let collapsed = Matrix::from_vec(4, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    let (rb, rc) = (balance_regularizer(&balanced), balance_regularizer(&collapsed));
    let base = 1234.5678;
    let (fb, fc) = (regularized_loss(base, rb, 1.0) / base, regularized_loss(base, rc, 1.0) / base);

    let ln = random_matrix(4, 2, -3.0, 0.0, 9);
    let ob = objective(&balanced, 0, &ln, 2, 1.0).unwrap();
    let oc = objective(&collapsed, 0, &ln, 2, 1.0).unwrap();
    let pass = rb == 0.5 && rc == 1.0 && fb == 1.5 && fc == 2.0 && ob.total == 1.5 * ob.base && oc.total == 2.0 * oc.base;
    outcome(pass, format!("reg balanced {rb}, collapsed {rc}; loss factor {fb} and {fc}"))
}

// ---- C7 ----

fn breach_rate(records: &[BreachRecord], model: &str, asset: &str, level: f64) -> (usize, usize) {
    let rs: Vec<&BreachRecord> = records
        .iter()
        .filter(|r| r.model == model && r.asset == asset && r.level == level)
        .collect();
    (rs.iter().filter(|r| r.breached).count(), rs.len())
}

fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1990, 1, 1).unwrap()
}

fn c7_calibration() -> Outcome {
    let iid = HmmParams::single(MvGaussian::new(vec![0.0003], vec![0.01]).unwrap());
    let days = 2000 + 5 * 2010;
    let (x, _) = generate_returns(&iid, days, &mut rng_from_seed(70));
    let data = return_series(x, start_date(), vec!["iid".into()]).unwrap();
    let config = BacktestConfig {
        paths: 10_000,
        levels: vec![0.05],
        models: vec!["classic".into()],
        seed: 7,
        ..BacktestConfig::default()
    };
    let res = run_backtest(&data, &config).unwrap();
    let (hits, n) = breach_rate(&res.breaches, "classic", "iid", 0.05);
    let rate = hits as f64 / n as f64;
    outcome(
        n >= 2000 && (0.0375..=0.0625).contains(&rate),
        format!("{hits}/{n} weeks breached = {:.2}% (band 3.75%..6.25%)", 100.0 * rate),
    )
}

// ---- C8 ----

fn c8_hmm_vs_classic() -> Outcome {
    let weeks = 1500;
    let (x, _) = generate_returns(&equity_bond_regimes(), 2000 + 5 * (weeks + 5), &mut rng_from_seed(80));
    let data = return_series(x, start_date(), vec!["equity".into(), "bond".into()]).unwrap();
    let config = BacktestConfig {
        paths: 10_000,
        models: vec!["classic".into(), "hmm".into()],
        seed: 8,
        ..BacktestConfig::default()
    };
    let res = run_backtest(&data, &config).unwrap();
    let (c, n) = breach_rate(&res.breaches, "classic", "equity", 0.01);
    let (h, _) = breach_rate(&res.breaches, "hmm", "equity", 0.01);
    let report = comparison_report(&res.breaches, Accounting::Excess, Sided::Two).unwrap();
    let panel = report.panels.iter().find(|p| p.asset == "equity" && p.level == 0.01).unwrap();
    let cell = panel.cells.iter().find(|c| c.row == "hmm" && c.col == "classic").unwrap();
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    outcome(
        h < c && cell.comp == 1.0 && res.failures.is_empty(),
        format!(
            "equity 1% over {n} weeks: classic {c} ({:.2}%), hmm {h} ({:.2}%); comp(hmm, classic) = {}, p = {:.3}",
            pct(c),
            pct(h),
            cell.comp,
            cell.pvalue
        ),
    )
}

// ---- C9 ----

fn c9_lstm_variants() -> Outcome {
    let weeks = 300;
    let mut init_wins = 0;
    let mut reg_wins = 0;
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let (x, _) = generate_returns(
            &equity_regimes(),
            2000 + 5 * (weeks + 1),
            &mut rng_from_seed(derive_seed(9, &["c9", &seed.to_string()])),
        );
        let data = return_series(x, start_date(), vec!["equity".into()]).unwrap();
        let config = BacktestConfig {
            paths: 10_000,
            levels: vec![0.05],
            models: vec!["lstm".into(), "lstm-hmm".into(), "lstm-hmm-reg1".into()],
            refit_stride: 50,
            seed,
            ..BacktestConfig::default()
        };
        let res = run_backtest(&data, &config).unwrap();
        let count = |m: &str| breach_rate(&res.breaches, m, "equity", 0.05).0;
        let (plain, init, reg) = (count("lstm"), count("lstm-hmm"), count("lstm-hmm-reg1"));
        init_wins += usize::from(init <= plain);
        reg_wins += usize::from(reg <= init);
        rows.push(format!("{plain}/{init}/{reg}"));
        let n = breach_rate(&res.breaches, "lstm", "equity", 0.05).1;
        if seed == 0 {
            rows[0] = format!("{n} weeks; {}", rows[0]);
        }
    }
    outcome(
        init_wins >= 7 && reg_wins >= 7,
        format!(
            "5% breaches lstm/lstm-hmm/lstm-hmm-reg1 per seed [{}]; hmm init <= none in {init_wins}/10, reg1 <= reg0 in {reg_wins}/10",
            rows.join(", ")
        ),
    )
}

// ---- C10 ----

fn weekly(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 7).unwrap();
    (0..n).map(|i| start + Days::new(7 * i as u64)).collect()
}

fn bits(model: &str, b: &[u8]) -> BreachSet {
    BreachSet::new(model, weekly(b.len()), b.iter().map(|v| *v == 1).collect()).unwrap()
}

fn first_k(model: &str, n: usize, k: usize) -> BreachSet {
    BreachSet::new(model, weekly(n), (0..n).map(|i| i < k).collect()).unwrap()
}

fn t_density(x: f64, df: f64) -> f64 {
    (ln_gamma((df + 1.0) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln())
    .exp()
}

fn c10_evaluation_math() -> Outcome {
    let mut fails = Vec::new();
    let mut expect = |name: &str, ok: bool| {
        if !ok {
            fails.push(name.to_string());
        }
    };

    let hmm = first_k("hmm", 1197, 16);
    let classic = first_k("classic", 1197, 26);
    expect("comp", comp_value(&hmm, &classic).unwrap() == 1.0);
    expect("comp reverse", comp_value(&classic, &hmm).unwrap() == 0.0);
    expect("comp tie", comp_value(&hmm, &hmm).unwrap() == 0.5);

    let a = bits("a", &[1, 1, 1, 0]);
    let b = bits("b", &[0, 1, 1, 0]);
    let c = bits("c", &[0, 0, 0, 1]);
    expect("dom 2/3", dominance(&a, &b).unwrap() == Some(2.0 / 3.0 - 1.0));
    expect("dom subset", dominance(&b, &a).unwrap() == Some(0.0));
    expect("dom disjoint", dominance(&a, &c).unwrap() == Some(-1.0));
    expect("dom empty", dominance(&bits("z", &[0, 0, 0, 0]), &a).unwrap().is_none());

    // t = 1, df = 4: p = 1 - 7 / 5^1.5 in closed form
    let p = paired_t_test(&bits("a", &[1, 0, 0, 0, 0]), &bits("b", &[0, 0, 0, 0, 0]), Sided::Two).unwrap();
    expect("t-test t=1 df=4", (p - (1.0 - 7.0 / 5f64.powf(1.5))).abs() < 1e-12);
    expect("t-test identical", paired_t_test(&a, &a, Sided::Two).unwrap() == 1.0);

    let twin = BreachSet {
        model: "a2".into(),
        ..a.clone()
    };
    let cells = comparison_matrix(&[a.clone(), twin], Sided::Two).unwrap();
    expect(
        "twins tie",
        cells.iter().all(|c| (c.comp, c.pvalue, c.dom) == (0.5, 1.0, Some(0.0))),
    );

    let nested = [
        bits("s", &[1, 0, 0, 0, 0, 0]),
        bits("m", &[1, 1, 0, 0, 0, 0]),
        bits("l", &[1, 1, 1, 0, 0, 0]),
    ];
    let cells = comparison_matrix(&nested, Sided::Two).unwrap();
    let get = |r: &str, c: &str| cells.iter().find(|x| x.row == r && x.col == c).unwrap();
    expect(
        "nested",
        [("s", "m"), ("m", "l"), ("s", "l")]
            .iter()
            .all(|(r, c)| get(r, c).comp == 1.0 && get(r, c).dom == Some(0.0) && get(c, r).comp == 0.0),
    );

    let mut worst = 0.0f64;
    for df in [1.0, 4.0, 30.0, 1000.0] {
        for t in [-3.0, -1.0, 0.0, 0.5, 2.0, 4.0] {
            let steps = 200_000;
            let h = t / steps as f64;
            let mut area = 0.5 * (t_density(0.0, df) + t_density(t, df));
            for i in 1..steps {
                area += t_density(h * i as f64, df);
            }
            worst = worst.max((student_t_cdf(t, df) - (0.5 + area * h)).abs());
        }
    }
    expect("t-cdf", worst < 1e-8);
    let pass = fails.is_empty();
    outcome(
        pass,
        if pass {
            format!("13 fixtures exact; t-CDF max error vs integration {worst:.1e}")
        } else {
            format!("failed: {}; t-CDF error {worst:.1e}", fails.join(", "))
        },
    )
}

// ---- C11 ----

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_regime-var"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let prices = p("prices.csv");
    cli(&[
        "generate",
        "--preset",
        "equity-bond",
        "--days",
        "800",
        "--seed",
        "11",
        "--out",
        &prices,
    ])
    .unwrap();
    for threads in ["1", "3"] {
        let out = p(&format!("t{threads}"));
        cli(&[
            "--threads",
            threads,
            "backtest",
            "--input",
            &prices,
            "--models",
            "classic,hmm,lstm-hmm-reg1",
            "--window",
            "500",
            "--paths",
            "5000",
            "--refit-stride",
            "20",
            "--epochs",
            "10",
            "--attempts",
            "2",
            "--seed",
            "11",
            "--out-dir",
            &out,
        ])
        .unwrap();
    }
    let mut same = Vec::new();
    let mut differ = Vec::new();
    for f in ["breaches.csv", "estimates.csv", "failures.csv"] {
        let a = std::fs::read(Path::new(&p("t1")).join(f)).unwrap();
        let b = std::fs::read(Path::new(&p("t3")).join(f)).unwrap();
        if a == b && !a.is_empty() {
            same.push(format!("{f} ({} bytes)", a.len()));
        } else {
            differ.push(f);
        }
    }
    outcome(
        differ.is_empty(),
        if differ.is_empty() {
            format!("1 vs 3 threads identical: {}", same.join(", "))
        } else {
            format!("differ: {}", differ.join(", "))
        },
    )
}

// ---- C12 ----

fn c12_comp_totals() -> Outcome {
    let nets = ["ff", "cnn", "lstm"];
    let regions = ["us", "uk", "de", "jp"];
    let classes = ["equity", "bond"];
    let levels = [0.01, 0.05];
    let d0 = NaiveDate::from_ymd_opt(2010, 1, 8).unwrap();
    let date = |i: usize| d0 + Days::new(7 * i as u64);
    let rec = |model: &str, asset: &str, level: f64, i: usize, breached: bool| BreachRecord {
        date: date(i),
        target: date(i + 1),
        model: model.into(),
        asset: asset.into(),
        level,
        realized: if breached { -0.1 } else { 0.01 },
        threshold: -0.05,
        excess: if breached { -0.05 } else { 0.06 },
        breached,
    };
    // 2,000-day run evaluates dates 2..22, the 1,000-day run 0..22; the two
    // extra dates are breached and must not count.
    let mut long = Vec::new();
    let mut short = Vec::new();
    let mut expected = std::collections::BTreeMap::new();
    for (li, &level) in levels.iter().enumerate() {
        for (ci, class) in classes.iter().enumerate() {
            for (ri, region) in regions.iter().enumerate() {
                for (ni, net) in nets.iter().enumerate() {
                    let asset = format!("{region}:{class}");
                    let f = (ni + 2 * ri + ci + li) % 4;
                    let g = (ni * ri + ci + 1 + li) % 4;
                    for i in 2..22 {
                        long.push(rec(net, &asset, level, i, i - 2 < f));
                    }
                    for i in 0..22 {
                        short.push(rec(net, &asset, level, i, i < 2 || i - 2 < g));
                    }
                    let win = match f.cmp(&g) {
                        std::cmp::Ordering::Less => (1.0, 0.0),
                        std::cmp::Ordering::Greater => (0.0, 1.0),
                        std::cmp::Ordering::Equal => (0.5, 0.5),
                    };
                    let e = expected.entry((li, class.to_string())).or_insert((0.0, 0.0));
                    e.0 += win.0;
                    e.1 += win.1;
                }
            }
        }
    }
    let totals = comp_totals(&long, &short).unwrap();
    let mut pass = totals.len() == 4;
    let mut rows = Vec::new();
    for t in &totals {
        let li = levels.iter().position(|l| *l == t.level).unwrap();
        let e = expected[&(li, t.class.clone())];
        pass &= t.comparisons == 12 && t.first + t.second == 12.0 && (t.first, t.second) == e;
        rows.push(format!("{} {} {}+{}", t.level, t.class, t.first, t.second));
    }
    outcome(pass, format!("rows sum to 12 and match construction: {}", rows.join("; ")))
}
