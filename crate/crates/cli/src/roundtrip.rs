//! Batch forward-then-recover harness. Trial `k` draws everything from
//! ChaCha8 seeded with `seed + k`, so any single row can be reproduced alone.

use std::fmt::Write as _;

use anyhow::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gtrident::forward::joint3_exact;
use gtrident::identify::{recover_all_with, RecoverOptions};
use gtrident::model::GtrModel;
use gtrident::presets::{self, ParameterSampler};

use crate::commands::tol_override;
use crate::{fail, Exit, Regime, RoundtripArgs};

pub const ALPHA_TOL: f64 = 1e-6;
pub const PARAM_TOL: f64 = 1e-7;

pub const HEADER: &str =
    "trial,seed,regime,kappa,alpha,recovered_regime,alpha_rel_err,q_err,pi_err,t_err,residual,status";

impl Regime {
    fn name(self) -> &'static str {
        match self {
            Regime::Generic => "generic",
            Regime::Jc => "jc",
            Regime::K2p => "k2p",
            Regime::K3p => "k3p",
            Regime::CaseA2 => "case-a2",
            Regime::CaseB => "case-b",
        }
    }

    /// Path the recovery is expected to take.
    fn expected(self) -> &'static str {
        match self {
            Regime::Generic => "generic",
            Regime::Jc | Regime::K2p | Regime::K3p => "case_a1",
            Regime::CaseA2 => "case_a2",
            Regime::CaseB => "case_b",
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn draw_model(regime: Regime, kappa: usize, s: &ParameterSampler, rng: &mut ChaCha8Rng) -> Result<GtrModel> {
    let mut perm: Vec<usize> = (0..4).collect();
    let model = match regime {
        Regime::Generic => return Ok(s.model(rng, kappa)?),
        Regime::Jc => presets::jukes_cantor(),
        Regime::K2p => presets::kimura2(log_uniform(rng, 0.2, 10.0))?,
        Regime::K3p => {
            let (ts, a, b) = (log_uniform(rng, 0.1, 10.0), log_uniform(rng, 0.1, 10.0), log_uniform(rng, 0.1, 10.0));
            presets::kimura3(ts, a, b)?
        }
        Regime::CaseA2 => presets::case_a2(),
        Regime::CaseB => presets::case_b_default(),
    };
    // exceptional presets are shuffled over the state labels
    perm.shuffle(rng);
    Ok(model.permuted_states(&perm)?)
}

pub fn run(a: RoundtripArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(fail(Exit::Validation, "--trials must be at least 1"));
    }
    if a.regime != Regime::Generic && a.kappa != 4 {
        return Err(fail(Exit::Validation, format!("regime {} needs --kappa 4", a.regime.name())));
    }
    if !(2..=8).contains(&a.kappa) {
        return Err(fail(Exit::Validation, "--kappa must lie in 2..=8"));
    }
    let tol = tol_override()?;
    let (alpha_tol, param_tol) = tol.map_or((ALPHA_TOL, PARAM_TOL), |t| (t, t));
    let mut opts = RecoverOptions::default();
    if let Some(t) = tol {
        opts.residual_tol = t;
    }
    let sampler = ParameterSampler::default();

    let mut csv = String::from(HEADER);
    csv.push('\n');
    let mut failures = 0usize;
    let mut worst = [0.0f64; 4];
    for trial in 0..a.trials {
        let seed = a.seed.wrapping_add(trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = draw_model(a.regime, a.kappa, &sampler, &mut rng)?;
        let rates = sampler.rates(&mut rng);
        let tree = sampler.triple(&mut rng);
        let prefix = format!("{trial},{seed},{},{},{:.17e}", a.regime.name(), a.kappa, rates.alpha());
        let outcome = joint3_exact(&model, &rates, &tree).and_then(|p| recover_all_with(&p, &opts));
        match outcome {
            Ok(r) => {
                let max_diff = |x: &[f64], y: &[f64]| x.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                let errs = [
                    (r.alpha / rates.alpha() - 1.0).abs(),
                    max_diff(model.q.matrix().as_slice(), r.q.matrix().as_slice()),
                    max_diff(model.pi.as_slice(), r.pi.as_slice()),
                    max_diff(&tree.lengths(), &r.edge_lengths()),
                ];
                for (w, e) in worst.iter_mut().zip(errs) {
                    *w = w.max(e);
                }
                let got = r.regime.kind.name();
                let ok = errs[0] < alpha_tol && errs[1..].iter().all(|e| *e < param_tol) && got == a.regime.expected();
                failures += usize::from(!ok);
                writeln!(
                    csv,
                    "{prefix},{got},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{}",
                    errs[0],
                    errs[1],
                    errs[2],
                    errs[3],
                    r.residual,
                    if ok { "ok" } else { "fail" }
                )?;
            }
            Err(e) => {
                failures += 1;
                let msg = e.to_string().replace([',', '\n'], ";");
                writeln!(csv, "{prefix},,,,,,,error: {msg}")?;
            }
        }
    }
    match &a.out {
        Some(p) => std::fs::write(p, &csv).map_err(gtrident::Error::from)?,
        None => print!("{csv}"),
    }
    eprintln!(
        "seed {} regime {} kappa {}: {} trials, {} failures; max errors alpha {:.2e}, Q {:.2e}, pi {:.2e}, t {:.2e}",
        a.seed,
        a.regime.name(),
        a.kappa,
        a.trials,
        failures,
        worst[0],
        worst[1],
        worst[2],
        worst[3]
    );
    if failures > 0 {
        return Err(fail(Exit::Numerical, format!("{failures} of {} trials exceeded tolerance", a.trials)));
    }
    Ok(())
}
