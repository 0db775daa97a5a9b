use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use gtrident::assembly::{build_tree, distances_from_joint_with};
use gtrident::forward::{joint3_exact, joint_n_spectral, joint_quadrature_oracle, JointTensor, LabeledTree};
use gtrident::gallery::{self, WitnessOutcome};
use gtrident::identify::{
    check_rate_inequalities, classify_model, eigenvalues_in_basis, nonzero_triple_search, recover_all_with,
    RecoverOptions, RegimeKind, NU_REL_TOL,
};
use gtrident::io::{self, AssembledFile, ModelFile, RecoveredFile};
use gtrident::model::{nu_tensor, TripleTree};

use crate::{
    fail, BinaryArgs, ClassifyArgs, Command, Counterexample, Exit, ForwardArgs, PhiArgs, RecoverArgs, RogersArgs,
};

/// Environment variable overriding default tolerances; for experimentation.
pub const TOL_ENV: &str = "GTRIDENT_TOL";

/// The override, if set; a malformed value is an input error.
pub fn tol_override() -> Result<Option<f64>> {
    match std::env::var(TOL_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(Some(x)),
            _ => Err(fail(Exit::Validation, format!("{TOL_ENV} must be a positive number, got {s:?}"))),
        },
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Forward(a) => forward(a),
        Command::Recover(a) => recover(a),
        Command::Roundtrip(a) => crate::roundtrip::run(a),
        Command::Classify(a) => classify(a),
        Command::Counterexample(Counterexample::RogersCurve(a)) => rogers(a),
        Command::Counterexample(Counterexample::Phi(a)) => phi(a),
        Command::Counterexample(Counterexample::BinaryNonident(a)) => binary(a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(gtrident::Error::from).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn forward(a: ForwardArgs) -> Result<()> {
    let loaded = io::read_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let tree = match (&a.t, &a.tree) {
        (Some(t), _) => LabeledTree::star3(&TripleTree::new(t[0], t[1], t[2])?)?,
        (None, Some(nwk)) => LabeledTree::from_newick(nwk)?,
        (None, None) => match (&loaded.tree, &loaded.triple) {
            (Some(t), _) => t.clone(),
            (None, Some(t)) => LabeledTree::star3(t)?,
            (None, None) => {
                return Err(fail(Exit::Validation, "no tree: give --t, --tree, or edge lengths in the model"))
            }
        },
    };
    let joint: JointTensor = if tree.n_leaves() == 3 && a.tree.is_none() && loaded.tree.is_none() {
        let t = match &a.t {
            Some(t) => TripleTree::new(t[0], t[1], t[2])?,
            None => loaded.triple.expect("triple present"),
        };
        joint3_exact(&loaded.model, &loaded.rates, &t)?
    } else {
        joint_n_spectral(&tree, &loaded.model, &loaded.rates)?
    };
    io::write_tensor(&a.out, &joint, a.binary).with_context(|| format!("writing {}", a.out.display()))?;

    let mut summary = json!({
        "out": a.out.display().to_string(),
        "kappa": joint.kappa(),
        "taxa": joint.taxa(),
        "sum": joint.probabilities().iter().sum::<f64>(),
    });
    if let Some(f) = loaded.rescaled_by {
        summary["warning"] = json!({ "q_rescaled_by": f });
    }
    if a.oracle {
        let check = joint_quadrature_oracle(&tree, &loaded.model, &loaded.rates, a.oracle_nodes)?;
        let dev = joint.max_abs_diff(&check).context("oracle tensor shape differs")?;
        summary["oracle_max_deviation"] = json!(dev);
        summary["oracle_nodes"] = json!(a.oracle_nodes);
    }
    emit(None, &summary)
}

fn recover_options() -> Result<RecoverOptions> {
    let mut opts = RecoverOptions::default();
    if let Some(tol) = tol_override()? {
        opts.residual_tol = tol;
    }
    Ok(opts)
}

fn recover(a: RecoverArgs) -> Result<()> {
    let joint = io::read_tensor(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let opts = recover_options()?;
    if joint.n_taxa() == 3 {
        let r = recover_all_with(&joint, &opts)?;
        let file = RecoveredFile::from(&r);
        emit(Some(&a.out), &serde_json::to_value(&file)?)?;
        return emit(
            None,
            &json!({ "out": a.out.display().to_string(), "regime": file.regime.kind, "alpha": r.alpha, "residual": r.residual }),
        );
    }
    let assembled = distances_from_joint_with(&joint, &opts)?;
    let fit = build_tree(&assembled.distances)?;
    let file = AssembledFile::new(&assembled, &fit);
    let newick_path = a.newick.unwrap_or_else(|| a.out.with_extension("nwk"));
    write(&newick_path, &format!("{}\n", file.newick))?;
    emit(Some(&a.out), &serde_json::to_value(&file)?)?;
    emit(
        None,
        &json!({
            "out": a.out.display().to_string(),
            "newick_out": newick_path.display().to_string(),
            "newick": file.newick,
            "alpha": file.alpha,
            "triples": file.consistency.triples,
        }),
    )
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let loaded = io::read_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = &loaded.model;
    let c = classify_model(model)?;
    let aligned = eigenvalues_in_basis(model, &c.u);
    let report = check_rate_inequalities(&aligned, &c.regime.kind);
    let nu_tol = NU_REL_TOL * nu_tensor(&model.pi, &c.u)?.max_abs();
    let triple = nonzero_triple_search(&model.pi, &c.u, nu_tol).ok();
    let (b, cc, pair) = match c.regime.kind {
        RegimeKind::Generic { i, j } => (None, None, Some([i, j])),
        RegimeKind::CaseA1 { b, c } | RegimeKind::CaseA2 { b, c } => (Some(b), Some(c), None),
        RegimeKind::CaseB => (None, None, None),
    };
    let mut v = json!({
        "kappa": model.kappa(),
        "eigenvalues": model.spectral.lambdas,
        "regime": {
            "type": c.regime.kind.name(),
            "b": b,
            "c": cc,
            "permutation": c.regime.permutation,
            "column_signs": c.regime.column_signs,
        },
        "ambiguous": c.ambiguous,
        "aligned_eigenvalues": aligned,
        "inequalities": report.checks,
        "inequalities_hold": report.all_hold(),
        "nonzero_triple": triple.map(|(i, j, k)| [i, j, k]),
    });
    if let Some(p) = pair {
        v["regime"]["pair"] = json!(p);
    }
    emit(a.out.as_deref(), &v)
}

fn rogers(a: RogersArgs) -> Result<()> {
    let (curve, header) = if a.graph {
        (gallery::graph_points(a.x_max, a.n)?, ["x", "fx"])
    } else {
        (gallery::curve_points(a.tau1, a.tau2, a.x_max, a.n)?, ["fx_tau1", "fx_tau2"])
    };
    write(&a.out, &curve.to_csv(header))?;
    let inflections = gallery::count_inflections(&curve)?;
    emit(
        None,
        &json!({
            "out": a.out.display().to_string(),
            "points": curve.len(),
            "inflections": inflections,
            "curve": if a.graph { json!("graph") } else { json!({ "tau1": a.tau1, "tau2": a.tau2 }) },
        }),
    )
}

fn phi(a: PhiArgs) -> Result<()> {
    let fiber = gallery::phi_fiber_demo(a.x, a.y);
    let mut v = serde_json::to_value(fiber)?;
    v["x"] = json!(a.x);
    v["y"] = json!(a.y);
    v["description"] = json!(match fiber {
        gallery::PhiFiber::Unique { .. } => "single preimage",
        gallery::PhiFiber::Line => "every (0, b): the point has a one-dimensional fiber",
        gallery::PhiFiber::Empty => "not in the image",
    });
    emit(None, &v)
}

fn binary(a: BinaryArgs) -> Result<()> {
    let [ta, tb, tc] = a.t;
    let t = TripleTree::new(ta, tb, tc)?;
    match gallery::binary_nonident_witness(a.alpha, t, a.alpha_alt)? {
        WitnessOutcome::Witness(w) => {
            std::fs::create_dir_all(&a.out_dir)
                .map_err(gtrident::Error::from)
                .with_context(|| format!("creating {}", a.out_dir.display()))?;
            let model = gallery::binary_symmetric_model();
            let paths: Vec<PathBuf> =
                ["model_original.json", "model_alternative.json"].iter().map(|f| a.out_dir.join(f)).collect();
            for (path, (alpha, tree)) in paths.iter().zip([(w.alpha, w.t), (w.alpha_alt, w.t_alt)]) {
                let f = ModelFile::from_model(&model, alpha, Some(tree));
                write(path, &(serde_json::to_string_pretty(&f)? + "\n"))?;
            }
            emit(
                None,
                &json!({
                    "models": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                    "alpha": w.alpha,
                    "t": w.t.lengths(),
                    "alpha_alt": w.alpha_alt,
                    "t_alt": w.t_alt.lengths(),
                    "max_tensor_diff": w.max_tensor_diff,
                }),
            )
        }
        WitnessOutcome::Infeasible { alpha_alt, implied } => {
            emit(None, &json!({ "outcome": "infeasible", "alpha_alt": alpha_alt, "implied_t": implied }))?;
            Err(fail(
                Exit::Numerical,
                format!(
                    "alpha_alt = {alpha_alt} implies a negative edge length {implied:?}; try a value closer to alpha"
                ),
            ))
        }
    }
}
