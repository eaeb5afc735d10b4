//! The per-family gradient-check suite behind the `gradcheck` command.

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{grad_check, Fault, GradCheckOptions, GradCheckReport, NodeId, Tape};
use crate::error::Result;
use crate::model::{build_claret, dropout_mask, ClaRetConfig, Mode};
use crate::params::{Bindings, ParamSet};
use crate::rng::{self, streams, Rng};
use crate::tensor::{DType, Fill, Tensor};

/// Every family must stay strictly below this maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct FamilyResult {
    pub family: &'static str,
    pub report: GradCheckReport,
}

impl FamilyResult {
    pub fn passed(&self) -> bool {
        self.report.max_relative_error < GRADCHECK_TOLERANCE
    }
}

fn normal(dims: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = dims.iter().product();
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::create(dims, Fill::Values(&v), DType::Double).expect("valid dims")
}

fn params(entries: Vec<(&str, Tensor)>) -> ParamSet {
    let mut p = ParamSet::new();
    for (name, t) in entries {
        p.insert(name, t, true).expect("distinct names");
    }
    p
}

/// The 2-block micro model used for the whole-network check.
pub fn micro_config(seed: u64) -> ClaRetConfig {
    ClaRetConfig {
        n_conv_blocks: 2,
        dense_units: vec![16, 8],
        input_shape: (8, 8, 1),
        dtype: DType::Double,
        seed,
        ..Default::default()
    }
}

/// Runs every family. A tape fault, if given, affects only the analytic
/// gradients.
pub fn gradcheck_suite(seed: u64, fault: Option<Fault>) -> Result<Vec<FamilyResult>> {
    let opts = GradCheckOptions {
        seed,
        fault,
        ..Default::default()
    };
    let mut rng = rng::stream(seed, streams::GRADCHECK);
    let mut out = Vec::new();
    let mut run = |family: &'static str, ps: &ParamSet, build: &dyn Fn(&mut Tape, &Bindings) -> Result<NodeId>| {
        let report = grad_check(ps, build, &opts)?;
        out.push(FamilyResult { family, report });
        Result::Ok(())
    };

    // Each single-op family reduces its output with fixed random weights,
    // so every output coordinate gets a distinct upstream gradient.
    for (family, stride) in [("conv2d", 1), ("conv2d_stride2", 2)] {
        let ps = params(vec![
            ("x", normal(&[2, 5, 5, 3], &mut rng)),
            ("k", normal(&[3, 3, 3, 4], &mut rng)),
            ("b", normal(&[4], &mut rng)),
        ]);
        let out_side = 5usize.div_ceil(stride);
        let w = normal(&[2, out_side, out_side, 4], &mut rng);
        run(family, &ps, &|t, b| {
            let y = t.conv2d_same(b["x"], b["k"], b["b"], stride)?;
            t.dot(y, w.clone())
        })?;
    }

    let ps = params(vec![
        ("x", normal(&[3, 6], &mut rng)),
        ("w", normal(&[6, 5], &mut rng)),
        ("b", normal(&[5], &mut rng)),
    ]);
    let w = normal(&[3, 5], &mut rng);
    run("dense", &ps, &|t, b| {
        let z = t.matmul(b["x"], b["w"])?;
        let y = t.add_bias(z, b["b"])?;
        t.dot(y, w.clone())
    })?;

    let ps = params(vec![("x", normal(&[4, 8], &mut rng))]);
    let w = normal(&[4, 8], &mut rng);
    run("relu", &ps, &|t, b| {
        let y = t.relu(b["x"]);
        t.dot(y, w.clone())
    })?;

    let ps = params(vec![("x", normal(&[2, 5, 6, 3], &mut rng))]);
    let w = normal(&[2, 2, 3, 3], &mut rng);
    run("maxpool2", &ps, &|t, b| {
        let y = t.maxpool2(b["x"])?;
        t.dot(y, w.clone())
    })?;

    let ps = params(vec![("x", normal(&[4, 10], &mut rng))]);
    let mask = dropout_mask(&[4, 10], 0.2, DType::Double, &mut rng)?;
    let w = normal(&[4, 10], &mut rng);
    run("dropout", &ps, &|t, b| {
        let y = t.dropout(b["x"], mask.clone())?;
        t.dot(y, w.clone())
    })?;

    let ps = params(vec![("x", normal(&[5, 6], &mut rng)), ("w", normal(&[6, 4], &mut rng))]);
    let labels = [0, 3, 1, 2, 3];
    run("softmax_ce", &ps, &|t, b| {
        let z = t.matmul(b["x"], b["w"])?;
        let p = t.softmax_rows(z)?;
        t.cross_entropy(p, &labels)
    })?;

    let model = build_claret(&micro_config(seed))?;
    let input = normal(&[4, 8, 8, 1], &mut rng);
    let labels = [0, 1, 2, 3];
    run("micro_claret", &model.params, &|t, b| {
        let x = t.constant(input.clone());
        // a fresh stream per evaluation keeps the dropout masks fixed
        let mut drop = rng::stream(seed, streams::DROPOUT);
        let p = model.forward(t, b, x, Mode::Train(&mut drop))?;
        t.cross_entropy(p, &labels)
    })?;
    Ok(out)
}
