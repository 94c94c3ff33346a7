//! Whole-model finite-difference gradient suite on a tiny configuration.

use serde::Serialize;

use crate::config::ModelConfig;
use crate::dataset::{build_vocab, Example};
use crate::error::Result;
use crate::model::{Input, Model};
use crate::numerics::gradcheck::{check_params, CheckOptions, CheckReport};
use crate::numerics::{Fault, ParamId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    pub group: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub tol: f64,
    pub groups: Vec<GroupResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }
}

/// Parameter groups reported by the suite, with the name prefixes they
/// cover.
pub const GROUPS: [(&str, &str); 11] = [
    ("word", "embed.words"),
    ("pos", "embed.positions"),
    ("selfattn", "selfattn."),
    ("lstm.fwd", "lstm.fwd."),
    ("lstm.bwd", "lstm.bwd."),
    ("entity.w_h", "entity.w_h"),
    ("entity.w_e", "entity.w_e"),
    ("entity.v", "entity.v"),
    ("let.types", "let.types"),
    ("output.w", "output.w"),
    ("output.b", "output.b"),
];

/// The suite's configuration: d_w = 8, r = 2, d_h = 6, d_p = 4, d_a = 4,
/// K = 2, dropout off.
pub fn suite_config() -> ModelConfig {
    ModelConfig {
        init_std: 0.5,
        max_len: 10,
        ..ModelConfig::tiny()
    }
}

/// A seven-token sentence with entities at positions 1 and 5.
pub fn suite_example() -> Example {
    Example {
        id: 1,
        tokens: ["the", "burst", "was", "caused", "by", "pressure", "."]
            .map(String::from)
            .to_vec(),
        e1: 1,
        e2: 5,
        label: 1,
    }
}

/// Central differences against analytic gradients of the cross-entropy of
/// one example, for every parameter group.
pub fn gradient_suite(seed: u64, opts: &CheckOptions, fault: Option<Fault>) -> Result<SuiteReport> {
    let ex = suite_example();
    let vocab = build_vocab(std::slice::from_ref(&ex), 1)?;
    let mut model = Model::<f64>::new(suite_config(), vocab, None, seed)?;
    model.inject_fault(fault);
    let input = Input::new(&ex, &model.vocab);
    let ids: Vec<ParamId> = model.store.ids().collect();
    let reports = check_params(
        &model.store,
        &ids,
        |g| {
            g.inject_fault(fault);
            let f = model.forward(g, &input, None)?;
            g.softmax_cross_entropy(f.logits, &[ex.label], false)
        },
        opts,
    )?;
    let groups = GROUPS
        .iter()
        .map(|&(group, prefix)| {
            let mut merged = CheckReport::default();
            for (id, r) in &reports {
                if model.store.get(*id).name.starts_with(prefix) {
                    merged.merge(r.clone());
                }
            }
            GroupResult {
                group: group.to_string(),
                checked: merged.checked,
                max_rel_error: merged.max_rel_error,
                passed: merged.checked > 0 && merged.passed(),
            }
        })
        .collect();
    Ok(SuiteReport {
        tol: opts.tol,
        groups,
    })
}
