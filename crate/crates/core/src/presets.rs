//! Named ring-road experiments.

use std::path::PathBuf;

use crate::config::ExperimentConfig;
use crate::cost::CostKind;
use crate::error::{Error, Result};
use crate::experiment::{run_experiment_with, RunOutput};
use crate::optimizer::IterationRecord;
use crate::output::{write_comparison, write_outputs};

pub const PRESET_NAMES: [&str; 5] = ["baseline", "fig2-l2-n1", "fig4-sweep", "fig5-hm1-n2", "fig9-capped"];

/// Settings applied on top of every run of a preset.
#[derive(Debug, Clone, Default)]
pub struct PresetOverrides {
    pub nx: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub emit_svg: Option<bool>,
    pub max_outer_iters: Option<usize>,
}

/// Labelled configs of a preset, in run order.
pub fn preset_configs(name: &str, overrides: &PresetOverrides) -> Result<Vec<(String, ExperimentConfig)>> {
    let base = ExperimentConfig { preset: Some(name.to_string()), ..ExperimentConfig::default() };
    let uncontrolled = ExperimentConfig { controlled: false, ..base.clone() };
    let run = |kind: CostKind, splits: usize, cap: Option<f64>| ExperimentConfig {
        cost_kind: kind,
        horizon_splits: splits,
        flow_cap: cap,
        ..base.clone()
    };
    let mut runs: Vec<(String, ExperimentConfig)> = match name {
        "baseline" => vec![("uncontrolled".into(), uncontrolled)],
        "fig2-l2-n1" => vec![("l2-n1".into(), run(CostKind::L2, 1, None))],
        "fig4-sweep" => {
            let mut v = vec![("uncontrolled".to_string(), uncontrolled)];
            for n in [1, 2, 4, 8] {
                v.push((format!("l2-n{n}"), run(CostKind::L2, n, None)));
            }
            v
        }
        "fig5-hm1-n2" => vec![("hm1-n2".into(), run(CostKind::Hm1, 2, None))],
        "fig9-capped" => vec![("hm1-n2-cap".into(), run(CostKind::Hm1, 2, Some(2.5)))],
        other => {
            return Err(Error::Config(format!("unknown preset '{other}', expected one of {}", PRESET_NAMES.join(", "))))
        }
    };
    let root = overrides.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")).join(name);
    for (label, cfg) in &mut runs {
        if let Some(nx) = overrides.nx {
            cfg.nx = nx;
        }
        if let Some(svg) = overrides.emit_svg {
            cfg.emit_svg = svg;
        }
        if let Some(iters) = overrides.max_outer_iters {
            cfg.outer.max_outer_iters = iters;
        }
        cfg.output_dir = root.join(label.as_str());
    }
    Ok(runs)
}

/// Completed runs of a preset, with the error that stopped it if any.
#[derive(Debug)]
pub struct PresetRun {
    pub name: String,
    pub outputs: Vec<RunOutput>,
    pub failure: Option<(String, Error)>,
}

/// Runs every config of the preset and writes its outputs. Runs that finished
/// before a failure keep their files and stay in `outputs`.
pub fn run_preset(
    name: &str,
    overrides: &PresetOverrides,
    sink: &mut dyn FnMut(&str, &IterationRecord),
) -> Result<PresetRun> {
    let configs = preset_configs(name, overrides)?;
    let mut result = PresetRun { name: name.to_string(), outputs: Vec::new(), failure: None };
    for (label, cfg) in &configs {
        let outcome = run_experiment_with(cfg, label, &mut |r| sink(label, r))
            .and_then(|out| write_outputs(&out, &cfg.output_dir, cfg.emit_svg).map(|_| out));
        match outcome {
            Ok(out) => result.outputs.push(out),
            Err(e) => {
                result.failure = Some((label.clone(), e));
                break;
            }
        }
    }
    if result.outputs.len() > 1 && configs[0].1.emit_svg {
        let dir = configs[0].1.output_dir.parent().map(PathBuf::from).unwrap_or_default();
        let refs: Vec<&RunOutput> = result.outputs.iter().collect();
        write_comparison(&refs, &dir.join("normalized_l2_comparison.svg"))?;
    }
    Ok(result)
}
