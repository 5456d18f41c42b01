use std::path::{Path, PathBuf};

use serde::Serialize;
use stainforge::predictor::{expected_tensors, init_weights, zero_weights};
use stainforge::{PredictorWeights, WeightStore};

use crate::common::{config_error, emit_json, json_to_stdout, CmdResult, OrExit, Status};

#[derive(Serialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize)]
struct Inspection {
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    tensors: Vec<TensorInfo>,
    parameters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<String>,
    /// Differences from the expected layout, when both were requested.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    differences: Vec<String>,
}

fn shape_str(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
    format!("[{}]", dims.join(", "))
}

fn layout_differences(store: &WeightStore) -> Vec<String> {
    let expected = expected_tensors();
    let mut out = Vec::new();
    for (name, shape) in &expected {
        match store.get(name) {
            None => out.push(format!("missing {name} {}", shape_str(shape))),
            Some(t) if t.shape() != shape.as_slice() => {
                out.push(format!("mismatch {name}: expected {}, found {}", shape_str(shape), shape_str(t.shape())))
            }
            Some(_) => {}
        }
    }
    for (name, _) in store.iter() {
        if !expected.iter().any(|(n, _)| n == name) {
            out.push(format!("unexpected {name}"));
        }
    }
    out
}

pub fn inspect(file: Option<&Path>, expected: bool, json: &Option<PathBuf>) -> CmdResult {
    let report = match (file, expected) {
        (None, false) => return Err(config_error("give a weights file, --expected, or both")),
        (None, true) => {
            let tensors: Vec<_> = expected_tensors().into_iter().map(|(name, shape)| TensorInfo { name, shape }).collect();
            let parameters = tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
            Inspection { file: None, tensors, parameters, alpha: None, valid: None, problem: None, differences: Vec::new() }
        }
        (Some(path), _) => {
            let store = WeightStore::read_file(path).config()?;
            let tensors = store.iter().map(|(n, t)| TensorInfo { name: n.to_owned(), shape: t.shape().to_vec() }).collect();
            let check = PredictorWeights::from_store(&store);
            let differences = if expected { layout_differences(&store) } else { Vec::new() };
            Inspection {
                file: Some(path.display().to_string()),
                tensors,
                parameters: store.parameter_count(),
                alpha: check.as_ref().ok().map(PredictorWeights::alpha),
                valid: Some(check.is_ok()),
                problem: check.err().map(|e| e.to_string()),
                differences,
            }
        }
    };

    if !json_to_stdout(json) {
        for t in &report.tensors {
            println!("{:<32} {}", t.name, shape_str(&t.shape));
        }
        println!("{} tensors, {} parameters", report.tensors.len(), report.parameters);
        if let Some(alpha) = report.alpha {
            println!("alpha = {alpha}");
        }
        match (&report.valid, &report.problem) {
            (Some(true), _) => println!("valid predictor weights"),
            (Some(false), Some(p)) => println!("not usable as predictor weights: {p}"),
            _ => {}
        }
        for d in &report.differences {
            println!("{d}");
        }
    }
    emit_json(json, &report).failed()?;
    Ok(match report.valid {
        Some(false) => Status::Partial,
        _ => Status::Success,
    })
}

pub fn init(output: &Path, seed: u64, zero: bool, alpha: f32) -> CmdResult {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(config_error(format!("--alpha {alpha} must be positive")));
    }
    let mut store = if zero { zero_weights(alpha) } else { init_weights(seed) };
    if !zero {
        store.set("alpha", stainforge::Tensor::scalar(alpha));
    }
    store.write_file(output).failed()?;
    println!("wrote {} ({} parameters)", output.display(), store.parameter_count());
    Ok(Status::Success)
}
