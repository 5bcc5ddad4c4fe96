//! Thin wrapper over a tract ONNX graph that specializes and caches one
//! optimized plan per concrete input shape.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use tract_onnx::prelude::*;

use crate::error::{Error, Result};

type Plan = Arc<TypedRunnableModel>;

/// Input shapes, plus the raw bytes of inputs folded in as constants.
type PlanKey = (Vec<Vec<usize>>, Vec<(usize, Vec<u8>)>);

pub(crate) struct OnnxNet {
    graph: InferenceModel,
    plans: Mutex<HashMap<PlanKey, Plan>>,
    name: String,
}

fn model_err(name: &str, e: impl std::fmt::Display) -> Error {
    Error::Model(format!("{name}: {e}"))
}

impl OnnxNet {
    pub(crate) fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let graph = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(|e| model_err(&name, e))?;
        Ok(OnnxNet {
            graph,
            plans: Mutex::new(HashMap::new()),
            name,
        })
    }

    fn plan_for(&self, inputs: &[Tensor], consts: &[usize]) -> Result<Plan> {
        let bytes = |t: &Tensor| -> Result<Vec<u8>> {
            Ok(view_f32(t)?.iter().flat_map(|v| v.to_le_bytes()).collect())
        };
        let key: PlanKey = (
            inputs.iter().map(|t| t.shape().to_vec()).collect(),
            consts
                .iter()
                .map(|&i| Ok((i, bytes(&inputs[i])?)))
                .collect::<Result<_>>()?,
        );
        if let Some(plan) = self.plans.lock().expect("plan cache poisoned").get(&key) {
            return Ok(plan.clone());
        }
        let mut graph = self.graph.clone();
        for (i, t) in inputs.iter().enumerate() {
            let fact = if consts.contains(&i) {
                InferenceFact::from(t.clone())
            } else {
                InferenceFact::dt_shape(t.datum_type(), t.shape())
            };
            graph = graph
                .with_input_fact(i, fact)
                .map_err(|e| model_err(&self.name, e))?;
        }
        let plan = graph
            .into_optimized()
            .and_then(|m| m.into_runnable())
            .map_err(|e| model_err(&self.name, e))?;
        self.plans
            .lock()
            .expect("plan cache poisoned")
            .insert(key, plan.clone());
        Ok(plan)
    }

    /// Run the graph; outputs are returned as owned f32 tensors.
    pub(crate) fn run(&self, inputs: Vec<Tensor>) -> Result<Vec<Tensor>> {
        self.run_with_consts(inputs, &[])
    }

    /// Run with the f32 inputs at `consts` folded into the plan, for inputs
    /// whose values determine output shapes.
    pub(crate) fn run_with_consts(&self, inputs: Vec<Tensor>, consts: &[usize]) -> Result<Vec<Tensor>> {
        let plan = self.plan_for(&inputs, consts)?;
        let outputs = plan
            .run(inputs.into_iter().map(|t| t.into_tvalue()).collect())
            .map_err(|e| model_err(&self.name, e))?;
        outputs
            .into_iter()
            .map(|v| {
                v.into_tensor()
                    .cast_to::<f32>()
                    .map(|t| t.into_owned())
                    .map_err(|e| model_err(&self.name, e))
            })
            .collect()
    }
}

pub(crate) fn tensor_f32(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
    Tensor::from_shape(shape, &data).map_err(|e| Error::Model(e.to_string()))
}

pub(crate) fn view_f32(t: &Tensor) -> Result<&[f32]> {
    t.try_as_plain_ram()
        .and_then(|v| v.as_slice::<f32>())
        .map_err(|e| Error::Model(e.to_string()))
}
