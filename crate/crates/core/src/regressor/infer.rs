use crate::error::{domain, Result};
use crate::image::{Image, Mask};
use crate::pipeline::{composite_output, render, ArgVector, FilterPipeline};
use crate::regressor::features::model_features;
use crate::regressor::model::RegressorModel;

/// Predicts filter arguments from a working-resolution view of the composite,
/// applies them at full resolution and pastes the result back under the mask.
pub fn harmonize(
    composite: &Image,
    mask: &Mask,
    model: &RegressorModel,
    pipeline: &FilterPipeline,
) -> Result<(Image, ArgVector)> {
    let theta = predict_args(composite, mask, model, pipeline)?;
    let out = apply_args(composite, mask, pipeline, &theta)?;
    Ok((out, theta))
}

pub fn predict_args(
    composite: &Image,
    mask: &Mask,
    model: &RegressorModel,
    pipeline: &FilterPipeline,
) -> Result<ArgVector> {
    if model.k() != pipeline.len() {
        return Err(domain!(
            "model has {} heads, pipeline {} filters",
            model.k(),
            pipeline.len()
        ));
    }
    model.predict(&model_features(composite, mask)?)
}

/// Full-resolution pipeline followed by foreground compositing.
pub fn apply_args(
    composite: &Image,
    mask: &Mask,
    pipeline: &FilterPipeline,
    theta: &ArgVector,
) -> Result<Image> {
    let filtered = render(composite, pipeline, theta)?;
    composite_output(composite, &filtered, mask)
}
