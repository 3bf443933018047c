use super::{decode_var, encode_var, style_hook_var, ModelParams, ProjectionMode};
use crate::bank::ProjectionWeights;
use crate::data::Mask;
use crate::style::StyleVector;
use crate::tensor::{Graph, Tensor};
use crate::Result;

/// Feature style before and after projection, with the mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleDiagnostics {
    pub pre: StyleVector,
    pub post: StyleVector,
    pub weights: ProjectionWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub mask: Mask,
    pub logits: Tensor,
    pub diagnostics: StyleDiagnostics,
}

/// One forward pass without gradients. Diagnostics are present iff the hook
/// projected.
pub fn forward(
    image: &Tensor,
    params: &ModelParams,
    mode: ProjectionMode,
) -> Result<(Tensor, Option<StyleDiagnostics>)> {
    let mut g = Graph::new();
    let b = params.bind(&mut g, false)?;
    let x = g.constant(image.clone());
    let f = encode_var(&mut g, &b, x)?;
    let (f, trace) = style_hook_var(&mut g, f, &b.bank, mode)?;
    let logits = decode_var(&mut g, &b, f)?;
    let diagnostics = trace.map(|t| StyleDiagnostics {
        pre: t.pre.read(&g),
        post: t.post.read(&g),
        weights: t.weights.read(&g),
    });
    Ok((g.value(logits).clone(), diagnostics))
}

/// Test-time style projection: the image's feature style is replaced by its
/// projection onto the learned bank. Parameters are only read.
pub fn infer_test_time(image: &Tensor, params: &ModelParams) -> Result<Inference> {
    let (logits, diagnostics) = forward(image, params, ProjectionMode::Always)?;
    Ok(Inference {
        mask: Mask::argmax(&logits)?,
        logits,
        diagnostics: diagnostics.expect("projection always yields diagnostics"),
    })
}

/// Argmax mask using the hook mode the model was trained with.
pub fn predict(image: &Tensor, params: &ModelParams) -> Result<Mask> {
    let (logits, _) = forward(image, params, params.projection)?;
    Mask::argmax(&logits)
}
