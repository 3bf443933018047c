use super::{Graph, Tensor, TensorError, Var};

/// Errors a checked function may return. Non-finite values and domain
/// errors inside the probe neighbourhood are reported with the perturbed
/// coordinate.
pub trait ProbeError: From<TensorError> {
    fn is_non_finite(&self) -> bool;
}

impl ProbeError for TensorError {
    fn is_non_finite(&self) -> bool {
        matches!(
            self,
            TensorError::NonFinite { .. } | TensorError::Invalid { .. }
        )
    }
}

/// Compares the reverse-mode gradient of `f` at `x` against central
/// differences. Returns `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
///
/// `f` receives a fresh graph and the leaf holding `x` (or a perturbed copy)
/// and must return a one-element tensor.
pub fn grad_check<F, E>(f: F, x: &Tensor, step: f64) -> core::result::Result<f64, E>
where
    F: Fn(&mut Graph, Var) -> core::result::Result<Var, E>,
    E: ProbeError,
{
    if !(step > 0.0) {
        return Err(TensorError::BadStep(step).into());
    }
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv)?;
    let grads = g.backward(out)?;
    let analytic: alloc::vec::Vec<f64> = match grads.get(xv) {
        Some(gr) => gr.to_vec(),
        None => alloc::vec![0.0; x.numel()],
    };

    let eval = |probe: &Tensor, coordinate: usize| -> core::result::Result<f64, E> {
        let mut g = Graph::new();
        let v = g.constant(probe.clone());
        let out = f(&mut g, v).map_err(|e| {
            if e.is_non_finite() {
                TensorError::NonFiniteProbe { coordinate }.into()
            } else {
                e
            }
        })?;
        let value = g.value(out).item();
        if !value.is_finite() {
            return Err(TensorError::NonFiniteProbe { coordinate }.into());
        }
        Ok(value)
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = eval(&probe, i)?;
        probe.data_mut()[i] = orig - step;
        let minus = eval(&probe, i)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
