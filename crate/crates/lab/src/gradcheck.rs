//! End-to-end finite-difference check on a tiny 64-bit model.

use amem_core::dialog::{generate_dialog, GeneratorConfig, GridWorld, QaItem};
use amem_core::model::{Model, ModelConfig, Variant};
use amem_core::rng::SplitMix64;
use amem_core::tensor::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckOptions {
    pub seed: u64,
    pub variant: Variant,
    /// Dialog steps in the checked loss.
    pub steps: usize,
    /// Step of the two-point central difference.
    pub eps: f64,
    /// Step of the five-point stencil used where it agrees with the two-point value.
    pub wide_eps: f64,
    pub tolerance: f64,
    /// Lower bound on the error denominator.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            variant: Variant::AmemHSeq,
            steps: 10,
            eps: 1e-6,
            wide_eps: 1e-4,
            tolerance: 1e-5,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub name: String,
    pub elements: usize,
    /// `‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞, floor)`.
    pub rel_error: f64,
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn failing(&self) -> Vec<String> {
        self.groups
            .iter()
            .filter(|g| !(g.rel_error < self.tolerance))
            .map(|g| g.name.clone())
            .collect()
    }

    /// `Err` naming the offending groups when the check failed.
    pub fn ensure_passed(&self) -> LabResult<()> {
        if self.passed {
            Ok(())
        } else {
            Err(LabError::GradCheck { failing: self.failing() })
        }
    }
}

/// A tiny model whose biases, recency weight and NULL key are moved off zero.
pub fn tiny_model(variant: Variant, seed: u64) -> LabResult<Model<f64>> {
    let mut model = Model::<f64>::init(ModelConfig::tiny().with_variant(variant), seed)?;
    let mut rng = SplitMix64::derive(seed, 0xB1A5);
    let store = &mut model.params_mut().store;
    for id in store.ids().collect::<Vec<_>>() {
        if !store.decays(id) {
            for v in store.value_mut(id).data_mut() {
                *v += rng.symmetric(0.3);
            }
        }
    }
    Ok(model)
}

/// Image and dialog the check differentiates through.
pub fn fixture(cfg: &ModelConfig, seed: u64, steps: usize) -> LabResult<(Tensor<f64>, Vec<QaItem>)> {
    let mut rng = SplitMix64::derive(seed, 0x1A6E);
    let px = cfg.image_px;
    let pixels = (0..3 * px * px).map(|_| rng.next_f64()).collect();
    let image = Tensor::new(&[3, px, px], pixels)?;
    let world = GridWorld::generate(seed);
    let mut items = generate_dialog(&world, seed, &GeneratorConfig::default())?.items;
    items.truncate(steps.max(1));
    Ok((image, items))
}

fn loss_of(model: &Model<f64>, image: &Tensor<f64>, items: &[QaItem]) -> LabResult<f64> {
    let mut s = model.session();
    let f = s.forward_dialog(image, items)?;
    Ok(s.graph.data(f.loss)[0])
}

/// Numeric derivative of `f` at `x`: the fourth-order stencil with step
/// `wide` where it agrees with the two-point difference with step `eps` up to
/// the rounding bound of the latter, else the two-point difference.
pub fn derivative<E>(f: &mut impl FnMut(f64) -> Result<f64, E>, x: f64, eps: f64, wide: f64, scale: f64) -> Result<f64, E> {
    let narrow = (f(x + eps)? - f(x - eps)?) / (2.0 * eps);
    let (p1, m1, p2, m2) = (f(x + wide)?, f(x - wide)?, f(x + 2.0 * wide)?, f(x - 2.0 * wide)?);
    let fine = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * wide);
    let noise = 10.0 * scale.max(1.0) * f64::EPSILON / eps;
    Ok(if (fine - narrow).abs() <= noise { fine } else { narrow })
}

/// Compare analytic gradients with central differences for every parameter
/// group. `tamper` may corrupt the analytic gradients (negative controls).
pub fn gradcheck(opts: &GradCheckOptions, tamper: Option<&dyn Fn(&mut ParamStore<f64>)>) -> LabResult<GradCheckReport> {
    let mut model = tiny_model(opts.variant, opts.seed)?;
    let (image, items) = fixture(model.config(), opts.seed, opts.steps)?;

    let mut s = model.session();
    let f = s.forward_dialog(&image, &items)?;
    s.graph.backward(f.loss)?;
    let graph = s.graph;
    model.params_mut().store.zero_grad();
    graph.accumulate_param_grads(&mut model.params_mut().store);
    if let Some(t) = tamper {
        t(&mut model.params_mut().store);
    }
    let analytic: Vec<Vec<f64>> = {
        let store = &model.params().store;
        store.ids().map(|id| store.grad(id).to_vec()).collect()
    };

    let base = loss_of(&model, &image, &items)?;
    let ids: Vec<_> = model.params().store.ids().collect();
    let mut groups = Vec::with_capacity(ids.len());
    for id in ids {
        let n = model.params().store.value(id).len();
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = model.params().store.value(id).data()[i];
            let mut at = |x: f64| {
                model.params_mut().store.value_mut(id).data_mut()[i] = x;
                loss_of(&model, &image, &items)
            };
            *slot = derivative(&mut at, orig, opts.eps, opts.wide_eps, base.abs())?;
            model.params_mut().store.value_mut(id).data_mut()[i] = orig;
        }
        let a = &analytic[id.index()];
        let diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let amax = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let nmax = numeric.iter().map(|x| x.abs()).fold(0.0, f64::max);
        groups.push(GroupError {
            name: model.params().store.name(id).to_string(),
            elements: n,
            rel_error: diff / amax.max(nmax).max(opts.floor),
            max_abs_grad: amax,
        });
    }
    let max_rel_error = groups.iter().map(|g| g.rel_error).fold(0.0, f64::max);
    let passed = groups.iter().all(|g| g.rel_error < opts.tolerance);
    Ok(GradCheckReport {
        groups,
        max_rel_error,
        tolerance: opts.tolerance,
        passed,
    })
}
