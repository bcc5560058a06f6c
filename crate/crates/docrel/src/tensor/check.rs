//! Finite-difference verification of tape gradients.

use std::collections::BTreeMap;

use super::{Bindings, NodeId, ParamSet, Tape, TensorError};

/// Outcome of a gradient check: worst relative error overall and per
/// parameter.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: Option<(String, usize)>,
    pub per_param: BTreeMap<String, f64>,
}

/// Refills every parameter with seeded uniform values in [−bound, bound].
/// Check fixtures use this instead of training init: tables initialized at
/// embedding scale (±0.04) push some gradients below what central
/// differences can resolve.
pub fn randomize_uniform(params: &mut ParamSet, seed: u64, bound: f64) {
    let mut init = super::Initializer::new(seed);
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        for v in params.get_mut(&name).data_mut() {
            *v = init.unit() * 2.0 * bound - bound;
        }
    }
}

/// Compares the tape gradient of a scalar function against central
/// differences (f(x+eps) − f(x−eps)) / (2·eps), coordinate by coordinate.
/// Relative error uses a max(|analytic|, |numeric|, 1e-8) denominator.
///
/// `build` must deterministically reconstruct the loss from the bound
/// parameters; it is re-evaluated twice per parameter coordinate.
pub fn grad_check<F>(params: &ParamSet, eps: f64, build: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &Bindings) -> Result<NodeId, TensorError>,
{
    let mut tape = Tape::new();
    let bind = Bindings::bind(&mut tape, params);
    let loss = build(&mut tape, &bind)?;
    tape.backward(loss)?;
    let analytic: BTreeMap<String, Vec<f64>> = bind
        .iter()
        .map(|(name, &id)| {
            (
                name.clone(),
                tape.grad(id).expect("after backward").to_vec(),
            )
        })
        .collect();

    let eval = |params: &ParamSet| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let bind = Bindings::bind(&mut tape, params);
        let loss = build(&mut tape, &bind)?;
        Ok(tape.value(loss).item())
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: None,
        per_param: BTreeMap::new(),
    };
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let mut param_worst = 0.0f64;
        for k in 0..params.get(&name).len() {
            let original = work.get(&name).data()[k];
            work.get_mut(&name).data_mut()[k] = original + eps;
            let f_plus = eval(&work)?;
            work.get_mut(&name).data_mut()[k] = original - eps;
            let f_minus = eval(&work)?;
            work.get_mut(&name).data_mut()[k] = original;

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[&name][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            param_worst = param_worst.max(rel);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = Some((name.clone(), k));
            }
        }
        report.per_param.insert(name, param_worst);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Initializer, Tensor};

    #[test]
    fn linear_function_checks_to_machine_precision() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![0.5, -1.5, 2.0]));
        let report = grad_check(&params, 1e-5, |tape, bind| {
            let c = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
            tape.dot(bind.id("w"), c)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-9, "err {}", report.max_rel_err);
    }

    #[test]
    fn sigmoid_of_dot_matches_closed_form_at_zero() {
        // f(w) = sigmoid(w·x) at w = 0 has gradient 0.25·x.
        let x = vec![0.7, -0.2, 1.1];
        let mut params = ParamSet::new();
        params.insert("w", Tensor::zeros(&[3]));
        let xs = x.clone();
        let report = grad_check(&params, 1e-5, move |tape, bind| {
            let c = tape.leaf(Tensor::vector(xs.clone()));
            let d = tape.dot(bind.id("w"), c)?;
            let s = tape.sigmoid(d);
            Ok(tape.sum(s))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "err {}", report.max_rel_err);

        // Closed form against the tape gradient directly.
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[3]));
        let c = tape.leaf(Tensor::vector(x.clone()));
        let d = tape.dot(w, c).unwrap();
        let s = tape.sigmoid(d);
        let loss = tape.sum(s);
        tape.backward(loss).unwrap();
        for (g, xi) in tape.grad(w).unwrap().iter().zip(&x) {
            assert!((g - 0.25 * xi).abs() < 1e-12);
        }
    }

    /// Sweep every differentiable primitive on seeded inputs in [−2, 2].
    #[test]
    fn every_primitive_passes_grad_check_on_random_inputs() {
        let mut init = Initializer::new(424242);
        let mut rand_vec =
            |n: usize| -> Vec<f64> { (0..n).map(|_| init.unit() * 4.0 - 2.0).collect() };

        type Builder = Box<dyn Fn(&mut Tape, &Bindings) -> Result<NodeId, TensorError>>;
        let mut cases: Vec<(&str, ParamSet, Builder)> = Vec::new();

        let mut params = ParamSet::new();
        params.insert("a", Tensor::matrix(3, 2, rand_vec(6)).unwrap());
        params.insert("b", Tensor::matrix(2, 4, rand_vec(8)).unwrap());
        cases.push((
            "matmul",
            params,
            Box::new(|t, b| {
                let m = t.matmul(b.id("a"), b.id("b"))?;
                Ok(t.sum(m))
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("a", Tensor::matrix(3, 4, rand_vec(12)).unwrap());
        params.insert("x", Tensor::vector(rand_vec(4)));
        cases.push((
            "matvec",
            params,
            Box::new(|t, b| {
                let m = t.matvec(b.id("a"), b.id("x"))?;
                Ok(t.sum(m))
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("x", Tensor::vector(rand_vec(5)));
        cases.push(("logsumexp", params, Box::new(|t, b| t.logsumexp(b.id("x")))));

        let mut params = ParamSet::new();
        params.insert("x", Tensor::vector(rand_vec(6)));
        cases.push((
            "softmax_masked",
            params,
            Box::new(|t, b| {
                let s = t.softmax_masked(b.id("x"), &[true, false, true, true, false, true])?;
                let w = t.leaf(Tensor::vector(vec![0.3, 0.0, -1.0, 2.0, 0.0, 0.7]));
                t.dot(s, w)
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("x", Tensor::vector(rand_vec(4)));
        params.insert("gain", Tensor::vector(rand_vec(4)));
        params.insert("bias", Tensor::vector(rand_vec(4)));
        cases.push((
            "layer_norm",
            params,
            Box::new(|t, b| {
                let y = t.layer_norm(b.id("x"), b.id("gain"), b.id("bias"), 1e-5)?;
                let w = t.leaf(Tensor::vector(vec![1.0, -0.5, 0.25, 2.0]));
                t.dot(y, w)
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("x", Tensor::vector(rand_vec(5)));
        cases.push((
            "activations",
            params,
            Box::new(|t, b| {
                let s = t.sigmoid(b.id("x"));
                let h = t.tanh(s);
                let e = t.elu(h);
                let l = t.leaky_relu(e, 0.2);
                let p = t.softplus(l);
                Ok(t.sum(p))
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("u", Tensor::vector(rand_vec(3)));
        params.insert("v", Tensor::vector(rand_vec(4)));
        cases.push((
            "outer_sum",
            params,
            Box::new(|t, b| {
                let m = t.outer_sum(b.id("u"), b.id("v"))?;
                // No row or column of these weights sums to zero, so every
                // analytic gradient entry stays well away from cancellation.
                let w = t.leaf(
                    Tensor::matrix(
                        3,
                        4,
                        vec![
                            0.3, -1.0, 0.5, 0.25, 0.8, 0.1, -0.4, 0.7, -0.2, 0.6, 0.9, -0.5,
                        ],
                    )
                    .unwrap(),
                );
                let p = t.mul(m, w)?;
                Ok(t.sum(p))
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("x", Tensor::matrix(2, 3, rand_vec(6)).unwrap());
        cases.push((
            "renorm_rows",
            params,
            Box::new(|t, b| {
                // Softplus+0.1 keeps every entry strictly positive.
                let pos = t.softplus(b.id("x"));
                let tenth = t.leaf(Tensor::filled(&[2, 3], 0.1));
                let shifted = t.add(pos, tenth)?;
                let n = t.renorm_rows(shifted)?;
                let w = t.leaf(Tensor::matrix(2, 3, vec![1.0, -1.0, 0.5, 0.2, 2.0, -0.3]).unwrap());
                let p = t.mul(n, w)?;
                Ok(t.sum(p))
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("a", Tensor::vector(rand_vec(4)));
        params.insert("b", Tensor::vector(rand_vec(4)));
        params.insert("c", Tensor::vector(rand_vec(4)));
        cases.push((
            "stacks_and_shapes",
            params,
            Box::new(|t, b| {
                let mx = t.max_stack(&[b.id("a"), b.id("b"), b.id("c")])?;
                let ls = t.lse_stack(&[b.id("a"), b.id("b"), b.id("c")])?;
                let cat = t.concat(&[mx, ls])?;
                let sl = t.slice(cat, 2, 4)?;
                let gt = t.gather(sl, &[0, 3, 3])?;
                Ok(t.sum(gt))
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("table", Tensor::matrix(4, 3, rand_vec(12)).unwrap());
        cases.push((
            "embed_row",
            params,
            Box::new(|t, b| {
                let r0 = t.embed_row(b.id("table"), 0)?;
                let r2 = t.embed_row(b.id("table"), 2)?;
                let s = t.add(r0, r2)?;
                Ok(t.sum(s))
            }),
        ));

        let mut params = ParamSet::new();
        params.insert("x", Tensor::matrix(2, 3, rand_vec(6)).unwrap());
        cases.push((
            "softmax_masked_rows",
            params,
            Box::new(|t, b| {
                let mask = [true, true, false, false, true, true];
                let s = t.softmax_masked_rows(b.id("x"), &mask)?;
                let w = t.leaf(Tensor::matrix(2, 3, vec![0.3, -1.0, 0.0, 0.0, 0.8, -0.4]).unwrap());
                let p = t.mul(s, w)?;
                Ok(t.sum(p))
            }),
        ));

        for (name, params, build) in cases {
            let report = grad_check(&params, 1e-5, build.as_ref()).unwrap();
            assert!(
                report.max_rel_err < 1e-4,
                "{name}: max relative error {} at {:?}",
                report.max_rel_err,
                report.worst_param
            );
        }
    }
}
