//! Central finite-difference verification of tape gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Pointwise, Var};
use crate::loss::total_loss;
use crate::model::ErrNet;
use crate::ops::{ConvGeometry, PoolGeometry};
use crate::params::ParamStore;
use crate::rng::SeededRng;
use crate::tensor::{Shape, Tensor};

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / f64::max(1e-8, libm::fabs(analytic) + libm::fabs(numeric))
}

/// Outcome of comparing analytic and numeric derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn evaluate<F>(f: &F, point: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.constant(point.clone());
    let y = f(&mut g, x)?;
    let v = g.value(y).item()?;
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "grad_check", index: 0 });
    }
    Ok(v)
}

/// Analytic gradient of scalar `f` at `point` via one backward sweep.
pub fn analytic_gradient<F>(f: &F, point: &Tensor) -> Result<Tensor>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let y = f(&mut g, x)?;
    g.backward(y)?;
    let grad = g.grad(x).cloned().unwrap_or_else(|| Tensor::zeros(point.shape()));
    if let Some(i) = grad.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "grad_check", index: i });
    }
    Ok(grad)
}

/// Compares the tape gradient of `f` at `point` with central differences
/// over the given flat `indices`.
pub fn grad_check_at<F>(f: F, point: &Tensor, eps: f64, indices: &[usize]) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    compare_gradients(&f, &f, point, eps, indices)
}

/// Tape gradient of `tape_f` against central differences of `value_f`.
/// With the same function for both this is [`grad_check_at`]; passing a
/// different tape function lets a caller confirm a broken backward is caught.
pub fn compare_gradients<A, F>(tape_f: &A, value_f: &F, point: &Tensor, eps: f64, indices: &[usize]) -> Result<GradCheckReport>
where
    A: Fn(&mut Graph, Var) -> Result<Var>,
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument { op: "grad_check", reason: alloc::format!("eps must be positive, got {eps}") });
    }
    if let Some(i) = point.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "grad_check", index: i });
    }
    let analytic = analytic_gradient(tape_f, point)?;
    let mut report =
        GradCheckReport { max_relative_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, checked: 0 };
    let mut probe = point.clone();
    for &i in indices {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = evaluate(value_f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = evaluate(value_f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = relative_error(a, numeric);
        if report.checked == 0 || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Full central-difference check over every coordinate of `point`; returns
/// the maximum relative error.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let indices: Vec<usize> = (0..point.len()).collect();
    Ok(grad_check_at(f, point, eps, &indices)?.max_relative_error)
}

fn random_tensor(shape: Shape, rng: &mut SeededRng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.uniform(lo, hi))
}

/// Values with magnitude in `[0.05, 1)` and random sign, away from ReLU's kink.
fn off_kink(shape: Shape, rng: &mut SeededRng) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = rng.uniform(0.05, 1.0);
        if rng.coin() { m } else { -m }
    })
}

fn binary(shape: Shape, rng: &mut SeededRng) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| if rng.coin() { 1.0 } else { 0.0 })
}

/// `sum(y * u)` for a fixed random `u`, so every output coordinate matters.
fn project(g: &mut Graph, y: Var, u: &Tensor) -> Result<Var> {
    let u = g.constant(u.clone());
    let m = g.mul(y, u)?;
    Ok(g.sum(m))
}

/// Every differentiable op checked over all coordinates of a small random
/// point. Returns `(op name, max relative error)` in a fixed order.
pub fn op_suite(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::new();

    let x = random_tensor(Shape::new(2, 2, 5, 6), &mut rng, -1.0, 1.0);
    let k = random_tensor(Shape::new(3, 2, 3, 3), &mut rng, -1.0, 1.0);
    let b = random_tensor(Shape::new(1, 3, 1, 1), &mut rng, -1.0, 1.0);
    let geom = ConvGeometry::new(2, 2, 2);
    let up = random_tensor(Shape::new(2, 3, 3, 3), &mut rng, -1.0, 1.0);
    let conv = |g: &mut Graph, x: Var, k: Var, b: Var| -> Result<Var> {
        let y = g.conv2d(x, k, Some(b), geom)?;
        project(g, y, &up)
    };
    out.push((
        "conv2d.input",
        grad_check(
            |g, v| {
                let (kv, bv) = (g.constant(k.clone()), g.constant(b.clone()));
                conv(g, v, kv, bv)
            },
            &x,
            eps,
        )?,
    ));
    out.push((
        "conv2d.kernel",
        grad_check(
            |g, v| {
                let (xv, bv) = (g.constant(x.clone()), g.constant(b.clone()));
                conv(g, xv, v, bv)
            },
            &k,
            eps,
        )?,
    ));
    out.push((
        "conv2d.bias",
        grad_check(
            |g, v| {
                let (xv, kv) = (g.constant(x.clone()), g.constant(k.clone()));
                conv(g, xv, kv, v)
            },
            &b,
            eps,
        )?,
    ));

    let p = random_tensor(Shape::new(1, 2, 3, 5), &mut rng, -1.0, 1.0);
    let up = random_tensor(Shape::new(1, 2, 7, 4), &mut rng, -1.0, 1.0);
    out.push((
        "bilinear_resize",
        grad_check(
            |g, v| {
                let y = g.bilinear_resize(v, 7, 4)?;
                project(g, y, &up)
            },
            &p,
            eps,
        )?,
    ));

    let other = random_tensor(Shape::new(1, 3, 3, 3), &mut rng, -1.0, 1.0);
    let p = random_tensor(Shape::new(1, 2, 3, 3), &mut rng, -1.0, 1.0);
    let up = random_tensor(Shape::new(1, 5, 3, 3), &mut rng, -1.0, 1.0);
    out.push((
        "concat_channels",
        grad_check(
            |g, v| {
                let o = g.constant(other.clone());
                let y = g.concat_channels(&[v, o])?;
                project(g, y, &up)
            },
            &p,
            eps,
        )?,
    ));

    let p = random_tensor(Shape::new(1, 2, 3, 3), &mut rng, -1.0, 1.0);
    let other = random_tensor(p.shape(), &mut rng, -1.0, 1.0);
    for (name, op) in [
        ("add", Pointwise::Add),
        ("sub", Pointwise::Sub),
        ("mul", Pointwise::Mul),
        ("one_minus", Pointwise::OneMinus),
    ] {
        let err = grad_check(
            |g, v| {
                let o = g.constant(other.clone());
                let y = g.elementwise(op, v, if op == Pointwise::OneMinus { None } else { Some(o) })?;
                let sq = g.mul(y, y)?;
                Ok(g.sum(sq))
            },
            &p,
            eps,
        )?;
        out.push((name, err));
    }

    let p = random_tensor(Shape::new(1, 2, 4, 4), &mut rng, -4.0, 4.0);
    let up = random_tensor(p.shape(), &mut rng, -1.0, 1.0);
    out.push((
        "sigmoid",
        grad_check(
            |g, v| {
                let y = g.sigmoid(v);
                project(g, y, &up)
            },
            &p,
            eps,
        )?,
    ));
    let p = off_kink(Shape::new(1, 2, 4, 4), &mut rng);
    out.push((
        "relu",
        grad_check(
            |g, v| {
                let y = g.relu(v);
                project(g, y, &up)
            },
            &p,
            eps,
        )?,
    ));

    let p = random_tensor(Shape::new(1, 2, 7, 6), &mut rng, -1.0, 1.0);
    let pool = PoolGeometry { kernel: 3, stride: 2, padding: 1 };
    let up = random_tensor(pool.output_shape(p.shape())?, &mut rng, -1.0, 1.0);
    out.push((
        "avg_pool",
        grad_check(
            |g, v| {
                let y = g.avg_pool(v, 3, 2, 1)?;
                project(g, y, &up)
            },
            &p,
            eps,
        )?,
    ));

    let p = random_tensor(Shape::new(1, 1, 3, 4), &mut rng, -1.0, 1.0);
    let up = random_tensor(Shape::new(1, 4, 3, 4), &mut rng, -1.0, 1.0);
    out.push((
        "stack_channels",
        grad_check(
            |g, v| {
                let y = g.stack_channels(v, 4)?;
                project(g, y, &up)
            },
            &p,
            eps,
        )?,
    ));

    let p = random_tensor(Shape::new(2, 1, 4, 4), &mut rng, -3.0, 3.0);
    let target = binary(p.shape(), &mut rng);
    let weight = random_tensor(p.shape(), &mut rng, 1.0, 6.0);
    out.push(("weighted_bce", grad_check(|g, v| g.weighted_bce(v, &target, &weight), &p, eps)?));
    out.push(("weighted_iou", grad_check(|g, v| g.weighted_iou(v, &target, &weight), &p, eps)?));

    // One tensor feeding two consumers.
    let p = random_tensor(Shape::new(1, 2, 3, 3), &mut rng, -1.0, 1.0);
    out.push((
        "shared_input",
        grad_check(
            |g, v| {
                let s = g.sigmoid(v);
                let a = g.mul(s, v)?;
                let c = g.add(a, v)?;
                let sq = g.mul(c, c)?;
                Ok(g.sum(sq))
            },
            &p,
            eps,
        )?,
    ));
    Ok(out)
}

/// A check whose backward is deliberately wrong (the tape differentiates a
/// scaled copy of the function). Must fail any sensible threshold.
pub fn corrupted_check(eps: f64) -> Result<f64> {
    let p = Tensor::from_fn(Shape::new(1, 1, 2, 3), |_, _, y, x| 0.3 + 0.2 * (y * 3 + x) as f64);
    let square_sum = |g: &mut Graph, v: Var| -> Result<Var> {
        let sq = g.mul(v, v)?;
        Ok(g.sum(sq))
    };
    let skewed = |g: &mut Graph, v: Var| -> Result<Var> {
        let y = square_sum(g, v)?;
        Ok(g.scale(y, 1.05))
    };
    let indices: Vec<usize> = (0..p.len()).collect();
    Ok(compare_gradients(&skewed, &square_sum, &p, eps, &indices)?.max_relative_error)
}

/// Per-parameter result of [`model_grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub report: GradCheckReport,
    /// Probes dropped because the difference stencil straddled a ReLU kink.
    pub kinks_skipped: usize,
}

fn model_loss(net: &ErrNet, store: &ParamStore, image: &Tensor, mask: &Tensor, edge: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let p = store.bind_frozen(&mut g);
    let x = g.constant(image.clone());
    let trace = net.trace(&mut g, &p, x)?;
    let (loss, _) = total_loss(&mut g, &trace.vars(), mask, edge)?;
    g.value(loss).item()
}

/// Smallest gradient magnitude a random probe may have; below this the
/// central difference is dominated by round-off in the O(1) loss.
const RESOLVABLE_GRAD: f64 = 1e-5;
/// Disagreement between steps `eps` and `eps/2` that marks a kink.
const KINK_TOLERANCE: f64 = 1e-4;
/// Probes tried per tensor before giving up on finding smooth coordinates.
const MAX_PROBES: usize = 16;

/// Checks `d total_loss / d theta` for every parameter tensor of `net`.
///
/// Each tensor is probed at its largest-magnitude gradient coordinate plus
/// `extra` distinct random coordinates with a resolvable gradient. A probe
/// whose central differences at `eps` and `eps / 2` disagree sits on a ReLU
/// kink; it is skipped and counted, and the next candidate is used.
pub fn model_grad_check(
    net: &ErrNet,
    image: &Tensor,
    mask: &Tensor,
    edge: &Tensor,
    eps: f64,
    extra: usize,
    seed: u64,
) -> Result<Vec<ParamCheck>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument { op: "grad_check", reason: alloc::format!("eps must be positive, got {eps}") });
    }
    let mut g = Graph::new();
    let bound = net.params.bind(&mut g);
    let x = g.constant(image.clone());
    let trace = net.trace(&mut g, &bound, x)?;
    let (loss, _) = total_loss(&mut g, &trace.vars(), mask, edge)?;
    g.backward(loss)?;
    let grads = bound.grads(&g);

    let mut rng = SeededRng::new(seed);
    let mut probe = net.params.clone();
    let mut out = Vec::new();
    for id in net.params.ids() {
        let name: String = net.params.name(id).into();
        let grad = grads[id.index()].as_ref().ok_or_else(|| Error::MissingGradient { name: name.clone() })?;
        let mag = |i: usize| libm::fabs(grad.data()[i]);
        let top = (0..grad.len()).fold(0, |best, i| if mag(i) > mag(best) { i } else { best });
        let mut pool: Vec<usize> = (0..grad.len()).filter(|&i| i != top && mag(i) >= RESOLVABLE_GRAD).collect();
        rng.shuffle(&mut pool);
        let candidates = core::iter::once(top).chain(pool).take(MAX_PROBES);

        let mut central = |i: usize, h: f64| -> Result<f64> {
            let orig = probe.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + h;
            let plus = model_loss(net, &probe, image, mask, edge)?;
            probe.get_mut(id).data_mut()[i] = orig - h;
            let minus = model_loss(net, &probe, image, mask, edge)?;
            probe.get_mut(id).data_mut()[i] = orig;
            Ok((plus - minus) / (2.0 * h))
        };
        let mut report =
            GradCheckReport { max_relative_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, checked: 0 };
        let mut kinks_skipped = 0;
        for i in candidates {
            if report.checked > extra {
                break;
            }
            let numeric = central(i, eps)?;
            if relative_error(numeric, central(i, eps / 2.0)?) > KINK_TOLERANCE {
                kinks_skipped += 1;
                continue;
            }
            let a = grad.data()[i];
            let err = relative_error(a, numeric);
            if report.checked == 0 || err > report.max_relative_error {
                report = GradCheckReport { max_relative_error: err, worst_index: i, analytic: a, numeric, checked: report.checked };
            }
            report.checked += 1;
        }
        out.push(ParamCheck { name, report, kinks_skipped });
    }
    Ok(out)
}
