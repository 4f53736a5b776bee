use metatask::autodiff::{elementwise, grad, mse, reduce, softmax_cross_entropy, ElementwiseOp, Graph, ReduceOp, Tensor};
use metatask::Result;

use super::*;

pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub f: Box<TensorFn>,
}

pub fn case(name: &'static str, shapes: &[&[usize]], f: impl Fn(&[Tensor]) -> Result<Tensor> + 'static) -> OpCase {
    OpCase {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        f: Box::new(f),
    }
}

pub fn cases() -> Vec<OpCase> {
    vec![
        case("add", &[&[2, 3], &[2, 3]], |x| x[0].add(&x[1])),
        case("add_bias", &[&[4, 3], &[3]], |x| x[0].add(&x[1])),
        case("add_scalar", &[&[2, 2], &[]], |x| x[1].add(&x[0])),
        case("sub", &[&[3, 2], &[3, 2]], |x| x[0].sub(&x[1])),
        case("sub_bias", &[&[3, 2], &[2]], |x| x[0].sub(&x[1])),
        case("mul", &[&[2, 3], &[2, 3]], |x| x[0].mul(&x[1])),
        case("mul_bias", &[&[2, 3], &[3]], |x| x[0].mul(&x[1])),
        case("neg", &[&[5]], |x| x[0].neg()),
        case("scale", &[&[2, 2]], |x| x[0].scale(-1.7)),
        case("sin", &[&[6]], |x| x[0].sin()),
        case("cos", &[&[6]], |x| x[0].cos()),
        case("tanh", &[&[2, 3]], |x| x[0].tanh()),
        case("relu", &[&[7]], |x| x[0].relu()),
        case("square", &[&[4]], |x| x[0].square()),
        case("matmul", &[&[3, 4], &[4, 2]], |x| x[0].matmul(&x[1])),
        case("transpose", &[&[2, 3]], |x| x[0].transpose()),
        case("reshape", &[&[2, 3]], |x| x[0].reshape(&[3, 2])),
        case("broadcast_leading", &[&[3]], |x| x[0].broadcast_leading(&[2, 3])),
        case("sum_leading", &[&[2, 2, 3]], |x| x[0].sum_leading(&[3])),
        case("sum", &[&[2, 3]], |x| x[0].sum()),
        case("mean", &[&[2, 3]], |x| x[0].mean()),
        case("expand", &[&[]], |x| x[0].expand(&[2, 2])),
        case("sum_last_axis", &[&[2, 4]], |x| x[0].sum_last_axis()),
        case("broadcast_last_axis", &[&[3]], |x| x[0].broadcast_last_axis(4)),
        case("softmax", &[&[2, 4]], |x| x[0].softmax()),
        case("log_sum_exp", &[&[3, 4]], |x| x[0].log_sum_exp()),
        case("mse", &[&[4, 2], &[4, 2]], |x| mse(&x[0], &x[1])),
        case("softmax_cross_entropy", &[&[3, 4]], |x| softmax_cross_entropy(&x[0], &[2, 0, 3])),
        case("elementwise_tanh", &[&[3]], |x| elementwise(ElementwiseOp::Tanh, &x[0], None)),
        case("elementwise_mul", &[&[3], &[3]], |x| elementwise(ElementwiseOp::Mul, &x[0], Some(&x[1]))),
        case("reduce_mean", &[&[3, 2]], |x| reduce(ReduceOp::Mean, &x[0])),
        case("mlp_layer", &[&[4, 3], &[2, 3], &[2]], |x| {
            x[0].matmul(&x[1].transpose()?)?.add(&x[2])?.tanh()
        }),
    ]
}

/// Inputs in `[-2, 2]`, kept away from the rectifier's kink.
pub fn sample_inputs(rng: &mut rand_chacha::ChaCha8Rng, shapes: &[Vec<usize>]) -> Vec<Tensor> {
    shapes
        .iter()
        .map(|s| {
            let t = uniform(rng, s, -2.0, 2.0);
            let v = t.values().iter().map(|&v| if v.abs() < 1e-3 { 0.5 } else { v }).collect();
            tensor(v, s)
        })
        .collect()
}

pub fn all_ops_pass_finite_differences(trials: u64) -> std::result::Result<(), String> {
    for c in cases() {
        for trial in 0..trials {
            let inputs = sample_inputs(&mut rng(trial), &c.shapes);
            check_first_order(&*c.f, &inputs, FD_ABS, FD_REL).map_err(|e| format!("{}: {e}", c.name))?;
        }
    }
    Ok(())
}

pub fn sin_second_derivative_max_error(points: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let x0 = -5.0 + 10.0 * i as f64 / (points - 1) as f64;
        let g = Graph::new();
        let x = g.variable(vec![x0], &[]).unwrap();
        let y = x.sin().unwrap();
        let dy = &grad(&y, std::slice::from_ref(&x), true).unwrap()[0];
        let d2y = &grad(dy, std::slice::from_ref(&x), false).unwrap()[0];
        worst = worst.max((d2y.item().unwrap() + x0.sin()).abs());
    }
    worst
}

