use crate::error::{invalid, shape_err, Result};
use crate::tensor::{numel, Tensor};

/// Binary elementwise operator. Shapes must match exactly, except that a
/// one-element operand is broadcast as a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    /// `a ⊙ exp(b)`, the scale half of an affine coupling.
    MulExp,
}

pub fn elementwise(a: &Tensor, b: &Tensor, kind: BinaryKind) -> Result<Tensor> {
    let (na, nb) = (a.numel(), b.numel());
    let shape = if a.shape() == b.shape() || nb == 1 {
        a.shape().to_vec()
    } else if na == 1 {
        b.shape().to_vec()
    } else {
        return Err(shape_err("elementwise", a.shape(), b.shape()));
    };
    let n = numel(&shape);
    let at = |i: usize| if na == 1 { a.data()[0] } else { a.data()[i] };
    let bt = |i: usize| if nb == 1 { b.data()[0] } else { b.data()[i] };
    let out: Vec<f32> = (0..n)
        .map(|i| {
            let (x, y) = (at(i), bt(i));
            match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
                BinaryKind::Div => x / y,
                BinaryKind::MulExp => x * y.exp(),
            }
        })
        .collect();

    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(shape, out, vec![a.clone(), b.clone()], move || {
        Box::new(move |g, needs| {
            let av = |i: usize| if na == 1 { ac.data()[0] } else { ac.data()[i] };
            let bv = |i: usize| if nb == 1 { bc.data()[0] } else { bc.data()[i] };
            let local = |i: usize, wrt_a: bool| -> f32 {
                let (x, y) = (av(i), bv(i));
                match (kind, wrt_a) {
                    (BinaryKind::Add, _) => 1.0,
                    (BinaryKind::Sub, true) => 1.0,
                    (BinaryKind::Sub, false) => -1.0,
                    (BinaryKind::Mul, true) => y,
                    (BinaryKind::Mul, false) => x,
                    (BinaryKind::Div, true) => 1.0 / y,
                    (BinaryKind::Div, false) => -x / (y * y),
                    (BinaryKind::MulExp, true) => y.exp(),
                    (BinaryKind::MulExp, false) => x * y.exp(),
                }
            };
            let reduce = |wrt_a: bool, len: usize| -> Vec<f32> {
                if len == 1 && n != 1 {
                    let s: f64 = (0..n).map(|i| f64::from(g[i] * local(i, wrt_a))).sum();
                    vec![s as f32]
                } else {
                    (0..n).map(|i| g[i] * local(i, wrt_a)).collect()
                }
            };
            vec![
                needs[0].then(|| reduce(true, na)),
                needs[1].then(|| reduce(false, nb)),
            ]
        })
    }))
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise(self, rhs, BinaryKind::Add)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise(self, rhs, BinaryKind::Sub)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise(self, rhs, BinaryKind::Mul)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        elementwise(self, rhs, BinaryKind::Div)
    }

    /// `self ⊙ exp(log_scale)`.
    pub fn mul_exp(&self, log_scale: &Tensor) -> Result<Tensor> {
        elementwise(self, log_scale, BinaryKind::MulExp)
    }

    fn unary(
        &self,
        f: impl Fn(f32) -> f32,
        df: impl Fn(f32, f32) -> f32 + Send + 'static,
    ) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|&x| f(x)).collect();
        let x = self.clone();
        let y = out.clone();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let d = g
                    .iter()
                    .zip(x.data())
                    .zip(&y)
                    .map(|((g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(d)]
            })
        })
    }

    /// Subgradient at 0 is 0.
    pub fn relu(&self) -> Tensor {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(&self) -> Tensor {
        self.unary(f32::exp, |_, y| y)
    }

    pub fn neg(&self) -> Tensor {
        self.unary(|x| -x, |_, _| -1.0)
    }

    pub fn square(&self) -> Tensor {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.unary(move |x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&self, s: f32) -> Tensor {
        self.unary(move |x| x + s, |_, _| 1.0)
    }

    /// Gradient passes only strictly inside `(lo, hi)`.
    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        self.unary(
            move |x| x.clamp(lo, hi),
            move |x, _| if x > lo && x < hi { 1.0 } else { 0.0 },
        )
    }

    /// Sum of all elements as a scalar, accumulated in f64.
    pub fn sum(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().map(|&v| f64::from(v)).sum();
        let n = self.numel();
        Ok(Tensor::from_op(vec![], vec![s as f32], vec![self.clone()], move || {
            Box::new(move |g, _| vec![Some(vec![g[0]; n])])
        }))
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(invalid("mean", "empty tensor"));
        }
        let s: f64 = self.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
        Ok(Tensor::from_op(vec![], vec![s as f32], vec![self.clone()], move || {
            Box::new(move |g, _| vec![Some(vec![g[0] / n as f32; n])])
        }))
    }

    /// Mean squared difference.
    pub fn mse(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(shape_err("mse", self.shape(), rhs.shape()));
        }
        self.sub(rhs)?.square().mean()
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if numel(&shape) != self.numel() {
            return Err(shape_err("reshape", self.shape(), &shape));
        }
        Ok(Tensor::from_op(shape, self.to_vec(), vec![self.clone()], || {
            Box::new(|g, _| vec![Some(g.to_vec())])
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_tensors;
    use crate::rng::Rng;

    fn v(data: &[f32]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn add_vectors() {
        assert_eq!(v(&[1.0, 2.0]).add(&v(&[3.0, 4.0])).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn neutral_coupling() {
        let x = v(&[0.5, -2.0, 3.25]);
        let y = x.mul_exp(&Tensor::zeros(vec![3])).unwrap().add(&Tensor::zeros(vec![3])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn scalar_broadcast() {
        let y = v(&[1.0, 2.0]).mul(&Tensor::scalar(3.0)).unwrap();
        assert_eq!(y.data(), &[3.0, 6.0]);
        let z = Tensor::scalar(1.0).sub(&v(&[1.0, 2.0])).unwrap();
        assert_eq!(z.data(), &[0.0, -1.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(v(&[1.0, 2.0]).add(&v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn div_by_zero_is_surfaced() {
        let y = v(&[1.0]).div(&v(&[0.0])).unwrap();
        assert!(y.ensure_finite("div").is_err());
    }

    #[test]
    fn product_gradient_is_other_factor() {
        let mut rng = Rng::new(4);
        let x = Tensor::param(vec![5], rng.uniform_vec(5, -1.0, 1.0));
        let y = Tensor::new(vec![5], rng.uniform_vec(5, -1.0, 1.0)).unwrap();
        x.mul(&y).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), y.to_vec());
        // and by central differences
        let err = check_tensors(&[x], |p| p[0].mul(&y)?.sum(), 1e-3, 5, &mut rng).unwrap();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn all_binary_kinds_pass_gradcheck() {
        let mut rng = Rng::new(8);
        for kind in [
            BinaryKind::Add,
            BinaryKind::Sub,
            BinaryKind::Mul,
            BinaryKind::Div,
            BinaryKind::MulExp,
        ] {
            let a = Tensor::param(vec![6], rng.uniform_vec(6, 0.5, 1.5));
            let b = Tensor::param(vec![6], rng.uniform_vec(6, 0.5, 1.5));
            let err = check_tensors(
                &[a, b],
                |p| elementwise(&p[0], &p[1], kind)?.sum(),
                1e-2,
                12,
                &mut rng,
            )
            .unwrap();
            assert!(err < 1e-2, "{kind:?}: {err}");
        }
    }

    #[test]
    fn sum_gives_ones_and_square_gives_2x() {
        let x = Tensor::param(vec![3], vec![0.5, -1.0, 2.0]);
        x.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 3]);
        let y = Tensor::param(vec![3], vec![0.5, -1.0, 2.0]);
        y.mul(&y).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(y.grad().unwrap(), vec![1.0, -2.0, 4.0]);
    }

    #[test]
    fn scalar_operand_gets_summed_gradient() {
        let s = Tensor::param(vec![], vec![2.0]);
        let x = v(&[1.0, 2.0, 3.0]);
        x.mul(&s).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(s.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn relu_zero_subgradient() {
        let x = Tensor::param(vec![3], vec![-1.0, 0.0, 2.0]);
        x.relu().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn clamp_blocks_outside() {
        let x = Tensor::param(vec![3], vec![-0.5, 0.5, 1.5]);
        let y = x.clamp(0.0, 1.0);
        assert_eq!(y.data(), &[0.0, 0.5, 1.0]);
        y.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let x = Tensor::param(vec![2], vec![1.0, 2.0]);
        let loss = x.square().sum().unwrap();
        loss.backward().unwrap();
        assert!(loss.backward().is_err());
    }

    #[test]
    fn nan_loss_rejected_before_traversal() {
        let x = Tensor::param(vec![1], vec![0.0]);
        let loss = x.div(&Tensor::scalar(0.0)).unwrap().sum().unwrap();
        assert!(loss.backward().is_err());
        assert!(x.grad().is_none());
    }
}
