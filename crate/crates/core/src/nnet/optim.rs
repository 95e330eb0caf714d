use super::params::Params;
use super::tensor::Tensor;

/// Stochastic gradient descent with heavy-ball momentum:
/// `v = momentum * v + g; p -= lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut Params) {
        if self.velocity.len() != params.len() {
            self.velocity = (0..params.len())
                .map(|i| {
                    let (r, c) = params.value_at(i).shape();
                    Tensor::zeros(r, c)
                })
                .collect();
        }
        for i in 0..params.len() {
            let g = params.grad_at(i).clone();
            let v = &mut self.velocity[i];
            for (vv, gv) in v.data_mut().iter_mut().zip(g.data()) {
                *vv = self.momentum * *vv + gv;
            }
            let v = v.clone();
            for (p, vv) in params.value_at_mut(i).data_mut().iter_mut().zip(v.data()) {
                *p -= self.lr * vv;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut Params) {
        if self.m.len() != params.len() {
            let zeros = |i: usize| {
                let (r, c) = params.value_at(i).shape();
                Tensor::zeros(r, c)
            };
            self.m = (0..params.len()).map(zeros).collect();
            self.v = (0..params.len()).map(zeros).collect();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = params.grad_at(i).clone();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = params.value_at_mut(i);
            for (((pv, mv), vv), gv) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                *pv -= self.lr * (*mv / c1) / ((*vv / c2).sqrt() + self.eps);
            }
        }
    }
}
